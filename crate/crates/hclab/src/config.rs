//! Run configuration: a flat `section.key = value` text format with `#`
//! comments — trivially parsable from any language and diff-friendly.
//!
//! ```text
//! problem.n = 3
//! problem.alpha = 2.0
//! problem.theta = 0.16
//! grid.tmin = -12
//! grid.tmax = 12
//! grid.n = 2048
//! grid.symmetric = true
//! solver.step = 1.0
//! solver.max_iter = 500
//! solver.tol = 1e-6
//! solver.continuation_steps = 4
//! solver.seed = 42
//! output.directory = ./out
//! ```

use crate::error::Error;
use crate::grid::LogGrid;
use crate::params::ProblemParams;
use crate::solver::SolveOptions;
use crate::Result;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub n_dim: u32,
    pub alpha: f64,
    pub theta: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub grid_n: usize,
    pub symmetric: bool,
    pub solver: SolveOptions,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_dim: 3,
            alpha: 2.0,
            theta: 0.0,
            t_min: -12.0,
            t_max: 12.0,
            grid_n: 2048,
            symmetric: true,
            solver: SolveOptions::default(),
            output_dir: None,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|e| Error::Config(format!("{key}: expected a number, got '{v}' ({e})")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|e| Error::Config(format!("{key}: expected an integer, got '{v}' ({e})")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'section.key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "problem.n" => cfg.n_dim = parse_usize(key, value)? as u32,
                "problem.alpha" => cfg.alpha = parse_f64(key, value)?,
                "problem.theta" => cfg.theta = parse_f64(key, value)?,
                "grid.tmin" => cfg.t_min = parse_f64(key, value)?,
                "grid.tmax" => cfg.t_max = parse_f64(key, value)?,
                "grid.n" => cfg.grid_n = parse_usize(key, value)?,
                "grid.symmetric" => cfg.symmetric = parse_bool(key, value)?,
                "solver.step" => cfg.solver.step = parse_f64(key, value)?,
                "solver.max_iter" => cfg.solver.max_iter = parse_usize(key, value)?,
                "solver.tol" => cfg.solver.tol = parse_f64(key, value)?,
                "solver.gauge" => cfg.solver.gauge = parse_bool(key, value)?,
                "solver.continuation_steps" => {
                    cfg.solver.continuation_steps = parse_usize(key, value)? as u32
                }
                "solver.seed" => cfg.solver.seed = parse_usize(key, value)? as u64,
                "output.directory" => cfg.output_dir = Some(PathBuf::from(value)),
                "output.formats" => {} // csv+json are always written
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Re-validate every referenced invariant (parameters and grid).
    pub fn validate(&self) -> Result<()> {
        let params = ProblemParams::new(self.n_dim, self.alpha, self.theta)?;
        if self.symmetric && self.t_min != -self.t_max {
            return Err(Error::Config(format!(
                "grid.symmetric requires tmin = -tmax, got [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        LogGrid::new(&params, self.t_min, self.t_max, self.grid_n)?;
        if !(self.solver.step > 0.0 && self.solver.tol > 0.0) {
            return Err(Error::Config("solver.step and solver.tol must be positive".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ProblemParams> {
        ProblemParams::new(self.n_dim, self.alpha, self.theta)
    }

    pub fn grid(&self, params: &ProblemParams) -> Result<Arc<LogGrid>> {
        LogGrid::new(params, self.t_min, self.t_max, self.grid_n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = "\
# run config
problem.n = 3
problem.alpha = 2.0
problem.theta = 0.16  # Hardy strength
grid.tmin = -10
grid.tmax = 10
grid.n = 512
grid.symmetric = true
solver.step = 0.5
solver.max_iter = 200
solver.tol = 1e-5
solver.continuation_steps = 2
solver.seed = 7
output.directory = /tmp/run1
";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.n_dim, 3);
        assert_eq!(cfg.grid_n, 512);
        assert_eq!(cfg.solver.max_iter, 200);
        assert_eq!(cfg.solver.seed, 7);
        assert_eq!(cfg.output_dir.as_deref(), Some(Path::new("/tmp/run1")));
    }

    #[test]
    fn rejects_bad_theta_naming_bound() {
        let err = RunConfig::parse("problem.theta = 0.3\n").unwrap_err();
        assert!(err.to_string().contains("(N-2)^2/4"), "{err}");
    }

    #[test]
    fn rejects_unknown_keys_and_garbage() {
        assert!(RunConfig::parse("problem.gamma = 1\n").is_err());
        assert!(RunConfig::parse("problem.alpha 2.0\n").is_err());
        assert!(RunConfig::parse("problem.alpha = abc\n").is_err());
    }

    #[test]
    fn symmetric_flag_checked_against_bounds() {
        let text = "grid.tmin = -8\ngrid.tmax = 10\ngrid.symmetric = true\n";
        assert!(RunConfig::parse(text).is_err());
        let ok = "grid.tmin = -8\ngrid.tmax = 10\ngrid.symmetric = false\n";
        assert!(RunConfig::parse(ok).is_ok());
    }

    #[test]
    fn default_config_is_valid() {
        RunConfig::default().validate().unwrap();
    }
}
