//! Uniform grid in t = ln r and radial fields sampled on it.
//!
//! The change of variables turns the radial volume element into
//! dx = ω_{N-1} r^{N-1} dr = ω_{N-1} e^{Nt} dt, so full-space integrals of
//! radial integrands are trapezoid sums with weights ω e^{N t_i} h. Dilation
//! u ↦ u(λ·) with λ = e^{kh} becomes an index shift, and inversion r ↦ 1/r a
//! reflection — the two discrete symmetries the solver and the Kelvin
//! transform rely on.

use crate::error::Error;
use crate::params::ProblemParams;
use crate::Result;
use std::io::{BufRead, Write};
use std::sync::Arc;

/// Uniform log-radial grid with quadrature weights for ∫_{ℝ^N}·dx.
#[derive(Debug)]
pub struct LogGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub n: usize,
    pub h: f64,
    /// t_min = -t_max, constructed so that t[n-1-i] == -t[i] exactly.
    pub symmetric: bool,
    pub n_dim: u32,
    pub omega: f64,
    t: Vec<f64>,
    r: Vec<f64>,
    quad_w: Vec<f64>,
}

impl LogGrid {
    pub fn new(params: &ProblemParams, t_min: f64, t_max: f64, n: usize) -> Result<Arc<Self>> {
        if !(t_min.is_finite() && t_max.is_finite()) {
            return Err(Error::Input("grid bounds must be finite".into()));
        }
        if n < 16 {
            return Err(Error::Parameter(format!("grid size n = {n} violates n >= 16")));
        }
        if t_max <= t_min {
            return Err(Error::Parameter(format!(
                "t_max = {t_max} must exceed t_min = {t_min}"
            )));
        }
        let h = (t_max - t_min) / (n - 1) as f64;
        let symmetric = t_min == -t_max;
        let t: Vec<f64> = if symmetric {
            // centered form keeps t[n-1-i] == -t[i] bit-exact
            let c = 0.5 * (n - 1) as f64;
            (0..n).map(|i| (i as f64 - c) * h).collect()
        } else {
            (0..n).map(|i| t_min + i as f64 * h).collect()
        };
        let r: Vec<f64> = t.iter().map(|&ti| ti.exp()).collect();
        let nf = params.n_dim as f64;
        let quad_w: Vec<f64> = t
            .iter()
            .enumerate()
            .map(|(i, &ti)| {
                let trap = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                params.omega * (nf * ti).exp() * h * trap
            })
            .collect();
        Ok(Arc::new(LogGrid {
            t_min,
            t_max,
            n,
            h,
            symmetric,
            n_dim: params.n_dim,
            omega: params.omega,
            t,
            r,
            quad_w,
        }))
    }

    /// Symmetric grid on [-t_extent, t_extent] (required by Kelvin reflection).
    pub fn symmetric(params: &ProblemParams, t_extent: f64, n: usize) -> Result<Arc<Self>> {
        Self::new(params, -t_extent, t_extent, n)
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }
    pub fn r(&self) -> &[f64] {
        &self.r
    }
    pub fn quad_w(&self) -> &[f64] {
        &self.quad_w
    }

    /// Index of the node nearest t = 0.
    pub fn center_index(&self) -> usize {
        let i = ((0.0 - self.t_min) / self.h).round();
        (i.max(0.0) as usize).min(self.n - 1)
    }

    pub fn same(&self, other: &LogGrid) -> bool {
        self.n == other.n
            && self.t_min == other.t_min
            && self.t_max == other.t_max
            && self.n_dim == other.n_dim
    }
}

/// Radial function sampled on a [`LogGrid`].
#[derive(Debug, Clone)]
pub struct RadialField {
    grid: Arc<LogGrid>,
    values: Vec<f64>,
}

impl RadialField {
    pub fn from_values(grid: Arc<LogGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::grid(format!(
                "field length {} does not match grid size {}",
                values.len(),
                grid.n
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("field contains non-finite entry {bad}")));
        }
        Ok(RadialField { grid, values })
    }

    /// Construct without the finiteness scan; callers guarantee finite values.
    pub(crate) fn from_values_unchecked(grid: Arc<LogGrid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n);
        RadialField { grid, values }
    }

    pub fn from_fn(grid: &Arc<LogGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.r.iter().map(|&r| f(r)).collect();
        RadialField {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn zeros(grid: &Arc<LogGrid>) -> Self {
        RadialField {
            grid: Arc::clone(grid),
            values: vec![0.0; grid.n],
        }
    }

    pub fn grid(&self) -> &Arc<LogGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        RadialField {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    fn ensure_finite(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("field contains non-finite values"));
        }
        Ok(())
    }

    /// ∫_{ℝ^N} u(|x|) dx ≈ Σ w_i u_i.
    pub fn integrate(&self) -> Result<f64> {
        self.ensure_finite()?;
        Ok(self
            .values
            .iter()
            .zip(self.grid.quad_w.iter())
            .map(|(&v, &w)| v * w)
            .sum())
    }

    /// du/dr = e^{-t} du/dt, with du/dt by 4th-order differences.
    pub fn radial_derivative(&self) -> RadialField {
        let dt = dt1(&self.values, self.grid.h);
        let values = dt
            .iter()
            .zip(self.grid.t.iter())
            .map(|(&d, &t)| d * (-t).exp())
            .collect();
        RadialField {
            grid: Arc::clone(&self.grid),
            values,
        }
    }

    /// Translate values by k indices (dilation u(λx), λ = e^{kh}); vacated
    /// entries are filled by power-law extrapolation of the boundary value.
    pub fn shift(&self, k: i64) -> Result<RadialField> {
        let n = self.grid.n as i64;
        if k.unsigned_abs() as i64 >= n / 4 {
            return Err(Error::Range(format!(
                "shift |k| = {} violates |k| < n/4 = {}",
                k.abs(),
                n / 4
            )));
        }
        if k == 0 {
            return Ok(self.clone());
        }
        let vals = &self.values;
        let mut out = vec![0.0; self.grid.n];
        // boundary power law: per-index slope of ln|u| over the last FIT_LEN nodes
        let (b_idx, slope) = if k > 0 {
            (self.grid.n - 1, boundary_slope(vals, true))
        } else {
            (0, boundary_slope(vals, false))
        };
        let b_val = vals[b_idx];
        for i in 0..n {
            let j = i + k;
            out[i as usize] = if (0..n).contains(&j) {
                vals[j as usize]
            } else {
                // continue the fitted tail: u(t_b + m·h) ≈ u_b e^{slope·m}
                let overshoot = (j - b_idx as i64) as f64;
                b_val * (slope * overshoot).exp()
            };
        }
        Ok(RadialField {
            grid: Arc::clone(&self.grid),
            values: out,
        })
    }

    /// r ↦ 1/r as index reversal; requires a symmetric grid.
    pub fn reflect(&self) -> Result<RadialField> {
        if !self.grid.symmetric {
            return Err(Error::Config(
                "reflect requires a symmetric grid (t_min = -t_max)".into(),
            ));
        }
        let mut values = self.values.clone();
        values.reverse();
        Ok(RadialField {
            grid: Arc::clone(&self.grid),
            values,
        })
    }

    /// Two-column CSV `r,value`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "r,value")?;
        for (r, v) in self.grid.r.iter().zip(self.values.iter()) {
            writeln!(w, "{r:.16e},{v:.16e}")?;
        }
        Ok(())
    }

    /// Read a `r,value` CSV produced by [`write_csv`] back onto `grid`.
    pub fn read_csv<R: BufRead>(grid: &Arc<LogGrid>, reader: R) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.n);
        let mut idx = 0usize;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("r,")) {
                continue;
            }
            let mut parts = line.splitn(2, ',');
            let (rs, vs) = (
                parts.next().ok_or_else(|| Error::Input(format!("line {lineno}: missing r")))?,
                parts.next().ok_or_else(|| Error::Input(format!("line {lineno}: missing value")))?,
            );
            let r: f64 = rs
                .trim()
                .parse()
                .map_err(|e| Error::Input(format!("line {lineno}: bad r: {e}")))?;
            let v: f64 = vs
                .trim()
                .parse()
                .map_err(|e| Error::Input(format!("line {lineno}: bad value: {e}")))?;
            if idx >= grid.n {
                return Err(Error::grid("CSV has more rows than grid nodes"));
            }
            let rg = grid.r[idx];
            if (r - rg).abs() > 1e-12 * rg.max(1.0) {
                return Err(Error::grid(format!(
                    "CSV radius {r} at row {idx} does not match grid radius {rg}"
                )));
            }
            values.push(v);
            idx += 1;
        }
        RadialField::from_values(Arc::clone(grid), values)
    }
}

const FIT_LEN: usize = 8;

/// Least-squares slope of ln|u| against node index·h near one boundary.
/// Non-positive data falls back to constant extrapolation (slope 0).
fn boundary_slope(vals: &[f64], right: bool) -> f64 {
    let n = vals.len();
    let m = FIT_LEN.min(n);
    let window: Vec<f64> = if right {
        vals[n - m..].to_vec()
    } else {
        vals[..m].to_vec()
    };
    if window.iter().any(|&v| v <= 0.0) {
        return 0.0;
    }
    let logs: Vec<f64> = window.iter().map(|&v| v.ln()).collect();
    let mf = m as f64;
    let xbar = 0.5 * (mf - 1.0);
    let ybar = logs.iter().sum::<f64>() / mf;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &y) in logs.iter().enumerate() {
        let dx = i as f64 - xbar;
        num += dx * (y - ybar);
        den += dx * dx;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

// ---- finite-difference stencils in t (4th order) --------------------------

/// First derivative, 4th order, one-sided rows at the ends.
pub(crate) fn dt1(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 16);
    let mut out = vec![0.0; n];
    let c = 1.0 / (12.0 * h);
    out[0] = c * (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]);
    out[1] = c * (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]);
    for i in 2..n - 2 {
        out[i] = c * (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]);
    }
    out[n - 2] = -c * (-3.0 * f[n - 1] - 10.0 * f[n - 2] + 18.0 * f[n - 3] - 6.0 * f[n - 4]
        + f[n - 5]);
    out[n - 1] = -c
        * (-25.0 * f[n - 1] + 48.0 * f[n - 2] - 36.0 * f[n - 3] + 16.0 * f[n - 4]
            - 3.0 * f[n - 5]);
    out
}

/// Second derivative, 4th order, one-sided rows at the ends.
pub(crate) fn dt2(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 16);
    let mut out = vec![0.0; n];
    let c = 1.0 / (h * h);
    let c12 = c / 12.0;
    out[0] = c
        * (15.0 / 4.0 * f[0] - 77.0 / 6.0 * f[1] + 107.0 / 6.0 * f[2] - 13.0 * f[3]
            + 61.0 / 12.0 * f[4]
            - 5.0 / 6.0 * f[5]);
    out[1] = c
        * (5.0 / 6.0 * f[0] - 5.0 / 4.0 * f[1] - 1.0 / 3.0 * f[2] + 7.0 / 6.0 * f[3]
            - 0.5 * f[4]
            + 1.0 / 12.0 * f[5]);
    for i in 2..n - 2 {
        out[i] =
            c12 * (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2]);
    }
    out[n - 2] = c
        * (5.0 / 6.0 * f[n - 1] - 5.0 / 4.0 * f[n - 2] - 1.0 / 3.0 * f[n - 3]
            + 7.0 / 6.0 * f[n - 4]
            - 0.5 * f[n - 5]
            + 1.0 / 12.0 * f[n - 6]);
    out[n - 1] = c
        * (15.0 / 4.0 * f[n - 1] - 77.0 / 6.0 * f[n - 2] + 107.0 / 6.0 * f[n - 3]
            - 13.0 * f[n - 4]
            + 61.0 / 12.0 * f[n - 5]
            - 5.0 / 6.0 * f[n - 6]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ProblemParams {
        ProblemParams::new(3, 2.0, 0.0).unwrap()
    }

    fn grid_n(n: usize) -> Arc<LogGrid> {
        LogGrid::new(&params(), -12.0, 6.0, n).unwrap()
    }

    // independent 1D oracle: adaptive Simpson on ∫ f dr
    fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        fn s<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn rec<F: Fn(f64) -> f64>(
            f: &F,
            a: f64,
            b: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let l = s(f, a, m);
            let r = s(f, m, b);
            if depth == 0 || (l + r - whole).abs() <= 15.0 * tol {
                l + r + (l + r - whole) / 15.0
            } else {
                rec(f, a, m, l, 0.5 * tol, depth - 1) + rec(f, m, b, r, 0.5 * tol, depth - 1)
            }
        }
        rec(&f, a, b, s(&f, a, b), tol, depth)
    }

    #[test]
    fn integrate_zero_field() {
        let g = grid_n(2048);
        assert_eq!(RadialField::zeros(&g).integrate().unwrap(), 0.0);
    }

    // panelled oracle: adaptive Simpson per subinterval so sharply localized
    // integrands on wide ranges cannot fool the top-level error estimate
    fn simpson_panels<F: Fn(f64) -> f64 + Copy>(f: F, edges: &[f64], tol: f64) -> f64 {
        edges
            .windows(2)
            .map(|e| simpson(f, e[0], e[1], tol, 40))
            .sum()
    }

    #[test]
    fn integrate_gaussian_matches_adaptive_oracle() {
        // ∫ e^{-|x|²} dx over ℝ³ = π^{3/2}; oracle by adaptive Simpson in r
        let g = grid_n(2048);
        let u = RadialField::from_fn(&g, |r| (-r * r).exp());
        let got = u.integrate().unwrap();
        let oracle = 4.0
            * std::f64::consts::PI
            * simpson_panels(
                |r| r * r * (-r * r).exp(),
                &[1e-9, 0.5, 1.0, 2.0, 4.0, 8.0, 40.0],
                1e-14,
            );
        let exact = std::f64::consts::PI.powf(1.5);
        assert!(((oracle - exact) / exact).abs() < 1e-9, "oracle sanity: {oracle}");
        assert!(
            ((got - exact) / exact).abs() < 1e-8,
            "got {got}, exact {exact}"
        );
    }

    #[test]
    fn integrate_smoothed_ball_volume() {
        // smoothed indicator of the unit ball; logistic transition of width
        // 0.008 in t keeps both the smoothing bias and the quadrature error
        // under the 1e-3 target against the analytic ball volume 4π/3
        let g = grid_n(2048);
        let delta = 0.008;
        let u = RadialField::from_fn(&g, |r| 1.0 / (1.0 + (r.ln() / delta).exp()));
        let got = u.integrate().unwrap();
        let exact = 4.0 * std::f64::consts::PI / 3.0;
        assert!(((got - exact) / exact).abs() < 1e-3, "got {got}");
    }

    #[test]
    fn integrate_rejects_non_finite() {
        let g = grid_n(64);
        let mut u = RadialField::zeros(&g);
        u.values_mut()[3] = f64::NAN;
        assert!(u.integrate().is_err());
    }

    #[test]
    fn radial_derivative_of_r_squared() {
        let g = grid_n(2048);
        let u = RadialField::from_fn(&g, |r| r * r);
        let d = u.radial_derivative();
        for i in 100..g.n - 100 {
            let exact = 2.0 * g.r()[i];
            let rel = (d.values()[i] - exact).abs() / exact;
            assert!(rel < 1e-6, "i={i} rel={rel}");
        }
    }

    #[test]
    fn radial_derivative_of_constant_vanishes() {
        let g = grid_n(512);
        let u = RadialField::from_fn(&g, |_| 3.5);
        for (i, &v) in u.radial_derivative().values().iter().enumerate() {
            assert!(v.abs() < 1e-10, "i={i}: {v}");
        }
    }

    #[test]
    fn radial_derivative_of_bubble_profile() {
        // interior = where the profile actually varies; in the flat region
        // r ≪ 1 the t-differences of u ≈ 1 are cancellation-limited and no
        // finite-difference scheme reaches 1e-6 relative in f64
        let g = grid_n(2048);
        let u = RadialField::from_fn(&g, |r| 1.0 / (1.0 + r * r).sqrt());
        let d = u.radial_derivative();
        for i in 0..g.n {
            let r = g.r()[i];
            if !(0.01..=100.0).contains(&r) {
                continue;
            }
            let exact = -r * (1.0 + r * r).powf(-1.5);
            let rel = (d.values()[i] - exact).abs() / exact.abs().max(1e-300);
            assert!(rel < 1e-6, "i={i} r={r} rel={rel}");
        }
    }

    #[test]
    fn shift_identity_and_inverse() {
        let g = grid_n(512);
        let u = RadialField::from_fn(&g, |r| (-(r.ln()).powi(2)).exp());
        let same = u.shift(0).unwrap();
        assert_eq!(same.values(), u.values());

        let back = u.shift(3).unwrap().shift(-3).unwrap();
        // agree on indices untouched by the boundary fill
        for i in 3..g.n - 3 {
            assert!(
                (back.values()[i] - u.values()[i]).abs() <= 1e-12 * u.values()[i].abs().max(1e-30),
                "i={i}"
            );
        }
    }

    #[test]
    fn shift_range_checked() {
        let g = grid_n(64);
        let u = RadialField::zeros(&g);
        assert!(u.shift(16).is_err());
        assert!(u.shift(-20).is_err());
        assert!(u.shift(15).is_ok());
    }

    #[test]
    fn shift_fill_follows_power_law() {
        // pure power r^{-2}: extrapolated entries continue the power law
        let g = grid_n(512);
        let u = RadialField::from_fn(&g, |r| r.powi(-2));
        let s = u.shift(4).unwrap();
        for i in g.n - 4..g.n {
            let expect = (g.t()[i] + 4.0 * g.h).exp().powi(-2);
            let rel = (s.values()[i] - expect).abs() / expect;
            assert!(rel < 1e-9, "i={i} rel={rel}");
        }
    }

    #[test]
    fn reflect_involution_and_symmetric_fixed_point() {
        let p = params();
        let g = LogGrid::symmetric(&p, 12.0, 2048).unwrap();
        let u = RadialField::from_fn(&g, |r| 1.0 / r.ln().cosh());
        let twice = u.reflect().unwrap().reflect().unwrap();
        assert_eq!(twice.values(), u.values());
        // sech t is even in t: reflection is a fixed point
        let refl = u.reflect().unwrap();
        for i in 0..g.n {
            assert!(
                (refl.values()[i] - u.values()[i]).abs() <= 1e-15 * u.values()[i].abs(),
                "i={i}"
            );
        }
    }

    #[test]
    fn reflect_of_power_profile_is_inverse_power() {
        let p = params();
        let g = LogGrid::symmetric(&p, 8.0, 1024).unwrap();
        let a = 1.3;
        let u = RadialField::from_fn(&g, |r| r.powf(-a));
        let refl = u.reflect().unwrap();
        for i in 0..g.n {
            let expect = g.r()[i].powf(a);
            let rel = (refl.values()[i] - expect).abs() / expect;
            assert!(rel < 1e-13, "i={i} rel={rel}");
        }
    }

    #[test]
    fn reflect_requires_symmetric_grid() {
        let g = grid_n(64);
        assert!(RadialField::zeros(&g).reflect().is_err());
    }

    #[test]
    fn quadrature_converges_at_least_second_order() {
        // halving h on r^k-weighted bump: error floor must drop ≥ 4x
        let exact = {
            let g = grid_n(8192);
            RadialField::from_fn(&g, |r| r * (-(r.ln()).powi(2)).exp())
                .integrate()
                .unwrap()
        };
        let err_at = |n: usize| {
            let g = grid_n(n);
            let v = RadialField::from_fn(&g, |r| r * (-(r.ln()).powi(2)).exp())
                .integrate()
                .unwrap();
            (v - exact).abs()
        };
        let e1 = err_at(256);
        let e2 = err_at(512);
        assert!(
            e2 <= e1 / 4.0 || e2 < 1e-13 * exact.abs(),
            "e(256)={e1}, e(512)={e2}"
        );
    }

    #[test]
    fn csv_round_trip() {
        let g = grid_n(64);
        let u = RadialField::from_fn(&g, |r| (1.0 + r).recip());
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let back = RadialField::read_csv(&g, std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.values(), u.values());
    }

    #[test]
    fn stencils_exact_on_low_degree_polynomials() {
        // dt1/dt2 are 4th order: exact on t-polynomials up to degree 4 (first)
        // and the one-sided rows up to degree 5 (second); machine-level check
        let n = 32;
        let h = 0.37;
        let t: Vec<f64> = (0..n).map(|i| -1.7 + i as f64 * h).collect();
        let f: Vec<f64> = t.iter().map(|&x| 1.0 + x + x.powi(2) + x.powi(3) + x.powi(4)).collect();
        let d1 = dt1(&f, h);
        let d2 = dt2(&f, h);
        for i in 0..n {
            let x = t[i];
            let e1 = 1.0 + 2.0 * x + 3.0 * x * x + 4.0 * x.powi(3);
            let e2 = 2.0 + 6.0 * x + 12.0 * x * x;
            assert!((d1[i] - e1).abs() < 1e-9 * e1.abs().max(1.0), "d1 i={i}");
            assert!((d2[i] - e2).abs() < 1e-8 * e2.abs().max(1.0), "d2 i={i}");
        }
    }
}
