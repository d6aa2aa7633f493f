//! Problem parameters and the analytic constants derived from them.
//!
//! Admissible ranges: N ≥ 3, (N-4)₊ < α < N, 0 ≤ ϑ < (N-2)²/4. ϑ = 0 is
//! admitted on purpose — the explicit ϑ = 0 ground-state profile is the
//! validation oracle for the whole pipeline.

use crate::error::Error;
use crate::special::{gamma, ln_gamma};
use crate::Result;
use serde::Serialize;
use std::f64::consts::PI;

/// Validated problem parameters plus every derived constant used elsewhere.
#[derive(Debug, Clone, Serialize)]
pub struct ProblemParams {
    /// Space dimension N ≥ 3.
    pub n_dim: u32,
    /// Riesz order α ∈ ((N-4)₊, N).
    pub alpha: f64,
    /// Hardy strength ϑ ∈ [0, (N-2)²/4).
    pub theta: f64,
    /// Upper critical exponent p̄ = (N+α)/(N-2); > 2 on the admissible range.
    pub pbar: f64,
    /// Blow-up exponent β = (N-2-√((N-2)²-4ϑ))/2, solving (N-2)β - β² = ϑ.
    pub beta: f64,
    /// Surface measure of S^{N-1}: ω = 2π^{N/2}/Γ(N/2).
    pub omega: f64,
    /// Riesz kernel normalization Γ((N-α)/2) / (Γ(α/2) π^{N/2} 2^α).
    pub c_riesz: f64,
    /// Sharp Hardy–Littlewood–Sobolev constant at the conformal exponent
    /// p = r = 2N/(N+α).
    pub s_hls: f64,
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::Input(format!("{name} must be finite, got {v}")));
    }
    Ok(())
}

fn check_alpha_range(n_dim: u32, alpha: f64) -> Result<()> {
    if alpha <= 0.0 || alpha >= n_dim as f64 {
        return Err(Error::Parameter(format!(
            "alpha = {alpha} violates 0 < alpha < N = {n_dim}"
        )));
    }
    Ok(())
}

/// Sharp HLS constant S(N,α) = π^{(N-α)/2} Γ(α/2)/Γ((N+α)/2) · (Γ(N/2)/Γ(N))^{-α/N}.
pub fn sharp_hls_constant(n_dim: u32, alpha: f64) -> Result<f64> {
    check_finite("alpha", alpha)?;
    check_alpha_range(n_dim, alpha)?;
    let n = n_dim as f64;
    let log = 0.5 * (n - alpha) * PI.ln() + ln_gamma(0.5 * alpha) - ln_gamma(0.5 * (n + alpha))
        - (alpha / n) * (ln_gamma(0.5 * n) - ln_gamma(n));
    Ok(log.exp())
}

/// Riesz normalization c_{N,α} = Γ((N-α)/2) / (Γ(α/2) π^{N/2} 2^α).
pub fn riesz_normalization(n_dim: u32, alpha: f64) -> Result<f64> {
    check_finite("alpha", alpha)?;
    check_alpha_range(n_dim, alpha)?;
    let n = n_dim as f64;
    let log =
        ln_gamma(0.5 * (n - alpha)) - ln_gamma(0.5 * alpha) - 0.5 * n * PI.ln() - alpha * 2f64.ln();
    Ok(log.exp())
}

impl ProblemParams {
    /// Validate (N, α, ϑ) and populate all derived constants.
    pub fn new(n_dim: u32, alpha: f64, theta: f64) -> Result<Self> {
        check_finite("alpha", alpha)?;
        check_finite("theta", theta)?;
        if n_dim < 3 {
            return Err(Error::Parameter(format!(
                "N = {n_dim} violates N >= 3"
            )));
        }
        let n = n_dim as f64;
        let alpha_low = (n - 4.0).max(0.0);
        if alpha <= alpha_low || alpha >= n {
            return Err(Error::Parameter(format!(
                "alpha = {alpha} violates (N-4)+ = {alpha_low} < alpha < N = {n}"
            )));
        }
        let hardy_limit = 0.25 * (n - 2.0) * (n - 2.0);
        if theta < 0.0 || theta >= hardy_limit {
            return Err(Error::Parameter(format!(
                "theta = {theta} violates 0 <= theta < (N-2)^2/4 = {hardy_limit}"
            )));
        }
        if alpha < 0.5 {
            // Kernel quadrature below α = 0.5 is outside the supported range;
            // the Riesz operator will refuse to build.
            log::warn!(
                "alpha = {alpha} < 0.5: kernel quadrature unsupported, expect operator errors"
            );
        }

        let pbar = (n + alpha) / (n - 2.0);
        let beta = 0.5 * ((n - 2.0) - ((n - 2.0) * (n - 2.0) - 4.0 * theta).sqrt());
        let omega = 2.0 * PI.powf(0.5 * n) / gamma(0.5 * n);

        Ok(ProblemParams {
            n_dim,
            alpha,
            theta,
            pbar,
            beta,
            omega,
            c_riesz: riesz_normalization(n_dim, alpha)?,
            s_hls: sharp_hls_constant(n_dim, alpha)?,
        })
    }

    /// (N-2)²/4, the Hardy constant and the supremum of admissible ϑ.
    pub fn hardy_limit(&self) -> f64 {
        let d = self.n_dim as f64 - 2.0;
        0.25 * d * d
    }

    /// Decay exponent at infinity, N-2-β.
    pub fn outer_exponent(&self) -> f64 {
        self.n_dim as f64 - 2.0 - self.beta
    }
}
