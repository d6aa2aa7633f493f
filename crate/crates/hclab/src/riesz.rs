//! The radial Riesz potential f ↦ I_α ∗ f on the log grid.
//!
//! Sphere-averaging the kernel c_{N,α}|x-y|^{α-N} over directions reduces the
//! convolution to a one-dimensional integral against the homogeneous kernel
//! K(r,s) = r^{α-N} A(s/r), where
//!
//! ```text
//!   A(ρ) = c_{N,α} · ⟨(1 + ρ² - 2ρcosφ)^{(α-N)/2}⟩_{sin^{N-2}φ dφ}
//! ```
//!
//! is c_{N,α} times the normalized spherical mean (A(ρ) → c_{N,α} as ρ → 0,
//! and A(1/ρ) = ρ^{N-α} A(ρ)). On the uniform t = ln r grid the quadrature
//! sum is a discrete correlation with the tabulated profile a_m = A(e^{mh}),
//!
//! ```text
//!   (I_α ∗ f)(r_i) ≈ ω h e^{(α-N) t_i} Σ_j a_{j-i} f_j e^{N t_j},
//! ```
//!
//! evaluated either directly (dense path, O(n²), the test oracle) or by FFT
//! in O(n log n). Both paths share the same tabulated kernel, and the tables
//! enforce the reciprocity law exactly, which makes the discrete operator
//! self-adjoint with respect to the dx inner product up to rounding.
//!
//! Angular integrals are done with fixed-level tanh-sinh quadrature; the
//! diagonal ratio ρ = 1 uses the Beta-function closed form for α > 1 and a
//! cell average over [t-h/2, t+h/2] for α ∈ (0.5, 1] (reduced-accuracy mode,
//! the pointwise profile diverges there).

use crate::error::Error;
use crate::grid::{LogGrid, RadialField};
use crate::params::ProblemParams;
use crate::parallel::{map_indexed, map_indexed_seq};
use crate::quadrature::tanh_sinh;
use crate::special::ln_gamma;
use crate::Result;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

const QUAD_LEVEL: u32 = 6;
/// Dense path is the default below this size; FFT above.
const FFT_THRESHOLD: usize = 256;

/// Normalized spherical mean of (1 + ρ² - 2ρ cosφ)^{(α-N)/2}, ρ ≤ 1.
/// `q` must be 1 - ρ evaluated without cancellation.
fn angular_mean_raw(n_dim: u32, alpha: f64, rho: f64, q: f64) -> f64 {
    let nf = n_dim as f64;
    let expo = 0.5 * (alpha - nf);
    let pow_sin = nf - 2.0;
    let q2 = q * q;
    let integral = tanh_sinh(
        |da, db| {
            // φ = da measured from 0, π - φ = db; evaluate half-angle terms
            // from whichever side is small
            let (s_half, sin_phi) = if da <= db {
                ((0.5 * da).sin(), da.sin())
            } else {
                ((0.5 * db).cos(), db.sin())
            };
            let base = q2 + 4.0 * rho * s_half * s_half;
            base.powf(expo) * sin_phi.powf(pow_sin)
        },
        0.0,
        PI,
        QUAD_LEVEL,
    );
    integral / sin_norm(n_dim)
}

/// ∫_0^π sin^{N-2}φ dφ = √π Γ((N-1)/2) / Γ(N/2).
fn sin_norm(n_dim: u32) -> f64 {
    let nf = n_dim as f64;
    (0.5 * PI.ln() + ln_gamma(0.5 * (nf - 1.0)) - ln_gamma(0.5 * nf)).exp()
}

/// Closed form of the spherical mean at ρ = 1 (finite only for α > 1):
/// 2^{α-2} Γ((α-1)/2) Γ(N/2) / (√π Γ((N+α-2)/2)).
fn angular_mean_diagonal(n_dim: u32, alpha: f64) -> f64 {
    let nf = n_dim as f64;
    ((alpha - 2.0) * 2f64.ln() + ln_gamma(0.5 * (alpha - 1.0)) + ln_gamma(0.5 * nf)
        - 0.5 * PI.ln()
        - ln_gamma(0.5 * (nf + alpha - 2.0)))
    .exp()
}

/// Angular profile A(ρ) of the reduced kernel, K(r,s) = r^{α-N} A(s/r).
pub fn angular_profile(params: &ProblemParams, rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Parameter(format!("rho = {rho} violates rho > 0")));
    }
    if params.alpha < 0.5 {
        return Err(Error::Parameter(format!(
            "alpha = {} violates the kernel-quadrature restriction alpha >= 0.5",
            params.alpha
        )));
    }
    if rho == 1.0 {
        if params.alpha <= 1.0 {
            return Err(Error::Parameter(format!(
                "angular profile diverges at rho = 1 for alpha = {} <= 1; \
                 the operator uses a cell-averaged diagonal instead",
                params.alpha
            )));
        }
        return Ok(params.c_riesz * angular_mean_diagonal(params.n_dim, params.alpha));
    }
    if rho > 1.0 {
        // reciprocity A(ρ) = ρ^{α-N} A(1/ρ)
        let inv = 1.0 / rho;
        return Ok(rho.powf(params.alpha - params.n_dim as f64)
            * angular_profile(params, inv)?);
    }
    Ok(params.c_riesz * angular_mean_raw(params.n_dim, params.alpha, rho, 1.0 - rho))
}

/// Radial Riesz potential operator bound to one (params, grid) pair.
pub struct RieszOperator {
    params: ProblemParams,
    grid: Arc<LogGrid>,
    /// a_m = A(e^{mh}) for m ∈ [-(n-1), n-1], indexed by m + (n-1).
    profile: Vec<f64>,
    /// e^{(α-N) t_i}; the ω h e^{N t_j} part lives in the grid quad weights.
    prefactor: Vec<f64>,
    fft_len: usize,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
    /// FFT of the flipped kernel sequence, fixed at construction.
    kernel_fft: Vec<Complex64>,
    reduced_accuracy: bool,
}

impl RieszOperator {
    pub fn new(params: &ProblemParams, grid: &Arc<LogGrid>) -> Result<Self> {
        Self::build(params, grid, false)
    }

    /// Sequential construction path (identical output; benchmark reference).
    pub fn new_serial(params: &ProblemParams, grid: &Arc<LogGrid>) -> Result<Self> {
        Self::build(params, grid, true)
    }

    fn build(params: &ProblemParams, grid: &Arc<LogGrid>, serial: bool) -> Result<Self> {
        if params.alpha < 0.5 {
            return Err(Error::Parameter(format!(
                "alpha = {} violates the kernel-quadrature restriction alpha >= 0.5",
                params.alpha
            )));
        }
        if params.n_dim != grid.n_dim {
            return Err(Error::grid("params and grid disagree on the dimension"));
        }
        let reduced_accuracy = params.alpha <= 1.0;
        if reduced_accuracy {
            log::warn!(
                "alpha = {} <= 1: diagonal kernel cell-averaged, reduced-accuracy mode",
                params.alpha
            );
        }

        let n = grid.n;
        let h = grid.h;
        let nf = params.n_dim as f64;
        let c = params.c_riesz;

        // tabulate on the ρ ≤ 1 side, m = 1..n-1
        let n_dim = params.n_dim;
        let alpha = params.alpha;
        let side = |m: usize| -> f64 {
            let q = -(-(m as f64) * h).exp_m1(); // 1 - e^{-mh}
            c * angular_mean_raw(n_dim, alpha, (-(m as f64) * h).exp(), q)
        };
        let below: Vec<f64> = if serial {
            map_indexed_seq(n - 1, |i| side(i + 1))
        } else {
            map_indexed(n - 1, |i| side(i + 1))
        };

        let diagonal = if alpha > 1.0 {
            c * angular_mean_diagonal(n_dim, alpha)
        } else {
            // cell average (1/h)∫_{-h/2}^{h/2} A(e^w) dw; fold both half-cells
            // into one integral over δ ∈ (0, h/2) with the reciprocity factor
            let inner = tanh_sinh(
                |da, _| {
                    let delta = da.max(1e-30);
                    let q = -(-delta).exp_m1();
                    let a_below = c * angular_mean_raw(n_dim, alpha, (-delta).exp(), q);
                    a_below * (1.0 + (delta * (alpha - nf)).exp())
                },
                0.0,
                0.5 * h,
                QUAD_LEVEL,
            );
            inner / h
        };

        let mut profile = vec![0.0; 2 * n - 1];
        profile[n - 1] = diagonal;
        for m in 1..n {
            let a_below = below[m - 1];
            profile[n - 1 - m] = a_below;
            // A(e^{mh}) = e^{mh(α-N)} A(e^{-mh}), exact reciprocity
            profile[n - 1 + m] = (m as f64 * h * (alpha - nf)).exp() * a_below;
        }

        let prefactor: Vec<f64> = grid.t().iter().map(|&t| ((alpha - nf) * t).exp()).collect();

        // FFT machinery for the linear correlation c_i = Σ_j a_{j-i} F_j:
        // convolution with the flipped kernel b_m = a_{-m} on a circle of
        // length L ≥ 2n-1
        let fft_len = (2 * n).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(fft_len);
        let fft_inv = planner.plan_fft_inverse(fft_len);
        let mut kernel = vec![Complex64::default(); fft_len];
        for m in -(n as i64 - 1)..=(n as i64 - 1) {
            let b = profile[(n as i64 - 1 - m) as usize]; // a_{-m}
            let slot = m.rem_euclid(fft_len as i64) as usize;
            kernel[slot] = Complex64::new(b, 0.0);
        }
        fft_fwd.process(&mut kernel);

        Ok(RieszOperator {
            params: params.clone(),
            grid: Arc::clone(grid),
            profile,
            prefactor,
            fft_len,
            fft_fwd,
            fft_inv,
            kernel_fft: kernel,
            reduced_accuracy,
        })
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }
    pub fn grid(&self) -> &Arc<LogGrid> {
        &self.grid
    }
    pub fn reduced_accuracy(&self) -> bool {
        self.reduced_accuracy
    }

    /// Tabulated profile a_m = A(e^{mh}), m ∈ [-(n-1), n-1].
    pub fn profile_at(&self, m: i64) -> f64 {
        self.profile[(self.grid.n as i64 - 1 + m) as usize]
    }

    fn check_field(&self, f: &RadialField) -> Result<()> {
        if !self.grid.same(f.grid()) {
            return Err(Error::grid("field lives on a different grid"));
        }
        Ok(())
    }

    /// f against the full dx quadrature weights (ω e^{Nt} h with trapezoid
    /// end factors); using the same measure for the inner sum as for outer
    /// integrals keeps the discrete operator exactly dx-self-adjoint.
    fn weighted_values(&self, f: &RadialField) -> Vec<f64> {
        f.values()
            .iter()
            .zip(self.grid.quad_w().iter())
            .map(|(&v, &w)| v * w)
            .collect()
    }

    fn dense_rows(&self, fw: &[f64], serial: bool) -> Vec<f64> {
        let n = self.grid.n;
        let profile = &self.profile;
        let pref = &self.prefactor;
        let row = |i: usize| -> f64 {
            let base = n - 1 - i; // profile index of a_{j-i} at j = 0
            let mut acc = 0.0;
            for (j, &fj) in fw.iter().enumerate() {
                acc += profile[base + j] * fj;
            }
            pref[i] * acc
        };
        if serial {
            map_indexed_seq(n, row)
        } else {
            map_indexed(n, row)
        }
    }

    /// Dense O(n²) apply: the oracle path. Parallel over output rows with a
    /// fixed per-row summation order, so the result is identical to
    /// [`apply_dense_serial`] bit for bit.
    pub fn apply_dense(&self, f: &RadialField) -> Result<RadialField> {
        self.check_field(f)?;
        let fw = self.weighted_values(f);
        Ok(RadialField::from_values_unchecked(
            Arc::clone(&self.grid),
            self.dense_rows(&fw, false),
        ))
    }

    /// Single-threaded dense apply (reference for thread-independence).
    pub fn apply_dense_serial(&self, f: &RadialField) -> Result<RadialField> {
        self.check_field(f)?;
        let fw = self.weighted_values(f);
        Ok(RadialField::from_values_unchecked(
            Arc::clone(&self.grid),
            self.dense_rows(&fw, true),
        ))
    }

    /// O(n log n) apply via the log-coordinate correlation.
    pub fn apply_fft(&self, f: &RadialField) -> Result<RadialField> {
        self.check_field(f)?;
        let n = self.grid.n;
        let fw = self.weighted_values(f);
        let mut buf = vec![Complex64::default(); self.fft_len];
        for (slot, &v) in buf.iter_mut().zip(fw.iter()) {
            *slot = Complex64::new(v, 0.0);
        }
        self.fft_fwd.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(self.kernel_fft.iter()) {
            *b *= *k;
        }
        self.fft_inv.process(&mut buf);
        let scale = 1.0 / self.fft_len as f64;
        let values = (0..n)
            .map(|i| self.prefactor[i] * buf[i].re * scale)
            .collect();
        Ok(RadialField::from_values_unchecked(
            Arc::clone(&self.grid),
            values,
        ))
    }

    /// Default dispatch: dense below n = 256, FFT above.
    pub fn apply(&self, f: &RadialField) -> Result<RadialField> {
        if self.grid.n < FFT_THRESHOLD {
            self.apply_dense(f)
        } else {
            self.apply_fft(f)
        }
    }

    /// ∫ (I_α ∗ f) g dx when `normalized`; the raw double integral
    /// ∫∫ f g |x-y|^{α-N} (c_{N,α} divided out) otherwise.
    pub fn hls_pairing(&self, f: &RadialField, g: &RadialField, normalized: bool) -> Result<f64> {
        self.check_field(f)?;
        self.check_field(g)?;
        let af = self.apply(f)?;
        let mut acc = 0.0;
        for ((&a, &gv), &w) in af
            .values()
            .iter()
            .zip(g.values().iter())
            .zip(self.grid.quad_w().iter())
        {
            acc += a * gv * w;
        }
        if !acc.is_finite() {
            return Err(Error::numeric("pairing overflowed; rescale the inputs"));
        }
        Ok(if normalized { acc } else { acc / self.params.c_riesz })
    }
}
