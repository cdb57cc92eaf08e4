//! Worst-case stability, the Tikhonov MSE decomposition, and RMSE.

use faer::{Mat, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::gram::{GramMatrix, RANK_TOLERANCE};
use crate::recon::ImageRaster;
use crate::solve::DenseFactorization;

/// Eigendecomposition `W = U D Uᵀ`, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

impl Eigen {
    pub fn of(w: &GramMatrix) -> Result<Self> {
        let dense = w.to_dense();
        let evd = dense
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
        let s = evd.S().column_vector();
        let u = evd.U();
        let n = dense.nrows();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
        Ok(Eigen {
            values: idx.iter().map(|&k| s[k]).collect(),
            vectors: Mat::from_fn(n, n, |i, k| u[(i, idx[k])]),
        })
    }

    pub fn lambda_max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Index of the smallest eigenvalue above `RANK_TOLERANCE · λ_max`.
    pub fn smallest_nonzero(&self) -> Result<usize> {
        let lmax = self.lambda_max();
        if !(lmax > 0.0) {
            return Err(Error::RankZero);
        }
        self.values
            .iter()
            .position(|&l| l > RANK_TOLERANCE * lmax)
            .ok_or(Error::RankZero)
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.vectors.nrows())
            .map(|i| self.vectors[(i, k)])
            .collect()
    }

    /// `Uᵀ v`.
    pub fn coordinates(&self, v: &[f64]) -> Vec<f64> {
        let n = self.vectors.nrows();
        (0..n)
            .map(|k| (0..n).map(|i| self.vectors[(i, k)] * v[i]).sum())
            .collect()
    }
}

/// Worst-case error budget and, when built by [`adversarial_instance`], the
/// error actually achieved.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub rho: f64,
    pub eps: f64,
    pub nu: f64,
    pub d: f64,
    /// `ρ² + ε²/(d + 2ν)`.
    pub bound: f64,
    pub achieved: Option<f64>,
    pub gap: Option<f64>,
}

impl StabilityReport {
    pub const CSV_HEADER: &'static str = "config,rho,eps,nu,d,bound,achieved";

    pub fn csv_row(&self, config_hash: &str) -> String {
        format!(
            "{config_hash},{:?},{:?},{:?},{:?},{:?},{}",
            self.rho,
            self.eps,
            self.nu,
            self.d,
            self.bound,
            self.achieved.map(|a| format!("{a:?}")).unwrap_or_default()
        )
    }

    fn with_achieved(mut self, achieved: f64) -> Self {
        self.achieved = Some(achieved);
        self.gap = Some(self.bound - achieved);
        self
    }
}

fn check_budget(nu: f64, rho: f64, eps: f64) -> Result<()> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(invalid(format!("penalty must be positive, got {nu}")));
    }
    if !(rho >= 0.0 && eps >= 0.0) {
        return Err(invalid(format!(
            "budgets must be non-negative, got rho={rho}, eps={eps}"
        )));
    }
    Ok(())
}

fn bound_report(d: f64, nu: f64, rho: f64, eps: f64) -> StabilityReport {
    StabilityReport {
        rho,
        eps,
        nu,
        d,
        bound: rho * rho + eps * eps / (d + 2.0 * nu),
        achieved: None,
        gap: None,
    }
}

/// `ρ² + ε²/(d + 2ν)` with `d` the smallest non-zero eigenvalue of `W`.
pub fn stability_bound(w: &GramMatrix, nu: f64, rho: f64, eps: f64) -> Result<StabilityReport> {
    check_budget(nu, rho, eps)?;
    let eig = Eigen::of(w)?;
    let d = eig.values[eig.smallest_nonzero()?];
    Ok(bound_report(d, nu, rho, eps))
}

/// A signal/noise pair for the stability experiment. The signal is
/// `f⁰ = Σ α⁰_ij P*_{R_i}k̃_{x_j} + g` with `g ⟂ H^R_F`; only `‖g‖²` matters.
#[derive(Clone, Debug)]
pub struct AdversarialInstance {
    pub alpha0: Vec<f64>,
    pub noise: Vec<f64>,
    pub orthogonal_norm2: f64,
    pub report: StabilityReport,
}

/// Squared H-error `(α̂ - α⁰)ᵀW(α̂ - α⁰) + ‖g‖²` of the Tikhonov solution on
/// `Y = Wα⁰ + noise`.
pub fn tikhonov_error(
    w: &GramMatrix,
    fact: &DenseFactorization<'_>,
    alpha0: &[f64],
    noise: &[f64],
    orthogonal_norm2: f64,
) -> Result<f64> {
    let wa = w.apply(alpha0);
    let y: Vec<f64> = wa.iter().zip(noise).map(|(a, e)| a + e).collect();
    let (alpha, _) = fact.solve(&y)?;
    let diff: Vec<f64> = alpha.iter().zip(alpha0).map(|(a, b)| a - b).collect();
    Ok(w.quadratic_form(&diff) + orthogonal_norm2)
}

/// Builds the pair attaining `ρ² + ε²/(d + 2ν)`.
///
/// Along the eigenvector `u` of `d`, take `α⁰ = c u` and noise `-ε u` with
/// `c = εν/(d(d + 2ν))`, so that `‖P f⁰‖² = dc²`. The rest of the budget,
/// `ρ² - dc²`, is put in the orthogonal complement of `H^R_F`. When
/// `ρ² < dc²` the bound is not attainable; the instance then uses `‖P f⁰‖ = ρ`
/// along whichever eigenvector maximizes the error, and `achieved < bound`.
pub fn adversarial_instance(
    w: &GramMatrix,
    nu: f64,
    rho: f64,
    eps: f64,
) -> Result<AdversarialInstance> {
    check_budget(nu, rho, eps)?;
    let eig = Eigen::of(w)?;
    let kd = eig.smallest_nonzero()?;
    let d = eig.values[kd];
    let report = bound_report(d, nu, rho, eps);
    let c = eps * nu / (d * (d + 2.0 * nu));
    let (k, coef, orth) = if d * c * c <= rho * rho {
        (kd, c, rho * rho - d * c * c)
    } else {
        // error along eigenvector k with |w_k| = ρ/√d_k: d_k/(d_k+ν)² (ε + νρ/√d_k)²
        let lmax = eig.lambda_max();
        let best = (0..eig.values.len())
            .filter(|&k| eig.values[k] > RANK_TOLERANCE * lmax)
            .map(|k| {
                let dk = eig.values[k];
                let e = dk / (dk + nu).powi(2) * (eps + nu * rho / dk.sqrt()).powi(2);
                (k, e)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or(Error::RankZero)?;
        (best.0, rho / eig.values[best.0].sqrt(), 0.0)
    };
    let u = eig.vector(k);
    let alpha0: Vec<f64> = u.iter().map(|x| coef * x).collect();
    let noise: Vec<f64> = u.iter().map(|x| -eps * x).collect();
    let fact = DenseFactorization::new(w, nu)?;
    let achieved = tikhonov_error(w, &fact, &alpha0, &noise, orth)?;
    Ok(AdversarialInstance {
        alpha0,
        noise,
        orthogonal_norm2: orth,
        report: report.with_achieved(achieved),
    })
}

/// Three-term mean squared error of the Tikhonov estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct MseReport {
    /// `ν²(α⁰)ᵀW(W + νI)⁻²α⁰`.
    pub bias_term: f64,
    /// `σ² tr(W(W + νI)⁻²)`.
    pub variance_term: f64,
    /// `‖f⁰ - P f⁰‖²`, supplied by the caller.
    pub projection_term: f64,
    pub total: f64,
}

/// Closed-form MSE, evaluated in the eigenbasis of `W`.
pub fn mse_decomposition(
    w: &GramMatrix,
    nu: f64,
    alpha0: &[f64],
    sigma: f64,
    projection_residual: f64,
) -> Result<MseReport> {
    if !(nu > 0.0) {
        return Err(invalid(format!("penalty must be positive, got {nu}")));
    }
    if !(sigma >= 0.0) || !(projection_residual >= 0.0) {
        return Err(invalid(
            "noise level and projection residual must be non-negative",
        ));
    }
    if alpha0.len() != w.size() {
        return Err(Error::Dimension {
            expected: w.size(),
            got: alpha0.len(),
        });
    }
    let eig = Eigen::of(w)?;
    let coords = eig.coordinates(alpha0);
    let mut bias = 0.0;
    let mut trace = 0.0;
    for (&l, &a) in eig.values.iter().zip(&coords) {
        // rounding can leave tiny negative eigenvalues
        let l = l.max(0.0);
        let g = l / (l + nu).powi(2);
        bias += g * a * a;
        trace += g;
    }
    let bias_term = nu * nu * bias;
    let variance_term = sigma * sigma * trace;
    Ok(MseReport {
        bias_term,
        variance_term,
        projection_term: projection_residual,
        total: bias_term + variance_term + projection_residual,
    })
}

/// Monte-Carlo estimate of `E‖f̂ - f⁰‖²` with its standard error.
#[derive(Clone, Copy, Debug)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub draws: usize,
}

/// Draw `k` uses ChaCha20 stream `k` of `seed` for its noise vector.
pub fn mse_monte_carlo(
    w: &GramMatrix,
    nu: f64,
    alpha0: &[f64],
    sigma: f64,
    projection_residual: f64,
    draws: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if draws < 2 {
        return Err(invalid("Monte-Carlo needs at least two draws"));
    }
    let fact = DenseFactorization::new(w, nu)?;
    let errs: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let noise: Vec<f64> = (0..w.size())
                .map(|_| {
                    sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                })
                .collect();
            tikhonov_error(w, &fact, alpha0, &noise, projection_residual)
        })
        .collect::<Result<_>>()?;
    let n = draws as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MonteCarloEstimate {
        mean,
        std_error: (var / n).sqrt(),
        draws,
    })
}

/// Root mean squared difference over the unmasked pixels.
pub fn rmse(recon: &ImageRaster, truth: &ImageRaster) -> Result<f64> {
    recon.check_same(truth)?;
    let (mut acc, mut count) = (0.0, 0usize);
    for k in 0..recon.values.len() {
        if recon.mask[k] {
            acc += (recon.values[k] - truth.values[k]).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        return Err(invalid("raster has no unmasked pixels"));
    }
    Ok((acc / count as f64).sqrt())
}
