//! Representer normal equations: Tikhonov, minimum-norm, and the FFT path
//! for block-circulant Gram matrices.

use faer::linalg::solvers::Solve;
use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::prelude::*;
use faer::{Mat, Par, Side};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::data::grids::{AngleGrid, DetectorMesh};
use crate::data::sinogram::Sinogram;
use crate::error::{invalid, Error, Result};
use crate::gram::{GramData, GramMatrix, RANK_TOLERANCE};
use crate::kernels::gaussian::GaussianKernelParams;

/// Residuals above `REFINE_THRESHOLD · |Y|` trigger one refinement pass.
pub const REFINE_THRESHOLD: f64 = 1e-8;
/// Allowed imaginary residue of the inverse FFT, relative to `|α|`.
pub const IMAGINARY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Tikhonov,
    Mle,
    Circulant,
    /// Coefficients supplied directly.
    Given,
}

/// Solved coefficients `α̂` together with everything needed to evaluate
/// `f̂ = Σ α̂_ij P*_{R_i} k̃_{x_j}`.
#[derive(Clone, Debug)]
pub struct CoefficientField {
    /// Row-major `N × M`.
    pub alpha: Vec<f64>,
    pub nu: f64,
    pub params: GaussianKernelParams,
    pub angles: AngleGrid,
    pub mesh: DetectorMesh,
    pub provenance: Provenance,
    /// `|(W + νI)α̂ - Y|` of the returned solution (`ν = 0` for the MLE).
    pub residual: f64,
}

impl CoefficientField {
    pub fn new(
        alpha: Vec<f64>,
        params: GaussianKernelParams,
        angles: AngleGrid,
        mesh: DetectorMesh,
    ) -> Result<Self> {
        if alpha.len() != angles.len() * mesh.len() {
            return Err(Error::Dimension {
                expected: angles.len() * mesh.len(),
                got: alpha.len(),
            });
        }
        if angles.dim() != params.dim || mesh.detector_dim() + 1 != params.dim {
            return Err(invalid(
                "coefficient grids do not match the kernel dimension",
            ));
        }
        Ok(CoefficientField {
            alpha,
            nu: 0.0,
            params,
            angles,
            mesh,
            provenance: Provenance::Given,
            residual: 0.0,
        })
    }

    /// Coefficients on the grids of `w`.
    pub fn on_gram(w: &GramMatrix, alpha: Vec<f64>) -> Result<Self> {
        Self::new(alpha, w.params, w.angles.clone(), w.mesh.clone())
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn n_mesh(&self) -> usize {
        self.mesh.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.alpha[i * self.n_mesh() + j]
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn column(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn check_sinogram(w: &GramMatrix, y: &Sinogram) -> Result<()> {
    if y.n_angles() != w.n_angles() || y.n_mesh() != w.n_mesh() {
        return Err(Error::Dimension {
            expected: w.size(),
            got: y.values.len(),
        });
    }
    if w.params.dim == 2 {
        let off = y
            .angles
            .angles
            .iter()
            .zip(&w.angles.angles)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if off > 1e-9 {
            return Err(invalid(format!(
                "sinogram angles differ from the Gram grid by {off:e}"
            )));
        }
    }
    let moff = y
        .mesh
        .points()
        .iter()
        .zip(w.mesh.points())
        .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);
    if moff > 1e-9 {
        return Err(invalid(format!(
            "sinogram mesh differs from the Gram mesh by {moff:e}"
        )));
    }
    Ok(())
}

/// Cholesky factorization of `W + νI`, reusable across right-hand sides.
pub struct DenseFactorization<'a> {
    gram: &'a GramMatrix,
    dense: Mat<f64>,
    llt: faer::linalg::solvers::Llt<f64>,
    nu: f64,
}

impl<'a> DenseFactorization<'a> {
    pub fn new(w: &'a GramMatrix, nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(invalid(format!("penalty must be positive, got {nu}")));
        }
        let dense = w.to_dense();
        let shifted = Mat::from_fn(dense.nrows(), dense.ncols(), |i, j| {
            dense[(i, j)] + if i == j { nu } else { 0.0 }
        });
        let llt = shifted.llt(Side::Lower).map_err(|e| {
            let dmax = (0..dense.nrows()).map(|i| dense[(i, i)]).fold(0.0, f64::max);
            Error::Numerical(format!(
                "Cholesky of W + νI failed ({e:?}); ν = {nu:e}, max diagonal {dmax:e}, condition at least {:e}",
                (dmax + nu) / nu
            ))
        })?;
        Ok(DenseFactorization {
            gram: w,
            dense,
            llt,
            nu,
        })
    }

    fn residual_vec(&self, alpha: &[f64], y: &[f64]) -> Vec<f64> {
        let wa = &self.dense * column(alpha);
        (0..y.len())
            .map(|i| wa[(i, 0)] + self.nu * alpha[i] - y[i])
            .collect()
    }

    /// `(W + νI)⁻¹ y` and the achieved residual norm.
    pub fn solve(&self, y: &[f64]) -> Result<(Vec<f64>, f64)> {
        if y.len() != self.gram.size() {
            return Err(Error::Dimension {
                expected: self.gram.size(),
                got: y.len(),
            });
        }
        let sol = self.llt.solve(column(y));
        let mut alpha: Vec<f64> = (0..y.len()).map(|i| sol[(i, 0)]).collect();
        let mut r = self.residual_vec(&alpha, y);
        let mut res = norm(&r);
        if res > REFINE_THRESHOLD * norm(y) {
            let corr = self.llt.solve(column(&r));
            for (a, i) in alpha.iter_mut().zip(0..) {
                *a -= corr[(i, 0)];
            }
            r = self.residual_vec(&alpha, y);
            res = norm(&r);
            log::debug!("refined dense solve, residual {res:e}");
        }
        Ok((alpha, res))
    }
}

/// `α̂ = (W + νI)⁻¹ Y` by Cholesky. Circulant layouts are expanded first.
pub fn solve_tikhonov(w: &GramMatrix, y: &Sinogram, nu: f64) -> Result<CoefficientField> {
    check_sinogram(w, y)?;
    let (alpha, residual) = DenseFactorization::new(w, nu)?.solve(&y.values)?;
    Ok(CoefficientField {
        alpha,
        nu,
        params: w.params,
        angles: w.angles.clone(),
        mesh: w.mesh.clone(),
        provenance: Provenance::Tikhonov,
        residual,
    })
}

/// `|Y - Wα|² + ν αᵀWα`.
pub fn empirical_risk(w: &GramMatrix, y: &[f64], alpha: &[f64], nu: f64) -> f64 {
    let wa = w.apply(alpha);
    let fit: f64 = y.iter().zip(&wa).map(|(a, b)| (a - b) * (a - b)).sum();
    let pen: f64 = alpha.iter().zip(&wa).map(|(a, b)| a * b).sum();
    fit + nu * pen
}

/// Minimum-norm least-squares `W†Y`, eigenvalues below
/// `RANK_TOLERANCE · λ_max` treated as zero.
pub fn pseudo_inverse_solve(w: &GramMatrix, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != w.size() {
        return Err(Error::Dimension {
            expected: w.size(),
            got: y.len(),
        });
    }
    let dense = w.to_dense();
    let evd = dense
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let nm = y.len();
    let lmax = (0..nm).map(|k| s[k]).fold(0.0, f64::max);
    let cut = RANK_TOLERANCE * lmax;
    let mut alpha = vec![0.0; nm];
    for k in 0..nm {
        let l = s[k];
        if l <= cut {
            continue;
        }
        let c: f64 = (0..nm).map(|i| u[(i, k)] * y[i]).sum::<f64>() / l;
        for (i, a) in alpha.iter_mut().enumerate() {
            *a += c * u[(i, k)];
        }
    }
    Ok(alpha)
}

/// Minimum-norm interpolant `α̂⁰ = W†Y`.
pub fn solve_mle(w: &GramMatrix, y: &Sinogram) -> Result<CoefficientField> {
    check_sinogram(w, y)?;
    let alpha = pseudo_inverse_solve(w, &y.values)?;
    let wa = w.apply(&alpha);
    let residual = norm(
        &wa.iter()
            .zip(&y.values)
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );
    Ok(CoefficientField {
        alpha,
        nu: 0.0,
        params: w.params,
        angles: w.angles.clone(),
        mesh: w.mesh.clone(),
        provenance: Provenance::Mle,
        residual,
    })
}

/// Per-frequency Cholesky factors `L_k` of `Ŵ_k + νI`, where
/// `Ŵ_k = Σ_d e^{-2πikd/N} W_d`.
#[derive(Clone, Debug)]
pub struct CirculantFactorization {
    nu: f64,
    m: usize,
    factors: Vec<Mat<c64>>,
}

impl CirculantFactorization {
    pub fn new(w: &GramMatrix, nu: f64) -> Result<Self> {
        let GramData::Circulant(blocks) = &w.data else {
            return Err(invalid(
                "circulant solve needs a block-circulant Gram matrix",
            ));
        };
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(invalid(format!("penalty must be positive, got {nu}")));
        }
        let n = blocks.len();
        let m = w.n_mesh();
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(n);
        // hat[k][(j, j')]
        let mut hat = vec![Mat::<c64>::zeros(m, m); n];
        let mut seq = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..m {
            for jp in 0..m {
                for (d, s) in seq.iter_mut().enumerate() {
                    *s = Complex64::new(blocks[d][(j, jp)], 0.0);
                }
                fft.process(&mut seq);
                for (k, s) in seq.iter().enumerate() {
                    hat[k][(j, jp)] = c64::new(s.re, s.im);
                }
            }
        }
        let mut factors = Vec::with_capacity(n);
        for (k, mut a) in hat.into_iter().enumerate() {
            for j in 0..m {
                // exact Hermitian diagonal; rounding can leave a tiny imaginary part
                a[(j, j)] = c64::new(a[(j, j)].re + nu, 0.0);
            }
            let llt = a.llt(Side::Lower).map_err(|e| {
                Error::Numerical(format!(
                    "Cholesky of frequency {k} failed ({e:?}); ν = {nu:e}"
                ))
            })?;
            factors.push(llt.L().to_owned());
        }
        Ok(CirculantFactorization { nu, m, factors })
    }

    /// Rebuilds a factorization from stored lower factors.
    pub fn from_parts(nu: f64, m: usize, factors: Vec<Mat<c64>>) -> Result<Self> {
        if factors.iter().any(|l| l.nrows() != m || l.ncols() != m) {
            return Err(Error::Format("factor blocks have the wrong size".into()));
        }
        Ok(CirculantFactorization { nu, m, factors })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn factors(&self) -> &[Mat<c64>] {
        &self.factors
    }

    pub fn n_angles(&self) -> usize {
        self.factors.len()
    }

    fn solve_frequency(&self, k: usize, rhs: &mut Mat<c64>) {
        let l = self.factors[k].as_ref();
        solve_lower_triangular_in_place(l, rhs.as_mut(), Par::Seq);
        solve_upper_triangular_in_place(l.adjoint(), rhs.as_mut(), Par::Seq);
    }

    /// `L_k L_kᴴ x - b` per frequency.
    fn frequency_residual(&self, k: usize, x: &Mat<c64>, b: &Mat<c64>) -> Mat<c64> {
        let l = &self.factors[k];
        let t = l.adjoint() * x;
        let lt = l * t;
        Mat::from_fn(self.m, 1, |j, _| lt[(j, 0)] - b[(j, 0)])
    }

    /// `(W + νI)⁻¹ y` for a row-major `N × M` right-hand side.
    pub fn solve(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve_with_residual(y)?.0)
    }

    /// Solution and residual norm `|(W + νI)α - y|`, measured in the
    /// frequency domain via Parseval.
    pub fn solve_with_residual(&self, y: &[f64]) -> Result<(Vec<f64>, f64)> {
        let n = self.factors.len();
        let m = self.m;
        if y.len() != n * m {
            return Err(Error::Dimension {
                expected: n * m,
                got: y.len(),
            });
        }
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut yhat = vec![Mat::<c64>::zeros(m, 1); n];
        let mut seq = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..m {
            for (i, s) in seq.iter_mut().enumerate() {
                *s = Complex64::new(y[i * m + j], 0.0);
            }
            fwd.process(&mut seq);
            for (k, s) in seq.iter().enumerate() {
                yhat[k][(j, 0)] = c64::new(s.re, s.im);
            }
        }
        let mut xhat = yhat.clone();
        let mut res2 = 0.0;
        let ynorm = norm(y);
        for k in 0..n {
            self.solve_frequency(k, &mut xhat[k]);
            let mut r = self.frequency_residual(k, &xhat[k], &yhat[k]);
            let rk = r.squared_norm_l2() / n as f64;
            if rk.sqrt() > REFINE_THRESHOLD * ynorm / (n as f64).sqrt() {
                self.solve_frequency(k, &mut r);
                for j in 0..m {
                    xhat[k][(j, 0)] -= r[(j, 0)];
                }
                let r2 = self.frequency_residual(k, &xhat[k], &yhat[k]);
                res2 += r2.squared_norm_l2() / n as f64;
            } else {
                res2 += rk;
            }
        }
        let mut alpha = vec![0.0; n * m];
        let mut imag2 = 0.0;
        for j in 0..m {
            for (k, s) in seq.iter_mut().enumerate() {
                let v = xhat[k][(j, 0)];
                *s = Complex64::new(v.re, v.im);
            }
            inv.process(&mut seq);
            for (i, s) in seq.iter().enumerate() {
                alpha[i * m + j] = s.re / n as f64;
                imag2 += (s.im / n as f64).powi(2);
            }
        }
        let anorm = norm(&alpha);
        if imag2.sqrt() > IMAGINARY_TOLERANCE * anorm.max(f64::MIN_POSITIVE) {
            return Err(Error::Numerical(format!(
                "inverse FFT left an imaginary residue of {:e} (|α| = {anorm:e})",
                imag2.sqrt()
            )));
        }
        Ok((alpha, res2.sqrt()))
    }
}

/// Tikhonov solve of a block-circulant system through per-frequency
/// Hermitian factorizations.
pub fn solve_circulant(w: &GramMatrix, y: &Sinogram, nu: f64) -> Result<CoefficientField> {
    let fact = CirculantFactorization::new(w, nu)?;
    solve_circulant_with(&fact, w, y)
}

/// As [`solve_circulant`], reusing a stored factorization.
pub fn solve_circulant_with(
    fact: &CirculantFactorization,
    w: &GramMatrix,
    y: &Sinogram,
) -> Result<CoefficientField> {
    if w.blocks().is_none() {
        return Err(invalid(
            "circulant solve needs a block-circulant Gram matrix",
        ));
    }
    if fact.n_angles() != w.n_angles() || fact.m != w.n_mesh() {
        return Err(invalid("factorization does not match the Gram matrix"));
    }
    check_sinogram(w, y)?;
    let (alpha, residual) = fact.solve_with_residual(&y.values)?;
    Ok(CoefficientField {
        alpha,
        nu: fact.nu,
        params: w.params,
        angles: w.angles.clone(),
        mesh: w.mesh.clone(),
        provenance: Provenance::Circulant,
        residual,
    })
}
