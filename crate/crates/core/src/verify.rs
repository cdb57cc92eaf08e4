//! Self-checks run by `rkct verify`: closed forms against quadrature,
//! circulant against dense, the stability equality case, Tikhonov
//! identities, the MSE formula against Monte-Carlo, and moment consistency.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{adversarial_instance, mse_decomposition, mse_monte_carlo};
use crate::data::grids::{make_angle_grid, make_mesh, GridKind};
use crate::data::phantom::shepp_logan;
use crate::data::sinogram::{simulate_sinogram, Sinogram};
use crate::error::Result;
use crate::geometry::{random_rotation, relative_angle_data, Orientation};
use crate::gram::{assemble_circulant, assemble_dense};
use crate::kernels::gaussian::{converged_gram_oracle, cross_gram_entry, GaussianKernelParams};
use crate::kernels::quadrature::QuadratureRule;
use crate::recon::{hlcc_moment_check, HLCC_TOLERANCE};
use crate::solve::{
    empirical_risk, pseudo_inverse_solve, solve_circulant, solve_mle, solve_tikhonov,
};

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub metric: f64,
    pub tolerance: f64,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:<22} metric={:.3e} tol={:.1e} ({:.2}s) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.metric,
            self.tolerance,
            self.seconds,
            self.detail
        )
    }
}

fn outcome(
    name: &'static str,
    start: Instant,
    metric: f64,
    tolerance: f64,
    detail: String,
) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: metric <= tolerance,
        metric,
        tolerance,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn random_point<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(-radius..radius)).collect();
        if p.iter().map(|v| v * v).sum::<f64>() < radius * radius {
            return p;
        }
    }
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let n: f64 = b.iter().map(|y| y * y).sum();
    (d / n).sqrt()
}

/// Closed-form Gram entries against the converged quadrature oracle.
pub fn check_closed_form(tuples: usize, seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut unconverged = 0;
    for k in 0..tuples {
        let n = if k % 2 == 0 { 2 } else { 3 };
        let gamma = [1.0, 32.0, 2048.0][k % 3];
        let params = GaussianKernelParams::new(gamma, n)?;
        let r1 = random_rotation(&mut rng, n);
        let r2 = random_rotation(&mut rng, n);
        let x1 = random_point(&mut rng, n - 1, 0.95);
        let x2 = random_point(&mut rng, n - 1, 0.95);
        let rad = relative_angle_data(&r1, &r2, &x1, &x2)?;
        let closed = cross_gram_entry(&params, &rad, &x1, &x2)?;
        let kernel = |a: &[f64], b: &[f64]| params.eval(a, b);
        let oracle = converged_gram_oracle(&kernel, &r1, &r2, &x1, &x2, 4, 1e-10, 256)?;
        if !oracle.converged {
            unconverged += 1;
        }
        worst = worst.max((closed - oracle.value).abs());
    }
    let mut o = outcome(
        "closed-form gram",
        start,
        worst,
        1e-6,
        format!("{tuples} tuples, {unconverged} oracle(s) unconverged"),
    );
    o.passed &= unconverged == 0;
    Ok(o)
}

/// FFT solve against Cholesky on full-circle grids.
pub fn check_circulant(sizes: &[(usize, usize)], seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let params = GaussianKernelParams::new(32.0, 2)?;
    let mut worst: f64 = 0.0;
    for &(n, m) in sizes {
        let mesh = make_mesh(m)?;
        let grid = make_angle_grid(GridKind::EquiangularFull, n, None, 0)?;
        let w = assemble_circulant(&params, n, &mesh)?;
        let y = simulate_sinogram(&shepp_logan(), &grid, &mesh, 1.0, seed)?;
        let c = solve_circulant(&w, &y, 1e-3)?;
        let d = solve_tikhonov(&w, &y, 1e-3)?;
        worst = worst.max(rel(&c.alpha, &d.alpha));
    }
    Ok(outcome(
        "circulant = dense",
        start,
        worst,
        1e-8,
        format!("{} size(s)", sizes.len()),
    ))
}

/// Adversarial instances attain the bound; random ones stay below it.
pub fn check_stability(grams: usize, seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut exceeded = 0;
    for _ in 0..grams {
        let n = rng.gen_range(2..=6);
        let m = rng.gen_range(3..=8);
        let gamma = 2f64.powi(rng.gen_range(2..=8));
        let params = GaussianKernelParams::new(gamma, 2)?;
        let grid = make_angle_grid(GridKind::Random, n, None, rng.gen())?;
        let w = assemble_dense(&params, &grid, &make_mesh(m)?)?;
        let nu = 10f64.powf(rng.gen_range(-3.0..0.0));
        // equality needs ε ≤ ρ√d(d + 2ν)/ν, so the noise budget is drawn
        // inside that range
        let d = crate::analysis::stability_bound(&w, nu, 1.0, 0.0)?.d;
        let rho = rng.gen_range(0.5..2.0);
        let eps = rng.gen_range(0.1..1.0) * rho * d.sqrt() * (d + 2.0 * nu) / nu;
        let inst = adversarial_instance(&w, nu, rho, eps)?;
        let ratio = inst.report.achieved.unwrap_or(0.0) / inst.report.bound;
        worst = worst.max((ratio - 1.0).abs());
        if !(1.0 - 1e-6..=1.0 + 1e-8).contains(&ratio) {
            exceeded += 1;
        }
        // random signal with ‖f⁰‖ = ρ, random noise with ‖ε‖ = ε
        let a: Vec<f64> = (0..w.size()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = rho / w.quadratic_form(&a).sqrt();
        let a: Vec<f64> = a.iter().map(|v| v * s).collect();
        let e: Vec<f64> = (0..w.size()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let es = eps / e.iter().map(|v| v * v).sum::<f64>().sqrt();
        let e: Vec<f64> = e.iter().map(|v| v * es).collect();
        let fact = crate::solve::DenseFactorization::new(&w, nu)?;
        let err = crate::analysis::tikhonov_error(&w, &fact, &a, &e, 0.0)?;
        if err > inst.report.bound * (1.0 + 1e-8) {
            exceeded += 1;
        }
    }
    Ok(CheckOutcome {
        name: "stability sharpness",
        passed: exceeded == 0,
        metric: exceeded as f64,
        tolerance: 0.0,
        detail: format!("{grams} Gram(s), worst ratio deviation {worst:.2e}"),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Risk identity, `α̂^ν → W†Y`, and exact interpolation by the MLE.
pub fn check_tikhonov_identities(seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let params = GaussianKernelParams::new(2048.0, 2)?;
    let grid = make_angle_grid(GridKind::Random, 4, None, seed)?;
    let mesh = make_mesh(8)?;
    let w = assemble_dense(&params, &grid, &mesh)?;
    let y = simulate_sinogram(&shepp_logan(), &grid, &mesh, 1.0, seed)?;
    let mut worst: f64 = 0.0;
    for k in 2..=8 {
        let nu = 10f64.powi(-k);
        let a = solve_tikhonov(&w, &y, nu)?;
        let risk = empirical_risk(&w, &y.values, &a.alpha, nu);
        let want = nu
            * y.values
                .iter()
                .zip(&a.alpha)
                .map(|(p, q)| p * q)
                .sum::<f64>();
        worst = worst.max((risk - want).abs() / want);
    }
    let pinv = pseudo_inverse_solve(&w, &y.values)?;
    let mut last = f64::INFINITY;
    let mut monotone = true;
    for k in 2..=8 {
        let a = solve_tikhonov(&w, &y, 10f64.powi(-k))?;
        let gap = rel(&a.alpha, &pinv);
        monotone &= gap < last;
        last = gap;
    }
    let mle = solve_mle(&w, &y)?;
    let ynorm = y.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let interp = mle.residual / ynorm;
    let mut o = outcome(
        "tikhonov identities",
        start,
        worst.max(interp),
        1e-8,
        format!("monotone={monotone}, final gap {last:.2e}, MLE residual {interp:.2e}"),
    );
    o.passed &= monotone;
    Ok(o)
}

/// Closed-form MSE against a Monte-Carlo estimate, in standard errors.
pub fn check_mse(draws: usize, seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let params = GaussianKernelParams::new(32.0, 2)?;
    let grid = make_angle_grid(GridKind::Random, 8, None, seed)?;
    let w = assemble_dense(&params, &grid, &make_mesh(10)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha0: Vec<f64> = (0..w.size()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut worst: f64 = 0.0;
    for (k, sigma) in [1.0, 20.0].into_iter().enumerate() {
        let nu = 0.05;
        let closed = mse_decomposition(&w, nu, &alpha0, sigma, 0.0)?;
        let mc = mse_monte_carlo(&w, nu, &alpha0, sigma, 0.0, draws, seed + k as u64)?;
        worst = worst.max((mc.mean - closed.total).abs() / mc.std_error);
    }
    Ok(outcome(
        "mse monte-carlo",
        start,
        worst,
        3.0,
        format!("{draws} draws per σ"),
    ))
}

/// Moment consistency of a Tikhonov reconstruction across random probes.
pub fn check_hlcc(n: usize, m: usize, seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let params = GaussianKernelParams::new(32.0, 2)?;
    let grid = make_angle_grid(GridKind::Random, n, None, seed)?;
    let mesh = make_mesh(m)?;
    let w = assemble_dense(&params, &grid, &mesh)?;
    let y: Sinogram = simulate_sinogram(&shepp_logan(), &grid, &mesh, 1.0, seed)?;
    let coeffs = solve_tikhonov(&w, &y, 1e-2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let probes: Vec<Orientation> = (0..5)
        .map(|_| Orientation::planar(rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect();
    let rule = QuadratureRule::gauss_legendre(96)?;
    let rep = hlcc_moment_check(&coeffs, 2, &probes, &rule, HLCC_TOLERANCE)?;
    let worst = rep
        .rows
        .iter()
        .map(|r| r.relative_deviation)
        .fold(0.0, f64::max);
    Ok(outcome(
        "hlcc moments",
        start,
        worst,
        HLCC_TOLERANCE,
        format!("N={n}, M={m}, l<=2"),
    ))
}

/// The whole suite; `thorough` runs it at the acceptance sizes.
pub fn run_suite(thorough: bool, seed: u64) -> Result<Vec<CheckOutcome>> {
    let sizes: &[(usize, usize)] = if thorough {
        &[(4, 8), (16, 8), (32, 8), (4, 24), (16, 24), (32, 24)]
    } else {
        &[(4, 8), (16, 24)]
    };
    Ok(vec![
        check_closed_form(if thorough { 120 } else { 24 }, seed)?,
        check_circulant(sizes, seed)?,
        check_stability(10, seed)?,
        check_tikhonov_identities(seed)?,
        check_mse(200, seed)?,
        if thorough {
            check_hlcc(20, 40, seed)?
        } else {
            check_hlcc(8, 16, seed)?
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        for o in run_suite(false, 7).unwrap() {
            eprintln!("{o}");
            assert!(o.passed, "{o}");
        }
    }
}
