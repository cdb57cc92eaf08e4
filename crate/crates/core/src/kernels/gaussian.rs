//! Closed forms for the Gaussian kernel `K(z₁, z₂) = exp(-γ|z₁ - z₂|²)`:
//! induced kernel on the detector ball, backprojected generator, and the
//! cross-orientation Gram entry.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::geometry::{half_chord, Orientation, RelativeAngleData};
use crate::kernels::quadrature::QuadratureRule;
use crate::kernels::special::{bvn_rectangle, erf, phi_antiderivative};

const SQRT_PI: f64 = 1.772_453_850_905_516;
const BALL_TOLERANCE: f64 = 1e-12;
/// Standardized arguments beyond this leave less than `1e-300` of mass.
const TAIL_CUTOFF: f64 = 37.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianKernelParams {
    pub gamma: f64,
    pub dim: usize,
}

impl GaussianKernelParams {
    pub fn new(gamma: f64, dim: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid(format!(
                "kernel sharpness must be positive, got {gamma}"
            )));
        }
        if dim < 2 {
            return Err(invalid(format!("dimension must be at least 2, got {dim}")));
        }
        Ok(GaussianKernelParams { gamma, dim })
    }

    /// `K(z₁, z₂)`.
    pub fn eval(&self, z1: &[f64], z2: &[f64]) -> f64 {
        let d2: f64 = z1.iter().zip(z2).map(|(a, b)| (a - b) * (a - b)).sum();
        (-self.gamma * d2).exp()
    }
}

fn check_in_ball(x: &[f64], what: &str) -> Result<()> {
    let sq: f64 = x.iter().map(|v| v * v).sum();
    if sq.sqrt() > 1.0 + BALL_TOLERANCE {
        return Err(invalid(format!("{what} {x:?} lies outside the unit ball")));
    }
    Ok(())
}

fn check_dim(params: &GaussianKernelParams, x: &[f64], expected: usize) -> Result<()> {
    if x.len() != expected {
        return Err(Error::Dimension {
            expected,
            got: x.len(),
        });
    }
    debug_assert!(params.dim >= 2);
    Ok(())
}

/// `(1/γ)[Φ(√γ(W₁ + W₂)) - Φ(√γ(W₁ - W₂))]`, the box integral of
/// `exp(-γ(z₁ - z₂)²)` over `[-W₁, W₁] × [-W₂, W₂]`.
fn parallel_box(gamma: f64, w1: f64, w2: f64) -> f64 {
    if w1 == 0.0 || w2 == 0.0 {
        return 0.0;
    }
    let sg = gamma.sqrt();
    (phi_antiderivative(sg * (w1 + w2)) - phi_antiderivative(sg * (w1 - w2))) / gamma
}

/// Induced kernel `K̃(x₁, x₂)` on the detector ball `B^{n-1}`.
pub fn induced_kernel(params: &GaussianKernelParams, x1: &[f64], x2: &[f64]) -> Result<f64> {
    check_dim(params, x1, params.dim - 1)?;
    check_dim(params, x2, params.dim - 1)?;
    check_in_ball(x1, "mesh point")?;
    check_in_ball(x2, "mesh point")?;
    let d2: f64 = x1.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
    let (w1, w2) = (half_chord(x1), half_chord(x2));
    Ok((-params.gamma * d2).exp() * parallel_box(params.gamma, w1, w2))
}

/// `P_R k_z(x)`: the X-ray transform at `(R, x)` of the generator at `z`.
pub fn backprojected_generator(
    params: &GaussianKernelParams,
    r: &Orientation,
    x: &[f64],
    z: &[f64],
) -> Result<f64> {
    check_dim(params, x, params.dim - 1)?;
    check_dim(params, z, params.dim)?;
    check_in_ball(x, "mesh point")?;
    check_in_ball(z, "evaluation point")?;
    let rz = r.apply(z);
    let n = params.dim;
    let d2: f64 = x
        .iter()
        .zip(&rz[..n - 1])
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(generator_from_parts(
        params.gamma,
        d2,
        rz[n - 1],
        half_chord(x),
    ))
}

/// Generator value from `|x - P_R z|²`, `zᵀr` and `W(x)`.
pub(crate) fn generator_from_parts(gamma: f64, dist2: f64, height: f64, w: f64) -> f64 {
    if w == 0.0 {
        return 0.0;
    }
    let sg = gamma.sqrt();
    SQRT_PI / (2.0 * sg)
        * (-gamma * dist2).exp()
        * (erf(sg * (w - height)) - erf(sg * (-w - height)))
}

/// Gram entry `⟨P*_{R₁}k̃_{x₁}, P*_{R₂}k̃_{x₂}⟩` from relative-angle data.
pub fn cross_gram_entry(
    params: &GaussianKernelParams,
    rad: &RelativeAngleData,
    x1: &[f64],
    x2: &[f64],
) -> Result<f64> {
    check_dim(params, x1, params.dim - 1)?;
    check_dim(params, x2, params.dim - 1)?;
    check_in_ball(x1, "mesh point")?;
    check_in_ball(x2, "mesh point")?;
    if rad.reduced_x1.len() + 2 != params.dim {
        return Err(Error::Dimension {
            expected: params.dim,
            got: rad.reduced_x1.len() + 2,
        });
    }
    Ok(entry_from_parts(
        params.gamma,
        rad,
        half_chord(x1),
        half_chord(x2),
    ))
}

pub(crate) fn entry_from_parts(gamma: f64, rad: &RelativeAngleData, w1: f64, w2: f64) -> f64 {
    if w1 == 0.0 || w2 == 0.0 {
        return 0.0;
    }
    let red = rad.reduced_dist2();
    if rad.parallel {
        let d = rad.r * rad.x1r - rad.x2r;
        return (-gamma * (red + d * d)).exp() * parallel_box(gamma, w1, w2);
    }
    let w = rad.w_r;
    let s = (2.0 * gamma).sqrt();
    let a0 = s * (-w * w1 - rad.mu1);
    let a1 = s * (w * w1 - rad.mu1);
    let b0 = s * (-w * w2 - rad.mu2);
    let b1 = s * (w * w2 - rad.mu2);
    let out = |lo: f64, hi: f64| lo > TAIL_CUTOFF || hi < -TAIL_CUTOFF;
    if out(a0, a1) || out(b0, b1) {
        return 0.0;
    }
    let pref = (-gamma * red).exp();
    if pref == 0.0 {
        return 0.0;
    }
    PI / (gamma * w) * pref * bvn_rectangle(a0, a1, b0, b1, rad.r, w)
}

/// Tensor-product quadrature of `∫∫ K(R₁ᵀ[x₁:z₁], R₂ᵀ[x₂:z₂]) dz₁ dz₂` over
/// `[-W(x₁), W(x₁)] × [-W(x₂), W(x₂)]`.
pub fn quadrature_gram_oracle(
    kernel: &dyn Fn(&[f64], &[f64]) -> f64,
    r1: &Orientation,
    r2: &Orientation,
    x1: &[f64],
    x2: &[f64],
    rule: &QuadratureRule,
) -> f64 {
    let (w1, w2) = (half_chord(x1), half_chord(x2));
    if w1 == 0.0 || w2 == 0.0 {
        return 0.0;
    }
    let pts2: Vec<(Vec<f64>, f64)> = rule
        .mapped(-w2, w2)
        .map(|(t, wt)| (r2.line_point(x2, t), wt))
        .collect();
    rule.mapped(-w1, w1)
        .map(|(t1, wt1)| {
            let p1 = r1.line_point(x1, t1);
            wt1 * pts2
                .iter()
                .map(|(p2, wt2)| wt2 * kernel(&p1, p2))
                .sum::<f64>()
        })
        .sum()
}

/// Result of an order-doubling convergence run of the quadrature oracle.
#[derive(Clone, Copy, Debug)]
pub struct OracleValue {
    pub value: f64,
    /// Difference between the last two refinements.
    pub delta: f64,
    pub panels: usize,
    pub converged: bool,
}

/// Runs [`quadrature_gram_oracle`] with composite 16-point rules, doubling
/// the panel count from `start_panels` until successive values agree to `tol`.
pub fn converged_gram_oracle(
    kernel: &dyn Fn(&[f64], &[f64]) -> f64,
    r1: &Orientation,
    r2: &Orientation,
    x1: &[f64],
    x2: &[f64],
    start_panels: usize,
    tol: f64,
    max_panels: usize,
) -> Result<OracleValue> {
    let mut panels = start_panels.max(1);
    let mut prev = quadrature_gram_oracle(
        kernel,
        r1,
        r2,
        x1,
        x2,
        &QuadratureRule::composite(panels, 16)?,
    );
    loop {
        let next_panels = panels * 2;
        let rule = QuadratureRule::composite(next_panels, 16)?;
        let next = quadrature_gram_oracle(kernel, r1, r2, x1, x2, &rule);
        let delta = (next - prev).abs();
        if delta < tol || next_panels >= max_panels {
            return Ok(OracleValue {
                value: next,
                delta,
                panels: next_panels,
                converged: delta < tol,
            });
        }
        prev = next;
        panels = next_panels;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_rotation, relative_angle_data, RelativeRotation};
    use faer::Mat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(gamma: f64, n: usize) -> GaussianKernelParams {
        GaussianKernelParams::new(gamma, n).unwrap()
    }

    #[test]
    fn rejects_bad_params() {
        assert!(GaussianKernelParams::new(0.0, 2).is_err());
        assert!(GaussianKernelParams::new(-1.0, 2).is_err());
        assert!(GaussianKernelParams::new(1.0, 1).is_err());
    }

    #[test]
    fn induced_kernel_boundary_and_symmetry() {
        let p = params(3.0, 2);
        assert_eq!(induced_kernel(&p, &[1.0], &[0.3]).unwrap(), 0.0);
        assert_eq!(induced_kernel(&p, &[-0.2], &[-1.0]).unwrap(), 0.0);
        assert!(induced_kernel(&p, &[1.2], &[0.0]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let a = rng.gen_range(-1.0..1.0);
            let b = rng.gen_range(-1.0..1.0);
            assert_eq!(
                induced_kernel(&p, &[a], &[b]).unwrap(),
                induced_kernel(&p, &[b], &[a]).unwrap()
            );
        }
    }

    #[test]
    fn induced_kernel_at_origin_matches_double_quadrature() {
        let p = params(1.0, 2);
        let rule = QuadratureRule::gauss_legendre(64).unwrap();
        let q: f64 = rule
            .mapped(-1.0, 1.0)
            .map(|(z1, w1)| w1 * rule.integrate(-1.0, 1.0, |z2| (-(z1 - z2) * (z1 - z2)).exp()))
            .sum();
        assert!((induced_kernel(&p, &[0.0], &[0.0]).unwrap() - q).abs() < 1e-8);
    }

    #[test]
    fn induced_kernel_matrix_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (gamma, n) in [(1.0, 2), (32.0, 2), (4.0, 3)] {
            let p = params(gamma, n);
            let pts: Vec<Vec<f64>> = (0..10)
                .map(|_| loop {
                    let v: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    if v.iter().map(|x| x * x).sum::<f64>() < 0.95 {
                        break v;
                    }
                })
                .collect();
            let k = Mat::from_fn(10, 10, |i, j| induced_kernel(&p, &pts[i], &pts[j]).unwrap());
            let ev = k.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
            assert!(ev.iter().cloned().fold(f64::INFINITY, f64::min) >= -1e-10);
        }
    }

    #[test]
    fn generator_matches_line_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rule = QuadratureRule::composite(32, 16).unwrap();
        for _ in 0..40 {
            let gamma = [1.0, 32.0, 2048.0][rng.gen_range(0..3)];
            let p = params(gamma, 2);
            let r = Orientation::planar(rng.gen_range(0.0..6.3));
            let x = [rng.gen_range(-0.99..0.99)];
            let z = loop {
                let z = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                if z[0] * z[0] + z[1] * z[1] < 1.0 {
                    break z;
                }
            };
            let w = half_chord(&x);
            let q = rule.integrate(-w, w, |t| p.eval(&z, &r.line_point(&x, t)));
            let v = backprojected_generator(&p, &r, &x, &z).unwrap();
            assert!((v - q).abs() < 1e-8, "γ={gamma}: {v} vs {q}");
        }
        let p = params(5.0, 2);
        assert_eq!(
            backprojected_generator(&p, &Orientation::planar(0.3), &[1.0], &[0.1, 0.2]).unwrap(),
            0.0
        );
    }

    #[test]
    fn generator_depends_on_projection_and_height_only() {
        // Reflecting the detector axis (x, R) -> (-x, JR) keeps both invariants.
        let p = params(7.0, 2);
        let phi = 0.8f64;
        let z = [0.3, -0.4];
        let a = backprojected_generator(&p, &Orientation::planar(phi), &[0.25], &z).unwrap();
        let r = Orientation::planar(phi);
        let rz = r.apply(&z);
        let h = rz[1];
        let b = generator_from_parts(7.0, (0.25 - rz[0]).powi(2), h, half_chord(&[0.25]));
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn same_orientation_gives_induced_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for gamma in [1.0, 32.0, 2048.0] {
            let p = params(gamma, 2);
            let r = Orientation::planar(1.1);
            let x1 = [rng.gen_range(-0.9..0.9)];
            let x2 = [rng.gen_range(-0.9..0.9)];
            let rad = relative_angle_data(&r, &r, &x1, &x2).unwrap();
            let a = cross_gram_entry(&p, &rad, &x1, &x2).unwrap();
            let b = induced_kernel(&p, &x1, &x2).unwrap();
            assert!((a - b).abs() <= 1e-14 * b.abs().max(1e-300), "{a} vs {b}");
        }
    }

    #[test]
    fn boundary_entries_vanish() {
        let p = params(2.0, 2);
        let rad = relative_angle_data(
            &Orientation::planar(0.3),
            &Orientation::planar(1.2),
            &[1.0],
            &[0.2],
        )
        .unwrap();
        assert_eq!(cross_gram_entry(&p, &rad, &[1.0], &[0.2]).unwrap(), 0.0);
    }

    #[test]
    fn constant_and_zero_kernels() {
        let rule = QuadratureRule::gauss_legendre(16).unwrap();
        let r1 = Orientation::planar(0.2);
        let r2 = Orientation::planar(2.0);
        let (x1, x2) = ([0.3], [-0.6]);
        assert_eq!(
            quadrature_gram_oracle(&|_, _| 0.0, &r1, &r2, &x1, &x2, &rule),
            0.0
        );
        let one = quadrature_gram_oracle(&|_, _| 1.0, &r1, &r2, &x1, &x2, &rule);
        assert!((one - 4.0 * half_chord(&x1) * half_chord(&x2)).abs() < 1e-13);
    }

    #[test]
    fn planar_entries_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for &gamma in &[1.0, 32.0, 2048.0] {
            let p = params(gamma, 2);
            let k = |a: &[f64], b: &[f64]| p.eval(a, b);
            for _ in 0..6 {
                let r1 = Orientation::planar(rng.gen_range(0.0..6.3));
                let r2 = Orientation::planar(rng.gen_range(0.0..6.3));
                let x1 = [rng.gen_range(-0.95..0.95)];
                let x2 = [rng.gen_range(-0.95..0.95)];
                let rad = relative_angle_data(&r1, &r2, &x1, &x2).unwrap();
                let v = cross_gram_entry(&p, &rad, &x1, &x2).unwrap();
                let o = converged_gram_oracle(&k, &r1, &r2, &x1, &x2, 8, 1e-10, 512).unwrap();
                assert!(o.converged);
                assert!((v - o.value).abs() < 1e-6, "γ={gamma}: {v} vs {}", o.value);
            }
        }
    }

    #[test]
    fn branches_join_continuously() {
        for gamma in [1.0, 32.0] {
            let p = params(gamma, 2);
            let (x1, x2) = ([0.31], [-0.12]);
            let parallel = {
                let rad = RelativeRotation::planar(0.0).data(&x1, &x2).unwrap();
                entry_from_parts(gamma, &rad, half_chord(&x1), half_chord(&x2))
            };
            for delta in [1e-4f64, 1e-5, 1e-6] {
                let rad = RelativeRotation::planar(delta).data(&x1, &x2).unwrap();
                assert!(!rad.parallel);
                let v = cross_gram_entry(&p, &rad, &x1, &x2).unwrap();
                assert!((v - parallel).abs() <= 1e-5, "w={delta}: {v} vs {parallel}");
            }
        }
    }

    #[test]
    fn three_dimensional_entries_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &gamma in &[1.0, 32.0] {
            let p = params(gamma, 3);
            let k = |a: &[f64], b: &[f64]| p.eval(a, b);
            for _ in 0..6 {
                let r1 = random_rotation(&mut rng, 3);
                let r2 = random_rotation(&mut rng, 3);
                let x1 = [rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6)];
                let x2 = [rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6)];
                let rad = relative_angle_data(&r1, &r2, &x1, &x2).unwrap();
                let v = cross_gram_entry(&p, &rad, &x1, &x2).unwrap();
                let o = converged_gram_oracle(&k, &r1, &r2, &x1, &x2, 8, 1e-10, 512).unwrap();
                assert!(o.converged);
                assert!((v - o.value).abs() < 1e-6, "γ={gamma}: {v} vs {}", o.value);
            }
        }
    }
}
