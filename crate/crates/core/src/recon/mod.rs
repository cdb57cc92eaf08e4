//! Evaluating reconstructions, interpolating their sinograms, and checking
//! the moment conditions of the interpolant.

pub mod raster;

use std::f64::consts::PI;

use rayon::prelude::*;

pub use raster::{ImageRaster, RasterSpec};

use crate::error::{invalid, Error, Result};
use crate::geometry::{half_chord, Orientation, RelativeRotation};
use crate::kernels::gaussian::{entry_from_parts, generator_from_parts};
use crate::kernels::quadrature::QuadratureRule;
use crate::solve::CoefficientField;

/// Generator terms with `γ |x_j - (Rz)₁|² > PRUNE_EXPONENT` are skipped
/// (their weight is below `e^{-50}` of the peak).
pub const PRUNE_EXPONENT: f64 = 50.0;

/// Planar mesh sorted by coordinate, so the terms near a projected point are
/// found by binary search.
struct SortedMesh {
    xs: Vec<f64>,
    order: Vec<usize>,
    halfw: Vec<f64>,
}

impl SortedMesh {
    fn new(coeffs: &CoefficientField) -> Option<Self> {
        let raw = coeffs.mesh.scalars()?;
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
        let xs: Vec<f64> = order.iter().map(|&j| raw[j]).collect();
        let halfw = xs.iter().map(|&x| half_chord(&[x])).collect();
        Some(SortedMesh { xs, order, halfw })
    }

    fn window(&self, centre: f64, radius: f64) -> std::ops::Range<usize> {
        let lo = self.xs.partition_point(|&x| x < centre - radius);
        let hi = self.xs.partition_point(|&x| x <= centre + radius);
        lo..hi
    }
}

/// `f̂(z) = Σ α_ij P_{R_i}k_z(x_j)` at a single point of the ball.
pub fn evaluate_at(coeffs: &CoefficientField, z: &[f64]) -> Result<f64> {
    let n = coeffs.params.dim;
    if z.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: z.len(),
        });
    }
    if let Some(mesh) = SortedMesh::new(coeffs) {
        return Ok(eval_planar(coeffs, &mesh, [z[0], z[1]]));
    }
    let gamma = coeffs.params.gamma;
    let mut acc = 0.0;
    for (i, r) in coeffs.angles.orientations().iter().enumerate() {
        let rz = r.apply(z);
        for (j, x) in coeffs.mesh.points().iter().enumerate() {
            let a = coeffs.get(i, j);
            if a == 0.0 {
                continue;
            }
            let d2: f64 = x
                .iter()
                .zip(&rz[..n - 1])
                .map(|(p, q)| (p - q) * (p - q))
                .sum();
            acc += a * generator_from_parts(gamma, d2, rz[n - 1], half_chord(x));
        }
    }
    Ok(acc)
}

fn eval_planar(coeffs: &CoefficientField, mesh: &SortedMesh, z: [f64; 2]) -> f64 {
    let gamma = coeffs.params.gamma;
    let radius = (PRUNE_EXPONENT / gamma).sqrt();
    let m = coeffs.n_mesh();
    let mut acc = 0.0;
    for (i, r) in coeffs.angles.orientations().iter().enumerate() {
        let rz = r.apply(&z);
        let row = &coeffs.alpha[i * m..(i + 1) * m];
        for k in mesh.window(rz[0], radius) {
            let a = row[mesh.order[k]];
            if a != 0.0 {
                let d = mesh.xs[k] - rz[0];
                acc += a * generator_from_parts(gamma, d * d, rz[1], mesh.halfw[k]);
            }
        }
    }
    acc
}

/// Samples `f̂` at the unmasked pixel centres of `spec`, in parallel over
/// raster rows.
pub fn evaluate_reconstruction(coeffs: &CoefficientField, spec: RasterSpec) -> Result<ImageRaster> {
    let mesh =
        SortedMesh::new(coeffs).ok_or_else(|| invalid("raster evaluation is planar only"))?;
    let p = spec.side;
    let rows: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|row| {
            (0..p)
                .map(|col| {
                    if spec.in_mask(row, col) {
                        eval_planar(coeffs, &mesh, spec.pixel_center(row, col))
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let mut out = ImageRaster::zeros(spec);
    for (row, vals) in rows.into_iter().enumerate() {
        out.values[row * p..(row + 1) * p].copy_from_slice(&vals);
    }
    Ok(out)
}

/// Precomputed relative rotations of a probe orientation against every
/// acquisition angle.
pub struct SinogramInterpolant<'a> {
    coeffs: &'a CoefficientField,
    relative: Vec<RelativeRotation>,
}

impl<'a> SinogramInterpolant<'a> {
    pub fn new(coeffs: &'a CoefficientField, r: &Orientation) -> Result<Self> {
        if r.dim() != coeffs.params.dim {
            return Err(Error::Dimension {
                expected: coeffs.params.dim,
                got: r.dim(),
            });
        }
        let relative = coeffs
            .angles
            .orientations()
            .iter()
            .map(|ri| RelativeRotation::new(r, ri))
            .collect::<Result<_>>()?;
        Ok(SinogramInterpolant { coeffs, relative })
    }

    /// `P_R f̂(x) = Σ α_ij ⟨P*_R k̃_x, P*_{R_i} k̃_{x_j}⟩`.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 + 1e-12 {
            return Err(invalid(format!(
                "detector point {x:?} lies outside the unit ball"
            )));
        }
        let w1 = half_chord(x);
        if w1 == 0.0 {
            return Ok(0.0);
        }
        let gamma = self.coeffs.params.gamma;
        let mut acc = 0.0;
        for (i, rel) in self.relative.iter().enumerate() {
            for (j, xj) in self.coeffs.mesh.points().iter().enumerate() {
                let a = self.coeffs.get(i, j);
                if a == 0.0 {
                    continue;
                }
                let rad = rel.data(x, xj)?;
                acc += a * entry_from_parts(gamma, &rad, w1, half_chord(xj));
            }
        }
        Ok(acc)
    }
}

/// Interpolated projection `P_R f̂(x)` at an arbitrary orientation and
/// detector point.
pub fn interpolate_sinogram(coeffs: &CoefficientField, r: &Orientation, x: &[f64]) -> Result<f64> {
    SinogramInterpolant::new(coeffs, r)?.value(x)
}

/// Moment deviations for one degree `l`.
#[derive(Clone, Debug)]
pub struct MomentRow {
    pub degree: usize,
    /// `m_l(R)` per probe, from the interpolated sinogram.
    pub sinogram_moments: Vec<f64>,
    /// `q_l(P_R*1)` per probe, from the image moments of `f̂`.
    pub image_moments: Vec<f64>,
    pub max_abs_deviation: f64,
    /// Normaliser: the largest `∫|x|^l |P_R f̂(x)| dx` over the probes.
    pub scale: f64,
    pub relative_deviation: f64,
}

#[derive(Clone, Debug)]
pub struct HlccReport {
    pub rows: Vec<MomentRow>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Default relative tolerance of [`hlcc_moment_check`].
pub const HLCC_TOLERANCE: f64 = 1e-3;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Compares the degree-`l` sinogram moments `∫ x^l P_R f̂(x) dx` against the
/// homogeneous polynomial `q_l(c, -s) = ∫ ((c, -s)·z)^l f̂(z) dz` of the
/// projection direction, for each probe and `l ≤ degree_max`.
///
/// Sinogram moments use `rule` after the substitution `x = sin θ`; image
/// moments use `rule` radially and a `4·order`-point trapezoid in angle over
/// the unit disk.
pub fn hlcc_moment_check(
    coeffs: &CoefficientField,
    degree_max: usize,
    probes: &[Orientation],
    rule: &QuadratureRule,
    tolerance: f64,
) -> Result<HlccReport> {
    if coeffs.params.dim != 2 {
        return Err(invalid(
            "moment check is implemented for planar reconstructions",
        ));
    }
    if degree_max > 4 {
        return Err(invalid("moment degree is limited to 4"));
    }
    if probes.is_empty() {
        return Err(invalid("moment check needs at least one probe orientation"));
    }
    let mesh = SortedMesh::new(coeffs).ok_or_else(|| invalid("planar mesh expected"))?;

    // μ_{a,b} = ∫ z₁^a z₂^b f̂(z) dz for a + b ≤ degree_max
    let n_theta = 4 * rule.order;
    let radial: Vec<(f64, f64)> = rule.mapped(0.0, 1.0).collect();
    let points: Vec<(f64, f64, f64)> = (0..n_theta)
        .flat_map(|k| {
            let t = 2.0 * PI * k as f64 / n_theta as f64;
            let (s, c) = t.sin_cos();
            radial
                .iter()
                .map(move |&(r, w)| (r * c, r * s, w * r * 2.0 * PI / n_theta as f64))
        })
        .collect();
    let values: Vec<f64> = points
        .par_iter()
        .map(|&(a, b, _)| eval_planar(coeffs, &mesh, [a, b]))
        .collect();
    let mut mu = vec![vec![0.0; degree_max + 1]; degree_max + 1];
    for (&(a, b, w), f) in points.iter().zip(&values) {
        for (p, row) in mu.iter_mut().enumerate() {
            for (q, m) in row.iter_mut().enumerate().take(degree_max + 1 - p) {
                *m += w * f * a.powi(p as i32) * b.powi(q as i32);
            }
        }
    }

    let nodes: Vec<(f64, f64)> = rule
        .mapped(-PI / 2.0, PI / 2.0)
        .map(|(t, w)| (t.sin(), w * t.cos()))
        .collect();
    let mut sino = vec![vec![0.0; probes.len()]; degree_max + 1];
    let mut absm = vec![vec![0.0; probes.len()]; degree_max + 1];
    let mut image = vec![vec![0.0; probes.len()]; degree_max + 1];
    let per_probe: Vec<Vec<f64>> = probes
        .par_iter()
        .map(|r| {
            let interp = SinogramInterpolant::new(coeffs, r)?;
            nodes.iter().map(|&(x, _)| interp.value(&[x])).collect()
        })
        .collect::<Result<_>>()?;
    for (pi, (r, vals)) in probes.iter().zip(&per_probe).enumerate() {
        let phi = r.angle().ok_or_else(|| invalid("planar probe expected"))?;
        let (c, s) = (phi.cos(), -phi.sin());
        for l in 0..=degree_max {
            for (&(x, w), v) in nodes.iter().zip(vals) {
                let xl = x.powi(l as i32);
                sino[l][pi] += w * xl * v;
                absm[l][pi] += w * (xl * v).abs();
            }
            image[l][pi] = (0..=l)
                .map(|k| binomial(l, k) * c.powi(k as i32) * s.powi((l - k) as i32) * mu[k][l - k])
                .sum();
        }
    }
    let rows: Vec<MomentRow> = (0..=degree_max)
        .map(|l| {
            let max_abs_deviation = sino[l]
                .iter()
                .zip(&image[l])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let scale = absm[l].iter().copied().fold(0.0, f64::max);
            let relative_deviation = if scale > 0.0 {
                max_abs_deviation / scale
            } else {
                max_abs_deviation
            };
            MomentRow {
                degree: l,
                sinogram_moments: sino[l].clone(),
                image_moments: image[l].clone(),
                max_abs_deviation,
                scale,
                relative_deviation,
            }
        })
        .collect();
    let passed = rows.iter().all(|r| r.relative_deviation <= tolerance);
    Ok(HlccReport {
        rows,
        tolerance,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::grids::{make_angle_grid, make_mesh, GridKind};
    use crate::gram::assemble_dense;
    use crate::kernels::gaussian::{backprojected_generator, GaussianKernelParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field(gamma: f64, n: usize, m: usize, seed: u64) -> CoefficientField {
        let p = GaussianKernelParams::new(gamma, 2).unwrap();
        let g = make_angle_grid(GridKind::Random, n, None, seed).unwrap();
        let mesh = make_mesh(m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha = (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        CoefficientField::new(alpha, p, g, mesh).unwrap()
    }

    #[test]
    fn zero_coefficients_give_zero_raster() {
        let mut f = field(8.0, 3, 5, 1);
        f.alpha.iter_mut().for_each(|a| *a = 0.0);
        let img = evaluate_reconstruction(&f, RasterSpec::new(16).unwrap()).unwrap();
        assert!(img.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_coefficient_is_the_generator() {
        let mut f = field(32.0, 3, 6, 2);
        f.alpha.iter_mut().for_each(|a| *a = 0.0);
        f.alpha[1 * 6 + 2] = 1.0;
        let spec = RasterSpec::new(24).unwrap();
        let img = evaluate_reconstruction(&f, spec).unwrap();
        let r = &f.angles.orientations()[1];
        let x = f.mesh.point(2).to_vec();
        for row in 0..24 {
            for col in 0..24 {
                let k = row * 24 + col;
                if !img.mask[k] {
                    assert_eq!(img.values[k], 0.0);
                    continue;
                }
                let z = spec.pixel_center(row, col);
                let want = backprojected_generator(&f.params, r, &x, &z).unwrap();
                assert!((img.values[k] - want).abs() < 1e-14 + 1e-20f64.max(want.abs() * 1e-12));
            }
        }
    }

    #[test]
    fn pruning_matches_full_sum() {
        let f = field(2048.0, 4, 30, 3);
        let mesh = SortedMesh::new(&f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let z = [rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7)];
            let mut full = 0.0;
            for (i, r) in f.angles.orientations().iter().enumerate() {
                for j in 0..30 {
                    full += f.get(i, j)
                        * backprojected_generator(&f.params, r, f.mesh.point(j), &z).unwrap();
                }
            }
            assert!((eval_planar(&f, &mesh, z) - full).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolant_reproduces_gram_rows() {
        let f = field(16.0, 4, 7, 4);
        let w = assemble_dense(&f.params, &f.angles, &f.mesh).unwrap();
        let wa = w.apply(&f.alpha);
        for (i, r) in f.angles.orientations().iter().enumerate() {
            for j in 0..7 {
                let v = interpolate_sinogram(&f, r, f.mesh.point(j)).unwrap();
                assert!((v - wa[i * 7 + j]).abs() < 1e-10);
            }
        }
        let r = Orientation::planar(0.3);
        assert_eq!(interpolate_sinogram(&f, &r, &[1.0]).unwrap(), 0.0);
        assert!(interpolate_sinogram(&f, &r, &[1.5]).is_err());
    }

    #[test]
    fn zero_field_has_zero_moments() {
        let mut f = field(8.0, 3, 6, 5);
        f.alpha.iter_mut().for_each(|a| *a = 0.0);
        let probes = [Orientation::planar(0.1), Orientation::planar(2.0)];
        let rep = hlcc_moment_check(
            &f,
            2,
            &probes,
            &QuadratureRule::gauss_legendre(32).unwrap(),
            1e-3,
        )
        .unwrap();
        for row in &rep.rows {
            assert!(row
                .sinogram_moments
                .iter()
                .chain(&row.image_moments)
                .all(|&m| m == 0.0));
        }
        assert!(rep.passed);
    }

    #[test]
    fn moments_agree_on_small_field() {
        let f = field(8.0, 5, 8, 6);
        let probes: Vec<_> = [0.2, 1.1, 2.5, 3.9, 5.6]
            .iter()
            .map(|&a| Orientation::planar(a))
            .collect();
        let rep = hlcc_moment_check(
            &f,
            2,
            &probes,
            &QuadratureRule::gauss_legendre(64).unwrap(),
            1e-3,
        )
        .unwrap();
        assert!(rep.passed, "{rep:?}");
    }
}
