//! Filtered backprojection for planar parallel-beam sinograms.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::data::sinogram::Sinogram;
use crate::error::{invalid, Result};
use crate::recon::{ImageRaster, RasterSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Filter {
    /// Band-limited ramp (Ram-Lak).
    Ramp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FbpConfig {
    pub filter: Filter,
    pub interpolation: Interpolation,
    /// Rows are zero-padded to the next power of two at or above
    /// `padding · M`.
    pub padding: usize,
}

impl Default for FbpConfig {
    fn default() -> Self {
        FbpConfig {
            filter: Filter::Ramp,
            interpolation: Interpolation::Linear,
            padding: 2,
        }
    }
}

/// Uniform detector spacing, or an error for irregular meshes.
fn spacing(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(invalid(
            "filtered backprojection needs at least two detector points",
        ));
    }
    let tau = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    let uniform = xs
        .windows(2)
        .all(|p| ((p[1] - p[0]) - tau).abs() <= 1e-9 * tau.abs().max(1.0));
    if !(tau > 0.0) || !uniform {
        return Err(invalid(
            "filtered backprojection needs a uniform increasing detector mesh",
        ));
    }
    Ok(tau)
}

/// Ramp-filters every projection: linear convolution with the sampled
/// Ram-Lak kernel `h(0) = 1/(4τ²)`, `h(k) = -1/(π k τ)²` for odd `k`, via
/// a zero-padded FFT, times `τ`.
pub fn filter_rows(sino: &Sinogram, cfg: &FbpConfig) -> Result<Vec<Vec<f64>>> {
    if cfg.padding < 2 {
        return Err(invalid("FFT padding factor must be at least 2"));
    }
    let xs = sino
        .mesh
        .scalars()
        .ok_or_else(|| invalid("filtered backprojection is planar only"))?;
    let tau = spacing(&xs)?;
    let m = xs.len();
    let len = (cfg.padding * m).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);

    // kernel on offsets -(len/2)..len/2, wrapped
    let mut h: Vec<Complex64> = (0..len)
        .map(|k| {
            let off = if k <= len / 2 {
                k as i64
            } else {
                k as i64 - len as i64
            };
            let v = if off == 0 {
                1.0 / (4.0 * tau * tau)
            } else if off % 2 != 0 {
                -1.0 / (PI * off as f64 * tau).powi(2)
            } else {
                0.0
            };
            Complex64::new(v, 0.0)
        })
        .collect();
    fwd.process(&mut h);

    Ok((0..sino.n_angles())
        .into_par_iter()
        .map(|i| {
            let mut buf = vec![Complex64::new(0.0, 0.0); len];
            for (b, &y) in buf.iter_mut().zip(sino.row(i)) {
                *b = Complex64::new(y, 0.0);
            }
            fwd.process(&mut buf);
            for (b, hk) in buf.iter_mut().zip(&h) {
                *b *= hk;
            }
            inv.process(&mut buf);
            buf[..m].iter().map(|c| c.re * tau / len as f64).collect()
        })
        .collect())
}

/// FBP image on `spec`: ramp filtering, linear-interpolated backprojection
/// onto pixel centres, and the angular weight `π/N`. Detector positions
/// outside the sampled range contribute 0.
pub fn fbp_reconstruct(sino: &Sinogram, spec: RasterSpec, cfg: &FbpConfig) -> Result<ImageRaster> {
    if sino.angles.dim() != 2 {
        return Err(invalid("filtered backprojection is planar only"));
    }
    let filtered = filter_rows(sino, cfg)?;
    let xs = sino.mesh.scalars().unwrap_or_default();
    let (x0, tau) = (xs[0], spacing(&xs)?);
    let m = xs.len();
    let trig: Vec<(f64, f64)> = sino.angles.angles.iter().map(|a| a.sin_cos()).collect();
    let weight = PI / sino.n_angles() as f64;
    let p = spec.side;
    let rows: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|row| {
            (0..p)
                .map(|col| {
                    if !spec.in_mask(row, col) {
                        return 0.0;
                    }
                    let [z1, z2] = spec.pixel_center(row, col);
                    let mut acc = 0.0;
                    for (q, &(s, c)) in filtered.iter().zip(&trig) {
                        let u = (c * z1 - s * z2 - x0) / tau;
                        if u < 0.0 || u > (m - 1) as f64 {
                            continue;
                        }
                        let k = (u.floor() as usize).min(m - 2);
                        let t = u - k as f64;
                        acc += (1.0 - t) * q[k] + t * q[k + 1];
                    }
                    weight * acc
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
