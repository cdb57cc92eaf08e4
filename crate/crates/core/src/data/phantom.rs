//! Ellipse phantoms and their analytic line integrals.

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::recon::raster::{ImageRaster, RasterSpec};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    /// Counter-clockwise rotation of the first semi-axis, radians.
    pub rotation: f64,
    pub intensity: f64,
}

impl Ellipse {
    /// Coordinates of `z` in the frame where the ellipse is the unit disk.
    fn to_unit_frame(&self, z: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        let dx = z[0] - self.center[0];
        let dy = z[1] - self.center[1];
        [
            (c * dx + s * dy) / self.semi_axes[0],
            (-s * dx + c * dy) / self.semi_axes[1],
        ]
    }

    pub fn contains(&self, z: [f64; 2]) -> bool {
        let [u, v] = self.to_unit_frame(z);
        u * u + v * v <= 1.0
    }

    /// Length of the intersection of the line `p + t·d` (|d| = 1) with the ellipse.
    pub fn chord(&self, p: [f64; 2], d: [f64; 2]) -> f64 {
        let q = self.to_unit_frame(p);
        let (s, c) = self.rotation.sin_cos();
        let e = [
            (c * d[0] + s * d[1]) / self.semi_axes[0],
            (-s * d[0] + c * d[1]) / self.semi_axes[1],
        ];
        let ee = e[0] * e[0] + e[1] * e[1];
        let qe = q[0] * e[0] + q[1] * e[1];
        let qq = q[0] * q[0] + q[1] * q[1];
        let disc = qe * qe - ee * (qq - 1.0);
        if disc <= 0.0 {
            0.0
        } else {
            2.0 * disc.sqrt() / ee
        }
    }

    /// Farthest distance from the origin of any point of the ellipse.
    pub fn max_radius(&self) -> f64 {
        // |c + A u|² over the unit circle; the maximum of a trigonometric
        // quadratic, sampled finely and then polished by a local search.
        let f = |t: f64| {
            let (s, c) = self.rotation.sin_cos();
            let (st, ct) = t.sin_cos();
            let x = self.center[0] + c * self.semi_axes[0] * ct - s * self.semi_axes[1] * st;
            let y = self.center[1] + s * self.semi_axes[0] * ct + c * self.semi_axes[1] * st;
            (x * x + y * y).sqrt()
        };
        let n = 3600;
        let (mut best_t, mut best) = (0.0, f(0.0));
        for k in 1..n {
            let t = std::f64::consts::TAU * k as f64 / n as f64;
            let v = f(t);
            if v > best {
                best = v;
                best_t = t;
            }
        }
        let mut h = std::f64::consts::TAU / n as f64;
        while h > 1e-12 {
            for t in [best_t - h, best_t + h] {
                let v = f(t);
                if v > best {
                    best = v;
                    best_t = t;
                }
            }
            h *= 0.5;
        }
        best
    }
}

/// A superposition of ellipses with a global intensity multiplier.
#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub ellipses: Vec<Ellipse>,
    pub scale: f64,
}

impl Phantom {
    pub fn new(ellipses: Vec<Ellipse>, scale: f64) -> Result<Self> {
        for (i, e) in ellipses.iter().enumerate() {
            if !(e.semi_axes[0] > 0.0 && e.semi_axes[1] > 0.0) {
                return Err(invalid(format!("ellipse {i} has non-positive semi-axes")));
            }
            let r = e.max_radius();
            if r > 1.0 + 1e-12 {
                return Err(invalid(format!(
                    "ellipse {i} reaches radius {r} outside the unit disk"
                )));
            }
        }
        Ok(Phantom { ellipses, scale })
    }

    /// A single disk of radius `radius` centred at the origin.
    pub fn disk(radius: f64, intensity: f64) -> Result<Self> {
        Self::new(
            vec![Ellipse {
                center: [0.0, 0.0],
                semi_axes: [radius, radius],
                rotation: 0.0,
                intensity,
            }],
            1.0,
        )
    }

    pub fn value(&self, z: [f64; 2]) -> f64 {
        self.scale
            * self
                .ellipses
                .iter()
                .filter(|e| e.contains(z))
                .map(|e| e.intensity)
                .sum::<f64>()
    }

    /// Line integral along `{ x·(cos φ, -sin φ) + t·(sin φ, cos φ) }`.
    pub fn line_integral(&self, angle: f64, x: f64) -> f64 {
        let (s, c) = angle.sin_cos();
        let p = [x * c, -x * s];
        let d = [s, c];
        self.scale
            * self
                .ellipses
                .iter()
                .map(|e| e.intensity * e.chord(p, d))
                .sum::<f64>()
    }

    pub fn rasterize(&self, spec: RasterSpec) -> ImageRaster {
        spec.sample(|z| self.value(z))
    }

    /// Plain-text table: a `scale <s>` line, then one
    /// `ellipse <cx> <cy> <a> <b> <rotation_deg> <intensity>` line per ellipse.
    /// `#` starts a comment.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# ellipse cx cy a b rotation_deg intensity");
        let _ = writeln!(s, "scale {:?}", self.scale);
        for e in &self.ellipses {
            let _ = writeln!(
                s,
                "ellipse {:?} {:?} {:?} {:?} {:?} {:?}",
                e.center[0],
                e.center[1],
                e.semi_axes[0],
                e.semi_axes[1],
                e.rotation.to_degrees(),
                e.intensity
            );
        }
        s
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let mut scale = 1.0;
        let mut ellipses = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or("");
            let nums: Vec<f64> = parts
                .map(|p| {
                    p.parse::<f64>().map_err(|e| {
                        Error::Format(format!("line {}: bad number '{p}': {e}", ln + 1))
                    })
                })
                .collect::<Result<_>>()?;
            match (key, nums.len()) {
                ("scale", 1) => scale = nums[0],
                ("ellipse", 6) => ellipses.push(Ellipse {
                    center: [nums[0], nums[1]],
                    semi_axes: [nums[2], nums[3]],
                    rotation: nums[4].to_radians(),
                    intensity: nums[5],
                }),
                _ => {
                    return Err(Error::Format(format!(
                        "line {}: cannot parse '{line}'",
                        ln + 1
                    )))
                }
            }
        }
        Phantom::new(ellipses, scale)
    }
}

/// `(a, b, x0, y0, rotation in degrees, intensity)` of the modified
/// (higher-contrast) Shepp–Logan table.
const SHEPP_LOGAN: [[f64; 6]; 10] = [
    [0.69, 0.92, 0.0, 0.0, 0.0, 1.0],
    [0.6624, 0.874, 0.0, -0.0184, 0.0, -0.8],
    [0.11, 0.31, 0.22, 0.0, -18.0, -0.2],
    [0.16, 0.41, -0.22, 0.0, 18.0, -0.2],
    [0.21, 0.25, 0.0, 0.35, 0.0, 0.1],
    [0.046, 0.046, 0.0, 0.1, 0.0, 0.1],
    [0.046, 0.046, 0.0, -0.1, 0.0, 0.1],
    [0.046, 0.023, -0.08, -0.605, 0.0, 0.1],
    [0.023, 0.023, 0.0, -0.606, 0.0, 0.1],
    [0.023, 0.046, 0.06, -0.605, 0.0, 0.1],
];

/// Ten-ellipse modified Shepp–Logan phantom, intensified ten times.
pub fn shepp_logan() -> Phantom {
    let ellipses = SHEPP_LOGAN
        .iter()
        .map(|r| Ellipse {
            center: [r[2], r[3]],
            semi_axes: [r[0], r[1]],
            rotation: r[4].to_radians(),
            intensity: r[5],
        })
        .collect();
    Phantom::new(ellipses, 10.0).expect("Shepp-Logan table lies in the unit disk")
}
