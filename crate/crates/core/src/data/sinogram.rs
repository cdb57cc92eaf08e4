//! Observation matrices `y_ij`: analytic simulation, noise, CSV I/O.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::data::grids::{AngleGrid, DetectorMesh, GridKind};
use crate::data::phantom::Phantom;
use crate::error::{invalid, Error, Result};

/// `N × M` projection data with the grids it was recorded on.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    /// Row-major, row `i` holds the projection at angle `i`.
    pub values: Vec<f64>,
    pub angles: AngleGrid,
    pub mesh: DetectorMesh,
    pub sigma: f64,
    pub seed: u64,
    /// Factor between stored values and unit-ball line integrals. A
    /// pixel-sum sinogram of an `M × M` image over `[-1, 1]²` has `M/2`.
    pub unit_scale: f64,
}

impl Sinogram {
    pub fn new(
        values: Vec<f64>,
        angles: AngleGrid,
        mesh: DetectorMesh,
        sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        let expected = angles.len() * mesh.len();
        if values.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: values.len(),
            });
        }
        if angles.dim() != mesh.detector_dim() + 1 {
            return Err(Error::Dimension {
                expected: angles.dim() - 1,
                got: mesh.detector_dim(),
            });
        }
        Ok(Sinogram {
            values,
            angles,
            mesh,
            sigma,
            seed,
            unit_scale: 1.0,
        })
    }

    pub fn with_unit_scale(mut self, unit_scale: f64) -> Result<Self> {
        if !(unit_scale > 0.0 && unit_scale.is_finite()) {
            return Err(invalid(format!(
                "unit scale must be positive, got {unit_scale}"
            )));
        }
        self.unit_scale = unit_scale;
        Ok(self)
    }

    /// Values and noise level divided by `unit_scale`, i.e. in line-integral
    /// units. Tikhonov and FBP reconstructions are linear, so reconstructing
    /// from this is the same as rescaling the image afterwards.
    pub fn to_unit_scale(&self) -> Sinogram {
        let s = self.unit_scale;
        Sinogram {
            values: self.values.iter().map(|v| v / s).collect(),
            sigma: self.sigma / s,
            unit_scale: 1.0,
            ..self.clone()
        }
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn n_mesh(&self) -> usize {
        self.mesh.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.n_mesh();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_mesh() + j]
    }

    /// Same grids, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        let mut out = Sinogram::new(
            values,
            self.angles.clone(),
            self.mesh.clone(),
            self.sigma,
            self.seed,
        )?;
        out.unit_scale = self.unit_scale;
        Ok(out)
    }

    /// Writes `# key: value` header lines (angles, mesh, sigma, seed, unit scale, grid,
    /// grid seed, lambda, then `extra`), followed by N rows of M values.
    pub fn to_csv(&self, extra: &[(String, String)]) -> Result<String> {
        let mesh = self
            .mesh
            .scalars()
            .ok_or_else(|| invalid("CSV export supports planar sinograms only"))?;
        let mut s = String::new();
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(s, "# angles: {}", join(&self.angles.angles));
        let _ = writeln!(s, "# mesh: {}", join(&mesh));
        let _ = writeln!(s, "# sigma: {:?}", self.sigma);
        let _ = writeln!(s, "# seed: {}", self.seed);
        let _ = writeln!(s, "# unit_scale: {:?}", self.unit_scale);
        let _ = writeln!(s, "# grid: {}", self.angles.kind);
        let _ = writeln!(s, "# grid_seed: {}", self.angles.seed);
        if let Some(l) = self.angles.lambda {
            let _ = writeln!(s, "# lambda: {l:?}");
        }
        for (k, v) in extra {
            let _ = writeln!(s, "# {k}: {v}");
        }
        for i in 0..self.n_angles() {
            s.push_str(&join(self.row(i)));
            s.push('\n');
        }
        Ok(s)
    }

    /// Parses [`Sinogram::to_csv`] output. Unknown header keys are returned
    /// alongside the sinogram.
    pub fn from_csv(text: &str) -> Result<(Sinogram, Vec<(String, String)>)> {
        let mut angles = None;
        let mut mesh = None;
        let mut sigma = 0.0;
        let mut seed = 0u64;
        let mut grid_seed = None;
        let mut unit_scale = 1.0;
        let mut kind = GridKind::Custom;
        let mut lambda = None;
        let mut extra = Vec::new();
        let mut values = Vec::new();
        let mut rows = 0usize;
        let parse_list = |v: &str| -> Result<Vec<f64>> {
            v.split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Format(format!("bad number '{t}': {e}")))
                })
                .collect()
        };
        for (ln, line) in text.lines().enumerate() {
            if let Some(rest) = line.strip_prefix('#') {
                let Some((key, value)) = rest.split_once(':') else {
                    continue;
                };
                let (key, value) = (key.trim(), value.trim());
                match key {
                    "angles" => angles = Some(parse_list(value)?),
                    "mesh" => mesh = Some(parse_list(value)?),
                    "sigma" => {
                        sigma = value
                            .parse()
                            .map_err(|e| Error::Format(format!("bad sigma '{value}': {e}")))?
                    }
                    "seed" => {
                        seed = value
                            .parse()
                            .map_err(|e| Error::Format(format!("bad seed '{value}': {e}")))?
                    }
                    "unit_scale" => {
                        unit_scale = value
                            .parse()
                            .map_err(|e| Error::Format(format!("bad unit scale '{value}': {e}")))?
                    }
                    "grid_seed" => {
                        grid_seed =
                            Some(value.parse().map_err(|e| {
                                Error::Format(format!("bad grid seed '{value}': {e}"))
                            })?)
                    }
                    "grid" => {
                        kind = value
                            .parse()
                            .map_err(|_| Error::Format(format!("unknown grid '{value}'")))?
                    }
                    "lambda" => {
                        lambda = Some(
                            value
                                .parse()
                                .map_err(|e| Error::Format(format!("bad lambda '{value}': {e}")))?,
                        )
                    }
                    _ => extra.push((key.to_string(), value.to_string())),
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let row =
                parse_list(line).map_err(|e| Error::Format(format!("line {}: {e}", ln + 1)))?;
            values.extend(row);
            rows += 1;
        }
        let angles = angles.ok_or_else(|| Error::Format("missing '# angles:' header".into()))?;
        let mesh = mesh.ok_or_else(|| Error::Format("missing '# mesh:' header".into()))?;
        if rows != angles.len() || values.len() != angles.len() * mesh.len() {
            return Err(Error::Format(format!(
                "expected {} rows of {} values, found {rows} rows and {} values",
                angles.len(),
                mesh.len(),
                values.len()
            )));
        }
        let grid = AngleGrid::from_angles(angles, kind, lambda, grid_seed.unwrap_or(seed))?;
        let mesh = DetectorMesh::from_scalars(&mesh)?;
        let sino = Sinogram::new(values, grid, mesh, sigma, seed)?
            .with_unit_scale(unit_scale)
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok((sino, extra))
    }
}

/// Analytic sinogram of `phantom` plus `N(0, σ²)` noise. Row `i` draws its
/// noise from stream `i + 1` of a ChaCha20 generator seeded with `seed`
/// (stream 0 is reserved for random angle grids).
pub fn simulate_sinogram(
    phantom: &Phantom,
    angles: &AngleGrid,
    mesh: &DetectorMesh,
    sigma: f64,
    seed: u64,
) -> Result<Sinogram> {
    simulate_scaled_sinogram(phantom, angles, mesh, 1.0, sigma, seed)
}

/// Detector-unit factor of an `m`-pixel-wide image over `[-1, 1]`: a line
/// sum over pixels of width `2/m` is `m/2` times the line integral.
pub fn pixel_unit_scale(m: usize) -> f64 {
    m as f64 / 2.0
}

/// As [`simulate_sinogram`], with clean values multiplied by `unit_scale`
/// before the noise is added.
pub fn simulate_scaled_sinogram(
    phantom: &Phantom,
    angles: &AngleGrid,
    mesh: &DetectorMesh,
    unit_scale: f64,
    sigma: f64,
    seed: u64,
) -> Result<Sinogram> {
    if angles.dim() != 2 {
        return Err(invalid("sinogram simulation is planar only"));
    }
    if !(sigma >= 0.0) {
        return Err(invalid(format!(
            "noise level must be non-negative, got {sigma}"
        )));
    }
    let xs = mesh
        .scalars()
        .ok_or_else(|| invalid("planar simulation needs a one-dimensional mesh"))?;
    let mut values = Vec::with_capacity(angles.len() * xs.len());
    for (i, &phi) in angles.angles.iter().enumerate() {
        let mut rng = noise_stream(seed, i);
        for &x in &xs {
            let clean = phantom.line_integral(phi, x);
            let eps: f64 = if sigma > 0.0 {
                rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            values.push(unit_scale * clean + sigma * eps);
        }
    }
    Sinogram::new(values, angles.clone(), mesh.clone(), sigma, seed)?.with_unit_scale(unit_scale)
}

fn noise_stream(seed: u64, row: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(row as u64 + 1);
    rng
}
