//! Angle grids and detector meshes.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{invalid, Error, Result};
use crate::geometry::Orientation;

/// Mesh points closer than this to the unit sphere are rejected.
pub const BOUNDARY_MARGIN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridKind {
    /// `φ_i = 2πi/N`, `i = 0..N`.
    EquiangularFull,
    /// `φ_i = πi/N`.
    EquiangularHalf,
    /// Sorted `Unif[0, π]` draws.
    Random,
    /// `(1 - λ)πU_(j) + λπ(j - 1)/N`.
    LambdaMix,
    /// Orientations supplied by the caller (any dimension).
    Custom,
}

impl GridKind {
    pub fn name(self) -> &'static str {
        match self {
            GridKind::EquiangularFull => "equiangular_full",
            GridKind::EquiangularHalf => "equiangular_half",
            GridKind::Random => "random",
            GridKind::LambdaMix => "lambda_mix",
            GridKind::Custom => "custom",
        }
    }
}

impl fmt::Display for GridKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GridKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "equiangular_full" | "full" => GridKind::EquiangularFull,
            "equiangular_half" | "equi" | "half" => GridKind::EquiangularHalf,
            "random" => GridKind::Random,
            "lambda_mix" | "lambda" => GridKind::LambdaMix,
            "custom" => GridKind::Custom,
            other => return Err(invalid(format!("unknown grid kind '{other}'"))),
        })
    }
}

/// Viewing orientations of an acquisition.
#[derive(Clone, Debug)]
pub struct AngleGrid {
    /// Planar angles in radians; empty for custom grids in `n ≥ 3`.
    pub angles: Vec<f64>,
    pub kind: GridKind,
    pub lambda: Option<f64>,
    pub seed: u64,
    orientations: Vec<Orientation>,
}

impl PartialEq for AngleGrid {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.lambda == other.lambda
            && self.seed == other.seed
            && self.angles == other.angles
            && self.orientations.len() == other.orientations.len()
            && self
                .orientations
                .iter()
                .zip(&other.orientations)
                .all(|(a, b)| a.matrix() == b.matrix())
    }
}

impl AngleGrid {
    /// Planar grid from explicit angles.
    pub fn from_angles(
        angles: Vec<f64>,
        kind: GridKind,
        lambda: Option<f64>,
        seed: u64,
    ) -> Result<Self> {
        if angles.is_empty() {
            return Err(invalid("angle grid must contain at least one angle"));
        }
        if let Some(bad) = angles.iter().find(|a| !a.is_finite()) {
            return Err(invalid(format!("non-finite angle {bad}")));
        }
        let orientations = angles.iter().map(|&a| Orientation::planar(a)).collect();
        Ok(AngleGrid {
            angles,
            kind,
            lambda,
            seed,
            orientations,
        })
    }

    /// Grid of arbitrary orientations of a common dimension.
    pub fn from_orientations(orientations: Vec<Orientation>) -> Result<Self> {
        let Some(first) = orientations.first() else {
            return Err(invalid("angle grid must contain at least one orientation"));
        };
        let n = first.dim();
        if let Some(o) = orientations.iter().find(|o| o.dim() != n) {
            return Err(Error::Dimension {
                expected: n,
                got: o.dim(),
            });
        }
        let angles = if n == 2 {
            orientations.iter().map(|o| o.angle().unwrap()).collect()
        } else {
            Vec::new()
        };
        Ok(AngleGrid {
            angles,
            kind: GridKind::Custom,
            lambda: None,
            seed: 0,
            orientations,
        })
    }

    pub fn len(&self) -> usize {
        self.orientations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orientations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.orientations[0].dim()
    }

    pub fn orientations(&self) -> &[Orientation] {
        &self.orientations
    }

    /// True when the angles are exactly `2πi/N`, the only layout for which
    /// the Gram matrix is block circulant.
    pub fn is_full_circle_equiangular(&self) -> bool {
        let n = self.angles.len();
        self.dim() == 2
            && n == self.len()
            && self
                .angles
                .iter()
                .enumerate()
                .all(|(i, &a)| (a - equiangular_full_angle(i, n)).abs() <= 1e-12)
    }
}

fn equiangular_full_angle(i: usize, n: usize) -> f64 {
    2.0 * PI * i as f64 / n as f64
}

/// Builds an angle grid. `lambda` is required for `LambdaMix` and ignored
/// (recorded as `None`) otherwise. Random draws use stream 0 of a
/// ChaCha20 generator seeded with `seed`.
pub fn make_angle_grid(
    kind: GridKind,
    n: usize,
    lambda: Option<f64>,
    seed: u64,
) -> Result<AngleGrid> {
    if n == 0 {
        return Err(invalid("number of angles must be at least 1"));
    }
    let angles: Vec<f64> = match kind {
        GridKind::EquiangularFull => (0..n).map(|i| equiangular_full_angle(i, n)).collect(),
        GridKind::EquiangularHalf => (0..n).map(|i| PI * i as f64 / n as f64).collect(),
        GridKind::Random => sorted_uniform(n, seed)
            .into_iter()
            .map(|u| PI * u)
            .collect(),
        GridKind::LambdaMix => {
            let lam = lambda.ok_or_else(|| invalid("lambda_mix grid needs a lambda value"))?;
            if !(0.0..=1.0).contains(&lam) {
                return Err(invalid(format!("lambda must lie in [0, 1], got {lam}")));
            }
            sorted_uniform(n, seed)
                .into_iter()
                .enumerate()
                .map(|(j, u)| (1.0 - lam) * PI * u + lam * PI * j as f64 / n as f64)
                .collect()
        }
        GridKind::Custom => {
            return Err(invalid("custom grids are built from explicit orientations"))
        }
    };
    let lambda = if kind == GridKind::LambdaMix {
        lambda
    } else {
        None
    };
    AngleGrid::from_angles(angles, kind, lambda, seed)
}

fn sorted_uniform(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut u: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    u.sort_by(f64::total_cmp);
    u
}

/// Detector mesh points in the open unit ball `B^{n-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorMesh {
    points: Vec<Vec<f64>>,
}

impl DetectorMesh {
    /// Validates that every point lies within `1 - BOUNDARY_MARGIN` of the origin.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let mesh = Self::new_unchecked(points)?;
        for (index, p) in mesh.points.iter().enumerate() {
            let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1.0 - BOUNDARY_MARGIN {
                return Err(Error::BoundaryMeshPoint {
                    index,
                    norm,
                    margin: BOUNDARY_MARGIN,
                });
            }
        }
        Ok(mesh)
    }

    /// Only dimension checks; boundary points are admitted.
    #[doc(hidden)]
    pub fn new_unchecked(points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(invalid("mesh must contain at least one point"));
        };
        let d = first.len();
        if d == 0 {
            return Err(invalid("mesh points must have at least one coordinate"));
        }
        if let Some(p) = points.iter().find(|p| p.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                got: p.len(),
            });
        }
        Ok(DetectorMesh { points })
    }

    /// Planar mesh from scalar detector positions.
    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Self::new(xs.iter().map(|&x| vec![x]).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Dimension `n - 1` of the detector.
    pub fn detector_dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.points[j]
    }

    /// Scalar positions of a planar mesh.
    pub fn scalars(&self) -> Option<Vec<f64>> {
        (self.detector_dim() == 1).then(|| self.points.iter().map(|p| p[0]).collect())
    }
}

/// Cell-centred planar mesh `x_j = -1 + (2j - 1)/M`, `j = 1..M`.
pub fn make_mesh(m: usize) -> Result<DetectorMesh> {
    if m == 0 {
        return Err(invalid("mesh size must be at least 1"));
    }
    let xs: Vec<f64> = (1..=m)
        .map(|j| -1.0 + (2 * j - 1) as f64 / m as f64)
        .collect();
    DetectorMesh::from_scalars(&xs)
}
