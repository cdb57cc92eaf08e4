//! Orientations in SO(n), Euler matrices, Euclidean projections and the
//! relative-angle quantities used by the closed-form Gram entries.
//!
//! Conventions: the projection at orientation `R` keeps the first `n - 1`
//! coordinates of `R z`; the line through detector point `x` is
//! `{ Rᵀ[x : t] : t ∈ [-W(x), W(x)] }` with `W(x) = sqrt(1 - |x|²)`.
//! For `n = 2`, `E(φ) = [[cos φ, -sin φ], [sin φ, cos φ]]`.

use faer::Mat;

use crate::error::{invalid, Error, Result};

/// Below this value of `w(r) = sqrt(1 - r²)` two orientations are treated
/// as parallel and the parallel closed form is used.
pub const PARALLEL_TOLERANCE: f64 = 1e-8;

const UNIT_TOLERANCE: f64 = 1e-12;

/// A viewing orientation `R ∈ SO(n)`.
#[derive(Clone, Debug)]
pub enum Orientation {
    /// `n = 2`: the rotation `E(angle)`.
    Planar { angle: f64 },
    /// `n ≥ 3`: an explicit rotation matrix.
    General { matrix: Mat<f64> },
}

impl Orientation {
    pub fn planar(angle: f64) -> Self {
        Orientation::Planar { angle }
    }

    /// Wraps an explicit rotation matrix, checking orthogonality and
    /// `det = 1` to within `1e-12`.
    pub fn from_matrix(matrix: Mat<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n < 2 || matrix.ncols() != n {
            return Err(invalid(format!(
                "rotation must be square with n >= 2, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let gram = &matrix * matrix.transpose();
        let dev = (&gram - Mat::<f64>::identity(n, n)).norm_max();
        if dev > UNIT_TOLERANCE * n as f64 {
            return Err(invalid(format!(
                "matrix is not orthogonal (|RRᵀ - I| = {dev:e})"
            )));
        }
        let det = matrix.determinant();
        if (det - 1.0).abs() > UNIT_TOLERANCE * n as f64 {
            return Err(invalid(format!(
                "rotation must have determinant 1, got {det}"
            )));
        }
        if n == 2 {
            return Ok(Orientation::Planar {
                angle: matrix[(1, 0)].atan2(matrix[(0, 0)]),
            });
        }
        Ok(Orientation::General { matrix })
    }

    pub fn dim(&self) -> usize {
        match self {
            Orientation::Planar { .. } => 2,
            Orientation::General { matrix } => matrix.nrows(),
        }
    }

    /// The planar angle, if this is an `n = 2` orientation.
    pub fn angle(&self) -> Option<f64> {
        match self {
            Orientation::Planar { angle } => Some(*angle),
            Orientation::General { .. } => None,
        }
    }

    pub fn matrix(&self) -> Mat<f64> {
        match self {
            Orientation::Planar { angle } => {
                let (s, c) = angle.sin_cos();
                let mut m = Mat::zeros(2, 2);
                m[(0, 0)] = c;
                m[(0, 1)] = -s;
                m[(1, 0)] = s;
                m[(1, 1)] = c;
                m
            }
            Orientation::General { matrix } => matrix.clone(),
        }
    }

    /// The rotation axis `r = Rᵀ e_n`, i.e. the last row of `R`.
    pub fn axis(&self) -> Vec<f64> {
        match self {
            Orientation::Planar { angle } => vec![angle.sin(), angle.cos()],
            Orientation::General { matrix } => {
                let n = matrix.nrows();
                (0..n).map(|k| matrix[(n - 1, k)]).collect()
            }
        }
    }

    /// `R z`.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        match self {
            Orientation::Planar { angle } => {
                let (s, c) = angle.sin_cos();
                vec![c * z[0] - s * z[1], s * z[0] + c * z[1]]
            }
            Orientation::General { matrix } => mat_vec(matrix, z),
        }
    }

    /// `Rᵀ z`.
    pub fn apply_transpose(&self, z: &[f64]) -> Vec<f64> {
        match self {
            Orientation::Planar { angle } => {
                let (s, c) = angle.sin_cos();
                vec![c * z[0] + s * z[1], -s * z[0] + c * z[1]]
            }
            Orientation::General { matrix } => mat_t_vec(matrix, z),
        }
    }

    /// Point on the line through detector point `x` at height `t`: `Rᵀ[x : t]`.
    pub fn line_point(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(x.len() + 1);
        v.extend_from_slice(x);
        v.push(t);
        self.apply_transpose(&v)
    }
}

fn mat_vec(m: &Mat<f64>, z: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|k| m[(i, k)] * z[k]).sum())
        .collect()
}

fn mat_t_vec(m: &Mat<f64>, z: &[f64]) -> Vec<f64> {
    (0..m.ncols())
        .map(|k| (0..m.nrows()).map(|i| m[(i, k)] * z[i]).sum())
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `W(x) = sqrt(max(0, 1 - |x|²))`, the half-length of the chord at `x`.
pub fn half_chord(x: &[f64]) -> f64 {
    let sq: f64 = x.iter().map(|v| v * v).sum();
    (1.0 - sq).max(0.0).sqrt()
}

/// Spherical coordinates `(φ₁, …, φ_{n-1})` of a unit vector, with
/// `φ₁ ∈ [-π, π)` and the rest in `[0, π]`. At a pole the lower angles are 0.
pub fn spherical_angles(theta: &[f64]) -> Vec<f64> {
    let n = theta.len();
    let mut angles = vec![0.0; n - 1];
    for k in (2..n).rev() {
        let lead = norm(&theta[..k]);
        angles[k - 1] = lead.atan2(theta[k]);
        if lead == 0.0 {
            return angles;
        }
    }
    let mut phi1 = theta[0].atan2(theta[1]);
    if phi1 >= std::f64::consts::PI {
        phi1 -= 2.0 * std::f64::consts::PI;
    }
    angles[0] = phi1;
    angles
}

/// `E(φ₁, …, φ_{n-1}) = R^{n-1}_{-φ_{n-1}} ⋯ R^1_{-φ₁}` as an `n × n` matrix.
fn euler_from_angles(angles: &[f64]) -> Mat<f64> {
    let n = angles.len() + 1;
    let mut m = Mat::<f64>::identity(n, n);
    for (l, &phi) in angles.iter().enumerate() {
        // R^{l+1}_{-φ} touches rows l and l + 1.
        let (s, c) = (-phi).sin_cos();
        for col in 0..n {
            let a = m[(l, col)];
            let b = m[(l + 1, col)];
            m[(l, col)] = c * a + s * b;
            m[(l + 1, col)] = -s * a + c * b;
        }
    }
    m
}

/// Euler matrix `E(θ)` of a unit vector: `E(θ)ᵀ e_n = θ`.
pub fn euler_matrix(theta: &[f64]) -> Result<Orientation> {
    if theta.len() < 2 {
        return Err(invalid("Euler matrix needs n >= 2"));
    }
    let len = norm(theta);
    if (len - 1.0).abs() > UNIT_TOLERANCE {
        return Err(invalid(format!(
            "direction must be a unit vector, |θ| = {len}"
        )));
    }
    let angles = spherical_angles(theta);
    if theta.len() == 2 {
        return Ok(Orientation::Planar { angle: angles[0] });
    }
    Ok(Orientation::General {
        matrix: euler_from_angles(&angles),
    })
}

/// Euclidean projection `P_R z`: the first `n - 1` coordinates of `R z`.
pub fn euclidean_project(r: &Orientation, z: &[f64]) -> Result<Vec<f64>> {
    let n = r.dim();
    if z.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: z.len(),
        });
    }
    let mut v = r.apply(z);
    v.truncate(n - 1);
    Ok(v)
}

/// Euclidean backprojection `P_R* x = Rᵀ[x : 0]`.
pub fn euclidean_backproject(r: &Orientation, x: &[f64]) -> Result<Vec<f64>> {
    let n = r.dim();
    if x.len() + 1 != n {
        return Err(Error::Dimension {
            expected: n - 1,
            got: x.len(),
        });
    }
    Ok(r.line_point(x, 0.0))
}

/// The rotation-only part of the relative-angle computation for a pair
/// `(R₁, R₂)`; point-dependent quantities come from [`RelativeRotation::data`].
///
/// With `Q = R₁R₂ᵀ` the Gram entry integrates `K([x₁:z₁], Q[x₂:z₂])`. The
/// decomposition is taken of `L = Qᵀ = R₂R₁ᵀ`, so that the squared distance
/// `|[x₁:z₁] - Lᵀ[x₂:z₂]|²` splits into a reduced part and a quadratic form
/// in `(z₁, z₂)` with correlation `r = e_nᵀ L e_n`.
#[derive(Clone, Debug)]
pub struct RelativeRotation {
    dim: usize,
    r: f64,
    /// `sin φ_{n-1}` of the axis `Lᵀ e_n`; may be negative only for `n = 2`.
    sine: f64,
    /// `E(r̃)` and `R̃`, both `(n-1) × (n-1)`; `None` for `n = 2`.
    reduced: Option<(Mat<f64>, Mat<f64>)>,
    /// Top-left block of `Q = R₁R₂ᵀ`, used by the parallel branch.
    q_block: Vec<f64>,
}

/// Relative-angle quantities for one pair of (orientation, mesh point).
#[derive(Clone, Debug, PartialEq)]
pub struct RelativeAngleData {
    pub r: f64,
    pub w_r: f64,
    pub reduced_x1: Vec<f64>,
    pub reduced_x2: Vec<f64>,
    pub x1r: f64,
    pub x2r: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub parallel: bool,
    /// `|x₁ - Q₁₁ x₂|²`, the exact reduced distance when parallel.
    pub parallel_dist2: f64,
}

impl RelativeAngleData {
    /// `|x̃₁ᵣ - x̃₂ᵣ|²`.
    pub fn reduced_dist2(&self) -> f64 {
        self.reduced_x1
            .iter()
            .zip(&self.reduced_x2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// The right-hand side of the distance decomposition: for the
    /// non-parallel case `|x̃₁ᵣ - x̃₂ᵣ|² + (z - μ/w)ᵀ [[1,-r],[-r,1]] (z - μ/w)`,
    /// for the parallel case `|x₁ - Q₁₁x₂|² + (z₁ - r z₂)²`.
    pub fn decomposed_dist2(&self, z1: f64, z2: f64) -> f64 {
        if self.parallel {
            return self.parallel_dist2 + (z1 - self.r * z2).powi(2);
        }
        let a = z1 - self.mu1 / self.w_r;
        let b = z2 - self.mu2 / self.w_r;
        self.reduced_dist2() + a * a - 2.0 * self.r * a * b + b * b
    }
}

impl RelativeRotation {
    pub fn new(r1: &Orientation, r2: &Orientation) -> Result<Self> {
        if r1.dim() != r2.dim() {
            return Err(Error::Dimension {
                expected: r1.dim(),
                got: r2.dim(),
            });
        }
        if let (Some(a1), Some(a2)) = (r1.angle(), r2.angle()) {
            return Ok(Self::planar(a1 - a2));
        }
        let n = r1.dim();
        let m1 = r1.matrix();
        let m2 = r2.matrix();
        let q = &m1 * m2.transpose();
        let l = q.transpose().to_owned();
        // axis u = Lᵀ e_n, the last column of Q
        let u: Vec<f64> = (0..n).map(|k| q[(k, n - 1)]).collect();
        let angles = spherical_angles(&u);
        let e_u = euler_from_angles(&angles);
        let full = &l * e_u.transpose();
        let r_tilde = Mat::from_fn(n - 1, n - 1, |i, j| full[(i, j)]);
        let e_tilde = euler_from_angles(&angles[..n - 2]);
        let q_block = (0..(n - 1) * (n - 1))
            .map(|k| q[(k / (n - 1), k % (n - 1))])
            .collect();
        Ok(RelativeRotation {
            dim: n,
            r: u[n - 1],
            sine: angles[n - 2].sin(),
            reduced: Some((e_tilde, r_tilde)),
            q_block,
        })
    }

    /// `n = 2` pair with relative angle `φ₁ - φ₂`.
    pub fn planar(delta: f64) -> Self {
        let (s, c) = delta.sin_cos();
        RelativeRotation {
            dim: 2,
            r: c,
            // L = E(-Δ) has axis (sin(-Δ), cos Δ)
            sine: -s,
            reduced: None,
            q_block: vec![c],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `r = e_nᵀ L e_n`.
    pub fn correlation(&self) -> f64 {
        self.r
    }

    /// `w(r) = sqrt(1 - r²)`.
    pub fn w(&self) -> f64 {
        self.sine.abs()
    }

    pub fn is_parallel(&self) -> bool {
        self.w() < PARALLEL_TOLERANCE
    }

    pub fn data(&self, x1: &[f64], x2: &[f64]) -> Result<RelativeAngleData> {
        let m = self.dim - 1;
        if x1.len() != m || x2.len() != m {
            return Err(Error::Dimension {
                expected: m,
                got: if x1.len() != m { x1.len() } else { x2.len() },
            });
        }
        let (reduced_x1, reduced_x2, mut x1r, mut x2r) = match &self.reduced {
            None => (Vec::new(), Vec::new(), x1[0], x2[0]),
            Some((e_tilde, r_tilde)) => {
                let y1 = mat_vec(e_tilde, x1);
                let y2 = mat_t_vec(r_tilde, x2);
                (
                    y1[..m - 1].to_vec(),
                    y2[..m - 1].to_vec(),
                    y1[m - 1],
                    y2[m - 1],
                )
            }
        };
        // For n = 2 the reduced sphere is {±1}; a negative sine is absorbed
        // into the sign of the scalar coordinates.
        if self.sine < 0.0 {
            x1r = -x1r;
            x2r = -x2r;
        }
        let r = self.r;
        let parallel_dist2 = (0..m)
            .map(|i| {
                let qx: f64 = (0..m).map(|k| self.q_block[i * m + k] * x2[k]).sum();
                (x1[i] - qx).powi(2)
            })
            .sum();
        Ok(RelativeAngleData {
            r,
            w_r: self.w(),
            reduced_x1,
            reduced_x2,
            x1r,
            x2r,
            mu1: r * x1r - x2r,
            mu2: x1r - r * x2r,
            parallel: self.is_parallel(),
            parallel_dist2,
        })
    }
}

/// Relative-angle data for `(R₁, x₁)` against `(R₂, x₂)`.
pub fn relative_angle_data(
    r1: &Orientation,
    r2: &Orientation,
    x1: &[f64],
    x2: &[f64],
) -> Result<RelativeAngleData> {
    for x in [x1, x2] {
        if norm(x) > 1.0 + UNIT_TOLERANCE {
            return Err(invalid(format!(
                "mesh point {x:?} lies outside the unit ball"
            )));
        }
    }
    RelativeRotation::new(r1, r2)?.data(x1, x2)
}

/// Direct squared distance `|[x₁:z₁] - R₁R₂ᵀ[x₂:z₂]|²`.
pub fn direct_dist2(
    r1: &Orientation,
    r2: &Orientation,
    x1: &[f64],
    z1: f64,
    x2: &[f64],
    z2: f64,
) -> f64 {
    let p1 = r1.line_point(x1, z1);
    let p2 = r2.line_point(x2, z2);
    p1.iter().zip(&p2).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Haar-distributed random rotation (Gram–Schmidt on a Gaussian matrix,
/// first column flipped if needed to make `det = 1`).
pub fn random_rotation<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> Orientation {
    if n == 2 {
        return Orientation::planar(rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
    }
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n)
            .map(|_| rng.sample(rand_distr::StandardNormal))
            .collect();
        for c in &cols {
            let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= d * b);
        }
        let l = norm(&v);
        if l < 1e-8 {
            continue;
        }
        cols.push(v.into_iter().map(|x| x / l).collect());
    }
    let mut m = Mat::from_fn(n, n, |i, j| cols[j][i]);
    if m.determinant() < 0.0 {
        for i in 0..n {
            m[(i, 0)] = -m[(i, 0)];
        }
    }
    Orientation::General { matrix: m }
}
