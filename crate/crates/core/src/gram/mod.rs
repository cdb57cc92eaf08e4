//! Gram matrix of the backprojected generators, dense or block circulant.
//!
//! Entries are indexed by `(i, j)` with `i` the angle and `j` the mesh
//! point; the flattened index is `i·M + j`.

pub mod cache;

use faer::{Mat, Side};
use rayon::prelude::*;

use crate::data::grids::{make_angle_grid, AngleGrid, DetectorMesh, GridKind};
use crate::error::{invalid, Error, Result};
use crate::geometry::{half_chord, RelativeRotation};
use crate::kernels::gaussian::{entry_from_parts, GaussianKernelParams};

/// Relative eigenvalue cutoff below which an eigenvalue counts as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Dense,
    BlockCirculant,
}

impl Layout {
    pub fn name(self) -> &'static str {
        match self {
            Layout::Dense => "dense",
            Layout::BlockCirculant => "circulant",
        }
    }
}

#[derive(Clone, Debug)]
pub enum GramData {
    Dense(Mat<f64>),
    /// `W_0..W_{N-1}`; entry `((i, j), (i', j'))` is `[W_{(i - i') mod N}]_{j j'}`.
    Circulant(Vec<Mat<f64>>),
}

#[derive(Clone, Debug)]
pub struct GramMatrix {
    pub data: GramData,
    pub params: GaussianKernelParams,
    pub angles: AngleGrid,
    pub mesh: DetectorMesh,
}

impl GramMatrix {
    pub fn layout(&self) -> Layout {
        match self.data {
            GramData::Dense(_) => Layout::Dense,
            GramData::Circulant(_) => Layout::BlockCirculant,
        }
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn n_mesh(&self) -> usize {
        self.mesh.len()
    }

    /// `NM`.
    pub fn size(&self) -> usize {
        self.n_angles() * self.n_mesh()
    }

    /// Circulant blocks, if this is a circulant layout.
    pub fn blocks(&self) -> Option<&[Mat<f64>]> {
        match &self.data {
            GramData::Circulant(b) => Some(b),
            GramData::Dense(_) => None,
        }
    }

    /// Entry `((i, j), (i', j'))`.
    pub fn entry(&self, i: usize, j: usize, ip: usize, jp: usize) -> f64 {
        let m = self.n_mesh();
        match &self.data {
            GramData::Dense(w) => w[(i * m + j, ip * m + jp)],
            GramData::Circulant(b) => {
                let n = b.len();
                b[(i + n - ip) % n][(j, jp)]
            }
        }
    }

    /// The full `NM × NM` matrix.
    pub fn to_dense(&self) -> Mat<f64> {
        match &self.data {
            GramData::Dense(w) => w.clone(),
            GramData::Circulant(_) => {
                let m = self.n_mesh();
                Mat::from_fn(self.size(), self.size(), |a, b| {
                    self.entry(a / m, a % m, b / m, b % m)
                })
            }
        }
    }

    /// `W v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let nm = self.size();
        assert_eq!(v.len(), nm);
        match &self.data {
            GramData::Dense(w) => (0..nm)
                .map(|a| (0..nm).map(|b| w[(a, b)] * v[b]).sum())
                .collect(),
            GramData::Circulant(blocks) => {
                let n = blocks.len();
                let m = self.n_mesh();
                let mut out = vec![0.0; nm];
                for i in 0..n {
                    for ip in 0..n {
                        let blk = &blocks[(i + n - ip) % n];
                        for j in 0..m {
                            let mut acc = 0.0;
                            for jp in 0..m {
                                acc += blk[(j, jp)] * v[ip * m + jp];
                            }
                            out[i * m + j] += acc;
                        }
                    }
                }
                out
            }
        }
    }

    /// `vᵀ W v`, the squared RKHS norm of `Σ v_ij P*_{R_i} k̃_{x_j}`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        self.apply(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

fn check_mesh(
    params: &GaussianKernelParams,
    angles: &AngleGrid,
    mesh: &DetectorMesh,
) -> Result<()> {
    if angles.dim() != params.dim {
        return Err(Error::Dimension {
            expected: params.dim,
            got: angles.dim(),
        });
    }
    if mesh.detector_dim() + 1 != params.dim {
        return Err(Error::Dimension {
            expected: params.dim - 1,
            got: mesh.detector_dim(),
        });
    }
    // re-validate: meshes built through the unchecked hook may hold boundary points
    DetectorMesh::new(mesh.points().to_vec()).map(|_| ())
}

/// Block `(i, i')` of the Gram matrix for a given relative rotation.
fn block(
    gamma: f64,
    rel: &RelativeRotation,
    mesh: &DetectorMesh,
    halves: &[f64],
    symmetric: bool,
) -> Mat<f64> {
    let m = mesh.len();
    let mut out = Mat::<f64>::zeros(m, m);
    for j in 0..m {
        let start = if symmetric { j } else { 0 };
        for jp in start..m {
            let rad = rel
                .data(mesh.point(j), mesh.point(jp))
                .expect("mesh dimensions were checked");
            let v = entry_from_parts(gamma, &rad, halves[j], halves[jp]);
            out[(j, jp)] = v;
            if symmetric {
                out[(jp, j)] = v;
            }
        }
    }
    out
}

/// Dense assembly over an arbitrary grid. Mesh points within
/// `BOUNDARY_MARGIN` of the unit sphere are rejected.
pub fn assemble_dense(
    params: &GaussianKernelParams,
    angles: &AngleGrid,
    mesh: &DetectorMesh,
) -> Result<GramMatrix> {
    check_mesh(params, angles, mesh)?;
    Ok(assemble_dense_unchecked(params, angles, mesh))
}

/// Dense assembly that admits boundary mesh points. Only for tests of the
/// rank-deficient case.
#[doc(hidden)]
pub fn assemble_dense_unchecked(
    params: &GaussianKernelParams,
    angles: &AngleGrid,
    mesh: &DetectorMesh,
) -> GramMatrix {
    let n = angles.len();
    let m = mesh.len();
    let halves: Vec<f64> = mesh.points().iter().map(|p| half_chord(p)).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |ip| (i, ip))).collect();
    let orient = angles.orientations();
    let blocks: Vec<Mat<f64>> = pairs
        .par_iter()
        .map(|&(i, ip)| {
            let rel = RelativeRotation::new(&orient[i], &orient[ip])
                .expect("grid dimensions were checked");
            block(params.gamma, &rel, mesh, &halves, i == ip)
        })
        .collect();
    let mut w = Mat::<f64>::zeros(n * m, n * m);
    for (&(i, ip), b) in pairs.iter().zip(&blocks) {
        for j in 0..m {
            for jp in 0..m {
                w[(i * m + j, ip * m + jp)] = b[(j, jp)];
                w[(ip * m + jp, i * m + j)] = b[(j, jp)];
            }
        }
    }
    GramMatrix {
        data: GramData::Dense(w),
        params: *params,
        angles: angles.clone(),
        mesh: mesh.clone(),
    }
}

/// Circulant assembly for the full-circle grid `φ_i = 2πi/N` (`n = 2`).
/// Only `W_0..W_{⌊N/2⌋}` are evaluated; the rest follow from `W_{N-d} = W_dᵀ`.
pub fn assemble_circulant(
    params: &GaussianKernelParams,
    n_angles: usize,
    mesh: &DetectorMesh,
) -> Result<GramMatrix> {
    if params.dim != 2 {
        return Err(invalid(
            "the block-circulant layout exists only for planar grids",
        ));
    }
    let angles = make_angle_grid(GridKind::EquiangularFull, n_angles, None, 0)?;
    check_mesh(params, &angles, mesh)?;
    let halves: Vec<f64> = mesh.points().iter().map(|p| half_chord(p)).collect();
    let n = n_angles;
    let half: Vec<usize> = (0..=n / 2).collect();
    let computed: Vec<Mat<f64>> = half
        .par_iter()
        .map(|&d| {
            let rel = RelativeRotation::planar(angles.angles[d]);
            let b = block(params.gamma, &rel, mesh, &halves, false);
            // Each block is symmetric for the planar Gaussian; average out rounding.
            Mat::from_fn(b.nrows(), b.ncols(), |a, c| 0.5 * (b[(a, c)] + b[(c, a)]))
        })
        .collect();
    let blocks: Vec<Mat<f64>> = (0..n)
        .map(|d| {
            if d <= n / 2 {
                computed[d].clone()
            } else {
                computed[n - d].transpose().to_owned()
            }
        })
        .collect();
    Ok(GramMatrix {
        data: GramData::Circulant(blocks),
        params: *params,
        angles,
        mesh: mesh.clone(),
    })
}

/// Convenience: circulant assembly whenever the grid allows it, dense otherwise.
pub fn assemble(
    params: &GaussianKernelParams,
    angles: &AngleGrid,
    mesh: &DetectorMesh,
) -> Result<GramMatrix> {
    if params.dim == 2 && angles.is_full_circle_equiangular() {
        assemble_circulant(params, angles.len(), mesh)
    } else {
        assemble_dense(params, angles, mesh)
    }
}

/// Spectrum summary of a symmetric PSD matrix.
#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Smallest eigenvalue above `RANK_TOLERANCE · λ_max`.
    pub d: f64,
    pub lambda_max: f64,
    /// All eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
}

pub fn spectrum_of(w: &Mat<f64>) -> Result<Spectrum> {
    let ev = w
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let mut eigenvalues: Vec<f64> = ev.to_vec();
    eigenvalues.sort_by(f64::total_cmp);
    let lambda_max = eigenvalues.last().copied().unwrap_or(0.0);
    if !(lambda_max > 0.0) {
        return Err(Error::RankZero);
    }
    let cut = RANK_TOLERANCE * lambda_max;
    let nonzero: Vec<f64> = eigenvalues.iter().copied().filter(|&l| l > cut).collect();
    Ok(Spectrum {
        d: nonzero[0],
        lambda_max,
        rank: nonzero.len(),
        eigenvalues,
    })
}

/// Smallest non-zero eigenvalue `d` of `W`, with the full spectrum.
pub fn smallest_nonzero_eigenvalue(w: &GramMatrix) -> Result<Spectrum> {
    spectrum_of(&w.to_dense())
}
