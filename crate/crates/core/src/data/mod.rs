//! Phantoms, angle grids, detector meshes and simulated sinograms.

pub mod grids;
pub mod phantom;
pub mod sinogram;

pub use grids::{make_angle_grid, make_mesh, AngleGrid, DetectorMesh, GridKind, BOUNDARY_MARGIN};
pub use phantom::{shepp_logan, Ellipse, Phantom};
pub use sinogram::{pixel_unit_scale, simulate_scaled_sinogram, simulate_sinogram, Sinogram};
