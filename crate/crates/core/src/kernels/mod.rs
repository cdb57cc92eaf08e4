//! Special functions, quadrature, and Gaussian-kernel closed forms.

pub mod gaussian;
pub mod quadrature;
pub mod special;

pub use gaussian::{
    backprojected_generator, converged_gram_oracle, cross_gram_entry, induced_kernel,
    quadrature_gram_oracle, GaussianKernelParams, OracleValue,
};
pub use quadrature::QuadratureRule;
pub use special::{bivariate_normal_cdf, erf, erfc, normal_cdf, phi_antiderivative};
