//! Shared numerical kernels: addressable random streams, the standard normal
//! distribution, Cholesky factorization and randomized digital nets.

mod cholesky;
pub(crate) mod normal;
pub(crate) mod qmc;
mod rng;

pub use cholesky::{cholesky, LowerTriangular};
pub use normal::{std_normal_cdf, std_normal_inv_cdf, std_normal_pdf};
pub use qmc::{pseudo_random_points, scrambled_net, PointKind, PointSet, SobolNet};
pub use rng::{normal_vector, Purpose, RngStream, StreamId};
