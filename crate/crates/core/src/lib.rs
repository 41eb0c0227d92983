//! Triangle-consistent refinement of relative translation directions from
//! correspondence normals, with initializers, Gauss-Newton/Levenberg-Marquardt
//! baselines, synthetic instance generators and evaluation helpers.

pub mod clock;
pub mod eval;
pub mod geometry;
pub mod gnlm;
pub mod init;
pub mod rng;
pub mod scene;
pub mod synthetic;
pub mod tride;
pub mod viewgraph;

pub use geometry::{Direction, GeometryError};
pub use init::{initialize, InitMethod, InitResult};
pub use tride::{run, SweepConfig, WeightMode};
pub use viewgraph::{enumerate_triangles, TriangleIndex, ViewGraph};

/// Maps `f` over `0..m`, in parallel when enabled. Output order is index order.
pub(crate) fn map_edges<T: Send>(m: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..m).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..m).map(f).collect()
    }
}
