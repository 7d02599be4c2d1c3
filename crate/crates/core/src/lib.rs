//! Multi-region, cell-centred finite volume solver for static magnetic
//! fields in permeable, permanently magnetised and current-carrying media.
//!
//! The unknown is the magnetic vector potential `A`, solved region by region
//! from the conservative balance law
//!
//! ```text
//! ∇²A = −μ0 [ J_f − ∇·(χ (∇A − ∇Aᵀ)) + ∇×M ]
//! ```
//!
//! with interface conditions coupling neighbouring regions through a
//! generalised surface current, iterated with a block Gauss–Seidel sweep.
//!
//! Module map:
//! - [`mesh`]: polyhedral multi-region meshes, geometry, quality, readers and generators
//! - [`field`]: cell-centred fields, materials, boundary conditions
//! - [`fvops`]: discrete operators (interpolation, gradients, Laplacian, curl)
//! - [`linalg`]: sparse systems, relaxation and iterative solvers
//! - [`magnetostatics`]: region assembly, interface coupling, outer iteration
//! - [`oracles`]: analytic reference fields and a dense direct solver
//! - [`postproc`]: sampling, interface diagnostics, VTK and CSV export
//! - [`config`] and [`case`]: case directories and the command-line driver

pub mod case;
pub mod config;
pub mod field;
pub mod fvops;
pub mod geom;
pub mod linalg;
pub mod magnetostatics;
pub mod mesh;
pub mod oracles;
pub mod postproc;

pub use geom::{Tensor, Vec3, MU0};
