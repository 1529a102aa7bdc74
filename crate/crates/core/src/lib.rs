//! Normal sub-Riemannian geodesics computed from an adapted moving frame.
//!
//! A geometry is given by horizontal fields `X_1..X_n`, complementary fields
//! `Z_1..Z_l` and two Gram matrices. From these the crate builds structure
//! functions, a partial connection with its torsions, the first-order frame
//! system for normal extremals, and a coordinate Hamiltonian flow used as an
//! independent check.

pub mod connection;
pub mod dual;
pub mod expr;
pub mod extremal;
pub mod geometry;
pub mod hamiltonian;
pub mod integrate;
pub mod models;
pub mod splitting;
pub mod tensor;

pub use expr::{parse, ExprError, ExprNode};
pub use extremal::ExtremalState;
pub use geometry::{FramedGeometry, GeometryError, Gram};
pub use integrate::{IntegratorConfig, Method};
pub use tensor::Tensor3;
