//! Gradient-like flows on closed manifolds: rest points, connecting
//! trajectories, the Morse cochain complex and its comparison with
//! de Rham integration.

pub mod expr;
pub mod linalg;
pub mod scenario;
pub mod critical;
pub mod quadrature;
pub mod flow;
pub mod moduli;
pub mod complex;
pub mod derham;
pub mod report;
