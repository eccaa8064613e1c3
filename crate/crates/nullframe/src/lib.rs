//! Numerical engine for lightlike submanifold decompositions of flat
//! semi-Riemannian spaces carrying a bronze structure and an (l,m)-type
//! connection.

pub mod cli;
pub mod connection;
pub mod exprdsl;
pub mod manifest;
pub mod semilinalg;
pub mod structure;
pub mod submanifold;
pub mod verify;
