pub mod analysis;
pub mod boundary;
pub mod cli;
pub mod error;
pub mod lattice;
pub mod model;
pub mod montecarlo;
pub mod pde;
pub mod sigma0;
