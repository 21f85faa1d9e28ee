//! Energies of periodic point sets, spherical-design checks and local
//! optimality certificates for lattices.

pub mod calculus;
pub mod catalog;
pub mod certify;
pub mod designs;
pub mod energy;
pub mod enumeration;
pub mod error;
pub mod forms;
pub mod linalg;
pub mod optimize;
pub mod scalar;
pub mod special;

pub use error::{Error, Result};

pub type QuadForm64 = forms::QuadForm<f64>;
pub type QuadForm32 = forms::QuadForm<f32>;
pub type Form64 = forms::PeriodicForm<f64>;
pub type Form32 = forms::PeriodicForm<f32>;
