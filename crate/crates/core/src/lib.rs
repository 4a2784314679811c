//! Full-waveform inversion with optimal-transport misfits.

pub mod analysis;
pub mod error;
pub mod io;
pub mod misfit1d;
pub mod monge_ampere;
pub mod normalize;
pub mod optimize;
pub mod real;
pub mod scenarios;
pub mod wave;

pub use error::{Error, Result};
pub use real::Real;

pub type Trace64 = wave::Trace<f64>;
pub type Trace32 = wave::Trace<f32>;
pub type Model64 = wave::VelocityModel<f64>;
pub type Model32 = wave::VelocityModel<f32>;
pub type Record64 = wave::ShotRecord<f64>;
pub type Record32 = wave::ShotRecord<f32>;
