//! Sample-level simulation of a differential phase shift QKD link.

pub mod analysis;
pub mod channel;
pub mod config;
pub mod error;
pub mod field;
pub mod modulation;
pub mod protocol;
pub mod receiver;
pub mod rng;
pub mod runner;
pub mod scalar;
pub mod source;

pub use error::{Error, Result};
pub use field::{OpticalField, PulseWindowing};
pub use rng::RandomStream;
pub use scalar::Scalar;

pub use config::RunConfig;
pub use protocol::{run_protocol, ProtocolMetrics, RunOutput};

pub type Field = OpticalField<f64>;
pub type Field32 = OpticalField<f32>;
pub type Windowing = PulseWindowing<f64>;
pub type Laser = source::LaserParams<f64>;
pub type Fiber = channel::FiberParams<f64>;
pub type Im = modulation::ImParams<f64>;
pub type Pm = modulation::PmParams<f64>;
pub type Dli = receiver::DliParams<f64>;
pub type SpadConfig = receiver::SpadParams<f64>;
