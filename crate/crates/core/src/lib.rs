//! Bit-exact functional and cycle-level model of a systolic-array
//! accelerator for locally-coupled Kuramoto drift, with an analytical
//! design-space model and an Euler–Maruyama sampler built on top.

pub mod drift;
pub mod dse;
pub mod error;
pub mod fixedpoint;
pub mod map;
pub mod sampler;
pub mod selftest;
pub mod systolic;
pub mod trig;

pub use drift::{BoundaryPolicy, DriftField, DriftParams, QuantizedParams};
pub use error::{Error, Result};
pub use fixedpoint::{AccQ824, PhaseQ15, Saturation, Q15};
pub use map::PhaseMap;
pub use systolic::ArrayConfig;
pub use trig::QuarterWaveLut;
