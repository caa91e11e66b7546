//! Stability, criticality and continuation analysis for a 3-DOF ship model
//! with a combined rudder/propeller thruster under proportional yaw control.

pub mod continuation;
pub mod criticality;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod linalg;
pub mod model;
pub mod params;
pub mod stability;

pub use error::{Error, Result};
pub use model::{ControlGains, ControlLaw, ExpansionData, Ship, State4};
pub use params::ShipParams;
