//! Readout steering law and the heralded multiplexed-source protocol.

mod herald;
mod schedule;
mod steering;

use thiserror::Error;

use crate::geometry::{Angle2D, GeometryError};

pub use herald::{run_herald_protocol, zeta_from_p, HeraldConfig, HeraldStats};
pub use schedule::{read_schedule_csv, write_schedule_csv};
pub use steering::{compensating_readout, feasible_region, FeasibleRegion, SteeringCommand};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("target unreachable: needs readout ({}, {}) μrad", required.theta_x, required.theta_y)]
    Unreachable {
        clamped: SteeringCommand,
        required: Angle2D,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
