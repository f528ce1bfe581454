//! Deterministic discrete-event simulation of RF energy-harvesting sensor
//! networks.
//!
//! - [`energy`]: incident power density and residual-dependent harvesting,
//!   plus battery accounting.
//! - [`planner`]: energy tunnel construction and minimum-cost charge
//!   request planning over the tunnel grid.
//! - [`emac`]: energy/data cycle selection with duty-ratio adaptation. Also
//!   channel arbitration and overheard charging.
//! - [`routing`]: time-varying topologies, hop-count routing and joint
//!   energy-flow/data-flow route selection.
//! - [`sim`]: scenario loading and network generation. Also energy
//!   arrival processes, the event loop and its metrics output.

pub mod emac;
pub mod energy;
pub mod planner;
pub mod routing;
pub mod sim;
