//! Packet-level simulation of DCTCP and Cubic flows sharing one switch
//! buffer, plus the grid/sweep/report machinery for running thousands of
//! buffer configurations.
//!
//! Layering, bottom up: [`sim`] (clock, event queue, randomness), [`net`]
//! (packets, links, topology parameters), [`qdisc`] (the shared buffer),
//! [`transport`] (senders and receivers), [`telemetry`] (snapshots and
//! summaries), [`dumbbell`] (wiring everything into one run),
//! [`experiment`], [`archive`], [`sweep`] and [`report`].

pub mod archive;
pub mod dumbbell;
pub mod experiment;
pub mod net;
pub mod qdisc;
pub mod report;
pub mod sim;
pub mod sweep;
pub mod telemetry;
pub mod transport;
pub mod units;

pub use archive::{read_archive, write_archive};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentRecord, SCHEMA_VERSION};
pub use net::{Group, NetworkConditions};
pub use qdisc::SharedBufferConfig;
pub use sim::{RandomSource, SimDuration, SimTime};
pub use sweep::{generate_grid, run_sweep, GridSpec, Preset};
pub use telemetry::ExperimentSummary;
