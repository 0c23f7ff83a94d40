//! Weighted-sum-rate resource allocation for downlink OFDMA aided by one
//! decode-and-forward relay.
//!
//! A subcarrier in the first time slot may be paired with a subcarrier in the
//! second slot for relay-aided transmission to one user; every unpaired
//! subcarrier carries a direct source-to-user transmission. Three protocols
//! are supported:
//!
//! * [`Protocol::Proposed`]: source and relay beamform on the second-slot
//!   subcarrier of a pair.
//! * [`Protocol::Benchmark1`]: the source stays silent on the second-slot
//!   subcarrier of a pair.
//! * [`Protocol::Benchmark2`]: as `Benchmark1`, with subcarrier `k` always
//!   paired with subcarrier `k`.
//!
//! The modules are layered bottom-up:
//!
//! * [`channel`] draws the geometry and frequency-selective channel gains.
//! * [`pair_gains`] solves the per-pair power split in closed form.
//! * [`assignment`] is a Hungarian maximum-weight perfect matching.
//! * [`dual`] runs the bisection dual method and recovers an allocation.
//! * [`oracle`] is an exhaustive reference optimizer for tiny instances.

pub mod assignment;
pub mod channel;
pub mod dual;
mod error;
pub mod oracle;
pub mod pair_gains;

pub use assignment::{solve_max_assignment, Assignment, SquareMatrix};
pub use channel::{build_gain_table, GainTable, Geometry, SystemConfig};
pub use dual::{
    evaluate_wsr, solve, Allocation, DirectLink, ExitMode, PairGainTable, Protocol, RelayPair, SolveReport,
    SolverOptions,
};
pub use error::{Error, Result, Violation};
pub use oracle::{oracle_solve, OracleResult};
pub use pair_gains::{LinkGains, PairSplit};
