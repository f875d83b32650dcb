//! Discrete-round simulator for a request-grant digital power network.
//!
//! Users ask for energy packets each round; a capacity-limited provider
//! grants or queues them under a pluggable policy. Batteries and solar
//! panels serve designated users from the queue, a genetic optimizer can
//! replace the greedy allocator, and a routing layer plans source-to-user
//! paths on a graph.
//!
//! ```
//! use dpn_core::allocation::{allocate, GreedyOrder, PendingRequest};
//!
//! let pending = [
//!     PendingRequest::fresh(0, 0.6),
//!     PendingRequest::fresh(1, 0.3),
//!     PendingRequest::fresh(2, 0.5),
//! ];
//! let result = allocate(&pending, 1.0, GreedyOrder::SmallestFirst);
//! assert_eq!(result.granted.len(), 2);
//! assert_eq!(result.newly_queued[0].user_id, 0);
//! ```

pub mod allocation;
pub mod config;
pub mod demand;
pub mod metrics;
pub mod optimizer;
pub mod rng;
pub mod routing;
pub mod sim;
pub mod storage;

pub use allocation::{allocate, AllocationPolicy, AllocationResult, GreedyOrder, PendingRequest};
pub use config::{validate_config, DemandParams, GridConfig};
pub use rng::{Concern, RngStream, RngStreams};
pub use sim::{run_replica, run_replicas, RunOutput, SimError, Simulation};
