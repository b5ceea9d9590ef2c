//! Order-picking simulation for AGV-assisted warehouses.
//!
//! The crate is organised bottom-up:
//!
//! * [`warehouse`] builds parallel-aisle layouts, samples orders and splits the
//!   floor into sectors.
//! * [`pathing`] caches all-pairs shortest paths and resolves coordinates to
//!   graph nodes.
//! * [`sim`] is the multi-agent environment (fixed ticks, travel commitments,
//!   instantaneous picks, FIFO orders).
//! * [`agent`] turns simulator state into observations, rewards and action masks.
//! * [`heuristics`] holds the Follow Me and Pick-Don't-Move baselines.
//! * [`marl`] is the shared-network actor-critic learner and its hierarchical
//!   manager/worker variant.
//! * [`config`], [`eval`] and [`bench`] back the command-line front end.

pub mod agent;
pub mod bench;
pub mod config;
pub mod error;
pub mod eval;
pub mod heuristics;
pub mod marl;
pub mod pathing;
pub mod policy;
pub mod sim;
pub mod warehouse;

pub use error::{Error, Result};
pub use pathing::{PathCache, SpatialIndex};
pub use sim::{EngineConfig, Env, Role};
pub use warehouse::{
    Location, LocationKind, NodeId, Order, OrderProfile, SectorPartition, Warehouse,
    WarehouseGraph, WorkerSpec,
};
