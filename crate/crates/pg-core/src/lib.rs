//! Core algorithms for an evolution-style policy training system.
//!
//! The crate is split along the pipeline:
//!
//! - [`env`] — a 2D point-mass "treat fetch" world with terrain niches, a
//!   sparse fetch reward, and a success-driven spawn-radius curriculum.
//! - [`policy`] — a Gaussian MLP policy plus value network with explicit
//!   reverse-mode gradients, Adam, and a binary checkpoint codec.
//! - [`schedule`] — the BC-weight transition schedules that blend imitation
//!   and reinforcement objectives over training iterations.
//! - [`rollout`] / [`losses`] / [`train`] — rollout collection with
//!   per-terrain expert queries, GAE, the BC / PPO-style losses, their convex
//!   combination, and the child training loop.
//! - [`phylogeny`] — the DAG of trained species and the reproduction
//!   selection heuristic.
//! - [`jobs`] — the pure scheduler state machine (queue, leases, retries,
//!   exactly-once attachment) that a service layer can wrap.
//!
//! Everything here is deterministic given explicit seeds and performs no IO;
//! file formats, the HTTP service, and the CLI live in the companion `pg`
//! crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod env;
pub mod jobs;
pub mod losses;
pub mod phylogeny;
pub mod policy;
pub mod rng;
pub mod rollout;
pub mod schedule;
pub mod train;

use alloc::string::String;

/// Identifier of a terrain niche.
pub type TerrainId = String;
/// Identifier of a species node in the phylogeny.
pub type NodeId = String;
/// Identifier of a train job.
pub type JobId = String;
/// Identifier of a worker process.
pub type WorkerId = String;
