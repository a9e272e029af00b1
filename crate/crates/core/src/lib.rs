//! Group-based coded MapReduce.
//!
//! Nodes are split into groups of `L` that receive identical dataset
//! packets. During the shuffle each group acts as one distributed
//! `L`-antenna transmitter: zero-forcing precoding separates the members of
//! a receiving group while out-of-group interference is cancelled with
//! locally mapped values. Compared with ungrouped coded MapReduce this
//! shrinks the subpacketization from `t * C(K, t)` to
//! `(t/L) * C(K/L, t/L)`.
//!
//! Modules:
//!
//! * [`planner`]: group layout, packet index space, assignment, and all
//!   closed-form subpacketization and delay quantities (exact rationals).
//! * [`mapreduce`]: datasets, decomposable jobs, map and reduce engines and
//!   a centralized oracle.
//! * [`shuffle`]: the cooperative coded shuffle over a simulated channel,
//!   coverage audit and delay accounting.
//! * [`uneven`]: zero-padding losses caused by unevenly sized intermediate
//!   values.
//! * [`pipeline`]: end-to-end orchestration used by the CLI.

pub mod linalg;
pub mod mapreduce;
pub mod pipeline;
pub mod planner;
pub mod ratio;
pub mod shuffle;
pub mod uneven;

pub use ratio::Rational;
