//! Desk-scale workbench for process-supervised reinforcement learning on a
//! program-synthesis environment.
//!
//! The pieces, bottom to top: a tiny stack-machine language ([`minilang`]),
//! procedural task generation ([`taskgen`]), a hand-rolled dense network
//! ([`net`]) wrapped into policy/value models ([`policy`]), binary-search
//! prefix labeling ([`labeler`]), a process reward model ([`prm`]), PPO
//! training with dense reward shaping ([`rl`]), and evaluation/reporting
//! ([`evalkit`]). Everything is deterministic given the seeds threaded
//! through [`rng::Stream`].

pub mod evalkit;
pub mod labeler;
pub mod minilang;
pub mod net;
pub mod policy;
pub mod prm;
pub mod rl;
pub mod rng;
pub mod taskgen;

#[cfg(any(test, feature = "testkit"))]
pub mod testkit;
