//! Shared-memory-parallel simulation of ensembles of soft slender filaments.
//!
//! Filaments are discrete elastic rods on a staggered grid (nodes carry
//! translation, elements carry orientation), integrated with position Verlet,
//! interacting through penalty contact with regularized Coulomb friction, and
//! driven by gravity, muscular traveling waves, or magnetic fields.

pub mod block;
pub mod contact;
pub mod diagnostics;
pub mod dynamics;
pub mod forcing;
pub mod frames;
pub mod kinematics;
pub mod layout_bench;
pub mod math;
pub mod output;
pub mod rng;
pub mod rod;
