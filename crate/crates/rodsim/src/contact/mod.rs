//! Contact and interaction machinery: hierarchical hash-grid broad phase,
//! exact segment narrow phase with a damped-penalty + regularized-Coulomb
//! law, environment boundaries, and the synchronous stepping protocol that
//! resolves all of it once per step.

pub mod boundary;
pub mod grid;
pub mod narrow;
pub mod resolve;

pub use boundary::{
    anisotropic_friction, surface_forward, tangential_part, Boundary, BoundaryKind,
    FrictionAnisotropy, PistonMotion,
};
pub use grid::{
    exhaustive_pairs, GridError, HierarchicalHashGrid, SegmentProxy, STENCIL_EXCLUSION,
};
pub use narrow::{
    friction_force, normal_force_magnitude, segment_min_distance, ClosestPair, ContactLaw,
};
pub use resolve::{
    coordination_number, sync_step, BoundaryContactRecord, ContactRecord, InteractionConfig,
    InteractionDiagnostics, InteractionEngine, SyncStepError,
};
