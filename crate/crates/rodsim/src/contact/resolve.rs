//! Interaction resolution: the broad phase, narrow phase, and boundary pass
//! composed into per-node forces, plus the synchronous stepping protocol that
//! evaluates them once per step at the mid-step configuration.
//!
//! Determinism: candidate pairs come out of the broad phase in sorted order,
//! the narrow phase is an order-preserving parallel map over them, and the
//! force deposits are applied serially in that same order — so the resolved
//! forces are bitwise identical for every thread count.

use std::time::Instant;

use rayon::prelude::*;

use crate::block::{BlockScratch, EnsembleStepError, RodBlock, RodMut};
use crate::dynamics::{kick, kinematic_drift, renormalize_policy, MidStep};
use crate::math::{add, dot, norm, scale, sub, Vec3};

use super::boundary::{anisotropic_friction, surface_forward, tangential_part, Boundary};
use super::grid::{GridError, HierarchicalHashGrid, SegmentProxy};
use super::narrow::{friction_force, normal_force_magnitude, segment_min_distance, ContactLaw};

/// Closer than this, two closest points are treated as coincident and the
/// contact normal is undefined; the pair is skipped for that step.
const DEGENERATE_DISTANCE: f64 = 1e-12;

/// Ensemble-level contact parameters. Stiffness and damping are derived per
/// pair from the participants' material and geometry; these factors scale
/// those derived values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionConfig {
    /// Scales the pairwise penalty stiffness `(E_a r_a + E_b r_b) / 2`.
    pub stiffness_factor: f64,
    /// Normal damping as a fraction of critical: `gamma = factor * sqrt(k m)`
    /// with `m` the mean element (or nodal) mass of the participants.
    pub damping_factor: f64,
    /// Bookkeeping margin as a fraction of the element radius: pairs with a
    /// gap below `margin_factor * radius` are recorded even when force-free.
    pub margin_factor: f64,
    /// Rod-rod friction coefficients (boundaries carry their own).
    pub mu_static: f64,
    pub mu_kinetic: f64,
    /// Slip speed below which friction is in the regularized static regime.
    /// Scale-dependent; drivers should derive it from the scenario's
    /// characteristic speed rather than rely on the default.
    pub v_stick: f64,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        Self {
            stiffness_factor: 1.0,
            damping_factor: 0.1,
            margin_factor: 0.01,
            mu_static: 0.5,
            mu_kinetic: 0.3,
            v_stick: 1e-4,
        }
    }
}

/// One rod-rod contact (or near-contact within the margin).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactRecord {
    pub rod_a: u32,
    pub elem_a: u32,
    pub rod_b: u32,
    pub elem_b: u32,
    /// Surface gap (negative = penetrating).
    pub gap: f64,
    pub normal_magnitude: f64,
    pub friction_magnitude: f64,
}

/// One node-boundary contact (or near-contact within the margin).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryContactRecord {
    pub rod: u32,
    /// Node index local to the rod.
    pub node: u32,
    pub boundary: u32,
    pub gap: f64,
    pub normal_magnitude: f64,
    pub friction_magnitude: f64,
}

/// Per-resolve counters and timings for the diagnostics stream.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InteractionDiagnostics {
    /// Broad-phase survivors handed to the narrow phase.
    pub n_candidate_pairs: usize,
    /// Contacts carrying a positive normal force (rod-rod and boundary).
    pub n_active_contacts: usize,
    /// Mean number of distinct rod partners per rod (rod-rod only).
    pub coordination_number: f64,
    pub broadphase_time_s: f64,
    /// Narrow phase plus the boundary pass.
    pub narrowphase_time_s: f64,
}

/// Mean number of distinct rod partners per rod: twice the number of distinct
/// rod pairs in force-carrying contact, over the rod count. Self-contacts do
/// not count toward the partner network.
pub fn coordination_number(records: &[ContactRecord], n_rods: usize) -> f64 {
    if n_rods == 0 {
        return 0.0;
    }
    let mut pairs: Vec<(u32, u32)> = records
        .iter()
        .filter(|r| r.normal_magnitude > 0.0 && r.rod_a != r.rod_b)
        .map(|r| {
            if r.rod_a < r.rod_b {
                (r.rod_a, r.rod_b)
            } else {
                (r.rod_b, r.rod_a)
            }
        })
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    2.0 * pairs.len() as f64 / n_rods as f64
}

/// Everything produced by one pair before deposits are applied (keeps the
/// parallel map free of shared mutable state).
struct PairOutcome {
    record: ContactRecord,
    deposits: [(usize, Vec3); 4],
}

/// Resolves rod-rod and rod-boundary interactions into nodal forces.
///
/// Owns the contact parameters, the environment boundaries, and the
/// bookkeeping from the latest [`resolve`](Self::resolve) call.
#[derive(Clone)]
pub struct InteractionEngine {
    pub config: InteractionConfig,
    pub boundaries: Vec<Boundary>,
    /// Rod-rod pairs within the margin after the latest resolve.
    pub records: Vec<ContactRecord>,
    /// Node-boundary contacts within the margin after the latest resolve.
    pub boundary_records: Vec<BoundaryContactRecord>,
    /// Net force the ensemble exerts on each boundary (latest resolve) —
    /// the load cell for walls and pistons.
    pub boundary_reactions: Vec<Vec3>,
    proxies: Vec<SegmentProxy>,
}

impl InteractionEngine {
    pub fn new(config: InteractionConfig, boundaries: Vec<Boundary>) -> Self {
        let n_boundaries = boundaries.len();
        Self {
            config,
            boundaries,
            records: Vec::new(),
            boundary_records: Vec::new(),
            boundary_reactions: vec![[0.0; 3]; n_boundaries],
            proxies: Vec::new(),
        }
    }

    /// Evaluates every interaction at the block's current configuration and
    /// accumulates the resulting forces into `forces` (node rank, not
    /// cleared here). `t` is the physical time the boundaries are queried at.
    pub fn resolve(
        &mut self,
        block: &RodBlock,
        t: f64,
        forces: &mut [Vec3],
    ) -> Result<InteractionDiagnostics, GridError> {
        let Self {
            config,
            boundaries,
            records,
            boundary_records,
            boundary_reactions,
            proxies,
        } = self;
        let config = *config;

        let spans = block.spans();
        let positions = block.positions_all();
        let velocities = block.velocities_all();
        let radius = block.radius_all();
        let rest_length = block.rest_length_all();
        assert_eq!(
            forces.len(),
            positions.len(),
            "force buffer must be node rank"
        );

        // Broad phase: wrap every element, build the grid, collect pairs.
        let t0 = Instant::now();
        proxies.clear();
        for (rod, span) in spans.iter().enumerate() {
            for k in 0..span.n_elements {
                let node = span.node_start + k;
                let r = radius[span.elem_start + k];
                proxies.push(SegmentProxy::new(
                    rod as u32,
                    k as u32,
                    positions[node],
                    positions[node + 1],
                    r,
                    config.margin_factor * r,
                ));
            }
        }
        let grid = HierarchicalHashGrid::build(proxies)?;
        let candidates = grid.candidate_pairs(proxies);
        let broadphase_time_s = t0.elapsed().as_secs_f64();

        // Narrow phase: an order-preserving parallel map over the sorted
        // candidate list; per-pair work touches no shared mutable state.
        let t1 = Instant::now();
        let proxies_ref: &[SegmentProxy] = proxies;
        let outcomes: Vec<Option<PairOutcome>> = candidates
            .par_iter()
            .map(|&(i, j)| {
                let pa = &proxies_ref[i as usize];
                let pb = &proxies_ref[j as usize];
                let cp = segment_min_distance(pa.p0, pa.p1, pb.p0, pb.p1);
                let gap = cp.distance - (pa.radius + pb.radius);
                let margin =
                    (config.margin_factor * pa.radius).max(config.margin_factor * pb.radius);
                if gap >= margin || cp.distance < DEGENERATE_DISTANCE {
                    return None;
                }
                let n_hat = scale(sub(cp.point_b, cp.point_a), 1.0 / cp.distance);

                let sa = spans[pa.rod as usize];
                let sb = spans[pb.rod as usize];
                let ia0 = sa.node_start + pa.element as usize;
                let ib0 = sb.node_start + pb.element as usize;
                let va = add(
                    scale(velocities[ia0], 1.0 - cp.param_a),
                    scale(velocities[ia0 + 1], cp.param_a),
                );
                let vb = add(
                    scale(velocities[ib0], 1.0 - cp.param_b),
                    scale(velocities[ib0 + 1], cp.param_b),
                );
                // Rate of the gap itself: positive when separating.
                let gap_rate = dot(sub(vb, va), n_hat);

                let ma = block.scalars(pa.rod as usize);
                let mb = block.scalars(pb.rod as usize);
                let stiffness = 0.5
                    * (ma.youngs_modulus * pa.radius + mb.youngs_modulus * pb.radius)
                    * config.stiffness_factor;
                let mass_a = ma.density
                    * std::f64::consts::PI
                    * pa.radius
                    * pa.radius
                    * rest_length[sa.elem_start + pa.element as usize];
                let mass_b = mb.density
                    * std::f64::consts::PI
                    * pb.radius
                    * pb.radius
                    * rest_length[sb.elem_start + pb.element as usize];
                let law = ContactLaw {
                    stiffness,
                    damping: config.damping_factor
                        * (stiffness * 0.5 * (mass_a + mass_b)).sqrt(),
                    mu_static: config.mu_static,
                    mu_kinetic: config.mu_kinetic,
                    v_stick: config.v_stick,
                };
                let normal_magnitude = normal_force_magnitude(gap, gap_rate, &law);
                let v_t = tangential_part(sub(va, vb), n_hat);
                let friction_a = friction_force(v_t, normal_magnitude, &law);
                // n_hat points from A toward B: the normal pushes A backwards.
                let force_a = add(scale(n_hat, -normal_magnitude), friction_a);
                Some(PairOutcome {
                    record: ContactRecord {
                        rod_a: pa.rod,
                        elem_a: pa.element,
                        rod_b: pb.rod,
                        elem_b: pb.element,
                        gap,
                        normal_magnitude,
                        friction_magnitude: norm(friction_a),
                    },
                    deposits: [
                        (ia0, scale(force_a, 1.0 - cp.param_a)),
                        (ia0 + 1, scale(force_a, cp.param_a)),
                        (ib0, scale(force_a, -(1.0 - cp.param_b))),
                        (ib0 + 1, scale(force_a, -cp.param_b)),
                    ],
                })
            })
            .collect();

        // Serial, ordered reduction of the deposits.
        records.clear();
        let mut n_active_contacts = 0;
        for outcome in outcomes.into_iter().flatten() {
            if outcome.record.normal_magnitude > 0.0 {
                n_active_contacts += 1;
            }
            for (node, f) in outcome.deposits {
                forces[node] = add(forces[node], f);
            }
            records.push(outcome.record);
        }

        // Boundary pass (serial; folded into the narrow-phase timing).
        boundary_records.clear();
        boundary_reactions.clear();
        boundary_reactions.resize(boundaries.len(), [0.0; 3]);
        if !boundaries.is_empty() {
            let nodal_mass = block.nodal_mass_all();
            for (rod, span) in spans.iter().enumerate() {
                let scalars = block.scalars(rod);
                let er = span.elem_range();
                let elem_radius = &radius[er];
                let n = span.n_elements;
                for local in 0..span.n_nodes() {
                    let node = span.node_start + local;
                    // A node presses on surfaces as a sphere of the mean
                    // adjacent element radius.
                    let r_node = if local == 0 {
                        elem_radius[0]
                    } else if local == n {
                        elem_radius[n - 1]
                    } else {
                        0.5 * (elem_radius[local - 1] + elem_radius[local])
                    };
                    let margin = config.margin_factor * r_node;
                    let x = positions[node];
                    let v = velocities[node];
                    // Local axis direction, for anisotropic substrates.
                    let axis = if local == 0 {
                        sub(positions[node + 1], positions[node])
                    } else if local == n {
                        sub(positions[node], positions[node - 1])
                    } else {
                        sub(positions[node + 1], positions[node - 1])
                    };
                    let stiffness =
                        scalars.youngs_modulus * r_node * config.stiffness_factor;
                    let damping =
                        config.damping_factor * (stiffness * nodal_mass[node]).sqrt();
                    for (bi, boundary) in boundaries.iter().enumerate() {
                        let law = ContactLaw {
                            stiffness,
                            damping,
                            mu_static: boundary.mu_static,
                            mu_kinetic: boundary.mu_kinetic,
                            v_stick: config.v_stick,
                        };
                        boundary.for_each_surface(x, t, r_node + margin, |n_hat, sd, vs| {
                            let gap = sd - r_node;
                            let gap_rate = dot(v, n_hat) - vs;
                            let normal_magnitude =
                                normal_force_magnitude(gap, gap_rate, &law);
                            let v_t = tangential_part(v, n_hat);
                            let friction = match (boundary.anisotropy, surface_forward(axis, n_hat))
                            {
                                (Some(aniso), Some(forward)) => anisotropic_friction(
                                    v_t,
                                    normal_magnitude,
                                    forward,
                                    &law,
                                    &aniso,
                                ),
                                _ => friction_force(v_t, normal_magnitude, &law),
                            };
                            let force = add(scale(n_hat, normal_magnitude), friction);
                            forces[node] = add(forces[node], force);
                            boundary_reactions[bi] = sub(boundary_reactions[bi], force);
                            if normal_magnitude > 0.0 {
                                n_active_contacts += 1;
                            }
                            boundary_records.push(BoundaryContactRecord {
                                rod: rod as u32,
                                node: local as u32,
                                boundary: bi as u32,
                                gap,
                                normal_magnitude,
                                friction_magnitude: norm(friction),
                            });
                        });
                    }
                }
            }
        }
        let narrowphase_time_s = t1.elapsed().as_secs_f64();

        Ok(InteractionDiagnostics {
            n_candidate_pairs: candidates.len(),
            n_active_contacts,
            coordination_number: coordination_number(records, spans.len()),
            broadphase_time_s,
            narrowphase_time_s,
        })
    }
}

/// How a synchronous step can fail.
#[derive(Debug, thiserror::Error)]
pub enum SyncStepError {
    #[error(transparent)]
    Rod(#[from] EnsembleStepError),
    #[error("contact broad phase: {0}")]
    Contact(#[from] GridError),
}

/// One position-Verlet step under the synchronous protocol: all rods drift to
/// the mid-step configuration, interactions are resolved once against that
/// frozen state, then all rods kick with the frozen interaction forces and
/// finish the drift. Reduces bitwise to the one-barrier protocol when the
/// engine produces no forces.
///
/// `interaction_forces` is a driver-owned node-rank buffer, recycled between
/// steps; `forcing` adds per-rod external loads at mid-step, keyed by rod
/// index.
#[allow(clippy::too_many_arguments)]
pub fn sync_step<F>(
    block: &mut RodBlock,
    scratch: &mut BlockScratch,
    engine: &mut InteractionEngine,
    interaction_forces: &mut Vec<Vec3>,
    grain_elements: usize,
    dt: f64,
    step: u64,
    t: f64,
    forcing: &F,
) -> Result<InteractionDiagnostics, SyncStepError>
where
    F: Fn(usize, &mut MidStep<'_>) + Sync,
{
    let h = 0.5 * dt;
    block.for_each_rod(scratch, grain_elements, &|rod: &mut RodMut<'_>| {
        kinematic_drift(
            rod.positions,
            rod.directors.reborrow(),
            rod.velocities,
            rod.angular_velocities,
            h,
        );
    });

    interaction_forces.clear();
    interaction_forces.resize(block.positions_all().len(), [0.0; 3]);
    let diagnostics = engine.resolve(block, t + h, interaction_forces)?;

    let forces: &[Vec3] = interaction_forces;
    block.try_for_each_rod(scratch, grain_elements, &|rod: &mut RodMut<'_>| {
        let rod_index = rod.rod_index;
        let slice = &forces[rod.span.node_range()];
        kick(
            rod.positions,
            rod.velocities,
            rod.directors.as_ref(),
            rod.angular_velocities,
            &rod.material,
            &mut rod.scratch,
            dt,
            step,
            |mid| {
                for (acc, f) in mid.node_force.iter_mut().zip(slice) {
                    *acc = add(*acc, *f);
                }
                forcing(rod_index, mid);
            },
        )
        .map_err(|source| EnsembleStepError { rod_index, source })
    })?;

    block.for_each_rod(scratch, grain_elements, &|rod: &mut RodMut<'_>| {
        kinematic_drift(
            rod.positions,
            rod.directors.reborrow(),
            rod.velocities,
            rod.angular_velocities,
            h,
        );
        renormalize_policy(rod.directors.reborrow(), step);
    });

    Ok(diagnostics)
}
