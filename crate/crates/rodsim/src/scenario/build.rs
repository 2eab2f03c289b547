//! Scenario construction: places rods, assembles boundaries, forcing, and
//! the interaction engine, and (for packed scenarios) relaxes the initial
//! packing under gravity until it is quiet.
//!
//! Construction is deterministic: every random draw comes from a per-rod
//! stream of the master seed, so rod k's pose does not depend on how many
//! rods come before it, and the settling loop is fixed-step.

use rand::Rng;

use crate::block::{BlockError, BlockScratch, RodBlock};
use crate::constraint::Clamp;
use crate::contact::{
    segment_min_distance, sync_step, Boundary, BoundaryKind, FrictionAnisotropy,
    InteractionConfig, InteractionEngine, PistonMotion, SyncStepError,
};
use crate::dynamics::{damp_velocities, max_speed, stable_dt};
use crate::forcing::{add_gravity, FieldProtocol, Magnetization, MuscularWave};
use crate::math::{add, normalize, scale, sub, Vec3};
use crate::rng;
use crate::rod::Rod;
use crate::scenario::config::{FieldConfig, Protocol, ScenarioConfig, ScenarioKind};

/// Placement attempts per rod before giving up.
const PLACEMENT_BUDGET: usize = 20_000;
/// Settling convergence: max nodal speed below 1e-3*sqrt(g*L) for this many
/// consecutive steps.
const SETTLE_QUIET_STEPS: u32 = 100;
/// Settling wall: proceed (flagged unconverged) after this many
/// characteristic times sqrt(L/g).
const SETTLE_TIME_CAP: f64 = 60.0;

/// Why a scenario could not be constructed.
#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error(
        "placed {placed} of {requested} rods before the placement budget ran out \
         (enclosure too dense)"
    )]
    Placement { placed: usize, requested: usize },
    #[error("ensemble assembly failed: {0}")]
    Block(#[from] BlockError),
    #[error("instability while settling the packing: {0}")]
    Settle(#[from] SyncStepError),
}

/// The piston's bookkeeping for stress-strain recording.
#[derive(Debug, Clone)]
pub struct PistonInfo {
    /// Index into the engine's boundary list.
    pub boundary_index: usize,
    /// Face area (domain cross-section), the stress denominator.
    pub area: f64,
    /// Face start height = settled packing height, the strain denominator.
    pub start_height: f64,
    pub motion: PistonMotion,
}

/// Everything the run driver needs, with the initial state already settled
/// where the scenario calls for it.
pub struct BuiltScenario {
    pub rods: Vec<Rod>,
    pub clamps: Vec<Clamp>,
    pub engine: Option<InteractionEngine>,
    pub gravity: Option<Vec3>,
    pub wave: Option<MuscularWave>,
    /// Per-rod magnetization plus the shared laboratory field.
    pub magnets: Option<(Vec<Magnetization>, FieldProtocol)>,
    pub dt: f64,
    pub protocol: Protocol,
    pub piston: Option<PistonInfo>,
    /// Steps spent settling (deterministic), and whether the quiet criterion
    /// was met before the time cap.
    pub settle_steps: u64,
    pub settle_converged: bool,
}

/// Builds the configured scenario. `seed` is the effective master seed (CLI
/// override already applied).
pub fn build_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<BuiltScenario, BuildError> {
    let geo = &cfg.geometry;
    let radius = geo.radius();
    let scalars = cfg.material.scalars();
    let make_rod = |origin: Vec3, direction: Vec3, normal_hint: Vec3| {
        crate::rod::straight_rod(
            geo.elements_per_rod,
            geo.rod_length,
            radius,
            scalars,
            origin,
            direction,
            normal_hint,
        )
    };

    // --- Placement -------------------------------------------------------
    let mut clamps = Vec::new();
    let mut rods: Vec<Rod> = Vec::with_capacity(geo.n_rods);
    match cfg.scenario {
        ScenarioKind::FibrousPacking | ScenarioKind::ActiveMatter => {
            rods = place_random_packing(cfg, seed)?;
        }
        ScenarioKind::CiliaCarpet => {
            let [nx, ny] = geo.grid.expect("validated");
            let spacing = geo.spacing.expect("validated");
            for iy in 0..ny {
                for ix in 0..nx {
                    let base = [
                        (ix as f64 + 0.5) * spacing,
                        (iy as f64 + 0.5) * spacing,
                        0.0,
                    ];
                    rods.push(make_rod(base, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]));
                }
            }
        }
        ScenarioKind::SingleRodValidation => {
            let z0 = if cfg.boundaries.floor { radius } else { 0.0 };
            rods.push(make_rod(
                [-0.5 * geo.rod_length, 0.0, z0],
                [1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0],
            ));
        }
        ScenarioKind::Custom => {
            if geo.domain.is_some() {
                rods = place_random_packing(cfg, seed)?;
            } else {
                // A row of parallel rods along x, spaced in y.
                let gap = geo.spacing.unwrap_or(4.0 * radius);
                let z0 = if cfg.boundaries.floor { radius } else { 0.0 };
                for i in 0..geo.n_rods {
                    rods.push(make_rod(
                        [0.0, i as f64 * gap, z0],
                        [1.0, 0.0, 0.0],
                        [0.0, 0.0, 1.0],
                    ));
                }
            }
        }
    }

    // --- Forcing ---------------------------------------------------------
    let gravity = cfg.forcing.gravity;
    let wave = cfg.forcing.muscular_wave.as_ref().map(|w| MuscularWave {
        amplitude: w.amplitude,
        period: w.period,
        wavelength: w.wavelength,
        phase: w.phase,
        taper_fraction: w.taper_fraction,
    });
    let magnets = cfg.forcing.magnetics.as_ref().map(|mg| {
        let field = match &mg.field {
            FieldConfig::Constant { field } => FieldProtocol::Constant { field: *field },
            FieldConfig::Rotating {
                magnitude,
                frequency,
                axis_a,
                axis_b,
            } => FieldProtocol::Rotating {
                magnitude: *magnitude,
                frequency: *frequency,
                axis_a: normalize(*axis_a),
                axis_b: normalize(*axis_b),
            },
            FieldConfig::Table { times, fields } => FieldProtocol::Table {
                times: times.clone(),
                fields: fields.clone(),
            },
        };
        let n = geo.elements_per_rod;
        let per_rod: Vec<Magnetization> = rods
            .iter()
            .map(|rod| {
                // Phase-mapped tilt in the field plane (cilia carpets); a
                // missing map means straight axial magnetization.
                let tilt = mg.phase_wavelengths.map_or(0.0, |[wx, wy]| {
                    let base = rod.state.positions[0];
                    let mut phase = 0.0;
                    if wx > 0.0 {
                        phase += base[0] / wx;
                    }
                    if wy > 0.0 {
                        phase += base[1] / wy;
                    }
                    2.0 * std::f64::consts::PI * phase
                });
                let m = mg.moment_density;
                Magnetization {
                    moment_density: vec![[m * tilt.sin(), 0.0, m * tilt.cos()]; n],
                }
            })
            .collect();
        (per_rod, field)
    });

    // --- Boundaries and the interaction engine ---------------------------
    let mut engine = cfg.interactions.as_ref().map(|c| {
        let mut boundaries = Vec::new();
        let aniso = cfg.boundaries.friction_anisotropy.map(|[f, b, l]| {
            FrictionAnisotropy {
                forward: f,
                backward: b,
                lateral: l,
            }
        });
        if cfg.boundaries.floor {
            boundaries.push(Boundary {
                kind: BoundaryKind::HalfSpace {
                    point: [0.0, 0.0, 0.0],
                    normal: [0.0, 0.0, 1.0],
                },
                mu_static: c.mu_static,
                mu_kinetic: c.mu_kinetic,
                anisotropy: aniso,
            });
        }
        if cfg.boundaries.walls {
            let d = geo.domain.expect("validated");
            boundaries.push(Boundary {
                kind: BoundaryKind::BoxInterior {
                    min: [0.0, 0.0, 0.0],
                    max: d,
                    open_top: true,
                },
                mu_static: c.mu_static,
                mu_kinetic: c.mu_kinetic,
                anisotropy: None,
            });
        }
        InteractionEngine::new(
            InteractionConfig {
                stiffness_factor: c.stiffness_factor,
                damping_factor: c.damping_factor,
                margin_factor: c.margin_factor,
                mu_static: c.mu_static,
                mu_kinetic: c.mu_kinetic,
                v_stick: cfg.v_stick().expect("interactions are configured"),
            },
            boundaries,
        )
    });

    // --- Time step -------------------------------------------------------
    let dt = cfg.integration.dt_factor
        * rods
            .iter()
            .map(|r| stable_dt(&r.material.view()))
            .fold(f64::INFINITY, f64::min);

    // --- Settling (packed scenarios only) --------------------------------
    let mut settle_steps = 0;
    let mut settle_converged = true;
    if matches!(
        cfg.scenario,
        ScenarioKind::FibrousPacking | ScenarioKind::ActiveMatter
    ) {
        let engine_ref = engine.as_mut().expect("validated: packing has interactions");
        let g_norm = gravity
            .map(|g| g.iter().map(|x| x * x).sum::<f64>().sqrt())
            .unwrap_or(0.0);
        (settle_steps, settle_converged) =
            settle(&mut rods, engine_ref, gravity.expect("validated"), g_norm, dt, cfg)?;
    }

    // --- Piston (after settling, so the face starts at the packing top) ---
    let piston = match (&cfg.boundaries.piston, engine.as_mut()) {
        (Some(p), Some(engine)) => {
            let d = geo.domain.expect("validated");
            let top = rods
                .iter()
                .flat_map(|r| r.state.positions.iter().map(|p| p[2]))
                .fold(0.0_f64, f64::max)
                + radius;
            let motion = PistonMotion {
                amplitude: p.strain_amplitude * top,
                period: p.period,
            };
            engine.boundaries.push(Boundary {
                kind: BoundaryKind::Piston {
                    origin: [0.5 * d[0], 0.5 * d[1], top],
                    normal: [0.0, 0.0, -1.0],
                    motion,
                },
                mu_static: cfg.interactions.as_ref().expect("validated").mu_static,
                mu_kinetic: cfg.interactions.as_ref().expect("validated").mu_kinetic,
                anisotropy: None,
            });
            Some(PistonInfo {
                boundary_index: engine.boundaries.len() - 1,
                area: d[0] * d[1],
                start_height: top,
                motion,
            })
        }
        _ => None,
    };

    // Cilia are clamped at their bases.
    if cfg.scenario == ScenarioKind::CiliaCarpet {
        let block = RodBlock::build(&rods)?;
        clamps = (0..rods.len()).map(|r| Clamp::holding(&block, r)).collect();
    }

    Ok(BuiltScenario {
        rods,
        clamps,
        engine,
        gravity,
        wave,
        magnets,
        dt,
        protocol: cfg.protocol(),
        piston,
        settle_steps,
        settle_converged,
    })
}

/// Uniformly random centers and orientations inside the enclosure, resampled
/// until no pair penetrates more than 10% of the radius. Rod k draws from
/// stream k of the master seed, so its pose is independent of rod count.
fn place_random_packing(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<Rod>, BuildError> {
    let geo = &cfg.geometry;
    let d = geo.domain.expect("validated");
    let radius = geo.radius();
    let half = 0.5 * geo.rod_length;
    let scalars = cfg.material.scalars();
    let max_penetration = 0.1 * radius;

    let mut rods: Vec<Rod> = Vec::with_capacity(geo.n_rods);
    let mut endpoints: Vec<(Vec3, Vec3)> = Vec::with_capacity(geo.n_rods);
    for k in 0..geo.n_rods {
        let mut stream = rng::stream(seed, k as u64);
        let mut placed = false;
        for _ in 0..PLACEMENT_BUDGET {
            let center = [
                stream.gen_range(0.0..d[0]),
                stream.gen_range(0.0..d[1]),
                stream.gen_range(0.0..d[2]),
            ];
            // Uniform direction on the sphere.
            let z: f64 = stream.gen_range(-1.0..1.0);
            let phi = stream.gen_range(0.0..2.0 * std::f64::consts::PI);
            let rxy = (1.0 - z * z).max(0.0).sqrt();
            let u = [rxy * phi.cos(), rxy * phi.sin(), z];

            let p0 = sub(center, scale(u, half));
            let p1 = add(center, scale(u, half));
            let inside = |p: Vec3| {
                (0..3).all(|a| p[a] >= radius && p[a] <= d[a] - radius)
            };
            if !inside(p0) || !inside(p1) {
                continue;
            }
            let clear = endpoints.iter().all(|&(q0, q1)| {
                segment_min_distance(p0, p1, q0, q1).distance
                    >= 2.0 * radius - max_penetration
            });
            if !clear {
                continue;
            }
            // Keep the frame's d1 as vertical as the heading allows, so a
            // muscular wave (couple about d1) undulates in the floor plane.
            rods.push(crate::rod::straight_rod(
                geo.elements_per_rod,
                geo.rod_length,
                radius,
                scalars,
                p0,
                u,
                [0.0, 0.0, 1.0],
            ));
            endpoints.push((p0, p1));
            placed = true;
            break;
        }
        if !placed {
            return Err(BuildError::Placement {
                placed: rods.len(),
                requested: geo.n_rods,
            });
        }
    }
    Ok(rods)
}

/// Relaxes the packing under gravity (heavily damped, contacts on) until the
/// max nodal speed stays below 1e-3*sqrt(g*L) for 100 consecutive steps, or
/// the time cap passes. Returns (steps taken, converged?).
fn settle(
    rods: &mut Vec<Rod>,
    engine: &mut InteractionEngine,
    gravity: Vec3,
    g_norm: f64,
    dt: f64,
    cfg: &ScenarioConfig,
) -> Result<(u64, bool), BuildError> {
    let length = cfg.geometry.rod_length;
    let quiet_speed = 1e-3 * (g_norm * length).sqrt();
    let damping = 3.0 * (g_norm / length).sqrt();
    let cap_steps = (SETTLE_TIME_CAP * (length / g_norm).sqrt() / dt).ceil() as u64;

    let mut block = RodBlock::build(rods)?;
    let mut scratch = BlockScratch::for_block(&block);
    let mut forces = Vec::new();
    let mut quiet = 0u32;
    let mut step = 0u64;
    let converged = loop {
        if step >= cap_steps {
            break false;
        }
        sync_step(
            &mut block,
            &mut scratch,
            engine,
            &mut forces,
            crate::block::DEFAULT_GRAIN_ELEMENTS,
            dt,
            step,
            step as f64 * dt,
            &|_, mid| add_gravity(mid, gravity),
        )?;
        block.for_each_rod_serial(&mut scratch, |rod| {
            damp_velocities(rod.velocities, rod.angular_velocities, damping, dt);
        });
        step += 1;
        if max_speed(block.velocities_all()) < quiet_speed {
            quiet += 1;
            if quiet >= SETTLE_QUIET_STEPS {
                break true;
            }
        } else {
            quiet = 0;
        }
    };
    *rods = (0..block.n_rods()).map(|r| block.gather_rod(r)).collect();
    Ok((step, converged))
}
