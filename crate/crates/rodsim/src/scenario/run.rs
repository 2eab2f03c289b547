//! The scenario driver: owns the step loop and barrier schedule, applies
//! constraints and damping, watches for instability, and writes every output
//! at barriers (single-threaded orchestration; parallel regions live inside
//! the stepping calls).
//!
//! Determinism: for a fixed (config, seed, thread count) the diagnostics
//! rows are bitwise reproducible, and they stay bitwise identical across
//! thread counts because interaction deposits are order-preserving. The only
//! non-reproducible outputs are the wall-clock timing columns, which live in
//! a separate performance file (`contacts.csv`), never in `diagnostics.csv`.

use std::path::{Path, PathBuf};

use crate::block::{BlockScratch, RodBlock, DEFAULT_GRAIN_ELEMENTS};
use crate::constraint::apply_clamps;
use crate::contact::{sync_step, InteractionDiagnostics};
use crate::diagnostics::{alignment_order, centered_average, orientation_histogram, planar_angle};
use crate::dynamics::{
    check_stability, damp_velocities, instability_speed_limit, max_speed,
    mechanical_energy_parts, EnergyBreakdown,
};
use crate::forcing::add_gravity;
use crate::math::{add, scale, sub, Vec3};
use crate::output::{write_snapshot, Csv, OutputError, Value};
use crate::rod::Rod;
use crate::scenario::build::{build_scenario, BuildError, BuiltScenario};
use crate::scenario::config::{Protocol, ScenarioConfig, ScenarioKind};

/// Command-line overrides layered over the file values.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub protocol: Option<Protocol>,
    pub output: Option<PathBuf>,
}

/// Why a run ended without completing.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("run went unstable at step {step} (t = {time:.6e}): {detail}")]
    Instability { step: u64, time: f64, detail: String },
    #[error(transparent)]
    Io(#[from] OutputError),
}

/// Orientation histogram bin count for the final-period distribution.
const HISTOGRAM_BINS: usize = 32;
/// Steps between instability checks.
const WATCHDOG_STRIDE: u64 = 100;

/// A completed run: the numeric mirror of `diagnostics.csv` plus derived
/// series, for callers that analyze in-process.
pub struct RunSummary {
    pub steps: u64,
    pub final_time: f64,
    pub dt: f64,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
    /// Centered moving average of the order parameter (active matter).
    pub order_average: Vec<(f64, f64)>,
    /// Orientation density over the final actuation period (active matter).
    pub histogram: Vec<f64>,
    pub output_dir: PathBuf,
    pub settle_steps: u64,
    pub settle_converged: bool,
}

impl RunSummary {
    /// The named column as a vector, if recorded.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|&c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

/// Validates, builds, and runs a scenario, writing outputs under the
/// effective output directory.
pub fn run_scenario(cfg: &ScenarioConfig, ov: &RunOverrides) -> Result<RunSummary, RunError> {
    cfg.validate().map_err(RunError::Validation)?;
    let protocol = ov.protocol.unwrap_or_else(|| cfg.protocol());
    if protocol == Protocol::Async && cfg.interactions.is_some() {
        return Err(RunError::Validation(vec![
            "--protocol async: interactions require the synchronous protocol".into(),
        ]));
    }
    let seed = ov.seed.unwrap_or(cfg.seed);
    let threads = ov.threads.unwrap_or(cfg.integration.threads);
    let out_dir = ov
        .output
        .clone()
        .or_else(|| cfg.outputs.directory.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    if threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| RunError::Validation(vec![format!("threads: {e}")]))?;
        pool.install(|| run_inner(cfg, seed, protocol, &out_dir))
    } else {
        run_inner(cfg, seed, protocol, &out_dir)
    }
}

fn io_ctx(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| {
        RunError::Io(OutputError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn run_inner(
    cfg: &ScenarioConfig,
    seed: u64,
    protocol: Protocol,
    out_dir: &Path,
) -> Result<RunSummary, RunError> {
    let built = build_scenario(cfg, seed)?;
    let BuiltScenario {
        rods,
        clamps,
        mut engine,
        gravity,
        wave,
        magnets,
        dt,
        piston,
        settle_steps,
        settle_converged,
        ..
    } = built;

    std::fs::create_dir_all(out_dir).map_err(io_ctx(out_dir))?;

    let mut block = RodBlock::build(&rods).map_err(BuildError::Block)?;
    let mut scratch = BlockScratch::for_block(&block);
    let mut forces: Vec<Vec3> = Vec::new();
    let speed_limit = instability_speed_limit(&block.material_view(0));

    let total_time = cfg.integration.total_time;
    let steps_total = (total_time / dt).ceil().max(1.0) as u64;
    let record_stride = (cfg.output_interval() / dt).round().max(1.0) as u64;
    let snapshot_stride = cfg
        .outputs
        .snapshot_interval
        .map(|iv| (iv / dt).round().max(1.0) as u64);

    // Column set for this scenario.
    let mut columns: Vec<&'static str> = vec![
        "step",
        "time",
        "max_speed",
        "kinetic_energy",
        "elastic_energy",
        "com_x",
        "com_y",
        "com_z",
    ];
    let has_contacts = engine.is_some();
    if has_contacts {
        columns.push("n_active_contacts");
        columns.push("coordination_number");
    }
    let track_order = cfg.scenario == ScenarioKind::ActiveMatter;
    if track_order {
        columns.push("order_parameter");
    }
    if piston.is_some() {
        columns.push("strain");
        columns.push("stress");
    }

    let diagnostics_path = out_dir.join("diagnostics.csv");
    let mut diagnostics = Csv::create(&diagnostics_path, &columns)?;
    let mut contacts = if has_contacts {
        Some(Csv::create(
            out_dir.join("contacts.csv"),
            &[
                "step",
                "n_candidate_pairs",
                "n_active_contacts",
                "coordination_number",
                "broadphase_time_s",
                "narrowphase_time_s",
            ],
        )?)
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut last_diag: Option<InteractionDiagnostics> = None;
    let mut last_resolve_t = 0.0;
    let mut last_rows: Vec<Rod> = rods;
    let mut last_step = 0u64;
    // Orientation samples inside the final actuation period.
    let period = cfg.actuation_period().unwrap_or(total_time);
    let final_period_start = total_time - period;
    let mut final_thetas: Vec<f64> = Vec::new();
    let mut series_times: Vec<f64> = Vec::new();
    let mut series_order: Vec<f64> = Vec::new();

    let grain = DEFAULT_GRAIN_ELEMENTS;
    let mut abort: Option<(u64, f64, String)> = None;

    let mut step = 0u64;
    loop {
        let t = step as f64 * dt;
        let at_record = step % record_stride == 0 || step == steps_total;
        if at_record {
            // --- Record the state at time t (barrier) ---------------------
            let mut row: Vec<f64> = Vec::with_capacity(columns.len());
            row.push(step as f64);
            row.push(t);
            row.push(max_speed(block.velocities_all()));

            let mut energy = EnergyBreakdown::default();
            let mut energy_broken = false;
            block.for_each_rod_serial(&mut scratch, |rod| {
                match mechanical_energy_parts(
                    rod.positions,
                    rod.velocities,
                    rod.directors.as_ref(),
                    rod.angular_velocities,
                    &rod.material,
                    &mut rod.scratch,
                ) {
                    Ok(parts) => {
                        energy.translational += parts.translational;
                        energy.rotational += parts.rotational;
                        energy.shear_stretch += parts.shear_stretch;
                        energy.bend_twist += parts.bend_twist;
                    }
                    Err(_) => energy_broken = true,
                }
            });
            if energy_broken {
                abort = Some((step, t, "antipodal director frames".into()));
            }
            row.push(energy.translational + energy.rotational);
            row.push(energy.shear_stretch + energy.bend_twist);

            let masses = block.nodal_mass_all();
            let positions = block.positions_all();
            let mut com = [0.0; 3];
            let mut total_mass = 0.0;
            for (p, &m) in positions.iter().zip(masses) {
                com = add(com, scale(*p, m));
                total_mass += m;
            }
            com = scale(com, 1.0 / total_mass);
            row.extend_from_slice(&com);

            if has_contacts {
                let diag = last_diag.unwrap_or_default();
                row.push(diag.n_active_contacts as f64);
                row.push(diag.coordination_number);
            }
            if track_order {
                let thetas = planar_orientations(&block);
                let order = if thetas.is_empty() {
                    0.0
                } else {
                    alignment_order(&thetas)
                };
                row.push(order);
                series_times.push(t);
                series_order.push(order);
                if t >= final_period_start - 1e-12 {
                    final_thetas.extend_from_slice(&thetas);
                }
            }
            if let (Some(info), Some(engine)) = (&piston, engine.as_ref()) {
                // Stress and strain both at the time of the last resolve.
                let strain = info.motion.offset(last_resolve_t) / info.start_height;
                let reaction = engine
                    .boundary_reactions
                    .get(info.boundary_index)
                    .copied()
                    .unwrap_or([0.0; 3]);
                row.push(strain);
                row.push(reaction[2] / info.area);
            }

            debug_assert_eq!(row.len(), columns.len());
            diagnostics.row(&csv_fields(step, &row))?;
            rows.push(row);

            if let (Some(contacts), Some(diag)) = (contacts.as_mut(), last_diag.as_ref()) {
                contacts.row(&[
                    Value::U(step),
                    Value::U(diag.n_candidate_pairs as u64),
                    Value::U(diag.n_active_contacts as u64),
                    Value::F(diag.coordination_number),
                    Value::F(diag.broadphase_time_s),
                    Value::F(diag.narrowphase_time_s),
                ])?;
            }

            // Keep the last recorded state for the abort snapshot.
            last_rows = (0..block.n_rods()).map(|r| block.gather_rod(r)).collect();
            last_step = step;

            if let Some(snap_stride) = snapshot_stride {
                if step % snap_stride == 0 && step > 0 && step != steps_total {
                    let path = out_dir.join(format!("snapshot_{step:010}.snap"));
                    write_snapshot(&path, step, t, &last_rows)?;
                }
            }
        }
        if abort.is_some() || step == steps_total {
            break;
        }

        // --- Advance one step ---------------------------------------------
        let t_mid = t + 0.5 * dt;
        let field_now = magnets.as_ref().map(|(_, f)| f.eval(t_mid));
        let forcing = |rod: usize, mid: &mut crate::dynamics::MidStep<'_>| {
            if let Some(g) = gravity {
                add_gravity(mid, g);
            }
            if let Some(w) = &wave {
                w.apply(mid, t_mid);
            }
            if let (Some((mags, _)), Some(b)) = (&magnets, field_now) {
                mags[rod].apply(mid, b);
            }
        };
        let step_result: Result<(), String> = match (&protocol, engine.as_mut()) {
            (Protocol::Sync, Some(engine)) => {
                last_resolve_t = t_mid;
                sync_step(
                    &mut block,
                    &mut scratch,
                    engine,
                    &mut forces,
                    grain,
                    dt,
                    step,
                    t,
                    &forcing,
                )
                .map(|diag| last_diag = Some(diag))
                .map_err(|e| e.to_string())
            }
            _ => block
                .step_all(&mut scratch, grain, dt, step, &forcing)
                .map_err(|e| e.to_string()),
        };
        if let Err(detail) = step_result {
            abort = Some((step, t, detail));
            continue;
        }
        apply_clamps(&mut block, &mut scratch, &clamps);
        if cfg.integration.damping > 0.0 {
            let damping = cfg.integration.damping;
            block.for_each_rod_serial(&mut scratch, |rod| {
                damp_velocities(rod.velocities, rod.angular_velocities, damping, dt);
            });
        }
        step += 1;
        if step % WATCHDOG_STRIDE == 0 {
            if let Err(e) = check_stability(block.velocities_all(), speed_limit, step) {
                abort = Some((step, step as f64 * dt, e.to_string()));
            }
        }
    }

    // --- Wind down -------------------------------------------------------
    diagnostics.finish()?;
    if let Some(contacts) = contacts {
        contacts.finish()?;
    }

    if let Some((fail_step, fail_time, detail)) = abort {
        // The last recorded state is the best recovery point.
        write_snapshot(
            &out_dir.join("last_good.snap"),
            last_step,
            last_step as f64 * dt,
            &last_rows,
        )?;
        return Err(RunError::Instability {
            step: fail_step,
            time: fail_time,
            detail,
        });
    }

    let final_rods: Vec<Rod> = (0..block.n_rods()).map(|r| block.gather_rod(r)).collect();
    write_snapshot(
        &out_dir.join("final.snap"),
        steps_total,
        steps_total as f64 * dt,
        &final_rods,
    )?;

    // Derived series (active matter): S-bar and the final-period histogram.
    let mut order_average = Vec::new();
    let mut histogram = Vec::new();
    if track_order {
        order_average = centered_average(&series_times, &series_order, period);
        let path = out_dir.join("order_average.csv");
        let mut csv = Csv::create(&path, &["time", "order_average"])?;
        for &(t, v) in &order_average {
            csv.row(&[Value::F(t), Value::F(v)])?;
        }
        csv.finish()?;

        if !final_thetas.is_empty() {
            histogram = orientation_histogram(&final_thetas, HISTOGRAM_BINS);
            let path = out_dir.join("histogram.csv");
            let mut csv = Csv::create(&path, &["bin_center", "density"])?;
            let bin_width = 2.0 * std::f64::consts::PI / HISTOGRAM_BINS as f64;
            for (i, &d) in histogram.iter().enumerate() {
                csv.row(&[Value::F((i as f64 + 0.5) * bin_width), Value::F(d)])?;
            }
            csv.finish()?;
        }
    }

    Ok(RunSummary {
        steps: steps_total,
        final_time: steps_total as f64 * dt,
        dt,
        columns,
        rows,
        order_average,
        histogram,
        output_dir: out_dir.to_path_buf(),
        settle_steps,
        settle_converged,
    })
}

/// Tail-to-head orientation angles projected onto the floor plane, one per
/// rod whose projection is non-degenerate.
pub fn planar_orientations(block: &RodBlock) -> Vec<f64> {
    let positions = block.positions_all();
    block
        .spans()
        .iter()
        .filter_map(|span| {
            let tail = positions[span.node_start];
            let head = positions[span.node_start + span.n_nodes() - 1];
            planar_angle(sub(head, tail), [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
        })
        .collect()
}

/// Formats a diagnostics row: the step column as an exact integer, the rest
/// as shortest-round-trip floats.
fn csv_fields(step: u64, row: &[f64]) -> Vec<Value> {
    let mut fields = Vec::with_capacity(row.len());
    fields.push(Value::U(step));
    for &v in &row[1..] {
        fields.push(Value::F(v));
    }
    fields
}
