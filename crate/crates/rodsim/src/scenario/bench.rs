//! Thread-scaling benchmark over a built scenario, plus the memory-layout
//! ablation. Reports wall time, speedup, parallel efficiency, and a
//! least-squares serial-fraction estimate from the scaling curve.

use std::path::Path;
use std::time::Instant;

use crate::block::{BlockScratch, RodBlock, DEFAULT_GRAIN_ELEMENTS};
use crate::contact::{sync_step, InteractionEngine};
use crate::dynamics::MidStep;
use crate::forcing::add_gravity;
use crate::layout_bench::{compare_layouts, KernelId};
use crate::math::Vec3;
use crate::output::{Csv, Value};
use crate::rod::Rod;
use crate::scenario::build::{build_scenario, BuiltScenario};
use crate::scenario::config::ScenarioConfig;
use crate::scenario::run::RunError;

/// Target wall time per timed batch; long enough to swamp scheduling noise,
/// short enough that a 4-point sweep stays interactive.
const TARGET_BATCH_S: f64 = 0.4;
/// Rod count for the layout-ablation ensemble.
const ABLATION_RODS: usize = 256;
/// Elements per rod for the layout-ablation ensemble.
const ABLATION_ELEMENTS: usize = 32;

/// One timing row; mirrors one line of `bench.csv`.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub kernel: String,
    pub layout: String,
    pub n_rods: usize,
    pub n_elements: usize,
    pub threads: usize,
    pub wall_time_s: f64,
    pub steps_per_s: f64,
    /// Thread rows: single-thread time over this row's time. Layout rows:
    /// per-step naive time over blocked time.
    pub speedup_vs_baseline: f64,
}

/// Everything the bench run measured.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// (threads, t1 / (threads * t_threads)) for each swept thread count.
    pub efficiency: Vec<(usize, f64)>,
    /// Serial fraction fitted from the scaling curve; `None` when fewer than
    /// two distinct thread counts were swept.
    pub amdahl_serial_fraction: Option<f64>,
    /// Hardware concurrency of this machine.
    pub hardware_threads: usize,
}

/// Builds the scenario once, then times its step kernel at each requested
/// thread count from the same initial state, and runs the layout ablation.
/// Writes `bench.csv` under `out_dir` when given.
pub fn run_bench(
    cfg: &ScenarioConfig,
    threads_list: &[usize],
    seed_override: Option<u64>,
    out_dir: Option<&Path>,
) -> Result<BenchReport, RunError> {
    cfg.validate().map_err(RunError::Validation)?;
    if threads_list.is_empty() || threads_list.contains(&0) {
        return Err(RunError::Validation(vec![
            "threads-list: need at least one positive thread count".into(),
        ]));
    }
    let seed = seed_override.unwrap_or(cfg.seed);
    let built = build_scenario(cfg, seed)?;
    let BuiltScenario {
        rods,
        engine,
        gravity,
        wave,
        magnets,
        dt,
        ..
    } = built;
    let n_rods = rods.len();
    let n_elements = rods.first().map_or(0, |r| r.state.n_elements());
    let kernel_name = if engine.is_some() { "sync_step" } else { "step" };

    // Mid-step forcing identical to the run driver's, at a frozen time: the
    // work per step is what matters here, not the trajectory.
    let forcing = |rod: usize, mid: &mut MidStep<'_>| {
        if let Some(g) = gravity {
            add_gravity(mid, g);
        }
        if let Some(w) = &wave {
            w.apply(mid, 0.0);
        }
        if let Some((mags, field)) = &magnets {
            mags[rod].apply(mid, field.eval(0.0));
        }
    };

    let mut rows = Vec::new();
    let mut times = Vec::new();
    for &threads in threads_list {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| RunError::Validation(vec![format!("threads-list: {e}")]))?;
        let per_step =
            pool.install(|| time_scenario_step(&rods, engine.clone(), dt, &forcing));
        times.push((threads, per_step));
        rows.push(BenchRow {
            kernel: kernel_name.into(),
            layout: "blocked".into(),
            n_rods,
            n_elements,
            threads,
            wall_time_s: per_step,
            steps_per_s: 1.0 / per_step,
            speedup_vs_baseline: 1.0, // filled below once the baseline is known
        });
    }
    let baseline = times
        .iter()
        .find(|(t, _)| *t == 1)
        .map(|&(_, s)| s)
        .unwrap_or(times[0].1);
    for (row, &(_, per_step)) in rows.iter_mut().zip(&times) {
        row.speedup_vs_baseline = baseline / per_step;
    }
    let efficiency: Vec<(usize, f64)> = times
        .iter()
        .map(|&(t, s)| (t, baseline / (t as f64 * s)))
        .collect();
    let amdahl_serial_fraction = fit_serial_fraction(&times, baseline);

    // Layout ablation on a synthetic ensemble (single-threaded kernels).
    let ablation = crate::layout_bench::bench_ensemble(ABLATION_RODS, ABLATION_ELEMENTS, seed);
    let ablation_dt = 0.5 * crate::dynamics::stable_dt(&ablation[0].material.view());
    for kernel in [KernelId::So3Update, KernelId::FullStep] {
        let (naive, blocked, speedup) =
            compare_layouts(&ablation, kernel, ablation_dt, TARGET_BATCH_S);
        for timing in [&naive, &blocked] {
            rows.push(BenchRow {
                kernel: kernel.name().into(),
                layout: timing.layout.name().into(),
                n_rods: timing.n_rods,
                n_elements: timing.n_elements,
                threads: 1,
                wall_time_s: timing.wall_time_s,
                steps_per_s: timing.steps_per_s,
                speedup_vs_baseline: speedup,
            });
        }
    }

    let report = BenchReport {
        rows,
        efficiency,
        amdahl_serial_fraction,
        hardware_threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|source| {
            RunError::Io(crate::output::OutputError::Io {
                path: dir.to_path_buf(),
                source,
            })
        })?;
        write_bench_csv(&dir.join("bench.csv"), &report)?;
    }
    Ok(report)
}

/// Per-step wall time of the scenario kernel from the given initial state,
/// calibrated then best-of-three.
fn time_scenario_step<F>(rods: &[Rod], engine: Option<InteractionEngine>, dt: f64, forcing: &F) -> f64
where
    F: Fn(usize, &mut MidStep<'_>) + Sync,
{
    let mut block = RodBlock::build(rods).expect("bench ensemble must block");
    let mut scratch = BlockScratch::for_block(&block);
    let mut engine = engine;
    let mut forces: Vec<Vec3> = Vec::new();
    let grain = DEFAULT_GRAIN_ELEMENTS;

    let mut run_steps = |block: &mut RodBlock,
                         scratch: &mut BlockScratch,
                         engine: &mut Option<InteractionEngine>,
                         steps: u64,
                         offset: u64| {
        for i in 0..steps {
            let step = offset + i;
            let t = step as f64 * dt;
            match engine.as_mut() {
                Some(engine) => {
                    sync_step(
                        block, scratch, engine, &mut forces, grain, dt, step, t, forcing,
                    )
                    .map(|_| ())
                    .expect("bench step must stay stable")
                }
                None => block
                    .step_all(scratch, grain, dt, step, forcing)
                    .expect("bench step must stay stable"),
            }
        }
    };

    let t0 = Instant::now();
    run_steps(&mut block, &mut scratch, &mut engine, 1, 0);
    let per_step = t0.elapsed().as_secs_f64().max(1e-9);
    let steps = ((TARGET_BATCH_S / per_step).ceil() as u64).clamp(2, 200_000);
    let mut best = f64::INFINITY;
    let mut offset = 1;
    for _ in 0..3 {
        let t = Instant::now();
        run_steps(&mut block, &mut scratch, &mut engine, steps, offset);
        best = best.min(t.elapsed().as_secs_f64());
        offset += steps;
    }
    best / steps as f64
}

/// Least-squares fit of the serial fraction `s` in
/// `t_T / t_1 = s + (1 - s) / T`, through the origin in the variables
/// `x = 1 - 1/T`, `y = t_T/t_1 - 1/T`.
fn fit_serial_fraction(times: &[(usize, f64)], baseline: f64) -> Option<f64> {
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut points = 0;
    for &(threads, per_step) in times {
        if threads <= 1 {
            continue;
        }
        let x = 1.0 - 1.0 / threads as f64;
        let y = per_step / baseline - 1.0 / threads as f64;
        sxy += x * y;
        sxx += x * x;
        points += 1;
    }
    (points >= 1 && sxx > 0.0).then(|| (sxy / sxx).clamp(0.0, 1.0))
}

fn write_bench_csv(path: &Path, report: &BenchReport) -> Result<(), RunError> {
    let mut csv = Csv::create(
        path,
        &[
            "kernel",
            "layout",
            "n_rods",
            "n_elements",
            "threads",
            "wall_time_s",
            "steps_per_s",
            "speedup_vs_baseline",
        ],
    )?;
    for row in &report.rows {
        csv.row(&[
            Value::S(row.kernel.clone()),
            Value::S(row.layout.clone()),
            Value::U(row.n_rods as u64),
            Value::U(row.n_elements as u64),
            Value::U(row.threads as u64),
            Value::F(row.wall_time_s),
            Value::F(row.steps_per_s),
            Value::F(row.speedup_vs_baseline),
        ])?;
    }
    csv.finish()?;
    Ok(())
}

/// Suppresses the unused-parameter lint on `RunOverrides` re-export paths;
/// bench shares the run module's error type only.
const _: fn() = || {
    let _ = std::mem::size_of::<RunOverrides>;
};
