//! Run configuration: one structured-text (TOML) file per run.
//!
//! A file declares a single unit system, names a scenario, and fills nested
//! sections for geometry, material, integration, forcing, interactions,
//! boundaries, and outputs. Unknown keys are errors, so typos cannot pass
//! silently. Semantic validation collects *every* problem it finds (each
//! naming the offending field) instead of stopping at the first. A canonical
//! serialization is defined so emit-then-reload round-trips exactly.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::rod::MaterialScalars;

/// Unit system the file's quantities are expressed in. The tag documents
/// intent and keeps mixed-unit files from being combined by accident; both
/// systems run identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Units {
    #[serde(rename = "SI")]
    Si,
    #[serde(rename = "nondimensional")]
    Nondimensional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Random packing in an open-top box, optionally cycled by a piston.
    FibrousPacking,
    /// Self-propelled filaments crawling on an anisotropic frictional floor.
    ActiveMatter,
    /// Grid of clamped, magnetized filaments beating under a rotating field.
    CiliaCarpet,
    /// One free or forced rod, for validation and smoke runs.
    SingleRodValidation,
    /// Generic assembly: rods placed in a row (or packed when a domain is
    /// given), with whatever forcing/boundaries the file configures.
    Custom,
}

/// Barrier schedule: `sync` resolves interactions at the mid-step of every
/// step; `async` runs each rod's full step independently (no interactions).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Sync,
    Async,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub n_rods: usize,
    pub elements_per_rod: usize,
    pub rod_length: f64,
    /// Length over diameter; sets the radius.
    pub aspect_ratio: f64,
    /// Box dimensions for packed scenarios (origin at a corner).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<[f64; 3]>,
    /// Carpet layout (nx, ny); the product must equal `n_rods`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<[usize; 2]>,
    /// Center-to-center spacing of carpet/row placements.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
}

impl Geometry {
    pub fn radius(&self) -> f64 {
        self.rod_length / (2.0 * self.aspect_ratio)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub density: f64,
    pub youngs_modulus: f64,
    /// Defaults to E/3 (incompressible limit).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shear_modulus: Option<f64>,
    /// Timoshenko-style shear correction; 4/3 for circular sections.
    #[serde(default = "default_shear_correction")]
    pub shear_correction: f64,
}

fn default_shear_correction() -> f64 {
    4.0 / 3.0
}

impl Material {
    pub fn scalars(&self) -> MaterialScalars {
        MaterialScalars {
            density: self.density,
            youngs_modulus: self.youngs_modulus,
            shear_modulus: self.shear_modulus.unwrap_or(self.youngs_modulus / 3.0),
            shear_correction: self.shear_correction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Integration {
    /// Simulated duration.
    pub total_time: f64,
    /// Time step as a fraction of the stability bound.
    #[serde(default = "default_dt_factor")]
    pub dt_factor: f64,
    /// Omitted: derived (sync when interactions are configured, else async).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<Protocol>,
    /// 0 uses the process default thread pool.
    #[serde(default)]
    pub threads: usize,
    /// Uniform velocity damping rate (1/time); 0 disables.
    #[serde(default)]
    pub damping: f64,
}

fn default_dt_factor() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Forcing {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gravity: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub muscular_wave: Option<WaveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnetics: Option<MagneticsConfig>,
}

impl Forcing {
    pub fn is_empty(&self) -> bool {
        self == &Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveConfig {
    /// Peak couple per unit length.
    pub amplitude: f64,
    pub period: f64,
    pub wavelength: f64,
    #[serde(default)]
    pub phase: f64,
    /// Trailing fraction of the rod over which amplitude tapers to zero.
    #[serde(default = "default_taper")]
    pub taper_fraction: f64,
}

fn default_taper() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagneticsConfig {
    /// Magnetic moment per unit length, fixed in each element's frame.
    pub moment_density: f64,
    /// Carpet phase map wavelengths (x, y): the magnetization of the rod
    /// based at (x, y) is tilted by 2*pi*(x/wx + y/wy) in the field plane.
    /// A zero entry disables variation along that axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_wavelengths: Option<[f64; 2]>,
    pub field: FieldConfig,
}

/// Laboratory field protocol. (`deny_unknown_fields` is incompatible with
/// internally tagged enums, so unknown keys inside this one table pass; the
/// `kind` tag itself is still checked.)
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldConfig {
    Constant {
        field: [f64; 3],
    },
    Rotating {
        magnitude: f64,
        frequency: f64,
        axis_a: [f64; 3],
        axis_b: [f64; 3],
    },
    Table {
        times: Vec<f64>,
        fields: Vec<[f64; 3]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interactions {
    /// Contact stiffness as a multiple of E*r.
    #[serde(default = "default_one")]
    pub stiffness_factor: f64,
    /// Contact damping as a multiple of sqrt(k*m).
    #[serde(default = "default_damping_factor")]
    pub damping_factor: f64,
    /// Broad-phase margin as a multiple of the radius.
    #[serde(default = "default_margin_factor")]
    pub margin_factor: f64,
    #[serde(default = "default_mu_static")]
    pub mu_static: f64,
    #[serde(default = "default_mu_kinetic")]
    pub mu_kinetic: f64,
    /// Creep speed of the regularized static friction law. Omitted: derived
    /// as 1e-4*sqrt(|g|*L), which needs gravity to be configured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_stick: Option<f64>,
}

fn default_one() -> f64 {
    1.0
}
fn default_damping_factor() -> f64 {
    0.1
}
fn default_margin_factor() -> f64 {
    0.01
}
fn default_mu_static() -> f64 {
    0.5
}
fn default_mu_kinetic() -> f64 {
    0.3
}

impl Default for Interactions {
    fn default() -> Self {
        Self {
            stiffness_factor: default_one(),
            damping_factor: default_damping_factor(),
            margin_factor: default_margin_factor(),
            mu_static: default_mu_static(),
            mu_kinetic: default_mu_kinetic(),
            v_stick: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Boundaries {
    /// Half-space floor at z = 0.
    #[serde(default)]
    pub floor: bool,
    /// Side walls of the domain box (open top).
    #[serde(default)]
    pub walls: bool,
    /// Forward/backward/lateral kinetic-friction multipliers on the floor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub friction_anisotropy: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub piston: Option<PistonConfig>,
}

impl Boundaries {
    pub fn is_empty(&self) -> bool {
        self == &Self::default()
    }
}

/// Triangular-wave compression from above: the face descends by
/// `strain_amplitude` times the settled packing height, then returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PistonConfig {
    pub strain_amplitude: f64,
    pub period: f64,
    #[serde(default = "default_cycles")]
    pub cycles: f64,
}

fn default_cycles() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    /// Overridden by the CLI `--output`; default `out/`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    /// Time between records. Omitted: actuation period / 100, else
    /// total_time / 500.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<f64>,
    /// Time between state snapshots. Omitted: final state only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_interval: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub units: Units,
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub geometry: Geometry,
    pub material: Material,
    pub integration: Integration,
    #[serde(default, skip_serializing_if = "Forcing::is_empty")]
    pub forcing: Forcing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interactions: Option<Interactions>,
    #[serde(default, skip_serializing_if = "Boundaries::is_empty")]
    pub boundaries: Boundaries,
    #[serde(default, skip_serializing_if = "outputs_default")]
    pub outputs: Outputs,
}

fn outputs_default(o: &Outputs) -> bool {
    o == &Outputs::default()
}

/// Why a configuration could not be loaded.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration:\n{}", problems.join("\n"))]
    Invalid { problems: Vec<String> },
}

/// Loads and fully validates a config file; semantic problems are collected
/// and reported together.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let config: ScenarioConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    config.validate().map_err(|problems| ConfigError::Invalid { problems })?;
    Ok(config)
}

/// The canonical serialization: emit-then-reload reproduces the config
/// exactly (floats print in shortest round-trip form).
pub fn canonical_toml(config: &ScenarioConfig) -> String {
    toml::to_string_pretty(config).expect("a validated config always serializes")
}

impl ScenarioConfig {
    /// Checks every semantic rule, returning the full list of violations.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut problems = Vec::new();
        let mut bad = |field: &str, why: String| {
            problems.push(format!("{field}: {why}"));
        };
        let positive = |v: f64| v.is_finite() && v > 0.0;

        let g = &self.geometry;
        if g.n_rods == 0 {
            bad("geometry.n_rods", "must be at least 1".into());
        }
        if g.elements_per_rod < 2 {
            bad("geometry.elements_per_rod", "must be at least 2".into());
        }
        if !positive(g.rod_length) {
            bad("geometry.rod_length", format!("must be positive, got {}", g.rod_length));
        }
        if !(g.aspect_ratio.is_finite() && g.aspect_ratio > 1.0) {
            bad("geometry.aspect_ratio", format!("must exceed 1, got {}", g.aspect_ratio));
        }
        if let Some(d) = g.domain {
            if !d.iter().all(|&x| positive(x)) {
                bad("geometry.domain", format!("all extents must be positive, got {d:?}"));
            }
        }
        if let Some(s) = g.spacing {
            if !positive(s) {
                bad("geometry.spacing", format!("must be positive, got {s}"));
            }
        }
        if let Some([nx, ny]) = g.grid {
            if nx == 0 || ny == 0 {
                bad("geometry.grid", "both grid counts must be at least 1".into());
            } else if nx * ny != g.n_rods {
                bad(
                    "geometry.grid",
                    format!("{nx}x{ny} = {} does not match n_rods = {}", nx * ny, g.n_rods),
                );
            }
        }

        let m = &self.material;
        if !positive(m.density) {
            bad("material.density", format!("must be positive, got {}", m.density));
        }
        if !positive(m.youngs_modulus) {
            bad("material.youngs_modulus", format!("must be positive, got {}", m.youngs_modulus));
        }
        if let Some(sm) = m.shear_modulus {
            if !positive(sm) {
                bad("material.shear_modulus", format!("must be positive, got {sm}"));
            }
        }
        if !positive(m.shear_correction) {
            bad("material.shear_correction", format!("must be positive, got {}", m.shear_correction));
        }

        let i = &self.integration;
        if !positive(i.total_time) {
            bad("integration.total_time", format!("must be positive, got {}", i.total_time));
        }
        if !(i.dt_factor > 0.0 && i.dt_factor <= 1.0) {
            bad("integration.dt_factor", format!("must lie in (0, 1], got {}", i.dt_factor));
        }
        if !(i.damping.is_finite() && i.damping >= 0.0) {
            bad("integration.damping", format!("must be non-negative, got {}", i.damping));
        }

        let f = &self.forcing;
        if let Some(gr) = f.gravity {
            if !gr.iter().all(|x| x.is_finite()) {
                bad("forcing.gravity", format!("components must be finite, got {gr:?}"));
            }
        }
        if let Some(w) = &f.muscular_wave {
            if !(w.amplitude.is_finite() && w.amplitude >= 0.0) {
                bad("forcing.muscular_wave.amplitude", format!("must be non-negative, got {}", w.amplitude));
            }
            if !positive(w.period) {
                bad("forcing.muscular_wave.period", format!("must be positive, got {}", w.period));
            }
            if !positive(w.wavelength) {
                bad("forcing.muscular_wave.wavelength", format!("must be positive, got {}", w.wavelength));
            }
            if !(0.0..=1.0).contains(&w.taper_fraction) {
                bad("forcing.muscular_wave.taper_fraction", format!("must lie in [0, 1], got {}", w.taper_fraction));
            }
        }
        if let Some(mg) = &f.magnetics {
            if !mg.moment_density.is_finite() {
                bad("forcing.magnetics.moment_density", format!("must be finite, got {}", mg.moment_density));
            }
            if let Some([wx, wy]) = mg.phase_wavelengths {
                if wx < 0.0 || wy < 0.0 || !wx.is_finite() || !wy.is_finite() {
                    bad("forcing.magnetics.phase_wavelengths", format!("must be non-negative (0 = uniform), got [{wx}, {wy}]"));
                }
            }
            match &mg.field {
                FieldConfig::Constant { field } => {
                    if !field.iter().all(|x| x.is_finite()) {
                        bad("forcing.magnetics.field.field", format!("components must be finite, got {field:?}"));
                    }
                }
                FieldConfig::Rotating { magnitude, frequency, axis_a, axis_b } => {
                    if !(magnitude.is_finite() && *magnitude >= 0.0) {
                        bad("forcing.magnetics.field.magnitude", format!("must be non-negative, got {magnitude}"));
                    }
                    if !positive(*frequency) {
                        bad("forcing.magnetics.field.frequency", format!("must be positive, got {frequency}"));
                    }
                    for (name, axis) in [("axis_a", axis_a), ("axis_b", axis_b)] {
                        let n2: f64 = axis.iter().map(|x| x * x).sum();
                        if !(n2.is_finite() && n2 > 0.0) {
                            bad(&format!("forcing.magnetics.field.{name}"), format!("must be a nonzero vector, got {axis:?}"));
                        }
                    }
                }
                FieldConfig::Table { times, fields } => {
                    if times.is_empty() {
                        bad("forcing.magnetics.field.times", "table must not be empty".into());
                    }
                    if times.len() != fields.len() {
                        bad("forcing.magnetics.field.fields", format!("{} fields for {} times", fields.len(), times.len()));
                    }
                    if times.windows(2).any(|w| !(w[1] > w[0])) {
                        bad("forcing.magnetics.field.times", "must be strictly increasing".into());
                    }
                }
            }
        }

        if let Some(c) = &self.interactions {
            if !positive(c.stiffness_factor) {
                bad("interactions.stiffness_factor", format!("must be positive, got {}", c.stiffness_factor));
            }
            if !(c.damping_factor.is_finite() && c.damping_factor >= 0.0) {
                bad("interactions.damping_factor", format!("must be non-negative, got {}", c.damping_factor));
            }
            if !(c.margin_factor.is_finite() && c.margin_factor >= 0.0) {
                bad("interactions.margin_factor", format!("must be non-negative, got {}", c.margin_factor));
            }
            if !(c.mu_static.is_finite() && c.mu_static >= 0.0) {
                bad("interactions.mu_static", format!("must be non-negative, got {}", c.mu_static));
            }
            if !(c.mu_kinetic.is_finite() && c.mu_kinetic >= 0.0) {
                bad("interactions.mu_kinetic", format!("must be non-negative, got {}", c.mu_kinetic));
            } else if c.mu_kinetic > c.mu_static {
                bad("interactions.mu_kinetic", format!("must not exceed mu_static ({} > {})", c.mu_kinetic, c.mu_static));
            }
            match c.v_stick {
                Some(v) if !positive(v) => {
                    bad("interactions.v_stick", format!("must be positive, got {v}"));
                }
                None => {
                    let grav_norm = f
                        .gravity
                        .map(|gr| gr.iter().map(|x| x * x).sum::<f64>().sqrt())
                        .unwrap_or(0.0);
                    if grav_norm == 0.0 {
                        bad(
                            "interactions.v_stick",
                            "required when forcing.gravity is absent (the default derives from sqrt(|g|*L))".into(),
                        );
                    }
                }
                _ => {}
            }
            if self.integration.protocol == Some(Protocol::Async) {
                bad("integration.protocol", "interactions require the synchronous protocol".into());
            }
        }

        let b = &self.boundaries;
        if let Some(a) = b.friction_anisotropy {
            if !a.iter().all(|&x| positive(x)) {
                bad("boundaries.friction_anisotropy", format!("multipliers must be positive, got {a:?}"));
            }
            if !b.floor {
                bad("boundaries.friction_anisotropy", "needs boundaries.floor = true".into());
            }
        }
        if b.walls && g.domain.is_none() {
            bad("boundaries.walls", "need geometry.domain".into());
        }
        if let Some(p) = &b.piston {
            if !(p.strain_amplitude > 0.0 && p.strain_amplitude < 1.0) {
                bad("boundaries.piston.strain_amplitude", format!("must lie in (0, 1), got {}", p.strain_amplitude));
            }
            if !positive(p.period) {
                bad("boundaries.piston.period", format!("must be positive, got {}", p.period));
            }
            if !positive(p.cycles) {
                bad("boundaries.piston.cycles", format!("must be positive, got {}", p.cycles));
            }
            if positive(p.period) && positive(p.cycles) && i.total_time < p.cycles * p.period - 1e-12 {
                bad("integration.total_time", format!(
                    "shorter than the piston protocol ({} < {} cycles x {})",
                    i.total_time, p.cycles, p.period
                ));
            }
            if g.domain.is_none() {
                bad("boundaries.piston", "needs geometry.domain".into());
            }
        }
        if (b.floor || b.walls || b.piston.is_some()) && self.interactions.is_none() {
            bad("boundaries", "boundary contact needs an [interactions] section".into());
        }

        let o = &self.outputs;
        if let Some(iv) = o.interval {
            if !positive(iv) {
                bad("outputs.interval", format!("must be positive, got {iv}"));
            }
        }
        if let Some(iv) = o.snapshot_interval {
            if !positive(iv) {
                bad("outputs.snapshot_interval", format!("must be positive, got {iv}"));
            }
        }

        // Scenario-specific completeness.
        let has_gravity = f
            .gravity
            .map(|gr| gr.iter().map(|x| x * x).sum::<f64>() > 0.0)
            .unwrap_or(false);
        match self.scenario {
            ScenarioKind::FibrousPacking => {
                for (ok, field, why) in [
                    (g.domain.is_some(), "geometry.domain", "fibrous-packing needs an enclosure"),
                    (has_gravity, "forcing.gravity", "fibrous-packing settles under gravity"),
                    (self.interactions.is_some(), "interactions", "fibrous-packing is contact-driven"),
                    (b.floor, "boundaries.floor", "fibrous-packing needs the floor"),
                    (b.walls, "boundaries.walls", "fibrous-packing needs the enclosure walls"),
                ] {
                    if !ok {
                        bad(field, why.into());
                    }
                }
            }
            ScenarioKind::ActiveMatter => {
                for (ok, field, why) in [
                    (g.domain.is_some(), "geometry.domain", "active-matter needs an enclosure"),
                    (has_gravity, "forcing.gravity", "active-matter settles onto the floor"),
                    (f.muscular_wave.is_some(), "forcing.muscular_wave", "active-matter filaments are wave-driven"),
                    (self.interactions.is_some(), "interactions", "active-matter is contact-driven"),
                    (b.floor, "boundaries.floor", "active-matter crawls on the floor"),
                    (b.walls, "boundaries.walls", "active-matter needs the confining walls"),
                ] {
                    if !ok {
                        bad(field, why.into());
                    }
                }
            }
            ScenarioKind::CiliaCarpet => {
                if g.grid.is_none() {
                    bad("geometry.grid", "cilia-carpet needs the carpet layout".into());
                }
                if g.spacing.is_none() {
                    bad("geometry.spacing", "cilia-carpet needs the cilium spacing".into());
                }
                match &f.magnetics {
                    None => bad("forcing.magnetics", "cilia-carpet is magnetically driven".into()),
                    Some(mg) => {
                        if mg.phase_wavelengths.is_none() {
                            bad("forcing.magnetics.phase_wavelengths", "cilia-carpet needs the phase map".into());
                        }
                        if matches!(mg.field, FieldConfig::Constant { .. }) {
                            bad("forcing.magnetics.field", "cilia-carpet needs a time-varying field".into());
                        }
                    }
                }
            }
            ScenarioKind::SingleRodValidation => {
                if g.n_rods != 1 {
                    bad("geometry.n_rods", format!("single-rod-validation needs exactly 1 rod, got {}", g.n_rods));
                }
            }
            ScenarioKind::Custom => {}
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }

    /// The period of the configured actuation, used for default output
    /// cadence: muscular wave, then rotating/tabulated field, then piston.
    pub fn actuation_period(&self) -> Option<f64> {
        if let Some(w) = &self.forcing.muscular_wave {
            return Some(w.period);
        }
        if let Some(mg) = &self.forcing.magnetics {
            match &mg.field {
                FieldConfig::Rotating { frequency, .. } => return Some(1.0 / frequency),
                FieldConfig::Table { times, .. } => {
                    if times.len() >= 2 {
                        return Some(times[times.len() - 1] - times[0]);
                    }
                }
                FieldConfig::Constant { .. } => {}
            }
        }
        self.boundaries.piston.as_ref().map(|p| p.period)
    }

    /// Record spacing: configured, else actuation period / 100, else
    /// total_time / 500.
    pub fn output_interval(&self) -> f64 {
        if let Some(iv) = self.outputs.interval {
            return iv;
        }
        match self.actuation_period() {
            Some(p) => p / 100.0,
            None => self.integration.total_time / 500.0,
        }
    }

    /// Creep speed for regularized static friction: configured, else
    /// 1e-4*sqrt(|g|*L) (validation guarantees gravity exists in that case).
    pub fn v_stick(&self) -> Option<f64> {
        let c = self.interactions.as_ref()?;
        Some(c.v_stick.unwrap_or_else(|| {
            let g = self
                .forcing
                .gravity
                .map(|gr| gr.iter().map(|x| x * x).sum::<f64>().sqrt())
                .unwrap_or(0.0);
            1e-4 * (g * self.geometry.rod_length).sqrt()
        }))
    }

    /// Effective protocol: configured, else sync when interactions are on.
    pub fn protocol(&self) -> Protocol {
        self.integration.protocol.unwrap_or(if self.interactions.is_some() {
            Protocol::Sync
        } else {
            Protocol::Async
        })
    }
}
