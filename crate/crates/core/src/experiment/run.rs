use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AlphaSource, ExperimentConfig, SweepVariable};
use super::ExperimentError;
use crate::circuit::CrossbarInstance;
use crate::engine::{AttackResult, Engine};
use crate::thermal::{
    extract_kernel_for_geometry, AlphaKernel, CrossbarGeometry, KernelExtraction, ThermalSettings,
};

/// Directory for cached kernel artifacts.
pub const CACHE_DIR_ENV: &str = "XHAMMER_CACHE_DIR";

/// Cache key of a kernel: FNV-1a over the canonical JSON of the geometry and
/// thermal settings.
pub fn geometry_hash(geom: &CrossbarGeometry, thermal: &ThermalSettings) -> u64 {
    let canonical = serde_json::to_string(&(geom, thermal)).expect("geometry serializes");
    let mut h = FnvHasher::default();
    h.write(canonical.as_bytes());
    h.finish()
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Extracted kernel for `geom`, read from or stored in `cache` when given.
pub fn cached_kernel(
    geom: &CrossbarGeometry,
    thermal: &ThermalSettings,
    ambient: f64,
    cache: Option<&Path>,
) -> Result<AlphaKernel, ExperimentError> {
    let Some(dir) = cache else {
        return Ok(extract_kernel_for_geometry(geom, thermal, ambient)?.kernel);
    };
    let path = dir.join(format!("kernel-{:016x}.json", geometry_hash(geom, thermal)));
    if path.exists() {
        info!("kernel cache hit {}", path.display());
        return Ok(AlphaKernel::load(&path)
            .map_err(io_err(&path))?
            .with_ambient(ambient));
    }
    let kernel = extract_kernel_for_geometry(geom, thermal, ambient)?.kernel;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let tmp = path.with_extension(format!("{}.tmp", std::process::id()));
    std::fs::write(&tmp, kernel.to_json()).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, &path).map_err(io_err(&path))?;
    Ok(kernel)
}

/// Kernel named by the config's `alpha_source`, referenced to its ambient.
pub fn resolve_kernel(cfg: &ExperimentConfig) -> Result<AlphaKernel, ExperimentError> {
    match cfg.alpha_path() {
        Some(path) => Ok(AlphaKernel::load(&path)
            .map_err(io_err(&path))?
            .with_ambient(cfg.ambient)),
        None => cached_kernel(
            &cfg.geometry,
            &cfg.thermal,
            cfg.ambient,
            cache_dir().as_deref(),
        ),
    }
}

/// Crossbar in the config's initial state.
pub fn build_instance(
    cfg: &ExperimentConfig,
    kernel: AlphaKernel,
) -> Result<CrossbarInstance, ExperimentError> {
    Ok(CrossbarInstance::new(
        cfg.initial_states(),
        cfg.device.clone(),
        kernel.with_ambient(cfg.ambient),
        cfg.wire_resistance_ohm,
        cfg.ambient,
    )?)
}

/// Runs the configured attack with a given kernel.
pub fn simulate(
    cfg: &ExperimentConfig,
    kernel: &AlphaKernel,
    trace: bool,
) -> Result<AttackResult, ExperimentError> {
    let xbar = build_instance(cfg, kernel.clone())?;
    let program = cfg.program.to_program();
    let mut engine = Engine::new(xbar);
    let result = if trace {
        engine.run_pulse_train(&program, true)?
    } else {
        engine.run_attack(&program)?
    };
    Ok(result)
}

/// Extracts the kernel of the configured geometry and writes it to `out`.
pub fn cmd_extract_alpha(
    cfg: &ExperimentConfig,
    out: &Path,
) -> Result<KernelExtraction, ExperimentError> {
    let ex = extract_kernel_for_geometry(&cfg.geometry, &cfg.thermal, cfg.ambient)?;
    if ex.kernel.neighbours().next().is_none() {
        warn!("kernel has no coupling entries; cells are thermally independent");
    }
    std::fs::write(out, ex.kernel.to_json()).map_err(io_err(out))?;
    Ok(ex)
}

/// Runs the attack and writes `result.json` (and `trace.csv`) into `out_dir`.
pub fn cmd_simulate(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    trace: bool,
) -> Result<AttackResult, ExperimentError> {
    let kernel = resolve_kernel(cfg)?;
    let result = simulate(cfg, &kernel, trace)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let json = out_dir.join("result.json");
    let body = serde_json::to_string_pretty(&result).expect("result serializes");
    std::fs::write(&json, body).map_err(io_err(&json))?;
    if trace {
        let csv = out_dir.join("trace.csv");
        std::fs::write(&csv, result.trace_csv()).map_err(io_err(&csv))?;
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub swept_value: f64,
    pub pulses_to_flip: Option<u64>,
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub variable: SweepVariable,
    /// Sorted by swept value.
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("swept_value,pulses_to_flip,flipped\n");
        for r in &self.rows {
            let pulses = r.pulses_to_flip.map(|p| p.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", r.swept_value, pulses, r.flipped));
        }
        out
    }

    pub fn pulses(&self) -> Vec<Option<u64>> {
        self.rows.iter().map(|r| r.pulses_to_flip).collect()
    }
}

/// Copy of `cfg` with one swept quantity replaced.
pub fn config_for_value(
    cfg: &ExperimentConfig,
    variable: SweepVariable,
    value: f64,
) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.sweep = None;
    match variable {
        SweepVariable::PulseLength => c.program.pulse_length_ns = value,
        SweepVariable::Spacing => c.geometry.electrode_spacing = value,
        SweepVariable::Ambient => c.ambient = value,
    }
    c
}

/// Runs every point of the config's sweep on the current rayon pool.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult, ExperimentError> {
    let sweep = cfg.sweep.as_ref().ok_or(ExperimentError::NoSweep)?;
    cfg.validate()?;
    let variable = sweep.variable;
    let cache = cache_dir();
    let shared = match variable {
        SweepVariable::Spacing => None,
        _ => Some(resolve_kernel(cfg)?),
    };
    let mut rows = sweep
        .values
        .par_iter()
        .map(|&value| {
            let point = config_for_value(cfg, variable, value);
            let kernel = match &shared {
                Some(k) => k.with_ambient(point.ambient),
                None => {
                    debug_assert_eq!(point.alpha_source, AlphaSource::Compute);
                    cached_kernel(
                        &point.geometry,
                        &point.thermal,
                        point.ambient,
                        cache.as_deref(),
                    )?
                }
            };
            let r = simulate(&point, &kernel, false)?;
            info!(
                "{variable} = {value}: pulses_to_flip {:?}",
                r.pulses_to_flip
            );
            Ok(SweepRow {
                swept_value: value,
                pulses_to_flip: r.pulses_to_flip,
                flipped: r.flipped,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    rows.sort_by(|a, b| a.swept_value.total_cmp(&b.swept_value));
    Ok(SweepResult { variable, rows })
}

/// Runs the sweep and writes its CSV to `out`.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<SweepResult, ExperimentError> {
    let result = run_sweep(cfg)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(out, result.to_csv()).map_err(io_err(out))?;
    Ok(result)
}
