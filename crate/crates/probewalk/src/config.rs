//! Line-oriented `key = value` run configuration with one nesting level for
//! the custom-scheme block. Every parse error names the offending key and the
//! violated constraint; serialization uses shortest round-trip decimals so
//! files re-parse to bit-identical configurations.

use std::collections::BTreeMap;
use std::path::PathBuf;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{BlochVector, Operator, QuantumState};
use crate::probe::{
    build_probe_basis, InteractionHamiltonian, ProbeScheme, DEFAULT_OVERLAP_GATE,
};
use crate::zz::{DiagonalTarget, ZzError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("unknown key `{key}`")]
    UnknownKey { key: String },
    #[error("key `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("missing required key `{key}` in the custom block")]
    MissingCustomKey { key: &'static str },
    #[error("key `alpha`: {0}")]
    Target(#[from] ZzError),
    #[error("key `boundary`: boundary must be an integer multiple of delta (boundary = {boundary}, delta = {delta})")]
    BoundaryGrid { boundary: f64, delta: f64 },
    #[error("custom block: {0}")]
    CustomScheme(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Zz,
    Custom,
}

/// Interpolation table for warp functions, sorted by x.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpTable {
    pub points: Vec<(f64, f64)>,
}

impl WarpTable {
    pub fn constant(v: f64) -> Self {
        WarpTable {
            points: vec![(0.0, v)],
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let pts = &self.points;
        if pts.is_empty() {
            return 0.0;
        }
        if pts.len() == 1 || x <= pts[0].0 {
            return pts[0].1;
        }
        if x >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        let idx = pts.partition_point(|p| p.0 <= x);
        let (x0, v0) = pts[idx - 1];
        let (x1, v1) = pts[idx];
        v0 + (v1 - v0) * (x - x0) / (x1 - x0)
    }
}

/// The custom-scheme block: Hermitian interaction blocks, a static probe
/// triad, and warp tables.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomScheme {
    pub dim: usize,
    pub h_s: Operator,
    pub h_x: Operator,
    pub h_y: Operator,
    pub h_z: Operator,
    pub n1: BlochVector,
    pub n2: BlochVector,
    pub warp_c: WarpTable,
    pub warp_psi: WarpTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scheme: SchemeKind,
    pub alpha: f64,
    pub beta: f64,
    pub boundary: f64,
    pub delta: f64,
    pub trajectories: usize,
    pub seed: u64,
    pub initial_state: Vec<Complex64>,
    pub output_dir: PathBuf,
    pub record_states: bool,
    pub custom: Option<CustomScheme>,
    /// Non-fatal notes produced while parsing (e.g. renormalization).
    pub warnings: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        RunConfig {
            scheme: SchemeKind::Zz,
            alpha: 0.8,
            beta: 0.2,
            boundary: 3.0,
            delta: 0.05,
            trajectories: 10_000,
            seed: 42,
            initial_state: vec![Complex64::new(h, 0.0), Complex64::new(h, 0.0)],
            output_dir: PathBuf::from("out"),
            record_states: false,
            custom: None,
            warnings: Vec::new(),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    v.trim().parse::<f64>().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        message: format!("`{v}` is not a number"),
    })
}

fn parse_usize(key: &str, v: &str) -> Result<usize, ConfigError> {
    v.trim().parse::<usize>().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        message: format!("`{v}` is not a non-negative integer"),
    })
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(ConfigError::BadValue {
            key: key.to_string(),
            message: format!("`{other}` is not a boolean"),
        }),
    }
}

/// Complex pairs `re,im` separated by whitespace.
fn parse_complex_list(key: &str, v: &str) -> Result<Vec<Complex64>, ConfigError> {
    let mut out = Vec::new();
    for token in v.split_whitespace() {
        let (re, im) = token.split_once(',').ok_or_else(|| ConfigError::BadValue {
            key: key.to_string(),
            message: format!("`{token}` is not a re,im pair"),
        })?;
        let re = parse_f64(key, re)?;
        let im = parse_f64(key, im)?;
        if !re.is_finite() || !im.is_finite() {
            return Err(ConfigError::BadValue {
                key: key.to_string(),
                message: "values must be finite (no NaN/Inf)".to_string(),
            });
        }
        out.push(Complex64::new(re, im));
    }
    if out.is_empty() {
        return Err(ConfigError::BadValue {
            key: key.to_string(),
            message: "empty list".to_string(),
        });
    }
    Ok(out)
}

fn parse_vector3(key: &str, v: &str) -> Result<BlochVector, ConfigError> {
    let parts: Vec<&str> = v.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(ConfigError::BadValue {
            key: key.to_string(),
            message: format!("expected 3 components, got {}", parts.len()),
        });
    }
    Ok(BlochVector::new(
        parse_f64(key, parts[0])?,
        parse_f64(key, parts[1])?,
        parse_f64(key, parts[2])?,
    ))
}

fn parse_warp_table(key: &str, v: &str) -> Result<WarpTable, ConfigError> {
    let mut points = Vec::new();
    for token in v.split_whitespace() {
        let (x, val) = token.split_once(':').ok_or_else(|| ConfigError::BadValue {
            key: key.to_string(),
            message: format!("`{token}` is not an x:value pair"),
        })?;
        points.push((parse_f64(key, x)?, parse_f64(key, val)?));
    }
    if points.is_empty() {
        return Err(ConfigError::BadValue {
            key: key.to_string(),
            message: "empty table".to_string(),
        });
    }
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(WarpTable { points })
}

fn matrix_from_list(key: &str, entries: Vec<Complex64>) -> Result<Operator, ConfigError> {
    let n = (entries.len() as f64).sqrt().round() as usize;
    if n * n != entries.len() {
        return Err(ConfigError::BadValue {
            key: key.to_string(),
            message: format!("{} entries do not form a square matrix", entries.len()),
        });
    }
    Ok(Operator::from_entries(n, entries))
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut explicit_state = false;
    let mut in_custom = false;
    let mut custom_raw: BTreeMap<String, String> = BTreeMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line == "[custom]" {
            in_custom = true;
            continue;
        }
        if line.starts_with('[') {
            return Err(ConfigError::Malformed {
                line: lineno + 1,
                text: line.to_string(),
            });
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
            line: lineno + 1,
            text: line.to_string(),
        })?;
        let key = key.trim();
        let value = value.trim();
        if in_custom {
            custom_raw.insert(key.to_string(), value.to_string());
            continue;
        }
        match key {
            "scheme" => {
                cfg.scheme = match value {
                    "zz" => SchemeKind::Zz,
                    "custom" => SchemeKind::Custom,
                    other => {
                        return Err(ConfigError::BadValue {
                            key: key.to_string(),
                            message: format!("`{other}` is not one of zz|custom"),
                        })
                    }
                }
            }
            "alpha" => cfg.alpha = parse_f64(key, value)?,
            "beta" => cfg.beta = parse_f64(key, value)?,
            "boundary" => cfg.boundary = parse_f64(key, value)?,
            "delta" => cfg.delta = parse_f64(key, value)?,
            "trajectories" => cfg.trajectories = parse_usize(key, value)?,
            "seed" => {
                cfg.seed = value.parse::<u64>().map_err(|_| ConfigError::BadValue {
                    key: key.to_string(),
                    message: format!("`{value}` is not an unsigned integer"),
                })?
            }
            "initial_state" => {
                cfg.initial_state = parse_complex_list(key, value)?;
                explicit_state = true;
            }
            "output_dir" => cfg.output_dir = PathBuf::from(value),
            "record_states" => cfg.record_states = parse_bool(key, value)?,
            other => {
                return Err(ConfigError::UnknownKey {
                    key: other.to_string(),
                })
            }
        }
    }

    if !custom_raw.is_empty() || in_custom {
        cfg.custom = Some(parse_custom_block(custom_raw)?);
    }
    validate(&mut cfg, explicit_state)?;
    Ok(cfg)
}

fn parse_custom_block(raw: BTreeMap<String, String>) -> Result<CustomScheme, ConfigError> {
    let get = |key: &'static str| -> Result<&String, ConfigError> {
        raw.get(key).ok_or(ConfigError::MissingCustomKey { key })
    };
    let dim = parse_usize("dim", get("dim")?)?;
    if dim == 0 || dim > 8 {
        return Err(ConfigError::BadValue {
            key: "dim".to_string(),
            message: format!("system dimension must be 1..=8, got {dim}"),
        });
    }
    let mut matrices: BTreeMap<&str, Operator> = BTreeMap::new();
    for key in ["h_s", "h_x", "h_y", "h_z"] {
        let op = match raw.get(key) {
            Some(text) => matrix_from_list(key, parse_complex_list(key, text)?)?,
            None => Operator::zeros(dim),
        };
        if op.dim() != dim {
            return Err(ConfigError::BadValue {
                key: key.to_string(),
                message: format!("matrix is {0}×{0} but dim = {dim}", op.dim()),
            });
        }
        if !op.is_hermitian() {
            return Err(ConfigError::BadValue {
                key: key.to_string(),
                message: "matrix is not Hermitian".to_string(),
            });
        }
        matrices.insert(key, op);
    }
    for key in raw.keys() {
        if !matches!(
            key.as_str(),
            "dim" | "h_s" | "h_x" | "h_y" | "h_z" | "n1" | "n2" | "warp_c" | "warp_psi"
        ) {
            return Err(ConfigError::UnknownKey {
                key: format!("custom.{key}"),
            });
        }
    }
    let n1 = match raw.get("n1") {
        Some(v) => parse_vector3("n1", v)?,
        None => BlochVector::new(1.0, 0.0, 0.0),
    };
    let n2 = match raw.get("n2") {
        Some(v) => parse_vector3("n2", v)?,
        None => BlochVector::new(0.0, 1.0, 0.0),
    };
    let warp_c = match raw.get("warp_c") {
        Some(v) => parse_warp_table("warp_c", v)?,
        None => WarpTable::constant(0.0),
    };
    let warp_psi = match raw.get("warp_psi") {
        Some(v) => parse_warp_table("warp_psi", v)?,
        None => WarpTable::constant(0.0),
    };
    Ok(CustomScheme {
        dim,
        h_s: matrices.remove("h_s").unwrap(),
        h_x: matrices.remove("h_x").unwrap(),
        h_y: matrices.remove("h_y").unwrap(),
        h_z: matrices.remove("h_z").unwrap(),
        n1,
        n2,
        warp_c,
        warp_psi,
    })
}

/// Re-run validation after programmatic edits (flag overrides, sweeps).
pub fn revalidate(cfg: &mut RunConfig) -> Result<(), ConfigError> {
    cfg.warnings.clear();
    validate(cfg, true)
}

fn validate(cfg: &mut RunConfig, explicit_state: bool) -> Result<(), ConfigError> {
    if cfg.delta <= 0.0 {
        return Err(ConfigError::BadValue {
            key: "delta".to_string(),
            message: "delta must be positive".to_string(),
        });
    }
    if cfg.boundary <= 0.0 {
        return Err(ConfigError::BadValue {
            key: "boundary".to_string(),
            message: "boundary must be positive".to_string(),
        });
    }
    let k = (cfg.boundary / cfg.delta).round();
    if (cfg.boundary - k * cfg.delta).abs() > 1e-12 {
        return Err(ConfigError::BoundaryGrid {
            boundary: cfg.boundary,
            delta: cfg.delta,
        });
    }
    if cfg.scheme == SchemeKind::Zz {
        // Full zz feasibility at parse time.
        DiagonalTarget::new(cfg.alpha, cfg.beta)?;
        crate::zz::ab_from_target(cfg.alpha, cfg.beta, cfg.boundary)?;
    }
    if cfg.trajectories == 0 {
        return Err(ConfigError::BadValue {
            key: "trajectories".to_string(),
            message: "at least one trajectory is required".to_string(),
        });
    }
    let expected_dim = match (&cfg.scheme, &cfg.custom) {
        (SchemeKind::Custom, Some(c)) => c.dim,
        (SchemeKind::Custom, None) => {
            return Err(ConfigError::BadValue {
                key: "scheme".to_string(),
                message: "scheme = custom requires a [custom] block".to_string(),
            })
        }
        _ => 2,
    };
    if !explicit_state && expected_dim != 2 {
        let mut amps = vec![Complex64::ZERO; expected_dim];
        let norm = (expected_dim as f64).sqrt();
        for a in &mut amps {
            *a = Complex64::new(1.0 / norm, 0.0);
        }
        cfg.initial_state = amps;
    }
    if cfg.initial_state.len() != expected_dim {
        return Err(ConfigError::BadValue {
            key: "initial_state".to_string(),
            message: format!(
                "state has {} amplitudes but the system dimension is {expected_dim}",
                cfg.initial_state.len()
            ),
        });
    }
    let norm: f64 = cfg
        .initial_state
        .iter()
        .map(|a| a.norm_sqr())
        .sum::<f64>()
        .sqrt();
    if norm < 1e-12 {
        return Err(ConfigError::BadValue {
            key: "initial_state".to_string(),
            message: "state has zero norm".to_string(),
        });
    }
    if (norm - 1.0).abs() > 1e-6 {
        cfg.warnings.push(format!(
            "initial_state renormalized (norm was {norm:.9})"
        ));
    }
    for a in &mut cfg.initial_state {
        *a /= norm;
    }
    Ok(())
}

/// Render a configuration back to the line format; `parse_config` of the
/// output yields an equal configuration.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let mut out = String::new();
    let scheme = match cfg.scheme {
        SchemeKind::Zz => "zz",
        SchemeKind::Custom => "custom",
    };
    out.push_str(&format!("scheme = {scheme}\n"));
    out.push_str(&format!("alpha = {}\n", cfg.alpha));
    out.push_str(&format!("beta = {}\n", cfg.beta));
    out.push_str(&format!("boundary = {}\n", cfg.boundary));
    out.push_str(&format!("delta = {}\n", cfg.delta));
    out.push_str(&format!("trajectories = {}\n", cfg.trajectories));
    out.push_str(&format!("seed = {}\n", cfg.seed));
    let state = cfg
        .initial_state
        .iter()
        .map(|a| format!("{},{}", a.re, a.im))
        .collect::<Vec<_>>()
        .join(" ");
    out.push_str(&format!("initial_state = {state}\n"));
    out.push_str(&format!("output_dir = {}\n", cfg.output_dir.display()));
    out.push_str(&format!("record_states = {}\n", cfg.record_states));
    if let Some(c) = &cfg.custom {
        out.push_str("\n[custom]\n");
        out.push_str(&format!("dim = {}\n", c.dim));
        let matrix = |op: &Operator| {
            op.entries()
                .iter()
                .map(|e| format!("{},{}", e.re, e.im))
                .collect::<Vec<_>>()
                .join(" ")
        };
        out.push_str(&format!("h_s = {}\n", matrix(&c.h_s)));
        out.push_str(&format!("h_x = {}\n", matrix(&c.h_x)));
        out.push_str(&format!("h_y = {}\n", matrix(&c.h_y)));
        out.push_str(&format!("h_z = {}\n", matrix(&c.h_z)));
        out.push_str(&format!("n1 = {} {} {}\n", c.n1.x, c.n1.y, c.n1.z));
        out.push_str(&format!("n2 = {} {} {}\n", c.n2.x, c.n2.y, c.n2.z));
        let table = |t: &WarpTable| {
            t.points
                .iter()
                .map(|(x, v)| format!("{x}:{v}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        out.push_str(&format!("warp_c = {}\n", table(&c.warp_c)));
        out.push_str(&format!("warp_psi = {}\n", table(&c.warp_psi)));
    }
    out
}

/// Build the probe scheme described by a custom block.
pub fn build_custom_scheme(cfg: &RunConfig) -> Result<ProbeScheme, ConfigError> {
    let block = cfg
        .custom
        .as_ref()
        .ok_or_else(|| ConfigError::CustomScheme("missing [custom] block".to_string()))?;
    let hamiltonian = InteractionHamiltonian::new(
        block.h_s.clone(),
        block.h_x.clone(),
        block.h_y.clone(),
        block.h_z.clone(),
    )
    .map_err(|e| ConfigError::CustomScheme(e.to_string()))?;
    let basis = build_probe_basis(&block.n1, &block.n2, cfg.delta, DEFAULT_OVERLAP_GATE)
        .map_err(|e| ConfigError::CustomScheme(e.to_string()))?;
    let warp_c = block.warp_c.clone();
    let warp_psi = block.warp_psi.clone();
    Ok(ProbeScheme::new(
        hamiltonian,
        move |_| basis,
        move |x| warp_c.eval(x),
        move |x| warp_psi.eval(x),
    ))
}

/// The initial state as a [`QuantumState`].
pub fn initial_state(cfg: &RunConfig) -> QuantumState {
    QuantumState::new(cfg.initial_state.clone()).expect("validated at parse time")
}
