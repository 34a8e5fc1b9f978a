//! Run configuration: loading, overrides, canonical form and hashing.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};
use sha2::{Digest, Sha256};

use momenta::block::BlockContext;
use momenta::oracles::OracleContext;
use momenta::schedules::ConditionSet;
use momenta::{block_registry, objective_registry, oracle_registry};
use momenta::{BlockPolicy, GradientOracle, Objective, UnifiedParams};

/// Keys that select which trajectories to produce or where to put them.
/// They are excluded from the hash so every seed of a batch shares it.
const UNHASHED_KEYS: [&str; 2] = ["seeds", "output_dir"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub objective: Value,
    pub oracle: Value,
    #[serde(default = "full_block")]
    pub block: Value,
    pub params: UnifiedParams,
    pub horizon: u64,
    pub w0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckSpec>,
}

/// Exponents for `momenta check` when they cannot be read off the oracle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_set: Option<ConditionSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

fn full_block() -> Value {
    serde_json::json!({ "kind": "full" })
}

/// A parsed config together with the canonical JSON it was parsed from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub canonical: Value,
}

impl Loaded {
    pub fn from_path(path: &Path, overrides: &[String]) -> Result<Self> {
        Self::from_value(read_json(path)?, overrides)
    }

    pub fn from_value(mut raw: Value, overrides: &[String]) -> Result<Self> {
        for o in overrides {
            apply_override(&mut raw, o)?;
        }
        let canonical = canonicalize(&raw);
        let config = parse_config(&canonical)?;
        Ok(Self { config, canonical })
    }

    /// SHA-256 of the canonical JSON, minus the seed list and output path.
    pub fn hash(&self) -> String {
        config_hash(&self.canonical)
    }

    pub fn objective(&self) -> Result<Arc<dyn Objective>> {
        let obj = objective_registry()
            .build(&self.config.objective, &())
            .map_err(|e| anyhow!("at /objective: {e}"))?;
        let d = obj.dim();
        if self.config.w0.len() != d {
            bail!("at /w0: expected {d} coordinates, got {}", self.config.w0.len());
        }
        if let Some(v0) = &self.config.v0 {
            if v0.len() != d {
                bail!("at /v0: expected {d} coordinates, got {}", v0.len());
            }
        }
        Ok(obj)
    }

    pub fn oracle(&self, objective: Arc<dyn Objective>, seed: u64) -> Result<Arc<dyn GradientOracle>> {
        oracle_registry()
            .build(&self.config.oracle, &OracleContext { objective, seed })
            .map_err(|e| anyhow!("at /oracle: {e}"))
    }

    pub fn block(&self, seed: u64) -> Result<Arc<dyn BlockPolicy>> {
        block_registry()
            .build(&self.config.block, &BlockContext { seed })
            .map_err(|e| anyhow!("at /block: {e}"))
    }
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("config {} is not valid JSON", path.display()))
}

pub fn config_hash(canonical: &Value) -> String {
    let mut v = canonical.clone();
    if let Value::Object(m) = &mut v {
        for k in UNHASHED_KEYS {
            m.remove(k);
        }
    }
    let bytes = serde_json::to_vec(&v).expect("canonical JSON serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Deserialize with the failing location reported as a JSON pointer.
pub fn parse_config(v: &Value) -> Result<RunConfig> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let pointer = json_pointer(e.path());
        anyhow!("at {pointer}: {}", e.into_inner())
    })
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => {
                out.push('/');
                out.push_str(&key.replace('~', "~0").replace('/', "~1"));
            }
            Segment::Enum { .. } | Segment::Unknown => {}
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// Sorted keys (serde_json's map is ordered) and numbers normalized through
/// f64: integral values print as integers, everything else as the shortest
/// round-tripping decimal. Integers beyond 2^53 are kept exactly.
pub fn canonicalize(v: &Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(m.iter().map(|(k, v)| (k.clone(), canonicalize(v))).collect()),
        Value::Array(a) => Value::Array(a.iter().map(canonicalize).collect()),
        Value::Number(n) => Value::Number(normalize_number(n)),
        other => other.clone(),
    }
}

fn normalize_number(n: &Number) -> Number {
    if n.is_u64() || n.is_i64() {
        return n.clone();
    }
    let x = n.as_f64().expect("finite JSON number");
    const EXACT: f64 = 9_007_199_254_740_992.0;
    if x.fract() == 0.0 && x.abs() < EXACT {
        Number::from(x as i64)
    } else {
        Number::from_f64(x).expect("finite JSON number")
    }
}

/// `dotted.key=value`; the path resolves from the root, or under `params`
/// when its first segment is not a top-level key. The value is parsed as
/// JSON, falling back to a plain string.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override '{spec}' must look like dotted.key=value"))?;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        bail!("override '{spec}' has an empty key segment");
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let obj = root
        .as_object_mut()
        .ok_or_else(|| anyhow!("config root must be a JSON object"))?;
    let in_params = !obj.contains_key(segments[0])
        && obj.get("params").and_then(|p| p.get(segments[0])).is_some();
    let mut cur: &mut Value = root;
    if in_params {
        cur = &mut cur["params"];
    }
    let (last, parents) = segments.split_last().expect("non-empty path");
    for seg in parents {
        cur = step(cur, seg).ok_or_else(|| anyhow!("override '{spec}': no key '{seg}' in config"))?;
    }
    match cur {
        Value::Object(m) => {
            m.insert(last.to_string(), value);
        }
        Value::Array(a) => {
            let i: usize = last
                .parse()
                .map_err(|_| anyhow!("override '{spec}': '{last}' is not an array index"))?;
            let slot = a
                .get_mut(i)
                .ok_or_else(|| anyhow!("override '{spec}': index {i} out of range"))?;
            *slot = value;
        }
        _ => bail!("override '{spec}': '{}' is not an object or array", parents.join(".")),
    }
    Ok(())
}

fn step<'a>(v: &'a mut Value, seg: &str) -> Option<&'a mut Value> {
    match v {
        Value::Object(m) => m.get_mut(seg),
        Value::Array(a) => seg.parse::<usize>().ok().and_then(move |i| a.get_mut(i)),
        _ => None,
    }
}

/// Output root: `--out`, then the config's `output_dir`, then
/// `MOMENTA_DEFAULT_OUT`, then `momenta-out`.
pub fn output_root(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.map(Path::to_path_buf))
        .or_else(|| std::env::var_os("MOMENTA_DEFAULT_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("momenta-out"))
}
