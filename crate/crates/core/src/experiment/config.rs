use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use super::dataset::DataSpec;
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

/// Keys of the experiment document that are not part of [`TrainConfig`].
const EXPERIMENT_KEYS: [&str; 5] = ["name", "preset", "seeds", "data", "sweep"];

/// Table keys that select an enum variant; an overlay that changes one
/// replaces the whole table instead of merging into it.
const TAG_KEYS: [&str; 2] = ["arch", "source"];

const CNN_COMMON: &str = r#"
model = { arch = "small_cnn", channels = [32, 64] }
[optim]
batch_size = 64
mu = 7
steps = 1048576
lr = 0.03
momentum = 0.9
nesterov = true
weight_decay = 5e-4
ema_decay = 0.999
[loss]
lambda_dc = 1.0
tau = 0.95
[fusion]
alpha = 0.1
"#;

const PRESETS: [(&str, &str); 7] = [
    ("cnn-cifar10", CNN_COMMON),
    ("cnn-cifar100", "[optim]\nweight_decay = 1e-3\n"),
    ("cnn-stl10", CNN_COMMON),
    (
        "vit",
        r#"
[optim]
batch_size = 8
mu = 7
steps = 204800
lr = 5e-4
weight_decay = 5e-4
ema_decay = 0.999
[loss]
lambda_dc = 0.1
[fusion]
alpha = 0.1
"#,
    ),
    (
        "desk",
        r#"
seeds = [0, 1, 2]
eval_every = 500
checkpoint_every = 500
model = { arch = "mlp", hidden = [64, 64], activation = "relu", batch_norm = false }
data = { source = "synthetic", generator = "two-moons", n_labeled = 4, n_unlabeled = 2000, n_test = 1000, noise = 0.1 }
[optim]
batch_size = 16
mu = 7
steps = 3000
lr = 0.03
ema_decay = 0.99
[loss]
lambda_u = 1.0
lambda_dc = 10.0
tau = 0.8
[fusion]
alpha = 0.1
[augment]
jitter_sigma = 0.35
strong_scale = 3.0
"#,
    ),
    (
        "supervised",
        r#"
[loss]
lambda_u = 0.0
lambda_dc = 0.0
[fusion]
enabled = false
[plus]
enabled = false
"#,
    ),
    (
        "fully-supervised",
        r#"
data = { all_labeled = true }
[loss]
lambda_u = 0.0
lambda_dc = 0.0
[fusion]
enabled = false
[plus]
enabled = false
"#,
    ),
];

/// Names accepted by `preset = ...`.
pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// The overlay a preset applies. `cnn-cifar100` builds on `cnn-cifar10`.
pub fn preset_table(name: &str) -> Result<Table> {
    let mut out = Table::new();
    let parts: Vec<&str> = match name {
        "cnn-cifar100" => vec![CNN_COMMON, PRESETS[1].1],
        _ => vec![PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown preset {name:?} (known: {})",
                    preset_names().collect::<Vec<_>>().join(", ")
                ))
            })?],
    };
    for p in parts {
        let t: Table = toml::from_str(p).map_err(|e| Error::Internal(format!("preset {name}: {e}")))?;
        merge(&mut out, t);
    }
    Ok(out)
}

/// Recursively overlay `over` onto `base`.
pub fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) if !switches_variant(b, &o) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn switches_variant(base: &Table, over: &Table) -> bool {
    TAG_KEYS
        .iter()
        .any(|t| over.get(*t).is_some_and(|v| base.get(*t) != Some(v)))
}

/// Parse the right-hand side of `key=value`: TOML syntax when it parses,
/// a bare string otherwise.
pub fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Set a dotted key such as `loss.lambda_dc` inside `table`.
pub fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("malformed key {key:?}")));
    }
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in path {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(Error::config(format!("{key}: {p} is not a table"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parse `key=value` override strings into an overlay table.
pub fn overrides_table<S: AsRef<str>>(overrides: &[S]) -> Result<Table> {
    let mut t = Table::new();
    for o in overrides {
        let o = o.as_ref().trim_start_matches("--");
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override {o:?} is not key=value")))?;
        set_dotted(&mut t, k.trim(), parse_value(v.trim()))?;
    }
    Ok(t)
}

/// A fully resolved experiment: one training configuration, the data it
/// runs on, the seeds to repeat over and an optional grid of overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub presets: Vec<String>,
    pub train: TrainConfig,
    pub data: Option<DataSpec>,
    pub seeds: Vec<u64>,
    /// Dotted training-config key to the values it takes.
    pub sweep: BTreeMap<String, Vec<Value>>,
}

fn presets_of(v: Option<Value>) -> Result<Vec<String>> {
    match v {
        None => Ok(Vec::new()),
        Some(Value::String(s)) => Ok(vec![s]),
        Some(Value::Array(a)) => a
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                other => Err(Error::config(format!("preset entries must be strings, got {other}"))),
            })
            .collect(),
        Some(other) => Err(Error::config(format!("preset must be a string or list, got {other}"))),
    }
}

fn type_error(e: impl std::fmt::Display) -> Error {
    Error::config(e.to_string().trim().to_string())
}

fn train_from_table(t: Table) -> Result<TrainConfig> {
    let cfg: TrainConfig = Value::Table(t).try_into().map_err(type_error)?;
    cfg.validate()?;
    Ok(cfg)
}

fn default_table() -> Table {
    match Value::try_from(TrainConfig::default()) {
        Ok(Value::Table(t)) => t,
        _ => unreachable!("TrainConfig serializes to a table"),
    }
}

impl ExperimentSpec {
    /// Resolve a parsed document plus command-line overrides. Presets apply
    /// first, in order, then the document, then the overrides.
    pub fn resolve(doc: Table, overrides: Table) -> Result<Self> {
        let mut user = doc;
        merge(&mut user, overrides);
        let presets = presets_of(user.remove("preset"))?;

        let mut full = default_table();
        for p in &presets {
            merge(&mut full, preset_table(p)?);
        }
        merge(&mut full, user);

        let name = match full.remove("name") {
            None => "experiment".to_string(),
            Some(Value::String(s)) if !s.is_empty() && !s.contains(['/', '\\']) => s,
            Some(other) => return Err(Error::config(format!("name must be a plain string, got {other}"))),
        };
        let data = full
            .remove("data")
            .map(|v| {
                v.try_into::<DataSpec>()
                    .map_err(|e| Error::config(format!("[data]: {}", e.to_string().trim())))
            })
            .transpose()?;
        let seeds_v = full.remove("seeds");
        let sweep: BTreeMap<String, Vec<Value>> = match full.remove("sweep") {
            None => BTreeMap::new(),
            Some(v) => v
                .try_into()
                .map_err(|e| Error::config(format!("[sweep]: {}", e.to_string().trim())))?,
        };
        let train = train_from_table(full)?;
        let seeds: Vec<u64> = match seeds_v {
            None => vec![train.seed],
            Some(v) => v
                .try_into()
                .map_err(|e| Error::config(format!("seeds: {}", e.to_string().trim())))?,
        };

        let spec = ExperimentSpec {
            name,
            presets,
            train,
            data,
            seeds,
            sweep,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn from_toml_str(text: &str, overrides: Table) -> Result<Self> {
        let doc: Table = toml::from_str(text).map_err(type_error)?;
        Self::resolve(doc, overrides)
    }

    pub fn from_file(path: &Path, overrides: Table) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    fn check(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must not be empty"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::config("seeds must be distinct"));
        }
        for (k, vs) in &self.sweep {
            if vs.is_empty() {
                return Err(Error::config(format!("sweep.{k} has no values")));
            }
            if EXPERIMENT_KEYS.contains(&k.split('.').next().unwrap_or_default()) {
                return Err(Error::config(format!("sweep.{k}: only training keys can be swept")));
            }
        }
        for p in self.points() {
            self.config_at(&p, self.seeds[0])?;
        }
        Ok(())
    }

    /// Every grid point, in lexicographic key order with the last key
    /// varying fastest. A spec without a sweep has one empty point.
    pub fn points(&self) -> Vec<BTreeMap<String, Value>> {
        let mut out = vec![BTreeMap::new()];
        for (k, vs) in &self.sweep {
            out = out
                .into_iter()
                .flat_map(|p| {
                    vs.iter().map(move |v| {
                        let mut p = p.clone();
                        p.insert(k.clone(), v.clone());
                        p
                    })
                })
                .collect();
        }
        out
    }

    /// The training configuration at one grid point and seed.
    pub fn config_at(&self, point: &BTreeMap<String, Value>, seed: u64) -> Result<TrainConfig> {
        let mut t = match Value::try_from(&self.train) {
            Ok(Value::Table(t)) => t,
            _ => unreachable!("TrainConfig serializes to a table"),
        };
        let mut over = Table::new();
        for (k, v) in point {
            set_dotted(&mut over, k, v.clone())?;
        }
        merge(&mut t, over);
        let mut cfg = train_from_table(t).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("at sweep point {}: {m}", point_label(point))),
            other => other,
        })?;
        cfg.seed = seed;
        Ok(cfg)
    }

    /// Hex SHA-256 of the resolved spec.
    pub fn hash(&self) -> String {
        digest_json(self)
    }

    /// The resolved training configuration as TOML.
    pub fn train_toml(&self) -> Result<String> {
        toml::to_string(&self.train).map_err(|e| Error::Internal(e.to_string()))
    }
}

/// Hex SHA-256 of a resolved training configuration.
pub fn config_hash(cfg: &TrainConfig) -> String {
    digest_json(cfg)
}

fn digest_json<T: Serialize>(v: &T) -> String {
    let bytes = serde_json::to_vec(v).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// `key=value,key=value` rendering of a grid point; `base` when empty.
pub fn point_label(point: &BTreeMap<String, Value>) -> String {
    if point.is_empty() {
        return "base".to_string();
    }
    point
        .iter()
        .map(|(k, v)| match v {
            Value::String(s) => format!("{k}={s}"),
            v => format!("{k}={v}"),
        })
        .collect::<Vec<_>>()
        .join(",")
}

/// Resolve a config file (or an empty document) and return the training
/// configuration it describes.
pub fn validate_config(path: Option<&Path>, overrides: Table) -> Result<TrainConfig> {
    let spec = match path {
        Some(p) => ExperimentSpec::from_file(p, overrides)?,
        None => ExperimentSpec::resolve(Table::new(), overrides)?,
    };
    Ok(spec.train)
}
