//! Run specification: TOML file sections overlaid by command-line flags,
//! resolved into one canonical JSON document whose hash stamps every output.

use std::fmt;
use std::path::{Path, PathBuf};

use rnnlab::provenance::Provenance;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::commands::{
    BifurcateArgs, EntropyArgs, LandscapeArgs, LyapunovArgs, SimulateArgs, SmoothnessArgs, TrainArgs,
};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<rnnlab::Error> for CliError {
    fn from(e: rnnlab::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else if let rnnlab::Error::Io(_) = e {
            CliError::Io(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Layout of a `--config` file. Every section is optional; unknown keys are errors.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSpec {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub simulate: Option<SimulateArgs>,
    pub bifurcate: Option<BifurcateArgs>,
    pub landscape: Option<LandscapeArgs>,
    pub train: Option<TrainArgs>,
    pub smoothness: Option<SmoothnessArgs>,
    pub entropy: Option<EntropyArgs>,
    pub lyapunov: Option<LyapunovArgs>,
}

impl FileSpec {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }
}

/// `cli` wins wherever it sets a value.
pub fn overlay<T: Serialize + DeserializeOwned>(file: Option<&T>, cli: &T) -> CliResult<T> {
    let Some(file) = file else {
        return Ok(serde_json::from_value(serde_json::to_value(cli).unwrap()).unwrap());
    };
    let mut base = serde_json::to_value(file).unwrap();
    if let (Value::Object(b), Value::Object(c)) = (&mut base, serde_json::to_value(cli).unwrap()) {
        for (k, v) in c {
            if !v.is_null() {
                b.insert(k, v);
            }
        }
    }
    serde_json::from_value(base).map_err(|e| config_err(e.to_string()))
}

/// Shared state of one command invocation.
pub struct Context {
    pub seed: u64,
    pub out: PathBuf,
    pub provenance: Provenance,
    pub resolved: Value,
}

impl Context {
    /// `resolved` excludes output location and thread count, which do not affect results.
    pub fn new(command: &str, seed: u64, out: PathBuf, args: &impl Serialize) -> Self {
        let mut m = Map::new();
        m.insert("command".into(), Value::from(command));
        m.insert("seed".into(), Value::from(seed));
        m.insert("args".into(), strip_nulls(serde_json::to_value(args).unwrap()));
        let resolved = Value::Object(m);
        let provenance = Provenance::new(&resolved.to_string(), seed);
        Self {
            seed,
            out,
            provenance,
            resolved,
        }
    }

    fn path(&self, name: &str) -> CliResult<PathBuf> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", self.out.display())))?;
        Ok(self.out.join(name))
    }

    fn write(&self, name: &str, body: &str) -> CliResult<PathBuf> {
        let p = self.path(name)?;
        std::fs::write(&p, body).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))?;
        Ok(p)
    }

    pub fn write_csv(&self, name: &str, body: &str) -> CliResult<PathBuf> {
        self.write(name, &(self.provenance.csv_comment() + body))
    }

    pub fn write_svg(&self, name: &str, body: &str) -> CliResult<PathBuf> {
        self.write(name, &(self.provenance.svg_comment() + body))
    }

    /// JSON object with `provenance` and `spec` fields added.
    pub fn write_json(&self, name: &str, body: Value) -> CliResult<PathBuf> {
        let mut obj = match body {
            Value::Object(m) => m,
            other => {
                let mut m = Map::new();
                m.insert("result".into(), other);
                m
            }
        };
        obj.insert("provenance".into(), serde_json::to_value(&self.provenance).unwrap());
        obj.insert("spec".into(), self.resolved.clone());
        self.write(name, &(serde_json::to_string_pretty(&Value::Object(obj)).unwrap() + "\n"))
    }
}

fn strip_nulls(v: Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(
            m.into_iter()
                .filter(|(_, v)| !v.is_null())
                .map(|(k, v)| (k, strip_nulls(v)))
                .collect(),
        ),
        other => other,
    }
}

pub fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| config_err(format!("not a number: `{v}`"))))
        .collect()
}

pub fn parse_range(s: &str) -> CliResult<(f64, f64)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| config_err(format!("range `{s}` must look like lo:hi")))?;
    let lo = a.trim().parse::<f64>().map_err(|_| config_err(format!("bad range start `{a}`")))?;
    let hi = b.trim().parse::<f64>().map_err(|_| config_err(format!("bad range end `{b}`")))?;
    if !(lo <= hi) {
        return Err(config_err(format!("range `{s}` is empty")));
    }
    Ok((lo, hi))
}

/// `n` evenly spaced values over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}
