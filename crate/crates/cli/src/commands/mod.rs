mod analyze;
mod bounds;
mod simulate;
mod train;

use std::path::{Path, PathBuf};

use clap::Args;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rnnlab::cells::{
    appendix_c, Activation, Cell, CellDocument, LstmCell, OrthogonalRnnCell, ProjectionConfig, Readout,
    StableLstmCell, VanillaRnnCell,
};
use rnnlab::statespace::DynamicalModel;
use serde::{Deserialize, Serialize};

use crate::config::{config_err, parse_list, CliResult};

pub use analyze::{run_bifurcate, run_landscape, run_lyapunov};
pub use bounds::{run_entropy, run_smoothness};
pub use simulate::run_simulate;
pub use train::run_train;

/// Where the model comes from: a weights file (the shipped one via `appendix_c`)
/// or a freshly initialized cell.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct CellSource {
    /// Cell document (JSON); `appendix_c` selects the shipped two-unit LSTM.
    #[arg(long)]
    pub weights: Option<String>,
    /// Cell kind for random initialization: lstm, slstm, ornn, vanilla.
    #[arg(long)]
    pub cell: Option<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub input_dim: Option<usize>,
    /// Linear readout width; identity readout when omitted.
    #[arg(long)]
    pub outputs: Option<usize>,
    /// Activation of the orthogonal cell: tanh or relu.
    #[arg(long)]
    pub activation: Option<String>,
}

fn activation(s: Option<&str>) -> CliResult<Activation> {
    match s.unwrap_or("tanh") {
        "tanh" => Ok(Activation::Tanh),
        "relu" => Ok(Activation::Relu),
        other => Err(config_err(format!("unknown activation `{other}`"))),
    }
}

pub fn random_cell(
    kind: &str,
    hidden: usize,
    input_dim: usize,
    readout: Readout,
    act: Activation,
    seed: u64,
) -> CliResult<Cell> {
    if hidden == 0 {
        return Err(config_err("hidden size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match kind {
        "lstm" => Cell::Lstm(LstmCell::random(hidden, input_dim, true, readout, &mut rng)),
        "slstm" => Cell::StableLstm(StableLstmCell::new(
            LstmCell::random(hidden, input_dim, true, readout, &mut rng),
            ProjectionConfig::default(),
        )?),
        "ornn" => Cell::Orthogonal(OrthogonalRnnCell::random(hidden, input_dim, true, act, readout, &mut rng)),
        "vanilla" => Cell::Vanilla(VanillaRnnCell::random(hidden, input_dim, readout, &mut rng)),
        other => return Err(config_err(format!("unknown cell kind `{other}`"))),
    })
}

pub fn read_document(path: &str) -> CliResult<CellDocument> {
    if path == "appendix_c" {
        return Ok(appendix_c::document());
    }
    let p = Path::new(path);
    if !p.exists() {
        return Err(config_err(format!("weights file not found: {}", p.display())));
    }
    CellDocument::read(p).map_err(|e| config_err(e.to_string()))
}

impl CellSource {
    /// The cell and its initial state (from the document, else zeros).
    pub fn load(&self, seed: u64) -> CliResult<(Cell, DVector<f64>)> {
        if let Some(w) = &self.weights {
            let doc = read_document(w)?;
            let x0 = doc.initial_state.clone();
            let cell = doc.into_cell().map_err(|e| config_err(format!("{w}: {e}")))?;
            let x0 = match x0 {
                Some(v) if v.len() == cell.state_dim() => DVector::from_vec(v),
                Some(v) => {
                    return Err(config_err(format!(
                        "{w}: initial state has {} entries, cell needs {}",
                        v.len(),
                        cell.state_dim()
                    )))
                }
                None => DVector::zeros(cell.state_dim()),
            };
            return Ok((cell, x0));
        }
        let kind = self
            .cell
            .as_deref()
            .ok_or_else(|| config_err("give --weights or --cell"))?;
        let readout = self.outputs.map_or(Readout::Identity, Readout::Linear);
        let cell = random_cell(
            kind,
            self.hidden.unwrap_or(2),
            self.input_dim.unwrap_or(0),
            readout,
            activation(self.activation.as_deref())?,
            seed,
        )?;
        let x0 = DVector::zeros(cell.state_dim());
        Ok((cell, x0))
    }
}

/// Cell with `θ ← s·θ`.
pub fn scaled(cell: &Cell, s: f64) -> CliResult<Cell> {
    let mut c = cell.clone();
    let p = c.params().scaled(s);
    c.set_param_values(p.values())?;
    Ok(c)
}

/// Constant input from a comma list, zeros of the right size when absent.
pub fn constant_input(spec: Option<&str>, dim: usize) -> CliResult<DVector<f64>> {
    match spec {
        None => Ok(DVector::zeros(dim)),
        Some(s) => {
            let v = parse_list(s)?;
            if v.len() != dim {
                return Err(config_err(format!("input has {} entries, model takes {dim}", v.len())));
            }
            Ok(DVector::from_vec(v))
        }
    }
}

pub fn initial_state(spec: Option<&str>, default: DVector<f64>) -> CliResult<DVector<f64>> {
    match spec {
        None => Ok(default),
        Some(s) => {
            let v = parse_list(s)?;
            if v.len() != default.len() {
                return Err(config_err(format!(
                    "x0 has {} entries, state has {}",
                    v.len(),
                    default.len()
                )));
            }
            Ok(DVector::from_vec(v))
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub source_flags: CellSource,
    #[arg(skip)]
    pub weights: Option<String>,
    #[arg(skip)]
    pub cell: Option<String>,
    #[arg(skip)]
    pub hidden: Option<usize>,
    #[arg(skip)]
    pub input_dim: Option<usize>,
    #[arg(skip)]
    pub outputs: Option<usize>,
    #[arg(skip)]
    pub activation: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Constant input, comma separated.
    #[arg(long)]
    pub input: Option<String>,
    /// Initial state, comma separated.
    #[arg(long)]
    pub x0: Option<String>,
    /// Parameter scale `s` in `θ(s) = s·θ`.
    #[arg(long)]
    pub scale: Option<f64>,
}

/// Copy the clap-side cell flags into the serializable fields.
macro_rules! cell_fields {
    ($t:ty) => {
        impl $t {
            pub fn absorb_flags(&mut self) {
                let f = std::mem::take(&mut self.source_flags);
                self.weights = self.weights.take().or(f.weights);
                self.cell = self.cell.take().or(f.cell);
                self.hidden = self.hidden.or(f.hidden);
                self.input_dim = self.input_dim.or(f.input_dim);
                self.outputs = self.outputs.or(f.outputs);
                self.activation = self.activation.take().or(f.activation);
            }

            pub fn source(&self) -> CellSource {
                CellSource {
                    weights: self.weights.clone(),
                    cell: self.cell.clone(),
                    hidden: self.hidden,
                    input_dim: self.input_dim,
                    outputs: self.outputs,
                    activation: self.activation.clone(),
                }
            }
        }
    };
}

cell_fields!(SimulateArgs);
cell_fields!(BifurcateArgs);
cell_fields!(LandscapeArgs);
cell_fields!(LyapunovArgs);

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BifurcateArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub source_flags: CellSource,
    #[arg(skip)]
    pub weights: Option<String>,
    #[arg(skip)]
    pub cell: Option<String>,
    #[arg(skip)]
    pub hidden: Option<usize>,
    #[arg(skip)]
    pub input_dim: Option<usize>,
    #[arg(skip)]
    pub outputs: Option<usize>,
    #[arg(skip)]
    pub activation: Option<String>,
    /// `s` (parameter scale) or `epoch` (training snapshots).
    #[arg(long)]
    pub sweep: Option<String>,
    /// Sweep range `lo:hi` for `--sweep s`.
    #[arg(long)]
    pub range: Option<String>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub record: Option<usize>,
    /// `output:i`, `state:i`, `mean` or `mean:n`.
    #[arg(long)]
    pub projection: Option<String>,
    /// `none`, `argmax` or `identity`.
    #[arg(long)]
    pub feedback: Option<String>,
    /// Constant (or first) input, comma separated.
    #[arg(long)]
    pub input: Option<String>,
    /// Training run directory for `--sweep epoch`.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Also estimate the largest Lyapunov exponent per sweep value.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub lyapunov: Option<bool>,
    /// Distinct-sample tolerance for classification.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandscapeArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub source_flags: CellSource,
    #[arg(skip)]
    pub weights: Option<String>,
    #[arg(skip)]
    pub cell: Option<String>,
    #[arg(skip)]
    pub hidden: Option<usize>,
    #[arg(skip)]
    pub input_dim: Option<usize>,
    #[arg(skip)]
    pub outputs: Option<usize>,
    #[arg(skip)]
    pub activation: Option<String>,
    /// `true` for θ(s) = s·θ_true; `true,random` for the 2-D sweep.
    #[arg(long)]
    pub along: Option<String>,
    #[arg(long)]
    pub range: Option<String>,
    #[arg(long)]
    pub range2: Option<String>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub resolution2: Option<usize>,
    /// Sequence length of the generated data set.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Scale of the data-generating parameters.
    #[arg(long)]
    pub data_scale: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub gradient: Option<bool>,
    /// Only report local minima inside `lo:hi` in the summary counts.
    #[arg(long)]
    pub census: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub source_flags: CellSource,
    #[arg(skip)]
    pub weights: Option<String>,
    #[arg(skip)]
    pub cell: Option<String>,
    #[arg(skip)]
    pub hidden: Option<usize>,
    #[arg(skip)]
    pub input_dim: Option<usize>,
    #[arg(skip)]
    pub outputs: Option<usize>,
    #[arg(skip)]
    pub activation: Option<String>,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub input: Option<String>,
    /// Number of exponents (1 = largest only).
    #[arg(long)]
    pub spectrum: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainArgs {
    /// lstm, slstm, ornn or vanilla.
    #[arg(long)]
    pub cell: Option<String>,
    /// sine or symbols.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// `epoch:factor,…`; `none` disables the task default.
    #[arg(long)]
    pub lr_drops: Option<String>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    /// Symbol sequence length.
    #[arg(long)]
    pub length: Option<usize>,
    /// Sine input encoding: centred or over_pi.
    #[arg(long)]
    pub encoding: Option<String>,
    /// Early stop once validation accuracy reaches this value.
    #[arg(long)]
    pub stop_at: Option<f64>,
    /// Train with `z_t = (y_{t−1}, u_t)`.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub teacher_forcing: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothnessArgs {
    /// Evaluate the closed-form bounds.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub bounds: Option<bool>,
    /// Empirical estimate on the scalar system `x' = a·x + θ·u`.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub empirical: Option<bool>,
    #[arg(long = "Lf")]
    #[serde(rename = "lf")]
    pub lf: Option<f64>,
    #[arg(long = "Lg")]
    #[serde(rename = "lg")]
    pub lg: Option<f64>,
    #[arg(long = "Lf-prime")]
    #[serde(rename = "lf_prime")]
    pub lf_prime: Option<f64>,
    #[arg(long = "Lg-prime")]
    #[serde(rename = "lg_prime")]
    pub lg_prime: Option<f64>,
    #[arg(long = "Ly")]
    #[serde(rename = "ly")]
    pub ly: Option<f64>,
    #[arg(long = "N")]
    #[serde(rename = "n")]
    pub n: Option<usize>,
    /// squared or xent.
    #[arg(long)]
    pub loss: Option<String>,
    /// Output dimension entering the cross-entropy constant.
    #[arg(long)]
    pub ny: Option<usize>,
    /// `M(t) = c·S(t)`.
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub sequences: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntropyArgs {
    /// `diag:a,b,…` or `rows:a,b;c,d`.
    #[arg(long = "A")]
    #[serde(rename = "a")]
    pub a: Option<String>,
    #[arg(long = "T")]
    #[serde(rename = "t")]
    pub t: Option<usize>,
    /// Lipschitz constant used in the rate check; defaults to `σ_max(A)`.
    #[arg(long = "Lf")]
    #[serde(rename = "lf")]
    pub lf: Option<f64>,
    /// Isotropic initial variance.
    #[arg(long)]
    pub sigma0: Option<f64>,
}
