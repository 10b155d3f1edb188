use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensitivity::{cost, Dataset, LossFunction, Sequence, Supervision};
use crate::statespace::{simulate, DynamicalModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Mean squared error per step.
    Mse,
    /// Fraction of sequences whose final-step bits are all correct.
    Accuracy,
}

/// Datasets, loss and metric of one learning problem.
#[derive(Debug, Clone)]
pub struct Task {
    pub name: String,
    pub train: Dataset,
    pub validation: Option<Dataset>,
    pub loss: LossFunction,
    pub metric: Metric,
}

impl Task {
    pub fn input_dim(&self) -> usize {
        self.train.sequences[0].inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.train.sequences[0].targets.ncols()
    }

    /// Dataset used for reporting the metric.
    pub fn eval_set(&self) -> &Dataset {
        self.validation.as_ref().unwrap_or(&self.train)
    }

    /// Replace every initial state by zeros of dimension `n_x`.
    pub fn with_state_dim(mut self, n_x: usize) -> Self {
        let reset = |d: &mut Dataset| {
            for s in &mut d.sequences {
                s.x0 = DVector::zeros(n_x);
            }
        };
        reset(&mut self.train);
        if let Some(v) = &mut self.validation {
            reset(v);
        }
        self
    }
}

/// How a sine frequency is turned into the constant input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SineEncoding {
    /// `u = (ω − 3π/32)/(π/32)`, mapping the band onto `[−1, 1]`.
    #[default]
    Centred,
    /// `u = ω/π`.
    OverPi,
}

impl SineEncoding {
    pub fn encode(&self, omega: f64) -> f64 {
        match self {
            SineEncoding::Centred => (omega - 3.0 * PI / 32.0) / (PI / 32.0),
            SineEncoding::OverPi => omega / PI,
        }
    }

    pub fn decode(&self, u: f64) -> f64 {
        match self {
            SineEncoding::Centred => 3.0 * PI / 32.0 + u * PI / 32.0,
            SineEncoding::OverPi => u * PI,
        }
    }
}

/// Unit sines with frequencies on a uniform grid over `[π/16, π/8]`; the
/// frequency is given as a constant input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SineTask {
    pub n_sequences: usize,
    pub length: usize,
    pub encoding: SineEncoding,
}

impl Default for SineTask {
    fn default() -> Self {
        Self {
            n_sequences: 100,
            length: 400,
            encoding: SineEncoding::Centred,
        }
    }
}

impl SineTask {
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.n_sequences;
        let (lo, hi) = (PI / 16.0, PI / 8.0);
        if n == 1 {
            return vec![lo];
        }
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    /// Task with zero initial states of dimension `n_x`.
    pub fn build(&self, n_x: usize) -> Result<Task> {
        if self.n_sequences == 0 || self.length == 0 {
            return Err(Error::invalid("sine task needs sequences of positive length"));
        }
        let seqs = self
            .frequencies()
            .into_iter()
            .map(|w| {
                Sequence::new(
                    DVector::zeros(n_x),
                    DMatrix::from_element(self.length, 1, self.encoding.encode(w)),
                    DMatrix::from_fn(self.length, 1, |t, _| (w * t as f64).sin()),
                    Supervision::EveryStep,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Task {
            name: "sine".into(),
            train: Dataset::new(seqs),
            validation: None,
            loss: LossFunction::SquaredError,
            metric: Metric::Mse,
        })
    }
}

pub const SYMBOLS: [char; 6] = ['p', 'q', 'a', 'b', 'c', 'd'];

/// Two relevant symbols from `{p, q}` at `t₁ ∈ [10, 18]`, `t₂ ∈ [40, 49]`
/// among one-hot distractors; the label is the ordered pair as two bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SymbolTask {
    pub length: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub seed: u64,
}

impl Default for SymbolTask {
    fn default() -> Self {
        Self {
            length: 50,
            n_train: 1000,
            n_validation: 1000,
            seed: 0,
        }
    }
}

/// One symbol sequence: indices into [`SYMBOLS`] and the two relevant positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolSample {
    pub symbols: Vec<usize>,
    pub t1: usize,
    pub t2: usize,
}

impl SymbolSample {
    /// `(first is q, second is q)`.
    pub fn label(&self) -> [f64; 2] {
        [
            (self.symbols[self.t1] == 1) as u8 as f64,
            (self.symbols[self.t2] == 1) as u8 as f64,
        ]
    }
}

impl SymbolTask {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SymbolSample {
        let mut symbols: Vec<usize> = (0..self.length).map(|_| rng.random_range(2..6)).collect();
        let t1 = rng.random_range(10..=18);
        let t2 = rng.random_range(40..=49);
        symbols[t1] = rng.random_range(0..2);
        symbols[t2] = rng.random_range(0..2);
        SymbolSample { symbols, t1, t2 }
    }

    /// One-hot rows plus a trailing all-zero row, so the final output is read
    /// after the last symbol has been consumed.
    fn sequence(&self, s: &SymbolSample, n_x: usize) -> Result<Sequence> {
        let mut u = DMatrix::zeros(self.length + 1, SYMBOLS.len());
        for (t, &k) in s.symbols.iter().enumerate() {
            u[(t, k)] = 1.0;
        }
        let l = s.label();
        Sequence::new(
            DVector::zeros(n_x),
            u,
            DMatrix::from_row_slice(1, 2, &l),
            Supervision::FinalStep,
        )
    }

    pub fn samples(&self) -> (Vec<SymbolSample>, Vec<SymbolSample>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let train = (0..self.n_train).map(|_| self.sample(&mut rng)).collect();
        let val = (0..self.n_validation).map(|_| self.sample(&mut rng)).collect();
        (train, val)
    }

    pub fn build(&self, n_x: usize) -> Result<Task> {
        if self.length < 50 {
            return Err(Error::invalid("symbol sequences need length ≥ 50"));
        }
        if self.n_train == 0 || self.n_validation == 0 {
            return Err(Error::invalid("symbol task needs training and validation sequences"));
        }
        let (tr, va) = self.samples();
        let make = |v: &[SymbolSample]| -> Result<Dataset> {
            Ok(Dataset::new(v.iter().map(|s| self.sequence(s, n_x)).collect::<Result<_>>()?))
        };
        Ok(Task {
            name: format!("symbols{}", self.length),
            train: make(&tr)?,
            validation: Some(make(&va)?),
            loss: LossFunction::SigmoidCrossEntropy,
            metric: Metric::Accuracy,
        })
    }
}

/// Inputs become `z_t = (y_{t−1}, u_t)` with `y_{−1} = 0`. Needs every-step targets.
pub fn teacher_forcing_wrap(task: &Task) -> Result<Task> {
    let wrap = |d: &Dataset| -> Result<Dataset> {
        let mut out = Vec::with_capacity(d.len());
        for s in &d.sequences {
            if s.supervision != Supervision::EveryStep {
                return Err(Error::invalid("teacher forcing needs a target at every step"));
            }
            let (n, nz, ny) = (s.len(), s.inputs.ncols(), s.targets.ncols());
            let z = DMatrix::from_fn(n, ny + nz, |t, c| {
                if c < ny {
                    if t == 0 {
                        0.0
                    } else {
                        s.targets[(t - 1, c)]
                    }
                } else {
                    s.inputs[(t, c - ny)]
                }
            });
            out.push(Sequence::new(s.x0.clone(), z, s.targets.clone(), s.supervision)?);
        }
        Ok(Dataset::new(out))
    };
    Ok(Task {
        name: format!("{}+tf", task.name),
        train: wrap(&task.train)?,
        validation: task.validation.as_ref().map(wrap).transpose()?,
        loss: task.loss,
        metric: task.metric,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub metric: Metric,
    pub value: f64,
    /// Constant-mean MSE, or the accuracy of always answering `(p, p)`.
    pub baseline: f64,
}

/// MSE of predicting the global target mean.
pub fn mean_baseline_mse(data: &Dataset) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for q in &data.sequences {
        s += q.targets.sum();
        n += q.targets.len();
    }
    let mean = s / n as f64;
    let mut total = 0.0;
    for q in &data.sequences {
        total += q.targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / q.targets.len() as f64;
    }
    total / data.len() as f64
}

/// Accuracy of always predicting the all-zero bit pattern.
pub fn constant_baseline_accuracy(data: &Dataset) -> f64 {
    let hits = data
        .sequences
        .iter()
        .filter(|s| s.targets.iter().all(|v| *v == 0.0))
        .count();
    hits as f64 / data.len() as f64
}

/// Bits of final-step logits, thresholded at zero, against the final target.
pub fn accuracy(model: &dyn DynamicalModel, data: &Dataset) -> Result<f64> {
    let mut hits = 0;
    for s in &data.sequences {
        let tr = simulate(model, &s.x0, &s.inputs)?;
        let y = tr.output(s.len() - 1);
        let ok = y
            .iter()
            .zip(s.targets.row(s.targets.nrows() - 1).iter())
            .all(|(logit, bit)| (*logit > 0.0) == (*bit > 0.5));
        hits += ok as usize;
    }
    Ok(hits as f64 / data.len() as f64)
}

pub fn evaluate(model: &dyn DynamicalModel, task: &Task) -> Result<Evaluation> {
    let data = task.eval_set();
    match task.metric {
        Metric::Mse => Ok(Evaluation {
            metric: Metric::Mse,
            value: cost(model, data, LossFunction::SquaredError)? / task.output_dim() as f64,
            baseline: mean_baseline_mse(data),
        }),
        Metric::Accuracy => Ok(Evaluation {
            metric: Metric::Accuracy,
            value: accuracy(model, data)?,
            baseline: constant_baseline_accuracy(data),
        }),
    }
}
