//! Desk-scale training: Adam with global-norm clipping and step schedules,
//! the stable-LSTM projection after every update, per-epoch history and
//! parameter snapshots.

mod reverse;
mod tasks;

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cells::{Cell, CellDocument, ProjectionConfig, StableLstmCell};
use crate::error::{Error, Result};
use crate::provenance::Provenance;
use crate::sensitivity::Sequence;
use crate::statespace::{DynamicalModel, ParameterVector};

pub use reverse::{dataset_cost_and_gradient, reverse_cost_and_gradient};
pub use tasks::{
    accuracy, constant_baseline_accuracy, evaluate, mean_baseline_mse, teacher_forcing_wrap,
    Evaluation, Metric, SineEncoding, SineTask, SymbolSample, SymbolTask, Task, SYMBOLS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: AdamConfig,
    pub clip_norm: f64,
    /// `(epoch, factor)`: from the epoch after `epoch` on, the rate is multiplied by `factor`.
    pub lr_drops: Vec<(usize, f64)>,
    pub epochs: usize,
    /// `0` means full batch.
    pub batch_size: usize,
    pub snapshot_every: usize,
    pub seed: u64,
    /// Turns a plain LSTM into a projected one before training.
    pub projection: Option<ProjectionConfig>,
    /// Stop once the evaluation metric reaches this value (accuracy tasks only).
    pub stop_at: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: AdamConfig::default(),
            clip_norm: 0.25,
            lr_drops: Vec::new(),
            epochs: 100,
            batch_size: 0,
            snapshot_every: 100,
            seed: 0,
            projection: None,
            stop_at: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.optimizer.lr0 > 0.0) {
            return Err(Error::invalid("lr0 must be positive"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::invalid("clip_norm must be positive"));
        }
        if self.lr_drops.iter().any(|(_, f)| !(*f > 0.0)) {
            return Err(Error::invalid("learning-rate factors must be positive"));
        }
        if self.snapshot_every == 0 {
            return Err(Error::invalid("snapshot_every must be at least 1"));
        }
        if let Some(p) = &self.projection {
            p.validate()?;
        }
        Ok(())
    }

    /// Rate used during 1-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr_drops
            .iter()
            .filter(|(e, _)| *e < epoch)
            .fold(self.optimizer.lr0, |lr, (_, f)| lr * f)
    }
}

/// Scale `g` in place so `‖g‖₂ ≤ max_norm`; returns the norm before clipping.
pub fn clip_global_norm(g: &mut DVector<f64>, max_norm: f64) -> f64 {
    let norm = g.norm();
    if norm > max_norm {
        *g *= max_norm / norm;
    }
    norm
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: DVector<f64>,
    v: DVector<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n: usize) -> Self {
        Self {
            cfg,
            m: DVector::zeros(n),
            v: DVector::zeros(n),
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], g: &DVector<f64>, lr: f64) {
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for k in 0..theta.len() {
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g[k];
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g[k] * g[k];
            theta[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + self.cfg.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub metric: f64,
    pub grad_norm: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub config: TrainConfig,
    pub task: String,
    pub cell_kind: String,
    pub history: Vec<EpochRecord>,
    /// Epoch 0 is the initialization.
    pub snapshots: Vec<(usize, ParameterVector)>,
    pub final_params: ParameterVector,
    pub stopped_early: bool,
}

/// `{0, every, 2·every, …, last}`.
pub fn snapshot_schedule(last: usize, every: usize) -> Result<Vec<usize>> {
    if every == 0 {
        return Err(Error::invalid("snapshot interval must be at least 1"));
    }
    let mut s: Vec<usize> = (0..=last).step_by(every).collect();
    if *s.last().unwrap() != last {
        s.push(last);
    }
    Ok(s)
}

fn check_dims(cell: &Cell, task: &Task) -> Result<()> {
    let nx = cell.state_dim();
    for s in task.train.sequences.iter().chain(task.validation.iter().flat_map(|d| &d.sequences)) {
        if s.x0.len() != nx || s.inputs.ncols() != cell.input_dim() || s.targets.ncols() != cell.output_dim() {
            return Err(Error::DimensionMismatch {
                what: "task vs cell",
                expected: cell.input_dim(),
                got: s.inputs.ncols(),
            });
        }
    }
    Ok(())
}

/// Train `cell` in place and return the run record. `on_epoch` sees every record.
pub fn train(
    cell: &mut Cell,
    task: &Task,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &Cell),
) -> Result<TrainRun> {
    cfg.validate()?;
    if let (Some(p), Cell::Lstm(l)) = (&cfg.projection, &*cell) {
        *cell = Cell::StableLstm(StableLstmCell::new(l.clone(), p.clone())?);
    }
    check_dims(cell, task)?;
    let n = task.train.len();
    let batch = if cfg.batch_size == 0 { n } else { cfg.batch_size.min(n) };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.optimizer.clone(), cell.n_params());
    let mut order: Vec<usize> = (0..n).collect();
    let mut run = TrainRun {
        config: cfg.clone(),
        task: task.name.clone(),
        cell_kind: cell.kind().into(),
        history: Vec::new(),
        snapshots: vec![(0, cell.params().clone())],
        final_params: cell.params().clone(),
        stopped_early: false,
    };
    let ny = task.output_dim().max(1) as f64;
    for epoch in 1..=cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let (mut loss, mut gnorm, mut nb) = (0.0, 0.0, 0usize);
        for (bi, idx) in order.chunks(batch).enumerate() {
            let seqs: Vec<&Sequence> = idx.iter().map(|&i| &task.train.sequences[i]).collect();
            let (v, mut g) = match reverse_cost_and_gradient(cell, &seqs, task.loss) {
                Ok(r) => r,
                Err(e) if e.is_numeric() => return Err(Error::TrainingDiverged { epoch, batch: bi }),
                Err(e) => return Err(e),
            };
            if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
                return Err(Error::TrainingDiverged { epoch, batch: bi });
            }
            gnorm += clip_global_norm(&mut g, cfg.clip_norm);
            let mut theta = cell.params().values().to_vec();
            adam.step(&mut theta, &g, lr);
            cell.set_param_values(&theta)?;
            cell.after_update();
            loss += v * seqs.len() as f64;
            nb += 1;
        }
        loss /= n as f64;
        let metric = match task.metric {
            Metric::Mse => loss / ny,
            Metric::Accuracy => accuracy(cell.model(), task.eval_set())
                .map_err(|_| Error::TrainingDiverged { epoch, batch: nb })?,
        };
        let rec = EpochRecord {
            epoch,
            loss,
            metric,
            grad_norm: gnorm / nb as f64,
            lr,
        };
        run.history.push(rec);
        on_epoch(&rec, cell);
        let stop = task.metric == Metric::Accuracy && cfg.stop_at.is_some_and(|s| metric >= s);
        if epoch % cfg.snapshot_every == 0 || epoch == cfg.epochs || stop {
            run.snapshots.push((epoch, cell.params().clone()));
        }
        if stop {
            run.stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    run.final_params = cell.params().clone();
    Ok(run)
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

impl TrainRun {
    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,loss,metric,grad_norm,lr\n");
        for r in &self.history {
            writeln!(
                s,
                "{},{},{},{},{}",
                r.epoch,
                fmt_num(r.loss),
                fmt_num(r.metric),
                fmt_num(r.grad_norm),
                fmt_num(r.lr)
            )
            .unwrap();
        }
        s
    }

    /// `history.csv`, `snapshots/epoch_{k}.json`, `config.json` under `dir`.
    /// `template` supplies the cell structure for the snapshot documents.
    pub fn write_dir(&self, dir: &Path, template: &Cell, x0: &DVector<f64>, prov: Option<&Provenance>) -> Result<()> {
        std::fs::create_dir_all(dir.join("snapshots"))?;
        let header = prov.map(|p| p.csv_comment()).unwrap_or_default();
        std::fs::write(dir.join("history.csv"), header + &self.history_csv())?;
        let mut cell = template.clone();
        for (epoch, p) in &self.snapshots {
            cell.set_param_values(p.values())?;
            let mut doc = CellDocument::from_cell(&cell, Some(x0.iter().copied().collect()));
            let mut meta = std::collections::BTreeMap::new();
            meta.insert("epoch".to_string(), serde_json::json!(epoch));
            if let Some(p) = prov {
                meta.insert("provenance".to_string(), serde_json::to_value(p)?);
            }
            doc.metadata = Some(meta);
            doc.write(&dir.join("snapshots").join(format!("epoch_{epoch}.json")))?;
        }
        let cfg = serde_json::json!({
            "provenance": prov,
            "task": self.task,
            "cell": self.cell_kind,
            "epochs_run": self.history.len(),
            "stopped_early": self.stopped_early,
            "train": self.config,
        });
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
        Ok(())
    }
}

/// Snapshot cells of a run directory, sorted by epoch.
pub fn read_snapshots(dir: &Path) -> Result<Vec<(usize, Cell, Option<DVector<f64>>)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir.join("snapshots"))? {
        let path = entry?.path();
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let Some(epoch) = name.strip_prefix("epoch_").and_then(|e| e.parse::<usize>().ok()) else {
            continue;
        };
        let doc = CellDocument::read(&path)?;
        let x0 = doc.initial_state.clone().map(DVector::from_vec);
        out.push((epoch, doc.into_cell()?, x0));
    }
    if out.is_empty() {
        return Err(Error::Format(format!("no snapshots under {}", dir.display())));
    }
    out.sort_by_key(|e| e.0);
    Ok(out)
}

/// Largest `|W_kᵀW_k − I|` entry over orthogonal recurrent matrices (0 for other cells).
pub fn orthogonality_defect(cell: &Cell) -> f64 {
    match cell {
        Cell::Orthogonal(c) => {
            let w = c.recurrent();
            let n = w.nrows();
            (w.transpose() * w - DMatrix::<f64>::identity(n, n)).abs().max()
        }
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::{Activation, LstmCell, OrthogonalRnnCell, Readout, VanillaRnnCell};
    use crate::sensitivity::{Dataset, LossFunction, Supervision};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    #[test]
    fn schedule_examples() {
        assert_eq!(snapshot_schedule(400, 100).unwrap(), vec![0, 100, 200, 300, 400]);
        assert_eq!(snapshot_schedule(50, 100).unwrap(), vec![0, 50]);
        assert_eq!(snapshot_schedule(3, 1).unwrap(), vec![0, 1, 2, 3]);
        assert!(snapshot_schedule(3, 0).is_err());
    }

    #[test]
    fn lr_drops() {
        let c = TrainConfig {
            lr_drops: vec![(500, 0.1), (1000, 0.1)],
            ..Default::default()
        };
        assert_eq!(c.lr_at(500), 1e-3);
        assert!((c.lr_at(501) - 1e-4).abs() < 1e-18);
        assert!((c.lr_at(1001) - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn clipping_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let n = rng.random_range(1..50);
            let s: f64 = 10f64.powf(rng.random_range(-3.0..3.0));
            let mut g = DVector::from_fn(n, |_, _| s * rng.random_range(-1.0..1.0));
            let before = g.clone();
            clip_global_norm(&mut g, 0.25);
            assert!(g.norm() <= 0.25 + 1e-12);
            if before.norm() <= 0.25 {
                assert_eq!(g, before);
            }
        }
    }

    fn linear_task() -> Task {
        // y_t = 0.7·h with h' = tanh(w h + u z + b): fit to data from a fixed cell
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = VanillaRnnCell::random(1, 1, Readout::Identity, &mut rng);
        let seqs: Vec<Sequence> = (0..8)
            .map(|_| {
                let u = DMatrix::from_fn(10, 1, |_, _| rng.random_range(-1.0..1.0));
                let tr = crate::statespace::simulate(&truth, &DVector::zeros(1), &u).unwrap();
                Sequence::new(DVector::zeros(1), u, tr.outputs, Supervision::EveryStep).unwrap()
            })
            .collect();
        Task {
            name: "fit".into(),
            train: Dataset::new(seqs),
            validation: None,
            loss: LossFunction::SquaredError,
            metric: Metric::Mse,
        }
    }

    #[test]
    fn loss_goes_to_zero() {
        let task = linear_task();
        let mut cell = Cell::Vanilla(VanillaRnnCell::zeros(1, 1, Readout::Identity));
        let cfg = TrainConfig {
            optimizer: AdamConfig {
                lr0: 0.05,
                ..Default::default()
            },
            clip_norm: 10.0,
            lr_drops: vec![(150, 0.1), (250, 0.1)],
            epochs: 400,
            ..Default::default()
        };
        let run = train(&mut cell, &task, &cfg, |_, _| {}).unwrap();
        assert_eq!(run.history.len(), 400);
        let last = run.history.last().unwrap().loss;
        assert!(last < 1e-3 * run.history[0].loss, "{last}");
        let tail: Vec<f64> = run.history[300..].iter().map(|r| r.loss).collect();
        assert!(tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-6)));
    }

    #[test]
    fn deterministic_and_constrained() {
        let task = SineTask {
            n_sequences: 6,
            length: 30,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lstm = LstmCell::random(4, 1, true, Readout::Linear(1), &mut rng);
        let ornn = OrthogonalRnnCell::random(4, 1, true, Activation::Tanh, Readout::Linear(1), &mut rng);
        let cfg = TrainConfig {
            optimizer: AdamConfig {
                lr0: 0.05,
                ..Default::default()
            },
            epochs: 30,
            batch_size: 4,
            snapshot_every: 10,
            seed: 9,
            ..Default::default()
        };
        let slstm_cfg = TrainConfig {
            projection: Some(ProjectionConfig::default()),
            ..cfg.clone()
        };
        let t = task.build(8).unwrap();
        let mut histories = Vec::new();
        for _ in 0..2 {
            let mut c = Cell::Lstm(lstm.clone());
            let run = train(&mut c, &t, &slstm_cfg, |_, c| {
                if let Cell::StableLstm(s) = c {
                    assert!(s.block_norms().iter().all(|(_, n)| *n <= 0.97 + 1e-9));
                } else {
                    panic!("not projected");
                }
            })
            .unwrap();
            histories.push(run.history_csv());
            assert_eq!(
                run.snapshots.iter().map(|s| s.0).collect::<Vec<_>>(),
                vec![0, 10, 20, 30]
            );
        }
        assert_eq!(histories[0], histories[1]);
        let t4 = task.build(4).unwrap();
        let mut c = Cell::Orthogonal(ornn);
        train(&mut c, &t4, &cfg, |_, c| assert!(orthogonality_defect(c) < 1e-8)).unwrap();
    }

    #[test]
    fn run_directory_round_trip() {
        let task = SineTask {
            n_sequences: 3,
            length: 10,
            ..Default::default()
        }
        .build(4)
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut cell = Cell::Lstm(LstmCell::random(2, 1, true, Readout::Linear(1), &mut rng));
        let template = cell.clone();
        let cfg = TrainConfig {
            epochs: 5,
            snapshot_every: 2,
            ..Default::default()
        };
        let run = train(&mut cell, &task, &cfg, |_, _| {}).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let prov = Provenance::new("spec", 1);
        run.write_dir(dir.path(), &template, &DVector::zeros(4), Some(&prov)).unwrap();
        let snaps = read_snapshots(dir.path()).unwrap();
        assert_eq!(snaps.iter().map(|s| s.0).collect::<Vec<_>>(), vec![0, 2, 4, 5]);
        assert_eq!(snaps[3].1.params().values(), cell.params().values());
        let hist = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
        assert!(hist.starts_with("# spec_hash="));
        assert_eq!(hist.lines().count(), 7);
    }
}
