use nalgebra::DVector;
use rnnlab::cells::{Cell, ProjectionConfig, Readout};
use rnnlab::statespace::DynamicalModel;
use rnnlab::training::{
    evaluate, teacher_forcing_wrap, train, AdamConfig, SineEncoding, SineTask, SymbolTask, Task, TrainConfig,
};
use serde_json::json;

use super::{activation, random_cell, TrainArgs};
use crate::config::{config_err, CliResult, Context};

/// `epoch:factor,…`; `none` for a flat rate.
fn parse_drops(s: &str) -> CliResult<Vec<(usize, f64)>> {
    if s == "none" || s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|item| {
            let (e, f) = item
                .split_once(':')
                .ok_or_else(|| config_err(format!("lr drop `{item}` must look like epoch:factor")))?;
            let e = e.trim().parse().map_err(|_| config_err(format!("bad epoch in `{item}`")))?;
            let f = f.trim().parse().map_err(|_| config_err(format!("bad factor in `{item}`")))?;
            Ok((e, f))
        })
        .collect()
}

const STEP_DROPS: [(usize, f64); 3] = [(500, 0.1), (1000, 0.1), (2000, 0.1)];

pub fn build_task(a: &TrainArgs, seed: u64, state_dim: usize) -> CliResult<Task> {
    let task = match a.task.as_deref().unwrap_or("sine") {
        "sine" => {
            let encoding = match a.encoding.as_deref().unwrap_or("centred") {
                "centred" | "centered" => SineEncoding::Centred,
                "over_pi" => SineEncoding::OverPi,
                other => return Err(config_err(format!("unknown sine encoding `{other}`"))),
            };
            SineTask {
                encoding,
                ..SineTask::default()
            }
            .build(state_dim)?
        }
        "symbols" => SymbolTask {
            length: a.length.unwrap_or(50),
            seed,
            ..SymbolTask::default()
        }
        .build(state_dim)?,
        other => return Err(config_err(format!("unknown task `{other}` (use sine or symbols)"))),
    };
    if a.teacher_forcing.unwrap_or(false) {
        Ok(teacher_forcing_wrap(&task)?)
    } else {
        Ok(task)
    }
}

/// Task-dependent defaults: symbols train in minibatches of 100 with a stepped
/// rate; on the sine task only the projected LSTM gets steps.
pub fn train_config(a: &TrainArgs, kind: &str, task: &str, seed: u64) -> CliResult<TrainConfig> {
    let symbols = task == "symbols";
    let lr_drops = match &a.lr_drops {
        Some(s) => parse_drops(s)?,
        None if symbols || kind == "slstm" => STEP_DROPS.to_vec(),
        None => Vec::new(),
    };
    let cfg = TrainConfig {
        optimizer: AdamConfig {
            lr0: a.lr.unwrap_or(1e-3),
            ..AdamConfig::default()
        },
        clip_norm: a.clip.unwrap_or(0.25),
        lr_drops,
        epochs: a.epochs.unwrap_or(if symbols { 2000 } else { 1500 }),
        batch_size: a.batch.unwrap_or(if symbols { 100 } else { 0 }),
        snapshot_every: a.snapshot_every.unwrap_or(100),
        seed,
        projection: (kind == "slstm").then(ProjectionConfig::default),
        stop_at: a.stop_at,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn run_train(ctx: &Context, a: &TrainArgs) -> CliResult<()> {
    let kind = a.cell.as_deref().unwrap_or("lstm");
    let task_name = a.task.as_deref().unwrap_or("sine");
    let hidden = a.hidden.unwrap_or(32);
    // Probe the state size with the right input width, then build the real cell.
    let probe = build_task(a, ctx.seed, 0)?;
    let mut cell: Cell = random_cell(
        kind,
        hidden,
        probe.input_dim(),
        Readout::Linear(probe.output_dim()),
        activation(a.activation.as_deref())?,
        ctx.seed,
    )?;
    let task = probe.with_state_dim(cell.state_dim());
    let cfg = train_config(a, kind, task_name, ctx.seed)?;
    let template = cell.clone();
    let every = cfg.snapshot_every;
    let run = train(&mut cell, &task, &cfg, |rec, _| {
        if rec.epoch % every == 0 {
            eprintln!("epoch {} loss {:.6e} metric {:.6e}", rec.epoch, rec.loss, rec.metric);
        }
    })?;
    let dir = ctx.out.join(format!("{task_name}_{kind}_seed{}", ctx.seed));
    let x0 = DVector::zeros(cell.state_dim());
    run.write_dir(&dir, &template, &x0, Some(&ctx.provenance))?;
    let eval = evaluate(cell.model(), &task)?;
    let sub = Context {
        seed: ctx.seed,
        out: dir,
        provenance: ctx.provenance.clone(),
        resolved: ctx.resolved.clone(),
    };
    sub.write_json(
        "final.json",
        json!({
            "task": task_name,
            "cell": kind,
            "epochs_run": run.history.len(),
            "stopped_early": run.stopped_early,
            "final_loss": run.history.last().map(|r| r.loss),
            "evaluation": eval,
        }),
    )?;
    Ok(())
}
