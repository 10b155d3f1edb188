use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rnnlab::analysis::{
    bifurcation_sweep, epoch_bifurcation, AttractorClass, BifurcationConfig, BifurcationDiagram, Projection,
    DEFAULT_CLASSIFY_TOL,
};
use rnnlab::cells::Cell;
use rnnlab::sensitivity::{Dataset, LossFunction};
use rnnlab::smoothness::{landscape_sweep, local_minima_census, Axis};
use rnnlab::statespace::{
    constant_inputs, lyapunov_exponent, lyapunov_spectrum, with_params, DynamicalModel, Feedback,
    ParameterVector,
};
use rnnlab::training::read_snapshots;
use serde_json::{json, Value};

use super::{constant_input, scaled, BifurcateArgs, LandscapeArgs, LyapunovArgs};
use crate::config::{config_err, linspace, parse_range, CliResult, Context};

fn projection(s: Option<&str>) -> CliResult<Projection> {
    let s = s.unwrap_or("output:0");
    let index = |v: &str| {
        v.parse::<usize>()
            .map_err(|_| config_err(format!("bad projection index in `{s}`")))
    };
    match s.split_once(':') {
        None if s == "mean" => Ok(Projection::StateMean(None)),
        Some(("output", i)) => Ok(Projection::Output(index(i)?)),
        Some(("state", i)) => Ok(Projection::State(index(i)?)),
        Some(("mean", n)) => Ok(Projection::StateMean(Some(index(n)?))),
        _ => Err(config_err(format!("unknown projection `{s}`"))),
    }
}

fn feedback(s: Option<&str>) -> CliResult<Option<Feedback>> {
    match s.unwrap_or("none") {
        "none" => Ok(None),
        "argmax" => Ok(Some(Feedback::ArgmaxOneHot)),
        "identity" => Ok(Some(Feedback::Identity)),
        other => Err(config_err(format!("unknown feedback `{other}`"))),
    }
}

/// Longest run of consecutive non-fixed sweep values, as `(first, last)`.
fn widest_band(values: &[f64], classes: &[Option<AttractorClass>]) -> Option<(f64, f64)> {
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for i in 0..=classes.len() {
        let moving = i < classes.len() && classes[i].as_ref().is_some_and(|c| !c.is_fixed_point());
        match (moving, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|(a, b)| i - s > b + 1 - a) {
                    best = Some((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    best.map(|(a, b)| (values[a], values[b]))
}

pub fn run_bifurcate(ctx: &Context, a: &BifurcateArgs) -> CliResult<()> {
    let sweep = a.sweep.as_deref().unwrap_or("s");
    let burn_in = a.burn_in.unwrap_or(100);
    let record = a.record.unwrap_or(100);
    let tol = a.tol.unwrap_or(DEFAULT_CLASSIFY_TOL);
    let proj = projection(a.projection.as_deref())?;
    let fb = feedback(a.feedback.as_deref())?;

    // The diagram plus the model behind each sweep value.
    let (diagram, models): (BifurcationDiagram, Vec<Box<dyn DynamicalModel>>) = match sweep {
        "s" => {
            let (cell, x0) = a.source().load(ctx.seed)?;
            let (lo, hi) = parse_range(a.range.as_deref().unwrap_or("0:1.6"))?;
            let values = linspace(lo, hi, a.points.unwrap_or(161).max(1));
            let cfg = BifurcationConfig {
                burn_in,
                record,
                projection: proj,
                input: constant_input(a.input.as_deref(), cell.input_dim())?,
                x0,
                feedback: fb,
            };
            let family = |s: f64| -> rnnlab::Result<Box<dyn DynamicalModel>> {
                with_params(&cell, cell.params().scaled(s).values())
            };
            let d = bifurcation_sweep(family, &values, &cfg)?;
            let models = values
                .iter()
                .map(|&s| scaled(&cell, s).map(|c| c.clone_box()))
                .collect::<CliResult<_>>()?;
            (d, models)
        }
        "epoch" => {
            let dir = a
                .run
                .as_ref()
                .ok_or_else(|| config_err("--sweep epoch needs --run <training run directory>"))?;
            if !dir.is_dir() {
                return Err(config_err(format!("run directory not found: {}", dir.display())));
            }
            let snaps = read_snapshots(dir)?;
            let Some((_, template, x0)) = snaps.first() else {
                return Err(config_err(format!("no snapshots in {}", dir.display())));
            };
            let x0 = x0.clone().unwrap_or_else(|| DVector::zeros(template.state_dim()));
            let cfg = BifurcationConfig {
                burn_in,
                record,
                projection: proj,
                input: constant_input(a.input.as_deref(), template.input_dim())?,
                x0,
                feedback: fb,
            };
            let thetas: Vec<(usize, ParameterVector)> =
                snaps.iter().map(|(e, c, _)| (*e, c.params().clone())).collect();
            let d = epoch_bifurcation(template, &thetas, &cfg)?;
            let models = snaps.iter().map(|(_, c, _)| c.clone_box()).collect();
            (d, models)
        }
        other => return Err(config_err(format!("unknown sweep `{other}` (use s or epoch)"))),
    };

    let mut classes = diagram.classify(tol);
    if a.lyapunov.unwrap_or(false) {
        if diagram.config.feedback.is_some() {
            return Err(config_err("--lyapunov needs an open-loop sweep (--feedback none)"));
        }
        let cfg = &diagram.config;
        let exps: Vec<Option<f64>> = models
            .par_iter()
            .zip(&diagram.points)
            .map(|(m, pt)| {
                pt.diverged_at
                    .is_none()
                    .then(|| lyapunov_exponent(m.as_ref(), &cfg.x0, &cfg.input, cfg.burn_in, 1000).ok())
                    .flatten()
            })
            .collect();
        for ((c, l), pt) in classes.iter_mut().zip(exps).zip(&diagram.points) {
            if let (Some(_), Some(l)) = (c.as_ref(), l) {
                *c = rnnlab::analysis::classify_attractor(&pt.outputs, tol, Some(l)).ok();
            }
        }
    }

    let values: Vec<f64> = diagram.points.iter().map(|p| p.value).collect();
    let band = widest_band(&values, &classes);
    let per_value: Vec<Value> = diagram
        .points
        .iter()
        .zip(&classes)
        .map(|(pt, c)| {
            json!({
                "value": pt.value,
                "class": c,
                "diverged_at": pt.diverged_at,
            })
        })
        .collect();
    let title = format!("bifurcation over {}", diagram.sweep_name);
    ctx.write_csv("bifurcation.csv", &diagram.to_csv())?;
    ctx.write_svg("bifurcation.svg", &diagram.to_svg(&title))?;
    ctx.write_json(
        "classes.json",
        json!({
            "sweep": diagram.sweep_name,
            "tol": tol,
            "non_fixed_band": band.map(|(lo, hi)| json!({"lo": lo, "hi": hi})),
            "non_fixed_count": classes.iter().filter(|c| c.as_ref().is_some_and(|c| !c.is_fixed_point())).count(),
            "divergent_count": diagram.points.iter().filter(|p| p.diverged_at.is_some()).count(),
            "points": per_value,
        }),
    )?;
    Ok(())
}

pub fn run_landscape(ctx: &Context, a: &LandscapeArgs) -> CliResult<()> {
    let (cell, x0) = a.source().load(ctx.seed)?;
    let steps = a.steps.unwrap_or(200);
    let u = DVector::zeros(cell.input_dim());
    let truth = scaled(&cell, a.data_scale.unwrap_or(1.0))?;
    let data = Dataset::from_model(&truth, &[x0.clone()], &[constant_inputs(&u, steps)])?;
    let theta = cell.params().values().to_vec();
    let n = theta.len();
    let along = a.along.as_deref().unwrap_or("true");
    let (lo, hi) = parse_range(a.range.as_deref().unwrap_or("0:1.6"))?;
    let mut axes = vec![Axis {
        direction: DVector::from_vec(theta.clone()),
        lo,
        hi,
        resolution: a.resolution.unwrap_or(2000),
    }];
    match along {
        "true" => {}
        "true,random" => {
            // Random unit direction scaled to ‖θ‖, orthogonalized against θ.
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            let t = DVector::from_vec(theta.clone());
            let mut d = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let tn = t.norm();
            if tn > 0.0 {
                d -= &t * (d.dot(&t) / (tn * tn));
            }
            let dn = d.norm();
            if dn == 0.0 {
                return Err(config_err("cannot draw a random direction for this model"));
            }
            d *= tn.max(1.0) / dn;
            let (lo2, hi2) = parse_range(a.range2.as_deref().unwrap_or("-1:1"))?;
            axes[0].resolution = a.resolution.unwrap_or(101);
            axes.push(Axis {
                direction: d,
                lo: lo2,
                hi: hi2,
                resolution: a.resolution2.or(a.resolution).unwrap_or(101),
            });
        }
        other => return Err(config_err(format!("unknown direction set `{other}` (use true or true,random)"))),
    }
    let origin = DVector::zeros(n);
    let grid = landscape_sweep(
        &cell,
        &data,
        LossFunction::SquaredError,
        &origin,
        axes,
        a.gradient.unwrap_or(false),
    )?;
    ctx.write_csv("landscape.csv", &grid.to_csv())?;
    ctx.write_svg("landscape.svg", &grid.to_svg("cost landscape"))?;
    let mut summary = json!({
        "points": grid.values.len(),
        "divergent_count": grid.divergent_count(),
    });
    if grid.axes.len() == 1 {
        let census = local_minima_census(&grid)?;
        summary["minima"] = json!(census);
        if let Some(r) = &a.census {
            let (clo, chi) = parse_range(r)?;
            summary["minima_in_range"] = json!({"lo": clo, "hi": chi, "count": census.count_in(clo, chi)});
        }
    }
    ctx.write_json("minima.json", summary)?;
    Ok(())
}

pub fn run_lyapunov(ctx: &Context, a: &LyapunovArgs) -> CliResult<()> {
    let (cell, x0) = a.source().load(ctx.seed)?;
    let cell: Cell = match a.scale {
        Some(s) => scaled(&cell, s)?,
        None => cell,
    };
    let u = constant_input(a.input.as_deref(), cell.input_dim())?;
    let burn_in = a.burn_in.unwrap_or(100);
    let steps = a.steps.unwrap_or(5000);
    let k = a.spectrum.unwrap_or(1);
    if k == 0 || k > cell.state_dim() {
        return Err(config_err(format!("--spectrum must be in 1..={}", cell.state_dim())));
    }
    let body = if k == 1 {
        let l = lyapunov_exponent(&cell, &x0, &u, burn_in, steps)?;
        json!({ "largest": l })
    } else {
        let spec = lyapunov_spectrum(&cell, &x0, &u, burn_in, steps, k)?;
        json!({ "largest": spec[0], "spectrum": spec })
    };
    ctx.write_json("lyapunov.json", body)?;
    Ok(())
}
