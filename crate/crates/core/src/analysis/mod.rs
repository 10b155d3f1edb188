//! Attractor analysis: bifurcation diagrams over a parameter scalar or over
//! training snapshots, sample-based attractor classification, and entropy
//! propagation for linear-Gaussian systems.

mod entropy;

use std::collections::HashSet;
use std::fmt::Write as _;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plot::{self, Series};
use crate::statespace::{
    constant_inputs, lyapunov_exponent, simulate, simulate_closed_loop, DynamicalModel, Feedback,
    ParameterVector, Trajectory,
};

pub use entropy::{
    check_entropy_bound, entropy_linear_gaussian, hadamard_chain, EntropyBoundReport,
    EntropyTrace, HadamardChain, Orientation,
};

/// Default rounding grid for steady-state classification.
pub const DEFAULT_CLASSIFY_TOL: f64 = 1e-6;
/// Lyapunov exponents above this refine an aperiodic attractor to chaotic.
pub const CHAOS_THRESHOLD: f64 = 1e-3;

/// Scalar summary of a state/output pair plotted on a bifurcation diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// `ŷ_t[i]`.
    Output(usize),
    /// `x_t[i]`.
    State(usize),
    /// Mean of the first `n` state entries (all entries when `None`).
    StateMean(Option<usize>),
    /// `⟨x_t, d⟩`.
    Direction(Vec<f64>),
}

impl Projection {
    pub fn apply(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Projection::Output(i) => y[*i],
            Projection::State(i) => x[*i],
            Projection::StateMean(n) => {
                let n = n.unwrap_or(x.len()).min(x.len());
                x[..n].iter().sum::<f64>() / n as f64
            }
            Projection::Direction(d) => x.iter().zip(d).map(|(a, b)| a * b).sum(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Projection::Output(i) => format!("y{i}"),
            Projection::State(i) => format!("x{i}"),
            Projection::StateMean(_) => "mean(x)".into(),
            Projection::Direction(_) => "<x,d>".into(),
        }
    }

    fn validate(&self, nx: usize, ny: usize) -> Result<()> {
        let ok = match self {
            Projection::Output(i) => *i < ny,
            Projection::State(i) => *i < nx,
            Projection::StateMean(n) => n.map_or(true, |n| n >= 1),
            Projection::Direction(d) => d.len() == nx,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("projection {self:?} does not fit the model")))
        }
    }
}

/// How each sweep value is simulated and sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationConfig {
    pub burn_in: usize,
    pub record: usize,
    pub projection: Projection,
    /// Constant input `ū` (open loop) or the first input `z_0` (closed loop).
    pub input: DVector<f64>,
    pub x0: DVector<f64>,
    /// Closed-loop operation `z_{t+1} = feedback(ŷ_t)` when set.
    pub feedback: Option<Feedback>,
}

/// Recorded steady state for one sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    /// Time index of each sample; all `≥ burn_in`.
    pub steps: Vec<usize>,
    pub p: Vec<f64>,
    /// `dp[k] = p[k] − p_{t−1}`, using the step just before each sample.
    pub dp: Vec<f64>,
    /// Full output vectors at the recorded steps.
    pub outputs: Vec<DVector<f64>>,
    /// Step at which the simulation produced a non-finite value.
    pub diverged_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationDiagram {
    pub points: Vec<SweepPoint>,
    pub config: BifurcationConfig,
    /// `"s"` or `"epoch"`.
    pub sweep_name: String,
}

fn run_one(model: &dyn DynamicalModel, value: f64, cfg: &BifurcationConfig) -> SweepPoint {
    let horizon = cfg.burn_in + cfg.record + 1;
    let tr: Result<Trajectory> = match &cfg.feedback {
        None => simulate(model, &cfg.x0, &constant_inputs(&cfg.input, horizon)),
        Some(fb) => simulate_closed_loop(model, &cfg.x0, &cfg.input, horizon, &|y| fb.apply(y)),
    };
    let mut point = SweepPoint {
        value,
        steps: Vec::new(),
        p: Vec::new(),
        dp: Vec::new(),
        outputs: Vec::new(),
        diverged_at: None,
    };
    let tr = match tr {
        Ok(tr) => tr,
        Err(Error::NonFiniteState { step }) => {
            point.diverged_at = Some(step);
            return point;
        }
        Err(_) => {
            point.diverged_at = Some(0);
            return point;
        }
    };
    let proj = |t: usize| {
        let x: Vec<f64> = tr.states.row(t).iter().copied().collect();
        let y: Vec<f64> = tr.outputs.row(t).iter().copied().collect();
        cfg.projection.apply(&x, &y)
    };
    let mut prev = proj(cfg.burn_in);
    for t in cfg.burn_in + 1..horizon {
        let p = proj(t);
        point.steps.push(t);
        point.p.push(p);
        point.dp.push(p - prev);
        point.outputs.push(tr.output(t));
        prev = p;
    }
    point
}

fn check_config(cfg: &BifurcationConfig, model: &dyn DynamicalModel) -> Result<()> {
    if cfg.record == 0 {
        return Err(Error::invalid("record must be at least 1"));
    }
    cfg.projection.validate(model.state_dim(), model.output_dim())
}

/// Steady-state samples of `family(s)` for every `s`, simulated in parallel and
/// assembled in sweep order.
pub fn bifurcation_sweep<F>(family: F, s_values: &[f64], cfg: &BifurcationConfig) -> Result<BifurcationDiagram>
where
    F: Fn(f64) -> Result<Box<dyn DynamicalModel>> + Sync,
{
    if let Some(&s) = s_values.first() {
        check_config(cfg, family(s)?.as_ref())?;
    }
    let points: Vec<Result<SweepPoint>> = s_values
        .par_iter()
        .map(|&s| Ok(run_one(family(s)?.as_ref(), s, cfg)))
        .collect();
    Ok(BifurcationDiagram {
        points: points.into_iter().collect::<Result<_>>()?,
        config: cfg.clone(),
        sweep_name: "s".into(),
    })
}

/// Bifurcation diagram over training snapshots: each snapshot's θ is loaded
/// into `template` and simulated like one sweep value.
pub fn epoch_bifurcation(
    template: &dyn DynamicalModel,
    snapshots: &[(usize, ParameterVector)],
    cfg: &BifurcationConfig,
) -> Result<BifurcationDiagram> {
    if snapshots.is_empty() {
        return Err(Error::invalid("no snapshots"));
    }
    check_config(cfg, template)?;
    let points: Vec<Result<SweepPoint>> = snapshots
        .par_iter()
        .map(|(epoch, theta)| {
            let mut m = template.clone_box();
            m.set_param_values(theta.values())?;
            Ok(run_one(m.as_ref(), *epoch as f64, cfg))
        })
        .collect();
    Ok(BifurcationDiagram {
        points: points.into_iter().collect::<Result<_>>()?,
        config: cfg.clone(),
        sweep_name: "epoch".into(),
    })
}

impl BifurcationDiagram {
    /// `sweep,p,dp`, one row per sample; divergent sweep values get one `NaN` row.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{},p,dp\n", self.sweep_name);
        for pt in &self.points {
            if pt.diverged_at.is_some() {
                writeln!(s, "{},NaN,NaN", pt.value).unwrap();
                continue;
            }
            for (p, dp) in pt.p.iter().zip(&pt.dp) {
                writeln!(s, "{},{p},{dp}", pt.value).unwrap();
            }
        }
        s
    }

    /// Scatter of `p` against the sweep value; divergent values are shaded.
    pub fn to_svg(&self, title: &str) -> String {
        let pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .flat_map(|pt| pt.p.iter().map(move |p| (pt.value, *p)))
            .collect();
        let marks: Vec<f64> = self
            .points
            .iter()
            .filter(|p| p.diverged_at.is_some())
            .map(|p| p.value)
            .collect();
        let width = self.spacing();
        plot::scatter(
            title,
            &self.sweep_name,
            &self.config.projection.label(),
            &[Series::new("steady state", pts)],
            &marks,
            width,
        )
    }

    /// `(p, Δp)` phase portrait of one sweep value.
    pub fn phase_svg(&self, index: usize, title: &str) -> String {
        let pt = &self.points[index];
        let pts = pt.p.iter().copied().zip(pt.dp.iter().copied()).collect();
        plot::scatter(title, "p", "dp", &[Series::new("", pts)], &[], 0.0)
    }

    fn spacing(&self) -> f64 {
        if self.points.len() < 2 {
            return 0.0;
        }
        let n = self.points.len() - 1;
        (self.points[n].value - self.points[0].value).abs() / n as f64
    }

    /// Classification per sweep value using the full recorded outputs.
    pub fn classify(&self, tol: f64) -> Vec<Option<AttractorClass>> {
        self.points
            .iter()
            .map(|pt| {
                if pt.diverged_at.is_some() {
                    None
                } else {
                    classify_attractor(&pt.outputs, tol, None).ok()
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "period")]
pub enum AttractorKind {
    FixedPoint,
    Periodic(usize),
    QuasiperiodicOrChaotic,
    Chaotic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorClass {
    pub kind: AttractorKind,
    pub n_distinct: usize,
    pub lyapunov: Option<f64>,
}

impl AttractorClass {
    pub fn is_fixed_point(&self) -> bool {
        self.kind == AttractorKind::FixedPoint
    }
}

fn snap(v: &DVector<f64>, tol: f64) -> Vec<i64> {
    v.iter().map(|x| (x / tol).round() as i64).collect()
}

/// Classify a steady-state sample sequence after rounding to a `tol` grid.
///
/// One distinct point is a fixed point; `k ≤ n/2` distinct points with an
/// exact cyclic recurrence of period `k` are a `k`-cycle; anything else is
/// aperiodic, refined to chaotic when `lyapunov > 1e−3`.
pub fn classify_attractor(
    samples: &[DVector<f64>],
    tol: f64,
    lyapunov: Option<f64>,
) -> Result<AttractorClass> {
    if samples.len() < 8 {
        return Err(Error::TooFewSamples {
            needed: 8,
            got: samples.len(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol must be positive"));
    }
    let grid: Vec<Vec<i64>> = samples.iter().map(|s| snap(s, tol)).collect();
    let n_distinct = grid.iter().collect::<HashSet<_>>().len();
    let n = grid.len();
    let kind = if n_distinct == 1 {
        AttractorKind::FixedPoint
    } else if n_distinct <= n / 2 && (n_distinct..n).all(|t| grid[t] == grid[t - n_distinct]) {
        AttractorKind::Periodic(n_distinct)
    } else if lyapunov.is_some_and(|l| l > CHAOS_THRESHOLD) {
        AttractorKind::Chaotic
    } else {
        AttractorKind::QuasiperiodicOrChaotic
    };
    Ok(AttractorClass {
        kind,
        n_distinct,
        lyapunov,
    })
}

/// Scalar convenience wrapper of [`classify_attractor`].
pub fn classify_scalar(samples: &[f64], tol: f64, lyapunov: Option<f64>) -> Result<AttractorClass> {
    let v: Vec<DVector<f64>> = samples.iter().map(|s| DVector::from_element(1, *s)).collect();
    classify_attractor(&v, tol, lyapunov)
}

/// Classification with the Lyapunov exponent of the same constant-input run.
pub fn classify_with_lyapunov(
    model: &dyn DynamicalModel,
    point: &SweepPoint,
    cfg: &BifurcationConfig,
    tol: f64,
    horizon: usize,
) -> Result<AttractorClass> {
    let l = lyapunov_exponent(model, &cfg.x0, &cfg.input, cfg.burn_in, horizon)?;
    classify_attractor(&point.outputs, tol, Some(l))
}
