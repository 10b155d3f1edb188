use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rnnlab::analysis::{check_entropy_bound, entropy_linear_gaussian, hadamard_chain};
use rnnlab::sensitivity::{Dataset, LossFunction};
use rnnlab::smoothness::{empirical_lipschitz_v, smoothness_bounds, BoundInputs, OutputBound, ParamBox};
use rnnlab::statespace::toy::LinearSystem;
use serde_json::{json, Map, Value};

use super::{EntropyArgs, SmoothnessArgs};
use crate::config::{config_err, parse_list, CliResult, Context};

pub fn loss(s: Option<&str>) -> CliResult<LossFunction> {
    match s.unwrap_or("squared") {
        "squared" | "mse" => Ok(LossFunction::SquaredError),
        "xent" | "cross_entropy" => Ok(LossFunction::SigmoidCrossEntropy),
        other => Err(config_err(format!("unknown loss `{other}` (use squared or xent)"))),
    }
}

/// Rademacher input sequences for the scalar system `x' = a·x + θ·u` at `θ = 1`.
pub fn scalar_dataset(a: f64, n: usize, sequences: usize, seed: u64) -> CliResult<Dataset> {
    let truth = LinearSystem::scalar_input_gain(a, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0s = vec![DVector::zeros(1); sequences];
    let us: Vec<DMatrix<f64>> = (0..sequences)
        .map(|_| DMatrix::from_fn(n, 1, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 }))
        .collect();
    Ok(Dataset::from_model(&truth, &x0s, &us)?)
}

pub fn run_smoothness(ctx: &Context, a: &SmoothnessArgs) -> CliResult<()> {
    let want_bounds = a.bounds.unwrap_or(false);
    let want_empirical = a.empirical.unwrap_or(false);
    if !want_bounds && !want_empirical {
        return Err(config_err("smoothness needs --bounds and/or --empirical"));
    }
    let l_f = a.lf.ok_or_else(|| config_err("--Lf is required"))?;
    let n = a.n.ok_or_else(|| config_err("--N is required"))?;
    let loss = loss(a.loss.as_deref())?;
    let mut body = Map::new();
    if want_bounds {
        let mut p = BoundInputs::for_loss(l_f, n, loss, a.ny.unwrap_or(1));
        p.l_g = a.lg.unwrap_or(p.l_g);
        p.l_f_prime = a.lf_prime.unwrap_or(p.l_f_prime);
        p.l_g_prime = a.lg_prime.unwrap_or(p.l_g_prime);
        p.l_y = a.ly.unwrap_or(p.l_y);
        p.m = OutputBound::Scaled(a.c.unwrap_or(1.0));
        let b = smoothness_bounds(&p)?;
        body.insert("inputs".into(), serde_json::to_value(&b.inputs).unwrap());
        body.insert("S_table".into(), json!(b.s_table));
        body.insert("L_V".into(), json!(b.l_v));
        body.insert("log_L_V".into(), json!(b.log_l_v));
        body.insert("L_V_prime".into(), json!(b.l_v_prime));
        body.insert("log_L_V_prime".into(), json!(b.log_l_v_prime));
        body.insert("regime".into(), json!(b.regime));
        body.insert(
            "growth".into(),
            json!({"L_V": b.l_v_class, "L_V_prime": b.l_v_prime_class}),
        );
    }
    if want_empirical {
        if loss != LossFunction::SquaredError {
            return Err(config_err("--empirical uses the squared-error toy system"));
        }
        let data = scalar_dataset(l_f, n, a.sequences.unwrap_or(50), ctx.seed)?;
        let model = LinearSystem::scalar_input_gain(l_f, 1.0);
        let region = ParamBox::around(&DVector::from_element(1, 1.0), 0.5);
        let e = empirical_lipschitz_v(&model, &data, loss, &region, a.pairs.unwrap_or(200), ctx.seed)?;
        body.insert("empirical".into(), serde_json::to_value(&e).unwrap());
    }
    ctx.write_json("smoothness.json", Value::Object(body))?;
    Ok(())
}

/// `diag:a,b,…` or `rows:a,b;c,d` (row-major, `;` between rows).
pub fn parse_matrix(s: &str) -> CliResult<DMatrix<f64>> {
    let (kind, body) = s
        .split_once(':')
        .ok_or_else(|| config_err(format!("matrix `{s}` must start with diag: or rows:")))?;
    match kind {
        "diag" => {
            let d = parse_list(body)?;
            if d.is_empty() {
                return Err(config_err("empty diagonal"));
            }
            Ok(DMatrix::from_diagonal(&DVector::from_vec(d)))
        }
        "rows" => {
            let rows: Vec<Vec<f64>> = body.split(';').map(parse_list).collect::<CliResult<_>>()?;
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(config_err(format!("matrix `{s}` is not square")));
            }
            Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
        }
        other => Err(config_err(format!("unknown matrix form `{other}`"))),
    }
}

pub fn run_entropy(ctx: &Context, a: &EntropyArgs) -> CliResult<()> {
    let m = parse_matrix(a.a.as_deref().ok_or_else(|| config_err("--A is required"))?)?;
    let steps = a.t.unwrap_or(10);
    let sigma0 = DMatrix::identity(m.nrows(), m.nrows()) * a.sigma0.unwrap_or(1.0);
    let trace = entropy_linear_gaussian(&m, &sigma0, steps)?;
    let l_f = a.lf.unwrap_or_else(|| m.singular_values().max());
    let report = check_entropy_bound(&trace, l_f)?;
    let chain = hadamard_chain(&m);
    ctx.write_json(
        "entropy.json",
        json!({
            "h": trace.h,
            "h_propagated": trace.h_propagated,
            "increment": trace.increment,
            "log_abs_det": chain.log_abs_det,
            "L_f": l_f,
            "report": report,
            "hadamard": chain,
        }),
    )?;
    Ok(())
}
