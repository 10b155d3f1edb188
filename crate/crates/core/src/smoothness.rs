//! Lipschitz constants of the cost and its gradient: closed-form bounds as
//! functions of the sequence length, empirical estimates, and cost-landscape
//! sweeps along directions in parameter space.

use std::fmt::Write as _;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plot::{self, Series};
use crate::sensitivity::{cost, cost_and_gradient, Dataset, LossFunction};
use crate::statespace::{with_params, DynamicalModel};

/// `|L_f − 1|` at or below this counts as marginal.
pub const MARGINAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Contractive,
    Marginal,
    Expanding,
}

impl Regime {
    pub fn of(l_f: f64) -> Self {
        if (l_f - 1.0).abs() <= MARGINAL_TOL {
            Regime::Marginal
        } else if l_f < 1.0 {
            Regime::Contractive
        } else {
            Regime::Expanding
        }
    }

    /// Growth class of `L_V` in `N`.
    pub fn l_v_class(&self) -> &'static str {
        match self {
            Regime::Contractive => "O(1)",
            Regime::Marginal => "O(N)",
            Regime::Expanding => "O(L_f^(2N))",
        }
    }

    /// Growth class of `L_V′` in `N`.
    pub fn l_v_prime_class(&self) -> &'static str {
        match self {
            Regime::Contractive => "O(1)",
            Regime::Marginal => "O(N^3)",
            Regime::Expanding => "O(L_f^(3N))",
        }
    }
}

/// `ln(eᵃ + eᵇ)`, exact for infinite arguments.
fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn lse(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `ln(eᵃ − eᵇ)` for `a ≥ b`.
fn lsub(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    a + (-(b - a).exp()).ln_1p()
}

/// `k·ln L` with `0·ln 0 = 0`.
fn ln_pow(ln_l: f64, k: usize) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * ln_l
    }
}

/// `ln S(t)`.
pub fn log_bound_s(l_f: f64, t: usize) -> f64 {
    let n = (t + 1) as f64;
    match Regime::of(l_f) {
        Regime::Marginal => 0.5 * n.ln(),
        Regime::Contractive => {
            if l_f == 0.0 {
                return 0.0;
            }
            let q = l_f * l_f;
            // (1 − q^{t+1}) / (1 − q)
            0.5 * ((-(n * q.ln()).exp_m1()).ln() - (-q.ln().exp_m1()).ln())
        }
        Regime::Expanding => {
            let lq = 2.0 * l_f.ln();
            // q^{t+1} (1 − q^{−(t+1)}) / (q − 1)
            0.5 * (n * lq + (-(-n * lq).exp()).ln_1p() - lq.exp_m1().ln())
        }
    }
}

/// `S(t) = √(Σ_{ℓ=0}^{t} L_f^{2ℓ})`.
pub fn bound_s(l_f: f64, t: usize) -> f64 {
    log_bound_s(l_f, t).exp()
}

/// How the output bound `M(t)` is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputBound {
    /// `M(t) = c·S(t)`.
    Scaled(f64),
    /// Explicit `M(0..=N)`.
    Table(Vec<f64>),
}

impl Default for OutputBound {
    fn default() -> Self {
        OutputBound::Scaled(1.0)
    }
}

/// Constants entering the Lipschitz bounds of `V` and `∇V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundInputs {
    pub l_f: f64,
    pub l_g: f64,
    #[serde(default)]
    pub l_f_prime: f64,
    #[serde(default)]
    pub l_g_prime: f64,
    pub k1: f64,
    pub k2: f64,
    #[serde(default)]
    pub k3: f64,
    #[serde(default)]
    pub k4: f64,
    pub l_y: f64,
    pub n: usize,
    #[serde(default)]
    pub m: OutputBound,
}

impl BoundInputs {
    /// Constants of `loss` with unit `L_g`, `L_f′`, `L_g′`, `L_y`.
    pub fn for_loss(l_f: f64, n: usize, loss: LossFunction, n_y: usize) -> Self {
        let (k1, k2) = loss.k1_k2(n_y);
        Self {
            l_f,
            l_g: 1.0,
            l_f_prime: 1.0,
            l_g_prime: 1.0,
            k1,
            k2,
            k3: loss.k3(),
            k4: loss.k4(),
            l_y: 1.0,
            n,
            m: OutputBound::default(),
        }
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        let nonneg = [
            self.l_g,
            self.l_f_prime,
            self.l_g_prime,
            self.k1,
            self.k2,
            self.k3,
            self.k4,
            self.l_y,
        ];
        if !(self.l_f >= 0.0) || nonneg.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("bound constants must be nonnegative"));
        }
        if self.n == 0 {
            return Err(Error::invalid("N must be at least 1"));
        }
        if let OutputBound::Table(m) = &self.m {
            if m.len() <= self.n {
                return Err(Error::invalid("M(t) table must cover t = 0..=N"));
            }
        }
        Ok(())
    }

    fn log_m(&self, ls: &[f64]) -> Vec<f64> {
        match &self.m {
            OutputBound::Scaled(c) => ls.iter().map(|l| c.ln() + l).collect(),
            OutputBound::Table(m) => m.iter().take(ls.len()).map(|v| v.ln()).collect(),
        }
    }
}

/// `L_V` and `L_V′` with their logarithms (finite even when the values overflow).
#[derive(Debug, Clone, Serialize)]
pub struct SmoothnessBounds {
    pub inputs: BoundInputs,
    /// `S(t)` for `t = 0..=N`.
    pub s_table: Vec<f64>,
    pub l_v: f64,
    pub log_l_v: f64,
    pub l_v_prime: f64,
    pub log_l_v_prime: f64,
    pub regime: Regime,
    pub l_v_class: String,
    pub l_v_prime_class: String,
}

/// `ln L_V = ln( (L_g/N) Σ_{t=1}^{N} (K₁L_y + K₂M(t)) S(t) )`.
pub fn log_bound_l_v(p: &BoundInputs) -> Result<f64> {
    p.validate()?;
    let ls: Vec<f64> = (0..=p.n).map(|t| log_bound_s(p.l_f, t)).collect();
    let lm = p.log_m(&ls);
    let a = (p.k1 * p.l_y).ln();
    let sum = lse((1..=p.n).map(|t| lse2(a, p.k2.ln() + lm[t]) + ls[t]));
    Ok(p.l_g.ln() - (p.n as f64).ln() + sum)
}

pub fn bound_l_v(p: &BoundInputs) -> Result<f64> {
    log_bound_l_v(p).map(f64::exp)
}

/// `ln L_V′` with `L_V′ = (1/N) Σ_{t=1}^{N} (K₃ L_y L_{J,t} + L_{Jŷ,t})` and the
/// `P(t,ℓ)`, `Q(t,ℓ)`, `T(t)` terms evaluated exactly.
pub fn log_bound_l_v_prime(p: &BoundInputs) -> Result<f64> {
    p.validate()?;
    let n = p.n;
    let ls: Vec<f64> = (0..=n).map(|t| log_bound_s(p.l_f, t)).collect();
    let lm = p.log_m(&ls);
    // lcum[t] = ln Σ_{j=0}^{t} S(j)
    let mut lcum = Vec::with_capacity(n + 1);
    let mut acc = f64::NEG_INFINITY;
    for l in &ls {
        acc = lse2(acc, *l);
        lcum.push(acc);
    }
    let ln_l = p.l_f.ln();
    let ln_gfp = p.l_g.ln() + p.l_f_prime.ln();
    let ln_gp = p.l_g_prime.ln();
    let ln_k4 = p.k4.ln();
    let ln_k3ly = (p.k3 * p.l_y).ln();
    let mut terms = Vec::with_capacity(n);
    for t in 1..=n {
        // A1 = Σ_ℓ L^{t−ℓ} Σ_{j=ℓ}^{t} S(j),  G = Σ_ℓ L^{t−ℓ}
        let a1 = lse((1..=t).map(|l| ln_pow(ln_l, t - l) + lsub(lcum[t], lcum[l - 1])));
        let g = lse((1..=t).map(|l| ln_pow(ln_l, t - l)));
        let p_sum = lse2(ln_gfp + a1, ln_l + ln_gp + ls[t] + g);
        let l_j = lse2(p_sum, ln_gp + ls[t]);
        let ln_t = ln_k4 + lse2(ln_gp + lm[t], 2.0 * p.l_g.ln());
        let q_sum = lse2(ln_k4 + lm[t] + ln_gfp + a1, ln_l + ln_t + ls[t] + g);
        let l_jy = lse2(q_sum, ln_t + ls[t]);
        terms.push(lse2(ln_k3ly + l_j, l_jy));
    }
    Ok(lse(terms.into_iter()) - (n as f64).ln())
}

pub fn bound_l_v_prime(p: &BoundInputs) -> Result<f64> {
    log_bound_l_v_prime(p).map(f64::exp)
}

/// Full report for one set of constants.
pub fn smoothness_bounds(p: &BoundInputs) -> Result<SmoothnessBounds> {
    let log_l_v = log_bound_l_v(p)?;
    let log_l_v_prime = log_bound_l_v_prime(p)?;
    let regime = Regime::of(p.l_f);
    Ok(SmoothnessBounds {
        inputs: p.clone(),
        s_table: (0..=p.n).map(|t| bound_s(p.l_f, t)).collect(),
        l_v: log_l_v.exp(),
        log_l_v,
        l_v_prime: log_l_v_prime.exp(),
        log_l_v_prime,
        regime,
        l_v_class: regime.l_v_class().into(),
        l_v_prime_class: regime.l_v_prime_class().into(),
    })
}

/// Least-squares slope of `y` against `x`.
pub fn fitted_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Axis-aligned box in θ-space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBox {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl ParamBox {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(hi.iter()).any(|(a, b)| a > b) {
            return Err(Error::EmptyRegion);
        }
        Ok(Self { lo, hi })
    }

    /// `centre ± radius` in every coordinate.
    pub fn around(centre: &DVector<f64>, radius: f64) -> Self {
        Self {
            lo: centre.add_scalar(-radius),
            hi: centre.add_scalar(radius),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(self.lo.len(), |i, _| {
            if self.hi[i] > self.lo[i] {
                rng.random_range(self.lo[i]..=self.hi[i])
            } else {
                self.lo[i]
            }
        })
    }
}

/// Pair-distance scales used in rotation: global pairs, then local ones.
pub const PAIR_SCALES: [Option<f64>; 4] = [None, Some(1e-2), Some(1e-4), Some(1e-6)];

#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalLipschitz {
    pub l_v_hat: f64,
    pub l_v_prime_hat: f64,
    pub n_pairs: usize,
    pub n_divergent: usize,
}

/// Draw the `i`-th pair; the stream is a prefix-stable function of the seed.
fn draw_pairs(region: &ParamBox, n_pairs: usize, seed: u64) -> Vec<(DVector<f64>, DVector<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_pairs)
        .map(|i| {
            let a = region.sample(&mut rng);
            let b = match PAIR_SCALES[i % PAIR_SCALES.len()] {
                None => region.sample(&mut rng),
                Some(eps) => {
                    let d = DVector::<f64>::from_fn(a.len(), |_, _| StandardNormal.sample(&mut rng));
                    let norm = d.norm().max(f64::MIN_POSITIVE);
                    &a + d * (eps / norm)
                }
            };
            (a, b)
        })
        .collect()
}

/// Largest observed `|V(θ)−V(φ)|/‖θ−φ‖` and `‖∇V(θ)−∇V(φ)‖/‖θ−φ‖` over
/// `n_pairs` sampled pairs; a lower bound on the true constants.
pub fn empirical_lipschitz_v(
    model: &dyn DynamicalModel,
    data: &Dataset,
    loss: LossFunction,
    region: &ParamBox,
    n_pairs: usize,
    seed: u64,
) -> Result<EmpiricalLipschitz> {
    if n_pairs < 10 {
        return Err(Error::TooFewSamples {
            needed: 10,
            got: n_pairs,
        });
    }
    if region.lo.len() != model.n_params() {
        return Err(Error::DimensionMismatch {
            what: "parameter box",
            expected: model.n_params(),
            got: region.lo.len(),
        });
    }
    let pairs = draw_pairs(region, n_pairs, seed);
    let eval = |th: &DVector<f64>| -> Result<(f64, DVector<f64>)> {
        let m = with_params(model, th.as_slice())?;
        let (v, g) = cost_and_gradient(m.as_ref(), data, loss)?;
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::DivergentCost);
        }
        Ok((v, g))
    };
    let ratios: Vec<Option<(f64, f64)>> = pairs
        .par_iter()
        .map(|(a, b)| {
            let dist = (a - b).norm();
            match (eval(a), eval(b)) {
                (Ok((va, ga)), Ok((vb, gb))) if dist > 0.0 => {
                    Some(((va - vb).abs() / dist, (ga - gb).norm() / dist))
                }
                _ => None,
            }
        })
        .collect();
    let mut out = EmpiricalLipschitz {
        l_v_hat: 0.0,
        l_v_prime_hat: 0.0,
        n_pairs,
        n_divergent: 0,
    };
    for r in ratios {
        match r {
            Some((v, g)) => {
                out.l_v_hat = out.l_v_hat.max(v);
                out.l_v_prime_hat = out.l_v_prime_hat.max(g);
            }
            None => out.n_divergent += 1,
        }
    }
    Ok(out)
}

/// One sweep direction `θ = origin + Σ s_k d_k`, `s_k ∈ [lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub direction: DVector<f64>,
    pub lo: f64,
    pub hi: f64,
    pub resolution: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        let n = self.resolution;
        (0..n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Cost (and optionally gradient norm) on a 1-D or 2-D grid; divergent
/// points hold `NaN`.
#[derive(Debug, Clone)]
pub struct LandscapeGrid {
    pub axes: Vec<Axis>,
    /// Row-major over the axes (last axis fastest).
    pub values: Vec<f64>,
    pub gradient_norms: Option<Vec<f64>>,
}

impl LandscapeGrid {
    fn coords(&self, idx: usize) -> Vec<f64> {
        match self.axes.len() {
            1 => vec![self.axes[0].values()[idx]],
            _ => {
                let n2 = self.axes[1].resolution;
                vec![
                    self.axes[0].values()[idx / n2],
                    self.axes[1].values()[idx % n2],
                ]
            }
        }
    }

    pub fn divergent_count(&self) -> usize {
        self.values.iter().filter(|v| !v.is_finite()).count()
    }

    /// `s1[,s2],V[,gradnorm]`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(if self.axes.len() == 1 { "s1" } else { "s1,s2" });
        s.push_str(",V");
        if self.gradient_norms.is_some() {
            s.push_str(",gradnorm");
        }
        s.push('\n');
        let v1 = self.axes[0].values();
        let v2 = self.axes.get(1).map(|a| a.values());
        for (i, v) in self.values.iter().enumerate() {
            match &v2 {
                None => write!(s, "{}", v1[i]).unwrap(),
                Some(v2) => {
                    let n2 = v2.len();
                    write!(s, "{},{}", v1[i / n2], v2[i % n2]).unwrap()
                }
            }
            write!(s, ",{}", fmt_num(*v)).unwrap();
            if let Some(g) = &self.gradient_norms {
                write!(s, ",{}", fmt_num(g[i])).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn to_svg(&self, title: &str) -> String {
        if self.axes.len() == 1 {
            let pts = self
                .axes[0]
                .values()
                .into_iter()
                .zip(self.values.iter().copied())
                .collect();
            plot::line(title, "s", "V", &[Series::new("V", pts)])
        } else {
            let n2 = self.axes[1].resolution;
            let rows: Vec<Vec<f64>> = self.values.chunks(n2).map(|c| c.to_vec()).collect();
            plot::heatmap(
                title,
                "s1",
                "s2",
                &self.axes[0].values(),
                &self.axes[1].values(),
                &rows,
            )
        }
    }

    /// θ at a flat grid index.
    pub fn theta_at(&self, origin: &DVector<f64>, idx: usize) -> DVector<f64> {
        let mut th = origin.clone();
        for (a, s) in self.axes.iter().zip(self.coords(idx)) {
            th += &a.direction * s;
        }
        th
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NaN".into()
    }
}

/// Evaluate the cost over `θ = origin + Σ s_k d_k` on a grid.
pub fn landscape_sweep(
    model: &dyn DynamicalModel,
    data: &Dataset,
    loss: LossFunction,
    origin: &DVector<f64>,
    axes: Vec<Axis>,
    with_gradient: bool,
) -> Result<LandscapeGrid> {
    if axes.is_empty() || axes.len() > 2 {
        return Err(Error::invalid("landscape needs one or two axes"));
    }
    for a in &axes {
        if a.resolution < 2 {
            return Err(Error::invalid("resolution must be at least 2 per axis"));
        }
        if a.direction.len() != model.n_params() || origin.len() != model.n_params() {
            return Err(Error::DimensionMismatch {
                what: "landscape direction",
                expected: model.n_params(),
                got: a.direction.len(),
            });
        }
    }
    let total: usize = axes.iter().map(|a| a.resolution).product();
    let mut grid = LandscapeGrid {
        axes,
        values: Vec::new(),
        gradient_norms: None,
    };
    let evals: Vec<(f64, f64)> = (0..total)
        .into_par_iter()
        .map(|i| {
            let th = grid.theta_at(origin, i);
            let m = match with_params(model, th.as_slice()) {
                Ok(m) => m,
                Err(_) => return (f64::NAN, f64::NAN),
            };
            if with_gradient {
                match cost_and_gradient(m.as_ref(), data, loss) {
                    Ok((v, g)) => (v, g.norm()),
                    Err(_) => (f64::NAN, f64::NAN),
                }
            } else {
                (cost(m.as_ref(), data, loss).unwrap_or(f64::NAN), f64::NAN)
            }
        })
        .collect();
    grid.values = evals.iter().map(|e| e.0).collect();
    if with_gradient {
        grid.gradient_norms = Some(evals.iter().map(|e| e.1).collect());
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimaCensus {
    pub count: usize,
    pub locations: Vec<f64>,
}

impl MinimaCensus {
    /// Minima with location in `[lo, hi]`.
    pub fn count_in(&self, lo: f64, hi: f64) -> usize {
        self.locations.iter().filter(|s| **s >= lo && **s <= hi).count()
    }
}

/// Strict interior local minima of a 1-D grid (neighbours must be finite).
pub fn local_minima_census(grid: &LandscapeGrid) -> Result<MinimaCensus> {
    if grid.axes.len() != 1 || grid.values.len() < 3 {
        return Err(Error::invalid("census needs a 1-D grid with at least 3 points"));
    }
    let s = grid.axes[0].values();
    let v = &grid.values;
    let locations: Vec<f64> = (1..v.len() - 1)
        .filter(|&i| {
            v[i - 1].is_finite()
                && v[i].is_finite()
                && v[i + 1].is_finite()
                && v[i] < v[i - 1]
                && v[i] < v[i + 1]
        })
        .map(|i| s[i])
        .collect();
    Ok(MinimaCensus {
        count: locations.len(),
        locations,
    })
}
