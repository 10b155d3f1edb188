//! Batched reverse accumulation for the concrete cells. Sequences of equal
//! length are stacked row-wise (`B × N_h` state blocks) so each step is a
//! handful of GEMMs. Agrees with the forward-sensitivity gradient.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cells::{dexp_adjoint, Activation, Cell, Readout, LSTM_RECURRENT};
use crate::error::{Error, Result};
use crate::sensitivity::{Dataset, LossFunction, Sequence};
use crate::statespace::{DynamicalModel, ParameterVector};

const GATE_INPUT: [&str; 4] = ["U_i", "U_f", "U_g", "U_o"];
const GATE_BIAS: [&str; 4] = ["b_i", "b_f", "b_g", "b_o"];

/// Sequences per work unit; fixed so results do not depend on the thread count.
const CHUNK: usize = 50;

enum Core {
    Lstm,
    Simple(Activation),
}

/// Weights in the stacked form used by the batched passes.
struct Unrolled {
    core: Core,
    n: usize,
    /// `Wᵀ`: `N_h × (4)N_h`.
    wt: DMatrix<f64>,
    /// `Uᵀ`: `N_z × (4)N_h`, absent without input.
    ut: Option<DMatrix<f64>>,
    b: Option<DVector<f64>>,
    /// `(W_y, b_y)` for a linear readout.
    readout: Option<(DMatrix<f64>, DVector<f64>)>,
}

fn stack_rows(p: &ParameterVector, names: &[&str]) -> Result<DMatrix<f64>> {
    let blocks: Vec<DMatrix<f64>> = names.iter().map(|n| p.block_matrix(n)).collect::<Result<_>>()?;
    let cols = blocks[0].ncols();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.nrows()).copy_from(&b);
        r += b.nrows();
    }
    Ok(out)
}

fn column(p: &ParameterVector, names: &[&str]) -> Result<DVector<f64>> {
    let mut v = Vec::new();
    for n in names {
        v.extend_from_slice(p.block(n)?);
    }
    Ok(DVector::from_vec(v))
}

impl Unrolled {
    fn new(cell: &Cell) -> Result<Self> {
        let p = cell.params();
        let readout_of = |r: Readout| -> Result<Option<(DMatrix<f64>, DVector<f64>)>> {
            Ok(match r {
                Readout::Identity => None,
                Readout::Linear(_) => Some((p.block_matrix("W_y")?, column(p, &["b_y"])?)),
            })
        };
        let nz = cell.input_dim();
        match cell {
            Cell::Lstm(_) | Cell::StableLstm(_) => {
                let lstm = match cell {
                    Cell::Lstm(c) => c,
                    Cell::StableLstm(c) => c.lstm(),
                    _ => unreachable!(),
                };
                Ok(Self {
                    core: Core::Lstm,
                    n: lstm.hidden(),
                    wt: stack_rows(p, &LSTM_RECURRENT)?.transpose(),
                    ut: if nz > 0 {
                        Some(stack_rows(p, &GATE_INPUT)?.transpose())
                    } else {
                        None
                    },
                    b: if lstm.has_biases() {
                        Some(column(p, &GATE_BIAS)?)
                    } else {
                        None
                    },
                    readout: readout_of(lstm.readout())?,
                })
            }
            Cell::Orthogonal(c) => Ok(Self {
                core: Core::Simple(c.activation()),
                n: c.hidden(),
                wt: c.recurrent().transpose(),
                ut: if nz > 0 { Some(p.block_matrix("U")?.transpose()) } else { None },
                b: if c.has_bias() { Some(column(p, &["b"])?) } else { None },
                readout: readout_of(c.readout())?,
            }),
            Cell::Vanilla(c) => Ok(Self {
                core: Core::Simple(Activation::Tanh),
                n: c.hidden(),
                wt: p.block_matrix("W")?.transpose(),
                ut: if nz > 0 { Some(p.block_matrix("U")?.transpose()) } else { None },
                b: Some(column(p, &["b"])?),
                readout: readout_of(c.readout())?,
            }),
        }
    }

    fn width(&self) -> usize {
        match self.core {
            Core::Lstm => 4 * self.n,
            Core::Simple(_) => self.n,
        }
    }

    fn output(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.readout {
            None => h.clone(),
            Some((w, b)) => {
                let mut y = h * w.transpose();
                for mut row in y.row_iter_mut() {
                    row += b.transpose();
                }
                y
            }
        }
    }
}

/// Gradient accumulators in stacked form.
struct Grads {
    dwt: DMatrix<f64>,
    dut: Option<DMatrix<f64>>,
    db: Option<DVector<f64>>,
    dread: Option<(DMatrix<f64>, DVector<f64>)>,
    value: f64,
}

impl Grads {
    fn zeros(u: &Unrolled) -> Self {
        Self {
            dwt: DMatrix::zeros(u.wt.nrows(), u.wt.ncols()),
            dut: u.ut.as_ref().map(|m| DMatrix::zeros(m.nrows(), m.ncols())),
            db: u.b.as_ref().map(|b| DVector::zeros(b.len())),
            dread: u
                .readout
                .as_ref()
                .map(|(w, b)| (DMatrix::zeros(w.nrows(), w.ncols()), DVector::zeros(b.len()))),
            value: 0.0,
        }
    }

    fn add(&mut self, o: Grads) {
        self.dwt += o.dwt;
        if let (Some(a), Some(b)) = (&mut self.dut, o.dut) {
            *a += b;
        }
        if let (Some(a), Some(b)) = (&mut self.db, o.db) {
            *a += b;
        }
        if let (Some(a), Some(b)) = (&mut self.dread, o.dread) {
            a.0 += b.0;
            a.1 += b.1;
        }
        self.value += o.value;
    }
}

fn inputs_at(seqs: &[&Sequence], t: usize, nz: usize) -> DMatrix<f64> {
    DMatrix::from_fn(seqs.len(), nz, |r, c| seqs[r].inputs[(t, c)])
}

fn finite(m: &DMatrix<f64>, step: usize) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { step })
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Forward and backward pass over equal-length sequences; each sequence's
/// contribution is scaled by `scale·weight`.
fn chunk_pass(u: &Unrolled, seqs: &[&Sequence], loss: LossFunction, scale: f64) -> Result<Grads> {
    let bsz = seqs.len();
    let len = seqs[0].len();
    let n = u.n;
    let nz = u.ut.as_ref().map_or(0, |m| m.nrows());
    let width = u.width();
    let lstm = matches!(u.core, Core::Lstm);

    let mut h = DMatrix::from_fn(bsz, n, |r, c| seqs[r].x0[c]);
    let mut c = if lstm {
        DMatrix::from_fn(bsz, n, |r, j| seqs[r].x0[n + j])
    } else {
        DMatrix::zeros(0, 0)
    };
    // per transition: activations (gates or post-activation), and for LSTM tanh(c')
    let mut hs = Vec::with_capacity(len);
    let mut cs = Vec::with_capacity(len);
    let mut acts = Vec::with_capacity(len);
    let mut pres = Vec::with_capacity(len);
    let mut tcs = Vec::with_capacity(len);
    let mut zs = Vec::with_capacity(len);
    for t in 0..len {
        hs.push(h.clone());
        if lstm {
            cs.push(c.clone());
        }
        if t + 1 == len {
            break;
        }
        let z = if nz > 0 { Some(inputs_at(seqs, t, nz)) } else { None };
        let mut pre = &h * &u.wt;
        if let (Some(z), Some(ut)) = (&z, &u.ut) {
            pre.gemm(1.0, z, ut, 1.0);
        }
        if let Some(b) = &u.b {
            for mut row in pre.row_iter_mut() {
                row += b.transpose();
            }
        }
        match u.core {
            Core::Lstm => {
                let mut g = pre;
                for j in 0..width {
                    let tanh_gate = j / n == 2;
                    for v in g.column_mut(j).iter_mut() {
                        *v = if tanh_gate { v.tanh() } else { sigmoid(*v) };
                    }
                }
                let mut c_next = DMatrix::zeros(bsz, n);
                let mut tc = DMatrix::zeros(bsz, n);
                let mut h_next = DMatrix::zeros(bsz, n);
                for j in 0..n {
                    for r in 0..bsz {
                        let (gi, gf, gg, go) = (g[(r, j)], g[(r, n + j)], g[(r, 2 * n + j)], g[(r, 3 * n + j)]);
                        let cn = gf * c[(r, j)] + gi * gg;
                        let th = cn.tanh();
                        c_next[(r, j)] = cn;
                        tc[(r, j)] = th;
                        h_next[(r, j)] = go * th;
                    }
                }
                finite(&c_next, t + 1)?;
                acts.push(g);
                tcs.push(tc);
                c = c_next;
                h = h_next;
            }
            Core::Simple(act) => {
                let a = pre.map(|v| act.apply(v));
                finite(&a, t + 1)?;
                h = a.clone();
                acts.push(a);
                pres.push(pre);
            }
        }
        finite(&h, t + 1)?;
        zs.push(z);
    }

    let mut gr = Grads::zeros(u);
    let mut dh = DMatrix::zeros(bsz, n);
    let mut dc = DMatrix::<f64>::zeros(bsz, n);
    for t in (0..len).rev() {
        // output at t
        let supervised: Vec<Option<Vec<f64>>> = seqs.iter().map(|s| s.target(t)).collect();
        if supervised.iter().any(|s| s.is_some()) {
            let y = u.output(&hs[t]);
            let ny = y.ncols();
            let mut dy = DMatrix::zeros(bsz, ny);
            for (r, target) in supervised.iter().enumerate() {
                if let Some(target) = target {
                    let yhat: Vec<f64> = y.row(r).iter().copied().collect();
                    let w = scale * seqs[r].weight();
                    gr.value += w * loss.value(&yhat, target);
                    let d = loss.derivative(&yhat, target);
                    for k in 0..ny {
                        dy[(r, k)] = w * d[k];
                    }
                }
            }
            match (&u.readout, &mut gr.dread) {
                (Some((wy, _)), Some((dwy, dby))) => {
                    dwy.gemm_tr(1.0, &dy, &hs[t], 1.0);
                    *dby += dy.row_sum().transpose();
                    dh.gemm(1.0, &dy, wy, 1.0);
                }
                _ => dh += &dy,
            }
        }
        if t == 0 {
            break;
        }
        let k = t - 1;
        let h_prev = &hs[k];
        let dpre = match u.core {
            Core::Lstm => {
                let g = &acts[k];
                let tc = &tcs[k];
                let c_prev = &cs[k];
                let mut dpre = DMatrix::zeros(bsz, width);
                let mut dc_prev = DMatrix::zeros(bsz, n);
                for j in 0..n {
                    for r in 0..bsz {
                        let (gi, gf, gg, go) = (g[(r, j)], g[(r, n + j)], g[(r, 2 * n + j)], g[(r, 3 * n + j)]);
                        let th = tc[(r, j)];
                        let dht = dh[(r, j)];
                        let dct = dc[(r, j)] + dht * go * (1.0 - th * th);
                        dpre[(r, j)] = dct * gg * gi * (1.0 - gi);
                        dpre[(r, n + j)] = dct * c_prev[(r, j)] * gf * (1.0 - gf);
                        dpre[(r, 2 * n + j)] = dct * gi * (1.0 - gg * gg);
                        dpre[(r, 3 * n + j)] = dht * th * go * (1.0 - go);
                        dc_prev[(r, j)] = dct * gf;
                    }
                }
                dc = dc_prev;
                dpre
            }
            Core::Simple(act) => {
                let a = &acts[k];
                let pre = &pres[k];
                DMatrix::from_fn(bsz, n, |r, j| dh[(r, j)] * act.derivative(pre[(r, j)], a[(r, j)]))
            }
        };
        gr.dwt.gemm_tr(1.0, h_prev, &dpre, 1.0);
        if let (Some(dut), Some(z)) = (&mut gr.dut, &zs[k]) {
            dut.gemm_tr(1.0, z, &dpre, 1.0);
        }
        if let Some(db) = &mut gr.db {
            *db += dpre.row_sum().transpose();
        }
        dh = &dpre * u.wt.transpose();
    }
    Ok(gr)
}

fn unstack(p: &mut ParameterVector, names: &[&str], stacked: &DMatrix<f64>) -> Result<()> {
    let mut r = 0;
    for name in names {
        let rows = p.spec(name)?.rows;
        p.set_block_matrix(name, &stacked.rows(r, rows).into_owned())?;
        r += rows;
    }
    Ok(())
}

fn unstack_vec(p: &mut ParameterVector, names: &[&str], v: &DVector<f64>) -> Result<()> {
    let mut r = 0;
    for name in names {
        let len = p.spec(name)?.len();
        p.set_block(name, &v.as_slice()[r..r + len])?;
        r += len;
    }
    Ok(())
}

/// `(V, ∇V)` over `seqs` by batched reverse accumulation, with the same
/// normalization as [`crate::sensitivity::cost_and_gradient`].
pub fn reverse_cost_and_gradient(
    cell: &Cell,
    seqs: &[&Sequence],
    loss: LossFunction,
) -> Result<(f64, DVector<f64>)> {
    if seqs.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    for s in seqs {
        if s.targets.ncols() != cell.output_dim() {
            return Err(Error::DimensionMismatch {
                what: "targets",
                expected: cell.output_dim(),
                got: s.targets.ncols(),
            });
        }
        if s.x0.len() != cell.state_dim() || s.inputs.ncols() != cell.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "sequence",
                expected: cell.state_dim(),
                got: s.x0.len(),
            });
        }
    }
    let u = Unrolled::new(cell)?;
    let scale = 1.0 / seqs.len() as f64;
    // equal-length groups in first-seen order, then fixed-size chunks
    let mut groups: Vec<Vec<&Sequence>> = Vec::new();
    for s in seqs {
        match groups.iter_mut().find(|g| g[0].len() == s.len()) {
            Some(g) => g.push(s),
            None => groups.push(vec![s]),
        }
    }
    let chunks: Vec<&[&Sequence]> = groups.iter().flat_map(|g| g.chunks(CHUNK)).collect();
    let parts: Vec<Result<Grads>> = chunks
        .par_iter()
        .map(|c| chunk_pass(&u, c, loss, scale))
        .collect();
    let mut total = Grads::zeros(&u);
    for p in parts {
        total.add(p?);
    }

    let mut g = cell.params().clone();
    g.values_mut().fill(0.0);
    let dw = total.dwt.transpose();
    match cell {
        Cell::Lstm(_) | Cell::StableLstm(_) => {
            unstack(&mut g, &LSTM_RECURRENT, &dw)?;
            if let Some(dut) = &total.dut {
                unstack(&mut g, &GATE_INPUT, &dut.transpose())?;
            }
            if let Some(db) = &total.db {
                unstack_vec(&mut g, &GATE_BIAS, db)?;
            }
        }
        Cell::Orthogonal(c) => {
            g.set_block("S_raw", &dexp_adjoint(&c.skew(), &dw))?;
            if let Some(dut) = &total.dut {
                g.set_block_matrix("U", &dut.transpose())?;
            }
            if let Some(db) = &total.db {
                g.set_block("b", db.as_slice())?;
            }
        }
        Cell::Vanilla(_) => {
            g.set_block_matrix("W", &dw)?;
            if let Some(dut) = &total.dut {
                g.set_block_matrix("U", &dut.transpose())?;
            }
            if let Some(db) = &total.db {
                g.set_block("b", db.as_slice())?;
            }
        }
    }
    if let Some((dwy, dby)) = &total.dread {
        g.set_block_matrix("W_y", dwy)?;
        g.set_block("b_y", dby.as_slice())?;
    }
    Ok((total.value, DVector::from_column_slice(g.values())))
}

/// Cost alone over a whole dataset via the batched forward pass.
pub fn dataset_cost_and_gradient(cell: &Cell, data: &Dataset, loss: LossFunction) -> Result<(f64, DVector<f64>)> {
    let seqs: Vec<&Sequence> = data.sequences.iter().collect();
    reverse_cost_and_gradient(cell, &seqs, loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::{LstmCell, OrthogonalRnnCell, ProjectionConfig, StableLstmCell, VanillaRnnCell};
    use crate::sensitivity::{cost_and_gradient, relative_error, Supervision};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(cell: &Cell, lens: &[usize], sup: Supervision, binary: bool, rng: &mut ChaCha8Rng) -> Dataset {
        let nx = cell.state_dim();
        let nz = cell.input_dim();
        let ny = cell.output_dim();
        let seqs = lens
            .iter()
            .map(|&len| {
                let rows = if sup == Supervision::EveryStep { len } else { 1 };
                Sequence::new(
                    DVector::from_fn(nx, |_, _| rng.random_range(-0.5..0.5)),
                    DMatrix::from_fn(len, nz, |_, _| rng.random_range(-1.0..1.0)),
                    DMatrix::from_fn(rows, ny, |_, _| {
                        if binary {
                            rng.random_range(0..2) as f64
                        } else {
                            rng.random_range(-1.0..1.0)
                        }
                    }),
                    sup,
                )
                .unwrap()
            })
            .collect();
        Dataset::new(seqs)
    }

    fn cells(rng: &mut ChaCha8Rng) -> Vec<Cell> {
        let lstm = LstmCell::random(5, 3, true, Readout::Linear(2), rng);
        let mut big = LstmCell::random(5, 3, true, Readout::Linear(2), rng);
        let v: Vec<f64> = big.params().values().iter().map(|x| 2.5 * x).collect();
        big.set_param_values(&v).unwrap();
        vec![
            Cell::Lstm(lstm),
            Cell::Lstm(LstmCell::random(4, 0, false, Readout::Identity, rng)),
            Cell::StableLstm(StableLstmCell::new(big, ProjectionConfig::default()).unwrap()),
            Cell::Orthogonal(OrthogonalRnnCell::random(6, 2, true, Activation::Tanh, Readout::Linear(1), rng)),
            Cell::Orthogonal(OrthogonalRnnCell::random(4, 2, false, Activation::Relu, Readout::Identity, rng)),
            Cell::Vanilla(VanillaRnnCell::random(5, 2, Readout::Linear(2), rng)),
        ]
    }

    #[test]
    fn matches_forward_sensitivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for cell in cells(&mut rng) {
            for (sup, loss) in [
                (Supervision::EveryStep, LossFunction::SquaredError),
                (Supervision::FinalStep, LossFunction::SigmoidCrossEntropy),
            ] {
                let d = data(&cell, &[7, 7, 12, 7, 1], sup, loss == LossFunction::SigmoidCrossEntropy, &mut rng);
                let (v0, g0) = cost_and_gradient(&cell, &d, loss).unwrap();
                let (v1, g1) = dataset_cost_and_gradient(&cell, &d, loss).unwrap();
                assert!((v0 - v1).abs() <= 1e-12 * v0.abs().max(1.0), "{} {v0} {v1}", cell.kind());
                let e = relative_error(&g1, &g0, 1e-12);
                assert!(e < 1e-8, "{} {:?}: {e}", cell.kind(), sup);
            }
        }
    }

    #[test]
    fn chunking_is_exact_across_batch_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cell = Cell::Lstm(LstmCell::random(3, 1, true, Readout::Linear(1), &mut rng));
        let d = data(&cell, &[4; 120], Supervision::EveryStep, false, &mut rng);
        let (_, g) = dataset_cost_and_gradient(&cell, &d, LossFunction::SquaredError).unwrap();
        let (_, g0) = cost_and_gradient(&cell, &d, LossFunction::SquaredError).unwrap();
        assert!(relative_error(&g, &g0, 1e-12) < 1e-10);
    }
}
