use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DynamicalModel, Trajectory};
use crate::error::{Error, Result};

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

fn from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Format("ragged trajectory rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

impl Trajectory {
    /// CSV with header `t,x0..x{Nx-1},y0..y{Ny-1}`; values use the shortest
    /// representation that round-trips exactly.
    pub fn to_csv(&self) -> String {
        let nx = self.states.ncols();
        let ny = self.outputs.ncols();
        let mut s = String::from("t");
        for i in 0..nx {
            write!(s, ",x{i}").unwrap();
        }
        for i in 0..ny {
            write!(s, ",y{i}").unwrap();
        }
        s.push('\n');
        for t in 0..self.len() {
            write!(s, "{}", self.t0 + t).unwrap();
            for v in self.states.row(t).iter().chain(self.outputs.row(t).iter()) {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// Parse the CSV form back; inputs are not part of the CSV and come back empty.
    /// Lines starting with `#` are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"t") {
            return Err(Error::Format("CSV header must start with `t`".into()));
        }
        let nx = cols.iter().filter(|c| c.starts_with('x')).count();
        let ny = cols.iter().filter(|c| c.starts_with('y')).count();
        let mut t0 = None;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let vals: Vec<&str> = line.split(',').collect();
            if vals.len() != 1 + nx + ny {
                return Err(Error::Format(format!("bad CSV row `{line}`")));
            }
            let parse = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad number `{v}`")))
            };
            if t0.is_none() {
                t0 = Some(
                    vals[0]
                        .parse::<usize>()
                        .map_err(|_| Error::Format("bad time index".into()))?,
                );
            }
            xs.push(vals[1..=nx].iter().map(|v| parse(v)).collect::<Result<Vec<_>>>()?);
            ys.push(vals[1 + nx..].iter().map(|v| parse(v)).collect::<Result<Vec<_>>>()?);
        }
        let n = xs.len();
        Ok(Trajectory {
            states: from_rows(&xs, nx)?,
            outputs: from_rows(&ys, ny)?,
            inputs: DMatrix::zeros(n, 0),
            t0: t0.unwrap_or(0),
        })
    }
}

/// JSON envelope tying a trajectory to the model and seed that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryEnvelope {
    pub model: String,
    pub theta_hash: String,
    pub seed: Option<u64>,
    pub t0: usize,
    pub states: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
}

impl TrajectoryEnvelope {
    pub fn new(model: &dyn DynamicalModel, tr: &Trajectory, seed: Option<u64>) -> Self {
        Self {
            model: model.name().to_string(),
            theta_hash: model.params().content_hash(),
            seed,
            t0: tr.t0,
            states: rows(&tr.states),
            outputs: rows(&tr.outputs),
            inputs: rows(&tr.inputs),
        }
    }

    pub fn trajectory(&self, nx: usize, ny: usize, nz: usize) -> Result<Trajectory> {
        Ok(Trajectory {
            states: from_rows(&self.states, nx)?,
            outputs: from_rows(&self.outputs, ny)?,
            inputs: from_rows(&self.inputs, nz)?,
            t0: self.t0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::simulate;
    use crate::statespace::toy::TanhMap;
    use nalgebra::dvector;
    use proptest::prelude::*;

    #[test]
    fn csv_header_layout() {
        let m = TanhMap::new(DMatrix::from_row_slice(2, 2, &[0.5, 1.0, -1.0, 0.2]));
        let tr = simulate(&m, &dvector![0.1, 0.2], &DMatrix::zeros(3, 0)).unwrap();
        let csv = tr.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "t,x0,x1,y0,y1");
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn envelope_carries_hash() {
        let m = TanhMap::scalar(1.5);
        let tr = simulate(&m, &dvector![0.3], &DMatrix::zeros(4, 0)).unwrap();
        let env = TrajectoryEnvelope::new(&m, &tr, Some(7));
        let text = serde_json::to_string(&env).unwrap();
        let back: TrajectoryEnvelope = serde_json::from_str(&text).unwrap();
        assert_eq!(back.theta_hash, m.params().content_hash());
        assert_eq!(back.trajectory(1, 1, 0).unwrap(), tr);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(w in -3.0f64..3.0, x0 in -1.0f64..1.0, n in 1usize..40) {
            let m = TanhMap::scalar(w);
            let tr = simulate(&m, &dvector![x0], &DMatrix::zeros(n, 0)).unwrap();
            let back = Trajectory::from_csv(&tr.to_csv()).unwrap();
            prop_assert_eq!(back.states, tr.states);
            prop_assert_eq!(back.outputs, tr.outputs);
        }
    }
}
