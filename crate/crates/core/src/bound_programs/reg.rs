use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use super::{corner_min, grid_coord, lerp, parallel_min, CellProgram, RegCell, EPS};
use crate::error::{Error, Result};

/// Sandwich bounds on the middle and low truncated means of a regular buyer
/// with unit monopoly revenue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegAux {
    pub q0: f64,
    pub m_lo: f64,
    pub m_hi: f64,
    pub l_lo: f64,
    pub l_hi: f64,
}

pub fn reg_aux(alpha: f64, q_m: f64, q: f64, v0: f64) -> Result<RegAux> {
    if q_m <= EPS {
        return Err(Error::SingularInput("monopoly quantile at zero"));
    }
    if q >= 1.0 - EPS {
        return Err(Error::SingularInput("quantile at one"));
    }
    if alpha - v0 <= EPS {
        return Err(Error::SingularInput("intercept reaches alpha"));
    }
    let q0 = 1.0 - (1.0 - v0) * (1.0 - q) / (alpha - v0);
    let slope = v0 + (alpha - v0) / (1.0 - q);
    let inv_q = (1.0 / q).ln();
    Ok(RegAux {
        q0,
        m_lo: (q / q_m).ln() * (1.0 + (1.0 - alpha) / (q - q_m) * q_m) - 1.0 + alpha,
        m_hi: (q0 / q_m).ln() + (q / q0).ln() * slope - (q - q0) / (1.0 - q) * (alpha - v0),
        l_lo: alpha * inv_q / (1.0 - q) - alpha,
        l_hi: inv_q * slope - alpha + v0,
    })
}

/// Regular program on one cell with `H = 1` and `L` at its upper bound.
#[derive(Debug, Clone, Copy)]
pub struct RegProgram {
    pub cell: RegCell,
}

impl RegProgram {
    pub fn new(cell: RegCell) -> Self {
        Self { cell }
    }

    fn q_range(&self, q_m: f64) -> (f64, f64) {
        (q_m + (1.0 - self.cell.alpha) * (1.0 - q_m), 1.0)
    }

    fn v0_max(&self, q_m: f64, q: f64) -> f64 {
        (1.0 - (1.0 - self.cell.alpha) * (1.0 - q_m) / (q - q_m)).max(0.0)
    }

    fn point(&self, q_m: f64, q: f64, v0: f64) -> Option<(f64, f64, f64)> {
        let a = reg_aux(self.cell.alpha, q_m, q, v0).ok()?;
        let (v, _, m) = corner_min(self.cell.alpha, (1.0, 1.0), (a.m_lo, a.m_hi), a.l_hi)?;
        Some((v, m, a.l_hi))
    }

    pub(crate) fn coords(&self, u: [f64; 3]) -> (f64, f64, f64) {
        let q_m = lerp(self.cell.s, self.cell.l, u[0]);
        let (lo, hi) = self.q_range(q_m);
        let q = lerp(lo, hi, u[1]);
        let v0 = if q - q_m > 0.0 {
            lerp(0.0, self.v0_max(q_m, q), u[2])
        } else {
            0.0
        };
        (q_m, q, v0)
    }
}

impl CellProgram for RegProgram {
    fn alpha(&self) -> f64 {
        self.cell.alpha
    }

    fn with_alpha(&self, alpha: f64) -> Self {
        Self {
            cell: RegCell { alpha, ..self.cell },
        }
    }

    fn value_at(&self, u: [f64; 3]) -> Option<f64> {
        let (q_m, q, v0) = self.coords(u);
        self.point(q_m, q, v0).map(|p| p.0)
    }

    fn describe(&self, u: [f64; 3]) -> Vec<(String, f64)> {
        let (q_m, q, v0) = self.coords(u);
        let (value, m, l) = self
            .point(q_m, q, v0)
            .unwrap_or((f64::NAN, f64::NAN, f64::NAN));
        [
            ("q_m", q_m),
            ("q", q),
            ("v0", v0),
            ("H", 1.0),
            ("M", m),
            ("L", l),
            ("value", value),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    fn grid_min(&self, n: usize, axis: &[usize], stop_below: f64) -> Option<(f64, [usize; 3])> {
        parallel_min(axis, stop_below, |i, abort: &AtomicBool| {
            let q_m = lerp(self.cell.s, self.cell.l, grid_coord(i, n));
            let (lo, hi) = self.q_range(q_m);
            let mut best: Option<(f64, [usize; 3])> = None;
            for &j in axis {
                if abort.load(Ordering::Relaxed) {
                    return best;
                }
                let q = lerp(lo, hi, grid_coord(j, n));
                if q >= 1.0 - EPS || q - q_m <= 0.0 {
                    continue;
                }
                let ub = self.v0_max(q_m, q);
                for &k in axis {
                    let v0 = lerp(0.0, ub, grid_coord(k, n));
                    if let Some((v, _, _)) = self.point(q_m, q, v0) {
                        if best.map_or(true, |b| v < b.0) {
                            best = Some((v, [i, j, k]));
                            if v < stop_below {
                                return best;
                            }
                        }
                    }
                }
            }
            best
        })
    }
}
