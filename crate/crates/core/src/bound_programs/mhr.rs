use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use super::{corner_min, grid_coord, lambert_w0, lerp, parallel_min, CellProgram, MhrCell, EPS};
use crate::error::{Error, Result};

/// Sandwich bounds on the truncated means of an MHR buyer with unit monopoly
/// revenue, split at `p` and the monopoly reserve `r_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MhrAux {
    pub v1: f64,
    pub m_lo: f64,
    pub m_hi: f64,
    pub l_lo: f64,
    pub l_hi: f64,
    pub h_lo: f64,
    pub h_hi: f64,
}

fn check(alpha: f64, r_m: f64, p: f64, v0: f64) -> Result<()> {
    if p <= alpha * (1.0 + EPS) {
        return Err(Error::SingularInput("price at alpha"));
    }
    if r_m <= 1.0 + EPS {
        return Err(Error::SingularInput("monopoly reserve at one"));
    }
    if p - v0 <= EPS {
        return Err(Error::SingularInput("intercept reaches price"));
    }
    Ok(())
}

/// Crossing of the line through `(v0, 0)` and `(p, ln(p/α))` with the tangent
/// of `ln v` at `r_m`.
fn crossing(alpha: f64, r_m: f64, p: f64, v0: f64) -> f64 {
    let l = (p / alpha).ln();
    let lr = r_m.ln();
    (l - lr + 1.0 - p / (p - v0) * l) / (1.0 / r_m - l / (p - v0))
}

pub fn mhr_aux(alpha: f64, r_m: f64, p: f64, v0: f64) -> Result<MhrAux> {
    check(alpha, r_m, p, v0)?;
    let l = (p / alpha).ln();
    let v1 = crossing(alpha, r_m, p, v0);
    let v1 = if v1.is_finite() {
        v1.clamp(p, r_m)
    } else {
        r_m
    };
    let decay = (p / alpha).powf(-(v1 - p) / (p - v0));
    Ok(MhrAux {
        v1,
        m_lo: (r_m - p) * (alpha * r_m - p) / (p * r_m * (alpha * r_m / p).ln()) - 1.0 + alpha,
        m_hi: alpha / p * (1.0 - decay) * (p - v0) / l + (1.0 - v1 / r_m).exp() - 2.0 + alpha,
        l_lo: (p - alpha) / l - alpha,
        l_hi: (1.0 - alpha / p) * (p - v0) / l + v0 - alpha,
        h_lo: 1.0,
        h_hi: 2.0,
    })
}

/// The alternative closed form `((p/α)^{(v1−p)/(p−v0)} − 1)(p−v0)/ln(p/α) + e^{1−v1/r_m} − 2 + α`
/// for the upper middle bound. It overstates the mean under the lower
/// sandwich curve and is kept for comparison only.
pub fn mhr_m_hi_alt(alpha: f64, r_m: f64, p: f64, v0: f64) -> Result<f64> {
    let a = mhr_aux(alpha, r_m, p, v0)?;
    let l = (p / alpha).ln();
    Ok(
        ((p / alpha).powf((a.v1 - p) / (p - v0)) - 1.0) * (p - v0) / l + (1.0 - a.v1 / r_m).exp()
            - 2.0
            + alpha,
    )
}

/// Price range `[p_lo, p_hi]` at reserve `r_m`, or `None` when empty.
pub fn mhr_price_range(alpha: f64, r_m: f64) -> Option<(f64, f64)> {
    let lr = r_m.ln();
    let lo = (-r_m * lambert_w0(-alpha / std::f64::consts::E).ok()?).max(alpha);
    let hi = -r_m * lambert_w0(-alpha * lr / r_m).ok()? / lr;
    (hi.is_finite() && hi >= lo).then_some((lo, hi))
}

/// Upper end of the intercept range at `(r_m, p)`.
pub fn mhr_v0_max(alpha: f64, r_m: f64, p: f64) -> f64 {
    let lr = r_m.ln();
    (r_m - lr / (lr - (p / alpha).ln()) * (r_m - p)).max(0.0)
}

/// MHR program on one cell with `L` at its upper bound and `H` ranging over `[a, b]`.
#[derive(Debug, Clone, Copy)]
pub struct MhrProgram {
    pub cell: MhrCell,
}

impl MhrProgram {
    pub fn new(cell: MhrCell) -> Self {
        Self { cell }
    }

    fn point(&self, r_m: f64, p: f64, v0: f64) -> Option<(f64, f64, f64, f64)> {
        let a = mhr_aux(self.cell.alpha, r_m, p, v0).ok()?;
        let h = (self.cell.a.max(a.h_lo), self.cell.b.min(a.h_hi));
        let (v, hh, m) = corner_min(self.cell.alpha, h, (a.m_lo, a.m_hi), a.l_hi)?;
        Some((v, hh, m, a.l_hi))
    }

    pub(crate) fn coords(&self, u: [f64; 3]) -> Option<(f64, f64, f64)> {
        let alpha = self.cell.alpha;
        let r_m = lerp(self.cell.s, self.cell.l, u[0]);
        let (lo, hi) = mhr_price_range(alpha, r_m)?;
        let p = lerp(lo, hi, u[1]);
        let v0 = lerp(0.0, mhr_v0_max(alpha, r_m, p), u[2]);
        Some((r_m, p, v0))
    }
}

impl CellProgram for MhrProgram {
    fn alpha(&self) -> f64 {
        self.cell.alpha
    }

    fn with_alpha(&self, alpha: f64) -> Self {
        Self {
            cell: MhrCell { alpha, ..self.cell },
        }
    }

    fn value_at(&self, u: [f64; 3]) -> Option<f64> {
        let (r_m, p, v0) = self.coords(u)?;
        self.point(r_m, p, v0).map(|x| x.0)
    }

    fn describe(&self, u: [f64; 3]) -> Vec<(String, f64)> {
        let nan = f64::NAN;
        let (r_m, p, v0) = self.coords(u).unwrap_or((nan, nan, nan));
        let (value, h, m, l) = self.point(r_m, p, v0).unwrap_or((nan, nan, nan, nan));
        [
            ("r_m", r_m),
            ("p", p),
            ("v0", v0),
            ("H", h),
            ("M", m),
            ("L", l),
            ("value", value),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    fn grid_min(&self, n: usize, axis: &[usize], stop_below: f64) -> Option<(f64, [usize; 3])> {
        let alpha = self.cell.alpha;
        parallel_min(axis, stop_below, |i, abort: &AtomicBool| {
            let r_m = lerp(self.cell.s, self.cell.l, grid_coord(i, n));
            if r_m <= 1.0 + EPS {
                return None;
            }
            let (lo, hi) = mhr_price_range(alpha, r_m)?;
            let mut best: Option<(f64, [usize; 3])> = None;
            for &j in axis {
                if abort.load(Ordering::Relaxed) {
                    return best;
                }
                let p = lerp(lo, hi, grid_coord(j, n));
                if p <= alpha * (1.0 + EPS) {
                    continue;
                }
                let ub = mhr_v0_max(alpha, r_m, p);
                for &k in axis {
                    let v0 = lerp(0.0, ub, grid_coord(k, n));
                    if let Some((v, _, _, _)) = self.point(r_m, p, v0) {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bound_programs::{eval_mhr_bound, eval_mhr_cell, GridSpec, MhrPartition};
    use crate::quadrature::adaptive_simpson;
    use proptest::prelude::*;

    /// `E[v·1{a ≤ v < b}]` under cumulative hazard `phi`.
    fn band_mean<F: Fn(f64) -> f64>(phi: F, a: f64, b: f64) -> f64 {
        let s = |v: f64| (-phi(v)).exp();
        a * s(a) - b * s(b) + adaptive_simpson(s, a, b, 1e-13, 1_000_000)
    }

    fn in_box(alpha: f64, r_m: f64, pf: f64, vf: f64) -> Option<(f64, f64)> {
        let (lo, hi) = mhr_price_range(alpha, r_m)?;
        let p = lo + (hi - lo) * pf;
        (p > alpha * (1.0 + 1e-6)).then(|| (p, vf * mhr_v0_max(alpha, r_m, p)))
    }

    fn check_against_sandwich(alpha: f64, r_m: f64, p: f64, v0: f64) {
        let a = mhr_aux(alpha, r_m, p, v0).unwrap();
        let l = (p / alpha).ln();
        let lr = r_m.ln();
        let line = |v: f64| (l * (v - v0) / (p - v0)).max(0.0);
        let tangent = |v: f64| lr - 1.0 + v / r_m;
        let chord = |v: f64| l + (lr - l) * (v - p) / (r_m - p);
        let tol = 1e-9;
        assert!((a.l_hi - band_mean(line, 0.0, p)).abs() < tol, "{a:?}");
        assert!(
            (a.l_lo - band_mean(|v| v / p * l, 0.0, p)).abs() < tol,
            "{a:?}"
        );
        let lower = |v: f64| line(v).max(tangent(v));
        let m_hi = band_mean(lower, p, a.v1) + band_mean(lower, a.v1, r_m);
        assert!((a.m_hi - m_hi).abs() < tol, "{} {}", a.m_hi, m_hi);
        assert!((a.m_lo - band_mean(chord, p, r_m)).abs() < tol, "{a:?}");
        let tail = band_mean(tangent, r_m, 200.0 * r_m);
        assert!((a.h_hi - tail).abs() < 1e-9);
    }

    #[test]
    fn aux_matches_sandwich_quadrature() {
        for &(alpha, r_m, pf, vf) in &[
            (0.8, 2.0, 0.5, 0.5),
            (0.9, 2.5, 0.2, 0.0),
            (0.7, 1.5, 0.9, 0.99),
            (0.6, 2.7, 0.5, 0.3),
        ] {
            let (p, v0) = in_box(alpha, r_m, pf, vf).unwrap();
            check_against_sandwich(alpha, r_m, p, v0);
        }
    }

    #[test]
    fn crossing_solves_line_equals_tangent() {
        let (alpha, r_m, p, v0) = (0.6, 1.6, 0.8, 0.4);
        let v1 = crossing(alpha, r_m, p, v0);
        let l = (p / alpha).ln();
        let line = l * (v1 - v0) / (p - v0);
        let tangent = r_m.ln() - 1.0 + v1 / r_m;
        assert!((line - tangent).abs() < 1e-12);
        // This point is outside the constraint box: the crossing lies below p.
        assert!(v1 < p);
        assert!(mhr_price_range(alpha, r_m).unwrap().1 < p);
    }

    #[test]
    fn h_bounds_are_constant() {
        let a = mhr_aux(0.8, 2.0, 1.0, 0.3).unwrap();
        assert_eq!((a.h_lo, a.h_hi), (1.0, 2.0));
    }

    #[test]
    fn price_box_edges_meet_the_hazard_bounds() {
        for &(alpha, r_m) in &[(0.8f64, 2.0f64), (0.9, 2.7), (0.95, 1.3), (0.6, 2.5)] {
            let lr = r_m.ln();
            let w = -r_m * lambert_w0(-alpha / std::f64::consts::E).unwrap();
            // Tangent at the reserve meets ln(p/α) at the lower edge.
            assert!((lr + (w - r_m) / r_m - (w / alpha).ln()).abs() <= 1e-9);
            // The chord from the origin meets it at the upper edge.
            let (_, hi) = mhr_price_range(alpha, r_m).unwrap();
            assert!((lr * hi / r_m - (hi / alpha).ln()).abs() <= 1e-9);
        }
    }

    #[test]
    fn v0_at_upper_bound_closes_the_middle_sandwich() {
        let (alpha, r_m) = (0.85, 2.2);
        let (p, v0) = in_box(alpha, r_m, 0.4, 1.0).unwrap();
        let a = mhr_aux(alpha, r_m, p, v0).unwrap();
        // The line through the intercept then passes through (r_m, ln r_m).
        assert!((a.v1 - r_m).abs() < 1e-9, "{a:?}");
        check_against_sandwich(alpha, r_m, p, v0);
    }

    #[test]
    fn alternative_upper_middle_bound_differs() {
        let (p, v0) = in_box(0.8, 2.0, 0.5, 0.5).unwrap();
        let derived = mhr_aux(0.8, 2.0, p, v0).unwrap().m_hi;
        let alt = mhr_m_hi_alt(0.8, 2.0, p, v0).unwrap();
        assert!(alt > derived + 1e-3, "{alt} {derived}");
    }

    #[test]
    fn singular_inputs() {
        assert!(matches!(
            mhr_aux(0.8, 2.0, 0.8, 0.0),
            Err(Error::SingularInput(_))
        ));
        assert!(matches!(
            mhr_aux(0.8, 1.0, 1.0, 0.0),
            Err(Error::SingularInput(_))
        ));
        assert!(matches!(
            mhr_aux(0.8, 2.0, 1.0, 1.0),
            Err(Error::SingularInput(_))
        ));
    }

    #[test]
    fn endpoint_minimum_matches_literal_scan() {
        let cell = MhrCell {
            s: 1.5,
            l: 2.0,
            a: 1.0,
            b: 1.25,
            alpha: 0.85,
        };
        let fast = eval_mhr_cell(cell, GridSpec::new(16).unwrap());
        let slow = crate::bound_programs::scan::mhr_cell_scan(cell, 16);
        assert!((fast - slow).abs() <= 1e-12, "{fast} {slow}");
    }

    #[test]
    fn adaptive_lattice_beats_one_cell() {
        let grid = GridSpec::new(32).unwrap();
        let lattice = eval_mhr_bound(
            &MhrPartition::Adaptive {
                r_cells: 8,
                h_cells: 4,
            },
            grid,
        )
        .unwrap()
        .bound;
        assert!(lattice >= 0.90, "{lattice}");
        let single = eval_mhr_bound(
            &MhrPartition::Adaptive {
                r_cells: 1,
                h_cells: 1,
            },
            grid,
        )
        .unwrap()
        .bound;
        assert!(single < lattice, "{single} {lattice}");
    }

    proptest! {
        #[test]
        fn bounds_are_ordered(alpha in 0.5f64..0.95, r_m in 1.05f64..2.71, pf in 0.0f64..1.0, vf in 0.0f64..1.0) {
            let pv = in_box(alpha, r_m, pf, vf);
            prop_assume!(pv.is_some());
            let (p, v0) = pv.unwrap();
            prop_assume!(p - v0 > 1e-6);
            let a = mhr_aux(alpha, r_m, p, v0).unwrap();
            prop_assert!(a.m_lo <= a.m_hi + 1e-9, "{:?}", a);
            prop_assert!(a.l_lo <= a.l_hi + 1e-9, "{:?}", a);
            prop_assert!(a.v1 >= p && a.v1 <= r_m);
        }

        #[test]
        fn enlarging_the_box_never_raises_the_minimum(s in 1.1f64..2.0, w in 0.0f64..0.35) {
            let cell = |l: f64| MhrCell { s, l, a: 1.0, b: 2.0, alpha: 0.85 };
            let inner = eval_mhr_cell(cell(s + w), GridSpec::new(16).unwrap());
            let outer = eval_mhr_cell(cell(s + 2.0 * w), GridSpec::new(31).unwrap());
            prop_assert!(outer <= inner + 1e-12, "{} {}", outer, inner);
        }
    }
}
