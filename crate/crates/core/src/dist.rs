//! One-dimensional valuation distributions.
//!
//! Every distribution has a bounded support `[lo, hi]`, a continuous part
//! and optionally an atom at `hi` (buyer side) or at `lo` (seller side).
//! The CDF follows the left-continuous convention `F(v) = Pr[X < v]`, so
//! `1 - F(p)` is the probability that a buyer accepts a price `p`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::golden_max;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    PointMass {
        v0: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Knots `(v, F)` of the continuous part; `knots[0].1` is an atom at the
    /// bottom, `1 - knots.last().1` must equal `top_atom`.
    PiecewiseLinearCdf {
        knots: Vec<(f64, f64)>,
        #[serde(default)]
        top_atom: f64,
    },
    ExampleIrregular {
        #[serde(rename = "K")]
        k: f64,
    },
    ExampleRegular {
        #[serde(rename = "K")]
        k: f64,
    },
    ExampleMhr,
    ExampleEquitable {
        #[serde(rename = "K")]
        k: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Family", into = "Family")]
pub struct ValuationDist {
    family: Family,
    lo: f64,
    hi: f64,
    top_atom: f64,
    bottom_atom: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfEval {
    pub cdf: f64,
    pub pdf: Option<f64>,
    pub atom_here: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonopolyPoint {
    pub q_m: f64,
    pub r_m: f64,
    pub revenue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    pub regular: bool,
    pub mhr: bool,
}

/// Pointwise characteristics at a value `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValuePoint {
    pub v: f64,
    pub virtual_value: f64,
    pub hazard: f64,
    pub cum_hazard: f64,
}

/// Pointwise characteristics at a quantile `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantilePoint {
    pub q: f64,
    pub value: f64,
    pub revenue: f64,
}

const MASS_TOL: f64 = 1e-9;

impl TryFrom<Family> for ValuationDist {
    type Error = Error;
    fn try_from(family: Family) -> Result<Self> {
        ValuationDist::new(family)
    }
}

impl From<ValuationDist> for Family {
    fn from(d: ValuationDist) -> Family {
        d.family
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidDist(msg.into())
}

/// Shape parameters shared by the two heavy-tailed example families.
fn sqrt_ln(k: f64) -> f64 {
    k.ln().sqrt()
}

impl ValuationDist {
    pub fn new(family: Family) -> Result<Self> {
        let finite = |x: f64| x.is_finite();
        let (lo, hi, top_atom, bottom_atom) = match &family {
            Family::PointMass { v0 } => {
                if !finite(*v0) || *v0 < 0.0 {
                    return Err(bad("point mass must be finite and nonnegative"));
                }
                (*v0, *v0, 1.0, 0.0)
            }
            Family::Uniform { lo, hi } => {
                if !finite(*lo) || !finite(*hi) || *lo < 0.0 || *hi <= *lo {
                    return Err(bad("uniform needs 0 <= lo < hi < inf"));
                }
                (*lo, *hi, 0.0, 0.0)
            }
            Family::PiecewiseLinearCdf { knots, top_atom } => {
                if knots.len() < 2 {
                    return Err(bad("piecewise-linear CDF needs at least two knots"));
                }
                for w in knots.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return Err(bad("knot abscissae must be strictly increasing"));
                    }
                    if w[1].1 < w[0].1 {
                        return Err(bad("knot ordinates must be nondecreasing"));
                    }
                }
                if knots
                    .iter()
                    .any(|&(v, f)| !finite(v) || !finite(f) || !(0.0..=1.0).contains(&f))
                {
                    return Err(bad("knot ordinates must lie in [0, 1]"));
                }
                if knots[0].0 < 0.0 {
                    return Err(bad("support must be nonnegative"));
                }
                let last = knots[knots.len() - 1].1;
                if !(0.0..=1.0).contains(top_atom) || (last + top_atom - 1.0).abs() > MASS_TOL {
                    return Err(bad("last knot ordinate plus top atom must equal 1"));
                }
                (knots[0].0, knots[knots.len() - 1].0, *top_atom, knots[0].1)
            }
            Family::ExampleIrregular { k } | Family::ExampleEquitable { k } => {
                if !finite(*k) || *k < std::f64::consts::E {
                    return Err(bad("example needs K >= e"));
                }
                let s = sqrt_ln(*k);
                let atom = match family {
                    Family::ExampleIrregular { .. } => s / k,
                    _ => 1.0 / (k * s),
                };
                (1.0, *k, atom, 0.0)
            }
            Family::ExampleRegular { k } => {
                if !finite(*k) || *k <= 1.0 {
                    return Err(bad("example needs K > 1"));
                }
                (0.0, *k, 1.0 / k, 0.0)
            }
            Family::ExampleMhr => {
                let e = std::f64::consts::E;
                (0.0, e, 1.0 / e, 0.0)
            }
        };
        Ok(Self {
            family,
            lo,
            hi,
            top_atom,
            bottom_atom,
        })
    }

    pub fn point_mass(v0: f64) -> Self {
        Self::new(Family::PointMass { v0 }).expect("valid point mass")
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self::new(Family::Uniform { lo, hi }).expect("valid uniform")
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn support_lo(&self) -> f64 {
        self.lo
    }

    pub fn support_hi(&self) -> f64 {
        self.hi
    }

    pub fn top_atom_mass(&self) -> f64 {
        self.top_atom
    }

    pub fn bottom_atom_mass(&self) -> f64 {
        if self.is_point_mass() {
            1.0
        } else {
            self.bottom_atom
        }
    }

    pub fn is_point_mass(&self) -> bool {
        matches!(self.family, Family::PointMass { .. })
    }

    /// Continuous-part CDF on `[lo, hi]`, including the bottom atom.
    fn cont_cdf(&self, v: f64) -> f64 {
        match &self.family {
            Family::PointMass { .. } => 0.0,
            Family::Uniform { lo, hi } => (v - lo) / (hi - lo),
            Family::PiecewiseLinearCdf { knots, .. } => {
                let i = knots.partition_point(|&(x, _)| x <= v);
                if i == 0 {
                    knots[0].1
                } else if i == knots.len() {
                    knots[i - 1].1
                } else {
                    let (x0, f0) = knots[i - 1];
                    let (x1, f1) = knots[i];
                    f0 + (f1 - f0) * (v - x0) / (x1 - x0)
                }
            }
            Family::ExampleRegular { k } => (k - 1.0) * v / ((k - 1.0) * v + k),
            Family::ExampleMhr => 1.0 - (-v / std::f64::consts::E).exp(),
            Family::ExampleIrregular { k } => {
                let s = sqrt_ln(*k);
                let dagger = k / (s + 1.0);
                if v <= dagger {
                    (v - 1.0) / v
                } else {
                    1.0 - k.ln() / (v + (s - 1.0) * k)
                }
            }
            Family::ExampleEquitable { k } => {
                let a = k * sqrt_ln(*k) - 1.0;
                1.0 - (k - 1.0) / (a * (v - 1.0) + k - 1.0)
            }
        }
    }

    /// Survival of the continuous part, `1 - C(v)`, evaluated without cancellation.
    fn cont_surv(&self, v: f64) -> f64 {
        match &self.family {
            Family::ExampleRegular { k } => k / ((k - 1.0) * v + k),
            Family::ExampleMhr => (-v / std::f64::consts::E).exp(),
            Family::ExampleIrregular { k } => {
                let s = sqrt_ln(*k);
                if v <= k / (s + 1.0) {
                    1.0 / v
                } else {
                    k.ln() / (v + (s - 1.0) * k)
                }
            }
            Family::ExampleEquitable { k } => {
                let a = k * sqrt_ln(*k) - 1.0;
                (k - 1.0) / (a * (v - 1.0) + k - 1.0)
            }
            _ => 1.0 - self.cont_cdf(v),
        }
    }

    /// `F(v) = Pr[X < v]`.
    pub fn cdf(&self, v: f64) -> f64 {
        1.0 - self.survival(v)
    }

    /// `Pr[X >= v]`.
    pub fn survival(&self, v: f64) -> f64 {
        if v <= self.lo {
            1.0
        } else if v > self.hi {
            0.0
        } else {
            self.cont_surv(v)
        }
    }

    /// `Pr[X <= v]`.
    pub fn at_most(&self, v: f64) -> f64 {
        if v < self.lo {
            0.0
        } else if v >= self.hi {
            1.0
        } else {
            self.cont_cdf(v)
        }
    }

    /// Density of the continuous part, `None` outside the open support.
    pub fn pdf(&self, v: f64) -> Option<f64> {
        if !(v > self.lo && v < self.hi) {
            return None;
        }
        let d = match &self.family {
            Family::PointMass { .. } => return None,
            Family::Uniform { lo, hi } => 1.0 / (hi - lo),
            Family::PiecewiseLinearCdf { knots, .. } => {
                let i = knots
                    .partition_point(|&(x, _)| x <= v)
                    .clamp(1, knots.len() - 1);
                (knots[i].1 - knots[i - 1].1) / (knots[i].0 - knots[i - 1].0)
            }
            Family::ExampleRegular { k } => {
                let d = (k - 1.0) * v + k;
                (k - 1.0) * k / (d * d)
            }
            Family::ExampleMhr => (-v / std::f64::consts::E).exp() / std::f64::consts::E,
            Family::ExampleIrregular { k } => {
                let s = sqrt_ln(*k);
                if v <= k / (s + 1.0) {
                    1.0 / (v * v)
                } else {
                    let d = v + (s - 1.0) * k;
                    k.ln() / (d * d)
                }
            }
            Family::ExampleEquitable { k } => {
                let a = k * sqrt_ln(*k) - 1.0;
                let d = a * (v - 1.0) + k - 1.0;
                (k - 1.0) * a / (d * d)
            }
        };
        Some(d)
    }

    pub fn eval(&self, v: f64) -> CdfEval {
        let atom_here = if v == self.hi {
            self.top_atom
        } else if v == self.lo && !self.is_point_mass() {
            self.bottom_atom
        } else {
            0.0
        };
        CdfEval {
            cdf: self.cdf(v),
            pdf: self.pdf(v),
            atom_here,
        }
    }

    /// Interior points where the density formula changes.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.family {
            Family::PiecewiseLinearCdf { knots, .. } => {
                knots[1..knots.len() - 1].iter().map(|k| k.0).collect()
            }
            Family::ExampleIrregular { k } => vec![k / (sqrt_ln(*k) + 1.0)],
            _ => vec![],
        }
    }

    /// `v(q) = sup { v : F(v) <= 1 - q }`, capped at the top of the support.
    pub fn quantile(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        if self.is_point_mass() || q <= self.top_atom {
            return self.hi;
        }
        let target = 1.0 - q;
        match &self.family {
            Family::Uniform { lo, hi } => lo + (hi - lo) * target,
            Family::PiecewiseLinearCdf { knots, .. } => {
                if target < knots[0].1 {
                    return self.lo;
                }
                let i = knots.partition_point(|&(_, f)| f <= target);
                if i >= knots.len() {
                    return self.hi;
                }
                let (x0, f0) = knots[i - 1];
                let (x1, f1) = knots[i];
                x0 + (x1 - x0) * (target - f0) / (f1 - f0)
            }
            Family::ExampleRegular { k } => k * (1.0 - q) / ((k - 1.0) * q),
            Family::ExampleMhr => -std::f64::consts::E * q.ln(),
            Family::ExampleIrregular { k } => {
                let s = sqrt_ln(*k);
                if q >= (s + 1.0) / k {
                    1.0 / q
                } else {
                    k.ln() / q - (s - 1.0) * k
                }
            }
            Family::ExampleEquitable { k } => {
                let a = k * sqrt_ln(*k) - 1.0;
                1.0 + (k - 1.0) * (1.0 - q) / (a * q)
            }
            Family::PointMass { .. } => unreachable!(),
        }
        .clamp(self.lo, self.hi)
    }

    pub fn revenue(&self, q: f64) -> f64 {
        if q <= 0.0 {
            0.0
        } else {
            q * self.quantile(q)
        }
    }

    /// `∫_0^t Pr[X >= x] dx` for `t >= 0`.
    fn surv_antideriv(&self, t: f64) -> f64 {
        if t <= self.lo {
            return t;
        }
        let t = t.min(self.hi);
        let lo = self.lo;
        let inner = match &self.family {
            Family::PointMass { .. } => 0.0,
            Family::Uniform { lo, hi } => (t - lo) - (t - lo) * (t - lo) / (2.0 * (hi - lo)),
            Family::PiecewiseLinearCdf { knots, .. } => {
                let mut acc = 0.0;
                for w in knots.windows(2) {
                    let (x0, f0) = w[0];
                    let (x1, f1) = w[1];
                    if t <= x0 {
                        break;
                    }
                    let x = t.min(x1);
                    let fx = f0 + (f1 - f0) * (x - x0) / (x1 - x0);
                    acc += (x - x0) * (1.0 - 0.5 * (f0 + fx));
                }
                acc
            }
            Family::ExampleRegular { k } => k / (k - 1.0) * ((k - 1.0) * t / k).ln_1p(),
            Family::ExampleMhr => {
                let e = std::f64::consts::E;
                -e * (-t / e).exp_m1()
            }
            Family::ExampleIrregular { k } => {
                let s = sqrt_ln(*k);
                let dagger = k / (s + 1.0);
                if t <= dagger {
                    t.ln()
                } else {
                    let c = (s - 1.0) * k;
                    dagger.ln() + k.ln() * ((t - dagger) / (dagger + c)).ln_1p()
                }
            }
            Family::ExampleEquitable { k } => {
                let a = k * sqrt_ln(*k) - 1.0;
                (k - 1.0) / a * (a * (t - 1.0) / (k - 1.0)).ln_1p()
            }
        };
        lo + inner
    }

    /// `∫_a^b Pr[X >= t] dt` for `0 <= a <= b`.
    pub fn survival_integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        self.surv_antideriv(b) - self.surv_antideriv(a)
    }

    /// `∫_a^b Pr[X <= t] dt`.
    pub fn cdf_integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        (b - a) - self.survival_integral(a, b)
    }

    /// `E[X · 1{a <= X < b}]`; the top atom counts iff `hi ∈ [a, b)`.
    pub fn truncated_mean(&self, a: f64, b: f64) -> f64 {
        let a = a.max(0.0);
        if b <= a {
            return 0.0;
        }
        let upper = if b.is_finite() {
            b * self.survival(b)
        } else {
            0.0
        };
        a * self.survival(a) - upper + self.survival_integral(a, b.min(self.hi.max(a)))
    }

    pub fn mean(&self) -> f64 {
        self.truncated_mean(0.0, f64::INFINITY)
    }

    /// `E[(X - p)^+]`.
    pub fn residual_surplus(&self, p: f64) -> f64 {
        let p = p.max(0.0);
        if p >= self.hi {
            return 0.0;
        }
        self.survival_integral(p, self.hi)
    }

    /// Virtual value `v - (1 - F(v)) / F'(v)`.
    pub fn virtual_value(&self, v: f64) -> Result<f64> {
        let f = self
            .pdf(v)
            .filter(|&d| d > 0.0)
            .ok_or(Error::SingularPoint(v))?;
        Ok(v - self.survival(v) / f)
    }

    /// Hazard rate `F'(v) / (1 - F(v))`.
    pub fn hazard(&self, v: f64) -> Result<f64> {
        let f = self.pdf(v).ok_or(Error::SingularPoint(v))?;
        Ok(f / self.survival(v))
    }

    /// Cumulative hazard `-ln(1 - F(v))`.
    pub fn cum_hazard(&self, v: f64) -> f64 {
        -self.survival(v).ln()
    }

    pub fn characteristics(
        &self,
        at_q: &[f64],
        at_v: &[f64],
    ) -> Result<(Vec<QuantilePoint>, Vec<ValuePoint>)> {
        let qs = at_q
            .iter()
            .map(|&q| QuantilePoint {
                q,
                value: self.quantile(q),
                revenue: self.revenue(q),
            })
            .collect();
        let vs = at_v
            .iter()
            .map(|&v| {
                Ok(ValuePoint {
                    v,
                    virtual_value: self.virtual_value(v)?,
                    hazard: self.hazard(v)?,
                    cum_hazard: self.cum_hazard(v),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((qs, vs))
    }

    /// Candidate quantiles for revenue maximization: a uniform grid, a
    /// log-spaced grid toward zero, the atom and every breakpoint.
    fn quantile_seeds(&self, n: usize) -> Vec<f64> {
        let mut qs: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
        let floor = if self.top_atom > 0.0 {
            self.top_atom
        } else {
            1e-12
        };
        let m = n / 4;
        qs.extend((0..=m).map(|i| floor.powf(1.0 - i as f64 / m as f64)));
        if self.top_atom > 0.0 {
            qs.push(self.top_atom);
        }
        qs.extend(self.breakpoints().iter().map(|&b| self.survival(b)));
        qs.retain(|q| *q > 0.0 && *q <= 1.0);
        qs.sort_by(f64::total_cmp);
        qs.dedup();
        qs
    }

    /// Revenue-maximizing quantile; ties go to the largest quantile.
    pub fn monopoly(&self) -> MonopolyPoint {
        if self.is_point_mass() {
            return MonopolyPoint {
                q_m: 1.0,
                r_m: self.hi,
                revenue: self.hi,
            };
        }
        let qs = self.quantile_seeds(10_000);
        let rs: Vec<f64> = qs.iter().map(|&q| self.revenue(q)).collect();
        let best = rs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let tie = 1e-12 * best.abs().max(1.0);
        let idx = (0..qs.len()).rev().find(|&i| rs[i] >= best - tie).unwrap();
        let (mut q_m, mut revenue) = (qs[idx], rs[idx]);
        let a = if idx > 0 { qs[idx - 1] } else { qs[idx] };
        let b = if idx + 1 < qs.len() {
            qs[idx + 1]
        } else {
            qs[idx]
        };
        if b > a {
            let (q, r) = golden_max(|q| self.revenue(q), a, b, (1e-10f64).min(1e-6 * (b - a)));
            if r > revenue + tie {
                q_m = q;
                revenue = r;
            }
        }
        MonopolyPoint {
            q_m,
            r_m: self.quantile(q_m),
            revenue,
        }
    }

    /// Grid certificate of regularity (concave revenue curve) and MHR
    /// (convex cumulative hazard), with curves normalized to unit monopoly revenue.
    pub fn classify(&self, grid_n: usize) -> Classification {
        let grid_n = grid_n.max(100);
        if self.is_point_mass() {
            return Classification {
                regular: true,
                mhr: true,
            };
        }
        let scale = self.monopoly().revenue.max(f64::MIN_POSITIVE);
        let mut qs = self.quantile_seeds(grid_n);
        qs.insert(0, 0.0);
        let rs: Vec<f64> = qs.iter().map(|&q| self.revenue(q) / scale).collect();
        let regular = interp_defect(&qs, &rs, |mid, chord| mid - chord >= -1e-7);

        let top = if self.top_atom > 0.0 {
            self.hi
        } else {
            self.hi - (self.hi - self.lo) / grid_n as f64
        };
        let mut vs: Vec<f64> = (0..=grid_n)
            .map(|i| self.lo + (top - self.lo) * i as f64 / grid_n as f64)
            .collect();
        vs.extend(self.breakpoints());
        vs.sort_by(f64::total_cmp);
        vs.dedup();
        let unit = self.monopoly().r_m.max(f64::MIN_POSITIVE);
        let xs: Vec<f64> = vs.iter().map(|v| v / unit).collect();
        let phis: Vec<f64> = vs.iter().map(|&v| self.cum_hazard(v)).collect();
        let mhr = phis.iter().all(|p| p.is_finite())
            && interp_defect(&xs, &phis, |mid, chord| mid - chord <= 1e-7);
        Classification { regular, mhr }
    }
}

/// Checks `ok(y_k, chord_k)` at every interior point, where `chord_k` is the
/// linear interpolation of the neighbours.
fn interp_defect(xs: &[f64], ys: &[f64], ok: impl Fn(f64, f64) -> bool) -> bool {
    (1..xs.len().saturating_sub(1)).all(|i| {
        let (x0, x1, x2) = (xs[i - 1], xs[i], xs[i + 1]);
        let t = (x1 - x0) / (x2 - x0);
        ok(ys[i], ys[i - 1] + t * (ys[i + 1] - ys[i - 1]))
    })
}
