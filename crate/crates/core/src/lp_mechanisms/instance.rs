use serde::{Deserialize, Serialize};

use crate::dist::ValuationDist;
use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-12;

/// Finite-support distribution with strictly increasing values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDiscrete", into = "RawDiscrete")]
pub struct DiscreteDist {
    values: Vec<f64>,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawDiscrete {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl TryFrom<RawDiscrete> for DiscreteDist {
    type Error = Error;
    fn try_from(r: RawDiscrete) -> Result<Self> {
        DiscreteDist::new(r.values, r.probs)
    }
}

impl From<DiscreteDist> for RawDiscrete {
    fn from(d: DiscreteDist) -> Self {
        RawDiscrete {
            values: d.values,
            probs: d.probs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteInstance {
    pub buyer: DiscreteDist,
    pub seller: DiscreteDist,
}

impl DiscreteDist {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidInstance(m.into()));
        if values.is_empty() || values.len() != probs.len() {
            return bad("values and probs must be nonempty and of equal length");
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("values must be finite and nonnegative");
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return bad("values must be strictly increasing");
        }
        if probs.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return bad("probabilities must be positive");
        }
        if (probs.iter().sum::<f64>() - 1.0).abs() > PROB_TOL {
            return bad("probabilities must sum to 1");
        }
        Ok(Self { values, probs })
    }

    pub fn point(v: f64) -> Self {
        Self {
            values: vec![v],
            probs: vec![1.0],
        }
    }

    /// Equally likely values; they are sorted and must be distinct.
    pub fn uniform_on(values: &[f64]) -> Result<Self> {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        Self::new(v, vec![1.0 / n; values.len()])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn mean(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.probs)
            .map(|(v, p)| v * p)
            .sum()
    }

    /// `Pr[X >= t]`.
    pub fn survival(&self, t: f64) -> f64 {
        self.iter().filter(|(v, _)| *v >= t).map(|(_, p)| p).sum()
    }

    /// `Pr[X <= t]`.
    pub fn at_most(&self, t: f64) -> f64 {
        self.iter().filter(|(v, _)| *v <= t).map(|(_, p)| p).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().copied().zip(self.probs.iter().copied())
    }

    /// Maps a continuous distribution to `n` equiprobable quantile points
    /// (bin midpoints) plus each atom as its own point.
    pub fn discretize(d: &ValuationDist, n: usize) -> Result<Self> {
        if d.is_point_mass() {
            return Ok(Self::point(d.support_lo()));
        }
        let n = n.max(1);
        let top = d.top_atom_mass();
        let bottom = d.bottom_atom_mass();
        let width = (1.0 - top - bottom) / n as f64;
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(n + 2);
        if bottom > 0.0 {
            pts.push((d.support_lo(), bottom));
        }
        for k in (0..n).rev() {
            let q = top + width * (k as f64 + 0.5);
            pts.push((d.quantile(q), width));
        }
        if top > 0.0 {
            pts.push((d.support_hi(), top));
        }
        let mut values: Vec<f64> = Vec::with_capacity(pts.len());
        let mut probs: Vec<f64> = Vec::with_capacity(pts.len());
        for (v, p) in pts {
            match values.last() {
                Some(&last) if v <= last => *probs.last_mut().unwrap() += p,
                _ => {
                    values.push(v);
                    probs.push(p);
                }
            }
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Self::new(values, probs)
    }
}

impl DiscreteInstance {
    pub fn new(buyer: DiscreteDist, seller: DiscreteDist) -> Self {
        Self { buyer, seller }
    }

    pub fn zero_seller(buyer: DiscreteDist) -> Self {
        Self {
            buyer,
            seller: DiscreteDist::point(0.0),
        }
    }

    pub fn is_zero_seller(&self) -> bool {
        self.seller.len() == 1 && self.seller.values[0] == 0.0
    }

    /// Largest value on either side; payments are capped here.
    pub fn value_cap(&self) -> f64 {
        self.buyer.max_value().max(self.seller.max_value())
    }
}
