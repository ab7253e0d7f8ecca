//! Named example instances with their analytic quantities, seeded random
//! instance generators and the curve tables used for plotting.

use std::f64::consts::E;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bound_programs::lambert_w0;
use crate::dist::{Family, ValuationDist};
use crate::error::{Error, Result};
use crate::fairness::ks_report;
use crate::lp_mechanisms::{DiscreteDist, DiscreteInstance};
use crate::mechanisms::{Instance, TradeModel};
use crate::quadrature::{bisect, golden_max};

pub const DEFAULT_K_IRREGULAR: f64 = 8_886_110.520_507_872; // e^16
pub const DEFAULT_K_REGULAR: f64 = 25.0;
pub const DEFAULT_K_EQUITABLE: f64 = 1.907_346_572_495_099_7e21; // e^49

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "example", rename_all = "snake_case")]
pub enum ExampleTag {
    Irregular {
        #[serde(rename = "K")]
        k: f64,
    },
    Regular {
        #[serde(rename = "K")]
        k: f64,
    },
    Mhr,
    Equitable {
        #[serde(rename = "K")]
        k: f64,
    },
}

impl fmt::Display for ExampleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExampleTag::Irregular { k } => write!(f, "irregular(K={k})"),
            ExampleTag::Regular { k } => write!(f, "regular(K={k})"),
            ExampleTag::Mhr => write!(f, "mhr"),
            ExampleTag::Equitable { k } => write!(f, "equitable(K={k})"),
        }
    }
}

/// Analytic quantities of a named example. Fields that do not apply are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedForms {
    pub seller_ideal: f64,
    pub buyer_ideal: f64,
    pub opt_sb: f64,
    /// Revenue on the flat middle part of the revenue curve.
    pub plateau_revenue: Option<f64>,
    /// Trade quantile of the KS-fair fixed price.
    pub fair_quantile: Option<f64>,
    pub fair_price: Option<f64>,
    /// Common KS ratio at the fair price.
    pub fair_ratio: Option<f64>,
    /// Best GFT ratio of any KS-fair mechanism.
    pub upper_bound: Option<f64>,
    pub upper_bound_price: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedInstance {
    pub tag: ExampleTag,
    pub instance: Instance,
    pub closed_forms: ClosedForms,
}

fn empty(seller_ideal: f64, buyer_ideal: f64) -> ClosedForms {
    ClosedForms {
        seller_ideal,
        buyer_ideal,
        opt_sb: buyer_ideal,
        plateau_revenue: None,
        fair_quantile: None,
        fair_price: None,
        fair_ratio: None,
        upper_bound: None,
        upper_bound_price: None,
    }
}

fn named(tag: ExampleTag, family: Family, closed_forms: ClosedForms) -> Result<NamedInstance> {
    let buyer = ValuationDist::new(family)?;
    Ok(NamedInstance {
        tag,
        instance: Instance::zero_seller(buyer),
        closed_forms,
    })
}

/// Heavy-tailed buyer whose revenue curve has a unit plateau and a taller atom at `K`.
pub fn example_irregular(k: f64) -> Result<NamedInstance> {
    if !(k >= E) {
        return Err(Error::InvalidDist("example needs K >= e".into()));
    }
    let s = k.ln().sqrt();
    let dagger = k / (s + 1.0);
    let mean = 1.0 + dagger.ln() + k.ln() * (s * k / (dagger + (s - 1.0) * k)).ln();
    let cf = ClosedForms {
        plateau_revenue: Some(1.0),
        ..empty(s, mean)
    };
    named(
        ExampleTag::Irregular { k },
        Family::ExampleIrregular { k },
        cf,
    )
}

/// Equal-revenue buyer truncated at `K`, where every price below `K` earns the same.
pub fn example_regular(k: f64) -> Result<NamedInstance> {
    if !(k > 1.0 && k.is_finite()) {
        return Err(Error::InvalidDist("example needs K > 1".into()));
    }
    let lk = k.ln();
    let w = lambert_w0(k.powf(k / (k - 1.0)) * lk / (k - 1.0))?;
    let q = (k - 1.0) * w / (k * lk);
    let ratio = (k * lk - (k - 1.0) * w) / (k * lk) * (k / (k - 1.0) + 1.0 / lk);
    let price = k * (1.0 - q) / ((k - 1.0) * q);
    let cf = ClosedForms {
        fair_quantile: Some(q),
        fair_price: Some(price),
        fair_ratio: Some(k * (1.0 - q) / (k - 1.0)),
        upper_bound: Some(ratio),
        upper_bound_price: Some(price),
        ..empty(1.0, k * lk / (k - 1.0))
    };
    named(ExampleTag::Regular { k }, Family::ExampleRegular { k }, cf)
}

/// Exponential buyer with mean `e`, truncated at `e`.
pub fn example_mhr() -> Result<NamedInstance> {
    let tag = ExampleTag::Mhr;
    let alpha = |p: f64| p * (-p / E).exp();
    let beta = |p: f64| ((1.0 - p / E).exp() - 1.0) / (E - 1.0);
    let fair_price = bisect(|p| alpha(p) - beta(p), 0.0, E, 1e-13);
    let bound = |p: f64| (alpha(p) + alpha(p).min(beta(p)) * (E - 1.0)) / (E - 1.0);
    let (p_star, upper) = golden_max(bound, 0.0, E, 1e-12);
    let cf = ClosedForms {
        fair_quantile: Some((-fair_price / E).exp()),
        fair_price: Some(fair_price),
        fair_ratio: Some(alpha(fair_price)),
        upper_bound: Some(upper),
        upper_bound_price: Some(p_star),
        ..empty(1.0, E - 1.0)
    };
    named(tag, Family::ExampleMhr, cf)
}

/// Regular buyer whose revenue curve is a line rising to 1 at the bottom of the support.
pub fn example_equitable(k: f64) -> Result<NamedInstance> {
    if !(k >= E) {
        return Err(Error::InvalidDist("example needs K >= e".into()));
    }
    let a = k * k.ln().sqrt();
    let mean = 1.0 + (k - 1.0) / (a - 1.0) * a.ln();
    named(
        ExampleTag::Equitable { k },
        Family::ExampleEquitable { k },
        empty(1.0, mean),
    )
}

/// Parses `K` as a number, or as `e<x>` for `e^x`.
fn parse_k(s: &str) -> Result<f64> {
    let bad = || Error::Usage(format!("bad K `{s}`"));
    match s.strip_prefix('e') {
        Some(x) => x.parse::<f64>().map(f64::exp).map_err(|_| bad()),
        None => s.parse::<f64>().map_err(|_| bad()),
    }
}

impl NamedInstance {
    /// Looks up an example by name: `irregular`, `regular`, `regular25`, `mhr`,
    /// `equitable`, optionally followed by `:K` (e.g. `irregular:e25`).
    pub fn by_name(name: &str) -> Result<Self> {
        let (base, k) = match name.split_once(':') {
            Some((b, k)) => (b, Some(parse_k(k)?)),
            None => (name, None),
        };
        match base {
            "irregular" => example_irregular(k.unwrap_or(DEFAULT_K_IRREGULAR)),
            "regular" => example_regular(k.unwrap_or(DEFAULT_K_REGULAR)),
            "regular25" if k.is_none() => example_regular(25.0),
            "mhr" if k.is_none() => example_mhr(),
            "equitable" => example_equitable(k.unwrap_or(DEFAULT_K_EQUITABLE)),
            _ => Err(Error::Usage(format!("unknown example `{name}`"))),
        }
    }

    /// Seller and buyer KS ratios of the fixed price `p` from the analytic
    /// formulas, where the example has them.
    pub fn closed_form_ratios(&self, p: f64) -> Option<(f64, f64)> {
        match self.tag {
            ExampleTag::Regular { k } => {
                let q = if p <= 0.0 {
                    1.0
                } else if p >= k {
                    1.0 / k
                } else {
                    k / ((k - 1.0) * p + k)
                };
                Some((k * (1.0 - q) / (k - 1.0), q.ln() / k.ln() + 1.0))
            }
            ExampleTag::Mhr => {
                let p = p.clamp(0.0, E);
                Some((p * (-p / E).exp(), ((1.0 - p / E).exp() - 1.0) / (E - 1.0)))
            }
            _ => None,
        }
    }
}

/// `(q, R(q))` at `n` uniformly spaced quantiles in `(0, 1]`.
pub fn revenue_curve(d: &ValuationDist, n: usize) -> Vec<(f64, f64)> {
    (1..=n.max(1))
        .map(|i| i as f64 / n.max(1) as f64)
        .map(|q| (q, d.revenue(q)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceRow {
    pub price: f64,
    pub seller_ratio: f64,
    pub buyer_ratio: f64,
    pub gft_ratio: f64,
}

/// KS ratios and GFT ratio of fixed prices at `n + 1` points spanning the buyer's support.
pub fn price_curve(inst: &Instance, n: usize) -> Result<Vec<PriceRow>> {
    let bench = inst.benchmarks();
    let opt = bench.opt_sb.unwrap_or(bench.opt_fb);
    let hi = inst.buyer.support_hi();
    let n = n.max(1);
    (0..=n)
        .map(|i| {
            let price = hi * i as f64 / n as f64;
            let o = inst.fixed_price(price);
            let r = ks_report(&o, &bench, f64::INFINITY)?;
            Ok(PriceRow {
                price,
                seller_ratio: r.seller_ratio,
                buyer_ratio: r.buyer_ratio,
                gft_ratio: o.gft / opt,
            })
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random finite distribution with 1 to `max_support` points, values starting at `lo`.
pub fn random_discrete<R: Rng + ?Sized>(rng: &mut R, max_support: usize, lo: f64) -> DiscreteDist {
    let n = rng.gen_range(1..=max_support.max(1));
    let mut v = lo;
    let mut values = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 || lo == 0.0 && rng.gen_bool(0.5) {
            v += rng.gen_range(0.05..1.0);
        }
        values.push(v);
        w.push(rng.gen_range(0.05..1.0));
    }
    let total: f64 = w.iter().sum();
    let mut probs: Vec<f64> = w.iter().map(|x| x / total).collect();
    let head: f64 = probs[..n - 1].iter().sum();
    probs[n - 1] = 1.0 - head;
    DiscreteDist::new(values, probs).expect("generated distribution is valid")
}

/// Random two-sided finite instance with some gains from trade; the seller's
/// support starts at zero.
pub fn random_discrete_instance<R: Rng + ?Sized>(
    rng: &mut R,
    max_support: usize,
) -> DiscreteInstance {
    loop {
        let seller = random_discrete(rng, max_support, 0.0);
        let lo = rng.gen_range(0.05..1.0);
        let buyer = random_discrete(rng, max_support, lo);
        if buyer.max_value() > seller.values()[0] {
            return DiscreteInstance::new(buyer, seller);
        }
    }
}

pub fn random_zero_seller_instance<R: Rng + ?Sized>(
    rng: &mut R,
    max_support: usize,
) -> DiscreteInstance {
    let lo = rng.gen_range(0.05..1.0);
    DiscreteInstance::zero_seller(random_discrete(rng, max_support, lo))
}

/// Random continuous MHR distribution: uniform, or a piecewise-linear CDF
/// with nondecreasing density, which has an increasing hazard rate.
pub fn random_mhr_dist<R: Rng + ?Sized>(rng: &mut R, lo: f64) -> ValuationDist {
    let width = rng.gen_range(0.5..3.0);
    if rng.gen_bool(0.25) {
        return ValuationDist::uniform(lo, lo + width);
    }
    let pieces = rng.gen_range(2..=5);
    let mut dens: Vec<f64> = (0..pieces).map(|_| rng.gen_range(0.1..1.0)).collect();
    dens.sort_by(f64::total_cmp);
    let mut lens: Vec<f64> = (0..pieces).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total_len: f64 = lens.iter().sum();
    lens.iter_mut().for_each(|l| *l *= width / total_len);
    let mass: f64 = dens.iter().zip(&lens).map(|(d, l)| d * l).sum();
    let mut knots = vec![(lo, 0.0)];
    let (mut v, mut f) = (lo, 0.0);
    for (d, l) in dens.iter().zip(&lens) {
        v += l;
        f += d * l / mass;
        knots.push((v, f.min(1.0)));
    }
    knots.last_mut().unwrap().1 = 1.0;
    ValuationDist::new(Family::PiecewiseLinearCdf {
        knots,
        top_atom: 0.0,
    })
    .expect("generated distribution is valid")
}

/// Random continuous instance whose buyer and seller both pass the MHR certificate.
pub fn random_mhr_instance<R: Rng + ?Sized>(rng: &mut R) -> Instance {
    loop {
        let seller = random_mhr_dist(rng, 0.0);
        let lo = rng.gen_range(0.0..1.5);
        let buyer = random_mhr_dist(rng, lo);
        if seller.classify(400).mhr && buyer.classify(400).mhr {
            return Instance::new(buyer, seller).expect("atomless instance is valid");
        }
    }
}
