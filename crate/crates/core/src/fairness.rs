//! KS-fairness: measurement, the black-box mixing reduction, the KS-fair
//! biased random offer mechanism and the KS-fair fixed price.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::{Benchmarks, Instance, MechanismOutcome, TradeModel};
use crate::quadrature::bisect;

pub const DEFAULT_TOL: f64 = 1e-6;
const FAIR_PRICE_GRID: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub seller_ratio: f64,
    pub buyer_ratio: f64,
    pub gap: f64,
    pub gft_ratio: Option<f64>,
    pub fair: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Filler {
    Som,
    Bom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    /// Weight on the base mechanism.
    pub lambda: f64,
    pub direction: Filler,
    pub mixed: MechanismOutcome,
    /// Guaranteed ratio: the smaller of the base mechanism's two ratios.
    pub guarantee: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairRom {
    /// Probability of running the seller offer.
    pub lambda: f64,
    pub outcome: MechanismOutcome,
    pub report: KsReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairPrice {
    pub price: f64,
    pub outcome: MechanismOutcome,
    pub report: KsReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BargainPoint {
    pub x_buyer: f64,
    pub x_seller: f64,
}

fn check_bench(b: &Benchmarks) -> Result<()> {
    if b.seller_ideal > 0.0 && b.buyer_ideal > 0.0 {
        Ok(())
    } else {
        Err(Error::DegenerateBenchmark {
            seller: b.seller_ideal,
            buyer: b.buyer_ideal,
        })
    }
}

pub fn ks_report(outcome: &MechanismOutcome, bench: &Benchmarks, tol: f64) -> Result<KsReport> {
    check_bench(bench)?;
    let seller_ratio = outcome.seller_utility / bench.seller_ideal;
    let buyer_ratio = outcome.buyer_utility / bench.buyer_ideal;
    let gap = seller_ratio - buyer_ratio;
    Ok(KsReport {
        seller_ratio,
        buyer_ratio,
        gap,
        gft_ratio: bench.opt_sb.map(|opt| outcome.gft / opt),
        fair: gap.abs() <= tol,
    })
}

/// Weight on the base point that equalizes both ratios when mixing with a
/// filler that attains one side's ideal. `a` is the base's ratio on the
/// filler's ideal side, `b` its ratio on the other side, `s` the filler's
/// ratio on the other side.
fn mixing_weight(a: f64, b: f64, s: f64) -> Result<f64> {
    let denom = 1.0 + b - a - s;
    if (a - b).abs() <= 1e-15 || denom.abs() <= 1e-15 {
        return Ok(1.0);
    }
    let lambda = (1.0 - s) / denom;
    if !(-1e-9..=1.0 + 1e-9).contains(&lambda) {
        return Err(Error::NoCrossing(lambda));
    }
    Ok(lambda.clamp(0.0, 1.0))
}

pub fn blackbox_reduce(
    base: &MechanismOutcome,
    som: &MechanismOutcome,
    bom: &MechanismOutcome,
    bench: &Benchmarks,
) -> Result<Reduction> {
    check_bench(bench)?;
    let a = base.seller_utility / bench.seller_ideal;
    let b = base.buyer_utility / bench.buyer_ideal;
    let (lambda, direction, filler) = if b >= a {
        let s = som.buyer_utility / bench.buyer_ideal;
        (mixing_weight(a, b, s)?, Filler::Som, som)
    } else {
        let s = bom.seller_utility / bench.seller_ideal;
        (mixing_weight(b, a, s)?, Filler::Bom, bom)
    };
    Ok(Reduction {
        lambda,
        direction,
        mixed: base.mix(lambda, filler),
        guarantee: a.min(b),
    })
}

/// The λ-biased random offer mechanism that is KS-fair.
pub fn ks_fair_lambda_rom<M: TradeModel + ?Sized>(
    model: &M,
    bench: &Benchmarks,
    tol: f64,
) -> Result<FairRom> {
    let som = model.seller_offer();
    let bom = model.buyer_offer();
    let rom = som.mix(0.5, &bom);
    let red = blackbox_reduce(&rom, &som, &bom, bench)?;
    let lambda = match red.direction {
        Filler::Som => 0.5 * red.lambda + (1.0 - red.lambda),
        Filler::Bom => 0.5 * red.lambda,
    };
    let outcome = som.mix(lambda, &bom);
    Ok(FairRom {
        lambda,
        outcome,
        report: ks_report(&outcome, bench, tol)?,
    })
}

/// Smallest sign change of `gap` on a uniform grid over `(0, hi]`, refined by bisection.
fn first_crossing<F: Fn(f64) -> f64>(gap: F, hi: f64) -> Option<f64> {
    let step = hi / FAIR_PRICE_GRID as f64;
    let mut prev = 0.0;
    for i in 1..=FAIR_PRICE_GRID {
        let p = if i == FAIR_PRICE_GRID {
            hi
        } else {
            step * i as f64
        };
        let g = gap(p);
        if g >= 0.0 {
            return Some(if g == 0.0 {
                p
            } else {
                bisect(&gap, prev, p, 1e-10 * hi.max(1.0))
            });
        }
        prev = p;
    }
    None
}

fn zero_seller_bench(inst: &Instance) -> Result<Benchmarks> {
    if !inst.is_zero_seller() {
        return Err(Error::InvalidInstance(
            "fixed-price search needs a zero-value seller".into(),
        ));
    }
    let bench = inst.benchmarks();
    check_bench(&bench)?;
    Ok(bench)
}

/// KS-fair fixed price for a zero-value seller: the smallest sign change of
/// the gap on a uniform grid over `[0, r_m]`, refined by bisection.
pub fn ks_fair_fixed_price(inst: &Instance, tol: f64) -> Result<FairPrice> {
    let bench = zero_seller_bench(inst)?;
    let gap = |p: f64| {
        let o = inst.fixed_price(p);
        o.seller_utility / bench.seller_ideal - o.buyer_utility / bench.buyer_ideal
    };
    let price = first_crossing(gap, inst.buyer.monopoly().r_m).ok_or(Error::NoFairPrice)?;
    let outcome = inst.fixed_price(price);
    let report = ks_report(&outcome, &bench, tol)?;
    if !report.fair {
        return Err(Error::NoFairPrice);
    }
    Ok(FairPrice {
        price,
        outcome,
        report,
    })
}

/// Fixed price with `Π = U` for a zero-value seller: the smallest sign change
/// of `Π - U` over the buyer's support. `report.fair` refers to the KS ratios.
pub fn equitable_fixed_price(inst: &Instance, tol: f64) -> Result<FairPrice> {
    let bench = zero_seller_bench(inst)?;
    let gap = |p: f64| {
        let o = inst.fixed_price(p);
        o.seller_utility - o.buyer_utility
    };
    let price = first_crossing(gap, inst.buyer.support_hi()).ok_or(Error::NoFairPrice)?;
    let outcome = inst.fixed_price(price);
    if (outcome.seller_utility - outcome.buyer_utility).abs() > tol * outcome.gft.max(1.0) {
        return Err(Error::NoFairPrice);
    }
    Ok(FairPrice {
        price,
        outcome,
        report: ks_report(&outcome, &bench, tol)?,
    })
}

/// Mixes `x` with a filler `z` that attains the ideal on the side where `x`
/// is relatively worse, landing on the KS line.
pub fn bargain_reduce(
    x: BargainPoint,
    z: BargainPoint,
    ideal: BargainPoint,
) -> Result<(f64, BargainPoint)> {
    if !(ideal.x_buyer > 0.0 && ideal.x_seller > 0.0) {
        return Err(Error::DegenerateBenchmark {
            seller: ideal.x_seller,
            buyer: ideal.x_buyer,
        });
    }
    let rb = x.x_buyer / ideal.x_buyer;
    let rs = x.x_seller / ideal.x_seller;
    let attains = |v: f64, i: f64| (v - i).abs() <= 1e-12 * i.max(1.0);
    let lambda = if rb >= rs {
        if !attains(z.x_seller, ideal.x_seller) {
            return Err(Error::BadFiller);
        }
        mixing_weight(rs, rb, z.x_buyer / ideal.x_buyer)?
    } else {
        if !attains(z.x_buyer, ideal.x_buyer) {
            return Err(Error::BadFiller);
        }
        mixing_weight(rb, rs, z.x_seller / ideal.x_seller)?
    };
    let y = BargainPoint {
        x_buyer: lambda * x.x_buyer + (1.0 - lambda) * z.x_buyer,
        x_seller: lambda * x.x_seller + (1.0 - lambda) * z.x_seller,
    };
    Ok((lambda, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{Family, ValuationDist};
    use proptest::prelude::*;

    fn u01() -> Instance {
        Instance::zero_seller(ValuationDist::uniform(0.0, 1.0))
    }

    #[test]
    fn intro_fixed_price_report() {
        let inst = u01();
        let r = ks_report(&inst.fixed_price(0.2), &inst.benchmarks(), DEFAULT_TOL).unwrap();
        assert!((r.seller_ratio - 0.64).abs() < 1e-12 && (r.buyer_ratio - 0.64).abs() < 1e-12);
        assert!(r.gap.abs() < 1e-12 && r.fair);
        assert!((r.gft_ratio.unwrap() - 0.96).abs() < 1e-12);
    }

    #[test]
    fn som_has_unit_seller_ratio_and_rom_gap() {
        let inst = u01();
        let b = inst.benchmarks();
        assert_eq!(
            ks_report(&inst.seller_offer(), &b, 1e-6)
                .unwrap()
                .seller_ratio,
            1.0
        );
        let r = ks_report(&inst.lambda_rom(0.5), &b, 1e-6).unwrap();
        assert!((r.seller_ratio - 0.5).abs() < 1e-12 && (r.buyer_ratio - 0.625).abs() < 1e-9);
        assert!((r.gap + 0.125).abs() < 1e-9);
    }

    #[test]
    fn degenerate_benchmark_is_flagged() {
        let inst = Instance::zero_seller(ValuationDist::point_mass(0.0));
        let b = inst.benchmarks();
        assert!(matches!(
            ks_report(&inst.seller_offer(), &b, 1e-6),
            Err(Error::DegenerateBenchmark { .. })
        ));
    }

    #[test]
    fn reduction_of_rom() {
        let inst = u01();
        let b = inst.benchmarks();
        let (som, bom) = (inst.seller_offer(), inst.buyer_offer());
        let red = blackbox_reduce(&som.mix(0.5, &bom), &som, &bom, &b).unwrap();
        assert_eq!(red.direction, Filler::Som);
        assert!((red.lambda - 6.0 / 7.0).abs() < 1e-9);
        let r = ks_report(&red.mixed, &b, 1e-9).unwrap();
        assert!((r.seller_ratio - 4.0 / 7.0).abs() < 1e-9 && r.fair);
        assert!(r.seller_ratio >= red.guarantee - 1e-12);
    }

    #[test]
    fn reduction_of_fair_base_is_identity() {
        let inst = u01();
        let b = inst.benchmarks();
        let base = inst.fixed_price(0.2);
        let red = blackbox_reduce(&base, &inst.seller_offer(), &inst.buyer_offer(), &b).unwrap();
        assert_eq!(red.lambda, 1.0);
        assert_eq!(red.mixed, base);
    }

    #[test]
    fn reduction_of_bom() {
        let inst = u01();
        let b = inst.benchmarks();
        let bom = inst.buyer_offer();
        let red = blackbox_reduce(&bom, &inst.seller_offer(), &bom, &b).unwrap();
        assert_eq!(red.direction, Filler::Som);
        let r = ks_report(&red.mixed, &b, 1e-9).unwrap();
        assert!(r.fair && r.seller_ratio >= 0.0);
    }

    #[test]
    fn inconsistent_inputs_signal_no_crossing() {
        assert!(matches!(
            mixing_weight(0.2, 0.6, 1.5),
            Err(Error::NoCrossing(_))
        ));
    }

    #[test]
    fn fair_rom_uniform() {
        let inst = u01();
        let b = inst.benchmarks();
        let f = ks_fair_lambda_rom(&inst, &b, 1e-9).unwrap();
        assert!((f.lambda - 4.0 / 7.0).abs() < 1e-9);
        assert!((f.report.seller_ratio - 4.0 / 7.0).abs() < 1e-9);
        assert!((f.report.gft_ratio.unwrap() - 6.0 / 7.0).abs() < 1e-9);
    }

    #[test]
    fn fair_rom_regular_example_is_unbiased() {
        let inst =
            Instance::zero_seller(ValuationDist::new(Family::ExampleRegular { k: 25.0 }).unwrap());
        let b = inst.benchmarks();
        let f = ks_fair_lambda_rom(&inst, &b, 1e-9).unwrap();
        assert!((f.lambda - 0.5).abs() < 1e-9, "{}", f.lambda);
    }

    #[test]
    fn fair_rom_symmetric_uniforms() {
        let u = ValuationDist::uniform(0.0, 1.0);
        let inst = Instance::new(u.clone(), u).unwrap();
        let b = inst.benchmarks();
        let f = ks_fair_lambda_rom(&inst, &b, 1e-9).unwrap();
        assert!(f.report.gap.abs() <= 1e-9 && f.report.seller_ratio >= 0.5 - 1e-9);
    }

    #[test]
    fn fair_price_examples() {
        let f = ks_fair_fixed_price(&u01(), 1e-8).unwrap();
        assert!((f.price - 0.2).abs() < 1e-9);
        let mhr = Instance::zero_seller(ValuationDist::new(Family::ExampleMhr).unwrap());
        let f = ks_fair_fixed_price(&mhr, 1e-8).unwrap();
        assert!((0.7995..=0.8020).contains(&f.price), "{}", f.price);
        let reg = ValuationDist::new(Family::ExampleRegular { k: 25.0 }).unwrap();
        let f = ks_fair_fixed_price(&Instance::zero_seller(reg.clone()), 1e-8).unwrap();
        let q = reg.survival(f.price);
        assert!((q - 0.3517).abs() < 1e-3, "{q}");
    }

    #[test]
    fn equitable_price_uniform() {
        // Π = p(1-p) and U = (1-p)²/2 meet at p = 1/3.
        let f = equitable_fixed_price(&u01(), 1e-9).unwrap();
        assert!((f.price - 1.0 / 3.0).abs() < 1e-9);
        assert!((f.outcome.seller_utility - 2.0 / 9.0).abs() < 1e-9);
    }

    #[test]
    fn fair_price_needs_zero_seller() {
        let u = ValuationDist::uniform(0.0, 1.0);
        assert!(ks_fair_fixed_price(&Instance::new(u.clone(), u).unwrap(), 1e-8).is_err());
    }

    #[test]
    fn bargain_examples() {
        let ideal = BargainPoint {
            x_buyer: 0.5,
            x_seller: 0.25,
        };
        let x = BargainPoint {
            x_buyer: 0.3125,
            x_seller: 0.125,
        };
        let z = BargainPoint {
            x_buyer: 0.125,
            x_seller: 0.25,
        };
        let (l, y) = bargain_reduce(x, z, ideal).unwrap();
        assert!((l - 6.0 / 7.0).abs() < 1e-12);
        assert!(
            (y.x_buyer / 0.5 - 4.0 / 7.0).abs() < 1e-12
                && (y.x_seller / 0.25 - 4.0 / 7.0).abs() < 1e-12
        );
        let on_line = BargainPoint {
            x_buyer: 0.25,
            x_seller: 0.125,
        };
        let (l, y) = bargain_reduce(on_line, z, ideal).unwrap();
        assert_eq!((l, y), (1.0, on_line));
        let wrong = BargainPoint {
            x_buyer: 0.5,
            x_seller: 0.0,
        };
        assert_eq!(bargain_reduce(x, wrong, ideal), Err(Error::BadFiller));
    }

    #[test]
    fn midpoint_of_ideal_points_keeps_half() {
        let ideal = BargainPoint {
            x_buyer: 3.0,
            x_seller: 2.0,
        };
        let o1 = BargainPoint {
            x_buyer: 3.0,
            x_seller: 0.4,
        };
        let o2 = BargainPoint {
            x_buyer: 1.1,
            x_seller: 2.0,
        };
        let x = BargainPoint {
            x_buyer: 0.5 * (o1.x_buyer + o2.x_buyer),
            x_seller: 0.5 * (o1.x_seller + o2.x_seller),
        };
        let z = if x.x_buyer / 3.0 >= x.x_seller / 2.0 {
            o2
        } else {
            o1
        };
        let (_, y) = bargain_reduce(x, z, ideal).unwrap();
        assert!((y.x_buyer / 3.0 - y.x_seller / 2.0).abs() < 1e-12);
        assert!(y.x_buyer + y.x_seller >= 0.5 * 5.0 - 1e-12);
    }

    proptest! {
        #[test]
        fn bargain_lands_on_ks_line(xb in 0.0f64..1.0, xs in 0.0f64..1.0, zo in 0.0f64..1.0, ib in 0.1f64..3.0, is in 0.1f64..3.0) {
            let ideal = BargainPoint { x_buyer: ib, x_seller: is };
            let x = BargainPoint { x_buyer: xb * ib, x_seller: xs * is };
            let z = if xb >= xs { BargainPoint { x_buyer: zo * ib, x_seller: is } } else { BargainPoint { x_buyer: ib, x_seller: zo * is } };
            let (_, y) = bargain_reduce(x, z, ideal).unwrap();
            prop_assert!((y.x_buyer / ib - y.x_seller / is).abs() <= 1e-12);
            prop_assert!(y.x_buyer + y.x_seller >= xb.min(xs) * (ib + is) - 1e-12);
        }

        #[test]
        fn som_mixture_seller_ratio_monotone(a in 0.0f64..2.0, w in 0.1f64..3.0, l1 in 0.0f64..1.0, l2 in 0.0f64..1.0) {
            let inst = Instance::zero_seller(ValuationDist::uniform(a, a + w));
            let b = inst.benchmarks();
            let base = inst.buyer_offer();
            let som = inst.seller_offer();
            let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
            let r_lo = ks_report(&base.mix(lo, &som), &b, 1e-6).unwrap().seller_ratio;
            let r_hi = ks_report(&base.mix(hi, &som), &b, 1e-6).unwrap().seller_ratio;
            prop_assert!(r_hi <= r_lo + 1e-12);
        }

        #[test]
        fn fair_price_scale_invariant(a in 0.0f64..2.0, w in 0.1f64..3.0, s in 0.1f64..10.0) {
            let f1 = ks_fair_fixed_price(&Instance::zero_seller(ValuationDist::uniform(a, a + w)), 1e-8).unwrap();
            let f2 = ks_fair_fixed_price(&Instance::zero_seller(ValuationDist::uniform(s * a, s * (a + w))), 1e-8).unwrap();
            prop_assert!((f2.price - s * f1.price).abs() <= 1e-8 * s.max(1.0));
            prop_assert!((f1.report.seller_ratio - f2.report.seller_ratio).abs() <= 1e-8);
            prop_assert!((f1.report.gft_ratio.unwrap() - f2.report.gft_ratio.unwrap()).abs() <= 1e-8);
        }

        #[test]
        fn fair_price_sits_at_sign_change(a in 0.0f64..2.0, w in 0.1f64..3.0) {
            let inst = Instance::zero_seller(ValuationDist::uniform(a, a + w));
            let b = inst.benchmarks();
            let f = ks_fair_fixed_price(&inst, 1e-8).unwrap();
            prop_assert!(f.report.gap.abs() <= 1e-8);
            let r_m = inst.buyer.monopoly().r_m;
            let h = r_m / 4096.0;
            let g = |p: f64| ks_report(&inst.fixed_price(p), &b, 1e-6).unwrap().gap;
            prop_assert!(g((f.price - h).max(0.0)) <= 1e-9);
        }

        #[test]
        fn fair_rom_is_fair_with_half_guarantee(a in 0.0f64..2.0, w in 0.1f64..3.0, c in 0.0f64..2.0, x in 0.1f64..3.0) {
            let inst = Instance::new(ValuationDist::uniform(a, a + w), ValuationDist::uniform(c, c + x)).unwrap();
            let b = inst.benchmarks();
            prop_assume!(b.seller_ideal > 1e-6 && b.buyer_ideal > 1e-6);
            let f = ks_fair_lambda_rom(&inst, &b, 1e-9).unwrap();
            prop_assert!(f.report.gap.abs() <= 1e-9);
            prop_assert!(f.report.seller_ratio >= 0.5 - 1e-9);
        }
    }
}
