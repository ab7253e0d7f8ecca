//! Ex-ante evaluation of posted-price and take-it-or-leave-it mechanisms.

use serde::{Deserialize, Serialize};

use crate::dist::ValuationDist;
use crate::error::{Error, Result};
use crate::quadrature::{gl_on, golden_max, simpson_pieces};

mod discrete;

const PRICE_GRID: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub buyer: ValuationDist,
    pub seller: ValuationDist,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MechanismOutcome {
    pub seller_utility: f64,
    pub buyer_utility: f64,
    pub buyer_payment: f64,
    pub seller_receipt: f64,
    pub gft: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Benchmarks {
    pub seller_ideal: f64,
    pub buyer_ideal: f64,
    pub opt_fb: f64,
    pub opt_sb: Option<f64>,
}

/// Mechanism descriptors accepted by `evaluate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mech", rename_all = "snake_case")]
pub enum Mechanism {
    Fpm { p: f64 },
    LambdaRom { lambda: f64 },
    Som,
    Bom,
}

impl MechanismOutcome {
    /// Ex-ante mixture: `lambda · self + (1 - lambda) · other`.
    pub fn mix(&self, lambda: f64, other: &MechanismOutcome) -> MechanismOutcome {
        let m = |a: f64, b: f64| lambda * a + (1.0 - lambda) * b;
        MechanismOutcome {
            seller_utility: m(self.seller_utility, other.seller_utility),
            buyer_utility: m(self.buyer_utility, other.buyer_utility),
            buyer_payment: m(self.buyer_payment, other.buyer_payment),
            seller_receipt: m(self.seller_receipt, other.seller_receipt),
            gft: m(self.gft, other.gft),
        }
    }

    fn scaled_add(&mut self, w: f64, o: &MechanismOutcome) {
        self.seller_utility += w * o.seller_utility;
        self.buyer_utility += w * o.buyer_utility;
        self.buyer_payment += w * o.buyer_payment;
        self.seller_receipt += w * o.seller_receipt;
        self.gft += w * o.gft;
    }

    /// Budget identity `GFT = Π + U + (payment - receipt)`, residual.
    pub fn budget_residual(&self) -> f64 {
        (self.gft
            - self.seller_utility
            - self.buyer_utility
            - (self.buyer_payment - self.seller_receipt))
            .abs()
    }
}

/// A bilateral trade market that can evaluate the four basic mechanisms.
pub trait TradeModel {
    fn fixed_price(&self, p: f64) -> MechanismOutcome;
    fn seller_offer(&self) -> MechanismOutcome;
    fn buyer_offer(&self) -> MechanismOutcome;
    fn opt_fb(&self) -> f64;
    /// Second-best benchmark when it has a closed form (zero-value seller).
    fn opt_sb_closed(&self) -> Option<f64>;

    fn lambda_rom(&self, lambda: f64) -> MechanismOutcome {
        self.seller_offer().mix(lambda, &self.buyer_offer())
    }

    fn benchmarks(&self) -> Benchmarks {
        Benchmarks {
            seller_ideal: self.seller_offer().seller_utility,
            buyer_ideal: self.buyer_offer().buyer_utility,
            opt_fb: self.opt_fb(),
            opt_sb: self.opt_sb_closed(),
        }
    }

    fn evaluate(&self, mech: Mechanism) -> MechanismOutcome {
        match mech {
            Mechanism::Fpm { p } => self.fixed_price(p),
            Mechanism::LambdaRom { lambda } => self.lambda_rom(lambda),
            Mechanism::Som => self.seller_offer(),
            Mechanism::Bom => self.buyer_offer(),
        }
    }
}

impl Instance {
    pub fn new(buyer: ValuationDist, seller: ValuationDist) -> Result<Self> {
        if !buyer.is_point_mass() && buyer.bottom_atom_mass() > 0.0 {
            return Err(Error::InvalidInstance(
                "buyer atoms are allowed only at the top of the support".into(),
            ));
        }
        if !seller.is_point_mass() && seller.top_atom_mass() > 0.0 {
            return Err(Error::InvalidInstance(
                "seller atoms are allowed only at the bottom of the support".into(),
            ));
        }
        Ok(Self { buyer, seller })
    }

    pub fn zero_seller(buyer: ValuationDist) -> Self {
        Self::new(buyer, ValuationDist::point_mass(0.0)).expect("zero seller is valid")
    }

    pub fn is_zero_seller(&self) -> bool {
        self.seller.is_point_mass() && self.seller.support_lo() == 0.0
    }

    /// `E[c · 1{c <= p}]`.
    fn seller_mean_below(&self, p: f64) -> f64 {
        let g = &self.seller;
        let atom_at_p = g.at_most(p) - g.cdf(p);
        g.truncated_mean(0.0, p) + p * atom_at_p
    }

    /// Quadrature nodes `(x, weight)` over a distribution, atoms included.
    fn nodes(d: &ValuationDist) -> Vec<(f64, f64)> {
        if d.is_point_mass() {
            return vec![(d.support_lo(), 1.0)];
        }
        let mut out = Vec::new();
        if d.bottom_atom_mass() > 0.0 {
            out.push((d.support_lo(), d.bottom_atom_mass()));
        }
        let mut cuts = vec![d.support_lo()];
        cuts.extend(d.breakpoints());
        cuts.push(d.support_hi());
        for w in cuts.windows(2) {
            out.extend(gl_on(w[0], w[1]).map(|(x, wt)| (x, wt * d.pdf(x).unwrap_or(0.0))));
        }
        if d.top_atom_mass() > 0.0 {
            out.push((d.support_hi(), d.top_atom_mass()));
        }
        out
    }

    /// Seller reserve `argmax_{p >= c} (p - c) Pr[v >= p]`; ties go to the lowest price.
    pub fn reserve(&self, c: f64) -> f64 {
        let f = &self.buyer;
        let lo = c.max(f.support_lo());
        let hi = f.support_hi();
        if lo >= hi {
            return lo;
        }
        let obj = |p: f64| (p - c) * f.survival(p);
        best_on_grid(obj, lo, hi, &f.breakpoints(), false)
    }

    /// Buyer offer `argmax_{p <= v} (v - p) Pr[c <= p]`; ties go to the highest price.
    pub fn offer(&self, v: f64) -> Option<f64> {
        let g = &self.seller;
        let lo = g.support_lo();
        let hi = v.min(g.support_hi());
        if lo > v {
            return None;
        }
        if lo >= hi {
            return Some(lo);
        }
        let obj = |p: f64| (v - p) * g.at_most(p);
        Some(best_on_grid(obj, lo, hi, &g.breakpoints(), true))
    }

    fn seller_offer_at(&self, c: f64) -> MechanismOutcome {
        let f = &self.buyer;
        let r = self.reserve(c);
        let trade = f.survival(r);
        let pay = r * trade;
        MechanismOutcome {
            seller_utility: (r - c) * trade,
            buyer_utility: f.residual_surplus(r),
            buyer_payment: pay,
            seller_receipt: pay,
            gft: f.truncated_mean(r, f64::INFINITY) - c * trade,
        }
    }

    fn buyer_offer_at(&self, v: f64) -> MechanismOutcome {
        let g = &self.seller;
        let Some(o) = self.offer(v) else {
            return MechanismOutcome::default();
        };
        let trade = g.at_most(o);
        let pay = o * trade;
        let below = self.seller_mean_below(o);
        MechanismOutcome {
            seller_utility: pay - below,
            buyer_utility: (v - o) * trade,
            buyer_payment: pay,
            seller_receipt: pay,
            gft: v * trade - below,
        }
    }
}

/// Maximizes `obj` over `[lo, hi]` by a seed grid (uniform, plus geometric
/// when the range spans decades) and golden-section refinement.
fn best_on_grid(
    obj: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    extra: &[f64],
    prefer_high: bool,
) -> f64 {
    let mut grid: Vec<f64> = (0..=PRICE_GRID)
        .map(|i| lo + (hi - lo) * i as f64 / PRICE_GRID as f64)
        .collect();
    let base = lo.max(hi * 1e-12).max(f64::MIN_POSITIVE);
    if hi / base > 100.0 {
        let n = PRICE_GRID / 4;
        grid.extend((0..=n).map(|i| base * (hi / base).powf(i as f64 / n as f64)));
    }
    grid.extend(extra.iter().copied().filter(|&x| x > lo && x < hi));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let vals: Vec<f64> = grid.iter().map(|&p| obj(p)).collect();
    let best = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tie = 1e-12 * best.abs().max(1e-300);
    let pick = |i: &usize| vals[*i] >= best - tie;
    let idx = if prefer_high {
        (0..grid.len()).rev().find(pick)
    } else {
        (0..grid.len()).find(pick)
    }
    .unwrap();
    let a = grid[idx.saturating_sub(1)];
    let b = grid[(idx + 1).min(grid.len() - 1)];
    if b > a {
        let (x, fx) = golden_max(&obj, a, b, (1e-12 * hi.abs().max(1.0)).max(1e-9 * (b - a)));
        if fx > vals[idx] + tie {
            return x;
        }
    }
    grid[idx]
}

impl TradeModel for Instance {
    fn fixed_price(&self, p: f64) -> MechanismOutcome {
        let (f, g) = (&self.buyer, &self.seller);
        let accept_b = f.survival(p);
        let accept_s = g.at_most(p);
        let ec = self.seller_mean_below(p);
        let pay = p * accept_b * accept_s;
        MechanismOutcome {
            seller_utility: accept_b * (p * accept_s - ec),
            buyer_utility: accept_s * f.residual_surplus(p),
            buyer_payment: pay,
            seller_receipt: pay,
            gft: accept_s * f.truncated_mean(p, f64::INFINITY) - accept_b * ec,
        }
    }

    fn seller_offer(&self) -> MechanismOutcome {
        if self.is_zero_seller() {
            let f = &self.buyer;
            let m = f.monopoly();
            let trade = f.survival(m.r_m);
            let pay = m.r_m * trade;
            return MechanismOutcome {
                seller_utility: pay,
                buyer_utility: f.residual_surplus(m.r_m),
                buyer_payment: pay,
                seller_receipt: pay,
                gft: f.truncated_mean(m.r_m, f64::INFINITY),
            };
        }
        let mut acc = MechanismOutcome::default();
        for (c, w) in Self::nodes(&self.seller) {
            acc.scaled_add(w, &self.seller_offer_at(c));
        }
        acc
    }

    fn buyer_offer(&self) -> MechanismOutcome {
        if self.seller.is_point_mass() {
            let c = self.seller.support_lo();
            let f = &self.buyer;
            let trade = f.survival(c);
            let pay = c * trade;
            return MechanismOutcome {
                seller_utility: 0.0,
                buyer_utility: f.residual_surplus(c),
                buyer_payment: pay,
                seller_receipt: pay,
                gft: f.residual_surplus(c),
            };
        }
        let mut acc = MechanismOutcome::default();
        for (v, w) in Self::nodes(&self.buyer) {
            acc.scaled_add(w, &self.buyer_offer_at(v));
        }
        acc
    }

    fn opt_fb(&self) -> f64 {
        let (f, g) = (&self.buyer, &self.seller);
        if g.is_point_mass() {
            return f.residual_surplus(g.support_lo());
        }
        if f.is_point_mass() {
            return g.cdf_integral(0.0, f.support_lo());
        }
        let (a, b) = (g.support_lo(), f.support_hi());
        if b <= a {
            return 0.0;
        }
        let mut breaks = f.breakpoints();
        breaks.extend(g.breakpoints());
        breaks.extend([f.support_lo(), g.support_hi()]);
        simpson_pieces(|t| g.at_most(t) * f.survival(t), a, b, &breaks, 1e-10)
    }

    fn opt_sb_closed(&self) -> Option<f64> {
        self.is_zero_seller().then(|| self.buyer.mean())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Family;
    use crate::quadrature::adaptive_simpson;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::E;

    fn u01_zero() -> Instance {
        Instance::zero_seller(ValuationDist::uniform(0.0, 1.0))
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn fixed_price_intro_example() {
        let o = u01_zero().fixed_price(0.2);
        assert!(close(o.seller_utility, 0.16, 1e-15));
        assert!(close(o.buyer_utility, 0.32, 1e-15));
        assert!(close(o.gft, 0.48, 1e-15));
    }

    #[test]
    fn fixed_price_two_uniforms_against_2d_quadrature() {
        let u = ValuationDist::uniform(0.0, 1.0);
        let inst = Instance::new(u.clone(), u).unwrap();
        let o = inst.fixed_price(0.5);
        let oracle = adaptive_simpson(
            |v| {
                if v < 0.5 {
                    0.0
                } else {
                    adaptive_simpson(
                        |c| if c <= 0.5 { v - c } else { 0.0 },
                        0.0,
                        1.0,
                        1e-12,
                        10_000,
                    )
                }
            },
            0.0,
            1.0,
            1e-11,
            10_000,
        );
        assert!(close(o.gft, 0.125, 1e-14));
        assert!(close(o.gft, oracle, 1e-8));
    }

    #[test]
    fn fixed_price_above_supports_is_zero() {
        let o = u01_zero().fixed_price(1.5);
        assert_eq!(o, MechanismOutcome::default());
    }

    #[test]
    fn seller_offer_examples() {
        let o = u01_zero().seller_offer();
        assert!(
            close(o.seller_utility, 0.25, 1e-12)
                && close(o.buyer_utility, 0.125, 1e-9)
                && close(o.gft, 0.375, 1e-9)
        );
        let o =
            Instance::zero_seller(ValuationDist::new(Family::ExampleMhr).unwrap()).seller_offer();
        assert!(close(o.seller_utility, 1.0, 1e-12));
        let o = Instance::zero_seller(ValuationDist::point_mass(2.0)).seller_offer();
        assert_eq!((o.seller_utility, o.buyer_utility), (2.0, 0.0));
    }

    #[test]
    fn buyer_offer_examples() {
        let o = u01_zero().buyer_offer();
        assert_eq!((o.buyer_utility, o.seller_utility), (0.5, 0.0));
        let k = 25.0;
        let o = Instance::zero_seller(ValuationDist::new(Family::ExampleRegular { k }).unwrap())
            .buyer_offer();
        assert!(close(o.buyer_utility, k * k.ln() / (k - 1.0), 1e-12));
        let o = Instance::zero_seller(ValuationDist::point_mass(2.0)).buyer_offer();
        assert_eq!((o.buyer_utility, o.seller_utility), (2.0, 0.0));
    }

    #[test]
    fn lambda_rom_examples() {
        let inst = u01_zero();
        assert_eq!(inst.lambda_rom(1.0), inst.seller_offer());
        let o = inst.lambda_rom(0.5);
        assert!(close(o.seller_utility, 0.125, 1e-12) && close(o.buyer_utility, 0.3125, 1e-9));
    }

    #[test]
    fn benchmarks_examples() {
        let b = u01_zero().benchmarks();
        assert!(close(b.seller_ideal, 0.25, 1e-12) && close(b.buyer_ideal, 0.5, 1e-15));
        assert!(close(b.opt_fb, 0.5, 1e-15) && b.opt_sb == Some(0.5));
        let irr = Instance::zero_seller(
            ValuationDist::new(Family::ExampleIrregular { k: 16f64.exp() }).unwrap(),
        );
        assert!(close(irr.benchmarks().seller_ideal, 4.0, 1e-9));
    }

    #[test]
    fn opt_fb_two_uniforms_monte_carlo() {
        let u = ValuationDist::uniform(0.0, 1.0);
        let inst = Instance::new(u.clone(), u).unwrap();
        let fb = inst.opt_fb();
        assert!(close(fb, 1.0 / 6.0, 1e-9));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 10_000_000;
        let mc: f64 = (0..n)
            .map(|_| (rng.gen::<f64>() - rng.gen::<f64>()).max(0.0))
            .sum::<f64>()
            / n as f64;
        assert!((mc - fb).abs() / fb <= 1e-3);
    }

    #[test]
    fn continuous_seller_offer_matches_closed_form() {
        // F = G = U[0,1]: reserve (1 + c)/2, Π = E[(1 - c)^2 / 4] = 1/12.
        let u = ValuationDist::uniform(0.0, 1.0);
        let inst = Instance::new(u.clone(), u).unwrap();
        let o = inst.seller_offer();
        assert!(close(o.seller_utility, 1.0 / 12.0, 1e-10));
        assert!(close(o.buyer_utility, 1.0 / 24.0, 1e-10));
        let o = inst.buyer_offer();
        assert!(close(o.buyer_utility, 1.0 / 12.0, 1e-10));
        assert!(close(o.seller_utility, 1.0 / 24.0, 1e-10));
    }

    #[test]
    fn instance_rejects_misplaced_atoms() {
        let reg = ValuationDist::new(Family::ExampleRegular { k: 4.0 }).unwrap();
        assert!(Instance::new(ValuationDist::uniform(0.0, 1.0), reg).is_err());
        let bottom = ValuationDist::new(Family::PiecewiseLinearCdf {
            knots: vec![(0.0, 0.2), (1.0, 1.0)],
            top_atom: 0.0,
        })
        .unwrap();
        assert!(Instance::new(bottom.clone(), ValuationDist::point_mass(0.0)).is_err());
        assert!(Instance::new(ValuationDist::uniform(0.0, 1.0), bottom).is_ok());
    }

    #[test]
    fn mhr_offers_beat_fb_over_e_minus_one() {
        let pairs = [
            (
                ValuationDist::uniform(0.0, 1.0),
                ValuationDist::uniform(0.0, 1.0),
            ),
            (
                ValuationDist::uniform(0.5, 2.0),
                ValuationDist::uniform(0.0, 1.5),
            ),
            (
                ValuationDist::new(Family::ExampleMhr).unwrap(),
                ValuationDist::uniform(0.0, 2.0),
            ),
        ];
        for (f, g) in pairs {
            let inst = Instance::new(f, g).unwrap();
            let fb = inst.opt_fb();
            assert!(inst.seller_offer().gft >= fb / (E - 1.0) - 1e-6);
            assert!(inst.buyer_offer().gft >= fb / (E - 1.0) - 1e-6);
        }
    }

    fn arb_instance() -> impl Strategy<Value = Instance> {
        (
            0.0f64..2.0,
            0.1f64..3.0,
            0.0f64..2.0,
            0.1f64..3.0,
            prop::bool::ANY,
        )
            .prop_map(|(a, w, b, x, zero)| {
                let f = ValuationDist::uniform(a, a + w);
                let g = if zero {
                    ValuationDist::point_mass(0.0)
                } else {
                    ValuationDist::uniform(b, b + x)
                };
                Instance::new(f, g).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn outcomes_are_sbb_and_consistent(inst in arb_instance(), p in 0.0f64..5.0) {
            for o in [inst.fixed_price(p), inst.seller_offer(), inst.buyer_offer(), inst.lambda_rom(0.3)] {
                prop_assert!(o.seller_utility >= -1e-12 && o.buyer_utility >= -1e-12);
                prop_assert_eq!(o.buyer_payment, o.seller_receipt);
                prop_assert!(o.budget_residual() <= 1e-9);
            }
        }

        #[test]
        fn seller_offer_dominates_other_mechanisms(inst in arb_instance(), p in 0.0f64..5.0, l in 0.0f64..1.0) {
            let pi = inst.seller_offer().seller_utility;
            prop_assert!(pi >= inst.fixed_price(p).seller_utility - 1e-9);
            prop_assert!(pi >= inst.buyer_offer().seller_utility - 1e-9);
            prop_assert!(pi >= inst.lambda_rom(l).seller_utility - 1e-9);
        }

        #[test]
        fn rom_gft_is_linear(inst in arb_instance(), l in 0.0f64..1.0) {
            let want = l * inst.seller_offer().gft + (1.0 - l) * inst.buyer_offer().gft;
            prop_assert!((inst.lambda_rom(l).gft - want).abs() <= 1e-12);
        }

        #[test]
        fn zero_seller_fpm_gft_nonincreasing_above_reserve(a in 0.0f64..2.0, w in 0.1f64..3.0, t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let inst = Instance::zero_seller(ValuationDist::uniform(a, a + w));
            let r = inst.buyer.monopoly().r_m;
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let (p1, p2) = (r + lo * (a + w - r), r + hi * (a + w - r));
            prop_assert!(inst.fixed_price(p1).gft >= inst.fixed_price(p2).gft - 1e-12);
        }

        #[test]
        fn regular_fpm_revenue_unimodal(k in 1.5f64..100.0) {
            let inst = Instance::zero_seller(ValuationDist::new(Family::ExampleRegular { k }).unwrap());
            let rev: Vec<f64> = (0..=200).map(|i| inst.fixed_price(k * i as f64 / 200.0).seller_utility).collect();
            let peak = rev.iter().cloned().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, x)| if x > acc.1 { (i, x) } else { acc }).0;
            prop_assert!(rev[..=peak].windows(2).all(|w| w[1] >= w[0] - 1e-12));
            prop_assert!(rev[peak..].windows(2).all(|w| w[1] <= w[0] + 1e-12));
        }

        #[test]
        fn mhr_instances_offers_beat_fb_fraction(inst in arb_instance()) {
            let fb = inst.opt_fb();
            prop_assert!(inst.seller_offer().gft >= fb / (E - 1.0) - 1e-6);
            prop_assert!(inst.buyer_offer().gft >= fb / (E - 1.0) - 1e-6);
        }
    }
}
