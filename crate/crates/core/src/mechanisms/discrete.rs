use super::{MechanismOutcome, TradeModel};
use crate::lp_mechanisms::DiscreteInstance;

impl DiscreteInstance {
    /// Seller reserve for cost `c`: a buyer value maximizing `(p - c) Pr[v >= p]`, lowest on ties.
    pub fn reserve(&self, c: f64) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for &p in self.buyer.values().iter().filter(|&&p| p >= c) {
            let val = (p - c) * self.buyer.survival(p);
            if best.map_or(true, |(_, b)| val > b + 1e-15 * b.abs().max(1.0)) {
                best = Some((p, val));
            }
        }
        best.map(|(p, _)| p)
    }

    /// Buyer offer for value `v`: a seller value maximizing `(v - p) Pr[c <= p]`, highest on ties.
    pub fn offer(&self, v: f64) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for &p in self.seller.values().iter().filter(|&&p| p <= v) {
            let val = (v - p) * self.seller.at_most(p);
            if best.map_or(true, |(_, b)| val >= b - 1e-15 * b.abs().max(1.0)) {
                best = Some((p, val));
            }
        }
        best.map(|(p, _)| p)
    }
}

impl TradeModel for DiscreteInstance {
    fn fixed_price(&self, p: f64) -> MechanismOutcome {
        let mut o = MechanismOutcome::default();
        for (v, f) in self.buyer.iter().filter(|(v, _)| *v >= p) {
            for (c, g) in self.seller.iter().filter(|(c, _)| *c <= p) {
                let w = f * g;
                o.seller_utility += w * (p - c);
                o.buyer_utility += w * (v - p);
                o.buyer_payment += w * p;
                o.gft += w * (v - c);
            }
        }
        o.seller_receipt = o.buyer_payment;
        o
    }

    fn seller_offer(&self) -> MechanismOutcome {
        let mut o = MechanismOutcome::default();
        for (c, g) in self.seller.iter() {
            let Some(r) = self.reserve(c) else { continue };
            for (v, f) in self.buyer.iter().filter(|(v, _)| *v >= r) {
                let w = f * g;
                o.seller_utility += w * (r - c);
                o.buyer_utility += w * (v - r);
                o.buyer_payment += w * r;
                o.gft += w * (v - c);
            }
        }
        o.seller_receipt = o.buyer_payment;
        o
    }

    fn buyer_offer(&self) -> MechanismOutcome {
        let mut o = MechanismOutcome::default();
        for (v, f) in self.buyer.iter() {
            let Some(p) = self.offer(v) else { continue };
            for (c, g) in self.seller.iter().filter(|(c, _)| *c <= p) {
                let w = f * g;
                o.seller_utility += w * (p - c);
                o.buyer_utility += w * (v - p);
                o.buyer_payment += w * p;
                o.gft += w * (v - c);
            }
        }
        o.seller_receipt = o.buyer_payment;
        o
    }

    fn opt_fb(&self) -> f64 {
        self.buyer
            .iter()
            .flat_map(|(v, f)| {
                self.seller
                    .iter()
                    .map(move |(c, g)| f * g * (v - c).max(0.0))
            })
            .sum()
    }

    fn opt_sb_closed(&self) -> Option<f64> {
        self.is_zero_seller().then(|| self.buyer.mean())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp_mechanisms::DiscreteDist;

    #[test]
    fn two_value_full_information() {
        let inst = DiscreteInstance::zero_seller(DiscreteDist::point(2.0));
        assert_eq!(inst.seller_offer().seller_utility, 2.0);
        assert_eq!(inst.buyer_offer().buyer_utility, 2.0);
        let o = inst.fixed_price(1.0);
        assert_eq!((o.seller_utility, o.buyer_utility, o.gft), (1.0, 1.0, 2.0));
    }

    #[test]
    fn zero_seller_monopoly() {
        let inst = DiscreteInstance::zero_seller(
            DiscreteDist::uniform_on(&[0.25, 0.5, 0.75, 1.0]).unwrap(),
        );
        let b = inst.benchmarks();
        assert!((b.seller_ideal - 0.375).abs() < 1e-15);
        assert_eq!(b.buyer_ideal, 0.625);
        assert_eq!(b.opt_sb, Some(0.625));
    }

    #[test]
    fn two_sided_offers() {
        let buyer = DiscreteDist::new(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap();
        let seller = DiscreteDist::new(vec![0.0, 1.5], vec![0.5, 0.5]).unwrap();
        let inst = DiscreteInstance::new(buyer, seller);
        // c=0: price 1 earns 1, price 2 earns 1; lowest wins. c=1.5: price 2 earns 0.25.
        let som = inst.seller_offer();
        assert!((som.seller_utility - (0.5 * 1.0 + 0.5 * 0.25)).abs() < 1e-15);
        // v=1: offer 0 earns 0.5. v=2: offer 0 earns 1.0, offer 1.5 earns 0.5.
        let bom = inst.buyer_offer();
        assert!((bom.buyer_utility - 0.75).abs() < 1e-15);
        assert!((inst.opt_fb() - 0.875).abs() < 1e-15);
    }
}
