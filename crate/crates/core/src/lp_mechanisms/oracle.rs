//! Brute-force reference for zero-value sellers: every BIC, IIR mechanism is
//! a lottery over posted thresholds, so the optimum under one linear floor is
//! attained by mixing at most two thresholds.

use super::{DiscreteDist, Objective};

/// Outcomes of posting each buyer value as a price, then giving the good
/// away, then no trade.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMenu {
    pub revenue: Vec<f64>,
    pub buyer_utility: Vec<f64>,
    pub gft: Vec<f64>,
}

pub fn threshold_menu(buyer: &DiscreteDist) -> ThresholdMenu {
    let mut menu = ThresholdMenu {
        revenue: Vec::new(),
        buyer_utility: Vec::new(),
        gft: Vec::new(),
    };
    for &price in buyer.values() {
        let gft: f64 = buyer
            .iter()
            .filter(|(v, _)| *v >= price)
            .map(|(v, f)| v * f)
            .sum();
        let revenue = price * buyer.survival(price);
        menu.revenue.push(revenue);
        menu.buyer_utility.push(gft - revenue);
        menu.gft.push(gft);
    }
    let mean = buyer.mean();
    menu.revenue.push(0.0);
    menu.buyer_utility.push(mean);
    menu.gft.push(mean);
    menu.revenue.push(0.0);
    menu.buyer_utility.push(0.0);
    menu.gft.push(0.0);
    menu
}

/// Best mixture of thresholds for `objective` with buyer utility at least `floor`.
pub fn threshold_best(menu: &ThresholdMenu, objective: Objective, floor: f64) -> Option<f64> {
    let obj = match objective {
        Objective::Gft => &menu.gft,
        Objective::SellerUtil => &menu.revenue,
        Objective::BuyerUtil => &menu.buyer_utility,
    };
    let u = &menu.buyer_utility;
    let k = obj.len();
    let mut best: Option<f64> = None;
    let mut offer = |v: f64| best = Some(best.map_or(v, |b: f64| b.max(v)));
    for a in 0..k {
        if u[a] >= floor {
            offer(obj[a]);
        }
        for b in 0..k {
            if u[a] < floor && u[b] > floor {
                let w = (u[b] - floor) / (u[b] - u[a]);
                offer(w * obj[a] + (1.0 - w) * obj[b]);
            }
        }
    }
    best
}
