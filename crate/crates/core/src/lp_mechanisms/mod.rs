//! Mechanism optimization over finite-support instances as linear programs.
//!
//! A mechanism is a table of trade probabilities `x[i][j]`, buyer payments
//! `p[i][j]` and seller receipts `pt[i][j]` indexed by (buyer type, seller
//! type). Interim incentive compatibility, interim individual rationality and
//! ex-ante weak budget balance are all linear in these tables.

mod instance;
mod oracle;
pub mod simplex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use instance::{DiscreteDist, DiscreteInstance};
pub use oracle::{threshold_best, threshold_menu, ThresholdMenu};

use crate::error::{Error, Result};
use crate::mechanisms::MechanismOutcome;
use crate::quadrature::golden_max;
use simplex::{Cmp, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Gft,
    SellerUtil,
    BuyerUtil,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buyer,
    Seller,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LpConstraint {
    /// `U / buyer_ideal = Π / seller_ideal`.
    KsFair { seller_ideal: f64, buyer_ideal: f64 },
    /// `U = Π`.
    Equitable,
    /// Every type's interim utility is the same fraction of its interim ideal.
    InterimKsFair,
    /// Ex-ante utility of `side` at least `t`.
    UtilFloor { side: Side, t: f64 },
}

/// Trade probabilities and transfers, row-major over (buyer type, seller type).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismLp {
    pub n_buyer: usize,
    pub n_seller: usize,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub pt: Vec<f64>,
    /// Common interim ratio when the interim constraint is active.
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub mech: MechanismLp,
    pub outcome: MechanismOutcome,
    pub pivots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub buyer_bic: f64,
    pub seller_bic: f64,
    pub iir: f64,
    pub wbb: f64,
    pub bounds: f64,
    pub max_residual: f64,
    pub worst: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    /// Buyer floor.
    pub t: f64,
    pub buyer_utility: f64,
    pub seller_utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    pub points: Vec<FrontierPoint>,
    /// Seller value is nonincreasing and concave in the floor.
    pub concave: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NswSolution {
    pub solution: LpSolution,
    pub nsw: f64,
    pub floor: f64,
    pub seller_ideal: f64,
    pub buyer_ideal: f64,
}

impl MechanismLp {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_seller + j
    }

    pub fn x(&self, i: usize, j: usize) -> f64 {
        self.x[self.idx(i, j)]
    }

    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.p[self.idx(i, j)]
    }

    pub fn pt(&self, i: usize, j: usize) -> f64 {
        self.pt[self.idx(i, j)]
    }

    /// Posted price `price`: trade iff `v >= price >= c`, both sides transfer `price`.
    pub fn fixed_price(inst: &DiscreteInstance, price: f64) -> Self {
        let (n, m) = (inst.buyer.len(), inst.seller.len());
        let mut mech = Self {
            n_buyer: n,
            n_seller: m,
            x: vec![0.0; n * m],
            p: vec![0.0; n * m],
            pt: vec![0.0; n * m],
            theta: None,
        };
        for (i, &v) in inst.buyer.values().iter().enumerate() {
            for (j, &c) in inst.seller.values().iter().enumerate() {
                if v >= price && c <= price {
                    let k = i * m + j;
                    mech.x[k] = 1.0;
                    mech.p[k] = price;
                    mech.pt[k] = price;
                }
            }
        }
        mech
    }

    /// Utility of buyer type `i` reporting `k`.
    pub fn buyer_report_utility(&self, inst: &DiscreteInstance, i: usize, k: usize) -> f64 {
        let v = inst.buyer.values()[i];
        inst.seller
            .probs()
            .iter()
            .enumerate()
            .map(|(j, g)| g * (v * self.x(k, j) - self.p(k, j)))
            .sum()
    }

    /// Utility of seller type `j` reporting `l`.
    pub fn seller_report_utility(&self, inst: &DiscreteInstance, j: usize, l: usize) -> f64 {
        let c = inst.seller.values()[j];
        inst.buyer
            .probs()
            .iter()
            .enumerate()
            .map(|(i, f)| f * (self.pt(i, l) - c * self.x(i, l)))
            .sum()
    }

    pub fn buyer_interim(&self, inst: &DiscreteInstance) -> Vec<f64> {
        (0..self.n_buyer)
            .map(|i| self.buyer_report_utility(inst, i, i))
            .collect()
    }

    pub fn seller_interim(&self, inst: &DiscreteInstance) -> Vec<f64> {
        (0..self.n_seller)
            .map(|j| self.seller_report_utility(inst, j, j))
            .collect()
    }

    pub fn outcome(&self, inst: &DiscreteInstance) -> MechanismOutcome {
        let mut o = MechanismOutcome::default();
        for (i, (v, f)) in inst.buyer.iter().enumerate() {
            for (j, (c, g)) in inst.seller.iter().enumerate() {
                let w = f * g;
                let x = self.x(i, j);
                o.buyer_utility += w * (v * x - self.p(i, j));
                o.seller_utility += w * (self.pt(i, j) - c * x);
                o.buyer_payment += w * self.p(i, j);
                o.seller_receipt += w * self.pt(i, j);
                o.gft += w * (v - c) * x;
            }
        }
        o
    }
}

/// Per-type ideal utilities: the best take-it-or-leave-it offer each type
/// can make against the other side.
pub fn interim_ideals(inst: &DiscreteInstance) -> (Vec<f64>, Vec<f64>) {
    let buyer = inst
        .buyer
        .values()
        .iter()
        .map(|&v| {
            inst.seller
                .values()
                .iter()
                .filter(|&&p| p <= v)
                .map(|&p| (v - p) * inst.seller.at_most(p))
                .fold(0.0, f64::max)
        })
        .collect();
    let seller = inst
        .seller
        .values()
        .iter()
        .map(|&c| {
            inst.buyer
                .values()
                .iter()
                .filter(|&&p| p >= c)
                .map(|&p| (p - c) * inst.buyer.survival(p))
                .fold(0.0, f64::max)
        })
        .collect();
    (buyer, seller)
}

#[derive(Clone, Copy)]
struct Layout {
    n: usize,
    m: usize,
}

impl Layout {
    fn x(&self, i: usize, j: usize) -> usize {
        i * self.m + j
    }
    fn p(&self, i: usize, j: usize) -> usize {
        self.n * self.m + i * self.m + j
    }
    fn pt(&self, i: usize, j: usize) -> usize {
        2 * self.n * self.m + i * self.m + j
    }
    fn theta(&self) -> usize {
        3 * self.n * self.m
    }
}

type Expr = Vec<(usize, f64)>;

fn combine(terms: &[(f64, &Expr)]) -> Expr {
    let mut out: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
    for (w, e) in terms {
        for &(k, a) in e.iter() {
            *out.entry(k).or_insert(0.0) += w * a;
        }
    }
    out.into_iter().filter(|(_, a)| *a != 0.0).collect()
}

/// Builds the program. Returns it with the layout and whether `theta` is used.
fn build(
    inst: &DiscreteInstance,
    objective: Objective,
    constraints: &[LpConstraint],
) -> Result<(Problem, Layout, bool)> {
    let (n, m) = (inst.buyer.len(), inst.seller.len());
    let lay = Layout { n, m };
    let interim = constraints
        .iter()
        .any(|c| matches!(c, LpConstraint::InterimKsFair));
    let n_vars = 3 * n * m + usize::from(interim);
    let mut prob = Problem::new(n_vars);
    let cap = inst.value_cap();
    let (vs, fs) = (inst.buyer.values(), inst.buyer.probs());
    let (cs, gs) = (inst.seller.values(), inst.seller.probs());
    for i in 0..n {
        for j in 0..m {
            prob.upper[lay.x(i, j)] = 1.0;
            prob.upper[lay.p(i, j)] = cap;
            prob.upper[lay.pt(i, j)] = cap;
        }
    }

    // Buyer type i reporting k, and seller type j reporting l.
    let buyer_dev = |i: usize, k: usize| -> Expr {
        (0..m)
            .flat_map(|j| [(lay.x(k, j), gs[j] * vs[i]), (lay.p(k, j), -gs[j])])
            .collect()
    };
    let seller_dev = |j: usize, l: usize| -> Expr {
        (0..n)
            .flat_map(|i| [(lay.pt(i, l), fs[i]), (lay.x(i, l), -fs[i] * cs[j])])
            .collect()
    };
    let buyer_u: Vec<Expr> = (0..n).map(|i| buyer_dev(i, i)).collect();
    let seller_u: Vec<Expr> = (0..m).map(|j| seller_dev(j, j)).collect();
    let total_u = combine(
        &buyer_u
            .iter()
            .zip(fs)
            .map(|(e, &f)| (f, e))
            .collect::<Vec<_>>(),
    );
    let total_pi = combine(
        &seller_u
            .iter()
            .zip(gs)
            .map(|(e, &g)| (g, e))
            .collect::<Vec<_>>(),
    );

    for i in 0..n {
        for k in (0..n).filter(|&k| k != i) {
            prob.add(
                combine(&[(1.0, &buyer_dev(i, k)), (-1.0, &buyer_u[i])]),
                Cmp::Le,
                0.0,
                "buyer BIC",
            );
        }
        prob.add(combine(&[(-1.0, &buyer_u[i])]), Cmp::Le, 0.0, "buyer IIR");
    }
    for j in 0..m {
        for l in (0..m).filter(|&l| l != j) {
            prob.add(
                combine(&[(1.0, &seller_dev(j, l)), (-1.0, &seller_u[j])]),
                Cmp::Le,
                0.0,
                "seller BIC",
            );
        }
        prob.add(combine(&[(-1.0, &seller_u[j])]), Cmp::Le, 0.0, "seller IIR");
    }
    let wbb: Expr = (0..n)
        .flat_map(|i| {
            (0..m).flat_map(move |j| [(lay.pt(i, j), fs[i] * gs[j]), (lay.p(i, j), -fs[i] * gs[j])])
        })
        .collect();
    prob.add(wbb, Cmp::Le, 0.0, "WBB");

    for c in constraints {
        match *c {
            LpConstraint::KsFair {
                seller_ideal,
                buyer_ideal,
            } => {
                if !(seller_ideal > 0.0 && buyer_ideal > 0.0) {
                    return Err(Error::DegenerateBenchmark {
                        seller: seller_ideal,
                        buyer: buyer_ideal,
                    });
                }
                prob.add(
                    combine(&[
                        (1.0 / buyer_ideal, &total_u),
                        (-1.0 / seller_ideal, &total_pi),
                    ]),
                    Cmp::Eq,
                    0.0,
                    "KS fairness",
                );
            }
            LpConstraint::Equitable => {
                prob.add(
                    combine(&[(1.0, &total_u), (-1.0, &total_pi)]),
                    Cmp::Eq,
                    0.0,
                    "equitable",
                );
            }
            LpConstraint::InterimKsFair => {
                let (ub, us) = interim_ideals(inst);
                let th = vec![(lay.theta(), 1.0)];
                for i in 0..n {
                    prob.add(
                        combine(&[(1.0, &buyer_u[i]), (-ub[i], &th)]),
                        Cmp::Eq,
                        0.0,
                        "interim KS fairness",
                    );
                }
                for j in 0..m {
                    prob.add(
                        combine(&[(1.0, &seller_u[j]), (-us[j], &th)]),
                        Cmp::Eq,
                        0.0,
                        "interim KS fairness",
                    );
                }
            }
            LpConstraint::UtilFloor { side, t } => {
                let e = match side {
                    Side::Buyer => &total_u,
                    Side::Seller => &total_pi,
                };
                prob.add(e.clone(), Cmp::Ge, t, "utility floor");
            }
        }
    }

    let obj = match objective {
        Objective::Gft => (0..n)
            .flat_map(|i| (0..m).map(move |j| (lay.x(i, j), fs[i] * gs[j] * (vs[i] - cs[j]))))
            .collect(),
        Objective::SellerUtil => total_pi,
        Objective::BuyerUtil => total_u,
    };
    for (k, a) in obj {
        prob.objective[k] += a;
    }
    Ok((prob, lay, interim))
}

/// Optimizes `objective`, breaking ties toward the largest `U + Π`.
pub fn solve(
    inst: &DiscreteInstance,
    objective: Objective,
    constraints: &[LpConstraint],
) -> Result<LpSolution> {
    let (mut prob, lay, interim) = build(inst, objective, constraints)?;
    let mut sol = simplex::solve(&prob)?;
    let primary = std::mem::take(&mut prob.objective);
    let mut welfare = vec![0.0; primary.len()];
    for (i, (v, f)) in inst.buyer.iter().enumerate() {
        for (j, (c, g)) in inst.seller.iter().enumerate() {
            welfare[lay.x(i, j)] = f * g * (v - c);
            welfare[lay.p(i, j)] = -f * g;
            welfare[lay.pt(i, j)] = f * g;
        }
    }
    let keep = sol.objective - 1e-13 * sol.objective.abs().max(1.0);
    prob.add(
        primary
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(k, &a)| (k, a))
            .collect(),
        Cmp::Ge,
        keep,
        "objective level",
    );
    prob.objective = welfare;
    if let Ok(second) = simplex::solve(&prob) {
        if prob.max_violation(&second.x) <= 1e-9 {
            sol = second;
        }
    }
    let nm = lay.n * lay.m;
    let mech = MechanismLp {
        n_buyer: lay.n,
        n_seller: lay.m,
        x: sol.x[..nm].to_vec(),
        p: sol.x[nm..2 * nm].to_vec(),
        pt: sol.x[2 * nm..3 * nm].to_vec(),
        theta: interim.then(|| sol.x[lay.theta()]),
    };
    let outcome = mech.outcome(inst);
    Ok(LpSolution {
        mech,
        outcome,
        pivots: sol.pivots,
    })
}

/// Second-best gains from trade.
pub fn opt_sb(inst: &DiscreteInstance) -> Result<f64> {
    Ok(solve(inst, Objective::Gft, &[])?.outcome.gft)
}

/// `(seller ideal, buyer ideal)` over all BIC, IIR, WBB mechanisms.
pub fn ideals(inst: &DiscreteInstance) -> Result<(f64, f64)> {
    let s = solve(inst, Objective::SellerUtil, &[])?
        .outcome
        .seller_utility;
    let b = solve(inst, Objective::BuyerUtil, &[])?
        .outcome
        .buyer_utility;
    Ok((s, b))
}

/// Optimizes `objective` over KS-fair mechanisms.
pub fn ks_fair(inst: &DiscreteInstance, objective: Objective) -> Result<LpSolution> {
    let (seller_ideal, buyer_ideal) = ideals(inst)?;
    solve(
        inst,
        objective,
        &[LpConstraint::KsFair {
            seller_ideal,
            buyer_ideal,
        }],
    )
}

/// The KS-fair mechanism with the largest common ratio.
pub fn ks_solution(inst: &DiscreteInstance) -> Result<LpSolution> {
    ks_fair(inst, Objective::SellerUtil)
}

fn seller_at_floor(inst: &DiscreteInstance, t: f64) -> Result<LpSolution> {
    solve(
        inst,
        Objective::SellerUtil,
        &[LpConstraint::UtilFloor {
            side: Side::Buyer,
            t,
        }],
    )
}

/// Seller-optimal utility at `k` buyer floors spanning `[0, U*]`.
pub fn frontier(inst: &DiscreteInstance, k: usize) -> Result<Frontier> {
    if k < 2 {
        return Err(Error::Domain(
            "frontier needs at least two floor levels".into(),
        ));
    }
    let (_, buyer_ideal) = ideals(inst)?;
    let points: Vec<FrontierPoint> = (0..k)
        .into_par_iter()
        .map(|i| {
            let t = buyer_ideal * i as f64 / (k - 1) as f64;
            let t = if i == k - 1 { buyer_ideal } else { t };
            let s = seller_at_floor(inst, t).or_else(|e| match e {
                Error::Infeasible(_) if i == k - 1 => {
                    seller_at_floor(inst, buyer_ideal * (1.0 - 1e-12))
                }
                e => Err(e),
            })?;
            Ok(FrontierPoint {
                t,
                buyer_utility: s.outcome.buyer_utility,
                seller_utility: s.outcome.seller_utility,
            })
        })
        .collect::<Result<_>>()?;
    let scale = points[0].seller_utility.abs().max(buyer_ideal).max(1.0);
    let tol = 1e-7 * scale;
    let nonincreasing = points
        .windows(2)
        .all(|w| w[1].seller_utility <= w[0].seller_utility + tol);
    let concave = points
        .windows(3)
        .all(|w| w[0].seller_utility + w[2].seller_utility <= 2.0 * w[1].seller_utility + tol);
    Ok(Frontier {
        points,
        concave: nonincreasing && concave,
    })
}

/// Maximizes `Π · U` by golden-section search over the buyer floor.
pub fn nsw_max(inst: &DiscreteInstance) -> Result<NswSolution> {
    let (seller_ideal, buyer_ideal) = ideals(inst)?;
    if !(seller_ideal > 1e-12 && buyer_ideal > 1e-12) {
        return Err(Error::DegenerateBenchmark {
            seller: seller_ideal,
            buyer: buyer_ideal,
        });
    }
    let value = |t: f64| seller_at_floor(inst, t).map_or(0.0, |s| t * s.outcome.seller_utility);
    let tol = 1e-9 * buyer_ideal.max(1.0);
    let (t, _) = golden_max(value, 0.0, buyer_ideal, tol);
    let solution = seller_at_floor(inst, t).or_else(|_| seller_at_floor(inst, t * (1.0 - 1e-9)))?;
    let nsw = solution.outcome.seller_utility * solution.outcome.buyer_utility;
    Ok(NswSolution {
        solution,
        nsw,
        floor: t,
        seller_ideal,
        buyer_ideal,
    })
}

/// Recomputes every incentive, participation and budget constraint.
pub fn audit(inst: &DiscreteInstance, mech: &MechanismLp) -> Result<AuditReport> {
    let (n, m) = (inst.buyer.len(), inst.seller.len());
    if mech.n_buyer != n
        || mech.n_seller != m
        || mech.x.len() != n * m
        || mech.p.len() != n * m
        || mech.pt.len() != n * m
    {
        return Err(Error::InvalidInstance(
            "mechanism dimensions do not match the instance".into(),
        ));
    }
    let ub = mech.buyer_interim(inst);
    let us = mech.seller_interim(inst);
    let mut buyer_bic: f64 = 0.0;
    for i in 0..n {
        for k in 0..n {
            buyer_bic = buyer_bic.max(mech.buyer_report_utility(inst, i, k) - ub[i]);
        }
    }
    let mut seller_bic: f64 = 0.0;
    for j in 0..m {
        for l in 0..m {
            seller_bic = seller_bic.max(mech.seller_report_utility(inst, j, l) - us[j]);
        }
    }
    let iir = ub.iter().chain(&us).fold(0.0f64, |a, u| a.max(-u));
    let o = mech.outcome(inst);
    let wbb = (o.seller_receipt - o.buyer_payment).max(0.0);
    let cap = inst.value_cap();
    let bounds = mech
        .x
        .iter()
        .map(|x| (-x).max(x - 1.0))
        .chain(mech.p.iter().chain(&mech.pt).map(|p| (-p).max(p - cap)))
        .fold(0.0f64, f64::max);
    let classes = [
        ("buyer BIC", buyer_bic),
        ("seller BIC", seller_bic),
        ("IIR", iir),
        ("WBB", wbb),
        ("bounds", bounds),
    ];
    let (worst, max_residual) =
        classes.iter().fold(
            ("none", 0.0f64),
            |acc, &(name, v)| if v > acc.1 { (name, v) } else { acc },
        );
    Ok(AuditReport {
        buyer_bic,
        seller_bic,
        iir,
        wbb,
        bounds,
        max_residual,
        worst: worst.to_string(),
    })
}
