use fairtrade::bound_programs::{
    default_reg_cells, eval_reg_bound, objective, reg_aux, CellProgram, GridSpec, RegCell,
    RegProgram,
};
use fairtrade::fairness::ks_fair_fixed_price;
use fairtrade::instances::example_regular;
use fairtrade::quadrature::adaptive_simpson;
use fairtrade::TradeModel;

/// `∫ v(t) dt` over the quantile band `[a, b]`.
fn band(d: &fairtrade::ValuationDist, a: f64, b: f64) -> f64 {
    adaptive_simpson(|t| d.quantile(t), a, b, 1e-12, 1_000_000)
}

#[test]
fn objective_lower_bounds_the_regular_example() {
    let k = 25.0;
    let ex = example_regular(k).unwrap();
    let d = &ex.instance.buyer;
    let bench = ex.instance.benchmarks();
    let fair = ks_fair_fixed_price(&ex.instance, 1e-8).unwrap();
    let alpha = fair.report.seller_ratio;
    let q_m = d.monopoly().q_m;
    let q = d.survival(fair.price);
    assert!((q_m - 1.0 / k).abs() < 1e-9);

    let h = band(d, 0.0, q_m);
    let m = band(d, q_m, q);
    let l = band(d, q, 1.0);
    assert!((h - 1.0).abs() < 1e-9);
    assert!((h + m + l - bench.buyer_ideal).abs() < 1e-6);

    let measured = fair.outcome.gft / bench.opt_sb.unwrap();
    let program = objective(alpha, h, m, l);
    assert!(program <= measured + 1e-9, "{program} {measured}");

    // The sandwich bounds at the instance's own point contain its true M and L.
    let aux = reg_aux(alpha, q_m, q, 0.0).unwrap();
    assert!(aux.m_lo <= m + 1e-9 && m <= aux.m_hi + 1e-9, "{aux:?} {m}");
    assert!(aux.l_lo <= l + 1e-9 && l <= aux.l_hi + 1e-9, "{aux:?} {l}");

    let bound = eval_reg_bound(&default_reg_cells(), GridSpec::new(32).unwrap())
        .unwrap()
        .bound;
    assert!(bound <= measured);
}

#[test]
fn cell_value_matches_direct_evaluation_at_argmin() {
    let cell = RegCell {
        s: 0.05,
        l: 0.2,
        alpha: 0.74,
    };
    let prog = RegProgram::new(cell);
    let report = fairtrade::bound_programs::cell_min(&prog, GridSpec::new(24).unwrap(), 0);
    let get = |k: &str| report.argmin.iter().find(|(n, _)| n == k).unwrap().1;
    let direct = objective(cell.alpha, get("H"), get("M"), get("L"));
    assert!((direct - report.value).abs() < 1e-12);
    assert_eq!(prog.alpha(), 0.74);
}
