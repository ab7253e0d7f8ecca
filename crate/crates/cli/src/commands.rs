use std::path::Path;

use fairtrade::bound_programs::{
    default_reg_cells, eval_mhr_bound, eval_reg_bound, eval_reg_bound_adaptive, with_threads,
    BoundReport, GridSpec, MhrCell, MhrPartition, RegCell,
};
use fairtrade::fairness::{blackbox_reduce, ks_fair_fixed_price, ks_report, Filler};
use fairtrade::instances::{price_curve, revenue_curve, NamedInstance};
use fairtrade::io::{parse_mechanism, InstanceFile};
use fairtrade::lp_mechanisms::{
    audit, frontier, ideals, nsw_max, opt_sb, solve, LpConstraint, LpSolution, Objective,
};
use fairtrade::reproduce::{self, ReproduceConfig, CRITERIA};
use fairtrade::{Benchmarks, Error, Mechanism, Result};

use crate::output::{emit, num, opt, outcome_fields, Table};
use crate::{Cli, Command, Common, Fairness, LpObjective, Program};

const MAX_GRID: usize = 20_000;
const MAX_POINTS: usize = 1_000_000;
const MAX_FRONTIER: usize = 10_000;

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn check_common(c: &Common) -> Result<()> {
    if !(c.tol.is_finite() && c.tol > 0.0) {
        return Err(usage(format!(
            "--tol must be a positive number, got {}",
            c.tol
        )));
    }
    if c.threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    let c = &cli.common;
    check_common(c)?;
    let out = c.out.as_deref();
    match &cli.command {
        Command::Evaluate { instance, mech } => evaluate(instance, mech, c.tol, out),
        Command::KsfairPrice { instance } => ksfair_price(instance, c.tol, out),
        Command::Reduce { instance, base } => reduce(instance, base, out),
        Command::Lp {
            instance,
            objective,
            fair,
            frontier,
        } => with_threads(c.threads, || {
            lp(instance, *objective, *fair, *frontier, out)
        }),
        Command::Bounds {
            program,
            grid,
            refine,
            cells,
            adaptive_alpha,
            lattice,
        } => {
            let opts = BoundsOpts {
                grid: *grid,
                refine: *refine,
                cells: cells.as_deref(),
                adaptive_alpha: *adaptive_alpha,
                lattice,
            };
            with_threads(c.threads, || bounds(*program, &opts, out))
        }
        Command::Curves { example, points } => curves(example, *points, out),
        Command::Reproduce { long, only } => {
            let cfg = ReproduceConfig {
                seed: c.seed,
                threads: c.threads,
                long: *long,
            };
            reproduce_all(&cfg, only, out)
        }
    }
}

/// Benchmarks with the LP second best filled in for finite instances.
fn benchmarks(file: &InstanceFile) -> Result<Benchmarks> {
    let mut b = file.model().benchmarks();
    if let InstanceFile::Discrete(d) = file {
        if b.opt_sb.is_none() {
            b.opt_sb = Some(opt_sb(d)?);
        }
    }
    Ok(b)
}

fn ratio_fields(
    o: &fairtrade::MechanismOutcome,
    b: &Benchmarks,
    tol: f64,
) -> Vec<(&'static str, String)> {
    let r = ks_report(o, b, tol).ok();
    vec![
        ("seller_ratio", opt(r.map(|r| r.seller_ratio))),
        ("buyer_ratio", opt(r.map(|r| r.buyer_ratio))),
        ("ks_gap", opt(r.map(|r| r.gap))),
        ("gft_ratio", opt(b.opt_sb.map(|s| o.gft / s))),
        ("fb_ratio", num(o.gft / b.opt_fb)),
    ]
}

fn bench_fields(b: &Benchmarks) -> Vec<(&'static str, String)> {
    vec![
        ("seller_ideal", num(b.seller_ideal)),
        ("buyer_ideal", num(b.buyer_ideal)),
        ("opt_fb", num(b.opt_fb)),
        ("opt_sb", opt(b.opt_sb)),
    ]
}

fn evaluate(path: &Path, mech: &str, tol: f64, out: Option<&Path>) -> Result<()> {
    let mech = parse_mechanism(mech)?;
    let file = InstanceFile::read(path)?;
    let o = file.evaluate(mech);
    let b = benchmarks(&file)?;
    let mut fields = outcome_fields(&o);
    fields.extend(ratio_fields(&o, &b, tol));
    fields.extend(bench_fields(&b));
    emit(&[Table::record("outcome", fields)], out)
}

fn ksfair_price(path: &Path, tol: f64, out: Option<&Path>) -> Result<()> {
    let inst = match InstanceFile::read(path)? {
        InstanceFile::Continuous(i) => i,
        InstanceFile::Discrete(_) => {
            return Err(usage(
                "ksfair-price needs a distribution literal (`family`) for the buyer",
            ))
        }
    };
    let f = ks_fair_fixed_price(&inst, tol)?;
    let mut fields = vec![
        ("price", num(f.price)),
        ("seller_ratio", num(f.report.seller_ratio)),
        ("buyer_ratio", num(f.report.buyer_ratio)),
        ("ks_gap", num(f.report.gap)),
        ("gft_ratio", opt(f.report.gft_ratio)),
    ];
    fields.extend(outcome_fields(&f.outcome));
    emit(&[Table::record("fair_price", fields)], out)
}

fn reduce(path: &Path, base: &str, out: Option<&Path>) -> Result<()> {
    let mech = parse_mechanism(base)?;
    let file = InstanceFile::read(path)?;
    let b = benchmarks(&file)?;
    let base = file.evaluate(mech);
    let r = blackbox_reduce(
        &base,
        &file.evaluate(Mechanism::Som),
        &file.evaluate(Mechanism::Bom),
        &b,
    )?;
    let mut fields = vec![
        ("lambda", num(r.lambda)),
        (
            "filler",
            match r.direction {
                Filler::Som => "som",
                Filler::Bom => "bom",
            }
            .to_string(),
        ),
        ("guarantee", num(r.guarantee)),
    ];
    fields.extend(outcome_fields(&r.mixed));
    fields.extend(ratio_fields(&r.mixed, &b, f64::INFINITY));
    emit(&[Table::record("reduction", fields)], out)
}

fn lp(
    path: &Path,
    objective: LpObjective,
    fair: Fairness,
    frontier_k: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    let file = InstanceFile::read(path)?;
    let inst = file.discrete()?;
    if let Some(k) = frontier_k {
        if !(2..=MAX_FRONTIER).contains(&k) {
            return Err(usage(format!(
                "--frontier must lie in [2, {MAX_FRONTIER}], got {k}"
            )));
        }
    }
    let (seller_ideal, buyer_ideal) = ideals(inst)?;
    let sol: LpSolution = match objective {
        LpObjective::Nsw if fair != Fairness::None => {
            return Err(usage("--objective nsw takes no --fair constraint"))
        }
        LpObjective::Nsw => nsw_max(inst)?.solution,
        _ => {
            let obj = match objective {
                LpObjective::Seller => Objective::SellerUtil,
                LpObjective::Buyer => Objective::BuyerUtil,
                _ => Objective::Gft,
            };
            let constraints = match fair {
                Fairness::Ks => vec![LpConstraint::KsFair {
                    seller_ideal,
                    buyer_ideal,
                }],
                Fairness::Equitable => vec![LpConstraint::Equitable],
                Fairness::InterimKs => vec![LpConstraint::InterimKsFair],
                Fairness::None => vec![],
            };
            solve(inst, obj, &constraints)?
        }
    };
    let sb = opt_sb(inst)?;
    let report = audit(inst, &sol.mech)?;
    let m = &sol.mech;
    let mut tableau = Table::new(
        "tableau",
        &[
            "buyer_index",
            "seller_index",
            "buyer_value",
            "seller_value",
            "x",
            "p",
            "p_tilde",
        ],
    );
    for (i, v) in inst.buyer.values().iter().enumerate() {
        for (j, c) in inst.seller.values().iter().enumerate() {
            tableau.push(vec![
                i.to_string(),
                j.to_string(),
                num(*v),
                num(*c),
                num(m.x(i, j)),
                num(m.p(i, j)),
                num(m.pt(i, j)),
            ]);
        }
    }
    let o = &sol.outcome;
    let mut fields = outcome_fields(o);
    fields.extend([
        ("seller_ratio", num(o.seller_utility / seller_ideal)),
        ("buyer_ratio", num(o.buyer_utility / buyer_ideal)),
        ("gft_ratio", num(o.gft / sb)),
        ("seller_ideal", num(seller_ideal)),
        ("buyer_ideal", num(buyer_ideal)),
        ("opt_sb", num(sb)),
        ("theta", opt(m.theta)),
        ("max_residual", num(report.max_residual)),
        ("pivots", sol.pivots.to_string()),
    ]);
    let mut tables = vec![tableau, Table::record("outcome", fields)];
    if let Some(k) = frontier_k {
        let f = frontier(inst, k)?;
        let mut t = Table::new(
            "frontier",
            &["buyer_floor", "buyer_utility", "seller_utility"],
        );
        for p in &f.points {
            t.push(vec![num(p.t), num(p.buyer_utility), num(p.seller_utility)]);
        }
        tables.push(t);
    }
    emit(&tables, out)
}

struct BoundsOpts<'a> {
    grid: usize,
    refine: bool,
    cells: Option<&'a Path>,
    adaptive_alpha: bool,
    lattice: &'a str,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn parse_lattice(s: &str) -> Result<(usize, usize)> {
    let bad = || {
        usage(format!(
            "--lattice expects `R,H` with positive integers, got `{s}`"
        ))
    };
    let (r, h) = s.split_once(',').ok_or_else(bad)?;
    let r: usize = r.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if r == 0 || h == 0 || r * h > 10_000 {
        return Err(bad());
    }
    Ok((r, h))
}

fn bounds(program: Program, o: &BoundsOpts, out: Option<&Path>) -> Result<()> {
    if o.grid > MAX_GRID {
        return Err(usage(format!(
            "--grid must be at most {MAX_GRID}, got {}",
            o.grid
        )));
    }
    let mut grid = GridSpec::new(o.grid).map_err(|e| usage(e.to_string()))?;
    if o.refine {
        grid = grid.refined();
    }
    let report: BoundReport = match program {
        Program::Reg => {
            let cells: Vec<RegCell> = match o.cells {
                Some(p) => read_json(p)?,
                None => default_reg_cells(),
            };
            if o.adaptive_alpha {
                eval_reg_bound_adaptive(&cells, grid)?
            } else {
                eval_reg_bound(&cells, grid)?
            }
        }
        Program::Mhr => {
            if o.adaptive_alpha {
                return Err(usage("--adaptive-alpha applies to the regular program; the MHR lattice always chooses alpha per cell"));
            }
            let partition = match o.cells {
                Some(p) => MhrPartition::Cells(read_json::<Vec<MhrCell>>(p)?),
                None => {
                    let (r_cells, h_cells) = parse_lattice(o.lattice)?;
                    MhrPartition::Adaptive { r_cells, h_cells }
                }
            };
            eval_mhr_bound(&partition, grid)?
        }
    };
    let names: Vec<String> = report.cells.first().map_or_else(Vec::new, |c| {
        c.argmin
            .iter()
            .map(|(k, _)| k.clone())
            .filter(|k| k != "value")
            .collect()
    });
    let mut header: Vec<&str> = vec!["cell", "alpha"];
    header.extend(names.iter().map(String::as_str));
    header.push("min_value");
    let mut cells = Table::new("cells", &header);
    for c in &report.cells {
        let mut row = vec![c.id.to_string(), num(c.alpha)];
        row.extend(
            c.argmin
                .iter()
                .filter(|(k, _)| k != "value")
                .map(|(_, v)| num(*v)),
        );
        row.push(num(c.value));
        cells.push(row);
    }
    let summary = Table::record(
        "bound",
        vec![
            ("bound", num(report.bound)),
            ("grid", o.grid.to_string()),
            ("refine", o.refine.to_string()),
            ("cells", report.cells.len().to_string()),
        ],
    );
    emit(&[cells, summary], out)
}

fn curves(example: &str, points: usize, out: Option<&Path>) -> Result<()> {
    if !(2..=MAX_POINTS).contains(&points) {
        return Err(usage(format!(
            "--points must lie in [2, {MAX_POINTS}], got {points}"
        )));
    }
    let ex = NamedInstance::by_name(example)?;
    let mut rev = Table::new("revenue", &["q", "revenue"]);
    for (q, r) in revenue_curve(&ex.instance.buyer, points) {
        rev.push(vec![num(q), num(r)]);
    }
    let mut prices = Table::new(
        "prices",
        &["price", "seller_ratio", "buyer_ratio", "gft_ratio"],
    );
    for r in price_curve(&ex.instance, points)? {
        prices.push(vec![
            num(r.price),
            num(r.seller_ratio),
            num(r.buyer_ratio),
            num(r.gft_ratio),
        ]);
    }
    emit(&[rev, prices], out)
}

fn reproduce_all(cfg: &ReproduceConfig, only: &[u8], out: Option<&Path>) -> Result<()> {
    if let Some(bad) = only.iter().find(|id| !CRITERIA.iter().any(|c| c.0 == **id)) {
        return Err(usage(format!(
            "no criterion {bad}; valid ids are 1..={}",
            CRITERIA.len()
        )));
    }
    let mut table = Table::new("criteria", &["id", "name", "status", "elapsed_s", "detail"]);
    let mut failed = 0;
    for (id, _) in CRITERIA
        .iter()
        .filter(|(id, _)| only.is_empty() || only.contains(id))
    {
        let r = reproduce::run(*id, cfg);
        let status = if r.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!r.pass);
        println!(
            "{status} {:>2} {:<48} {:>9.2}s  {}",
            r.id, r.name, r.elapsed_s, r.detail
        );
        table.push(vec![
            r.id.to_string(),
            r.name,
            status.to_string(),
            format!("{:.3}", r.elapsed_s),
            r.detail,
        ]);
    }
    println!("{failed} of {} criteria failed", table.rows.len());
    if out.is_some() {
        emit(&[table], out)?;
    }
    Ok(())
}
