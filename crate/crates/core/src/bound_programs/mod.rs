//! Grid evaluation of the two minimax programs that lower-bound the GFT
//! ratio of the KS-fair fixed price for regular and MHR buyers.
//!
//! Each program is split into cells of the adversary's outer variables. A
//! cell fixes the prover's mixing constant `alpha` (or searches a list of
//! candidates) and the inner adversary variables are minimized over a
//! uniform grid.
//!
//! The objective `Γ + Γ/T` with `S = H + M`, `T = S + L` equals
//! `min(α(T+1)/T, S/T)`, which is quasi-concave in `S` at fixed `L`. The
//! minimum over `M` (and `H`) is therefore taken at the two interval ends;
//! the literal scans are kept in [`scan`] as references.

mod lambert;
mod mhr;
mod reg;
pub mod scan;

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{golden_max, linspace};

pub use lambert::lambert_w0;
pub use mhr::{mhr_aux, mhr_m_hi_alt, mhr_price_range, mhr_v0_max, MhrAux, MhrProgram};
pub use reg::{reg_aux, RegAux, RegProgram};

/// Clamp for logarithm and denominator arguments near singular boundaries.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegCell {
    pub s: f64,
    pub l: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MhrCell {
    pub s: f64,
    pub l: f64,
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points_per_var: usize,
    pub refine: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MhrPartition {
    Cells(Vec<MhrCell>),
    /// Uniform lattice; `alpha` is chosen per cell from [`mhr_alpha_candidates`].
    Adaptive {
        r_cells: usize,
        h_cells: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub id: usize,
    pub alpha: f64,
    pub value: f64,
    pub argmin: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub cells: Vec<CellReport>,
    pub bound: f64,
}

impl GridSpec {
    pub fn new(points_per_var: usize) -> Result<Self> {
        if points_per_var < 16 {
            return Err(Error::Domain(format!(
                "grid needs at least 16 points per variable, got {points_per_var}"
            )));
        }
        Ok(Self {
            points_per_var,
            refine: false,
        })
    }

    pub fn refined(self) -> Self {
        Self {
            refine: true,
            ..self
        }
    }
}

/// `Γ = α − [T/(T+1) · (α − (H+M−α)/T)]⁺` with `T = H + M + L`.
pub fn gamma(alpha: f64, h: f64, m: f64, l: f64) -> f64 {
    let t = h + m + l;
    alpha - (t / (t + 1.0) * (alpha - (h + m - alpha) / t)).max(0.0)
}

/// `Γ + Γ / (H + M + L)`.
pub fn objective(alpha: f64, h: f64, m: f64, l: f64) -> f64 {
    let g = gamma(alpha, h, m, l);
    g + g / (h + m + l)
}

/// Minimum of the objective over the two corners `(h_lo, m_lo)` and `(h_hi, m_hi)`,
/// returning the value and the chosen `(H, M)`.
pub(crate) fn corner_min(
    alpha: f64,
    h: (f64, f64),
    m: (f64, f64),
    l: f64,
) -> Option<(f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    for (hh, mm) in [(h.0, m.0), (h.1, m.1)] {
        let v = objective(alpha, hh, mm, l);
        if v.is_finite() && hh + mm + l > 0.0 && best.map_or(true, |b| v < b.0) {
            best = Some((v, hh, mm));
        }
    }
    best
}

/// The mixing-constant partition of the regular program.
pub fn default_reg_cells() -> Vec<RegCell> {
    [
        (0.0, 0.002, 0.8),
        (0.002, 0.008, 0.78),
        (0.008, 0.018, 0.76),
        (0.018, 0.034, 0.74),
        (0.034, 0.044, 0.72),
        (0.044, 0.078, 0.7),
        (0.078, 0.1, 0.68),
        (0.1, 1.0, 0.66),
    ]
    .into_iter()
    .map(|(s, l, alpha)| RegCell { s, l, alpha })
    .collect()
}

pub fn mhr_alpha_candidates() -> Vec<f64> {
    linspace(0.5, 0.95, 64)
}

pub fn reg_alpha_candidates() -> Vec<f64> {
    linspace(0.6, 0.86, 53)
}

pub fn mhr_lattice(r_cells: usize, h_cells: usize) -> Vec<(f64, f64, f64, f64)> {
    let rs = linspace(1.0, std::f64::consts::E, r_cells + 1);
    let hs = linspace(1.0, 2.0, h_cells + 1);
    let mut out = Vec::with_capacity(r_cells * h_cells);
    for i in 0..r_cells {
        for j in 0..h_cells {
            out.push((rs[i], rs[i + 1], hs[j], hs[j + 1]));
        }
    }
    out
}

/// Runs `f` on a local pool of `threads` workers.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
    {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// A cell of a bound program seen as a function on the unit cube of its
/// three grid axes.
pub trait CellProgram: Sync {
    fn alpha(&self) -> f64;
    fn with_alpha(&self, alpha: f64) -> Self
    where
        Self: Sized;
    /// Objective at unit-cube coordinates, `None` where the point is singular.
    fn value_at(&self, u: [f64; 3]) -> Option<f64>;
    /// Named variables at `u`, including the inner `H`, `M`, `L` picked.
    fn describe(&self, u: [f64; 3]) -> Vec<(String, f64)>;
    /// Minimum over grid indices drawn from `axis` on every axis. Returns
    /// `None` as soon as a value below `stop_below` is seen.
    fn grid_min(&self, n: usize, axis: &[usize], stop_below: f64) -> Option<(f64, [usize; 3])>;
}

pub(crate) fn grid_coord(k: usize, n: usize) -> f64 {
    if k + 1 >= n {
        1.0
    } else {
        k as f64 / (n - 1) as f64
    }
}

pub(crate) fn lerp(lo: f64, hi: f64, u: f64) -> f64 {
    if u >= 1.0 {
        hi
    } else {
        lo + (hi - lo) * u
    }
}

/// Shared outer loop: parallel over the first axis, with early exit.
pub(crate) fn parallel_min<F>(
    axis: &[usize],
    stop_below: f64,
    inner: F,
) -> Option<(f64, [usize; 3])>
where
    F: Fn(usize, &AtomicBool) -> Option<(f64, [usize; 3])> + Sync,
{
    let abort = AtomicBool::new(false);
    let best = axis
        .par_iter()
        .filter_map(|&i| {
            if abort.load(Ordering::Relaxed) {
                return None;
            }
            let r = inner(i, &abort);
            if let Some((v, _)) = r {
                if v < stop_below {
                    abort.store(true, Ordering::Relaxed);
                }
            }
            r
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    if abort.load(Ordering::Relaxed) {
        None
    } else {
        Some(best.unwrap_or((f64::INFINITY, [0; 3])))
    }
}

/// One coordinate-descent pass from `u` with golden-section search within
/// one grid step on each axis.
fn refine<P: CellProgram>(prog: &P, n: usize, mut u: [f64; 3], mut value: f64) -> ([f64; 3], f64) {
    let h = 1.0 / (n - 1) as f64;
    for axis in 0..3 {
        let lo = (u[axis] - h).max(0.0);
        let hi = (u[axis] + h).min(1.0);
        let f = |x: f64| {
            let mut w = u;
            w[axis] = x;
            prog.value_at(w).map_or(f64::NEG_INFINITY, |v| -v)
        };
        let (x, fx) = golden_max(f, lo, hi, 1e-10);
        if -fx < value {
            value = -fx;
            u[axis] = x;
        }
    }
    (u, value)
}

fn to_unit(idx: [usize; 3], n: usize) -> [f64; 3] {
    [
        grid_coord(idx[0], n),
        grid_coord(idx[1], n),
        grid_coord(idx[2], n),
    ]
}

/// Grid minimum of a single cell at its own `alpha`.
pub fn cell_min<P: CellProgram>(prog: &P, grid: GridSpec, id: usize) -> CellReport {
    let n = grid.points_per_var;
    let axis: Vec<usize> = (0..n).collect();
    let (mut value, idx) = prog
        .grid_min(n, &axis, f64::NEG_INFINITY)
        .unwrap_or((f64::INFINITY, [0; 3]));
    let mut u = to_unit(idx, n);
    if grid.refine && value.is_finite() {
        (u, value) = refine(prog, n, u, value);
    }
    CellReport {
        id,
        alpha: prog.alpha(),
        value,
        argmin: prog.describe(u),
    }
}

fn coarse_axis(n: usize) -> Vec<usize> {
    let c = (n / 3 + 1).clamp(2, n);
    let mut idx: Vec<usize> = (0..c)
        .map(|k| ((k * (n - 1)) as f64 / (c - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}

/// Largest cell minimum over `alphas`, by branch and bound: coarse sub-grid
/// minima bound each candidate's fine minimum from above, and fine scans
/// stop as soon as they fall below the incumbent. The result equals the
/// exhaustive search.
pub fn best_alpha<P: CellProgram>(
    prog: &P,
    alphas: &[f64],
    grid: GridSpec,
    id: usize,
) -> CellReport {
    let n = grid.points_per_var;
    let coarse = coarse_axis(n);
    let full: Vec<usize> = (0..n).collect();
    let mut bounds: Vec<(f64, f64)> = alphas
        .iter()
        .map(|&a| {
            (
                a,
                prog.with_alpha(a)
                    .grid_min(n, &coarse, f64::NEG_INFINITY)
                    .map_or(f64::INFINITY, |r| r.0),
            )
        })
        .collect();
    bounds.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.total_cmp(&y.0)));
    let mut incumbent: Option<(f64, f64, [usize; 3])> = None;
    for (a, ub) in bounds {
        if let Some((_, best, _)) = incumbent {
            if ub <= best {
                break;
            }
        }
        let stop = incumbent.map_or(f64::NEG_INFINITY, |b| b.1);
        if let Some((v, idx)) = prog.with_alpha(a).grid_min(n, &full, stop) {
            if incumbent.map_or(true, |b| v > b.1) {
                incumbent = Some((a, v, idx));
            }
        }
    }
    let (alpha, mut value, idx) = incumbent.unwrap_or((alphas[0], f64::INFINITY, [0; 3]));
    let chosen = prog.with_alpha(alpha);
    let mut u = to_unit(idx, n);
    if grid.refine && value.is_finite() {
        (u, value) = refine(&chosen, n, u, value);
    }
    CellReport {
        id,
        alpha,
        value,
        argmin: chosen.describe(u),
    }
}

fn finish(cells: Vec<CellReport>) -> BoundReport {
    let bound = cells.iter().map(|c| c.value).fold(f64::INFINITY, f64::min);
    BoundReport { cells, bound }
}

fn check_interval_cover(cells: &[(f64, f64)], lo: f64, hi: f64) -> Result<()> {
    let mut iv: Vec<(f64, f64)> = cells.to_vec();
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut reach = lo;
    for &(s, l) in &iv {
        if s > reach + 1e-12 {
            return Err(Error::PartitionGap(format!(
                "[{reach}, {s}] is not covered"
            )));
        }
        reach = reach.max(l);
    }
    if reach < hi - 1e-12 {
        return Err(Error::PartitionGap(format!(
            "[{reach}, {hi}] is not covered"
        )));
    }
    Ok(())
}

fn check_reg_cells(cells: &[RegCell]) -> Result<()> {
    for c in cells {
        if !(0.0 <= c.s && c.s <= c.l && c.l <= 1.0 && c.alpha > 0.0 && c.alpha < 1.0) {
            return Err(Error::Domain(format!("invalid cell {c:?}")));
        }
    }
    check_interval_cover(
        &cells.iter().map(|c| (c.s, c.l)).collect::<Vec<_>>(),
        0.0,
        1.0,
    )
}

fn check_mhr_cells(cells: &[(f64, f64, f64, f64)]) -> Result<()> {
    let e = std::f64::consts::E;
    let mut rs: Vec<f64> = cells
        .iter()
        .flat_map(|c| [c.0, c.1])
        .chain([1.0, e])
        .collect();
    let mut hs: Vec<f64> = cells
        .iter()
        .flat_map(|c| [c.2, c.3])
        .chain([1.0, 2.0])
        .collect();
    for v in [&mut rs, &mut hs] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    for r in rs.windows(2).filter(|w| w[0] >= 1.0 && w[1] <= e) {
        for h in hs.windows(2).filter(|w| w[0] >= 1.0 && w[1] <= 2.0) {
            let (rm, hm) = (0.5 * (r[0] + r[1]), 0.5 * (h[0] + h[1]));
            if !cells
                .iter()
                .any(|c| c.0 <= rm && rm <= c.1 && c.2 <= hm && hm <= c.3)
            {
                return Err(Error::PartitionGap(format!(
                    "r_m = {rm}, H = {hm} is not covered"
                )));
            }
        }
    }
    Ok(())
}

/// Minimum over cells of the regular program, each at its own `alpha`.
pub fn eval_reg_bound(cells: &[RegCell], grid: GridSpec) -> Result<BoundReport> {
    check_reg_cells(cells)?;
    Ok(finish(
        cells
            .iter()
            .enumerate()
            .map(|(id, c)| cell_min(&RegProgram::new(*c), grid, id))
            .collect(),
    ))
}

/// As [`eval_reg_bound`] but with `alpha` re-chosen per cell from [`reg_alpha_candidates`].
pub fn eval_reg_bound_adaptive(cells: &[RegCell], grid: GridSpec) -> Result<BoundReport> {
    check_reg_cells(cells)?;
    let alphas = reg_alpha_candidates();
    Ok(finish(
        cells
            .iter()
            .enumerate()
            .map(|(id, c)| best_alpha(&RegProgram::new(*c), &alphas, grid, id))
            .collect(),
    ))
}

pub fn eval_reg_cell(cell: RegCell, grid: GridSpec) -> f64 {
    cell_min(&RegProgram::new(cell), grid, 0).value
}

pub fn eval_mhr_cell(cell: MhrCell, grid: GridSpec) -> f64 {
    cell_min(&MhrProgram::new(cell), grid, 0).value
}

pub fn eval_mhr_bound(partition: &MhrPartition, grid: GridSpec) -> Result<BoundReport> {
    match partition {
        MhrPartition::Cells(cells) => {
            for c in cells {
                let e = std::f64::consts::E;
                if !(1.0 <= c.s
                    && c.s <= c.l
                    && c.l <= e + 1e-12
                    && 1.0 <= c.a
                    && c.a <= c.b
                    && c.b <= 2.0
                    && c.alpha > 0.0
                    && c.alpha < 1.0)
                {
                    return Err(Error::Domain(format!("invalid cell {c:?}")));
                }
            }
            check_mhr_cells(
                &cells
                    .iter()
                    .map(|c| (c.s, c.l, c.a, c.b))
                    .collect::<Vec<_>>(),
            )?;
            Ok(finish(
                cells
                    .iter()
                    .enumerate()
                    .map(|(id, c)| cell_min(&MhrProgram::new(*c), grid, id))
                    .collect(),
            ))
        }
        MhrPartition::Adaptive { r_cells, h_cells } => {
            if *r_cells == 0 || *h_cells == 0 {
                return Err(Error::PartitionGap("empty lattice".into()));
            }
            let alphas = mhr_alpha_candidates();
            let cells = mhr_lattice(*r_cells, *h_cells)
                .into_iter()
                .enumerate()
                .map(|(id, (s, l, a, b))| {
                    best_alpha(
                        &MhrProgram::new(MhrCell {
                            s,
                            l,
                            a,
                            b,
                            alpha: alphas[0],
                        }),
                        &alphas,
                        grid,
                        id,
                    )
                })
                .collect();
            Ok(finish(cells))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gamma_alt(alpha: f64, h: f64, m: f64, l: f64) -> f64 {
        let total = h + m + l;
        let buyer_ratio = (h + m - alpha) / total;
        if alpha < buyer_ratio {
            alpha
        } else {
            let delta = total / (total + 1.0) * (alpha - buyer_ratio);
            alpha - delta
        }
    }

    #[test]
    fn gamma_examples() {
        // Positive part vanishes when the seller ratio is below the buyer's.
        assert_eq!(gamma(0.3, 1.0, 1.0, 0.1), 0.3);
        let g = gamma(0.66, 1.0, 0.0, 0.34);
        let want = 0.66 - (1.34 / 2.34) * (0.66 - 0.34 / 1.34);
        assert!((g - want).abs() < 1e-15);
        assert!((g - gamma_alt(0.66, 1.0, 0.0, 0.34)).abs() < 1e-15);
    }

    #[test]
    fn default_reg_cells_cover_unit_interval() {
        assert!(check_reg_cells(&default_reg_cells()).is_ok());
        let mut gap = default_reg_cells();
        gap.remove(3);
        assert!(matches!(check_reg_cells(&gap), Err(Error::PartitionGap(_))));
        let lattice = mhr_lattice(8, 4);
        assert!(check_mhr_cells(&lattice).is_ok());
        assert!(matches!(
            check_mhr_cells(&lattice[1..]),
            Err(Error::PartitionGap(_))
        ));
    }

    #[test]
    fn grid_spec_minimum() {
        assert!(GridSpec::new(15).is_err());
        assert!(GridSpec::new(16).is_ok());
    }

    #[test]
    fn coarse_axis_is_subset() {
        let c = coarse_axis(100);
        assert_eq!(c.len(), 34);
        assert!(c.iter().all(|&k| k < 100));
        assert_eq!(*c.last().unwrap(), 99);
    }

    proptest! {
        #[test]
        fn gamma_matches_case_split(alpha in 0.01f64..0.99, h in 1.0f64..3.0, m in 0.0f64..3.0, l in 0.0f64..3.0) {
            prop_assert!((gamma(alpha, h, m, l) - gamma_alt(alpha, h, m, l)).abs() <= 1e-14);
        }

        #[test]
        fn objective_closed_form(alpha in 0.01f64..0.99, h in 1.0f64..3.0, m in 0.0f64..3.0, l in 0.0f64..3.0) {
            let t = h + m + l;
            let want = (alpha * (t + 1.0) / t).min((h + m) / t);
            prop_assert!((objective(alpha, h, m, l) - want).abs() <= 1e-14);
        }

        #[test]
        fn gamma_nonincreasing_in_l(alpha in 0.01f64..0.99, h in 1.0f64..3.0, m in 0.0f64..3.0, l in 0.0f64..3.0, dl in 0.0f64..1.0) {
            prop_assert!(gamma(alpha, h, m, l + dl) <= gamma(alpha, h, m, l) + 1e-15);
        }

        #[test]
        fn corner_minimum_is_interval_minimum(alpha in 0.3f64..0.95, s_lo in 1.0f64..3.0, ds in 0.0f64..2.0, l in 0.0f64..3.0) {
            let (v, _, _) = corner_min(alpha, (1.0, 1.0), (s_lo - 1.0, s_lo - 1.0 + ds), l).unwrap();
            for k in 0..=200 {
                let m = s_lo - 1.0 + ds * k as f64 / 200.0;
                prop_assert!(v <= objective(alpha, 1.0, m, l) + 1e-14);
            }
        }
    }
}
