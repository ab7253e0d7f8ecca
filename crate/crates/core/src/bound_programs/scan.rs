//! Reference evaluations that scan the inner `M` (and `H`) axes on the same
//! uniform grid as the outer variables, without the endpoint shortcut.

use super::{
    grid_coord, lerp, mhr_aux, objective, reg_aux, MhrCell, MhrProgram, RegCell, RegProgram,
};

fn scan_min(n: usize, mut f: impl FnMut([f64; 3]) -> f64) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                best = best.min(f([grid_coord(i, n), grid_coord(j, n), grid_coord(k, n)]));
            }
        }
    }
    best
}

/// Regular cell minimum with `H = 1`, `L = L_hi` and `M` scanned over `n` points.
pub fn reg_cell_scan(cell: RegCell, n: usize) -> f64 {
    let prog = RegProgram::new(cell);
    scan_min(n, |u| {
        let (q_m, q, v0) = prog.coords(u);
        let Ok(a) = reg_aux(cell.alpha, q_m, q, v0) else {
            return f64::INFINITY;
        };
        (0..n)
            .map(|k| {
                objective(
                    cell.alpha,
                    1.0,
                    lerp(a.m_lo, a.m_hi, grid_coord(k, n)),
                    a.l_hi,
                )
            })
            .filter(|v| v.is_finite())
            .fold(f64::INFINITY, f64::min)
    })
}

/// MHR cell minimum with `L = L_hi` and both `H` and `M` scanned over `n` points.
pub fn mhr_cell_scan(cell: MhrCell, n: usize) -> f64 {
    let prog = MhrProgram::new(cell);
    scan_min(n, |u| {
        let Some((r_m, p, v0)) = prog.coords(u) else {
            return f64::INFINITY;
        };
        let Ok(a) = mhr_aux(cell.alpha, r_m, p, v0) else {
            return f64::INFINITY;
        };
        let mut best = f64::INFINITY;
        for i in 0..n {
            let h = lerp(cell.a.max(a.h_lo), cell.b.min(a.h_hi), grid_coord(i, n));
            for k in 0..n {
                let v = objective(
                    cell.alpha,
                    h,
                    lerp(a.m_lo, a.m_hi, grid_coord(k, n)),
                    a.l_hi,
                );
                if v.is_finite() {
                    best = best.min(v);
                }
            }
        }
        best
    })
}
