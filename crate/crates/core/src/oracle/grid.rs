//! Exhaustive search over a product of probability simplices.

use crate::error::{Error, Result};

/// Largest number of free simplex coordinates an exhaustive search accepts.
pub const MAX_GRID_PARAMS: usize = 6;

/// Default cap on the number of points of the coarse exhaustive grid.
pub const COARSE_BUDGET: usize = 250_000;

/// Candidates from the coarse grid that are refined locally.
const REFINED_CANDIDATES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct GridMinimum {
    /// One distribution per row.
    pub rows: Vec<Vec<f64>>,
    pub value: f64,
    pub evaluations: usize,
    /// Spacing of the coarse lattice.
    pub coarse_spacing: f64,
    /// Spacing of the last refinement stencil.
    pub final_spacing: f64,
}

/// Minimizes `f` over rows of the given sizes, each a distribution.
///
/// A lattice with spacing `max(resolution, 1/k)` is searched exhaustively,
/// `k` chosen so the lattice stays within `budget` points. The best
/// lattice points are then refined by a compass search on the free
/// coordinates whose step halves until it drops below `min_step`.
pub fn minimize_over_simplices<F>(
    row_sizes: &[usize],
    resolution: f64,
    budget: usize,
    min_step: f64,
    mut f: F,
) -> Result<GridMinimum>
where
    F: FnMut(&[Vec<f64>]) -> f64,
{
    if !(resolution > 0.0 && resolution <= 0.5) {
        return Err(Error::invalid(format!("grid resolution must lie in (0, 0.5], got {resolution}")));
    }
    if !(min_step > 0.0) {
        return Err(Error::invalid(format!("refinement step must be positive, got {min_step}")));
    }
    if row_sizes.contains(&0) {
        return Err(Error::invalid("every row needs at least one action"));
    }
    let params: usize = row_sizes.iter().map(|n| n - 1).sum();
    if params > MAX_GRID_PARAMS {
        return Err(Error::resource(format!(
            "exhaustive search over {params} free coordinates exceeds the limit of {MAX_GRID_PARAMS}"
        )));
    }

    let fine = (1.0 / resolution).ceil() as usize;
    let mut k = fine;
    while k > 1 && lattice_size(row_sizes, k) > budget {
        k -= 1;
    }
    let lattices: Vec<Vec<Vec<f64>>> = row_sizes.iter().map(|&n| simplex_lattice(n, k)).collect();

    let mut evaluations = 0;
    let mut top: Vec<(f64, Vec<Vec<f64>>)> = Vec::new();
    let mut index = vec![0usize; row_sizes.len()];
    let mut rows: Vec<Vec<f64>> = lattices.iter().map(|l| l[0].clone()).collect();
    loop {
        for (r, &i) in index.iter().enumerate() {
            rows[r].copy_from_slice(&lattices[r][i]);
        }
        let v = f(&rows);
        evaluations += 1;
        if v.is_finite() {
            insert_top(&mut top, v, &rows);
        }
        if !advance(&mut index, &lattices) {
            break;
        }
    }
    let Some(first) = top.first() else {
        return Err(Error::invalid("objective is not finite anywhere on the grid"));
    };
    let mut best = first.clone();

    let coarse_spacing = 1.0 / k as f64;
    let mut final_spacing = coarse_spacing;
    for (v0, start) in top {
        let (v, rows, h, evals) = compass_refine(row_sizes, start, v0, coarse_spacing, min_step, &mut f);
        evaluations += evals;
        if v < best.0 {
            best = (v, rows);
        }
        final_spacing = h;
    }
    Ok(GridMinimum { rows: best.1, value: best.0, evaluations, coarse_spacing, final_spacing })
}

fn insert_top(top: &mut Vec<(f64, Vec<Vec<f64>>)>, v: f64, rows: &[Vec<f64>]) {
    if top.len() == REFINED_CANDIDATES && v >= top[REFINED_CANDIDATES - 1].0 {
        return;
    }
    let at = top.partition_point(|(w, _)| *w <= v);
    top.insert(at, (v, rows.to_vec()));
    top.truncate(REFINED_CANDIDATES);
}

fn advance(index: &mut [usize], lattices: &[Vec<Vec<f64>>]) -> bool {
    for (i, l) in index.iter_mut().zip(lattices).rev() {
        *i += 1;
        if *i < l.len() {
            return true;
        }
        *i = 0;
    }
    false
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn lattice_size(row_sizes: &[usize], k: usize) -> usize {
    row_sizes.iter().map(|&n| binomial(k + n - 1, n - 1)).fold(1usize, |a, b| a.saturating_mul(b))
}

/// All points of the simplex in `n` coordinates with denominator `k`.
fn simplex_lattice(n: usize, k: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut parts = vec![0usize; n];
    fn rec(i: usize, left: usize, k: usize, parts: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        let n = parts.len();
        if i == n - 1 {
            parts[i] = left;
            out.push(parts.iter().map(|&p| p as f64 / k as f64).collect());
            return;
        }
        for p in (0..=left).rev() {
            parts[i] = p;
            rec(i + 1, left - p, k, parts, out);
        }
    }
    rec(0, k, k, &mut parts, &mut out);
    out
}

/// Compass search on the first `n - 1` coordinates of every row, the last
/// coordinate absorbing the remainder.
fn compass_refine<F>(
    row_sizes: &[usize],
    mut rows: Vec<Vec<f64>>,
    mut value: f64,
    mut h: f64,
    min_step: f64,
    f: &mut F,
) -> (f64, Vec<Vec<f64>>, f64, usize)
where
    F: FnMut(&[Vec<f64>]) -> f64,
{
    let coords: Vec<(usize, usize)> =
        row_sizes.iter().enumerate().flat_map(|(r, &n)| (0..n - 1).map(move |c| (r, c))).collect();
    let mut evaluations = 0;
    let mut trial = rows.clone();
    let stencil = 3usize.pow(coords.len() as u32);
    while h >= min_step && !coords.is_empty() {
        let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
        for code in 1..stencil {
            trial.clone_from(&rows);
            let mut c = code;
            let mut feasible = true;
            for &(r, i) in &coords {
                let step = (c % 3) as f64 - 1.0;
                c /= 3;
                if step != 0.0 {
                    let last = row_sizes[r] - 1;
                    trial[r][i] += step * h;
                    trial[r][last] -= step * h;
                }
            }
            for row in &mut trial {
                if row.iter().any(|&v| v < -1e-12) {
                    feasible = false;
                    break;
                }
                if row.iter().any(|&v| v < 0.0) {
                    row.iter_mut().for_each(|v| *v = v.max(0.0));
                    let s: f64 = row.iter().sum();
                    row.iter_mut().for_each(|v| *v /= s);
                }
            }
            if !feasible {
                continue;
            }
            let v = f(&trial);
            evaluations += 1;
            if v < best.as_ref().map_or(value, |b| b.0) {
                best = Some((v, trial.clone()));
            }
        }
        match best {
            Some((v, r)) => {
                value = v;
                rows = r;
            }
            None => h /= 2.0,
        }
    }
    (value, rows, h, evaluations)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_counts() {
        assert_eq!(simplex_lattice(2, 4).len(), 5);
        assert_eq!(simplex_lattice(3, 4).len(), 15);
        assert_eq!(lattice_size(&[3, 2], 4), 75);
        for p in simplex_lattice(3, 5) {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn finds_interior_minimum_below_spacing() {
        let target = [0.3137, 0.1111];
        let m = minimize_over_simplices(&[2, 2], 1e-2, COARSE_BUDGET, 2.5e-3, |r| {
            (r[0][0] - target[0]).powi(2) + (r[1][0] - target[1]).powi(2)
        })
        .unwrap();
        assert!((m.rows[0][0] - target[0]).abs() <= 2.5e-3, "{:?}", m.rows);
        assert!((m.rows[1][0] - target[1]).abs() <= 2.5e-3);
        assert!(m.value < 2e-5);
    }

    #[test]
    fn three_action_rows_stay_on_the_simplex() {
        let m = minimize_over_simplices(&[3], 1e-3, COARSE_BUDGET, 2.5e-4, |r| {
            (r[0][0] - 0.2).powi(2) + (r[0][2] - 0.5).powi(2)
        })
        .unwrap();
        assert!((m.rows[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((m.rows[0][1] - 0.3).abs() < 1e-3);
    }

    #[test]
    fn guard_counts_free_coordinates() {
        let err = minimize_over_simplices(&[2; 7], 0.1, COARSE_BUDGET, 2.5e-3, |_| 0.0).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
        assert!(minimize_over_simplices(&[4, 4], 0.1, COARSE_BUDGET, 2.5e-3, |_| 0.0).is_ok());
        assert!(minimize_over_simplices(&[4, 4, 2], 0.1, COARSE_BUDGET, 2.5e-3, |_| 0.0).is_err());
    }
}
