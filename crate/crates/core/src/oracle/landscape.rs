use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{conditional_mutual_information, FiniteMdp};
use crate::oracle::sig12;
use crate::solver::classical_blahut;

/// Smallest accepted number of grid points per axis.
pub const MIN_RESOLUTION: usize = 11;

/// Saddle candidates must have a gradient norm below this fraction of the
/// largest gradient norm on the grid.
pub const SADDLE_GRADIENT_FRACTION: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClass {
    Minimum,
    Saddle,
    Maximum,
    Regular,
}

impl CellClass {
    pub fn as_str(self) -> &'static str {
        match self {
            CellClass::Minimum => "min",
            CellClass::Saddle => "saddle",
            CellClass::Maximum => "max",
            CellClass::Regular => "regular",
        }
    }
}

/// Objective values on a regular grid over `[0, 1]^d`, `d` in {1, 2}, with
/// per-cell classification.
#[derive(Debug, Clone, Serialize)]
pub struct LandscapeGrid {
    pub axis_names: Vec<String>,
    /// Points per axis.
    pub resolution: usize,
    /// Row-major over the axes.
    pub values: Vec<f64>,
    pub gradient_norm: Vec<f64>,
    pub classes: Vec<CellClass>,
}

impl LandscapeGrid {
    fn build(axis_names: &[&str], resolution: usize, values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical { iteration: i, message: "landscape value is not finite".into() });
        }
        let mut grid = LandscapeGrid {
            axis_names: axis_names.iter().map(|s| s.to_string()).collect(),
            resolution,
            values,
            gradient_norm: Vec::new(),
            classes: Vec::new(),
        };
        grid.gradient_norm = (0..grid.values.len()).map(|i| grid.gradient_at(i)).collect();
        let max_grad = grid.gradient_norm.iter().copied().fold(0.0, f64::max);
        grid.classes = (0..grid.values.len()).map(|i| grid.classify(i, max_grad)).collect();
        Ok(grid)
    }

    pub fn dims(&self) -> usize {
        self.axis_names.len()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.resolution - 1) as f64
    }

    pub fn coordinates(&self, cell: usize) -> Vec<f64> {
        self.indices(cell).iter().map(|&i| i as f64 * self.spacing()).collect()
    }

    fn indices(&self, cell: usize) -> Vec<usize> {
        let r = self.resolution;
        match self.dims() {
            1 => vec![cell],
            _ => vec![cell / r, cell % r],
        }
    }

    fn cell_of(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.resolution + i)
    }

    /// Nearest grid cell to a point of `[0, 1]^d`.
    pub fn nearest_cell(&self, point: &[f64]) -> usize {
        let idx: Vec<usize> = point
            .iter()
            .map(|&p| ((p.clamp(0.0, 1.0) / self.spacing()).round() as usize).min(self.resolution - 1))
            .collect();
        self.cell_of(&idx)
    }

    /// Chebyshev distance between two cells in grid steps.
    pub fn cell_distance(&self, a: usize, b: usize) -> usize {
        self.indices(a).iter().zip(self.indices(b)).map(|(&i, j)| i.abs_diff(j)).max().unwrap_or(0)
    }

    pub fn cells(&self, class: CellClass) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| self.classes[i] == class).collect()
    }

    fn neighbors(&self, cell: usize) -> Vec<usize> {
        let idx = self.indices(cell);
        let r = self.resolution as isize;
        let mut out = Vec::new();
        let offsets: Vec<Vec<isize>> = match self.dims() {
            1 => vec![vec![-1], vec![1]],
            _ => (-1..=1).flat_map(|a| (-1..=1).map(move |b| vec![a, b])).filter(|o| o != &[0, 0]).collect(),
        };
        for o in offsets {
            let n: Option<Vec<usize>> = idx
                .iter()
                .zip(&o)
                .map(|(&i, &d)| {
                    let j = i as isize + d;
                    (0..r).contains(&j).then_some(j as usize)
                })
                .collect();
            if let Some(n) = n {
                out.push(self.cell_of(&n));
            }
        }
        out
    }

    fn gradient_at(&self, cell: usize) -> f64 {
        let idx = self.indices(cell);
        let h = self.spacing();
        let mut sq = 0.0;
        for axis in 0..idx.len() {
            let mut lo = idx.clone();
            let mut hi = idx.clone();
            let mut width = 0.0;
            if idx[axis] > 0 {
                lo[axis] -= 1;
                width += h;
            }
            if idx[axis] + 1 < self.resolution {
                hi[axis] += 1;
                width += h;
            }
            let d = (self.values[self.cell_of(&hi)] - self.values[self.cell_of(&lo)]) / width;
            sq += d * d;
        }
        sq.sqrt()
    }

    fn classify(&self, cell: usize, max_grad: f64) -> CellClass {
        let v = self.values[cell];
        let nb = self.neighbors(cell);
        if nb.iter().all(|&n| v < self.values[n]) {
            CellClass::Minimum
        } else if nb.iter().all(|&n| v > self.values[n]) {
            CellClass::Maximum
        } else if self.gradient_norm[cell] <= SADDLE_GRADIENT_FRACTION * max_grad
            && nb.iter().all(|&n| self.gradient_norm[cell] < self.gradient_norm[n])
        {
            CellClass::Saddle
        } else {
            CellClass::Regular
        }
    }

    /// Writes one row per cell: axis values, objective, gradient norm and class.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.axis_names.iter().map(String::as_str).collect();
        header.extend(["objective", "gradient_norm", "class"]);
        w.write_record(&header).map_err(csv_err)?;
        for cell in 0..self.values.len() {
            let mut rec: Vec<String> = self.coordinates(cell).into_iter().map(sig12).collect();
            rec.push(sig12(self.values[cell]));
            rec.push(sig12(self.gradient_norm[cell]));
            rec.push(self.classes[cell].as_str().to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

fn check_two_stage(mdp: &FiniteMdp, resolution: usize) -> Result<()> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::invalid(format!("landscape needs at least {MIN_RESOLUTION} points per axis")));
    }
    if mdp.horizon() != 2 || mdp.n_states(0) != 2 || mdp.n_actions(0) != 2 || mdp.n_states(1) != 2 {
        return Err(Error::invalid(
            "landscapes need a two-step instance with binary first-stage states, actions and second-stage states",
        ));
    }
    Ok(())
}

/// Second-stage effective cost `c_1(x, u) + E c_2(x')` over `(x, u)`.
fn last_stage_cost(mdp: &FiniteMdp) -> Vec<f64> {
    let (nx, nu) = (mdp.n_states(1), mdp.n_actions(1));
    let mut cost = Vec::with_capacity(nx * nu);
    for x in 0..nx {
        for u in 0..nu {
            let terminal: f64 = mdp.successors(1, x, u).iter().map(|&(xn, p)| p * mdp.terminal_cost()[xn]).sum();
            cost.push(mdp.cost(1, x, u) + terminal);
        }
    }
    cost
}

fn stage2_value(cost: &[f64], n_actions: usize, lambda: f64, beta: f64) -> Result<f64> {
    Ok(classical_blahut(&[lambda, 1.0 - lambda], cost, n_actions, beta, 1e-14, 100_000)?.value)
}

/// `V_2(lambda) = min_q E c + beta I(X_2; U_2)` with `mu_2(x_2 = 0) = lambda`,
/// each point solved by the classical alternating iteration.
pub fn bellman_landscape_stage2(mdp: &FiniteMdp, beta: f64, resolution: usize) -> Result<LandscapeGrid> {
    check_two_stage(mdp, resolution)?;
    let cost = last_stage_cost(mdp);
    let nu = mdp.n_actions(1);
    let values = (0..resolution)
        .map(|i| stage2_value(&cost, nu, i as f64 / (resolution - 1) as f64, beta))
        .collect::<Result<Vec<_>>>()?;
    LandscapeGrid::build(&["lambda"], resolution, values)
}

/// `E c_1 + beta I(X_1; U_1) + V_2(mu_2)` over `theta_x = q_1(u = 0 | x)`.
pub fn objective_landscape_stage1(mdp: &FiniteMdp, beta: f64, resolution: usize) -> Result<LandscapeGrid> {
    check_two_stage(mdp, resolution)?;
    let cost2 = last_stage_cost(mdp);
    let nu2 = mdp.n_actions(1);
    let mut values = Vec::with_capacity(resolution * resolution);
    for i0 in 0..resolution {
        for i1 in 0..resolution {
            let theta = [i0 as f64 / (resolution - 1) as f64, i1 as f64 / (resolution - 1) as f64];
            values.push(stage1_objective(mdp, &cost2, nu2, theta, beta)?);
        }
    }
    LandscapeGrid::build(&["theta0", "theta1"], resolution, values)
}

/// Objective at a first-stage policy with the second stage optimized.
pub fn stage1_value(mdp: &FiniteMdp, theta: [f64; 2], beta: f64) -> Result<f64> {
    check_two_stage(mdp, MIN_RESOLUTION)?;
    stage1_objective(mdp, &last_stage_cost(mdp), mdp.n_actions(1), theta, beta)
}

fn stage1_objective(mdp: &FiniteMdp, cost2: &[f64], nu2: usize, theta: [f64; 2], beta: f64) -> Result<f64> {
    let mut joint = [0.0; 4];
    let mut cost = 0.0;
    let mut lambda = 0.0;
    for x in 0..2 {
        let q = [theta[x], 1.0 - theta[x]];
        for u in 0..2 {
            let w = mdp.initial()[x] * q[u];
            joint[x * 2 + u] = w;
            cost += w * mdp.cost(0, x, u);
            lambda += w * mdp.prob(0, x, u, 0);
        }
    }
    let info = conditional_mutual_information(&joint, 2, 1, 2);
    Ok(cost + beta * info + stage2_value(cost2, nu2, lambda.clamp(0.0, 1.0), beta)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::build_nonconvex_toy;

    #[test]
    fn stage2_endpoints_vanish() {
        let g = bellman_landscape_stage2(&build_nonconvex_toy(), 1.0, 101).unwrap();
        assert!(g.values[0].abs() < 1e-12);
        assert!(g.values[100].abs() < 1e-12);
        assert!(g.values[50] <= 0.5);
    }

    #[test]
    fn stage1_symmetric_under_relabeling() {
        let g = objective_landscape_stage1(&build_nonconvex_toy(), 1.0, 21).unwrap();
        let r = 21;
        for i in 0..r {
            for j in 0..r {
                let mirrored = (r - 1 - j) * r + (r - 1 - i);
                assert!((g.values[i * r + j] - g.values[mirrored]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_coarse_grids() {
        assert!(bellman_landscape_stage2(&build_nonconvex_toy(), 1.0, 10).is_err());
    }

    #[test]
    fn nearest_cell_rounds() {
        let g = objective_landscape_stage1(&build_nonconvex_toy(), 1.0, 11).unwrap();
        assert_eq!(g.nearest_cell(&[0.0, 0.0]), 0);
        assert_eq!(g.nearest_cell(&[0.26, 0.96]), 3 * 11 + 10);
        assert_eq!(g.cell_distance(0, 12), 1);
    }
}
