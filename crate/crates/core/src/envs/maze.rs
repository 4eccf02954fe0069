use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FiniteMdp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    N,
    E,
    S,
    W,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::N, Direction::E, Direction::S, Direction::W];

    pub fn opposite(self) -> Direction {
        match self {
            Direction::N => Direction::S,
            Direction::E => Direction::W,
            Direction::S => Direction::N,
            Direction::W => Direction::E,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Action labels in index order: the four moves, then rest.
pub const MAZE_ACTIONS: [&str; 5] = ["N", "E", "S", "W", "R"];

/// A grid maze. Cells are row-major indices with row 0 at the top; the
/// outer border is always walled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MazeSpec {
    pub width: usize,
    pub height: usize,
    /// Each entry walls off one side of a cell; the opposite side of the
    /// neighbor is walled too.
    #[serde(default)]
    pub walls: Vec<(usize, Direction)>,
    pub start: usize,
    pub goal: usize,
    #[serde(default = "default_p_intended")]
    pub p_intended: f64,
    #[serde(default = "default_p_slip")]
    pub p_slip: f64,
    pub horizon: usize,
    #[serde(default = "default_terminal_penalty")]
    pub terminal_penalty: f64,
    /// When true the intended direction also receives its slip share
    /// (`p_intended + p_slip` in total); when false it receives exactly
    /// `p_intended`.
    #[serde(default = "default_true")]
    pub intended_includes_slip: bool,
}

fn default_p_intended() -> f64 {
    0.8
}

fn default_p_slip() -> f64 {
    0.05
}

fn default_terminal_penalty() -> f64 {
    10000.0
}

fn default_true() -> bool {
    true
}

impl MazeSpec {
    /// Builds a maze from a block drawing: `#` is solid, `.` open, `S` the
    /// start and `G` the goal. Solid cells become enclosed states that are
    /// never reached.
    pub fn from_layout(rows: &[&str], horizon: usize) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        if height == 0 || width == 0 || rows.iter().any(|r| r.chars().count() != width) {
            return Err(Error::instance("maze layout must be a non-empty rectangle"));
        }
        let grid: Vec<char> = rows.iter().flat_map(|r| r.chars()).collect();
        let find = |c: char| -> Result<usize> {
            let hits: Vec<usize> = grid.iter().enumerate().filter(|(_, &g)| g == c).map(|(i, _)| i).collect();
            match hits.as_slice() {
                [i] => Ok(*i),
                _ => Err(Error::instance(format!("maze layout needs exactly one '{c}', found {}", hits.len()))),
            }
        };
        let (start, goal) = (find('S')?, find('G')?);
        if let Some(bad) = grid.iter().find(|c| !matches!(c, '#' | '.' | 'S' | 'G')) {
            return Err(Error::instance(format!("maze layout has unknown symbol '{bad}'")));
        }
        let mut spec = MazeSpec {
            width,
            height,
            walls: Vec::new(),
            start,
            goal,
            p_intended: default_p_intended(),
            p_slip: default_p_slip(),
            horizon,
            terminal_penalty: default_terminal_penalty(),
            intended_includes_slip: true,
        };
        for cell in 0..width * height {
            for dir in [Direction::E, Direction::S] {
                if let Some(nb) = spec.step(cell, dir) {
                    if (grid[cell] == '#') != (grid[nb] == '#') || grid[cell] == '#' {
                        spec.walls.push((cell, dir));
                    }
                }
            }
        }
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    /// `(row, column)` of a cell.
    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.width, cell % self.width)
    }

    /// Neighbor across one side, ignoring interior walls.
    fn step(&self, cell: usize, dir: Direction) -> Option<usize> {
        let (r, c) = self.coords(cell);
        match dir {
            Direction::N if r > 0 => Some(cell - self.width),
            Direction::S if r + 1 < self.height => Some(cell + self.width),
            Direction::W if c > 0 => Some(cell - 1),
            Direction::E if c + 1 < self.width => Some(cell + 1),
            _ => None,
        }
    }

    /// Per-cell, per-direction wall flags, symmetric and including the border.
    fn wall_table(&self) -> Result<Vec<[bool; 4]>> {
        let n = self.n_cells();
        let mut table = vec![[false; 4]; n];
        for cell in 0..n {
            for dir in Direction::ALL {
                if self.step(cell, dir).is_none() {
                    table[cell][dir.index()] = true;
                }
            }
        }
        for (i, &(cell, dir)) in self.walls.iter().enumerate() {
            if cell >= n {
                return Err(Error::instance(format!(
                    "walls[{i}] names cell {cell} outside the {}x{} grid",
                    self.width, self.height
                )));
            }
            table[cell][dir.index()] = true;
            if let Some(nb) = self.step(cell, dir) {
                table[nb][dir.opposite().index()] = true;
            }
        }
        Ok(table)
    }

    /// Directions out of `cell` without a wall.
    pub fn open_directions(&self, cell: usize) -> Result<Vec<Direction>> {
        let table = self.wall_table()?;
        Ok(Direction::ALL.into_iter().filter(|d| !table[cell][d.index()]).collect())
    }

    /// Cells adjacent to `cell` through open sides.
    pub fn neighbors(&self, cell: usize) -> Result<Vec<usize>> {
        let table = self.wall_table()?;
        Ok(self.open_neighbors(&table, cell))
    }

    fn open_neighbors(&self, table: &[[bool; 4]], cell: usize) -> Vec<usize> {
        Direction::ALL.into_iter().filter(|d| !table[cell][d.index()]).filter_map(|d| self.step(cell, d)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_cells();
        if n == 0 {
            return Err(Error::instance("maze grid is empty"));
        }
        if self.horizon == 0 {
            return Err(Error::instance("maze horizon must be positive"));
        }
        for (what, cell) in [("start", self.start), ("goal", self.goal)] {
            if cell >= n {
                return Err(Error::instance(format!(
                    "{what} cell {cell} lies outside the {}x{} grid",
                    self.width, self.height
                )));
            }
        }
        if self.start == self.goal {
            return Err(Error::instance(format!("start and goal are both cell {}", self.start)));
        }
        let probs_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !probs_ok(self.p_intended) || !probs_ok(self.p_slip) {
            return Err(Error::instance(format!(
                "p_intended {} and p_slip {} must lie in [0, 1]",
                self.p_intended, self.p_slip
            )));
        }
        if !self.terminal_penalty.is_finite() {
            return Err(Error::instance("terminal_penalty must be finite"));
        }
        let table = self.wall_table()?;
        for cell in 0..n {
            let open = table[cell].iter().filter(|w| !**w).count() as f64;
            let moving = if self.intended_includes_slip {
                self.p_intended + self.p_slip * open
            } else {
                self.p_intended + self.p_slip * (open - 1.0).max(0.0)
            };
            if moving > 1.0 + 1e-12 || self.p_slip * open > 1.0 + 1e-12 {
                return Err(Error::instance(format!(
                    "cell {cell}: move probabilities exceed 1 with {open} open directions"
                )));
            }
        }
        if !self.reachable(&table).contains(&self.goal) {
            return Err(Error::instance(format!(
                "goal cell {} is not reachable from start cell {}",
                self.goal, self.start
            )));
        }
        Ok(())
    }

    fn reachable(&self, table: &[[bool; 4]]) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([self.start]);
        let mut queue = VecDeque::from([self.start]);
        while let Some(c) = queue.pop_front() {
            for nb in self.open_neighbors(table, c) {
                if seen.insert(nb) {
                    queue.push_back(nb);
                }
            }
        }
        seen
    }

    /// Every simple path from start to goal, shortest first. Fails once more
    /// than `limit` paths are found.
    pub fn simple_routes(&self, limit: usize) -> Result<Vec<Vec<usize>>> {
        let table = self.wall_table()?;
        let mut routes = Vec::new();
        let mut path = vec![self.start];
        let mut on_path = vec![false; self.n_cells()];
        on_path[self.start] = true;
        self.extend_routes(&table, &mut path, &mut on_path, &mut routes, limit)?;
        routes.sort_by_key(Vec::len);
        Ok(routes)
    }

    /// Cells of each route's corridor: the cells no other route uses plus
    /// everything reachable from them without touching another route, so
    /// dead-end alleys count toward the route they branch off.
    pub fn route_corridors(&self, routes: &[Vec<usize>]) -> Result<Vec<Vec<usize>>> {
        let table = self.wall_table()?;
        let mut uses = vec![0usize; self.n_cells()];
        for route in routes {
            let mut cells = route.clone();
            cells.sort_unstable();
            cells.dedup();
            for c in cells {
                uses[c] += 1;
            }
        }
        let mut corridors = Vec::with_capacity(routes.len());
        for route in routes {
            let mut member = vec![false; self.n_cells()];
            let mut queue: VecDeque<usize> = route.iter().copied().filter(|&c| uses[c] == 1).collect();
            for &c in &queue {
                member[c] = true;
            }
            while let Some(c) = queue.pop_front() {
                for nb in self.open_neighbors(&table, c) {
                    if !member[nb] && uses[nb] == 0 {
                        member[nb] = true;
                        queue.push_back(nb);
                    }
                }
            }
            corridors.push((0..self.n_cells()).filter(|&c| member[c]).collect());
        }
        Ok(corridors)
    }

    fn extend_routes(
        &self,
        table: &[[bool; 4]],
        path: &mut Vec<usize>,
        on_path: &mut [bool],
        routes: &mut Vec<Vec<usize>>,
        limit: usize,
    ) -> Result<()> {
        let last = *path.last().expect("path starts at the start cell");
        if last == self.goal {
            if routes.len() == limit {
                return Err(Error::resource(format!("maze has more than {limit} simple routes")));
            }
            routes.push(path.clone());
            return Ok(());
        }
        for nb in self.open_neighbors(table, last) {
            if !on_path[nb] {
                on_path[nb] = true;
                path.push(nb);
                self.extend_routes(table, path, on_path, routes, limit)?;
                path.pop();
                on_path[nb] = false;
            }
        }
        Ok(())
    }
}

/// The shipped maze: a short route along a corridor lined with one-cell
/// dead ends, and a longer alley-free loop around it.
pub fn two_route_maze() -> MazeSpec {
    serde_json::from_str(include_str!("../../data/two_route_maze.json")).expect("shipped maze parses")
}

/// Builds the navigation MDP: states are cells, actions are N, E, S, W and
/// rest. A move toward an open side succeeds with `p_intended` (plus its
/// slip share under the inclusive reading), every other open side gets
/// `p_slip`, and the rest of the mass stays put. Stage cost is 1 away from
/// the goal and 0 at it; the terminal cost charges `terminal_penalty` away
/// from the goal.
pub fn build_maze(spec: &MazeSpec) -> Result<FiniteMdp> {
    spec.validate()?;
    let table = spec.wall_table()?;
    let n = spec.n_cells();
    let na = MAZE_ACTIONS.len();
    let mut transition = vec![0.0; n * na * n];
    let mut cost = vec![0.0; n * na];
    for cell in 0..n {
        let open: Vec<Direction> = Direction::ALL.into_iter().filter(|d| !table[cell][d.index()]).collect();
        for u in 0..na {
            let row = &mut transition[(cell * na + u) * n..(cell * na + u + 1) * n];
            let intended = Direction::ALL.get(u).copied().filter(|d| open.contains(d));
            for &d in &open {
                let target = spec.step(cell, d).expect("open sides have neighbors");
                row[target] += match intended {
                    Some(i) if i == d && spec.intended_includes_slip => spec.p_intended + spec.p_slip,
                    Some(i) if i == d => spec.p_intended,
                    _ => spec.p_slip,
                };
            }
            let moved: f64 = row.iter().sum();
            row[cell] = (1.0 - moved).max(0.0);
            cost[cell * na + u] = if cell == spec.goal { 0.0 } else { 1.0 };
        }
    }
    let terminal = (0..n).map(|c| if c == spec.goal { 0.0 } else { spec.terminal_penalty }).collect();
    let mut initial = vec![0.0; n];
    initial[spec.start] = 1.0;
    FiniteMdp::stationary(spec.horizon, n, na, transition, cost, terminal, initial)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_room() -> MazeSpec {
        MazeSpec::from_layout(&["...", ".S.", "..G"], 5).unwrap()
    }

    #[test]
    fn four_open_sides_inclusive_reading() {
        let spec = open_room();
        let mdp = build_maze(&spec).unwrap();
        let center = 4;
        assert_eq!(mdp.prob(0, center, 0, 1), 0.8 + 0.05);
        for other in [3, 5, 7] {
            assert_eq!(mdp.prob(0, center, 0, other), 0.05);
        }
        assert!(mdp.prob(0, center, 0, center).abs() < 1e-15);
    }

    #[test]
    fn exclusive_reading_keeps_remainder() {
        let mut spec = open_room();
        spec.intended_includes_slip = false;
        let mdp = build_maze(&spec).unwrap();
        assert_eq!(mdp.prob(0, 4, 0, 1), 0.8);
        assert!((mdp.prob(0, 4, 0, 4) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn rest_and_walled_moves_only_slip() {
        // corner cell 0 has two open sides
        let mdp = build_maze(&open_room()).unwrap();
        assert!((mdp.prob(0, 0, 4, 0) - 0.9).abs() < 1e-15);
        assert_eq!(mdp.prob(0, 0, 4, 1), 0.05);
        assert_eq!(mdp.prob(0, 0, 4, 3), 0.05);
        // north from the top row is walled
        assert_eq!(mdp.transition_row(0, 0, 0), mdp.transition_row(0, 0, 4));
    }

    #[test]
    fn enclosed_cell_stays_put() {
        let spec = MazeSpec::from_layout(&["S.#", "..G"], 3).unwrap();
        let mdp = build_maze(&spec).unwrap();
        for u in 0..5 {
            assert_eq!(mdp.prob(0, 2, u, 2), 1.0);
        }
    }

    #[test]
    fn costs_and_terminal() {
        let spec = open_room();
        let mdp = build_maze(&spec).unwrap();
        assert_eq!(mdp.cost(0, spec.goal, 2), 0.0);
        assert_eq!(mdp.cost(0, spec.start, 2), 1.0);
        assert_eq!(mdp.terminal_cost()[spec.goal], 0.0);
        assert_eq!(mdp.terminal_cost()[0], 10000.0);
    }

    #[test]
    fn topology_errors_name_cells() {
        let mut spec = open_room();
        spec.walls.push((42, Direction::N));
        assert!(build_maze(&spec).unwrap_err().to_string().contains("42"));
        let blocked = MazeSpec::from_layout(&["S#G"], 3).unwrap();
        assert!(build_maze(&blocked).unwrap_err().to_string().contains("goal cell 2"));
    }

    #[test]
    fn shipped_maze_has_two_routes() {
        let spec = two_route_maze();
        spec.validate().unwrap();
        let routes = spec.simple_routes(10).unwrap();
        assert_eq!(routes.len(), 2);
        assert!(routes[0].len() < routes[1].len());
        let corridors = spec.route_corridors(&routes).unwrap();
        assert!(corridors[0].iter().all(|c| !corridors[1].contains(c)));
        assert!(corridors[0].len() > routes[0].len());
        assert!(corridors[1].iter().all(|c| routes[1].contains(c)));
        assert_eq!(spec.horizon, 55);
    }

    #[test]
    fn routes_in_a_loop() {
        let spec = MazeSpec::from_layout(&["...", "S#G"], 3).unwrap();
        let routes = spec.simple_routes(10).unwrap();
        assert_eq!(routes, vec![vec![3, 0, 1, 2, 5]]);
        let ring = MazeSpec::from_layout(&["....", "S##G", "...."], 3).unwrap();
        let lens: Vec<usize> = ring.simple_routes(10).unwrap().iter().map(Vec::len).collect();
        assert_eq!(lens, vec![6, 6]);
    }
}
