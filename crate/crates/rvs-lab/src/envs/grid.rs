//! Shared gridworld machinery: wall maps, blocked-move stepping, uniform
//! free-cell sampling, and breadth-first shortest paths for scripted
//! experts.

use std::collections::VecDeque;

use rand::Rng;

use crate::rng::RvsRng;

/// Discrete movement actions shared by all gridworlds.
pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const STAY: usize = 4;
pub const GRID_ACTIONS: usize = 5;

/// (dx, dy) per action; y grows downward.
const DELTAS: [(i64, i64); GRID_ACTIONS] = [(0, -1), (0, 1), (-1, 0), (1, 0), (0, 0)];

#[derive(Debug, Clone)]
pub struct Grid {
    width: i64,
    height: i64,
    /// Row-major wall mask.
    walls: Vec<bool>,
    /// Sorted list of free cells, the sampling domain.
    free: Vec<(i64, i64)>,
}

impl Grid {
    /// Builds a grid from a wall predicate over in-bounds cells.
    pub fn new(width: i64, height: i64, is_wall: impl Fn(i64, i64) -> bool) -> Self {
        let mut walls = vec![false; (width * height) as usize];
        let mut free = Vec::new();
        for y in 0..height {
            for x in 0..width {
                if is_wall(x, y) {
                    walls[(y * width + x) as usize] = true;
                } else {
                    free.push((x, y));
                }
            }
        }
        Grid {
            width,
            height,
            walls,
            free,
        }
    }

    pub fn is_free(&self, x: i64, y: i64) -> bool {
        x >= 0
            && x < self.width
            && y >= 0
            && y < self.height
            && !self.walls[(y * self.width + x) as usize]
    }

    /// Layout audit hook for tests; sampling goes through `uniform_free_cell`.
    #[cfg(test)]
    pub fn free_cells(&self) -> &[(i64, i64)] {
        &self.free
    }

    /// Applies a movement action; moves into walls or off the grid leave
    /// the cell unchanged.
    pub fn step_cell(&self, cell: (i64, i64), action: usize) -> (i64, i64) {
        let (dx, dy) = DELTAS[action];
        let target = (cell.0 + dx, cell.1 + dy);
        if self.is_free(target.0, target.1) {
            target
        } else {
            cell
        }
    }

    pub fn uniform_free_cell(&self, rng: &mut RvsRng) -> (i64, i64) {
        self.free[rng.gen_range(0..self.free.len())]
    }

    /// Breadth-first distances from `goal` to every reachable free cell.
    pub fn distances_to(&self, goal: (i64, i64)) -> Vec<Option<u32>> {
        let mut dist = vec![None; (self.width * self.height) as usize];
        if !self.is_free(goal.0, goal.1) {
            return dist;
        }
        let idx = |(x, y): (i64, i64)| (y * self.width + x) as usize;
        dist[idx(goal)] = Some(0);
        let mut queue = VecDeque::from([goal]);
        while let Some(cell) = queue.pop_front() {
            let d = dist[idx(cell)].expect("queued cells have distances");
            for action in [UP, DOWN, LEFT, RIGHT] {
                let next = self.step_cell(cell, action);
                if next != cell && dist[idx(next)].is_none() {
                    dist[idx(next)] = Some(d + 1);
                    queue.push_back(next);
                }
            }
        }
        dist
    }

    /// Greedy shortest-path action toward `goal` under precomputed
    /// distances; ties resolve in fixed action order, unreachable or
    /// already-there cells yield STAY.
    pub fn greedy_action(&self, cell: (i64, i64), distances: &[Option<u32>]) -> usize {
        let idx = |(x, y): (i64, i64)| (y * self.width + x) as usize;
        let mut best = (STAY, distances[idx(cell)]);
        if best.1 == Some(0) {
            return STAY;
        }
        for action in [UP, DOWN, LEFT, RIGHT] {
            let next = self.step_cell(cell, action);
            if next == cell {
                continue;
            }
            let d = distances[idx(next)];
            match (d, best.1) {
                (Some(nd), Some(bd)) if nd < bd => best = (action, d),
                (Some(_), None) => best = (action, d),
                _ => {}
            }
        }
        best.0
    }
}
