//! Earth mover's distance between pixel distributions.
//!
//! [`emd`] solves the transportation problem exactly with a tree-based
//! primal simplex (MODI potentials, block pricing). Mass shared by both
//! distributions at a pixel stays in place, which is optimal for a metric
//! ground cost, so only the surplus and deficit pixels enter the solver.
//! [`emd_bruteforce`] hands the full, uncancelled problem to a dense LP
//! simplex and serves as the reference.

use alloc::vec;
use alloc::vec::Vec;

use super::lp;
use crate::pipeline::area_resample;
use crate::{Error, PixelDistribution, Result};

pub const DEFAULT_GRID_LIMIT: usize = 32;
pub const BRUTEFORCE_MAX_CELLS: usize = 16;

const REDUCED_COST_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 5_000_000;

/// Grid the transport problem is solved on: unchanged when the area fits in
/// `limit^2`, otherwise scaled so the longer side equals `limit`.
pub fn emd_solve_grid(height: usize, width: usize, limit: usize) -> (usize, usize) {
    if height * width <= limit * limit {
        return (height, width);
    }
    let scale = limit as f64 / height.max(width) as f64;
    let rh = libm::round(height as f64 * scale).max(1.0) as usize;
    let rw = libm::round(width as f64 * scale).max(1.0) as usize;
    (rh.min(limit), rw.min(limit))
}

fn shrink(d: &PixelDistribution, h: usize, w: usize) -> Result<Vec<f64>> {
    if d.shape() == (h, w) {
        return Ok(d.values().to_vec());
    }
    let small = area_resample(d.grid(), h, w)?;
    Ok(PixelDistribution::normalized(small)?.into_grid().into_values())
}

fn distance(a: usize, b: usize, width: usize) -> f64 {
    let dr = (a / width) as f64 - (b / width) as f64;
    let dc = (a % width) as f64 - (b % width) as f64;
    libm::sqrt(dr * dr + dc * dc)
}

/// Exact EMD in pixels of the solve grid (see [`emd_solve_grid`]).
pub fn emd(p: &PixelDistribution, g: &PixelDistribution, grid_limit: usize) -> Result<f64> {
    p.grid().check_same_shape(g.grid())?;
    if grid_limit == 0 {
        return Err(Error::InvalidParameter("grid_limit must be positive"));
    }
    let (h, w) = emd_solve_grid(p.shape().0, p.shape().1, grid_limit);
    let a = shrink(p, h, w)?;
    let b = shrink(g, h, w)?;

    let mut sources = Vec::new();
    let mut supply = Vec::new();
    let mut sinks = Vec::new();
    let mut demand = Vec::new();
    for (i, (&x, &y)) in a.iter().zip(&b).enumerate() {
        let shared = x.min(y);
        if x - shared > 0.0 {
            sources.push(i);
            supply.push(x - shared);
        }
        if y - shared > 0.0 {
            sinks.push(i);
            demand.push(y - shared);
        }
    }
    if sources.is_empty() || sinks.is_empty() {
        return Ok(0.0);
    }
    let cost: Vec<f64> = sources
        .iter()
        .flat_map(|&s| sinks.iter().map(move |&t| distance(s, t, w)))
        .collect();
    transport(&supply, &demand, &cost)
}

/// Reference EMD via a dense LP over every (source pixel, sink pixel) pair.
pub fn emd_bruteforce(p: &PixelDistribution, g: &PixelDistribution) -> Result<f64> {
    p.grid().check_same_shape(g.grid())?;
    let n = p.len();
    if n > BRUTEFORCE_MAX_CELLS {
        return Err(Error::TooLarge {
            cells: n,
            limit: BRUTEFORCE_MAX_CELLS,
        });
    }
    let width = p.shape().1;
    let vars = n * n;
    let cost: Vec<f64> = (0..vars).map(|k| distance(k / n, k % n, width)).collect();
    let mut rows = Vec::with_capacity(2 * n - 1);
    let mut rhs = Vec::with_capacity(2 * n - 1);
    for i in 0..n {
        let mut row = vec![0.0; vars];
        for j in 0..n {
            row[i * n + j] = 1.0;
        }
        rows.push(row);
        rhs.push(p.values()[i]);
    }
    // The last column constraint is implied by total mass.
    for j in 0..n - 1 {
        let mut row = vec![0.0; vars];
        for i in 0..n {
            row[i * n + j] = 1.0;
        }
        rows.push(row);
        rhs.push(g.values()[j]);
    }
    let (value, _) = lp::minimize(&rows, &rhs, &cost)
        .ok_or(Error::InvalidParameter("transport problem infeasible"))?;
    Ok(value)
}

/// Basic cell of the transportation tableau.
#[derive(Clone, Copy)]
struct Cell {
    row: usize,
    col: usize,
    flow: f64,
}

/// Primal transportation simplex. `cost` is row-major `supply.len() x demand.len()`.
fn transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<f64> {
    let (m, n) = (supply.len(), demand.len());
    let nodes = m + n;

    // North-west corner start: a staircase of m + n - 1 cells, always a tree.
    let mut basis: Vec<Cell> = Vec::with_capacity(nodes - 1);
    {
        let (mut a, mut b) = (supply[0], demand[0]);
        let (mut i, mut j) = (0, 0);
        loop {
            let x = a.min(b).max(0.0);
            basis.push(Cell { row: i, col: j, flow: x });
            a -= x;
            b -= x;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if j == n - 1 || (i < m - 1 && a <= b) {
                i += 1;
                a = supply[i];
            } else {
                j += 1;
                b = demand[j];
            }
        }
    }
    debug_assert_eq!(basis.len(), nodes - 1);

    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    for (k, c) in basis.iter().enumerate() {
        adjacency[c.row].push(k);
        adjacency[m + c.col].push(k);
    }

    let mut potential = vec![0.0; nodes];
    let mut parent_edge = vec![usize::MAX; nodes];
    let mut depth = vec![0usize; nodes];
    let mut queue = Vec::with_capacity(nodes);
    let total = m * n;
    let block = (libm::sqrt(total as f64) as usize).max(32).min(total);
    let mut cursor = 0usize;

    for _ in 0..MAX_PIVOTS {
        // Potentials u (rows) and v (columns) with u_0 = 0, over the basis tree.
        parent_edge.fill(usize::MAX);
        queue.clear();
        queue.push(0usize);
        potential[0] = 0.0;
        depth[0] = 0;
        let mut head = 0;
        while head < queue.len() {
            let node = queue[head];
            head += 1;
            for &k in &adjacency[node] {
                if k == parent_edge[node] {
                    continue;
                }
                let c = basis[k];
                let other = if node < m { m + c.col } else { c.row };
                parent_edge[other] = k;
                depth[other] = depth[node] + 1;
                potential[other] = cost[c.row * n + c.col] - potential[node];
                queue.push(other);
            }
        }
        debug_assert_eq!(queue.len(), nodes, "basis is not a spanning tree");

        // Block pricing.
        let mut best: Option<(usize, f64)> = None;
        let mut scanned = 0;
        while scanned < total {
            let end = (scanned + block).min(total);
            for _ in scanned..end {
                let idx = cursor;
                cursor += 1;
                if cursor == total {
                    cursor = 0;
                }
                let (i, j) = (idx / n, idx % n);
                let rc = cost[idx] - potential[i] - potential[m + j];
                if rc < -REDUCED_COST_TOL && best.is_none_or(|(_, b)| rc < b) {
                    best = Some((idx, rc));
                }
            }
            scanned = end;
            if best.is_some() {
                break;
            }
        }
        let Some((entering, _)) = best else {
            return Ok(basis
                .iter()
                .map(|c| c.flow * cost[c.row * n + c.col])
                .sum());
        };
        let (er, ec) = (entering / n, entering % n);

        // Tree path from the entering column back to the entering row.
        let mut from_col = Vec::new();
        let mut from_row = Vec::new();
        let (mut a, mut b) = (er, m + ec);
        let step = |node: usize, path: &mut Vec<usize>| {
            let k = parent_edge[node];
            path.push(k);
            let c = basis[k];
            if node < m {
                m + c.col
            } else {
                c.row
            }
        };
        while depth[b] > depth[a] {
            b = step(b, &mut from_col);
        }
        while depth[a] > depth[b] {
            a = step(a, &mut from_row);
        }
        while a != b {
            b = step(b, &mut from_col);
            a = step(a, &mut from_row);
        }
        from_row.reverse();
        let cycle: Vec<usize> = from_col.into_iter().chain(from_row).collect();

        // Even positions lose flow, odd positions gain it.
        let mut leaving = cycle[0];
        let mut theta = f64::INFINITY;
        for &k in cycle.iter().step_by(2) {
            if basis[k].flow < theta {
                theta = basis[k].flow;
                leaving = k;
            }
        }
        for (pos, &k) in cycle.iter().enumerate() {
            if pos % 2 == 0 {
                basis[k].flow = (basis[k].flow - theta).max(0.0);
            } else {
                basis[k].flow += theta;
            }
        }

        let old = basis[leaving];
        adjacency[old.row].retain(|&k| k != leaving);
        adjacency[m + old.col].retain(|&k| k != leaving);
        basis[leaving] = Cell {
            row: er,
            col: ec,
            flow: theta,
        };
        adjacency[er].push(leaving);
        adjacency[m + ec].push(leaving);
    }
    Err(Error::InvalidParameter("transport solver exceeded its pivot budget"))
}
