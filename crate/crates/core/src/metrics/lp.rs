//! Dense two-phase tableau simplex with Bland's rule. Small problems only;
//! it backs the brute-force EMD oracle.

use alloc::vec;
use alloc::vec::Vec;

const TOL: f64 = 1e-12;

/// Minimizes `c.x` subject to `A x = b`, `x >= 0`, with `b >= 0`.
/// Returns `None` when the problem is infeasible.
pub(crate) fn minimize(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<(f64, Vec<f64>)> {
    let m = a.len();
    let n = c.len();
    let width = n + m + 1;
    // Tableau rows: constraints; columns: x, artificials, rhs.
    let mut t: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row = vec![0.0; width];
            row[..n].copy_from_slice(&a[i]);
            row[n + i] = 1.0;
            row[width - 1] = b[i];
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Phase I: minimize the sum of artificials.
    let mut phase1 = vec![0.0; n + m];
    for cost in &mut phase1[n..] {
        *cost = 1.0;
    }
    run(&mut t, &mut basis, &phase1, n + m);
    let infeasibility: f64 = basis
        .iter()
        .enumerate()
        .filter(|&(_, &j)| j >= n)
        .map(|(i, _)| t[i][width - 1])
        .sum();
    if infeasibility > 1e-9 {
        return None;
    }
    // Drive zero-level artificials out of the basis, dropping redundant rows.
    let mut i = 0;
    while i < t.len() {
        if basis[i] >= n {
            match (0..n).find(|&j| t[i][j].abs() > TOL) {
                Some(j) => pivot(&mut t, &mut basis, i, j),
                None => {
                    t.remove(i);
                    basis.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }

    // Phase II over the original columns only.
    let mut full = vec![0.0; n + m];
    full[..n].copy_from_slice(c);
    run(&mut t, &mut basis, &full, n);

    let mut x = vec![0.0; n];
    for (i, &j) in basis.iter().enumerate() {
        if j < n {
            x[j] = t[i][width - 1];
        }
    }
    let value = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
    Some((value, x))
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    let pivot_row = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i == row {
            continue;
        }
        let f = r[col];
        if f != 0.0 {
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
    }
    basis[row] = col;
}

/// Simplex iterations with Bland's rule; columns `>= allowed` never enter.
fn run(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: usize) {
    let width = t.first().map_or(0, |r| r.len());
    let rhs = width - 1;
    loop {
        // Reduced cost of column j: c_j - c_B B^-1 A_j.
        let entering = (0..allowed).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let z: f64 = basis.iter().enumerate().map(|(i, &bj)| cost[bj] * t[i][j]).sum();
            cost[j] - z < -TOL
        });
        let Some(col) = entering else { return };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..t.len() {
            if t[i][col] > TOL {
                let ratio = t[i][rhs] / t[i][col];
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - TOL || (ratio <= lr + TOL && basis[i] < basis[li]) {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
        }
        match leave {
            Some((row, _)) => pivot(t, basis, row, col),
            // Unbounded; cannot happen for bounded transport polytopes.
            None => return,
        }
    }
}
