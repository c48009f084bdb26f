//! Dense linear assignment (Jonker–Volgenant shortest augmenting path).

use crate::error::{Error, Result};
use crate::numeric::exact_sum;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Column assigned to each row.
    pub row_to_col: Vec<usize>,
    pub total_cost: f64,
}

/// Minimum-cost perfect matching for a square, row-major cost matrix.
pub fn solve_assignment(cost: &[f64], n: usize) -> Result<Assignment> {
    if n == 0 {
        return Err(Error::Validation("empty assignment problem".into()));
    }
    if cost.len() != n * n {
        return Err(Error::DimensionMismatch {
            left: n * n,
            right: cost.len(),
        });
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Validation("non-finite assignment cost".into()));
    }
    let row_to_col = lapjv(cost, n);
    let total_cost = exact_sum(row_to_col.iter().enumerate().map(|(i, &j)| cost[i * n + j]));
    Ok(Assignment {
        row_to_col,
        total_cost,
    })
}

fn lapjv(cost: &[f64], n: usize) -> Vec<usize> {
    let c = |i: usize, j: usize| cost[i * n + j];
    let mut x = vec![NONE; n]; // row -> column
    let mut y = vec![NONE; n]; // column -> row
    let mut v = vec![0.0f64; n];
    let mut matches = vec![0usize; n];

    // column reduction
    for j in (0..n).rev() {
        let (mut imin, mut min) = (0, c(0, j));
        for i in 1..n {
            if c(i, j) < min {
                min = c(i, j);
                imin = i;
            }
        }
        v[j] = min;
        matches[imin] += 1;
        if matches[imin] == 1 {
            x[imin] = j;
            y[j] = imin;
        } else if v[j] < v[x[imin]] {
            let j1 = x[imin];
            x[imin] = j;
            y[j] = imin;
            y[j1] = NONE;
        } else {
            y[j] = NONE;
        }
    }

    // reduction transfer
    let mut free = Vec::new();
    for i in 0..n {
        match matches[i] {
            0 => free.push(i),
            1 => {
                let j1 = x[i];
                let min = (0..n)
                    .filter(|&j| j != j1)
                    .map(|j| c(i, j) - v[j])
                    .fold(f64::INFINITY, f64::min);
                if min.is_finite() {
                    v[j1] -= min;
                }
            }
            _ => {}
        }
    }
    // augmenting row reduction, two passes with a work budget
    for _ in 0..2 {
        if n < 2 {
            break;
        }
        let todo = std::mem::take(&mut free);
        let mut budget = 16 * n;
        for &start in &todo {
            let mut i = start;
            loop {
                if budget == 0 {
                    free.push(i);
                    break;
                }
                budget -= 1;
                let (mut umin, mut usub) = (c(i, 0) - v[0], f64::INFINITY);
                let (mut j1, mut j2) = (0, NONE);
                for (j, &vj) in v.iter().enumerate().skip(1) {
                    let h = c(i, j) - vj;
                    if h < usub {
                        if h >= umin {
                            usub = h;
                            j2 = j;
                        } else {
                            usub = umin;
                            umin = h;
                            j2 = j1;
                            j1 = j;
                        }
                    }
                }
                let mut i0 = y[j1];
                if umin < usub {
                    v[j1] -= usub - umin;
                } else if i0 != NONE {
                    j1 = j2;
                    i0 = y[j2];
                }
                x[i] = j1;
                y[j1] = i;
                if i0 != NONE {
                    x[i0] = NONE;
                    if umin < usub {
                        i = i0;
                        continue;
                    }
                    free.push(i0);
                }
                break;
            }
        }
    }

    // shortest augmenting paths for the remaining free rows
    let mut d = vec![0.0f64; n];
    let mut pred = vec![0usize; n];
    let mut collist: Vec<usize> = (0..n).collect();
    for &freerow in &free {
        for j in 0..n {
            d[j] = c(freerow, j) - v[j];
            pred[j] = freerow;
            collist[j] = j;
        }
        let (mut low, mut up) = (0usize, 0usize);
        let mut ready = 0usize;
        let mut min = 0.0;
        let endofpath;
        'search: loop {
            if up == low {
                ready = low;
                min = d[collist[up]];
                up += 1;
                let start = up;
                for k in start..n {
                    let j = collist[k];
                    let h = d[j];
                    if h <= min {
                        if h < min {
                            up = low;
                            min = h;
                        }
                        collist[k] = collist[up];
                        collist[up] = j;
                        up += 1;
                    }
                }
                for &j in &collist[low..up] {
                    if y[j] == NONE {
                        endofpath = j;
                        break 'search;
                    }
                }
            }
            let j1 = collist[low];
            low += 1;
            let i = y[j1];
            let h = c(i, j1) - v[j1] - min;
            let start = up;
            for k in start..n {
                let j = collist[k];
                let v2 = c(i, j) - v[j] - h;
                if v2 < d[j] {
                    pred[j] = i;
                    if v2 == min {
                        if y[j] == NONE {
                            endofpath = j;
                            break 'search;
                        }
                        collist[k] = collist[up];
                        collist[up] = j;
                        up += 1;
                    }
                    d[j] = v2;
                }
            }
        }
        // price update for columns whose distance is final
        for &j in &collist[..ready] {
            v[j] += d[j] - min;
        }
        let mut j = endofpath;
        loop {
            let i = pred[j];
            y[j] = i;
            let next = x[i];
            x[i] = j;
            if i == freerow {
                break;
            }
            j = next;
        }
    }
    x
}
