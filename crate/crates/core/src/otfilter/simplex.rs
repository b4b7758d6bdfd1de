//! Transportation simplex (MODI) for dense balanced problems.

use crate::error::{Error, Result};

const EPS_REDUCED: f64 = 1e-12;

/// A basis is a spanning tree over `m` row nodes and `n` column nodes.
struct Basis {
    m: usize,
    n: usize,
    cells: Vec<(usize, usize)>,
    in_basis: Vec<bool>,
}

impl Basis {
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        // node ids: rows 0..m, columns m..m+n; payload is the cell index
        let mut adj = vec![Vec::new(); self.m + self.n];
        for (idx, &(i, j)) in self.cells.iter().enumerate() {
            adj[i].push((self.m + j, idx));
            adj[self.m + j].push((i, idx));
        }
        adj
    }
}

/// Northwest-corner start; always produces exactly `m + n - 1` basic cells.
fn northwest(a: &[f64], b: &[f64], flow: &mut [f64]) -> Basis {
    let (m, n) = (a.len(), b.len());
    let mut ra = a.to_vec();
    let mut rb = b.to_vec();
    let mut cells = Vec::with_capacity(m + n - 1);
    let mut in_basis = vec![false; m * n];
    let (mut i, mut j) = (0, 0);
    loop {
        let x = ra[i].min(rb[j]).max(0.0);
        flow[i * n + j] = x;
        cells.push((i, j));
        in_basis[i * n + j] = true;
        if i == m - 1 && j == n - 1 {
            break;
        }
        ra[i] -= x;
        rb[j] -= x;
        if j == n - 1 || (i < m - 1 && ra[i] <= rb[j]) {
            i += 1;
        } else {
            j += 1;
        }
    }
    Basis {
        m,
        n,
        cells,
        in_basis,
    }
}

fn potentials(basis: &Basis, cost: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = (basis.m, basis.n);
    let adj = basis.adjacency();
    let mut pot = vec![f64::NAN; m + n];
    pot[0] = 0.0;
    let mut stack = vec![0usize];
    while let Some(node) = stack.pop() {
        for &(next, cell) in &adj[node] {
            if pot[next].is_nan() {
                let (i, j) = basis.cells[cell];
                // c_ij = u_i + v_j
                pot[next] = cost[i * n + j] - pot[node];
                stack.push(next);
            }
        }
    }
    (pot[..m].to_vec(), pot[m..].to_vec())
}

/// Cells on the tree path from column node `j` to row node `i`, in order from `j`.
fn tree_path(basis: &Basis, i: usize, j: usize) -> Vec<usize> {
    let m = basis.m;
    let adj = basis.adjacency();
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; m + basis.n];
    let mut seen = vec![false; m + basis.n];
    seen[i] = true;
    let mut stack = vec![i];
    while let Some(node) = stack.pop() {
        if node == m + j {
            break;
        }
        for &(next, cell) in &adj[node] {
            if !seen[next] {
                seen[next] = true;
                parent[next] = Some((node, cell));
                stack.push(next);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = m + j;
    while node != i {
        let (prev, cell) = parent[node].expect("basis is a spanning tree");
        path.push(cell);
        node = prev;
    }
    path
}

/// Solves `min Σ c_ij x_ij` subject to row sums `a` and column sums `b`.
///
/// Returns the row-major optimal flow. Starts from the northwest-corner plan,
/// so when every reduced cost is already non-negative (for instance with a
/// constant cost matrix) that plan is returned unchanged.
pub fn solve(a: &[f64], b: &[f64], cost: &[f64]) -> Result<Vec<f64>> {
    let (m, n) = (a.len(), b.len());
    if m == 0 || n == 0 {
        return Err(Error::Infeasible("empty marginal".into()));
    }
    if cost.len() != m * n {
        return Err(Error::DimensionMismatch {
            expected: m * n,
            got: cost.len(),
        });
    }
    let mut flow = vec![0.0; m * n];
    let mut basis = northwest(a, b, &mut flow);
    let scale = cost.iter().fold(1.0f64, |s, c| s.max(c.abs()));
    let max_iter = 50 * (m + n) * (m + n) + 1000;
    let mut degenerate_run = 0usize;

    for _ in 0..max_iter {
        let (u, v) = potentials(&basis, cost);
        // Dantzig's rule, falling back to Bland's after a long run of degenerate pivots.
        let bland = degenerate_run > m + n;
        let mut entering: Option<(usize, usize)> = None;
        let mut best = -EPS_REDUCED * scale;
        'scan: for i in 0..m {
            for j in 0..n {
                if basis.in_basis[i * n + j] {
                    continue;
                }
                let r = cost[i * n + j] - u[i] - v[j];
                if r < best {
                    entering = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = r;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            return Ok(flow);
        };

        let path = tree_path(&basis, ei, ej);
        // Path cells alternate −, +, −, ... starting next to the entering column.
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for (pos, &cell) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let (ci, cj) = basis.cells[cell];
                let x = flow[ci * n + cj];
                let better = x < theta
                    || (x == theta && bland && basis.cells[cell] < basis.cells[leave]);
                if better {
                    theta = x;
                    leave = cell;
                }
            }
        }
        degenerate_run = if theta <= 0.0 { degenerate_run + 1 } else { 0 };
        for (pos, &cell) in path.iter().enumerate() {
            let (ci, cj) = basis.cells[cell];
            let x = &mut flow[ci * n + cj];
            if pos % 2 == 0 {
                *x = (*x - theta).max(0.0);
            } else {
                *x += theta;
            }
        }
        let (li, lj) = basis.cells[leave];
        flow[li * n + lj] = 0.0;
        flow[ei * n + ej] = theta;
        basis.in_basis[li * n + lj] = false;
        basis.in_basis[ei * n + ej] = true;
        basis.cells[leave] = (ei, ej);
    }
    Err(Error::Infeasible("transportation simplex did not converge".into()))
}
