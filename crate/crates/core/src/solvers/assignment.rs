use ndarray::{Array1, Array2, ArrayView2};

use super::{DualPotentials, SolveResult, TransportPlan};
use crate::error::{ensure, Result};
use crate::measures::CostMatrix;

/// Shortest augmenting path Hungarian algorithm on a square matrix.
///
/// Returns `(assignment, u, v)` where row `i` is matched to column
/// `assignment[i]` and `u_i + v_j ≤ C_ij` with equality on matched cells.
pub fn hungarian(cost: ArrayView2<'_, f64>) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "hungarian needs a square matrix");
    // 1-based bookkeeping, column 0 is the virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    (assignment, u[1..].to_vec(), v[1..].to_vec())
}

/// Exact balanced OT between two uniform measures of the same size `m`,
/// i.e. an optimal assignment scaled by `1/m`.
pub fn exact_balanced_ot(c: &CostMatrix) -> Result<SolveResult> {
    let (n, p) = c.shape();
    ensure(n == p, || format!("exact_balanced_ot needs a square cost matrix, got {n}x{p}"))?;
    let (sigma, u, v) = hungarian(c.entries());
    let w = 1.0 / n as f64;
    let mut plan = Array2::zeros((n, n));
    let mut total = 0.0;
    for (i, &j) in sigma.iter().enumerate() {
        plan[[i, j]] = w;
        total += c.entries()[[i, j]];
    }
    Ok(SolveResult {
        cost: total * w,
        plan: TransportPlan::new(plan),
        potentials: DualPotentials {
            f: Array1::from(u),
            g: Array1::from(v),
        },
        iterations: n,
        converged: true,
        epsilon: 0.0,
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Exact balanced OT between uniform probability measures of sizes `n` and
/// `p`: each support point is replicated up to `lcm(n, p)` copies of equal
/// mass, which turns the problem into an assignment.
pub fn exact_uniform_ot(c: &CostMatrix) -> Result<SolveResult> {
    let (n, p) = c.shape();
    let size = n / gcd(n, p) * p;
    ensure(size <= 2000, || format!("replicated assignment of size {size} is too large"))?;
    let (rep_r, rep_c) = (size / n, size / p);
    let ce = c.entries();
    let big = Array2::from_shape_fn((size, size), |(r, s)| ce[[r / rep_r, s / rep_c]]);
    let (sigma, u, v) = hungarian(big.view());
    let w = 1.0 / size as f64;
    let mut plan = Array2::zeros((n, p));
    let mut total = 0.0;
    for (r, &s) in sigma.iter().enumerate() {
        plan[[r / rep_r, s / rep_c]] += w;
        total += big[[r, s]];
    }
    // copies of one point share their potential at optimality; keep the first
    let f = Array1::from_shape_fn(n, |i| u[i * rep_r]);
    let g = Array1::from_shape_fn(p, |j| v[j * rep_c]);
    Ok(SolveResult {
        cost: total * w,
        plan: TransportPlan::new(plan),
        potentials: DualPotentials { f, g },
        iterations: size,
        converged: true,
        epsilon: 0.0,
    })
}
