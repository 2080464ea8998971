//! Small dense linear programs: minimize `cᵀx` subject to `A x ≥ b` with
//! free `x` of low dimension and many rows.
//!
//! The dual `max bᵀy s.t. Aᵀy = c, y ≥ 0` has one equality row per primal
//! variable, so a revised simplex on it keeps an `n × n` basis no matter
//! how many constraints there are. The primal solution is read off as the
//! simplex multipliers of the optimal dual basis.

const PRICE_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-9;
const MAX_ITERS: usize = 200_000;
/// Consecutive degenerate pivots before switching to Bland's rule.
const STALL_LIMIT: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Solution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Dual weight of each constraint row; positive entries mark the rows
    /// that bind at the optimum.
    pub duals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Outcome {
    Optimal(Solution),
    /// No finite minimum (dual infeasible): the primal is unbounded below
    /// or itself infeasible.
    NoFiniteOptimum,
    IterationLimit,
}

struct Dual<'a> {
    rows: &'a [Vec<f64>],
    n: usize,
}

impl Dual<'_> {
    /// `v · column j` without materializing the column.
    fn dot(&self, j: usize, art_sign: &[f64], v: &[f64]) -> f64 {
        if j < self.rows.len() {
            self.rows[j].iter().zip(v).map(|(a, b)| a * b).sum()
        } else {
            let i = j - self.rows.len();
            art_sign[i] * v[i]
        }
    }

    /// Column `j` of the dual equality system; columns past the structural
    /// ones are signed artificials.
    fn column(&self, j: usize, art_sign: &[f64]) -> Vec<f64> {
        if j < self.rows.len() {
            self.rows[j].clone()
        } else {
            let i = j - self.rows.len();
            let mut e = vec![0.0; self.n];
            e[i] = art_sign[i];
            e
        }
    }
}

fn invert(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[p][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, p);
        inv.swap(col, p);
        let d = a[col][col];
        for k in 0..n {
            a[col][k] /= d;
            inv[col][k] /= d;
        }
        for r in 0..n {
            if r != col && a[r][col] != 0.0 {
                let f = a[r][col];
                for k in 0..n {
                    a[r][k] -= f * a[col][k];
                    inv[r][k] -= f * inv[col][k];
                }
            }
        }
    }
    Some(inv)
}

/// Minimizes `c·x` subject to `rows[i]·x ≥ b[i]`.
pub(crate) fn minimize(c: &[f64], rows: &[Vec<f64>], b: &[f64]) -> Outcome {
    let n = c.len();
    let m = rows.len();
    debug_assert!(rows.iter().all(|r| r.len() == n) && b.len() == m);
    let dual = Dual { rows, n };
    let art_sign: Vec<f64> = c
        .iter()
        .map(|v| if *v < 0.0 { -1.0 } else { 1.0 })
        .collect();

    // dual basis columns and their values, starting from the artificials
    let mut basis: Vec<usize> = (m..m + n).collect();
    let mut values: Vec<f64> = c.iter().map(|v| v.abs()).collect();

    let phase1: Vec<f64> = (0..m + n).map(|j| if j < m { 0.0 } else { -1.0 }).collect();
    match run(&dual, &art_sign, &mut basis, &mut values, &phase1, c, m + n) {
        Some(true) => {}
        Some(false) => return Outcome::NoFiniteOptimum,
        None => return Outcome::IterationLimit,
    }
    let infeasibility: f64 = basis
        .iter()
        .zip(&values)
        .filter(|(j, _)| **j >= m)
        .map(|(_, v)| v)
        .sum();
    if infeasibility > 1e-9 {
        return Outcome::NoFiniteOptimum;
    }
    // pivot leftover (zero-level) artificials out of the basis
    for r in 0..n {
        if basis[r] < m {
            continue;
        }
        let Some(binv) = basis_inverse(&dual, &art_sign, &basis) else {
            return Outcome::NoFiniteOptimum;
        };
        let entering = (0..m).filter(|j| !basis.contains(j)).find(|&j| {
            let col = &rows[j];
            binv[r]
                .iter()
                .zip(col)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .abs()
                > PIVOT_TOL
        });
        match entering {
            Some(j) => basis[r] = j,
            None => return Outcome::NoFiniteOptimum,
        }
    }

    let phase2: Vec<f64> = b.to_vec();
    match run(&dual, &art_sign, &mut basis, &mut values, &phase2, c, m) {
        Some(true) => {}
        // an unbounded dual means an infeasible primal
        Some(false) => return Outcome::NoFiniteOptimum,
        None => return Outcome::IterationLimit,
    }
    let Some(binv) = basis_inverse(&dual, &art_sign, &basis) else {
        return Outcome::NoFiniteOptimum;
    };
    // simplex multipliers: x = B⁻ᵀ b_B
    let x: Vec<f64> = (0..n)
        .map(|k| (0..n).map(|i| b[basis[i]] * binv[i][k]).sum())
        .collect();
    let mut duals = vec![0.0; m];
    for (i, &j) in basis.iter().enumerate() {
        duals[j] = values[i];
    }
    let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Outcome::Optimal(Solution { x, value, duals })
}

fn basis_inverse(dual: &Dual<'_>, art_sign: &[f64], basis: &[usize]) -> Option<Vec<Vec<f64>>> {
    let n = dual.n;
    // B has the basis columns as columns
    let cols: Vec<Vec<f64>> = basis.iter().map(|&j| dual.column(j, art_sign)).collect();
    let bm: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|k| cols[k][i]).collect())
        .collect();
    invert(&bm)
}

/// Maximizes `obj·y` over the first `allowed` columns from the current
/// basic feasible solution. `Some(true)` at optimum, `Some(false)` if
/// unbounded, `None` on the iteration limit.
fn run(
    dual: &Dual<'_>,
    art_sign: &[f64],
    basis: &mut [usize],
    values: &mut [f64],
    obj: &[f64],
    rhs: &[f64],
    allowed: usize,
) -> Option<bool> {
    let n = dual.n;
    let mut stalled = 0;
    for _ in 0..MAX_ITERS {
        let binv = basis_inverse(dual, art_sign, basis)?;
        for i in 0..n {
            let v: f64 = binv[i].iter().zip(rhs).map(|(a, b)| a * b).sum();
            values[i] = v.max(0.0);
        }
        let pi: Vec<f64> = (0..n)
            .map(|k| (0..n).map(|i| obj[basis[i]] * binv[i][k]).sum())
            .collect();
        let bland = stalled >= STALL_LIMIT;
        let mut entering: Option<(usize, f64)> = None;
        for j in 0..allowed {
            if basis.contains(&j) {
                continue;
            }
            let d = obj[j] - dual.dot(j, art_sign, &pi);
            if d > PRICE_TOL {
                if bland {
                    entering = Some((j, d));
                    break;
                }
                if entering.is_none_or(|(_, best)| d > best) {
                    entering = Some((j, d));
                }
            }
        }
        let Some((j, _)) = entering else {
            return Some(true);
        };
        let col = dual.column(j, art_sign);
        let u: Vec<f64> = (0..n)
            .map(|i| binv[i].iter().zip(&col).map(|(a, b)| a * b).sum())
            .collect();
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..n {
            if u[i] > PIVOT_TOL {
                let ratio = values[i] / u[i];
                let better = match leave {
                    None => true,
                    Some((li, best)) => {
                        ratio < best - 1e-15 || (ratio <= best + 1e-15 && basis[i] < basis[li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((r, theta)) = leave else {
            return Some(false);
        };
        basis[r] = j;
        stalled = if theta <= 1e-15 { stalled + 1 } else { 0 };
    }
    None
}
