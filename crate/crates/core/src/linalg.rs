//! Dense exact-rational linear solving shared by the chain evaluator and
//! the indifference-system solver.

use num_traits::{One, Zero};

use crate::rational::Rat;

/// Solves `a x = b` for several right-hand sides by Gauss-Jordan
/// elimination over the rationals. Returns None when `a` is singular.
pub(crate) fn solve_dense(mut a: Vec<Vec<Rat>>, mut b: Vec<Vec<Rat>>) -> Option<Vec<Vec<Rat>>> {
    let k = a.len();
    if k == 0 {
        return Some(b);
    }
    let m = b[0].len();
    for col in 0..k {
        let pivot = (col..k).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let inv = Rat::one() / a[col][col].clone();
        for x in a[col].iter_mut().skip(col) {
            *x *= inv.clone();
        }
        for x in b[col].iter_mut() {
            *x *= inv.clone();
        }
        for r in 0..k {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in col..k {
                    let delta = &f * &a[col][c];
                    a[r][c] -= delta;
                }
                for j in 0..m {
                    let delta = &f * &b[col][j];
                    b[r][j] -= delta;
                }
            }
        }
    }
    Some(b)
}

/// Least-squares solution of an overdetermined or rank-deficient system
/// via the normal equations, with free coordinates pinned to zero. Returns
/// None only when the normal system is inconsistent, which cannot happen
/// for genuine normal equations.
pub(crate) fn solve_least_squares(j: &[Vec<Rat>], f: &[Rat]) -> Option<Vec<Rat>> {
    let rows = j.len();
    if rows == 0 {
        return Some(Vec::new());
    }
    let cols = j[0].len();
    let mut a = vec![vec![Rat::zero(); cols]; cols];
    let mut b = vec![Rat::zero(); cols];
    for r in 0..rows {
        for c1 in 0..cols {
            if j[r][c1].is_zero() {
                continue;
            }
            for c2 in c1..cols {
                let prod = &j[r][c1] * &j[r][c2];
                a[c1][c2] += prod;
            }
            b[c1] -= &j[r][c1] * &f[r];
        }
    }
    for c1 in 0..cols {
        for c2 in 0..c1 {
            a[c1][c2] = a[c2][c1].clone();
        }
    }
    solve_rank_tolerant(a, b)
}

/// Gauss-Jordan with column skipping: unpivoted columns become zero in the
/// solution. None when a zero row has a nonzero right-hand side.
pub(crate) fn solve_rank_tolerant(mut a: Vec<Vec<Rat>>, mut b: Vec<Rat>) -> Option<Vec<Rat>> {
    let n = a.len();
    let mut pivot_of_col: Vec<Option<usize>> = vec![None; n];
    let mut row = 0;
    for col in 0..n {
        let Some(p) = (row..n).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(row, p);
        b.swap(row, p);
        let inv = Rat::one() / a[row][col].clone();
        for x in a[row].iter_mut() {
            *x *= inv.clone();
        }
        b[row] *= inv;
        for r in 0..n {
            if r != row && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in 0..n {
                    let delta = &f * &a[row][c];
                    a[r][c] -= delta;
                }
                let delta = &f * &b[row];
                b[r] -= delta;
            }
        }
        pivot_of_col[col] = Some(row);
        row += 1;
        if row == n {
            break;
        }
    }
    for r in row..n {
        if a[r].iter().all(|x| x.is_zero()) && !b[r].is_zero() {
            return None;
        }
    }
    let mut x = vec![Rat::zero(); n];
    for (col, pivot) in pivot_of_col.iter().enumerate() {
        if let Some(r) = pivot {
            x[col] = b[*r].clone();
        }
    }
    Some(x)
}
