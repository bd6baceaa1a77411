//! Small dense linear-algebra routines used to audit fusion operators.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// LU factorisation with partial pivoting, packed in place.
struct Lu {
    lu: Array2<f64>,
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

fn lu_decompose(a: ArrayView2<'_, f64>) -> Lu {
    let n = a.nrows();
    let mut lu = a.to_owned();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    let mut singular = false;
    for k in 0..n {
        let (piv, max) = (k..n)
            .map(|r| (r, lu[[r, k]].abs()))
            .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if max == 0.0 {
            singular = true;
            continue;
        }
        if piv != k {
            for c in 0..n {
                lu.swap([k, c], [piv, c]);
            }
            perm.swap(k, piv);
            sign = -sign;
        }
        let d = lu[[k, k]];
        for r in k + 1..n {
            let f = lu[[r, k]] / d;
            lu[[r, k]] = f;
            if f != 0.0 {
                for c in k + 1..n {
                    lu[[r, c]] -= f * lu[[k, c]];
                }
            }
        }
    }
    Lu {
        lu,
        perm,
        sign,
        singular,
    }
}

pub fn determinant(a: ArrayView2<'_, f64>) -> f64 {
    assert_eq!(a.nrows(), a.ncols(), "determinant of a non-square matrix");
    let f = lu_decompose(a);
    if f.singular {
        return 0.0;
    }
    (0..a.nrows()).map(|i| f.lu[[i, i]]).product::<f64>() * f.sign
}

/// Solve `A X = B` for square `A`.
pub fn solve(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::shape(format!(
            "solve needs square A and matching B, got {:?} and {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let f = lu_decompose(a);
    if f.singular {
        return Err(Error::Numeric("singular matrix".into()));
    }
    let mut x = Array2::zeros(b.dim());
    for col in 0..b.ncols() {
        let mut y: Vec<f64> = f.perm.iter().map(|&p| b[[p, col]]).collect();
        for i in 0..n {
            for k in 0..i {
                y[i] -= f.lu[[i, k]] * y[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= f.lu[[i, k]] * y[k];
            }
            y[i] /= f.lu[[i, i]];
        }
        for i in 0..n {
            x[[i, col]] = y[i];
        }
    }
    Ok(x)
}

/// Singular values by one-sided Jacobi rotations, in descending order.
pub fn singular_values(a: ArrayView2<'_, f64>) -> Vec<f64> {
    let mut u = a.to_owned();
    let n = u.ncols();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for r in 0..u.nrows() {
                    alpha += u[[r, p]] * u[[r, p]];
                    beta += u[[r, q]] * u[[r, q]];
                    gamma += u[[r, p]] * u[[r, q]];
                }
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..u.nrows() {
                    let up = u[[r, p]];
                    let uq = u[[r, q]];
                    u[[r, p]] = c * up - s * uq;
                    u[[r, q]] = s * up + c * uq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = u
        .columns()
        .into_iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}
