//! Self-contained Hermitian eigensolver (cyclic complex Jacobi).
//!
//! The toolkit deliberately avoids external LAPACK bindings: every spectral
//! quantity (operator norms, trace norms, unitary regularization) reduces to
//! the eigendecomposition of a Hermitian matrix, and the two-sided Jacobi
//! iteration is compact, numerically robust, and — crucially for trace norms
//! of near-singular differences — computes small eigenvalues of positive
//! semidefinite matrices with high *relative* accuracy.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::{Error, Result};

/// Maximal number of Jacobi sweeps before giving up.
const MAX_SWEEPS: usize = 64;

/// Eigendecomposition of a Hermitian matrix.
///
/// Returns the eigenvalues in ascending order and, if `with_vectors`, a
/// unitary matrix whose columns are the matching eigenvectors. The input is
/// symmetrized as `(M + M†)/2` before iterating; callers that need to reject
/// non-Hermitian input must check Hermiticity beforehand.
pub fn hermitian_eigen(
    m: &Array2<C64>,
    with_vectors: bool,
) -> Result<(Vec<f64>, Option<Array2<C64>>)> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if n == 0 {
        return Ok((Vec::new(), with_vectors.then(|| Array2::zeros((0, 0)))));
    }

    // Work on the Hermitian part; floating-point asymmetries in products like
    // M†M would otherwise stall the sweep.
    let mut a = Array2::from_shape_fn((n, n), |(i, j)| 0.5 * (m[(i, j)] + m[(j, i)].conj()));
    let mut v = with_vectors.then(|| Array2::from_diag_elem(n, C64::new(1.0, 0.0)));

    let fro = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let stop = 1e-14 * fro.max(f64::MIN_POSITIVE);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off <= stop {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, v.as_mut(), p, q);
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > stop {
        return Err(Error::NoConvergence {
            routine: "hermitian_eigen",
            iterations: MAX_SWEEPS,
        });
    }

    // Sort ascending, permuting eigenvector columns alongside.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = v.map(|v| {
        let mut sorted = Array2::zeros((n, n));
        for (dst, &src) in order.iter().enumerate() {
            for r in 0..n {
                sorted[(r, dst)] = v[(r, src)];
            }
        }
        sorted
    });
    Ok((values, vectors))
}

fn off_diagonal_norm(a: &Array2<C64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += a[(i, j)].norm_sqr();
        }
    }
    (2.0 * s).sqrt()
}

/// One complex Jacobi rotation zeroing the (p, q) entry of `a` in place.
///
/// The rotation is `J = D·G` with `D = diag(1, φ̄)` absorbing the phase
/// `φ = a_pq/|a_pq|` and `G` the classical real rotation for the resulting
/// real-symmetric 2×2 block. `a ← J† a J`, and the accumulated basis `v ← v·J`.
fn rotate(a: &mut Array2<C64>, v: Option<&mut Array2<C64>>, p: usize, q: usize) {
    let n = a.nrows();
    let g = a[(p, q)].norm();
    if g <= f64::MIN_POSITIVE {
        a[(p, q)] = C64::new(0.0, 0.0);
        a[(q, p)] = C64::new(0.0, 0.0);
        return;
    }
    let phi = a[(p, q)] / g;
    let alpha = a[(p, p)].re;
    let beta = a[(q, q)].re;
    let tau = (beta - alpha) / (2.0 * g);
    let t = if tau == 0.0 {
        1.0
    } else {
        tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    let jpp = C64::new(c, 0.0);
    let jpq = C64::new(s, 0.0);
    let jqp = -s * phi.conj();
    let jqq = c * phi.conj();

    // Columns: a ← a · J.
    for i in 0..n {
        let aip = a[(i, p)];
        let aiq = a[(i, q)];
        a[(i, p)] = aip * jpp + aiq * jqp;
        a[(i, q)] = aip * jpq + aiq * jqq;
    }
    // Rows: a ← J† · a.
    for i in 0..n {
        let api = a[(p, i)];
        let aqi = a[(q, i)];
        a[(p, i)] = jpp.conj() * api + jqp.conj() * aqi;
        a[(q, i)] = jpq.conj() * api + jqq.conj() * aqi;
    }
    // Clean the rotated pivot and keep the diagonal exactly real.
    a[(p, q)] = C64::new(0.0, 0.0);
    a[(q, p)] = C64::new(0.0, 0.0);
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);

    if let Some(v) = v {
        for i in 0..n {
            let vip = v[(i, p)];
            let viq = v[(i, q)];
            v[(i, p)] = vip * jpp + viq * jqp;
            v[(i, q)] = vip * jpq + viq * jqq;
        }
    }
}

/// Singular values of an arbitrary rectangular matrix, descending.
///
/// Computed as the square roots of the eigenvalues of `M†M` after projecting
/// onto an orthonormal basis of the column space: for the low-rank
/// differences that dominate this crate's workloads (post-measurement states
/// against ideal targets) this reduces a `d×d` problem to `rank×rank`.
pub fn singular_values(m: &Array2<C64>) -> Result<Vec<f64>> {
    let (rows, cols) = (m.nrows(), m.ncols());
    let k = rows.min(cols);
    if k == 0 {
        return Ok(Vec::new());
    }
    let scale = m.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    if scale == 0.0 {
        return Ok(vec![0.0; k]);
    }

    let q = orthonormal_columns(m, 1e-13 * scale);
    let r = q.len();
    let mut values = vec![0.0; k];
    if r == 0 {
        return Ok(values);
    }
    // B = Q† M (r×cols), then G = B B† (r×r, PSD) has eigenvalues σᵢ².
    let mut b = Array2::zeros((r, cols));
    for (i, qi) in q.iter().enumerate() {
        for j in 0..cols {
            let mut acc = C64::new(0.0, 0.0);
            for x in 0..rows {
                acc += qi[x].conj() * m[(x, j)];
            }
            b[(i, j)] = acc;
        }
    }
    let mut gram = Array2::zeros((r, r));
    for i in 0..r {
        for j in 0..r {
            let mut acc = C64::new(0.0, 0.0);
            for x in 0..cols {
                acc += b[(i, x)] * b[(j, x)].conj();
            }
            gram[(i, j)] = acc;
        }
    }
    let (eigs, _) = hermitian_eigen(&gram, false)?;
    for (slot, lambda) in values.iter_mut().zip(eigs.iter().rev()) {
        *slot = lambda.max(0.0).sqrt();
    }
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Modified Gram–Schmidt (with one re-orthogonalization pass) over the
/// columns of `m`; columns whose residual falls below `tol` are dropped.
fn orthonormal_columns(m: &Array2<C64>, tol: f64) -> Vec<Vec<C64>> {
    let (rows, cols) = (m.nrows(), m.ncols());
    let mut basis: Vec<Vec<C64>> = Vec::new();
    for j in 0..cols {
        let mut w: Vec<C64> = (0..rows).map(|i| m[(i, j)]).collect();
        for _ in 0..2 {
            for b in &basis {
                let mut overlap = C64::new(0.0, 0.0);
                for i in 0..rows {
                    overlap += b[i].conj() * w[i];
                }
                for i in 0..rows {
                    w[i] -= overlap * b[i];
                }
            }
        }
        let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > tol {
            for z in &mut w {
                *z /= norm;
            }
            basis.push(w);
        }
        if basis.len() == rows {
            break;
        }
    }
    basis
}
