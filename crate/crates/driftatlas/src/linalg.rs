//! Small dense linear-algebra kernels shared across the crate.
//!
//! Everything here is deliberately dependency-free: a pairwise (tree)
//! summation used for all kernel accumulations, a cyclic Jacobi eigensolver
//! for symmetric matrices (the dense route that closed-form eigensystems are
//! checked against, and the workhorse behind the PCA baseline), a
//! partial-pivot linear solve, and modified Gram-Schmidt with a drop rule.
//! Dimensions in this crate stay small (n ≤ a few hundred), so O(n³) direct
//! methods are the right tool.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::scalar::Real;

/// Leaf size below which pairwise summation runs serially.
const PAIRWISE_LEAF: usize = 64;

/// Sums `f(0) + f(1) + ... + f(n-1)` by recursive halving.
///
/// Tree summation keeps the rounding error growth at O(log n) instead of
/// O(n), which matters for kernel sums over large samples where many terms
/// are orders of magnitude apart.
pub fn pairwise_sum<F: Real>(n: usize, f: impl Fn(usize) -> F + Copy) -> F {
    fn go<F: Real>(lo: usize, hi: usize, f: impl Fn(usize) -> F + Copy) -> F {
        if hi - lo <= PAIRWISE_LEAF {
            let mut acc = F::zero();
            for k in lo..hi {
                acc += f(k);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            go(lo, mid, f) + go(mid, hi, f)
        }
    }
    if n == 0 {
        F::zero()
    } else {
        go(0, n, f)
    }
}

/// Pairwise summation of `n` rows of width `width`; `emit(k, row)` fills the
/// k-th term into `row`. Returns the elementwise sum.
pub fn pairwise_sum_rows<F: Real>(
    n: usize,
    width: usize,
    emit: impl Fn(usize, &mut [F]) + Copy,
) -> Vec<F> {
    fn go<F: Real>(
        lo: usize,
        hi: usize,
        width: usize,
        emit: impl Fn(usize, &mut [F]) + Copy,
    ) -> Vec<F> {
        if hi - lo <= PAIRWISE_LEAF {
            let mut acc = vec![F::zero(); width];
            let mut row = vec![F::zero(); width];
            for k in lo..hi {
                emit(k, &mut row);
                for (a, r) in acc.iter_mut().zip(&row) {
                    *a += *r;
                }
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            let mut acc = go(lo, mid, width, emit);
            let right = go(mid, hi, width, emit);
            for (a, r) in acc.iter_mut().zip(&right) {
                *a += *r;
            }
            acc
        }
    }
    if n == 0 {
        vec![F::zero(); width]
    } else {
        go(0, n, width, emit)
    }
}

/// Euclidean norm of a vector.
pub fn norm<F: Real>(v: &ArrayView1<F>) -> F {
    v.dot(v).sqrt()
}

/// Euclidean distance between two points.
pub fn distance<F: Real>(a: &ArrayView1<F>, b: &ArrayView1<F>) -> F {
    let mut acc = F::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        let d = *x - *y;
        acc += d * d;
    }
    acc.sqrt()
}

/// Returns `v / |v|`, or `None` when `|v|` underflows to zero.
pub fn unit<F: Real>(v: &ArrayView1<F>) -> Option<Array1<F>> {
    let n = norm(v);
    if n > F::zero() {
        Some(v.mapv(|x| x / n))
    } else {
        None
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(values, vectors)` with eigenvalues ascending and eigenvectors in
/// the matching columns. Accuracy is at machine-epsilon level for the modest
/// dimensions used here, which is what makes this the reference ("dense")
/// route for checking closed-form spectra.
pub fn eigh_jacobi<F: Real>(a: &ArrayView2<F>) -> (Array1<F>, Array2<F>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigh_jacobi needs a square matrix");
    let mut m = a.to_owned();
    let mut v = Array2::<F>::eye(n);
    let frob = m.iter().map(|x| *x * *x).sum::<F>().sqrt();
    if frob == F::zero() {
        return (Array1::zeros(n), v);
    }
    let tol = F::epsilon() * frob;
    let two = F::of(2.0);
    for _sweep in 0..100 {
        let mut off = F::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == F::zero() {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (two * apq);
                let t = if theta == F::zero() {
                    F::one()
                } else {
                    let s = if theta > F::zero() { F::one() } else { -F::one() };
                    s / (theta.abs() + (theta * theta + F::one()).sqrt())
                };
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let t1 = m[[k, p]];
                    let t2 = m[[k, q]];
                    m[[k, p]] = c * t1 - s * t2;
                    m[[k, q]] = s * t1 + c * t2;
                }
                for k in 0..n {
                    let t1 = m[[p, k]];
                    let t2 = m[[q, k]];
                    m[[p, k]] = c * t1 - s * t2;
                    m[[q, k]] = s * t1 + c * t2;
                }
                for k in 0..n {
                    let t1 = v[[k, p]];
                    let t2 = v[[k, q]];
                    v[[k, p]] = c * t1 - s * t2;
                    v[[k, q]] = s * t1 + c * t2;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[[i, i]]
            .partial_cmp(&m[[j, j]])
            .expect("symmetric eigenvalues are finite")
            .then(i.cmp(&j))
    });
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vectors = Array2::<F>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[[k, dst]] = v[[k, src]];
        }
    }
    (values, vectors)
}

/// Solves `a · x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot collapses (singular to working precision).
pub fn solve<F: Real>(a: &ArrayView2<F>, b: &ArrayView1<F>) -> Option<Array1<F>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "solve needs a square matrix");
    assert_eq!(n, b.len(), "solve needs matching dimensions");
    let mut m = a.to_owned();
    let mut x = b.to_owned();
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if m[[row, col]].abs() > m[[pivot, col]].abs() {
                pivot = row;
            }
        }
        if m[[pivot, col]].abs() <= F::epsilon() * F::of(n as f64) {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                let tmp = m[[col, k]];
                m[[col, k]] = m[[pivot, k]];
                m[[pivot, k]] = tmp;
            }
            let tmp = x[col];
            x[col] = x[pivot];
            x[pivot] = tmp;
        }
        for row in (col + 1)..n {
            let factor = m[[row, col]] / m[[col, col]];
            if factor == F::zero() {
                continue;
            }
            for k in col..n {
                let delta = factor * m[[col, k]];
                m[[row, k]] -= delta;
            }
            let delta = factor * x[col];
            x[row] -= delta;
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for k in (col + 1)..n {
            acc -= m[[col, k]] * x[k];
        }
        x[col] = acc / m[[col, col]];
    }
    Some(x)
}

/// Modified Gram-Schmidt with a relative drop rule.
///
/// Candidates whose residual after projection falls below
/// `rel_drop_tol × (original norm)` are discarded as linearly dependent.
/// Collection stops once `max_keep` orthonormal vectors are found.
pub fn gram_schmidt<F: Real>(
    candidates: &[Array1<F>],
    rel_drop_tol: F,
    max_keep: usize,
) -> Vec<Array1<F>> {
    let mut kept: Vec<Array1<F>> = Vec::new();
    for cand in candidates {
        if kept.len() >= max_keep {
            break;
        }
        let original = norm(&cand.view());
        if original == F::zero() {
            continue;
        }
        let mut w = cand.clone();
        for k in &kept {
            let proj = k.dot(&w);
            w.zip_mut_with(k, |wi, ki| *wi = *wi - proj * *ki);
        }
        let residual = norm(&w.view());
        if residual < rel_drop_tol * original {
            continue;
        }
        kept.push(w.mapv(|x| x / residual));
    }
    kept
}
