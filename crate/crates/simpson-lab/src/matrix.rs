//! Dense matrices over a ring handle.
//!
//! Coefficient arithmetic is routed through a context object implementing
//! `RingOps`, so the same matrix code serves the cyclotomic chain ring
//! (cohomology differentials, normal forms) and the semi-stable chart ring
//! (Higgs fields, characteristic polynomials). Matrices are stored row-major;
//! they act on column vectors, so a matrix of shape (r, c) maps W^c to W^r.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ring::{Ring, RingElt};

/// Ring arithmetic routed through a shared context (the ring handle).
pub trait RingOps {
    type Elt: Clone + PartialEq + fmt::Debug;

    fn zero(&self) -> Self::Elt;
    fn one(&self) -> Self::Elt;
    fn add(&self, a: &Self::Elt, b: &Self::Elt) -> Self::Elt;
    fn sub(&self, a: &Self::Elt, b: &Self::Elt) -> Self::Elt;
    fn neg(&self, a: &Self::Elt) -> Self::Elt;
    fn mul(&self, a: &Self::Elt, b: &Self::Elt) -> Self::Elt;
    fn from_i64(&self, v: i64) -> Self::Elt;
    /// Representational zero test (coefficients identically zero).
    fn is_zero(&self, a: &Self::Elt) -> bool;
}

impl RingOps for Ring {
    type Elt = RingElt;

    fn zero(&self) -> RingElt {
        Ring::zero(self)
    }
    fn one(&self) -> RingElt {
        Ring::one(self)
    }
    fn add(&self, a: &RingElt, b: &RingElt) -> RingElt {
        Ring::add(self, a, b)
    }
    fn sub(&self, a: &RingElt, b: &RingElt) -> RingElt {
        Ring::sub(self, a, b)
    }
    fn neg(&self, a: &RingElt) -> RingElt {
        Ring::neg(self, a)
    }
    fn mul(&self, a: &RingElt, b: &RingElt) -> RingElt {
        Ring::mul(self, a, b)
    }
    fn from_i64(&self, v: i64) -> RingElt {
        Ring::from_i64(self, v)
    }
    fn is_zero(&self, a: &RingElt) -> bool {
        a.coeffs().iter().all(|&c| c == 0)
    }
}

/// Row-major dense matrix.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone + PartialEq + fmt::Debug> Mat<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Mat<T> {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Mat<T> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Mat<T> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Mat { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_vecs(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Mat<T> {
        Mat::from_fn(self.cols, self.rows, |i, j| self.at(j, i).clone())
    }

    pub fn map<U: Clone + PartialEq + fmt::Debug>(&self, f: impl Fn(&T) -> U) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Stack vertically: `[self; other]`.
    pub fn vstack(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.cols, "vstack column mismatch");
        let mut data = self.data.clone();
        data.extend(other.data.iter().cloned());
        Mat { rows: self.rows + other.rows, cols: self.cols, data }
    }

    /// Concatenate horizontally: `[self | other]`.
    pub fn hstack(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.rows, other.rows, "hstack row mismatch");
        Mat::from_fn(self.rows, self.cols + other.cols, |i, j| {
            if j < self.cols {
                self.at(i, j).clone()
            } else {
                other.at(i, j - self.cols).clone()
            }
        })
    }
}

impl<T: fmt::Debug + Clone + PartialEq> fmt::Debug for Mat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

pub fn zeros<R: RingOps>(ops: &R, rows: usize, cols: usize) -> Mat<R::Elt> {
    Mat::from_fn(rows, cols, |_, _| ops.zero())
}

pub fn identity<R: RingOps>(ops: &R, n: usize) -> Mat<R::Elt> {
    Mat::from_fn(n, n, |i, j| if i == j { ops.one() } else { ops.zero() })
}

pub fn mat_add<R: RingOps>(ops: &R, a: &Mat<R::Elt>, b: &Mat<R::Elt>) -> Mat<R::Elt> {
    assert_eq!((a.rows, a.cols), (b.rows, b.cols), "shape mismatch");
    Mat::from_fn(a.rows, a.cols, |i, j| ops.add(a.at(i, j), b.at(i, j)))
}

pub fn mat_sub<R: RingOps>(ops: &R, a: &Mat<R::Elt>, b: &Mat<R::Elt>) -> Mat<R::Elt> {
    assert_eq!((a.rows, a.cols), (b.rows, b.cols), "shape mismatch");
    Mat::from_fn(a.rows, a.cols, |i, j| ops.sub(a.at(i, j), b.at(i, j)))
}

pub fn mat_neg<R: RingOps>(ops: &R, a: &Mat<R::Elt>) -> Mat<R::Elt> {
    a.map(|x| ops.neg(x))
}

pub fn scalar_mul<R: RingOps>(ops: &R, s: &R::Elt, a: &Mat<R::Elt>) -> Mat<R::Elt> {
    a.map(|x| ops.mul(s, x))
}

pub fn matmul<R: RingOps>(ops: &R, a: &Mat<R::Elt>, b: &Mat<R::Elt>) -> Mat<R::Elt> {
    assert_eq!(a.cols, b.rows, "matmul shape mismatch");
    Mat::from_fn(a.rows, b.cols, |i, j| {
        let mut acc = ops.zero();
        for k in 0..a.cols {
            let t = ops.mul(a.at(i, k), b.at(k, j));
            acc = ops.add(&acc, &t);
        }
        acc
    })
}

pub fn mul_vec<R: RingOps>(ops: &R, a: &Mat<R::Elt>, v: &[R::Elt]) -> Vec<R::Elt> {
    assert_eq!(a.cols, v.len(), "vector length mismatch");
    (0..a.rows)
        .map(|i| {
            let mut acc = ops.zero();
            for (k, x) in v.iter().enumerate() {
                let t = ops.mul(a.at(i, k), x);
                acc = ops.add(&acc, &t);
            }
            acc
        })
        .collect()
}

pub fn mat_pow<R: RingOps>(ops: &R, a: &Mat<R::Elt>, mut t: u64) -> Mat<R::Elt> {
    assert_eq!(a.rows, a.cols, "pow of a non-square matrix");
    let mut acc = identity(ops, a.rows);
    let mut base = a.clone();
    while t > 0 {
        if t & 1 == 1 {
            acc = matmul(ops, &acc, &base);
        }
        t >>= 1;
        if t > 0 {
            base = matmul(ops, &base, &base);
        }
    }
    acc
}

pub fn is_zero_mat<R: RingOps>(ops: &R, a: &Mat<R::Elt>) -> bool {
    a.data.iter().all(|x| ops.is_zero(x))
}

pub fn commutes<R: RingOps>(ops: &R, a: &Mat<R::Elt>, b: &Mat<R::Elt>) -> bool {
    is_zero_mat(ops, &mat_sub(ops, &matmul(ops, a, b), &matmul(ops, b, a)))
}

/// Kronecker product: (A kron B)[(i1*rB + i2), (j1*cB + j2)] = A[i1,j1] * B[i2,j2].
pub fn kron<R: RingOps>(ops: &R, a: &Mat<R::Elt>, b: &Mat<R::Elt>) -> Mat<R::Elt> {
    Mat::from_fn(a.rows * b.rows, a.cols * b.cols, |i, j| {
        let (i1, i2) = (i / b.rows, i % b.rows);
        let (j1, j2) = (j / b.cols, j % b.cols);
        ops.mul(a.at(i1, j1), b.at(i2, j2))
    })
}

/// Characteristic polynomial det(X*I - A) by the Berkowitz algorithm
/// (division-free, valid over any commutative ring). Returns coefficients
/// ascending by degree: c[0] + c[1] X + ... + c[n] X^n with c[n] = 1.
pub fn charpoly<R: RingOps>(ops: &R, a: &Mat<R::Elt>) -> Vec<R::Elt> {
    assert_eq!(a.rows, a.cols, "charpoly of a non-square matrix");
    let n = a.rows;
    if n == 0 {
        return vec![ops.one()];
    }
    // p holds the descending-order coefficient vector for the leading
    // principal k x k block; the step to k+1 is a lower-triangular Toeplitz
    // product whose first column is (1, -a_kk, -R S, -R A_k S, -R A_k^2 S, ...).
    let mut p = vec![ops.one(), ops.neg(a.at(0, 0))];
    for k in 1..n {
        let akk = a.at(k, k).clone();
        // S = column above the diagonal, R = row to the left of it.
        let s: Vec<R::Elt> = (0..k).map(|i| a.at(i, k).clone()).collect();
        let r: Vec<R::Elt> = (0..k).map(|j| a.at(k, j).clone()).collect();
        let mut col = Vec::with_capacity(k + 2);
        col.push(ops.one());
        col.push(ops.neg(&akk));
        let mut w = s.clone();
        for _ in 0..k {
            let mut dot = ops.zero();
            for (ri, wi) in r.iter().zip(&w) {
                let t = ops.mul(ri, wi);
                dot = ops.add(&dot, &t);
            }
            col.push(ops.neg(&dot));
            // w <- A_k w for the next Krylov term
            let mut next = Vec::with_capacity(k);
            for i in 0..k {
                let mut acc = ops.zero();
                for (j, wj) in w.iter().enumerate() {
                    let t = ops.mul(a.at(i, j), wj);
                    acc = ops.add(&acc, &t);
                }
                next.push(acc);
            }
            w = next;
        }
        // Toeplitz multiply: q[i] = sum_j col[i - j] p[j]
        let mut q = vec![ops.zero(); k + 2];
        for (j, pj) in p.iter().enumerate() {
            for (i, ci) in col.iter().enumerate() {
                if i + j < k + 2 {
                    let t = ops.mul(ci, pj);
                    q[i + j] = ops.add(&q[i + j], &t);
                }
            }
        }
        p = q;
    }
    p.reverse();
    p
}

/// Evaluate a polynomial (ascending coefficients) at a square matrix.
pub fn poly_at_matrix<R: RingOps>(
    ops: &R,
    coeffs: &[R::Elt],
    a: &Mat<R::Elt>,
) -> Mat<R::Elt> {
    let n = a.rows;
    let mut acc = zeros(ops, n, n);
    for c in coeffs.iter().rev() {
        acc = matmul(ops, &acc, a);
        for i in 0..n {
            let v = ops.add(acc.at(i, i), c);
            acc.set(i, i, v);
        }
    }
    acc
}

/// All exponent vectors of the given width summing exactly to `total`,
/// lexicographically ordered. The empty width admits only total 0.
pub fn compositions(width: usize, total: u32) -> Vec<Vec<u32>> {
    if width == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(width - 1, total - first) {
            let mut v = Vec::with_capacity(width);
            v.push(first);
            v.append(&mut rest);
            out.push(v);
        }
    }
    out
}

/// All exponent vectors of the given width with entry sum at most `bound`,
/// ordered by total degree, then lexicographically.
pub fn multi_indices(width: usize, bound: u32) -> Vec<Vec<u32>> {
    (0..=bound).flat_map(|t| compositions(width, t)).collect()
}

/// Sorted k-element subsets of {0..n-1} in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k > n {
        return vec![];
    }
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        // advance the rightmost index that can still move
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < n - k + i {
                break;
            }
        }
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Insert index j into a sorted exterior monomial; None if j already occurs,
/// otherwise the sign parity (number of transpositions) and the new subset.
pub fn wedge_insert(s: &[usize], j: usize) -> Option<(bool, Vec<usize>)> {
    if s.contains(&j) {
        return None;
    }
    let pos = s.iter().take_while(|&&u| u < j).count();
    let mut out = Vec::with_capacity(s.len() + 1);
    out.extend_from_slice(&s[..pos]);
    out.push(j);
    out.extend_from_slice(&s[pos..]);
    Some((pos % 2 == 1, out))
}
