//! Small dense linear-algebra kernels.
//!
//! Only what the simulator needs: complex LU (determinants, inverses) for
//! the Green's-function sweep, Householder reduction of real-symmetric and
//! complex-Hermitian matrices to tridiagonal form, and tridiagonal
//! eigen-solvers (implicit QL for full spectra, Sturm bisection plus inverse
//! iteration for a few lowest eigenpairs).
//!
//! Matrices are dense, row-major, square.

use num_traits::{One, Zero};

use crate::scalar::{cone, czero, Cplx, Real};

/// In-place LU factorisation with partial pivoting of an `n x n` complex
/// matrix.
#[derive(Debug, Clone)]
pub struct ComplexLu<T: Real> {
    n: usize,
    lu: Vec<Cplx<T>>,
    perm: Vec<usize>,
    sign: T,
    /// Smallest |pivot| divided by the largest, a cheap conditioning proxy.
    pub pivot_ratio: T,
}

impl<T: Real> ComplexLu<T> {
    pub fn factor(mut a: Vec<Cplx<T>>, n: usize) -> Self {
        debug_assert_eq!(a.len(), n * n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = T::one();
        let mut pmin = T::infinity();
        let mut pmax = T::zero();
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].norm_sqr();
            for r in (k + 1)..n {
                let v = a[r * n + k].norm_sqr();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let piv = a[k * n + k];
            let pabs = piv.norm();
            pmin = pmin.min(pabs);
            pmax = pmax.max(pabs);
            if pabs == T::zero() {
                continue;
            }
            let inv = cone::<T>() / piv;
            for r in (k + 1)..n {
                let f = a[r * n + k] * inv;
                a[r * n + k] = f;
                if f == czero() {
                    continue;
                }
                let (top, bottom) = a.split_at_mut(r * n);
                let krow = &top[k * n..k * n + n];
                let rrow = &mut bottom[..n];
                for c in (k + 1)..n {
                    rrow[c] = rrow[c] - f * krow[c];
                }
            }
        }
        let pivot_ratio = if pmax > T::zero() { pmin / pmax } else { T::zero() };
        ComplexLu {
            n,
            lu: a,
            perm,
            sign,
            pivot_ratio,
        }
    }

    pub fn determinant(&self) -> Cplx<T> {
        let mut d = Cplx::new(self.sign, T::zero());
        for k in 0..self.n {
            d = d * self.lu[k * self.n + k];
        }
        d
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[Cplx<T>]) -> Vec<Cplx<T>> {
        let n = self.n;
        let mut x: Vec<Cplx<T>> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut s = x[r];
            for c in 0..r {
                s = s - self.lu[r * n + c] * x[c];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for c in (r + 1)..n {
                s = s - self.lu[r * n + c] * x[c];
            }
            x[r] = s / self.lu[r * n + r];
        }
        x
    }

    /// Full inverse, row-major.
    pub fn inverse(&self) -> Vec<Cplx<T>> {
        let n = self.n;
        let mut inv = vec![czero::<T>(); n * n];
        let mut e = vec![czero::<T>(); n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = czero());
            e[c] = cone();
            let col = self.solve(&e);
            for r in 0..n {
                inv[r * n + c] = col[r];
            }
        }
        inv
    }
}

/// Determinant of a dense complex matrix via LU.
pub fn complex_determinant<T: Real>(a: Vec<Cplx<T>>, n: usize) -> Cplx<T> {
    ComplexLu::factor(a, n).determinant()
}

/// Symmetric tridiagonal matrix: `diag` has length n, `off` has length n-1.
#[derive(Debug, Clone)]
pub struct Tridiagonal<T: Real> {
    pub diag: Vec<T>,
    pub off: Vec<T>,
}

/// Householder reduction of a real symmetric matrix, keeping the reflectors
/// so that tridiagonal eigenvectors can be mapped back.
#[derive(Debug, Clone)]
pub struct SymmetricReduction<T: Real> {
    pub tri: Tridiagonal<T>,
    n: usize,
    /// Reflector `k` acts on rows `k+1..n`; empty when the column was
    /// already reduced.
    reflectors: Vec<Vec<T>>,
}

impl<T: Real> SymmetricReduction<T> {
    /// Consumes a row-major symmetric matrix.
    pub fn new(mut a: Vec<T>, n: usize) -> Self {
        assert_eq!(a.len(), n * n);
        let mut diag = vec![T::zero(); n];
        let mut off = vec![T::zero(); n.saturating_sub(1)];
        let mut reflectors = Vec::with_capacity(n.saturating_sub(2));
        let two = T::lit(2.0);
        for k in 0..n.saturating_sub(2) {
            let m = n - k - 1;
            let x: Vec<T> = (0..m).map(|r| a[(k + 1 + r) * n + k]).collect();
            let xnorm = x.iter().map(|&v| v * v).sum::<T>().sqrt();
            diag[k] = a[k * n + k];
            if xnorm == T::zero() {
                off[k] = T::zero();
                reflectors.push(Vec::new());
                continue;
            }
            let alpha = if x[0] >= T::zero() { -xnorm } else { xnorm };
            let mut v = x;
            v[0] = v[0] - alpha;
            let vnorm = v.iter().map(|&t| t * t).sum::<T>().sqrt();
            if vnorm == T::zero() {
                off[k] = alpha;
                reflectors.push(Vec::new());
                continue;
            }
            v.iter_mut().for_each(|t| *t = *t / vnorm);
            // p = S v over the trailing block
            let base = k + 1;
            let mut p = vec![T::zero(); m];
            for r in 0..m {
                let row = &a[(base + r) * n + base..(base + r) * n + n];
                p[r] = row.iter().zip(&v).map(|(&s, &t)| s * t).sum();
            }
            let c: T = p.iter().zip(&v).map(|(&s, &t)| s * t).sum();
            let w: Vec<T> = p
                .iter()
                .zip(&v)
                .map(|(&pi, &vi)| two * pi - two * c * vi)
                .collect();
            for r in 0..m {
                let vr = v[r];
                let wr = w[r];
                let row = &mut a[(base + r) * n + base..(base + r) * n + n];
                for ((s, &vc), &wc) in row.iter_mut().zip(&v).zip(&w) {
                    *s = *s - vr * wc - wr * vc;
                }
            }
            off[k] = alpha;
            reflectors.push(v);
        }
        if n >= 2 {
            diag[n - 2] = a[(n - 2) * n + n - 2];
            off[n - 2] = a[(n - 1) * n + n - 2];
        }
        if n >= 1 {
            diag[n - 1] = a[(n - 1) * n + n - 1];
        }
        SymmetricReduction {
            tri: Tridiagonal { diag, off },
            n,
            reflectors,
        }
    }

    /// Maps an eigenvector of the tridiagonal matrix back to the original
    /// basis.
    pub fn back_transform(&self, y: &mut [T]) {
        assert_eq!(y.len(), self.n);
        let two = T::lit(2.0);
        for (k, v) in self.reflectors.iter().enumerate().rev() {
            if v.is_empty() {
                continue;
            }
            let seg = &mut y[k + 1..];
            let dot: T = seg.iter().zip(v).map(|(&a, &b)| a * b).sum();
            for (s, &vi) in seg.iter_mut().zip(v) {
                *s = *s - two * dot * vi;
            }
        }
    }
}

/// Reduces a row-major Hermitian matrix to a real symmetric tridiagonal
/// matrix with the same spectrum. Only eigenvalues are preserved.
pub fn hermitian_tridiagonal<T: Real>(mut a: Vec<Cplx<T>>, n: usize) -> Tridiagonal<T> {
    assert_eq!(a.len(), n * n);
    let mut diag = vec![T::zero(); n];
    let mut off = vec![T::zero(); n.saturating_sub(1)];
    let two = T::lit(2.0);
    let mut v = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for k in 0..n.saturating_sub(2) {
        let m = n - k - 1;
        let base = k + 1;
        diag[k] = a[k * n + k].re;
        v.clear();
        v.extend((0..m).map(|r| a[(base + r) * n + k]));
        let xnorm = v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        if xnorm == T::zero() {
            off[k] = T::zero();
            continue;
        }
        let x0 = v[0];
        let x0abs = x0.norm();
        let phase = if x0abs > T::zero() {
            x0 / x0abs
        } else {
            cone()
        };
        // alpha = -phase * |x|; v = x - alpha e1
        v[0] = x0 + phase * xnorm;
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        v.iter_mut().for_each(|z| *z = *z / vnorm);
        p.clear();
        for r in 0..m {
            let row = &a[(base + r) * n + base..(base + r) * n + n];
            let mut s = czero::<T>();
            for (sv, vv) in row.iter().zip(v.iter()) {
                s = s + *sv * *vv;
            }
            p.push(s);
        }
        let c: T = v
            .iter()
            .zip(p.iter())
            .map(|(vv, pv)| (vv.conj() * *pv).re)
            .sum();
        w.clear();
        w.extend(
            p.iter()
                .zip(v.iter())
                .map(|(pv, vv)| *pv * two - *vv * (two * c)),
        );
        // S <- S - v w^H - w v^H
        for r in 0..m {
            let vr = v[r];
            let wr = w[r];
            let row = &mut a[(base + r) * n + base..(base + r) * n + n];
            for ((s, vc), wc) in row.iter_mut().zip(v.iter()).zip(w.iter()) {
                *s = *s - vr * wc.conj() - wr * vc.conj();
            }
        }
        off[k] = xnorm;
    }
    if n >= 2 {
        diag[n - 2] = a[(n - 2) * n + n - 2].re;
        off[n - 2] = a[(n - 1) * n + n - 2].norm();
    }
    if n >= 1 {
        diag[n - 1] = a[(n - 1) * n + n - 1].re;
    }
    Tridiagonal { diag, off }
}

impl<T: Real> Tridiagonal<T> {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    fn gershgorin(&self) -> (T, T) {
        let n = self.len();
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for i in 0..n {
            let mut r = T::zero();
            if i > 0 {
                r = r + self.off[i - 1].abs();
            }
            if i + 1 < n {
                r = r + self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `x` (Sturm count).
    pub fn count_below(&self, x: T) -> usize {
        let tiny = T::min_positive_value().sqrt();
        let mut count = 0;
        let mut q = T::one();
        for i in 0..self.len() {
            let e2 = if i == 0 {
                T::zero()
            } else {
                self.off[i - 1] * self.off[i - 1]
            };
            q = if i == 0 {
                self.diag[0] - x
            } else {
                self.diag[i] - x - e2 / q
            };
            if q == T::zero() {
                q = -tiny;
            }
            if q < T::zero() {
                count += 1;
            }
        }
        count
    }

    /// The `k` lowest eigenvalues by bisection, ascending.
    pub fn lowest_eigenvalues(&self, k: usize) -> Vec<T> {
        let (glo, ghi) = self.gershgorin();
        let span = (ghi - glo).max(T::one());
        let eps = T::epsilon();
        (0..k.min(self.len()))
            .map(|idx| {
                let mut lo = glo - span * eps;
                let mut hi = ghi + span * eps;
                for _ in 0..400 {
                    let mid = (lo + hi) * T::lit(0.5);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.count_below(mid) > idx {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi - lo <= eps * (lo.abs().max(hi.abs())) * T::lit(2.0) {
                        break;
                    }
                }
                (lo + hi) * T::lit(0.5)
            })
            .collect()
    }

    /// Inverse iteration for an eigenvector at `lambda`, orthogonalised
    /// against `against`.
    pub fn inverse_iteration(&self, lambda: T, against: &[Vec<T>]) -> Vec<T> {
        let n = self.len();
        let (glo, ghi) = self.gershgorin();
        let scale = glo.abs().max(ghi.abs()).max(T::one());
        let shift = lambda + scale * T::epsilon() * T::lit(4.0);
        let solver = TridiagSolver::new(self, shift);
        let mut x: Vec<T> = (0..n)
            .map(|i| T::one() + T::lit(0.37) * (T::from_usize_lossy(i) * T::lit(0.917)).sin())
            .collect();
        for _ in 0..4 {
            orthogonalise(&mut x, against);
            normalise(&mut x);
            x = solver.solve(&x);
            orthogonalise(&mut x, against);
            normalise(&mut x);
        }
        x
    }

    /// All eigenvalues by the implicit QL algorithm, ascending.
    pub fn eigenvalues(&self) -> Vec<T> {
        let n = self.len();
        let mut d = self.diag.clone();
        let mut e = vec![T::zero(); n];
        e[..n.saturating_sub(1)].copy_from_slice(&self.off);
        let two = T::lit(2.0);
        for l in 0..n {
            let mut iter = 0;
            loop {
                let mut m = l;
                while m + 1 < n {
                    let dd = d[m].abs() + d[m + 1].abs();
                    if e[m].abs() <= T::epsilon() * dd {
                        break;
                    }
                    m += 1;
                }
                if m == l {
                    break;
                }
                iter += 1;
                if iter > 60 {
                    break;
                }
                let mut g = (d[l + 1] - d[l]) / (two * e[l]);
                let mut r = g.hypot(T::one());
                g = d[m] - d[l] + e[l] / (g + if g >= T::zero() { r.abs() } else { -r.abs() });
                let mut s = T::one();
                let mut c = T::one();
                let mut p = T::zero();
                let mut i = m;
                let mut underflow = false;
                while i > l {
                    i -= 1;
                    let f = s * e[i];
                    let b = c * e[i];
                    r = f.hypot(g);
                    e[i + 1] = r;
                    if r == T::zero() {
                        d[i + 1] = d[i + 1] - p;
                        e[m] = T::zero();
                        underflow = true;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + two * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                }
                if underflow {
                    continue;
                }
                d[l] = d[l] - p;
                e[l] = g;
                e[m] = T::zero();
            }
        }
        d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        d
    }
}

/// Gaussian elimination with partial pivoting for `(T - shift) x = b`.
struct TridiagSolver<T: Real> {
    // Upper factor has up to two super-diagonals after pivoting.
    u0: Vec<T>,
    u1: Vec<T>,
    u2: Vec<T>,
    mult: Vec<T>,
    swapped: Vec<bool>,
}

impl<T: Real> TridiagSolver<T> {
    fn new(tri: &Tridiagonal<T>, shift: T) -> Self {
        let n = tri.len();
        let tiny = T::epsilon() * T::epsilon();
        let mut u0: Vec<T> = tri.diag.iter().map(|&d| d - shift).collect();
        let mut u1: Vec<T> = (0..n)
            .map(|i| if i + 1 < n { tri.off[i] } else { T::zero() })
            .collect();
        let mut u2 = vec![T::zero(); n];
        let mut mult = vec![T::zero(); n];
        let mut swapped = vec![false; n];
        let mut sub: Vec<T> = (0..n)
            .map(|i| if i + 1 < n { tri.off[i] } else { T::zero() })
            .collect();
        for i in 0..n.saturating_sub(1) {
            // rows i and i+1; row i+1 holds sub[i] at column i
            if sub[i].abs() > u0[i].abs() {
                // swap rows i and i+1
                let (a0, a1, a2) = (u0[i], u1[i], u2[i]);
                let b0 = sub[i];
                let b1 = u0[i + 1];
                let b2 = u1[i + 1];
                u0[i] = b0;
                u1[i] = b1;
                u2[i] = b2;
                let f = a0 / b0;
                mult[i] = f;
                swapped[i] = true;
                u0[i + 1] = a1 - f * b1;
                u1[i + 1] = a2 - f * b2;
                sub[i] = T::zero();
            } else {
                if u0[i] == T::zero() {
                    u0[i] = tiny;
                }
                let f = sub[i] / u0[i];
                mult[i] = f;
                u0[i + 1] = u0[i + 1] - f * u1[i];
                u1[i + 1] = u1[i + 1] - f * u2[i];
            }
        }
        for v in u0.iter_mut() {
            if *v == T::zero() {
                *v = tiny;
            }
        }
        TridiagSolver {
            u0,
            u1,
            u2,
            mult,
            swapped,
        }
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = b.len();
        let mut y = b.to_vec();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                y.swap(i, i + 1);
            }
            y[i + 1] = y[i + 1] - self.mult[i] * y[i];
        }
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut s = y[i];
            if i + 1 < n {
                s = s - self.u1[i] * x[i + 1];
            }
            if i + 2 < n {
                s = s - self.u2[i] * x[i + 2];
            }
            x[i] = s / self.u0[i];
        }
        x
    }
}

fn orthogonalise<T: Real>(x: &mut [T], against: &[Vec<T>]) {
    for _ in 0..2 {
        for v in against {
            let dot: T = x.iter().zip(v).map(|(&a, &b)| a * b).sum();
            for (xi, &vi) in x.iter_mut().zip(v) {
                *xi = *xi - dot * vi;
            }
        }
    }
}

fn normalise<T: Real>(x: &mut [T]) {
    let norm = x.iter().map(|&v| v * v).sum::<T>().sqrt();
    if norm > T::zero() {
        x.iter_mut().for_each(|v| *v = *v / norm);
    }
}

/// Eigenvalues of a dense Hermitian matrix, ascending. Consumes the matrix.
pub fn hermitian_eigenvalues<T: Real>(a: Vec<Cplx<T>>, n: usize) -> Vec<T> {
    hermitian_tridiagonal(a, n).eigenvalues()
}

/// Lowest `k` eigenpairs of a dense real symmetric matrix. Eigenvectors are
/// unit-norm in the Euclidean sense and returned in ascending order.
pub fn symmetric_lowest_eigenpairs<T: Real>(a: Vec<T>, n: usize, k: usize) -> (Vec<T>, Vec<Vec<T>>) {
    let red = SymmetricReduction::new(a, n);
    let vals = red.tri.lowest_eigenvalues(k);
    let (glo, ghi) = red.tri.gershgorin();
    let cluster = (ghi - glo).abs().max(T::one()) * T::lit(1e-3);
    let mut tvecs: Vec<Vec<T>> = Vec::with_capacity(vals.len());
    for (i, &lam) in vals.iter().enumerate() {
        // reorthogonalise within the cluster of nearby eigenvalues
        let against: Vec<Vec<T>> = (0..i)
            .filter(|&j| (vals[j] - lam).abs() <= cluster)
            .map(|j| tvecs[j].clone())
            .collect();
        tvecs.push(red.tri.inverse_iteration(lam, &against));
    }
    let vecs = tvecs
        .into_iter()
        .map(|mut y| {
            red.back_transform(&mut y);
            normalise(&mut y);
            y
        })
        .collect();
    (vals, vecs)
}

/// Plain `n x n` complex identity, row-major.
pub fn complex_identity<T: Real>(n: usize) -> Vec<Cplx<T>> {
    let mut m = vec![Cplx::zero(); n * n];
    for i in 0..n {
        m[i * n + i] = Cplx::one();
    }
    m
}
