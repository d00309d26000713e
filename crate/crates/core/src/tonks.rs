//! Bosonic one-body density matrix of the Tonks-Girardeau gas from its
//! fermionic Slater orbitals, via the Jordan-Wigner string.
//!
//! With `P` the `n x N` matrix of site-normalised orbitals and `P^(i)`
//! equal to `P` with rows `0..i` negated and the unit column `e_i`
//! appended, `G_ij = det[(P^(i))^dag P^(j)]` and the lattice OBDM is
//! `rho_ij = G_ij + delta_ij (1 - 2 G_ii)`, with
//! `rho[x][x'] = <b^dag_x' b_x>` and trace `N`.

use std::io::{Read, Write};
use std::sync::Arc;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::grid::{Grid, Orbital};
use crate::linalg::{hermitian_eigenvalues, ComplexLu};
use crate::scalar::{tolerance, Cplx, Real};

pub const HERMITICITY_TOLERANCE: f64 = 1e-10;
pub const TRACE_TOLERANCE: f64 = 1e-8;
pub const POSITIVITY_TOLERANCE: f64 = 1e-8;
pub const SLATER_TOLERANCE: f64 = 1e-8;
/// Eigenvalues below this are dropped from the entropy sum.
pub const ENTROPY_CLAMP: f64 = 1e-12;

/// Orbitals of a Slater determinant as site-normalised columns.
#[derive(Debug, Clone)]
pub struct SlaterState<T: Real> {
    grid: Arc<Grid<T>>,
    /// Row-major `n_dim x n_particles`.
    p: Vec<Cplx<T>>,
    n_particles: usize,
}

impl<T: Real> SlaterState<T> {
    pub fn from_orbitals(orbitals: &[Orbital<T>]) -> Result<Self> {
        let first = orbitals
            .first()
            .ok_or_else(|| Error::InvalidParameter("Slater state needs at least one orbital".into()))?;
        let grid = first.grid().clone();
        let n = grid.n_dim();
        let m = orbitals.len();
        if m > n {
            return Err(Error::InvalidParameter(format!("{m} orbitals on {n} sites")));
        }
        let s = grid.dz().sqrt();
        let mut p = vec![Cplx::zero(); n * m];
        for (a, o) in orbitals.iter().enumerate() {
            if o.amplitudes().len() != n {
                return Err(Error::GridMismatch("orbitals live on different grids".into()));
            }
            for (x, &v) in o.amplitudes().iter().enumerate() {
                p[x * m + a] = v * s;
            }
        }
        let state = SlaterState {
            grid,
            p,
            n_particles: m,
        };
        let defect = state.gram_defect();
        let tol = tolerance::<T>(SLATER_TOLERANCE);
        if defect > tol {
            return Err(Error::invariant("Slater orbital orthonormality", defect, tol));
        }
        Ok(state)
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn n_dim(&self) -> usize {
        self.grid.n_dim()
    }

    fn row(&self, x: usize) -> &[Cplx<T>] {
        &self.p[x * self.n_particles..(x + 1) * self.n_particles]
    }

    /// `max |(P^dag P)_ab - delta_ab|`.
    pub fn gram_defect(&self) -> f64 {
        let m = self.n_particles;
        let mut worst = 0.0f64;
        for a in 0..m {
            for b in 0..=a {
                let s: Cplx<T> = (0..self.n_dim()).map(|x| self.row(x)[a].conj() * self.row(x)[b]).sum();
                let want = if a == b { Cplx::one() } else { Cplx::zero() };
                worst = worst.max((s - want).norm().to_f64_lossy());
            }
        }
        worst
    }

    /// Fermionic site density `sum_a |P_xa|^2`.
    pub fn fermion_density(&self) -> Vec<T> {
        (0..self.n_dim())
            .map(|x| self.row(x).iter().map(|v| v.norm_sqr()).sum())
            .collect()
    }
}

/// Dense row-major complex square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T: Real> {
    pub n: usize,
    pub data: Vec<Cplx<T>>,
}

impl<T: Real> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![Cplx::zero(); n * n],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Cplx<T> {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Cplx<T>) {
        self.data[r * self.n + c] = v;
    }

    /// `max |M_rc - conj M_cr|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = T::zero();
        for r in 0..self.n {
            for c in 0..=r {
                worst = worst.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        worst.to_f64_lossy()
    }

    /// Largest elementwise difference.
    pub fn max_abs_diff(&self, other: &SquareMatrix<T>) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).norm().to_f64_lossy())
            .fold(0.0, f64::max)
    }
}

/// `G_ij` for every pair by building each bordered `(N+1) x (N+1)` Gram
/// matrix literally and taking its LU determinant. Costs `O(n^3 N^2)`;
/// meant for validation on small grids.
pub fn green_function_reference<T: Real>(state: &SlaterState<T>) -> SquareMatrix<T> {
    let n = state.n_dim();
    let m = state.n_particles;
    let k = m + 1;
    // bordered n x (N+1) matrix for index i
    let bordered = |i: usize| -> Vec<Cplx<T>> {
        let mut b = vec![Cplx::zero(); n * k];
        for x in 0..n {
            let sign = if x < i { -T::one() } else { T::one() };
            for a in 0..m {
                b[x * k + a] = state.row(x)[a] * sign;
            }
        }
        b[i * k + m] = Cplx::one();
        b
    };
    let all: Vec<Vec<Cplx<T>>> = (0..n).map(bordered).collect();
    let mut g = SquareMatrix::zeros(n);
    let mut gram = vec![Cplx::zero(); k * k];
    for i in 0..n {
        for j in 0..n {
            let (pi, pj) = (&all[i], &all[j]);
            for r in 0..k {
                for c in 0..k {
                    gram[r * k + c] = (0..n).map(|x| pi[x * k + r].conj() * pj[x * k + c]).sum();
                }
            }
            g.set(i, j, ComplexLu::factor(gram.clone(), k).determinant());
        }
    }
    g
}

/// Diagnostics of the fast Green's-function sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SweepStats {
    /// Inverses rebuilt from scratch.
    pub refreshes: usize,
    /// Pairs evaluated by a direct bordered determinant because the running
    /// block was too ill-conditioned.
    pub direct: usize,
}

/// Rank-one-updated state of the sweep over `j` for fixed `i`.
struct Sweep<T: Real> {
    m: usize,
    /// `A = I - 2 sum_{x in [i, j)} conj(P_x) P_x^T`.
    a: Vec<Cplx<T>>,
    /// `A^{-1}` when `valid`.
    b: Vec<Cplx<T>>,
    det: Cplx<T>,
    valid: bool,
    since_refresh: usize,
}

/// Rebuild the inverse after this many rank-one updates.
const REFRESH_INTERVAL: usize = 32;
/// Sherman-Morrison denominators below this trigger a rebuild.
const MIN_DENOMINATOR: f64 = 1e-2;
/// LU pivot ratio below which the inverse is not trusted.
const MIN_PIVOT_RATIO: f64 = 1e-3;

impl<T: Real> Sweep<T> {
    fn refresh(&mut self, stats: &mut SweepStats) {
        stats.refreshes += 1;
        self.since_refresh = 0;
        let lu = ComplexLu::factor(self.a.clone(), self.m);
        if lu.pivot_ratio.to_f64_lossy() < MIN_PIVOT_RATIO {
            self.valid = false;
            return;
        }
        self.det = lu.determinant();
        self.b = lu.inverse();
        self.valid = true;
    }

    /// `A <- A - 2 u u^dag` with `u = conj(P_x)`, keeping `B` and `det`
    /// in step by Sherman-Morrison when possible.
    fn update(&mut self, row: &[Cplx<T>], stats: &mut SweepStats) {
        let m = self.m;
        let two = T::lit(2.0);
        for r in 0..m {
            let ur = row[r].conj();
            for c in 0..m {
                self.a[r * m + c] = self.a[r * m + c] - ur * row[c] * two;
            }
        }
        self.since_refresh += 1;
        if !self.valid || self.since_refresh >= REFRESH_INTERVAL {
            self.refresh(stats);
            return;
        }
        // bu = B u, ub = u^dag B
        let mut bu = vec![Cplx::zero(); m];
        let mut ub = vec![Cplx::zero(); m];
        for r in 0..m {
            let mut s = Cplx::zero();
            for c in 0..m {
                s = s + self.b[r * m + c] * row[c].conj();
            }
            bu[r] = s;
        }
        for c in 0..m {
            let mut s = Cplx::zero();
            for r in 0..m {
                s = s + row[r] * self.b[r * m + c];
            }
            ub[c] = s;
        }
        let utbu: Cplx<T> = (0..m).map(|r| row[r] * bu[r]).sum();
        let den = Cplx::<T>::one() - utbu * two;
        if den.norm().to_f64_lossy() < MIN_DENOMINATOR {
            self.refresh(stats);
            return;
        }
        let f = Cplx::new(two, T::zero()) / den;
        for r in 0..m {
            let br = bu[r] * f;
            for c in 0..m {
                self.b[r * m + c] = self.b[r * m + c] + br * ub[c];
            }
        }
        self.det = self.det * den;
    }
}

/// Bordered determinant `det [[A, conj P_j], [-P_i^T, 0]]`, used when `A`
/// is (nearly) singular.
fn bordered_direct<T: Real>(a: &[Cplx<T>], pi: &[Cplx<T>], pj: &[Cplx<T>]) -> Cplx<T> {
    let m = pi.len();
    let k = m + 1;
    let mut mat = vec![Cplx::zero(); k * k];
    for r in 0..m {
        for c in 0..m {
            mat[r * k + c] = a[r * m + c];
        }
        mat[r * k + m] = pj[r].conj();
        mat[m * k + r] = -pi[r];
    }
    ComplexLu::factor(mat, k).determinant()
}

/// `G_ij` by sweeping `j > i` with rank-one updates of the `N x N` block,
/// `O(n^2 N^2)` overall; the lower triangle follows from Hermiticity.
pub fn green_function_fast<T: Real>(state: &SlaterState<T>) -> (SquareMatrix<T>, SweepStats) {
    let n = state.n_dim();
    let m = state.n_particles;
    let mut g = SquareMatrix::zeros(n);
    let mut stats = SweepStats::default();
    let mut identity = vec![Cplx::zero(); m * m];
    for a in 0..m {
        identity[a * m + a] = Cplx::one();
    }
    for i in 0..n {
        let pi = state.row(i);
        let dens: T = pi.iter().map(|v| v.norm_sqr()).sum();
        g.set(i, i, Cplx::new(T::one() - dens, T::zero()));
        let mut sw = Sweep {
            m,
            a: identity.clone(),
            b: identity.clone(),
            det: Cplx::one(),
            valid: true,
            since_refresh: 0,
        };
        for j in (i + 1)..n {
            sw.update(state.row(j - 1), &mut stats);
            let pj = state.row(j);
            let v = if sw.valid {
                // det(A) P_i^T A^{-1} conj(P_j)
                let mut s = Cplx::<T>::zero();
                for r in 0..m {
                    let mut t = Cplx::zero();
                    for c in 0..m {
                        t = t + sw.b[r * m + c] * pj[c].conj();
                    }
                    s = s + pi[r] * t;
                }
                s * sw.det
            } else {
                stats.direct += 1;
                bordered_direct(&sw.a, pi, pj)
            };
            g.set(i, j, v);
            g.set(j, i, v.conj());
        }
    }
    (g, stats)
}

/// Bosonic lattice OBDM with trace `N`.
#[derive(Debug, Clone)]
pub struct Obdm<T: Real> {
    pub rho: SquareMatrix<T>,
    pub n_particles: usize,
    grid: Arc<Grid<T>>,
    pub hermiticity_defect: f64,
    pub trace_defect: f64,
}

impl<T: Real> Obdm<T> {
    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn n_dim(&self) -> usize {
        self.rho.n
    }

    pub fn trace(&self) -> T {
        (0..self.rho.n).map(|i| self.rho.get(i, i).re).sum()
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rho.n).map(|i| self.rho.get(i, i).re).collect()
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<T> {
        hermitian_eigenvalues(self.rho.data.clone(), self.rho.n)
    }

    /// Checks positive semi-definiteness, returning the smallest eigenvalue.
    pub fn check_positive(&self) -> Result<f64> {
        let lo = self.eigenvalues().first().map(|v| v.to_f64_lossy()).unwrap_or(0.0);
        let tol = tolerance::<T>(POSITIVITY_TOLERANCE);
        if lo < -tol {
            return Err(Error::invariant("OBDM positivity", -lo, tol));
        }
        Ok(lo)
    }
}

/// Applies `rho_ij = G_ij + delta_ij (1 - 2 G_ii)` and verifies the cheap
/// invariants (Hermiticity, trace, hard-core diagonal).
pub fn obdm_from_green<T: Real>(g: SquareMatrix<T>, state: &SlaterState<T>) -> Result<Obdm<T>> {
    let n = g.n;
    if n != state.n_dim() {
        return Err(Error::GridMismatch(format!("G is {n}x{n}, grid {}", state.n_dim())));
    }
    let mut rho = g;
    for i in 0..n {
        let gii = rho.get(i, i);
        rho.set(i, i, Cplx::<T>::one() - gii);
    }
    let herm = rho.hermiticity_defect();
    let htol = tolerance::<T>(HERMITICITY_TOLERANCE);
    if herm > htol {
        return Err(Error::invariant("OBDM Hermiticity", herm, htol));
    }
    let trace: T = (0..n).map(|i| rho.get(i, i).re).sum();
    let trace_defect = (trace.to_f64_lossy() - state.n_particles as f64).abs();
    let ttol = tolerance::<T>(TRACE_TOLERANCE);
    if trace_defect > ttol {
        return Err(Error::invariant("OBDM trace", trace_defect, ttol));
    }
    for i in 0..n {
        let d = rho.get(i, i).re.to_f64_lossy();
        if d < -htol || d > 1.0 + htol {
            return Err(Error::invariant("hard-core site occupation", d.max(-d), 1.0));
        }
    }
    Ok(Obdm {
        rho,
        n_particles: state.n_particles,
        grid: state.grid.clone(),
        hermiticity_defect: herm,
        trace_defect,
    })
}

/// Fast-path OBDM of a Slater state.
pub fn obdm<T: Real>(state: &SlaterState<T>) -> Result<Obdm<T>> {
    let (g, stats) = green_function_fast(state);
    if stats.direct > 0 {
        log::debug!("green sweep: {} direct determinants, {} refreshes", stats.direct, stats.refreshes);
    }
    obdm_from_green(g, state)
}

/// Von Neumann entropy in both normalisations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VnEntropy {
    /// `-sum lambda ln lambda` with eigenvalues of `rho` (trace `N`).
    pub raw: f64,
    /// Same with `rho / N` (trace 1).
    pub unit_trace: f64,
    pub min_eigenvalue: f64,
}

/// Entropies from an eigenvalue list; fails on eigenvalues below
/// `-1e-8`, clamps those below `1e-12` to zero.
pub fn entropy_from_eigenvalues(eigs: &[f64], n_particles: usize, neg_tol: f64) -> Result<VnEntropy> {
    let lo = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    if lo < -neg_tol {
        return Err(Error::invariant("OBDM positivity", -lo, neg_tol));
    }
    let nf = n_particles as f64;
    let mut raw = 0.0;
    let mut unit = 0.0;
    for &l in eigs {
        if l < ENTROPY_CLAMP {
            continue;
        }
        raw -= l * l.ln();
        let u = l / nf;
        unit -= u * u.ln();
    }
    Ok(VnEntropy {
        raw,
        unit_trace: unit,
        min_eigenvalue: if eigs.is_empty() { 0.0 } else { lo },
    })
}

pub fn von_neumann_entropy<T: Real>(rho: &Obdm<T>) -> Result<VnEntropy> {
    let eigs: Vec<f64> = rho.eigenvalues().iter().map(|v| v.to_f64_lossy()).collect();
    entropy_from_eigenvalues(&eigs, rho.n_particles, tolerance::<T>(POSITIVITY_TOLERANCE))
}

const OBDM_MAGIC: &[u8; 4] = b"OBDM";
pub const OBDM_FORMAT_VERSION: u32 = 1;

/// Writes the binary dump: magic, version, n_dim, N (u32 LE), then
/// row-major `(re, im)` f64 LE pairs.
pub fn write_obdm<T: Real>(rho: &Obdm<T>, mut w: impl Write) -> Result<()> {
    w.write_all(OBDM_MAGIC)?;
    w.write_all(&OBDM_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(rho.rho.n as u32).to_le_bytes())?;
    w.write_all(&(rho.n_particles as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(rho.rho.data.len() * 16);
    for z in &rho.rho.data {
        buf.extend_from_slice(&z.re.to_f64_lossy().to_le_bytes());
        buf.extend_from_slice(&z.im.to_f64_lossy().to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Contents of a binary dump.
#[derive(Debug, Clone, PartialEq)]
pub struct ObdmDump {
    pub n_dim: usize,
    pub n_particles: usize,
    pub data: Vec<Cplx<f64>>,
}

pub fn read_obdm(mut r: impl Read) -> Result<ObdmDump> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head)?;
    if &head[..4] != OBDM_MAGIC {
        return Err(Error::Config("not an OBDM dump (bad magic)".into()));
    }
    let word = |k: usize| u32::from_le_bytes(head[k..k + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != OBDM_FORMAT_VERSION {
        return Err(Error::Config(format!("unsupported OBDM dump version {version}")));
    }
    let n = word(8) as usize;
    let np = word(12) as usize;
    let mut body = vec![0u8; n * n * 16];
    r.read_exact(&mut body)?;
    let data = body
        .chunks_exact(16)
        .map(|c| {
            Cplx::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect();
    Ok(ObdmDump {
        n_dim: n,
        n_particles: np,
        data,
    })
}
