//! Trap potentials and the lowest single-particle eigenstates.
//!
//! Energies live in scaled units where the single-particle Hamiltonian is
//! `p^2/2 + V(zeta)` with `p = -i hbar_eff d/dzeta`; one recoil energy is
//! `hbar_eff^2 / 8`. The kinetic term is the spectral (Fourier-diagonal)
//! operator, the same one the Floquet propagator exponentiates.

use std::sync::Arc;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::grid::{Grid, Orbital};
use crate::linalg::symmetric_lowest_eigenpairs;
use crate::scalar::{tolerance, Cplx, Real};
use crate::units::PhysicalParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrapKind {
    None,
    FlatBottom,
    Gaussian,
}

impl std::str::FromStr for TrapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(TrapKind::None),
            "flat_bottom" | "flat-bottom" => Ok(TrapKind::FlatBottom),
            "gaussian" => Ok(TrapKind::Gaussian),
            other => Err(Error::Config(format!("unknown trap kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for TrapKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrapKind::None => "none",
            TrapKind::FlatBottom => "flat_bottom",
            TrapKind::Gaussian => "gaussian",
        })
    }
}

/// Longitudinal confinement: a Gaussian trap of depth `v1_er` and waist `w1`,
/// minus a Gaussian anti-trap of height `v2_er` and waist `w2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapSpec {
    pub kind: TrapKind,
    pub v1_er: f64,
    pub v2_er: f64,
    /// Waists in metres.
    pub w1: f64,
    pub w2: f64,
    /// Harmonic frequency the Gaussian trap was built from, if any.
    pub harmonic_freq_hz: Option<f64>,
}

impl TrapSpec {
    pub fn none() -> Self {
        TrapSpec {
            kind: TrapKind::None,
            v1_er: 0.0,
            v2_er: 0.0,
            w1: 1.0,
            w2: 1.0,
            harmonic_freq_hz: None,
        }
    }

    pub fn flat_bottom(v1_er: f64, v2_er: f64, w1: f64, w2: f64) -> Self {
        TrapSpec {
            kind: TrapKind::FlatBottom,
            v1_er,
            v2_er,
            w1,
            w2,
            harmonic_freq_hz: None,
        }
    }

    /// The flat-bottom trap used in the experiment.
    pub fn reference_flat_bottom() -> Self {
        Self::flat_bottom(45.7, 9.3, 300e-6, 135e-6)
    }

    /// Single Gaussian trap of waist `waist` whose curvature at the centre
    /// matches a harmonic trap of frequency `freq_hz`.
    pub fn gaussian(freq_hz: f64, waist: f64, params: &PhysicalParams) -> Self {
        TrapSpec {
            kind: TrapKind::Gaussian,
            v1_er: params.gaussian_depth_for_frequency(freq_hz, waist),
            v2_er: 0.0,
            w1: waist,
            w2: waist,
            harmonic_freq_hz: Some(freq_hz),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            TrapKind::None => Ok(()),
            TrapKind::FlatBottom => {
                if !(self.v1_er > self.v2_er && self.v2_er > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "flat-bottom trap needs V1 > V2 > 0, got V1={} V2={}",
                        self.v1_er, self.v2_er
                    )));
                }
                if !(self.w1 > self.w2 && self.w2 > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "flat-bottom trap needs w1 > w2 > 0, got w1={} w2={}",
                        self.w1, self.w2
                    )));
                }
                Ok(())
            }
            TrapKind::Gaussian => {
                if !(self.v1_er > 0.0 && self.w1 > 0.0) {
                    return Err(Error::InvalidParameter("gaussian trap needs positive depth and waist".into()));
                }
                Ok(())
            }
        }
    }

    /// Potential in recoil energies at scaled position `zeta`, before the
    /// minimum shift. `lattice_constant` converts waists to scaled units.
    pub fn potential_er(&self, zeta: f64, lattice_constant: f64) -> f64 {
        // zeta^2 / (2 k_L^2 w^2) with k_L = pi / a
        // exp(-x) - 1, kept accurate near the centre where x is tiny
        let dip = |w: f64| {
            let kw = std::f64::consts::PI * w / lattice_constant;
            (-zeta * zeta / (2.0 * kw * kw)).exp_m1()
        };
        match self.kind {
            TrapKind::None => 0.0,
            TrapKind::Gaussian => -self.v1_er * dip(self.w1),
            TrapKind::FlatBottom => self.v2_er * dip(self.w2) - self.v1_er * dip(self.w1),
        }
    }

    /// Scaled potential on every grid point, minimum shifted to zero.
    pub fn potential_on_grid<T: Real>(&self, grid: &Grid<T>, hbar_eff: f64) -> Result<Vec<T>> {
        self.validate()?;
        let scale = hbar_eff * hbar_eff / 8.0;
        let a = grid.lattice_constant();
        let raw: Vec<f64> = grid
            .zeta()
            .iter()
            .map(|z| self.potential_er(z.to_f64_lossy(), a) * scale)
            .collect();
        let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(raw.into_iter().map(|v| T::lit(v - min)).collect())
    }
}

/// Lowest eigenpairs of the trapped single-particle Hamiltonian.
#[derive(Debug, Clone)]
pub struct EigenSet<T: Real> {
    /// Eigenvalues in scaled energy units, ascending.
    pub scaled_energies: Vec<T>,
    /// Eigenvalues in recoil energies.
    pub energies_er: Vec<f64>,
    pub orbitals: Vec<Orbital<T>>,
    /// Largest `||H psi - E psi||` over the set, scaled units.
    pub max_residual: f64,
    /// Largest `|<psi_i|psi_j> - delta_ij|`.
    pub max_overlap: f64,
}

/// Residual bound every returned eigenpair must meet.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Orthonormality bound of the returned set.
pub const OVERLAP_TOLERANCE: f64 = 1e-10;

/// First column of the circulant spectral kinetic matrix `hbar^2 q^2 / 2`.
fn kinetic_column<T: Real>(grid: &Grid<T>, hbar_eff: T) -> Vec<T> {
    let half = T::lit(0.5) * hbar_eff * hbar_eff;
    let mut col: Vec<Cplx<T>> = grid
        .wavenumbers()
        .iter()
        .map(|&q| Cplx::new(half * q * q, T::zero()))
        .collect();
    let mut scratch = grid.scratch();
    // unitary inverse gives sum/sqrt(n); the circulant entry needs sum/n
    grid.to_position_in_place(&mut col, &mut scratch);
    let s = T::one() / T::from_usize_lossy(grid.n_dim()).sqrt();
    col.into_iter().map(|z| z.re * s).collect()
}

/// Applies `p^2/2 + V` spectrally to a position-space vector.
pub fn apply_hamiltonian<T: Real>(grid: &Grid<T>, potential: &[T], hbar_eff: T, psi: &[Cplx<T>]) -> Vec<Cplx<T>> {
    let half = T::lit(0.5) * hbar_eff * hbar_eff;
    let mut buf = psi.to_vec();
    let mut scratch = grid.scratch();
    grid.to_momentum_in_place(&mut buf, &mut scratch);
    for (z, &q) in buf.iter_mut().zip(grid.wavenumbers()) {
        *z = *z * (half * q * q);
    }
    grid.to_position_in_place(&mut buf, &mut scratch);
    for ((h, &v), &p) in buf.iter_mut().zip(potential).zip(psi) {
        *h = *h + p * v;
    }
    buf
}

fn is_parity_symmetric<T: Real>(potential: &[T]) -> bool {
    let n = potential.len();
    if n % 2 != 0 {
        return false;
    }
    let scale = potential.iter().fold(T::zero(), |m, v| m.max(v.abs())).max(T::one());
    (1..n / 2).all(|j| (potential[j] - potential[n - j]).abs() <= scale * T::lit(1e-12))
}

/// Dense eigen-solve in the full position basis.
fn solve_full<T: Real>(col: &[T], potential: &[T], k: usize) -> (Vec<T>, Vec<Vec<T>>) {
    let n = potential.len();
    let mut h = vec![T::zero(); n * n];
    for j in 0..n {
        for l in 0..n {
            h[j * n + l] = col[(j + n - l) % n];
        }
        h[j * n + j] = h[j * n + j] + potential[j];
    }
    symmetric_lowest_eigenpairs(h, n, k)
}

/// Dense eigen-solve split into reflection-even and -odd blocks under
/// `j -> n - j`. Requires even `n` and a reflection-symmetric potential.
fn solve_parity<T: Real>(col: &[T], potential: &[T], k: usize) -> (Vec<T>, Vec<Vec<T>>) {
    let n = potential.len();
    let half = n / 2;
    let c = |d: usize| col[d % n];
    let r2 = T::lit(2.0).sqrt();
    let inv_r2 = T::one() / r2;

    // even basis: e_0, e_half, (e_j + e_{n-j})/sqrt2 for j in 1..half
    let ne = half + 1;
    let even_site = |a: usize| -> usize {
        if a == 0 {
            0
        } else if a == 1 {
            half
        } else {
            a - 1
        }
    };
    let mut he = vec![T::zero(); ne * ne];
    for a in 0..ne {
        for b in 0..ne {
            let (ja, jb) = (even_site(a), even_site(b));
            let pa = a >= 2;
            let pb = b >= 2;
            let v = match (pa, pb) {
                (false, false) => c((ja + n - jb) % n),
                (false, true) => (c((ja + n - jb) % n) + c((ja + jb) % n)) * inv_r2,
                (true, false) => (c((ja + n - jb) % n) + c((ja + jb) % n)) * inv_r2,
                (true, true) => c((ja + n - jb) % n) + c((ja + jb) % n),
            };
            he[a * ne + b] = v;
        }
        let ja = even_site(a);
        he[a * ne + a] = he[a * ne + a] + potential[ja];
    }
    let no = half - 1;
    let mut ho = vec![T::zero(); no * no];
    for a in 0..no {
        for b in 0..no {
            let (ja, jb) = (a + 1, b + 1);
            ho[a * no + b] = c((ja + n - jb) % n) - c((ja + jb) % n);
        }
        ho[a * no + a] = ho[a * no + a] + potential[a + 1];
    }
    let (ve, xe) = symmetric_lowest_eigenpairs(he, ne, k.min(ne));
    let (vo, xo) = symmetric_lowest_eigenpairs(ho, no, k.min(no));

    let mut merged: Vec<(T, Vec<T>)> = Vec::with_capacity(ve.len() + vo.len());
    for (val, x) in ve.into_iter().zip(xe) {
        let mut full = vec![T::zero(); n];
        full[0] = x[0];
        full[half] = x[1];
        for a in 2..ne {
            let j = a - 1;
            full[j] = x[a] * inv_r2;
            full[n - j] = x[a] * inv_r2;
        }
        merged.push((val, full));
    }
    for (val, x) in vo.into_iter().zip(xo) {
        let mut full = vec![T::zero(); n];
        for a in 0..no {
            let j = a + 1;
            full[j] = x[a] * inv_r2;
            full[n - j] = -x[a] * inv_r2;
        }
        merged.push((val, full));
    }
    merged.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    merged.truncate(k);
    merged.into_iter().unzip()
}

/// The `n_states` lowest eigenpairs of `p^2/2 + V` on `grid`.
///
/// Each orbital is normalised with the grid measure and carries a global
/// phase making its largest-magnitude component real and positive.
pub fn lowest_eigenstates<T: Real>(
    grid: &Arc<Grid<T>>,
    potential: &[T],
    hbar_eff: T,
    n_states: usize,
) -> Result<EigenSet<T>> {
    let n = grid.n_dim();
    if n_states == 0 || n_states >= n {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= n_states < n_dim, got {n_states} for n_dim={n}"
        )));
    }
    if potential.len() != n {
        return Err(Error::GridMismatch(format!(
            "potential has {} points, grid {}",
            potential.len(),
            n
        )));
    }
    let col = kinetic_column(grid, hbar_eff);
    let (vals, vecs) = if is_parity_symmetric(potential) && n_states < n / 2 {
        solve_parity(&col, potential, n_states)
    } else {
        solve_full(&col, potential, n_states)
    };

    let inv_sqrt_dz = T::one() / grid.dz().sqrt();
    let orbitals: Vec<Orbital<T>> = vecs
        .into_iter()
        .map(|v| {
            let (imax, _) = v
                .iter()
                .enumerate()
                .fold((0, T::zero()), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) });
            let sign = if v[imax] < T::zero() { -T::one() } else { T::one() };
            let amps = v
                .iter()
                .map(|&x| Cplx::new(x * sign * inv_sqrt_dz, T::zero()))
                .collect();
            Orbital::new(grid.clone(), amps).expect("grid sized")
        })
        .collect();

    let mut max_residual = 0.0f64;
    for (o, &e) in orbitals.iter().zip(&vals) {
        let h = apply_hamiltonian(grid, potential, hbar_eff, o.amplitudes());
        let r: T = h
            .iter()
            .zip(o.amplitudes())
            .map(|(hv, &p)| (*hv - p * e).norm_sqr())
            .sum::<T>()
            * grid.dz();
        max_residual = max_residual.max(r.sqrt().to_f64_lossy());
    }
    let mut max_overlap = 0.0f64;
    for i in 0..orbitals.len() {
        for j in 0..=i {
            let s = orbitals[i].inner(&orbitals[j]);
            let want = if i == j { Cplx::new(T::one(), T::zero()) } else { Cplx::zero() };
            max_overlap = max_overlap.max((s - want).norm().to_f64_lossy());
        }
    }
    let (res_tol, ovl_tol) = (tolerance::<T>(RESIDUAL_TOLERANCE), tolerance::<T>(OVERLAP_TOLERANCE));
    if max_residual > res_tol {
        return Err(Error::Convergence(format!(
            "eigen-solve residual {max_residual:.3e} exceeds {res_tol:.1e}"
        )));
    }
    if max_overlap > ovl_tol {
        return Err(Error::invariant("eigenvector orthonormality", max_overlap, ovl_tol));
    }
    let recoil = hbar_eff.to_f64_lossy().powi(2) / 8.0;
    Ok(EigenSet {
        energies_er: vals.iter().map(|v| v.to_f64_lossy() / recoil).collect(),
        scaled_energies: vals,
        orbitals,
        max_residual,
        max_overlap,
    })
}
