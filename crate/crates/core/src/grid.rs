//! Periodic position grid, its momentum lattice and the unitary spectral
//! transform between them.

use std::fmt;
use std::sync::Arc;

use num_traits::Zero;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::{Cplx, Real};

/// Uniform periodic grid over the scaled coordinate `zeta in [-Z/2, Z/2)`.
///
/// Wavenumbers `q` are the discrete frequencies conjugate to `zeta` in FFT
/// order; the physical momentum in units of `k_L` is `2 q`.
#[derive(Clone)]
pub struct Grid<T: Real> {
    n_dim: usize,
    span: T,
    dz: T,
    lattice_constant: f64,
    zeta: Vec<T>,
    wavenumbers: Vec<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for Grid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n_dim", &self.n_dim)
            .field("span", &self.span)
            .field("dz", &self.dz)
            .field("lattice_constant", &self.lattice_constant)
            .finish()
    }
}

/// Smallest supported grid.
pub const MIN_POINTS: usize = 8;

impl<T: Real> Grid<T> {
    /// Grid of `n_dim` points over a box of physical length `length_z` (m)
    /// for a lattice of spacing `lattice_constant` (m).
    pub fn new(n_dim: usize, length_z: f64, lattice_constant: f64) -> Result<Self> {
        if !(length_z > 0.0) || !length_z.is_finite() {
            return Err(Error::InvalidParameter(format!("box length must be positive, got {length_z}")));
        }
        if !(lattice_constant > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lattice constant must be positive, got {lattice_constant}"
            )));
        }
        let span = 2.0 * std::f64::consts::PI * length_z / lattice_constant;
        Self::with_span(n_dim, span, lattice_constant)
    }

    /// Grid whose length is rounded to a whole number of lattice sites, so
    /// that `cos(zeta)` is exactly periodic on the box.
    pub fn commensurate(n_dim: usize, length_z: f64, lattice_constant: f64) -> Result<Self> {
        let sites = (length_z / lattice_constant).round().max(1.0);
        Self::new(n_dim, sites * lattice_constant, lattice_constant)
    }

    /// Grid directly in scaled units: `span` is `Z`.
    pub fn with_span(n_dim: usize, span: f64, lattice_constant: f64) -> Result<Self> {
        if n_dim < MIN_POINTS {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least {MIN_POINTS} points, got {n_dim}"
            )));
        }
        if !(span > 0.0) || !span.is_finite() {
            return Err(Error::InvalidParameter(format!("grid span must be positive, got {span}")));
        }
        let dz64 = span / n_dim as f64;
        let zeta = (0..n_dim)
            .map(|j| T::lit(-span / 2.0 + j as f64 * dz64))
            .collect();
        let dq = 2.0 * std::f64::consts::PI / span;
        let wavenumbers = (0..n_dim)
            .map(|j| {
                let signed = if j <= n_dim / 2 && !(n_dim % 2 == 0 && j == n_dim / 2) {
                    j as f64
                } else if n_dim % 2 == 0 && j == n_dim / 2 {
                    // Nyquist bin reported on the negative side
                    -(j as f64)
                } else {
                    j as f64 - n_dim as f64
                };
                T::lit(signed * dq)
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Grid {
            n_dim,
            span: T::lit(span),
            dz: T::lit(dz64),
            lattice_constant,
            zeta,
            wavenumbers,
            forward: planner.plan_fft_forward(n_dim),
            inverse: planner.plan_fft_inverse(n_dim),
        })
    }

    pub fn n_dim(&self) -> usize {
        self.n_dim
    }

    /// Box length `Z` in scaled units.
    pub fn span(&self) -> T {
        self.span
    }

    pub fn dz(&self) -> T {
        self.dz
    }

    /// Wavenumber spacing `2 pi / Z`.
    pub fn dq(&self) -> T {
        T::lit(2.0) * T::PI() / self.span
    }

    pub fn lattice_constant(&self) -> f64 {
        self.lattice_constant
    }

    /// Number of kick-lattice periods in the box.
    pub fn lattice_sites(&self) -> f64 {
        self.span.to_f64_lossy() / (2.0 * std::f64::consts::PI)
    }

    pub fn zeta(&self) -> &[T] {
        &self.zeta
    }

    /// Grid wavenumbers `q` in FFT order.
    pub fn wavenumbers(&self) -> &[T] {
        &self.wavenumbers
    }

    /// Momentum of bin `j` in units of `k_L`.
    pub fn k_of_bin(&self, j: usize) -> T {
        T::lit(2.0) * self.wavenumbers[j]
    }

    /// Bin indices ordered by ascending momentum.
    pub fn ascending_bins(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.n_dim).collect();
        idx.sort_by(|&a, &b| {
            self.wavenumbers[a]
                .partial_cmp(&self.wavenumbers[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        idx
    }

    /// Scaled distance `zeta` converted to units of the lattice spacing.
    pub fn zeta_to_lattice_units(&self, zeta: T) -> T {
        zeta / (T::lit(2.0) * T::PI())
    }

    /// Position of point `j` in metres.
    pub fn position_m(&self, j: usize) -> f64 {
        self.zeta[j].to_f64_lossy() / (2.0 * std::f64::consts::PI) * self.lattice_constant
    }

    /// Scratch length needed by the in-place transforms.
    pub fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }

    /// Unitary forward transform (position to momentum), in place.
    pub fn to_momentum_in_place(&self, buf: &mut [Cplx<T>], scratch: &mut [Cplx<T>]) {
        self.forward.process_with_scratch(buf, scratch);
        let s = T::one() / T::from_usize_lossy(self.n_dim).sqrt();
        buf.iter_mut().for_each(|z| *z = *z * s);
    }

    /// Unitary inverse transform (momentum to position), in place.
    pub fn to_position_in_place(&self, buf: &mut [Cplx<T>], scratch: &mut [Cplx<T>]) {
        self.inverse.process_with_scratch(buf, scratch);
        let s = T::one() / T::from_usize_lossy(self.n_dim).sqrt();
        buf.iter_mut().for_each(|z| *z = *z * s);
    }

    pub fn scratch(&self) -> Vec<Cplx<T>> {
        vec![Cplx::zero(); self.scratch_len()]
    }
}

/// Which basis the amplitudes of an [`Orbital`] are expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Position,
    Momentum,
}

/// Single-particle wavefunction on a grid.
///
/// Normalisation is `sum |psi_j|^2 dz = 1`. Momentum amplitudes come from
/// the unitary DFT and therefore carry the same measure.
#[derive(Debug, Clone)]
pub struct Orbital<T: Real> {
    grid: Arc<Grid<T>>,
    amps: Vec<Cplx<T>>,
    repr: Representation,
}

impl<T: Real> Orbital<T> {
    pub fn new(grid: Arc<Grid<T>>, amps: Vec<Cplx<T>>) -> Result<Self> {
        if amps.len() != grid.n_dim() {
            return Err(Error::GridMismatch(format!(
                "{} amplitudes for a {}-point grid",
                amps.len(),
                grid.n_dim()
            )));
        }
        Ok(Orbital {
            grid,
            amps,
            repr: Representation::Position,
        })
    }

    /// Samples `f(zeta)` on the grid and normalises.
    pub fn from_fn(grid: Arc<Grid<T>>, f: impl Fn(T) -> Cplx<T>) -> Self {
        let amps = grid.zeta().iter().map(|&z| f(z)).collect();
        let mut o = Orbital {
            grid,
            amps,
            repr: Representation::Position,
        };
        o.normalize();
        o
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Cplx<T>] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Cplx<T>] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Cplx<T>> {
        self.amps
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn norm_sqr(&self) -> T {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<T>() * self.grid.dz()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > T::zero() {
            let s = T::one() / n;
            self.amps.iter_mut().for_each(|z| *z = *z * s);
        }
    }

    /// `<self|other>` with the grid measure; both must share a representation.
    pub fn inner(&self, other: &Orbital<T>) -> Cplx<T> {
        debug_assert_eq!(self.repr, other.repr);
        let s: Cplx<T> = self
            .amps
            .iter()
            .zip(&other.amps)
            .fold(Cplx::zero(), |acc, (a, b)| acc + a.conj() * b);
        s * self.grid.dz()
    }

    pub fn to_momentum(&self) -> Orbital<T> {
        match self.repr {
            Representation::Momentum => self.clone(),
            Representation::Position => {
                let mut amps = self.amps.clone();
                let mut scratch = self.grid.scratch();
                self.grid.to_momentum_in_place(&mut amps, &mut scratch);
                Orbital {
                    grid: self.grid.clone(),
                    amps,
                    repr: Representation::Momentum,
                }
            }
        }
    }

    pub fn to_position(&self) -> Orbital<T> {
        match self.repr {
            Representation::Position => self.clone(),
            Representation::Momentum => {
                let mut amps = self.amps.clone();
                let mut scratch = self.grid.scratch();
                self.grid.to_position_in_place(&mut amps, &mut scratch);
                Orbital {
                    grid: self.grid.clone(),
                    amps,
                    repr: Representation::Position,
                }
            }
        }
    }

    /// Cyclic shift by `sites` grid points (position representation).
    pub fn translated(&self, sites: isize) -> Orbital<T> {
        let n = self.amps.len() as isize;
        let amps = (0..n)
            .map(|j| self.amps[((j - sites).rem_euclid(n)) as usize])
            .collect();
        Orbital {
            grid: self.grid.clone(),
            amps,
            repr: self.repr,
        }
    }
}

/// Guards the periodic-box approximation: the probability found in the
/// outermost `edge_fraction` of the grid must stay below `limit`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryMonitor {
    pub edge_fraction: f64,
    pub limit: f64,
    /// When false, violations are only reported, not raised.
    pub enforce: bool,
}

impl Default for BoundaryMonitor {
    fn default() -> Self {
        BoundaryMonitor {
            edge_fraction: 0.05,
            limit: 1e-6,
            enforce: true,
        }
    }
}

impl BoundaryMonitor {
    /// Number of edge points on each side.
    fn edge_points(&self, n: usize) -> usize {
        ((n as f64 * self.edge_fraction / 2.0).ceil() as usize).clamp(1, n / 2)
    }

    /// Probability in the edge region of a position-space amplitude vector
    /// normalised with measure `dz`.
    pub fn occupancy<T: Real>(&self, amps: &[Cplx<T>], dz: T) -> T {
        let m = self.edge_points(amps.len());
        let n = amps.len();
        let edge: T = amps[..m]
            .iter()
            .chain(&amps[n - m..])
            .map(|z| z.norm_sqr())
            .sum();
        edge * dz
    }

    pub fn check(&self, occupancy: f64) -> Result<()> {
        if self.enforce && occupancy > self.limit {
            Err(Error::Boundary {
                occupancy,
                limit: self.limit,
            })
        } else {
            Ok(())
        }
    }
}
