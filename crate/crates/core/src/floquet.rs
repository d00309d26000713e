//! Stroboscopic split-step evolution under periodic delta kicks, finite
//! square pulses and period-jittered random kicks.
//!
//! One period in scaled time has unit length. Free evolution over `dt`
//! is `exp[-i (hbar_eff q^2/2 + V/hbar_eff) dt]`; a delta kick is
//! `exp[-i (K/hbar_eff) cos zeta]`.

use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{BoundaryMonitor, Grid, Orbital};
use crate::scalar::{phase_factor, tolerance, Cplx, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KickKind {
    PeriodicDelta,
    PeriodicSquare,
    Random,
}

impl FromStr for KickKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic_delta" | "delta" => Ok(KickKind::PeriodicDelta),
            "periodic_square" | "square" => Ok(KickKind::PeriodicSquare),
            "random" => Ok(KickKind::Random),
            other => Err(Error::Config(format!("unknown kick kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for KickKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KickKind::PeriodicDelta => "periodic_delta",
            KickKind::PeriodicSquare => "periodic_square",
            KickKind::Random => "random",
        })
    }
}

/// Operator splitting of each exponential of non-commuting terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Splitting {
    /// `V/2, T, V/2`.
    Strang,
    /// `V` then `T`.
    Lie,
}

impl FromStr for Splitting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strang" => Ok(Splitting::Strang),
            "lie" => Ok(Splitting::Lie),
            other => Err(Error::Config(format!("unknown splitting '{other}'"))),
        }
    }
}

impl std::fmt::Display for Splitting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Splitting::Strang => "strang",
            Splitting::Lie => "lie",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KickSchedule {
    pub kind: KickKind,
    pub n_kicks: usize,
    /// Dimensionless kick strength `K`.
    pub kick_strength: f64,
    /// `T_p / T`, used by square pulses.
    pub pulse_fraction: f64,
    pub sub_steps: usize,
    pub rng_seed: u64,
    pub period_jitter: f64,
    pub splitting: Splitting,
}

impl KickSchedule {
    pub fn delta(n_kicks: usize, kick_strength: f64) -> Self {
        KickSchedule {
            kind: KickKind::PeriodicDelta,
            n_kicks,
            kick_strength,
            pulse_fraction: 1.0 / 6.0,
            sub_steps: 8,
            rng_seed: 0,
            period_jitter: 0.0,
            splitting: Splitting::Strang,
        }
    }

    pub fn square(n_kicks: usize, kick_strength: f64, pulse_fraction: f64, sub_steps: usize) -> Self {
        KickSchedule {
            kind: KickKind::PeriodicSquare,
            pulse_fraction,
            sub_steps,
            ..Self::delta(n_kicks, kick_strength)
        }
    }

    pub fn random(n_kicks: usize, kick_strength: f64, period_jitter: f64, rng_seed: u64) -> Self {
        KickSchedule {
            kind: KickKind::Random,
            period_jitter,
            rng_seed,
            ..Self::delta(n_kicks, kick_strength)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sub_steps == 0 {
            return Err(Error::InvalidParameter("sub_steps must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.period_jitter) {
            return Err(Error::InvalidParameter(format!(
                "period jitter must lie in [0, 1), got {}",
                self.period_jitter
            )));
        }
        if self.kind == KickKind::PeriodicSquare && !(self.pulse_fraction > 0.0 && self.pulse_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "pulse fraction must lie in (0, 1), got {}",
                self.pulse_fraction
            )));
        }
        if !self.kick_strength.is_finite() {
            return Err(Error::InvalidParameter("kick strength must be finite".into()));
        }
        Ok(())
    }

    /// Free-evolution duration preceding kick `kick_index` (1-based) in
    /// units of the period. Deterministic in `(rng_seed, kick_index)`.
    pub fn free_duration(&self, kick_index: usize) -> f64 {
        match self.kind {
            KickKind::Random if self.period_jitter > 0.0 => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
                rng.set_stream(kick_index as u64);
                let u: f64 = rng.gen();
                1.0 + self.period_jitter * (2.0 * u - 1.0)
            }
            KickKind::PeriodicSquare => 1.0 - self.pulse_fraction,
            _ => 1.0,
        }
    }
}

/// Position- and momentum-diagonal factors of one split exponential.
#[derive(Debug, Clone)]
struct SplitFactors<T: Real> {
    /// Applied in position space (half step for Strang, full for Lie).
    position: Vec<Cplx<T>>,
    momentum: Vec<Cplx<T>>,
}

/// Precomputed one-period propagator shared by every orbital.
#[derive(Debug, Clone)]
pub struct Floquet<T: Real> {
    grid: Arc<Grid<T>>,
    hbar_eff: T,
    schedule: KickSchedule,
    potential: Vec<T>,
    free: SplitFactors<T>,
    kick: Vec<Cplx<T>>,
    pulse: Option<SplitFactors<T>>,
    pub monitor: BoundaryMonitor,
}

impl<T: Real> Floquet<T> {
    pub fn new(grid: Arc<Grid<T>>, hbar_eff: f64, schedule: KickSchedule, potential: Vec<T>) -> Result<Self> {
        schedule.validate()?;
        if potential.len() != grid.n_dim() {
            return Err(Error::GridMismatch(format!(
                "potential has {} points, grid {}",
                potential.len(),
                grid.n_dim()
            )));
        }
        if !(hbar_eff > 0.0) {
            return Err(Error::InvalidParameter(format!("hbar_eff must be positive, got {hbar_eff}")));
        }
        let h = T::lit(hbar_eff);
        let k_over_h = T::lit(schedule.kick_strength / hbar_eff);
        let kick = grid.zeta().iter().map(|&z| phase_factor(k_over_h * z.cos())).collect();
        let mut prop = Floquet {
            free: SplitFactors {
                position: Vec::new(),
                momentum: Vec::new(),
            },
            pulse: None,
            kick,
            grid,
            hbar_eff: h,
            schedule,
            potential,
            monitor: BoundaryMonitor::default(),
        };
        prop.free = prop.free_factors(prop.schedule.free_duration(0));
        if prop.schedule.kind == KickKind::PeriodicSquare {
            prop.pulse = Some(prop.pulse_factors());
        }
        Ok(prop)
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn schedule(&self) -> &KickSchedule {
        &self.schedule
    }

    pub fn potential(&self) -> &[T] {
        &self.potential
    }

    pub fn hbar_eff(&self) -> T {
        self.hbar_eff
    }

    fn position_weight(&self) -> T {
        match self.schedule.splitting {
            Splitting::Strang => T::lit(0.5),
            Splitting::Lie => T::one(),
        }
    }

    fn kinetic_factors(&self, dt: T) -> Vec<Cplx<T>> {
        let half = T::lit(0.5) * self.hbar_eff;
        self.grid
            .wavenumbers()
            .iter()
            .map(|&q| phase_factor(half * q * q * dt))
            .collect()
    }

    fn free_factors(&self, dt: f64) -> SplitFactors<T> {
        let dt = T::lit(dt);
        let w = self.position_weight() * dt / self.hbar_eff;
        SplitFactors {
            position: self.potential.iter().map(|&v| phase_factor(v * w)).collect(),
            momentum: self.kinetic_factors(dt),
        }
    }

    /// One sub-step of the pulse: potential plus `K cos(zeta) / f` spread
    /// over the pulse duration `f`.
    fn pulse_factors(&self) -> SplitFactors<T> {
        let f = T::lit(self.schedule.pulse_fraction);
        let h = f / T::from_usize_lossy(self.schedule.sub_steps);
        let kick_rate = T::lit(self.schedule.kick_strength) / f;
        let w = self.position_weight() * h / self.hbar_eff;
        SplitFactors {
            position: self
                .potential
                .iter()
                .zip(self.grid.zeta())
                .map(|(&v, &z)| phase_factor((v + kick_rate * z.cos()) * w))
                .collect(),
            momentum: self.kinetic_factors(h),
        }
    }

    fn apply_split(&self, f: &SplitFactors<T>, amps: &mut [Cplx<T>], scratch: &mut [Cplx<T>]) {
        for (a, p) in amps.iter_mut().zip(&f.position) {
            *a = *a * p;
        }
        self.grid.to_momentum_in_place(amps, scratch);
        for (a, p) in amps.iter_mut().zip(&f.momentum) {
            *a = *a * p;
        }
        self.grid.to_position_in_place(amps, scratch);
        if self.schedule.splitting == Splitting::Strang {
            for (a, p) in amps.iter_mut().zip(&f.position) {
                *a = *a * p;
            }
        }
    }

    fn apply_kick(&self, amps: &mut [Cplx<T>]) {
        for (a, k) in amps.iter_mut().zip(&self.kick) {
            *a = *a * k;
        }
    }

    /// Free evolution for one period, then a delta kick.
    pub fn step_delta(&self, amps: &mut [Cplx<T>], scratch: &mut [Cplx<T>]) {
        let free = if self.schedule.kind == KickKind::PeriodicSquare {
            self.free_factors(1.0)
        } else {
            self.free.clone()
        };
        self.apply_split(&free, amps, scratch);
        self.apply_kick(amps);
    }

    /// Free evolution for `1 - T_p/T`, then the pulse in `sub_steps`
    /// split sub-steps.
    pub fn step_square(&self, amps: &mut [Cplx<T>], scratch: &mut [Cplx<T>]) {
        let owned;
        let (free, pulse) = match &self.pulse {
            Some(p) => (&self.free, p),
            None => {
                owned = (self.free_factors(1.0 - self.schedule.pulse_fraction), self.pulse_factors());
                (&owned.0, &owned.1)
            }
        };
        self.apply_split(free, amps, scratch);
        for _ in 0..self.schedule.sub_steps {
            self.apply_split(pulse, amps, scratch);
        }
    }

    /// Delta kick after a free evolution of jittered duration.
    pub fn step_random(&self, amps: &mut [Cplx<T>], kick_index: usize, scratch: &mut [Cplx<T>]) {
        let free = self.free_factors(self.schedule.free_duration(kick_index));
        self.apply_split(&free, amps, scratch);
        self.apply_kick(amps);
    }

    /// Applies kick number `kick_index` (1-based) per the schedule kind.
    pub fn step(&self, amps: &mut [Cplx<T>], kick_index: usize, scratch: &mut [Cplx<T>]) {
        match self.schedule.kind {
            KickKind::PeriodicDelta => self.step_delta(amps, scratch),
            KickKind::PeriodicSquare => self.step_square(amps, scratch),
            KickKind::Random => self.step_random(amps, kick_index, scratch),
        }
    }

    /// Steps a whole orbital by one kick, returning its boundary occupancy.
    pub fn step_orbital(&self, orb: &mut Orbital<T>, kick_index: usize) -> Result<f64> {
        if !Arc::ptr_eq(orb.grid(), &self.grid) && orb.grid().n_dim() != self.grid.n_dim() {
            return Err(Error::GridMismatch("orbital and propagator grids differ".into()));
        }
        let mut scratch = self.grid.scratch();
        self.step(orb.amplitudes_mut(), kick_index, &mut scratch);
        let occ = self.monitor.occupancy(orb.amplitudes(), self.grid.dz()).to_f64_lossy();
        self.monitor.check(occ)?;
        Ok(occ)
    }
}

/// Orbitals at one recorded kick count.
#[derive(Debug, Clone)]
pub struct Snapshot<T: Real> {
    pub kick: usize,
    pub orbitals: Vec<Orbital<T>>,
    /// Largest edge occupancy of any orbital at this kick.
    pub boundary_occupancy: f64,
    /// Largest edge occupancy seen so far in the run.
    pub max_boundary_occupancy: f64,
    /// `max |<psi_i|psi_j> - delta_ij|`.
    pub orthonormality_defect: f64,
}

/// Orthonormality tolerance of an evolved set.
pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-8;

pub fn orthonormality_defect<T: Real>(orbitals: &[Orbital<T>]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..orbitals.len() {
        for j in 0..=i {
            let s = orbitals[i].inner(&orbitals[j]);
            let d = if i == j {
                (s - Cplx::new(T::one(), T::zero())).norm()
            } else {
                s.norm()
            };
            worst = worst.max(d.to_f64_lossy());
        }
    }
    worst
}

/// Evolves `orbitals` through the schedule, handing a snapshot to `sink`
/// at each kick count in `record_at` (ascending; 0 records the input).
pub fn evolve_with<T: Real>(
    prop: &Floquet<T>,
    mut orbitals: Vec<Orbital<T>>,
    record_at: &[usize],
    mut sink: impl FnMut(Snapshot<T>) -> Result<()>,
) -> Result<Vec<Orbital<T>>> {
    if record_at.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("record ladder must be strictly increasing".into()));
    }
    let last = record_at.last().copied().unwrap_or(0).max(prop.schedule.n_kicks);
    let initial = orthonormality_defect(&orbitals);
    let tol = tolerance::<T>(ORTHONORMALITY_TOLERANCE);
    if initial > tol {
        return Err(Error::invariant("input orthonormality", initial, tol));
    }
    let dz = prop.grid.dz();
    let occupancy = |orbs: &[Orbital<T>]| {
        orbs.iter()
            .map(|o| prop.monitor.occupancy(o.amplitudes(), dz).to_f64_lossy())
            .fold(0.0, f64::max)
    };
    let mut max_occ = occupancy(&orbitals);
    let mut next = 0;
    let mut scratch = prop.grid.scratch();
    let mut warned = false;
    for kick in 0..=last {
        if kick > 0 {
            for o in orbitals.iter_mut() {
                prop.step(o.amplitudes_mut(), kick, &mut scratch);
            }
            let occ = occupancy(&orbitals);
            max_occ = max_occ.max(occ);
            if let Err(e) = prop.monitor.check(occ) {
                return Err(e.at_kick(kick));
            }
            if occ > prop.monitor.limit && !warned {
                log::warn!(
                    "kick {kick}: edge occupancy {occ:.3e} exceeds {:.1e}",
                    prop.monitor.limit
                );
                warned = true;
            }
        }
        if next < record_at.len() && record_at[next] == kick {
            next += 1;
            let defect = orthonormality_defect(&orbitals);
            if defect > tol {
                return Err(Error::invariant("orthonormality", defect, tol).at_kick(kick));
            }
            sink(Snapshot {
                kick,
                orbitals: orbitals.clone(),
                boundary_occupancy: occupancy(&orbitals),
                max_boundary_occupancy: max_occ,
                orthonormality_defect: defect,
            })
            .map_err(|e| e.at_kick(kick))?;
        }
    }
    Ok(orbitals)
}

/// Collecting form of [`evolve_with`].
pub fn evolve<T: Real>(prop: &Floquet<T>, orbitals: Vec<Orbital<T>>, record_at: &[usize]) -> Result<Vec<Snapshot<T>>> {
    let mut out = Vec::with_capacity(record_at.len());
    evolve_with(prop, orbitals, record_at, |s| {
        out.push(s);
        Ok(())
    })?;
    Ok(out)
}
