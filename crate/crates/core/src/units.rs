//! Laboratory parameters and the dimensionless kicked-rotor constants.
//!
//! Scaled variables: position `zeta = 2 k_L z`, time `tau = t / T`, momentum
//! `p = 2 k_L T P / m`. With these, `p = hbar_eff` corresponds to `P = 2 hbar
//! k_L`, the grid wavenumber `q` conjugate to `zeta` relates to the physical
//! wavenumber by `k / k_L = 2 q`, and one recoil energy is `hbar_eff^2 / 8`
//! scaled energy units.
//!
//! This module always works in `f64`: SI magnitudes such as `hbar^2` are
//! below the `f32` normal range.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Atomic mass unit (kg).
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Mass of caesium-133 (kg).
pub const CS133_MASS: f64 = 132.905_451_961 * ATOMIC_MASS_UNIT;
/// Lattice spacing of the 1064.5 nm standing wave (m).
pub const CS_LATTICE_SPACING: f64 = 532.25e-9;

/// Name of the built-in species preset.
pub const CESIUM_PRESET: &str = "cesium-1064";

/// Laboratory inputs. Depths are in recoil energies, everything else SI.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    pub lattice_constant: f64,
    pub particle_mass: f64,
    pub kick_period: f64,
    pub pulse_width: f64,
    pub kick_depth_er: f64,
    pub trap_depth_er: f64,
    pub antitrap_depth_er: f64,
    pub trap_waist: f64,
    pub antitrap_waist: f64,
}

impl PhysicalParams {
    /// Caesium in a 1064 nm lattice, `T = 60 us`, `T_p = 10 us`, `V_z = 20
    /// E_r`, with the flat-bottom trap.
    pub fn cesium_1064() -> Self {
        PhysicalParams {
            lattice_constant: CS_LATTICE_SPACING,
            particle_mass: CS133_MASS,
            kick_period: 60e-6,
            pulse_width: 10e-6,
            kick_depth_er: 20.0,
            trap_depth_er: 45.7,
            antitrap_depth_er: 9.3,
            trap_waist: 300e-6,
            antitrap_waist: 135e-6,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            CESIUM_PRESET => Ok(Self::cesium_1064()),
            other => Err(Error::Config(format!("unknown species preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lattice_constant", self.lattice_constant),
            ("particle_mass", self.particle_mass),
            ("kick_period", self.kick_period),
            ("pulse_width", self.pulse_width),
            ("trap_depth", self.trap_depth_er),
            ("antitrap_depth", self.antitrap_depth_er),
            ("trap_waist", self.trap_waist),
            ("antitrap_waist", self.antitrap_waist),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.kick_depth_er >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kick depth must be non-negative, got {}",
                self.kick_depth_er
            )));
        }
        if self.pulse_width >= self.kick_period {
            return Err(Error::InvalidParameter(format!(
                "pulse width {} must be shorter than the period {}",
                self.pulse_width, self.kick_period
            )));
        }
        Ok(())
    }

    /// Lattice wavenumber `k_L = pi / a`.
    pub fn k_lattice(&self) -> f64 {
        PI / self.lattice_constant
    }

    /// Recoil energy `pi^2 hbar^2 / (2 m a^2)` in joules.
    pub fn recoil_energy(&self) -> f64 {
        PI * PI * HBAR * HBAR / (2.0 * self.particle_mass * self.lattice_constant * self.lattice_constant)
    }

    /// `E_r / hbar` in 1/s.
    pub fn recoil_rate(&self) -> f64 {
        self.recoil_energy() / HBAR
    }

    /// Depth (in `E_r`) of a single Gaussian beam of waist `w` whose
    /// harmonic approximation oscillates at `freq_hz`.
    pub fn gaussian_depth_for_frequency(&self, freq_hz: f64, waist: f64) -> f64 {
        let omega = 2.0 * PI * freq_hz;
        self.particle_mass * omega * omega * waist * waist / 4.0 / self.recoil_energy()
    }
}

/// Dimensionless constants of the scaled Floquet problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledParams {
    pub hbar_eff: f64,
    /// Kick strength `K = hbar_eff * kappa`.
    pub kick_strength: f64,
    pub kappa: f64,
    /// `T_p / T`.
    pub pulse_fraction: f64,
    /// `E_r / hbar` (1/s).
    pub recoil_rate: f64,
}

impl ScaledParams {
    /// Scaled energy corresponding to one recoil energy.
    pub fn recoil_in_scaled(&self) -> f64 {
        self.hbar_eff * self.hbar_eff / 8.0
    }

    /// Converts `<p^2>/2` (scaled units) to `<(P / hbar k_L)^2> E_r`, in E_r.
    pub fn energy_to_recoils(&self, p2_mean: f64) -> f64 {
        energy_to_recoils(self.hbar_eff, p2_mean)
    }

    /// Scaled frequency `omega T` of a harmonic oscillation at `freq_hz` given
    /// the kick period.
    pub fn scaled_angular_frequency(freq_hz: f64, kick_period: f64) -> f64 {
        2.0 * PI * freq_hz * kick_period
    }
}

/// Reduces laboratory parameters to `hbar_eff`, `kappa` and `K`.
pub fn derive_scaled(params: &PhysicalParams) -> Result<ScaledParams> {
    params.validate()?;
    let rate = params.recoil_rate();
    let hbar_eff = 8.0 * params.kick_period * rate;
    let kappa = params.kick_depth_er * rate * params.pulse_width / 2.0;
    Ok(ScaledParams {
        hbar_eff,
        kick_strength: hbar_eff * kappa,
        kappa,
        pulse_fraction: params.pulse_width / params.kick_period,
        recoil_rate: rate,
    })
}

/// `<(P / hbar k_L)^2>` in recoil energies from the scaled `<p^2>/2`.
pub fn energy_to_recoils(hbar_eff: f64, p2_mean: f64) -> f64 {
    let s = 2.0 / hbar_eff;
    s * s * 2.0 * p2_mean
}
