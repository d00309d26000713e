//! Momentum distributions and everything derived from them: kinetic
//! energy, information entropy, Jensen-Shannon divergence, first-order
//! correlation functions, decay fits and the `k^4 n(k)` tail.

use std::str::FromStr;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::grid::Orbital;
use crate::scalar::{Cplx, Real};
use crate::tonks::Obdm;

/// Relative tolerance on the imaginary part / negativity of `n(k)`.
pub const NK_TOLERANCE: f64 = 1e-10;

/// Momentum distribution on ascending bins `k` (units of `k_L`), with
/// `sum n(k) dk = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumDist {
    pub k: Vec<f64>,
    pub n_of_k: Vec<f64>,
    pub dk: f64,
}

impl MomentumDist {
    /// Builds a normalised distribution from non-negative weights on
    /// ascending bins.
    pub fn from_weights(k: Vec<f64>, weights: Vec<f64>, dk: f64) -> Result<Self> {
        if k.len() != weights.len() || k.is_empty() {
            return Err(Error::GridMismatch("k grid and weights differ in length".into()));
        }
        let total: f64 = weights.iter().sum::<f64>() * dk;
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("distribution has no weight".into()));
        }
        Ok(MomentumDist {
            n_of_k: weights.into_iter().map(|w| w / total).collect(),
            k,
            dk,
        })
    }

    /// Bin probabilities `n(k) dk`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.n_of_k.iter().map(|n| n * self.dk).collect()
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    fn same_grid(&self, other: &MomentumDist) -> bool {
        self.k.len() == other.k.len()
            && (self.dk - other.dk).abs() <= 1e-12 * self.dk.abs()
            && self.k.iter().zip(&other.k).all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + a.abs()))
    }

    /// Gaussian blur of width `sigma` (units of `k_L`), renormalised.
    pub fn blurred(&self, sigma: f64) -> MomentumDist {
        if !(sigma > 0.0) {
            return self.clone();
        }
        let reach = (5.0 * sigma / self.dk).ceil() as isize;
        let kernel: Vec<f64> = (-reach..=reach)
            .map(|d| {
                let x = d as f64 * self.dk / sigma;
                (-0.5 * x * x).exp()
            })
            .collect();
        let n = self.n_of_k.len() as isize;
        let out: Vec<f64> = (0..n)
            .map(|i| {
                (-reach..=reach)
                    .filter(|d| (0..n).contains(&(i + d)))
                    .map(|d| kernel[(d + reach) as usize] * self.n_of_k[(i + d) as usize])
                    .sum()
            })
            .collect();
        MomentumDist::from_weights(self.k.clone(), out, self.dk).expect("blur keeps weight")
    }
}

/// `|<k|psi>|^2` for one orbital.
pub fn momentum_dist_single<T: Real>(orb: &Orbital<T>) -> MomentumDist {
    let g = orb.grid();
    let m = orb.to_momentum();
    let bins = g.ascending_bins();
    let k = bins.iter().map(|&j| g.k_of_bin(j).to_f64_lossy()).collect();
    let w = bins.iter().map(|&j| m.amplitudes()[j].norm_sqr().to_f64_lossy()).collect();
    let dk = 2.0 * g.dq().to_f64_lossy();
    MomentumDist::from_weights(k, w, dk).expect("normalised orbital")
}

/// Population-weighted sum of single-orbital distributions (the free
/// fermion / non-interacting result).
pub fn momentum_dist_orbitals<T: Real>(orbs: &[Orbital<T>]) -> Result<MomentumDist> {
    let first = orbs
        .first()
        .ok_or_else(|| Error::InvalidParameter("no orbitals".into()))?;
    let mut acc = momentum_dist_single(first);
    for o in &orbs[1..] {
        let d = momentum_dist_single(o);
        if !acc.same_grid(&d) {
            return Err(Error::GridMismatch("orbitals on different grids".into()));
        }
        acc.n_of_k.iter_mut().zip(&d.n_of_k).for_each(|(a, b)| *a += b);
    }
    MomentumDist::from_weights(acc.k, acc.n_of_k, acc.dk)
}

/// `n(k) = sum_{x,x'} e^{-ik(x-x')} rho[x][x']`, via one inverse transform
/// per row followed by a phase-weighted column sum.
pub fn momentum_dist_obdm<T: Real>(rho: &Obdm<T>) -> Result<MomentumDist> {
    let g = rho.grid();
    let n = rho.n_dim();
    let mut scratch = g.scratch();
    // m[x][q] = sum_x' rho[x][x'] e^{+2 pi i q x' / n} / sqrt(n)
    let mut m = rho.rho.data.clone();
    for row in m.chunks_exact_mut(n) {
        g.to_position_in_place(row, &mut scratch);
    }
    let twopi = 2.0 * std::f64::consts::PI / n as f64;
    let table: Vec<Cplx<f64>> = (0..n)
        .map(|r| {
            let (s, c) = (twopi * r as f64).sin_cos();
            Cplx::new(c, -s)
        })
        .collect();
    let mut raw = vec![Cplx::<f64>::zero(); n];
    for x in 0..n {
        let row = &m[x * n..(x + 1) * n];
        for (q, acc) in raw.iter_mut().enumerate() {
            let v = row[q];
            let z = Cplx::new(v.re.to_f64_lossy(), v.im.to_f64_lossy());
            *acc += z * table[(q * x) % n];
        }
    }
    let scale = raw.iter().map(|z| z.re.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tol = crate::scalar::tolerance::<T>(NK_TOLERANCE) * scale;
    let worst_im = raw.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if worst_im > tol {
        return Err(Error::invariant("n(k) imaginary part", worst_im / scale, NK_TOLERANCE));
    }
    let worst_neg = raw.iter().map(|z| -z.re).fold(0.0, f64::max);
    if worst_neg > tol {
        return Err(Error::invariant("n(k) negativity", worst_neg / scale, NK_TOLERANCE));
    }
    let bins = g.ascending_bins();
    let k = bins.iter().map(|&j| g.k_of_bin(j).to_f64_lossy()).collect();
    let w = bins.iter().map(|&j| raw[j].re.max(0.0)).collect();
    MomentumDist::from_weights(k, w, 2.0 * g.dq().to_f64_lossy())
}

/// `<(k/k_L)^2> E_r`, in `E_r` per particle.
pub fn kinetic_energy(dist: &MomentumDist) -> f64 {
    dist.k
        .iter()
        .zip(&dist.n_of_k)
        .map(|(k, n)| k * k * n)
        .sum::<f64>()
        * dist.dk
}

/// `-sum p ln p` over bin probabilities.
pub fn info_entropy(dist: &MomentumDist) -> f64 {
    dist.probabilities()
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

/// Jensen-Shannon divergence with base-2 logarithms, in `[0, 1]`.
pub fn jsd(p: &MomentumDist, q: &MomentumDist) -> Result<f64> {
    if !p.same_grid(q) {
        return Err(Error::GridMismatch("JSD of distributions on different k grids".into()));
    }
    jsd_probabilities(&p.probabilities(), &q.probabilities())
}

/// Jensen-Shannon divergence of two probability vectors.
pub fn jsd_probabilities(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::GridMismatch("JSD of vectors of different length".into()));
    }
    let term = |a: f64, b: f64| if a > 0.0 { a * (2.0 * a / (a + b)).log2() } else { 0.0 };
    let j: f64 = p.iter().zip(q).map(|(&a, &b)| term(a, b) + term(b, a)).sum::<f64>() * 0.5;
    Ok(j.clamp(0.0, 1.0))
}

/// First-order correlation `g1(z)` for `z >= 0` (units of `a`).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrFunction {
    pub z: Vec<f64>,
    pub g1: Vec<f64>,
}

/// `g1` as the real part of the inverse transform of `n(k)`, `g1(0) = 1`.
pub fn g1_from_momentum(dist: &MomentumDist) -> CorrFunction {
    let n = dist.len();
    // on the grid k = 2q, q conjugate to zeta, and z/a = zeta / (2 pi)
    let dzeta = 2.0 * std::f64::consts::PI / (n as f64 * dist.dk / 2.0);
    let probs = dist.probabilities();
    let half = n / 2;
    let mut z = Vec::with_capacity(half + 1);
    let mut g = Vec::with_capacity(half + 1);
    for d in 0..=half {
        let zeta = d as f64 * dzeta;
        let s: f64 = dist
            .k
            .iter()
            .zip(&probs)
            .map(|(k, p)| p * (0.5 * k * zeta).cos())
            .sum();
        z.push(zeta / (2.0 * std::f64::consts::PI));
        g.push(s);
    }
    let g0 = g[0];
    CorrFunction {
        z,
        g1: g.into_iter().map(|v| v / g0).collect(),
    }
}

/// `g1(d) = Re sum_l rho[l+d][l] / N`, the OBDM averaged over all pairs at
/// separation `d` (cyclic).
pub fn g1_from_obdm<T: Real>(rho: &Obdm<T>) -> CorrFunction {
    let n = rho.n_dim();
    let g = rho.grid();
    let dzeta = g.dz().to_f64_lossy();
    let half = n / 2;
    let mut z = Vec::with_capacity(half + 1);
    let mut vals = Vec::with_capacity(half + 1);
    for d in 0..=half {
        let s: f64 = (0..n)
            .map(|l| rho.rho.get((l + d) % n, l).re.to_f64_lossy())
            .sum();
        z.push(d as f64 * dzeta / (2.0 * std::f64::consts::PI));
        vals.push(s);
    }
    let g0 = vals[0];
    CorrFunction {
        z,
        g1: vals.into_iter().map(|v| v / g0).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayModel {
    /// `A e^{-z/r_c}`
    Exponential,
    /// `A / (1 + (z/w)^2)`
    Lorentzian,
    /// `A / sqrt(z)`
    Algebraic,
}

impl DecayModel {
    pub const ALL: [DecayModel; 3] = [DecayModel::Exponential, DecayModel::Lorentzian, DecayModel::Algebraic];

    fn shape(self, z: f64, scale: f64) -> f64 {
        match self {
            DecayModel::Exponential => (-z / scale).exp(),
            DecayModel::Lorentzian => {
                let u = z / scale;
                1.0 / (1.0 + u * u)
            }
            DecayModel::Algebraic => 1.0 / z.sqrt(),
        }
    }
}

impl FromStr for DecayModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exponential" => Ok(DecayModel::Exponential),
            "lorentzian" => Ok(DecayModel::Lorentzian),
            "algebraic" => Ok(DecayModel::Algebraic),
            other => Err(Error::Config(format!("unknown decay model '{other}'"))),
        }
    }
}

impl std::fmt::Display for DecayModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecayModel::Exponential => "exponential",
            DecayModel::Lorentzian => "lorentzian",
            DecayModel::Algebraic => "algebraic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: DecayModel,
    /// `r_c` (exponential), `w` (Lorentzian) or `A` (algebraic).
    pub param: f64,
    pub amplitude: f64,
    pub residual_rms: f64,
    pub window: (f64, f64),
}

/// Amplitude and residual of the best fit at fixed scale.
fn project(model: DecayModel, z: &[f64], y: &[f64], scale: f64) -> (f64, f64) {
    let f: Vec<f64> = z.iter().map(|&x| model.shape(x, scale)).collect();
    let ff: f64 = f.iter().map(|v| v * v).sum();
    let fy: f64 = f.iter().zip(y).map(|(a, b)| a * b).sum();
    let amp = if ff > 0.0 { fy / ff } else { 0.0 };
    let ss: f64 = f.iter().zip(y).map(|(a, b)| (b - amp * a).powi(2)).sum();
    (amp, ss)
}

/// Golden-section refinement of a bracketed minimum.
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> Option<f64> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..max_iter {
        if (b - a).abs() < tol {
            return Some(0.5 * (a + b));
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    None
}

/// Least-squares fit of `model` to `corr` on `window = [z_min, z_max]`.
/// The amplitude is solved linearly; the scale by a log-spaced scan and
/// golden-section refinement.
pub fn fit_decay(corr: &CorrFunction, model: DecayModel, window: (f64, f64)) -> Result<FitResult> {
    let (lo, hi) = window;
    let zmax = corr.z.last().copied().unwrap_or(0.0);
    if !(lo <= hi) || lo < 0.0 || hi > zmax + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "fit window [{lo}, {hi}] outside data range [0, {zmax}]"
        )));
    }
    let (z, y): (Vec<f64>, Vec<f64>) = corr
        .z
        .iter()
        .zip(&corr.g1)
        .filter(|(&x, _)| x >= lo - 1e-12 && x <= hi + 1e-12)
        .filter(|(&x, _)| model != DecayModel::Algebraic || x > 0.0)
        .map(|(&x, &v)| (x, v))
        .unzip();
    if z.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "fit window [{lo}, {hi}] holds only {} points",
            z.len()
        )));
    }
    let rms = |ss: f64| (ss / z.len() as f64).sqrt();
    if model == DecayModel::Algebraic {
        let (amp, ss) = project(model, &z, &y, 1.0);
        return Ok(FitResult {
            model,
            param: amp,
            amplitude: amp,
            residual_rms: rms(ss),
            window,
        });
    }
    let span = (z[z.len() - 1] - z[0]).max(z[z.len() - 1]).max(1e-6);
    let (lmin, lmax) = ((span * 1e-4).ln(), (span * 1e4).ln());
    let steps = 400;
    let cost = |ls: f64| project(model, &z, &y, ls.exp()).1;
    let grid: Vec<f64> = (0..=steps).map(|i| lmin + (lmax - lmin) * i as f64 / steps as f64).collect();
    let costs: Vec<f64> = grid.iter().map(|&ls| cost(ls)).collect();
    let best = costs
        .iter()
        .enumerate()
        .fold(0, |bi, (i, &c)| if c < costs[bi] { i } else { bi });
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(steps)];
    let ls = golden_min(cost, a, b, 1e-12, 500)
        .ok_or_else(|| Error::Convergence(format!("{model} fit did not converge")))?;
    let scale = ls.exp();
    let (amp, ss) = project(model, &z, &y, scale);
    Ok(FitResult {
        model,
        param: scale,
        amplitude: amp,
        residual_rms: rms(ss),
        window,
    })
}

/// Fits every model and returns them in [`DecayModel::ALL`] order.
pub fn fit_all(corr: &CorrFunction, window: (f64, f64)) -> Result<Vec<FitResult>> {
    DecayModel::ALL.iter().map(|&m| fit_decay(corr, m, window)).collect()
}

/// Plateau of `k^4 n(k)` for `|k| >= k_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPlateau {
    pub contact: f64,
    /// Coefficient of variation of `k^4 n(k)` over the tail bins.
    pub cv: f64,
    pub bins: usize,
}

pub const MIN_TAIL_BINS: usize = 4;

pub fn contact_plateau(dist: &MomentumDist, k_min: f64) -> Result<ContactPlateau> {
    let tail: Vec<f64> = dist
        .k
        .iter()
        .zip(&dist.n_of_k)
        .filter(|(k, _)| k.abs() >= k_min)
        .map(|(k, n)| k.powi(4) * n)
        .collect();
    if tail.len() < MIN_TAIL_BINS {
        return Err(Error::InvalidParameter(format!(
            "only {} bins beyond k = {k_min}",
            tail.len()
        )));
    }
    let m = tail.len() as f64;
    let mean = tail.iter().sum::<f64>() / m;
    let var = tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
    let cv = if mean != 0.0 { var.sqrt() / mean.abs() } else { f64::INFINITY };
    Ok(ContactPlateau {
        contact: mean,
        cv,
        bins: tail.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::spham::{apply_hamiltonian, lowest_eigenstates, TrapSpec};
    use crate::tonks::{obdm, SlaterState};
    use crate::units::{derive_scaled, PhysicalParams};
    use proptest::prelude::*;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn ring(n: usize, sites: usize) -> Arc<Grid<f64>> {
        Arc::new(Grid::with_span(n, 2.0 * PI * sites as f64, 1.0).unwrap())
    }

    fn dist(p: &[f64]) -> MomentumDist {
        let k = (0..p.len()).map(|i| i as f64).collect();
        MomentumDist::from_weights(k, p.to_vec(), 1.0).unwrap()
    }

    #[test]
    fn plane_wave_is_a_delta() {
        let g = ring(64, 4);
        let q = g.wavenumbers()[3];
        let o = Orbital::from_fn(g.clone(), |z| Cplx::new((q * z).cos(), (q * z).sin()));
        let d = momentum_dist_single(&o);
        let peak = d.n_of_k.iter().cloned().fold(0.0, f64::max) * d.dk;
        assert!((peak - 1.0).abs() < 1e-12);
        let kpk = d.k[d.n_of_k.iter().position(|&v| v * d.dk > 0.5).unwrap()];
        assert!((kpk - 2.0 * q).abs() < 1e-12);
    }

    #[test]
    fn kinetic_energy_of_deltas() {
        let g = ring(64, 4);
        let o = Orbital::from_fn(g.clone(), |_| Cplx::new(1.0, 0.0));
        assert!(kinetic_energy(&momentum_dist_single(&o)).abs() < 1e-20);
        // k = 2 k_L means q = 1, one lattice wavenumber
        let o = Orbital::from_fn(g.clone(), |z| Cplx::new(z.cos(), z.sin()));
        assert!((kinetic_energy(&momentum_dist_single(&o)) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn kinetic_energy_matches_position_space_operator() {
        let g = ring(128, 8);
        let heff = 3.7;
        let o = Orbital::from_fn(g.clone(), |z| Cplx::new((-z * z / 30.0).exp(), (0.3 * z).sin() * (-z * z / 50.0).exp()));
        let h = apply_hamiltonian(&g, &vec![0.0; 128], heff, o.amplitudes());
        let t: f64 = o
            .amplitudes()
            .iter()
            .zip(&h)
            .map(|(a, b)| (a.conj() * b).re)
            .sum::<f64>()
            * g.dz();
        let via_units = crate::units::energy_to_recoils(heff, t);
        assert!((kinetic_energy(&momentum_dist_single(&o)) - via_units).abs() < 1e-10);
    }

    #[test]
    fn entropy_limits() {
        assert_eq!(info_entropy(&dist(&[0.0, 1.0, 0.0])), 0.0);
        assert!((info_entropy(&dist(&[1.0; 8])) - 8f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn jsd_reference_values() {
        assert_eq!(jsd(&dist(&[0.3, 0.7]), &dist(&[0.3, 0.7])).unwrap(), 0.0);
        assert!((jsd(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])).unwrap() - 1.0).abs() < 1e-15);
        let v = jsd(&dist(&[1.0, 0.0]), &dist(&[0.5, 0.5])).unwrap();
        assert!((v - 0.311_278_124_459_132_8).abs() < 1e-12, "{v}");
        let other = MomentumDist::from_weights(vec![0.0, 2.0], vec![1.0, 1.0], 1.0).unwrap();
        assert!(jsd(&dist(&[1.0, 1.0]), &other).is_err());
    }

    #[test]
    fn gaussian_momentum_gives_gaussian_g1() {
        let g = ring(512, 32);
        let s = 6.0;
        let o = Orbital::from_fn(g.clone(), |z| Cplx::new((-z * z / (4.0 * s * s)).exp(), 0.0));
        let d = momentum_dist_single(&o);
        let c = g1_from_momentum(&d);
        // |psi|^2 Gaussian of width s in zeta: g1(zeta) = exp(-zeta^2 / (8 s^2))
        for (&z, &v) in c.z.iter().zip(&c.g1).take(80) {
            let zeta = 2.0 * PI * z;
            assert!((v - (-zeta * zeta / (8.0 * s * s)).exp()).abs() < 1e-10, "z={z}");
        }
    }

    #[test]
    fn obdm_routes_agree() {
        let g = ring(64, 8);
        let orbs: Vec<Orbital<f64>> = (0..3)
            .map(|m| {
                let q = g.wavenumbers()[m];
                let mut o = Orbital::from_fn(g.clone(), |z| Cplx::new((q * z).cos(), (q * z).sin()));
                o.normalize();
                o
            })
            .collect();
        let rho = obdm(&SlaterState::from_orbitals(&orbs).unwrap()).unwrap();
        let nk = momentum_dist_obdm(&rho).unwrap();
        let a = g1_from_obdm(&rho);
        let b = g1_from_momentum(&nk);
        for (x, y) in a.g1.iter().zip(&b.g1) {
            assert!((x - y).abs() < 1e-8);
            assert!(x.abs() <= 1.0 + 1e-12);
        }
        assert_eq!(a.g1[0], 1.0);
    }

    #[test]
    fn single_particle_obdm_distribution_matches_orbital() {
        let g = ring(64, 4);
        let mut o = Orbital::from_fn(g.clone(), |z| Cplx::new((-z * z / 9.0).exp(), 0.2 * z * (-z * z / 9.0).exp()));
        o.normalize();
        let rho = obdm(&SlaterState::from_orbitals(std::slice::from_ref(&o)).unwrap()).unwrap();
        let a = momentum_dist_obdm(&rho).unwrap();
        let b = momentum_dist_single(&o);
        for (x, y) in a.n_of_k.iter().zip(&b.n_of_k) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_model_recovery() {
        let z: Vec<f64> = (0..200).map(|i| 0.25 + 2.25 * i as f64 / 199.0).collect();
        let mk = |f: &dyn Fn(f64) -> f64| CorrFunction {
            z: z.clone(),
            g1: z.iter().map(|&x| f(x)).collect(),
        };
        let e = fit_decay(&mk(&|x| (-x / 2.0).exp()), DecayModel::Exponential, (0.25, 2.5)).unwrap();
        assert!((e.param - 2.0).abs() < 2e-6, "{}", e.param);
        let l = fit_decay(&mk(&|x| 0.8 / (1.0 + (x / 1.3).powi(2))), DecayModel::Lorentzian, (0.25, 2.5)).unwrap();
        assert!((l.param / 1.3 - 1.0).abs() < 1e-6, "{}", l.param);
        assert!((l.amplitude / 0.8 - 1.0).abs() < 1e-6);
        let a = fit_decay(&mk(&|x| 0.7 / x.sqrt()), DecayModel::Algebraic, (0.25, 2.5)).unwrap();
        assert!((a.param / 0.7 - 1.0).abs() < 1e-12);
        assert!(e.residual_rms < 1e-9 && l.residual_rms < 1e-9 && a.residual_rms < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_windows() {
        let c = CorrFunction {
            z: vec![0.0, 1.0, 2.0],
            g1: vec![1.0, 0.5, 0.25],
        };
        assert!(fit_decay(&c, DecayModel::Exponential, (0.0, 5.0)).is_err());
        assert!(fit_decay(&c, DecayModel::Exponential, (1.5, 1.8)).is_err());
    }

    #[test]
    fn contact_of_exact_tail() {
        let k: Vec<f64> = (-200..=200).map(|i| i as f64 * 0.1).collect();
        let w: Vec<f64> = k.iter().map(|&x| if x.abs() >= 1.0 { 3.0 / x.powi(4) } else { 3.0 }).collect();
        let d = MomentumDist { k, n_of_k: w, dk: 0.1 };
        let c = contact_plateau(&d, 6.0).unwrap();
        assert!((c.contact - 3.0).abs() < 1e-12);
        assert!(c.cv < 1e-12);
        assert!(contact_plateau(&d, 100.0).is_err());
    }

    #[test]
    fn blur_preserves_normalisation() {
        let d = dist(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let b = d.blurred(1.0);
        assert!((b.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(b.n_of_k[1] > 0.0 && b.n_of_k[2] > b.n_of_k[1]);
        assert_eq!(d.blurred(0.0), d);
    }

    #[test]
    fn tg_ground_state_is_narrower_than_fermi_sea() {
        let p = PhysicalParams::cesium_1064();
        let s = derive_scaled(&p).unwrap();
        let g = Arc::new(Grid::<f64>::commensurate(512, 150e-6, p.lattice_constant).unwrap());
        let v = TrapSpec::reference_flat_bottom().potential_on_grid(&g, s.hbar_eff).unwrap();
        let es = lowest_eigenstates(&g, &v, s.hbar_eff, 8).unwrap();
        let rho = obdm(&SlaterState::from_orbitals(&es.orbitals).unwrap()).unwrap();
        let bos = momentum_dist_obdm(&rho).unwrap();
        let fer = momentum_dist_orbitals(&es.orbitals).unwrap();
        let peak = |d: &MomentumDist| d.n_of_k.iter().cloned().fold(0.0, f64::max);
        assert!(peak(&bos) > peak(&fer));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn jsd_is_a_bounded_symmetric_divergence(
            a in proptest::collection::vec(0.0f64..1.0, 2..20),
            seed in 0u64..1000,
        ) {
            prop_assume!(a.iter().sum::<f64>() > 1e-6);
            let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| (x + ((i as u64 * 7919 + seed) % 13) as f64 / 13.0) % 1.0).collect();
            prop_assume!(b.iter().sum::<f64>() > 1e-6);
            let (p, q) = (dist(&a), dist(&b));
            let j1 = jsd(&p, &q).unwrap();
            let j2 = jsd(&q, &p).unwrap();
            prop_assert!((j1 - j2).abs() < 1e-14);
            prop_assert!((0.0..=1.0).contains(&j1));
            prop_assert!(jsd(&p, &p).unwrap() < 1e-14);
        }

        #[test]
        fn fits_recover_synthetic_parameters(scale in 0.3f64..5.0, amp in 0.2f64..2.0) {
            let z: Vec<f64> = (0..120).map(|i| 0.25 + 2.25 * i as f64 / 119.0).collect();
            let c = CorrFunction { z: z.clone(), g1: z.iter().map(|&x| amp * (-x / scale).exp()).collect() };
            let f = fit_decay(&c, DecayModel::Exponential, (0.25, 2.5)).unwrap();
            prop_assert!((f.param / scale - 1.0).abs() < 1e-6);
            let c = CorrFunction { z: z.clone(), g1: z.iter().map(|&x| amp / (1.0 + (x / scale).powi(2))).collect() };
            let f = fit_decay(&c, DecayModel::Lorentzian, (0.25, 2.5)).unwrap();
            prop_assert!((f.param / scale - 1.0).abs() < 1e-6);
        }
    }
}
