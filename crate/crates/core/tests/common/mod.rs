//! Checks shared by the property tests and the acceptance runner. Each
//! returns `Err(description)` on violation.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mbdl_core::floquet::{orthonormality_defect, Floquet, KickSchedule};
use mbdl_core::grid::{Grid, Orbital};
use mbdl_core::observables::{fit_decay, jsd_probabilities, CorrFunction, DecayModel};
use mbdl_core::oracle::brute_obdm_n2;
use mbdl_core::tonks::{green_function_fast, green_function_reference, obdm, obdm_from_green, SlaterState};
use mbdl_core::Cplx;

pub type Check = std::result::Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn ring(n_dim: usize, sites: usize) -> Arc<Grid<f64>> {
    Arc::new(Grid::with_span(n_dim, 2.0 * PI * sites as f64, 1.0).unwrap())
}

/// Gram-Schmidt orthonormalised random orbitals.
pub fn random_orbitals(grid: &Arc<Grid<f64>>, count: usize, rng: &mut ChaCha8Rng) -> Vec<Orbital<f64>> {
    let n = grid.n_dim();
    let dz = grid.dz();
    let mut raw: Vec<Vec<Cplx<f64>>> = (0..count)
        .map(|_| (0..n).map(|_| Cplx::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect())
        .collect();
    for a in 0..count {
        for b in 0..a {
            let s: Cplx<f64> = raw[b].iter().zip(&raw[a]).map(|(u, v)| u.conj() * v).sum::<Cplx<f64>>() * dz;
            let prev = raw[b].clone();
            raw[a].iter_mut().zip(&prev).for_each(|(v, u)| *v -= u * s);
        }
        let nrm = (raw[a].iter().map(|v| v.norm_sqr()).sum::<f64>() * dz).sqrt();
        raw[a].iter_mut().for_each(|v| *v /= nrm);
    }
    raw.into_iter().map(|a| Orbital::new(grid.clone(), a).unwrap()).collect()
}

/// Largest deviations `(fast vs quadrature, reference vs quadrature,
/// fast vs reference)` for one random two-particle state on 64 points.
pub fn obdm_n2_case(seed: u64) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Arc::new(Grid::<f64>::with_span(64, 64.0, 1.0).unwrap());
    let orbs = random_orbitals(&grid, 2, &mut rng);
    let brute = brute_obdm_n2(&orbs[0], &orbs[1]).unwrap();
    let state = SlaterState::from_orbitals(&orbs).unwrap();
    let reference = obdm_from_green(green_function_reference(&state), &state).unwrap();
    let fast = obdm_from_green(green_function_fast(&state).0, &state).unwrap();
    let n = grid.n_dim();
    let (mut fb, mut rb, mut fr) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        for j in 0..n {
            let b = brute[i * n + j];
            let (f, r) = (fast.rho.get(i, j), reference.rho.get(i, j));
            fb = fb.max((f - b).norm());
            rb = rb.max((r - b).norm());
            fr = fr.max((f - r).norm());
        }
    }
    (fb, rb, fr)
}

/// Orthonormality survives `steps` kicks of each schedule kind.
pub fn evolution_preserves_orthonormality(count: usize, k: f64, steps: usize, seed: u64) -> Check {
    let grid = ring(128, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let potential: Vec<f64> = grid.zeta().iter().map(|z| 0.3 * (z / 8.0).cos()).collect();
    for schedule in [
        KickSchedule::delta(steps, k),
        KickSchedule::square(steps, k, 1.0 / 6.0, 4),
        KickSchedule::random(steps, k, 0.5, seed),
    ] {
        let mut prop = Floquet::new(grid.clone(), 4.0, schedule, potential.clone()).unwrap();
        prop.monitor.enforce = false;
        let mut orbs = random_orbitals(&grid, count, &mut rng);
        for kick in 1..=steps {
            for o in orbs.iter_mut() {
                prop.step_orbital(o, kick).map_err(|e| e.to_string())?;
            }
        }
        let d = orthonormality_defect(&orbs);
        ensure(d < 1e-10, || format!("orthonormality defect {d:e} after {steps} kicks"))?;
    }
    Ok(())
}

/// Hermiticity, trace `N`, positivity and hard-core diagonal of the OBDM.
pub fn obdm_is_density_matrix(count: usize, n_dim: usize, seed: u64) -> Check {
    let grid = ring(n_dim, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orbs = random_orbitals(&grid, count, &mut rng);
    let state = SlaterState::from_orbitals(&orbs).map_err(|e| e.to_string())?;
    let rho = obdm(&state).map_err(|e| e.to_string())?;
    ensure(rho.hermiticity_defect < 1e-12, || format!("hermiticity {:e}", rho.hermiticity_defect))?;
    ensure(rho.trace_defect < 1e-9, || format!("trace defect {:e}", rho.trace_defect))?;
    let lo = rho.check_positive().map_err(|e| e.to_string())?;
    ensure(lo > -1e-10, || format!("smallest eigenvalue {lo:e}"))?;
    let diag_ok = rho.diagonal().iter().all(|&d| (-1e-12..=1.0 + 1e-12).contains(&d));
    ensure(diag_ok, || "site occupation outside [0, 1]".into())
}

/// `0 <= JSD <= 1`, symmetry and `JSD(p, p) = 0`.
pub fn jsd_bounds_and_symmetry(len: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        let w: Vec<f64> = (0..len).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen::<f64>() }).collect();
        let s: f64 = w.iter().sum::<f64>().max(f64::MIN_POSITIVE);
        w.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let (p, q) = (draw(), draw());
    let pq = jsd_probabilities(&p, &q).map_err(|e| e.to_string())?;
    let qp = jsd_probabilities(&q, &p).map_err(|e| e.to_string())?;
    let pp = jsd_probabilities(&p, &p).map_err(|e| e.to_string())?;
    ensure((0.0..=1.0).contains(&pq), || format!("JSD {pq} outside [0, 1]"))?;
    ensure((pq - qp).abs() < 1e-14, || format!("asymmetry {:e}", (pq - qp).abs()))?;
    ensure(pp.abs() < 1e-14, || format!("JSD(p, p) = {pp:e}"))
}

/// Position to momentum and back is the identity and keeps the norm.
pub fn transform_is_unitary(log2_n: u32, seed: u64) -> Check {
    let grid = ring(1 << log2_n, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orb = random_orbitals(&grid, 1, &mut rng).remove(0);
    let mom = orb.to_momentum();
    let back = mom.to_position();
    let dn = (mom.norm_sqr() - 1.0).abs();
    ensure(dn < 1e-12, || format!("momentum norm off by {dn:e}"))?;
    let err = orb
        .amplitudes()
        .iter()
        .zip(back.amplitudes())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    ensure(err < 1e-12, || format!("round trip error {err:e}"))
}

/// Fitting noiseless synthetic data recovers the scale and wins over the
/// other models.
pub fn fit_recovers_synthetic(model: DecayModel, scale: f64, amp: f64) -> Check {
    let z: Vec<f64> = (0..=200).map(|i| i as f64 * 0.025).collect();
    let g1 = z
        .iter()
        .map(|&x| match model {
            DecayModel::Exponential => amp * (-x / scale).exp(),
            DecayModel::Lorentzian => amp / (1.0 + (x / scale).powi(2)),
            DecayModel::Algebraic => {
                if x > 0.0 {
                    amp / x.sqrt()
                } else {
                    0.0
                }
            }
        })
        .collect();
    let corr = CorrFunction { z, g1 };
    let window = (0.25, 5.0);
    let fit = fit_decay(&corr, model, window).map_err(|e| e.to_string())?;
    let target = if model == DecayModel::Algebraic { amp } else { scale };
    let rel = (fit.param / target - 1.0).abs();
    ensure(rel < 1e-6, || format!("{model} parameter {} vs {target}", fit.param))?;
    ensure(fit.residual_rms < 1e-8 * amp.max(1.0), || format!("{model} residual {:e}", fit.residual_rms))?;
    for other in DecayModel::ALL {
        if other != model {
            let f = fit_decay(&corr, other, window).map_err(|e| e.to_string())?;
            ensure(f.residual_rms > fit.residual_rms, || format!("{other} fits {model} data better"))?;
        }
    }
    Ok(())
}
