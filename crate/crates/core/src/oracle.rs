//! Brute-force reference calculations used to validate the production
//! paths. Nothing here calls into the propagator or determinant code.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grid::Orbital;
use crate::scalar::Cplx;

/// Largest grid the two-particle oracles accept.
pub const MAX_ORACLE_POINTS: usize = 128;

/// `|J_n(x)|^2` for `n = -n_max..=n_max` (index `n + n_max`), by Miller's
/// backward recurrence normalised with `J_0 + 2 sum J_2k = 1`.
pub fn bessel_one_kick(x: f64, n_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; 2 * n_max + 1];
    if x == 0.0 {
        out[n_max] = 1.0;
        return out;
    }
    let ax = x.abs();
    let start = 2 * ((n_max.max(ax.ceil() as usize) + 20 + (ax.sqrt() * 10.0) as usize) / 2);
    let mut j = vec![0.0f64; start + 2];
    j[start] = 1e-300;
    for n in (1..=start).rev() {
        j[n - 1] = 2.0 * n as f64 / ax * j[n] - j[n + 1];
        if j[n - 1].abs() > 1e250 {
            for v in j.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let norm = j[0] + 2.0 * (1..=start / 2).map(|k| j[2 * k]).sum::<f64>();
    for n in 0..=n_max {
        let p = (j[n] / norm).powi(2);
        out[n_max + n] = p;
        out[n_max - n] = p;
    }
    out
}

fn site_amplitudes(orb: &Orbital<f64>) -> Vec<Cplx<f64>> {
    let s = orb.grid().dz().sqrt();
    orb.amplitudes().iter().map(|a| a * s).collect()
}

fn check_pair(a: &Orbital<f64>, b: &Orbital<f64>) -> Result<usize> {
    let n = a.amplitudes().len();
    if b.amplitudes().len() != n {
        return Err(Error::GridMismatch("oracle orbitals on different grids".into()));
    }
    if n > MAX_ORACLE_POINTS {
        return Err(Error::InvalidParameter(format!(
            "oracle limited to {MAX_ORACLE_POINTS} points, got {n}"
        )));
    }
    let (sa, sb) = (site_amplitudes(a), site_amplitudes(b));
    let dot = |x: &[Cplx<f64>], y: &[Cplx<f64>]| -> Cplx<f64> { x.iter().zip(y).map(|(u, v)| u.conj() * v).sum() };
    let defect = (dot(&sa, &sa).re - 1.0)
        .abs()
        .max((dot(&sb, &sb).re - 1.0).abs())
        .max(dot(&sa, &sb).norm());
    if defect > 1e-8 {
        return Err(Error::InvalidParameter(format!(
            "oracle orbitals are not orthonormal (defect {defect:.2e})"
        )));
    }
    Ok(n)
}

/// Bosonic one-body density matrix of two hard-core bosons, site
/// normalised (trace 2), as a row-major `n x n` matrix with
/// `rho[x][x'] = 2 sum_y Psi_B(x, y) conj Psi_B(x', y)`.
pub fn brute_obdm_n2(a: &Orbital<f64>, b: &Orbital<f64>) -> Result<Vec<Cplx<f64>>> {
    let n = check_pair(a, b)?;
    let (pa, pb) = (site_amplitudes(a), site_amplitudes(b));
    let r = std::f64::consts::FRAC_1_SQRT_2;
    // Psi_B(x, y) = sgn(y - x) Psi_F(x, y), normalised over ordered pairs
    let mut psi = vec![Cplx::new(0.0, 0.0); n * n];
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            let f = (pa[x] * pb[y] - pa[y] * pb[x]) * r;
            psi[x * n + y] = if y > x { f } else { -f };
        }
    }
    let mut rho = vec![Cplx::new(0.0, 0.0); n * n];
    for x in 0..n {
        for xp in 0..n {
            let s: Cplx<f64> = (0..n).map(|y| psi[x * n + y] * psi[xp * n + y].conj()).sum();
            rho[x * n + xp] = s * 2.0;
        }
    }
    Ok(rho)
}

type Fock3 = HashMap<[usize; 3], Cplx<f64>>;

/// `f_j^dag S_j |Psi>` in the three-particle sector, where `S_j` is the
/// Jordan-Wigner string `prod_{l<j} (-1)^{n_l}`.
fn raised_state(pairs: &[((usize, usize), Cplx<f64>)], j: usize) -> Fock3 {
    let mut out = Fock3::new();
    for &((x, y), c) in pairs {
        if x == j || y == j {
            continue;
        }
        let below = (x < j) as usize + (y < j) as usize;
        let string = if below % 2 == 0 { 1.0 } else { -1.0 };
        // moving f_j^dag past the occupied sites below j
        let reorder = string;
        let mut key = [x, y, j];
        key.sort_unstable();
        *out.entry(key).or_insert(Cplx::new(0.0, 0.0)) += c * string * reorder;
    }
    out
}

/// Jordan-Wigner Green's function `G_ij = <Psi| S_i f_i f_j^dag S_j |Psi>`
/// of a two-fermion Slater state, evaluated by explicit enumeration of
/// Fock states. Row-major `n x n`.
pub fn fock_green_n2(a: &Orbital<f64>, b: &Orbital<f64>) -> Result<Vec<Cplx<f64>>> {
    let n = check_pair(a, b)?;
    let (pa, pb) = (site_amplitudes(a), site_amplitudes(b));
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for x in 0..n {
        for y in x + 1..n {
            pairs.push(((x, y), pa[x] * pb[y] - pa[y] * pb[x]));
        }
    }
    let raised: Vec<Fock3> = (0..n).map(|j| raised_state(&pairs, j)).collect();
    let mut g = vec![Cplx::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            let (small, large, flip) = if raised[i].len() <= raised[j].len() {
                (&raised[i], &raised[j], false)
            } else {
                (&raised[j], &raised[i], true)
            };
            let s: Cplx<f64> = small
                .iter()
                .filter_map(|(k, v)| large.get(k).map(|w| v.conj() * w))
                .sum();
            g[i * n + j] = if flip { s.conj() } else { s };
        }
    }
    Ok(g)
}

/// OBDM from the Fock-space Green's function, `rho_ij = G_ij` off the
/// diagonal and `1 - G_ii` on it.
pub fn fock_obdm_n2(a: &Orbital<f64>, b: &Orbital<f64>) -> Result<Vec<Cplx<f64>>> {
    let mut g = fock_green_n2(a, b)?;
    let n = a.amplitudes().len();
    for i in 0..n {
        g[i * n + i] = Cplx::new(1.0, 0.0) - g[i * n + i];
    }
    Ok(g)
}
