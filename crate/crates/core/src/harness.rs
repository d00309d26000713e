//! Runs a configured experiment end to end and persists the results:
//! ground state, kicked evolution, snapshots, observables, CSV files and a
//! manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::config::{ConfigMap, ExperimentConfig, Interaction, Precision};
use crate::error::{Error, Result};
use crate::floquet::{evolve_with, Floquet, Snapshot};
use crate::grid::{Grid, Orbital};
use crate::observables::{
    contact_plateau, fit_all, g1_from_momentum, g1_from_obdm, info_entropy, jsd, kinetic_energy,
    momentum_dist_obdm, momentum_dist_orbitals, momentum_dist_single, CorrFunction, DecayModel, FitResult,
    MomentumDist,
};
use crate::oracle;
use crate::scalar::{Cplx, Real};
use crate::spham::lowest_eigenstates;
use crate::tonks::{green_function_fast, green_function_reference, obdm_from_green, von_neumann_entropy, write_obdm, SlaterState};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One row of `series.csv`. Columns that are only computed at snapshots are
/// `None` elsewhere and written as empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub n_p: usize,
    pub energy_er: f64,
    pub s_info: Option<f64>,
    pub s_vn_raw: Option<f64>,
    pub s_vn_unit_trace: Option<f64>,
    pub jsd_prev: Option<f64>,
    pub contact: Option<f64>,
    pub contact_cv: Option<f64>,
    /// Best decay model on the fit window: model, parameter, rms residual.
    pub fit: Option<(DecayModel, f64, f64)>,
}

pub const SERIES_HEADER: &str =
    "n_p,energy_er,s_info,s_vn_raw,s_vn_unit_trace,jsd_prev,contact,contact_cv,fit_model,fit_param,fit_residual";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Series {
    pub rows: Vec<SeriesRow>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn parse_cell(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Config(format!("bad number '{s}' in series")))
}

impl Series {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SERIES_HEADER);
        out.push('\n');
        for r in &self.rows {
            let (m, p, res) = match r.fit {
                Some((m, p, res)) => (m.to_string(), cell(Some(p)), cell(Some(res))),
                None => (String::new(), String::new(), String::new()),
            };
            let _ = writeln!(
                out,
                "{},{:e},{},{},{},{},{},{},{},{},{}",
                r.n_p,
                r.energy_er,
                cell(r.s_info),
                cell(r.s_vn_raw),
                cell(r.s_vn_unit_trace),
                cell(r.jsd_prev),
                cell(r.contact),
                cell(r.contact_cv),
                m,
                p,
                res
            );
        }
        out
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if rec.len() != 11 {
                return Err(Error::Config(format!("{}: expected 11 columns", path.display())));
            }
            let fit = if rec[8].is_empty() {
                None
            } else {
                Some((
                    rec[8].parse()?,
                    parse_cell(&rec[9])?.unwrap_or(f64::NAN),
                    parse_cell(&rec[10])?.unwrap_or(f64::NAN),
                ))
            };
            rows.push(SeriesRow {
                n_p: rec[0]
                    .parse()
                    .map_err(|_| Error::Config(format!("bad kick count '{}'", &rec[0])))?,
                energy_er: parse_cell(&rec[1])?.unwrap_or(f64::NAN),
                s_info: parse_cell(&rec[2])?,
                s_vn_raw: parse_cell(&rec[3])?,
                s_vn_unit_trace: parse_cell(&rec[4])?,
                jsd_prev: parse_cell(&rec[5])?,
                contact: parse_cell(&rec[6])?,
                contact_cv: parse_cell(&rec[7])?,
                fit,
            });
        }
        Ok(Series { rows })
    }

    /// `(n_p, value)` for every row where `f` yields a value.
    pub fn column(&self, f: impl Fn(&SeriesRow) -> Option<f64>) -> Vec<(usize, f64)> {
        self.rows.iter().filter_map(|r| f(r).map(|v| (r.n_p, v))).collect()
    }

    pub fn energies(&self) -> Vec<(usize, f64)> {
        self.column(|r| Some(r.energy_er))
    }

    pub fn row(&self, n_p: usize) -> Option<&SeriesRow> {
        self.rows.iter().find(|r| r.n_p == n_p)
    }
}

fn window_values(points: &[(usize, f64)], window: (usize, usize)) -> Vec<f64> {
    points
        .iter()
        .filter(|(n, _)| *n >= window.0 && *n <= window.1)
        .map(|&(_, v)| v)
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean of `(n_p, value)` points inside `window` (inclusive) and the
/// relative drift `(mean of second half - mean of first half) / mean`.
/// With an odd count the middle point belongs to neither half.
pub fn window_mean(points: &[(usize, f64)], window: (usize, usize)) -> Result<(f64, f64)> {
    let v = window_values(points, window);
    if v.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "window [{}, {}] holds {} points, need at least 4",
            window.0,
            window.1,
            v.len()
        )));
    }
    let m = mean(&v);
    let h = v.len() / 2;
    let first = mean(&v[..h]);
    let second = mean(&v[v.len() - h..]);
    Ok((m, (second - first) / m))
}

/// [`window_mean`] over the energy column.
pub fn localized_window_mean(series: &Series, window: (usize, usize)) -> Result<(f64, f64)> {
    window_mean(&series.energies(), window)
}

/// `|mean(late) - mean(early)| / mean(late)` of the energy column.
pub fn window_drift(series: &Series, early: (usize, usize), late: (usize, usize)) -> Result<f64> {
    let (a, _) = localized_window_mean(series, early)?;
    let (b, _) = localized_window_mean(series, late)?;
    Ok((b - a).abs() / b.abs())
}

/// First kick at which the trailing mean of the energy over `span` kicks
/// reaches `fraction` of `plateau`.
pub fn saturation_onset(series: &Series, plateau: f64, fraction: f64, span: usize) -> Option<usize> {
    let e = series.energies();
    e.iter().find_map(|&(n, _)| {
        if n < span {
            return None;
        }
        let w = window_values(&e, (n - span, n));
        (!w.is_empty() && mean(&w) >= fraction * plateau).then_some(n)
    })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation of two equal-length samples.
pub fn rank_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 3 {
        return Err(Error::InvalidParameter("rank correlation needs two samples of equal length >= 3".into()));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, mb) = (mean(&ra), mean(&rb));
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    Ok(cov / (va * vb).sqrt())
}

/// Diagnostics kept for each snapshot kick.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotInfo {
    pub n_p: usize,
    pub boundary_occupancy: f64,
    pub orthonormality_defect: f64,
    /// Kinetic energy from the bosonic `n(k)` (TG only).
    pub bosonic_energy_er: Option<f64>,
    pub obdm_trace_defect: Option<f64>,
    pub obdm_hermiticity_defect: Option<f64>,
    pub min_obdm_eigenvalue: Option<f64>,
    pub fits: Vec<FitResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub preset: String,
    pub config_hash: String,
    pub code_version: String,
    pub started: String,
    pub finished: String,
    /// Relative path and byte length of every output file.
    pub files: Vec<(String, u64)>,
    pub eigen_max_residual: f64,
    pub max_boundary_occupancy: f64,
    pub max_orthonormality_defect: f64,
    pub oracle_defect: Option<f64>,
    pub snapshots: Vec<SnapshotInfo>,
    pub config_text: String,
}

pub const MANIFEST_NAME: &str = "manifest.txt";

impl RunManifest {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "code_version = {}", self.code_version);
        let _ = writeln!(s, "config_hash = {}", self.config_hash);
        let _ = writeln!(s, "preset = {}", self.preset);
        let _ = writeln!(s, "started = {}", self.started);
        let _ = writeln!(s, "finished = {}", self.finished);
        let _ = writeln!(s, "eigen.max_residual = {:e}", self.eigen_max_residual);
        let _ = writeln!(s, "boundary.max_occupancy = {:e}", self.max_boundary_occupancy);
        let _ = writeln!(s, "orthonormality.max_defect = {:e}", self.max_orthonormality_defect);
        if let Some(d) = self.oracle_defect {
            let _ = writeln!(s, "oracle.max_defect = {d:e}");
        }
        for (f, len) in &self.files {
            let _ = writeln!(s, "file = {f} {len}");
        }
        for snap in &self.snapshots {
            let p = format!("snapshot.{}", snap.n_p);
            let _ = writeln!(s, "{p}.boundary_occupancy = {:e}", snap.boundary_occupancy);
            let _ = writeln!(s, "{p}.orthonormality_defect = {:e}", snap.orthonormality_defect);
            if let Some(v) = snap.bosonic_energy_er {
                let _ = writeln!(s, "{p}.bosonic_energy_er = {v:e}");
            }
            if let Some(v) = snap.obdm_trace_defect {
                let _ = writeln!(s, "{p}.obdm_trace_defect = {v:e}");
            }
            if let Some(v) = snap.obdm_hermiticity_defect {
                let _ = writeln!(s, "{p}.obdm_hermiticity_defect = {v:e}");
            }
            if let Some(v) = snap.min_obdm_eigenvalue {
                let _ = writeln!(s, "{p}.obdm_min_eigenvalue = {v:e}");
            }
            for f in &snap.fits {
                let _ = writeln!(s, "{p}.fit.{} = {:e} {:e}", f.model, f.param, f.residual_rms);
            }
        }
        s.push_str("\n[config]\n");
        s.push_str(&self.config_text);
        s
    }

    /// Files listed in a manifest on disk, `(relative path, byte length)`.
    pub fn listed_files(text: &str) -> Result<Vec<(String, u64)>> {
        text.lines()
            .filter_map(|l| l.strip_prefix("file = "))
            .map(|rest| {
                let (name, len) = rest
                    .rsplit_once(' ')
                    .ok_or_else(|| Error::Config(format!("bad manifest line '{rest}'")))?;
                let len = len
                    .parse()
                    .map_err(|_| Error::Config(format!("bad length in '{rest}'")))?;
                Ok((name.to_string(), len))
            })
            .collect()
    }

    /// Checks every file named in `dir/manifest.txt` exists with the
    /// recorded length.
    pub fn verify(dir: &Path) -> Result<usize> {
        let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
        let files = Self::listed_files(&text)?;
        for (name, len) in &files {
            let actual = fs::metadata(dir.join(name))?.len();
            if actual != *len {
                return Err(Error::invariant(format!("length of {name}"), actual as f64, *len as f64));
            }
        }
        Ok(files.len())
    }
}

/// Everything a run produced, in memory as well as on disk.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub series: Series,
    /// Momentum distributions at the snapshot kicks.
    pub distributions: BTreeMap<usize, MomentumDist>,
    /// `g1` at the snapshot kicks.
    pub correlations: BTreeMap<usize, CorrFunction>,
    pub eigen_energies_er: Vec<f64>,
}

fn timestamp() -> String {
    chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string()
}

fn fresh_dir(base: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(base)?;
    for i in 0.. {
        let candidate = if i == 0 {
            base.join(name)
        } else {
            base.join(format!("{name}-{i}"))
        };
        match fs::create_dir(&candidate) {
            Ok(()) => return Ok(candidate),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!()
}

/// Runs `cfg` into a fresh `<output.dir>/<preset>/<timestamp>/` directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let dir = fresh_dir(&cfg.output_dir.join(&cfg.preset), &timestamp())?;
    run_experiment_in(cfg, &dir)
}

/// Runs `cfg` writing into an existing directory. On failure the error is
/// also written to `error.txt` there.
pub fn run_experiment_in(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutput> {
    fs::create_dir_all(dir)?;
    let result = match cfg.precision {
        Precision::F64 => simulate::<f64>(cfg, dir),
        Precision::F32 => simulate::<f32>(cfg, dir),
    };
    if let Err(e) = &result {
        let _ = fs::write(dir.join("error.txt"), format!("{e}\n\n[config]\n{}", cfg.source.canonical_text()));
    }
    result
}

/// Largest elementwise deviation between the Jordan-Wigner OBDM (fast and
/// reference paths) and the quadrature oracle for a random two-particle
/// state on 64 points.
pub fn oracle_self_check(seed: u64) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let grid = Arc::new(Grid::<f64>::with_span(64, 64.0, 1.0)?);
    let n = grid.n_dim();
    let mut raw: Vec<Vec<Cplx<f64>>> = (0..2)
        .map(|_| (0..n).map(|_| Cplx::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect())
        .collect();
    let dz = grid.dz();
    // Gram-Schmidt with the grid measure
    for a in 0..2 {
        for b in 0..a {
            let s: Cplx<f64> = raw[b].iter().zip(&raw[a]).map(|(u, v)| u.conj() * v).sum::<Cplx<f64>>() * dz;
            let prev = raw[b].clone();
            raw[a].iter_mut().zip(&prev).for_each(|(v, u)| *v -= u * s);
        }
        let nrm = (raw[a].iter().map(|v| v.norm_sqr()).sum::<f64>() * dz).sqrt();
        raw[a].iter_mut().for_each(|v| *v /= nrm);
    }
    let orbs: Vec<Orbital<f64>> = raw
        .into_iter()
        .map(|a| Orbital::new(grid.clone(), a))
        .collect::<Result<_>>()?;
    let brute = oracle::brute_obdm_n2(&orbs[0], &orbs[1])?;
    let state = SlaterState::from_orbitals(&orbs)?;
    let reference = obdm_from_green(green_function_reference(&state), &state)?;
    let (g, _) = green_function_fast(&state);
    let fast = obdm_from_green(g, &state)?;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let b = brute[i * n + j];
            worst = worst
                .max((fast.rho.get(i, j) - b).norm())
                .max((reference.rho.get(i, j) - b).norm());
        }
    }
    Ok(worst)
}

/// Populations of momenta `2 m k_L`, `|m| <= n_max`, after one delta kick
/// from rest with the caesium constants, next to `|J_m(kappa)|^2`.
/// Returns `(m, propagated, exact)`.
pub fn bessel_comparison(n_max: usize) -> Result<Vec<(i64, f64, f64)>> {
    let params = crate::units::PhysicalParams::cesium_1064();
    let s = crate::units::derive_scaled(&params)?;
    let sites = 16.0;
    let n_dim = 1024;
    let grid = Arc::new(Grid::<f64>::with_span(n_dim, sites * 2.0 * std::f64::consts::PI, params.lattice_constant)?);
    let amp = 1.0 / grid.span().sqrt();
    let mut orb = Orbital::from_fn(grid.clone(), |_| Cplx::new(amp, 0.0));
    let mut prop = Floquet::new(grid.clone(), s.hbar_eff, crate::floquet::KickSchedule::delta(1, s.kick_strength), vec![0.0; n_dim])?;
    // a plane wave fills the whole box by construction
    prop.monitor.enforce = false;
    prop.step_orbital(&mut orb, 1)?;
    let d = momentum_dist_single(&orb);
    let exact = oracle::bessel_one_kick(s.kappa, n_max);
    (-(n_max as i64)..=n_max as i64)
        .map(|m| {
            let j = d
                .k
                .iter()
                .position(|&k| (k - 2.0 * m as f64).abs() < 1e-9)
                .ok_or_else(|| Error::InvalidParameter(format!("no bin at k = {}", 2 * m)))?;
            Ok((m, d.n_of_k[j] * d.dk, exact[(m + n_max as i64) as usize]))
        })
        .collect()
}

/// Per-snapshot data gathered during a TG evolution.
struct TonksSnapshot {
    dist: MomentumDist,
    g1: CorrFunction,
    vn: Option<crate::tonks::VnEntropy>,
    info: SnapshotInfo,
}

fn write_two_column(path: &Path, header: &str, xs: &[f64], ys: &[f64]) -> Result<()> {
    let mut s = String::with_capacity(xs.len() * 48);
    s.push_str(header);
    s.push('\n');
    for (x, y) in xs.iter().zip(ys) {
        let _ = writeln!(s, "{x:e},{y:e}");
    }
    fs::write(path, s)?;
    Ok(())
}

/// Reads a two-column `k,n_k` file written by a run.
pub fn read_momentum_csv(path: &Path) -> Result<MomentumDist> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let (mut k, mut w) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Config(format!("{}: bad row", path.display())))
        };
        k.push(num(0)?);
        w.push(num(1)?);
    }
    if k.len() < 2 || k.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Config(format!("{}: k column must be ascending", path.display())));
    }
    let dk = (k[k.len() - 1] - k[0]) / (k.len() - 1) as f64;
    MomentumDist::from_weights(k, w, dk)
}

fn best_fit(fits: &[FitResult]) -> Option<(DecayModel, f64, f64)> {
    fits.iter()
        .min_by(|a, b| a.residual_rms.total_cmp(&b.residual_rms))
        .map(|f| (f.model, f.param, f.residual_rms))
}

fn simulate<T: Real>(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutput> {
    let started = timestamp();
    if cfg.long_running {
        log::warn!("preset '{}' is long-running (n_dim = {})", cfg.preset, cfg.n_dim);
    }
    let oracle_defect = if cfg.oracle_check {
        let d = oracle_self_check(cfg.kick.rng_seed)?;
        if d > 1e-8 {
            return Err(Error::invariant("oracle self-check", d, 1e-8));
        }
        Some(d)
    } else {
        None
    };

    let a = cfg.physical.lattice_constant;
    let grid = Arc::new(if cfg.commensurate {
        Grid::<T>::commensurate(cfg.n_dim, cfg.length_z, a)?
    } else {
        Grid::<T>::new(cfg.n_dim, cfg.length_z, a)?
    });
    let hbar = cfg.scaled.hbar_eff;
    let potential = cfg.trap.potential_on_grid::<T>(&grid, hbar)?;
    let eig = lowest_eigenstates(&grid, &potential, T::lit(hbar), cfg.n_orbitals())?;
    log::info!(
        "ground state: {} orbitals, E_0 = {:.4e} E_r, residual {:.2e}",
        eig.orbitals.len(),
        eig.energies_er[0],
        eig.max_residual
    );

    let series_kicks = cfg.series_kicks();
    let mut record: Vec<usize> = series_kicks.clone();
    record.extend(&cfg.snapshots);
    record.sort_unstable();
    record.dedup();
    let is_snapshot = |k: usize| cfg.snapshots.binary_search(&k).is_ok();

    let mut max_occ = 0.0f64;
    let mut max_defect = 0.0f64;
    let mut files: Vec<String> = Vec::new();
    let mut diag: BTreeMap<usize, (f64, f64)> = BTreeMap::new();

    // distributions at every recorded kick (gamma = 0) or at snapshots (TG)
    let mut dists: BTreeMap<usize, MomentumDist> = BTreeMap::new();
    let mut energies: BTreeMap<usize, f64> = BTreeMap::new();
    let mut tonks: BTreeMap<usize, TonksSnapshot> = BTreeMap::new();

    match cfg.interaction {
        Interaction::Free => {
            let mut acc: BTreeMap<usize, MomentumDist> = BTreeMap::new();
            for r in 0..cfg.realizations {
                let mut schedule = cfg.kick.clone();
                schedule.rng_seed = cfg.kick.rng_seed.wrapping_add(r as u64);
                let mut prop = Floquet::new(grid.clone(), hbar, schedule, potential.clone())?;
                prop.monitor = cfg.monitor;
                evolve_with(&prop, eig.orbitals.clone(), &record, |snap: Snapshot<T>| {
                    let d = momentum_dist_single(&snap.orbitals[0]);
                    match acc.get_mut(&snap.kick) {
                        Some(sum) => sum.n_of_k.iter_mut().zip(&d.n_of_k).for_each(|(s, v)| *s += v),
                        None => {
                            acc.insert(snap.kick, d);
                        }
                    }
                    max_occ = max_occ.max(snap.max_boundary_occupancy);
                    max_defect = max_defect.max(snap.orthonormality_defect);
                    let e = diag.entry(snap.kick).or_insert((0.0, 0.0));
                    e.0 = e.0.max(snap.boundary_occupancy);
                    e.1 = e.1.max(snap.orthonormality_defect);
                    Ok(())
                })?;
            }
            for (k, d) in acc {
                let avg = MomentumDist::from_weights(d.k, d.n_of_k, d.dk)?;
                dists.insert(k, avg.blurred(cfg.tof_blur));
            }
        }
        Interaction::Tonks => {
            let mut prop = Floquet::new(grid.clone(), hbar, cfg.kick.clone(), potential.clone())?;
            prop.monitor = cfg.monitor;
            evolve_with(&prop, eig.orbitals.clone(), &record, |snap: Snapshot<T>| {
                max_occ = max_occ.max(snap.max_boundary_occupancy);
                max_defect = max_defect.max(snap.orthonormality_defect);
                diag.insert(snap.kick, (snap.boundary_occupancy, snap.orthonormality_defect));
                energies.insert(snap.kick, kinetic_energy(&momentum_dist_orbitals(&snap.orbitals)?));
                if !is_snapshot(snap.kick) {
                    return Ok(());
                }
                let state = SlaterState::from_orbitals(&snap.orbitals)?;
                let (g, stats) = green_function_fast(&state);
                log::debug!(
                    "kick {}: green sweep {} refreshes, {} direct",
                    snap.kick,
                    stats.refreshes,
                    stats.direct
                );
                let rho = obdm_from_green(g, &state)?;
                let dist = momentum_dist_obdm(&rho)?;
                let g1 = g1_from_obdm(&rho);
                let vn = if cfg.vn_entropy {
                    Some(von_neumann_entropy(&rho)?)
                } else {
                    None
                };
                if cfg.obdm_bin {
                    let name = format!("obdm_{}.bin", snap.kick);
                    let f = fs::File::create(dir.join(&name))?;
                    write_obdm(&rho, BufWriter::new(f))?;
                    files.push(name);
                }
                log::info!("kick {}: OBDM snapshot done", snap.kick);
                tonks.insert(
                    snap.kick,
                    TonksSnapshot {
                        info: SnapshotInfo {
                            n_p: snap.kick,
                            boundary_occupancy: snap.boundary_occupancy,
                            orthonormality_defect: snap.orthonormality_defect,
                            bosonic_energy_er: Some(kinetic_energy(&dist)),
                            obdm_trace_defect: Some(rho.trace_defect),
                            obdm_hermiticity_defect: Some(rho.hermiticity_defect),
                            min_obdm_eigenvalue: vn.map(|v| v.min_eigenvalue),
                            fits: Vec::new(),
                        },
                        dist: dist.blurred(cfg.tof_blur),
                        g1,
                        vn,
                    },
                );
                Ok(())
            })?;
            for (&k, t) in &tonks {
                dists.insert(k, t.dist.clone());
            }
        }
    }

    // observables and rows
    let mut rows = Vec::with_capacity(series_kicks.len());
    let mut correlations = BTreeMap::new();
    let mut snapshots = Vec::new();
    for &k in &series_kicks {
        let dist = dists.get(&k);
        let energy_er = match cfg.interaction {
            Interaction::Free => kinetic_energy(dist.expect("recorded kick")),
            Interaction::Tonks => energies[&k],
        };
        let jsd_prev = match (dist, k.checked_sub(cfg.jsd_lag).and_then(|p| dists.get(&p))) {
            (Some(d), Some(p)) if cfg.jsd_lag > 0 => Some(jsd(d, p)?),
            _ => None,
        };
        let mut row = SeriesRow {
            n_p: k,
            energy_er,
            s_info: dist.map(info_entropy),
            s_vn_raw: None,
            s_vn_unit_trace: None,
            jsd_prev,
            contact: None,
            contact_cv: None,
            fit: None,
        };
        if is_snapshot(k) {
            let d = dist.expect("snapshot distribution");
            if let Ok(c) = contact_plateau(d, cfg.contact_kmin) {
                row.contact = Some(c.contact);
                row.contact_cv = Some(c.cv);
            }
            let (g1, mut info) = match cfg.interaction {
                Interaction::Free => {
                    let (occ, defect) = diag.get(&k).copied().unwrap_or((0.0, 0.0));
                    (
                        g1_from_momentum(d),
                        SnapshotInfo {
                            n_p: k,
                            boundary_occupancy: occ,
                            orthonormality_defect: defect,
                            bosonic_energy_er: None,
                            obdm_trace_defect: None,
                            obdm_hermiticity_defect: None,
                            min_obdm_eigenvalue: None,
                            fits: Vec::new(),
                        },
                    )
                }
                Interaction::Tonks => {
                    let t = &tonks[&k];
                    row.s_vn_raw = t.vn.map(|v| v.raw);
                    row.s_vn_unit_trace = t.vn.map(|v| v.unit_trace);
                    (t.g1.clone(), t.info.clone())
                }
            };
            info.fits = fit_all(&g1, cfg.fit_window).unwrap_or_default();
            row.fit = best_fit(&info.fits);
            let nk_name = format!("nk_{k}.csv");
            write_two_column(&dir.join(&nk_name), "k_kl,n_k", &d.k, &d.n_of_k)?;
            let g1_name = format!("g1_{k}.csv");
            write_two_column(&dir.join(&g1_name), "z_a,g1", &g1.z, &g1.g1)?;
            files.push(nk_name);
            files.push(g1_name);
            snapshots.push(info);
            correlations.insert(k, g1);
        }
        rows.push(row);
    }

    let series = Series { rows };
    fs::write(dir.join("series.csv"), series.to_csv())?;
    files.push("series.csv".into());
    let mut eigen_csv = String::from("index,energy_er\n");
    for (i, e) in eig.energies_er.iter().enumerate() {
        let _ = writeln!(eigen_csv, "{i},{e:e}");
    }
    fs::write(dir.join("eigen.csv"), eigen_csv)?;
    files.push("eigen.csv".into());
    files.sort();

    let mut listed = Vec::with_capacity(files.len());
    for f in files {
        let len = fs::metadata(dir.join(&f))?.len();
        listed.push((f, len));
    }
    let distributions = dists.into_iter().filter(|(k, _)| is_snapshot(*k)).collect();
    let manifest = RunManifest {
        preset: cfg.preset.clone(),
        config_hash: cfg.source.hash(),
        code_version: CODE_VERSION.to_string(),
        started,
        finished: timestamp(),
        files: listed,
        eigen_max_residual: eig.max_residual,
        max_boundary_occupancy: max_occ,
        max_orthonormality_defect: max_defect,
        oracle_defect,
        snapshots,
        config_text: cfg.source.canonical_text(),
    };
    fs::write(dir.join(MANIFEST_NAME), manifest.render())?;
    Ok(RunOutput {
        dir: dir.to_path_buf(),
        manifest,
        series,
        distributions,
        correlations,
        eigen_energies_er: eig.energies_er,
    })
}

/// Keys a sweep may vary, with their short aliases.
pub const SWEEP_AXES: &[(&str, &str)] = &[
    ("n_dim", "grid.n_dim"),
    ("N", "particles.n"),
    ("trap.kind", "trap.kind"),
    ("kick.K", "kick.K"),
];

pub fn sweep_key(axis: &str) -> Result<&'static str> {
    SWEEP_AXES
        .iter()
        .find(|(alias, key)| *alias == axis || *key == axis)
        .map(|(_, key)| *key)
        .ok_or_else(|| {
            Error::Config(format!(
                "'{axis}' is not sweepable (use one of n_dim, N, trap.kind, kick.K)"
            ))
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub dir: PathBuf,
    /// Late-window mean energy and drift, when the run succeeded.
    pub localized: Option<(f64, f64)>,
    pub error: Option<String>,
}

pub const SWEEP_SUMMARY: &str = "sweep.csv";

/// One run per value of `axis` under a shared root. Failing runs are
/// recorded and do not stop the sweep.
pub fn sweep(base: &ConfigMap, axis: &str, values: &[String], root: Option<&Path>) -> Result<(PathBuf, Vec<SweepRow>)> {
    let key = sweep_key(axis)?;
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let base_cfg = ExperimentConfig::from_map(base)?;
    let root = match root {
        Some(r) => {
            fs::create_dir_all(r)?;
            r.to_path_buf()
        }
        None => fresh_dir(
            &base_cfg.output_dir.join(&base_cfg.preset),
            &format!("{}-sweep-{}", timestamp(), key),
        )?,
    };
    let mut rows = Vec::with_capacity(values.len());
    for v in values {
        let dir = root.join(format!("{key}={v}"));
        let outcome = (|| {
            let mut map = base.clone();
            map.set(key, v.clone())?;
            let cfg = ExperimentConfig::from_map(&map)?;
            let out = run_experiment_in(&cfg, &dir)?;
            localized_window_mean(&out.series, cfg.late_window)
        })();
        let row = match outcome {
            Ok(m) => SweepRow {
                value: v.clone(),
                dir,
                localized: Some(m),
                error: None,
            },
            Err(e) => {
                log::error!("sweep {key}={v}: {e}");
                SweepRow {
                    value: v.clone(),
                    dir,
                    localized: None,
                    error: Some(e.to_string()),
                }
            }
        };
        rows.push(row);
    }
    let mut csv = String::from("axis,value,status,localized_energy_er,drift,run_dir,error\n");
    for r in &rows {
        let (status, m, d) = match r.localized {
            Some((m, d)) => ("ok", format!("{m:e}"), format!("{d:e}")),
            None => ("failed", String::new(), String::new()),
        };
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let rel = r.dir.strip_prefix(&root).unwrap_or(&r.dir).display().to_string();
        let _ = writeln!(csv, "{key},{},{status},{m},{d},{rel},{err}", r.value);
    }
    fs::write(root.join(SWEEP_SUMMARY), csv)?;
    Ok((root, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::load;

    fn linear(slope: f64, offset: f64, kicks: impl Iterator<Item = usize>) -> Series {
        Series {
            rows: kicks
                .map(|n| SeriesRow {
                    n_p: n,
                    energy_er: offset + slope * n as f64,
                    s_info: None,
                    s_vn_raw: None,
                    s_vn_unit_trace: None,
                    jsd_prev: None,
                    contact: None,
                    contact_cv: None,
                    fit: None,
                })
                .collect(),
        }
    }

    #[test]
    fn constant_series_has_no_drift() {
        let s = linear(0.0, 3.0, (1..=801).step_by(10));
        let (m, d) = localized_window_mean(&s, (600, 800)).unwrap();
        assert_eq!(m, 3.0);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn linear_series_drift_is_half_window_difference() {
        // rows 601..791 step 10: 20 points, halves 10 apart -> 100 kicks
        let s = linear(0.01, 1.0, (1..=801).step_by(10));
        let (m, d) = localized_window_mean(&s, (600, 795)).unwrap();
        let expected_mean = 1.0 + 0.01 * 696.0;
        assert!((m - expected_mean).abs() < 1e-12);
        assert!((d - 0.01 * 100.0 / expected_mean).abs() < 1e-12);
    }

    #[test]
    fn short_window_is_rejected() {
        let s = linear(0.0, 1.0, (1..=801).step_by(10));
        assert!(localized_window_mean(&s, (600, 630)).is_err());
    }

    #[test]
    fn rank_correlation_of_monotone_maps_is_one() {
        let a: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| x.exp()).collect();
        assert!((rank_correlation(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let c: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((rank_correlation(&a, &c).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn onset_of_a_ramp() {
        // rises linearly to 10 at kick 400 then flat
        let mut s = linear(0.0, 0.0, (1..=801).step_by(10));
        for r in &mut s.rows {
            r.energy_er = (r.n_p as f64 / 40.0).min(10.0);
        }
        let onset = saturation_onset(&s, 10.0, 0.9, 100).unwrap();
        assert!((400..=460).contains(&onset), "{onset}");
    }

    #[test]
    fn series_csv_round_trip() {
        let mut s = linear(0.5, 1.0, [0usize, 1, 11].into_iter());
        s.rows[1].s_info = Some(1.25);
        s.rows[1].fit = Some((DecayModel::Lorentzian, 2.0, 1e-3));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("series.csv");
        fs::write(&p, s.to_csv()).unwrap();
        assert_eq!(Series::read_csv(&p).unwrap(), s);
    }

    #[test]
    fn bessel_comparison_matches() {
        let rows = bessel_comparison(10).unwrap();
        assert_eq!(rows.len(), 21);
        for (m, p, e) in rows {
            assert!((p - e).abs() < 1e-10, "m={m}: {p} vs {e}");
        }
    }

    #[test]
    fn oracle_self_check_agrees() {
        assert!(oracle_self_check(3).unwrap() < 1e-10);
    }

    fn small(preset: &str, extra: &[&str], out: &Path) -> ExperimentConfig {
        let mut o: Vec<String> = vec![
            "grid.n_dim=256".into(),
            "grid.length_um=40".into(),
            "trap.kind=none".into(),
            "kick.n=30".into(),
            "record.series_every=5".into(),
            "record.snapshot_every=10".into(),
            "analysis.jsd_lag=10".into(),
            format!("output.dir={}", out.display()),
        ];
        o.extend(extra.iter().map(|s| s.to_string()));
        ExperimentConfig::from_map(&load(Some(preset), None, &o).unwrap()).unwrap()
    }

    #[test]
    fn free_run_writes_complete_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small("fig2-gamma0-desk", &["trap.kind=flat_bottom", "grid.length_um=300"], dir.path());
        let out = run_experiment(&cfg).unwrap();
        assert!(out.dir.starts_with(dir.path().join("fig2-gamma0-desk")));
        assert_eq!(RunManifest::verify(&out.dir).unwrap(), out.manifest.files.len());
        for k in [0, 1, 11, 21] {
            assert!(out.dir.join(format!("nk_{k}.csv")).exists(), "nk_{k}");
            assert!(out.dir.join(format!("g1_{k}.csv")).exists(), "g1_{k}");
        }
        let kicks: Vec<usize> = out.series.rows.iter().map(|r| r.n_p).collect();
        assert_eq!(kicks, vec![0, 1, 6, 11, 16, 21, 26, 30]);
        assert!(out.series.row(11).unwrap().jsd_prev.is_some());
        assert!(out.series.row(6).unwrap().jsd_prev.is_none());
        let reread = Series::read_csv(&out.dir.join("series.csv")).unwrap();
        assert_eq!(reread, out.series);
        let nk = read_momentum_csv(&out.dir.join("nk_21.csv")).unwrap();
        assert!(jsd(&nk, &out.distributions[&21]).unwrap() < 1e-12);
    }

    #[test]
    fn identical_configs_give_identical_csv() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small("fig3-tg-desk", &["particles.n=3"], dir.path());
        let a = run_experiment_in(&cfg, &dir.path().join("a")).unwrap();
        let b = run_experiment_in(&cfg, &dir.path().join("b")).unwrap();
        for (f, _) in &a.manifest.files {
            if f.ends_with(".csv") {
                let x = fs::read(a.dir.join(f)).unwrap();
                let y = fs::read(b.dir.join(f)).unwrap();
                assert!(x == y, "{f} differs");
            }
        }
        assert_eq!(a.manifest.config_hash, b.manifest.config_hash);
    }

    #[test]
    fn tonks_run_fills_snapshot_columns() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small("fig3-tg-desk", &["particles.n=3", "record.obdm_bin=true"], dir.path());
        let out = run_experiment(&cfg).unwrap();
        let snap = out.series.row(11).unwrap();
        assert!(snap.s_info.is_some() && snap.s_vn_raw.is_some() && snap.fit.is_some());
        assert!(snap.jsd_prev.is_some());
        let plain = out.series.row(6).unwrap();
        assert!(plain.s_info.is_none() && plain.s_vn_raw.is_none());
        let dump = crate::tonks::read_obdm(fs::File::open(out.dir.join("obdm_11.bin")).unwrap()).unwrap();
        assert_eq!((dump.n_dim, dump.n_particles), (256, 3));
        RunManifest::verify(&out.dir).unwrap();
        // TG energy column equals the bosonic n(k) energy up to discretisation
        let info = out.manifest.snapshots.iter().find(|s| s.n_p == 11).unwrap();
        let eb = info.bosonic_energy_er.unwrap();
        assert!((eb - snap.energy_er).abs() / snap.energy_er < 0.1, "{eb} vs {}", snap.energy_er);
    }

    #[test]
    fn realizations_average_over_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let one = small("fig3-random-desk", &["kick.realizations=1"], dir.path());
        let three = small("fig3-random-desk", &["kick.realizations=3"], dir.path());
        let a = run_experiment(&one).unwrap();
        let b = run_experiment(&three).unwrap();
        let (ea, eb) = (a.series.row(21).unwrap().energy_er, b.series.row(21).unwrap().energy_er);
        assert!(ea != eb);
        // the average over seeds 0, 1, 2 includes seed 0
        let mut sum = 0.0;
        for s in 0..3 {
            let c = small(
                "fig3-random-desk",
                &["kick.realizations=1", &format!("kick.seed={s}")],
                dir.path(),
            );
            sum += run_experiment(&c).unwrap().series.row(21).unwrap().energy_er;
        }
        assert!((sum / 3.0 - eb).abs() < 1e-10 * eb);
    }

    #[test]
    fn boundary_error_policy_aborts_with_kick_and_dump() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(
            "fig2-gamma0-desk",
            &["monitor.policy=error", "monitor.boundary_limit=1e-30", "record.ground=false"],
            dir.path(),
        );
        let run_dir = dir.path().join("fail");
        let err = run_experiment_in(&cfg, &run_dir).unwrap_err();
        assert!(matches!(err, Error::AtKick { kick: 1, .. }), "{err}");
        assert_eq!(err.exit_code(), 3);
        assert!(run_dir.join("error.txt").exists());
    }

    #[test]
    fn sweep_isolates_failures() {
        let dir = tempfile::tempdir().unwrap();
        let base = load(
            Some("fig2-gamma0-desk"),
            None,
            &[
                "grid.length_um=40".into(),
                "trap.kind=none".into(),
                "kick.n=40".into(),
                "record.series_every=2".into(),
                "record.snapshot_every=20".into(),
                "analysis.late_window=20,40".into(),
            ],
        )
        .unwrap();
        let values = vec!["128".to_string(), "3".to_string(), "256".to_string()];
        let (root, rows) = sweep(&base, "n_dim", &values, Some(dir.path())).unwrap();
        assert!(rows[0].localized.is_some() && rows[2].localized.is_some());
        assert!(rows[1].error.is_some());
        let summary = fs::read_to_string(root.join(SWEEP_SUMMARY)).unwrap();
        assert_eq!(summary.lines().count(), 4);
        assert!(summary.contains("failed"));
        assert!(sweep(&base, "kick.substeps", &values, Some(dir.path())).is_err());
    }
}
