//! End-to-end acceptance runs. Prints one PASS/FAIL line per criterion.
//! FAIL lines are a report, not a process failure, unless
//! `ACCEPTANCE_STRICT=1` is set. The TG runs take tens of minutes.

mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use mbdl_core::config::load;
use mbdl_core::harness::{
    bessel_comparison, localized_window_mean, rank_correlation, run_experiment, saturation_onset, window_drift,
    window_mean, RunOutput, Series,
};
use mbdl_core::observables::{fit_decay, CorrFunction, DecayModel};
use mbdl_core::units::{derive_scaled, PhysicalParams};
use mbdl_core::ExperimentConfig;
use proptest::test_runner::{Config as PropConfig, TestCaseError, TestRunner};

struct Report {
    failed: usize,
    total: usize,
}

impl Report {
    fn line(&mut self, id: &str, pass: bool, detail: String) {
        self.total += 1;
        if !pass {
            self.failed += 1;
        }
        println!("{} {id:<4} {detail}", if pass { "PASS" } else { "FAIL" });
    }

    fn missing(&mut self, id: &str, why: &str) {
        self.line(id, false, format!("not evaluated: {why}"));
    }
}

fn out_root() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn run(preset: &str, extra: &[&str]) -> Result<RunOutput, String> {
    let mut o: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
    o.push(format!("output.dir={}", out_root().display()));
    let t = Instant::now();
    let cfg = load(Some(preset), None, &o)
        .and_then(|m| ExperimentConfig::from_map(&m))
        .map_err(|e| e.to_string())?;
    let out = run_experiment(&cfg).map_err(|e| e.to_string());
    eprintln!("[{preset} {extra:?}: {:.0} s]", t.elapsed().as_secs_f64());
    out
}

fn residual(corr: &CorrFunction, model: DecayModel, window: (f64, f64)) -> f64 {
    fit_decay(corr, model, window).map(|f| f.residual_rms).unwrap_or(f64::INFINITY)
}

fn full_range(corr: &CorrFunction) -> (f64, f64) {
    (0.0, *corr.z.last().unwrap())
}

const LOCALIZED: [usize; 2] = [601, 801];

fn kick_strengths(r: &mut Report) {
    let mut p = PhysicalParams::cesium_1064();
    for (period, target) in [(60e-6, 3.3), (80e-6, 4.4)] {
        p.kick_period = period;
        match derive_scaled(&p) {
            Ok(s) => {
                let rel = s.kick_strength / target - 1.0;
                r.line(
                    "1",
                    rel.abs() <= 0.02,
                    format!("T = {:.0} us: K = {:.4} vs {target} ({:+.2}%)", period * 1e6, s.kick_strength, rel * 100.0),
                );
            }
            Err(e) => r.missing("1", &e.to_string()),
        }
    }
}

fn bessel(r: &mut Report) {
    match bessel_comparison(10) {
        Ok(rows) => {
            let worst = rows.iter().map(|(_, p, e)| (p - e).abs()).fold(0.0, f64::max);
            r.line("2", worst <= 1e-10, format!("one-kick populations |n| <= 10: max deviation {worst:.2e}"));
        }
        Err(e) => r.missing("2", &e.to_string()),
    }
}

fn obdm_oracle(r: &mut Report) {
    let (mut q, mut fr) = (0.0f64, 0.0f64);
    for seed in 0..20 {
        let (a, b, c) = common::obdm_n2_case(1000 + seed);
        q = q.max(a).max(b);
        fr = fr.max(c);
    }
    r.line("3a", q <= 1e-8, format!("20 N=2 cases, JWT vs quadrature: {q:.2e}"));
    r.line("3b", fr <= 1e-10, format!("20 N=2 cases, fast vs reference: {fr:.2e}"));
}

fn invariants(r: &mut Report) {
    let mut runner = TestRunner::new(PropConfig::with_cases(64));
    let fail = |s: String| TestCaseError::fail(s);
    let checks: Vec<(&str, Result<(), String>)> = vec![
        (
            "orthonormality under evolution",
            runner
                .run(&(1usize..5, 0.1f64..6.0, 1usize..12, proptest::num::u64::ANY), |(c, k, s, seed)| {
                    common::evolution_preserves_orthonormality(c, k, s, seed).map_err(fail)
                })
                .map_err(|e| e.to_string()),
        ),
        (
            "OBDM Hermiticity/trace/positivity",
            runner
                .run(&(1usize..6, 4u32..7, proptest::num::u64::ANY), |(c, l, seed)| {
                    common::obdm_is_density_matrix(c, 1 << l, seed).map_err(fail)
                })
                .map_err(|e| e.to_string()),
        ),
        (
            "JSD bounds and symmetry",
            runner
                .run(&(2usize..300, proptest::num::u64::ANY), |(n, seed)| {
                    common::jsd_bounds_and_symmetry(n, seed).map_err(fail)
                })
                .map_err(|e| e.to_string()),
        ),
        (
            "transform unitarity",
            runner
                .run(&(3u32..12, proptest::num::u64::ANY), |(l, seed)| {
                    common::transform_is_unitary(l, seed).map_err(fail)
                })
                .map_err(|e| e.to_string()),
        ),
        (
            "fit recovery",
            runner
                .run(&(0usize..3, 0.2f64..3.0, 0.3f64..2.0), |(m, s, a)| {
                    common::fit_recovers_synthetic(DecayModel::ALL[m], s, a).map_err(fail)
                })
                .map_err(|e| e.to_string()),
        ),
    ];
    let bad: Vec<String> = checks
        .iter()
        .filter_map(|(n, res)| res.as_ref().err().map(|e| format!("{n}: {e}")))
        .collect();
    let detail = if bad.is_empty() {
        format!("{} property groups x 64 cases", checks.len())
    } else {
        bad.join("; ")
    };
    r.line("9", bad.is_empty(), detail);
}

fn first_below(series: &Series, threshold: f64) -> Option<usize> {
    series
        .rows
        .iter()
        .find(|row| row.jsd_prev.is_some_and(|j| j < threshold))
        .map(|row| row.n_p)
}

fn main() -> ExitCode {
    let mut r = Report { failed: 0, total: 0 };
    let _ = std::fs::remove_dir_all(out_root());

    kick_strengths(&mut r);
    bessel(&mut r);
    obdm_oracle(&mut r);

    // free particles, desk grid
    let free = run("fig2-gamma0-desk", &[]);
    let mut free_plateau = None;
    match &free {
        Ok(out) => {
            let s = &out.series;
            match window_drift(s, (400, 600), (600, 800)) {
                Ok(d) => r.line("4a", d < 0.05, format!("gamma=0 drift [400,600] vs [600,800]: {:.2}%", d * 100.0)),
                Err(e) => r.missing("4a", &e.to_string()),
            }
            let min = s.rows.iter().filter_map(|row| row.jsd_prev).fold(f64::INFINITY, f64::min);
            let first = first_below(s, 1e-3);
            r.line(
                "4b",
                first.is_some_and(|n| n <= 350),
                format!("gamma=0 JSD(lag 100) < 1e-3 first at N_p = {first:?} (min over run {min:.2e})"),
            );
            free_plateau = localized_window_mean(s, (600, 800)).ok().map(|(m, _)| m);
            for n in LOCALIZED {
                match out.correlations.get(&n) {
                    Some(c) => {
                        let w = full_range(c);
                        let (lor, exp) = (residual(c, DecayModel::Lorentzian, w), residual(c, DecayModel::Exponential, w));
                        r.line("7b", lor < exp, format!("gamma=0 N_p={n} full range: Lorentzian {lor:.3e} vs exponential {exp:.3e}"));
                    }
                    None => r.missing("7b", &format!("no gamma=0 snapshot at {n}")),
                }
            }
        }
        Err(e) => {
            r.missing("4a", e);
            r.missing("4b", e);
            r.missing("7b", e);
        }
    }

    // random-kick control
    match run("fig3-random-desk", &[]) {
        Ok(out) => {
            let e = out.series.energies();
            let blocks: Vec<f64> = (0..8)
                .map(|b| {
                    let lo = 101 + 50 * b;
                    let v: Vec<f64> = e.iter().filter(|(n, _)| (lo..lo + 50).contains(n)).map(|p| p.1).collect();
                    v.iter().sum::<f64>() / v.len() as f64
                })
                .collect();
            let mono = blocks.windows(2).all(|w| w[1] > w[0]);
            r.line("6a", mono, format!("random kicks, 50-kick block means after 100: {blocks:.3?}"));
            let last = out.series.row(500).map(|row| row.energy_er);
            match (last, free_plateau) {
                (Some(el), Some(fp)) => r.line(
                    "6b",
                    el >= 3.0 * fp,
                    format!("E(500) = {el:.3} E_r vs gamma=0 plateau {fp:.3} E_r (ratio {:.2})", el / fp),
                ),
                _ => r.missing("6b", "missing E(500) or gamma=0 plateau"),
            }
            match window_drift(&out.series, (250, 375), (375, 500)) {
                Ok(d) => r.line("6c", d >= 0.05, format!("random kicks drift [250,375] vs [375,500]: {:.2}% (must not saturate)", d * 100.0)),
                Err(e) => r.missing("6c", &e.to_string()),
            }
        }
        Err(e) => {
            for id in ["6a", "6b", "6c"] {
                r.missing(id, &e);
            }
        }
    }

    // Tonks-Girardeau gas, desk grid, full snapshot ladder
    let tg = run("fig3-tg-desk", &[]);
    let mut tg_plateau = None;
    match &tg {
        Ok(out) => {
            let s = &out.series;
            match localized_window_mean(s, (600, 800)) {
                Ok((m, _)) => {
                    tg_plateau = Some(m);
                    let onset = saturation_onset(s, m, 0.9, 100);
                    r.line(
                        "5a",
                        onset.is_some_and(|n| (300..=700).contains(&n)),
                        format!("TG onset (100-kick mean reaches 90% of plateau) at N_p = {onset:?}"),
                    );
                    r.line(
                        "5b",
                        (m / 9.0 - 1.0).abs() <= 0.3,
                        format!("TG late-window energy {m:.3} E_r vs 9 E_r ({:+.1}%)", (m / 9.0 - 1.0) * 100.0),
                    );
                }
                Err(e) => {
                    r.missing("5a", &e.to_string());
                    r.missing("5b", &e.to_string());
                }
            }
            for n in LOCALIZED {
                match out.correlations.get(&n) {
                    Some(c) => {
                        let w = (0.25, 2.5);
                        let (exp, lor) = (residual(c, DecayModel::Exponential, w), residual(c, DecayModel::Lorentzian, w));
                        r.line("7a", exp < lor, format!("TG N_p={n} on [0.25,2.5]: exponential {exp:.3e} vs Lorentzian {lor:.3e}"));
                    }
                    None => r.missing("7a", &format!("no TG snapshot at {n}")),
                }
            }
            match out.correlations.get(&0) {
                Some(c) => {
                    let w = full_range(c);
                    let (alg, exp) = (residual(c, DecayModel::Algebraic, w), residual(c, DecayModel::Exponential, w));
                    r.line("7c", alg < exp, format!("TG ground state full range: algebraic {alg:.3e} vs exponential {exp:.3e}"));
                }
                None => r.missing("7c", "no ground-state snapshot"),
            }
            let pairs: Vec<(usize, f64, f64)> = s
                .rows
                .iter()
                .filter_map(|row| Some((row.n_p, row.s_info?, row.s_vn_unit_trace?)))
                .collect();
            let info: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let vn: Vec<f64> = pairs.iter().map(|p| p.2).collect();
            match rank_correlation(&info, &vn) {
                Ok(rho) => r.line("10a", rho > 0.95, format!("S_info vs S_vN rank correlation {rho:.4} over {} snapshots", info.len())),
                Err(e) => r.missing("10a", &e.to_string()),
            }
            for (name, idx) in [("S_info", 1), ("S_vN", 2)] {
                let pts: Vec<(usize, f64)> = pairs.iter().map(|p| (p.0, if idx == 1 { p.1 } else { p.2 })).collect();
                match (window_mean(&pts, (400, 600)), window_mean(&pts, (600, 800))) {
                    (Ok((a, _)), Ok((b, _))) => {
                        let d = (b - a).abs() / b.abs();
                        r.line("10b", d < 0.05, format!("{name} drift [400,600] vs [600,800]: {:.2}%", d * 100.0));
                    }
                    (Err(e), _) | (_, Err(e)) => r.missing("10b", &e.to_string()),
                }
            }
        }
        Err(e) => {
            for id in ["5a", "5b", "7a", "7c", "10a", "10b"] {
                r.missing(id, e);
            }
        }
    }

    // finer grids: plateau convergence and the contact tail
    let ladder = ["grid.n_dim=4096", "record.snapshots=1,601,801", "record.vn=false"];
    let tg_fine = run("fig3-tg-desk", &ladder);
    let free_fine = run("fig2-gamma0-desk", &ladder[..2]);
    match (&tg_fine, tg_plateau) {
        (Ok(out), Some(coarse)) => match localized_window_mean(&out.series, (600, 800)) {
            Ok((fine, _)) => {
                let rel = (fine / coarse - 1.0).abs();
                r.line("5c", rel < 0.02, format!("TG plateau n_dim 2048 -> 4096: {coarse:.3} -> {fine:.3} E_r ({:.2}%)", rel * 100.0));
            }
            Err(e) => r.missing("5c", &e.to_string()),
        },
        (Err(e), _) => r.missing("5c", e),
        (_, None) => r.missing("5c", "no 2048 plateau"),
    }
    match (&tg_fine, &free_fine) {
        (Ok(t), Ok(f)) => {
            let cv = |s: &Series, n: usize| s.row(n).and_then(|row| row.contact_cv);
            for n in LOCALIZED {
                match (cv(&t.series, n), cv(&t.series, 1), cv(&f.series, n)) {
                    (Some(loc), Some(start), Some(free)) => r.line(
                        "8",
                        loc < start && loc < free,
                        format!("k^4 n(k) cv beyond 6 k_L (n_dim 4096): TG N_p={n} {loc:.3} vs N_p=1 {start:.3}, gamma=0 {free:.3}"),
                    ),
                    _ => r.missing("8", &format!("contact cv missing at N_p={n}")),
                }
            }
        }
        (Err(e), _) | (_, Err(e)) => r.missing("8", e),
    }

    invariants(&mut r);

    println!("{} of {} criteria lines passed", r.total - r.failed, r.total);
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if r.failed == 0 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
