//! Flat `key = value` configuration, built-in presets and the typed
//! experiment description resolved from them.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::floquet::{KickKind, KickSchedule, Splitting};
use crate::grid::BoundaryMonitor;
use crate::spham::{TrapKind, TrapSpec};
use crate::units::{derive_scaled, PhysicalParams, ScaledParams};

/// Presets shipped with the library, `(name, file contents)`.
pub const PRESETS: &[(&str, &str)] = &[
    ("cesium-1064", include_str!("../presets/cesium-1064.conf")),
    ("fig2-gamma0-desk", include_str!("../presets/fig2-gamma0-desk.conf")),
    ("fig3-tg-desk", include_str!("../presets/fig3-tg-desk.conf")),
    ("fig3-random-desk", include_str!("../presets/fig3-random-desk.conf")),
    ("production-tg", include_str!("../presets/production-tg.conf")),
];

/// Every recognised key with its default value.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("preset", "custom"),
    ("species", "cesium-1064"),
    ("physics.lattice_nm", "auto"),
    ("physics.mass_amu", "auto"),
    ("physics.period_us", "auto"),
    ("physics.pulse_us", "auto"),
    ("physics.kick_depth_er", "auto"),
    ("model.gamma", "inf"),
    ("particles.n", "18"),
    ("grid.n_dim", "2048"),
    ("grid.length_um", "300"),
    ("grid.commensurate", "true"),
    ("trap.kind", "flat_bottom"),
    ("trap.v1_er", "45.7"),
    ("trap.v2_er", "9.3"),
    ("trap.w1_um", "300"),
    ("trap.w2_um", "135"),
    ("trap.freq_hz", "14.7"),
    ("kick.kind", "periodic_square"),
    ("kick.n", "800"),
    ("kick.K", "auto"),
    ("kick.pulse_fraction", "auto"),
    ("kick.substeps", "8"),
    ("kick.seed", "0"),
    ("kick.jitter", "0"),
    ("kick.splitting", "strang"),
    ("kick.realizations", "1"),
    ("record.series_every", "10"),
    ("record.snapshot_every", "100"),
    ("record.snapshots", ""),
    ("record.ground", "false"),
    ("record.vn", "true"),
    ("record.obdm_bin", "false"),
    ("analysis.jsd_lag", "100"),
    ("analysis.jsd_threshold", "1e-3"),
    ("analysis.contact_kmin", "6"),
    ("analysis.fit_window", "0.25,2.5"),
    ("analysis.tof_blur_kl", "0"),
    ("analysis.early_window", "400,600"),
    ("analysis.late_window", "600,800"),
    ("monitor.edge_fraction", "0.05"),
    ("monitor.boundary_limit", "1e-6"),
    ("monitor.policy", "error"),
    ("numeric.precision", "f64"),
    ("output.dir", "runs"),
    ("run.desk_scale", "true"),
    ("run.long_running", "false"),
    ("run.oracle_check", "false"),
];

/// Loader directive pulling another preset in underneath the current file.
const INCLUDE_KEY: &str = "include";

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

fn is_known(key: &str) -> bool {
    DEFAULTS.iter().any(|(k, _)| *k == key)
}

/// Ordered key/value store. Ordering is by key, so the canonical text and
/// hash do not depend on the order keys were given in.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn defaults() -> Self {
        ConfigMap {
            entries: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are
    /// skipped; a key may appear only once per text.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected 'key = value'", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(Error::Config(format!("{origin}:{}: bad key '{k}'", i + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("{origin}:{}: duplicate key '{k}'", i + 1)));
            }
        }
        Ok(ConfigMap { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !is_known(key) {
            return Err(Error::Config(format!("unknown key '{key}'")));
        }
        self.entries.insert(key.to_string(), value.into());
        Ok(())
    }

    /// Applies a `key=value` override as given on the command line.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    /// Layers `other` on top, resolving `include` first.
    pub fn layer(&mut self, other: &ConfigMap) -> Result<()> {
        self.layer_depth(other, 0)
    }

    fn layer_depth(&mut self, other: &ConfigMap, depth: usize) -> Result<()> {
        if depth > 8 {
            return Err(Error::Config("preset includes nest too deeply".into()));
        }
        if let Some(name) = other.get(INCLUDE_KEY) {
            let text = preset_text(name).ok_or_else(|| Error::Config(format!("unknown preset '{name}'")))?;
            self.layer_depth(&ConfigMap::parse(text, name)?, depth + 1)?;
        }
        for (k, v) in &other.entries {
            if k == INCLUDE_KEY {
                continue;
            }
            self.set(k, v.clone())?;
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// One `key = value` line per key, sorted.
    pub fn canonical_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Defaults, then the named preset, then a config file, then overrides.
/// A config file may itself name a base with `include = <preset>`.
pub fn load(preset: Option<&str>, file: Option<&Path>, overrides: &[String]) -> Result<ConfigMap> {
    let mut map = ConfigMap::defaults();
    if let Some(name) = preset {
        let text = preset_text(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown preset '{name}' (known: {})",
                preset_names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        map.layer(&ConfigMap::parse(text, name)?)?;
    }
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        map.layer(&ConfigMap::parse(&text, &path.display().to_string())?)?;
    }
    for o in overrides {
        map.apply_override(o)?;
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interaction {
    /// `gamma = 0`: every boson in the same orbital.
    Free,
    /// `gamma -> inf`: Tonks-Girardeau.
    Tonks,
}

impl FromStr for Interaction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0" | "zero" | "free" => Ok(Interaction::Free),
            "inf" | "infinity" | "tg" | "tonks" => Ok(Interaction::Tonks),
            other => Err(Error::Config(format!("model.gamma must be 0 or inf, got '{other}'"))),
        }
    }
}

impl fmt::Display for Interaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interaction::Free => "0",
            Interaction::Tonks => "inf",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

/// Fully resolved, validated run description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub preset: String,
    pub physical: PhysicalParams,
    pub scaled: ScaledParams,
    pub interaction: Interaction,
    pub n_particles: usize,
    pub n_dim: usize,
    /// Box length in metres.
    pub length_z: f64,
    pub commensurate: bool,
    pub trap: TrapSpec,
    pub kick: KickSchedule,
    pub realizations: usize,
    pub series_every: usize,
    /// Kicks at which distributions (and, for TG, the OBDM) are kept.
    pub snapshots: Vec<usize>,
    pub vn_entropy: bool,
    pub obdm_bin: bool,
    pub jsd_lag: usize,
    pub jsd_threshold: f64,
    pub contact_kmin: f64,
    pub fit_window: (f64, f64),
    pub tof_blur: f64,
    pub early_window: (usize, usize),
    pub late_window: (usize, usize),
    pub monitor: BoundaryMonitor,
    pub precision: Precision,
    pub output_dir: PathBuf,
    pub desk_scale: bool,
    pub long_running: bool,
    pub oracle_check: bool,
    /// The map this was resolved from.
    pub source: ConfigMap,
}

fn value<'a>(map: &'a ConfigMap, key: &str) -> Result<&'a str> {
    map.get(key).ok_or_else(|| Error::Config(format!("missing key '{key}'")))
}

fn parsed<V: FromStr>(map: &ConfigMap, key: &str) -> Result<V> {
    let v = value(map, key)?;
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn auto_f64(map: &ConfigMap, key: &str) -> Result<Option<f64>> {
    match value(map, key)? {
        "auto" => Ok(None),
        _ => parsed(map, key).map(Some),
    }
}

fn pair<V: FromStr + Copy>(map: &ConfigMap, key: &str) -> Result<(V, V)> {
    let v = value(map, key)?;
    let bad = || Error::Config(format!("{key}: expected 'a,b', got '{v}'"));
    let (a, b) = v.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn bool_value(map: &ConfigMap, key: &str) -> Result<bool> {
    match value(map, key)? {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected true/false, got '{other}'"))),
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::InvalidParameter(m) => Error::Config(m),
        other => other,
    }
}

impl ExperimentConfig {
    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        for (k, _) in map.iter() {
            if !is_known(k) {
                return Err(Error::Config(format!("unknown key '{k}'")));
            }
        }
        let mut physical = PhysicalParams::preset(value(map, "species")?)?;
        if let Some(v) = auto_f64(map, "physics.lattice_nm")? {
            physical.lattice_constant = v * 1e-9;
        }
        if let Some(v) = auto_f64(map, "physics.mass_amu")? {
            physical.particle_mass = v * crate::units::ATOMIC_MASS_UNIT;
        }
        if let Some(v) = auto_f64(map, "physics.period_us")? {
            physical.kick_period = v * 1e-6;
        }
        if let Some(v) = auto_f64(map, "physics.pulse_us")? {
            physical.pulse_width = v * 1e-6;
        }
        if let Some(v) = auto_f64(map, "physics.kick_depth_er")? {
            physical.kick_depth_er = v;
        }
        let mut scaled = derive_scaled(&physical).map_err(config_err)?;

        let trap_kind: TrapKind = parsed_kind(map, "trap.kind")?;
        let trap = match trap_kind {
            TrapKind::None => TrapSpec::none(),
            TrapKind::FlatBottom => TrapSpec::flat_bottom(
                parsed(map, "trap.v1_er")?,
                parsed(map, "trap.v2_er")?,
                parsed::<f64>(map, "trap.w1_um")? * 1e-6,
                parsed::<f64>(map, "trap.w2_um")? * 1e-6,
            ),
            TrapKind::Gaussian => TrapSpec::gaussian(
                parsed(map, "trap.freq_hz")?,
                parsed::<f64>(map, "trap.w1_um")? * 1e-6,
                &physical,
            ),
        };
        trap.validate().map_err(config_err)?;

        if let Some(k) = auto_f64(map, "kick.K")? {
            scaled.kick_strength = k;
            scaled.kappa = k / scaled.hbar_eff;
        }
        if let Some(f) = auto_f64(map, "kick.pulse_fraction")? {
            scaled.pulse_fraction = f;
        }
        let kind: KickKind = parsed_kind(map, "kick.kind")?;
        let kick = KickSchedule {
            kind,
            n_kicks: parsed(map, "kick.n")?,
            kick_strength: scaled.kick_strength,
            pulse_fraction: scaled.pulse_fraction,
            sub_steps: parsed(map, "kick.substeps")?,
            rng_seed: parsed(map, "kick.seed")?,
            period_jitter: parsed(map, "kick.jitter")?,
            splitting: parsed_kind::<Splitting>(map, "kick.splitting")?,
        };
        kick.validate().map_err(config_err)?;
        if kind != KickKind::Random && kick.period_jitter != 0.0 {
            return Err(Error::Config("kick.jitter needs kick.kind = random".into()));
        }

        let interaction: Interaction = parsed_kind(map, "model.gamma")?;
        let n_particles: usize = parsed(map, "particles.n")?;
        let n_dim: usize = parsed(map, "grid.n_dim")?;
        if n_particles == 0 || n_particles >= n_dim {
            return Err(Error::Config(format!(
                "particles.n must lie in 1..n_dim, got {n_particles}"
            )));
        }
        let realizations: usize = parsed(map, "kick.realizations")?;
        if realizations == 0 {
            return Err(Error::Config("kick.realizations must be at least 1".into()));
        }
        if realizations > 1 && interaction == Interaction::Tonks {
            return Err(Error::Config(
                "realization averaging is only supported for model.gamma = 0".into(),
            ));
        }

        let series_every: usize = parsed(map, "record.series_every")?;
        if series_every == 0 {
            return Err(Error::Config("record.series_every must be positive".into()));
        }
        let mut snapshots = Vec::new();
        if bool_value(map, "record.ground")? {
            snapshots.push(0);
        }
        let explicit = value(map, "record.snapshots")?;
        if explicit.is_empty() {
            let every: usize = parsed(map, "record.snapshot_every")?;
            if every == 0 {
                return Err(Error::Config("record.snapshot_every must be positive".into()));
            }
            snapshots.extend((1..=kick.n_kicks).step_by(every));
        } else {
            for s in explicit.split(',') {
                let v: usize = s
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("record.snapshots: bad entry '{s}'")))?;
                snapshots.push(v);
            }
        }
        if snapshots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("record ladder must be strictly increasing".into()));
        }
        if snapshots.last().is_some_and(|&s| s > kick.n_kicks) {
            return Err(Error::Config("snapshot beyond kick.n".into()));
        }

        let fit_window: (f64, f64) = pair(map, "analysis.fit_window")?;
        if !(fit_window.0 >= 0.0 && fit_window.0 < fit_window.1) {
            return Err(Error::Config("analysis.fit_window must satisfy 0 <= lo < hi".into()));
        }
        let early_window = pair(map, "analysis.early_window")?;
        let late_window = pair(map, "analysis.late_window")?;
        for (name, (lo, hi)) in [("early_window", early_window), ("late_window", late_window)] {
            if lo >= hi {
                return Err(Error::Config(format!("analysis.{name} must be increasing")));
            }
        }

        let policy = value(map, "monitor.policy")?;
        let enforce = match policy {
            "error" => true,
            "warn" => false,
            other => return Err(Error::Config(format!("monitor.policy must be error or warn, got '{other}'"))),
        };
        let monitor = BoundaryMonitor {
            edge_fraction: parsed(map, "monitor.edge_fraction")?,
            limit: parsed(map, "monitor.boundary_limit")?,
            enforce,
        };
        if !(monitor.edge_fraction > 0.0 && monitor.edge_fraction < 1.0) {
            return Err(Error::Config("monitor.edge_fraction must lie in (0, 1)".into()));
        }
        let precision = match value(map, "numeric.precision")? {
            "f64" => Precision::F64,
            "f32" => Precision::F32,
            other => return Err(Error::Config(format!("numeric.precision must be f32 or f64, got '{other}'"))),
        };
        let length_um: f64 = parsed(map, "grid.length_um")?;
        if !(length_um > 0.0) {
            return Err(Error::Config("grid.length_um must be positive".into()));
        }

        Ok(ExperimentConfig {
            preset: value(map, "preset")?.to_string(),
            physical,
            scaled,
            interaction,
            n_particles,
            n_dim,
            length_z: length_um * 1e-6,
            commensurate: bool_value(map, "grid.commensurate")?,
            trap,
            kick,
            realizations,
            series_every,
            snapshots,
            vn_entropy: bool_value(map, "record.vn")?,
            obdm_bin: bool_value(map, "record.obdm_bin")?,
            jsd_lag: parsed(map, "analysis.jsd_lag")?,
            jsd_threshold: parsed(map, "analysis.jsd_threshold")?,
            contact_kmin: parsed(map, "analysis.contact_kmin")?,
            fit_window,
            tof_blur: parsed(map, "analysis.tof_blur_kl")?,
            early_window,
            late_window,
            monitor,
            precision,
            output_dir: PathBuf::from(value(map, "output.dir")?),
            desk_scale: bool_value(map, "run.desk_scale")?,
            long_running: bool_value(map, "run.long_running")?,
            oracle_check: bool_value(map, "run.oracle_check")?,
            source: map.clone(),
        })
    }

    /// Orbitals that need propagating: one for `gamma = 0`, `N` for TG.
    pub fn n_orbitals(&self) -> usize {
        match self.interaction {
            Interaction::Free => 1,
            Interaction::Tonks => self.n_particles,
        }
    }

    /// Kicks at which a series row is produced: every `series_every`
    /// starting from kick 1, the final kick, and the snapshot ladder.
    pub fn series_kicks(&self) -> Vec<usize> {
        let mut v: Vec<usize> = (1..=self.kick.n_kicks).step_by(self.series_every).collect();
        if self.kick.n_kicks > 0 {
            v.push(self.kick.n_kicks);
        }
        v.extend(&self.snapshots);
        v.sort_unstable();
        v.dedup();
        v
    }
}

fn parsed_kind<V: FromStr<Err = Error>>(map: &ConfigMap, key: &str) -> Result<V> {
    value(map, key)?.parse().map_err(|e: Error| match e {
        Error::Config(m) => Error::Config(format!("{key}: {m}")),
        other => other,
    })
}
