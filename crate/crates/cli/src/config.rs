//! Run configuration: flat `[section]` blocks of `key = value` lines, `#`
//! comments. Keys are case-insensitive; unknown sections or keys are errors.

use afcsim_core::cavity::CavitySpec;
use afcsim_core::medium::{CombSpec, ToothShape};
use afcsim_core::montecarlo::CountingConfig;
use afcsim_core::propagation::{PulseSpec, StorageSetup};
use afcsim_core::timebin::{QubitSetup, TimeBinQubit};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}` in section [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: invalid value for {field}: {reason}")]
    BadValue {
        line: usize,
        field: String,
        reason: String,
    },
    #[error("{field} out of range: {reason}")]
    Range { field: String, reason: String },
}

impl ConfigError {
    fn range(field: &str, reason: impl Into<String>) -> Self {
        ConfigError::Range {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonteCarloTarget {
    Storage,
    QubitFringe,
}

impl FromStr for MonteCarloTarget {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "storage" => Ok(Self::Storage),
            "qubit-fringe" => Ok(Self::QubitFringe),
            other => Err(format!("unknown target `{other}` (expected storage or qubit-fringe)")),
        }
    }
}

impl std::fmt::Display for MonteCarloTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Storage => "storage",
            Self::QubitFringe => "qubit-fringe",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QubitSection {
    pub bin_separation: f64,
    pub pulse_fwhm: f64,
    pub mean_photon_number: f64,
    pub early_time: f64,
    pub phases_deg: Vec<f64>,
    pub phase_points: usize,
    pub window: f64,
    pub analyzer_spacing: f64,
    pub analyzer_finesse: f64,
    pub analyzer_shape: ToothShape,
    pub analyzer_bandwidth: f64,
    pub match_memory: bool,
    /// Memory efficiency for the classical bound; simulated when `None`.
    pub efficiency: Option<f64>,
    pub noise_per_window: f64,
}

impl Default for QubitSection {
    fn default() -> Self {
        let q = TimeBinQubit::default();
        let filter = QubitSetup::default().filter;
        Self {
            bin_separation: q.bin_separation,
            pulse_fwhm: q.pulse_fwhm,
            mean_photon_number: q.mean_photon_number,
            early_time: q.early_time,
            phases_deg: vec![0.0, 45.0, 90.0, 135.0],
            phase_points: 16,
            window: 1.0,
            analyzer_spacing: filter.tooth_spacing,
            analyzer_finesse: filter.finesse,
            analyzer_shape: filter.shape,
            analyzer_bandwidth: filter.bandwidth,
            match_memory: false,
            efficiency: None,
            noise_per_window: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSection {
    pub storage_times: Vec<f64>,
    /// Applied to the storage-time scan; `None` disables the decay.
    pub t2_eff: Option<f64>,
    pub bandwidths: Vec<f64>,
    pub reference_fwhm: f64,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            storage_times: vec![2.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0],
            t2_eff: Some(89.0),
            bandwidths: vec![0.44, 0.74, 1.1, 1.47, 2.21, 2.94, 3.68],
            reference_fwhm: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSection {
    pub counting: CountingConfig,
    pub bin_width: f64,
    pub trials_per_point: u64,
    pub target: MonteCarloTarget,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self {
            counting: CountingConfig::default(),
            bin_width: 0.05,
            trials_per_point: 120_000,
            target: MonteCarloTarget::Storage,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub comb: CombSpec,
    /// Overrides `comb.peak_od` through the comb-averaged depth when set.
    pub effective_depth: Option<f64>,
    pub cavity: CavitySpec,
    pub pulse: PulseSpec,
    pub window: f64,
    pub span: f64,
    pub n_points: Option<usize>,
    pub qubit: QubitSection,
    pub scan: ScanSection,
    pub montecarlo: MonteCarloSection,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let setup = StorageSetup::default();
        Self {
            comb: setup.comb,
            effective_depth: None,
            cavity: setup.cavity,
            pulse: setup.pulse,
            window: setup.window,
            span: setup.span,
            n_points: setup.n_points,
            qubit: QubitSection::default(),
            scan: ScanSection::default(),
            montecarlo: MonteCarloSection::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "none".into())
}

/// `(key, value, doc)` as printed.
type Field = (&'static str, String, &'static str);

impl RunConfig {
    pub fn storage_setup(&self) -> StorageSetup {
        let comb = match self.effective_depth {
            Some(d) => self.comb.with_effective_depth(d),
            None => self.comb,
        };
        StorageSetup {
            comb,
            cavity: self.cavity,
            pulse: self.pulse,
            window: self.window,
            span: self.span,
            n_points: self.n_points,
        }
    }

    pub fn qubit(&self, delta: f64) -> TimeBinQubit {
        TimeBinQubit {
            bin_separation: self.qubit.bin_separation,
            pulse_fwhm: self.qubit.pulse_fwhm,
            mean_photon_number: self.qubit.mean_photon_number,
            early_time: self.qubit.early_time,
            ..TimeBinQubit::equatorial(delta)
        }
    }

    /// Memory and analyzer for the qubit experiment. With `match_memory` the
    /// memory comb depth is set to the impedance-matched value.
    pub fn qubit_setup(&self) -> Result<QubitSetup, afcsim_core::Error> {
        let mut memory = self.storage_setup();
        if self.qubit.match_memory {
            let c = &self.cavity;
            let d = afcsim_core::analytics::impedance_matched_depth(
                c.r_in,
                c.r_out,
                c.round_trip_loss,
            )?;
            memory.comb = memory.comb.with_effective_depth(d);
        }
        let filter = CombSpec {
            tooth_spacing: self.qubit.analyzer_spacing,
            finesse: self.qubit.analyzer_finesse,
            shape: self.qubit.analyzer_shape,
            bandwidth: self.qubit.analyzer_bandwidth,
            ..CombSpec::default()
        };
        Ok(QubitSetup {
            memory,
            filter,
            qubit: self.qubit(0.0),
            window: self.qubit.window,
        })
    }

    /// Range checks delegated to the core types plus the CLI-only fields.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let core = |e: afcsim_core::Error| match e {
            afcsim_core::Error::InvalidParameter { name, reason } => ConfigError::range(name, reason),
            other => ConfigError::range("config", other.to_string()),
        };
        self.comb.validate().map_err(core)?;
        self.cavity.validate().map_err(core)?;
        self.montecarlo.counting.validate().map_err(core)?;
        self.qubit(0.0).validate().map_err(core)?;
        if let Some(d) = self.effective_depth {
            if !(d.is_finite() && d >= 0.0) {
                return Err(ConfigError::range("effective_depth", "must be finite and >= 0"));
            }
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::range(name, format!("must be positive, got {v}")))
            }
        };
        positive("fwhm", self.pulse.fwhm)?;
        positive("window", self.window)?;
        positive("span", self.span)?;
        positive("qubit window", self.qubit.window)?;
        positive("analyzer_spacing", self.qubit.analyzer_spacing)?;
        positive("analyzer_bandwidth", self.qubit.analyzer_bandwidth)?;
        positive("reference_fwhm", self.scan.reference_fwhm)?;
        positive("bin_width", self.montecarlo.bin_width)?;
        if !(self.pulse.mean_photon_number.is_finite() && self.pulse.mean_photon_number > 0.0) {
            return Err(ConfigError::range("mean_photon_number", "must be positive"));
        }
        if self.qubit.analyzer_finesse < 1.0 {
            return Err(ConfigError::range("analyzer_finesse", "must be >= 1"));
        }
        if self.qubit.phase_points < 3 {
            return Err(ConfigError::range("phase_points", "need at least 3 points per period"));
        }
        if self.qubit.phases_deg.is_empty() {
            return Err(ConfigError::range("phases_deg", "need at least one input phase"));
        }
        if let Some(e) = self.qubit.efficiency {
            if !(e > 0.0 && e <= 1.0) {
                return Err(ConfigError::range("efficiency", "must lie in (0, 1]"));
            }
        }
        if !(self.qubit.noise_per_window >= 0.0) {
            return Err(ConfigError::range("noise_per_window", "must be >= 0"));
        }
        if let Some(t2) = self.scan.t2_eff {
            positive("t2_eff", t2)?;
        }
        for &t in &self.scan.storage_times {
            positive("storage_times", t)?;
        }
        for &b in &self.scan.bandwidths {
            positive("bandwidths", b)?;
        }
        if self.montecarlo.trials_per_point == 0 {
            return Err(ConfigError::range("trials_per_point", "must be positive"));
        }
        if self.montecarlo.counting.pulses_per_cycle == 0 {
            return Err(ConfigError::range("pulses_per_cycle", "must be positive"));
        }
        Ok(())
    }

    /// Canonical text form; parsing it back yields an identical config.
    pub fn to_text(&self, with_docs: bool) -> String {
        let c = &self.comb;
        let cav = &self.cavity;
        let q = &self.qubit;
        let mc = &self.montecarlo.counting;
        let sections: Vec<(&str, Vec<Field>)> = vec![
            (
                "comb",
                vec![
                    ("tooth_spacing", c.tooth_spacing.to_string(), "tooth spacing (MHz); storage time is its inverse"),
                    ("finesse", c.finesse.to_string(), "comb finesse, spacing over tooth width"),
                    ("shape", c.shape.name().to_string(), "tooth shape: square or gaussian"),
                    ("peak_od", c.peak_od.to_string(), "peak optical depth of a tooth"),
                    ("effective_depth", fmt_opt(self.effective_depth), "comb-averaged depth; overrides peak_od unless none"),
                    ("background_od", c.background_od.to_string(), "optical depth under the teeth"),
                    ("bandwidth", c.bandwidth.to_string(), "full comb bandwidth (MHz)"),
                    ("center_offset", c.center_offset.to_string(), "central tooth relative to the carrier (MHz)"),
                    ("pit_width", c.pit.width.to_string(), "spectral pit width (MHz)"),
                    ("line_od", c.pit.line_od.to_string(), "optical depth of the line outside the pit"),
                ],
            ),
            (
                "cavity",
                vec![
                    ("r_in", cav.r_in.to_string(), "input mirror intensity reflectivity"),
                    ("r_out", cav.r_out.to_string(), "back mirror intensity reflectivity"),
                    ("round_trip_loss", cav.round_trip_loss.to_string(), "round-trip intensity loss"),
                    ("round_trip_time", cav.round_trip_time.to_string(), "bare round-trip time (us)"),
                    ("resonance_offset", cav.resonance_offset.to_string(), "bare resonance relative to the carrier (MHz)"),
                ],
            ),
            (
                "pulse",
                vec![
                    ("fwhm", self.pulse.fwhm.to_string(), "input intensity FWHM (us)"),
                    ("center", self.pulse.center.to_string(), "input peak time (us)"),
                    ("mean_photon_number", self.pulse.mean_photon_number.to_string(), "mean photon number of the input"),
                    ("carrier_detuning", self.pulse.carrier_detuning.to_string(), "carrier detuning (MHz)"),
                    ("window", self.window.to_string(), "detection window width (us)"),
                    ("span", self.span.to_string(), "simulated frequency span (MHz)"),
                    ("n_points", self.n_points.map(|n| n.to_string()).unwrap_or_else(|| "auto".into()), "grid points, or auto"),
                ],
            ),
            (
                "qubit",
                vec![
                    ("bin_separation", q.bin_separation.to_string(), "early-late separation (us)"),
                    ("pulse_fwhm", q.pulse_fwhm.to_string(), "FWHM of each bin (us)"),
                    ("mean_photon_number", q.mean_photon_number.to_string(), "mean photon number per qubit"),
                    ("early_time", q.early_time.to_string(), "peak time of the early bin (us)"),
                    ("phases_deg", fmt_list(&q.phases_deg), "input phases (degrees)"),
                    ("phase_points", q.phase_points.to_string(), "analyzer settings per fringe period"),
                    ("window", q.window.to_string(), "interference window width (us)"),
                    ("analyzer_spacing", q.analyzer_spacing.to_string(), "analyzer tooth spacing (MHz)"),
                    ("analyzer_finesse", q.analyzer_finesse.to_string(), "analyzer comb finesse"),
                    ("analyzer_shape", q.analyzer_shape.name().to_string(), "analyzer tooth shape"),
                    ("analyzer_bandwidth", q.analyzer_bandwidth.to_string(), "analyzer comb bandwidth (MHz)"),
                    ("match_memory", q.match_memory.to_string(), "impedance-match the memory comb depth"),
                    ("efficiency", fmt_opt(q.efficiency), "memory efficiency for the classical bound, simulated when none"),
                    ("noise_per_window", q.noise_per_window.to_string(), "background photons per detection window for pole states"),
                ],
            ),
            (
                "scan",
                vec![
                    ("storage_times", fmt_list(&self.scan.storage_times), "storage times (us)"),
                    ("t2_eff", fmt_opt(self.scan.t2_eff), "effective coherence time (us), or none"),
                    ("bandwidths", fmt_list(&self.scan.bandwidths), "pulse bandwidths (MHz)"),
                    ("reference_fwhm", self.scan.reference_fwhm.to_string(), "FWHM at which the pulse carries mean_photon_number (us)"),
                ],
            ),
            (
                "montecarlo",
                vec![
                    ("pulses_per_cycle", mc.pulses_per_cycle.to_string(), "pulses per cryostat cycle"),
                    ("cycle_rate", mc.cycle_rate.to_string(), "cryostat cycles per second (Hz)"),
                    ("measurement_duration", mc.measurement_duration.to_string(), "run time (s), split between reference and memory cycles"),
                    ("dark_rate", mc.dark_rate.to_string(), "detector dark counts (Hz)"),
                    ("detection_window", mc.detection_window.to_string(), "counting window (us)"),
                    ("reference_reflectivity", mc.reference_reflectivity.to_string(), "blocked-cavity reflectivity used for normalization"),
                    ("detector_efficiency", mc.detector_efficiency.to_string(), "detector efficiency"),
                    ("seed", mc.rng_seed.to_string(), "random seed"),
                    ("bin_width", self.montecarlo.bin_width.to_string(), "histogram bin width (us)"),
                    ("trials_per_point", self.montecarlo.trials_per_point.to_string(), "trials per fringe point"),
                    ("target", self.montecarlo.target.to_string(), "storage or qubit-fringe"),
                ],
            ),
            (
                "output",
                vec![("dir", self.output_dir.display().to_string(), "output directory")],
            ),
        ];
        let mut out = String::new();
        for (k, (name, fields)) in sections.iter().enumerate() {
            if k > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "[{name}]");
            for (key, value, doc) in fields {
                if with_docs {
                    let _ = writeln!(out, "# {doc}");
                }
                let _ = writeln!(out, "{key} = {value}");
            }
        }
        out
    }
}

struct Entry {
    value: String,
    line: usize,
}

/// Parsed `(section, key)` entries, consumed field by field.
struct Entries(BTreeMap<(String, String), Entry>);

impl Entries {
    fn take<T>(
        &mut self,
        section: &str,
        key: &str,
        target: &mut T,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<(), ConfigError> {
        if let Some(e) = self.0.remove(&(section.to_string(), key.to_string())) {
            *target = parse(&e.value).map_err(|reason| ConfigError::BadValue {
                line: e.line,
                field: key.to_string(),
                reason,
            })?;
        }
        Ok(())
    }

    fn f64(&mut self, section: &str, key: &str, target: &mut f64) -> Result<(), ConfigError> {
        self.take(section, key, target, parse_f64)
    }

    fn opt(&mut self, section: &str, key: &str, target: &mut Option<f64>) -> Result<(), ConfigError> {
        self.take(section, key, target, |s| {
            if s.eq_ignore_ascii_case("none") {
                Ok(None)
            } else {
                parse_f64(s).map(Some)
            }
        })
    }

    fn list(&mut self, section: &str, key: &str, target: &mut Vec<f64>) -> Result<(), ConfigError> {
        self.take(section, key, target, |s| {
            s.split(',').map(|x| parse_f64(x.trim())).collect()
        })
    }

    fn int<T: FromStr>(&mut self, section: &str, key: &str, target: &mut T) -> Result<(), ConfigError> {
        self.take(section, key, target, |s| {
            s.parse().map_err(|_| format!("expected a non-negative integer, got `{s}`"))
        })
    }

    fn parsed<T: FromStr<Err = String>>(
        &mut self,
        section: &str,
        key: &str,
        target: &mut T,
    ) -> Result<(), ConfigError> {
        self.take(section, key, target, |s| s.to_ascii_lowercase().parse())
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .map_err(|_| format!("expected a number, got `{s}`"))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{s}`")),
    }
}

const SECTIONS: [&str; 7] = ["comb", "cavity", "pulse", "qubit", "scan", "montecarlo", "output"];

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut entries = BTreeMap::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Parse {
                    line,
                    message: format!("malformed section header `{content}`"),
                })?
                .trim()
                .to_ascii_lowercase();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("unknown section [{name}]"),
                });
            }
            section = Some(name);
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = key.trim().to_ascii_lowercase();
        if key.is_empty() {
            return Err(ConfigError::Parse {
                line,
                message: "empty key".into(),
            });
        }
        let section = section.clone().ok_or_else(|| ConfigError::Parse {
            line,
            message: format!("key `{key}` appears before any section"),
        })?;
        let value = value.trim().trim_matches('"').to_string();
        if entries
            .insert((section.clone(), key.clone()), Entry { value, line })
            .is_some()
        {
            return Err(ConfigError::Parse {
                line,
                message: format!("duplicate key `{key}` in section [{section}]"),
            });
        }
    }
    Ok(Entries(entries))
}

/// Parse and validate a configuration; absent keys keep their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut e = tokenize(text)?;
    let mut cfg = RunConfig::default();

    let c = &mut cfg.comb;
    e.f64("comb", "tooth_spacing", &mut c.tooth_spacing)?;
    e.f64("comb", "finesse", &mut c.finesse)?;
    e.parsed("comb", "shape", &mut c.shape)?;
    e.f64("comb", "peak_od", &mut c.peak_od)?;
    e.opt("comb", "effective_depth", &mut cfg.effective_depth)?;
    e.f64("comb", "background_od", &mut c.background_od)?;
    e.f64("comb", "bandwidth", &mut c.bandwidth)?;
    e.f64("comb", "center_offset", &mut c.center_offset)?;
    e.f64("comb", "pit_width", &mut c.pit.width)?;
    e.f64("comb", "line_od", &mut c.pit.line_od)?;

    let cav = &mut cfg.cavity;
    e.f64("cavity", "r_in", &mut cav.r_in)?;
    e.f64("cavity", "r_out", &mut cav.r_out)?;
    e.f64("cavity", "round_trip_loss", &mut cav.round_trip_loss)?;
    e.f64("cavity", "round_trip_time", &mut cav.round_trip_time)?;
    e.f64("cavity", "resonance_offset", &mut cav.resonance_offset)?;

    let p = &mut cfg.pulse;
    e.f64("pulse", "fwhm", &mut p.fwhm)?;
    e.f64("pulse", "center", &mut p.center)?;
    e.f64("pulse", "mean_photon_number", &mut p.mean_photon_number)?;
    e.f64("pulse", "carrier_detuning", &mut p.carrier_detuning)?;
    e.f64("pulse", "window", &mut cfg.window)?;
    e.f64("pulse", "span", &mut cfg.span)?;
    e.take("pulse", "n_points", &mut cfg.n_points, |s| {
        if s.eq_ignore_ascii_case("auto") {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| format!("expected an integer or auto, got `{s}`"))
        }
    })?;

    let q = &mut cfg.qubit;
    e.f64("qubit", "bin_separation", &mut q.bin_separation)?;
    e.f64("qubit", "pulse_fwhm", &mut q.pulse_fwhm)?;
    e.f64("qubit", "mean_photon_number", &mut q.mean_photon_number)?;
    e.f64("qubit", "early_time", &mut q.early_time)?;
    e.list("qubit", "phases_deg", &mut q.phases_deg)?;
    e.int("qubit", "phase_points", &mut q.phase_points)?;
    e.f64("qubit", "window", &mut q.window)?;
    e.f64("qubit", "analyzer_spacing", &mut q.analyzer_spacing)?;
    e.f64("qubit", "analyzer_finesse", &mut q.analyzer_finesse)?;
    e.parsed("qubit", "analyzer_shape", &mut q.analyzer_shape)?;
    e.f64("qubit", "analyzer_bandwidth", &mut q.analyzer_bandwidth)?;
    e.take("qubit", "match_memory", &mut q.match_memory, parse_bool)?;
    e.opt("qubit", "efficiency", &mut q.efficiency)?;
    e.f64("qubit", "noise_per_window", &mut q.noise_per_window)?;

    let s = &mut cfg.scan;
    e.list("scan", "storage_times", &mut s.storage_times)?;
    e.opt("scan", "t2_eff", &mut s.t2_eff)?;
    e.list("scan", "bandwidths", &mut s.bandwidths)?;
    e.f64("scan", "reference_fwhm", &mut s.reference_fwhm)?;

    let m = &mut cfg.montecarlo;
    e.int("montecarlo", "pulses_per_cycle", &mut m.counting.pulses_per_cycle)?;
    e.f64("montecarlo", "cycle_rate", &mut m.counting.cycle_rate)?;
    e.f64("montecarlo", "measurement_duration", &mut m.counting.measurement_duration)?;
    e.f64("montecarlo", "dark_rate", &mut m.counting.dark_rate)?;
    e.f64("montecarlo", "detection_window", &mut m.counting.detection_window)?;
    e.f64("montecarlo", "reference_reflectivity", &mut m.counting.reference_reflectivity)?;
    e.f64("montecarlo", "detector_efficiency", &mut m.counting.detector_efficiency)?;
    e.int("montecarlo", "seed", &mut m.counting.rng_seed)?;
    e.f64("montecarlo", "bin_width", &mut m.bin_width)?;
    e.int("montecarlo", "trials_per_point", &mut m.trials_per_point)?;
    e.parsed("montecarlo", "target", &mut m.target)?;

    e.take("output", "dir", &mut cfg.output_dir, |s| Ok(PathBuf::from(s)))?;

    if let Some(((section, key), entry)) = e.0.into_iter().min_by_key(|(_, v)| v.line) {
        return Err(ConfigError::UnknownKey {
            line: entry.line,
            section,
            key,
        });
    }
    cfg.validate()?;
    Ok(cfg)
}
