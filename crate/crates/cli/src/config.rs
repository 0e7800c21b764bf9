//! Scenario configuration in TOML. Rates and frequencies are entered as
//! ordinary frequencies (keys ending in `_hz`) and converted to angular units
//! when the core parameter structs are resolved.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use cfb_core::entanglement::{PrecoolMode, ProtocolConfig, StageSchedule, TemporalModeSpec};
use cfb_core::optimize::{Knob, MinimizeOptions, NelderMeadOptions};
use cfb_core::{AuxCavityParams, AuxMirrorParams, OmParams, PathParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

fn hz(f: f64) -> f64 {
    2.0 * PI * f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Bare,
    #[default]
    CavityFeedback,
    MirrorFeedback,
    Effective,
    Entangle,
}

/// How `path.delay_s` is read: as the single-way path delay or as the
/// round trip (twice the single-way delay).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DelayConvention {
    #[default]
    SingleWay,
    RoundTrip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OmConfig {
    pub f_m_hz: f64,
    pub q_m: f64,
    pub kappa_c_hz: f64,
    pub eta_c: f64,
    pub delta_c_hz: f64,
    pub g0_hz: f64,
    pub n_cav: f64,
    pub temperature_k: f64,
}

impl Default for OmConfig {
    fn default() -> Self {
        Self {
            f_m_hz: 1e6,
            q_m: 2e7,
            kappa_c_hz: 10e9,
            eta_c: 0.8,
            delta_c_hz: 0.0,
            g0_hz: 250e3,
            n_cav: 500.0,
            temperature_k: 4.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuxConfig {
    pub kappa1_hz: f64,
    pub kappa2_hz: f64,
    pub delta_a_hz: f64,
}

impl Default for AuxConfig {
    fn default() -> Self {
        Self {
            kappa1_hz: 400e3,
            kappa2_hz: 100e3,
            delta_a_hz: -1e6,
        }
    }
}

impl AuxConfig {
    fn resolve(&self) -> AuxCavityParams {
        AuxCavityParams {
            kappa1: hz(self.kappa1_hz),
            kappa2: hz(self.kappa2_hz),
            delta_a: hz(self.delta_a_hz),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MirrorConfig {
    pub reflectivity: f64,
}

impl Default for MirrorConfig {
    fn default() -> Self {
        Self { reflectivity: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathConfig {
    pub eta_s: f64,
    pub phi_s: f64,
    pub delay_s: f64,
    pub delay_convention: DelayConvention,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            eta_s: 0.7,
            phi_s: 0.0,
            delay_s: 0.0,
            delay_convention: DelayConvention::SingleWay,
        }
    }
}

impl PathConfig {
    pub fn single_way_delay(&self) -> f64 {
        match self.delay_convention {
            DelayConvention::SingleWay => self.delay_s,
            DelayConvention::RoundTrip => self.delay_s / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub precool: AuxConfig,
    pub precool_phi_s: f64,
    /// Timed pre-cooling in seconds; the steady state is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precool_duration_s: Option<f64>,
    /// Generation cavity; the swap cavity has the opposite detuning.
    pub generation: AuxConfig,
    pub phi_s: f64,
    pub gap_s: f64,
    pub gamma_tm: f64,
    pub tau_p_s: f64,
    pub detection_efficiency: f64,
    pub adiabatic: bool,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            precool: AuxConfig::default(),
            precool_phi_s: 0.0,
            precool_duration_s: None,
            generation: AuxConfig {
                kappa1_hz: 800e3,
                kappa2_hz: 500e3,
                delta_a_hz: 1e6,
            },
            phi_s: 0.0,
            gap_s: 100e-9,
            gamma_tm: 1e5,
            tau_p_s: 2e-5,
            detection_efficiency: 1.0,
            adiabatic: false,
        }
    }
}

/// Scalar inputs a sweep or a series can set, in config units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    NCav,
    /// Quantum cooperativity; sets the drive `n_cav`.
    CQu,
    EtaS,
    PhiS,
    DelayS,
    QM,
    TemperatureK,
    Kappa1Hz,
    Kappa2Hz,
    DeltaAHz,
    GammaTm,
    TauPS,
    GapS,
}

impl SweepParam {
    pub fn column(self) -> &'static str {
        match self {
            SweepParam::NCav => "n_cav",
            SweepParam::CQu => "C_qu",
            SweepParam::EtaS => "eta_s",
            SweepParam::PhiS => "phi_s",
            SweepParam::DelayS => "delay_s",
            SweepParam::QM => "q_m",
            SweepParam::TemperatureK => "temperature_k",
            SweepParam::Kappa1Hz => "kappa1_hz",
            SweepParam::Kappa2Hz => "kappa2_hz",
            SweepParam::DeltaAHz => "delta_a_hz",
            SweepParam::GammaTm => "gamma_tm",
            SweepParam::TauPS => "tau_p_s",
            SweepParam::GapS => "gap_s",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParam,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lin: Option<Range>,
    /// Each entry is one curve: a set of overrides applied before the sweep.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<BTreeMap<SweepParam, f64>>,
    /// Adds the sideband-cooling reference of the effective model
    /// (`phi_s = 0`, `Delta_A = -Omega_m`) as column `n_sideband`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub sideband_reference: bool,
}

impl SweepConfig {
    pub fn grid(&self) -> Result<Vec<f64>> {
        let given = [self.values.is_some(), self.log.is_some(), self.lin.is_some()];
        if given.iter().filter(|g| **g).count() != 1 {
            return Err(CliError::Config(
                "sweep needs exactly one of `values`, `log` or `lin`".into(),
            ));
        }
        let grid = if let Some(v) = &self.values {
            v.clone()
        } else if let Some(r) = &self.log {
            if !(r.start > 0.0 && r.stop > 0.0) {
                return Err(CliError::Config("sweep.log bounds must be positive".into()));
            }
            spaced(r, |a, b, t| (a.ln() + t * (b.ln() - a.ln())).exp())
        } else {
            let r = self.lin.as_ref().unwrap();
            spaced(r, |a, b, t| a + t * (b - a))
        };
        if grid.is_empty() {
            return Err(CliError::Config("sweep grid is empty".into()));
        }
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Config("sweep grid has non-finite values".into()));
        }
        Ok(grid)
    }

    /// Series keys in a stable order (union over all entries).
    pub fn series_columns(&self) -> Vec<SweepParam> {
        let mut keys: Vec<SweepParam> = self.series.iter().flat_map(|s| s.keys().copied()).collect();
        keys.sort();
        keys.dedup();
        keys
    }
}

fn spaced(r: &Range, f: impl Fn(f64, f64, f64) -> f64) -> Vec<f64> {
    match r.points {
        0 => Vec::new(),
        1 => vec![r.start],
        n => (0..n).map(|k| f(r.start, r.stop, k as f64 / (n - 1) as f64)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeConfig {
    pub free: Vec<Knob>,
    pub starts: usize,
    pub seed: u64,
    pub x_tol: f64,
    pub f_rel_tol: f64,
    pub max_evals: usize,
    /// Search boxes overriding the defaults, `[lo, hi]` in config units
    /// (Hz for `delta_a`, `kappa1`, `kappa2`; seconds; 1/s; radians).
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub bounds: BTreeMap<Knob, [f64; 2]>,
    /// Start point, in the same units as `bounds`; knobs not listed start
    /// from the scenario's own value.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub warm_start: BTreeMap<Knob, f64>,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        let nm = NelderMeadOptions::default();
        Self {
            free: vec![Knob::PhiS, Knob::DeltaA],
            starts: 16,
            seed: 0,
            x_tol: nm.x_tol,
            f_rel_tol: nm.f_rel_tol,
            max_evals: nm.max_evals,
            bounds: BTreeMap::new(),
            warm_start: BTreeMap::new(),
        }
    }
}

/// Multiplier from config units to the core's units for a knob.
pub fn knob_scale(knob: Knob) -> f64 {
    match knob {
        Knob::DeltaA | Knob::Kappa1 | Knob::Kappa2 => 2.0 * PI,
        _ => 1.0,
    }
}

/// CSV column of a knob, in config units.
pub fn knob_column(knob: Knob) -> &'static str {
    match knob {
        Knob::PhiS => "phi_s",
        Knob::DeltaA => "delta_a_hz",
        Knob::Kappa1 => "kappa1_hz",
        Knob::Kappa2 => "kappa2_hz",
        Knob::TauS => "tau_s",
        Knob::GammaTm => "gamma_tm",
        Knob::TauP => "tau_p_s",
    }
}

impl OptimizeConfig {
    pub fn options(&self) -> MinimizeOptions {
        MinimizeOptions {
            starts: self.starts,
            seed: self.seed,
            nelder_mead: NelderMeadOptions {
                x_tol: self.x_tol,
                f_rel_tol: self.f_rel_tol,
                max_evals: self.max_evals,
                ..NelderMeadOptions::default()
            },
        }
    }

    fn validate(&self) -> Result<()> {
        if self.free.is_empty() {
            return Err(CliError::Config("optimize.free must name at least one parameter".into()));
        }
        for (k, [lo, hi]) in &self.bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(CliError::Config(format!(
                    "optimize.bounds.{}: need finite lo < hi, got [{lo}, {hi}]",
                    k.name()
                )));
            }
        }
        for k in self.warm_start.keys() {
            if !self.free.contains(k) {
                return Err(CliError::Config(format!(
                    "optimize.warm_start.{} is not a free parameter",
                    k.name()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Frequency grid of the exported spectrum.
    pub spectrum_hz: Range,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            spectrum_hz: Range {
                start: 1e4,
                stop: 1e11,
                points: 400,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scheme: SchemeKind,
    pub om: OmConfig,
    pub aux: AuxConfig,
    pub mirror: MirrorConfig,
    pub path: PathConfig,
    pub protocol: ProtocolSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeConfig>,
    pub output: OutputConfig,
}

/// Parses and validates a configuration. Omitted keys take their defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `text` layered over `base` (tables merge key by key).
pub fn parse_config_over(base: &str, text: &str) -> Result<ScenarioConfig> {
    let parse = |s: &str| s.parse::<toml::Table>().map_err(|e| CliError::Config(e.to_string()));
    let mut merged = parse(base)?;
    let over = parse(text)?;
    // A grid in the overlay replaces the base grid whatever its form.
    if let (Some(toml::Value::Table(b)), Some(toml::Value::Table(o))) = (merged.get_mut("sweep"), over.get("sweep")) {
        const GRID: [&str; 3] = ["values", "log", "lin"];
        if GRID.iter().any(|k| o.contains_key(*k)) {
            b.retain(|k, _| !GRID.contains(&k.as_ref()));
        }
    }
    merge(&mut merged, over);
    let cfg: ScenarioConfig = merged.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

pub fn serialize_config(cfg: &ScenarioConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| CliError::Config(e.to_string()))
}

/// Core parameter sets resolved from a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Resolved {
    pub om: OmParams,
    pub aux: AuxCavityParams,
    pub mirror: AuxMirrorParams,
    pub path: PathParams,
}

impl ScenarioConfig {
    pub fn resolve(&self) -> Resolved {
        let o = &self.om;
        Resolved {
            om: OmParams {
                omega_m: hz(o.f_m_hz),
                q_m: o.q_m,
                kappa_c: hz(o.kappa_c_hz),
                eta_c: o.eta_c,
                delta_c: hz(o.delta_c_hz),
                g0: hz(o.g0_hz),
                n_cav: o.n_cav,
                temperature: o.temperature_k,
            },
            aux: self.aux.resolve(),
            mirror: AuxMirrorParams {
                reflectivity: self.mirror.reflectivity,
            },
            path: PathParams {
                eta_s: self.path.eta_s,
                phi_s: self.path.phi_s,
                tau_s: self.path.single_way_delay(),
            },
        }
    }

    pub fn protocol(&self) -> ProtocolConfig {
        let r = self.resolve();
        let p = &self.protocol;
        ProtocolConfig {
            om: r.om,
            eta_s: r.path.eta_s,
            schedule: StageSchedule {
                precool_aux: p.precool.resolve(),
                precool_phi_s: p.precool_phi_s,
                precool_mode: match p.precool_duration_s {
                    Some(t) => PrecoolMode::Timed(t),
                    None => PrecoolMode::SteadyState,
                },
                aux: p.generation.resolve(),
                phi_s: p.phi_s,
                gap: p.gap_s,
            },
            mode: TemporalModeSpec {
                gamma_tm: p.gamma_tm,
                tau_p: p.tau_p_s,
            },
            detection_efficiency: p.detection_efficiency,
            adiabatic: p.adiabatic,
        }
    }

    /// Range and consistency checks on every block.
    pub fn validate(&self) -> Result<()> {
        let r = self.resolve();
        let core = |e: cfb_core::Error| CliError::Config(e.to_string());
        r.om.validate().map_err(core)?;
        r.aux.validate().map_err(core)?;
        r.mirror.validate().map_err(core)?;
        r.path.validate().map_err(core)?;
        let p = self.protocol();
        p.schedule.validate().map_err(core)?;
        p.mode.validate().map_err(core)?;
        if !(0.0..=1.0).contains(&p.detection_efficiency) {
            return Err(CliError::Config(format!(
                "protocol.detection_efficiency must be in [0, 1], got {}",
                p.detection_efficiency
            )));
        }
        if self.output.spectrum_hz.points == 0 || !(self.output.spectrum_hz.start > 0.0) {
            return Err(CliError::Config("output.spectrum_hz needs points > 0 and start > 0".into()));
        }
        if let Some(s) = &self.sweep {
            s.grid()?;
        }
        if let Some(o) = &self.optimize {
            o.validate()?;
        }
        Ok(())
    }

    /// Current value of an optimizer knob, in config units.
    pub fn knob_value(&self, knob: Knob) -> f64 {
        let entangle = self.scheme == SchemeKind::Entangle;
        let aux = if entangle { &self.protocol.generation } else { &self.aux };
        match knob {
            Knob::PhiS if entangle => self.protocol.phi_s,
            Knob::PhiS => self.path.phi_s,
            Knob::DeltaA => aux.delta_a_hz,
            Knob::Kappa1 => aux.kappa1_hz,
            Knob::Kappa2 => aux.kappa2_hz,
            Knob::TauS => self.path.single_way_delay(),
            Knob::GammaTm => self.protocol.gamma_tm,
            Knob::TauP => self.protocol.tau_p_s,
        }
    }

    /// First optimizer start in core units: the configured warm start, with
    /// the scenario's own values for unlisted knobs.
    pub fn initial_point(&self) -> Vec<f64> {
        let opt = self.optimize.clone().unwrap_or_default();
        opt.free
            .iter()
            .map(|k| opt.warm_start.get(k).copied().unwrap_or_else(|| self.knob_value(*k)) * knob_scale(*k))
            .collect()
    }

    /// Sets one scalar input, in config units.
    pub fn set(&mut self, param: SweepParam, v: f64) {
        match param {
            SweepParam::NCav => self.om.n_cav = v,
            SweepParam::CQu => {
                let om = self.resolve().om;
                self.om.n_cav = v * om.n_th() * om.kappa_c * om.gamma_m() / (4.0 * om.g0 * om.g0);
            }
            SweepParam::EtaS => self.path.eta_s = v,
            SweepParam::PhiS => {
                self.path.phi_s = v;
                self.protocol.phi_s = v;
            }
            SweepParam::DelayS => self.path.delay_s = v,
            SweepParam::QM => self.om.q_m = v,
            SweepParam::TemperatureK => self.om.temperature_k = v,
            SweepParam::Kappa1Hz => {
                self.aux.kappa1_hz = v;
                self.protocol.generation.kappa1_hz = v;
            }
            SweepParam::Kappa2Hz => {
                self.aux.kappa2_hz = v;
                self.protocol.generation.kappa2_hz = v;
            }
            SweepParam::DeltaAHz => {
                self.aux.delta_a_hz = v;
                self.protocol.generation.delta_a_hz = v;
            }
            SweepParam::GammaTm => self.protocol.gamma_tm = v,
            SweepParam::TauPS => self.protocol.tau_p_s = v,
            SweepParam::GapS => self.protocol.gap_s = v,
        }
    }
}
