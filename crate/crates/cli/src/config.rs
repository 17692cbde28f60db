//! TOML run configuration.
//!
//! ```toml
//! scenario = "zeno"          # lindblad | chm | sse-ensemble | chain | zeno | rabi-monitor | transition | verify
//! seed = 1
//!
//! [model]
//! preset = "two-level"       # two-level | three-level; omit and give h, a instead
//! level_splitting = 2.0      # ΔE, presets only
//! rabi = 1.0                 # Ω, presets only
//! kappa = 1.0
//! # h = [[[0, 0], [1, 0]], [[1, 0], [0, 0]]]   rows of [re, im] pairs
//! # a = ...
//! # psi0 = [[0.6, 0], [0.8, 0]]
//!
//! [grid]
//! t0 = 0.0
//! dt = 0.01
//! n_steps = 200
//!
//! [run]
//! kappas = [0.1, 1, 10, 100]
//! ```

use std::fmt;
use std::ops::Range;
use std::path::PathBuf;

use qmeas_core::hilbert::{c64, CMatrix, HermitianOperator, QuantumState};
use qmeas_core::readout::TimeGrid;
use serde::Deserialize;
use toml::Spanned;

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "config line {line}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Lindblad,
    Chm,
    SseEnsemble,
    Chain,
    Zeno,
    RabiMonitor,
    Transition,
    Verify,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::Lindblad,
        Scenario::Chm,
        Scenario::SseEnsemble,
        Scenario::Chain,
        Scenario::Zeno,
        Scenario::RabiMonitor,
        Scenario::Transition,
        Scenario::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Lindblad => "lindblad",
            Scenario::Chm => "chm",
            Scenario::SseEnsemble => "sse-ensemble",
            Scenario::Chain => "chain",
            Scenario::Zeno => "zeno",
            Scenario::RabiMonitor => "rabi-monitor",
            Scenario::Transition => "transition",
            Scenario::Verify => "verify",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|sc| sc.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    TwoLevel,
    ThreeLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialLevel {
    Ground,
    Excited,
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub preset: Option<Preset>,
    pub level_splitting: f64,
    pub rabi: f64,
    pub kappa: f64,
    pub h: HermitianOperator,
    pub a: HermitianOperator,
    pub psi0: QuantumState,
}

/// Scenario options; `None` means the scenario picks its own default.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub n_traj: Option<usize>,
    pub stride: Option<usize>,
    pub quad_order: Option<usize>,
    pub kappas: Option<Vec<f64>>,
    pub record: Option<PathBuf>,
    pub readout: Option<f64>,
    pub strength: Option<f64>,
    pub n_chains: Option<usize>,
    pub threshold: Option<f64>,
    pub duration: Option<f64>,
    pub segments: Option<usize>,
    pub window: Option<f64>,
    pub initial: Option<InitialLevel>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub model: ModelSpec,
    pub t0: f64,
    pub dt: Option<f64>,
    pub n_steps: Option<usize>,
    pub run: RunOptions,
}

impl RunConfig {
    pub fn grid(&self, default_dt: f64, default_steps: usize) -> qmeas_core::Result<TimeGrid> {
        TimeGrid::new(self.t0, self.dt.unwrap_or(default_dt), self.n_steps.unwrap_or(default_steps))
    }
}

type Matrix = Vec<Vec<[f64; 2]>>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Spanned<String>,
    seed: Option<u64>,
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    run: RawRun,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawModel {
    preset: Option<Spanned<String>>,
    level_splitting: Option<Spanned<f64>>,
    rabi: Option<Spanned<f64>>,
    kappa: Option<Spanned<f64>>,
    h: Option<Spanned<Matrix>>,
    a: Option<Spanned<Matrix>>,
    psi0: Option<Spanned<Vec<[f64; 2]>>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    t0: Option<Spanned<f64>>,
    dt: Option<Spanned<f64>>,
    n_steps: Option<Spanned<usize>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRun {
    n_traj: Option<Spanned<usize>>,
    stride: Option<Spanned<usize>>,
    quad_order: Option<Spanned<usize>>,
    kappas: Option<Spanned<Vec<f64>>>,
    record: Option<String>,
    readout: Option<Spanned<f64>>,
    strength: Option<Spanned<f64>>,
    n_chains: Option<Spanned<usize>>,
    threshold: Option<Spanned<f64>>,
    duration: Option<Spanned<f64>>,
    segments: Option<Spanned<usize>>,
    window: Option<Spanned<f64>>,
    initial: Option<Spanned<String>>,
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        self.text[..span.start.min(self.text.len())].matches('\n').count() + 1
    }

    fn err<T>(&self, span: Range<usize>, message: impl Into<String>) -> Result<T, ConfigError> {
        Err(ConfigError { line: Some(self.line(span)), message: message.into() })
    }

    fn positive(&self, v: Option<Spanned<f64>>, name: &str) -> Result<Option<f64>, ConfigError> {
        match v {
            Some(s) if !(s.get_ref().is_finite() && *s.get_ref() > 0.0) => self.err(s.span(), format!("{name} must be positive")),
            Some(s) => Ok(Some(s.into_inner())),
            None => Ok(None),
        }
    }

    fn non_negative(&self, v: Option<Spanned<f64>>, name: &str) -> Result<Option<f64>, ConfigError> {
        match v {
            Some(s) if !(s.get_ref().is_finite() && *s.get_ref() >= 0.0) => self.err(s.span(), format!("{name} must be non-negative")),
            Some(s) => Ok(Some(s.into_inner())),
            None => Ok(None),
        }
    }

    fn count(&self, v: Option<Spanned<usize>>, name: &str) -> Result<Option<usize>, ConfigError> {
        match v {
            Some(s) if *s.get_ref() == 0 => self.err(s.span(), format!("{name} must be at least 1")),
            Some(s) => Ok(Some(s.into_inner())),
            None => Ok(None),
        }
    }

    fn operator(&self, m: Spanned<Matrix>, name: &str) -> Result<HermitianOperator, ConfigError> {
        let span = m.span();
        let rows = m.into_inner();
        let n = rows.len();
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return self.err(span, format!("{name} row {i} has {} entries, expected {n}", row.len()));
        }
        let flat: Vec<_> = rows.iter().flatten().map(|&[re, im]| c64(re, im)).collect();
        HermitianOperator::new(CMatrix::from_row_slice(n, n, &flat)).or_else(|e| self.err(span, format!("{name}: {e}")))
    }
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let ctx = Ctx { text };
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
        line: e.span().map(|s| ctx.line(s)),
        message: e.message().to_string(),
    })?;

    let scenario = Scenario::parse(raw.scenario.get_ref()).map_or_else(
        || {
            let names: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
            ctx.err(raw.scenario.span(), format!("unknown scenario '{}' (expected one of {})", raw.scenario.get_ref(), names.join(", ")))
        },
        Ok,
    )?;

    let model = parse_model(&ctx, raw.model, scenario)?;

    let g = raw.grid;
    let t0 = match g.t0 {
        Some(s) if !s.get_ref().is_finite() => return ctx.err(s.span(), "t0 must be finite"),
        Some(s) => s.into_inner(),
        None => 0.0,
    };
    let dt = ctx.positive(g.dt, "dt")?;
    let n_steps = ctx.count(g.n_steps, "n_steps")?;

    let r = raw.run;
    let kappas = match r.kappas {
        Some(s) if s.get_ref().is_empty() => return ctx.err(s.span(), "kappas must not be empty"),
        Some(s) if s.get_ref().iter().any(|k| !(k.is_finite() && *k > 0.0)) => return ctx.err(s.span(), "kappas must be positive"),
        Some(s) => Some(s.into_inner()),
        None => None,
    };
    let threshold = match r.threshold {
        Some(s) if !(0.0..1.0).contains(s.get_ref()) => return ctx.err(s.span(), "threshold must lie in [0, 1)"),
        Some(s) => Some(s.into_inner()),
        None => None,
    };
    let readout = match r.readout {
        Some(s) if !s.get_ref().is_finite() => return ctx.err(s.span(), "readout must be finite"),
        Some(s) => Some(s.into_inner()),
        None => None,
    };
    let initial = match r.initial {
        Some(s) => match s.get_ref().as_str() {
            "ground" => Some(InitialLevel::Ground),
            "excited" => Some(InitialLevel::Excited),
            other => return ctx.err(s.span(), format!("initial must be 'ground' or 'excited', got '{other}'")),
        },
        None => None,
    };
    let quad_order = match r.quad_order {
        Some(s) if *s.get_ref() < 10 => return ctx.err(s.span(), "quad_order must be at least 10"),
        Some(s) => Some(s.into_inner()),
        None => None,
    };
    let run = RunOptions {
        n_traj: ctx.count(r.n_traj, "n_traj")?,
        stride: ctx.count(r.stride, "stride")?,
        quad_order,
        kappas,
        record: r.record.map(PathBuf::from),
        readout,
        strength: ctx.positive(r.strength, "strength")?,
        n_chains: ctx.count(r.n_chains, "n_chains")?,
        threshold,
        duration: ctx.positive(r.duration, "duration")?,
        segments: ctx.count(r.segments, "segments")?,
        window: ctx.positive(r.window, "window")?,
        initial,
    };

    Ok(RunConfig { scenario, seed: raw.seed.unwrap_or(DEFAULT_SEED), model, t0, dt, n_steps, run })
}

fn preset_operators(preset: Preset, level_splitting: f64, rabi: f64) -> (HermitianOperator, HermitianOperator) {
    match preset {
        Preset::TwoLevel => (
            HermitianOperator::pauli_x().scaled(0.5 * rabi),
            HermitianOperator::pauli_z().scaled(-0.5 * level_splitting),
        ),
        Preset::ThreeLevel => {
            let mut h = CMatrix::zeros(3, 3);
            for k in 0..2 {
                h[(k, k + 1)] = c64(0.5 * rabi, 0.0);
                h[(k + 1, k)] = c64(0.5 * rabi, 0.0);
            }
            let a = HermitianOperator::diagonal(&[-1.0, 0.0, 2.0]).expect("valid diagonal");
            (HermitianOperator::new(h).expect("Hermitian by construction"), a.scaled(0.5 * level_splitting))
        }
    }
}

fn parse_model(ctx: &Ctx, m: RawModel, scenario: Scenario) -> Result<ModelSpec, ConfigError> {
    let level_splitting = ctx.positive(m.level_splitting, "level_splitting")?.unwrap_or(2.0);
    let rabi = ctx.non_negative(m.rabi, "rabi")?.unwrap_or(1.0);
    let kappa = ctx.positive(m.kappa, "kappa")?.unwrap_or(1.0);

    let preset = match (&m.preset, &m.h, &m.a) {
        (Some(p), None, None) => match p.get_ref().as_str() {
            "two-level" => Some(Preset::TwoLevel),
            "three-level" => Some(Preset::ThreeLevel),
            other => return ctx.err(p.span(), format!("unknown preset '{other}' (expected two-level or three-level)")),
        },
        (Some(p), _, _) => return ctx.err(p.span(), "give either a preset or explicit h and a, not both"),
        (None, None, None) => Some(Preset::TwoLevel),
        (None, Some(_), Some(_)) => None,
        (None, Some(s), None) | (None, None, Some(s)) => return ctx.err(s.span(), "explicit models need both h and a"),
    };
    let needs_driven = matches!(scenario, Scenario::Zeno | Scenario::RabiMonitor | Scenario::Transition);
    if needs_driven && preset != Some(Preset::TwoLevel) {
        let line = m.preset.as_ref().map(|p| ctx.line(p.span())).or_else(|| m.h.as_ref().map(|h| ctx.line(h.span())));
        return Err(ConfigError { line, message: format!("scenario {} requires preset two-level", scenario.name()) });
    }

    let (h, a) = match preset {
        Some(p) => preset_operators(p, level_splitting, rabi),
        None => (ctx.operator(m.h.expect("checked"), "h")?, ctx.operator(m.a.expect("checked"), "a")?),
    };
    if h.dim() != a.dim() {
        return Err(ConfigError { line: None, message: format!("h is {0}x{0} but a is {1}x{1}", h.dim(), a.dim()) });
    }
    let psi0 = match m.psi0 {
        Some(s) => {
            let span = s.span();
            let v = s.into_inner();
            if v.len() != h.dim() {
                return ctx.err(span, format!("psi0 has {} amplitudes, expected {}", v.len(), h.dim()));
            }
            let amps: Vec<_> = v.iter().map(|&[re, im]| c64(re, im)).collect();
            QuantumState::from_slice(&amps).or_else(|e| ctx.err(span, format!("psi0: {e}")))?.normalized()
        }
        None => QuantumState::basis(h.dim(), 0).expect("dimension at least 2"),
    };
    Ok(ModelSpec { preset, level_splitting, rabi, kappa, h, a, psi0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_zeno_config_gets_defaults() {
        let c = parse_config("scenario = \"zeno\"\n").unwrap();
        assert_eq!(c.scenario, Scenario::Zeno);
        assert_eq!(c.seed, DEFAULT_SEED);
        assert_eq!(c.model.preset, Some(Preset::TwoLevel));
        assert_eq!((c.model.level_splitting, c.model.rabi, c.model.kappa), (2.0, 1.0, 1.0));
        assert!(c.run.kappas.is_none());
    }

    #[test]
    fn zero_dt_rejected_with_line() {
        let e = parse_config("scenario = \"lindblad\"\n\n[grid]\ndt = 0.0\n").unwrap_err();
        assert_eq!(e.line, Some(4));
        assert_eq!(e.message, "dt must be positive");
    }

    #[test]
    fn non_hermitian_matrix_names_entry() {
        let text = "scenario = \"lindblad\"\n[model]\nh = [[[0,0],[1,0]],[[0,0],[0,0]]]\na = [[[1,0],[0,0]],[[0,0],[-1,0]]]\n";
        let e = parse_config(text).unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.contains("(0,1)") || e.message.contains("(1,0)"), "{}", e.message);
    }

    #[test]
    fn unknown_scenario_and_keys() {
        let e = parse_config("scenario = \"teleport\"\n").unwrap_err();
        assert!(e.message.contains("unknown scenario 'teleport'"));
        let e = parse_config("scenario = \"zeno\"\n[model]\nkapa = 1\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.contains("kapa"));
    }

    #[test]
    fn negative_kappa_rejected() {
        let e = parse_config("scenario = \"zeno\"\n[model]\nkappa = -1\n").unwrap_err();
        assert_eq!(e.message, "kappa must be positive");
    }

    #[test]
    fn explicit_model_and_state() {
        let text = "scenario = \"chm\"\n[model]\nh = [[[0,0],[1,0]],[[1,0],[0,0]]]\na = [[[1,0],[0,0]],[[0,0],[-1,0]]]\npsi0 = [[3,0],[0,4]]\n";
        let c = parse_config(text).unwrap();
        assert!(c.model.preset.is_none());
        assert!((c.model.psi0.amplitudes()[1].im - 0.8).abs() < 1e-15);
    }

    #[test]
    fn driven_scenarios_need_two_level() {
        let e = parse_config("scenario = \"rabi-monitor\"\n[model]\npreset = \"three-level\"\n").unwrap_err();
        assert!(e.message.contains("requires preset two-level"));
    }

    #[test]
    fn two_level_preset_matches_driven_system() {
        let c = parse_config("scenario = \"lindblad\"\n").unwrap();
        let sys = qmeas_core::experiments::DrivenTwoLevel::new(2.0, 1.0, 1.0).unwrap();
        assert_eq!(c.model.h.matrix(), sys.hamiltonian().matrix());
        assert_eq!(c.model.a.matrix(), sys.h0().matrix());
    }
}
