//! Experiment configuration: JSON documents plus command-line overrides.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::decoy::EveAction;
use crate::primitives::{channel_weight_mean, ChannelSpec, CHANNEL_NORM_TOL, ZERO_COEFF_FLOOR};
use crate::rng;
use crate::teleport::{InputState, INPUT_NORM_TOL};

pub const DEFAULT_TRIALS: u64 = 10_000;
pub const DEFAULT_ABORT_MIN_CHECKS: u64 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Enumerate,
    Montecarlo,
    Decoy,
    Sweep,
}

impl Kind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "enumerate" => Some(Kind::Enumerate),
            "montecarlo" => Some(Kind::Montecarlo),
            "decoy" => Some(Kind::Decoy),
            "sweep" => Some(Kind::Sweep),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Enumerate => "enumerate",
            Kind::Montecarlo => "montecarlo",
            Kind::Decoy => "decoy",
            Kind::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "json" => Some(Format::Json),
            "csv" => Some(Format::Csv),
            _ => None,
        }
    }
}

/// Which protocol engine a Monte Carlo campaign uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Structured,
    Dense,
}

/// `coeffs` as written: `"uniform"`, `"random:SEED"`, reals, or `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum CoeffsSpec {
    Named(String),
    Real(Vec<f64>),
    Complex(Vec<[f64; 2]>),
}

/// `beta` as written: basis index, `"random:SEED"`, `"basis:K"`, reals, or
/// `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    Index(usize),
    Named(String),
    Real(Vec<f64>),
    Complex(Vec<[f64; 2]>),
}

fn parse_real_list(s: &str) -> Option<Vec<f64>> {
    s.split(',').map(|p| p.trim().parse::<f64>().ok()).collect()
}

impl CoeffsSpec {
    /// Command-line form: `uniform`, `random:SEED` or `c0,c1,…`.
    pub fn parse_cli(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "uniform" || s.starts_with("random:") {
            return Ok(CoeffsSpec::Named(s.to_string()));
        }
        parse_real_list(s)
            .map(CoeffsSpec::Real)
            .ok_or_else(|| format!("cannot parse coefficient list {s:?}"))
    }
}

impl BetaSpec {
    /// Command-line form: `random:SEED`, `basis:K`, `K`, or `b0,b1,…`.
    pub fn parse_cli(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.starts_with("random:") || s.starts_with("basis:") {
            return Ok(BetaSpec::Named(s.to_string()));
        }
        if !s.contains(',') {
            if let Ok(k) = s.parse::<usize>() {
                return Ok(BetaSpec::Index(k));
            }
        }
        parse_real_list(s)
            .map(BetaSpec::Real)
            .ok_or_else(|| format!("cannot parse amplitude list {s:?}"))
    }
}

/// Configuration as parsed, before validation. Every field is optional so
/// command-line overrides can be merged on top of a file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub kind: Option<String>,
    pub d: Option<usize>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub coeffs: Option<CoeffsSpec>,
    pub beta: Option<BetaSpec>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub format: Option<String>,
    pub engine: Option<String>,
    pub eve: Option<String>,
    pub withheld: Option<Vec<usize>>,
    pub abort_min_checks: Option<u64>,
    pub abort_max_rate: Option<f64>,
}

impl RawConfig {
    /// Fields set in `over` replace ours.
    pub fn merge(self, over: RawConfig) -> RawConfig {
        RawConfig {
            kind: over.kind.or(self.kind),
            d: over.d.or(self.d),
            m: over.m.or(self.m),
            n: over.n.or(self.n),
            coeffs: over.coeffs.or(self.coeffs),
            beta: over.beta.or(self.beta),
            trials: over.trials.or(self.trials),
            seed: over.seed.or(self.seed),
            output: over.output.or(self.output),
            format: over.format.or(self.format),
            engine: over.engine.or(self.engine),
            eve: over.eve.or(self.eve),
            withheld: over.withheld.or(self.withheld),
            abort_min_checks: over.abort_min_checks.or(self.abort_min_checks),
            abort_max_rate: over.abort_max_rate.or(self.abort_max_rate),
        }
    }
}

/// Where the input amplitudes come from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSource {
    Explicit(Vec<Complex64>),
    Basis(usize),
    Random(u64),
}

/// Abort rule for decoy campaigns: abort when at least `min_checks` decoys
/// were checked and the detection rate exceeds `max_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbortPolicy {
    pub min_checks: u64,
    pub max_rate: f64,
}

impl Default for AbortPolicy {
    fn default() -> Self {
        AbortPolicy {
            min_checks: DEFAULT_ABORT_MIN_CHECKS,
            max_rate: 0.0,
        }
    }
}

/// Validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub d: usize,
    pub m: usize,
    pub n: usize,
    pub coeffs: Vec<Complex64>,
    pub coeffs_source: String,
    pub beta: BetaSource,
    pub trials: u64,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub engine: Engine,
    pub eve: EveAction,
    pub withheld: Vec<usize>,
    pub abort: AbortPolicy,
}

impl ExperimentConfig {
    pub fn channel(&self) -> crate::Result<ChannelSpec> {
        ChannelSpec::new(self.d, self.n, self.m, self.coeffs.clone())
    }

    /// The input state for a campaign with `m` copies.
    pub fn input(&self) -> crate::Result<InputState> {
        resolve_input(&self.beta, self.d, self.m)
    }

    /// Sweep input for `m` copies: explicit and basis inputs are single-qudit
    /// states repeated on every copy.
    pub fn sweep_input(&self, m: usize) -> crate::Result<InputState> {
        match &self.beta {
            BetaSource::Random(seed) => InputState::random(self.d, m, *seed),
            BetaSource::Basis(k) => {
                let repunit: usize = (0..m).map(|i| self.d.pow(i as u32)).sum();
                InputState::basis(self.d, m, k * repunit)
            }
            BetaSource::Explicit(single) => {
                let mut beta = vec![Complex64::new(1.0, 0.0)];
                for _ in 0..m {
                    beta = beta
                        .iter()
                        .flat_map(|a| single.iter().map(move |b| a * b))
                        .collect();
                }
                InputState::new(self.d, m, beta)
            }
        }
    }
}

fn resolve_input(beta: &BetaSource, d: usize, m: usize) -> crate::Result<InputState> {
    match beta {
        BetaSource::Random(seed) => InputState::random(d, m, *seed),
        BetaSource::Basis(k) => InputState::basis(d, m, *k),
        BetaSource::Explicit(v) => InputState::new(d, m, v.clone()),
    }
}

/// 1-based line of the first `"field"` key in `source`.
fn line_of(source: Option<&str>, field: &str) -> Option<usize> {
    let needle = format!("\"{field}\"");
    source?
        .lines()
        .position(|l| l.contains(&needle))
        .map(|i| i + 1)
}

struct Validator<'a> {
    source: Option<&'a str>,
}

impl Validator<'_> {
    fn fail(&self, field: &str, message: impl Into<String>) -> HarnessError {
        HarnessError::Invalid {
            field: field.to_string(),
            line: line_of(self.source, field),
            message: message.into(),
        }
    }
}

fn named_seed(s: &str, prefix: &str) -> Option<u64> {
    s.strip_prefix(prefix)?.trim().parse().ok()
}

/// Random valid channel: positive weights in `[0.2, 1)` rescaled so that
/// `(1/d)·Σ c_j² = 1`.
pub fn random_coeffs(d: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = rng::stream_rng(seed, 0);
    let weights: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights
        .iter()
        .map(|w| Complex64::new((d as f64 * w / total).sqrt(), 0.0))
        .collect()
}

fn to_complex(pairs: &[[f64; 2]]) -> Vec<Complex64> {
    pairs
        .iter()
        .map(|[re, im]| Complex64::new(*re, *im))
        .collect()
}

fn to_real(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

impl RawConfig {
    /// Checks every field and resolves named coefficient/amplitude sources.
    /// `source` is the JSON text the config came from, used to point errors at
    /// a line.
    pub fn validate(self, source: Option<&str>) -> Result<ExperimentConfig, HarnessError> {
        let v = Validator { source };
        let kind_str = self.kind.ok_or_else(|| v.fail("kind", "missing"))?;
        let kind = Kind::parse(&kind_str).ok_or_else(|| {
            v.fail(
                "kind",
                format!(
                    "unknown kind {kind_str:?}, expected enumerate, montecarlo, decoy or sweep"
                ),
            )
        })?;
        let d = self.d.ok_or_else(|| v.fail("d", "missing"))?;
        if d < 2 {
            return Err(v.fail("d", format!("dimension must be at least 2, got {d}")));
        }
        let m = self.m.unwrap_or(1);
        if m == 0 {
            return Err(v.fail("m", "copy count must be at least 1"));
        }
        let n = self.n.unwrap_or(0);
        let seed = self.seed.unwrap_or(0);
        let trials = self.trials.unwrap_or(DEFAULT_TRIALS);
        if trials == 0 {
            return Err(v.fail("trials", "must be at least 1"));
        }

        let (coeffs, coeffs_source) =
            match self.coeffs.unwrap_or(CoeffsSpec::Named("uniform".into())) {
                CoeffsSpec::Named(s) if s == "uniform" => (vec![Complex64::new(1.0, 0.0); d], s),
                CoeffsSpec::Named(s) => match named_seed(&s, "random:") {
                    Some(cs) => (random_coeffs(d, cs), s),
                    None => {
                        return Err(v.fail(
                            "coeffs",
                            format!("expected \"uniform\", \"random:SEED\" or a list, got {s:?}"),
                        ))
                    }
                },
                CoeffsSpec::Real(values) => (to_real(&values), "explicit".to_string()),
                CoeffsSpec::Complex(pairs) => (to_complex(&pairs), "explicit".to_string()),
            };
        if coeffs.len() != d {
            return Err(v.fail(
                "coeffs",
                format!("expected d = {d} coefficients, got {}", coeffs.len()),
            ));
        }
        if let Some(j) = coeffs.iter().position(|c| c.norm() < ZERO_COEFF_FLOOR) {
            return Err(v.fail("coeffs", format!("coefficient c_{j} is zero")));
        }
        let mean = channel_weight_mean(&coeffs);
        if (mean - 1.0).abs() > CHANNEL_NORM_TOL {
            return Err(v.fail(
                "coeffs",
                format!("channel normalization (1/d)·Σ|c_j|² = 1 violated: got {mean}"),
            ));
        }

        let beta = match self.beta {
            None => BetaSource::Random(seed),
            Some(BetaSpec::Index(k)) => BetaSource::Basis(k),
            Some(BetaSpec::Named(s)) => {
                if let Some(bs) = named_seed(&s, "random:") {
                    BetaSource::Random(bs)
                } else if let Some(k) = named_seed(&s, "basis:") {
                    BetaSource::Basis(k as usize)
                } else {
                    return Err(v.fail(
                        "beta",
                        format!(
                            "expected \"random:SEED\", \"basis:K\", an index or a list, got {s:?}"
                        ),
                    ));
                }
            }
            Some(BetaSpec::Real(values)) => BetaSource::Explicit(to_real(&values)),
            Some(BetaSpec::Complex(pairs)) => BetaSource::Explicit(to_complex(&pairs)),
        };
        let beta_len = if kind == Kind::Sweep {
            d
        } else {
            d.saturating_pow(m as u32)
        };
        let what = if kind == Kind::Sweep {
            "d (sweeps repeat a single-qudit input on every copy)"
        } else {
            "d^m"
        };
        match &beta {
            BetaSource::Explicit(values) => {
                if values.len() != beta_len {
                    return Err(v.fail(
                        "beta",
                        format!("length must be {what} = {beta_len}, got {}", values.len()),
                    ));
                }
                let norm: f64 = values.iter().map(|b| b.norm_sqr()).sum();
                if (norm - 1.0).abs() > INPUT_NORM_TOL {
                    return Err(v.fail(
                        "beta",
                        format!("input normalization Σ|β|² = 1 violated: got {norm}"),
                    ));
                }
            }
            BetaSource::Basis(k) if *k >= beta_len => {
                return Err(v.fail(
                    "beta",
                    format!("basis index {k} out of range for {what} = {beta_len}"),
                ));
            }
            _ => {}
        }

        let format = match self.format.as_deref() {
            None => Format::Json,
            Some(s) => Format::parse(s)
                .ok_or_else(|| v.fail("format", format!("expected json or csv, got {s:?}")))?,
        };
        let engine = match self.engine.as_deref() {
            None | Some("structured") => Engine::Structured,
            Some("dense") => Engine::Dense,
            Some(s) => {
                return Err(v.fail("engine", format!("expected structured or dense, got {s:?}")))
            }
        };
        let eve = match self.eve.as_deref() {
            None => EveAction::RandomBasisResend,
            Some(s) => EveAction::parse(s).ok_or_else(|| {
                v.fail(
                    "eve",
                    format!("expected none, measure_z_resend, measure_x_resend or random_basis_resend, got {s:?}"),
                )
            })?,
        };
        let withheld = self.withheld.unwrap_or_default();
        for (i, &k) in withheld.iter().enumerate() {
            if k == 0 || k > n {
                return Err(v.fail(
                    "withheld",
                    format!("controller {k} does not exist (controllers are 1..={n})"),
                ));
            }
            if withheld[..i].contains(&k) {
                return Err(v.fail("withheld", format!("controller {k} listed twice")));
            }
        }
        let abort = AbortPolicy {
            min_checks: self.abort_min_checks.unwrap_or(DEFAULT_ABORT_MIN_CHECKS),
            max_rate: self.abort_max_rate.unwrap_or(0.0),
        };
        if !(0.0..=1.0).contains(&abort.max_rate) {
            return Err(v.fail("abort_max_rate", "must lie in [0, 1]"));
        }

        Ok(ExperimentConfig {
            kind,
            d,
            m,
            n,
            coeffs,
            coeffs_source,
            beta,
            trials,
            seed,
            output: self.output,
            format,
            engine,
            eve,
            withheld,
            abort,
        })
    }
}

/// Parses JSON text into an unvalidated config.
pub fn parse_raw(text: &str) -> Result<RawConfig, HarnessError> {
    serde_json::from_str(text).map_err(|e| HarnessError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Parses and validates a JSON config document.
pub fn load_config_str(text: &str) -> Result<ExperimentConfig, HarnessError> {
    parse_raw(text)?.validate(Some(text))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_enumerate_config() {
        let cfg = load_config_str(
            r#"{"kind":"enumerate","d":2,"m":1,"n":1,"coeffs":"uniform","beta":[0.6,0.8]}"#,
        )
        .unwrap();
        assert_eq!(cfg.kind, Kind::Enumerate);
        assert_eq!(cfg.coeffs, vec![Complex64::new(1.0, 0.0); 2]);
        assert_eq!(cfg.format, Format::Json);
        assert!(cfg.channel().is_ok());
        assert!(cfg.input().is_ok());
    }

    #[test]
    fn channel_normalization_violation_names_field_and_line() {
        let text = "{\n  \"kind\": \"enumerate\",\n  \"d\": 2,\n  \"coeffs\": [1.0, 1.5]\n}";
        let err = load_config_str(text).unwrap_err();
        match &err {
            HarnessError::Invalid {
                field,
                line,
                message,
            } => {
                assert_eq!(field, "coeffs");
                assert_eq!(*line, Some(4));
                assert!(message.contains("1.625"), "{message}");
                assert!(message.contains("channel normalization"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn beta_length_must_be_d_pow_m() {
        let err = load_config_str(r#"{"kind":"enumerate","d":2,"m":1,"beta":[0.6,0.8,0.0]}"#)
            .unwrap_err();
        assert!(
            matches!(&err, HarnessError::Invalid { field, message, .. } if field == "beta" && message.contains("d^m"))
        );
        let err = load_config_str(r#"{"kind":"enumerate","d":2,"beta":[0.6,0.6]}"#).unwrap_err();
        assert!(
            matches!(&err, HarnessError::Invalid { field, message, .. } if field == "beta" && message.contains("input normalization"))
        );
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = load_config_str("{\n \"kind\": \"enumerate\",\n \"d\": 2,,\n}").unwrap_err();
        assert!(matches!(err, HarnessError::Parse { line: 3, .. }));
        let err = load_config_str(r#"{"kind":"enumerate","d":2,"colour":"red"}"#).unwrap_err();
        assert!(matches!(err, HarnessError::Parse { .. }));
    }

    #[test]
    fn named_sources() {
        let cfg = load_config_str(
            r#"{"kind":"montecarlo","d":3,"m":2,"coeffs":"random:7","beta":"random:3"}"#,
        )
        .unwrap();
        assert!((channel_weight_mean(&cfg.coeffs) - 1.0).abs() < 1e-12);
        assert_eq!(cfg.beta, BetaSource::Random(3));
        let cfg = load_config_str(r#"{"kind":"enumerate","d":3,"beta":"basis:2"}"#).unwrap();
        assert_eq!(cfg.beta, BetaSource::Basis(2));
        assert!(load_config_str(r#"{"kind":"enumerate","d":3,"beta":"basis:3"}"#).is_err());
        assert!(load_config_str(r#"{"kind":"enumerate","d":3,"coeffs":"lumpy"}"#).is_err());
    }

    #[test]
    fn complex_pairs_accepted() {
        let cfg = load_config_str(
            r#"{"kind":"enumerate","d":2,"coeffs":[[0.0,1.2247448713915890],[0.7071067811865476,0.0]],"beta":[[0.6,0.0],[0.0,0.8]]}"#,
        )
        .unwrap();
        assert_eq!(cfg.coeffs[0], Complex64::new(0.0, 1.224744871391589));
    }

    #[test]
    fn cli_value_parsing() {
        assert_eq!(
            CoeffsSpec::parse_cli("uniform").unwrap(),
            CoeffsSpec::Named("uniform".into())
        );
        assert_eq!(
            CoeffsSpec::parse_cli("1, 1").unwrap(),
            CoeffsSpec::Real(vec![1.0, 1.0])
        );
        assert!(CoeffsSpec::parse_cli("1,x").is_err());
        assert_eq!(
            BetaSpec::parse_cli("0.6,0.8").unwrap(),
            BetaSpec::Real(vec![0.6, 0.8])
        );
        assert_eq!(BetaSpec::parse_cli("3").unwrap(), BetaSpec::Index(3));
        assert_eq!(
            BetaSpec::parse_cli("random:4").unwrap(),
            BetaSpec::Named("random:4".into())
        );
    }

    #[test]
    fn overrides_win() {
        let base = parse_raw(r#"{"kind":"enumerate","d":2,"n":1}"#).unwrap();
        let over = RawConfig {
            d: Some(3),
            ..Default::default()
        };
        let merged = base.merge(over);
        assert_eq!(merged.d, Some(3));
        assert_eq!(merged.n, Some(1));
    }

    #[test]
    fn sweep_inputs_repeat_single_qudit() {
        let cfg = load_config_str(r#"{"kind":"sweep","d":2,"m":2,"beta":[0.6,0.8]}"#).unwrap();
        let two = cfg.sweep_input(2).unwrap();
        let expect = [0.36, 0.48, 0.48, 0.64];
        for (b, e) in two.beta().iter().zip(expect) {
            assert!((b.re - e).abs() < 1e-15);
        }
        let basis = load_config_str(r#"{"kind":"sweep","d":3,"m":2,"beta":"basis:2"}"#).unwrap();
        assert_eq!(
            basis.sweep_input(2).unwrap(),
            InputState::basis(3, 2, 8).unwrap()
        );
    }

    #[test]
    fn withheld_must_name_real_controllers() {
        assert!(load_config_str(r#"{"kind":"enumerate","d":2,"n":1,"withheld":[2]}"#).is_err());
        assert!(load_config_str(r#"{"kind":"enumerate","d":2,"n":2,"withheld":[2,2]}"#).is_err());
        assert!(load_config_str(r#"{"kind":"enumerate","d":2,"n":2,"withheld":[2]}"#).is_ok());
    }
}
