use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{AbortPolicy, BetaSource, Engine, ExperimentConfig, Format, Kind};
use super::HarnessError;
use crate::decoy::{self, CheckOutcome, DecoyRound};
use crate::primitives::ChannelSpec;
use crate::teleport::{
    enumerate_branches, fidelity_without_control, run_protocol, run_structured,
    theoretical_success_probability, BranchOutcome, RunMode, Transcript,
};

/// The resolved configuration written alongside results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub kind: Kind,
    pub d: usize,
    pub m: usize,
    pub n: usize,
    pub coeffs: Vec<Complex64>,
    pub coeffs_source: String,
    pub beta: BetaSource,
    pub seed: u64,
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub engine: Option<Engine>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eve: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abort: Option<AbortPolicy>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub withheld: Vec<usize>,
}

impl ConfigEcho {
    fn new(cfg: &ExperimentConfig) -> Self {
        let sampled = matches!(cfg.kind, Kind::Montecarlo | Kind::Decoy);
        ConfigEcho {
            kind: cfg.kind,
            d: cfg.d,
            m: cfg.m,
            n: cfg.n,
            coeffs: cfg.coeffs.clone(),
            coeffs_source: cfg.coeffs_source.clone(),
            beta: cfg.beta.clone(),
            seed: cfg.seed,
            format: cfg.format,
            trials: sampled.then_some(cfg.trials),
            engine: (cfg.kind == Kind::Montecarlo).then_some(cfg.engine),
            eve: (cfg.kind == Kind::Decoy).then(|| cfg.eve.as_str()),
            abort: (cfg.kind == Kind::Decoy).then_some(cfg.abort),
            withheld: cfg.withheld.clone(),
        }
    }
}

/// One outcome branch of an exhaustive enumeration. Per-copy tuples are
/// `;`-separated, controller outcomes within a copy `,`-separated, and GBS
/// outcomes written `r:s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchRow {
    pub branch: usize,
    pub gbs: String,
    pub controllers: String,
    pub aux: u8,
    pub success: bool,
    pub probability: f64,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub trial: u64,
    pub gbs: String,
    pub controllers: String,
    pub r_double_prime: String,
    pub aux: u8,
    pub success: bool,
    pub probability: f64,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecoyRow {
    pub round: u64,
    pub prep_basis: &'static str,
    pub prep_value: usize,
    /// `-` when Eve left the round alone.
    pub eve_basis: &'static str,
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub d: usize,
    pub m: usize,
    pub n: usize,
    pub branches: usize,
    pub success_probability: f64,
    pub theoretical_success_probability: f64,
    pub abs_deviation: f64,
    pub min_success_fidelity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Rows {
    Branches(Vec<BranchRow>),
    Trials(Vec<TrialRow>),
    Decoys(Vec<DecoyRow>),
    Sweep(Vec<SweepRow>),
}

impl Rows {
    pub fn len(&self) -> usize {
        match self {
            Rows::Branches(r) => r.len(),
            Rows::Trials(r) => r.len(),
            Rows::Decoys(r) => r.len(),
            Rows::Sweep(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Summary {
    Enumerate {
        rows: usize,
        total_probability: f64,
        success_probability: f64,
        theoretical_success_probability: f64,
        abs_deviation: f64,
        mean_success_fidelity: Option<f64>,
        min_success_fidelity: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        fidelity_without_control: Option<f64>,
    },
    Montecarlo {
        rows: usize,
        trials: u64,
        successes: u64,
        success_rate: f64,
        theoretical_success_probability: f64,
        z_score: Option<f64>,
        mean_success_fidelity: Option<f64>,
        min_success_fidelity: Option<f64>,
    },
    Decoy {
        rows: usize,
        rounds: u64,
        detections: u64,
        rate: f64,
        expected_rate: f64,
        z_score: Option<f64>,
        abort: bool,
    },
    Sweep {
        rows: usize,
        max_abs_deviation: f64,
        min_success_fidelity: Option<f64>,
    },
}

impl Summary {
    pub fn rows(&self) -> usize {
        match self {
            Summary::Enumerate { rows, .. }
            | Summary::Montecarlo { rows, .. }
            | Summary::Decoy { rows, .. }
            | Summary::Sweep { rows, .. } => *rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub config: ConfigEcho,
    pub summary: Summary,
    pub rows: Rows,
}

fn gbs_field(outcome: &BranchOutcome) -> String {
    outcome
        .gbs
        .iter()
        .map(|g| format!("{}:{}", g.r, g.s))
        .collect::<Vec<_>>()
        .join(";")
}

fn join_digits(values: &[usize], sep: &str) -> String {
    values
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(sep)
}

fn controllers_field(outcome: &BranchOutcome) -> String {
    outcome
        .controllers
        .iter()
        .map(|c| join_digits(c, ","))
        .collect::<Vec<_>>()
        .join(";")
}

fn fidelity_stats(values: impl Iterator<Item = (f64, f64)>) -> (Option<f64>, Option<f64>) {
    let (mut weight, mut acc, mut min) = (0.0, 0.0, f64::INFINITY);
    for (w, f) in values {
        weight += w;
        acc += w * f;
        min = min.min(f);
    }
    if min.is_finite() {
        (Some(acc / weight), Some(min))
    } else {
        (None, None)
    }
}

fn enumerate(cfg: &ExperimentConfig) -> Result<(Summary, Rows), HarnessError> {
    let spec = cfg.channel()?;
    let input = cfg.input()?;
    let report = enumerate_branches(&input, &spec)?;
    let rows: Vec<BranchRow> = report
        .branches
        .iter()
        .enumerate()
        .map(|(i, b)| BranchRow {
            branch: i,
            gbs: gbs_field(&b.outcome),
            controllers: controllers_field(&b.outcome),
            aux: b.outcome.aux,
            success: b.success,
            probability: b.probability,
            fidelity: b.fidelity,
        })
        .collect();
    let blind = if cfg.withheld.is_empty() {
        None
    } else {
        Some(fidelity_without_control(&input, &spec, &cfg.withheld)?)
    };
    let summary = Summary::Enumerate {
        rows: rows.len(),
        total_probability: report.total_probability,
        success_probability: report.success_probability,
        theoretical_success_probability: report.theoretical_success_probability,
        abs_deviation: (report.success_probability - report.theoretical_success_probability).abs(),
        mean_success_fidelity: report.mean_success_fidelity,
        min_success_fidelity: report.min_success_fidelity,
        fidelity_without_control: blind,
    };
    Ok((summary, Rows::Branches(rows)))
}

fn montecarlo(cfg: &ExperimentConfig) -> Result<(Summary, Rows), HarnessError> {
    let spec = cfg.channel()?;
    let input = cfg.input()?;
    let engine = match cfg.engine {
        Engine::Structured => run_structured,
        Engine::Dense => run_protocol,
    };
    let transcripts: Vec<Transcript> = (0..cfg.trials)
        .into_par_iter()
        .map(|stream| {
            engine(
                &input,
                &spec,
                &RunMode::Sampled {
                    seed: cfg.seed,
                    stream,
                },
            )
        })
        .collect::<crate::Result<_>>()?;
    let successes = transcripts.iter().filter(|t| t.success).count() as u64;
    let theory = theoretical_success_probability(&spec);
    let (mean, min) = fidelity_stats(
        transcripts
            .iter()
            .filter(|t| t.success)
            .map(|t| (1.0, t.fidelity)),
    );
    let rows: Vec<TrialRow> = transcripts
        .iter()
        .enumerate()
        .map(|(i, t)| TrialRow {
            trial: i as u64,
            gbs: gbs_field(&t.outcome),
            controllers: controllers_field(&t.outcome),
            r_double_prime: join_digits(&t.r_double_prime, ";"),
            aux: t.outcome.aux,
            success: t.success,
            probability: t.probability,
            fidelity: t.fidelity,
        })
        .collect();
    let summary = Summary::Montecarlo {
        rows: rows.len(),
        trials: cfg.trials,
        successes,
        success_rate: successes as f64 / cfg.trials as f64,
        theoretical_success_probability: theory,
        z_score: decoy::binomial_z(successes, cfg.trials, theory),
        mean_success_fidelity: mean,
        min_success_fidelity: min,
    };
    Ok((summary, Rows::Trials(rows)))
}

fn decoy_row(i: usize, r: &DecoyRound) -> DecoyRow {
    DecoyRow {
        round: i as u64,
        prep_basis: r.prep_basis.as_str(),
        prep_value: r.prep_value,
        eve_basis: r.eve_basis.map_or("-", |b| b.as_str()),
        detected: r.check == CheckOutcome::Detect,
    }
}

fn decoy_campaign(cfg: &ExperimentConfig) -> Result<(Summary, Rows), HarnessError> {
    let log = decoy::detection_campaign_rounds(cfg.d, cfg.eve, cfg.trials, cfg.seed)?;
    let report = decoy::summarize(cfg.d, cfg.eve, &log);
    let abort = report.rounds >= cfg.abort.min_checks && report.rate > cfg.abort.max_rate;
    let rows: Vec<DecoyRow> = log
        .iter()
        .enumerate()
        .map(|(i, r)| decoy_row(i, r))
        .collect();
    let summary = Summary::Decoy {
        rows: rows.len(),
        rounds: report.rounds,
        detections: report.detections,
        rate: report.rate,
        expected_rate: report.expected_rate,
        z_score: report.z_score,
        abort,
    };
    Ok((summary, Rows::Decoys(rows)))
}

fn sweep(cfg: &ExperimentConfig) -> Result<(Summary, Rows), HarnessError> {
    let mut rows = Vec::new();
    for m in 1..=cfg.m {
        for n in 0..=cfg.n {
            let spec = ChannelSpec::new(cfg.d, n, m, cfg.coeffs.clone())?;
            let input = cfg.sweep_input(m)?;
            let report = enumerate_branches(&input, &spec)?;
            rows.push(SweepRow {
                d: cfg.d,
                m,
                n,
                branches: report.branches.len(),
                success_probability: report.success_probability,
                theoretical_success_probability: report.theoretical_success_probability,
                abs_deviation: (report.success_probability
                    - report.theoretical_success_probability)
                    .abs(),
                min_success_fidelity: report.min_success_fidelity,
            });
        }
    }
    let max_abs_deviation = rows.iter().map(|r| r.abs_deviation).fold(0.0, f64::max);
    let min_success_fidelity = rows
        .iter()
        .filter_map(|r| r.min_success_fidelity)
        .reduce(f64::min);
    let summary = Summary::Sweep {
        rows: rows.len(),
        max_abs_deviation,
        min_success_fidelity,
    };
    Ok((summary, Rows::Sweep(rows)))
}

/// Runs the experiment a config describes. Deterministic in the config: the
/// same config always yields the same record.
pub fn run_campaign(cfg: &ExperimentConfig) -> Result<ResultRecord, HarnessError> {
    let (summary, rows) = match cfg.kind {
        Kind::Enumerate => enumerate(cfg)?,
        Kind::Montecarlo => montecarlo(cfg)?,
        Kind::Decoy => decoy_campaign(cfg)?,
        Kind::Sweep => sweep(cfg)?,
    };
    Ok(ResultRecord {
        config: ConfigEcho::new(cfg),
        summary,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::load_config_str;

    #[test]
    fn enumerate_uniform_always_succeeds() {
        let cfg =
            load_config_str(r#"{"kind":"enumerate","d":2,"m":1,"n":1,"beta":[0.6,0.8]}"#).unwrap();
        let rec = run_campaign(&cfg).unwrap();
        match rec.summary {
            Summary::Enumerate {
                rows,
                success_probability,
                min_success_fidelity,
                ..
            } => {
                assert_eq!(rows, rec.rows.len());
                assert!((success_probability - 1.0).abs() < 1e-12);
                assert!(min_success_fidelity.unwrap() > 1.0 - 1e-12);
            }
            other => panic!("{other:?}"),
        }
        if let Rows::Branches(rows) = &rec.rows {
            assert_eq!(rows[0].gbs, "0:0");
            assert_eq!(rows[0].controllers, "0");
        }
    }

    #[test]
    fn montecarlo_counts_match_rows() {
        let cfg = load_config_str(r#"{"kind":"montecarlo","d":2,"m":2,"n":1,"coeffs":[1.2247448713915890,0.7071067811865476],"trials":400,"seed":5}"#).unwrap();
        let rec = run_campaign(&cfg).unwrap();
        let Rows::Trials(rows) = &rec.rows else {
            panic!()
        };
        assert_eq!(rows.len(), 400);
        let Summary::Montecarlo {
            successes, z_score, ..
        } = rec.summary
        else {
            panic!()
        };
        assert_eq!(successes, rows.iter().filter(|r| r.success).count() as u64);
        assert!(z_score.unwrap().abs() < 4.0);
        assert_eq!(rows[0].r_double_prime.split(';').count(), 2);
    }

    #[test]
    fn dense_and_structured_campaigns_agree() {
        let base =
            r#""kind":"montecarlo","d":2,"m":1,"n":2,"coeffs":"random:3","trials":50,"seed":8"#;
        let a = load_config_str(&format!("{{{base},\"engine\":\"dense\"}}")).unwrap();
        let b = load_config_str(&format!("{{{base},\"engine\":\"structured\"}}")).unwrap();
        let (ra, rb) = (run_campaign(&a).unwrap(), run_campaign(&b).unwrap());
        let (Rows::Trials(ta), Rows::Trials(tb)) = (&ra.rows, &rb.rows) else {
            panic!()
        };
        for (x, y) in ta.iter().zip(tb) {
            assert_eq!(
                (&x.gbs, &x.controllers, x.aux),
                (&y.gbs, &y.controllers, y.aux)
            );
        }
    }

    #[test]
    fn decoy_abort_rule() {
        let cfg = load_config_str(r#"{"kind":"decoy","d":3,"eve":"none","trials":500}"#).unwrap();
        let Summary::Decoy {
            detections, abort, ..
        } = run_campaign(&cfg).unwrap().summary
        else {
            panic!()
        };
        assert_eq!(detections, 0);
        assert!(!abort);
        let cfg =
            load_config_str(r#"{"kind":"decoy","d":3,"eve":"measure_z_resend","trials":500}"#)
                .unwrap();
        let Summary::Decoy { abort, .. } = run_campaign(&cfg).unwrap().summary else {
            panic!()
        };
        assert!(abort);
        let cfg =
            load_config_str(r#"{"kind":"decoy","d":3,"eve":"measure_z_resend","trials":100}"#)
                .unwrap();
        let Summary::Decoy { abort, .. } = run_campaign(&cfg).unwrap().summary else {
            panic!()
        };
        assert!(!abort, "fewer checks than the abort threshold");
    }

    #[test]
    fn sweep_grid() {
        let cfg = load_config_str(r#"{"kind":"sweep","d":2,"m":2,"n":1,"coeffs":[1.1832159566199232,0.7745966692414834],"beta":[0.6,0.8]}"#).unwrap();
        let rec = run_campaign(&cfg).unwrap();
        let Rows::Sweep(rows) = &rec.rows else {
            panic!()
        };
        assert_eq!(rows.len(), 4);
        assert_eq!((rows[3].m, rows[3].n), (2, 1));
        let Summary::Sweep {
            max_abs_deviation, ..
        } = rec.summary
        else {
            panic!()
        };
        assert!(max_abs_deviation < 1e-9);
    }

    #[test]
    fn enumeration_guard_maps_to_exit_two() {
        let cfg = load_config_str(r#"{"kind":"enumerate","d":5,"m":2,"n":4}"#).unwrap();
        let err = run_campaign(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
