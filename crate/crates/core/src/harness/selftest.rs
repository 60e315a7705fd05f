//! Quick built-in checks, run by `qteleport selftest`.

use num_complex::Complex64;

use super::{load_config_str, render, run_campaign, Format, Summary};
use crate::decoy::{self, EveAction};
use crate::primitives::{
    gbs_measurement, hadamard_d, multi_copy_correction, multi_copy_correction_phase, root_of_unity,
    u_max_m, u_uv, x_basis_vector, ChannelSpec,
};
use crate::state::{OperatorMatrix, StateVector};
use crate::teleport::{enumerate_branches, run_protocol, run_structured, InputState, RunMode};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Outcome = crate::Result<(bool, String)>;
type CheckFn = fn() -> Outcome;

fn gbs_complete() -> Outcome {
    for d in 2..=7 {
        gbs_measurement(d)?;
    }
    Ok((true, "d = 2..7 orthonormal and complete".into()))
}

fn shift_phase_action() -> Outcome {
    let mut worst: f64 = 0.0;
    for d in 2..=5 {
        for u in 0..d {
            for v in 0..d {
                let op = u_uv(d, u, v)?;
                for j in 0..d {
                    for row in 0..d {
                        let want = if row == (j + v) % d {
                            root_of_unity(d, u * j)
                        } else {
                            Complex64::new(0.0, 0.0)
                        };
                        worst = worst.max((op.get(row, j) - want).norm());
                    }
                }
            }
        }
    }
    Ok((worst < 1e-12, format!("max deviation {worst:e}")))
}

fn fourier_bases() -> Outcome {
    let mut worst: f64 = 0.0;
    for d in 2..=7 {
        let h = hadamard_d(d)?;
        worst = worst.max(h.unitarity_defect());
        for r in 0..d {
            let x = x_basis_vector(d, r)?;
            for j in 0..d {
                worst = worst.max((x.amps()[j].norm_sqr() - 1.0 / d as f64).abs());
                worst = worst.max((h.get(j, r) - x.amps()[j]).norm());
            }
        }
    }
    Ok((worst < 1e-12, format!("max deviation {worst:e}")))
}

fn extraction_unitary() -> Outcome {
    let mut worst: f64 = 0.0;
    for (d, m) in [(2, 1), (3, 2), (5, 2)] {
        let uniform = u_max_m(&ChannelSpec::uniform(d, 1, m)?)?;
        worst = worst.max(uniform.max_abs_diff(&OperatorMatrix::identity(uniform.dim())));
        let coeffs = super::random_coeffs(d, 11);
        let weighted = u_max_m(&ChannelSpec::new(d, 1, m, coeffs)?)?;
        worst = worst.max(weighted.unitarity_defect());
    }
    Ok((worst < 1e-12, format!("max deviation {worst:e}")))
}

fn correction_factorizes() -> Outcome {
    let d: usize = 3;
    let mut worst: f64 = 0.0;
    for code in 0..d.pow(4) {
        let rho = [code % d, (code / d) % d];
        let shifts = [(code / 9) % d, code / 27];
        let dense = multi_copy_correction(d, &rho, &shifts)?;
        let product =
            u_uv(d, rho[0], (d - shifts[0]) % d)?.kron(&u_uv(d, rho[1], (d - shifts[1]) % d)?);
        let phase = multi_copy_correction_phase(d, &rho, &shifts);
        worst = worst.max(dense.max_abs_diff(&product.scale(phase)));
    }
    Ok((worst < 1e-12, format!("max deviation {worst:e}")))
}

fn enumeration_matches_theory() -> Outcome {
    let cases = [
        ChannelSpec::from_real(2, 1, 1, &[1.5f64.sqrt(), 0.5f64.sqrt()])?,
        ChannelSpec::new(3, 1, 1, super::random_coeffs(3, 4))?,
        ChannelSpec::new(2, 2, 2, super::random_coeffs(2, 9))?,
    ];
    let (mut dev, mut fid): (f64, f64) = (0.0, 1.0);
    for (i, spec) in cases.iter().enumerate() {
        let input = InputState::random(spec.d(), spec.m(), i as u64)?;
        let report = enumerate_branches(&input, spec)?;
        dev = dev.max((report.success_probability - report.theoretical_success_probability).abs());
        fid = fid.min(report.min_success_fidelity.unwrap_or(0.0));
    }
    Ok((
        dev < 1e-9 && fid >= 1.0 - 1e-9,
        format!("max |P - P_theory| {dev:e}, min success fidelity {fid}"),
    ))
}

fn engines_agree() -> Outcome {
    let spec = ChannelSpec::new(3, 2, 1, super::random_coeffs(3, 5))?;
    let input = InputState::random(3, 1, 6)?;
    let mut worst: f64 = 0.0;
    let mut same = true;
    for stream in 0..16 {
        let mode = RunMode::Sampled { seed: 99, stream };
        let a = run_protocol(&input, &spec, &mode)?;
        let b = run_structured(&input, &spec, &mode)?;
        same &= a.outcome == b.outcome;
        worst = worst
            .max((a.probability - b.probability).abs())
            .max((a.fidelity - b.fidelity).abs());
    }
    Ok((
        same && worst < 1e-10,
        format!("identical outcomes: {same}, max deviation {worst:e}"),
    ))
}

fn sampled_success_rate() -> Outcome {
    let cfg = load_config_str(
        r#"{"kind":"montecarlo","d":2,"m":1,"n":1,"coeffs":"random:1","trials":20000,"seed":7}"#,
    )
    .map_err(|e| crate::Error::InvalidInput(e.to_string()))?;
    let rec = run_campaign(&cfg).map_err(|e| crate::Error::InvalidInput(e.to_string()))?;
    let Summary::Montecarlo {
        z_score,
        success_rate,
        theoretical_success_probability,
        ..
    } = rec.summary
    else {
        unreachable!("montecarlo config")
    };
    let z = z_score.unwrap_or(f64::INFINITY);
    Ok((
        z.abs() < 4.0,
        format!("rate {success_rate} vs {theoretical_success_probability}, z = {z:.3}"),
    ))
}

fn decoy_rates() -> Outcome {
    let eve = decoy::detection_campaign(3, EveAction::RandomBasisResend, 20_000, 3)?;
    let quiet = decoy::detection_campaign(3, EveAction::None, 2_000, 3)?;
    let z = eve.z_score.unwrap_or(f64::INFINITY);
    Ok((
        z.abs() < 4.0 && quiet.detections == 0,
        format!(
            "rate {} vs {}, z = {z:.3}; no-Eve detections {}",
            eve.rate, eve.expected_rate, quiet.detections
        ),
    ))
}

fn deterministic_output() -> Outcome {
    let text =
        r#"{"kind":"montecarlo","d":3,"m":2,"n":1,"coeffs":"random:2","trials":200,"seed":12}"#;
    let run = || -> Result<Vec<u8>, super::HarnessError> {
        let cfg = load_config_str(text)?;
        render(&run_campaign(&cfg)?, Format::Json)
    };
    let (a, b) = (run(), run());
    match (a, b) {
        (Ok(a), Ok(b)) => Ok((a == b, format!("{} bytes", a.len()))),
        (Err(e), _) | (_, Err(e)) => Err(crate::Error::InvalidInput(e.to_string())),
    }
}

fn basis_input_round_trip() -> Outcome {
    let spec = ChannelSpec::from_real(2, 1, 1, &[1.5f64.sqrt(), 0.5f64.sqrt()])?;
    let input = InputState::basis(2, 1, 1)?;
    let report = enumerate_branches(&input, &spec)?;
    let expect = StateVector::basis_state(vec![2], 1)?;
    let ok = report
        .min_success_fidelity
        .is_some_and(|f| (f - 1.0).abs() < 1e-12)
        && input.to_state()? == expect;
    Ok((ok, format!("{} branches", report.branches.len())))
}

/// Runs every built-in check. Errors inside a check count as failures.
pub fn run_selftest() -> Vec<Check> {
    let checks: [(&'static str, CheckFn); 11] = [
        ("gbs_complete", gbs_complete),
        ("shift_phase_action", shift_phase_action),
        ("fourier_bases", fourier_bases),
        ("extraction_unitary", extraction_unitary),
        ("correction_factorizes", correction_factorizes),
        ("enumeration_matches_theory", enumeration_matches_theory),
        ("basis_input_round_trip", basis_input_round_trip),
        ("engines_agree", engines_agree),
        ("sampled_success_rate", sampled_success_rate),
        ("decoy_rates", decoy_rates),
        ("deterministic_output", deterministic_output),
    ];
    checks
        .iter()
        .map(|(name, f)| match f() {
            Ok((passed, detail)) => Check {
                name,
                passed,
                detail,
            },
            Err(e) => Check {
                name,
                passed: false,
                detail: format!("error: {e}"),
            },
        })
        .collect()
}
