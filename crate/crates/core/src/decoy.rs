//! Decoy-qudit check against an intercept-resend eavesdropper.
//!
//! A decoy is one of the `2d` states `{|k⟩} ∪ {|r⟩_x}`. The eavesdropper
//! measures the flying qudit in some basis and forwards the eigenstate she
//! saw; the checker measures in the preparation basis and flags a mismatch.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::primitives::hadamard_d;
use crate::rng::{self, StreamRng};
use crate::state::{self, Basis, OutcomeChoice, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoyBasis {
    Z,
    X,
}

impl DecoyBasis {
    pub fn as_str(self) -> &'static str {
        match self {
            DecoyBasis::Z => "z",
            DecoyBasis::X => "x",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EveAction {
    None,
    MeasureZResend,
    MeasureXResend,
    RandomBasisResend,
}

impl EveAction {
    pub const ALL: [EveAction; 4] = [
        EveAction::None,
        EveAction::MeasureZResend,
        EveAction::MeasureXResend,
        EveAction::RandomBasisResend,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EveAction::None => "none",
            EveAction::MeasureZResend => "measure_z_resend",
            EveAction::MeasureXResend => "measure_x_resend",
            EveAction::RandomBasisResend => "random_basis_resend",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckOutcome {
    Pass,
    Detect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DecoyRound {
    pub prep_basis: DecoyBasis,
    pub prep_value: usize,
    pub eve_action: EveAction,
    /// Basis Eve actually measured in, if she touched the qudit.
    pub eve_basis: Option<DecoyBasis>,
    pub check: CheckOutcome,
}

/// Aggregate statistics of a decoy campaign.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    pub d: usize,
    pub eve_action: EveAction,
    pub rounds: u64,
    pub detections: u64,
    pub rate: f64,
    pub expected_rate: f64,
    /// `None` when the expected rate is 0 or 1 and the observed rate differs.
    pub z_score: Option<f64>,
    /// Rounds and detections keyed by (prep basis, Eve basis), Z before X; an
    /// untouched round counts under its own prep basis in the last slot.
    pub by_basis: Vec<BasisTally>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasisTally {
    pub prep_basis: DecoyBasis,
    pub eve_basis: Option<DecoyBasis>,
    pub rounds: u64,
    pub detections: u64,
}

fn basis_for(d: usize, basis: DecoyBasis) -> Result<Basis> {
    match basis {
        DecoyBasis::Z => Ok(Basis::computational(d)),
        DecoyBasis::X => crate::primitives::x_measurement(d),
    }
}

/// Eigenstate `value` of `basis`. X states are `H_d|r⟩`.
pub fn decoy_state(d: usize, basis: DecoyBasis, value: usize) -> Result<StateVector> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    let z = StateVector::basis_state(vec![d], value)?;
    match basis {
        DecoyBasis::Z => Ok(z),
        DecoyBasis::X => state::apply(&z, &hadamard_d(d)?, &[0]),
    }
}

fn random_basis(rng: &mut impl Rng) -> DecoyBasis {
    if rng.random::<bool>() {
        DecoyBasis::X
    } else {
        DecoyBasis::Z
    }
}

/// Uniformly random decoy among the `2d` states.
pub fn prepare_decoy(d: usize, rng: &mut impl Rng) -> Result<(DecoyBasis, usize, StateVector)> {
    let basis = random_basis(rng);
    let value = rng.random_range(0..d);
    Ok((basis, value, decoy_state(d, basis, value)?))
}

/// Intercept-resend. Returns the forwarded state and the basis Eve used.
pub fn eavesdrop(
    decoy: &StateVector,
    action: EveAction,
    rng: &mut impl Rng,
) -> Result<(StateVector, Option<DecoyBasis>)> {
    let d = decoy.dims()[0];
    let basis = match action {
        EveAction::None => return Ok((decoy.clone(), None)),
        EveAction::MeasureZResend => DecoyBasis::Z,
        EveAction::MeasureXResend => DecoyBasis::X,
        EveAction::RandomBasisResend => random_basis(rng),
    };
    let seen = state::measure_in_basis(
        decoy,
        &[0],
        &basis_for(d, basis)?,
        OutcomeChoice::Draw(rng::uniform(rng)),
    )?;
    Ok((decoy_state(d, basis, seen.value)?, Some(basis)))
}

/// Measures in the preparation basis; passes iff the outcome matches.
pub fn check_decoy(
    prep_basis: DecoyBasis,
    prep_value: usize,
    received: &StateVector,
    rng: &mut impl Rng,
) -> Result<CheckOutcome> {
    let d = received.dims()[0];
    let out = state::measure_in_basis(
        received,
        &[0],
        &basis_for(d, prep_basis)?,
        OutcomeChoice::Draw(rng::uniform(rng)),
    )?;
    Ok(if out.value == prep_value {
        CheckOutcome::Pass
    } else {
        CheckOutcome::Detect
    })
}

/// Closed-form detection probability `½(1 − 1/d)` for any measuring Eve.
///
/// A fixed-basis Eve is wrong on the half of decoys prepared in the other
/// basis, a random-basis Eve guesses wrong half the time; either way a wrong
/// guess survives the check with probability `1/d`.
pub fn expected_detection_rate(d: usize, action: EveAction) -> f64 {
    match action {
        EveAction::None => 0.0,
        _ => 0.5 * (1.0 - 1.0 / d as f64),
    }
}

/// One full round on its own random stream.
pub fn run_round(d: usize, action: EveAction, rng: &mut StreamRng) -> Result<DecoyRound> {
    let (prep_basis, prep_value, decoy) = prepare_decoy(d, rng)?;
    let (forwarded, eve_basis) = eavesdrop(&decoy, action, rng)?;
    let check = check_decoy(prep_basis, prep_value, &forwarded, rng)?;
    Ok(DecoyRound {
        prep_basis,
        prep_value,
        eve_action: action,
        eve_basis,
        check,
    })
}

/// Binomial z-score of `successes/trials` against `p`.
pub fn binomial_z(successes: u64, trials: u64, p: f64) -> Option<f64> {
    let rate = successes as f64 / trials as f64;
    let var = p * (1.0 - p) / trials as f64;
    if var > 0.0 {
        Some((rate - p) / var.sqrt())
    } else if rate == p {
        Some(0.0)
    } else {
        None
    }
}

/// Runs `rounds` independent rounds; round `i` uses stream `i` of `seed`.
pub fn detection_campaign_rounds(
    d: usize,
    action: EveAction,
    rounds: u64,
    seed: u64,
) -> Result<Vec<DecoyRound>> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    (0..rounds)
        .into_par_iter()
        .map(|i| run_round(d, action, &mut rng::stream_rng(seed, i)))
        .collect()
}

pub fn summarize(d: usize, action: EveAction, rounds: &[DecoyRound]) -> DetectionReport {
    let total = rounds.len() as u64;
    let detections = rounds
        .iter()
        .filter(|r| r.check == CheckOutcome::Detect)
        .count() as u64;
    let expected_rate = expected_detection_rate(d, action);
    let mut by_basis = Vec::new();
    for prep in [DecoyBasis::Z, DecoyBasis::X] {
        for eve in [Some(DecoyBasis::Z), Some(DecoyBasis::X), None] {
            let hits: Vec<&DecoyRound> = rounds
                .iter()
                .filter(|r| r.prep_basis == prep && r.eve_basis == eve)
                .collect();
            if hits.is_empty() {
                continue;
            }
            by_basis.push(BasisTally {
                prep_basis: prep,
                eve_basis: eve,
                rounds: hits.len() as u64,
                detections: hits
                    .iter()
                    .filter(|r| r.check == CheckOutcome::Detect)
                    .count() as u64,
            });
        }
    }
    DetectionReport {
        d,
        eve_action: action,
        rounds: total,
        detections,
        rate: if total == 0 {
            0.0
        } else {
            detections as f64 / total as f64
        },
        expected_rate,
        z_score: if total == 0 {
            None
        } else {
            binomial_z(detections, total, expected_rate)
        },
        by_basis,
    }
}

/// Runs a campaign and reports empirical vs. expected detection rate.
pub fn detection_campaign(
    d: usize,
    action: EveAction,
    rounds: u64,
    seed: u64,
) -> Result<DetectionReport> {
    if rounds == 0 {
        return Err(Error::InvalidInput(
            "a decoy campaign needs at least one round".into(),
        ));
    }
    let log = detection_campaign_rounds(d, action, rounds, seed)?;
    Ok(summarize(d, action, &log))
}
