//! Multiparty-controlled teleportation of an `m`-qudit state over `m` copies of
//! a pure `(n+2)`-party channel.
//!
//! The sender measures each `(χ_l, a0_l)` pair in the generalized Bell basis,
//! every controller measures each held qudit in `X_d`, and the receiver runs
//! the collective extraction unitary with one aux qubit. Aux outcome `0`
//! heralds success, after which per-copy corrections recover the input
//! exactly.
//!
//! Two engines share this contract: [`run_protocol`] materializes the full
//! state vector and serves as the oracle, [`run_structured`] keeps only the
//! receiver register plus aux.

mod dense;
mod structured;

pub use dense::{enumerate_branches, fidelity_without_control, run_protocol};
pub use structured::run_structured;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::primitives::{
    correction_unitary, gbs_measurement, phase_compensation, u_max_m, x_measurement, ChannelSpec,
};
use crate::rng::{self, StreamRng};
use crate::state::{self, Basis, OperatorMatrix, OutcomeChoice, StateVector, OUTCOME_FLOOR};

/// Input normalization tolerance.
pub const INPUT_NORM_TOL: f64 = 1e-10;

/// Branch-count ceiling for exhaustive enumeration.
pub const MAX_BRANCHES: u128 = 1_000_000;

/// Tolerance on the total probability of an enumeration.
pub const PROBABILITY_SUM_TOL: f64 = 1e-9;

/// Unknown `m`-qudit input `Σ β_{n1…nm} |n1 … nm⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputState {
    d: usize,
    m: usize,
    beta: Vec<Complex64>,
}

impl InputState {
    pub fn new(d: usize, m: usize, beta: Vec<Complex64>) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidDimension(d));
        }
        if m == 0 {
            return Err(Error::InvalidInput(
                "copy count m must be at least 1".into(),
            ));
        }
        let expected = state::amplitude_count(&vec![d; m]);
        if beta.len() as u128 != expected {
            return Err(Error::InvalidInput(format!(
                "amplitude list has length {}, must be d^m = {expected}",
                beta.len()
            )));
        }
        let norm: f64 = beta.iter().map(|b| b.norm_sqr()).sum();
        if (norm - 1.0).abs() > INPUT_NORM_TOL {
            return Err(Error::InvalidInput(format!(
                "Σ|β|² = {norm} but must equal 1"
            )));
        }
        Ok(InputState { d, m, beta })
    }

    pub fn from_real(d: usize, m: usize, beta: &[f64]) -> Result<Self> {
        Self::new(d, m, beta.iter().map(|&b| Complex64::new(b, 0.0)).collect())
    }

    /// Computational basis input `|index⟩`.
    pub fn basis(d: usize, m: usize, index: usize) -> Result<Self> {
        let len = state::amplitude_count(&vec![d; m]);
        state::check_size(len)?;
        if index as u128 >= len {
            return Err(Error::IndexOutOfRange {
                index,
                dim: len as usize,
            });
        }
        let mut beta = vec![Complex64::new(0.0, 0.0); len as usize];
        beta[index] = Complex64::new(1.0, 0.0);
        Self::new(d, m, beta)
    }

    /// Uniformly random pure state: `2d^m` standard normals as real and
    /// imaginary parts, then normalized.
    pub fn random(d: usize, m: usize, seed: u64) -> Result<Self> {
        let len = state::amplitude_count(&vec![d; m]);
        state::check_size(len)?;
        let mut rng = rng::stream_rng(seed, 0);
        let mut beta: Vec<Complex64> = (0..len)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im)
            })
            .collect();
        let norm = beta.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt();
        beta.iter_mut().for_each(|b| *b /= norm);
        Self::new(d, m, beta)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn beta(&self) -> &[Complex64] {
        &self.beta
    }

    pub fn to_state(&self) -> Result<StateVector> {
        StateVector::new(vec![self.d; self.m], self.beta.clone())
    }
}

/// Generalized Bell outcome `|ψ_rs⟩` for one copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct GbsOutcome {
    pub r: usize,
    pub s: usize,
}

/// Every classical outcome of one protocol run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct BranchOutcome {
    /// One GBS outcome per copy.
    pub gbs: Vec<GbsOutcome>,
    /// `controllers[l][k-1]` is the `X_d` outcome of controller `k` on copy `l`.
    pub controllers: Vec<Vec<usize>>,
    pub aux: u8,
}

impl BranchOutcome {
    /// `r''_l = Σ_j j·t_j^l mod d`, i.e. the sum of controller outcomes on copy `l`.
    pub fn r_double_prime(&self, d: usize) -> Vec<usize> {
        self.controllers
            .iter()
            .map(|outs| outs.iter().sum::<usize>() % d)
            .collect()
    }

    /// `t_j^l` for `j = 0..d`: how many controllers on copy `l` saw `|j⟩_x`.
    pub fn tallies(&self, d: usize) -> Vec<Vec<usize>> {
        self.controllers
            .iter()
            .map(|outs| {
                let mut t = vec![0usize; d];
                for &o in outs {
                    t[o] += 1;
                }
                t
            })
            .collect()
    }

    fn validate(&self, spec: &ChannelSpec) -> Result<()> {
        let (d, n, m) = (spec.d(), spec.n(), spec.m());
        if self.gbs.len() != m {
            return Err(Error::InvalidOutcome(format!(
                "{} GBS outcomes for {m} copies",
                self.gbs.len()
            )));
        }
        if let Some(g) = self.gbs.iter().find(|g| g.r >= d || g.s >= d) {
            return Err(Error::InvalidOutcome(format!(
                "GBS outcome ({}, {}) out of range for d = {d}",
                g.r, g.s
            )));
        }
        if self.controllers.len() != m || self.controllers.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidOutcome(format!(
                "controller outcomes must be {m} lists of {n}"
            )));
        }
        if self.controllers.iter().flatten().any(|&t| t >= d) {
            return Err(Error::InvalidOutcome(format!(
                "controller outcome out of range for d = {d}"
            )));
        }
        if self.aux > 1 {
            return Err(Error::InvalidOutcome("aux outcome must be 0 or 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunMode {
    /// Sample outcomes from stream `stream` of `seed`.
    Sampled { seed: u64, stream: u64 },
    /// Post-select on a full outcome tuple.
    Forced(BranchOutcome),
}

/// Record of one protocol run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transcript {
    pub seed: Option<u64>,
    pub stream: Option<u64>,
    pub outcome: BranchOutcome,
    pub tallies: Vec<Vec<usize>>,
    pub r_double_prime: Vec<usize>,
    pub success: bool,
    /// Fidelity of the receiver register with the input. On failure this is
    /// the uncorrected remainder, kept only for diagnostics.
    pub fidelity: f64,
    /// Joint probability of the recorded outcome sequence.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Branch {
    pub outcome: BranchOutcome,
    pub probability: f64,
    pub fidelity: f64,
    pub success: bool,
}

/// Exhaustive outcome table of one `(input, channel)` pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchReport {
    pub branches: Vec<Branch>,
    pub total_probability: f64,
    pub success_probability: f64,
    pub theoretical_success_probability: f64,
    /// Success-weighted mean fidelity; `None` if no branch succeeds.
    pub mean_success_fidelity: Option<f64>,
    pub min_success_fidelity: Option<f64>,
}

/// `(min_j |c_j|²)^m`.
pub fn theoretical_success_probability(spec: &ChannelSpec) -> f64 {
    spec.min_weight().powi(spec.m() as i32)
}

/// Where a measurement sits in the fixed protocol order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Gbs { copy: usize },
    Controller { copy: usize, controller: usize },
    Aux,
}

/// Turns a run mode into per-measurement outcome choices. Sampled runs draw
/// exactly one uniform per measurement in protocol order.
enum Chooser<'a> {
    Sampled(Box<StreamRng>),
    Forced(&'a BranchOutcome, usize),
}

impl<'a> Chooser<'a> {
    fn new(mode: &'a RunMode, spec: &ChannelSpec) -> Result<Self> {
        match mode {
            RunMode::Sampled { seed, stream } => {
                Ok(Chooser::Sampled(Box::new(rng::stream_rng(*seed, *stream))))
            }
            RunMode::Forced(outcome) => {
                outcome.validate(spec)?;
                Ok(Chooser::Forced(outcome, spec.d()))
            }
        }
    }

    fn choice(&mut self, step: Step) -> OutcomeChoice {
        match self {
            Chooser::Sampled(rng) => OutcomeChoice::Draw(rng::uniform(rng.as_mut())),
            Chooser::Forced(outcome, d) => OutcomeChoice::Forced(match step {
                Step::Gbs { copy } => outcome.gbs[copy].r * *d + outcome.gbs[copy].s,
                Step::Controller { copy, controller } => outcome.controllers[copy][controller],
                Step::Aux => outcome.aux as usize,
            }),
        }
    }
}

fn mode_seed(mode: &RunMode) -> (Option<u64>, Option<u64>) {
    match mode {
        RunMode::Sampled { seed, stream } => (Some(*seed), Some(*stream)),
        RunMode::Forced(_) => (None, None),
    }
}

fn check_compatible(input: &InputState, spec: &ChannelSpec) -> Result<()> {
    if input.d() != spec.d() || input.m() != spec.m() {
        return Err(Error::InvalidInput(format!(
            "input is d = {}, m = {} but channel is d = {}, m = {}",
            input.d(),
            input.m(),
            spec.d(),
            spec.m()
        )));
    }
    Ok(())
}

/// Precomputed bases and operators shared by every run with one channel.
struct Context<'a> {
    spec: &'a ChannelSpec,
    input: &'a InputState,
    target: StateVector,
    gbs: Basis,
    x: Basis,
    z2: Basis,
    extraction: OperatorMatrix,
    phases: Option<OperatorMatrix>,
}

impl<'a> Context<'a> {
    fn new(input: &'a InputState, spec: &'a ChannelSpec) -> Result<Self> {
        check_compatible(input, spec)?;
        let d = spec.d();
        let phases = spec
            .coeffs()
            .iter()
            .any(|c| c.im != 0.0 || c.re < 0.0)
            .then(|| phase_compensation(spec));
        Ok(Context {
            spec,
            input,
            target: input.to_state()?,
            gbs: gbs_measurement(d)?,
            x: x_measurement(d)?,
            z2: Basis::computational(2),
            extraction: u_max_m(spec)?,
            phases,
        })
    }

    fn receiver_label(&self, copy: usize) -> String {
        format!("a{}_{}", self.spec.n() + 1, copy + 1)
    }

    /// Appends a fresh aux qubit in `|0⟩` and runs the collective extraction
    /// unitary with the aux as the most significant index digit.
    fn extract(&self, receivers: &StateVector) -> Result<StateVector> {
        let aux = StateVector::basis_state(vec![2], 0)?.with_labels(vec!["aux"])?;
        let mut joint = receivers.tensor(&aux)?;
        let mut targets = vec![joint.position("aux")?];
        for l in 0..self.spec.m() {
            targets.push(joint.position(&self.receiver_label(l))?);
        }
        state::apply_in_place(&mut joint, &self.extraction, &targets)?;
        Ok(joint)
    }

    /// Fidelity after the aux measurement. Success branches get the phase
    /// compensation and the per-copy corrections driven by `rpp`.
    fn finish(
        &self,
        mut receivers: StateVector,
        gbs: &[GbsOutcome],
        rpp: &[usize],
        success: bool,
    ) -> Result<f64> {
        if success {
            let d = self.spec.d();
            for (l, (g, &r2)) in gbs.iter().zip(rpp).enumerate() {
                let pos = receivers.position(&self.receiver_label(l))?;
                if let Some(p) = &self.phases {
                    state::apply_in_place(&mut receivers, p, &[pos])?;
                }
                let fix = correction_unitary(d, g.r + r2, d - g.s);
                state::apply_in_place(&mut receivers, &fix, &[pos])?;
            }
        }
        state::fidelity(&receivers, &self.target)
    }

    /// Aux measurement plus correction for a sampled or forced run.
    fn conclude(
        &self,
        receivers: &StateVector,
        chooser: &mut Chooser<'_>,
        gbs: Vec<GbsOutcome>,
        controllers: Vec<Vec<usize>>,
        mut probability: f64,
        mode: &RunMode,
    ) -> Result<Transcript> {
        let joint = self.extract(receivers)?;
        let aux_pos = joint.position("aux")?;
        let measured =
            state::measure_in_basis(&joint, &[aux_pos], &self.z2, chooser.choice(Step::Aux))?;
        probability *= measured.probability;
        let aux = measured.value as u8;
        let success = aux == 0;
        let d = self.spec.d();
        let outcome = BranchOutcome {
            gbs,
            controllers,
            aux,
        };
        let rpp = outcome.r_double_prime(d);
        let fidelity = self.finish(measured.post_state, &outcome.gbs, &rpp, success)?;
        let (seed, stream) = mode_seed(mode);
        Ok(Transcript {
            seed,
            stream,
            tallies: outcome.tallies(d),
            r_double_prime: rpp,
            outcome,
            success,
            fidelity,
            probability,
        })
    }
}

fn gbs_from_index(d: usize, value: usize) -> GbsOutcome {
    GbsOutcome {
        r: value / d,
        s: value % d,
    }
}

fn is_negligible(p: f64) -> bool {
    p < OUTCOME_FLOOR
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theoretical_probability_examples() {
        let uniform = ChannelSpec::uniform(4, 2, 3).unwrap();
        assert_eq!(theoretical_success_probability(&uniform), 1.0);
        let c = [1.5f64.sqrt(), 0.5f64.sqrt()];
        let one = ChannelSpec::from_real(2, 1, 1, &c).unwrap();
        assert!((theoretical_success_probability(&one) - 0.5).abs() < 1e-15);
        let three = ChannelSpec::from_real(2, 1, 3, &c).unwrap();
        assert!((theoretical_success_probability(&three) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn input_validation() {
        assert!(InputState::from_real(2, 1, &[0.6, 0.8]).is_ok());
        assert!(InputState::from_real(2, 1, &[0.6, 0.8, 0.0]).is_err());
        assert!(InputState::from_real(2, 1, &[1.0, 1.0]).is_err());
        assert!(InputState::basis(3, 2, 9).is_err());
        let r = InputState::random(3, 2, 11).unwrap();
        assert_eq!(r.beta().len(), 9);
        assert_eq!(r, InputState::random(3, 2, 11).unwrap());
        assert_ne!(r, InputState::random(3, 2, 12).unwrap());
    }

    #[test]
    fn tallies_and_r_double_prime() {
        let o = BranchOutcome {
            gbs: vec![GbsOutcome { r: 0, s: 0 }; 2],
            controllers: vec![vec![1, 2, 2], vec![0, 0, 1]],
            aux: 0,
        };
        assert_eq!(o.tallies(3), vec![vec![0, 1, 2], vec![2, 1, 0]]);
        // r'' = 1·t_1 + 2·t_2 mod d
        assert_eq!(o.r_double_prime(3), vec![(1 + 2 * 2) % 3, 1]);
    }

    #[test]
    fn forced_outcome_shape_is_validated() {
        let spec = ChannelSpec::uniform(2, 1, 1).unwrap();
        let input = InputState::from_real(2, 1, &[0.6, 0.8]).unwrap();
        let bad = BranchOutcome {
            gbs: vec![GbsOutcome { r: 0, s: 0 }],
            controllers: vec![vec![0, 0]],
            aux: 0,
        };
        assert!(matches!(
            run_protocol(&input, &spec, &RunMode::Forced(bad)),
            Err(Error::InvalidOutcome(_))
        ));
    }
}
