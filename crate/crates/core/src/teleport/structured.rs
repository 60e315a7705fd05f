//! Structure-exploiting engine.
//!
//! Each channel copy only populates `|j⟩_{a0} ⊗ |j⟩^{⊗(n+1)}`, so the `n+1`
//! non-sender particles of copy `l` behave like one logical qudit `g_l` with
//! `|j⟩_L = |j … j⟩`. Projecting `(χ_l, a0_l)` onto `|ψ_rs⟩` then acts on the
//! input register as the `d × d` Kraus map
//!
//! ```text
//! T_rs[g][i] = conj(ψ_rs[i, g]) · c_g / √d
//! ```
//!
//! which replaces `χ_l` by `g_l` in place. A controller measuring one
//! physical qudit of `g_l` in `X_d` leaves the repetition structure intact and
//! acts as `diag_j(conj(⟨j|t⟩_x))`. The engine therefore holds `d^m`
//! amplitudes until the aux qubit is attached, never the `d^{m(n+3)}` of the
//! full vector, while producing the same Born probabilities in the same
//! order as the dense engine.

use num_complex::Complex64;

use super::{gbs_from_index, Chooser, Context, InputState, RunMode, Step, Transcript};
use crate::error::Result;
use crate::primitives::{gbs_basis, x_basis_vector, ChannelSpec};
use crate::state::{self, OperatorMatrix, StateVector};

struct KrausSets {
    gbs: Vec<OperatorMatrix>,
    controller: Vec<OperatorMatrix>,
}

impl KrausSets {
    fn new(spec: &ChannelSpec) -> Result<Self> {
        let d = spec.d();
        let norm = 1.0 / (d as f64).sqrt();
        let gbs = gbs_basis(d)?
            .iter()
            .map(|psi| {
                OperatorMatrix::from_fn(d, |g, i| {
                    psi.amps()[i * d + g].conj() * spec.coeffs()[g] * norm
                })
            })
            .collect();
        let controller = (0..d)
            .map(|t| {
                let x = x_basis_vector(d, t)?;
                let diag: Vec<Complex64> = x.amps().iter().map(|a| a.conj()).collect();
                Ok(OperatorMatrix::diagonal(&diag))
            })
            .collect::<Result<_>>()?;
        Ok(KrausSets { gbs, controller })
    }
}

fn kraus_step(
    reg: &StateVector,
    target: usize,
    set: &[OperatorMatrix],
    choice: state::OutcomeChoice,
) -> Result<(usize, f64, StateVector)> {
    let branches = state::kraus_branches(reg, target, set)?;
    let probs: Vec<f64> = branches.iter().map(|(p, _)| *p).collect();
    let value = state::select_outcome(&probs, choice)?;
    let (p, post) = branches
        .into_iter()
        .nth(value)
        .expect("selected outcome exists");
    Ok((value, p, post.expect("selected outcome clears the floor")))
}

/// Runs the protocol without materializing the full state vector.
///
/// Same observable contract as [`super::run_protocol`]: identical measurement
/// order, one uniform draw per measurement, and branch probabilities and
/// fidelities that agree with the dense engine to rounding.
pub fn run_structured(
    input: &InputState,
    spec: &ChannelSpec,
    mode: &RunMode,
) -> Result<Transcript> {
    let ctx = Context::new(input, spec)?;
    let mut chooser = Chooser::new(mode, spec)?;
    let (d, n, m) = (spec.d(), spec.n(), spec.m());
    state::check_size(2 * state::amplitude_count(&vec![d; m]))?;
    let kraus = KrausSets::new(spec)?;

    let labels: Vec<String> = (0..m).map(|l| ctx.receiver_label(l)).collect();
    let mut reg = input.to_state()?.with_labels(labels)?;
    let mut probability = 1.0;

    let mut gbs = Vec::with_capacity(m);
    for copy in 0..m {
        let (value, p, post) =
            kraus_step(&reg, copy, &kraus.gbs, chooser.choice(Step::Gbs { copy }))?;
        probability *= p;
        gbs.push(gbs_from_index(d, value));
        reg = post;
    }

    let mut controllers = vec![Vec::with_capacity(n); m];
    for (copy, outs) in controllers.iter_mut().enumerate() {
        for controller in 0..n {
            let choice = chooser.choice(Step::Controller { copy, controller });
            let (value, p, post) = kraus_step(&reg, copy, &kraus.controller, choice)?;
            probability *= p;
            outs.push(value);
            reg = post;
        }
    }
    ctx.conclude(&reg, &mut chooser, gbs, controllers, probability, mode)
}

/// Success probability when each copy is filtered separately with its own
/// aux qubit and every aux must read `0`.
#[cfg(test)]
fn sequential_extraction_probability(receivers: &StateVector, spec: &ChannelSpec) -> Result<f64> {
    let single = crate::primitives::u_max(spec)?;
    let z2 = crate::state::Basis::computational(2);
    let mut reg = receivers.clone();
    let mut probability = 1.0;
    for l in 0..spec.m() {
        let aux = StateVector::basis_state(vec![2], 0)?.with_labels(vec![format!("aux{l}")])?;
        let mut joint = reg.tensor(&aux)?;
        let aux_pos = joint.num_subsystems() - 1;
        state::apply_in_place(&mut joint, &single, &[aux_pos, l])?;
        let out =
            state::measure_in_basis(&joint, &[aux_pos], &z2, state::OutcomeChoice::Forced(0))?;
        probability *= out.probability;
        reg = out.post_state;
    }
    Ok(probability)
}

/// The receiver register right before extraction, for a given outcome prefix.
#[cfg(test)]
fn receiver_register(
    input: &InputState,
    spec: &ChannelSpec,
    outcome: &super::BranchOutcome,
) -> Result<(f64, StateVector)> {
    let ctx = Context::new(input, spec)?;
    let d = spec.d();
    let kraus = KrausSets::new(spec)?;
    let labels: Vec<String> = (0..spec.m()).map(|l| ctx.receiver_label(l)).collect();
    let mut reg = input.to_state()?.with_labels(labels)?;
    let mut probability = 1.0;
    for (copy, g) in outcome.gbs.iter().enumerate() {
        let (_, p, post) = kraus_step(
            &reg,
            copy,
            &kraus.gbs,
            state::OutcomeChoice::Forced(g.r * d + g.s),
        )?;
        probability *= p;
        reg = post;
    }
    for (copy, outs) in outcome.controllers.iter().enumerate() {
        for &t in outs {
            let (_, p, post) = kraus_step(
                &reg,
                copy,
                &kraus.controller,
                state::OutcomeChoice::Forced(t),
            )?;
            probability *= p;
            reg = post;
        }
    }
    Ok((probability, reg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teleport::{run_protocol, BranchOutcome, GbsOutcome};

    fn spec_3_2_2() -> ChannelSpec {
        ChannelSpec::new(
            3,
            2,
            2,
            vec![
                Complex64::from_polar(1.2f64.sqrt(), 0.3),
                Complex64::from_polar(0.7f64.sqrt(), -1.1),
                Complex64::from_polar(1.1f64.sqrt(), 2.5),
            ],
        )
        .unwrap()
    }

    #[test]
    fn matches_dense_on_a_forced_branch() {
        let spec = spec_3_2_2();
        let input = InputState::random(3, 2, 21).unwrap();
        let outcome = BranchOutcome {
            gbs: vec![GbsOutcome { r: 2, s: 1 }, GbsOutcome { r: 0, s: 2 }],
            controllers: vec![vec![1, 2], vec![0, 2]],
            aux: 0,
        };
        let mode = RunMode::Forced(outcome);
        let dense = run_protocol(&input, &spec, &mode).unwrap();
        let fast = run_structured(&input, &spec, &mode).unwrap();
        assert!((dense.probability - fast.probability).abs() < 1e-12);
        assert!((dense.fidelity - fast.fidelity).abs() < 1e-12);
        assert!((fast.fidelity - 1.0).abs() < 1e-12);
        assert_eq!(dense.outcome, fast.outcome);
    }

    #[test]
    fn same_seed_same_transcript_as_dense() {
        let spec = spec_3_2_2();
        let input = InputState::random(3, 2, 4).unwrap();
        for stream in 0..20 {
            let mode = RunMode::Sampled { seed: 17, stream };
            let dense = run_protocol(&input, &spec, &mode).unwrap();
            let fast = run_structured(&input, &spec, &mode).unwrap();
            assert_eq!(dense.outcome, fast.outcome);
            assert!((dense.probability - fast.probability).abs() < 1e-12);
        }
    }

    #[test]
    fn handles_sizes_beyond_the_dense_guard() {
        let spec = ChannelSpec::from_real(
            5,
            4,
            2,
            &[1.3f64.sqrt(), 1.0, 0.8f64.sqrt(), 0.9f64.sqrt(), 1.0],
        )
        .unwrap();
        let input = InputState::random(5, 2, 2).unwrap();
        let t = run_structured(&input, &spec, &RunMode::Sampled { seed: 3, stream: 0 }).unwrap();
        assert_eq!(t.outcome.controllers[1].len(), 4);
        if t.success {
            assert!((t.fidelity - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn sequential_and_collective_extraction_agree() {
        let spec = spec_3_2_2();
        let input = InputState::random(3, 2, 9).unwrap();
        let outcome = BranchOutcome {
            gbs: vec![GbsOutcome { r: 1, s: 1 }, GbsOutcome { r: 2, s: 0 }],
            controllers: vec![vec![0, 1], vec![2, 2]],
            aux: 0,
        };
        let (_, reg) = receiver_register(&input, &spec, &outcome).unwrap();
        let ctx = Context::new(&input, &spec).unwrap();
        let joint = ctx.extract(&reg).unwrap();
        let aux = joint.position("aux").unwrap();
        let collective = state::outcome_probabilities(&joint, &[aux], &ctx.z2).unwrap()[0];
        let sequential = sequential_extraction_probability(&reg, &spec).unwrap();
        assert!((collective - sequential).abs() < 1e-12);
    }
}
