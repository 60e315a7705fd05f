//! Full state-vector engine. Holds `χ ⊗ Φ^{⊗m}` explicitly and measures it
//! subsystem by subsystem; this is the reference the structured engine is
//! checked against.

use rayon::prelude::*;

use super::{
    check_compatible, gbs_from_index, is_negligible, Branch, BranchOutcome, BranchReport, Chooser,
    Context, GbsOutcome, InputState, RunMode, Step, Transcript, MAX_BRANCHES, PROBABILITY_SUM_TOL,
};
use crate::error::{Error, Result};
use crate::primitives::{channel_copy, ChannelSpec};
use crate::state::{self, StateVector};

fn chi_label(copy: usize) -> String {
    format!("chi_{}", copy + 1)
}

fn particle_label(k: usize, copy: usize) -> String {
    format!("a{k}_{}", copy + 1)
}

/// Amplitudes of the assembled input-plus-channel vector, `d^{m(n+3)}`.
pub(crate) fn dense_amplitudes(spec: &ChannelSpec) -> u128 {
    state::amplitude_count(&vec![spec.d(); spec.m() * (spec.n() + 3)])
}

fn assemble(ctx: &Context<'_>) -> Result<StateVector> {
    let spec = ctx.spec;
    state::check_size(dense_amplitudes(spec))?;
    let labels: Vec<String> = (0..spec.m()).map(chi_label).collect();
    let mut full = ctx.input.to_state()?.with_labels(labels)?;
    for l in 0..spec.m() {
        full = full.tensor(&channel_copy(spec, Some(l + 1))?)?;
    }
    Ok(full)
}

fn targets_for(state: &StateVector, step: Step) -> Result<Vec<usize>> {
    match step {
        Step::Gbs { copy } => Ok(vec![
            state.position(&chi_label(copy))?,
            state.position(&particle_label(0, copy))?,
        ]),
        Step::Controller { copy, controller } => {
            Ok(vec![state.position(&particle_label(controller + 1, copy))?])
        }
        Step::Aux => Ok(vec![state.position("aux")?]),
    }
}

/// Sender GBS measurements on every copy, then every controller's `X_d`
/// measurement copy by copy.
fn measurement_order(spec: &ChannelSpec) -> Vec<Step> {
    let mut steps: Vec<Step> = (0..spec.m()).map(|copy| Step::Gbs { copy }).collect();
    for copy in 0..spec.m() {
        for controller in 0..spec.n() {
            steps.push(Step::Controller { copy, controller });
        }
    }
    steps
}

/// Runs the protocol on the full state vector.
///
/// Fails with [`Error::SizeGuard`] when `d^{m(n+3)}` exceeds the amplitude
/// guard, and with [`Error::ImpossibleOutcome`] when a forced outcome has
/// (numerically) zero probability.
pub fn run_protocol(input: &InputState, spec: &ChannelSpec, mode: &RunMode) -> Result<Transcript> {
    let ctx = Context::new(input, spec)?;
    let mut chooser = Chooser::new(mode, spec)?;
    let mut state = assemble(&ctx)?;
    let d = spec.d();
    let mut probability = 1.0;
    let mut gbs = Vec::with_capacity(spec.m());
    let mut controllers = vec![Vec::with_capacity(spec.n()); spec.m()];

    for step in measurement_order(spec) {
        let targets = targets_for(&state, step)?;
        let basis = match step {
            Step::Gbs { .. } => &ctx.gbs,
            _ => &ctx.x,
        };
        let out = state::measure_in_basis(&state, &targets, basis, chooser.choice(step))?;
        probability *= out.probability;
        match step {
            Step::Gbs { .. } => gbs.push(gbs_from_index(d, out.value)),
            Step::Controller { copy, .. } => controllers[copy].push(out.value),
            Step::Aux => unreachable!(),
        }
        state = out.post_state;
    }
    ctx.conclude(&state, &mut chooser, gbs, controllers, probability, mode)
}

#[derive(Clone)]
struct Partial {
    gbs: Vec<GbsOutcome>,
    controllers: Vec<Vec<usize>>,
    probability: f64,
}

struct Walker<'a> {
    ctx: Context<'a>,
    steps: Vec<Step>,
    withheld: Vec<usize>,
}

impl Walker<'_> {
    fn measure(&self, state: &StateVector, step: Step) -> Result<Vec<state::MeasurementOutcome>> {
        let basis = match step {
            Step::Gbs { .. } => &self.ctx.gbs,
            _ => &self.ctx.x,
        };
        state::measure_all_outcomes(state, &targets_for(state, step)?, basis)
    }

    fn descend(&self, partial: &Partial, step: Step, value: usize, p: f64) -> Partial {
        let mut next = partial.clone();
        next.probability *= p;
        match step {
            Step::Gbs { .. } => next.gbs.push(gbs_from_index(self.ctx.spec.d(), value)),
            Step::Controller { copy, .. } => next.controllers[copy].push(value),
            Step::Aux => unreachable!(),
        }
        next
    }

    fn walk(
        &self,
        state: &StateVector,
        depth: usize,
        partial: Partial,
        out: &mut Vec<Branch>,
    ) -> Result<()> {
        if depth == self.steps.len() {
            return self.leaf(state, partial, out);
        }
        let step = self.steps[depth];
        for o in self.measure(state, step)? {
            let next = self.descend(&partial, step, o.value, o.probability);
            if is_negligible(next.probability) {
                continue;
            }
            self.walk(&o.post_state, depth + 1, next, out)?;
        }
        Ok(())
    }

    fn leaf(&self, receivers: &StateVector, partial: Partial, out: &mut Vec<Branch>) -> Result<()> {
        let d = self.ctx.spec.d();
        let joint = self.ctx.extract(receivers)?;
        let aux_pos = joint.position("aux")?;
        // r'' as the receiver computes it, leaving out withheld controllers
        let rpp: Vec<usize> = partial
            .controllers
            .iter()
            .map(|outs| {
                outs.iter()
                    .enumerate()
                    .filter(|(k, _)| !self.withheld.contains(&(k + 1)))
                    .map(|(_, &t)| t)
                    .sum::<usize>()
                    % d
            })
            .collect();
        for o in state::measure_all_outcomes(&joint, &[aux_pos], &self.ctx.z2)? {
            let success = o.value == 0;
            let fidelity = self.ctx.finish(o.post_state, &partial.gbs, &rpp, success)?;
            out.push(Branch {
                outcome: BranchOutcome {
                    gbs: partial.gbs.clone(),
                    controllers: partial.controllers.clone(),
                    aux: o.value as u8,
                },
                probability: partial.probability * o.probability,
                fidelity,
                success,
            });
        }
        Ok(())
    }
}

/// `d^{2m} · d^{nm} · 2`.
pub(crate) fn branch_count(spec: &ChannelSpec) -> u128 {
    let (d, n, m) = (spec.d() as u128, spec.n() as u32, spec.m() as u32);
    d.saturating_pow(2 * m)
        .saturating_mul(d.saturating_pow(n * m))
        .saturating_mul(2)
}

fn enumerate_with(
    input: &InputState,
    spec: &ChannelSpec,
    withheld: &[usize],
) -> Result<BranchReport> {
    check_compatible(input, spec)?;
    let required = branch_count(spec);
    if required > MAX_BRANCHES {
        return Err(Error::EnumerationGuard {
            required,
            limit: MAX_BRANCHES,
        });
    }
    let walker = Walker {
        ctx: Context::new(input, spec)?,
        steps: measurement_order(spec),
        withheld: withheld.to_vec(),
    };
    let root = assemble(&walker.ctx)?;
    let start = Partial {
        gbs: Vec::with_capacity(spec.m()),
        controllers: vec![Vec::with_capacity(spec.n()); spec.m()],
        probability: 1.0,
    };

    // fan out over the first sender outcome; each subtree is walked serially
    let first = walker.steps[0];
    let subtrees = walker.measure(&root, first)?;
    let chunks: Vec<Vec<Branch>> = subtrees
        .par_iter()
        .map(|o| {
            let mut out = Vec::new();
            let next = walker.descend(&start, first, o.value, o.probability);
            if !is_negligible(next.probability) {
                walker.walk(&o.post_state, 1, next, &mut out)?;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let branches: Vec<Branch> = chunks.into_iter().flatten().collect();

    let total_probability: f64 = branches.iter().map(|b| b.probability).sum();
    if (total_probability - 1.0).abs() > PROBABILITY_SUM_TOL {
        return Err(Error::ProbabilityLeak(total_probability));
    }
    let success_probability: f64 = branches
        .iter()
        .filter(|b| b.success)
        .map(|b| b.probability)
        .sum();
    let weighted: f64 = branches
        .iter()
        .filter(|b| b.success)
        .map(|b| b.probability * b.fidelity)
        .sum();
    let min_success_fidelity = branches
        .iter()
        .filter(|b| b.success)
        .map(|b| b.fidelity)
        .reduce(f64::min);
    Ok(BranchReport {
        branches,
        total_probability,
        success_probability,
        theoretical_success_probability: super::theoretical_success_probability(spec),
        mean_success_fidelity: (success_probability > 0.0).then(|| weighted / success_probability),
        min_success_fidelity,
    })
}

/// Exhaustive expansion of every sender, controller and aux outcome with
/// exact probabilities and per-branch fidelities.
///
/// Refuses channels whose branch count `2·d^{m(n+2)}` exceeds [`MAX_BRANCHES`].
/// Branches whose joint probability falls below the outcome floor are
/// dropped.
pub fn enumerate_branches(input: &InputState, spec: &ChannelSpec) -> Result<BranchReport> {
    enumerate_with(input, spec, &[])
}

/// Average success-branch fidelity when the controllers in `withheld`
/// (numbered from 1) keep their outcomes to themselves and the receiver
/// corrects as if they had reported `|0⟩_x`.
pub fn fidelity_without_control(
    input: &InputState,
    spec: &ChannelSpec,
    withheld: &[usize],
) -> Result<f64> {
    let mut seen = Vec::with_capacity(withheld.len());
    for &k in withheld {
        if k == 0 || k > spec.n() {
            return Err(Error::InvalidOutcome(format!(
                "controller {k} does not exist, controllers are numbered 1..={}",
                spec.n()
            )));
        }
        if seen.contains(&k) {
            return Err(Error::InvalidOutcome(format!(
                "controller {k} listed twice"
            )));
        }
        seen.push(k);
    }
    let report = enumerate_with(input, spec, withheld)?;
    Ok(report.mean_success_fidelity.unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teleport::theoretical_success_probability;
    use num_complex::Complex64;

    fn weighted_spec(n: usize, m: usize) -> ChannelSpec {
        ChannelSpec::from_real(2, n, m, &[1.5f64.sqrt(), 0.5f64.sqrt()]).unwrap()
    }

    #[test]
    fn maximally_entangled_trivial_branch() {
        let spec = ChannelSpec::uniform(2, 1, 1).unwrap();
        let input = InputState::new(
            2,
            1,
            vec![
                Complex64::new(0.3, 0.4),
                Complex64::new(0.0, -(0.75f64).sqrt()),
            ],
        )
        .unwrap();
        let forced = BranchOutcome {
            gbs: vec![GbsOutcome { r: 0, s: 0 }],
            controllers: vec![vec![0]],
            aux: 0,
        };
        let t = run_protocol(&input, &spec, &RunMode::Forced(forced)).unwrap();
        assert!(t.success);
        assert!((t.fidelity - 1.0).abs() < 1e-12);
        assert_eq!(t.r_double_prime, vec![0]);
        // GBS outcome 1/4, controller 1/2, aux certain
        assert!((t.probability - 0.125).abs() < 1e-12);
    }

    #[test]
    fn weighted_channel_success_branches_have_unit_fidelity() {
        let spec = weighted_spec(1, 1);
        let input = InputState::from_real(2, 1, &[0.6, 0.8]).unwrap();
        let report = enumerate_branches(&input, &spec).unwrap();
        assert!((report.total_probability - 1.0).abs() < 1e-12);
        assert!((report.success_probability - 0.5).abs() < 1e-12);
        for b in report.branches.iter().filter(|b| b.success) {
            assert!((b.fidelity - 1.0).abs() < 1e-12, "{b:?}");
        }
    }

    #[test]
    fn uniform_channel_always_succeeds() {
        let spec = ChannelSpec::uniform(2, 1, 1).unwrap();
        let input = InputState::from_real(2, 1, &[0.6, 0.8]).unwrap();
        let report = enumerate_branches(&input, &spec).unwrap();
        assert!((report.success_probability - 1.0).abs() < 1e-12);
        assert!(report.branches.iter().all(|b| b.success));
        assert_eq!(report.branches.len(), 4 * 2);
    }

    #[test]
    fn two_copy_qutrit_probability() {
        let spec = ChannelSpec::from_real(3, 1, 2, &[1.2f64.sqrt(), 0.9f64.sqrt(), 0.9f64.sqrt()])
            .unwrap();
        let input = InputState::random(3, 2, 5).unwrap();
        let report = enumerate_branches(&input, &spec).unwrap();
        assert!((report.success_probability - 0.81).abs() < 1e-9);
        assert!((theoretical_success_probability(&spec) - 0.81).abs() < 1e-12);
    }

    #[test]
    fn no_controllers_means_plain_teleportation() {
        let spec = weighted_spec(0, 2);
        let input = InputState::random(2, 2, 3).unwrap();
        let report = enumerate_branches(&input, &spec).unwrap();
        assert!(report.branches.iter().all(|b| b
            .outcome
            .r_double_prime(2)
            .iter()
            .all(|&r| r == 0)));
        assert!((report.success_probability - 0.25).abs() < 1e-12);
    }

    #[test]
    fn guards() {
        let big = ChannelSpec::uniform(5, 4, 2).unwrap();
        let input = InputState::basis(5, 2, 0).unwrap();
        assert!(matches!(
            enumerate_branches(&input, &big),
            Err(Error::EnumerationGuard { .. })
        ));
        let t = run_protocol(&input, &big, &RunMode::Sampled { seed: 1, stream: 0 });
        assert!(matches!(t, Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn forced_zero_probability_branch() {
        // uniform channel: the aux never reads 1
        let spec = ChannelSpec::uniform(2, 1, 1).unwrap();
        let input = InputState::from_real(2, 1, &[0.6, 0.8]).unwrap();
        let forced = BranchOutcome {
            gbs: vec![GbsOutcome { r: 1, s: 1 }],
            controllers: vec![vec![1]],
            aux: 1,
        };
        assert!(matches!(
            run_protocol(&input, &spec, &RunMode::Forced(forced)),
            Err(Error::ImpossibleOutcome { .. })
        ));
    }

    #[test]
    fn withholding_controllers() {
        let spec = ChannelSpec::uniform(2, 1, 1).unwrap();
        let input = InputState::from_real(2, 1, &[0.6, 0.8]).unwrap();
        let all = fidelity_without_control(&input, &spec, &[]).unwrap();
        assert!((all - 1.0).abs() < 1e-12);
        let blind = fidelity_without_control(&input, &spec, &[1]).unwrap();
        assert!(blind < 0.999);

        let basis_input = InputState::basis(3, 1, 2).unwrap();
        let spec3 = ChannelSpec::from_real(3, 2, 1, &[1.2f64.sqrt(), 0.9f64.sqrt(), 0.9f64.sqrt()])
            .unwrap();
        let f = fidelity_without_control(&basis_input, &spec3, &[1, 2]).unwrap();
        assert!((f - 1.0).abs() < 1e-12);

        assert!(fidelity_without_control(&input, &spec, &[2]).is_err());
        assert!(fidelity_without_control(&input, &spec, &[1, 1]).is_err());
    }

    #[test]
    fn sampled_run_is_reproducible() {
        let spec = weighted_spec(2, 1);
        let input = InputState::random(2, 1, 8).unwrap();
        let mode = RunMode::Sampled {
            seed: 99,
            stream: 4,
        };
        let a = run_protocol(&input, &spec, &mode).unwrap();
        let b = run_protocol(&input, &spec, &mode).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seed, Some(99));
        assert_eq!(a.success, a.outcome.aux == 0);
    }
}
