//! Dense complex state vectors over heterogeneous subsystems.
//!
//! Amplitudes are stored row-major: the first subsystem in `dims` is the most
//! significant digit of the flat index. Operators act on an ordered list of
//! target subsystems, again with the first target as the most significant
//! digit of the operator's row/column index.
//!
//! Measured subsystems are removed from the state, so a protocol run keeps
//! shrinking the vector as it goes.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Tolerance for orthonormality and unitarity validation.
pub const VALIDATION_TOL: f64 = 1e-10;

/// Forced outcomes below this probability are rejected.
pub const OUTCOME_FLOOR: f64 = 1e-15;

/// Default ceiling on the number of amplitudes a single state may hold.
pub const DEFAULT_MAX_AMPLITUDES: u128 = 1 << 27;

/// Environment variable overriding [`DEFAULT_MAX_AMPLITUDES`].
pub const MAX_AMPLITUDES_ENV: &str = "QTELEPORT_MAX_AMPLITUDES";

// Below this many target blocks the parallel apply path costs more than it saves.
const PAR_BLOCKS: usize = 1 << 12;

/// Current size guard, honouring `QTELEPORT_MAX_AMPLITUDES` when it parses.
pub fn max_amplitudes() -> u128 {
    std::env::var(MAX_AMPLITUDES_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u128>().ok())
        .filter(|&v| v > 0)
        .unwrap_or(DEFAULT_MAX_AMPLITUDES)
}

/// Checked product of subsystem dimensions.
pub fn amplitude_count(dims: &[usize]) -> u128 {
    dims.iter()
        .fold(1u128, |acc, &d| acc.saturating_mul(d as u128))
}

/// Fails with [`Error::SizeGuard`] when `required` exceeds the guard.
pub fn check_size(required: u128) -> Result<()> {
    let limit = max_amplitudes();
    if required > limit {
        return Err(Error::SizeGuard { required, limit });
    }
    Ok(())
}

fn norm_sqr(amps: &[Complex64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    dims: Vec<usize>,
    amps: Vec<Complex64>,
    labels: Vec<String>,
}

impl StateVector {
    /// Builds a normalized state from raw amplitudes.
    ///
    /// The amplitudes are rescaled to unit norm. Subsystems get default labels
    /// `q0`, `q1`, ... which can be replaced with [`StateVector::with_labels`].
    pub fn new(dims: Vec<usize>, amps: Vec<Complex64>) -> Result<Self> {
        for &d in &dims {
            if d < 2 {
                return Err(Error::InvalidDimension(d));
            }
        }
        let required = amplitude_count(&dims);
        check_size(required)?;
        if amps.len() as u128 != required {
            return Err(Error::LengthMismatch {
                expected: required as usize,
                got: amps.len(),
                dims,
            });
        }
        let labels = (0..dims.len()).map(|i| format!("q{i}")).collect();
        let mut state = StateVector { dims, amps, labels };
        state.normalize()?;
        Ok(state)
    }

    /// Real-amplitude convenience constructor.
    pub fn from_real(dims: Vec<usize>, amps: &[f64]) -> Result<Self> {
        Self::new(dims, amps.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    /// Computational basis state `|index⟩` over `dims`.
    pub fn basis_state(dims: Vec<usize>, index: usize) -> Result<Self> {
        let total = amplitude_count(&dims);
        check_size(total)?;
        if index as u128 >= total {
            return Err(Error::IndexOutOfRange {
                index,
                dim: total as usize,
            });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); total as usize];
        amps[index] = Complex64::new(1.0, 0.0);
        Self::new(dims, amps)
    }

    /// The zero-subsystem state, a single unit amplitude.
    pub fn scalar() -> Self {
        StateVector {
            dims: Vec::new(),
            amps: vec![Complex64::new(1.0, 0.0)],
            labels: Vec::new(),
        }
    }

    pub fn with_labels<S: Into<String>>(mut self, labels: Vec<S>) -> Result<Self> {
        if labels.len() != self.dims.len() {
            return Err(Error::LabelMismatch {
                expected: self.dims.len(),
                got: labels.len(),
            });
        }
        self.labels = labels.into_iter().map(Into::into).collect();
        Ok(self)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_subsystems(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amps).sqrt()
    }

    /// Position of the subsystem carrying `label`.
    pub fn position(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn positions(&self, labels: &[&str]) -> Result<Vec<usize>> {
        labels.iter().map(|l| self.position(l)).collect()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.dims != other.dims {
            return Err(Error::DimsMismatch {
                left: self.dims.clone(),
                right: other.dims.clone(),
            });
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `self ⊗ other`; labels are concatenated.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        check_size(amplitude_count(&dims))?;
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for a in &self.amps {
            amps.extend(other.amps.iter().map(|b| a * b));
        }
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().cloned());
        Ok(StateVector { dims, amps, labels })
    }

    fn normalize(&mut self) -> Result<f64> {
        let n2 = norm_sqr(&self.amps);
        if n2 <= 0.0 || !n2.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let inv = 1.0 / n2.sqrt();
        for a in &mut self.amps {
            *a *= inv;
        }
        Ok(n2)
    }

    pub(crate) fn from_parts_unchecked(
        dims: Vec<usize>,
        amps: Vec<Complex64>,
        labels: Vec<String>,
    ) -> Self {
        debug_assert_eq!(amplitude_count(&dims), amps.len() as u128);
        debug_assert_eq!(dims.len(), labels.len());
        StateVector { dims, amps, labels }
    }
}

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl OperatorMatrix {
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::MalformedOperator {
                dim,
                got: entries.len(),
            });
        }
        Ok(OperatorMatrix { dim, entries })
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut entries = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                entries.push(f(i, j));
            }
        }
        OperatorMatrix { dim, entries }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| {
            if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn diagonal(diag: &[Complex64]) -> Self {
        Self::from_fn(diag.len(), |i, j| {
            if i == j {
                diag[i]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self.get(j, i).conj())
    }

    pub fn matmul(&self, other: &OperatorMatrix) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::OperatorMismatch {
                op: other.dim,
                targets: self.dim,
            });
        }
        let n = self.dim;
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.entries[i * n + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other.entries[k * n + j];
                }
            }
        }
        Ok(OperatorMatrix {
            dim: n,
            entries: out,
        })
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &OperatorMatrix) -> Self {
        let (a, b) = (self.dim, other.dim);
        Self::from_fn(a * b, |i, j| {
            self.get(i / b, j / b) * other.get(i % b, j % b)
        })
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        OperatorMatrix {
            dim: self.dim,
            entries: self.entries.iter().map(|e| e * factor).collect(),
        }
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &OperatorMatrix) -> f64 {
        if self.dim != other.dim {
            return f64::INFINITY;
        }
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `max |U†U - I|`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    acc += self.get(k, i).conj() * self.get(k, j);
                }
                if i == j {
                    acc -= 1.0;
                }
                worst = worst.max(acc.norm());
            }
        }
        worst
    }

    pub fn validate_unitary(&self, tol: f64) -> Result<()> {
        let deviation = self.unitarity_defect();
        if deviation < tol {
            Ok(())
        } else {
            Err(Error::NotUnitary { deviation })
        }
    }

    pub fn apply_to_vector(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }
}

/// A validated orthonormal, complete basis of a `dim`-dimensional space.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    dim: usize,
    vectors: Vec<Vec<Complex64>>,
}

impl Basis {
    pub fn new(vectors: Vec<Vec<Complex64>>) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        if vectors.len() != dim || dim == 0 {
            return Err(Error::IncompleteBasis {
                expected: dim,
                got: vectors.len(),
            });
        }
        if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::IncompleteBasis {
                expected: dim,
                got: bad.len(),
            });
        }
        let mut deviation: f64 = 0.0;
        for (i, a) in vectors.iter().enumerate() {
            for (j, b) in vectors.iter().enumerate().skip(i) {
                let g: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                deviation = deviation.max((g - target).norm());
            }
        }
        if deviation > VALIDATION_TOL {
            return Err(Error::NotOrthonormal { deviation });
        }
        Ok(Basis { dim, vectors })
    }

    pub fn from_states(states: &[StateVector]) -> Result<Self> {
        Self::new(states.iter().map(|s| s.amps().to_vec()).collect())
    }

    /// Standard basis `{|0⟩, …, |dim-1⟩}`.
    pub fn computational(dim: usize) -> Self {
        let vectors = (0..dim)
            .map(|i| {
                let mut v = vec![Complex64::new(0.0, 0.0); dim];
                v[i] = Complex64::new(1.0, 0.0);
                v
            })
            .collect();
        Basis { dim, vectors }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vectors(&self) -> &[Vec<Complex64>] {
        &self.vectors
    }

    /// The operator with rows `⟨b_o|`; maps basis vector `o` to `|o⟩`.
    fn rotation(&self) -> OperatorMatrix {
        OperatorMatrix::from_fn(self.dim, |o, t| self.vectors[o][t].conj())
    }
}

/// How a measurement picks its outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutcomeChoice {
    /// Sample by inverse CDF from a uniform draw in `[0, 1)`.
    Draw(f64),
    /// Post-select on the given outcome.
    Forced(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOutcome {
    pub value: usize,
    pub probability: f64,
    /// Renormalized remainder with the measured subsystems removed.
    pub post_state: StateVector,
}

/// Picks an outcome index from a probability table.
///
/// Draws walk the cumulative distribution in index order and never land on a
/// zero-probability outcome.
pub fn select_outcome(probs: &[f64], choice: OutcomeChoice) -> Result<usize> {
    match choice {
        OutcomeChoice::Forced(o) => {
            let p = *probs.get(o).ok_or(Error::OutcomeOutOfRange {
                outcome: o,
                count: probs.len(),
            })?;
            if p < OUTCOME_FLOOR {
                return Err(Error::ImpossibleOutcome {
                    outcome: o,
                    probability: p,
                });
            }
            Ok(o)
        }
        OutcomeChoice::Draw(u) => {
            let total: f64 = probs.iter().sum();
            let target = u * total;
            let mut acc = 0.0;
            let mut last = None;
            for (o, &p) in probs.iter().enumerate() {
                if p < OUTCOME_FLOOR {
                    continue;
                }
                acc += p;
                last = Some(o);
                if target < acc {
                    return Ok(o);
                }
            }
            last.ok_or(Error::ZeroNorm)
        }
    }
}

/// Index bookkeeping for acting on an ordered subset of subsystems.
struct Split {
    /// Flat offset of each composite target value.
    offsets: Vec<usize>,
    /// Flat index of each complement configuration with all target digits zero,
    /// in row-major order of the remaining subsystems.
    bases: Vec<usize>,
    rest: Vec<usize>,
}

impl Split {
    fn new(dims: &[usize], targets: &[usize]) -> Result<Split> {
        let count = dims.len();
        let mut seen = vec![false; count];
        for &t in targets {
            if t >= count {
                return Err(Error::TargetOutOfRange { index: t, count });
            }
            if seen[t] {
                return Err(Error::RepeatedTarget(t));
            }
            seen[t] = true;
        }
        let mut strides = vec![1usize; count];
        for i in (0..count.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }

        let mut offsets = vec![0usize];
        for &t in targets {
            let mut next = Vec::with_capacity(offsets.len() * dims[t]);
            for &o in &offsets {
                for digit in 0..dims[t] {
                    next.push(o + digit * strides[t]);
                }
            }
            offsets = next;
        }

        let rest: Vec<usize> = (0..count).filter(|i| !seen[*i]).collect();
        let mut bases = vec![0usize];
        for &r in &rest {
            let mut next = Vec::with_capacity(bases.len() * dims[r]);
            for &b in &bases {
                for digit in 0..dims[r] {
                    next.push(b + digit * strides[r]);
                }
            }
            bases = next;
        }
        Ok(Split {
            offsets,
            bases,
            rest,
        })
    }
}

fn apply_split(amps: &mut [Complex64], op: &OperatorMatrix, split: &Split) {
    let d = op.dim();
    let block = |base: usize, src: &[Complex64], out: &mut [Complex64]| {
        for (t, slot) in out.iter_mut().enumerate() {
            let row = &op.entries[t * d..(t + 1) * d];
            *slot = row
                .iter()
                .zip(&split.offsets)
                .map(|(m, &off)| m * src[base + off])
                .sum();
        }
    };

    if split.bases.len() >= PAR_BLOCKS {
        let mut out = vec![Complex64::new(0.0, 0.0); split.bases.len() * d];
        {
            let src: &[Complex64] = amps;
            out.par_chunks_mut(d)
                .zip(split.bases.par_iter())
                .for_each(|(chunk, &base)| block(base, src, chunk));
        }
        for (chunk, &base) in out.chunks(d).zip(&split.bases) {
            for (v, &off) in chunk.iter().zip(&split.offsets) {
                amps[base + off] = *v;
            }
        }
    } else {
        let mut buf = vec![Complex64::new(0.0, 0.0); d];
        for &base in &split.bases {
            block(base, amps, &mut buf);
            for (v, &off) in buf.iter().zip(&split.offsets) {
                amps[base + off] = *v;
            }
        }
    }
}

fn target_dim(dims: &[usize], targets: &[usize]) -> usize {
    targets.iter().map(|&t| dims[t]).product()
}

/// Applies `op ⊗ I` with `op` acting on `targets` (first target most significant).
///
/// Norm is preserved when `op` is unitary; no renormalization is done here.
pub fn apply(state: &StateVector, op: &OperatorMatrix, targets: &[usize]) -> Result<StateVector> {
    let mut out = state.clone();
    apply_in_place(&mut out, op, targets)?;
    Ok(out)
}

pub(crate) fn apply_in_place(
    state: &mut StateVector,
    op: &OperatorMatrix,
    targets: &[usize],
) -> Result<()> {
    let split = Split::new(&state.dims, targets)?;
    let tdim = target_dim(&state.dims, targets);
    if op.dim() != tdim {
        return Err(Error::OperatorMismatch {
            op: op.dim(),
            targets: tdim,
        });
    }
    apply_split(&mut state.amps, op, &split);
    Ok(())
}

/// Rotates `targets` into `basis` and returns per-outcome unnormalized
/// remainders together with their probabilities.
fn split_outcomes(
    state: &StateVector,
    targets: &[usize],
    basis: &Basis,
) -> Result<(Vec<f64>, Split, Vec<Complex64>)> {
    let split = Split::new(&state.dims, targets)?;
    let tdim = target_dim(&state.dims, targets);
    if basis.dim() != tdim {
        return Err(Error::OperatorMismatch {
            op: basis.dim(),
            targets: tdim,
        });
    }
    let mut amps = state.amps.clone();
    apply_split(&mut amps, &basis.rotation(), &split);
    let probs = split
        .offsets
        .iter()
        .map(|&off| split.bases.iter().map(|&b| amps[b + off].norm_sqr()).sum())
        .collect();
    Ok((probs, split, amps))
}

fn remainder(split: &Split, rotated: &[Complex64], outcome: usize) -> Vec<Complex64> {
    let off = split.offsets[outcome];
    split.bases.iter().map(|&b| rotated[b + off]).collect()
}

fn finish_post(
    state: &StateVector,
    split: &Split,
    amps: Vec<Complex64>,
    probability: f64,
) -> StateVector {
    let inv = 1.0 / probability.sqrt();
    let dims = split.rest.iter().map(|&i| state.dims[i]).collect();
    let labels = split
        .rest
        .iter()
        .map(|&i| state.labels[i].clone())
        .collect();
    StateVector::from_parts_unchecked(dims, amps.into_iter().map(|a| a * inv).collect(), labels)
}

/// Born probabilities for measuring `targets` in `basis`, without collapsing.
pub fn outcome_probabilities(
    state: &StateVector,
    targets: &[usize],
    basis: &Basis,
) -> Result<Vec<f64>> {
    Ok(split_outcomes(state, targets, basis)?.0)
}

/// Projective measurement of `targets` in `basis`.
///
/// Outcome `o` corresponds to `basis.vectors()[o]`. The measured subsystems are
/// deleted from the returned post-measurement state.
pub fn measure_in_basis(
    state: &StateVector,
    targets: &[usize],
    basis: &Basis,
    choice: OutcomeChoice,
) -> Result<MeasurementOutcome> {
    let (probs, split, rotated) = split_outcomes(state, targets, basis)?;
    let value = select_outcome(&probs, choice)?;
    let probability = probs[value];
    let rest = remainder(&split, &rotated, value);
    Ok(MeasurementOutcome {
        value,
        probability,
        post_state: finish_post(state, &split, rest, probability),
    })
}

/// Every outcome of a projective measurement whose probability clears the
/// outcome floor, in outcome order.
pub fn measure_all_outcomes(
    state: &StateVector,
    targets: &[usize],
    basis: &Basis,
) -> Result<Vec<MeasurementOutcome>> {
    let (probs, split, rotated) = split_outcomes(state, targets, basis)?;
    Ok(probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= OUTCOME_FLOOR)
        .map(|(value, &probability)| MeasurementOutcome {
            value,
            probability,
            post_state: finish_post(
                state,
                &split,
                remainder(&split, &rotated, value),
                probability,
            ),
        })
        .collect())
}

/// Applies a set of Kraus operators on `target` and returns the normalized
/// branch for each one together with its probability `‖K ψ‖²`.
///
/// The target stays in the state. Used by the structured protocol engine,
/// where measuring one physical qudit acts as a non-unitary map on a
/// compressed logical qudit.
pub(crate) fn kraus_branches(
    state: &StateVector,
    target: usize,
    kraus: &[OperatorMatrix],
) -> Result<Vec<(f64, Option<StateVector>)>> {
    kraus
        .iter()
        .map(|k| {
            let mut s = state.clone();
            apply_in_place(&mut s, k, &[target])?;
            let p = norm_sqr(&s.amps);
            if p < OUTCOME_FLOOR {
                Ok((p, None))
            } else {
                let inv = 1.0 / p.sqrt();
                s.amps.iter_mut().for_each(|a| *a *= inv);
                Ok((p, Some(s)))
            }
        })
        .collect()
}

/// `|⟨a|b⟩|²`, insensitive to global phase.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    let overlap = a.inner(b)?.norm_sqr();
    let scale = norm_sqr(&a.amps) * norm_sqr(&b.amps);
    Ok((overlap / scale).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn hadamard() -> OperatorMatrix {
        OperatorMatrix::from_fn(2, |i, j| {
            let s = if i == 1 && j == 1 { -1.0 } else { 1.0 };
            c(s * FRAC_1_SQRT_2, 0.0)
        })
    }

    #[test]
    fn make_state_normalizes() {
        let s = StateVector::from_real(vec![2], &[3.0, 4.0]).unwrap();
        assert!((s.amps()[0].re - 0.6).abs() < 1e-15);
        assert!((s.amps()[1].re - 0.8).abs() < 1e-15);

        let zero = StateVector::from_real(vec![2], &[1.0, 0.0]).unwrap();
        assert_eq!(zero.amps()[0], c(1.0, 0.0));
        assert!((zero.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn make_state_errors() {
        assert_eq!(
            StateVector::from_real(vec![2], &[0.0, 0.0]),
            Err(Error::ZeroNorm)
        );
        assert!(matches!(
            StateVector::from_real(vec![2, 2], &[1.0, 0.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert_eq!(
            StateVector::from_real(vec![1], &[1.0]),
            Err(Error::InvalidDimension(1))
        );
    }

    #[test]
    fn apply_hadamard_and_identity() {
        let zero = StateVector::basis_state(vec![2], 0).unwrap();
        let plus = apply(&zero, &hadamard(), &[0]).unwrap();
        for a in plus.amps() {
            assert!((a - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        }
        let s = StateVector::new(vec![3, 2], (0..6).map(|i| c(i as f64, 1.0)).collect()).unwrap();
        let same = apply(&s, &OperatorMatrix::identity(6), &[0, 1]).unwrap();
        assert_eq!(same, s);
    }

    #[test]
    fn apply_rejects_bad_targets() {
        let s = StateVector::basis_state(vec![2, 3], 0).unwrap();
        assert_eq!(
            apply(&s, &OperatorMatrix::identity(4), &[0, 0]),
            Err(Error::RepeatedTarget(0))
        );
        assert!(matches!(
            apply(&s, &OperatorMatrix::identity(2), &[1]),
            Err(Error::OperatorMismatch { op: 2, targets: 3 })
        ));
        assert!(matches!(
            apply(&s, &OperatorMatrix::identity(2), &[5]),
            Err(Error::TargetOutOfRange { .. })
        ));
    }

    #[test]
    fn apply_on_middle_subsystem_uses_correct_stride() {
        // X on the middle qubit of |000⟩ gives |010⟩ = index 2
        let x = OperatorMatrix::from_fn(2, |i, j| if i != j { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let s = StateVector::basis_state(vec![2, 2, 2], 0).unwrap();
        let out = apply(&s, &x, &[1]).unwrap();
        assert_eq!(out.amps()[2], c(1.0, 0.0));
    }

    #[test]
    fn measure_plus_in_z() {
        let plus = StateVector::from_real(vec![2], &[1.0, 1.0]).unwrap();
        let z = Basis::computational(2);
        let out = measure_in_basis(&plus, &[0], &z, OutcomeChoice::Forced(0)).unwrap();
        assert_eq!(out.value, 0);
        assert!((out.probability - 0.5).abs() < 1e-15);
        assert!(out.post_state.is_empty());
        assert_eq!(out.post_state.len(), 1);

        let drawn = measure_in_basis(&plus, &[0], &z, OutcomeChoice::Draw(0.75)).unwrap();
        assert_eq!(drawn.value, 1);
    }

    #[test]
    fn forced_zero_probability_outcome_rejected() {
        let zero = StateVector::basis_state(vec![2], 0).unwrap();
        let err = measure_in_basis(
            &zero,
            &[0],
            &Basis::computational(2),
            OutcomeChoice::Forced(1),
        );
        assert!(matches!(
            err,
            Err(Error::ImpossibleOutcome { outcome: 1, .. })
        ));
    }

    #[test]
    fn non_orthonormal_basis_rejected() {
        let v = vec![
            vec![c(1.0, 0.0), c(0.0, 0.0)],
            vec![c(1.0, 0.0), c(1.0, 0.0)],
        ];
        assert!(matches!(Basis::new(v), Err(Error::NotOrthonormal { .. })));
        let short = vec![vec![c(1.0, 0.0), c(0.0, 0.0)]];
        assert!(matches!(
            Basis::new(short),
            Err(Error::IncompleteBasis { .. })
        ));
    }

    #[test]
    fn measurement_keeps_labels_of_untouched_subsystems() {
        let s = StateVector::basis_state(vec![2, 3, 2], 5)
            .unwrap()
            .with_labels(vec!["a", "b", "c"])
            .unwrap();
        let out =
            measure_in_basis(&s, &[1], &Basis::computational(3), OutcomeChoice::Draw(0.3)).unwrap();
        assert_eq!(out.value, 2);
        assert_eq!(out.post_state.labels(), &["a".to_string(), "c".to_string()]);
        assert_eq!(out.post_state.dims(), &[2, 2]);
        assert_eq!(out.post_state.amps()[1], c(1.0, 0.0));
    }

    #[test]
    fn fidelity_cases() {
        let zero = StateVector::basis_state(vec![2], 0).unwrap();
        let one = StateVector::basis_state(vec![2], 1).unwrap();
        assert_eq!(fidelity(&zero, &one).unwrap(), 0.0);
        let s = StateVector::new(vec![2], vec![c(0.6, 0.1), c(0.2, -0.7)]).unwrap();
        assert!((fidelity(&s, &s).unwrap() - 1.0).abs() < 1e-15);
        let phase = Complex64::from_polar(1.0, 1.234);
        let rotated =
            StateVector::new(vec![2], s.amps().iter().map(|a| a * phase).collect()).unwrap();
        assert!((fidelity(&s, &rotated).unwrap() - 1.0).abs() < 1e-15);
        let three = StateVector::basis_state(vec![3], 0).unwrap();
        assert!(matches!(
            fidelity(&zero, &three),
            Err(Error::DimsMismatch { .. })
        ));
    }

    #[test]
    fn size_guard_refuses_huge_states() {
        let dims = vec![5; 14];
        assert!(amplitude_count(&dims) > DEFAULT_MAX_AMPLITUDES);
        assert!(matches!(
            StateVector::basis_state(dims, 0),
            Err(Error::SizeGuard { .. })
        ));
    }

    #[test]
    fn kron_matches_sequential_application() {
        let h = hadamard();
        let x = OperatorMatrix::from_fn(2, |i, j| if i != j { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let s = StateVector::new(
            vec![2, 2],
            vec![c(0.1, 0.2), c(0.3, -0.1), c(0.5, 0.0), c(-0.2, 0.4)],
        )
        .unwrap();
        let a = apply(&apply(&s, &h, &[0]).unwrap(), &x, &[1]).unwrap();
        let b = apply(&s, &h.kron(&x), &[0, 1]).unwrap();
        for (u, v) in a.amps().iter().zip(b.amps()) {
            assert!((u - v).norm() < 1e-14);
        }
    }

    #[test]
    fn parallel_apply_path_matches_serial() {
        // 2^14 amplitudes with a 2-dim target gives 8192 blocks, above PAR_BLOCKS
        let dims = vec![2; 14];
        let amps: Vec<Complex64> = (0..1 << 14)
            .map(|i| c((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let s = StateVector::new(dims, amps).unwrap();
        let h = hadamard();
        let par = apply(&s, &h, &[6]).unwrap();
        // serial reference: pairs differing in bit (13 - 6)
        let stride = 1 << 7;
        for i in 0..s.len() {
            let bit = (i / stride) % 2;
            let (i0, i1) = if bit == 0 {
                (i, i + stride)
            } else {
                (i - stride, i)
            };
            let expect = if bit == 0 {
                (s.amps()[i0] + s.amps()[i1]) * FRAC_1_SQRT_2
            } else {
                (s.amps()[i0] - s.amps()[i1]) * FRAC_1_SQRT_2
            };
            assert!((par.amps()[i] - expect).norm() < 1e-14);
        }
    }
}
