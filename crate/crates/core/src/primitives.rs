//! Named states, bases and operators of the controlled-teleportation scheme.
//!
//! Everything here is a pure constructor. Phases use `ω = e^{2πi/d}`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::state::{Basis, OperatorMatrix, StateVector};

/// Tolerance on the channel normalization `(1/d)·Σ|c_j|² = 1`.
pub const CHANNEL_NORM_TOL: f64 = 1e-10;

/// Coefficients with modulus below this are treated as zero.
pub const ZERO_COEFF_FLOOR: f64 = 1e-12;

/// `ω^k` for `ω = e^{2πi/d}`, with `k` reduced mod `d` first to keep the
/// argument small.
#[inline]
pub fn root_of_unity(d: usize, k: usize) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * (k % d) as f64 / d as f64)
}

fn check_index(index: usize, dim: usize) -> Result<()> {
    if index >= dim {
        Err(Error::IndexOutOfRange { index, dim })
    } else {
        Ok(())
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d < 2 {
        Err(Error::InvalidDimension(d))
    } else {
        Ok(())
    }
}

/// Pure `(n+2)`-party channel with `m` copies.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    d: usize,
    n: usize,
    m: usize,
    coeffs: Vec<Complex64>,
}

impl ChannelSpec {
    pub fn new(d: usize, n: usize, m: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        check_dim(d)?;
        if m == 0 {
            return Err(Error::InvalidChannel(
                "copy count m must be at least 1".into(),
            ));
        }
        if coeffs.len() != d {
            return Err(Error::InvalidChannel(format!(
                "expected {d} coefficients, got {}",
                coeffs.len()
            )));
        }
        if let Some(j) = coeffs.iter().position(|c| c.norm() < ZERO_COEFF_FLOOR) {
            return Err(Error::InvalidChannel(format!(
                "coefficient c_{j} is zero; every coefficient must be nonzero"
            )));
        }
        let mean = channel_weight_mean(&coeffs);
        if (mean - 1.0).abs() > CHANNEL_NORM_TOL {
            return Err(Error::InvalidChannel(format!(
                "(1/d)·Σ|c_j|² = {mean} but must equal 1"
            )));
        }
        Ok(ChannelSpec { d, n, m, coeffs })
    }

    pub fn from_real(d: usize, n: usize, m: usize, coeffs: &[f64]) -> Result<Self> {
        Self::new(
            d,
            n,
            m,
            coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect(),
        )
    }

    /// Maximally entangled channel, `c_j = 1` for every `j`.
    pub fn uniform(d: usize, n: usize, m: usize) -> Result<Self> {
        Self::new(d, n, m, vec![Complex64::new(1.0, 0.0); d])
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Same channel with a different copy count.
    pub fn with_copies(&self, m: usize) -> Result<Self> {
        Self::new(self.d, self.n, m, self.coeffs.clone())
    }

    /// Index of the smallest `|c_j|²`, smallest index on ties.
    pub fn k_min(&self) -> usize {
        let mut best = 0;
        for (j, c) in self.coeffs.iter().enumerate() {
            if c.norm_sqr() < self.coeffs[best].norm_sqr() {
                best = j;
            }
        }
        best
    }

    /// `min_j |c_j|²`.
    pub fn min_weight(&self) -> f64 {
        self.coeffs[self.k_min()].norm_sqr()
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.norm()).collect()
    }
}

/// `(1/d)·Σ|c_j|²`.
pub fn channel_weight_mean(coeffs: &[Complex64]) -> f64 {
    coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() / coeffs.len() as f64
}

/// Generalized Bell state `|ψ_rs⟩ = (1/√d) Σ_j ω^{jr} |j⟩|j⊕s⟩`.
pub fn gbs_vector(d: usize, r: usize, s: usize) -> Result<StateVector> {
    check_dim(d)?;
    check_index(r, d)?;
    check_index(s, d)?;
    let norm = 1.0 / (d as f64).sqrt();
    let mut amps = vec![Complex64::new(0.0, 0.0); d * d];
    for j in 0..d {
        amps[j * d + (j + s) % d] = root_of_unity(d, j * r) * norm;
    }
    StateVector::new(vec![d, d], amps)
}

/// All `d²` generalized Bell states, ordered lexicographically in `(r, s)`.
pub fn gbs_basis(d: usize) -> Result<Vec<StateVector>> {
    let mut out = Vec::with_capacity(d * d);
    for r in 0..d {
        for s in 0..d {
            out.push(gbs_vector(d, r, s)?);
        }
    }
    Ok(out)
}

/// Generalized Bell measurement basis; outcome index is `r·d + s`.
pub fn gbs_measurement(d: usize) -> Result<Basis> {
    Basis::from_states(&gbs_basis(d)?)
}

/// `U_uv = Σ_j ω^{uj} |j⊕v⟩⟨j|`.
pub fn u_uv(d: usize, u: usize, v: usize) -> Result<OperatorMatrix> {
    check_dim(d)?;
    check_index(u, d)?;
    check_index(v, d)?;
    Ok(shift_phase(d, u, v))
}

fn shift_phase(d: usize, u: usize, v: usize) -> OperatorMatrix {
    OperatorMatrix::from_fn(d, |row, col| {
        if row == (col + v) % d {
            root_of_unity(d, u * col)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// `|r⟩_x = (1/√d) Σ_j ω^{jr} |j⟩`.
pub fn x_basis_vector(d: usize, r: usize) -> Result<StateVector> {
    check_dim(d)?;
    check_index(r, d)?;
    let norm = 1.0 / (d as f64).sqrt();
    StateVector::new(
        vec![d],
        (0..d).map(|j| root_of_unity(d, j * r) * norm).collect(),
    )
}

/// The `X_d` measurement basis.
pub fn x_measurement(d: usize) -> Result<Basis> {
    let states = (0..d)
        .map(|r| x_basis_vector(d, r))
        .collect::<Result<Vec<_>>>()?;
    Basis::from_states(&states)
}

/// Quantum Fourier matrix with entries `ω^{jk}/√d`.
pub fn hadamard_d(d: usize) -> Result<OperatorMatrix> {
    check_dim(d)?;
    let norm = 1.0 / (d as f64).sqrt();
    Ok(OperatorMatrix::from_fn(d, |j, k| {
        root_of_unity(d, j * k) * norm
    }))
}

/// One copy of the channel, `(1/√d) Σ_j c_j |j⟩^{⊗(n+2)}`, over particles
/// labelled `a0 … a{n+1}`.
pub fn channel_state(spec: &ChannelSpec) -> Result<StateVector> {
    channel_copy(spec, None)
}

/// Channel copy with labels `a{k}_{copy}`.
pub(crate) fn channel_copy(spec: &ChannelSpec, copy: Option<usize>) -> Result<StateVector> {
    let d = spec.d();
    let parties = spec.n() + 2;
    let dims = vec![d; parties];
    let total = crate::state::amplitude_count(&dims);
    crate::state::check_size(total)?;
    let mut amps = vec![Complex64::new(0.0, 0.0); total as usize];
    // |j j … j⟩ sits at j·(d^{parties} - 1)/(d - 1)
    let repunit: usize = (0..parties).map(|k| d.pow(k as u32)).sum();
    let norm = 1.0 / (d as f64).sqrt();
    for (j, c) in spec.coeffs().iter().enumerate() {
        amps[j * repunit] = c * norm;
    }
    let labels: Vec<String> = (0..parties)
        .map(|k| match copy {
            Some(l) => format!("a{k}_{l}"),
            None => format!("a{k}"),
        })
        .collect();
    StateVector::new(dims, amps)?.with_labels(labels)
}

fn filter_matrix(block: usize, gamma: impl Fn(usize) -> f64) -> Result<OperatorMatrix> {
    let mut entries = vec![Complex64::new(0.0, 0.0); 4 * block * block];
    let dim = 2 * block;
    for idx in 0..block {
        let g = gamma(idx);
        if !(g.is_finite() && g <= 1.0 + 1e-12) {
            return Err(Error::InvalidChannel(format!(
                "extraction ratio {g} exceeds 1 at basis index {idx}"
            )));
        }
        let g = g.min(1.0);
        let g_perp = (1.0 - g * g).max(0.0).sqrt();
        entries[idx * dim + idx] = Complex64::new(g, 0.0);
        entries[idx * dim + block + idx] = Complex64::new(-g_perp, 0.0);
        entries[(block + idx) * dim + idx] = Complex64::new(g_perp, 0.0);
        entries[(block + idx) * dim + block + idx] = Complex64::new(g, 0.0);
    }
    OperatorMatrix::new(dim, entries)
}

/// Single-copy extraction unitary on receiver qudit ⊗ aux qubit.
///
/// Each `(|j⟩|0⟩_aux, |j⟩|1⟩_aux)` pair is rotated by
/// `[[Γ_j, -Γ⁺_j], [Γ⁺_j, Γ_j]]` with `Γ_j = |c_k|/|c_j|` and
/// `Γ⁺_j = √(1 - Γ_j²)`. Only the aux-`|0⟩` column ever acts on a state, and it
/// sends `|j⟩|0⟩` to `Γ_j|j⟩|0⟩ + Γ⁺_j|j⟩|1⟩`; the rotation form makes the
/// whole matrix the identity for a maximally entangled channel.
///
/// Basis order is `|0⟩|0⟩_aux … |d-1⟩|0⟩_aux, |0⟩|1⟩_aux … |d-1⟩|1⟩_aux`, i.e. the
/// aux qubit is the most significant digit. Built from coefficient moduli;
/// phases are compensated separately by [`phase_compensation`].
pub fn u_max(spec: &ChannelSpec) -> Result<OperatorMatrix> {
    let moduli = spec.moduli();
    let ck = moduli[spec.k_min()];
    filter_matrix(spec.d(), |j| ck / moduli[j])
}

/// Collective extraction unitary on `m` receiver qudits ⊗ aux qubit, of size
/// `2d^m`. Diagonal block entry for multi-index `(f, g, …, h)` is
/// `|c_k|^m / (|c_f||c_g|…|c_h|)`.
pub fn u_max_m(spec: &ChannelSpec) -> Result<OperatorMatrix> {
    let d = spec.d();
    let m = spec.m();
    let moduli = spec.moduli();
    let ck_m = moduli[spec.k_min()].powi(m as i32);
    let block = d.checked_pow(m as u32).ok_or(Error::SizeGuard {
        required: u128::MAX,
        limit: crate::state::max_amplitudes(),
    })?;
    crate::state::check_size(4 * (block as u128) * (block as u128))?;
    filter_matrix(block, |idx| {
        let mut rest = idx;
        let mut denom = 1.0;
        for _ in 0..m {
            denom *= moduli[rest % d];
            rest /= d;
        }
        ck_m / denom
    })
}

/// Receiver correction `U_{ρ,σ} = Σ_j ω^{ρj} |j⊕σ⟩⟨j|`, arguments taken mod `d`.
///
/// Same family as [`u_uv`]; after a successful extraction with GBS outcome
/// `(r, s)` and controller phase `r''`, the receiver applies
/// `correction_unitary(d, r + r'', d - s)`.
pub fn correction_unitary(d: usize, rho: usize, sigma: usize) -> OperatorMatrix {
    shift_phase(d, rho % d, sigma % d)
}

/// Dense multi-copy correction
/// `Σ_{j'} ω^{Σ_l j'_l ρ_l} |j'_1 … j'_m⟩⟨j'_1⊕s_1 … j'_m⊕s_m|`.
///
/// It equals `⊗_l correction_unitary(d, ρ_l, d - s_l)` times the global phase
/// `ω^{-Σ_l s_l ρ_l}`; see [`multi_copy_correction_phase`].
pub fn multi_copy_correction(d: usize, rho: &[usize], shifts: &[usize]) -> Result<OperatorMatrix> {
    if rho.len() != shifts.len() {
        return Err(Error::InvalidOutcome(format!(
            "{} phase indices but {} shifts",
            rho.len(),
            shifts.len()
        )));
    }
    let m = rho.len();
    let size = d.pow(m as u32);
    crate::state::check_size((size as u128) * (size as u128))?;
    let digits = |mut idx: usize| {
        let mut out = vec![0usize; m];
        for slot in out.iter_mut().rev() {
            *slot = idx % d;
            idx /= d;
        }
        out
    };
    let mut entries = vec![Complex64::new(0.0, 0.0); size * size];
    for row in 0..size {
        let jp = digits(row);
        let mut col = 0;
        let mut phase = 0usize;
        for l in 0..m {
            col = col * d + (jp[l] + shifts[l]) % d;
            phase += jp[l] * (rho[l] % d);
        }
        entries[row * size + col] = root_of_unity(d, phase);
    }
    OperatorMatrix::new(size, entries)
}

/// Global phase relating [`multi_copy_correction`] to the tensor product of
/// per-copy corrections: `ω^{-Σ_l s_l ρ_l}`.
pub fn multi_copy_correction_phase(d: usize, rho: &[usize], shifts: &[usize]) -> Complex64 {
    let total: usize = rho
        .iter()
        .zip(shifts)
        .map(|(&r, &s)| (r % d) * (s % d))
        .sum();
    root_of_unity(d, (d - total % d) % d)
}

/// Diagonal `diag(e^{-iθ_j})` removing the coefficient phases `c_j = |c_j|e^{iθ_j}`
/// left on a receiver qudit after extraction.
pub fn phase_compensation(spec: &ChannelSpec) -> OperatorMatrix {
    let diag: Vec<Complex64> = spec
        .coeffs()
        .iter()
        .map(|c| Complex64::from_polar(1.0, -c.arg()))
        .collect();
    OperatorMatrix::diagonal(&diag)
}
