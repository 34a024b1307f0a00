//! Brute-force reference: explicit state-vector simulation of the emission
//! circuit on emitter ⊗ photons ⊗ bath, followed by projection of the photon
//! register onto Pauli-`Z` decorated cluster states.
//!
//! The state is stored as a matrix whose rows run over the joint
//! emitter–bath basis and whose columns run over photon configurations
//! (bit `i - 1` of the column index is photon `i`).

use ndarray::{s, Array2};
use num_complex::Complex64 as C64;

use crate::emission::{clamp_probability, ErrorDistribution};
use crate::error::{Error, Result};
use crate::hamiltonian::EnvState;
use crate::spin::{self, OperatorMatrix, Space};

/// Default cap on emitter + photons + bath qubits.
pub const DEFAULT_MAX_QUBITS: usize = 14;

/// Emitter ⊗ photons ⊗ bath state after a sequence of emission steps, one
/// block per purification column of the initial bath state.
#[derive(Clone, Debug)]
pub struct CircuitState {
    n_sites: usize,
    n_photons: usize,
    blocks: Vec<Array2<C64>>,
}

/// Ideal emission: `U_y = exp(-i Y π/4)` on the emitter before each CNOT.
pub fn ideal_rotation() -> [[C64; 2]; 2] {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    [[C64::from(r), C64::from(-r)], [C64::from(r), C64::from(r)]]
}

/// CNOT from the emitter onto photon `i`: swap photon-`i` columns on the
/// emitter-down rows.
fn cnot(state: &mut Array2<C64>, down_start: usize, photon: usize) {
    let mask = 1usize << (photon - 1);
    for p in 0..state.ncols() {
        if p & mask == 0 {
            let q = p | mask;
            for r in down_start..state.nrows() {
                state.swap((r, p), (r, q));
            }
        }
    }
}

/// The ideal `n`-photon cluster state with the emitter, as a `2 × 2^n` array
/// indexed by (emitter, photon configuration).
pub fn ideal_cluster(n: usize) -> Array2<C64> {
    let u = ideal_rotation();
    let mut c = Array2::zeros((2, 1 << n));
    c[(0, 0)] = spin::ONE;
    for i in 1..=n {
        let mut next = Array2::zeros(c.raw_dim());
        for d in 0..2 {
            for e in 0..2 {
                let w = u[d][e];
                next.row_mut(d).zip_mut_with(&c.row(e), |o, x| *o += w * x);
            }
        }
        cnot(&mut next, 1, i);
        c = next;
    }
    c
}

/// `X_D^{dot_flip} Z^α |C_n>` as a `2 × 2^n` array.
pub fn decorated_cluster(n: usize, alpha: usize, dot_flip: bool) -> Array2<C64> {
    let c = ideal_cluster(n);
    let mut v = c.clone();
    for ((d, p), z) in v.indexed_iter_mut() {
        let src = if dot_flip { 1 - d } else { d };
        let sign = if (alpha & p).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
        *z = c[(src, p)] * sign;
    }
    v
}

impl CircuitState {
    /// Runs one emission step per entry of `steps`: the joint unitary acts,
    /// then the emitter is CNOT-ed onto the next photon.
    pub fn run(steps: &[OperatorMatrix], env: &EnvState) -> Result<Self> {
        Self::run_with_limit(steps, env, DEFAULT_MAX_QUBITS)
    }

    pub fn run_with_limit(steps: &[OperatorMatrix], env: &EnvState, max_qubits: usize) -> Result<Self> {
        let n = steps.len();
        if n == 0 {
            return Err(Error::InvalidParameter("at least one emission step is required".into()));
        }
        let n_sites = env.n_sites;
        let qubits = n + 1 + n_sites;
        if qubits > max_qubits {
            return Err(Error::TooLarge { what: "oracle qubits", value: qubits, limit: max_qubits });
        }
        for u in steps {
            u.expect_space(Space::Joint)?;
            if u.n_sites() != n_sites {
                return Err(Error::DimensionMismatch { expected: n_sites, found: u.n_sites() });
            }
        }
        env.validate()?;
        let de = 1usize << n_sites;
        let e0 = env.purification();
        let blocks = e0
            .columns()
            .into_iter()
            .map(|col| {
                let mut psi = Array2::zeros((2 * de, 1 << n));
                psi.slice_mut(s![0..de, 0]).assign(&col);
                for (i, u) in steps.iter().enumerate() {
                    psi = u.data().dot(&psi);
                    cnot(&mut psi, de, i + 1);
                }
                psi
            })
            .collect();
        Ok(Self { n_sites, n_photons: n, blocks })
    }

    pub fn n_photons(&self) -> usize {
        self.n_photons
    }

    /// `Σ_e |<φ| ⊗ <e| Ψ>|²` for an emitter⊗photon vector `φ` (`2 × 2^n`).
    pub fn overlap_probability(&self, phi: &Array2<C64>) -> f64 {
        let de = 1usize << self.n_sites;
        let mut total = 0.0;
        for psi in &self.blocks {
            for e in 0..de {
                let mut amp = spin::ZERO;
                for d in 0..2 {
                    let row = psi.row(d * de + e);
                    for (x, y) in phi.row(d).iter().zip(row.iter()) {
                        amp += x.conj() * y;
                    }
                }
                total += amp.norm_sqr();
            }
        }
        total
    }

    /// `(P(α), P_dot(α))` for all patterns: weights on `Z^α|C_n>` and on the
    /// emitter-flipped states `X_D Z^α|C_n>`.
    pub fn pattern_probabilities(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.n_photons;
        let mut probs = Vec::with_capacity(1 << n);
        let mut dot = Vec::with_capacity(1 << n);
        for a in 0..1usize << n {
            probs.push(clamp_probability(a, self.overlap_probability(&decorated_cluster(n, a, false)))?);
            dot.push(clamp_probability(a, self.overlap_probability(&decorated_cluster(n, a, true)))?);
        }
        Ok((probs, dot))
    }

    /// Weight on `Z_D^{β} Z^α |C_n>`, indexed by `α + 2^n β`.
    pub fn dot_z_pattern_probabilities(&self) -> Vec<f64> {
        let n = self.n_photons;
        (0..2usize << n)
            .map(|ab| {
                let (a, b) = (ab & ((1 << n) - 1), ab >> n);
                let mut v = decorated_cluster(n, a, false);
                if b == 1 {
                    v.row_mut(1).mapv_inplace(|z| -z);
                }
                self.overlap_probability(&v)
            })
            .collect()
    }
}

/// Reference distribution for `n` identical steps `U`.
pub fn brute_force_oracle(u: &OperatorMatrix, env: &EnvState, n: usize) -> Result<ErrorDistribution> {
    brute_force_oracle_with_limit(u, env, n, DEFAULT_MAX_QUBITS)
}

pub fn brute_force_oracle_with_limit(
    u: &OperatorMatrix,
    env: &EnvState,
    n: usize,
    max_qubits: usize,
) -> Result<ErrorDistribution> {
    let steps = vec![u.clone(); n];
    let state = CircuitState::run_with_limit(&steps, env, max_qubits)?;
    let (probs, dot_probs) = state.pattern_probabilities()?;
    Ok(ErrorDistribution { n, probs, dot_probs, polarization: None })
}

/// Ideal step unitaries with a single emitter Pauli `error` applied just
/// before the rotation of step `l`.
pub fn ideal_steps_with_error(n: usize, n_sites: usize, l: usize, error: [[C64; 2]; 2]) -> Result<Vec<OperatorMatrix>> {
    if l == 0 || l > n {
        return Err(Error::InvalidParameter(format!("error step {l} outside 1..={n}")));
    }
    let id = OperatorMatrix::identity(Space::Env, n_sites);
    let rot = ideal_rotation();
    let ideal = OperatorMatrix::joint(rot, &id)?;
    let mut with_error = [[spin::ZERO; 2]; 2];
    for (r, row) in with_error.iter_mut().enumerate() {
        for (c, z) in row.iter_mut().enumerate() {
            *z = rot[r][0] * error[0][c] + rot[r][1] * error[1][c];
        }
    }
    let faulty = OperatorMatrix::joint(with_error, &id)?;
    Ok((1..=n).map(|i| if i == l { faulty.clone() } else { ideal.clone() }).collect())
}
