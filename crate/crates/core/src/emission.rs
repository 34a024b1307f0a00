//! Error-pattern probabilities for the sequential emission circuit.
//!
//! Each emission step applies a joint emitter–bath unitary `U` followed by an
//! instantaneous CNOT onto a fresh photon. Projecting the photons onto the
//! ideal cluster state with Pauli-`Z` errors `α` leaves the bath operator
//!
//! ```text
//! O(α) = √2 <+|_D W(α) |0>_D,   W(α) = (Z^{α_n} Δ) ⋯ (Z^{α_1} Δ),
//! Δ = (U − 2 |0><0|_D U |1><1|_D) / √2,
//! ```
//!
//! and `P(α) = Tr(O(α)^dag O(α) ρ_E)`. All `2^n` patterns are produced from a
//! binary prefix tree: both children of a node share the product `Δ·S`, and
//! the `α_i = 1` child only flips the sign of the emitter-down rows.

use std::collections::VecDeque;

use ndarray::{s, Array2};
use num_complex::Complex64 as C64;
use rayon::join;

use crate::error::{Error, Result};
use crate::hamiltonian::EnvState;
use crate::spin::{self, OperatorMatrix, Space};

/// Default cap on photon count for the engine.
pub const DEFAULT_MAX_PHOTONS: usize = 12;

/// Probability threshold under which a conditional quantity is undefined.
pub const CONDITIONAL_FLOOR: f64 = 1e-14;

/// Levels of the prefix tree that are split across threads.
const PARALLEL_DEPTH: usize = 4;

/// Pauli-`Z` error pattern on `n` photons. Bit `i - 1` of `bits` is `α_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ErrorPattern {
    bits: usize,
    n: usize,
}

impl ErrorPattern {
    pub fn new(bits: usize, n: usize) -> Result<Self> {
        if n == 0 || n >= usize::BITS as usize {
            return Err(Error::InvalidParameter(format!("photon count {n} out of range")));
        }
        if bits >> n != 0 {
            return Err(Error::InvalidParameter(format!("pattern {bits} has bits beyond n = {n}")));
        }
        Ok(Self { bits, n })
    }

    pub fn zero(n: usize) -> Self {
        Self { bits: 0, n }
    }

    /// Parses `α_n … α_1`, most significant photon first.
    pub fn parse(s: &str) -> Result<Self> {
        let n = s.len();
        let mut bits = 0usize;
        for (pos, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => bits |= 1 << (n - 1 - pos),
                other => return Err(Error::InvalidParameter(format!("unexpected {other:?} in error pattern"))),
            }
        }
        Self::new(bits, n)
    }

    /// Canonical integer `Σ α_i 2^{i-1}`.
    pub fn index(self) -> usize {
        self.bits
    }

    pub fn len(self) -> usize {
        self.n
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    /// `α_i` for a 1-based photon index.
    pub fn bit(self, i: usize) -> bool {
        (self.bits >> (i - 1)) & 1 == 1
    }

    pub fn weight(self) -> u32 {
        self.bits.count_ones()
    }

    pub fn all(n: usize) -> impl Iterator<Item = ErrorPattern> {
        (0..1usize << n).map(move |bits| ErrorPattern { bits, n })
    }
}

impl std::fmt::Display for ErrorPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in (1..=self.n).rev() {
            f.write_str(if self.bit(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Probabilities of all `2^n` photonic error patterns.
#[derive(Clone, Debug)]
pub struct ErrorDistribution {
    pub n: usize,
    /// `P(α)` indexed by the canonical pattern integer.
    pub probs: Vec<f64>,
    /// Weight on the emitter-flipped states `X_D Z^α |C_n>`, the part of the
    /// emitter⊗photon space not spanned by the photonic `Z` patterns. The
    /// emission calculus keeps the emitter locked to the last photon, so the
    /// engine reports zeros here; the brute-force oracle measures it.
    pub dot_probs: Vec<f64>,
    /// `<Σ_k I_k^y>` of the bath conditioned on each pattern, when computed.
    pub polarization: Option<Vec<f64>>,
}

impl ErrorDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.dot_probs.iter().sum::<f64>()
    }

    /// `|Σ_α (P + P_dot) − 1|`.
    pub fn normalization_residual(&self) -> f64 {
        (self.total() - 1.0).abs()
    }

    pub fn prob(&self, alpha: ErrorPattern) -> f64 {
        self.probs[alpha.index()]
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .chain(self.dot_probs.iter().zip(&other.dot_probs))
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Values in `[-1e-12, 0)` are rounding and become zero; anything more
/// negative is an error. The upper side is clamped to one.
pub(crate) fn clamp_probability(pattern: usize, p: f64) -> Result<f64> {
    if p < -1e-12 || !p.is_finite() {
        return Err(Error::NegativeProbability { pattern, value: p });
    }
    Ok(p.clamp(0.0, 1.0))
}

/// `U = exp(-i π/(2 Ω_eff) H)`.
pub fn step_unitary(h_joint: &OperatorMatrix, omega_eff: f64) -> Result<OperatorMatrix> {
    h_joint.expect_space(Space::Joint)?;
    if !(omega_eff.is_finite() && omega_eff != 0.0) {
        return Err(Error::InvalidParameter(format!("Ω_eff must be finite and nonzero, got {omega_eff}")));
    }
    spin::evolve_unitary(h_joint, std::f64::consts::PI / (2.0 * omega_eff))
}

/// `Δ = (U − 2 |0><0|_D U |1><1|_D) / √2`: `U` with the sign of its
/// emitter `0 ← 1` block flipped, over `√2`.
pub fn delta_op(u: &OperatorMatrix) -> Result<OperatorMatrix> {
    u.expect_space(Space::Joint)?;
    let de = 1usize << u.n_sites();
    let mut delta = u.scale(C64::from(std::f64::consts::FRAC_1_SQRT_2));
    delta.data_mut().slice_mut(s![0..de, de..2 * de]).mapv_inplace(|z| -z);
    Ok(delta)
}

fn apply_dot_z(w: &mut Array2<C64>, de: usize) {
    w.slice_mut(s![de.., ..]).mapv_inplace(|z| -z);
}

/// `(O_+, O_-)` with `O_± = √2 <±|_D W(α) |0>_D`, built by explicit products
/// on the full joint space. `O_-(α)` equals `±O_+(α')` where `α'` flips the
/// last photon, since a final emitter `Z` acts like `Z_n`.
pub fn error_operator(alpha: ErrorPattern, delta: &OperatorMatrix) -> Result<(OperatorMatrix, OperatorMatrix)> {
    delta.expect_space(Space::Joint)?;
    let n_sites = delta.n_sites();
    let de = 1usize << n_sites;
    // W restricted to emitter-up input columns.
    let mut w = delta.data().slice(s![.., 0..de]).to_owned();
    if alpha.bit(1) {
        apply_dot_z(&mut w, de);
    }
    for i in 2..=alpha.len() {
        w = delta.data().dot(&w);
        if alpha.bit(i) {
            apply_dot_z(&mut w, de);
        }
    }
    let up = w.slice(s![0..de, ..]);
    let down = w.slice(s![de.., ..]);
    let plus = &up + &down;
    let minus = &up - &down;
    Ok((
        OperatorMatrix::from_array(Space::Env, n_sites, plus)?,
        OperatorMatrix::from_array(Space::Env, n_sites, minus)?,
    ))
}

/// Sparse-support propagator: `Δ` restricted to the joint indices reachable
/// from the initial state, acting on the purification columns of `ρ_E`.
struct Propagator {
    delta: Array2<C64>,
    start: Array2<C64>,
    /// Rows of the reduced space holding the emitter-down component.
    down_rows: usize,
    /// For each reduced up-row / down-row, the environment index.
    up_env: Vec<usize>,
    down_env: Vec<usize>,
    /// `Σ_k I_k^y` on the environment basis.
    total_y: Vec<f64>,
    n_env: usize,
}

struct Leaf {
    prob: f64,
    polarization: f64,
}

impl Propagator {
    fn new(delta: &OperatorMatrix, env: &EnvState) -> Result<Self> {
        let n_sites = delta.n_sites();
        if env.n_sites != n_sites {
            return Err(Error::DimensionMismatch { expected: n_sites, found: env.n_sites });
        }
        env.validate()?;
        let de = 1usize << n_sites;
        let dj = 2 * de;
        let e0 = env.purification();

        // Breadth-first closure of the initial support under Δ's sparsity graph.
        let d = delta.data();
        let mut reach = vec![false; dj];
        let mut queue = VecDeque::new();
        for (e, row) in e0.rows().into_iter().enumerate() {
            if row.iter().any(|z| z.norm_sqr() > 0.0) {
                reach[e] = true;
                queue.push_back(e);
            }
        }
        while let Some(c) = queue.pop_front() {
            for r in 0..dj {
                if !reach[r] && d[(r, c)] != spin::ZERO {
                    reach[r] = true;
                    queue.push_back(r);
                }
            }
        }
        let rows: Vec<usize> = (0..dj).filter(|&i| reach[i]).collect();
        let down_rows = rows.iter().filter(|&&i| i >= de).count();
        let up_env: Vec<usize> = rows.iter().copied().filter(|&i| i < de).collect();
        let down_env: Vec<usize> = rows.iter().filter(|&&i| i >= de).map(|&i| i - de).collect();

        let reduced = delta.restrict(&rows);
        let mut start = Array2::zeros((rows.len(), e0.ncols()));
        for (r, &i) in rows.iter().enumerate() {
            if i < de {
                start.row_mut(r).assign(&e0.row(i));
            }
        }
        Ok(Self {
            delta: reduced,
            start,
            down_rows,
            up_env,
            down_env,
            total_y: spin::total_y_diagonal(n_sites),
            n_env: de,
        })
    }

    fn flip_down(&self, s: &mut Array2<C64>) {
        let up = s.nrows() - self.down_rows;
        s.slice_mut(s![up.., ..]).mapv_inplace(|z| -z);
    }

    /// `√2 <+|_D` applied to a reduced state block, as rows over the
    /// environment basis.
    fn project_plus(&self, s: &Array2<C64>) -> Array2<C64> {
        let mut out = Array2::zeros((self.n_env, s.ncols()));
        let up = s.nrows() - self.down_rows;
        for (r, &e) in self.up_env.iter().enumerate() {
            out.row_mut(e).zip_mut_with(&s.row(r), |o, x| *o += x);
        }
        for (r, &e) in self.down_env.iter().enumerate() {
            out.row_mut(e).zip_mut_with(&s.row(up + r), |o, x| *o += x);
        }
        out
    }

    fn leaf(&self, s: &Array2<C64>) -> Leaf {
        let amp = self.project_plus(s);
        let mut prob = 0.0;
        let mut pol = 0.0;
        for (e, row) in amp.rows().into_iter().enumerate() {
            let w: f64 = row.iter().map(|z| z.norm_sqr()).sum();
            prob += w;
            pol += w * self.total_y[e];
        }
        Leaf { prob, polarization: if prob > CONDITIONAL_FLOOR { pol / prob } else { f64::NAN } }
    }

    /// One pattern by direct products, in the same operation order as the
    /// tree walk.
    fn single(&self, alpha: ErrorPattern) -> Leaf {
        let mut s = self.start.clone();
        for i in 1..=alpha.len() {
            s = self.delta.dot(&s);
            if alpha.bit(i) {
                self.flip_down(&mut s);
            }
        }
        self.leaf(&s)
    }

    fn walk(&self, s: &Array2<C64>, depth: usize, n: usize, bits: usize) -> Vec<(usize, Leaf)> {
        if depth == n {
            return vec![(bits, self.leaf(s))];
        }
        let next = self.delta.dot(s);
        let mut flipped = next.clone();
        self.flip_down(&mut flipped);
        let (mut a, b) = if depth < PARALLEL_DEPTH {
            join(
                || self.walk(&next, depth + 1, n, bits),
                || self.walk(&flipped, depth + 1, n, bits | 1 << depth),
            )
        } else {
            (self.walk(&next, depth + 1, n, bits), self.walk(&flipped, depth + 1, n, bits | 1 << depth))
        };
        a.extend(b);
        a
    }
}

fn check_photons(n: usize, max_photons: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("at least one photon is required".into()));
    }
    if n > max_photons {
        return Err(Error::TooLarge { what: "photons", value: n, limit: max_photons });
    }
    Ok(())
}

/// All `2^n` pattern probabilities together with the conditional bath
/// polarization, using the prefix tree.
pub fn distribution(u: &OperatorMatrix, env: &EnvState, n: usize) -> Result<ErrorDistribution> {
    distribution_with_limit(u, env, n, DEFAULT_MAX_PHOTONS)
}

pub fn distribution_with_limit(
    u: &OperatorMatrix,
    env: &EnvState,
    n: usize,
    max_photons: usize,
) -> Result<ErrorDistribution> {
    check_photons(n, max_photons)?;
    let delta = delta_op(u)?;
    distribution_from_delta(&delta, env, n)
}

pub fn distribution_from_delta(delta: &OperatorMatrix, env: &EnvState, n: usize) -> Result<ErrorDistribution> {
    let prop = Propagator::new(delta, env)?;
    let leaves = prop.walk(&prop.start, 0, n, 0);
    collect(n, leaves)
}

/// Same as [`distribution_from_delta`] but with an independent product chain
/// per pattern. Used to check the tree walk.
pub fn distribution_naive(delta: &OperatorMatrix, env: &EnvState, n: usize) -> Result<ErrorDistribution> {
    let prop = Propagator::new(delta, env)?;
    let leaves = ErrorPattern::all(n).map(|a| (a.index(), prop.single(a))).collect();
    collect(n, leaves)
}

fn collect(n: usize, leaves: Vec<(usize, Leaf)>) -> Result<ErrorDistribution> {
    let mut probs = vec![0.0; 1 << n];
    let mut pol = vec![f64::NAN; 1 << n];
    for (bits, leaf) in leaves {
        probs[bits] = clamp_probability(bits, leaf.prob)?;
        pol[bits] = leaf.polarization;
    }
    Ok(ErrorDistribution { n, dot_probs: vec![0.0; 1 << n], probs, polarization: Some(pol) })
}

/// `Tr(Σ_k I_k^y O ρ O^dag) / P(α)`: bath polarization after observing `α`.
pub fn conditional_polarization(alpha: ErrorPattern, delta: &OperatorMatrix, env: &EnvState) -> Result<f64> {
    let prop = Propagator::new(delta, env)?;
    let leaf = prop.single(alpha);
    if !(leaf.prob > CONDITIONAL_FLOOR) {
        return Err(Error::UndefinedConditional { probability: leaf.prob });
    }
    Ok(leaf.polarization)
}

/// `Tr(O^dag O ρ)` for an environment operator `O`.
pub fn expectation_probability(o: &OperatorMatrix, env: &EnvState) -> Result<f64> {
    if o.n_sites() != env.n_sites {
        return Err(Error::DimensionMismatch { expected: o.n_sites(), found: env.n_sites });
    }
    let amp = o.data().dot(&env.purification());
    Ok(amp.iter().map(|z| z.norm_sqr()).sum())
}
