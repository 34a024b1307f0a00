//! Pure-dephasing factorization of the error operators and the
//! Markovian-form bounds built from the norms of `M_±`.
//!
//! Under `H_PD` every step contributes either
//! `M_+ = (U_- + U_+)/2` or `M_- = (i/2)(U_- - U_+)` with
//! `U_± = exp(-i π/(2 Ω_eff) H_±)`, so that
//! `P(α) ≤ ||M_-^dag M_-||^h ||M_+^dag M_+||^(n-h)`, and the same holds
//! block-wise on each conserved sector of `Σ_k I_k^y`.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::emission::{ErrorDistribution, ErrorPattern};
use crate::error::{Error, Result};
use crate::hamiltonian::{EnvState, HamiltonianSet};
use crate::spin::{self, OperatorMatrix, SectorProjector, Space};

/// Unitarity tolerance on `U_±` accepted by [`m_operators`].
const UNITARITY_TOL: f64 = 1e-10;

/// `f_i(α) = Σ_{j ≥ i} α_j` for `i = 1..n` and the number `h(α)` of odd
/// `f_i`, i.e. of `M_-` factors.
pub fn h_count(alpha: ErrorPattern) -> (Vec<u32>, usize) {
    let n = alpha.len();
    let mut f = vec![0u32; n];
    let mut acc = 0u32;
    for i in (1..=n).rev() {
        acc += alpha.bit(i) as u32;
        f[i - 1] = acc;
    }
    let h = f.iter().filter(|&&x| x % 2 == 1).count();
    (f, h)
}

pub fn h_of(alpha: ErrorPattern) -> usize {
    h_count(alpha).1
}

/// `U_± = exp(-i π/(2 Ω_eff) H_±)`.
pub fn pd_unitaries(set: &HamiltonianSet) -> Result<(OperatorMatrix, OperatorMatrix)> {
    let t = set.step_phase();
    Ok((spin::evolve_unitary(&set.plus, t)?, spin::evolve_unitary(&set.minus, t)?))
}

/// `(M_+, M_-) = ((U_- + U_+)/2, (i/2)(U_- - U_+))`.
pub fn m_operators(u_plus: &OperatorMatrix, u_minus: &OperatorMatrix) -> Result<(OperatorMatrix, OperatorMatrix)> {
    u_plus.expect_space(Space::Env)?;
    u_minus.expect_space(Space::Env)?;
    if u_plus.n_sites() != u_minus.n_sites() {
        return Err(Error::DimensionMismatch { expected: u_plus.n_sites(), found: u_minus.n_sites() });
    }
    for u in [u_plus, u_minus] {
        let dev = u.unitarity_error();
        if dev > UNITARITY_TOL {
            return Err(Error::NotUnitary { deviation: dev });
        }
    }
    let m_plus = (u_minus + u_plus).scale(C64::from(0.5));
    let m_minus = (u_minus - u_plus).scale(C64::new(0.0, 0.5));
    Ok((m_plus, m_minus))
}

/// `O(α) = M_{s_n} ⋯ M_{s_1}` with `M_-` wherever `f_i(α)` is odd.
pub fn pd_error_operator(alpha: ErrorPattern, m_plus: &OperatorMatrix, m_minus: &OperatorMatrix) -> OperatorMatrix {
    let (f, _) = h_count(alpha);
    let pick = |i: usize| if f[i - 1] % 2 == 1 { m_minus } else { m_plus };
    let mut o = pick(1).clone();
    for i in 2..=alpha.len() {
        o = pick(i) * &o;
    }
    o
}

/// `p_-^h p_+^(n-h)`.
pub fn bound_eq5(alpha: ErrorPattern, p_plus: f64, p_minus: f64) -> f64 {
    let h = h_of(alpha);
    markov_form(h, alpha.len(), p_plus, p_minus)
}

fn markov_form(h: usize, n: usize, p_plus: f64, p_minus: f64) -> f64 {
    p_minus.powi(h as i32) * p_plus.powi((n - h) as i32)
}

/// Norms of `M_±` restricted to one conserved sector, with the sector's
/// weight in the initial environment state.
#[derive(Clone, Debug, Serialize)]
pub struct SectorNorms {
    pub m: i32,
    pub weight: f64,
    pub p_plus: f64,
    pub p_minus: f64,
}

/// `||M^(m)dag M^(m)||` with `M^(m) = 𝒫_m M 𝒫_m`, for every sector present
/// in `env`.
pub fn sector_norms(m_plus: &OperatorMatrix, m_minus: &OperatorMatrix, env: &EnvState) -> Result<Vec<SectorNorms>> {
    if env.n_sites != m_plus.n_sites() {
        return Err(Error::DimensionMismatch { expected: m_plus.n_sites(), found: env.n_sites });
    }
    env.sector_weights()
        .into_iter()
        .map(|(m, weight)| {
            let proj = SectorProjector::new(env.n_sites, m)?;
            Ok(SectorNorms {
                m,
                weight,
                p_plus: spin::squared_norm(&m_plus.restrict(&proj.basis_indices))?,
                p_minus: spin::squared_norm(&m_minus.restrict(&proj.basis_indices))?,
            })
        })
        .collect()
}

/// `Σ_m w_m p_-^(m)^h p_+^(m)^(n-h)`; a single sector reproduces the
/// one-sector bound exactly.
pub fn bound_eq6(alpha: ErrorPattern, sectors: &[SectorNorms]) -> f64 {
    let h = h_of(alpha);
    sectors.iter().map(|s| s.weight * markov_form(h, alpha.len(), s.p_plus, s.p_minus)).sum()
}

/// Largest element of `U` coupling different sectors of `Σ_k I_k^y`.
pub fn off_sector_max(u: &OperatorMatrix) -> f64 {
    let n = u.n_sites();
    let mut worst = 0.0f64;
    for ((r, c), z) in u.data().indexed_iter() {
        if spin::sector_of(r, n) != spin::sector_of(c, n) {
            worst = worst.max(z.norm());
        }
    }
    worst
}

/// Per-pattern bounds and the norms they are built from.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub n: usize,
    pub h: Vec<usize>,
    pub bound_eq5: Vec<f64>,
    pub bound_eq6: Vec<f64>,
    pub p_plus: f64,
    pub p_minus: f64,
    pub sectors: Vec<SectorNorms>,
    /// True when `env` spans more than one sector, in which case the sector
    /// bound is the weight average over sectors.
    pub weighted_over_sectors: bool,
    /// True when some pure member of `env` is coherent across sectors.
    pub cross_sector_coherence: bool,
}

pub fn bound_report(set: &HamiltonianSet, env: &EnvState, n: usize) -> Result<BoundReport> {
    let (u_plus, u_minus) = pd_unitaries(set)?;
    let (m_plus, m_minus) = m_operators(&u_plus, &u_minus)?;
    bound_report_from_m(&m_plus, &m_minus, env, n)
}

pub fn bound_report_from_m(
    m_plus: &OperatorMatrix,
    m_minus: &OperatorMatrix,
    env: &EnvState,
    n: usize,
) -> Result<BoundReport> {
    let p_plus = spin::squared_norm(m_plus.data())?;
    let p_minus = spin::squared_norm(m_minus.data())?;
    let sectors = sector_norms(m_plus, m_minus, env)?;
    let patterns: Vec<ErrorPattern> = ErrorPattern::all(n).collect();
    Ok(BoundReport {
        n,
        h: patterns.iter().map(|&a| h_of(a)).collect(),
        bound_eq5: patterns.iter().map(|&a| bound_eq5(a, p_plus, p_minus)).collect(),
        bound_eq6: patterns.iter().map(|&a| bound_eq6(a, &sectors)).collect(),
        p_plus,
        p_minus,
        weighted_over_sectors: sectors.len() > 1,
        cross_sector_coherence: env.has_cross_sector_coherence(),
        sectors,
    })
}

/// Statistics of the probabilities sharing one value of `h`.
#[derive(Clone, Debug, Serialize)]
pub struct Band {
    pub h: usize,
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Mean of `log10 P` over members with `P > 0`; `-inf` if none.
    pub mean_log10: f64,
    /// `log10(max/min)` over members with `P > 0`.
    pub log_spread: f64,
}

pub fn band_summary(dist: &ErrorDistribution) -> Vec<Band> {
    let n = dist.n;
    (0..=n)
        .filter_map(|h| {
            let members: Vec<f64> = ErrorPattern::all(n).filter(|&a| h_of(a) == h).map(|a| dist.prob(a)).collect();
            if members.is_empty() {
                return None;
            }
            let min = members.iter().copied().fold(f64::INFINITY, f64::min);
            let max = members.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let positive: Vec<f64> = members.iter().copied().filter(|&p| p > 0.0).collect();
            let (mean_log10, log_spread) = if positive.is_empty() {
                (f64::NEG_INFINITY, 0.0)
            } else {
                let lmin = positive.iter().copied().fold(f64::INFINITY, f64::min);
                let lmax = positive.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (positive.iter().map(|p| p.log10()).sum::<f64>() / positive.len() as f64, (lmax / lmin).log10())
            };
            Some(Band {
                h,
                count: members.len(),
                min,
                max,
                mean: members.iter().sum::<f64>() / members.len() as f64,
                mean_log10,
                log_spread,
            })
        })
        .collect()
}

/// Pattern integers ordered by `(h, pattern)`.
pub fn figure_order(n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..1usize << n).collect();
    order.sort_by_key(|&a| (h_of(ErrorPattern::new(a, n).expect("in range")), a));
    order
}

/// Compares two operators up to a global phase, aligning on the
/// largest-magnitude element of `a`.
pub fn phase_aligned_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    let (idx, _) = a
        .indexed_iter()
        .fold(((0, 0), 0.0), |best, (i, z)| if z.norm() > best.1 { (i, z.norm()) } else { best });
    let phase = if b[idx].norm() > 0.0 && a[idx].norm() > 0.0 {
        let r = a[idx] / b[idx];
        r / r.norm()
    } else {
        spin::ONE
    };
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - phase * y).norm()))
}
