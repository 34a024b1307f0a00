//! Central-spin Hamiltonians: the full hyperfine model and its pure-dephasing
//! pair `H_±`, plus the bath profiles and Overhauser-field statistics that
//! parametrize them.
//!
//! Energies are in units of the emitter Zeeman splitting `Ω` unless a spec
//! sets `omega` to something other than one.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::spin::{
    self, pauli, sector_of, Axis, OperatorMatrix, SectorProjector, Space, Target, MAX_SITES, ONE,
};

/// Bath geometry and couplings.
#[derive(Clone, Debug)]
pub struct BathSpec {
    pub n_sites: usize,
    /// Emitter Zeeman energy `Ω`.
    pub omega: f64,
    /// Total hyperfine coupling `𝒜 = Σ_k A_k`.
    pub a_total: f64,
    /// Per-site hyperfine couplings `A_k`, `k = 1..N`.
    pub couplings: Vec<f64>,
    /// Shifted nuclear Zeeman energies `ω'_k = ω_k - A_k²/(4Ω)`.
    pub nuclear_zeeman: Vec<f64>,
    /// Dipolar coefficients `b_kk'`, symmetric with zero diagonal.
    pub dipolar: Array2<f64>,
    /// Target `Σ_k' b_kk' / A_k` used to scale the dipolar profile.
    pub dipolar_ratio: f64,
    /// Target `Σ_k ω'_k / Ω_eff`.
    pub omega_ratio: f64,
}

fn gaussian_weight(k: usize, n_sites: usize) -> f64 {
    let x = 2.0 * k as f64 / n_sites as f64;
    (-x * x).exp()
}

/// Bath with `A_k ∝ exp[-(2k/N)²]`, separable Gaussian dipolar couplings, and
/// uniform `ω'_k`.
///
/// The dipolar scale is chosen so that `Σ_k' g_k g_k' β / A_k` over the full
/// separable profile (diagonal included) equals `dipolar_ratio` for every
/// `k`; the diagonal is then dropped since `H_dip` only couples distinct
/// sites. `ω'_k` is normalized against `Ω_eff` for an environment with zero
/// mean Overhauser field; call [`BathSpec::normalize_nuclear_zeeman`] for
/// other environments.
pub fn gaussian_profiles(
    n_sites: usize,
    a_total: f64,
    dipolar_ratio: f64,
    omega_ratio: f64,
    omega: f64,
) -> Result<BathSpec> {
    if n_sites == 0 {
        return Err(Error::EmptyBath);
    }
    if n_sites > MAX_SITES {
        return Err(Error::TooLarge { what: "bath sites", value: n_sites, limit: MAX_SITES });
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParameter(format!("Ω must be positive, got {omega}")));
    }
    if !(a_total >= 0.0 && a_total.is_finite()) {
        return Err(Error::InvalidParameter(format!("𝒜 must be non-negative, got {a_total}")));
    }
    if !(dipolar_ratio >= 0.0 && dipolar_ratio.is_finite()) {
        return Err(Error::InvalidParameter(format!("dipolar ratio must be non-negative, got {dipolar_ratio}")));
    }
    if !omega_ratio.is_finite() {
        return Err(Error::InvalidParameter(format!("ω ratio must be finite, got {omega_ratio}")));
    }

    let g: Vec<f64> = (1..=n_sites).map(|k| gaussian_weight(k, n_sites)).collect();
    let total: f64 = g.iter().sum();
    let couplings: Vec<f64> = g.iter().map(|w| a_total * w / total).collect();

    // Σ_k' β g_k g_k' / A_k = β total² / a_total
    let beta = dipolar_ratio * a_total / (total * total);
    let dipolar = Array2::from_shape_fn((n_sites, n_sites), |(i, j)| {
        if i == j {
            0.0
        } else {
            beta * (g[i] * g[j])
        }
    });

    let mut spec = BathSpec {
        n_sites,
        omega,
        a_total,
        couplings,
        nuclear_zeeman: vec![0.0; n_sites],
        dipolar,
        dipolar_ratio,
        omega_ratio,
    };
    spec.normalize_nuclear_zeeman(0.0);
    Ok(spec)
}

impl BathSpec {
    /// `Ω_eff = Ω + ⟨B_N⟩ + (1/4) Σ_k A_k² / Ω`.
    pub fn omega_eff(&self, overhauser_mean: f64) -> f64 {
        let a2: f64 = self.couplings.iter().map(|a| a * a).sum();
        self.omega + overhauser_mean + 0.25 * a2 / self.omega
    }

    /// Sets uniform `ω'_k` with `Σ_k ω'_k = omega_ratio · Ω_eff`. `Ω_eff` does
    /// not depend on `ω'_k`, so no iteration is needed.
    pub fn normalize_nuclear_zeeman(&mut self, overhauser_mean: f64) {
        let each = self.omega_ratio * self.omega_eff(overhauser_mean) / self.n_sites as f64;
        self.nuclear_zeeman = vec![each; self.n_sites];
    }

    /// Unshifted nuclear Zeeman energies `ω_k = ω'_k + A_k²/(4Ω)`.
    pub fn bare_nuclear_zeeman(&self) -> Vec<f64> {
        self.nuclear_zeeman
            .iter()
            .zip(&self.couplings)
            .map(|(w, a)| w + a * a / (4.0 * self.omega))
            .collect()
    }

    /// `δ = 𝒜 / (Ω √N)`.
    pub fn delta(&self) -> f64 {
        self.a_total / (self.omega * (self.n_sites as f64).sqrt())
    }

    /// `Σ_k' b_kk' / A_k` for the separable profile with its diagonal
    /// included (the normalization target).
    pub fn dipolar_profile_ratio(&self, k: usize) -> f64 {
        let n = self.n_sites;
        let g: Vec<f64> = (1..=n).map(|j| gaussian_weight(j, n)).collect();
        let total: f64 = g.iter().sum();
        if self.a_total == 0.0 {
            return 0.0;
        }
        let beta = self.dipolar_ratio * self.a_total / (total * total);
        let row: f64 = g.iter().map(|gj| beta * g[k - 1] * gj).sum();
        row / self.couplings[k - 1]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_sites;
        if n == 0 {
            return Err(Error::EmptyBath);
        }
        if self.couplings.len() != n || self.nuclear_zeeman.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.couplings.len() });
        }
        if self.dipolar.dim() != (n, n) {
            return Err(Error::DimensionMismatch { expected: n, found: self.dipolar.nrows() });
        }
        let sum: f64 = self.couplings.iter().sum();
        if (sum - self.a_total).abs() > 1e-12 * self.a_total.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "Σ A_k = {sum} does not match 𝒜 = {}",
                self.a_total
            )));
        }
        for i in 0..n {
            if self.dipolar[(i, i)] != 0.0 {
                return Err(Error::InvalidParameter("dipolar matrix has a nonzero diagonal".into()));
            }
            for j in 0..i {
                if self.dipolar[(i, j)] != self.dipolar[(j, i)] {
                    return Err(Error::InvalidParameter("dipolar matrix is not symmetric".into()));
                }
            }
        }
        Ok(())
    }

    /// Overhauser field `B_N = (1/2) Σ_k A_k I_k^y` on each environment basis
    /// state (it is diagonal in the `I^y` basis).
    pub fn overhauser_diagonal(&self) -> Vec<f64> {
        (0..1usize << self.n_sites)
            .map(|idx| {
                let mut b = 0.0;
                for (k, a) in self.couplings.iter().enumerate() {
                    let y = if (idx >> k) & 1 == 0 { 1.0 } else { -1.0 };
                    b += 0.5 * a * y;
                }
                b
            })
            .collect()
    }
}

/// Initial environment state.
#[derive(Clone, Debug)]
pub enum EnvKind {
    Pure(Array1<C64>),
    /// Weighted mixture of normalized pure states.
    Ensemble(Vec<(f64, Array1<C64>)>),
    /// `ρ = 𝒫_m / rank(𝒫_m)`.
    SectorUniform(i32),
}

#[derive(Clone, Debug)]
pub struct EnvState {
    pub n_sites: usize,
    pub kind: EnvKind,
}

impl EnvState {
    pub fn sector_uniform(n_sites: usize, m: i32) -> Result<Self> {
        SectorProjector::new(n_sites, m)?;
        Ok(Self { n_sites, kind: EnvKind::SectorUniform(m) })
    }

    pub fn pure(n_sites: usize, vector: Array1<C64>) -> Result<Self> {
        let s = Self { n_sites, kind: EnvKind::Pure(vector) };
        s.validate()?;
        Ok(s)
    }

    pub fn ensemble(n_sites: usize, members: Vec<(f64, Array1<C64>)>) -> Result<Self> {
        let s = Self { n_sites, kind: EnvKind::Ensemble(members) };
        s.validate()?;
        Ok(s)
    }

    /// Product basis state; bit `k - 1` of `index` is set for `I_k^y = -1`.
    pub fn basis(n_sites: usize, index: usize) -> Result<Self> {
        let d = 1usize << n_sites;
        if index >= d {
            return Err(Error::InvalidEnvState(format!("basis index {index} outside dimension {d}")));
        }
        let mut v = Array1::zeros(d);
        v[index] = ONE;
        Self::pure(n_sites, v)
    }

    /// Parses a site bitstring written site N first (like error patterns):
    /// `'0'` is `I^y = +1`, `'1'` is `I^y = -1`.
    pub fn from_bitstring(bits: &str) -> Result<Self> {
        let n = bits.len();
        if n == 0 {
            return Err(Error::EmptyBath);
        }
        let mut index = 0usize;
        for (pos, c) in bits.chars().enumerate() {
            let site = n - pos;
            match c {
                '0' => {}
                '1' => index |= 1 << (site - 1),
                other => {
                    return Err(Error::InvalidEnvState(format!("unexpected character {other:?} in bitstring")))
                }
            }
        }
        Self::basis(n, index)
    }

    pub fn validate(&self) -> Result<()> {
        let d = 1usize << self.n_sites;
        let check_vec = |v: &Array1<C64>| -> Result<()> {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: v.len() });
            }
            let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            if (norm - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidEnvState(format!("state norm² {norm} is not 1")));
            }
            Ok(())
        };
        match &self.kind {
            EnvKind::Pure(v) => check_vec(v),
            EnvKind::Ensemble(members) => {
                if members.is_empty() {
                    return Err(Error::InvalidEnvState("empty ensemble".into()));
                }
                let mut total = 0.0;
                for (w, v) in members {
                    if *w < 0.0 || !w.is_finite() {
                        return Err(Error::InvalidEnvState(format!("negative weight {w}")));
                    }
                    total += w;
                    check_vec(v)?;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidEnvState(format!("weights sum to {total}, not 1")));
                }
                Ok(())
            }
            EnvKind::SectorUniform(m) => SectorProjector::new(self.n_sites, *m).map(|_| ()),
        }
    }

    /// Columns `E` with `ρ = E E^dag`: one column per pure member, scaled by
    /// the square root of its weight.
    pub fn purification(&self) -> Array2<C64> {
        let d = 1usize << self.n_sites;
        match &self.kind {
            EnvKind::Pure(v) => v.clone().into_shape_with_order((d, 1)).expect("vector length is d"),
            EnvKind::Ensemble(members) => {
                let mut e = Array2::zeros((d, members.len()));
                for (c, (w, v)) in members.iter().enumerate() {
                    let s = w.sqrt();
                    for i in 0..d {
                        e[(i, c)] = v[i] * s;
                    }
                }
                e
            }
            EnvKind::SectorUniform(m) => {
                let p = SectorProjector::new(self.n_sites, *m).expect("validated sector");
                let s = 1.0 / (p.rank() as f64).sqrt();
                let mut e = Array2::zeros((d, p.rank()));
                for (c, &i) in p.basis_indices.iter().enumerate() {
                    e[(i, c)] = C64::from(s);
                }
                e
            }
        }
    }

    /// Pure members `(weight, vector)`; a sector mixture expands to its basis.
    pub fn members(&self) -> Vec<(f64, Array1<C64>)> {
        let d = 1usize << self.n_sites;
        match &self.kind {
            EnvKind::Pure(v) => vec![(1.0, v.clone())],
            EnvKind::Ensemble(m) => m.clone(),
            EnvKind::SectorUniform(m) => {
                let p = SectorProjector::new(self.n_sites, *m).expect("validated sector");
                let w = 1.0 / p.rank() as f64;
                p.basis_indices
                    .iter()
                    .map(|&i| {
                        let mut v = Array1::zeros(d);
                        v[i] = ONE;
                        (w, v)
                    })
                    .collect()
            }
        }
    }

    /// Population of each basis state, `diag(ρ)`.
    pub fn populations(&self) -> Vec<f64> {
        let e = self.purification();
        e.rows().into_iter().map(|r| r.iter().map(|z| z.norm_sqr()).sum()).collect()
    }

    /// `Tr(𝒫_m ρ)` for each sector present, ascending in `m`.
    pub fn sector_weights(&self) -> Vec<(i32, f64)> {
        let mut w = vec![0.0; self.n_sites + 1];
        for (i, p) in self.populations().into_iter().enumerate() {
            w[i.count_ones() as usize] += p;
        }
        let n = self.n_sites as i32;
        w.into_iter()
            .enumerate()
            .rev()
            .map(|(ones, weight)| (n - 2 * ones as i32, weight))
            .filter(|&(_, weight)| weight > 0.0)
            .collect()
    }

    /// True when some pure member has amplitude in more than one sector.
    pub fn has_cross_sector_coherence(&self) -> bool {
        self.members().iter().any(|(_, v)| {
            let mut seen: Option<i32> = None;
            for (i, z) in v.iter().enumerate() {
                if *z != C64::new(0.0, 0.0) {
                    let m = sector_of(i, self.n_sites);
                    match seen {
                        None => seen = Some(m),
                        Some(s) if s != m => return true,
                        _ => {}
                    }
                }
            }
            false
        })
    }

    /// `Tr(D ρ)` for an operator diagonal in the environment basis.
    pub fn diagonal_expectation(&self, diag: &[f64]) -> f64 {
        self.populations().iter().zip(diag).map(|(p, d)| p * d).sum()
    }
}

/// Mean and standard deviation of the Overhauser field in `env`.
pub fn overhauser_stats(spec: &BathSpec, env: &EnvState) -> Result<(f64, f64)> {
    check_sites(spec, env)?;
    let b = spec.overhauser_diagonal();
    let mean = env.diagonal_expectation(&b);
    let b2: Vec<f64> = b.iter().map(|x| x * x).collect();
    let second = env.diagonal_expectation(&b2);
    Ok((mean, (second - mean * mean).max(0.0).sqrt()))
}

fn check_sites(spec: &BathSpec, env: &EnvState) -> Result<()> {
    if spec.n_sites != env.n_sites {
        return Err(Error::DimensionMismatch { expected: spec.n_sites, found: env.n_sites });
    }
    Ok(())
}

fn add_dipolar(h: &mut OperatorMatrix, spec: &BathSpec) -> Result<()> {
    let n = spec.n_sites;
    for k in 1..=n {
        for kk in (1..=n).filter(|&kk| kk != k) {
            let b = spec.dipolar[(k - 1, kk - 1)];
            if b == 0.0 {
                continue;
            }
            h.add_product(C64::from(b), &[(Target::Site(k), Axis::Plus), (Target::Site(kk), Axis::Minus)])?;
            h.add_product(C64::from(-0.5 * b), &[(Target::Site(k), Axis::Y), (Target::Site(kk), Axis::Y)])?;
        }
    }
    Ok(())
}

/// Full hyperfine Hamiltonian on the joint space:
/// `(Ω/2) Y_D + (1/2) Σ ω_k I_k^y + (1/4) Σ A_k S·I_k + H_dip`.
pub fn build_full_hamiltonian(spec: &BathSpec) -> Result<OperatorMatrix> {
    spec.validate()?;
    if spec.n_sites + 1 > MAX_SITES + 1 {
        return Err(Error::TooLarge { what: "joint qubits", value: spec.n_sites + 1, limit: MAX_SITES + 1 });
    }
    let n = spec.n_sites;
    let mut h = OperatorMatrix::zeros(Space::Joint, n);
    h.add_product(C64::from(0.5 * spec.omega), &[(Target::Dot, Axis::Y)])?;
    for (k, w) in spec.bare_nuclear_zeeman().into_iter().enumerate() {
        h.add_product(C64::from(0.5 * w), &[(Target::Site(k + 1), Axis::Y)])?;
    }
    for (k, &a) in spec.couplings.iter().enumerate() {
        for axis in Axis::PAULI {
            h.add_product(C64::from(0.25 * a), &[(Target::Dot, axis), (Target::Site(k + 1), axis)])?;
        }
    }
    add_dipolar(&mut h, spec)?;
    Ok(h)
}

/// Pure-dephasing data: `H_±` on the environment plus derived scalars, and
/// optionally the full Hamiltonian on the joint space.
#[derive(Clone, Debug)]
pub struct HamiltonianSet {
    pub full: Option<OperatorMatrix>,
    pub plus: OperatorMatrix,
    pub minus: OperatorMatrix,
    pub omega_eff: f64,
    pub overhauser_mean: f64,
    pub overhauser_fluct: f64,
    pub delta: f64,
}

impl HamiltonianSet {
    /// `H_PD = (Ω_eff/2) Y_D + |+i><+i| ⊗ H_+ + |-i><-i| ⊗ H_-`.
    pub fn pure_dephasing_joint(&self) -> Result<OperatorMatrix> {
        let half = C64::from(0.5);
        let i_half = C64::new(0.0, 0.5);
        // |±i> = (|0> ± i|1>)/√2
        let proj_plus = [[half, -i_half], [i_half, half]];
        let proj_minus = [[half, i_half], [-i_half, half]];
        let n = self.plus.n_sites();
        let rot = spin::dot_operator(Axis::Y, n).scale(C64::from(0.5 * self.omega_eff));
        let a = OperatorMatrix::joint(proj_plus, &self.plus)?;
        let b = OperatorMatrix::joint(proj_minus, &self.minus)?;
        Ok(&(&rot + &a) + &b)
    }

    /// The step phase `π / (2 Ω_eff)`.
    pub fn step_phase(&self) -> f64 {
        std::f64::consts::PI / (2.0 * self.omega_eff)
    }
}

/// Builds `H_±` for the given bath and initial environment.
pub fn build_dephasing_pair(spec: &BathSpec, env: &EnvState) -> Result<HamiltonianSet> {
    spec.validate()?;
    env.validate()?;
    check_sites(spec, env)?;
    let (mean, fluct) = overhauser_stats(spec, env)?;
    let omega_eff = spec.omega_eff(mean);
    let n = spec.n_sites;

    let build = |sign: f64| -> Result<OperatorMatrix> {
        let mut h = OperatorMatrix::zeros(Space::Env, n);
        let shift = C64::from(-sign * 0.5 * mean);
        for i in 0..h.dim() {
            h.data_mut()[(i, i)] += shift;
        }
        for k in 1..=n {
            let c = 0.5 * (spec.nuclear_zeeman[k - 1] + sign * 0.5 * spec.couplings[k - 1]);
            h.add_product(C64::from(c), &[(Target::Site(k), Axis::Y)])?;
        }
        for k in 1..=n {
            for kk in (1..=n).filter(|&kk| kk != k) {
                let c = sign * 0.25 * spec.couplings[k - 1] * spec.couplings[kk - 1] / spec.omega;
                if c != 0.0 {
                    h.add_product(C64::from(c), &[(Target::Site(k), Axis::Plus), (Target::Site(kk), Axis::Minus)])?;
                }
            }
        }
        add_dipolar(&mut h, spec)?;
        Ok(h)
    };

    Ok(HamiltonianSet {
        full: None,
        plus: build(1.0)?,
        minus: build(-1.0)?,
        omega_eff,
        overhauser_mean: mean,
        overhauser_fluct: fluct,
        delta: spec.delta(),
    })
}

/// [`build_dephasing_pair`] plus the full Hamiltonian.
pub fn build_hamiltonian_set(spec: &BathSpec, env: &EnvState) -> Result<HamiltonianSet> {
    let mut set = build_dephasing_pair(spec, env)?;
    set.full = Some(build_full_hamiltonian(spec)?);
    Ok(set)
}

/// `Y_D + Σ_k I_k^y` on the joint space.
pub fn total_joint_y(n_sites: usize) -> OperatorMatrix {
    let env_y = spin::total_y(n_sites);
    let dot_y = spin::dot_operator(Axis::Y, n_sites);
    &dot_y + &OperatorMatrix::joint(pauli::IDENTITY, &env_y).expect("env operator")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_site_gets_all_coupling() {
        let s = gaussian_profiles(1, 1.7, 2500.0, 1e-3, 1.0).unwrap();
        assert_eq!(s.couplings, vec![1.7]);
    }

    #[test]
    fn four_site_profile_matches_formula() {
        let s = gaussian_profiles(4, 1.0, 2500.0, 1e-3, 1.0).unwrap();
        let raw: Vec<f64> = (1..=4).map(|k| (-(k as f64 / 2.0).powi(2)).exp()).collect();
        let total: f64 = raw.iter().sum();
        for k in 0..4 {
            assert_abs_diff_eq!(s.couplings[k], raw[k] / total, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(s.couplings.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(s.couplings.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn dipolar_ratio_is_site_independent() {
        let s = gaussian_profiles(4, 1.3, 2500.0, 1e-3, 1.0).unwrap();
        for k in 1..=4 {
            assert!((s.dipolar_profile_ratio(k) - 2500.0).abs() < 1e-12 * 2500.0);
        }
        s.validate().unwrap();
    }

    #[test]
    fn nuclear_zeeman_sum_tracks_effective_field() {
        let mut s = gaussian_profiles(5, 2.0, 2500.0, 1e-3, 1.0).unwrap();
        let sum: f64 = s.nuclear_zeeman.iter().sum();
        assert_abs_diff_eq!(sum / s.omega_eff(0.0), 1e-3, epsilon = 1e-15);
        s.normalize_nuclear_zeeman(0.3);
        let sum: f64 = s.nuclear_zeeman.iter().sum();
        assert_abs_diff_eq!(sum / s.omega_eff(0.3), 1e-3, epsilon = 1e-15);
    }

    #[test]
    fn decoupled_full_hamiltonian_is_emitter_precession() {
        let s = gaussian_profiles(2, 0.0, 0.0, 0.0, 1.0).unwrap();
        let h = build_full_hamiltonian(&s).unwrap();
        let expected = spin::dot_operator(Axis::Y, 2).scale(C64::from(0.5));
        assert_eq!(h.max_abs_diff(&expected), 0.0);
    }

    #[test]
    fn one_site_full_hamiltonian_matches_hand_built_matrix() {
        let a = 0.8;
        let s = gaussian_profiles(1, a, 0.0, 0.0, 1.0).unwrap();
        let h = build_full_hamiltonian(&s).unwrap();
        // Basis order: |dot, site> = 00, 01, 10, 11 with site bit 0 ↔ I^y=+1.
        let kron = |p: [[C64; 2]; 2], q: [[C64; 2]; 2]| {
            Array2::from_shape_fn((4, 4), |(r, c)| p[r / 2][c / 2] * q[r % 2][c % 2])
        };
        let ix = [[C64::from(0.0), C64::new(0.0, -1.0)], [C64::new(0.0, 1.0), C64::from(0.0)]];
        let iy = [[C64::from(1.0), C64::from(0.0)], [C64::from(0.0), C64::from(-1.0)]];
        let iz = [[C64::from(0.0), C64::from(1.0)], [C64::from(1.0), C64::from(0.0)]];
        let omega_k = a * a / 4.0; // ω'=0, so ω = A²/(4Ω)
        let expected = kron(pauli::Y, pauli::IDENTITY).mapv(|z| z * 0.5)
            + kron(pauli::IDENTITY, iy).mapv(|z| z * 0.5 * omega_k)
            + (kron(pauli::X, ix) + kron(pauli::Y, iy) + kron(pauli::Z, iz)).mapv(|z| z * 0.25 * a);
        let err = (&expected - h.data()).iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        assert!(err < 1e-15, "{err}");
        assert!(h.commutator(&total_joint_y(1)).max_abs() < 1e-12);
    }

    #[test]
    fn hamiltonians_are_hermitian_and_conserve_y_projection() {
        for n in 1..=6 {
            for &(a, dip) in &[(0.5, 2500.0), (2.0, 2500.0), (4.0, 1e-3)] {
                let s = gaussian_profiles(n, a, dip, 1e-3, 1.0).unwrap();
                let env = EnvState::sector_uniform(n, n as i32 % 2).unwrap();
                let set = build_hamiltonian_set(&s, &env).unwrap();
                let full = set.full.as_ref().unwrap();
                let tol = 1e-12;
                assert!(full.hermiticity_error() < tol);
                assert!(set.plus.hermiticity_error() < tol);
                assert!(set.minus.hermiticity_error() < tol);
                let ty = spin::total_y(n);
                assert!(set.plus.commutator(&ty).max_abs() < tol);
                assert!(set.minus.commutator(&ty).max_abs() < tol);
                assert!(full.commutator(&total_joint_y(n)).max_abs() < tol);
                assert_eq!(set.delta, a / (n as f64).sqrt());
            }
        }
    }

    #[test]
    fn balanced_sector_has_no_mean_field() {
        let s = gaussian_profiles(4, 2.0, 2500.0, 1e-3, 1.0).unwrap();
        let env = EnvState::sector_uniform(4, 0).unwrap();
        let set = build_dephasing_pair(&s, &env).unwrap();
        assert_abs_diff_eq!(set.overhauser_mean, 0.0, epsilon = 1e-15);
        let a2: f64 = s.couplings.iter().map(|a| a * a).sum();
        assert_abs_diff_eq!(set.omega_eff, 1.0 + 0.25 * a2, epsilon = 1e-15);
    }

    #[test]
    fn uncoupled_pair_is_identical() {
        let s = gaussian_profiles(3, 0.0, 0.0, 1e-3, 1.0).unwrap();
        let env = EnvState::sector_uniform(3, 1).unwrap();
        let set = build_dephasing_pair(&s, &env).unwrap();
        assert_eq!(set.plus.max_abs_diff(&set.minus), 0.0);
        assert_eq!(set.omega_eff, 1.0);
    }

    #[test]
    fn polarized_pair_shifts_effective_field() {
        let s = gaussian_profiles(2, 1.0, 0.0, 1e-3, 1.0).unwrap();
        let env = EnvState::from_bitstring("00").unwrap();
        let set = build_dephasing_pair(&s, &env).unwrap();
        let mean = 0.5 * (s.couplings[0] + s.couplings[1]);
        assert_abs_diff_eq!(set.overhauser_mean, mean, epsilon = 1e-15);
        assert_abs_diff_eq!(set.omega_eff, s.omega_eff(0.0) + mean, epsilon = 1e-15);
        assert_abs_diff_eq!(set.overhauser_fluct, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn overhauser_statistics() {
        let s = gaussian_profiles(2, 1.0, 0.0, 1e-3, 1.0).unwrap();
        let (a1, a2) = (s.couplings[0], s.couplings[1]);
        for (bits, expected) in [("00", 0.5 * (a1 + a2)), ("01", 0.5 * (-a1 + a2)), ("10", 0.5 * (a1 - a2)), ("11", -0.5 * (a1 + a2))] {
            let env = EnvState::from_bitstring(bits).unwrap();
            let (mean, fluct) = overhauser_stats(&s, &env).unwrap();
            assert_abs_diff_eq!(mean, expected, epsilon = 1e-15);
            assert_abs_diff_eq!(fluct, 0.0, epsilon = 1e-15);
        }
        let env = EnvState::sector_uniform(2, 0).unwrap();
        let (mean, fluct) = overhauser_stats(&s, &env).unwrap();
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fluct, (a1 - a2).abs() / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn pure_dephasing_joint_splits_by_emitter_y() {
        let s = gaussian_profiles(2, 1.0, 2500.0, 1e-3, 1.0).unwrap();
        let env = EnvState::sector_uniform(2, 0).unwrap();
        let set = build_dephasing_pair(&s, &env).unwrap();
        let hpd = set.pure_dephasing_joint().unwrap();
        assert!(hpd.hermiticity_error() < 1e-12);
        assert!(hpd.commutator(&spin::dot_operator(Axis::Y, 2)).max_abs() < 1e-12);
        assert!(hpd.commutator(&total_joint_y(2)).max_abs() < 1e-12);
    }

    #[test]
    fn env_state_validation() {
        assert!(EnvState::sector_uniform(3, 0).is_err());
        let v = Array1::from_elem(4, C64::from(0.5));
        assert!(EnvState::ensemble(2, vec![(0.5, v.clone()), (0.4, v.clone())]).is_err());
        assert!(EnvState::ensemble(2, vec![(0.5, v.clone()), (0.5, v.clone())]).is_ok());
        assert!(EnvState::pure(2, Array1::from_elem(4, C64::from(1.0))).is_err());
        let env = EnvState::from_bitstring("10").unwrap();
        assert_eq!(env.populations(), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(env.sector_weights(), vec![(0, 1.0)]);
        let mixed = EnvState::pure(2, v).unwrap();
        assert!(mixed.has_cross_sector_coherence());
    }

    #[test]
    fn spec_and_env_sizes_must_agree() {
        let s = gaussian_profiles(3, 1.0, 0.0, 1e-3, 1.0).unwrap();
        let env = EnvState::sector_uniform(2, 0).unwrap();
        assert!(matches!(build_dephasing_pair(&s, &env), Err(Error::DimensionMismatch { .. })));
    }
}
