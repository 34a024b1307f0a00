//! Dense operator algebra for one emitter qubit plus `N` spin-1/2 bath sites.
//!
//! Bath sites are written in the basis that diagonalizes `I^y`: bit value 0
//! is the `I^y = +1` state and bit value 1 is `I^y = -1`. With this choice the
//! conserved total projection `Σ_k I_k^y` is a popcount, and its eigenspaces
//! are index slices. Site `k` (1-based) lives on bit `k - 1` of an environment
//! index. In the joint space the emitter is the most significant bit, written
//! in its own `Z` eigenbasis (`|0>` = up), so a joint index is
//! `dot << N | env`.
//!
//! Operators are stored densely; Hermitian eigenproblems are split along the
//! connected components of the matrix sparsity graph, which recovers the
//! conserved-sector blocks without having to know about them.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use ndarray::{self as nd, Array2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Largest bath size accepted by the dense constructors.
pub const MAX_SITES: usize = 12;

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub(crate) const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Space {
    /// Bath only, dimension `2^N`.
    Env,
    /// Emitter ⊗ bath, dimension `2^(N+1)`.
    Joint,
}

impl Space {
    pub fn dim(self, n_sites: usize) -> usize {
        match self {
            Space::Env => 1 << n_sites,
            Space::Joint => 2 << n_sites,
        }
    }
}

/// Single-site operator label. `Plus` and `Minus` are `(I^x ± i I^z) / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
    Plus,
    Minus,
}

impl Axis {
    pub const PAULI: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];
}

/// Action of a bath-site operator on a basis bit. Every operator here has at
/// most one nonzero entry per column, so the action is a (phase, bit) pair.
///
/// In the `I^y`-diagonal basis: `I^y = diag(1, -1)`, `I^z = [[0, 1], [1, 0]]`,
/// `I^x = [[0, -i], [i, 0]]`, which keeps `[I^x, I^y] = 2i I^z` cyclic.
fn site_action(axis: Axis, bit: usize) -> Option<(C64, usize)> {
    match (axis, bit) {
        (Axis::Y, 0) => Some((ONE, 0)),
        (Axis::Y, _) => Some((-ONE, 1)),
        (Axis::Z, b) => Some((ONE, 1 - b)),
        (Axis::X, 0) => Some((I, 1)),
        (Axis::X, _) => Some((-I, 0)),
        (Axis::Plus, 0) => Some((I, 1)),
        (Axis::Plus, _) => None,
        (Axis::Minus, 0) => None,
        (Axis::Minus, _) => Some((-I, 0)),
    }
}

/// Emitter Pauli operators in the emitter's `Z` basis.
fn dot_action(axis: Axis, bit: usize) -> Option<(C64, usize)> {
    match (axis, bit) {
        (Axis::Z, 0) => Some((ONE, 0)),
        (Axis::Z, _) => Some((-ONE, 1)),
        (Axis::X, b) => Some((ONE, 1 - b)),
        (Axis::Y, 0) => Some((I, 1)),
        (Axis::Y, _) => Some((-I, 0)),
        (Axis::Plus, 0) => None,
        (Axis::Plus, _) => Some((ONE, 0)),
        (Axis::Minus, 0) => Some((ONE, 1)),
        (Axis::Minus, _) => None,
    }
}

/// Target of one factor in a product operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Dot,
    /// 1-based bath site.
    Site(usize),
}

#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    n_sites: usize,
    space: Space,
    data: Array2<C64>,
}

impl OperatorMatrix {
    pub fn zeros(space: Space, n_sites: usize) -> Self {
        let d = space.dim(n_sites);
        Self { n_sites, space, data: Array2::zeros((d, d)) }
    }

    pub fn identity(space: Space, n_sites: usize) -> Self {
        let d = space.dim(n_sites);
        Self { n_sites, space, data: Array2::eye(d) }
    }

    pub fn from_array(space: Space, n_sites: usize, data: Array2<C64>) -> Result<Self> {
        let d = space.dim(n_sites);
        if data.nrows() != d {
            return Err(Error::DimensionMismatch { expected: d, found: data.nrows() });
        }
        if data.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: data.ncols() });
        }
        Ok(Self { n_sites, space, data })
    }

    /// `diag(values)` on the given space.
    pub fn diagonal(space: Space, n_sites: usize, values: &[C64]) -> Result<Self> {
        let d = space.dim(n_sites);
        if values.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: values.len() });
        }
        Ok(Self { n_sites, space, data: Array2::from_diag(&nd::arr1(values)) })
    }

    /// `dot ⊗ env`, with `dot` a 2×2 emitter matrix.
    pub fn joint(dot: [[C64; 2]; 2], env: &OperatorMatrix) -> Result<Self> {
        env.expect_space(Space::Env)?;
        let de = env.dim();
        let mut data = Array2::zeros((2 * de, 2 * de));
        for a in 0..2 {
            for b in 0..2 {
                if dot[a][b] == ZERO {
                    continue;
                }
                let mut block = data.slice_mut(nd::s![a * de..(a + 1) * de, b * de..(b + 1) * de]);
                block.zip_mut_with(&env.data, |x, &y| *x = dot[a][b] * y);
            }
        }
        Ok(Self { n_sites: env.n_sites, space: Space::Joint, data })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &Array2<C64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<C64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        let data = self.data.t().mapv(|z| z.conj());
        Self { n_sites: self.n_sites, space: self.space, data }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { n_sites: self.n_sites, space: self.space, data: self.data.mapv(|z| z * s) }
    }

    pub fn trace(&self) -> C64 {
        self.data.diag().sum()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    /// `max |A - A^dag|`.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut err: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                err = err.max((self.data[(i, j)] - self.data[(j, i)].conj()).norm());
            }
        }
        err
    }

    /// `max |U^dag U - I|`, computed densely.
    pub fn unitarity_error(&self) -> f64 {
        let prod = self.adjoint().data.dot(&self.data);
        prod.indexed_iter().fold(0.0, |m, ((i, j), z)| {
            let target = if i == j { ONE } else { ZERO };
            m.max((z - target).norm())
        })
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    /// Restriction to the given basis indices (rows and columns).
    pub fn restrict(&self, indices: &[usize]) -> Array2<C64> {
        Array2::from_shape_fn((indices.len(), indices.len()), |(i, j)| {
            self.data[(indices[i], indices[j])]
        })
    }

    pub(crate) fn expect_space(&self, space: Space) -> Result<()> {
        if self.space != space {
            return Err(Error::DimensionMismatch {
                expected: space.dim(self.n_sites),
                found: self.dim(),
            });
        }
        Ok(())
    }

    pub(crate) fn data_mut(&mut self) -> &mut Array2<C64> {
        &mut self.data
    }

    /// Adds `coeff · Π factors` (rightmost factor acts first).
    pub fn add_product(&mut self, coeff: C64, factors: &[(Target, Axis)]) -> Result<()> {
        for &(target, _) in factors {
            match target {
                Target::Dot if self.space == Space::Env => {
                    return Err(Error::InvalidParameter(
                        "emitter factor in an environment-space operator".into(),
                    ))
                }
                Target::Site(k) if k == 0 || k > self.n_sites => {
                    return Err(Error::SiteOutOfRange { site: k, n_sites: self.n_sites })
                }
                _ => {}
            }
        }
        let n = self.n_sites;
        for col in 0..self.dim() {
            let mut state = col;
            let mut amp = coeff;
            let mut alive = true;
            for &(target, axis) in factors.iter().rev() {
                let (shift, action): (usize, fn(Axis, usize) -> Option<(C64, usize)>) = match target
                {
                    Target::Dot => (n, dot_action),
                    Target::Site(k) => (k - 1, site_action),
                };
                let bit = (state >> shift) & 1;
                match action(axis, bit) {
                    Some((phase, out)) => {
                        amp *= phase;
                        state = (state & !(1 << shift)) | (out << shift);
                    }
                    None => {
                        alive = false;
                        break;
                    }
                }
            }
            if alive {
                self.data[(state, col)] += amp;
            }
        }
        Ok(())
    }
}

impl fmt::Display for OperatorMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.data.rows() {
            let cells: Vec<String> =
                row.iter().map(|z| format!("{:+.4}{:+.4}i", z.re, z.im)).collect();
            writeln!(f, "[{}]", cells.join(", "))?;
        }
        Ok(())
    }
}

impl<'a> Mul<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;

    fn mul(self, rhs: &'a OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.dim(), rhs.dim(), "operator dimensions differ");
        OperatorMatrix { n_sites: self.n_sites, space: self.space, data: self.data.dot(&rhs.data) }
    }
}

impl<'a> Add<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;

    fn add(self, rhs: &'a OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.dim(), rhs.dim(), "operator dimensions differ");
        OperatorMatrix { n_sites: self.n_sites, space: self.space, data: &self.data + &rhs.data }
    }
}

impl<'a> Sub<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;

    fn sub(self, rhs: &'a OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.dim(), rhs.dim(), "operator dimensions differ");
        OperatorMatrix { n_sites: self.n_sites, space: self.space, data: &self.data - &rhs.data }
    }
}

/// Bath operator `I_k^axis` embedded in the `2^N` environment space.
pub fn site_operator(axis: Axis, k: usize, n_sites: usize) -> Result<OperatorMatrix> {
    if n_sites == 0 {
        return Err(Error::EmptyBath);
    }
    if n_sites > MAX_SITES {
        return Err(Error::TooLarge { what: "bath sites", value: n_sites, limit: MAX_SITES });
    }
    if k == 0 || k > n_sites {
        return Err(Error::SiteOutOfRange { site: k, n_sites });
    }
    let mut op = OperatorMatrix::zeros(Space::Env, n_sites);
    op.add_product(ONE, &[(Target::Site(k), axis)])?;
    Ok(op)
}

/// Emitter operator (`X_D`, `Y_D`, `Z_D`, or `|0><1|` / `|1><0|` for
/// `Plus` / `Minus`) acting as identity on the bath.
pub fn dot_operator(axis: Axis, n_sites: usize) -> OperatorMatrix {
    let mut op = OperatorMatrix::zeros(Space::Joint, n_sites);
    op.add_product(ONE, &[(Target::Dot, axis)]).expect("dot factor is valid in joint space");
    op
}

/// 2×2 emitter matrices in the `Z` basis.
pub mod pauli {
    use super::{C64, I, ONE, ZERO};

    pub const IDENTITY: [[C64; 2]; 2] = [[ONE, ZERO], [ZERO, ONE]];
    pub const X: [[C64; 2]; 2] = [[ZERO, ONE], [ONE, ZERO]];
    pub const Y: [[C64; 2]; 2] = [[ZERO, C64 { re: 0.0, im: -1.0 }], [I, ZERO]];
    pub const Z: [[C64; 2]; 2] = [[ONE, ZERO], [ZERO, C64 { re: -1.0, im: 0.0 }]];
}

/// Diagonal of `Σ_k I_k^y` in the environment basis.
pub fn total_y_diagonal(n_sites: usize) -> Vec<f64> {
    (0..1usize << n_sites).map(|i| sector_of(i, n_sites) as f64).collect()
}

/// Eigenvalue of `Σ_k I_k^y` for an environment basis index.
pub fn sector_of(index: usize, n_sites: usize) -> i32 {
    n_sites as i32 - 2 * index.count_ones() as i32
}

/// `Σ_k I_k^y` as an environment operator.
pub fn total_y(n_sites: usize) -> OperatorMatrix {
    let diag: Vec<C64> = total_y_diagonal(n_sites).into_iter().map(C64::from).collect();
    OperatorMatrix::diagonal(Space::Env, n_sites, &diag).expect("length matches")
}

// ---------------------------------------------------------------------------
// Hermitian eigenproblems

/// Eigendecomposition of a Hermitian operator, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: OperatorMatrix,
}

/// One diagonal block of a Hermitian operator and its eigensystem.
#[derive(Clone, Debug)]
pub(crate) struct EigenBlock {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    /// Columns are eigenvectors, expressed on `indices`.
    pub vectors: Array2<C64>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Connected components of the graph with an edge wherever `a[i][j] != 0`.
/// Each component is returned sorted; components are ordered by their
/// smallest index.
pub fn sparsity_components(a: &Array2<C64>) -> Vec<Vec<usize>> {
    let d = a.nrows();
    let mut parent: Vec<usize> = (0..d).collect();
    for ((i, j), z) in a.indexed_iter() {
        if i != j && *z != ZERO {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; d];
    for i in 0..d {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

fn hermitian_tolerance(h: &OperatorMatrix) -> f64 {
    1e-12 * h.max_abs().max(1.0)
}

fn check_hermitian(h: &OperatorMatrix) -> Result<()> {
    let asym = h.hermiticity_error();
    if asym > hermitian_tolerance(h) {
        return Err(Error::NotHermitian { asymmetry: asym });
    }
    Ok(())
}

fn eigen_block(h: &Array2<C64>, indices: Vec<usize>) -> EigenBlock {
    let n = indices.len();
    let m = DMatrix::<C64>::from_fn(n, n, |i, j| {
        let (a, b) = (h[(indices[i], indices[j])], h[(indices[j], indices[i])]);
        (a + b.conj()) * 0.5
    });
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, order[j])]);
    EigenBlock { indices, values, vectors }
}

pub(crate) fn eigen_blocks(h: &OperatorMatrix) -> Result<Vec<EigenBlock>> {
    check_hermitian(h)?;
    Ok(sparsity_components(&h.data)
        .into_iter()
        .map(|idx| eigen_block(&h.data, idx))
        .collect())
}

/// `H = V diag(λ) V^dag` with `λ` ascending.
pub fn hermitian_eig(h: &OperatorMatrix) -> Result<HermitianEigen> {
    let blocks = eigen_blocks(h)?;
    let d = h.dim();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(d);
    for (b, block) in blocks.iter().enumerate() {
        for (k, &v) in block.values.iter().enumerate() {
            pairs.push((v, b, k));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut vectors = Array2::zeros((d, d));
    for (col, &(_, b, k)) in pairs.iter().enumerate() {
        let block = &blocks[b];
        for (r, &row) in block.indices.iter().enumerate() {
            vectors[(row, col)] = block.vectors[(r, k)];
        }
    }
    Ok(HermitianEigen {
        values: pairs.iter().map(|p| p.0).collect(),
        vectors: OperatorMatrix { n_sites: h.n_sites, space: h.space, data: vectors },
    })
}

/// `exp(-i θ H)` for Hermitian `H`, assembled block by block.
pub fn evolve_unitary(h: &OperatorMatrix, theta: f64) -> Result<OperatorMatrix> {
    let blocks = eigen_blocks(h)?;
    let mut out = OperatorMatrix::zeros(h.space, h.n_sites);
    for block in &blocks {
        let phases: Vec<C64> =
            block.values.iter().map(|&l| C64::from_polar(1.0, -theta * l)).collect();
        let mut scaled = block.vectors.clone();
        for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|z| z * phases[j]);
        }
        let vh = block.vectors.t().mapv(|z| z.conj());
        let u = scaled.dot(&vh);
        let check = vh.dot(&block.vectors);
        let dev = check.indexed_iter().fold(0.0_f64, |m, ((i, j), z)| {
            m.max((z - if i == j { ONE } else { ZERO }).norm())
        });
        if dev > 1e-10 {
            return Err(Error::NotUnitary { deviation: dev });
        }
        for (r, &row) in block.indices.iter().enumerate() {
            for (c, &col) in block.indices.iter().enumerate() {
                out.data[(row, col)] = u[(r, c)];
            }
        }
    }
    Ok(out)
}

/// Largest eigenvalue of a Hermitian positive semi-definite operator. For
/// `A = M^dag M` this is the squared operator norm of `M`.
pub fn psd_norm(a: &OperatorMatrix) -> Result<f64> {
    psd_norm_array(&a.data)
}

/// [`psd_norm`] on a bare matrix, used for sector-restricted blocks.
pub fn psd_norm_array(a: &Array2<C64>) -> Result<f64> {
    let d = a.nrows();
    let op = OperatorMatrix { n_sites: 0, space: Space::Env, data: a.clone() };
    let tol = hermitian_tolerance(&op);
    let asym = op.hermiticity_error();
    if asym > tol.max(1e-12) {
        return Err(Error::NotHermitian { asymmetry: asym });
    }
    if d == 0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for idx in sparsity_components(a) {
        let block = eigen_block(a, idx);
        lo = lo.min(block.values[0]);
        hi = hi.max(*block.values.last().unwrap());
    }
    if lo < -1e-10 * hi.abs().max(1.0) {
        return Err(Error::NotPsd { min_eigenvalue: lo });
    }
    Ok(hi.max(0.0))
}

/// `||M||^2 = λ_max(M^dag M)`.
pub fn squared_norm(m: &Array2<C64>) -> Result<f64> {
    let mh = m.t().mapv(|z| z.conj());
    psd_norm_array(&mh.dot(m))
}

// ---------------------------------------------------------------------------
// Conserved sectors

/// Projector onto the `Σ_k I_k^y = m` eigenspace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SectorProjector {
    pub m: i32,
    pub n_sites: usize,
    pub basis_indices: Vec<usize>,
}

impl SectorProjector {
    pub fn new(n_sites: usize, m: i32) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::EmptyBath);
        }
        let n = n_sites as i32;
        if m.abs() > n || (n - m) % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "m = {m} is not an eigenvalue of the total y-projection for N = {n_sites}"
            )));
        }
        let basis_indices = (0..1usize << n_sites).filter(|&i| sector_of(i, n_sites) == m).collect();
        Ok(Self { m, n_sites, basis_indices })
    }

    pub fn rank(&self) -> usize {
        self.basis_indices.len()
    }

    pub fn as_matrix(&self) -> OperatorMatrix {
        let mut p = OperatorMatrix::zeros(Space::Env, self.n_sites);
        for &i in &self.basis_indices {
            p.data[(i, i)] = ONE;
        }
        p
    }
}

/// One projector per `m ∈ {-N, -N+2, …, N}`, ascending in `m`.
pub fn sector_projectors(n_sites: usize) -> Result<Vec<SectorProjector>> {
    if n_sites == 0 {
        return Err(Error::EmptyBath);
    }
    if n_sites > MAX_SITES {
        return Err(Error::TooLarge { what: "bath sites", value: n_sites, limit: MAX_SITES });
    }
    let n = n_sites as i32;
    (0..=n_sites)
        .map(|j| SectorProjector::new(n_sites, -n + 2 * j as i32))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n_sites: usize, space: Space, seed: u64) -> OperatorMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = space.dim(n_sites);
        let a = Array2::from_shape_fn((d, d), |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let h = &a + &a.t().mapv(|z| z.conj());
        OperatorMatrix::from_array(space, n_sites, h).unwrap()
    }

    fn random_matrix(d: usize, rng: &mut ChaCha8Rng) -> Array2<C64> {
        Array2::from_shape_fn((d, d), |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn power_iteration(a: &Array2<C64>) -> f64 {
        let d = a.nrows();
        let mut v = nd::Array1::from_shape_fn(d, |i| C64::new(1.0 + i as f64 * 0.01, 0.3));
        let mut lambda = 0.0;
        for _ in 0..5000 {
            let w = a.dot(&v);
            let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let next = w.mapv(|z| z / norm);
            lambda = next.iter().zip(a.dot(&next).iter()).map(|(x, y)| (x.conj() * y).re).sum();
            v = next;
        }
        lambda
    }

    #[test]
    fn y_is_diagonal_in_site_basis() {
        let y = site_operator(Axis::Y, 1, 1).unwrap();
        assert_eq!(y.get(0, 0), ONE);
        assert_eq!(y.get(1, 1), -ONE);
        assert_eq!(y.get(0, 1), ZERO);
    }

    #[test]
    fn plus_operator_is_a_ladder_between_y_eigenstates() {
        // (I^x + i I^z)/2 with a right-handed triad moves I^y = +1 to -1.
        let p = site_operator(Axis::Plus, 1, 1).unwrap();
        assert_abs_diff_eq!(p.get(1, 0).im, 1.0);
        assert_eq!(p.get(0, 1), ZERO);
        assert_eq!(p.get(0, 0), ZERO);
        let m = site_operator(Axis::Minus, 1, 1).unwrap();
        assert_abs_diff_eq!(m.max_abs_diff(&p.adjoint()), 0.0);
    }

    #[test]
    fn ladder_operators_match_their_definition() {
        for n in 1..=3 {
            for k in 1..=n {
                let x = site_operator(Axis::X, k, n).unwrap();
                let z = site_operator(Axis::Z, k, n).unwrap();
                let plus = &x.scale(C64::new(0.5, 0.0)) + &z.scale(C64::new(0.0, 0.5));
                let minus = &x.scale(C64::new(0.5, 0.0)) - &z.scale(C64::new(0.0, 0.5));
                assert_eq!(site_operator(Axis::Plus, k, n).unwrap().max_abs_diff(&plus), 0.0);
                assert_eq!(site_operator(Axis::Minus, k, n).unwrap().max_abs_diff(&minus), 0.0);
            }
        }
    }

    #[test]
    fn pauli_commutators_are_cyclic() {
        let n = 3;
        for k in 1..=n {
            let x = site_operator(Axis::X, k, n).unwrap();
            let y = site_operator(Axis::Y, k, n).unwrap();
            let z = site_operator(Axis::Z, k, n).unwrap();
            let two_i = C64::new(0.0, 2.0);
            assert_eq!(x.commutator(&y).max_abs_diff(&z.scale(two_i)), 0.0);
            assert_eq!(y.commutator(&z).max_abs_diff(&x.scale(two_i)), 0.0);
            assert_eq!(z.commutator(&x).max_abs_diff(&y.scale(two_i)), 0.0);
        }
        // Same handedness on the emitter.
        let x = dot_operator(Axis::X, 1);
        let y = dot_operator(Axis::Y, 1);
        let z = dot_operator(Axis::Z, 1);
        assert_eq!(x.commutator(&y).max_abs_diff(&z.scale(C64::new(0.0, 2.0))), 0.0);
    }

    #[test]
    fn site_operators_square_to_identity_and_commute_across_sites() {
        for n in 1..=4 {
            let id = OperatorMatrix::identity(Space::Env, n);
            for k in 1..=n {
                for a in Axis::PAULI {
                    let op = site_operator(a, k, n).unwrap();
                    assert_eq!((&op * &op).max_abs_diff(&id), 0.0);
                    for kk in (1..=n).filter(|&kk| kk != k) {
                        for b in [Axis::X, Axis::Y, Axis::Z, Axis::Plus, Axis::Minus] {
                            let other = site_operator(b, kk, n).unwrap();
                            assert_eq!(op.commutator(&other).max_abs(), 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn site_operator_rejects_bad_indices() {
        assert!(matches!(site_operator(Axis::X, 0, 2), Err(Error::SiteOutOfRange { .. })));
        assert!(matches!(site_operator(Axis::X, 3, 2), Err(Error::SiteOutOfRange { .. })));
        assert!(matches!(site_operator(Axis::X, 1, 0), Err(Error::EmptyBath)));
    }

    #[test]
    fn joint_embedding_matches_kron_layout() {
        let env = site_operator(Axis::Z, 2, 2).unwrap();
        let j = OperatorMatrix::joint(pauli::Y, &env).unwrap();
        let mut direct = OperatorMatrix::zeros(Space::Joint, 2);
        direct.add_product(ONE, &[(Target::Dot, Axis::Y), (Target::Site(2), Axis::Z)]).unwrap();
        assert_eq!(j.max_abs_diff(&direct), 0.0);
    }

    #[test]
    fn eig_of_small_examples() {
        let d = OperatorMatrix::diagonal(Space::Env, 1, &[C64::from(3.0), C64::from(1.0)]).unwrap();
        let e = hermitian_eig(&d).unwrap();
        assert_eq!(e.values, vec![1.0, 3.0]);
        assert_abs_diff_eq!(e.vectors.get(1, 0).norm(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.vectors.get(0, 1).norm(), 1.0, epsilon = 1e-14);

        let x = site_operator(Axis::Z, 1, 1).unwrap(); // [[0,1],[1,0]]
        let e = hermitian_eig(&x).unwrap();
        assert_abs_diff_eq!(e.values[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        for seed in 0..4 {
            let h = random_hermitian(3, Space::Joint, seed);
            let e = hermitian_eig(&h).unwrap();
            let v = e.vectors.data();
            let vh = v.t().mapv(|z| z.conj());
            let id = Array2::<C64>::eye(h.dim());
            let orth = (&vh.dot(v) - &id).iter().fold(0.0_f64, |m, z| m.max(z.norm()));
            assert!(orth < 1e-12, "V^dag V deviates by {orth}");
            let lam = Array2::from_diag(&nd::Array1::from_iter(e.values.iter().map(|&l| C64::from(l))));
            let rebuilt = v.dot(&lam).dot(&vh);
            let scale = e.values.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
            let err = (&rebuilt - h.data()).iter().fold(0.0_f64, |m, z| m.max(z.norm()));
            assert!(err < 1e-10 * scale, "reconstruction error {err}");
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn eig_rejects_non_hermitian_with_measured_asymmetry() {
        let mut a = OperatorMatrix::zeros(Space::Env, 1);
        a.data_mut()[(0, 1)] = C64::from(1.0);
        match hermitian_eig(&a) {
            Err(Error::NotHermitian { asymmetry }) => assert_abs_diff_eq!(asymmetry, 1.0),
            other => panic!("expected NotHermitian, got {other:?}"),
        }
    }

    #[test]
    fn block_eigensystem_matches_dense_spectrum() {
        // A block-diagonal operator: sum of y-type terms keeps sectors apart.
        let n = 4;
        let mut h = OperatorMatrix::zeros(Space::Env, n);
        for k in 1..=n {
            h.add_product(C64::from(0.3 * k as f64), &[(Target::Site(k), Axis::Y)]).unwrap();
            for kk in (1..=n).filter(|&kk| kk != k) {
                let c = C64::from(0.1 * (k + kk) as f64);
                h.add_product(c, &[(Target::Site(k), Axis::Plus), (Target::Site(kk), Axis::Minus)]).unwrap();
            }
        }
        let comps = sparsity_components(h.data());
        assert_eq!(comps.len(), n + 1);
        let blocked = hermitian_eig(&h).unwrap();
        let m = DMatrix::<C64>::from_fn(h.dim(), h.dim(), |i, j| h.get(i, j));
        let mut dense: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        for (a, b) in blocked.values.iter().zip(&dense) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn evolve_zero_is_identity() {
        let z = OperatorMatrix::zeros(Space::Joint, 2);
        let u = evolve_unitary(&z, 0.7).unwrap();
        assert_eq!(u.max_abs_diff(&OperatorMatrix::identity(Space::Joint, 2)), 0.0);
    }

    #[test]
    fn evolve_gives_emitter_rotation() {
        // exp(-i Y π/4) = (1/√2)[[1,-1],[1,1]]
        let y = dot_operator(Axis::Y, 0);
        let u = evolve_unitary(&y, std::f64::consts::FRAC_PI_4).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expected = [[s, -s], [s, s]];
        for r in 0..2 {
            for c in 0..2 {
                assert_abs_diff_eq!(u.get(r, c).re, expected[r][c], epsilon = 1e-14);
                assert_abs_diff_eq!(u.get(r, c).im, 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn evolve_forward_then_back_is_identity() {
        for seed in 10..13 {
            let h = random_hermitian(2, Space::Joint, seed);
            let f = evolve_unitary(&h, 0.83).unwrap();
            let b = evolve_unitary(&h, -0.83).unwrap();
            let id = OperatorMatrix::identity(Space::Joint, 2);
            assert!((&f * &b).max_abs_diff(&id) < 1e-10);
            assert!(f.unitarity_error() < 1e-10);
        }
    }

    #[test]
    fn psd_norm_examples() {
        assert_abs_diff_eq!(psd_norm(&OperatorMatrix::identity(Space::Env, 3)).unwrap(), 1.0, epsilon = 1e-14);
        let d = OperatorMatrix::diagonal(Space::Env, 1, &[C64::from(0.3), C64::from(0.7)]).unwrap();
        assert_abs_diff_eq!(psd_norm(&d).unwrap(), 0.7, epsilon = 1e-14);
        let neg = OperatorMatrix::diagonal(Space::Env, 1, &[C64::from(-0.3), C64::from(0.7)]).unwrap();
        assert!(matches!(psd_norm(&neg), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn psd_norm_agrees_with_power_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..3 {
            let m = random_matrix(8, &mut rng);
            let a = m.t().mapv(|z| z.conj()).dot(&m);
            let exact = psd_norm_array(&a).unwrap();
            let iter = power_iteration(&a);
            assert!((exact - iter).abs() < 1e-8 * exact.max(1.0), "{exact} vs {iter}");
        }
    }

    #[test]
    fn psd_norm_is_submultiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let a = random_matrix(6, &mut rng);
            let b = random_matrix(6, &mut rng);
            let ab = a.dot(&b);
            let lhs = squared_norm(&ab).unwrap();
            let rhs = squared_norm(&a).unwrap() * squared_norm(&b).unwrap();
            assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }

    #[test]
    fn sectors_for_two_sites() {
        let s = sector_projectors(2).unwrap();
        assert_eq!(s.iter().map(|p| p.m).collect::<Vec<_>>(), vec![-2, 0, 2]);
        assert_eq!(s.iter().map(|p| p.rank()).collect::<Vec<_>>(), vec![1, 2, 1]);
        let sum = s.iter().fold(OperatorMatrix::zeros(Space::Env, 2), |acc, p| &acc + &p.as_matrix());
        assert_eq!(sum.max_abs_diff(&OperatorMatrix::identity(Space::Env, 2)), 0.0);
        let p0 = s[1].as_matrix();
        assert_eq!((&(&p0 * &total_y(2)) * &p0).max_abs(), 0.0);
    }

    #[test]
    fn sector_projectors_form_a_resolution_of_identity() {
        for n in 1..=8usize {
            let s = sector_projectors(n).unwrap();
            assert_eq!(s.iter().map(|p| p.rank()).sum::<usize>(), 1 << n);
            for p in &s {
                let k = ((n as i32 + p.m) / 2) as u64;
                let binom = (0..k).fold(1u64, |acc, i| acc * (n as u64 - i) / (i + 1));
                assert_eq!(p.rank() as u64, binom);
            }
            if n <= 5 {
                let mats: Vec<_> = s.iter().map(|p| p.as_matrix()).collect();
                for (i, a) in mats.iter().enumerate() {
                    assert_eq!((a * a).max_abs_diff(a), 0.0);
                    for b in mats.iter().skip(i + 1) {
                        assert_eq!((a * b).max_abs(), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn sector_projector_rejects_impossible_m() {
        assert!(SectorProjector::new(3, 0).is_err());
        assert!(SectorProjector::new(3, 5).is_err());
        assert!(SectorProjector::new(3, -1).is_ok());
    }
}
