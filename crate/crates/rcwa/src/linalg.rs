//! Complex dense linear algebra on top of `faer`, plus a 2×2 block matrix that
//! keeps structurally zero and diagonal blocks cheap.
//!
//! Every 2ξ×2ξ operator in the solver has a natural quadrant split (x/y or s/p
//! components). Many quadrants are exactly zero or diagonal (uniform layers,
//! 1-D gratings with φ = 0), and [`BlockMat`] exploits that without changing
//! the algebra: a product or solve on a block-diagonal operator is the same
//! product or solve, just done per quadrant.

use std::fmt;

use faer::linalg::solvers::Solve;
use faer::Mat;

pub use faer::c64;

pub type CMat = Mat<c64>;

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub const J: c64 = c64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinalgError {
    Singular,
    NonFinite,
    EigenFailed,
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinalgError::Singular => f.write_str("matrix is singular to working precision"),
            LinalgError::NonFinite => f.write_str("solution contains non-finite entries"),
            LinalgError::EigenFailed => f.write_str("eigendecomposition did not converge"),
        }
    }
}

/// Pivot-ratio floor used on the production path: only breakdowns fail.
pub const RCOND_ROBUST: f64 = 1e-300;

pub fn all_finite(m: &CMat) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].is_finite()))
}

pub fn frobenius(m: &CMat) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

pub fn diag_mat(d: &[c64]) -> CMat {
    let n = d.len();
    Mat::from_fn(n, n, |i, j| if i == j { d[i] } else { ZERO })
}

fn is_all_zero(m: &CMat) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)] == ZERO))
}

fn is_diagonal(m: &CMat) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| i == j || m[(i, j)] == ZERO))
}

/// Solves `a x = b` by partial-pivot LU.
///
/// Fails when the smallest pivot magnitude falls below `rcond_min` times the
/// largest, or when the solution is not finite.
pub fn solve_dense(a: &CMat, b: &CMat, rcond_min: f64) -> Result<CMat, LinalgError> {
    let lu = a.partial_piv_lu();
    let u = lu.U();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..u.nrows() {
        let p = u[(i, i)].norm();
        lo = lo.min(p);
        hi = hi.max(p);
    }
    if u.nrows() > 0 && (lo.is_nan() || lo == 0.0 || !hi.is_finite() || lo < rcond_min * hi) {
        return Err(LinalgError::Singular);
    }
    let x = lu.solve(b);
    if !all_finite(&x) {
        return Err(LinalgError::NonFinite);
    }
    Ok(x)
}

pub fn inverse(a: &CMat, rcond_min: f64) -> Result<CMat, LinalgError> {
    solve_dense(a, &identity(a.nrows()), rcond_min)
}

/// Eigendecomposition that first splits the matrix into independent diagonal
/// blocks (connected components of its sparsity graph). Returns eigenvalues and
/// the matching eigenvector columns.
pub fn eig(m: &CMat) -> Result<(Vec<c64>, CMat), LinalgError> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for j in 0..n {
        for i in 0..n {
            if i != j && m[(i, j)] != ZERO {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }

    let mut values = vec![ZERO; n];
    let mut vectors = Mat::<c64>::zeros(n, n);
    for g in &groups {
        if g.len() == 1 {
            let i = g[0];
            values[i] = m[(i, i)];
            vectors[(i, i)] = ONE;
            continue;
        }
        let k = g.len();
        let sub = Mat::from_fn(k, k, |a, b| m[(g[a], g[b])]);
        if !all_finite(&sub) {
            return Err(LinalgError::NonFinite);
        }
        let e = sub.eigen().map_err(|_| LinalgError::EigenFailed)?;
        let s = e.S().column_vector();
        let u = e.U();
        // Columns are placed at the group's own indices so W stays aligned
        // with the block that produced it.
        for (b, &col) in g.iter().enumerate() {
            values[col] = s[b];
            for (a, &row) in g.iter().enumerate() {
                vectors[(row, col)] = u[(a, b)];
            }
        }
    }
    if values.iter().any(|v| !v.is_finite()) || !all_finite(&vectors) {
        return Err(LinalgError::EigenFailed);
    }
    Ok((values, vectors))
}

/// Whether `m` equals its conjugate transpose to within `rel_tol` of its
/// largest entry.
pub fn is_hermitian(m: &CMat, rel_tol: f64) -> bool {
    let n = m.nrows();
    if n != m.ncols() {
        return false;
    }
    let mut scale = 0.0f64;
    let mut gap = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            scale = scale.max(m[(i, j)].norm_sqr());
            gap = gap.max((m[(i, j)] - m[(j, i)].conj()).norm_sqr());
        }
    }
    scale.is_finite() && gap.sqrt() <= rel_tol * scale.sqrt()
}

fn hermitian_part(m: &CMat) -> CMat {
    let half = c64::new(0.5, 0.0);
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * half)
}

/// Eigenpairs of the Hermitian part of `m`.
pub fn eig_hermitian(m: &CMat) -> Result<(Vec<c64>, CMat), LinalgError> {
    let e = hermitian_part(m)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| LinalgError::EigenFailed)?;
    let s = e.S().column_vector();
    let values = (0..m.nrows()).map(|i| c64::new(s[i].re, 0.0)).collect();
    Ok((values, e.U().to_owned()))
}

/// Eigenpairs of `a·p` with `a` Hermitian and `p` Hermitian positive definite.
///
/// With p = L Lᴴ, a·p = L⁻ᴴ (Lᴴ a L) Lᴴ, so the eigenvectors are L⁻ᴴ Y where
/// Y diagonalizes the Hermitian matrix Lᴴ a L.
pub fn eig_hermitian_product(a: &CMat, p: &CMat) -> Result<(Vec<c64>, CMat), LinalgError> {
    let llt = hermitian_part(p).llt(faer::Side::Lower).map_err(|_| LinalgError::Singular)?;
    let l = llt.L();
    let h = l.adjoint() * hermitian_part(a) * l;
    let (values, mut y) = eig_hermitian(&h)?;
    faer::linalg::triangular_solve::solve_upper_triangular_in_place(l.adjoint(), y.as_mut(), faer::Par::Seq);
    if !all_finite(&y) {
        return Err(LinalgError::NonFinite);
    }
    Ok((values, y))
}

pub fn round_to_f32(z: c64) -> c64 {
    c64::new(z.re as f32 as f64, z.im as f32 as f64)
}

/// One n×n quadrant of a [`BlockMat`].
#[derive(Debug, Clone)]
pub enum Block {
    Zero,
    Diag(Vec<c64>),
    Dense(CMat),
}

impl Block {
    pub fn identity(n: usize) -> Block {
        Block::Diag(vec![ONE; n])
    }

    /// Diagonal block, collapsed to `Zero` when every entry vanishes.
    pub fn diag(d: Vec<c64>) -> Block {
        if d.iter().all(|&x| x == ZERO) {
            Block::Zero
        } else {
            Block::Diag(d)
        }
    }

    /// Dense block, collapsed to the narrowest exact structure.
    pub fn structured(m: CMat) -> Block {
        if is_all_zero(&m) {
            Block::Zero
        } else if is_diagonal(&m) {
            Block::Diag((0..m.nrows()).map(|i| m[(i, i)]).collect())
        } else {
            Block::Dense(m)
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Block::Zero)
    }

    pub fn to_dense(&self, n: usize) -> CMat {
        match self {
            Block::Zero => Mat::zeros(n, n),
            Block::Diag(d) => diag_mat(d),
            Block::Dense(m) => m.clone(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        match self {
            Block::Zero => ZERO,
            Block::Diag(d) => {
                if i == j {
                    d[i]
                } else {
                    ZERO
                }
            }
            Block::Dense(m) => m[(i, j)],
        }
    }

    pub fn scale_rows(&self, d: &[c64]) -> Block {
        if d.iter().all(|&x| x == ZERO) {
            return Block::Zero;
        }
        match self {
            Block::Zero => Block::Zero,
            Block::Diag(a) => Block::diag(a.iter().zip(d).map(|(x, y)| x * y).collect()),
            Block::Dense(m) => {
                Block::Dense(Mat::from_fn(m.nrows(), m.ncols(), |i, j| d[i] * m[(i, j)]))
            }
        }
    }

    pub fn scale_cols(&self, d: &[c64]) -> Block {
        if d.iter().all(|&x| x == ZERO) {
            return Block::Zero;
        }
        match self {
            Block::Zero => Block::Zero,
            Block::Diag(a) => Block::diag(a.iter().zip(d).map(|(x, y)| x * y).collect()),
            Block::Dense(m) => {
                Block::Dense(Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * d[j]))
            }
        }
    }

    pub fn scale(&self, s: c64) -> Block {
        match self {
            Block::Zero => Block::Zero,
            Block::Diag(a) => Block::diag(a.iter().map(|x| x * s).collect()),
            Block::Dense(m) => Block::Dense(Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s)),
        }
    }

    pub fn neg(&self) -> Block {
        self.scale(c64::new(-1.0, 0.0))
    }

    pub fn mul(&self, o: &Block) -> Block {
        match (self, o) {
            (Block::Zero, _) | (_, Block::Zero) => Block::Zero,
            (Block::Diag(a), _) => o.scale_rows(a),
            (_, Block::Diag(b)) => self.scale_cols(b),
            (Block::Dense(a), Block::Dense(b)) => Block::Dense(a * b),
        }
    }

    pub fn add(&self, o: &Block) -> Block {
        match (self, o) {
            (Block::Zero, x) | (x, Block::Zero) => x.clone(),
            (Block::Diag(a), Block::Diag(b)) => {
                Block::diag(a.iter().zip(b).map(|(x, y)| x + y).collect())
            }
            (Block::Diag(a), Block::Dense(m)) | (Block::Dense(m), Block::Diag(a)) => {
                let mut r = m.clone();
                for (i, x) in a.iter().enumerate() {
                    r[(i, i)] += x;
                }
                Block::Dense(r)
            }
            (Block::Dense(a), Block::Dense(b)) => Block::Dense(a + b),
        }
    }

    pub fn sub(&self, o: &Block) -> Block {
        self.add(&o.neg())
    }

    pub fn map(&self, f: impl Fn(c64) -> c64) -> Block {
        match self {
            Block::Zero => Block::Zero,
            Block::Diag(a) => Block::diag(a.iter().map(|&x| f(x)).collect()),
            Block::Dense(m) => Block::Dense(Mat::from_fn(m.nrows(), m.ncols(), |i, j| f(m[(i, j)]))),
        }
    }

    pub fn matvec(&self, x: &[c64]) -> Vec<c64> {
        let mut y = vec![ZERO; x.len()];
        self.matvec_into(x, &mut y);
        y
    }

    fn matvec_into(&self, x: &[c64], y: &mut [c64]) {
        match self {
            Block::Zero => {}
            Block::Diag(a) => {
                for i in 0..a.len() {
                    y[i] += a[i] * x[i];
                }
            }
            Block::Dense(m) => {
                for j in 0..m.ncols() {
                    let xj = x[j];
                    if xj == ZERO {
                        continue;
                    }
                    for i in 0..m.nrows() {
                        y[i] += m[(i, j)] * xj;
                    }
                }
            }
        }
    }

    /// `self⁻¹ · r` for a length-n vector.
    pub fn solve_vec(&self, r: &[c64], rcond: f64) -> Result<Vec<c64>, LinalgError> {
        match self {
            Block::Zero => Err(LinalgError::Singular),
            Block::Diag(d) => {
                if d.iter().any(|x| *x == ZERO) {
                    return Err(LinalgError::Singular);
                }
                Ok(r.iter().zip(d).map(|(a, b)| a / b).collect())
            }
            Block::Dense(a) => {
                let x = solve_dense(a, &Mat::from_fn(r.len(), 1, |i, _| r[i]), rcond)?;
                Ok((0..r.len()).map(|i| x[(i, 0)]).collect())
            }
        }
    }

    /// Solves `self · [z0 z1] = [r0 r1]` with one factorization.
    /// `self⁻¹ · rhs`.
    pub fn solve(&self, n: usize, rhs: &Block, rcond: f64) -> Result<Block, LinalgError> {
        Ok(self.solve_pair(n, rhs, &Block::Zero, rcond)?.0)
    }

    fn solve_pair(
        &self,
        n: usize,
        r0: &Block,
        r1: &Block,
        rcond: f64,
    ) -> Result<(Block, Block), LinalgError> {
        match self {
            Block::Zero => Err(LinalgError::Singular),
            Block::Diag(d) => {
                if d.iter().any(|x| *x == ZERO) {
                    return Err(LinalgError::Singular);
                }
                let inv: Vec<c64> = d.iter().map(|x| x.inv()).collect();
                let out = (r0.scale_rows(&inv), r1.scale_rows(&inv));
                Ok(out)
            }
            Block::Dense(a) => {
                if r0.is_zero() && r1.is_zero() {
                    // Still reject a singular operator.
                    solve_dense(a, &Mat::zeros(n, 0), rcond)?;
                    return Ok((Block::Zero, Block::Zero));
                }
                // Only the nonzero right-hand sides are solved for.
                let live: Vec<&Block> = [r0, r1].into_iter().filter(|r| !r.is_zero()).collect();
                let rhs = Mat::from_fn(n, live.len() * n, |i, j| live[j / n].get(i, j % n));
                let x = solve_dense(a, &rhs, rcond)?;
                let mut cols = (0..live.len()).map(|c| Block::Dense(x.subcols(c * n, n).to_owned()));
                let z0 = if r0.is_zero() { Block::Zero } else { cols.next().unwrap() };
                let z1 = if r1.is_zero() { Block::Zero } else { cols.next().unwrap() };
                Ok((z0, z1))
            }
        }
    }
}

/// A 2n×2n matrix stored as four n×n quadrants.
#[derive(Debug, Clone)]
pub struct BlockMat {
    pub n: usize,
    pub b: [[Block; 2]; 2],
}

impl BlockMat {
    pub fn new(n: usize, b00: Block, b01: Block, b10: Block, b11: Block) -> Self {
        BlockMat { n, b: [[b00, b01], [b10, b11]] }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(n, Block::identity(n), Block::Zero, Block::Zero, Block::identity(n))
    }

    /// Diagonal operator from a length-2n vector.
    pub fn diag(d: &[c64]) -> Self {
        let n = d.len() / 2;
        Self::new(
            n,
            Block::diag(d[..n].to_vec()),
            Block::Zero,
            Block::Zero,
            Block::diag(d[n..].to_vec()),
        )
    }

    pub fn from_dense(m: &CMat) -> Self {
        let n = m.nrows() / 2;
        let q = |r: usize, c: usize| Block::structured(m.submatrix(r * n, c * n, n, n).to_owned());
        Self::new(n, q(0, 0), q(0, 1), q(1, 0), q(1, 1))
    }

    pub fn to_dense(&self) -> CMat {
        let n = self.n;
        Mat::from_fn(2 * n, 2 * n, |i, j| self.b[i / n][j / n].get(i % n, j % n))
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        let n = self.n;
        self.b[i / n][j / n].get(i % n, j % n)
    }

    pub fn is_block_diagonal(&self) -> bool {
        self.b[0][1].is_zero() && self.b[1][0].is_zero()
    }

    pub fn is_anti_diagonal(&self) -> bool {
        self.b[0][0].is_zero() && self.b[1][1].is_zero()
    }

    pub fn mul(&self, o: &BlockMat) -> BlockMat {
        let e = |i: usize, j: usize| self.b[i][0].mul(&o.b[0][j]).add(&self.b[i][1].mul(&o.b[1][j]));
        BlockMat::new(self.n, e(0, 0), e(0, 1), e(1, 0), e(1, 1))
    }

    pub fn add(&self, o: &BlockMat) -> BlockMat {
        let e = |i: usize, j: usize| self.b[i][j].add(&o.b[i][j]);
        BlockMat::new(self.n, e(0, 0), e(0, 1), e(1, 0), e(1, 1))
    }

    pub fn sub(&self, o: &BlockMat) -> BlockMat {
        let e = |i: usize, j: usize| self.b[i][j].sub(&o.b[i][j]);
        BlockMat::new(self.n, e(0, 0), e(0, 1), e(1, 0), e(1, 1))
    }

    pub fn scale(&self, s: c64) -> BlockMat {
        let e = |i: usize, j: usize| self.b[i][j].scale(s);
        BlockMat::new(self.n, e(0, 0), e(0, 1), e(1, 0), e(1, 1))
    }

    /// `diag(d) · self` for a length-2n vector `d`.
    pub fn scale_rows(&self, d: &[c64]) -> BlockMat {
        let n = self.n;
        let e = |i: usize, j: usize| self.b[i][j].scale_rows(&d[i * n..(i + 1) * n]);
        BlockMat::new(n, e(0, 0), e(0, 1), e(1, 0), e(1, 1))
    }

    /// `self · diag(d)` for a length-2n vector `d`.
    pub fn scale_cols(&self, d: &[c64]) -> BlockMat {
        let n = self.n;
        let e = |i: usize, j: usize| self.b[i][j].scale_cols(&d[j * n..(j + 1) * n]);
        BlockMat::new(n, e(0, 0), e(0, 1), e(1, 0), e(1, 1))
    }

    pub fn map(&self, f: impl Fn(c64) -> c64 + Copy) -> BlockMat {
        let e = |i: usize, j: usize| self.b[i][j].map(f);
        BlockMat::new(self.n, e(0, 0), e(0, 1), e(1, 0), e(1, 1))
    }

    pub fn matvec(&self, x: &[c64]) -> Vec<c64> {
        let n = self.n;
        let mut y = vec![ZERO; 2 * n];
        for i in 0..2 {
            for j in 0..2 {
                let (head, tail) = y.split_at_mut(n);
                let yi = if i == 0 { head } else { tail };
                self.b[i][j].matvec_into(&x[j * n..(j + 1) * n], yi);
            }
        }
        y
    }

    pub fn inverse(&self, rcond: f64) -> Result<BlockMat, LinalgError> {
        self.solve(&BlockMat::identity(self.n), rcond)
    }

    /// `self⁻¹ · rhs`, using per-quadrant solves when `self` is block- or
    /// anti-diagonal and a dense 2n solve otherwise.
    pub fn solve(&self, rhs: &BlockMat, rcond: f64) -> Result<BlockMat, LinalgError> {
        let n = self.n;
        let [[r00, r01], [r10, r11]] = &rhs.b;
        if self.is_block_diagonal() {
            let (z00, z01) = self.b[0][0].solve_pair(n, r00, r01, rcond)?;
            let (z10, z11) = self.b[1][1].solve_pair(n, r10, r11, rcond)?;
            return Ok(BlockMat::new(n, z00, z01, z10, z11));
        }
        if self.is_anti_diagonal() {
            // [[0, X], [Y, 0]] Z = R  ⇒  X [z10 z11] = [r00 r01], Y [z00 z01] = [r10 r11]
            let (z10, z11) = self.b[0][1].solve_pair(n, r00, r01, rcond)?;
            let (z00, z01) = self.b[1][0].solve_pair(n, r10, r11, rcond)?;
            return Ok(BlockMat::new(n, z00, z01, z10, z11));
        }
        let x = solve_dense(&self.to_dense(), &rhs.to_dense(), rcond)?;
        Ok(BlockMat::from_dense(&x))
    }

    /// `self⁻¹ · rhs` for a length-2n vector.
    pub fn solve_vec(&self, rhs: &[c64], rcond: f64) -> Result<Vec<c64>, LinalgError> {
        let n = self.n;
        let (r0, r1) = rhs.split_at(n);
        if self.is_block_diagonal() {
            let mut z = self.b[0][0].solve_vec(r0, rcond)?;
            z.extend(self.b[1][1].solve_vec(r1, rcond)?);
            return Ok(z);
        }
        if self.is_anti_diagonal() {
            let mut z = self.b[1][0].solve_vec(r1, rcond)?;
            z.extend(self.b[0][1].solve_vec(r0, rcond)?);
            return Ok(z);
        }
        let x = solve_dense(&self.to_dense(), &Mat::from_fn(2 * n, 1, |i, _| rhs[i]), rcond)?;
        Ok((0..2 * n).map(|i| x[(i, 0)]).collect())
    }

    /// Eigendecomposition; a block-diagonal operator is decomposed per quadrant.
    pub fn eig(&self) -> Result<(Vec<c64>, BlockMat), LinalgError> {
        let n = self.n;
        if self.is_block_diagonal() {
            let mut values = Vec::with_capacity(2 * n);
            let mut vecs = Vec::with_capacity(2);
            for k in 0..2 {
                match &self.b[k][k] {
                    Block::Zero => {
                        values.extend(std::iter::repeat_n(ZERO, n));
                        vecs.push(Block::identity(n));
                    }
                    Block::Diag(d) => {
                        values.extend_from_slice(d);
                        vecs.push(Block::identity(n));
                    }
                    Block::Dense(m) => {
                        let (v, w) = eig(m)?;
                        values.extend(v);
                        vecs.push(Block::structured(w));
                    }
                }
            }
            let w11 = vecs.pop().unwrap();
            let w00 = vecs.pop().unwrap();
            return Ok((values, BlockMat::new(n, w00, Block::Zero, Block::Zero, w11)));
        }
        let (v, w) = eig(&self.to_dense())?;
        Ok((v, BlockMat::from_dense(&w)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    fn sample(n: usize, seed: u64) -> CMat {
        let mut s = seed;
        Mat::from_fn(n, n, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = ((s >> 33) as f64) / (1u64 << 31) as f64 - 0.5;
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = ((s >> 33) as f64) / (1u64 << 31) as f64 - 0.5;
            c(a, b)
        })
    }

    fn max_diff(a: &CMat, b: &CMat) -> f64 {
        let mut m = 0.0f64;
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                m = m.max((a[(i, j)] - b[(i, j)]).norm());
            }
        }
        m
    }

    fn structured_sample(n: usize) -> BlockMat {
        BlockMat::new(
            n,
            Block::Dense(sample(n, 1)),
            Block::Diag((0..n).map(|i| c(i as f64 + 1.0, 0.5)).collect()),
            Block::Zero,
            Block::Dense(sample(n, 2)),
        )
    }

    #[test]
    fn block_product_matches_dense() {
        let a = structured_sample(4);
        let b = BlockMat::from_dense(&sample(8, 3));
        let got = a.mul(&b).to_dense();
        let want = &a.to_dense() * &b.to_dense();
        assert!(max_diff(&got, &want) < 1e-13);
    }

    #[test]
    fn block_solves_match_dense() {
        let n = 5;
        let rhs = BlockMat::from_dense(&sample(2 * n, 9));
        let cases = [
            structured_sample(n),
            BlockMat::new(n, Block::Dense(sample(n, 4)), Block::Zero, Block::Zero, Block::Diag(vec![c(2.0, 1.0); n])),
            BlockMat::new(n, Block::Zero, Block::Dense(sample(n, 5)), Block::Dense(sample(n, 6)), Block::Zero),
        ];
        for a in &cases {
            let x = a.solve(&rhs, RCOND_ROBUST).unwrap();
            let back = a.mul(&x).to_dense();
            assert!(max_diff(&back, &rhs.to_dense()) < 1e-11);
        }
    }

    #[test]
    fn vector_solves_match_dense() {
        let n = 4;
        let rhs: Vec<c64> = (0..2 * n).map(|i| c(1.0 + i as f64, 0.25 * i as f64)).collect();
        let cases = [
            structured_sample(n),
            BlockMat::new(n, Block::Dense(sample(n, 4)), Block::Zero, Block::Zero, Block::Diag(vec![c(2.0, 1.0); n])),
            BlockMat::new(n, Block::Zero, Block::Dense(sample(n, 5)), Block::Dense(sample(n, 6)), Block::Zero),
        ];
        for a in &cases {
            let x = a.solve_vec(&rhs, RCOND_ROBUST).unwrap();
            let back = a.matvec(&x);
            for (u, v) in back.iter().zip(&rhs) {
                assert!((u - v).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn singular_operator_is_reported() {
        let a = BlockMat::new(2, Block::Zero, Block::Zero, Block::Zero, Block::identity(2));
        assert_eq!(a.solve(&BlockMat::identity(2), RCOND_ROBUST).unwrap_err(), LinalgError::Singular);
    }

    #[test]
    fn eig_splits_components() {
        // Two decoupled 2×2 blocks interleaved with a lone diagonal entry.
        let mut m = Mat::<c64>::zeros(5, 5);
        m[(0, 0)] = c(1.0, 0.0);
        m[(0, 3)] = c(2.0, 0.0);
        m[(3, 0)] = c(0.5, 0.0);
        m[(3, 3)] = c(-1.0, 0.0);
        m[(1, 1)] = c(7.0, 1.0);
        m[(2, 2)] = c(0.0, 2.0);
        m[(2, 4)] = c(1.0, 1.0);
        m[(4, 2)] = c(3.0, 0.0);
        let (vals, vecs) = eig(&m).unwrap();
        let lhs = &m * &vecs;
        let rhs = &vecs * &diag_mat(&vals);
        assert!(max_diff(&lhs, &rhs) < 1e-12);
        assert_eq!(vals[1], c(7.0, 1.0));
        assert_eq!(vecs[(1, 1)], ONE);
    }

    #[test]
    fn hermitian_paths_match_general_eig() {
        let g = sample(6, 11);
        let a = &g + g.adjoint();
        let h = sample(6, 12);
        let p = &h * h.adjoint() + Mat::<c64>::identity(6, 6);
        let sorted = |v: &[c64]| {
            let mut r: Vec<f64> = v.iter().map(|z| z.re).collect();
            r.sort_by(f64::total_cmp);
            r
        };
        let (gv, _) = eig(&a).unwrap();
        let (hv, hvec) = eig_hermitian(&a).unwrap();
        for (x, y) in sorted(&gv).iter().zip(sorted(&hv)) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(max_diff(&(&a * &hvec), &(&hvec * &diag_mat(&hv))) < 1e-12);

        let ap = &a * &p;
        let (gv, _) = eig(&ap).unwrap();
        let (pv, pvec) = eig_hermitian_product(&a, &p).unwrap();
        for (x, y) in sorted(&gv).iter().zip(sorted(&pv)) {
            assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()));
        }
        assert!(max_diff(&(&ap * &pvec), &(&pvec * &diag_mat(&pv))) < 1e-10);
    }

    #[test]
    fn matvec_matches_dense() {
        let a = structured_sample(3);
        let x: Vec<c64> = (0..6).map(|i| c(i as f64, -(i as f64) * 0.5)).collect();
        let y = a.matvec(&x);
        let d = a.to_dense();
        for i in 0..6 {
            let want: c64 = (0..6).map(|j| d[(i, j)] * x[j]).sum();
            assert!((y[i] - want).norm() < 1e-13);
        }
    }
}
