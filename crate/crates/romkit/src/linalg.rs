//! Dense and banded matrix support for the implicit solvers.
//!
//! Reduced systems are small and dense; the full-order Jacobians of the
//! included testbeds are banded. Newton systems `M - c*J` are assembled in
//! whichever storage both operands fit and factorized directly: dense LU via
//! nalgebra, banded LU with partial pivoting implemented here (LAPACK `gbtrf`
//! layout, `kl` extra superdiagonals for pivoting fill).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// General band matrix with `kl` subdiagonals and `ku` superdiagonals.
///
/// Entry `(i, j)` is stored iff `-kl <= i - j <= ku`; storage is column-major
/// band layout: column `j` occupies `kl + ku + 1` consecutive values, with
/// `(i, j)` at band row `ku + i - j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMat {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandMat {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandMat { n, kl, ku, data: vec![0.0; n * (kl + ku + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        i + self.ku >= j && j + self.kl >= i
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(self.in_band(i, j));
        j * (self.kl + self.ku + 1) + (self.ku + i - j)
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.n && j < self.n, "index out of range");
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Sets entry `(i, j)`; panics outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            i < self.n && j < self.n && self.in_band(i, j),
            "entry ({i}, {j}) outside band (kl={}, ku={})",
            self.kl,
            self.ku
        );
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// Adds `v` to entry `(i, j)`; panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            i < self.n && j < self.n && self.in_band(i, j),
            "entry ({i}, {j}) outside band (kl={}, ku={})",
            self.kl,
            self.ku
        );
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            for i in j.saturating_sub(self.ku)..(j + self.kl + 1).min(self.n) {
                m[(i, j)] = self.data[self.idx(i, j)];
            }
        }
        m
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.n, "matvec dimension mismatch");
        let mut y = DVector::zeros(self.n);
        let ld = self.kl + self.ku + 1;
        for j in 0..self.n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let i0 = j.saturating_sub(self.ku);
            let i1 = (j + self.kl + 1).min(self.n);
            let col = &self.data[j * ld..(j + 1) * ld];
            for i in i0..i1 {
                y[i] += col[self.ku + i - j] * xj;
            }
        }
        y
    }

    /// `A * B` with dense `B` (used for projecting banded Jacobians).
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.n, "mul_dense dimension mismatch");
        let ld = self.kl + self.ku + 1;
        let mut out = DMatrix::zeros(self.n, b.ncols());
        for j in 0..self.n {
            let i0 = j.saturating_sub(self.ku);
            let i1 = (j + self.kl + 1).min(self.n);
            let col = &self.data[j * ld..(j + 1) * ld];
            for c in 0..b.ncols() {
                let bjc = b[(j, c)];
                if bjc == 0.0 {
                    continue;
                }
                for i in i0..i1 {
                    out[(i, c)] += col[self.ku + i - j] * bjc;
                }
            }
        }
        out
    }

    /// Rows `rows` of `A * B` without forming the full product.
    pub fn gather_rows_mul(&self, rows: &[usize], b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.n, "gather_rows_mul dimension mismatch");
        let mut out = DMatrix::zeros(rows.len(), b.ncols());
        for (s, &r) in rows.iter().enumerate() {
            assert!(r < self.n, "sample row out of range");
            let j0 = r.saturating_sub(self.kl);
            let j1 = (r + self.ku + 1).min(self.n);
            for j in j0..j1 {
                let a = self.data[self.idx(r, j)];
                if a == 0.0 {
                    continue;
                }
                for c in 0..b.ncols() {
                    out[(s, c)] += a * b[(j, c)];
                }
            }
        }
        out
    }

    /// `alpha * A + beta * B`, widening the band to fit both operands.
    pub fn linear_comb(alpha: f64, a: &BandMat, beta: f64, b: &BandMat) -> BandMat {
        assert_eq!(a.n, b.n, "linear_comb dimension mismatch");
        let kl = a.kl.max(b.kl);
        let ku = a.ku.max(b.ku);
        let mut out = BandMat::zeros(a.n, kl, ku);
        for j in 0..a.n {
            let i0 = j.saturating_sub(ku);
            let i1 = (j + kl + 1).min(a.n);
            for i in i0..i1 {
                let mut v = 0.0;
                if a.in_band(i, j) {
                    v += alpha * a.data[a.idx(i, j)];
                }
                if b.in_band(i, j) {
                    v += beta * b.data[b.idx(i, j)];
                }
                let k = out.idx(i, j);
                out.data[k] = v;
            }
        }
        out
    }

    /// LU factorization with partial pivoting in expanded band storage.
    pub fn factorize(&self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let kv = kl + ku; // superdiagonals in the work array (fill from pivoting)
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![0.0f64; n * ldab];
        // Copy band shifted down by kl rows: A(i, j) at ab[j*ldab + kv + i - j].
        for j in 0..n {
            let i0 = j.saturating_sub(ku);
            let i1 = (j + kl + 1).min(n);
            for i in i0..i1 {
                ab[j * ldab + kv + i - j] = self.data[self.idx(i, j)];
            }
        }
        let mut ipiv = vec![0usize; n];
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // Pivot search in column j, rows j..=j+km.
            let base = j * ldab + kv;
            let mut jp = 0usize;
            let mut pmax = ab[base].abs();
            for ii in 1..=km {
                let v = ab[base + ii].abs();
                if v > pmax {
                    pmax = v;
                    jp = ii;
                }
            }
            ipiv[j] = j + jp;
            let pivot = ab[base + jp];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::SingularMatrix(format!(
                    "band factorization: zero or non-finite pivot at column {j}"
                )));
            }
            if jp != 0 {
                // Swap rows j and j+jp across columns j..=min(n-1, j+kv).
                for c in j..(j + kv + 1).min(n) {
                    let idx1 = c * ldab + kv + j - c;
                    ab.swap(idx1, idx1 + jp);
                }
            }
            if km > 0 {
                let pivot = ab[base];
                for ii in 1..=km {
                    ab[base + ii] /= pivot;
                }
                for c in (j + 1)..(j + kv + 1).min(n) {
                    let cbase = c * ldab + kv;
                    let ujc = ab[cbase + j - c];
                    if ujc != 0.0 {
                        for ii in 1..=km {
                            ab[cbase + j + ii - c] -= ab[base + ii] * ujc;
                        }
                    }
                }
            }
        }
        Ok(BandLu { n, kl, kv, ldab, ab, ipiv })
    }
}

/// Partial-pivoting LU factors of a [`BandMat`].
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    kv: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    /// Solves `A x = rhs`.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        assert_eq!(rhs.len(), self.n, "solve dimension mismatch");
        let mut b = rhs.clone();
        // L solve (unit lower, pivoted).
        for j in 0..self.n.saturating_sub(1) {
            let km = self.kl.min(self.n - 1 - j);
            let jp = self.ipiv[j];
            if jp != j {
                b.swap_rows(j, jp);
            }
            let bj = b[j];
            if bj != 0.0 {
                let base = j * self.ldab + self.kv;
                for ii in 1..=km {
                    b[j + ii] -= self.ab[base + ii] * bj;
                }
            }
        }
        // U solve (bandwidth kv).
        for j in (0..self.n).rev() {
            let base = j * self.ldab + self.kv;
            b[j] /= self.ab[base];
            let bj = b[j];
            if bj != 0.0 {
                let i0 = j.saturating_sub(self.kv);
                for i in i0..j {
                    b[i] -= self.ab[base + i - j] * bj;
                }
            }
        }
        b
    }
}

/// Jacobian (or general system matrix) in dense or banded storage.
#[derive(Debug, Clone)]
pub enum SysMatrix {
    Dense(DMatrix<f64>),
    Band(BandMat),
}

impl SysMatrix {
    pub fn dim(&self) -> usize {
        match self {
            SysMatrix::Dense(m) => m.nrows(),
            SysMatrix::Band(b) => b.dim(),
        }
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            SysMatrix::Dense(m) => m * x,
            SysMatrix::Band(b) => b.matvec(x),
        }
    }

    pub fn mul_dense(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            SysMatrix::Dense(m) => m * rhs,
            SysMatrix::Band(b) => b.mul_dense(rhs),
        }
    }

    /// Rows `rows` of `A * rhs`.
    pub fn gather_rows_mul(&self, rows: &[usize], rhs: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            SysMatrix::Dense(m) => {
                let mut out = DMatrix::zeros(rows.len(), rhs.ncols());
                for (s, &r) in rows.iter().enumerate() {
                    out.set_row(s, &(m.row(r) * rhs));
                }
                out
            }
            SysMatrix::Band(b) => b.gather_rows_mul(rows, rhs),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            SysMatrix::Dense(m) => m.clone(),
            SysMatrix::Band(b) => b.to_dense(),
        }
    }

    pub fn factorize(self) -> Result<SysFactor> {
        match self {
            SysMatrix::Dense(m) => {
                let lu = m.lu();
                if !lu.is_invertible() {
                    return Err(Error::SingularMatrix("dense factorization".into()));
                }
                Ok(SysFactor::Dense(Box::new(lu)))
            }
            SysMatrix::Band(b) => Ok(SysFactor::Band(b.factorize()?)),
        }
    }
}

/// Factorized system matrix ready for repeated solves.
pub enum SysFactor {
    Dense(Box<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>),
    Band(BandLu),
}

impl SysFactor {
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            SysFactor::Dense(lu) => lu
                .solve(rhs)
                .ok_or_else(|| Error::SingularMatrix("dense solve".into())),
            SysFactor::Band(lu) => Ok(lu.solve(rhs)),
        }
    }
}

/// Constant mass matrix of a dynamical system.
#[derive(Debug, Clone)]
pub enum Mass {
    Identity(usize),
    Band(BandMat),
    Dense(DMatrix<f64>),
}

impl Mass {
    pub fn dim(&self) -> usize {
        match self {
            Mass::Identity(n) => *n,
            Mass::Band(b) => b.dim(),
            Mass::Dense(m) => m.nrows(),
        }
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Mass::Identity(n) => {
                assert_eq!(x.len(), *n, "mass matvec dimension mismatch");
                x.clone()
            }
            Mass::Band(b) => b.matvec(x),
            Mass::Dense(m) => m * x,
        }
    }

    pub fn mul_dense(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Mass::Identity(n) => {
                assert_eq!(rhs.nrows(), *n, "mass mul dimension mismatch");
                rhs.clone()
            }
            Mass::Band(b) => b.mul_dense(rhs),
            Mass::Dense(m) => m * rhs,
        }
    }

    /// Checks invertibility by attempting a factorization.
    pub fn verify_invertible(&self) -> Result<()> {
        match self {
            Mass::Identity(_) => Ok(()),
            Mass::Band(b) => b.factorize().map(|_| ()),
            Mass::Dense(m) => {
                if m.clone().lu().is_invertible() {
                    Ok(())
                } else {
                    Err(Error::SingularMatrix("mass matrix".into()))
                }
            }
        }
    }
}

/// Assembles the Newton iteration matrix `M - c * J` in the narrowest storage
/// that holds both operands.
pub fn newton_matrix(mass: &Mass, jac: &SysMatrix, c: f64) -> SysMatrix {
    assert_eq!(mass.dim(), jac.dim(), "newton_matrix dimension mismatch");
    match (mass, jac) {
        (Mass::Identity(n), SysMatrix::Band(b)) => {
            let mut out = BandMat::linear_comb(-c, b, 0.0, b);
            for i in 0..*n {
                out.add(i, i, 1.0);
            }
            SysMatrix::Band(out)
        }
        (Mass::Identity(_), SysMatrix::Dense(d)) => {
            let mut m = d * (-c);
            for i in 0..m.nrows() {
                m[(i, i)] += 1.0;
            }
            SysMatrix::Dense(m)
        }
        (Mass::Band(mb), SysMatrix::Band(jb)) => {
            SysMatrix::Band(BandMat::linear_comb(1.0, mb, -c, jb))
        }
        (Mass::Band(mb), SysMatrix::Dense(jd)) => SysMatrix::Dense(mb.to_dense() - jd * c),
        (Mass::Dense(md), j) => SysMatrix::Dense(md - j.to_dense() * c),
    }
}

#[cfg(test)]
mod band_tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> BandMat {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut b = BandMat::zeros(n, kl, ku);
        for j in 0..n {
            for i in j.saturating_sub(ku)..(j + kl + 1).min(n) {
                b.set(i, j, rng.random_range(-1.0..1.0));
            }
        }
        // Diagonal boost keeps the test matrices comfortably invertible.
        for i in 0..n {
            b.add(i, i, 3.0 + (kl + ku) as f64);
        }
        b
    }

    #[test]
    fn get_set_matches_dense_layout() {
        let mut b = BandMat::zeros(5, 1, 2);
        b.set(0, 2, 7.0);
        b.set(3, 2, -1.5);
        b.set(4, 4, 2.0);
        assert_eq!(b.get(0, 2), 7.0);
        assert_eq!(b.get(3, 2), -1.5);
        assert_eq!(b.get(2, 0), 0.0); // outside band
        let d = b.to_dense();
        assert_eq!(d[(0, 2)], 7.0);
        assert_eq!(d[(3, 2)], -1.5);
        assert_eq!(d[(4, 4)], 2.0);
    }

    #[test]
    #[should_panic(expected = "outside band")]
    fn set_outside_band_panics() {
        let mut b = BandMat::zeros(5, 1, 1);
        b.set(4, 0, 1.0);
    }

    #[test]
    fn band_solve_matches_dense_lu() {
        for &(n, kl, ku, seed) in &[
            (1usize, 0usize, 0usize, 1u64),
            (6, 0, 0, 2),
            (7, 1, 1, 3),
            (12, 2, 5, 4),
            (25, 6, 3, 5),
            (40, 9, 9, 6),
        ] {
            let b = random_band(n, kl, ku, seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 100);
            let rhs = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let x_band = b.factorize().unwrap().solve(&rhs);
            let x_dense = b.to_dense().lu().solve(&rhs).unwrap();
            assert!(
                (&x_band - &x_dense).amax() < 1e-10,
                "band vs dense solve mismatch for n={n}, kl={kl}, ku={ku}"
            );
        }
    }

    #[test]
    fn band_solve_pivots_through_zero_diagonal() {
        // Leading diagonal entry zero: factorization must row-swap to survive.
        let mut b = BandMat::zeros(4, 1, 1);
        b.set(0, 0, 0.0);
        b.set(0, 1, 2.0);
        b.set(1, 0, 3.0);
        b.set(1, 1, 1.0);
        b.set(1, 2, -1.0);
        b.set(2, 1, 1.0);
        b.set(2, 2, 4.0);
        b.set(2, 3, 1.0);
        b.set(3, 2, 2.0);
        b.set(3, 3, 5.0);
        let rhs = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let x = b.factorize().unwrap().solve(&rhs);
        assert!((b.to_dense() * &x - rhs).amax() < 1e-12);
    }

    #[test]
    fn singular_band_reports_error() {
        let b = BandMat::zeros(3, 1, 1); // all-zero matrix
        assert!(matches!(b.factorize(), Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn linear_comb_widens_band() {
        let a = random_band(8, 1, 0, 7);
        let b = random_band(8, 0, 2, 8);
        let c = BandMat::linear_comb(2.0, &a, -0.5, &b);
        let expect = a.to_dense() * 2.0 - b.to_dense() * 0.5;
        assert!((c.to_dense() - expect).amax() < 1e-14);
    }

    #[test]
    fn gather_rows_matches_full_product() {
        let a = random_band(10, 2, 3, 9);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let phi = DMatrix::from_fn(10, 4, |_, _| rng.random_range(-1.0..1.0));
        let rows = vec![0usize, 3, 9, 3];
        let partial = a.gather_rows_mul(&rows, &phi);
        let full = a.to_dense() * &phi;
        for (s, &r) in rows.iter().enumerate() {
            for c in 0..4 {
                assert!((partial[(s, c)] - full[(r, c)]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn newton_matrix_combinations_match_dense_formula() {
        let n = 9;
        let jb = random_band(n, 2, 1, 11);
        let jd = SysMatrix::Dense(jb.to_dense());
        let mb = random_band(n, 1, 1, 12);
        let c = 0.37;
        let jd_dense = jb.to_dense();
        let cases: Vec<(Mass, SysMatrix, DMatrix<f64>)> = vec![
            (
                Mass::Identity(n),
                SysMatrix::Band(jb.clone()),
                DMatrix::identity(n, n) - &jd_dense * c,
            ),
            (Mass::Identity(n), jd.clone(), DMatrix::identity(n, n) - &jd_dense * c),
            (
                Mass::Band(mb.clone()),
                SysMatrix::Band(jb.clone()),
                mb.to_dense() - &jd_dense * c,
            ),
            (Mass::Band(mb.clone()), jd.clone(), mb.to_dense() - &jd_dense * c),
            (
                Mass::Dense(mb.to_dense()),
                SysMatrix::Band(jb.clone()),
                mb.to_dense() - &jd_dense * c,
            ),
        ];
        for (mass, jac, expect) in cases {
            let got = newton_matrix(&mass, &jac, c).to_dense();
            assert!((got - &expect).amax() < 1e-13);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prop_band_matvec_matches_dense(seed in 0u64..5000, n in 1usize..20, kl in 0usize..4, ku in 0usize..4) {
            let b = random_band(n, kl.min(n - 1), ku.min(n - 1), seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let x = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let yb = b.matvec(&x);
            let yd = b.to_dense() * &x;
            prop_assert!((yb - yd).amax() < 1e-12);
        }

        #[test]
        fn prop_band_solve_round_trip(seed in 0u64..5000, n in 1usize..24, kl in 0usize..5, ku in 0usize..5) {
            let b = random_band(n, kl.min(n - 1), ku.min(n - 1), seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x1234);
            let x_true = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let rhs = b.matvec(&x_true);
            let x = b.factorize().unwrap().solve(&rhs);
            prop_assert!((x - x_true).amax() < 1e-8);
        }
    }
}
