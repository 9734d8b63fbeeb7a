//! Finite windows of semi-infinite matrices.
//!
//! Every matrix here is the leading rows x cols window of a semi-infinite
//! matrix indexed over the nonnegative integers. Declared bandwidths are
//! structural statements about the infinite object: `sub = s` asserts
//! entry (i, j) = 0 whenever i - j > s everywhere, not merely inside the
//! stored window; `FULL` declares no bound. Truthful bandwidths are what
//! lets a product decide exactly which of its entries are free of
//! truncation contamination: entry (i, j) of A*B only needs summation
//! indices k <= min(i + A.sup, j + B.sub), so it is trustworthy precisely
//! when that bound stays inside the shared window extent.

use crate::error::MopsError;
use crate::scalar::Scalar;

/// Bandwidth sentinel: no structural zero guarantee on that side.
pub const FULL: usize = usize::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseWindow<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> DenseWindow<S> {
    pub fn zero(rows: usize, cols: usize) -> Self {
        DenseWindow { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseWindow { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { S::one() } else { S::zero() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> &S {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: S) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.at(j, i).clone())
    }

    /// Leading principal subwindow.
    pub fn crop(&self, rows: usize, cols: usize) -> Self {
        assert!(rows <= self.rows && cols <= self.cols, "crop cannot grow a window");
        Self::from_fn(rows, cols, |i, j| self.at(i, j).clone())
    }

    /// Plain finite-matrix product; the caller owns the claim that every
    /// needed entry of the underlying semi-infinite operands lives inside
    /// these windows. Use `BandWindow` multiplication when that claim needs
    /// to be checked.
    pub fn mul(&self, rhs: &Self) -> Result<Self, MopsError> {
        if self.cols != rhs.rows {
            return Err(MopsError::ShapeMismatch {
                context: "dense mul",
                left: (self.rows, self.cols),
                right: (rhs.rows, rhs.cols),
            });
        }
        let mut out = Self::zero(self.rows, rhs.cols);
        for i in 0..self.rows {
            for j in 0..rhs.cols {
                let mut acc = S::zero();
                for k in 0..self.cols {
                    if !self.at(i, k).is_zero() && !rhs.at(k, j).is_zero() {
                        acc = acc + self.at(i, k).clone() * rhs.at(k, j).clone();
                    }
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    pub fn add(&self, rhs: &Self) -> Result<Self, MopsError> {
        self.zip(rhs, "dense add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self, MopsError> {
        self.zip(rhs, "dense sub", |a, b| a - b)
    }

    fn zip(&self, rhs: &Self, context: &'static str, f: impl Fn(S, S) -> S) -> Result<Self, MopsError> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(MopsError::ShapeMismatch {
                context,
                left: (self.rows, self.cols),
                right: (rhs.rows, rhs.cols),
            });
        }
        Ok(Self::from_fn(self.rows, self.cols, |i, j| {
            f(self.at(i, j).clone(), rhs.at(i, j).clone())
        }))
    }

    pub fn scale(&self, c: &S) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| c.clone() * self.at(i, j).clone())
    }

    pub fn neg(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| -self.at(i, j).clone())
    }

    pub fn max_abs(&self) -> S {
        let mut m = S::zero();
        for v in &self.data {
            let a = v.abs();
            if a > m {
                m = a;
            }
        }
        m
    }

    pub fn is_zero_window(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }
}

/// Max-abs entrywise difference; the residual measure used by every report.
pub fn residual_norm<S: Scalar>(a: &DenseWindow<S>, b: &DenseWindow<S>) -> Result<S, MopsError> {
    Ok(a.sub(b)
        .map_err(|_| MopsError::ShapeMismatch {
            context: "residual_norm",
            left: (a.rows, a.cols),
            right: (b.rows, b.cols),
        })?
        .max_abs())
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandWindow<S> {
    sub: usize,
    sup: usize,
    win: DenseWindow<S>,
}

fn in_band(i: usize, j: usize, sub: usize, sup: usize) -> bool {
    (j < i + 1 || j - i <= sup) && (i < j + 1 || i - j <= sub)
}

impl<S: Scalar> BandWindow<S> {
    /// Wrap a dense window with declared bandwidths; rejects any stored entry
    /// that violates the declared structural zeros.
    pub fn new(win: DenseWindow<S>, sub: usize, sup: usize) -> Result<Self, MopsError> {
        for i in 0..win.rows() {
            for j in 0..win.cols() {
                if !in_band(i, j, sub, sup) && !win.at(i, j).is_zero() {
                    return Err(MopsError::InvalidParameters {
                        reason: format!("structural zero violated at ({i}, {j}) for band ({sub}, {sup})"),
                    });
                }
            }
        }
        Ok(BandWindow { sub, sup, win })
    }

    /// Dense window with no structural claims.
    pub fn full(win: DenseWindow<S>) -> Self {
        BandWindow { sub: FULL, sup: FULL, win }
    }

    /// Fill only the declared band; everything else is zero by construction.
    pub fn from_fn_band(
        rows: usize,
        cols: usize,
        sub: usize,
        sup: usize,
        mut f: impl FnMut(usize, usize) -> S,
    ) -> Self {
        let win = DenseWindow::from_fn(rows, cols, |i, j| {
            if in_band(i, j, sub, sup) {
                f(i, j)
            } else {
                S::zero()
            }
        });
        BandWindow { sub, sup, win }
    }

    pub fn identity(n: usize) -> Self {
        BandWindow { sub: 0, sup: 0, win: DenseWindow::identity(n) }
    }

    pub fn diag(values: &[S]) -> Self {
        let n = values.len();
        Self::from_fn_band(n, n, 0, 0, |i, _| values[i].clone())
    }

    /// Window of Lambda^v: ones on the v-th superdiagonal.
    pub fn lambda_pow(n: usize, v: usize) -> Self {
        Self::from_fn_band(n, n, 0, v, |i, j| if j == i + v { S::one() } else { S::zero() })
    }

    /// Window of a polynomial in the shift: sum_d coeffs[d] * Lambda^d.
    pub fn poly_in_lambda(coeffs: &[S], n: usize) -> Self {
        let deg = coeffs.len().saturating_sub(1);
        Self::from_fn_band(n, n, 0, deg, |i, j| {
            let d = j - i; // in-band guarantee: 0 <= d <= deg
            coeffs.get(d).cloned().unwrap_or_else(S::zero)
        })
    }

    /// Projection I^(a): diagonal indicator of indices congruent to a-1 mod p.
    pub fn partial_identity(n: usize, p: usize, a: usize) -> Self {
        Self::from_fn_band(n, n, 0, 0, |i, _| {
            if i % p == (a - 1) % p {
                S::one()
            } else {
                S::zero()
            }
        })
    }

    /// Window of Lambda^(a) = Lambda^p I^(a) (equivalently I^(a) Lambda^p).
    pub fn lambda_partial(n: usize, p: usize, a: usize) -> Self {
        Self::from_fn_band(n, n, 0, p, |i, j| {
            if j == i + p && i % p == (a - 1) % p {
                S::one()
            } else {
                S::zero()
            }
        })
    }

    pub fn rows(&self) -> usize {
        self.win.rows()
    }

    pub fn cols(&self) -> usize {
        self.win.cols()
    }

    pub fn sub(&self) -> usize {
        self.sub
    }

    pub fn sup(&self) -> usize {
        self.sup
    }

    pub fn at(&self, i: usize, j: usize) -> &S {
        self.win.at(i, j)
    }

    pub fn dense(&self) -> &DenseWindow<S> {
        &self.win
    }

    pub fn into_dense(self) -> DenseWindow<S> {
        self.win
    }

    pub fn transpose(&self) -> Self {
        BandWindow { sub: self.sup, sup: self.sub, win: self.win.transpose() }
    }

    pub fn crop(&self, rows: usize, cols: usize) -> Self {
        BandWindow { sub: self.sub, sup: self.sup, win: self.win.crop(rows, cols) }
    }

    /// Re-declare bandwidths, verifying the stored entries actually comply.
    /// This is how a theorem about band structure (e.g. T is (p, 1)-banded)
    /// becomes machine-checked metadata.
    pub fn retag(&self, sub: usize, sup: usize) -> Result<Self, MopsError> {
        Self::new(self.win.clone(), sub, sup)
    }

    /// Largest s such that every entry of the leading s x s product window is
    /// contamination-free.
    pub fn valid_square_with(&self, rhs: &Self) -> usize {
        let common = self.cols(); // == rhs.rows() by the time this is called
        let cut = self.sup.min(rhs.sub);
        let s_band = if cut == FULL { 0 } else { common.saturating_sub(cut) };
        s_band.min(self.rows()).min(rhs.cols())
    }

    fn check_aligned(&self, rhs: &Self, context: &'static str) -> Result<(), MopsError> {
        if self.cols() != rhs.rows() {
            return Err(MopsError::ShapeMismatch {
                context,
                left: (self.rows(), self.cols()),
                right: (rhs.rows(), rhs.cols()),
            });
        }
        Ok(())
    }

    /// Product restricted to its contamination-free interior: the largest
    /// valid square. Errors if no entry at all is trustworthy.
    pub fn band_mul(&self, rhs: &Self) -> Result<Self, MopsError> {
        self.check_aligned(rhs, "band_mul")?;
        let s = self.valid_square_with(rhs);
        if s == 0 {
            return Err(MopsError::WindowTooSmall { context: "band_mul", need: 1, have: 0 });
        }
        Ok(self.mul_unchecked(rhs, s, s))
    }

    /// Product on a requested rows x cols interior, verified contamination-free.
    pub fn band_mul_rect(&self, rhs: &Self, rows: usize, cols: usize) -> Result<Self, MopsError> {
        self.check_aligned(rhs, "band_mul_rect")?;
        if rows > self.rows() || cols > rhs.cols() {
            return Err(MopsError::WindowTooSmall {
                context: "band_mul_rect",
                need: rows.max(cols),
                have: self.rows().min(rhs.cols()),
            });
        }
        if rows > 0 && cols > 0 {
            let common = self.cols();
            let worst = (rows - 1).saturating_add(self.sup).min((cols - 1).saturating_add(rhs.sub));
            if worst >= common {
                return Err(MopsError::WindowTooSmall {
                    context: "band_mul_rect",
                    need: worst + 1,
                    have: common,
                });
            }
        }
        Ok(self.mul_unchecked(rhs, rows, cols))
    }

    /// Crop both operands to a common extent, then take the largest valid square.
    pub fn align_mul(&self, rhs: &Self) -> Result<Self, MopsError> {
        let common = self.cols().min(rhs.rows());
        let a = self.crop(self.rows(), common);
        let b = rhs.crop(common, rhs.cols());
        a.band_mul(&b)
    }

    fn mul_unchecked(&self, rhs: &Self, rows: usize, cols: usize) -> Self {
        let common = self.cols().min(rhs.rows());
        let sub = self.sub.saturating_add(rhs.sub);
        let sup = self.sup.saturating_add(rhs.sup);
        let win = DenseWindow::from_fn(rows, cols, |i, j| {
            if !in_band(i, j, sub, sup) {
                return S::zero();
            }
            let lo = [
                if self.sub == FULL { 0 } else { i.saturating_sub(self.sub) },
                if rhs.sup == FULL { 0 } else { j.saturating_sub(rhs.sup) },
            ]
            .into_iter()
            .max()
            .unwrap();
            let hi = [
                i.saturating_add(self.sup),
                j.saturating_add(rhs.sub),
                common - 1,
            ]
            .into_iter()
            .min()
            .unwrap();
            let mut acc = S::zero();
            let mut k = lo;
            while k <= hi {
                let l = self.at(i, k);
                if !l.is_zero() {
                    let r = rhs.at(k, j);
                    if !r.is_zero() {
                        acc = acc + l.clone() * r.clone();
                    }
                }
                k += 1;
            }
            acc
        });
        BandWindow { sub, sup, win }
    }

    /// ab - ba on the largest square where both products are valid.
    pub fn commutator(&self, rhs: &Self) -> Result<Self, MopsError> {
        let s0 = self.rows().min(self.cols()).min(rhs.rows()).min(rhs.cols());
        let a = self.crop(s0, s0);
        let b = rhs.crop(s0, s0);
        let ab = a.band_mul(&b)?;
        let ba = b.band_mul(&a)?;
        let s = ab.rows().min(ba.rows());
        ab.crop(s, s).sub_window(&ba.crop(s, s))
    }

    pub fn add_window(&self, rhs: &Self) -> Result<Self, MopsError> {
        let win = self.win.add(&rhs.win)?;
        Ok(BandWindow { sub: self.sub.max(rhs.sub), sup: self.sup.max(rhs.sup), win })
    }

    pub fn sub_window(&self, rhs: &Self) -> Result<Self, MopsError> {
        let win = self.win.sub(&rhs.win)?;
        Ok(BandWindow { sub: self.sub.max(rhs.sub), sup: self.sup.max(rhs.sup), win })
    }

    pub fn scale(&self, c: &S) -> Self {
        BandWindow { sub: self.sub, sup: self.sup, win: self.win.scale(c) }
    }

    pub fn neg(&self) -> Self {
        BandWindow { sub: self.sub, sup: self.sup, win: self.win.neg() }
    }

    /// Add c * I.
    pub fn add_scalar_diag(&self, c: &S) -> Self {
        let mut win = self.win.clone();
        let n = self.rows().min(self.cols());
        for i in 0..n {
            win.set(i, i, win.at(i, i).clone() + c.clone());
        }
        BandWindow { sub: self.sub, sup: self.sup.max(0), win }
    }

    /// d-th subdiagonal as a sequence: out[m] = self[m + d][m].
    pub fn subdiag(&self, d: usize) -> Vec<S> {
        let len = self.rows().saturating_sub(d).min(self.cols());
        (0..len).map(|m| self.at(m + d, m).clone()).collect()
    }

    /// d-th superdiagonal as a sequence: out[m] = self[m][m + d].
    pub fn supdiag(&self, d: usize) -> Vec<S> {
        let len = self.cols().saturating_sub(d).min(self.rows());
        (0..len).map(|m| self.at(m, m + d).clone()).collect()
    }

    pub fn diag_part(&self) -> Self {
        Self::from_fn_band(self.rows(), self.cols(), 0, 0, |i, j| self.at(i, j).clone())
    }

    pub fn strictly_lower(&self) -> Self {
        let win = DenseWindow::from_fn(self.rows(), self.cols(), |i, j| {
            if i > j {
                self.at(i, j).clone()
            } else {
                S::zero()
            }
        });
        BandWindow { sub: self.sub, sup: 0, win }
    }

    pub fn strictly_upper(&self) -> Self {
        let win = DenseWindow::from_fn(self.rows(), self.cols(), |i, j| {
            if j > i {
                self.at(i, j).clone()
            } else {
                S::zero()
            }
        });
        BandWindow { sub: 0, sup: self.sup, win }
    }

    pub fn max_abs(&self) -> S {
        self.win.max_abs()
    }

    /// Max-abs difference over the shared leading window.
    pub fn residual_vs(&self, rhs: &Self) -> S {
        let r = self.rows().min(rhs.rows());
        let c = self.cols().min(rhs.cols());
        let mut m = S::zero();
        for i in 0..r {
            for j in 0..c {
                let d = (self.at(i, j).clone() - rhs.at(i, j).clone()).abs();
                if d > m {
                    m = d;
                }
            }
        }
        m
    }

    /// True if the declared band really holds in the stored window.
    pub fn band_holds(&self, sub: usize, sup: usize) -> bool {
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                if !in_band(i, j, sub, sup) && !self.at(i, j).is_zero() {
                    return false;
                }
            }
        }
        true
    }

    /// Max |entry| outside the stated band: the bandedness residual used when
    /// a band claim is an identity under test rather than a structural fact.
    pub fn off_band_residual(&self, sub: usize, sup: usize) -> S {
        let mut m = S::zero();
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                if !in_band(i, j, sub, sup) {
                    let a = self.at(i, j).abs();
                    if a > m {
                        m = a;
                    }
                }
            }
        }
        m
    }
}
