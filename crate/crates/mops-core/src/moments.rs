//! Truncated moments, the striped moment matrix, and tau functions.
//!
//! The moment matrix interleaves the p weights column-wise: column j draws
//! on weight (j mod p) + 1 at monomial degree floor(j / p), so entry (i, j)
//! is rho^(a_j)_{i + q_j}. That layout makes the shift-by-p-columns equal to
//! the shift-by-one-row for any moment table at all; the p-Hankel symmetry
//! is structural, not analytic, and is checked as literal equality.
//!
//! The eta-scaling derivation theta = sum_a eta_a d/d(eta_a) acts on moments
//! as a degree bump, rho_n -> rho_{n+1}; bumped windows are therefore exact
//! objects of the same store, which is what keeps every jet identity
//! downstream in the exact tier.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::error::MopsError;
use crate::scalar::Rat;
use crate::weights::{TruncationCert, WeightSystem};
use crate::window::{BandWindow, DenseWindow};

pub const MAX_JET: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct MomentStore {
    p: usize,
    /// rho[a - 1][n] = sum_{k <= K} k^n w_a(k)
    rho: Vec<Vec<Rat>>,
}

impl MomentStore {
    /// Moments of every weight up to the degree the certificate covers.
    pub fn build(sys: &WeightSystem, cert: &TruncationCert) -> Self {
        let p = sys.p();
        let mut rho = Vec::with_capacity(p);
        for a in 1..=p {
            let table = sys.weight_table(a, cert.k);
            let mut sums = vec![Rat::zero(); cert.m_max + 1];
            for (k, w) in table.iter().enumerate() {
                if w.is_zero() {
                    continue;
                }
                let kq = Rat::from_integer(BigInt::from(k));
                let mut pow = Rat::one();
                for s in sums.iter_mut() {
                    *s += &pow * w;
                    pow *= &kq;
                }
            }
            rho.push(sums);
        }
        MomentStore { p, rho }
    }

    /// Direct construction from explicit moment sequences (tests, corruption
    /// experiments).
    pub fn from_raw(p: usize, rho: Vec<Vec<Rat>>) -> Result<Self, MopsError> {
        if rho.len() != p || p == 0 {
            return Err(MopsError::InvalidParameters {
                reason: format!("need {} moment rows, got {}", p, rho.len()),
            });
        }
        let len = rho[0].len();
        if rho.iter().any(|r| r.len() != len) {
            return Err(MopsError::InvalidParameters {
                reason: "moment sequences must share a length".into(),
            });
        }
        Ok(MomentStore { p, rho })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m_max(&self) -> usize {
        self.rho[0].len() - 1
    }

    pub fn rho(&self, a: usize, n: usize) -> Result<&Rat, MopsError> {
        self.rho
            .get(a - 1)
            .and_then(|row| row.get(n))
            .ok_or(MopsError::IndexOutOfRange { what: "moment", index: n, limit: self.m_max() })
    }

    pub fn bump(&mut self, a: usize, n: usize, delta: Rat) {
        self.rho[a - 1][n] += delta;
    }

    /// Column j of the moment matrix reads weight (j mod p) + 1 at degree
    /// floor(j / p) + v, where v is the uniform bump (0 for the matrix
    /// itself, r for the r-th derivative block).
    pub fn window_bumped(&self, rows: usize, cols: usize, v: usize) -> Result<BandWindow<Rat>, MopsError> {
        let need = rows.saturating_sub(1) + cols.saturating_sub(1) / self.p + v;
        if need > self.m_max() {
            return Err(MopsError::IndexOutOfRange { what: "moment degree", index: need, limit: self.m_max() });
        }
        let win = DenseWindow::from_fn(rows, cols, |i, j| {
            let a = j % self.p;
            let q = j / self.p;
            self.rho[a][i + q + v].clone()
        });
        Ok(BandWindow::full(win))
    }

    pub fn window(&self, rows: usize, cols: usize) -> Result<BandWindow<Rat>, MopsError> {
        self.window_bumped(rows, cols, 0)
    }

    /// Row-bumped square window: row i is differentiated bumps[i] times.
    pub fn window_row_bumped(&self, n: usize, bumps: &[usize]) -> Result<DenseWindow<Rat>, MopsError> {
        debug_assert_eq!(bumps.len(), n);
        let need = n.saturating_sub(1) + n.saturating_sub(1) / self.p
            + bumps.iter().copied().max().unwrap_or(0);
        if need > self.m_max() {
            return Err(MopsError::IndexOutOfRange { what: "moment degree", index: need, limit: self.m_max() });
        }
        Ok(DenseWindow::from_fn(n, n, |i, j| {
            let a = j % self.p;
            let q = j / self.p;
            self.rho[a][i + q + bumps[i]].clone()
        }))
    }

    /// tau_n = det of the leading n x n moment window, n = 0..=n_max.
    pub fn tau_table(&self, n_max: usize) -> Result<Vec<Rat>, MopsError> {
        let m = self.window(n_max, n_max)?;
        let (ints, scale) = scale_to_integers(m.dense());
        let minors = principal_minors(&ints);
        let mut taus = Vec::with_capacity(n_max + 1);
        let mut denom = Rat::one();
        for n in 0..=n_max {
            taus.push(Rat::from_integer(minors[n].clone()) / &denom);
            if n < n_max {
                denom *= Rat::from_integer(scale[n].clone());
            }
        }
        Ok(taus)
    }

    /// det of the n x n minor on rows {0..n} \ {n - j} and columns 0..n.
    pub fn tau_assoc(&self, n: usize, j: usize) -> Result<Rat, MopsError> {
        if j > n {
            return Err(MopsError::IndexOutOfRange { what: "tau_assoc offset", index: j, limit: n });
        }
        let full = self.window(n + 1, n.max(1))?;
        let win = DenseWindow::from_fn(n, n, |i, jj| {
            let row = if i < n - j { i } else { i + 1 };
            full.at(row, jj).clone()
        });
        Ok(det_exact(&win))
    }

    /// r-th eta-scaling derivative of tau_n, by the multilinear Leibniz rule:
    /// sum over compositions r = v_0 + ... + v_{n-1} of multinomial(r; v)
    /// times the determinant with row i bumped v_i times.
    pub fn tau_jet(&self, n: usize, r: usize) -> Result<Rat, MopsError> {
        if r > MAX_JET {
            return Err(MopsError::InvalidParameters {
                reason: format!("tau jets are capped at order {MAX_JET}, requested {r}"),
            });
        }
        if n == 0 {
            return Ok(if r == 0 { Rat::one() } else { Rat::zero() });
        }
        let mut total = Rat::zero();
        let mut bumps = vec![0usize; n];
        self.tau_jet_rec(n, r, 0, &mut bumps, &mut total)?;
        Ok(total)
    }

    fn tau_jet_rec(
        &self,
        n: usize,
        remaining: usize,
        row: usize,
        bumps: &mut Vec<usize>,
        total: &mut Rat,
    ) -> Result<(), MopsError> {
        if row + 1 == n {
            bumps[row] = remaining;
            let det = det_exact(&self.window_row_bumped(n, bumps)?);
            *total += multinomial(bumps) * det;
            bumps[row] = 0;
            return Ok(());
        }
        for v in 0..=remaining {
            bumps[row] = v;
            self.tau_jet_rec(n, remaining - v, row + 1, bumps, total)?;
        }
        bumps[row] = 0;
        Ok(())
    }
}

fn multinomial(parts: &[usize]) -> Rat {
    let total: usize = parts.iter().sum();
    let mut num = BigInt::one();
    for i in 2..=total {
        num *= BigInt::from(i);
    }
    let mut den = BigInt::one();
    for &v in parts {
        for i in 2..=v {
            den *= BigInt::from(i);
        }
    }
    Rat::new(num, den)
}

/// Does the window satisfy the p-striped Hankel symmetry
/// entry(i + 1, j) = entry(i, j + p) wherever both sides exist?
pub fn hankel_holds(m: &DenseWindow<Rat>, p: usize) -> bool {
    for i in 0..m.rows().saturating_sub(1) {
        for j in 0..m.cols().saturating_sub(p) {
            if m.at(i + 1, j) != m.at(i, j + p) {
                return false;
            }
        }
    }
    true
}

/// Row-scale a rational window to integers: returns the integer matrix and
/// the per-row multipliers d_i, so det window_n = det ints_n / prod_{i<n} d_i.
fn scale_to_integers(m: &DenseWindow<Rat>) -> (Vec<Vec<BigInt>>, Vec<BigInt>) {
    let mut ints = Vec::with_capacity(m.rows());
    let mut scale = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let mut d = BigInt::one();
        for j in 0..m.cols() {
            d = d.lcm(m.at(i, j).denom());
        }
        let row: Vec<BigInt> = (0..m.cols())
            .map(|j| {
                let v = m.at(i, j) * Rat::from_integer(d.clone());
                debug_assert!(v.denom().is_one());
                v.to_integer()
            })
            .collect();
        ints.push(row);
        scale.push(d);
    }
    (ints, scale)
}

/// All leading principal minors of an integer matrix, minors[m] = det of the
/// leading m x m block (minors[0] = 1). A single fraction-free elimination
/// pass reads them off the pivots; a vanishing pivot switches the remaining
/// sizes to independent pivoted determinants.
fn principal_minors(a: &[Vec<BigInt>]) -> Vec<BigInt> {
    let n = a.len();
    let mut minors = vec![BigInt::one()];
    if n == 0 {
        return minors;
    }
    let mut work: Vec<Vec<BigInt>> = a.to_vec();
    minors.push(work[0][0].clone());
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if work[k][k].is_zero() {
            for m in k + 1..n {
                minors.push(bareiss_det_of_leading(a, m + 1));
            }
            return minors;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let t = &work[k][k] * &work[i][j] - &work[i][k] * &work[k][j];
                work[i][j] = t / &prev;
            }
            work[i][k] = BigInt::zero();
        }
        prev = work[k][k].clone();
        minors.push(work[k + 1][k + 1].clone());
    }
    minors
}

fn bareiss_det_of_leading(a: &[Vec<BigInt>], m: usize) -> BigInt {
    let crop: Vec<Vec<BigInt>> = a[..m].iter().map(|row| row[..m].to_vec()).collect();
    bareiss_det(crop)
}

/// Fraction-free determinant with row pivoting.
fn bareiss_det(mut a: Vec<Vec<BigInt>>) -> BigInt {
    let n = a.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut negate = false;
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&r| !a[r][k].is_zero()) {
                Some(r) => {
                    a.swap(k, r);
                    negate = !negate;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let t = &a[k][k] * &a[i][j] - &a[i][k] * &a[k][j];
                a[i][j] = t / &prev;
            }
            a[i][k] = BigInt::zero();
        }
        prev = a[k][k].clone();
    }
    let d = a[n - 1][n - 1].clone();
    if negate {
        -d
    } else {
        d
    }
}

/// Exact determinant of a rational window.
pub fn det_exact(m: &DenseWindow<Rat>) -> Rat {
    assert_eq!(m.rows(), m.cols(), "determinant of a non-square window");
    let (ints, scale) = scale_to_integers(m);
    let det = bareiss_det(ints);
    let mut denom = Rat::one();
    for d in &scale {
        denom *= Rat::from_integer(d.clone());
    }
    Rat::from_integer(det) / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::parse_rat;
    use crate::weights::{TailSpec, WeightParams};
    use proptest::prelude::*;

    fn r(s: &str) -> Rat {
        parse_rat(s).unwrap()
    }

    fn charlier(etas: &[&str]) -> WeightSystem {
        WeightSystem::new(
            etas.len(),
            vec![],
            etas.iter().map(|e| WeightParams { eta: r(e), b: vec![] }).collect(),
        )
        .unwrap()
    }

    fn store(sys: &WeightSystem, m_max: usize) -> MomentStore {
        let cert = sys.truncate(&TailSpec::Target(r("1e-45")), m_max).unwrap();
        MomentStore::build(sys, &cert)
    }

    #[test]
    fn tiny_truncation_moments_by_hand() {
        let sys = charlier(&["1/3"]);
        let cert = sys.truncate(&TailSpec::FixedK(2), 3);
        let cert = match cert {
            Ok(c) => c,
            // onset past 2 would be a surprise for Poisson(1/3)
            Err(e) => panic!("{e}"),
        };
        let st = MomentStore::build(&sys, &TruncationCert { k: 2, ..cert });
        // w = [1, 1/3, 1/18]: rho_n = sum k^n w(k)
        assert_eq!(st.rho(1, 0).unwrap(), &r("25/18"));
        assert_eq!(st.rho(1, 1).unwrap(), &(r("1/3") + r("2") * r("1/18")));
        assert_eq!(st.rho(1, 2).unwrap(), &(r("1/3") + r("4") * r("1/18")));
    }

    #[test]
    fn striped_layout_and_hankel() {
        let sys = charlier(&["1/3", "1/5"]);
        let st = store(&sys, 12);
        let m = st.window(8, 8).unwrap();
        assert_eq!(m.at(0, 0), st.rho(1, 0).unwrap());
        assert_eq!(m.at(0, 1), st.rho(2, 0).unwrap());
        assert_eq!(m.at(3, 5), st.rho(2, 5).unwrap()); // a = 2, q = 2, degree 3 + 2
        assert!(hankel_holds(m.dense(), 2));
        // bumped window is the same object with every degree raised
        let b = st.window_bumped(8, 8, 2).unwrap();
        assert_eq!(b.at(3, 5), st.rho(2, 7).unwrap());
        assert!(hankel_holds(b.dense(), 2));
    }

    #[test]
    fn tau2_interleaving_formula() {
        let sys = charlier(&["1/3", "1/5"]);
        let st = store(&sys, 8);
        let taus = st.tau_table(4).unwrap();
        assert_eq!(taus[0], r("1"));
        assert_eq!(taus[1], st.rho(1, 0).unwrap().clone());
        let expect = st.rho(1, 0).unwrap() * st.rho(2, 1).unwrap()
            - st.rho(1, 1).unwrap() * st.rho(2, 0).unwrap();
        assert_eq!(taus[2], expect);
    }

    #[test]
    fn tau_table_survives_vanishing_minor() {
        // equal etas collide columns 0 and 1: every tau_n with n >= 2 vanishes
        let sys = charlier(&["1/3", "1/3"]);
        let st = store(&sys, 10);
        let taus = st.tau_table(5).unwrap();
        assert!(!taus[1].is_zero());
        for n in 2..=5 {
            assert!(taus[n].is_zero(), "tau_{n}");
        }
    }

    #[test]
    fn tau_assoc_at_offset_zero_is_tau() {
        let sys = charlier(&["1/3", "1/5"]);
        let st = store(&sys, 10);
        let taus = st.tau_table(4).unwrap();
        for n in 1..=4 {
            assert_eq!(st.tau_assoc(n, 0).unwrap(), taus[n]);
        }
    }

    #[test]
    fn tau_jets_match_hand_derivatives() {
        let sys = charlier(&["1/3"]);
        let st = store(&sys, 10);
        let rho = |n: usize| st.rho(1, n).unwrap().clone();
        // d tau_1 = rho_1; d tau_2 = rho_0 rho_3 - rho_1 rho_2
        assert_eq!(st.tau_jet(1, 1).unwrap(), rho(1));
        assert_eq!(st.tau_jet(2, 1).unwrap(), rho(0) * rho(3) - rho(1) * rho(2));
        // d^2 tau_2 = rho_0 rho_4 - rho_2^2
        assert_eq!(st.tau_jet(2, 2).unwrap(), rho(0) * rho(4) - rho(2) * rho(2));
        // order zero falls back to the plain determinant
        assert_eq!(st.tau_jet(2, 0).unwrap(), st.tau_table(2).unwrap()[2]);
        assert!(st.tau_jet(2, MAX_JET + 1).is_err());
    }

    #[test]
    fn degree_budget_is_enforced() {
        let sys = charlier(&["1/3"]);
        let cert = sys.truncate(&TailSpec::Target(r("1e-20")), 4).unwrap();
        let st = MomentStore::build(&sys, &cert);
        assert!(st.window(6, 1).is_err());
        assert!(st.window(5, 1).is_ok());
        assert!(st.window_bumped(5, 1, 1).is_err());
    }

    proptest! {
        #[test]
        fn bareiss_agrees_with_cofactor_expansion(
            n in 1usize..5,
            seed in 0i64..10_000,
        ) {
            let m = DenseWindow::from_fn(n, n, |i, j| {
                let v = (seed * 31 + (i * n + j) as i64 * 17) % 13 - 6;
                let d = 1 + ((seed as usize + i + 2 * j) % 4) as i64;
                Rat::new(BigInt::from(v), BigInt::from(d))
            });
            prop_assert_eq!(det_exact(&m), cofactor_det(&m));
        }

        #[test]
        fn principal_minor_pass_matches_independent_dets(
            n in 2usize..5,
            seed in 0i64..10_000,
        ) {
            let m = DenseWindow::from_fn(n, n, |i, j| {
                // small range on purpose: zero pivots happen and must not matter
                Rat::from_integer(BigInt::from((seed + (i * 3 + j * 7) as i64) % 3 - 1))
            });
            let (ints, _) = scale_to_integers(&m);
            let minors = principal_minors(&ints);
            for k in 0..=n {
                prop_assert_eq!(
                    Rat::from_integer(minors[k].clone()),
                    cofactor_det(&m.crop(k, k))
                );
            }
        }
    }

    fn cofactor_det(m: &DenseWindow<Rat>) -> Rat {
        let n = m.rows();
        if n == 0 {
            return Rat::one();
        }
        if n == 1 {
            return m.at(0, 0).clone();
        }
        let mut acc = Rat::zero();
        for j in 0..n {
            let minor = DenseWindow::from_fn(n - 1, n - 1, |ii, jj| {
                m.at(ii + 1, if jj < j { jj } else { jj + 1 }).clone()
            });
            let term = m.at(0, j).clone() * cofactor_det(&minor);
            if j % 2 == 0 {
                acc = acc + term;
            } else {
                acc = acc - term;
            }
        }
        acc
    }
}
