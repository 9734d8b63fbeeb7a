//! Gauss-Borel factorization of the moment matrix.
//!
//! M = S^-1 H S~^-T with S, S~ lower unitriangular and H diagonal. The
//! factorization of a leading window is the leading window of the infinite
//! factorization, so everything extracted here (subdiagonal sequences of S
//! and S~, the H line) is a faithful finite view of the infinite objects.
//!
//! Elimination runs without pivoting on purpose: the k-th pivot is
//! H_k = tau_{k+1} / tau_k, and a vanishing pivot is not a numerical
//! accident but the signal that the system is not perfect. The error
//! carries the index of the first vanishing tau.

use crate::error::MopsError;
use crate::scalar::Rat;
use crate::window::{BandWindow, DenseWindow, FULL};
use num_traits::{One, Zero};

#[derive(Clone, Debug)]
pub struct Factorization {
    n: usize,
    s: BandWindow<Rat>,
    s_inv: BandWindow<Rat>,
    s_tilde: BandWindow<Rat>,
    s_tilde_inv: BandWindow<Rat>,
    h: Vec<Rat>,
}

/// LDU-factor the leading window of a moment matrix.
pub fn gauss_borel(m: &DenseWindow<Rat>) -> Result<Factorization, MopsError> {
    let n = m.rows().min(m.cols());
    let mut a = m.crop(n, n);
    let mut l = DenseWindow::identity(n);
    let mut ut = DenseWindow::identity(n); // transpose of the upper factor
    let mut h = Vec::with_capacity(n);
    for k in 0..n {
        let d = a.at(k, k).clone();
        if d.is_zero() {
            return Err(MopsError::NonPerfectSystem(k + 1));
        }
        for i in k + 1..n {
            l.set(i, k, a.at(i, k).clone() / d.clone());
            ut.set(i, k, a.at(k, i).clone() / d.clone());
        }
        for i in k + 1..n {
            if a.at(i, k).is_zero() {
                continue;
            }
            let li = l.at(i, k).clone();
            for j in k + 1..n {
                let upd = a.at(i, j).clone() - li.clone() * a.at(k, j).clone();
                a.set(i, j, upd);
            }
        }
        h.push(d);
    }
    let s_inv = BandWindow::new(l, FULL, 0).expect("elimination wrote outside the lower triangle");
    let s_tilde_inv = BandWindow::new(ut, FULL, 0).expect("elimination wrote outside the lower triangle");
    let s = invert_lower_unitriangular(&s_inv);
    let s_tilde = invert_lower_unitriangular(&s_tilde_inv);
    Ok(Factorization { n, s, s_inv, s_tilde, s_tilde_inv, h })
}

/// Exact inverse of a lower unitriangular window by forward substitution.
pub fn invert_lower_unitriangular(l: &BandWindow<Rat>) -> BandWindow<Rat> {
    let n = l.rows();
    debug_assert_eq!(n, l.cols());
    let mut x: DenseWindow<Rat> = DenseWindow::identity(n);
    for j in 0..n {
        for i in j + 1..n {
            let mut acc = Rat::zero();
            for k in j..i {
                if !l.at(i, k).is_zero() && !x.at(k, j).is_zero() {
                    acc += l.at(i, k).clone() * x.at(k, j).clone();
                }
            }
            x.set(i, j, -acc);
        }
    }
    BandWindow::new(x, FULL, 0).expect("inverse of lower unitriangular is lower unitriangular")
}

impl Factorization {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> &BandWindow<Rat> {
        &self.s
    }

    pub fn s_inv(&self) -> &BandWindow<Rat> {
        &self.s_inv
    }

    pub fn s_tilde(&self) -> &BandWindow<Rat> {
        &self.s_tilde
    }

    pub fn s_tilde_inv(&self) -> &BandWindow<Rat> {
        &self.s_tilde_inv
    }

    pub fn h(&self) -> &[Rat] {
        &self.h
    }

    pub fn h_window(&self) -> BandWindow<Rat> {
        BandWindow::diag(&self.h)
    }

    pub fn h_inv_window(&self) -> BandWindow<Rat> {
        let inv: Vec<Rat> = self.h.iter().map(|x| Rat::one() / x).collect();
        BandWindow::diag(&inv)
    }

    /// j-th subdiagonal sequence of S: out[m] = S[m + j][m].
    pub fn s_diag(&self, j: usize) -> Vec<Rat> {
        self.s.subdiag(j)
    }

    /// j-th subdiagonal sequence of S~.
    pub fn s_tilde_diag(&self, j: usize) -> Vec<Rat> {
        self.s_tilde.subdiag(j)
    }

    /// S^-1 H S~^-T, for round-trip checks.
    pub fn reconstruct(&self) -> Result<DenseWindow<Rat>, MopsError> {
        let lh = self.s_inv.band_mul(&self.h_window())?;
        let full = lh.band_mul(&self.s_tilde_inv.transpose())?;
        Ok(full.into_dense())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::MomentStore;
    use crate::scalar::parse_rat;
    use crate::weights::{TailSpec, WeightParams, WeightSystem};
    use num_bigint::BigInt;
    use proptest::prelude::*;

    fn r(s: &str) -> Rat {
        parse_rat(s).unwrap()
    }

    fn charlier_store(etas: &[&str], m_max: usize) -> MomentStore {
        let sys = WeightSystem::new(
            etas.len(),
            vec![],
            etas.iter().map(|e| WeightParams { eta: r(e), b: vec![] }).collect(),
        )
        .unwrap();
        let cert = sys.truncate(&TailSpec::Target(r("1e-45")), m_max).unwrap();
        MomentStore::build(&sys, &cert)
    }

    #[test]
    fn reconstruction_is_exact() {
        let st = charlier_store(&["1/3", "1/5"], 16);
        let m = st.window(10, 10).unwrap();
        let f = gauss_borel(m.dense()).unwrap();
        assert_eq!(&f.reconstruct().unwrap(), m.dense());
    }

    #[test]
    fn pivots_are_tau_ratios() {
        let st = charlier_store(&["1/3", "1/5"], 14);
        let m = st.window(8, 8).unwrap();
        let f = gauss_borel(m.dense()).unwrap();
        let taus = st.tau_table(8).unwrap();
        for k in 0..8 {
            assert_eq!(f.h()[k], &taus[k + 1] / &taus[k], "H_{k}");
        }
        // prod of the first n pivots = tau_n, the determinant route
        let mut prod = Rat::one();
        for n in 1..=6 {
            prod *= &f.h()[n - 1];
            assert_eq!(prod, taus[n]);
        }
    }

    #[test]
    fn factors_invert_exactly() {
        let st = charlier_store(&["1/3", "1/5"], 14);
        let m = st.window(8, 8).unwrap();
        let f = gauss_borel(m.dense()).unwrap();
        for (a, b) in [
            (f.s(), f.s_inv()),
            (f.s_inv(), f.s()),
            (f.s_tilde(), f.s_tilde_inv()),
            (f.s_tilde_inv(), f.s_tilde()),
        ] {
            let prod = a.band_mul(b).unwrap();
            assert_eq!(prod.dense(), &DenseWindow::identity(8));
        }
    }

    #[test]
    fn leading_window_consistency() {
        // factorization commutes with taking leading windows
        let st = charlier_store(&["1/3", "1/5"], 16);
        let big = gauss_borel(st.window(9, 9).unwrap().dense()).unwrap();
        let small = gauss_borel(st.window(5, 5).unwrap().dense()).unwrap();
        assert_eq!(&big.s_inv().crop(5, 5), small.s_inv());
        assert_eq!(&big.s_tilde().crop(5, 5), small.s_tilde());
        assert_eq!(&big.h()[..5], small.h());
    }

    #[test]
    fn eta_collision_is_not_perfect() {
        let st = charlier_store(&["1/3", "1/3"], 10);
        let m = st.window(6, 6).unwrap();
        assert_eq!(gauss_borel(m.dense()).unwrap_err(), MopsError::NonPerfectSystem(2));
    }

    proptest! {
        // random unitriangular round trip: factor L D U~^T and recover exactly
        #[test]
        fn factorization_round_trip(n in 1usize..6, seed in 0i64..100_000) {
            let val = |i: usize, j: usize, salt: i64| -> Rat {
                let v = (seed * 7 + salt * 131 + (i * 5 + j * 3) as i64) % 9 - 4;
                Rat::new(BigInt::from(v), BigInt::from(1 + ((i + j + seed as usize) % 3) as i64))
            };
            let l = BandWindow::from_fn_band(n, n, FULL, 0,
                |i, j| if i == j { Rat::one() } else { val(i, j, 1) });
            let ut = BandWindow::from_fn_band(n, n, FULL, 0,
                |i, j| if i == j { Rat::one() } else { val(i, j, 2) });
            let hs: Vec<Rat> = (0..n)
                .map(|i| {
                    let v = (seed + i as i64) % 5 - 2;
                    Rat::from_integer(BigInt::from(if v == 0 { 3 } else { v }))
                })
                .collect();
            let m = l.band_mul(&BandWindow::diag(&hs)).unwrap()
                .band_mul(&ut.transpose()).unwrap();
            let f = gauss_borel(m.dense()).unwrap();
            prop_assert_eq!(f.s_inv().dense(), l.dense());
            prop_assert_eq!(f.s_tilde_inv().dense(), ut.dense());
            prop_assert_eq!(&f.h().to_vec(), &hs);
        }
    }
}
