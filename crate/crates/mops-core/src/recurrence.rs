//! The recurrence operator and the Pascal shift operators.
//!
//! T = S Lambda S^-1 carries the p + 2 term recurrence of the type II
//! system. Its one-superdiagonal shape is structural; the depth-p cutoff
//! below the diagonal is a theorem, so it is verified entrywise before the
//! window is retagged as banded metadata. A second, independent expression
//! T = H S~^-T (Lambda^T)^p S~^T H^-1 comes from the striped Hankel
//! symmetry of the moment matrix; both are computed and compared on their
//! common contamination-free window.
//!
//! The per-weight operators T^(a) = H^-1 S~ Lambda^(a) S~^-1 H drive the
//! type I recurrence; their sum is T^T exactly. Pascal matrices dressed by
//! the same factors turn argument shifts x -> x +- 1 into explicit
//! lower-triangular operators on either polynomial family.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::error::MopsError;
use crate::factorization::Factorization;
use crate::opsys::Poly;
use crate::scalar::Rat;
use crate::window::{BandWindow, FULL};

#[derive(Clone, Debug)]
pub struct Recurrence {
    p: usize,
    /// (p, 1)-banded window of T, one row smaller than the factorization.
    t: BandWindow<Rat>,
    /// T^(a), a = 1..=p, on the (n - p) window.
    t_parts: Vec<BandWindow<Rat>>,
    /// alphas[a][m] = T[m + a][m], a = 0..=p.
    alphas: Vec<Vec<Rat>>,
    /// Exactness records: residual of the two T routes on the shared
    /// window, the off-band mass of T, and sum_a T^(a) against T^T.
    pub dual_route_residual: Rat,
    pub band_residual: Rat,
    pub parts_sum_residual: Rat,
}

pub fn build_recurrence(f: &Factorization, p: usize) -> Result<Recurrence, MopsError> {
    let n = f.n();
    if n <= p + 1 {
        return Err(MopsError::WindowTooSmall { context: "build_recurrence", need: p + 2, have: n });
    }
    let lambda = BandWindow::lambda_pow(n, 1);

    // route one: dress the shift by S
    let t_raw = f.s().band_mul(&lambda)?.band_mul(f.s_inv())?; // (n - 1) window
    let band_residual = t_raw.off_band_residual(p, 1);

    // route two: dress (Lambda^T)^p by H S~^-T
    let lt_p = BandWindow::lambda_pow(n, p).transpose();
    let t_dual = f
        .h_window()
        .band_mul(&f.s_tilde_inv().transpose())?
        .band_mul(&lt_p)?
        .align_mul(&f.s_tilde().transpose())?
        .align_mul(&f.h_inv_window())?; // (n - p) window
    let dual_route_residual = t_raw.residual_vs(&t_dual);

    let t = if band_residual.is_zero() {
        t_raw.retag(p, 1)?
    } else {
        t_raw
    };

    // per-weight operators: S~ Lambda^(a) is a masked column shift of S~,
    // exact at the full window size
    let mut t_parts = Vec::with_capacity(p);
    for a in 1..=p {
        let shifted = BandWindow::from_fn_band(n, n, FULL, p, |i, j| {
            if j >= p && j % p == (a - 1) % p {
                f.s_tilde().at(i, j - p).clone()
            } else {
                Rat::zero()
            }
        });
        let part = f
            .h_inv_window()
            .crop(n - p, n - p)
            .band_mul(&shifted.band_mul(f.s_tilde_inv())?)?
            .align_mul(&f.h_window())?;
        t_parts.push(part);
    }
    let mut sum = t_parts[0].clone();
    for part in &t_parts[1..] {
        sum = sum.add_window(part)?;
    }
    let parts_sum_residual = sum.residual_vs(&t.transpose());

    let alphas = (0..=p).map(|a| t.subdiag(a)).collect();
    Ok(Recurrence {
        p,
        t,
        t_parts,
        alphas,
        dual_route_residual,
        band_residual,
        parts_sum_residual,
    })
}

impl Recurrence {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn t(&self) -> &BandWindow<Rat> {
        &self.t
    }

    pub fn t_part(&self, a: usize) -> &BandWindow<Rat> {
        &self.t_parts[a - 1]
    }

    /// alpha^(a)_m = T[m + a][m]; a = 0 is the diagonal.
    pub fn alpha(&self, a: usize, m: usize) -> Result<&Rat, MopsError> {
        self.alphas
            .get(a)
            .and_then(|row| row.get(m))
            .ok_or(MopsError::IndexOutOfRange {
                what: "alpha",
                index: m,
                limit: self.alphas.get(a).map(|r| r.len()).unwrap_or(0),
            })
    }

    pub fn alpha_seq(&self, a: usize) -> &[Rat] {
        &self.alphas[a]
    }

    /// How many recurrence rows x B_n = ... are fully inside the window.
    pub fn checkable_rows(&self) -> usize {
        self.t.rows().saturating_sub(self.p)
    }
}

pub(crate) fn binom_big(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for j in 0..k.min(n - k) {
        num *= BigInt::from(n - j);
        den *= BigInt::from(j + 1);
    }
    num / den
}

/// L+ (sign +1) or its inverse L- (sign -1): (anti)binomial lower triangle.
pub fn pascal(n: usize, sign: i32) -> BandWindow<Rat> {
    BandWindow::from_fn_band(n, n, FULL, 0, |i, j| {
        let b = Rat::from_integer(binom_big(i, j));
        if sign > 0 || (i + j) % 2 == 0 {
            b
        } else {
            -b
        }
    })
}

/// Striped Pascal for weight a: binomials indexed along positions
/// p q + a - 1, identity on the other residues.
pub fn pascal_striped(n: usize, p: usize, a: usize, sign: i32) -> BandWindow<Rat> {
    BandWindow::from_fn_band(n, n, FULL, 0, |i, j| {
        let ra = (a - 1) % p;
        if i % p == ra && j % p == ra {
            let (qi, qj) = (i / p, j / p);
            let b = Rat::from_integer(binom_big(qi, qj));
            if sign > 0 || (qi + qj) % 2 == 0 {
                b
            } else {
                -b
            }
        } else if i == j {
            Rat::one()
        } else {
            Rat::zero()
        }
    })
}

/// Pi+- = S L+- S^-1: shift operator for the type II family, full window.
pub fn dressed_pascal_ii(f: &Factorization, sign: i32) -> Result<BandWindow<Rat>, MopsError> {
    f.s().band_mul(&pascal(f.n(), sign))?.band_mul(f.s_inv())
}

/// Pi^(a)+- = H^-1 S~ L^(a)+- S~^-1 H: shift operator for the type I
/// family of weight a, full window.
pub fn dressed_pascal_i(f: &Factorization, p: usize, a: usize, sign: i32) -> Result<BandWindow<Rat>, MopsError> {
    let n = f.n();
    f.h_inv_window()
        .band_mul(f.s_tilde())?
        .band_mul(&pascal_striped(n, p, a, sign))?
        .band_mul(f.s_tilde_inv())?
        .band_mul(&f.h_window())
}

/// Max residual of x B_n = B_{n+1} + alpha^(0)_n B_n + sum_a alpha^(a)_{n-a} B_{n-a}
/// over every fully-windowed row, as polynomial identities.
pub fn verify_recurrence_ii(rec: &Recurrence, polys: &[Poly]) -> Rat {
    let rows = rec.checkable_rows().min(polys.len().saturating_sub(1));
    let mut max = Rat::zero();
    for n in 0..rows {
        let mut rhs = polys[n + 1].add(&polys[n].scale(rec.alpha(0, n).expect("row in range")));
        for a in 1..=rec.p() {
            if n >= a {
                rhs = rhs.add(&polys[n - a].scale(rec.alpha(a, n - a).expect("row in range")));
            }
        }
        track_poly_residual(&mut max, &polys[n].mul_x(), &rhs);
    }
    max
}

/// Max residual of x A^(a)_n = A^(a)_{n-1} + alpha^(0)_n A^(a)_n
/// + sum_b alpha^(b)_n A^(a)_{n+b}, all weights, as polynomial identities.
pub fn verify_recurrence_i(rec: &Recurrence, type_i: &[Vec<Poly>]) -> Rat {
    let p = rec.p();
    let rows = type_i.len().saturating_sub(p).min(rec.t.rows().saturating_sub(p));
    let mut max = Rat::zero();
    for n in 0..rows {
        for a in 1..=p {
            let mut rhs = type_i[n][a - 1].scale(rec.alpha(0, n).expect("row in range"));
            if n > 0 {
                rhs = rhs.add(&type_i[n - 1][a - 1]);
            }
            for b in 1..=p {
                rhs = rhs.add(&type_i[n + b][a - 1].scale(rec.alpha(b, n).expect("row in range")));
            }
            track_poly_residual(&mut max, &type_i[n][a - 1].mul_x(), &rhs);
        }
    }
    max
}

/// Max residual of B_n(x + s) = sum_m Pi[n][m] B_m(x), s = +-1.
pub fn verify_shift_ii(pi: &BandWindow<Rat>, polys: &[Poly], s: i64) -> Rat {
    let shift = Rat::from_integer(BigInt::from(s));
    let mut max = Rat::zero();
    for n in 0..polys.len().min(pi.rows()) {
        let lhs = polys[n].compose_shift(&shift);
        let mut rhs = Poly::zero();
        for (m, bm) in polys.iter().enumerate().take(n + 1) {
            let c = pi.at(n, m);
            if !c.is_zero() {
                rhs = rhs.add(&bm.scale(c));
            }
        }
        track_poly_residual(&mut max, &lhs, &rhs);
    }
    max
}

/// Max residual of A^(a)_n(x + s) = sum_m Pi^(a)[n][m] A^(a)_m(x).
pub fn verify_shift_i(pi: &BandWindow<Rat>, type_i: &[Vec<Poly>], a: usize, s: i64) -> Rat {
    let shift = Rat::from_integer(BigInt::from(s));
    let mut max = Rat::zero();
    for n in 0..type_i.len().min(pi.rows()) {
        let lhs = type_i[n][a - 1].compose_shift(&shift);
        let mut rhs = Poly::zero();
        for (m, am) in type_i.iter().enumerate().take(n + 1) {
            let c = pi.at(n, m);
            if !c.is_zero() {
                rhs = rhs.add(&am[a - 1].scale(c));
            }
        }
        track_poly_residual(&mut max, &lhs, &rhs);
    }
    max
}

fn track_poly_residual(max: &mut Rat, lhs: &Poly, rhs: &Poly) {
    let diff = lhs.sub(rhs);
    for c in diff.coeffs() {
        let a = c.abs();
        if a > *max {
            *max = a;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::gauss_borel;
    use crate::moments::MomentStore;
    use crate::opsys::{type_i_all, type_ii_all};
    use crate::scalar::{parse_rat, ToleranceBudget};
    use crate::weights::{TailSpec, WeightParams, WeightSystem};
    use crate::window::DenseWindow;

    fn r(s: &str) -> Rat {
        parse_rat(s).unwrap()
    }

    struct Setup {
        f: Factorization,
        rec: Recurrence,
    }

    fn charlier(etas: &[&str], n: usize) -> Setup {
        let p = etas.len();
        let sys = WeightSystem::new(
            p,
            vec![],
            etas.iter().map(|e| WeightParams { eta: r(e), b: vec![] }).collect(),
        )
        .unwrap();
        let m_max = (n - 1) + (n - 1) / p + 1;
        let cert = sys.truncate(&TailSpec::Target(r("1e-60")), m_max).unwrap();
        let st = MomentStore::build(&sys, &cert);
        let f = gauss_borel(st.window(n, n).unwrap().dense()).unwrap();
        let rec = build_recurrence(&f, p).unwrap();
        Setup { f, rec }
    }

    #[test]
    fn t_routes_and_band_are_exact() {
        let s = charlier(&["1/3", "1/5"], 10);
        assert!(s.rec.dual_route_residual.is_zero());
        assert!(s.rec.band_residual.is_zero());
        assert!(s.rec.parts_sum_residual.is_zero());
        assert_eq!(s.rec.t().sub(), 2);
        assert_eq!(s.rec.t().sup(), 1);
    }

    #[test]
    fn alpha_zero_charlier_values() {
        // alpha^(0)_n = n + eta_{(n mod p) + 1} holds for the full measure;
        // the truncated factorization reproduces it within the tail budget
        let s = charlier(&["1/3", "1/5"], 10);
        let budget = ToleranceBudget::tail(r("1e-60"));
        for (m, expect) in [(0usize, r("1/3")), (1, r("6/5")), (2, r("7/3"))] {
            let dev = s.rec.alpha(0, m).unwrap() - expect;
            assert!(budget.allows(&dev), "m = {m}, off by {dev}");
        }
    }

    #[test]
    fn single_weight_alpha_one_is_linear_in_eta() {
        let s = charlier(&["2/7"], 9);
        let budget = ToleranceBudget::tail(r("1e-60"));
        for m in 0..s.rec.alpha_seq(1).len() {
            let expect = r("2/7") * Rat::from_integer((m as i64 + 1).into());
            let dev = s.rec.alpha(1, m).unwrap() - expect;
            assert!(budget.allows(&dev), "m = {m}, off by {dev}");
        }
    }

    #[test]
    fn deepest_alpha_is_h_ratio() {
        let s = charlier(&["1/3", "1/5"], 10);
        let h = s.f.h();
        for m in 0..s.rec.alpha_seq(2).len() {
            assert_eq!(s.rec.alpha(2, m).unwrap(), &(&h[m + 2] / &h[m]));
        }
    }

    #[test]
    fn recurrences_hold_as_polynomial_identities() {
        let s = charlier(&["1/3", "1/5"], 10);
        let type_ii = type_ii_all(&s.f);
        let type_i = type_i_all(&s.f, 2);
        assert!(verify_recurrence_ii(&s.rec, &type_ii).is_zero());
        assert!(verify_recurrence_i(&s.rec, &type_i).is_zero());
    }

    #[test]
    fn pascal_pair_and_shifts() {
        let s = charlier(&["1/3", "1/5"], 9);
        let n = s.f.n();
        let prod = pascal(n, 1).band_mul(&pascal(n, -1)).unwrap();
        assert_eq!(prod.dense(), &DenseWindow::identity(n));
        for a in 1..=2 {
            let striped = pascal_striped(n, 2, a, 1)
                .band_mul(&pascal_striped(n, 2, a, -1))
                .unwrap();
            assert_eq!(striped.dense(), &DenseWindow::identity(n));
        }

        let type_ii = type_ii_all(&s.f);
        let type_i = type_i_all(&s.f, 2);
        for sign in [1i32, -1] {
            let pi = dressed_pascal_ii(&s.f, sign).unwrap();
            assert!(verify_shift_ii(&pi, &type_ii, sign as i64).is_zero());
            for a in 1..=2 {
                let pia = dressed_pascal_i(&s.f, 2, a, sign).unwrap();
                assert!(verify_shift_i(&pia, &type_i, a, sign as i64).is_zero());
            }
        }
    }

    #[test]
    fn descending_pascal_first_subdiagonal() {
        let s = charlier(&["1/3", "1/5"], 9);
        let pi = dressed_pascal_ii(&s.f, -1).unwrap();
        for m in 0..pi.rows() - 1 {
            assert_eq!(pi.at(m + 1, m), &Rat::from_integer((-(m as i64) - 1).into()));
        }
    }

    #[test]
    fn window_too_small_is_reported() {
        // a 3-window cannot host a p = 2 recurrence row
        let sys = WeightSystem::new(
            2,
            vec![],
            vec![
                WeightParams { eta: r("1/3"), b: vec![] },
                WeightParams { eta: r("1/5"), b: vec![] },
            ],
        )
        .unwrap();
        let cert = sys.truncate(&TailSpec::Target(r("1e-20")), 4).unwrap();
        let st = MomentStore::build(&sys, &cert);
        let f = gauss_borel(st.window(3, 3).unwrap().dense()).unwrap();
        assert!(matches!(build_recurrence(&f, 2), Err(MopsError::WindowTooSmall { .. })));
    }
}
