//! Pearson symmetry of the moment matrix and the Laguerre-Freud matrix.
//!
//! When every weight satisfies theta(k+1) w_a(k+1) = sigma_a(k) w_a(k), the
//! moment matrix obeys
//!
//!   theta(Lambda) M = L+ M (sum_a L^(a)+ sigma_a(Lambda^(a)))^T,
//!
//! and dressing that symmetry through the factorization produces one matrix
//! with two expressions,
//!
//!   Psi = Pi- theta(T) = sum_a sigma_a(T^(a))^T (Pi^(a)+)^T,
//!
//! banded with at most p M subdiagonals and deg theta superdiagonals, acting
//! as theta(x) B(x-1) = Psi B(x) and Psi^T A^(a)(x) = sigma_a(x) A^(a)(x+1),
//! and satisfying [Psi, T] = Psi.
//!
//! Truncation discipline: identities that restate linear algebra of the
//! truncated objects (the actions, the compatibility bracket) come out
//! literally zero; identities that lean on the Pearson relation across the
//! truncation edge (the symmetry, the equality of the two Psi routes, the
//! band cutoff) carry one boundary term at k = K + 1 and are judged against
//! the certified tail budget.

use num_traits::Zero;

use crate::error::MopsError;
use crate::factorization::Factorization;
use crate::moments::MomentStore;
use crate::opsys::Poly;
use crate::recurrence::{dressed_pascal_i, dressed_pascal_ii, pascal, pascal_striped, Recurrence};
use crate::scalar::Rat;
use crate::weights::{poly_eval, WeightSystem};
use crate::window::BandWindow;

/// sigma_a(Lambda^(a)) at window size n. The substitution lives in the
/// stripe algebra: (Lambda^(a))^0 is the partial identity I^(a), so every
/// coefficient including the constant term sits on rows congruent to a - 1
/// mod p, and off-stripe rows vanish.
pub fn sigma_lambda_window(sys: &WeightSystem, a: usize, n: usize) -> BandWindow<Rat> {
    let coeffs = sys.sigma_coeffs(a);
    let p = sys.p();
    let deg = coeffs.len() - 1;
    BandWindow::from_fn_band(n, n, 0, p * deg, |i, j| {
        if i % p != (a - 1) % p {
            Rat::zero()
        } else if (j - i) % p == 0 {
            coeffs.get((j - i) / p).cloned().unwrap_or_else(Rat::zero)
        } else {
            Rat::zero()
        }
    })
}

/// J^(a) = H^-1 S~ I^(a) S~^-1 H: image of the partial identity under the
/// same dressing that produces T^(a) and Pi^(a)+-. These satisfy
/// sum_a J^(a) = I and J^(a) A^(b) = delta_ab A^(b).
pub fn dressed_partial_identity(
    f: &Factorization,
    p: usize,
    a: usize,
) -> Result<BandWindow<Rat>, MopsError> {
    let n = f.n();
    f.h_inv_window()
        .band_mul(f.s_tilde())?
        .band_mul(&BandWindow::partial_identity(n, p, a))?
        .band_mul(f.s_tilde_inv())?
        .band_mul(&f.h_window())
}

/// Left-Horner evaluation of a polynomial at a banded window. Each multiply
/// shrinks the contamination-free square by the factor's superdiagonal
/// count.
pub fn poly_at_window(coeffs: &[Rat], m: &BandWindow<Rat>) -> Result<BandWindow<Rat>, MopsError> {
    let n = m.rows().min(m.cols());
    let d = coeffs.len().saturating_sub(1);
    let lead = coeffs.get(d).cloned().unwrap_or_else(Rat::zero);
    let mut acc = BandWindow::identity(n).scale(&lead);
    for v in (0..d).rev() {
        let s = acc.rows();
        acc = m.crop(s, s).band_mul(&acc)?;
        acc = acc.add_scalar_diag(&coeffs[v]);
    }
    Ok(acc)
}

/// Residual of theta(Lambda) M = L+ M (sum_a L^(a)+ sigma_a(Lambda^(a)))^T
/// on the largest windows both sides fill without contamination.
pub fn verify_moment_symmetry(sys: &WeightSystem, st: &MomentStore, n: usize) -> Result<Rat, MopsError> {
    let p = sys.p();
    let m = st.window(n, n)?;
    let theta = sys.theta_coeffs();
    let n_theta = theta.len() - 1;
    let pm = p * (0..p).map(|a| sys.sigma_coeffs(a + 1).len() - 1).max().unwrap_or(0);
    if n <= n_theta.max(pm) {
        return Err(MopsError::WindowTooSmall {
            context: "verify_moment_symmetry",
            need: n_theta.max(pm) + 1,
            have: n,
        });
    }
    let lhs = BandWindow::poly_in_lambda(&theta, n).band_mul_rect(&m, n - n_theta, n)?;
    let lm = pascal(n, 1).band_mul(&m)?;
    let mut sum = pascal_striped(n, p, 1, 1).band_mul(&sigma_lambda_window(sys, 1, n))?;
    for a in 2..=p {
        let term = pascal_striped(n, p, a, 1).band_mul(&sigma_lambda_window(sys, a, n))?;
        sum = sum.add_window(&term)?;
    }
    let rhs = lm.band_mul_rect(&sum.transpose(), n, n - pm)?;
    Ok(lhs.residual_vs(&rhs))
}

#[derive(Clone, Debug)]
pub struct PsiData {
    /// Pi- theta(T): the route kept for downstream use.
    pub psi: BandWindow<Rat>,
    /// sum_a sigma_a(T^(a))^T (Pi^(a)+)^T.
    pub psi_right: BandWindow<Rat>,
    /// Claimed band profile (p M subdiagonals, deg theta superdiagonals).
    pub sub_claim: usize,
    pub sup_claim: usize,
    /// Max |left - right| on the shared window.
    pub route_residual: Rat,
    /// Max |entry| outside the claimed band, measured on the left route.
    pub band_residual: Rat,
}

pub fn build_psi(sys: &WeightSystem, f: &Factorization, rec: &Recurrence) -> Result<PsiData, MopsError> {
    let p = sys.p();
    let theta = sys.theta_coeffs();
    let n_theta = theta.len() - 1;
    let big_m = (1..=p).map(|a| sys.sigma_coeffs(a).len() - 1).max().unwrap_or(0);

    let theta_t = poly_at_window(&theta, rec.t())?;
    let s = theta_t.rows();
    let psi = dressed_pascal_ii(f, -1)?.crop(s, s).band_mul(&theta_t)?;

    let mut right: Option<BandWindow<Rat>> = None;
    for a in 1..=p {
        let sig = sys.sigma_coeffs(a);
        let sig_t = poly_at_window(&sig, rec.t_part(a))?;
        let sr = sig_t.rows();
        // constant term of the stripe substitution is J^(a), not I
        let sig_t = dressed_partial_identity(f, p, a)?.crop(sr, sr).band_mul(&sig_t)?;
        let sr = sig_t.rows();
        let term = sig_t
            .transpose()
            .band_mul(&dressed_pascal_i(f, p, a, 1)?.crop(sr, sr).transpose())?;
        right = Some(match right {
            None => term,
            Some(acc) => {
                let w = acc.rows().min(term.rows());
                acc.crop(w, w).add_window(&term.crop(w, w))?
            }
        });
    }
    let psi_right = right.expect("p >= 1");

    let route_residual = psi.residual_vs(&psi_right);
    let band_residual = psi.off_band_residual(p * big_m, n_theta);
    Ok(PsiData {
        psi,
        psi_right,
        sub_claim: p * big_m,
        sup_claim: n_theta,
        route_residual,
        band_residual,
    })
}

impl PsiData {
    /// psi^(j)_m = Psi[m][m + j] for j >= 0, Psi[m - j][m]... the caller
    /// indexes superdiagonals by j >= 0 and subdiagonals by j < 0.
    pub fn diag(&self, j: isize) -> Vec<Rat> {
        if j >= 0 {
            self.psi.supdiag(j as usize)
        } else {
            self.psi.subdiag((-j) as usize)
        }
    }
}

/// Max relative residual of theta(x) B_n(x - 1) = sum_m Psi[n][m] B_m(x)
/// over every row whose band fits the window, as polynomial identities.
/// Each row is scaled by the largest coefficient magnitude among its
/// contributing terms (floored at 1), so the verdict measures cancellation
/// quality instead of the raw growth of the polynomials involved.
pub fn verify_psi_action_ii(sys: &WeightSystem, psi: &PsiData, type_ii: &[Poly]) -> Rat {
    let theta = sys.theta_coeffs();
    let theta_poly = Poly::new(theta.clone());
    let mut max = Rat::zero();
    let rows = psi.psi.rows();
    for n in 0..rows {
        let reach = n + psi.sup_claim;
        if reach >= type_ii.len() || reach >= psi.psi.cols() {
            break;
        }
        let lhs = poly_mul(&theta_poly, &type_ii[n].compose_shift(&Rat::from_integer((-1).into())));
        let mut rhs = Poly::zero();
        let mut scale = poly_scale(&lhs);
        for (m, bm) in type_ii.iter().enumerate().take(reach + 1) {
            let c = psi.psi.at(n, m);
            if !c.is_zero() {
                let term = bm.scale(c);
                grow(&mut scale, poly_scale(&term));
                rhs = rhs.add(&term);
            }
        }
        track_scaled(&mut max, &lhs.sub(&rhs), &scale);
    }
    max
}

/// Max relative residual of Psi^T A^(a)(x) = sigma_a(x) A^(a)(x + 1): row n
/// of Psi^T reads column n of Psi. Same per-row scaling as the type II
/// action.
pub fn verify_psi_action_i(sys: &WeightSystem, psi: &PsiData, type_i: &[Vec<Poly>]) -> Rat {
    let p = sys.p();
    let mut max = Rat::zero();
    let rows = psi.psi.rows();
    for a in 1..=p {
        let sigma = Poly::new(sys.sigma_coeffs(a));
        for n in 0..psi.psi.cols() {
            let reach = n + psi.sub_claim.max(psi.sup_claim);
            if reach >= rows || reach >= type_i.len() {
                break;
            }
            let one = Rat::from_integer(1.into());
            let lhs = poly_mul(&sigma, &type_i[n][a - 1].compose_shift(&one));
            let mut rhs = Poly::zero();
            let mut scale = poly_scale(&lhs);
            for (m, am) in type_i.iter().enumerate().take(reach + 1) {
                let c = psi.psi.at(m, n);
                if !c.is_zero() {
                    let term = am[a - 1].scale(c);
                    grow(&mut scale, poly_scale(&term));
                    rhs = rhs.add(&term);
                }
            }
            track_scaled(&mut max, &lhs.sub(&rhs), &scale);
        }
    }
    max
}

fn poly_scale(poly: &Poly) -> Rat {
    use num_traits::Signed;
    let mut s = Rat::zero();
    for c in poly.coeffs() {
        let a = c.abs();
        if a > s {
            s = a;
        }
    }
    s
}

fn grow(scale: &mut Rat, candidate: Rat) {
    if candidate > *scale {
        *scale = candidate;
    }
}

fn track_scaled(max: &mut Rat, diff: &Poly, scale: &Rat) {
    use num_traits::{One, Signed};
    let one = Rat::one();
    let denom = if *scale > one { scale.clone() } else { one };
    for c in diff.coeffs() {
        let a = c.abs() / &denom;
        if a > *max {
            *max = a;
        }
    }
}

/// Max residual of [Psi, T] - Psi on the common contamination-free square.
pub fn psi_compatibility_residual(psi: &PsiData, rec: &Recurrence) -> Result<Rat, MopsError> {
    let bracket = psi.psi.commutator(rec.t())?;
    let s = bracket.rows();
    let diff = bracket.sub_window(&psi.psi.crop(s, s))?;
    Ok(diff.max_abs())
}

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let (ca, cb) = (a.coeffs(), b.coeffs());
    if ca.is_empty() || cb.is_empty() {
        return Poly::zero();
    }
    let mut out = vec![Rat::zero(); ca.len() + cb.len() - 1];
    for (i, x) in ca.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in cb.iter().enumerate() {
            if !y.is_zero() {
                out[i + j] += x * y;
            }
        }
    }
    Poly::new(out)
}

/// Evaluate theta at a rational point; convenience for fault localization
/// experiments against raw weight tables.
pub fn theta_at(sys: &WeightSystem, x: &Rat) -> Rat {
    poly_eval(&sys.theta_coeffs(), x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::gauss_borel;
    use crate::opsys::{type_i_all, type_ii_all};
    use crate::recurrence::build_recurrence;
    use crate::scalar::{parse_rat, ToleranceBudget};
    use crate::weights::{TailSpec, WeightParams};

    fn r(s: &str) -> Rat {
        parse_rat(s).unwrap()
    }

    struct Setup {
        sys: WeightSystem,
        st: MomentStore,
        f: Factorization,
        rec: Recurrence,
        budget: ToleranceBudget,
    }

    fn setup(sys: WeightSystem, n: usize, tail: &str) -> Setup {
        let p = sys.p();
        let n_theta = sys.c().len() + 1;
        let pm = p * (1..=p).map(|a| sys.weight(a).b.len()).max().unwrap();
        let m_max = (n - 1) + (n - 1) / p + n_theta.max(pm) + 2;
        let cert = sys.truncate(&TailSpec::Target(r(tail)), m_max).unwrap();
        let st = MomentStore::build(&sys, &cert);
        let f = gauss_borel(st.window(n, n).unwrap().dense()).unwrap();
        let rec = build_recurrence(&f, p).unwrap();
        let budget = ToleranceBudget::tail(cert.bound.clone());
        Setup { sys, st, f, rec, budget }
    }

    fn charlier2(n: usize) -> Setup {
        setup(
            WeightSystem::new(
                2,
                vec![],
                vec![
                    WeightParams { eta: r("1/3"), b: vec![] },
                    WeightParams { eta: r("1/5"), b: vec![] },
                ],
            )
            .unwrap(),
            n,
            "1e-60",
        )
    }

    fn gen_charlier2(n: usize) -> Setup {
        setup(
            WeightSystem::new(
                2,
                vec![r("3/2")],
                vec![
                    WeightParams { eta: r("1/4"), b: vec![] },
                    WeightParams { eta: r("1/3"), b: vec![] },
                ],
            )
            .unwrap(),
            n,
            "1e-60",
        )
    }

    fn meixner2(n: usize) -> Setup {
        setup(
            WeightSystem::new(
                2,
                vec![],
                vec![
                    WeightParams { eta: r("1/4"), b: vec![r("1/3")] },
                    WeightParams { eta: r("1/4"), b: vec![r("2/5")] },
                ],
            )
            .unwrap(),
            n,
            "1e-45",
        )
    }

    #[test]
    fn moment_symmetry_within_budget() {
        for s in [charlier2(9), gen_charlier2(9), meixner2(8)] {
            let res = verify_moment_symmetry(&s.sys, &s.st, 8).unwrap();
            assert!(s.budget.allows(&res), "residual {res}");
        }
    }

    #[test]
    fn psi_routes_agree_within_budget() {
        for s in [charlier2(10), gen_charlier2(10), meixner2(9)] {
            let psi = build_psi(&s.sys, &s.f, &s.rec).unwrap();
            assert!(s.budget.allows(&psi.route_residual), "routes differ by {}", psi.route_residual);
            assert!(s.budget.allows(&psi.band_residual), "off-band mass {}", psi.band_residual);
        }
    }

    #[test]
    fn charlier_band_is_bidiagonal() {
        let s = charlier2(10);
        let psi = build_psi(&s.sys, &s.f, &s.rec).unwrap();
        assert_eq!(psi.sub_claim, 0);
        assert_eq!(psi.sup_claim, 1);
    }

    #[test]
    fn psi_acts_as_theta_shift_on_type_ii() {
        let s = charlier2(11);
        let psi = build_psi(&s.sys, &s.f, &s.rec).unwrap();
        let type_ii = type_ii_all(&s.f);
        // left-route action is plain linear algebra: literally zero
        assert!(verify_psi_action_ii(&s.sys, &psi, &type_ii).is_zero());
    }

    #[test]
    fn psi_transpose_acts_as_sigma_shift_on_type_i() {
        for s in [charlier2(11), gen_charlier2(11)] {
            let psi = build_psi(&s.sys, &s.f, &s.rec).unwrap();
            let type_i = type_i_all(&s.f, s.sys.p());
            let res = verify_psi_action_i(&s.sys, &psi, &type_i);
            assert!(s.budget.allows(&res), "residual {res}");
        }
    }

    #[test]
    fn bracket_compatibility_is_exact() {
        for s in [charlier2(10), gen_charlier2(10)] {
            let psi = build_psi(&s.sys, &s.f, &s.rec).unwrap();
            let res = psi_compatibility_residual(&psi, &s.rec).unwrap();
            assert!(res.is_zero(), "bracket residual {res}");
        }
    }

    #[test]
    fn theta_polynomial_matches_weight_recursion() {
        let s = gen_charlier2(8);
        // theta(k+1) w(k+1) = sigma(k) w(k) evaluated through theta_at
        let table = s.sys.weight_table(1, 10);
        for k in 0..10 {
            let lhs = theta_at(&s.sys, &Rat::from_integer((k as i64 + 1).into())) * &table[k + 1];
            let rhs = poly_eval(&s.sys.sigma_coeffs(1), &Rat::from_integer((k as i64).into())) * &table[k];
            assert_eq!(lhs, rhs);
        }
    }
}
