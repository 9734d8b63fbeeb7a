//! The two polynomial systems attached to a factorized moment matrix.
//!
//! Type II: B_n(x) = sum_j S[n][j] x^j, monic of degree n. Type I: for each
//! weight a, A^(a)_n(x) = (1/H_n) sum_q S~[n][pq + a - 1] x^q. Both come
//! straight off the factorization; both also have determinantal expressions
//! through minors of the moment matrix, kept here as an independent route.
//!
//! Orthogonality is checked against the measure itself: polynomials are
//! evaluated at integer points and summed against the truncated weight
//! tables. Because the factorization was built from the same truncated
//! moments, these sums vanish literally, not merely within a tolerance.

use num_traits::{One, Zero};

use crate::error::MopsError;
use crate::factorization::Factorization;
use crate::moments::{det_exact, MomentStore};
use crate::scalar::Rat;
use crate::weights::WeightSystem;
use crate::window::DenseWindow;

#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    coeffs: Vec<Rat>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<Rat>) -> Self {
        while coeffs.last().map(|c| c.is_zero()).unwrap_or(false) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Poly { coeffs: vec![Rat::one()] }
    }

    pub fn coeffs(&self) -> &[Rat] {
        &self.coeffs
    }

    /// Coefficient of x^i, zero beyond the degree.
    pub fn coeff(&self, i: usize) -> Rat {
        self.coeffs.get(i).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval(&self, x: &Rat) -> Rat {
        let mut acc = Rat::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn add(&self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|i| self.coeff(i) + rhs.coeff(i)).collect())
    }

    pub fn sub(&self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|i| self.coeff(i) - rhs.coeff(i)).collect())
    }

    pub fn scale(&self, c: &Rat) -> Poly {
        Poly::new(self.coeffs.iter().map(|x| x * c).collect())
    }

    /// x * p(x).
    pub fn mul_x(&self) -> Poly {
        if self.coeffs.is_empty() {
            return Poly::zero();
        }
        let mut out = Vec::with_capacity(self.coeffs.len() + 1);
        out.push(Rat::zero());
        out.extend(self.coeffs.iter().cloned());
        Poly::new(out)
    }

    /// p(x + s).
    pub fn compose_shift(&self, s: &Rat) -> Poly {
        let mut acc: Vec<Rat> = Vec::new();
        for c in self.coeffs.iter().rev() {
            // acc <- acc * (x + s) + c
            let mut next = vec![Rat::zero(); acc.len() + 1];
            for (i, a) in acc.iter().enumerate() {
                next[i + 1] += a;
                next[i] += a * s;
            }
            if next.is_empty() {
                next.push(Rat::zero());
            }
            next[0] += c;
            acc = next;
        }
        Poly::new(acc)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// Monic type II polynomial of degree n: row n of S.
pub fn type_ii_poly(f: &Factorization, n: usize) -> Result<Poly, MopsError> {
    if n >= f.n() {
        return Err(MopsError::IndexOutOfRange { what: "type II degree", index: n, limit: f.n() - 1 });
    }
    Ok(Poly::new((0..=n).map(|j| f.s().at(n, j).clone()).collect()))
}

pub fn type_ii_all(f: &Factorization) -> Vec<Poly> {
    (0..f.n()).map(|n| type_ii_poly(f, n).expect("n < window size")).collect()
}

/// Type I polynomials (A^(1)_n, ..., A^(p)_n): striped slices of row n of
/// S~, scaled by 1/H_n.
pub fn type_i_polys(f: &Factorization, p: usize, n: usize) -> Result<Vec<Poly>, MopsError> {
    if n >= f.n() {
        return Err(MopsError::IndexOutOfRange { what: "type I index", index: n, limit: f.n() - 1 });
    }
    let hn = &f.h()[n];
    let mut out = Vec::with_capacity(p);
    for a in 1..=p {
        let mut coeffs = Vec::new();
        let mut m = a - 1;
        while m <= n {
            coeffs.push(f.s_tilde().at(n, m).clone() / hn.clone());
            m += p;
        }
        out.push(Poly::new(coeffs));
    }
    Ok(out)
}

pub fn type_i_all(f: &Factorization, p: usize) -> Vec<Vec<Poly>> {
    (0..f.n()).map(|n| type_i_polys(f, p, n).expect("n < window size")).collect()
}

/// Determinantal route to B_n: expand the moment window bordered by a row
/// of powers of x along that row, normalize by tau_n.
pub fn type_ii_poly_det(st: &MomentStore, n: usize) -> Result<Poly, MopsError> {
    let taus = st.tau_table(n)?;
    if taus[n].is_zero() {
        return Err(MopsError::NonPerfectSystem(n));
    }
    let full = st.window(n + 1, n.max(1))?;
    let mut coeffs = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let minor = DenseWindow::from_fn(n, n, |r, c| {
            let row = if r < i { r } else { r + 1 };
            full.at(row, c).clone()
        });
        let sign = if (n + i) % 2 == 0 { Rat::one() } else { -Rat::one() };
        coeffs.push(sign * det_exact(&minor) / taus[n].clone());
    }
    Ok(Poly::new(coeffs))
}

/// Determinantal route to A^(a)_n: delete striped columns from the
/// (n rows) x (n + 1 cols) moment window, normalize by tau_{n+1}.
pub fn type_i_poly_det(st: &MomentStore, n: usize, a: usize) -> Result<Poly, MopsError> {
    let p = st.p();
    let taus = st.tau_table(n + 1)?;
    if taus[n + 1].is_zero() {
        return Err(MopsError::NonPerfectSystem(n + 1));
    }
    let full = st.window(n.max(1), n + 1)?;
    let mut coeffs = Vec::new();
    let mut m = a - 1;
    while m <= n {
        let minor = DenseWindow::from_fn(n, n, |r, c| {
            let col = if c < m { c } else { c + 1 };
            full.at(r, col).clone()
        });
        let sign = if (n + m) % 2 == 0 { Rat::one() } else { -Rat::one() };
        coeffs.push(sign * det_exact(&minor) / taus[n + 1].clone());
        m += p;
    }
    Ok(Poly::new(coeffs))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrthoFault {
    pub n: usize,
    /// Weight index for type II relations; 0 for aggregated type I relations.
    pub weight: usize,
    pub degree: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrthoOutcome {
    pub max_residual: Rat,
    pub first_fault: Option<OrthoFault>,
}

impl OrthoOutcome {
    fn record(&mut self, dev: Rat, fault: OrthoFault) {
        use num_traits::Signed;
        let a = dev.abs();
        if !a.is_zero() && self.first_fault.is_none() {
            self.first_fault = Some(fault);
        }
        if a > self.max_residual {
            self.max_residual = a;
        }
    }
}

fn weight_tables(sys: &WeightSystem, kmax: usize) -> Vec<Vec<Rat>> {
    (1..=sys.p()).map(|a| sys.weight_table(a, kmax)).collect()
}

/// sum_k B_n(k) k^j w_a(k) = 0 for p j + a - 1 < n and = H_n at
/// p j + a - 1 = n, checked literally against the truncated measure.
pub fn verify_type_ii_orthogonality(
    sys: &WeightSystem,
    kmax: usize,
    polys: &[Poly],
    h: &[Rat],
) -> OrthoOutcome {
    let p = sys.p();
    let tables = weight_tables(sys, kmax);
    let mut out = OrthoOutcome { max_residual: Rat::zero(), first_fault: None };
    for (n, bn) in polys.iter().enumerate() {
        let values: Vec<Rat> =
            (0..=kmax).map(|k| bn.eval(&Rat::from_integer(k.into()))).collect();
        for m in 0..=n {
            let a = m % p + 1;
            let j = m / p;
            let mut sum = Rat::zero();
            for (k, w) in tables[a - 1].iter().enumerate() {
                if w.is_zero() {
                    continue;
                }
                sum += &values[k] * pow_int(k, j) * w;
            }
            let expected = if m == n { h[n].clone() } else { Rat::zero() };
            out.record(sum - expected, OrthoFault { n, weight: a, degree: j });
        }
    }
    out
}

/// sum_a sum_k k^m A^(a)_n(k) w_a(k) = delta_{m n} for m <= n.
pub fn verify_type_i_orthogonality(
    sys: &WeightSystem,
    kmax: usize,
    polys: &[Vec<Poly>],
) -> OrthoOutcome {
    let tables = weight_tables(sys, kmax);
    let mut out = OrthoOutcome { max_residual: Rat::zero(), first_fault: None };
    for (n, an) in polys.iter().enumerate() {
        let values: Vec<Vec<Rat>> = an
            .iter()
            .map(|pa| (0..=kmax).map(|k| pa.eval(&Rat::from_integer(k.into()))).collect())
            .collect();
        for m in 0..=n {
            let mut sum = Rat::zero();
            for (ai, table) in tables.iter().enumerate() {
                for (k, w) in table.iter().enumerate() {
                    if w.is_zero() {
                        continue;
                    }
                    sum += &values[ai][k] * pow_int(k, m) * w;
                }
            }
            let expected = if m == n { Rat::one() } else { Rat::zero() };
            out.record(sum - expected, OrthoFault { n, weight: 0, degree: m });
        }
    }
    out
}

/// sum_a sum_k B_m(k) A^(a)_n(k) w_a(k) = delta_{m n}.
pub fn verify_biorthogonality(
    sys: &WeightSystem,
    kmax: usize,
    type_ii: &[Poly],
    type_i: &[Vec<Poly>],
) -> OrthoOutcome {
    let tables = weight_tables(sys, kmax);
    let mut out = OrthoOutcome { max_residual: Rat::zero(), first_fault: None };
    let b_vals: Vec<Vec<Rat>> = type_ii
        .iter()
        .map(|b| (0..=kmax).map(|k| b.eval(&Rat::from_integer(k.into()))).collect())
        .collect();
    for (n, an) in type_i.iter().enumerate() {
        let a_vals: Vec<Vec<Rat>> = an
            .iter()
            .map(|pa| (0..=kmax).map(|k| pa.eval(&Rat::from_integer(k.into()))).collect())
            .collect();
        for (m, bv) in b_vals.iter().enumerate() {
            let mut sum = Rat::zero();
            for (ai, table) in tables.iter().enumerate() {
                for (k, w) in table.iter().enumerate() {
                    if w.is_zero() {
                        continue;
                    }
                    sum += &bv[k] * &a_vals[ai][k] * w;
                }
            }
            let expected = if m == n { Rat::one() } else { Rat::zero() };
            out.record(sum - expected, OrthoFault { n, weight: 0, degree: m });
        }
    }
    out
}

fn pow_int(base: usize, exp: usize) -> Rat {
    let mut acc = Rat::one();
    let b = Rat::from_integer(base.into());
    for _ in 0..exp {
        acc *= &b;
    }
    acc
}
