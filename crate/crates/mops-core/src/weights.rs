//! Weight systems on the nonnegative integers.
//!
//! A system carries p hypergeometric-type weights sharing one denominator
//! parameter list c (and the built-in k!), each weight owning its numerator
//! list b and spectral parameter eta:
//!
//!   w_a(k) = prod_j (b_j^(a))_k / prod_j (c_j)_k * eta_a^k / k!
//!
//! Each weight satisfies a first-order Pearson equation
//!
//!   theta(k+1) w_a(k+1) = sigma_a(k) w_a(k),
//!   theta(k) = k * prod_j (k + c_j - 1),
//!   sigma_a(k) = eta_a * prod_j (k + b_j^(a)),
//!
//! which is the single fact the whole contiguity / Laguerre-Freud layer
//! leans on. Everything downstream works with finite truncations, so this
//! module also owns the certified tail bound that turns "truncated" into
//! "verified up to a stated budget".

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::MopsError;
use crate::scalar::{parse_rat, rat_string, Rat};

/// Search cap for the geometric-regime onset; a certificate that needs more
/// than this many terms is treated as failed rather than silently expensive.
const K_STAR_CAP: usize = 20_000;

fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

fn rat_usize(n: usize) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// (x)_k = x (x+1) ... (x+k-1), with (x)_0 = 1.
pub fn pochhammer(x: &Rat, k: usize) -> Rat {
    let mut acc = Rat::one();
    for i in 0..k {
        acc *= x + rat_usize(i);
    }
    acc
}

pub fn factorial(k: usize) -> Rat {
    let mut acc = BigInt::one();
    for i in 2..=k {
        acc *= BigInt::from(i);
    }
    Rat::from_integer(acc)
}

fn is_nonpositive_integer(x: &Rat) -> bool {
    x.denom().is_one() && !x.numer().is_positive()
}

/// Where the defining series sum_k w(k) k^m lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Convergence {
    /// Terms decay super-geometrically; any eta works.
    Entire,
    /// Terms decay like eta^k; requires |eta| < 1.
    UnitDisk,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightParams {
    pub eta: Rat,
    pub b: Vec<Rat>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightSystem {
    p: usize,
    c: Vec<Rat>,
    weights: Vec<WeightParams>,
}

impl WeightSystem {
    pub fn new(p: usize, c: Vec<Rat>, weights: Vec<WeightParams>) -> Result<Self, MopsError> {
        if p == 0 {
            return Err(MopsError::InvalidParameters { reason: "p must be at least 1".into() });
        }
        if weights.len() != p {
            return Err(MopsError::InvalidParameters {
                reason: format!("expected {} weights, got {}", p, weights.len()),
            });
        }
        for (j, cj) in c.iter().enumerate() {
            if is_nonpositive_integer(cj) {
                return Err(MopsError::PochhammerPole { param: format!("c[{}] = {}", j + 1, rat_string(cj)) });
            }
        }
        let sys = WeightSystem { p, c, weights };
        for a in 1..=p {
            sys.convergence(a)?;
        }
        Ok(sys)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn c(&self) -> &[Rat] {
        &self.c
    }

    pub fn weight(&self, a: usize) -> &WeightParams {
        &self.weights[a - 1]
    }

    pub fn weights(&self) -> &[WeightParams] {
        &self.weights
    }

    /// Classify weight a (1-based), rejecting divergent parameter choices.
    pub fn convergence(&self, a: usize) -> Result<Convergence, MopsError> {
        let w = self.weight(a);
        let m = w.b.len();
        let n = self.c.len();
        if m <= n {
            Ok(Convergence::Entire)
        } else if m == n + 1 {
            if w.eta.abs() < Rat::one() {
                Ok(Convergence::UnitDisk)
            } else {
                Err(MopsError::DivergentSeries { weight: a })
            }
        } else {
            Err(MopsError::DivergentSeries { weight: a })
        }
    }

    /// theta coefficients, ascending in k.
    pub fn theta_coeffs(&self) -> Vec<Rat> {
        // k * prod_j (k + c_j - 1)
        let mut coeffs = vec![Rat::one()];
        for cj in &self.c {
            coeffs = poly_mul_linear(&coeffs, &(cj - Rat::one()));
        }
        let mut out = vec![Rat::zero()];
        out.extend(coeffs);
        out
    }

    /// sigma_a coefficients, ascending in k.
    pub fn sigma_coeffs(&self, a: usize) -> Vec<Rat> {
        let w = self.weight(a);
        let mut coeffs = vec![w.eta.clone()];
        for bj in &w.b {
            coeffs = poly_mul_linear(&coeffs, bj);
        }
        coeffs
    }

    /// w_a(k) from scratch, straight off the definition.
    pub fn eval_weight(&self, a: usize, k: usize) -> Rat {
        let w = self.weight(a);
        let mut num = Rat::one();
        for bj in &w.b {
            num *= pochhammer(bj, k);
        }
        let mut den = factorial(k);
        for cj in &self.c {
            den *= pochhammer(cj, k);
        }
        let mut eta_pow = Rat::one();
        for _ in 0..k {
            eta_pow *= &w.eta;
        }
        num * eta_pow / den
    }

    /// w_a(0..=kmax) via the term ratio; cross-checked against `eval_weight`
    /// in tests, cheaper in bulk.
    pub fn weight_table(&self, a: usize, kmax: usize) -> Vec<Rat> {
        let w = self.weight(a);
        let mut out = Vec::with_capacity(kmax + 1);
        let mut cur = Rat::one();
        out.push(cur.clone());
        for k in 0..kmax {
            let kq = rat_usize(k);
            let mut num = w.eta.clone();
            for bj in &w.b {
                num *= bj + &kq;
            }
            let mut den = kq + Rat::one();
            for cj in &self.c {
                den *= cj + rat_usize(k);
            }
            cur = cur * num / den;
            out.push(cur.clone());
        }
        out
    }

    /// First index where a purported table for weight a breaks the Pearson
    /// relation theta(k+1) t[k+1] = sigma_a(k) t[k]; None if it holds
    /// throughout. The returned k names the relation, so entry k+1 is the
    /// earliest possible corruption (entry 0 is pinned by t[0]).
    pub fn pearson_fault(&self, a: usize, table: &[Rat]) -> Option<usize> {
        let theta = self.theta_coeffs();
        let sigma = self.sigma_coeffs(a);
        if table.first().map(|t| t != &Rat::one()).unwrap_or(false) {
            return Some(0);
        }
        for k in 0..table.len().saturating_sub(1) {
            let lhs = poly_eval(&theta, &rat_usize(k + 1)) * &table[k + 1];
            let rhs = poly_eval(&sigma, &rat_usize(k)) * &table[k];
            if lhs != rhs {
                return Some(k);
            }
        }
        None
    }

    /// Certified truncation of the full system; see `TailSpec`.
    pub fn truncate(&self, spec: &TailSpec, m_max: usize) -> Result<TruncationCert, MopsError> {
        let mut per_weight = Vec::with_capacity(self.p);
        for a in 1..=self.p {
            per_weight.push(self.weight_tail_regime(a, m_max)?);
        }
        let k_floor = per_weight.iter().map(|r| r.k_star.saturating_sub(1)).max().unwrap_or(0);
        let tail_at = |k: usize| -> Rat {
            let mut total = Rat::zero();
            for (idx, reg) in per_weight.iter().enumerate() {
                let a = idx + 1;
                let t = self.inflated_term(a, k + 1, m_max);
                total += t / (Rat::one() - &reg.ratio);
            }
            total
        };
        match spec {
            TailSpec::FixedK(k) => {
                if *k < k_floor {
                    return Err(MopsError::TailCertificateExceeded { requested: *k, certified: k_floor });
                }
                let bound = tail_at(*k);
                Ok(TruncationCert { k: *k, bound, m_max, per_weight })
            }
            TailSpec::Target(target) => {
                let mut k = k_floor;
                let mut terms: Vec<Rat> =
                    (1..=self.p).map(|a| self.inflated_term(a, k + 1, m_max)).collect();
                loop {
                    let mut bound = Rat::zero();
                    for (t, reg) in terms.iter().zip(&per_weight) {
                        bound += t / (Rat::one() - &reg.ratio);
                    }
                    if &bound <= target {
                        return Ok(TruncationCert { k, bound, m_max, per_weight });
                    }
                    if k >= K_STAR_CAP {
                        return Err(MopsError::TailNotCertifiable { weight: 0, cap: K_STAR_CAP });
                    }
                    for (idx, t) in terms.iter_mut().enumerate() {
                        *t *= self.abs_term_ratio(idx + 1, k + 1, m_max);
                    }
                    k += 1;
                }
            }
        }
    }

    /// Exact |t_a(k+1)| / |t_a(k)| for the inflated term, used to advance a
    /// running term without re-evaluating the weight from scratch.
    fn abs_term_ratio(&self, a: usize, k: usize, m_max: usize) -> Rat {
        let w = self.weight(a);
        let kq = rat_usize(k);
        let mut num = w.eta.abs();
        for bj in &w.b {
            num *= (bj + &kq).abs();
        }
        let mut den = &kq + Rat::one();
        for cj in &self.c {
            den *= (cj + &kq).abs();
        }
        let infl = (&kq + rat_int(2)) / (&kq + rat_int(1));
        let mut out = num / den;
        for _ in 0..m_max {
            out *= &infl;
        }
        out
    }

    /// |w_a(k)| * (1+k)^m_max, the term the tail bound is geometric in.
    fn inflated_term(&self, a: usize, k: usize, m_max: usize) -> Rat {
        let w = self.eval_weight(a, k).abs();
        let mut infl = Rat::one();
        let base = rat_usize(1 + k);
        for _ in 0..m_max {
            infl *= &base;
        }
        w * infl
    }

    /// Find k_star such that for all k >= k_star the inflated term ratio is
    /// provably at most `ratio` < 1, by monotone factor pairing.
    fn weight_tail_regime(&self, a: usize, m_max: usize) -> Result<TailRegime, MopsError> {
        let w = self.weight(a);
        let conv = self.convergence(a)?;
        let target = match conv {
            Convergence::Entire => Rat::new(BigInt::one(), BigInt::from(2)),
            Convergence::UnitDisk => (Rat::one() + w.eta.abs()) / rat_int(2),
        };
        if w.eta.is_zero() {
            return Ok(TailRegime { k_star: 1, ratio: target });
        }
        // all linear factors k + b_j, k + c_j, k + 1 strictly positive from here on
        let mut k0 = 1usize;
        for x in w.b.iter().chain(self.c.iter()) {
            // smallest k with k + x > 0
            if x <= &Rat::zero() {
                let need = (-x.clone()).floor().to_integer();
                let need = need.to_usize().unwrap_or(usize::MAX);
                k0 = k0.max(need.saturating_add(1));
            }
        }
        let mut k_star = k0;
        loop {
            if self.ratio_bound(a, k_star, m_max) <= target {
                return Ok(TailRegime { k_star, ratio: target });
            }
            k_star += 1;
            if k_star > K_STAR_CAP {
                return Err(MopsError::TailNotCertifiable { weight: a, cap: K_STAR_CAP });
            }
        }
    }

    /// Upper bound for t(k+1)/t(k) valid for every k >= k_star: pair each
    /// numerator factor (k + b_j) with a distinct denominator factor; each
    /// paired quotient is monotone toward 1, so max(value at k_star, 1)
    /// dominates it; unpaired denominator factors only help and are bounded
    /// by their value at k_star.
    fn ratio_bound(&self, a: usize, k_star: usize, m_max: usize) -> Rat {
        let w = self.weight(a);
        let ks = rat_usize(k_star);
        let mut denoms: Vec<Rat> = self.c.clone();
        denoms.push(Rat::one()); // the k! factor contributes k + 1
        let mut bound = w.eta.abs();
        for (j, bj) in w.b.iter().enumerate() {
            if j < denoms.len() {
                let q = (bj + &ks) / (&denoms[j] + &ks);
                bound *= if q > Rat::one() { q } else { Rat::one() };
            } else {
                // convergence() rules this out; keep the bound honest anyway
                bound *= bj + &ks;
            }
        }
        for dj in denoms.iter().skip(w.b.len()) {
            bound *= Rat::one() / (dj + &ks);
        }
        let infl = (&ks + rat_int(2)) / (&ks + rat_int(1));
        for _ in 0..m_max {
            bound *= &infl;
        }
        bound
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "p": self.p,
            "c": self.c.iter().map(|x| rat_string(x)).collect::<Vec<_>>(),
            "weights": self.weights.iter().map(|w| serde_json::json!({
                "eta": rat_string(&w.eta),
                "b": w.b.iter().map(|x| rat_string(x)).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self, MopsError> {
        let bad = |what: &str| MopsError::InvalidParameters { reason: format!("weight json: {what}") };
        let p = v.get("p").and_then(|x| x.as_u64()).ok_or_else(|| bad("missing integer p"))? as usize;
        let c = parse_rat_array(v.get("c"), "c")?;
        let ws = v
            .get("weights")
            .and_then(|x| x.as_array())
            .ok_or_else(|| bad("missing weights array"))?;
        let mut weights = Vec::with_capacity(ws.len());
        for (i, wv) in ws.iter().enumerate() {
            let eta = wv
                .get("eta")
                .and_then(|x| x.as_str())
                .ok_or_else(|| bad(&format!("weights[{i}] missing eta")))?;
            let eta = parse_rat(eta)?;
            let b = parse_rat_array(wv.get("b"), "b")?;
            weights.push(WeightParams { eta, b });
        }
        WeightSystem::new(p, c, weights)
    }
}

fn parse_rat_array(v: Option<&serde_json::Value>, what: &str) -> Result<Vec<Rat>, MopsError> {
    let arr = match v {
        None => return Ok(Vec::new()),
        Some(serde_json::Value::Null) => return Ok(Vec::new()),
        Some(x) => x.as_array().ok_or_else(|| MopsError::InvalidParameters {
            reason: format!("weight json: {what} must be an array of rational strings"),
        })?,
    };
    arr.iter()
        .map(|x| {
            x.as_str()
                .ok_or_else(|| MopsError::InvalidParameters {
                    reason: format!("weight json: {what} entries must be strings"),
                })
                .and_then(parse_rat)
        })
        .collect()
}

/// coeffs(x) * (x + r), ascending coefficients.
fn poly_mul_linear(coeffs: &[Rat], r: &Rat) -> Vec<Rat> {
    let mut out = vec![Rat::zero(); coeffs.len() + 1];
    for (i, ci) in coeffs.iter().enumerate() {
        out[i] += ci * r;
        out[i + 1] += ci;
    }
    out
}

pub fn poly_eval(coeffs: &[Rat], x: &Rat) -> Rat {
    let mut acc = Rat::zero();
    for c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// How much of the measure to keep.
#[derive(Clone, Debug, PartialEq)]
pub enum TailSpec {
    /// Smallest K whose certified tail bound meets the target.
    Target(Rat),
    /// Caller-pinned K (used to put several shifted systems on a common
    /// truncation); still produces a certified bound at that K.
    FixedK(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailRegime {
    /// Geometric decay with factor `ratio` is certified from this index on.
    pub k_star: usize,
    pub ratio: Rat,
}

/// Proof object: moments of degree <= m_max computed from k = 0..=k are each
/// within `bound` of their true values, simultaneously for every weight.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncationCert {
    pub k: usize,
    pub bound: Rat,
    pub m_max: usize,
    pub per_weight: Vec<TailRegime>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: &str) -> Rat {
        parse_rat(s).unwrap()
    }

    fn charlier2() -> WeightSystem {
        WeightSystem::new(
            2,
            vec![],
            vec![
                WeightParams { eta: r("1/3"), b: vec![] },
                WeightParams { eta: r("1/5"), b: vec![] },
            ],
        )
        .unwrap()
    }

    #[test]
    fn charlier_weights_are_poisson() {
        let sys = charlier2();
        // eta^k / k!
        assert_eq!(sys.eval_weight(1, 0), r("1"));
        assert_eq!(sys.eval_weight(1, 3), r("1/162")); // (1/3)^3 / 6
        assert_eq!(sys.eval_weight(2, 2), r("1/50"));
        assert_eq!(sys.weight_table(1, 3)[3], r("1/162"));
    }

    #[test]
    fn table_matches_direct_evaluation() {
        let sys = WeightSystem::new(
            2,
            vec![r("1/2")],
            vec![
                WeightParams { eta: r("1/4"), b: vec![r("1/3")] },
                WeightParams { eta: r("1/3"), b: vec![r("3/4")] },
            ],
        )
        .unwrap();
        for a in 1..=2 {
            let table = sys.weight_table(a, 12);
            for (k, t) in table.iter().enumerate() {
                assert_eq!(t, &sys.eval_weight(a, k), "weight {a}, k = {k}");
            }
        }
    }

    #[test]
    fn pearson_holds_and_localizes_corruption() {
        let sys = WeightSystem::new(
            1,
            vec![r("1/2")],
            vec![WeightParams { eta: r("2/3"), b: vec![r("1/4"), r("5/4")] }],
        )
        .unwrap();
        let mut table = sys.weight_table(1, 20);
        assert_eq!(sys.pearson_fault(1, &table), None);
        table[7] += r("1/100000");
        // relations k = 6 (t[7] on the left) and k = 7 (t[7] on the right) both break
        assert_eq!(sys.pearson_fault(1, &table), Some(6));
    }

    #[test]
    fn theta_and_sigma_coefficients() {
        let sys = WeightSystem::new(
            1,
            vec![r("1/2")],
            vec![WeightParams { eta: r("2/3"), b: vec![r("1/4")] }],
        )
        .unwrap();
        // theta(k) = k (k - 1/2)
        assert_eq!(sys.theta_coeffs(), vec![r("0"), r("-1/2"), r("1")]);
        // sigma(k) = 2/3 (k + 1/4)
        assert_eq!(sys.sigma_coeffs(1), vec![r("1/6"), r("2/3")]);
        // consistency: theta(k+1) w(k+1) = sigma(k) w(k) numerically at k = 5
        let w = sys.weight_table(1, 6);
        let lhs = poly_eval(&sys.theta_coeffs(), &r("6")) * &w[6];
        let rhs = poly_eval(&sys.sigma_coeffs(1), &r("5")) * &w[5];
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn convergence_classification() {
        // Meixner-type: one b, no c: needs |eta| < 1
        assert!(matches!(
            WeightSystem::new(1, vec![], vec![WeightParams { eta: r("9/10"), b: vec![r("2")] }])
                .unwrap()
                .convergence(1),
            Ok(Convergence::UnitDisk)
        ));
        assert_eq!(
            WeightSystem::new(1, vec![], vec![WeightParams { eta: r("1"), b: vec![r("2")] }]),
            Err(MopsError::DivergentSeries { weight: 1 })
        );
        assert_eq!(
            WeightSystem::new(1, vec![], vec![WeightParams { eta: r("-6/5"), b: vec![r("2")] }]),
            Err(MopsError::DivergentSeries { weight: 1 })
        );
        // two b against one c diverges regardless of eta
        assert_eq!(
            WeightSystem::new(
                1,
                vec![r("1/2")],
                vec![WeightParams { eta: r("1/10"), b: vec![r("2"), r("3"), r("4")] }]
            ),
            Err(MopsError::DivergentSeries { weight: 1 })
        );
        // nonpositive integer c is a pole of 1/(c)_k
        assert_eq!(
            WeightSystem::new(1, vec![r("0")], vec![WeightParams { eta: r("1/2"), b: vec![] }]),
            Err(MopsError::PochhammerPole { param: "c[1] = 0".into() })
        );
        assert!(WeightSystem::new(1, vec![r("-1/2")], vec![WeightParams { eta: r("1/2"), b: vec![] }]).is_ok());
    }

    #[test]
    fn tail_certificate_charlier() {
        let sys = charlier2();
        let cert = sys.truncate(&TailSpec::Target(r("1e-40")), 8).unwrap();
        assert!(cert.bound <= r("1e-40"));
        // oracle: doubling K must not move any kept moment by more than the bound
        for a in 1..=2 {
            let t1 = sys.weight_table(a, cert.k);
            let t2 = sys.weight_table(a, 2 * cert.k);
            for m in 0..=8usize {
                let s1: Rat = t1.iter().enumerate().map(|(k, w)| pow_usize(k, m) * w).sum();
                let s2: Rat = t2.iter().enumerate().map(|(k, w)| pow_usize(k, m) * w).sum();
                assert!((s1 - s2).abs() <= cert.bound);
            }
        }
    }

    #[test]
    fn tail_certificate_meixner_near_unit() {
        // |eta| = 9/10 close to the boundary: the half-way threshold 19/20
        // still certifies, just with a later onset.
        let sys = WeightSystem::new(
            1,
            vec![],
            vec![WeightParams { eta: r("9/10"), b: vec![r("2")] }],
        )
        .unwrap();
        let cert = sys.truncate(&TailSpec::Target(r("1e-10")), 2).unwrap();
        assert!(cert.bound <= r("1e-10"));
        let t1 = sys.weight_table(1, cert.k);
        let t2 = sys.weight_table(1, cert.k + 400);
        for m in 0..=2usize {
            let s1: Rat = t1.iter().enumerate().map(|(k, w)| pow_usize(k, m) * w).sum();
            let s2: Rat = t2.iter().enumerate().map(|(k, w)| pow_usize(k, m) * w).sum();
            assert!((s1 - s2).abs() <= cert.bound, "m = {m}");
        }
    }

    #[test]
    fn fixed_k_below_onset_is_rejected() {
        let sys = WeightSystem::new(
            1,
            vec![],
            vec![WeightParams { eta: r("9/10"), b: vec![r("30")] }],
        )
        .unwrap();
        let free = sys.truncate(&TailSpec::Target(r("1/1000")), 0).unwrap();
        let err = sys.truncate(&TailSpec::FixedK(0), 0);
        assert!(matches!(err, Err(MopsError::TailCertificateExceeded { .. })));
        let pinned = sys.truncate(&TailSpec::FixedK(free.k + 5), 0).unwrap();
        assert!(pinned.bound <= free.bound);
    }

    #[test]
    fn zero_eta_truncates_to_nothing() {
        let sys = WeightSystem::new(1, vec![], vec![WeightParams { eta: r("0"), b: vec![] }]).unwrap();
        let cert = sys.truncate(&TailSpec::Target(r("1e-30")), 4).unwrap();
        assert_eq!(cert.k, 0);
        assert!(cert.bound.is_zero());
    }

    #[test]
    fn json_round_trip() {
        let sys = WeightSystem::new(
            3,
            vec![r("1/3")],
            vec![
                WeightParams { eta: r("1/5"), b: vec![r("1/2")] },
                WeightParams { eta: r("1/5"), b: vec![r("3/4")] },
                WeightParams { eta: r("1/5"), b: vec![r("5/4")] },
            ],
        )
        .unwrap();
        let v = sys.to_json();
        assert_eq!(WeightSystem::from_json(&v).unwrap(), sys);
        let text = r#"{"p":2,"c":[],"weights":[{"eta":"1/3","b":[]},{"eta":"1/5","b":[]}]}"#;
        let parsed: serde_json::Value = serde_json::from_str(text).unwrap();
        assert_eq!(WeightSystem::from_json(&parsed).unwrap(), charlier2());
    }

    fn pow_usize(base: usize, exp: usize) -> Rat {
        let mut acc = Rat::one();
        for _ in 0..exp {
            acc *= Rat::from_integer(BigInt::from(base));
        }
        acc
    }
}
