//! The four named weight families and their coefficient laws.
//!
//! Each family fixes the shared theta and per-weight sigma_a, and carries
//! laws for the recurrence bands: closed forms for the Charlier- and
//! Meixner-type systems, index recursions for the generalized (c-deformed)
//! systems. The factorization pipeline is the arbiter throughout: laws are
//! evaluated on factorization alphas, never the other way around, and a
//! law's residual inherits the truncation tail of the moments unless it
//! reduces to window algebra (the Psi entry relations), which must vanish
//! literally.
//!
//! Index conventions. Laws read the recurrence bands by row,
//! a^(d)_i = T[i][i-d], while `Recurrence::alpha_seq` stores the same band
//! by column (alpha^(d)_m = T[m+d][m] = a^(d)_{m+d}); the weight owning row
//! i is selected by the 1-based residue r1(i) = i mod p + 1 = r_index(i+1).
//! Off-by-one readings of the block laws are easy to mistake for the real
//! thing, so `rejected_readings` keeps the plausible-but-wrong ones as
//! negative controls that must stay visibly nonzero on generic parameters.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::error::MopsError;
use crate::pearson_lf::PsiData;
use crate::recurrence::Recurrence;
use crate::scalar::{parse_rat, rat_string, Rat};
use crate::weights::{WeightParams, WeightSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyKind {
    MultipleCharlier,
    GeneralizedCharlier,
    MeixnerII,
    GeneralizedMeixnerII,
}

impl FamilyKind {
    pub fn slug(self) -> &'static str {
        match self {
            FamilyKind::MultipleCharlier => "charlier",
            FamilyKind::GeneralizedCharlier => "gen-charlier",
            FamilyKind::MeixnerII => "meixner2",
            FamilyKind::GeneralizedMeixnerII => "gen-meixner2",
        }
    }

    pub fn from_slug(s: &str) -> Option<FamilyKind> {
        match s {
            "charlier" => Some(FamilyKind::MultipleCharlier),
            "gen-charlier" => Some(FamilyKind::GeneralizedCharlier),
            "meixner2" => Some(FamilyKind::MeixnerII),
            "gen-meixner2" => Some(FamilyKind::GeneralizedMeixnerII),
            _ => None,
        }
    }

    /// Carries the denominator deformation 1/(c+1)_k, so theta(k) = k(k+c).
    pub fn has_c(self) -> bool {
        matches!(self, FamilyKind::GeneralizedCharlier | FamilyKind::GeneralizedMeixnerII)
    }

    /// Carries Pochhammer numerators (b_a)_k; eta is then shared.
    pub fn has_b(self) -> bool {
        matches!(self, FamilyKind::MeixnerII | FamilyKind::GeneralizedMeixnerII)
    }
}

/// Parameters of one family instance. `eta` holds p entries for the
/// Charlier-type kinds and exactly one shared entry for the Meixner-type
/// kinds; `b` holds p entries when the kind has them; `c` is present exactly
/// for the generalized kinds.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub p: usize,
    pub c: Option<Rat>,
    pub b: Vec<Rat>,
    pub eta: Vec<Rat>,
}

impl FamilySpec {
    pub fn new(
        kind: FamilyKind,
        p: usize,
        c: Option<Rat>,
        b: Vec<Rat>,
        eta: Vec<Rat>,
    ) -> Result<FamilySpec, MopsError> {
        let fs = FamilySpec { kind, p, c, b, eta };
        fs.validate()?;
        Ok(fs)
    }

    pub fn validate(&self) -> Result<(), MopsError> {
        let bad = |reason: String| Err(MopsError::InvalidParameters { reason });
        let slug = self.kind.slug();
        if self.p == 0 {
            return bad("p must be >= 1".into());
        }
        match (self.kind.has_c(), self.c.is_some()) {
            (true, false) => return bad(format!("{slug} requires c")),
            (false, true) => return bad(format!("{slug} takes no c")),
            _ => {}
        }
        let want_eta = if self.kind.has_b() { 1 } else { self.p };
        if self.eta.len() != want_eta {
            return bad(format!("{slug} wants {} eta value(s), got {}", want_eta, self.eta.len()));
        }
        if self.eta.iter().any(Zero::is_zero) {
            return bad(format!("{slug} eta values must be nonzero"));
        }
        if self.kind.has_b() {
            if self.b.len() != self.p {
                return bad(format!("{slug} wants {} b values, got {}", self.p, self.b.len()));
            }
            if let Some((i, j)) = first_collision(&self.b) {
                return bad(format!("b[{i}] = b[{j}]; the b parameters must be pairwise distinct"));
            }
            if let Some(ba) = self.b.iter().find(|x| is_nonpositive_integer(x)) {
                return bad(format!("b = {} truncates the weight to a polynomial", rat_string(ba)));
            }
        } else {
            if !self.b.is_empty() {
                return bad(format!("{slug} takes no b parameters"));
            }
            if let Some((i, j)) = first_collision(&self.eta) {
                return bad(format!("eta[{i}] = eta[{j}]; equal weights are not a perfect system"));
            }
        }
        if self.kind == FamilyKind::MeixnerII && Signed::abs(&self.eta[0]) >= Rat::one() {
            return bad("meixner2 needs |eta| < 1".into());
        }
        Ok(())
    }

    pub fn from_json(v: &serde_json::Value) -> Result<FamilySpec, MopsError> {
        let bad = |what: String| MopsError::InvalidParameters { reason: format!("family json: {what}") };
        let kind = v
            .get("kind")
            .and_then(|x| x.as_str())
            .ok_or_else(|| bad("missing kind".into()))?;
        let kind = FamilyKind::from_slug(kind).ok_or_else(|| bad(format!("unknown kind {kind:?}")))?;
        let p = v
            .get("p")
            .and_then(|x| x.as_u64())
            .ok_or_else(|| bad("missing integer p".into()))? as usize;
        let c = match v.get("c") {
            None | Some(serde_json::Value::Null) => None,
            Some(x) => Some(parse_rat(
                x.as_str().ok_or_else(|| bad("c must be a rational string".into()))?,
            )?),
        };
        let b = rat_list(v.get("b"), "b")?;
        let eta = match v.get("eta") {
            None | Some(serde_json::Value::Null) => Vec::new(),
            Some(serde_json::Value::String(s)) => vec![parse_rat(s)?],
            other => rat_list(other, "eta")?,
        };
        FamilySpec::new(kind, p, c, b, eta)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut obj = serde_json::Map::new();
        obj.insert("kind".into(), self.kind.slug().into());
        obj.insert("p".into(), (self.p as u64).into());
        if let Some(c) = &self.c {
            obj.insert("c".into(), rat_string(c).into());
        }
        if !self.b.is_empty() {
            let b: Vec<serde_json::Value> = self.b.iter().map(|x| rat_string(x).into()).collect();
            obj.insert("b".into(), b.into());
        }
        let eta: serde_json::Value = if self.kind.has_b() {
            rat_string(&self.eta[0]).into()
        } else {
            self.eta
                .iter()
                .map(|x| serde_json::Value::from(rat_string(x)))
                .collect::<Vec<_>>()
                .into()
        };
        obj.insert("eta".into(), eta);
        serde_json::Value::Object(obj)
    }

    /// eta of weight a (1-based); the shared value when the kind shares it.
    pub fn eta_of(&self, a: usize) -> &Rat {
        if self.kind.has_b() {
            &self.eta[0]
        } else {
            &self.eta[a - 1]
        }
    }

    fn c_param(&self) -> &Rat {
        self.c.as_ref().expect("validated: c present")
    }
}

fn rat_list(v: Option<&serde_json::Value>, what: &str) -> Result<Vec<Rat>, MopsError> {
    let arr = match v {
        None | Some(serde_json::Value::Null) => return Ok(Vec::new()),
        Some(x) => x.as_array().ok_or_else(|| MopsError::InvalidParameters {
            reason: format!("family json: {what} must be an array of rational strings"),
        })?,
    };
    arr.iter()
        .map(|x| {
            x.as_str()
                .ok_or_else(|| MopsError::InvalidParameters {
                    reason: format!("family json: {what} entries must be strings"),
                })
                .and_then(parse_rat)
        })
        .collect()
}

fn first_collision(xs: &[Rat]) -> Option<(usize, usize)> {
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            if xs[i] == xs[j] {
                return Some((i, j));
            }
        }
    }
    None
}

fn is_nonpositive_integer(r: &Rat) -> bool {
    r.is_integer() && !Signed::is_positive(r.numer())
}

pub fn family_to_weight_system(fs: &FamilySpec) -> Result<WeightSystem, MopsError> {
    fs.validate()?;
    let c = if fs.kind.has_c() {
        vec![fs.c_param() + Rat::one()]
    } else {
        Vec::new()
    };
    let weights = (1..=fs.p)
        .map(|a| WeightParams {
            eta: fs.eta_of(a).clone(),
            b: if fs.kind.has_b() { vec![fs.b[a - 1].clone()] } else { Vec::new() },
        })
        .collect();
    WeightSystem::new(fs.p, c, weights)
}

/// 1-based residue of n mod p landing in {1, ..., p}; multiples of p map
/// to p, so r_index(p, p) = p and r_index(n, p) picks the weight owning
/// band row n - 1.
pub fn r_index(n: i64, p: usize) -> usize {
    (n - 1).rem_euclid(p as i64) as usize + 1
}

fn rat_u(n: usize) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

fn rat_i(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Recurrence band read by row: a^(d)_i = T[i][i-d]. Zero below the first
/// column and above the band; None where the window ends.
struct RowAlpha<'a> {
    rec: &'a Recurrence,
    rows: usize,
}

impl<'a> RowAlpha<'a> {
    fn new(rec: &'a Recurrence) -> RowAlpha<'a> {
        RowAlpha { rec, rows: rec.t().rows() }
    }

    fn at(&self, d: usize, i: usize) -> Option<Rat> {
        if d > self.rec.p() {
            return Some(Rat::zero());
        }
        if i >= self.rows {
            return None;
        }
        if i < d {
            return Some(Rat::zero());
        }
        Some(self.rec.alpha_seq(d)[i - d].clone())
    }
}

/// One verified law: max |residual| across the instances that fit the data.
#[derive(Clone, Debug)]
pub struct LawCheck {
    pub name: &'static str,
    pub residual: Rat,
    pub instances: usize,
    /// Window algebra with no tail exposure; must vanish literally.
    pub exact: bool,
}

struct LawAcc {
    name: &'static str,
    max: Rat,
    instances: usize,
    exact: bool,
}

impl LawAcc {
    fn new(name: &'static str, exact: bool) -> LawAcc {
        LawAcc { name, max: Rat::zero(), instances: 0, exact }
    }

    fn push(&mut self, r: Option<Rat>) {
        if let Some(r) = r {
            self.instances += 1;
            let a = Signed::abs(&r);
            if a > self.max {
                self.max = a;
            }
        }
    }

    fn done(self) -> LawCheck {
        LawCheck { name: self.name, residual: self.max, instances: self.instances, exact: self.exact }
    }
}

/// Predicted recurrence bands, stored like `Recurrence::alpha_seq`:
/// alpha[d][m] = T[m+d][m].
#[derive(Clone, Debug)]
pub struct ClosedFormTable {
    pub alpha: Vec<Vec<Rat>>,
}

fn expect_kind(fs: &FamilySpec, want: FamilyKind, expected: &'static str) -> Result<(), MopsError> {
    if fs.kind == want {
        Ok(())
    } else {
        Err(MopsError::WrongKind { expected, got: fs.kind.slug() })
    }
}

fn rows_to_columns(rows: Vec<Vec<Rat>>) -> Vec<Vec<Rat>> {
    rows.into_iter()
        .enumerate()
        .map(|(d, r)| r.into_iter().skip(d).collect())
        .collect()
}

/// Closed bands for the Charlier-type system, covering rows i < n_rows:
///
///   a^(0)_i = i + eta_{r1(i)},
///   a^(1)_{pm+a} = m sum(eta) + eta_1 + ... + eta_a,
///   a^(l+1)_{i+1} = a^(l+1)_i + a^(l)_i (eta_{r1(i-l)} - eta_{r1(i)}),
///
/// the last seeded by a^(l+1)_l = 0. The a = 0 column of the block form
/// closes the previous block, giving m sum(eta) on the nose.
pub fn charlier_closed_form(fs: &FamilySpec, n_rows: usize) -> Result<ClosedFormTable, MopsError> {
    expect_kind(fs, FamilyKind::MultipleCharlier, "charlier")?;
    let p = fs.p;
    let e = &fs.eta;
    let total: Rat = e.iter().fold(Rat::zero(), |acc, x| acc + x);

    let mut rows: Vec<Vec<Rat>> = Vec::with_capacity(p + 1);
    rows.push((0..n_rows).map(|i| rat_u(i) + &e[i % p]).collect());
    rows.push(
        (0..n_rows)
            .map(|i| {
                let (m, a) = (i / p, i % p);
                let mut v = rat_u(m) * &total;
                for b in 0..a {
                    v += &e[b];
                }
                v
            })
            .collect(),
    );
    for l in 1..p {
        let prev = &rows[l];
        let mut next = vec![Rat::zero(); n_rows];
        for i in l..n_rows.saturating_sub(1) {
            next[i + 1] = &next[i] + &prev[i] * (&e[(i - l) % p] - &e[i % p]);
        }
        rows.push(next);
    }
    Ok(ClosedFormTable { alpha: rows_to_columns(rows) })
}

/// Closed bands for the Meixner-type system with shared eta:
///
///   a^(0)_i = (i + eta (b_{r1(i)} + floor(i/p))) / (1 - eta),
///   a^(1)_{i+1} = a^(1)_i + (a^(0)_i - i) / (1 - eta),
///   a^(l+1)_{i+1} = a^(l+1)_i
///       + a^(l)_i eta/(1-eta) (1 + b_{r1(i-l)} - b_{r1(i)}
///                              + floor((i-l)/p) - floor(i/p)),
///
/// ladders seeded by zero at row l. At p = 1 the telescoped a^(1) reduces
/// to the classical i (i - 1 + b) eta / (1 - eta)^2.
pub fn meixner2_closed_form(fs: &FamilySpec, n_rows: usize) -> Result<ClosedFormTable, MopsError> {
    expect_kind(fs, FamilyKind::MeixnerII, "meixner2")?;
    let p = fs.p;
    let bb = &fs.b;
    let eta = &fs.eta[0];
    let one_m = Rat::one() - eta;

    let a0: Vec<Rat> = (0..n_rows)
        .map(|i| (rat_u(i) + eta * (&bb[i % p] + rat_u(i / p))) / &one_m)
        .collect();
    let mut row1 = vec![Rat::zero(); n_rows];
    for i in 0..n_rows.saturating_sub(1) {
        row1[i + 1] = &row1[i] + (&a0[i] - rat_u(i)) / &one_m;
    }
    let mut rows = vec![a0, row1];
    let scale = eta / &one_m;
    for l in 1..p {
        let prev = &rows[l];
        let mut next = vec![Rat::zero(); n_rows];
        for i in l..n_rows.saturating_sub(1) {
            let gap = Rat::one() + &bb[(i - l) % p] - &bb[i % p]
                + rat_i(((i - l) / p) as i64 - (i / p) as i64);
            next[i + 1] = &next[i] + &scale * &prev[i] * gap;
        }
        rows.push(next);
    }
    Ok(ClosedFormTable { alpha: rows_to_columns(rows) })
}

/// Closed bands for the kinds that have them.
pub fn closed_form_table(fs: &FamilySpec, n_rows: usize) -> Result<ClosedFormTable, MopsError> {
    match fs.kind {
        FamilyKind::MultipleCharlier => charlier_closed_form(fs, n_rows),
        FamilyKind::MeixnerII => meixner2_closed_form(fs, n_rows),
        other => Err(MopsError::WrongKind { expected: "charlier | meixner2", got: other.slug() }),
    }
}

/// Evaluate every law of the family on factorization data, covering band
/// rows up to n_max. The returned checks carry raw residuals; exact ones
/// must be literally zero, the rest inherit the moment tail.
pub fn verify_family_lf(
    fs: &FamilySpec,
    rec: &Recurrence,
    psi: &PsiData,
    n_max: usize,
) -> Result<Vec<LawCheck>, MopsError> {
    fs.validate()?;
    if rec.p() != fs.p {
        return Err(MopsError::WrongP { expected: fs.p, got: rec.p() });
    }
    if n_max < fs.p + 3 {
        return Err(MopsError::WindowTooSmall {
            context: "verify_family_lf",
            need: fs.p + 3,
            have: n_max,
        });
    }
    let rows = rec.t().rows();
    if rows < n_max + fs.p {
        return Err(MopsError::WindowTooSmall {
            context: "verify_family_lf",
            need: n_max + fs.p,
            have: rows,
        });
    }
    let mut out = Vec::new();
    match fs.kind {
        FamilyKind::MultipleCharlier => charlier_laws(fs, rec, psi, n_max, &mut out)?,
        FamilyKind::MeixnerII => meixner2_laws(fs, rec, psi, n_max, &mut out)?,
        FamilyKind::GeneralizedCharlier => gen_charlier_laws(fs, rec, psi, n_max, &mut out)?,
        FamilyKind::GeneralizedMeixnerII => gen_meixner2_laws(fs, rec, psi, n_max, &mut out)?,
    }
    Ok(out)
}

/// Psi entry relations that are plain window algebra of the left route:
/// the top superdiagonal is 1, and the next one down reads the recurrence
/// diagonal (a^(0)_n - n for theta = k; a^(0)_n + a^(0)_{n+1} + c - n for
/// theta = k(k+c)).
fn psi_structure(
    fs: &FamilySpec,
    ra: &RowAlpha,
    psi: &PsiData,
    n_max: usize,
) -> LawCheck {
    let mut acc = LawAcc::new("psi-structure", true);
    let w = &psi.psi;
    for n in 0..=n_max {
        if fs.kind.has_c() {
            let c = fs.c_param();
            if n + 2 < w.cols() && n < w.rows() {
                acc.push(Some(w.at(n, n + 2) - Rat::one()));
                acc.push((|| Some(w.at(n, n + 1) - (ra.at(0, n)? + ra.at(0, n + 1)? + c - rat_u(n))))());
            }
        } else if n + 1 < w.cols() && n < w.rows() {
            acc.push(Some(w.at(n, n + 1) - Rat::one()));
            acc.push((|| Some(w.at(n, n) - (ra.at(0, n)? - rat_u(n))))());
        }
    }
    acc.done()
}

/// Subdiagonals of Psi against eta times the recurrence band; the content
/// of the dual route for the Meixner-type kinds.
fn psi_lower(fs: &FamilySpec, ra: &RowAlpha, psi: &PsiData, n_max: usize) -> LawCheck {
    let mut acc = LawAcc::new("psi-lower", false);
    let eta = &fs.eta[0];
    let w = &psi.psi;
    for d in 1..=fs.p {
        for m in 0..=n_max.saturating_sub(d) {
            if m + d < w.rows() && m < w.cols() {
                acc.push((|| Some(w.at(m + d, m) - eta * ra.at(d, m + d)?))());
            }
        }
    }
    acc.done()
}

fn table_vs_data(
    name: &'static str,
    d_range: std::ops::RangeInclusive<usize>,
    table: &ClosedFormTable,
    rec: &Recurrence,
    n_max: usize,
) -> LawCheck {
    let mut acc = LawAcc::new(name, false);
    for d in d_range {
        let data = rec.alpha_seq(d);
        let pred = &table.alpha[d];
        let cap = data.len().min(pred.len()).min(n_max + 1 - d);
        for m in 0..cap {
            acc.push(Some(&data[m] - &pred[m]));
        }
    }
    acc.done()
}

fn charlier_laws(
    fs: &FamilySpec,
    rec: &Recurrence,
    psi: &PsiData,
    n_max: usize,
    out: &mut Vec<LawCheck>,
) -> Result<(), MopsError> {
    let p = fs.p;
    let e = &fs.eta;
    let ra = RowAlpha::new(rec);
    let table = charlier_closed_form(fs, rec.t().rows())?;

    out.push(psi_structure(fs, &ra, psi, n_max));
    out.push(table_vs_data("closed-alpha0", 0..=0, &table, rec, n_max));
    out.push(table_vs_data("closed-alpha1", 1..=1, &table, rec, n_max));
    if p >= 2 {
        out.push(table_vs_data("closed-deep", 2..=p, &table, rec, n_max));
        // the same ladder the table is built from, but run on data alone
        let mut acc = LawAcc::new("ladder", false);
        for l in 1..p {
            for i in l..n_max {
                acc.push((|| {
                    Some(
                        ra.at(l + 1, i + 1)? - ra.at(l + 1, i)?
                            - ra.at(l, i)? * (&e[(i - l) % p] - &e[i % p]),
                    )
                })());
            }
        }
        out.push(acc.done());
    }
    Ok(())
}

fn meixner2_laws(
    fs: &FamilySpec,
    rec: &Recurrence,
    psi: &PsiData,
    n_max: usize,
    out: &mut Vec<LawCheck>,
) -> Result<(), MopsError> {
    let p = fs.p;
    let bb = &fs.b;
    let eta = &fs.eta[0];
    let one_m = Rat::one() - eta;
    let ra = RowAlpha::new(rec);
    let table = meixner2_closed_form(fs, rec.t().rows())?;

    out.push(psi_structure(fs, &ra, psi, n_max));
    out.push(psi_lower(fs, &ra, psi, n_max));
    out.push(table_vs_data("closed-alpha0", 0..=0, &table, rec, n_max));
    out.push(table_vs_data("closed-alpha1", 1..=1, &table, rec, n_max));
    if p >= 2 {
        out.push(table_vs_data("closed-deep", 2..=p, &table, rec, n_max));
    }

    let mut acc = LawAcc::new("alpha1-ladder", false);
    for i in 0..n_max {
        acc.push((|| Some(ra.at(1, i + 1)? - ra.at(1, i)? - (ra.at(0, i)? - rat_u(i)) / &one_m))());
    }
    out.push(acc.done());

    if p >= 2 {
        let scale = eta / &one_m;
        let mut acc = LawAcc::new("ladder", false);
        for l in 1..p {
            for i in l..n_max {
                acc.push((|| {
                    let gap = Rat::one() + &bb[(i - l) % p] - &bb[i % p]
                        + rat_i(((i - l) / p) as i64 - (i / p) as i64);
                    Some(ra.at(l + 1, i + 1)? - ra.at(l + 1, i)? - &scale * ra.at(l, i)? * gap)
                })());
            }
        }
        out.push(acc.done());
    }
    Ok(())
}

fn gen_charlier_laws(
    fs: &FamilySpec,
    rec: &Recurrence,
    psi: &PsiData,
    n_max: usize,
    out: &mut Vec<LawCheck>,
) -> Result<(), MopsError> {
    let p = fs.p;
    let e = &fs.eta;
    let c = fs.c_param();
    let ra = RowAlpha::new(rec);
    let psi1 = |i: usize| -> Option<Rat> { Some(ra.at(0, i)? + ra.at(0, i + 1)? + c - rat_u(i)) };

    out.push(psi_structure(fs, &ra, psi, n_max));

    // the diagonal of Psi carries the weight mask: psi^(0)_n = eta_{r1(n)}
    let mut acc = LawAcc::new("psi-diag", false);
    for n in 0..=n_max {
        if n < psi.psi.rows() && n < psi.psi.cols() {
            acc.push(Some(psi.psi.at(n, n) - &e[n % p]));
        }
    }
    out.push(acc.done());

    // a^(1)_{i+2} = a^(1)_i + psi1_i (1 + a0_i - a0_{i+1}) + eta_{r1(i+1)} - eta_{r1(i)}
    let mut acc = LawAcc::new("alpha1-recursion", false);
    for i in 0..n_max {
        acc.push((|| {
            Some(
                ra.at(1, i + 2)? - ra.at(1, i)?
                    - psi1(i)? * (Rat::one() + ra.at(0, i)? - ra.at(0, i + 1)?)
                    - (&e[(i + 1) % p] - &e[i % p]),
            )
        })());
    }
    out.push(acc.done());

    // a^(2)_{i+2} = a^(2)_i + psi1_{i-1} a^(1)_i - psi1_i a^(1)_{i+1} + eta_{r1(i)}
    let mut acc = LawAcc::new("alpha2-recursion", false);
    for i in 1..n_max {
        acc.push((|| {
            Some(
                ra.at(2, i + 2)? - ra.at(2, i)? - psi1(i - 1)? * ra.at(1, i)?
                    + psi1(i)? * ra.at(1, i + 1)?
                    - &e[i % p],
            )
        })());
    }
    out.push(acc.done());

    // a^(l+2)_{i+2} = a^(l+2)_i + psi1_{i-l-1} a^(l+1)_i - psi1_i a^(l+1)_{i+1}
    //                 + a^(l)_i (eta_{r1(i-l)} - eta_{r1(i)})
    if p >= 3 {
        let mut acc = LawAcc::new("ladder", false);
        for l in 1..=p - 2 {
            for i in l + 1..n_max {
                acc.push((|| {
                    Some(
                        ra.at(l + 2, i + 2)? - ra.at(l + 2, i)?
                            - psi1(i - l - 1)? * ra.at(l + 1, i)?
                            + psi1(i)? * ra.at(l + 1, i + 1)?
                            - ra.at(l, i)? * (&e[(i - l) % p] - &e[i % p]),
                    )
                })());
            }
        }
        out.push(acc.done());
    }

    // band top, l = p - 1: solves the diagonal forward,
    // psi1_i a^(p)_{i+1} = psi1_{i-p} a^(p)_i + a^(p-1)_i (eta_{r1(i+1)} - eta_{r1(i)})
    if p >= 2 {
        let mut acc = LawAcc::new("alpha0-recursion", false);
        for i in p..n_max {
            acc.push((|| {
                Some(
                    psi1(i)? * ra.at(p, i + 1)? - psi1(i - p)? * ra.at(p, i)?
                        - ra.at(p - 1, i)? * (&e[(i + 1) % p] - &e[i % p]),
                )
            })());
        }
        out.push(acc.done());
    }

    out.push(forward_trajectory(fs, rec, n_max)?);
    Ok(())
}

fn gen_meixner2_laws(
    fs: &FamilySpec,
    rec: &Recurrence,
    psi: &PsiData,
    n_max: usize,
    out: &mut Vec<LawCheck>,
) -> Result<(), MopsError> {
    let p = fs.p;
    let bb = &fs.b;
    let eta = &fs.eta[0];
    let c = fs.c_param();
    let ra = RowAlpha::new(rec);
    let psi1 = |i: usize| -> Option<Rat> { Some(ra.at(0, i)? + ra.at(0, i + 1)? + c - rat_u(i)) };
    let fl = |x: usize| rat_u(x / p);

    out.push(psi_structure(fs, &ra, psi, n_max));
    out.push(psi_lower(fs, &ra, psi, n_max));

    // psi^(0)_n = eta (a^(0)_n + b_{r1(n)} + floor(n/p))
    let mut acc = LawAcc::new("psi-diag", false);
    for n in 0..=n_max {
        if n < psi.psi.rows() && n < psi.psi.cols() {
            acc.push((|| Some(psi.psi.at(n, n) - eta * (ra.at(0, n)? + &bb[n % p] + fl(n))))());
        }
    }
    out.push(acc.done());

    // a^(1)_{i+2} = a^(1)_i + psi1_i (1 + a0_i - a0_{i+1})
    //               + eta (a0_{i+1} - a0_i + b_{r1(i+1)} - b_{r1(i)}
    //                      + floor((i+1)/p) - floor(i/p))
    let mut acc = LawAcc::new("alpha1-recursion", false);
    for i in 0..n_max {
        acc.push((|| {
            let a0i = ra.at(0, i)?;
            let a0i1 = ra.at(0, i + 1)?;
            Some(
                ra.at(1, i + 2)? - ra.at(1, i)? - psi1(i)? * (Rat::one() + &a0i - &a0i1)
                    - eta * (&a0i1 - &a0i + &bb[(i + 1) % p] - &bb[i % p] + fl(i + 1) - fl(i)),
            )
        })());
    }
    out.push(acc.done());

    // a^(2)_{i+2} = a^(2)_i + psi1_{i-1} a^(1)_i - psi1_i a^(1)_{i+1}
    //               + eta (a^(1)_{i+1} - a^(1)_i) + eta (a0_i + b_{r1(i)} + floor(i/p))
    let mut acc = LawAcc::new("alpha2-recursion", false);
    for i in 1..n_max {
        acc.push((|| {
            Some(
                ra.at(2, i + 2)? - ra.at(2, i)? - psi1(i - 1)? * ra.at(1, i)?
                    + psi1(i)? * ra.at(1, i + 1)?
                    - eta * (ra.at(1, i + 1)? - ra.at(1, i)?)
                    - eta * (ra.at(0, i)? + &bb[i % p] + fl(i)),
            )
        })());
    }
    out.push(acc.done());

    // a^(l+2)_{i+2} = a^(l+2)_i + psi1_{i-l-1} a^(l+1)_i - psi1_i a^(l+1)_{i+1}
    //                 + eta (a^(l+1)_{i+1} - a^(l+1)_i)
    //                 + eta a^(l)_i (1 + b_{r1(i-l)} - b_{r1(i)}
    //                                + floor((i-l)/p) - floor(i/p))
    if p >= 3 {
        let mut acc = LawAcc::new("ladder", false);
        for l in 1..=p - 2 {
            for i in l + 1..n_max {
                acc.push((|| {
                    let gap = Rat::one() + &bb[(i - l) % p] - &bb[i % p]
                        + rat_i(((i - l) / p) as i64 - (i / p) as i64);
                    Some(
                        ra.at(l + 2, i + 2)? - ra.at(l + 2, i)?
                            - psi1(i - l - 1)? * ra.at(l + 1, i)?
                            + psi1(i)? * ra.at(l + 1, i + 1)?
                            - eta * (ra.at(l + 1, i + 1)? - ra.at(l + 1, i)?)
                            - eta * ra.at(l, i)? * gap,
                    )
                })());
            }
        }
        out.push(acc.done());
    }

    // band top, l = p - 1:
    // psi1_i a^(p)_{i+1} = psi1_{i-p} a^(p)_i + eta (a^(p)_{i+1} - a^(p)_i)
    //                      + eta a^(p-1)_i (1 + b_{r1(i+1)} - b_{r1(i)}
    //                                       + floor((i-p+1)/p) - floor(i/p))
    if p >= 2 {
        let mut acc = LawAcc::new("alpha0-recursion", false);
        for i in p..n_max {
            acc.push((|| {
                let gap = Rat::one() + &bb[(i + 1) % p] - &bb[i % p]
                    + rat_i(((i - p + 1) / p) as i64 - (i / p) as i64);
                Some(
                    psi1(i)? * ra.at(p, i + 1)? - psi1(i - p)? * ra.at(p, i)?
                        - eta * (ra.at(p, i + 1)? - ra.at(p, i)?)
                        - eta * ra.at(p - 1, i)? * gap,
                )
            })());
        }
        out.push(acc.done());
    }

    out.push(forward_trajectory(fs, rec, n_max)?);
    Ok(())
}

/// Run the generalized recursion system forward from factorization-seeded
/// rows p+2 deep and compare the regenerated bands against the
/// factorization. Residuals accumulate step over step, so the check reads
/// as drift, not a single-instance tail.
pub fn forward_trajectory(fs: &FamilySpec, rec: &Recurrence, n_max: usize) -> Result<LawCheck, MopsError> {
    let a = trajectory_table(fs, rec, n_max)?;
    let ra = RowAlpha::new(rec);
    let seed = fs.p + 2;
    let mut acc = LawAcc::new("trajectory", false);
    for t in seed..a[0].len() {
        for (d, band) in a.iter().enumerate() {
            if let Some(data) = ra.at(d, t) {
                acc.push(Some(&band[t] - data));
            }
        }
    }
    Ok(acc.done())
}

/// Row-indexed regenerated bands for the generalized kinds: a[d][t]
/// approximates T[t][t-d]. Rows t < p+2 are copied from the
/// factorization, later rows come from the forward recursion alone.
pub fn trajectory_table(
    fs: &FamilySpec,
    rec: &Recurrence,
    n_max: usize,
) -> Result<Vec<Vec<Rat>>, MopsError> {
    if !fs.kind.has_c() {
        return Err(MopsError::WrongKind { expected: "gen-charlier | gen-meixner2", got: fs.kind.slug() });
    }
    if rec.p() != fs.p {
        return Err(MopsError::WrongP { expected: fs.p, got: rec.p() });
    }
    let p = fs.p;
    let c = fs.c_param();
    let ra = RowAlpha::new(rec);
    let seed = p + 2;
    let horizon = n_max.min(ra.rows - 1);
    if horizon < seed {
        return Err(MopsError::WindowTooSmall {
            context: "forward_trajectory",
            need: seed + 1,
            have: horizon + 1,
        });
    }

    // a[d][t] = regenerated a^(d)_t, seeded from data for t < seed
    let mut a: Vec<Vec<Rat>> = (0..=p)
        .map(|d| (0..seed).map(|i| ra.at(d, i).expect("seed rows fit")).collect())
        .collect();
    let psi1 = |a0: &[Rat], i: usize| -> Rat { &a0[i] + &a0[i + 1] + c - rat_u(i) };

    let meixner = fs.kind == FamilyKind::GeneralizedMeixnerII;
    let eta = &fs.eta[0];
    let e = &fs.eta;
    let bb = &fs.b;
    let fl = |x: usize| rat_u(x / p);

    for t in seed..=horizon {
        // bands at row t from the recursions at i = t - 2
        let i = t - 2;
        for d in 1..=p {
            let up = |dd: usize, x: usize| -> Rat {
                if x < dd { Rat::zero() } else { a[dd][x].clone() }
            };
            let v = if d == 1 {
                let base = &a[1][i] + psi1(&a[0], i) * (Rat::one() + &a[0][i] - &a[0][i + 1]);
                if meixner {
                    base + eta
                        * (&a[0][i + 1] - &a[0][i] + &bb[(i + 1) % p] - &bb[i % p] + fl(i + 1)
                            - fl(i))
                } else {
                    base + (&e[(i + 1) % p] - &e[i % p])
                }
            } else if d == 2 {
                let base = &a[2][i] + psi1(&a[0], i - 1) * &a[1][i]
                    - psi1(&a[0], i) * &a[1][i + 1];
                if meixner {
                    base + eta * (&a[1][i + 1] - &a[1][i])
                        + eta * (&a[0][i] + &bb[i % p] + fl(i))
                } else {
                    base + &e[i % p]
                }
            } else {
                let l = d - 2;
                let base = up(d, i) + psi1(&a[0], i - l - 1) * &a[d - 1][i]
                    - psi1(&a[0], i) * &a[d - 1][i + 1];
                if meixner {
                    let gap = Rat::one() + &bb[(i - l) % p] - &bb[i % p]
                        + rat_i(((i - l) / p) as i64 - (i / p) as i64);
                    base + eta * (&a[d - 1][i + 1] - &a[d - 1][i]) + eta * up(d - 2, i) * gap
                } else {
                    base + up(d - 2, i) * (&e[(i - l) % p] - &e[i % p])
                }
            };
            a[d].push(v);
        }

        // diagonal at row t from the band top at i = t - 1
        let i = t - 1;
        let pivot = a[p][t].clone();
        if pivot.is_zero() {
            return Err(MopsError::PreconditionSkipped {
                what: format!("forward recursion pivot a^({p})_{t} vanishes"),
            });
        }
        let v0 = if meixner {
            let extra = if p == 1 {
                eta * (&a[0][i] + &bb[0] + fl(i))
            } else {
                let gap = Rat::one() + &bb[(i + 1) % p] - &bb[i % p]
                    + rat_i(((i - p + 1) / p) as i64 - (i / p) as i64);
                eta * &a[p - 1][i] * gap
            };
            let numer = (psi1(&a[0], i - p) - eta) * &a[p][i] + extra;
            numer / &pivot - &a[0][i] - c + rat_u(i) + eta
        } else {
            let extra = if p == 1 {
                e[i % p].clone()
            } else {
                &a[p - 1][i] * (&e[(i + 1) % p] - &e[i % p])
            };
            let numer = psi1(&a[0], i - p) * &a[p][i] + extra;
            numer / &pivot - &a[0][i] - c + rat_u(i)
        };
        a[0].push(v0);
    }
    Ok(a)
}

/// Deliberately wrong readings of the block laws, kept as negative
/// controls. Each is a plausible misindexing (column-for-row, a shifted
/// grouping, a block-count factor), and each must stay visibly nonzero on
/// generic parameters; a zero here would mean the adjudicated readings
/// above no longer pin the conventions.
pub fn rejected_readings(
    fs: &FamilySpec,
    rec: &Recurrence,
    n_max: usize,
) -> Result<Vec<LawCheck>, MopsError> {
    fs.validate()?;
    if rec.p() != fs.p {
        return Err(MopsError::WrongP { expected: fs.p, got: rec.p() });
    }
    let p = fs.p;
    let ra = RowAlpha::new(rec);
    let mut out = Vec::new();
    match fs.kind {
        FamilyKind::MultipleCharlier => {
            // block form applied to column indices instead of rows
            let e = &fs.eta;
            let total: Rat = e.iter().fold(Rat::zero(), |acc, x| acc + x);
            let mut acc = LawAcc::new("alpha1-column-reading", false);
            for m in 0..n_max.min(rec.alpha_seq(1).len()) {
                let (blk, off) = (m / p, m % p);
                let mut v = rat_u(blk) * &total;
                for b in 0..off {
                    v += &e[b];
                }
                acc.push(Some(&rec.alpha_seq(1)[m] - v));
            }
            out.push(acc.done());
        }
        FamilyKind::GeneralizedCharlier => {
            // band top with the back factor grouped one step off,
            // psi1_{i-p} - 1 in place of psi1_{i-p}
            let e = &fs.eta;
            let c = fs.c_param();
            let psi1 = |i: usize| -> Option<Rat> { Some(ra.at(0, i)? + ra.at(0, i + 1)? + c - rat_u(i)) };
            let mut acc = LawAcc::new("alpha0-shifted-grouping", false);
            for i in p..n_max {
                acc.push((|| {
                    Some(
                        psi1(i)? * ra.at(p, i + 1)?
                            - (psi1(i - p)? - Rat::one()) * ra.at(p, i)?
                            - ra.at(p - 1, i)? * (&e[(i + 1) % p] - &e[i % p]),
                    )
                })());
            }
            out.push(acc.done());
        }
        FamilyKind::MeixnerII => {
            let bb = &fs.b;
            let eta = &fs.eta[0];
            let one_m = Rat::one() - eta;
            if p >= 2 {
                // ladder gap misread as 1 + b_{r1(i-l)} + block(i-l)
                let scale = eta / &one_m;
                let mut acc = LawAcc::new("ladder-block-factor", false);
                for i in 1..n_max {
                    let l = 1;
                    acc.push((|| {
                        let gap = Rat::one() + &bb[(i - l) % p] + rat_u((i - l) / p);
                        Some(ra.at(l + 1, i + 1)? - ra.at(l + 1, i)? - &scale * ra.at(l, i)? * gap)
                    })());
                }
                out.push(acc.done());
            }
            // quadratic block form for a^(1); fails every index reading,
            // so compare against both and keep the kinder residual
            let mut acc = LawAcc::new("alpha1-quadratic", false);
            let q = |n: usize| -> Rat {
                let (blk, off) = (n / p, n % p);
                let mut bsum = Rat::zero();
                for j in 0..=off {
                    bsum += &bb[j];
                }
                let inner = (rat_u(p) + eta) * rat_u(blk * (blk + 1)) / rat_u(2)
                    + rat_u(off * (off + 1)) / rat_u(2)
                    + eta * bsum;
                let head = inner / &one_m;
                let tail = rat_u(n.saturating_sub(1) * n) / rat_u(2);
                (head - tail) / &one_m
            };
            for n in 1..n_max {
                acc.push((|| {
                    let by_row = Signed::abs(&(ra.at(1, n)? - q(n)));
                    let by_col = if n < rec.alpha_seq(1).len() {
                        Signed::abs(&(&rec.alpha_seq(1)[n] - q(n)))
                    } else {
                        return None;
                    };
                    Some(by_row.min(by_col))
                })());
            }
            out.push(acc.done());
        }
        FamilyKind::GeneralizedMeixnerII => {
            // eta group of the a^(1) recursion misread as
            // eta (a0_{i+1} - a0_i - b_{r1(i)-1} - block(i))
            let bb = &fs.b;
            let eta = &fs.eta[0];
            let c = fs.c_param();
            let psi1 = |i: usize| -> Option<Rat> { Some(ra.at(0, i)? + ra.at(0, i + 1)? + c - rat_u(i)) };
            let mut acc = LawAcc::new("alpha1-eta-group", false);
            for i in 0..n_max {
                if i % p == 0 {
                    continue;
                }
                acc.push((|| {
                    let a0i = ra.at(0, i)?;
                    let a0i1 = ra.at(0, i + 1)?;
                    Some(
                        ra.at(1, i + 2)? - ra.at(1, i)?
                            - psi1(i)? * (Rat::one() + &a0i - &a0i1)
                            - eta * (&a0i1 - &a0i - &bb[i % p - 1] - rat_u(i / p)),
                    )
                })());
            }
            out.push(acc.done());
        }
    }
    Ok(out)
}
