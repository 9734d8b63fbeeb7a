//! Structured verification reports: named identities with exact-rational
//! residuals and verdicts. Serialization is deterministic (sorted keys,
//! insertion-ordered sections, no timestamps), so identical configs produce
//! byte-identical reports.

use crate::scalar::{rat_string, Rat, ToleranceBudget};
use num_traits::Zero;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Skipped => "skipped",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Section {
    pub identity: String,
    pub max_residual: Rat,
    pub budget: Rat,
    pub verdict: Verdict,
    /// Why a section was skipped; empty otherwise.
    pub note: String,
}

impl Section {
    pub fn judged(identity: impl Into<String>, residual: Rat, budget: &ToleranceBudget) -> Section {
        let verdict = if budget.allows(&residual) { Verdict::Pass } else { Verdict::Fail };
        Section {
            identity: identity.into(),
            max_residual: residual,
            budget: budget.budget_value(),
            verdict,
            note: String::new(),
        }
    }

    pub fn skipped(identity: impl Into<String>, note: impl Into<String>) -> Section {
        Section {
            identity: identity.into(),
            max_residual: Rat::zero(),
            budget: Rat::zero(),
            verdict: Verdict::Skipped,
            note: note.into(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut obj = serde_json::Map::new();
        obj.insert("identity".into(), self.identity.clone().into());
        obj.insert("max_residual".into(), rat_string(&self.max_residual).into());
        obj.insert("budget".into(), rat_string(&self.budget).into());
        obj.insert("verdict".into(), self.verdict.as_str().into());
        if !self.note.is_empty() {
            obj.insert("note".into(), self.note.clone().into());
        }
        serde_json::Value::Object(obj)
    }
}

#[derive(Clone, Debug)]
pub struct Report {
    pub config_echo: serde_json::Value,
    pub sections: Vec<Section>,
}

impl Report {
    pub fn new(config_echo: serde_json::Value) -> Report {
        Report { config_echo, sections: Vec::new() }
    }

    pub fn push(&mut self, s: Section) {
        self.sections.push(s);
    }

    pub fn all_pass(&self) -> bool {
        self.sections.iter().all(|s| s.verdict != Verdict::Fail)
    }

    pub fn failures(&self) -> Vec<&Section> {
        self.sections.iter().filter(|s| s.verdict == Verdict::Fail).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema": "mops-report/1",
            "config-echo": self.config_echo,
            "sections": self.sections.iter().map(Section::to_json).collect::<Vec<_>>(),
        })
    }

    /// Canonical body: pretty JSON, sorted keys, trailing newline, nothing
    /// time-dependent.
    pub fn to_canonical_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        // shift slugs put commas inside identity names; quote those fields
        fn cell(s: &str) -> String {
            if s.contains(',') || s.contains('"') {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        }
        let mut out = String::from("identity,max_residual,budget,verdict\n");
        for s in &self.sections {
            out.push_str(&format!(
                "{},{},{},{}\n",
                cell(&s.identity),
                rat_string(&s.max_residual),
                rat_string(&s.budget),
                s.verdict.as_str(),
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::parse_rat;

    fn r(s: &str) -> Rat {
        parse_rat(s).unwrap()
    }

    fn sample() -> Report {
        let mut rep = Report::new(serde_json::json!({"n_max": 4, "family": "charlier"}));
        rep.push(Section::judged("reconstruction", Rat::zero(), &ToleranceBudget::exact()));
        rep.push(Section::judged("symMom", r("1/1000000"), &ToleranceBudget::tail(r("1e-40"))));
        rep.push(Section::skipped("three-weight", "p != 3"));
        rep
    }

    #[test]
    fn verdicts_follow_budgets() {
        let rep = sample();
        assert_eq!(rep.sections[0].verdict, Verdict::Pass);
        assert_eq!(rep.sections[1].verdict, Verdict::Fail);
        assert_eq!(rep.sections[2].verdict, Verdict::Skipped);
        assert!(!rep.all_pass());
        assert_eq!(rep.failures().len(), 1);

        let mut ok = Report::new(serde_json::Value::Null);
        ok.push(Section::judged("x", r("1/2"), &ToleranceBudget::tail(r("1"))));
        ok.push(Section::skipped("y", "not applicable"));
        assert!(ok.all_pass());
    }

    #[test]
    fn serialization_is_deterministic_and_schema_shaped() {
        let a = sample().to_canonical_string();
        let b = sample().to_canonical_string();
        assert_eq!(a, b);
        assert!(a.ends_with('\n'));

        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["schema"], "mops-report/1");
        assert!(v["config-echo"].is_object());
        let sections = v["sections"].as_array().unwrap();
        assert_eq!(sections.len(), 3);
        for s in sections {
            assert!(s["identity"].is_string());
            assert!(s["max_residual"].is_string());
            assert!(s["budget"].is_string());
            assert!(matches!(s["verdict"].as_str(), Some("pass" | "fail" | "skipped")));
        }
        assert_eq!(sections[1]["max_residual"], "1/1000000");

        let csv = sample().to_csv();
        assert!(csv.starts_with("identity,max_residual,budget,verdict\n"));
        assert!(csv.contains("three-weight,0,0,skipped"));
    }
}
