//! End-to-end run on a raw weight system that is none of the named
//! families: one pure-exponential weight next to a ratio-type weight under
//! a shared denominator parameter. Everything the verifier checks here is
//! family-agnostic, so this guards the pipeline against accidental
//! family-specific assumptions.

use num_traits::Zero;

use mops_core::pipeline::{
    build_pipeline, parse_shift, run_shift_check, run_verify, PipelineConfig, SystemInput,
};
use mops_core::report::Verdict;
use mops_core::scalar::parse_rat;
use mops_core::weights::{WeightParams, WeightSystem};
use mops_core::{MopsError, Rat};

fn r(s: &str) -> Rat {
    parse_rat(s).unwrap()
}

fn mixed_system() -> WeightSystem {
    WeightSystem::new(
        2,
        vec![r("1/2")],
        vec![
            WeightParams { eta: r("1/3"), b: vec![] },
            WeightParams { eta: r("1/4"), b: vec![r("3/2")] },
        ],
    )
    .unwrap()
}

#[test]
fn mixed_raw_system_passes_the_family_agnostic_suite() {
    let cfg = PipelineConfig {
        input: SystemInput::Raw(mixed_system()),
        n_max: 5,
        jet_order: 1,
        tail_target: r("1e-25"),
        amplification: None,
    };
    let pl = build_pipeline(&cfg).unwrap();
    let shifts = vec![parse_shift("b:a=2,i=1").unwrap(), parse_shift("c:j=1").unwrap()];
    let rep = run_verify(&pl, &shifts).unwrap();

    assert!(rep.all_pass(), "failures: {:?}", rep.failures().iter().map(|s| &s.identity).collect::<Vec<_>>());

    // exact tier really is exact
    for s in &rep.sections {
        if s.budget.is_zero() && s.verdict != Verdict::Skipped {
            assert!(s.max_residual.is_zero(), "{}: {}", s.identity, s.max_residual);
        }
    }

    // no family, no family laws; the section must say so rather than fail
    let lf = rep.sections.iter().find(|s| s.identity == "lf").unwrap();
    assert_eq!(lf.verdict, Verdict::Skipped);
    assert!(lf.note.contains("raw weight system"));

    // both shift kinds produced their contiguity sections
    for id in ["hypRelM[b:a=2,i=1]", "connRel1[c:j=1]", "compJo[b:a=2,i=1]"] {
        assert!(rep.sections.iter().any(|s| s.identity == id), "missing {id}");
    }

    // reports are value-deterministic at the library level too
    let again = run_verify(&pl, &shifts).unwrap();
    assert_eq!(rep.to_canonical_string(), again.to_canonical_string());
}

#[test]
fn shift_check_requires_shifts() {
    let cfg = PipelineConfig {
        input: SystemInput::Raw(mixed_system()),
        n_max: 3,
        jet_order: 0,
        tail_target: r("1e-15"),
        amplification: None,
    };
    let pl = build_pipeline(&cfg).unwrap();
    match run_shift_check(&pl, &[]) {
        Err(MopsError::InvalidParameters { reason }) => {
            assert!(reason.contains("shift"), "{reason}")
        }
        other => panic!("expected InvalidParameters, got {other:?}"),
    }
}
