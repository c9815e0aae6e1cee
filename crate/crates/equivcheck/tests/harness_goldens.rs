//! Generated check methods are frozen as reviewed goldens. Any change to
//! harness rendering must be re-reviewed by regenerating with
//! `cargo run --example gen_goldens` and inspecting the diff.

use equivcheck::dafny;
use equivcheck::harness::generate_equiv_harness;
use equivcheck::scoring::equiv_targets;

fn fixture_names() -> Vec<String> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/fixtures");
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".dfy"))
        .collect();
    names.sort();
    assert_eq!(names.len(), 22, "fixture set changed; update goldens");
    names
}

fn augment(source: &str) -> dafny::SourceUnit {
    let mut unit = dafny::parse_unit(source).unwrap();
    for target in equiv_targets(&unit) {
        unit = generate_equiv_harness(&unit, &target).unwrap();
    }
    unit
}

#[test]
fn harnesses_match_reviewed_goldens() {
    for name in fixture_names() {
        let src = std::fs::read_to_string(format!(
            "{}/assets/fixtures/{name}",
            env!("CARGO_MANIFEST_DIR")
        ))
        .unwrap();
        let golden = std::fs::read_to_string(format!(
            "{}/tests/golden/harness/{name}",
            env!("CARGO_MANIFEST_DIR")
        ))
        .unwrap_or_else(|e| panic!("missing golden for {name}: {e}"));
        let augmented = augment(&src);
        assert_eq!(augmented.raw(), golden, "harness drift for {name}");
    }
}

#[test]
fn augmented_units_reparse_cleanly() {
    for name in fixture_names() {
        let src = std::fs::read_to_string(format!(
            "{}/assets/fixtures/{name}",
            env!("CARGO_MANIFEST_DIR")
        ))
        .unwrap();
        let augmented = augment(&src);
        let reparsed = dafny::parse_unit(augmented.raw()).unwrap();
        assert_eq!(dafny::render_unit(&reparsed), augmented.raw());
    }
}

#[test]
fn original_bytes_are_untouched() {
    for name in fixture_names() {
        let src = std::fs::read_to_string(format!(
            "{}/assets/fixtures/{name}",
            env!("CARGO_MANIFEST_DIR")
        ))
        .unwrap();
        let augmented = augment(&src);
        assert!(
            augmented.raw().starts_with(&src),
            "augmentation rewrote original bytes in {name}"
        );
    }
}

#[test]
fn every_fixture_has_at_least_one_target() {
    for name in fixture_names() {
        let src = std::fs::read_to_string(format!(
            "{}/assets/fixtures/{name}",
            env!("CARGO_MANIFEST_DIR")
        ))
        .unwrap();
        let unit = dafny::parse_unit(&src).unwrap();
        assert!(
            !equiv_targets(&unit).is_empty(),
            "{name} has no checkable method"
        );
    }
}
