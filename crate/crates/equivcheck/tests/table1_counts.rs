//! Annotation counting on a hand-counted fixture set. The expected counts
//! below were tallied by eye from the fixture sources before running the
//! implementation, and act as the frozen oracle.

use std::collections::BTreeMap;

use equivcheck::corpus::{compute_stats, BenchmarkItem, Difficulty, Provenance, TagTriple, Variant};

fn fixture_item(id: &str, file: &str) -> BenchmarkItem {
    let src = std::fs::read_to_string(format!(
        "{}/assets/fixtures/{file}",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap();
    BenchmarkItem {
        id: id.to_string(),
        query: None,
        reference_solution: None,
        dafny_strong: None,
        dafny_weak: Some(src),
        unit_tests: Vec::new(),
        tags: TagTriple::default(),
        difficulty: Difficulty::Easy,
        provenance: Provenance::External,
        extra: BTreeMap::new(),
    }
}

#[test]
fn five_file_hand_counts_are_exact() {
    // (file, functions, methods, invariants, ensures, decreases)
    let expected = [
        ("fig2_max.dfy", 0, 1, 0, 1, 0),
        ("s625.dfy", 0, 1, 0, 3, 0),
        ("s629.dfy", 1, 1, 4, 2, 0),
        ("s733.dfy", 0, 1, 4, 3, 0),
        ("s579.dfy", 1, 1, 8, 2, 0),
    ];
    let items: Vec<BenchmarkItem> = expected
        .iter()
        .map(|(file, ..)| fixture_item(file, file))
        .collect();
    let stats = compute_stats(&items, Variant::Weak);
    assert!(stats.diagnostics.is_empty(), "{:?}", stats.diagnostics);
    assert_eq!(stats.per_item.len(), 5);

    for (i, (file, functions, methods, invariants, ensures, decreases)) in
        expected.iter().enumerate()
    {
        let c = &stats.per_item[i].counts;
        assert_eq!(c.functions, *functions, "{file} functions");
        assert_eq!(c.methods, *methods, "{file} methods");
        assert_eq!(c.invariants, *invariants, "{file} invariants");
        assert_eq!(c.ensures, *ensures, "{file} ensures");
        assert_eq!(c.decreases, *decreases, "{file} decreases");
    }

    // Means must equal the arithmetic mean of the hand counts to 1e-9.
    let n = expected.len() as f64;
    let mean_of = |sel: fn(&(&str, usize, usize, usize, usize, usize)) -> usize| {
        expected.iter().map(|row| sel(row) as f64).sum::<f64>() / n
    };
    assert!((stats.mean.functions - mean_of(|r| r.1)).abs() < 1e-9);
    assert!((stats.mean.methods - mean_of(|r| r.2)).abs() < 1e-9);
    assert!((stats.mean.invariants - mean_of(|r| r.3)).abs() < 1e-9);
    assert!((stats.mean.ensures - mean_of(|r| r.4)).abs() < 1e-9);
    assert!((stats.mean.decreases - mean_of(|r| r.5)).abs() < 1e-9);

    // Spot values, hand-computed once.
    assert!((stats.mean.functions - 0.4).abs() < 1e-9);
    assert!((stats.mean.ensures - 2.2).abs() < 1e-9);
    assert!((stats.mean.invariants - 3.2).abs() < 1e-9);
}

#[test]
fn fixed_swap_variant_gains_one_ensures() {
    let weak = fixture_item("w", "s625.dfy");
    let fixed = fixture_item("f", "s625_fixed.dfy");
    let stats = compute_stats(&[weak, fixed], Variant::Weak);
    assert_eq!(stats.per_item[0].counts.ensures, 3);
    assert_eq!(stats.per_item[1].counts.ensures, 4);
}
