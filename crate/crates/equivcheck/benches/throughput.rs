//! Parallel vs sequential throughput over the CPU-bound toolkit workloads:
//! Dafny parsing, annotation statistics, and cyclomatic-complexity scoring.
//! Run with `cargo bench` (parallel feature, default) and compare against
//! `cargo bench --no-default-features` for the fully sequential build.

use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use equivcheck::corpus::{BenchmarkItem, Difficulty, Provenance, TagTriple, Variant};
use equivcheck::dafny;
use equivcheck::parallel::{par_map_workers, seq_map};
use equivcheck::scoring::{cyclomatic_complexity, CcRules};

fn fixture_sources() -> Vec<String> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/fixtures");
    let mut sources: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| {
            let path = e.unwrap().path();
            (path.extension().and_then(|x| x.to_str()) == Some("dfy"))
                .then(|| std::fs::read_to_string(&path).unwrap())
        })
        .collect();
    // Repeat the pack so the parallel split has enough work per thread.
    let base = sources.clone();
    for _ in 0..9 {
        sources.extend(base.iter().cloned());
    }
    sources
}

fn bench_parse(c: &mut Criterion) {
    let sources = fixture_sources();
    let mut group = c.benchmark_group("parse");
    group.bench_with_input(BenchmarkId::new("seq", sources.len()), &sources, |b, s| {
        b.iter(|| seq_map(s.clone(), |src| dafny::parse_unit(&src).unwrap().decls().len()))
    });
    for workers in [2, 4] {
        group.bench_with_input(
            BenchmarkId::new(format!("par{workers}"), sources.len()),
            &sources,
            |b, s| {
                b.iter(|| {
                    par_map_workers(s.clone(), workers, |src| {
                        dafny::parse_unit(&src).unwrap().decls().len()
                    })
                })
            },
        );
    }
    group.finish();
}

fn bench_stats(c: &mut Criterion) {
    let items: Vec<BenchmarkItem> = fixture_sources()
        .into_iter()
        .enumerate()
        .map(|(i, src)| BenchmarkItem {
            id: format!("item-{i}"),
            query: None,
            reference_solution: None,
            dafny_strong: None,
            dafny_weak: Some(src),
            unit_tests: Vec::new(),
            tags: TagTriple::default(),
            difficulty: Difficulty::Easy,
            provenance: Provenance::External,
            extra: BTreeMap::new(),
        })
        .collect();
    let mut group = c.benchmark_group("stats");
    group.bench_function("compute_stats", |b| {
        b.iter(|| equivcheck::corpus::compute_stats(&items, Variant::Weak))
    });
    group.finish();
}

fn bench_cc(c: &mut Criterion) {
    let snippet = "def work(xs):\n    total = 0\n    for x in xs:\n        if x % 2 == 0 and x > 0:\n            total += x\n        elif x < 0 or x == -1:\n            total -= x\n    while total > 100:\n        total //= 2\n    return total\n";
    let sources: Vec<String> = (0..2000).map(|_| snippet.to_string()).collect();
    let mut group = c.benchmark_group("cyclomatic");
    group.bench_function("seq", |b| {
        b.iter(|| {
            seq_map(sources.clone(), |s| {
                cyclomatic_complexity(&s, CcRules::RadonPython).unwrap().mean
            })
        })
    });
    group.bench_function("par4", |b| {
        b.iter(|| {
            par_map_workers(sources.clone(), 4, |s| {
                cyclomatic_complexity(&s, CcRules::RadonPython).unwrap().mean
            })
        })
    });
    group.finish();
}

criterion_group!(benches, bench_parse, bench_stats, bench_cc);
criterion_main!(benches);
