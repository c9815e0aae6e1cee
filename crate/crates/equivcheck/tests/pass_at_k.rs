use equivcheck::scoring::pass_at_k;
use proptest::prelude::*;

/// Independent oracle: enumerate every k-subset of n samples (the first c
/// flagged correct) and count subsets containing at least one success.
fn brute_force(n: u64, c: u64, k: u64) -> f64 {
    assert!(n <= 20);
    let mut total = 0u64;
    let mut hits = 0u64;
    for mask in 0u32..(1 << n) {
        if u64::from(mask.count_ones()) != k {
            continue;
        }
        total += 1;
        if (mask & ((1u32 << c) - 1)) != 0 {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

#[test]
fn matches_brute_force_for_all_small_inputs() {
    for n in 1..=12u64 {
        for c in 0..=n {
            for k in 1..=n {
                let fast = pass_at_k(n, c, k).unwrap();
                let slow = brute_force(n, c, k);
                assert!(
                    (fast - slow).abs() < 1e-9,
                    "n={n} c={c} k={k}: {fast} vs {slow}"
                );
            }
        }
    }
}

#[test]
fn paper_case_is_exact() {
    assert_eq!(pass_at_k(10, 3, 4).unwrap(), 1.0 - 35.0 / 210.0);
    assert!((pass_at_k(10, 3, 4).unwrap() - 5.0 / 6.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn in_unit_interval_and_monotone(n in 1u64..200, c in 0u64..200, k in 1u64..200) {
        let c = c.min(n);
        let k = k.min(n);
        let p = pass_at_k(n, c, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));

        // Nondecreasing in c.
        if c < n {
            let p_more = pass_at_k(n, c + 1, k).unwrap();
            prop_assert!(p_more >= p - 1e-12);
        }
        // Nondecreasing in k (a bigger budget never hurts).
        if k < n {
            let p_bigger_k = pass_at_k(n, c, k + 1).unwrap();
            prop_assert!(p_bigger_k >= p - 1e-12);
        }
    }
}
