use mcmin::fixtures::random_chain;
use mcmin::lmc::{l1_distance, lump, LabelledMarkovChain, Partition, SparseDistribution};
use mcmin::local::{local_distance, minimise_local};
use mcmin::witness::{adjust_distribution, local_merge_witness, verify_epsilon_quotient};
use mcmin::{exact_quotient, minimise_apr, RefinementConfig};
use proptest::prelude::*;

fn dist(max_len: usize) -> impl Strategy<Value = SparseDistribution> {
    prop::collection::vec(0.01f64..1.0, 1..=max_len).prop_map(|w| {
        let total: f64 = w.iter().sum();
        SparseDistribution::new(w.into_iter().enumerate().map(|(i, x)| (i, x / total))).unwrap()
    })
}

fn chain() -> impl Strategy<Value = LabelledMarkovChain> {
    (any::<u64>(), 2usize..12, 1usize..4, 1usize..3).prop_map(|(seed, n, b, l)| random_chain(seed, n, b, l))
}

fn stochastic(m: &LabelledMarkovChain) -> bool {
    m.rows().iter().all(|r| r.is_distribution(1e-9))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn l1_is_a_metric(a in dist(6), b in dist(6), c in dist(6)) {
        prop_assert!(l1_distance(&a, &a) == 0.0);
        prop_assert!((l1_distance(&a, &b) - l1_distance(&b, &a)).abs() < 1e-15);
        prop_assert!(l1_distance(&a, &c) <= l1_distance(&a, &b) + l1_distance(&b, &c) + 1e-12);
        prop_assert!(l1_distance(&a, &b) <= 2.0 + 1e-12);
    }

    #[test]
    fn adjust_hits_block_masses(mu in dist(8), gamma in dist(3), cut in prop::collection::vec(0usize..3, 8)) {
        let mut assign = cut;
        assign[..3].copy_from_slice(&[0, 1, 2]);
        let p = Partition::from_assignment(&assign);
        let out = adjust_distribution(&mu, &p, &gamma).unwrap();
        prop_assert!(out.is_distribution(1e-12));
        let sums = lump_dist(&out, &p);
        let before = lump_dist(&mu, &p);
        for b in 0..p.len() {
            prop_assert!((sums.get(b) - gamma.get(b)).abs() <= 1e-12);
        }
        prop_assert!((l1_distance(&out, &mu) - l1_distance(&before, &gamma)).abs() <= 1e-12);
    }

    #[test]
    fn exact_quotient_is_idempotent(m in chain()) {
        let q = exact_quotient(&m);
        prop_assert!(stochastic(&q.quotient));
        let qq = exact_quotient(&q.quotient);
        prop_assert_eq!(qq.n_states(), q.n_states());
        let p = q.partition();
        for s in 0..m.n_states() {
            for t in 0..m.n_states() {
                if p.same_block(s, t) {
                    prop_assert_eq!(m.label(s), m.label(t));
                    prop_assert!(l1_distance(&lump(&m, s, &p), &lump(&m, t, &p)) <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn merge_witness_is_stochastic_and_tight(m in chain()) {
        let n = m.n_states();
        for s in 0..n {
            for t in s + 1..n {
                if m.label(s) != m.label(t) {
                    continue;
                }
                let d = local_distance(&m, s, t).unwrap().distance;
                let w = local_merge_witness(&m, s, t).unwrap();
                prop_assert!(w.rows.iter().all(|r| r.is_distribution(1e-9)));
                prop_assert!(w.realised(&m) <= d + 1e-9);
            }
        }
    }

    #[test]
    fn minimisers_emit_valid_certificates(m in chain(), eps2 in prop::sample::select(vec![0.0, 0.05, 0.3])) {
        let local = minimise_local(&m, eps2);
        let apr = minimise_apr(&m, &RefinementConfig::new(eps2)).unwrap();
        for t in [&local, &apr] {
            prop_assert!(t.chains().all(stochastic));
            prop_assert!(t.final_chain().n_states() <= exact_quotient(&m).n_states());
            let c = t.composed().unwrap();
            prop_assert!(verify_epsilon_quotient(&c).passed);
            prop_assert!(c.epsilon <= t.bound() + 1e-9);
        }
    }
}

fn lump_dist(mu: &SparseDistribution, p: &Partition) -> SparseDistribution {
    SparseDistribution::new(mu.iter().map(|(s, x)| (p.block_of(s), x))).unwrap()
}
