mod common;

use std::collections::BTreeMap;

use common::{enumerate_sampled_words, toy_provider, toy_tokenizer, TOY_TOKENS};
use predictability::freq::FrequencyTable;
use predictability::lmcore::{
    word_probability, DistributionProvider, EmbeddingMatrix, NgramProvider, NgramRow, NgramTable, TokenDistribution,
};
use predictability::manip::{
    cluster_masses, h2_probability, h2_token_probability, h3_distribution, h3_probability, kmeans_cluster,
    load_sample_sets, sa_probability, sample_words, write_sample_sets, Aggregation, ClusterAssignment,
    FrequentSplit, SimilarityConfig,
};
use predictability::corpus::ContextId;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn chain_provider(tokens: &[&str], next: &[(u32, u32)], start: u32) -> NgramProvider {
    let v = tokens.len();
    let one_hot = |t: u32| (0..v).map(|i| if i as u32 == t { 1.0 } else { 0.0 }).collect::<Vec<_>>();
    let mut rows = vec![NgramRow { context: vec![], probs: one_hot(start) }];
    for &(from, to) in next {
        rows.push(NgramRow { context: vec![from], probs: one_hot(to) });
    }
    NgramProvider::new(&NgramTable {
        vocab: tokens.iter().map(|s| s.to_string()).collect(),
        segmentation: Default::default(),
        order: 2,
        rows,
    })
    .unwrap()
}

#[test]
fn degenerate_provider_always_samples_the_same_word() {
    // <eot> -> " the" -> "." -> " the" ...
    let p = chain_provider(&["<|endoftext|>", " the", "."], &[(0, 1), (1, 2), (2, 1)], 1);
    let s = sample_words(&p, &[0], 25, 9).unwrap();
    assert_eq!(s.n(), 25);
    assert!(s.samples.iter().all(|w| w == "the"));
}

#[test]
fn subword_pieces_join_into_one_word() {
    let p = chain_provider(&["<|endoftext|>", " car", "pet", " the"], &[(0, 1), (1, 2), (2, 3), (3, 1)], 1);
    let s = sample_words(&p, &[0], 5, 1).unwrap();
    assert!(s.samples.iter().all(|w| w == "carpet"));
}

#[test]
fn three_pieces_without_an_end_are_concatenated() {
    let p = chain_provider(&["<|endoftext|>", " wind", "ow", "s"], &[(0, 1), (1, 2), (2, 3), (3, 3)], 1);
    let s = sample_words(&p, &[0], 3, 1).unwrap();
    assert!(s.samples.iter().all(|w| w == "windows"));
}

#[test]
fn sampling_is_reproducible() {
    let p = toy_provider(4);
    assert_eq!(sample_words(&p, &[0, 3], 50, 7).unwrap(), sample_words(&p, &[0, 3], 50, 7).unwrap());
    assert_ne!(sample_words(&p, &[0, 3], 50, 7).unwrap(), sample_words(&p, &[0, 3], 50, 8).unwrap());
    assert!(sample_words(&p, &[0], 0, 1).is_err());
}

#[test]
fn enumerated_word_distribution_is_normalized() {
    let p = toy_provider(2);
    let words = enumerate_sampled_words(&p, &[0, 3]);
    let total: f64 = words.values().sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn sampled_frequencies_match_enumeration() {
    let n = 5000;
    let (mut inside, mut checked) = (0, 0);
    for seed in 0..5 {
        let p = toy_provider(100 + seed);
        let prefix = [0, 3];
        let exact = enumerate_sampled_words(&p, &prefix);
        let s = sample_words(&p, &prefix, n, seed).unwrap();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for w in &s.samples {
            *counts.entry(w.as_str()).or_insert(0) += 1;
            assert!(exact.contains_key(w.as_str()), "sampled {w:?} has no enumerated mass");
        }
        for (w, &pw) in &exact {
            if pw * (n as f64) < 1.0 {
                continue;
            }
            checked += 1;
            let emp = *counts.get(w.as_str()).unwrap_or(&0) as f64 / n as f64;
            if (emp - pw).abs() <= 3.0 * (pw * (1.0 - pw) / n as f64).sqrt() {
                inside += 1;
            }
        }
    }
    assert!(inside as f64 >= 0.99 * checked as f64, "{inside}/{checked}");
}

#[test]
fn singleton_clusters_reproduce_token_probabilities() {
    let p = toy_provider(6);
    let c = ClusterAssignment::singletons(TOY_TOKENS.len());
    for prefix in [vec![0], vec![0, 3], vec![0, 3, 4, 1]] {
        let d = p.next_distribution(&prefix).unwrap();
        for t in 0..TOY_TOKENS.len() as u32 {
            assert!((h2_token_probability(&d, &c, t).unwrap() - d.prob(t)).abs() < 1e-12);
        }
    }
    // Multi-token words become the plain token product.
    let prefix = [0, 3];
    let h2 = h2_probability(&p, &prefix, &c, "carpet").unwrap();
    let raw = p.score(&prefix, &toy_tokenizer().tokenize("carpet").unwrap()).unwrap().exp();
    assert!((h2 - raw).abs() < 1e-12);
}

#[test]
fn co_clustered_multi_token_word() {
    let p = toy_provider(6);
    // " car" with " cat", "pet" with "s".
    let mut labels: Vec<usize> = (0..TOY_TOKENS.len()).collect();
    labels[5] = 4;
    labels[6] = 9;
    let c = ClusterAssignment::from_labels(labels, TOY_TOKENS.len()).unwrap();
    let d0 = p.next_distribution(&[0, 3]).unwrap();
    let d1 = p.next_distribution(&[0, 3, 5]).unwrap();
    let expect = (d0.prob(4) + d0.prob(5)) * (d1.prob(6) + d1.prob(9));
    assert!((h2_probability(&p, &[0, 3], &c, "carpet").unwrap() - expect).abs() < 1e-12);
}

#[test]
fn h3_paper_example_and_degenerate_threshold() {
    let p = chain_provider(&["<|endoftext|>", " the", "."], &[(0, 1), (1, 2), (2, 1)], 1);
    let mut freq = FrequencyTable::new();
    freq.insert("the", 5e4).unwrap();
    let split = FrequentSplit::new(p.tokenizer().vocab(), &freq, 1e4).unwrap();
    assert_eq!(split.n_frequent(), 1);
    // " the" is certain and the only frequent token: P = 1 * 1/2.
    assert!((h3_probability(&p, &[0], &split, "the").unwrap() - 0.5).abs() < 1e-12);
    assert!(FrequentSplit::new(p.tokenizer().vocab(), &freq, 1e5).is_err());
}

fn random_distribution(rng: &mut ChaCha8Rng, v: usize) -> TokenDistribution {
    let logits: Vec<f64> = (0..v).map(|_| rng.random_range(-6.0..6.0)).collect();
    TokenDistribution::from_logits(&logits).unwrap()
}

#[test]
fn h3_invariants_on_random_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let v = rng.random_range(2..40);
        let d = random_distribution(&mut rng, v);
        let mut flags: Vec<bool> = (0..v).map(|_| rng.random_bool(0.5)).collect();
        flags[rng.random_range(0..v)] = true;
        let split = FrequentSplit::from_flags(flags.clone(), 1e4).unwrap();
        let q = h3_distribution(&d, &split).unwrap();
        let nf = split.n_frequent() as f64;
        let frequent_total: f64 = q.iter().zip(&flags).filter(|(_, f)| **f).map(|(x, _)| x).sum();
        assert!((frequent_total - nf / (nf + 1.0)).abs() < 1e-12);
        let f: Vec<usize> = (0..v).filter(|&i| flags[i]).collect();
        for w in f.windows(2) {
            let (a, b) = (w[0], w[1]);
            let r1 = q[a] / q[b];
            let r0 = d.prob(a as u32) / d.prob(b as u32);
            assert!((r1 / r0 - 1.0).abs() < 1e-12);
        }
        for i in (0..v).filter(|&i| !flags[i]) {
            assert!((q[i] - 1.0 / (nf + 1.0)).abs() < 1e-15);
        }
    }
}

proptest! {
    #[test]
    fn cluster_masses_sum_to_one(seed in any::<u64>(), v in 2usize..64, k in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_distribution(&mut rng, v);
        let labels: Vec<usize> = (0..v).map(|_| rng.random_range(0..k)).collect();
        let c = ClusterAssignment::from_labels(labels, k).unwrap();
        let m = cluster_masses(&d, &c).unwrap();
        prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        for t in 0..v as u32 {
            prop_assert!(h2_token_probability(&d, &c, t).unwrap() >= d.prob(t));
        }
    }

    #[test]
    fn kmeans_invariants(seed in any::<u64>(), n in 3usize..40, k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f32>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-5.0f32..5.0)).collect()).collect();
        let m = EmbeddingMatrix::from_rows(&rows).unwrap();
        let k = k.min(n);
        let c = kmeans_cluster(&m, k, 3, seed).unwrap();
        prop_assert_eq!(c.assignment.len(), n);
        prop_assert!(c.assignment.iter().all(|&a| a < k));
        for w in c.inertia_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
        }
        let inertia: f64 = rows
            .iter()
            .zip(&c.assignment)
            .map(|(r, &a)| r.iter().zip(&c.centroids[a]).map(|(x, y)| (*x as f64 - y).powi(2)).sum::<f64>())
            .sum();
        prop_assert!((inertia - c.inertia).abs() <= 1e-9 * inertia.max(1.0));
    }
}

#[test]
fn kmeans_matches_best_two_partition() {
    let rows = vec![vec![0.0f32, 0.0], vec![0.3, 0.1], vec![8.0, 8.0], vec![8.2, 7.9]];
    let m = EmbeddingMatrix::from_rows(&rows).unwrap();
    let c = kmeans_cluster(&m, 2, 4, 0).unwrap();
    // Brute force over all 2-partitions.
    let cost = |mask: u32| -> f64 {
        let mut total = 0.0;
        for side in [0, 1] {
            let members: Vec<&Vec<f32>> = (0..4).filter(|i| (mask >> i & 1) == side).map(|i| &rows[i as usize]).collect();
            if members.is_empty() {
                return f64::INFINITY;
            }
            let dim = 2;
            let mean: Vec<f64> = (0..dim).map(|j| members.iter().map(|r| r[j] as f64).sum::<f64>() / members.len() as f64).collect();
            total += members.iter().map(|r| (0..dim).map(|j| (r[j] as f64 - mean[j]).powi(2)).sum::<f64>()).sum::<f64>();
        }
        total
    };
    let best = (1u32..8).map(cost).fold(f64::INFINITY, f64::min);
    assert!((c.inertia - best).abs() < 1e-9);
    assert_eq!(c.assignment[0], c.assignment[1]);
    assert_eq!(c.assignment[2], c.assignment[3]);
}

fn sa_fixture() -> (NgramProvider, EmbeddingMatrix) {
    let p = toy_provider(13);
    let rows: Vec<Vec<f32>> = (0..TOY_TOKENS.len())
        .map(|i| vec![(i as f32 * 0.7).sin(), (i as f32 * 1.3).cos(), i as f32 * 0.1])
        .collect();
    (p, EmbeddingMatrix::from_rows(&rows).unwrap())
}

#[test]
fn sa_self_response_is_word_probability() {
    let (p, e) = sa_fixture();
    let prefix = [0, 3];
    for word in ["cat", "carpet", "windows"] {
        let sa = sa_probability(&[word], &p, &prefix, &e, word, SimilarityConfig::default()).unwrap();
        assert!((sa - word_probability(&p, &prefix, word).unwrap()).abs() < 1e-15);
    }
}

#[test]
fn sa_orthogonal_embeddings_halve_the_mean() {
    let p = toy_provider(13);
    let v = TOY_TOKENS.len();
    // " cat" (4) points along x; every other token along y.
    let rows: Vec<Vec<f32>> = (0..v).map(|i| if i == 4 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect();
    let e = EmbeddingMatrix::from_rows(&rows).unwrap();
    let r = ["the", "sat", "the"];
    let prefix = [0, 3];
    let sa = sa_probability(&r, &p, &prefix, &e, "cat", SimilarityConfig::default()).unwrap();
    let mean: f64 = r.iter().map(|w| word_probability(&p, &prefix, w).unwrap()).sum::<f64>() / 3.0;
    assert!((sa - 0.5 * mean).abs() < 1e-15);
}

#[test]
fn sa_hand_computed_three_words() {
    let p = toy_provider(13);
    let v = TOY_TOKENS.len();
    let mut rows = vec![vec![0.0f32, 0.0]; v];
    rows[4] = vec![1.0, 0.0]; // " cat"
    rows[3] = vec![1.0, 1.0]; // " the": cos 1/sqrt2
    rows[10] = vec![-1.0, 0.0]; // " sat": cos -1
    rows[5] = vec![0.0, 2.0]; // " car"
    rows[6] = vec![2.0, 0.0]; // "pet": carpet pools to (1, 1)
    let e = EmbeddingMatrix::from_rows(&rows).unwrap();
    let prefix = [0, 3];
    let pw = |w: &str| word_probability(&p, &prefix, w).unwrap();
    let z_the = (1.0 + 0.5f64.sqrt()) / 2.0;
    let expect = (z_the * pw("the") + 0.0 * pw("sat") + z_the * pw("carpet")) / 3.0;
    let got = sa_probability(&["the", "sat", "carpet"], &p, &prefix, &e, "cat", SimilarityConfig::default()).unwrap();
    assert!((got - expect).abs() < 1e-15);
    let sum = SimilarityConfig { aggregation: Aggregation::Sum, ..Default::default() };
    let got = sa_probability(&["the", "sat", "carpet"], &p, &prefix, &e, "cat", sum).unwrap();
    assert!((got - 3.0 * expect).abs() < 1e-15);
    assert!(sa_probability::<_, &str>(&[], &p, &prefix, &e, "cat", SimilarityConfig::default()).is_err());
}

proptest! {
    #[test]
    fn sa_is_permutation_invariant(idx in prop::collection::vec(0usize..5, 1..12), seed in any::<u64>()) {
        let (p, e) = sa_fixture();
        let vocab = ["the", "cat", "carpet", "sat", "windows"];
        let words: Vec<&str> = idx.iter().map(|&i| vocab[i]).collect();
        let mut shuffled = words.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let a = sa_probability(&words, &p, &[0, 3], &e, "cat", SimilarityConfig::default()).unwrap();
        let b = sa_probability(&shuffled, &p, &[0, 3], &e, "cat", SimilarityConfig::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn sample_set_file_round_trip() {
    let p = toy_provider(3);
    let mut a = sample_words(&p, &[0, 3], 20, 5).unwrap();
    a.context = Some(ContextId::new("1", "2", 3));
    let mut b = sample_words(&p, &[0, 4], 7, 6).unwrap();
    b.context = Some(ContextId::new("1", "2", 4));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("samples.jsonl");
    write_sample_sets(&[a.clone(), b.clone()], std::fs::File::create(&path).unwrap()).unwrap();
    assert_eq!(load_sample_sets(&path).unwrap(), vec![a, b]);
}
