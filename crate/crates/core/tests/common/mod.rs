//! Synthetic fixtures shared by the integration tests.
#![allow(dead_code)]

use cscprobe::embedding_store::EmbeddingTable;
use cscprobe::probe_dataset::{ProbeDataset, ProbeKind, ProbePair, Split};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn cjk(i: u32) -> char {
    char::from_u32(0x4e00 + i).expect("CJK codepoint")
}

/// Planted-signature probe data: every positive left character has +2 in
/// coordinate 0, every negative left character -2; all other coordinates
/// are standard normal. Each of the `pairs / 2` right characters gets one
/// positive and one negative pair; the first 80% of right characters train.
pub fn separable(pairs: usize, dim: usize, seed: u64) -> (ProbeDataset, EmbeddingTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_right = pairs / 2;
    let n_left = 200u32;
    let mut table = EmbeddingTable::new(dim).unwrap();
    let vector = |rng: &mut ChaCha8Rng, sig: Option<f32>| -> Vec<f32> {
        let mut v: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if let Some(s) = sig {
            v[0] = s;
        }
        v
    };
    // left characters: 0..200 positive, 200..400 negative; right: 400..
    for i in 0..2 * n_left {
        let sig = if i < n_left { 2.0 } else { -2.0 };
        let v = vector(&mut rng, Some(sig));
        table.insert(cjk(i), v).unwrap();
    }
    let mut out = Vec::with_capacity(pairs);
    for r in 0..n_right as u32 {
        let right = cjk(2 * n_left + r);
        let v = vector(&mut rng, None);
        table.insert(right, v).unwrap();
        let split = if (r as usize) < n_right * 4 / 5 { Split::Train } else { Split::Test };
        let pos = cjk(rng.random_range(0..n_left));
        let neg = cjk(n_left + rng.random_range(0..n_left));
        out.push(ProbePair { left: pos, right, positive: true, split });
        out.push(ProbePair { left: neg, right, positive: false, split });
    }
    let ds = ProbeDataset {
        kind: ProbeKind::Glyph,
        seed,
        test_fraction: 0.2,
        pairs: out,
    };
    (ds, table)
}

/// Same pairs with labels permuted across the whole dataset (balance kept).
pub fn shuffle_labels(ds: &ProbeDataset, seed: u64) -> ProbeDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<bool> = ds.pairs.iter().map(|p| p.positive).collect();
    labels.shuffle(&mut rng);
    let pairs = ds
        .pairs
        .iter()
        .zip(labels)
        .map(|(p, positive)| ProbePair { positive, ..*p })
        .collect();
    ProbeDataset { pairs, ..ds.clone() }
}

/// Perceptron over the concatenated inputs; returns the number of epochs
/// needed to reach zero training errors, or `None` if it never does.
pub fn perceptron_separates(ds: &ProbeDataset, table: &EmbeddingTable, max_epochs: usize) -> Option<usize> {
    let data: Vec<(Vec<f64>, f64)> = ds
        .pairs
        .iter()
        .map(|p| {
            let x: Vec<f64> = table
                .get(p.left)
                .unwrap()
                .iter()
                .chain(table.get(p.right).unwrap())
                .map(|v| f64::from(*v))
                .collect();
            (x, if p.positive { 1.0 } else { -1.0 })
        })
        .collect();
    let d = data[0].0.len();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for epoch in 1..=max_epochs {
        let mut mistakes = 0;
        for (x, y) in &data {
            let s: f64 = b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
            if y * s <= 0.0 {
                mistakes += 1;
                for (wi, xi) in w.iter_mut().zip(x) {
                    *wi += y * xi;
                }
                b += y;
            }
        }
        if mistakes == 0 {
            return Some(epoch);
        }
    }
    None
}
