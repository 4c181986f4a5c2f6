use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn fingerprint(&self) -> String {
        split_fingerprint(&self.test)
    }
}

/// Short SHA-256 digest of a sorted test-index list.
pub fn split_fingerprint(test: &[usize]) -> String {
    let mut h = Sha256::new();
    for &i in test {
        h.update((i as u64).to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Uniform integer in `[0, n)` by Lemire's multiply-and-reject method.
fn bounded(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    let threshold = n.wrapping_neg() % n;
    loop {
        let m = (rng.next_u64() as u128) * (n as u128);
        if (m as u64) >= threshold {
            return (m >> 64) as u64;
        }
    }
}

/// Fisher-Yates, walking from the end.
fn shuffle(rng: &mut ChaCha8Rng, items: &mut [usize]) {
    for i in (1..items.len()).rev() {
        let j = bounded(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

/// Per-class test counts for `n_test` items, by largest remainder; ties go
/// to the larger class, then to the negative class.
pub fn test_class_counts(n_pos: usize, n_neg: usize, n_test: usize) -> [usize; 2] {
    let n = (n_pos + n_neg) as f64;
    let sizes = [n_neg, n_pos];
    let quota: Vec<f64> = sizes.iter().map(|&s| n_test as f64 * s as f64 / n).collect();
    let mut counts: [usize; 2] = [quota[0].floor() as usize, quota[1].floor() as usize];
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| {
        let ra = quota[a] - quota[a].floor();
        let rb = quota[b] - quota[b].floor();
        rb.total_cmp(&ra).then(sizes[b].cmp(&sizes[a])).then(a.cmp(&b))
    });
    let mut left = n_test - counts[0] - counts[1];
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    // each class represented when the test set has room for both
    if n_test >= 2 {
        for k in 0..2 {
            if counts[k] == 0 {
                counts[k] = 1;
                counts[1 - k] -= 1;
            }
        }
    }
    counts
}

/// `n_iter` stratified train/test partitions. Iteration `i` draws from the
/// ChaCha8 stream `i` of `seed`, so any subset of iterations can be
/// regenerated independently.
pub fn stratified_shuffle_split(labels: &[bool], n_iter: usize, test_fraction: f64, seed: u64) -> Result<Vec<Split>> {
    if !(test_fraction > 0.0 && test_fraction < 0.5) {
        return Err(Error::Config(format!("test_fraction {test_fraction} outside (0, 0.5)")));
    }
    if n_iter == 0 {
        return Err(Error::Config("n_iter must be >= 1".into()));
    }
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::Stratify(format!(
            "need >= 2 subjects per class, got {} positive and {} negative",
            pos.len(),
            neg.len()
        )));
    }
    let n = labels.len();
    let n_test = ((test_fraction * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let counts = test_class_counts(pos.len(), neg.len(), n_test);
    if counts[0] >= neg.len() || counts[1] >= pos.len() {
        return Err(Error::Stratify(format!("test counts {counts:?} leave a class without training subjects")));
    }
    Ok((0..n_iter)
        .map(|it| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(it as u64);
            let mut test = Vec::with_capacity(n_test);
            for (members, k) in [(&neg, counts[0]), (&pos, counts[1])] {
                let mut m = members.clone();
                shuffle(&mut rng, &mut m);
                test.extend_from_slice(&m[..k]);
            }
            test.sort_unstable();
            let train = (0..n).filter(|i| test.binary_search(i).is_err()).collect();
            Split { train, test }
        })
        .collect())
}
