//! Brute-force NPMI and block-structured similarity generators.

use rand::seq::SliceRandom;
use rand::Rng;

/// Dense clamped NPMI by counting bag membership pair by pair.
pub fn brute_force(bags: &[Vec<String>], vocab: &[String]) -> Vec<f64> {
    let n = bags.len() as f64;
    let k = vocab.len();
    let has = |bag: &Vec<String>, t: &String| bag.iter().any(|x| x == t);
    let mut out = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            if i == j {
                out[i * k + j] = 1.0;
                continue;
            }
            let (mut cx, mut cy, mut cxy) = (0.0, 0.0, 0.0);
            for bag in bags {
                let (a, b) = (has(bag, &vocab[i]), has(bag, &vocab[j]));
                if a {
                    cx += 1.0;
                }
                if b {
                    cy += 1.0;
                }
                if a && b {
                    cxy += 1.0;
                }
            }
            let (px, py, pxy) = (cx / n, cy / n, cxy / n);
            let v = if pxy == 0.0 {
                0.0
            } else if pxy == 1.0 {
                1.0
            } else {
                (pxy / (px * py)).ln() / -pxy.ln()
            };
            out[i * k + j] = v.max(0.0);
        }
    }
    out
}

/// Random corpus: up to `max_tags` distinct tags, up to `max_bags` bags of
/// 1..=min(10, tags) distinct tags each.
pub fn random_corpus(rng: &mut impl Rng, max_tags: usize, max_bags: usize) -> Vec<Vec<String>> {
    let n_tags = rng.random_range(2..=max_tags);
    let n_bags = rng.random_range(1..=max_bags);
    let tags: Vec<String> = (0..n_tags).map(|i| format!("t{i:02}")).collect();
    (0..n_bags)
        .map(|_| {
            let size = rng.random_range(1..=n_tags.min(10));
            let mut pool = tags.clone();
            pool.shuffle(rng);
            pool.truncate(size);
            pool
        })
        .collect()
}

/// Block-diagonal similarity with random within-block values in
/// `[within_lo, 1]` and between-block values in `[0, between_hi]`. Returns the
/// matrix and the planted labels.
pub fn planted_blocks(
    rng: &mut impl Rng,
    sizes: &[usize],
    within_lo: f64,
    between_hi: f64,
) -> (Vec<f64>, Vec<usize>) {
    let mut labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat_n(b, s)).collect();
    labels.shuffle(rng);
    let n = labels.len();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        w[i * n + i] = 1.0;
        for j in i + 1..n {
            let v = if labels[i] == labels[j] {
                rng.random_range(within_lo..=1.0)
            } else {
                rng.random_range(0.0..=between_hi)
            };
            w[i * n + j] = v;
            w[j * n + i] = v;
        }
    }
    (w, labels)
}
