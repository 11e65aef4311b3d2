//! Random fixtures and naive reference implementations shared by the
//! integration tests. The oracles deliberately use plain nested loops and
//! textbook formulas rather than anything from the library.

#![allow(dead_code, clippy::needless_range_loop)]

use attn_drift::dump::{
    AttentionDump, AttentionShape, DumpMeta, FeatureDump, FeatureShape, Method,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn meta(run_id: &str, n_images: usize) -> DumpMeta {
    DumpMeta {
        model_id: "vit-b-32".into(),
        dataset: "synthetic".into(),
        split: "val".into(),
        run_id: run_id.into(),
        method: Method::FullFt,
        variant: None,
        lr: 1e-5,
        seed: 0,
        subset_seed: 0,
        image_ids: (0..n_images).map(|i| format!("img{i:04}")).collect(),
    }
}

/// Softmax row of random logits; with `sparse`, some entries are exactly zero
/// but at least two patch columns keep mass.
pub fn random_row(rng: &mut ChaCha8Rng, t: usize, sparse: bool) -> Vec<f32> {
    let mut w: Vec<f64> = (0..t)
        .map(|_| (rng.random::<f64>() * 6.0 - 3.0).exp())
        .collect();
    if sparse && t > 3 {
        for (j, x) in w.iter_mut().enumerate() {
            if j > 2 && rng.random::<f64>() < 0.3 {
                *x = 0.0;
            }
        }
    }
    let s: f64 = w.iter().sum();
    w.iter().map(|x| (x / s) as f32).collect()
}

pub fn random_dump(rng: &mut ChaCha8Rng, shape: AttentionShape) -> AttentionDump {
    let t = shape.n_tokens;
    let sparse = rng.random::<bool>();
    let mut values = Vec::with_capacity(shape.element_count());
    for _ in 0..shape.n_images * shape.n_layers * shape.n_heads * t {
        values.extend(random_row(rng, t, sparse));
    }
    AttentionDump::new(shape, values, meta("random", shape.n_images)).unwrap()
}

pub fn random_shape(rng: &mut ChaCha8Rng, max: [usize; 4]) -> AttentionShape {
    AttentionShape {
        n_images: rng.random_range(1..=max[0]),
        n_layers: rng.random_range(1..=max[1]),
        n_heads: rng.random_range(1..=max[2]),
        n_tokens: rng.random_range(3..=max[3]),
    }
}

pub fn random_features(rng: &mut ChaCha8Rng, shape: FeatureShape, run_id: &str) -> FeatureDump {
    let values = (0..shape.n_layers * shape.n_images * shape.dim)
        .map(|_| normal(rng) as f32)
        .collect();
    FeatureDump::new(shape, values, meta(run_id, shape.n_images)).unwrap()
}

/// Standard normal via Box-Muller.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| normal(rng)).collect())
        .collect()
}

/// Random orthogonal matrix by Gram-Schmidt on a Gaussian matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        for u in &q {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            q.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    q
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for l in 0..k {
                out[i][j] += a[i][l] * b[l][j];
            }
        }
    }
    out
}

// ---- structural metrics ----

pub fn normalize(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

pub fn entropy_bits(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &x in p {
        if x > 0.0 {
            h -= x * x.log2();
        }
    }
    h
}

/// Smallest k whose top-k mass reaches the threshold, divided by the length.
pub fn erf(p: &[f64], threshold: f64) -> f64 {
    let mut sorted = p.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for k in 1..=sorted.len() {
        let mass: f64 = sorted[..k].iter().sum();
        if mass >= threshold - 1e-12 {
            return k as f64 / p.len() as f64;
        }
    }
    1.0
}

/// Mean absolute difference over all ordered pairs, over twice the mean.
pub fn gini(p: &[f64]) -> f64 {
    let n = p.len() as f64;
    let mut total = 0.0;
    for a in p {
        for b in p {
            total += (a - b).abs();
        }
    }
    let mean = p.iter().sum::<f64>() / n;
    total / (2.0 * n * n * mean)
}

pub fn head_diversity(heads: &[Vec<f64>]) -> f64 {
    if heads.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut pairs = 0.0;
    for i in 0..heads.len() {
        for j in i + 1..heads.len() {
            let dot: f64 = heads[i].iter().zip(&heads[j]).map(|(a, b)| a * b).sum();
            let ni: f64 = heads[i].iter().map(|a| a * a).sum::<f64>().sqrt();
            let nj: f64 = heads[j].iter().map(|a| a * a).sum::<f64>().sqrt();
            total += 1.0 - dot / (ni * nj);
            pairs += 1.0;
        }
    }
    total / pairs
}

fn entry(d: &AttentionDump, i: usize, l: usize, h: usize, q: usize, k: usize) -> f64 {
    let s = d.shape;
    let t = s.n_tokens;
    d.values[(((i * s.n_layers + l) * s.n_heads + h) * t + q) * t + k] as f64
}

pub fn cls_patch(d: &AttentionDump, i: usize, l: usize, h: usize) -> Vec<f64> {
    let t = d.shape.n_tokens;
    normalize(&(1..t).map(|k| entry(d, i, l, h, 0, k)).collect::<Vec<_>>())
}

pub fn p2p_entropy(d: &AttentionDump, i: usize, l: usize) -> f64 {
    let s = d.shape;
    let t = s.n_tokens;
    let mut acc = 0.0;
    for h in 0..s.n_heads {
        let mut rows = 0.0;
        for q in 1..t {
            let row: Vec<f64> = (1..t).map(|k| entry(d, i, l, h, q, k)).collect();
            rows += entropy_bits(&normalize(&row));
        }
        acc += rows / (t - 1) as f64;
    }
    acc / s.n_heads as f64
}

/// `[entropy, erf95, gini, head_diversity, p2p_entropy]` per layer, heads
/// averaged, then images.
pub fn profile(d: &AttentionDump) -> Vec<[f64; 5]> {
    let s = d.shape;
    let mut out = Vec::new();
    for l in 0..s.n_layers {
        let mut layer = [0.0; 5];
        for i in 0..s.n_images {
            let heads: Vec<Vec<f64>> = (0..s.n_heads).map(|h| cls_patch(d, i, l, h)).collect();
            let hn = s.n_heads as f64;
            layer[0] += heads.iter().map(|p| entropy_bits(p)).sum::<f64>() / hn;
            layer[1] += heads.iter().map(|p| erf(p, 0.95)).sum::<f64>() / hn;
            layer[2] += heads.iter().map(|p| gini(p)).sum::<f64>() / hn;
            layer[3] += head_diversity(&heads);
            layer[4] += p2p_entropy(d, i, l);
        }
        for v in &mut layer {
            *v /= s.n_images as f64;
        }
        out.push(layer);
    }
    out
}

// ---- rollout ----

pub fn layer_matrix(d: &AttentionDump, i: usize, l: usize) -> Vec<Vec<f64>> {
    let s = d.shape;
    let t = s.n_tokens;
    let mut m = vec![vec![0.0; t]; t];
    for q in 0..t {
        for k in 0..t {
            let mut a = 0.0;
            for h in 0..s.n_heads {
                a += entry(d, i, l, h, q, k);
            }
            m[q][k] = 0.5 * a / s.n_heads as f64 + if q == k { 0.5 } else { 0.0 };
        }
        let rs: f64 = m[q].iter().sum();
        for v in &mut m[q] {
            *v /= rs;
        }
    }
    m
}

/// `M_L ... M_1` for one image.
pub fn rollout(d: &AttentionDump, i: usize) -> Vec<Vec<f64>> {
    let mut acc = layer_matrix(d, i, 0);
    for l in 1..d.shape.n_layers {
        acc = matmul(&layer_matrix(d, i, l), &acc);
    }
    acc
}

// ---- CKA ----

pub fn to_columns_centered(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len() as f64;
    let d = x[0].len();
    let means: Vec<f64> = (0..d)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    x.iter()
        .map(|r| r.iter().zip(&means).map(|(v, m)| v - m).collect())
        .collect()
}

/// HSIC form: tr(Kc Lc) / sqrt(tr(Kc^2) tr(Lc^2)) with Kc = H X X^T H.
pub fn cka_gram(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let n = x.len();
    let gram = |m: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let mut g = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                g[i][j] = m[i].iter().zip(&m[j]).map(|(a, b)| a * b).sum();
            }
        }
        // double centering H G H
        let row: Vec<f64> = g.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
        let all = row.iter().sum::<f64>() / n as f64;
        for i in 0..n {
            for j in 0..n {
                g[i][j] = g[i][j] - row[i] - row[j] + all;
            }
        }
        g
    };
    let k = gram(x);
    let l = gram(y);
    let tr = |a: &[Vec<f64>], b: &[Vec<f64>]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += a[i][j] * b[j][i];
            }
        }
        s
    };
    tr(&k, &l) / (tr(&k, &k) * tr(&l, &l)).sqrt()
}
