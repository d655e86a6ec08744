//! Brute-force reference computations used by the test suites.
//!
//! Nothing here calls into the library's numeric code: matrices are
//! `Vec<Vec<f64>>`, products are triple loops, softmax is the textbook
//! formula. Shared with the acceptance suite of the `kid3` crate.

#![allow(dead_code)]

pub type Dense = Vec<Vec<f64>>;

pub fn zeros(rows: usize, cols: usize) -> Dense {
    vec![vec![0.0; cols]; rows]
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b.first().map_or(0, Vec::len));
    let mut out = zeros(n, m);
    for i in 0..n {
        assert_eq!(a[i].len(), k);
        for j in 0..m {
            let mut acc = 0.0;
            for t in 0..k {
                acc += a[i][t] * b[t][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

/// `D^{-1/2} (A + I) D^{-1/2}` with explicit diagonal matrices.
pub fn renormalized_adjacency(n: usize, edges: &[(usize, usize)]) -> Dense {
    let mut a = zeros(n, n);
    for &(s, d) in edges {
        if s != d {
            a[s][d] = 1.0;
            a[d][s] = 1.0;
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let mut d_inv_sqrt = zeros(n, n);
    for i in 0..n {
        let degree: f64 = a[i].iter().sum();
        d_inv_sqrt[i][i] = 1.0 / degree.sqrt();
    }
    matmul(&matmul(&d_inv_sqrt, &a), &d_inv_sqrt)
}

/// `tanh(Â X W)` with `X[i] = embedding[node_ids[i]]`.
pub fn gcn(n: usize, edges: &[(usize, usize)], node_ids: &[usize], embedding: &Dense, weight: &Dense) -> Dense {
    let x: Dense = node_ids.iter().map(|&id| embedding[id].clone()).collect();
    let mut h = matmul(&matmul(&renormalized_adjacency(n, edges), &x), weight);
    for row in &mut h {
        for v in row.iter_mut() {
            *v = v.tanh();
        }
    }
    h
}

pub fn column_mean(m: &Dense) -> Vec<f64> {
    let cols = m[0].len();
    (0..cols).map(|j| m.iter().map(|r| r[j]).sum::<f64>() / m.len() as f64).collect()
}

/// Logits of an MLP given as `(weight[in][out], bias[out])` layers with
/// tanh between layers.
pub fn mlp_logits(x: &[f64], layers: &[(Dense, Vec<f64>)], tanh_hidden: bool) -> Vec<f64> {
    let mut h = x.to_vec();
    for (l, (w, b)) in layers.iter().enumerate() {
        let mut z = b.clone();
        for (i, &xi) in h.iter().enumerate() {
            for (j, zj) in z.iter_mut().enumerate() {
                *zj += xi * w[i][j];
            }
        }
        if l + 1 < layers.len() && tanh_hidden {
            z.iter_mut().for_each(|v| *v = v.tanh());
        }
        h = z;
    }
    h
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = z.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// `-ln softmax(z)[target]`, `target` 0-based.
pub fn cross_entropy(z: &[f64], target: usize) -> f64 {
    -softmax(z)[target].ln()
}

/// Accuracy, per-class F1 and macro F1 by scanning every (truth, prediction)
/// pair once per class. Labels are 0-based.
pub fn classification(truth: &[usize], pred: &[usize], classes: usize) -> (f64, Vec<f64>, f64, Vec<u64>) {
    let n = truth.len();
    let correct = truth.iter().zip(pred).filter(|(t, p)| t == p).count();
    let mut f1s = Vec::new();
    let mut supports = Vec::new();
    for c in 0..classes {
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for i in 0..n {
            match (truth[i] == c, pred[i] == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        f1s.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
        supports.push(tp + fn_);
    }
    let macro_f1 = f1s.iter().sum::<f64>() / classes as f64;
    (correct as f64 / n as f64, f1s, macro_f1, supports)
}

/// Central difference of `f` at coordinate `i` of `x`.
pub fn central_difference(x: &mut [f64], i: usize, step: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + step;
    let plus = f(x);
    x[i] = orig - step;
    let minus = f(x);
    x[i] = orig;
    (plus - minus) / (2.0 * step)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
