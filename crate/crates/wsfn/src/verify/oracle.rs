//! Entry-by-entry reference for weight-space self-attention.
//!
//! Every output entry is computed from its own attention sum with scalar
//! loops over plain `f64` slices. Nothing here shares code with the
//! vectorized layer beyond the input and output containers.

use wsfn_core::layers::Term3Mode;
use wsfn_core::{Tensor, WeightSpaceFeature};

/// Projected feature `θ u` for every entry, stored as nested vectors:
/// `w[i][j][k][ch]` and `b[i][j][ch]`.
struct Projected {
    w: Vec<Vec<Vec<Vec<f64>>>>,
    b: Vec<Vec<Vec<f64>>>,
}

fn project(u: &WeightSpaceFeature, theta: &Tensor) -> Projected {
    let c = u.spec.channels;
    let th = theta.data();
    let apply = |x: &[f64]| -> Vec<f64> {
        (0..c)
            .map(|o| (0..c).map(|i| th[o * c + i] * x[i]).sum())
            .collect()
    };
    let mut w = Vec::new();
    let mut b = Vec::new();
    for l in 0..u.num_layers() {
        let [n_out, n_in, _] = u.spec.weight_shape(l);
        let wd = u.weights[l].data();
        let bd = u.biases[l].data();
        w.push(
            (0..n_out)
                .map(|j| {
                    (0..n_in)
                        .map(|k| apply(&wd[(j * n_in + k) * c..(j * n_in + k + 1) * c]))
                        .collect()
                })
                .collect(),
        );
        b.push((0..n_out).map(|j| apply(&bd[j * c..(j + 1) * c])).collect());
    }
    Projected { w, b }
}

/// `Σ_p softmax_p(s · logit_p) · value_p` over scalar logits and values.
fn softmax_sum(logits: &[f64], values: &[f64], s: f64) -> f64 {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(s * x));
    let e: Vec<f64> = logits.iter().map(|&x| (s * x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().zip(values).map(|(a, v)| a * v).sum::<f64>() / z
}

/// An array-valued key/value pair: key entries `key[a][ch]`, value entries
/// `val[a][ch]`, where `a` runs over one neuron layer.
struct Pair {
    key: Vec<Vec<f64>>,
    val: Vec<Vec<f64>>,
}

fn dot(q: &[Vec<f64>], k: &[Vec<f64>], chans: &[usize]) -> f64 {
    q.iter()
        .zip(k)
        .map(|(x, y)| chans.iter().map(|&ch| x[ch] * y[ch]).sum::<f64>())
        .sum()
}

/// Attention of array query `q` over `pairs`, read out at position `a` and
/// channel `ch`.
fn attend(
    q: &[Vec<f64>],
    pairs: &[Pair],
    chans: &[usize],
    a: usize,
    ch: usize,
    scaled: bool,
) -> f64 {
    let len = q.len() * chans.len();
    let s = if scaled {
        1.0 / (len as f64).sqrt()
    } else {
        1.0
    };
    let logits: Vec<f64> = pairs.iter().map(|p| dot(q, &p.key, chans)).collect();
    let values: Vec<f64> = pairs.iter().map(|p| p.val[a][ch]).collect();
    softmax_sum(&logits, &values, s)
}

fn row(w: &[Vec<Vec<f64>>], j: usize) -> Vec<Vec<f64>> {
    w[j].clone()
}

fn col(w: &[Vec<Vec<f64>>], k: usize) -> Vec<Vec<f64>> {
    w.iter().map(|r| r[k].clone()).collect()
}

/// Self-attention output for `θ = (θ_Q, θ_K, θ_V)`, each `[c, c]`.
pub fn self_attention(
    u: &WeightSpaceFeature,
    theta: [&Tensor; 3],
    heads: usize,
    term3: Term3Mode,
    scaled: bool,
) -> WeightSpaceFeature {
    let c = u.spec.channels;
    let l = u.num_layers();
    let widths = &u.spec.layer_widths;
    let q = project(u, theta[0]);
    let k = project(u, theta[1]);
    let v = project(u, theta[2]);
    let dh = c / heads;
    let head_of = |ch: usize| -> Vec<usize> { (ch / dh * dh..(ch / dh + 1) * dh).collect() };

    let mut out = WeightSpaceFeature::zeros(&u.spec);
    for i in 0..l {
        let (n_out, n_in) = (widths[i + 1], widths[i]);
        // neuron layer i: columns of layer i-1, rows of layer i, bias i-1
        let mut kv1 = Vec::new();
        if i > 0 {
            for p in 0..widths[i - 1] {
                kv1.push(Pair {
                    key: col(&k.w[i - 1], p),
                    val: col(&v.w[i - 1], p),
                });
            }
        }
        for r in 0..n_out {
            kv1.push(Pair {
                key: row(&k.w[i], r),
                val: row(&v.w[i], r),
            });
        }
        if i > 0 {
            kv1.push(Pair {
                key: k.b[i - 1].clone(),
                val: v.b[i - 1].clone(),
            });
        }
        // neuron layer i+1: columns of layer i, rows of layer i+1, bias i
        let mut kv2 = Vec::new();
        for p in 0..n_in {
            kv2.push(Pair {
                key: col(&k.w[i], p),
                val: col(&v.w[i], p),
            });
        }
        if i + 1 < l {
            for r in 0..widths[i + 2] {
                kv2.push(Pair {
                    key: row(&k.w[i + 1], r),
                    val: row(&v.w[i + 1], r),
                });
            }
        }
        kv2.push(Pair {
            key: k.b[i].clone(),
            val: v.b[i].clone(),
        });

        for j in 0..n_out {
            for kk in 0..n_in {
                for ch in 0..c {
                    let chans = head_of(ch);
                    let t1 = attend(&row(&q.w[i], j), &kv1, &chans, kk, ch, scaled);
                    let t2 = attend(&col(&q.w[i], kk), &kv2, &chans, j, ch, scaled);
                    out.weights[i].set(&[j, kk, ch], t1 + t2);
                }
            }
            for ch in 0..c {
                let chans = head_of(ch);
                out.biases[i].set(&[j, ch], attend(&q.b[i], &kv2, &chans, j, ch, scaled));
            }
        }
    }

    match term3 {
        Term3Mode::Exact => exact_term(&q, &k, &v, &mut out, dh, scaled),
        Term3Mode::RowColSum => rowcol_term(u, theta, &mut out, dh, scaled),
    }
    out
}

fn exact_term(
    q: &Projected,
    k: &Projected,
    v: &Projected,
    out: &mut WeightSpaceFeature,
    dh: usize,
    scaled: bool,
) {
    let tokens = |p: &Projected| -> Vec<Vec<f64>> {
        let mut t = Vec::new();
        for layer in &p.w {
            for r in layer {
                t.extend(r.iter().cloned());
            }
        }
        for layer in &p.b {
            t.extend(layer.iter().cloned());
        }
        t
    };
    let (tq, tk, tv) = (tokens(q), tokens(k), tokens(v));
    let s = if scaled {
        1.0 / (dh as f64).sqrt()
    } else {
        1.0
    };
    let c = tq[0].len();
    let mut result = vec![vec![0.0; c]; tq.len()];
    for (a, qa) in tq.iter().enumerate() {
        for ch in 0..c {
            let g = ch / dh;
            let logits: Vec<f64> = tk
                .iter()
                .map(|kb| (g * dh..(g + 1) * dh).map(|x| qa[x] * kb[x]).sum())
                .collect();
            let values: Vec<f64> = tv.iter().map(|vb| vb[ch]).collect();
            result[a][ch] = softmax_sum(&logits, &values, s);
        }
    }
    let mut t = 0;
    for i in 0..out.num_layers() {
        let [n_out, n_in, _] = out.spec.weight_shape(i);
        for j in 0..n_out {
            for kk in 0..n_in {
                for ch in 0..c {
                    let x = out.weights[i].get(&[j, kk, ch]);
                    out.weights[i].set(&[j, kk, ch], x + result[t][ch]);
                }
                t += 1;
            }
        }
    }
    for i in 0..out.num_layers() {
        for j in 0..out.spec.bias_shape(i)[0] {
            for ch in 0..c {
                let x = out.biases[i].get(&[j, ch]);
                out.biases[i].set(&[j, ch], x + result[t][ch]);
            }
            t += 1;
        }
    }
}

fn rowcol_term(
    u: &WeightSpaceFeature,
    theta: [&Tensor; 3],
    out: &mut WeightSpaceFeature,
    dh: usize,
    scaled: bool,
) {
    let c = u.spec.channels;
    let l = u.num_layers();
    let mut sums = Vec::new();
    for w in &u.weights {
        let mut s = vec![0.0; c];
        for (x, v) in w.data().iter().enumerate() {
            s[x % c] += v;
        }
        sums.push(s);
    }
    for b in &u.biases {
        let mut s = vec![0.0; c];
        for (x, v) in b.data().iter().enumerate() {
            s[x % c] += v;
        }
        sums.push(s);
    }
    let proj = |th: &Tensor, x: &[f64]| -> Vec<f64> {
        (0..c)
            .map(|o| (0..c).map(|i| th.data()[o * c + i] * x[i]).sum())
            .collect()
    };
    let tq: Vec<Vec<f64>> = sums.iter().map(|s| proj(theta[0], s)).collect();
    let tk: Vec<Vec<f64>> = sums.iter().map(|s| proj(theta[1], s)).collect();
    let tv: Vec<Vec<f64>> = sums.iter().map(|s| proj(theta[2], s)).collect();
    let s = if scaled {
        1.0 / (dh as f64).sqrt()
    } else {
        1.0
    };
    for t in 0..2 * l {
        for ch in 0..c {
            let g = ch / dh;
            let logits: Vec<f64> = tk
                .iter()
                .map(|kb| (g * dh..(g + 1) * dh).map(|x| tq[t][x] * kb[x]).sum())
                .collect();
            let values: Vec<f64> = tv.iter().map(|vb| vb[ch]).collect();
            let y = softmax_sum(&logits, &values, s);
            if t < l {
                let [n_out, n_in, _] = u.spec.weight_shape(t);
                for j in 0..n_out {
                    for kk in 0..n_in {
                        let x = out.weights[t].get(&[j, kk, ch]);
                        out.weights[t].set(&[j, kk, ch], x + y);
                    }
                }
            } else {
                for j in 0..u.spec.bias_shape(t - l)[0] {
                    let x = out.biases[t - l].get(&[j, ch]);
                    out.biases[t - l].set(&[j, ch], x + y);
                }
            }
        }
    }
}
