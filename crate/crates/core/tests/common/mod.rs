//! Independent reference implementations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::VecDeque;

use mitoseg::network::{Ss2dWeights, SsmParams, SsmProjection, Tensor};
use mitoseg::postproc::Connectivity;
use mitoseg::BinaryMask;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Textbook recurrence, one channel at a time with an explicit state vector.
#[allow(clippy::too_many_arguments)]
pub fn naive_scan(
    x: &[f64],
    len: usize,
    channels: usize,
    state: usize,
    delta: &[f64],
    a: &[f64],
    b: &[f64],
    c: &[f64],
    d: &[f64],
) -> Vec<f64> {
    let mut y = vec![0.0; len * channels];
    for ch in 0..channels {
        let mut h = vec![0.0; state];
        for t in 0..len {
            let dt = delta[t * channels + ch];
            let xt = x[t * channels + ch];
            for n in 0..state {
                let a_bar = (dt * a[ch * state + n]).exp();
                let b_bar = dt * b[t * state + n];
                h[n] = a_bar * h[n] + b_bar * xt;
            }
            let mut out = d[ch] * xt;
            for n in 0..state {
                out += c[t * state + n] * h[n];
            }
            y[t * channels + ch] = out;
        }
    }
    y
}

fn softplus(v: f64) -> f64 {
    (1.0 + v.exp()).ln()
}

/// Image coordinates visited at step `t` of path `k`.
pub fn path_coord(h: usize, w: usize, k: usize, t: usize) -> (usize, usize) {
    let l = h * w;
    match k {
        0 => (t / w, t % w),
        1 => ((l - 1 - t) / w, (l - 1 - t) % w),
        2 => (t % h, t / h),
        3 => ((l - 1 - t) % h, (l - 1 - t) / h),
        _ => unreachable!(),
    }
}

/// One path of the cross-scan through the naive recurrence, returned in
/// image layout.
pub fn oracle_path(x: &Tensor, b: usize, k: usize, p: &SsmProjection) -> Vec<f64> {
    let (h, w, c) = (x.height(), x.width(), x.channels());
    let (r, n) = (p.rank, p.state);
    let l = h * w;
    let mut seq = vec![0.0; l * c];
    let mut delta = vec![0.0; l * c];
    let mut bm = vec![0.0; l * n];
    let mut cm = vec![0.0; l * n];
    for t in 0..l {
        let (yy, xx) = path_coord(h, w, k, t);
        for ch in 0..c {
            seq[t * c + ch] = x.get(b, yy, xx, ch);
        }
        let proj: Vec<f64> = (0..r + 2 * n)
            .map(|j| {
                (0..c)
                    .map(|ch| p.x_proj[j * c + ch] * seq[t * c + ch])
                    .sum()
            })
            .collect();
        for ch in 0..c {
            let mut z = p.dt_bias[ch];
            for q in 0..r {
                z += p.dt_proj[ch * r + q] * proj[q];
            }
            delta[t * c + ch] = softplus(z);
        }
        bm[t * n..(t + 1) * n].copy_from_slice(&proj[r..r + n]);
        cm[t * n..(t + 1) * n].copy_from_slice(&proj[r + n..r + 2 * n]);
    }
    let a: Vec<f64> = p.a_log.iter().map(|v| -v.exp()).collect();
    let y = naive_scan(&seq, l, c, n, &delta, &a, &bm, &cm, &p.d);
    let mut img = vec![0.0; l * c];
    for t in 0..l {
        let (yy, xx) = path_coord(h, w, k, t);
        for ch in 0..c {
            img[(yy * w + xx) * c + ch] = y[t * c + ch];
        }
    }
    img
}

/// Sum of the four oracle paths for every batch item.
pub fn oracle_ss2d(x: &Tensor, weights: &Ss2dWeights) -> Vec<f64> {
    let per_item = x.height() * x.width() * x.channels();
    let mut out = vec![0.0; x.data().len()];
    for b in 0..x.batch() {
        for k in 0..4 {
            let img = oracle_path(x, b, k, &weights.paths[k]);
            for (o, v) in out[b * per_item..(b + 1) * per_item].iter_mut().zip(&img) {
                *o += v;
            }
        }
    }
    out
}

pub fn random_projection(
    rng: &mut ChaCha8Rng,
    inner: usize,
    state: usize,
    rank: usize,
) -> SsmProjection {
    let mut v = |n: usize, lo: f64, hi: f64| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(lo..hi)).collect()
    };
    SsmProjection {
        inner,
        state,
        rank,
        x_proj: v((rank + 2 * state) * inner, -0.5, 0.5),
        dt_proj: v(inner * rank, -0.5, 0.5),
        dt_bias: v(inner, -2.0, 0.0),
        a_log: v(inner * state, -1.0, 1.0),
        d: v(inner, -1.0, 1.0),
    }
}

/// Breadth-first flood fill; seeds are taken in raster order so labels are
/// numbered like the labeler under test.
pub fn flood_fill_labels(mask: &BinaryMask, conn: Connectivity) -> Vec<u32> {
    let (h, w) = (mask.height(), mask.width());
    let mut labels = vec![0u32; h * w];
    let mut next = 0;
    let offsets: &[(i64, i64)] = match conn {
        Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
        Connectivity::Eight => &[
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ],
    };
    for start in 0..h * w {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for &(dx, dy) in offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.bits()[j] && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            }
        }
    }
    labels
}

/// Dilation straight from the definition: a pixel is set when any set pixel
/// lies within Euclidean distance `r`.
pub fn brute_dilate(mask: &BinaryMask, r: usize) -> Vec<bool> {
    let (h, w) = (mask.height() as i64, mask.width() as i64);
    let r = r as i64;
    let mut out = vec![false; (h * w) as usize];
    for y in 0..h {
        for x in 0..w {
            'search: for sy in (y - r).max(0)..=(y + r).min(h - 1) {
                for sx in (x - r).max(0)..=(x + r).min(w - 1) {
                    if (sx - x).pow(2) + (sy - y).pow(2) <= r * r
                        && mask.bits()[(sy * w + sx) as usize]
                    {
                        out[(y * w + x) as usize] = true;
                        break 'search;
                    }
                }
            }
        }
    }
    out
}

/// Maximum number of disjoint detection/annotation pairs within `radius`,
/// by exhaustive search.
pub fn exhaustive_max_matching(dets: &[(f64, f64)], gts: &[(f64, f64)], radius: f64) -> usize {
    fn go(
        i: usize,
        dets: &[(f64, f64)],
        gts: &[(f64, f64)],
        used: &mut Vec<bool>,
        radius: f64,
    ) -> usize {
        if i == dets.len() {
            return 0;
        }
        let mut best = go(i + 1, dets, gts, used, radius);
        for j in 0..gts.len() {
            if !used[j] && (dets[i].0 - gts[j].0).hypot(dets[i].1 - gts[j].1) <= radius {
                used[j] = true;
                best = best.max(1 + go(i + 1, dets, gts, used, radius));
                used[j] = false;
            }
        }
        best
    }
    go(0, dets, gts, &mut vec![false; gts.len()], radius)
}

/// Mean binary cross-entropy with the same clamp as the focal loss.
pub fn bce(pred: &[f64], target: &[bool]) -> f64 {
    let eps = 1e-7;
    let n = pred.len() as f64;
    pred.iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = p.clamp(eps, 1.0 - eps);
            if t {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / n
}

/// `|a - b| / max(|b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// Largest elementwise error relative to the reference's largest magnitude.
pub fn normwise_rel_err(got: &[f64], want: &[f64]) -> f64 {
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    got.iter()
        .zip(want)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / scale
}

/// Random scan input with stable decay (`a < 0`) and positive step sizes.
pub fn random_params(
    rng: &mut ChaCha8Rng,
    len: usize,
    channels: usize,
    state: usize,
) -> (Vec<f64>, SsmParams) {
    let mut v = |n: usize, lo: f64, hi: f64| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(lo..hi)).collect()
    };
    let x = v(len * channels, -1.0, 1.0);
    let p = SsmParams {
        len,
        channels,
        state,
        delta: v(len * channels, 0.01, 1.0),
        a: v(channels * state, -2.0, -0.01),
        b: v(len * state, -1.0, 1.0),
        c: v(len * state, -1.0, 1.0),
        d: v(channels, -1.0, 1.0),
    };
    (x, p)
}
