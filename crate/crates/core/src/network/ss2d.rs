//! Cross-scan over a 2D grid: four 1-D selective scans along different
//! traversal orders, scattered back to image layout and summed.

use rayon::prelude::*;

use super::layers::softplus;
use super::scan::{selective_scan_1d, selective_scan_chunked, SsmParams};
use super::{Tensor, WeightStore};
use crate::error::{Error, Result};

/// Sequences longer than this use the chunked scan.
const CHUNK_THRESHOLD: usize = 1024;
const CHUNK_LEN: usize = 256;

/// Flat indices (`y * w + x`) in the order path `k` visits them:
/// 0 row-major, 1 row-major reversed, 2 column-major, 3 column-major reversed.
pub fn scan_order(h: usize, w: usize, k: usize) -> Vec<usize> {
    let rows: Vec<usize> = (0..h * w).collect();
    let cols: Vec<usize> = (0..w)
        .flat_map(|x| (0..h).map(move |y| y * w + x))
        .collect();
    match k {
        0 => rows,
        1 => rows.into_iter().rev().collect(),
        2 => cols,
        3 => cols.into_iter().rev().collect(),
        _ => panic!("scan path {k} out of range 0..4"),
    }
}

/// Per-path projections producing `delta`, `B` and `C` from the sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmProjection {
    pub inner: usize,
    pub state: usize,
    pub rank: usize,
    /// `[rank + 2 * state, inner]`: rows `0..rank` feed `dt_proj`, then B, then C.
    pub x_proj: Vec<f64>,
    /// `[inner, rank]`
    pub dt_proj: Vec<f64>,
    pub dt_bias: Vec<f64>,
    /// `[inner, state]`; the transition is `A = -exp(a_log)`.
    pub a_log: Vec<f64>,
    pub d: Vec<f64>,
}

impl SsmProjection {
    pub fn from_store(
        store: &WeightStore,
        prefix: &str,
        inner: usize,
        rank: usize,
        state: usize,
    ) -> Result<Self> {
        Ok(Self {
            inner,
            state,
            rank,
            x_proj: store.values(
                &format!("{prefix}.x_proj.weight"),
                &[rank + 2 * state, inner],
            )?,
            dt_proj: store.values(&format!("{prefix}.dt_proj.weight"), &[inner, rank])?,
            dt_bias: store.values(&format!("{prefix}.dt_proj.bias"), &[inner])?,
            a_log: store.values(&format!("{prefix}.a_log"), &[inner, state])?,
            d: store.values(&format!("{prefix}.d"), &[inner])?,
        })
    }

    /// Scan inputs for a sequence `seq` of `len` rows of `inner` channels.
    pub fn params(&self, seq: &[f64], len: usize) -> SsmParams {
        let (di, n, r) = (self.inner, self.state, self.rank);
        let mut delta = vec![0.0; len * di];
        let mut b = vec![0.0; len * n];
        let mut c = vec![0.0; len * n];
        let mut low = vec![0.0; r];
        for t in 0..len {
            let xt = &seq[t * di..(t + 1) * di];
            let row = |j: usize| -> f64 {
                self.x_proj[j * di..(j + 1) * di]
                    .iter()
                    .zip(xt)
                    .map(|(w, v)| w * v)
                    .sum()
            };
            for (j, l) in low.iter_mut().enumerate() {
                *l = row(j);
            }
            for j in 0..n {
                b[t * n + j] = row(r + j);
                c[t * n + j] = row(r + n + j);
            }
            for ch in 0..di {
                let wrow = &self.dt_proj[ch * r..(ch + 1) * r];
                let raw: f64 =
                    self.dt_bias[ch] + wrow.iter().zip(&low).map(|(w, v)| w * v).sum::<f64>();
                delta[t * di + ch] = softplus(raw);
            }
        }
        SsmParams {
            len,
            channels: di,
            state: n,
            delta,
            a: self.a_log.iter().map(|v| -v.exp()).collect(),
            b,
            c,
            d: self.d.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ss2dWeights {
    pub paths: [SsmProjection; 4],
}

impl Ss2dWeights {
    pub fn from_store(
        store: &WeightStore,
        prefix: &str,
        inner: usize,
        rank: usize,
        state: usize,
    ) -> Result<Self> {
        let p = |k: usize| {
            SsmProjection::from_store(store, &format!("{prefix}.{k}"), inner, rank, state)
        };
        Ok(Self {
            paths: [p(0)?, p(1)?, p(2)?, p(3)?],
        })
    }

    pub fn inner(&self) -> usize {
        self.paths[0].inner
    }
}

/// Runs all four paths on every batch item and sums them in path order.
pub fn ss2d(x: &Tensor, weights: &Ss2dWeights) -> Result<Tensor> {
    let [n, h, w, c] = x.shape();
    if c != weights.inner() {
        return Err(Error::DimensionMismatch(format!(
            "ss2d weights expect {} channels, input has {c}",
            weights.inner()
        )));
    }
    let l = h * w;
    let jobs: Vec<(usize, usize)> = (0..n).flat_map(|b| (0..4).map(move |k| (b, k))).collect();
    let outputs: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(b, k)| -> Result<Vec<f64>> {
            let order = scan_order(h, w, k);
            let item = &x.data()[b * l * c..(b + 1) * l * c];
            let mut seq = Vec::with_capacity(l * c);
            for &p in &order {
                seq.extend_from_slice(&item[p * c..(p + 1) * c]);
            }
            let params = weights.paths[k].params(&seq, l);
            let y = if l > CHUNK_THRESHOLD {
                selective_scan_chunked(&seq, &params, CHUNK_LEN)?
            } else {
                selective_scan_1d(&seq, &params)?
            };
            let mut img = vec![0.0; l * c];
            for (t, &p) in order.iter().enumerate() {
                img[p * c..(p + 1) * c].copy_from_slice(&y[t * c..(t + 1) * c]);
            }
            Ok(img)
        })
        .collect::<Result<_>>()?;
    let mut out = Tensor::zeros([n, h, w, c]);
    for (&(b, _), img) in jobs.iter().zip(&outputs) {
        let dst = &mut out.data_mut()[b * l * c..(b + 1) * l * c];
        for (o, v) in dst.iter_mut().zip(img) {
            *o += v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn projection(inner: usize, state: usize, rank: usize, salt: f64) -> SsmProjection {
        let wave = |i: usize| ((i as f64 * 0.37 + salt).sin()) * 0.4;
        SsmProjection {
            inner,
            state,
            rank,
            x_proj: (0..(rank + 2 * state) * inner).map(wave).collect(),
            dt_proj: (0..inner * rank).map(|i| wave(i + 100)).collect(),
            dt_bias: (0..inner).map(|i| wave(i + 200) - 1.0).collect(),
            a_log: (0..inner * state).map(|i| wave(i + 300)).collect(),
            d: (0..inner).map(|i| wave(i + 400)).collect(),
        }
    }

    #[test]
    fn orders_are_permutations() {
        for k in 0..4 {
            let mut o = scan_order(3, 5, k);
            o.sort_unstable();
            assert_eq!(o, (0..15).collect::<Vec<_>>());
        }
        assert_eq!(scan_order(2, 3, 2), vec![0, 3, 1, 4, 2, 5]);
        assert_eq!(scan_order(2, 3, 1), vec![5, 4, 3, 2, 1, 0]);
    }

    #[test]
    fn single_position_is_four_identical_steps() {
        let p = projection(3, 2, 1, 0.3);
        let weights = Ss2dWeights {
            paths: [p.clone(), p.clone(), p.clone(), p.clone()],
        };
        let x = Tensor::new([1, 1, 1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        let y = ss2d(&x, &weights).unwrap();
        let one = selective_scan_1d(x.data(), &p.params(x.data(), 1)).unwrap();
        for (a, b) in y.data().iter().zip(&one) {
            assert!((a - 4.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn half_turn_symmetry_for_constant_input() {
        // position-independent parameters: zero x_proj rows for B, C and dt
        let mut p = projection(2, 2, 1, 1.1);
        p.x_proj.iter_mut().for_each(|v| *v = 0.0);
        let weights = Ss2dWeights {
            paths: [p.clone(), p.clone(), p.clone(), p.clone()],
        };
        let (h, w) = (3, 4);
        let x = Tensor::new([1, h, w, 2], [0.7, -0.3].repeat(h * w)).unwrap();
        let y = ss2d(&x, &weights).unwrap();
        for yy in 0..h {
            for xx in 0..w {
                for c in 0..2 {
                    let a = y.get(0, yy, xx, c);
                    let b = y.get(0, h - 1 - yy, w - 1 - xx, c);
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn batch_items_independent() {
        let weights = Ss2dWeights {
            paths: [0.1, 0.2, 0.3, 0.4].map(|s| projection(2, 3, 1, s)),
        };
        let a: Vec<f64> = (0..2 * 3 * 2).map(|i| (i as f64).cos()).collect();
        let b: Vec<f64> = (0..2 * 3 * 2).map(|i| (i as f64 * 0.5).sin()).collect();
        let ya = ss2d(&Tensor::new([1, 2, 3, 2], a.clone()).unwrap(), &weights).unwrap();
        let yb = ss2d(&Tensor::new([1, 2, 3, 2], b.clone()).unwrap(), &weights).unwrap();
        let both = ss2d(
            &Tensor::new([2, 2, 3, 2], [a, b].concat()).unwrap(),
            &weights,
        )
        .unwrap();
        assert_eq!(both.data(), [ya.data(), yb.data()].concat().as_slice());
    }

    #[test]
    fn channel_mismatch() {
        let weights = Ss2dWeights {
            paths: [0.0; 4].map(|s| projection(2, 2, 1, s)),
        };
        assert!(ss2d(&Tensor::zeros([1, 2, 2, 3]), &weights).is_err());
    }
}
