//! Selective scan: the input-dependent linear recurrence at the heart of a
//! state-space mixer.
//!
//! For every channel `d` and state `n`:
//!
//! ```text
//! h[t] = exp(delta[t, d] * a[d, n]) * h[t-1] + delta[t, d] * b[t, n] * x[t, d]
//! y[t, d] = sum_n c[t, n] * h[t, n] + d_skip[d] * x[t, d]
//! ```

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Discretization inputs for one sequence. Row-major layouts:
/// `delta` is `len x channels`, `a` is `channels x state`, `b` and `c` are
/// `len x state`, `d` is `channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmParams {
    pub len: usize,
    pub channels: usize,
    pub state: usize,
    pub delta: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

impl SsmParams {
    pub fn validate(&self, x_len: usize) -> Result<()> {
        let (l, dch, n) = (self.len, self.channels, self.state);
        let checks = [
            ("x", x_len, l * dch),
            ("delta", self.delta.len(), l * dch),
            ("a", self.a.len(), dch * n),
            ("b", self.b.len(), l * n),
            ("c", self.c.len(), l * n),
            ("d", self.d.len(), dch),
        ];
        if l == 0 || dch == 0 || n == 0 {
            return Err(Error::DimensionMismatch(format!(
                "scan needs len, channels, state >= 1, got {l}, {dch}, {n}"
            )));
        }
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::DimensionMismatch(format!(
                    "scan `{name}` has {got} values, expected {want}"
                )));
            }
        }
        Ok(())
    }
}

/// Sequential scan from a zero state.
pub fn selective_scan_1d(x: &[f64], params: &SsmParams) -> Result<Vec<f64>> {
    params.validate(x.len())?;
    let mut y = vec![0.0; x.len()];
    let mut h = vec![0.0; params.channels * params.state];
    scan_range(x, params, 0, params.len, &mut h, &mut y);
    Ok(y)
}

/// Runs steps `start..end`, updating `h` in place and writing `y` for those
/// steps (`y` is indexed relative to `start`).
fn scan_range(x: &[f64], p: &SsmParams, start: usize, end: usize, h: &mut [f64], y: &mut [f64]) {
    let (dch, n) = (p.channels, p.state);
    for t in start..end {
        let b = &p.b[t * n..(t + 1) * n];
        let c = &p.c[t * n..(t + 1) * n];
        for d in 0..dch {
            let dt = p.delta[t * dch + d];
            let xv = x[t * dch + d];
            let a = &p.a[d * n..(d + 1) * n];
            let hs = &mut h[d * n..(d + 1) * n];
            let mut acc = 0.0;
            for k in 0..n {
                hs[k] = (dt * a[k]).exp() * hs[k] + dt * b[k] * xv;
                acc += c[k] * hs[k];
            }
            y[(t - start) * dch + d] = acc + p.d[d] * xv;
        }
    }
}

/// Chunked scan that processes chunks in parallel.
///
/// Each chunk is first scanned from a zero state. Incoming states are then
/// carried across chunk boundaries sequentially, and every chunk adds the
/// contribution of its incoming state, `c[t] . (exp(a * cumsum(delta)) h_in)`.
/// Results do not depend on the number of threads.
pub fn selective_scan_chunked(x: &[f64], params: &SsmParams, chunk_len: usize) -> Result<Vec<f64>> {
    params.validate(x.len())?;
    let chunk_len = chunk_len.max(1);
    let (l, dch, n) = (params.len, params.channels, params.state);
    if l <= chunk_len {
        return selective_scan_1d(x, params);
    }
    let bounds: Vec<(usize, usize)> = (0..l)
        .step_by(chunk_len)
        .map(|s| (s, (s + chunk_len).min(l)))
        .collect();

    // local scans from zero state
    let locals: Vec<(Vec<f64>, Vec<f64>)> = bounds
        .par_iter()
        .map(|&(s, e)| {
            let mut h = vec![0.0; dch * n];
            let mut y = vec![0.0; (e - s) * dch];
            scan_range(x, params, s, e, &mut h, &mut y);
            (y, h)
        })
        .collect();

    // carry states across chunks
    let mut incoming = vec![vec![0.0; dch * n]; bounds.len()];
    for k in 1..bounds.len() {
        let (s, e) = bounds[k - 1];
        let prev = incoming[k - 1].clone();
        let local_end = &locals[k - 1].1;
        let next = &mut incoming[k];
        for d in 0..dch {
            let total: f64 = (s..e).map(|t| params.delta[t * dch + d]).sum();
            for j in 0..n {
                let decay = (total * params.a[d * n + j]).exp();
                next[d * n + j] = decay * prev[d * n + j] + local_end[d * n + j];
            }
        }
    }

    // add the incoming-state contribution
    let fixed: Vec<Vec<f64>> = bounds
        .par_iter()
        .zip(locals.into_par_iter())
        .zip(incoming.par_iter())
        .map(|((&(s, e), (mut y, _)), h_in)| {
            if h_in.iter().all(|&v| v == 0.0) {
                return y;
            }
            let mut cum = vec![0.0; dch];
            for t in s..e {
                let c = &params.c[t * n..(t + 1) * n];
                for d in 0..dch {
                    cum[d] += params.delta[t * dch + d];
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += c[j] * (cum[d] * params.a[d * n + j]).exp() * h_in[d * n + j];
                    }
                    y[(t - s) * dch + d] += acc;
                }
            }
            y
        })
        .collect();
    Ok(fixed.concat())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(len: usize, channels: usize, state: usize) -> SsmParams {
        SsmParams {
            len,
            channels,
            state,
            delta: vec![0.5; len * channels],
            a: vec![-1.0; channels * state],
            b: vec![1.0; len * state],
            c: vec![1.0; len * state],
            d: vec![0.0; channels],
        }
    }

    #[test]
    fn single_step() {
        let mut p = params(1, 2, 3);
        p.b = vec![0.1, 0.2, 0.3];
        p.c = vec![1.0, -1.0, 2.0];
        p.d = vec![0.5, 0.25];
        let x = [2.0, -1.0];
        let y = selective_scan_1d(&x, &p).unwrap();
        // y = <C, delta * B * x> + D x
        let cb: f64 = 0.1 * 1.0 - 0.2 + 0.6;
        assert!((y[0] - (0.5 * cb * 2.0 + 1.0)).abs() < 1e-15);
        assert!((y[1] - (-(0.5 * cb) - 0.25)).abs() < 1e-15);
    }

    #[test]
    fn memoryless_when_decay_vanishes() {
        let mut p = params(6, 1, 1);
        p.delta = vec![1.0; 6];
        p.a = vec![-1e4];
        let x = [1.0, -2.0, 3.0, 0.5, 0.0, 4.0];
        let y = selective_scan_1d(&x, &p).unwrap();
        for (a, b) in y.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn chunked_matches_sequential() {
        let mut p = params(37, 3, 2);
        for (i, v) in p.delta.iter_mut().enumerate() {
            *v = 0.05 + (i % 7) as f64 * 0.03;
        }
        for (i, v) in p.b.iter_mut().enumerate() {
            *v = ((i * 13) % 5) as f64 * 0.2 - 0.4;
        }
        let x: Vec<f64> = (0..37 * 3)
            .map(|i| ((i * 7) % 11) as f64 / 11.0 - 0.5)
            .collect();
        let seq = selective_scan_1d(&x, &p).unwrap();
        for chunk in [1, 4, 10, 36, 37, 100] {
            let ch = selective_scan_chunked(&x, &p, chunk).unwrap();
            for (a, b) in ch.iter().zip(&seq) {
                assert!((a - b).abs() < 1e-12, "chunk {chunk}");
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let p = params(4, 2, 2);
        assert!(selective_scan_1d(&[0.0; 7], &p).is_err());
        let mut bad = params(4, 2, 2);
        bad.a.pop();
        assert!(selective_scan_1d(&[0.0; 8], &bad).is_err());
    }
}
