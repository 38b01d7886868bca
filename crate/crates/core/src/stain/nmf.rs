//! Sparse nonnegative factorization of tissue optical densities.
//!
//! Minimizes `||V - S C||_F^2 + lambda ||C||_1` subject to `S, C >= 0` and
//! unit-norm columns of `S` by alternating two steps:
//!
//! * C-step: every pixel solves its own two-variable nonnegative lasso. The
//!   problem is tiny, so the solver enumerates the four active sets and keeps
//!   the best feasible one, which is the exact minimizer.
//! * S-step: projected gradient on the dictionary, followed by column
//!   renormalization. A step is only accepted if the objective after the next
//!   C-step does not increase; otherwise the step size is halved.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{norm3, rgb_to_od, ConcentrationMap, OdImage, StainMatrix, VahadaneParams};
use crate::error::{Error, Result};
use crate::raster::RgbImage;

/// Minimum number of tissue pixels needed for a factorization.
pub const MIN_TISSUE_PIXELS: usize = 100;

const PG_INNER_STEPS: usize = 5;
const MAX_BACKTRACKS: usize = 30;

/// Result of [`estimate_stains`].
#[derive(Debug, Clone)]
pub struct StainEstimate {
    pub stains: StainMatrix,
    /// Concentrations for every pixel of the input image.
    pub concentrations: ConcentrationMap,
    /// Objective on the sampled tissue pixels, at initialization and after
    /// every accepted outer iteration.
    pub objective_history: Vec<f64>,
    /// `||V - S C||_F / ||V||_F` on the sampled tissue pixels.
    pub relative_residual: f64,
    pub tissue_pixels: usize,
}

#[derive(Clone, Copy)]
struct Gram {
    g00: f64,
    g01: f64,
    g11: f64,
}

impl Gram {
    fn of(s: &StainMatrix) -> Self {
        let [a, b] = s.columns();
        Self {
            g00: super::dot3(a, a),
            g01: super::dot3(a, b),
            g11: super::dot3(b, b),
        }
    }
}

/// Exact nonnegative lasso for one pixel: `min ||v - S c||^2 + lambda (c0 + c1)`.
fn solve_pixel(v: &[f64; 3], s: &StainMatrix, g: Gram, lambda: f64) -> [f64; 2] {
    let [a, b] = s.columns();
    let b0 = super::dot3(a, v);
    let b1 = super::dot3(b, v);
    let h = 0.5 * lambda;
    // objective up to the constant ||v||^2
    let f = |c: [f64; 2]| {
        g.g00 * c[0] * c[0] + 2.0 * g.g01 * c[0] * c[1] + g.g11 * c[1] * c[1]
            - 2.0 * (b0 * c[0] + b1 * c[1])
            + lambda * (c[0] + c[1])
    };

    let mut best = [0.0, 0.0];
    let mut best_f = 0.0;
    let mut consider = |c: [f64; 2]| {
        let val = f(c);
        if val < best_f {
            best_f = val;
            best = c;
        }
    };
    if g.g00 > 0.0 {
        consider([((b0 - h) / g.g00).max(0.0), 0.0]);
    }
    if g.g11 > 0.0 {
        consider([0.0, ((b1 - h) / g.g11).max(0.0)]);
    }
    let det = g.g00 * g.g11 - g.g01 * g.g01;
    if det > 1e-12 {
        let c0 = (g.g11 * (b0 - h) - g.g01 * (b1 - h)) / det;
        let c1 = (g.g00 * (b1 - h) - g.g01 * (b0 - h)) / det;
        if c0 > 0.0 && c1 > 0.0 {
            consider([c0, c1]);
        }
    }
    best
}

fn solve_many(pixels: &[[f64; 3]], stains: &StainMatrix, lambda: f64) -> Vec<[f64; 2]> {
    let g = Gram::of(stains);
    pixels
        .par_iter()
        .map(|v| solve_pixel(v, stains, g, lambda))
        .collect()
}

/// Per-pixel nonnegative lasso concentrations for fixed stains.
pub fn solve_concentrations(
    od: &OdImage,
    stains: &StainMatrix,
    sparsity_lambda: f64,
) -> ConcentrationMap {
    ConcentrationMap {
        height: od.height,
        width: od.width,
        conc: solve_many(&od.od, stains, sparsity_lambda),
    }
}

/// Largest violation of the nonnegative-lasso optimality conditions for one
/// pixel. Zero at an exact solution.
pub fn lasso_kkt_residual(v: &[f64; 3], stains: &StainMatrix, c: [f64; 2], lambda: f64) -> f64 {
    let r = stains.apply(c);
    let resid = [r[0] - v[0], r[1] - v[1], r[2] - v[2]];
    let mut worst: f64 = 0.0;
    for (k, &ck) in c.iter().enumerate() {
        let grad = 2.0 * super::dot3(&stains.column(k), &resid) + lambda;
        let violation = if ck > 0.0 {
            grad.abs()
        } else {
            (-grad).max(0.0)
        };
        worst = worst.max(violation);
        if ck < 0.0 {
            worst = worst.max(-ck);
        }
    }
    worst
}

/// `||V - S C||_F^2 + lambda ||C||_1`.
pub fn objective(pixels: &[[f64; 3]], stains: &StainMatrix, conc: &[[f64; 2]], lambda: f64) -> f64 {
    pixels
        .iter()
        .zip(conc)
        .map(|(v, c)| {
            let r = stains.apply(*c);
            let e = [v[0] - r[0], v[1] - r[1], v[2] - r[2]];
            super::dot3(&e, &e) + lambda * (c[0] + c[1])
        })
        .sum()
}

/// Estimates the stain matrix and concentration map of `image`.
pub fn estimate_stains(image: &RgbImage, params: &VahadaneParams) -> Result<StainEstimate> {
    params.validate()?;
    let od = rgb_to_od(image, params.white_point);
    let tissue: Vec<usize> = od
        .od
        .iter()
        .enumerate()
        .filter(|(_, v)| norm3(v) >= params.od_threshold && norm3(v) > 0.0)
        .map(|(i, _)| i)
        .collect();
    if tissue.len() < MIN_TISSUE_PIXELS {
        return Err(Error::InsufficientTissue {
            found: tissue.len(),
            required: MIN_TISSUE_PIXELS,
        });
    }

    let pixels: Vec<[f64; 3]> = if tissue.len() > params.max_pixels {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut picked = index::sample(&mut rng, tissue.len(), params.max_pixels).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| od.od[tissue[i]]).collect()
    } else {
        tissue.iter().map(|&i| od.od[i]).collect()
    };

    let lambda = params.sparsity_lambda;
    let mut stains = initial_stains(&pixels)?;
    let mut conc = solve_many(&pixels, &stains, lambda);
    let mut current = objective(&pixels, &stains, &conc, lambda);
    let mut history = vec![current];

    let mut step_scale = 1.0;
    for _ in 0..params.max_outer_iters {
        let Some((next_stains, next_conc, next_obj, scale)) =
            dictionary_step(&pixels, &stains, &conc, lambda, current, step_scale)
        else {
            break;
        };
        let rel_change = (current - next_obj) / current.max(f64::MIN_POSITIVE);
        stains = next_stains;
        conc = next_conc;
        current = next_obj;
        history.push(current);
        // let the step grow back after a successful backtrack
        step_scale = (scale * 2.0).min(1.0);
        if rel_change < params.tolerance {
            break;
        }
    }

    if stains.needs_swap() {
        let [a, b] = *stains.columns();
        stains = StainMatrix::new([b, a])?;
        for c in &mut conc {
            c.swap(0, 1);
        }
    }

    let residual_sq: f64 = pixels
        .iter()
        .zip(&conc)
        .map(|(v, c)| {
            let r = stains.apply(*c);
            (v[0] - r[0]).powi(2) + (v[1] - r[1]).powi(2) + (v[2] - r[2]).powi(2)
        })
        .sum();
    let total_sq: f64 = pixels.iter().map(|v| super::dot3(v, v)).sum();

    Ok(StainEstimate {
        stains,
        concentrations: solve_concentrations(&od, &stains, lambda),
        objective_history: history,
        relative_residual: (residual_sq / total_sq).sqrt(),
        tissue_pixels: tissue.len(),
    })
}

/// One accepted S-step plus C-step, or `None` when no step size decreases
/// the objective.
fn dictionary_step(
    pixels: &[[f64; 3]],
    stains: &StainMatrix,
    conc: &[[f64; 2]],
    lambda: f64,
    current: f64,
    step_scale: f64,
) -> Option<(StainMatrix, Vec<[f64; 2]>, f64, f64)> {
    // sufficient statistics C C^T (2x2) and V C^T (3x2)
    let mut cct = [[0.0; 2]; 2];
    let mut vct = [[0.0; 2]; 3];
    for (v, c) in pixels.iter().zip(conc) {
        for i in 0..2 {
            for j in 0..2 {
                cct[i][j] += c[i] * c[j];
            }
            for r in 0..3 {
                vct[r][i] += v[r] * c[i];
            }
        }
    }
    // Lipschitz constant of the S-gradient: 2 * lambda_max(C C^T)
    let tr = cct[0][0] + cct[1][1];
    let det = cct[0][0] * cct[1][1] - cct[0][1] * cct[1][0];
    let lmax = 0.5 * (tr + (tr * tr - 4.0 * det).max(0.0).sqrt());
    if lmax <= 0.0 {
        return None;
    }
    let base_step = 1.0 / (2.0 * lmax);

    let mut scale = step_scale;
    for _ in 0..MAX_BACKTRACKS {
        let eta = base_step * scale;
        let mut s = *stains.columns();
        for _ in 0..PG_INNER_STEPS {
            let mut next = s;
            for r in 0..3 {
                for k in 0..2 {
                    let sc = s[0][r] * cct[0][k] + s[1][r] * cct[1][k];
                    let grad = 2.0 * (sc - vct[r][k]);
                    next[k][r] = (s[k][r] - eta * grad).max(0.0);
                }
            }
            s = next;
        }
        if let Ok(candidate) = StainMatrix::new(s) {
            let next_conc = solve_many(pixels, &candidate, lambda);
            let next_obj = objective(pixels, &candidate, &next_conc, lambda);
            if next_obj <= current {
                return Some((candidate, next_conc, next_obj, scale));
            }
        }
        scale *= 0.5;
    }
    None
}

/// Two principal directions of the OD second-moment matrix, projected onto
/// the nonnegative orthant and normalized.
fn initial_stains(pixels: &[[f64; 3]]) -> Result<StainMatrix> {
    let mut m = [[0.0; 3]; 3];
    for v in pixels {
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += v[i] * v[j];
            }
        }
    }
    let n = pixels.len() as f64;
    for row in &mut m {
        for x in row.iter_mut() {
            *x /= n;
        }
    }
    let (vals, vecs) = symmetric_eigen3(m);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let dir = |k: usize| [vecs[0][k], vecs[1][k], vecs[2][k]];

    let positive = |v: [f64; 3]| v.map(|x| x.max(0.0));
    let first = {
        let u = dir(order[0]);
        let flipped = u.map(|x| -x);
        if norm3(&positive(u)) >= norm3(&positive(flipped)) {
            positive(u)
        } else {
            positive(flipped)
        }
    };
    let second = {
        let u = dir(order[1]);
        let flipped = u.map(|x| -x);
        if norm3(&positive(u)) >= norm3(&positive(flipped)) {
            positive(u)
        } else {
            positive(flipped)
        }
    };

    let unit = |v: [f64; 3]| {
        let n = norm3(&v);
        (n > 0.0).then(|| v.map(|x| x / n))
    };
    let first = unit(first).unwrap_or([1.0 / 3f64.sqrt(); 3]);
    let second = match unit(second) {
        Some(s) if super::dot3(&s, &first) < 1.0 - 1e-9 => s,
        // degenerate spectrum: use the axis least aligned with the first column
        _ => {
            let k = (0..3)
                .min_by(|&a, &b| first[a].total_cmp(&first[b]))
                .unwrap();
            let mut e = [0.0; 3];
            e[k] = 1.0;
            e
        }
    };
    StainMatrix::new([first, second])
}

/// Cyclic Jacobi eigendecomposition of a symmetric 3x3 matrix. Eigenvectors
/// are the columns of the returned matrix.
fn symmetric_eigen3(mut a: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..64 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        if off < 1e-30 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q].abs() < 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in &mut v {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}
