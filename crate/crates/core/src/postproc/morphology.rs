use crate::raster::BinaryMask;

/// Half-widths of the disc `dx^2 + dy^2 <= r^2`, indexed by `dy + r`.
pub(crate) fn disc_half_widths(radius: usize) -> Vec<usize> {
    let r = radius as i64;
    (-r..=r)
        .map(|dy| {
            let rem = r * r - dy * dy;
            // floor(sqrt(rem)) without trusting float rounding
            let mut w = (rem as f64).sqrt() as i64;
            while w * w > rem {
                w -= 1;
            }
            while (w + 1) * (w + 1) <= rem {
                w += 1;
            }
            w as usize
        })
        .collect()
}

/// Dilation by a Euclidean disc of the given radius. Radius 0 is the identity.
///
/// Every set row is dilated horizontally once per distinct half-width (prefix
/// counts, O(width)) and OR-ed into the rows it reaches, so the cost scales
/// with the number of non-empty rows rather than with set pixels.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (h, w) = (mask.height(), mask.width());
    let widths = disc_half_widths(radius);
    let bits = mask.bits();
    let mut out = vec![false; h * w];
    let mut prefix = vec![0u32; w + 1];
    let mut spread: Vec<Option<Vec<bool>>> = vec![None; radius + 1];

    for y in 0..h {
        let row = &bits[y * w..(y + 1) * w];
        if !row.iter().any(|&b| b) {
            continue;
        }
        for x in 0..w {
            prefix[x + 1] = prefix[x] + u32::from(row[x]);
        }
        spread.iter_mut().for_each(|s| *s = None);
        let r = radius as i64;
        for dy in -r..=r {
            let ty = y as i64 + dy;
            if ty < 0 || ty >= h as i64 {
                continue;
            }
            let hw = widths[(dy + r) as usize];
            let line = spread[hw].get_or_insert_with(|| {
                (0..w)
                    .map(|x| {
                        let lo = x.saturating_sub(hw);
                        let hi = (x + hw + 1).min(w);
                        prefix[hi] > prefix[lo]
                    })
                    .collect()
            });
            let dst = &mut out[ty as usize * w..(ty as usize + 1) * w];
            for (d, &s) in dst.iter_mut().zip(line.iter()) {
                *d |= s;
            }
        }
    }
    BinaryMask::new(h, w, out).expect("same dims as input")
}
