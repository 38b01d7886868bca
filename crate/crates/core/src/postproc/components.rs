//! Two-pass connected-component labeling with union-find.

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        match value {
            4 => Ok(Self::Four),
            8 => Ok(Self::Eight),
            other => Err(Error::InvalidConfig(format!(
                "connectivity must be 4 or 8, got {other}"
            ))),
        }
    }
}

/// Inclusive axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoundingBox {
    /// Midpoint of the box.
    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) as f64 / 2.0,
            (self.y_min + self.y_max) as f64 / 2.0,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub label: u32,
    pub area: usize,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone)]
pub struct Labeling {
    pub height: usize,
    pub width: usize,
    /// 0 for background, otherwise `1..=components.len()`.
    pub labels: Vec<u32>,
    pub components: Vec<Component>,
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let ra = find(parent, a);
    let rb = find(parent, b);
    if ra != rb {
        // smaller provisional label wins so roots stay in scan order
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Labels the set pixels of `mask`. Labels are numbered in raster order of
/// each component's first pixel.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Labeling {
    let (h, w) = (mask.height(), mask.width());
    let bits = mask.bits();
    let mut labels = vec![0u32; h * w];
    let mut parent: Vec<u32> = vec![0];

    for y in 0..h {
        for x in 0..w {
            if !bits[y * w + x] {
                continue;
            }
            let mut neighbors = [0u32; 4];
            let mut n = 0;
            let mut push = |l: u32| {
                if l != 0 {
                    neighbors[n] = l;
                    n += 1;
                }
            };
            if x > 0 {
                push(labels[y * w + x - 1]);
            }
            if y > 0 {
                push(labels[(y - 1) * w + x]);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        push(labels[(y - 1) * w + x - 1]);
                    }
                    if x + 1 < w {
                        push(labels[(y - 1) * w + x + 1]);
                    }
                }
            }
            let label = if n == 0 {
                let l = parent.len() as u32;
                parent.push(l);
                l
            } else {
                let first = neighbors[0];
                for &other in &neighbors[1..n] {
                    union(&mut parent, first, other);
                }
                first
            };
            labels[y * w + x] = label;
        }
    }

    // resolve roots and renumber densely in order of first appearance
    let mut dense = vec![0u32; parent.len()];
    let mut components: Vec<Component> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == 0 {
                continue;
            }
            let root = find(&mut parent, l) as usize;
            if dense[root] == 0 {
                components.push(Component {
                    label: components.len() as u32 + 1,
                    area: 0,
                    bbox: BoundingBox {
                        x_min: x,
                        y_min: y,
                        x_max: x,
                        y_max: y,
                    },
                });
                dense[root] = components.len() as u32;
            }
            let d = dense[root];
            labels[y * w + x] = d;
            let c = &mut components[d as usize - 1];
            c.area += 1;
            c.bbox.x_min = c.bbox.x_min.min(x);
            c.bbox.x_max = c.bbox.x_max.max(x);
            c.bbox.y_max = c.bbox.y_max.max(y);
        }
    }

    Labeling {
        height: h,
        width: w,
        labels,
        components,
    }
}

/// Bounding-box midpoints of the components with at least `min_area` pixels.
pub fn component_centers(components: &[Component], min_area: usize) -> Vec<(f64, f64)> {
    components
        .iter()
        .filter(|c| c.area >= min_area)
        .map(|c| c.bbox.center())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        let bits = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c == '#'))
            .collect();
        BinaryMask::new(h, w, bits).unwrap()
    }

    #[test]
    fn diagonal_pair() {
        let m = mask_from(&["#.", ".#"]);
        assert_eq!(
            connected_components(&m, Connectivity::Eight)
                .components
                .len(),
            1
        );
        assert_eq!(
            connected_components(&m, Connectivity::Four)
                .components
                .len(),
            2
        );
    }

    #[test]
    fn checkerboard_four_connectivity() {
        let m = mask_from(&["#.#.", ".#.#", "#.#.", ".#.#"]);
        let l = connected_components(&m, Connectivity::Four);
        assert_eq!(l.components.len(), 8);
        assert!(l.components.iter().all(|c| c.area == 1));
    }

    #[test]
    fn u_shape_merges_late() {
        // the two arms only join on the last row
        let m = mask_from(&["#..#", "#..#", "####"]);
        let l = connected_components(&m, Connectivity::Four);
        assert_eq!(l.components.len(), 1);
        assert_eq!(l.components[0].area, 8);
        assert!(l.labels.iter().all(|&x| x <= 1));
    }

    #[test]
    fn centers() {
        let single = mask_from(&["....", "....", "...."]);
        assert!(connected_components(&single, Connectivity::Eight)
            .components
            .is_empty());

        let mut m = BinaryMask::empty(10, 10).unwrap();
        m.set(3, 7, true);
        let l = connected_components(&m, Connectivity::Eight);
        assert_eq!(component_centers(&l.components, 1), vec![(3.0, 7.0)]);

        let rect = mask_from(&[".......", "..#####", "..#####", "..#####"]);
        let l = connected_components(&rect, Connectivity::Four);
        assert_eq!(component_centers(&l.components, 1), vec![(4.0, 2.0)]);

        let ell = mask_from(&["#....", "#....", "#####"]);
        let l = connected_components(&ell, Connectivity::Four);
        assert_eq!(component_centers(&l.components, 1), vec![(2.0, 1.0)]);
        assert!(component_centers(&l.components, 8).is_empty());
    }

    #[test]
    fn connectivity_parse() {
        assert_eq!(Connectivity::try_from(4).unwrap(), Connectivity::Four);
        assert!(Connectivity::try_from(6).is_err());
    }
}
