use crate::imagecore::{Grid, InstanceMap, Mask};

/// Pixel adjacency used when grouping pixels into regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

/// Labels maximal connected regions of `mask` as `1..=m`. Labels are handed
/// out in row-major order of each region's first pixel.
pub fn connected_components(mask: &Mask, connectivity: Connectivity) -> InstanceMap {
    let (height, width) = mask.shape();
    let mut parent: Vec<u32> = (0..mask.len() as u32).collect();
    let data = mask.data();

    // Union with already visited neighbours only: W, and for 8-connectivity NW, N, NE.
    for row in 0..height {
        for col in 0..width {
            let p = row * width + col;
            if !data[p] {
                continue;
            }
            if col > 0 && data[p - 1] {
                union(&mut parent, p, p - 1);
            }
            if row > 0 {
                let up = p - width;
                if data[up] {
                    union(&mut parent, p, up);
                }
                if connectivity == Connectivity::Eight {
                    if col > 0 && data[up - 1] {
                        union(&mut parent, p, up - 1);
                    }
                    if col + 1 < width && data[up + 1] {
                        union(&mut parent, p, up + 1);
                    }
                }
            }
        }
    }

    let mut root_label = vec![0u32; mask.len()];
    let mut next = 0u32;
    let mut labels = vec![0u32; mask.len()];
    for p in 0..mask.len() {
        if !data[p] {
            continue;
        }
        let root = find(&mut parent, p) as usize;
        if root_label[root] == 0 {
            next += 1;
            root_label[root] = next;
        }
        labels[p] = root_label[root];
    }
    InstanceMap::new(Grid::new(width, height, labels).expect("shape preserved"))
}

fn find(parent: &mut [u32], mut x: usize) -> u32 {
    while parent[x] as usize != x {
        let grand = parent[parent[x] as usize];
        parent[x] = grand;
        x = grand as usize;
    }
    x as u32
}

fn union(parent: &mut [u32], a: usize, b: usize) {
    let ra = find(parent, a);
    let rb = find(parent, b);
    if ra != rb {
        // keep the smaller offset as root
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(width: usize, bits: &[u8]) -> Mask {
        Grid::new(width, bits.len() / width, bits.iter().map(|&b| b != 0).collect()).unwrap()
    }

    #[test]
    fn diagonal_pixels() {
        let m = mask(2, &[1, 0, 0, 1]);
        assert_eq!(connected_components(&m, Connectivity::Eight).labels(), vec![1]);
        assert_eq!(connected_components(&m, Connectivity::Four).labels(), vec![1, 2]);
    }

    #[test]
    fn empty_mask_has_no_labels() {
        let m = mask(3, &[0; 9]);
        assert!(connected_components(&m, Connectivity::Eight).labels().is_empty());
    }

    #[test]
    fn labels_follow_first_pixel_order() {
        // U shape: the right arm's first pixel is seen before the arms join.
        let m = mask(3, &[1, 0, 1, 1, 0, 1, 1, 1, 1, 0, 0, 0, 1, 0, 0]);
        let g = connected_components(&m, Connectivity::Four);
        assert_eq!(g.data(), &[1, 0, 1, 1, 0, 1, 1, 1, 1, 0, 0, 0, 2, 0, 0]);
    }

    /// Independent flood fill labeling in the same first-pixel order.
    fn flood_fill(m: &Mask, eight: bool) -> Vec<u32> {
        let (h, w) = m.shape();
        let mut out = vec![0u32; m.len()];
        let mut next = 0;
        for start in 0..m.len() {
            if !m.data()[start] || out[start] != 0 {
                continue;
            }
            next += 1;
            let mut stack = vec![start];
            out[start] = next;
            while let Some(p) = stack.pop() {
                let (r, c) = ((p / w) as isize, (p % w) as isize);
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        if (dr == 0 && dc == 0) || (!eight && dr != 0 && dc != 0) {
                            continue;
                        }
                        let (nr, nc) = (r + dr, c + dc);
                        if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                            continue;
                        }
                        let q = nr as usize * w + nc as usize;
                        if m.data()[q] && out[q] == 0 {
                            out[q] = next;
                            stack.push(q);
                        }
                    }
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn matches_flood_fill(bits in proptest::collection::vec(0u8..3, 32 * 32)) {
            let m = mask(32, &bits.iter().map(|&b| (b == 0) as u8).collect::<Vec<_>>());
            let eight = connected_components(&m, Connectivity::Eight);
            prop_assert_eq!(eight.data(), &flood_fill(&m, true)[..]);
            let four = connected_components(&m, Connectivity::Four);
            prop_assert_eq!(four.data(), &flood_fill(&m, false)[..]);
        }
    }
}
