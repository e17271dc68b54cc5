use crate::imagecore::{Grid, InstanceMap, Mask};

/// Union of per-instance skeletons.
///
/// Each instance is thinned on its own mask with the two-subiteration
/// Zhang-Suen deletion rules, so skeletons never cross instance boundaries.
/// A subiteration that would erase an instance completely (isolated 2x2
/// blocks) keeps its first pixel in row-major order.
pub fn skeletonize(instances: &InstanceMap) -> Mask {
    let (height, width) = instances.shape();
    let mut out = Grid::filled(width, height, false);
    for (label, bbox) in bounding_boxes(instances) {
        let local = thin_instance(instances, label, bbox);
        let (r0, c0, r1, c1) = bbox;
        let lw = c1 - c0 + 1;
        for r in r0..=r1 {
            for c in c0..=c1 {
                // local raster is padded by one pixel on each side
                if local[(r - r0 + 1) * (lw + 2) + (c - c0 + 1)] {
                    out[(r, c)] = true;
                }
            }
        }
    }
    out
}

type BBox = (usize, usize, usize, usize);

fn bounding_boxes(instances: &InstanceMap) -> Vec<(u32, BBox)> {
    let mut boxes: std::collections::BTreeMap<u32, BBox> = Default::default();
    for (i, &label) in instances.data().iter().enumerate() {
        if label == 0 {
            continue;
        }
        let (r, c) = instances.coords(i);
        boxes
            .entry(label)
            .and_modify(|b| {
                b.0 = b.0.min(r);
                b.1 = b.1.min(c);
                b.2 = b.2.max(r);
                b.3 = b.3.max(c);
            })
            .or_insert((r, c, r, c));
    }
    boxes.into_iter().collect()
}

fn thin_instance(instances: &InstanceMap, label: u32, (r0, c0, r1, c1): BBox) -> Vec<bool> {
    let h = r1 - r0 + 3;
    let w = c1 - c0 + 3;
    let mut img = vec![false; h * w];
    for r in r0..=r1 {
        for c in c0..=c1 {
            img[(r - r0 + 1) * w + (c - c0 + 1)] = *instances.get(r, c) == label;
        }
    }
    let mut remaining = img.iter().filter(|&&b| b).count();
    let mut marked = Vec::new();
    loop {
        let mut changed = false;
        for step in 0..2 {
            marked.clear();
            for r in 1..h - 1 {
                for c in 1..w - 1 {
                    let p = r * w + c;
                    if img[p] && deletable(&img, w, p, step) {
                        marked.push(p);
                    }
                }
            }
            if marked.len() == remaining {
                marked.remove(0);
            }
            if !marked.is_empty() {
                changed = true;
                remaining -= marked.len();
                for &p in &marked {
                    img[p] = false;
                }
            }
        }
        if !changed {
            return img;
        }
    }
}

/// Zhang-Suen test. Neighbours `p2..p9` run clockwise from north.
fn deletable(img: &[bool], w: usize, p: usize, step: usize) -> bool {
    let n = [
        img[p - w],     // p2
        img[p - w + 1], // p3
        img[p + 1],     // p4
        img[p + w + 1], // p5
        img[p + w],     // p6
        img[p + w - 1], // p7
        img[p - 1],     // p8
        img[p - w - 1], // p9
    ];
    let b = n.iter().filter(|&&v| v).count();
    if !(2..=6).contains(&b) {
        return false;
    }
    let a = (0..8).filter(|&i| !n[i] && n[(i + 1) % 8]).count();
    if a != 1 {
        return false;
    }
    let (p2, p4, p6, p8) = (n[0], n[2], n[4], n[6]);
    if step == 0 {
        !(p2 && p4 && p6) && !(p4 && p6 && p8)
    } else {
        !(p2 && p4 && p8) && !(p2 && p6 && p8)
    }
}
