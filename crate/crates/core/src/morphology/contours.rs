use crate::imagecore::{Grid, InstanceMap, Mask, NEIGHBORS8};

/// Contour pixels of every instance and the instance that owns each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContourSet {
    mask: Mask,
    owner: Grid<u32>,
}

impl ContourSet {
    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    /// Instance label of each contour pixel; `0` off the contour.
    pub fn owner(&self) -> &Grid<u32> {
        &self.owner
    }

    pub fn count(&self) -> usize {
        self.mask.data().iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.data().iter().any(|&b| b)
    }
}

/// A labeled pixel is on the contour when any 8-neighbour carries a different
/// label or falls outside the image.
pub fn extract_contours(instances: &InstanceMap) -> ContourSet {
    let (height, width) = instances.shape();
    let mut mask = Grid::filled(width, height, false);
    let mut owner = Grid::filled(width, height, 0u32);
    for row in 0..height {
        for col in 0..width {
            let label = *instances.get(row, col);
            if label == 0 {
                continue;
            }
            let on_contour = NEIGHBORS8.iter().any(|&(dr, dc)| {
                instances
                    .get_signed(row as isize + dr, col as isize + dc)
                    .is_none_or(|&other| other != label)
            });
            if on_contour {
                mask[(row, col)] = true;
                owner[(row, col)] = label;
            }
        }
    }
    ContourSet { mask, owner }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solid_square_ring() {
        let mut g = Grid::filled(5, 5, 0u32);
        for r in 1..4 {
            for c in 1..4 {
                g[(r, c)] = 1;
            }
        }
        let contours = extract_contours(&InstanceMap::new(g));
        assert_eq!(contours.count(), 8);
        assert!(!contours.mask()[(2, 2)]);
        assert_eq!(contours.owner()[(1, 1)], 1);
    }

    #[test]
    fn single_pixel_is_its_own_contour() {
        let g = InstanceMap::from_vec(3, 3, vec![0, 0, 0, 0, 4, 0, 0, 0, 0]).unwrap();
        let contours = extract_contours(&g);
        assert_eq!(contours.count(), 1);
        assert_eq!(contours.owner()[(1, 1)], 4);
    }

    #[test]
    fn image_border_counts_as_foreign() {
        let g = InstanceMap::from_vec(3, 3, vec![1; 9]).unwrap();
        let contours = extract_contours(&g);
        assert_eq!(contours.count(), 8);
        assert!(!contours.mask()[(1, 1)]);
    }

    #[test]
    fn adjacent_rectangles_share_facing_edges() {
        // labels 1 in cols 0..3, 2 in cols 3..6, rows 0..6 inside an 8x8 frame
        let g = Grid::from_fn(8, 8, |r, c| match (r, c) {
            (1..=6, 1..=3) => 1,
            (1..=6, 4..=6) => 2,
            _ => 0,
        });
        let g = InstanceMap::new(g);
        let contours = extract_contours(&g);
        for r in 0..8 {
            for c in 0..8 {
                let label = *g.get(r, c);
                let expected = label != 0
                    && (-1..=1).any(|dr: isize| {
                        (-1..=1).any(|dc: isize| {
                            let (nr, nc) = (r as isize + dr, c as isize + dc);
                            !(0..8).contains(&nr)
                                || !(0..8).contains(&nc)
                                || *g.get(nr as usize, nc as usize) != label
                        })
                    });
                assert_eq!(contours.mask()[(r, c)], expected, "({r}, {c})");
                if expected {
                    assert_eq!(contours.owner()[(r, c)], label);
                }
            }
        }
        // facing columns 3 and 4 belong to their own instance
        assert_eq!(contours.owner()[(3, 3)], 1);
        assert_eq!(contours.owner()[(3, 4)], 2);
    }
}
