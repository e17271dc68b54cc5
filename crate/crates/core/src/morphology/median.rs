use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagecore::{Grid, GrayImage};

/// Sliding-window median with reflect padding (edge pixel repeated:
/// `d c b a | a b c d | d c b a`).
pub fn median_filter(image: &GrayImage, window: usize) -> Result<GrayImage> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "median window must be odd and positive, got {window}"
        )));
    }
    let (height, width) = image.shape();
    let radius = (window / 2) as isize;
    let src = image.data();
    let mut out = vec![0.0; image.len()];
    out.par_chunks_mut(width.max(1)).enumerate().for_each(|(row, out_row)| {
        let rows: Vec<usize> = (-radius..=radius)
            .map(|d| reflect(row as isize + d, height))
            .collect();
        let mut buf = Vec::with_capacity(window * window);
        for (col, slot) in out_row.iter_mut().enumerate() {
            buf.clear();
            for &r in &rows {
                for d in -radius..=radius {
                    buf.push(src[r * width + reflect(col as isize + d, width)]);
                }
            }
            let mid = buf.len() / 2;
            let (_, median, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
            *slot = *median;
        }
    });
    GrayImage::new(Grid::new(width, height, out)?)
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(img: &GrayImage, window: usize) -> Vec<f64> {
        let (h, w) = img.shape();
        let r = (window / 2) as isize;
        let mut out = Vec::new();
        for row in 0..h as isize {
            for col in 0..w as isize {
                let mut vals = Vec::new();
                for dr in -r..=r {
                    for dc in -r..=r {
                        let mut rr = row + dr;
                        let mut cc = col + dc;
                        // mirror across the edge including the edge pixel
                        while rr < 0 || rr >= h as isize {
                            rr = if rr < 0 { -rr - 1 } else { 2 * h as isize - rr - 1 };
                        }
                        while cc < 0 || cc >= w as isize {
                            cc = if cc < 0 { -cc - 1 } else { 2 * w as isize - cc - 1 };
                        }
                        vals.push(*img.get(rr as usize, cc as usize));
                    }
                }
                vals.sort_by(f64::total_cmp);
                out.push(vals[vals.len() / 2]);
            }
        }
        out
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-4..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
        assert_eq!(reflect(-5, 2), 0);
    }

    #[test]
    fn even_window_rejected() {
        let img = GrayImage::from_vec(2, 2, vec![0.0; 4]).unwrap();
        assert!(median_filter(&img, 4).is_err());
        assert!(median_filter(&img, 0).is_err());
    }

    #[test]
    fn constant_unchanged() {
        let img = GrayImage::from_vec(5, 4, vec![3.25; 20]).unwrap();
        assert_eq!(median_filter(&img, 7).unwrap(), img);
    }

    #[test]
    fn impulse_removed() {
        let mut data = vec![10.0; 25];
        data[12] = 200.0;
        let img = GrayImage::from_vec(5, 5, data).unwrap();
        let out = median_filter(&img, 3).unwrap();
        assert!(out.data().iter().all(|&v| v == 10.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn matches_naive_sort(data in proptest::collection::vec(0.0f64..1000.0, 16 * 16)) {
            let img = GrayImage::from_vec(16, 16, data).unwrap();
            let filtered = median_filter(&img, 7).unwrap();
            prop_assert_eq!(filtered.data(), &naive(&img, 7)[..]);
            let filtered = median_filter(&img, 3).unwrap();
            prop_assert_eq!(filtered.data(), &naive(&img, 3)[..]);
        }
    }

    #[test]
    fn window_larger_than_image() {
        let img = GrayImage::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(median_filter(&img, 7).unwrap().data(), &naive(&img, 7)[..]);
    }
}
