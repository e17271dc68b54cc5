//! Cross-module properties checked against independent oracles.

use std::collections::BTreeSet;

use cellsplit::augment::{draw_rng, sample_augmentation, AugmentSpec};
use cellsplit::decode::{decode_map, decode_threshold, semantic_to_instances, ThresholdParams};
use cellsplit::gtprep::{instance_to_semantic, NeighborhoodSpec};
use cellsplit::imagecore::{
    read_array, write_array, Class, FloatArray, Grid, GrayImage, InstanceMap, ProbabilityMap,
    SemanticMap,
};
use cellsplit::metrics::{match_instances, panoptic_metrics};
use cellsplit::weights::{w3_weight_map, W3Params};
use proptest::prelude::*;

fn instance_map(width: usize, height: usize, max_label: u32) -> impl Strategy<Value = InstanceMap> {
    proptest::collection::vec(0..=max_label, width * height)
        .prop_map(move |data| InstanceMap::from_vec(width, height, data).unwrap())
}

/// Blocky maps: random labels on a 4x4 coarse grid, upsampled.
fn blocky_map(cells: usize, scale: usize) -> impl Strategy<Value = InstanceMap> {
    proptest::collection::vec(0u32..=4, cells * cells).prop_map(move |coarse| {
        let side = cells * scale;
        InstanceMap::new(Grid::from_fn(side, side, |r, c| coarse[(r / scale) * cells + c / scale]))
    })
}

fn probability_map(width: usize, height: usize) -> impl Strategy<Value = ProbabilityMap> {
    proptest::collection::vec((0.01f64..1.0, 0.01f64..1.0, 0.01f64..1.0), width * height).prop_map(
        move |raw| {
            let planes = (0..3)
                .map(|l| {
                    let data = raw
                        .iter()
                        .map(|&(a, b, c)| [a, b, c][l] / (a + b + c))
                        .collect();
                    Grid::new(width, height, data).unwrap()
                })
                .collect();
            ProbabilityMap::new(planes).unwrap()
        },
    )
}

fn semantic_oracle(g: &InstanceMap, k: usize) -> Vec<u32> {
    let (h, w) = g.shape();
    let mut out = vec![0; h * w];
    for r in 0..h {
        for c in 0..w {
            let label = g[(r, c)];
            if label == 0 {
                continue;
            }
            let mut foreign = 0;
            for rr in r.saturating_sub(k)..=(r + k).min(h - 1) {
                for cc in c.saturating_sub(k)..=(c + k).min(w - 1) {
                    let other = g[(rr, cc)];
                    foreign += (other != 0 && other != label) as usize;
                }
            }
            out[r * w + c] = 1 + (foreign > 1) as u32;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn semantic_matches_double_loop(g in instance_map(13, 11, 4), k in 1usize..4) {
        let h = instance_to_semantic(&g, NeighborhoodSpec::new(k).unwrap());
        prop_assert_eq!(h.ids(), semantic_oracle(&g, k));
    }

    #[test]
    fn touching_grows_with_k(g in blocky_map(4, 5), k in 1usize..4) {
        let small = instance_to_semantic(&g, NeighborhoodSpec::new(k).unwrap());
        let large = instance_to_semantic(&g, NeighborhoodSpec::new(k + 1).unwrap());
        for (a, b) in small.data().iter().zip(large.data()) {
            prop_assert!(*a != Class::Touching || *b == Class::Touching);
        }
    }

    #[test]
    fn semantic_ignores_label_values(g in blocky_map(4, 4), offset in 1u32..1000) {
        let k = NeighborhoodSpec::default();
        let relabeled = InstanceMap::new(g.map(|&l| if l == 0 { 0 } else { (5 - l) * offset }));
        prop_assert_eq!(instance_to_semantic(&g, k), instance_to_semantic(&relabeled, k));
    }

    #[test]
    fn weights_are_positive_and_scale_with_nu(g in blocky_map(4, 6), nu in 0.1f64..10.0) {
        let h = instance_to_semantic(&g, NeighborhoodSpec::default());
        prop_assume!(h.data().contains(&Class::Cell));
        let base = w3_weight_map(&g, &h, &W3Params::default()).unwrap();
        let scaled = w3_weight_map(&g, &h, &W3Params { nu, ..Default::default() }).unwrap();
        for (a, b) in base.data().iter().zip(scaled.data()) {
            prop_assert!(a.is_finite() && *a > 0.0);
            prop_assert!((b - nu * a).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn map_decoding_is_argmax(z in probability_map(7, 5)) {
        let h = decode_map(&z).unwrap();
        for i in 0..z.pixel_count() {
            let p = [z.at(0, i), z.at(1, i), z.at(2, i)];
            let mut best = 0;
            for l in 1..3 {
                if p[l] >= p[best] {
                    best = l;
                }
            }
            prop_assert_eq!(h.data()[i].id(), best);
        }
    }

    #[test]
    fn threshold_agrees_with_map_on_clear_pixels(z in probability_map(9, 9), g1 in 0.3f64..0.7, g2 in 0.3f64..0.7) {
        let map = decode_map(&z).unwrap();
        let th = decode_threshold(&z, &ThresholdParams::new(g1, g2).unwrap()).unwrap();
        let gamma = [f64::INFINITY, g1, g2];
        for i in 0..z.pixel_count() {
            let winner = map.data()[i].id();
            let clear = (0..3).all(|l| {
                let p = z.at(l, i);
                if l == winner { l == 0 || p > gamma[l] } else { l == 0 || p < gamma[l] }
            });
            if clear {
                prop_assert_eq!(th.data()[i], map.data()[i]);
            }
        }
    }

    #[test]
    fn touching_pixels_join_nearest_cell(ids in proptest::collection::vec(0u32..3, 12 * 10)) {
        let h = SemanticMap::from_ids(12, 10, &ids).unwrap();
        prop_assume!(ids.contains(&1));
        let g = semantic_to_instances(&h).unwrap();
        let cells: Vec<(usize, usize)> = (0..120).filter(|&i| ids[i] == 1).map(|i| (i / 12, i % 12)).collect();
        let cell_labels: BTreeSet<u32> = cells.iter().map(|&(r, c)| g[(r, c)]).collect();
        for i in 0..120 {
            let (r, c) = (i / 12, i % 12);
            match ids[i] {
                0 => prop_assert_eq!(g[(r, c)], 0),
                1 => prop_assert!(g[(r, c)] > 0),
                _ => {
                    let d = |&(a, b): &(usize, usize)| {
                        let (dr, dc) = (a as i64 - r as i64, b as i64 - c as i64);
                        dr * dr + dc * dc
                    };
                    let nearest = cells.iter().min_by_key(|p| (d(p), **p)).unwrap();
                    prop_assert_eq!(g[(r, c)], g[*nearest]);
                    prop_assert!(cell_labels.contains(&g[(r, c)]));
                }
            }
        }
    }

    #[test]
    fn metrics_identities(gt in blocky_map(4, 3), pred in blocky_map(4, 3)) {
        let m = match_instances(&gt, &pred).unwrap();
        let gts: BTreeSet<u32> = m.pairs.iter().map(|p| p.gt).collect();
        let preds: BTreeSet<u32> = m.pairs.iter().map(|p| p.pred).collect();
        prop_assert_eq!(gts.len(), m.pairs.len());
        prop_assert_eq!(preds.len(), m.pairs.len());
        let r = panoptic_metrics(&m);
        prop_assert!((r.pq - r.rq * r.sq).abs() <= 1e-12);
        if r.tp > 0 {
            prop_assert!(r.sq > 0.5 && r.sq <= 1.0);
            prop_assert_eq!(r.p05, r.tp as f64 / (r.tp + r.fp) as f64);
        }
    }

    #[test]
    fn augmentation_never_invents_labels(g in blocky_map(4, 8), seed in any::<u64>(), index in 0u64..100) {
        let h = instance_to_semantic(&g, NeighborhoodSpec::default());
        prop_assume!(h.data().contains(&Class::Cell));
        let spec = AugmentSpec { warp: cellsplit::augment::WarpSpec { amplitude: 4.0, cell_size: 8 }, ..Default::default() };
        let w = w3_weight_map(&g, &h, &spec.weight_params).unwrap();
        let x = GrayImage::new(g.map(|&l| 0.1 + l as f64)).unwrap();
        let out = sample_augmentation(&x, &g, &h, &w, &spec, &mut draw_rng(seed, index)).unwrap();
        let before: BTreeSet<u32> = g.data().iter().copied().chain([0]).collect();
        prop_assert!(out.instances.data().iter().all(|l| before.contains(l)));
        let weights: BTreeSet<u64> = w.data().iter().map(|v| v.to_bits()).collect();
        prop_assert!(out.weights.data().iter().all(|v| weights.contains(&v.to_bits())));
        let again = sample_augmentation(&x, &g, &h, &w, &spec, &mut draw_rng(seed, index)).unwrap();
        prop_assert_eq!(out, again);
    }

    #[test]
    fn npy_round_trip(c in 1usize..4, h in 1usize..6, w in 1usize..6, seed in any::<u32>()) {
        let data: Vec<f32> = (0..c * h * w).map(|i| (i as u32 ^ seed) as f32 / 7.0).collect();
        let array = FloatArray::new(c, h, w, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.npy");
        write_array(&path, &array).unwrap();
        prop_assert_eq!(read_array(&path).unwrap(), array);
    }
}
