mod common;

use common::look_at_view;
use common::prune::{level_keeps, oracle_prune, point_field, random_case, stack_of};
use mcgs_core::gaussian::Primitive;
use mcgs_core::pruning::{
    apply_prune, compute_prune_mask, compute_prune_mask_with, level_mask, masked_similarity, FeatureMap,
    PruneDecision,
};
use mcgs_core::raster::render;
use mcgs_core::rng;
use mcgs_core::CameraView;
use proptest::prelude::*;

fn constant_map(dims: usize, size: usize, v: &[f32]) -> FeatureMap {
    let mut m = FeatureMap::new(dims, size, size);
    for k in 0..dims {
        for y in 0..size {
            for x in 0..size {
                m.set(k, x, y, v[k]);
            }
        }
    }
    m
}

fn three_views(size: usize) -> Vec<CameraView> {
    vec![
        look_at_view(0, [0.0, 0.0, -3.0], size, size as f64),
        look_at_view(1, [1.0, 0.0, -3.0], size, size as f64),
        look_at_view(2, [-1.0, 0.5, -3.0], size, size as f64),
    ]
}

#[test]
fn identical_features_are_kept() {
    let views = three_views(8);
    let m = constant_map(2, 8, &[0.3, 0.7]);
    let stack = stack_of(vec![1, 1], vec![m.clone(), m.clone(), m]);
    let d = compute_prune_mask(&point_field(&[[0.0, 0.0, 0.0]]), &views, &stack, 2, 0.75).unwrap();
    assert_eq!(d.mask, vec![false]);
    assert_eq!(d.valid_view_count, vec![3]);
}

#[test]
fn orthogonal_features_are_pruned() {
    let views = three_views(8);
    let maps = vec![
        constant_map(3, 8, &[1.0, 0.0, 0.0]),
        constant_map(3, 8, &[0.0, 1.0, 0.0]),
        constant_map(3, 8, &[0.0, 0.0, 1.0]),
    ];
    let d = compute_prune_mask(&point_field(&[[0.0, 0.0, 0.0]]), &views, &stack_of(vec![3], maps), 1, 0.75).unwrap();
    assert_eq!(d.mask, vec![true]);
}

#[test]
fn one_consistent_pair_defeats_pruning() {
    let views = three_views(8);
    // view 0/1 similarity 0.9; pairs with view 2 about 0.1
    let a = [1.0f32, 0.0, 0.0];
    let b = [0.9f32, 0.435_889_9, 0.0];
    let c = [0.1f32, -0.229_416_4, 0.968_182_9];
    let maps = vec![constant_map(3, 8, &a), constant_map(3, 8, &b), constant_map(3, 8, &c)];
    let d = compute_prune_mask_with(&point_field(&[[0.0, 0.0, 0.0]]), &views, &stack_of(vec![3], maps), 1, 0.75, true)
        .unwrap();
    let sims = &d.pairwise_sims.as_ref().unwrap()[0];
    assert_eq!(sims.len(), 3);
    assert!((sims[0] - 0.9).abs() < 1e-6);
    assert!(sims[1] < 0.75 && sims[2] < 0.75);
    assert_eq!(d.mask, vec![false]);
}

#[test]
fn fewer_than_two_valid_views_is_exempt() {
    let views = three_views(8);
    let maps = vec![
        constant_map(3, 8, &[1.0, 0.0, 0.0]),
        constant_map(3, 8, &[0.0, 1.0, 0.0]),
        constant_map(3, 8, &[0.0, 0.0, 1.0]),
    ];
    // behind every camera
    let d = compute_prune_mask(&point_field(&[[0.0, 0.0, -10.0]]), &views, &stack_of(vec![3], maps), 1, 0.99).unwrap();
    assert_eq!(d.valid_view_count, vec![0]);
    assert_eq!(d.mask, vec![false]);
}

#[test]
fn mismatched_stack_is_rejected() {
    let views = three_views(8);
    let maps = vec![constant_map(3, 8, &[1.0, 0.0, 0.0]), constant_map(3, 8, &[1.0, 0.0, 0.0])];
    let err = compute_prune_mask(&point_field(&[[0.0; 3]]), &views, &stack_of(vec![3], maps), 1, 0.5).unwrap_err();
    assert_eq!(err.code(), "feature_view_mismatch");
    let wrong_size = vec![constant_map(3, 4, &[1.0, 0.0, 0.0]); 3];
    assert!(compute_prune_mask(&point_field(&[[0.0; 3]]), &views, &stack_of(vec![3], wrong_size), 1, 0.5).is_err());
    let wrong_dims = vec![constant_map(3, 8, &[1.0, 0.0, 0.0]); 3];
    assert!(compute_prune_mask(&point_field(&[[0.0; 3]]), &views, &stack_of(vec![2], wrong_dims), 1, 0.5).is_err());
}

#[test]
fn apply_prune_examples() {
    let f = point_field(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]]);
    let dec = |mask: Vec<bool>| PruneDecision {
        valid_view_count: vec![0; mask.len()],
        mask,
        pairwise_sims: None,
    };
    assert_eq!(apply_prune(&f, &dec(vec![false; 4])).unwrap(), f);
    assert!(apply_prune(&f, &dec(vec![true; 4])).unwrap().is_empty());
    let kept = apply_prune(&f, &dec(vec![true, false, true, false])).unwrap();
    assert_eq!(kept.len(), 2);
    assert_eq!(kept.primitive(0), f.primitive(1));
    assert_eq!(kept.primitive(1), f.primitive(3));
    let err = apply_prune(&f, &dec(vec![true; 3])).unwrap_err();
    assert_eq!(err.code(), "size_mismatch");
}

#[test]
fn pruning_invisible_primitives_leaves_render_unchanged() {
    let views = three_views(16);
    let mut f = point_field(&[[0.0, 0.0, 0.0], [0.2, 0.1, 0.0]]);
    f.log_scales.iter_mut().for_each(|s| *s = -2.0);
    // a third primitive far outside every frustum
    f.push(&Primitive {
        position: [40.0, 0.0, 0.0],
        rotation: [1.0, 0.0, 0.0, 0.0],
        log_scale: [-2.0; 3],
        opacity_logit: 2.0,
        sh: vec![1.0; 3],
    });
    let dec = PruneDecision {
        mask: vec![false, false, true],
        pairwise_sims: None,
        valid_view_count: vec![0; 3],
    };
    let pruned = apply_prune(&f, &dec).unwrap();
    for v in &views {
        let a = render(&f, v, [0.0; 3]);
        let b = render(&pruned, v, [0.0; 3]);
        assert_eq!(a.color, b.color);
        assert_eq!(a.alpha, b.alpha);
    }
}

#[test]
fn level_mask_matches_direct_evaluation() {
    let dims = [64, 64, 128, 256];
    for t in 1..=6 {
        let m = level_mask(t, &dims).unwrap();
        assert_eq!(m.len(), 512);
        for k in 1..=512 {
            assert_eq!(m[k - 1], level_keeps(k, t, &dims), "t={t} k={k}");
        }
        if t >= 2 {
            let prev = level_mask(t - 1, &dims).unwrap();
            assert!(prev.iter().zip(&m).all(|(p, c)| !p || *c));
        }
    }
    let kept: Vec<usize> = (1..=6).map(|t| level_mask(t, &dims).unwrap().iter().filter(|k| **k).count()).collect();
    assert_eq!(kept, vec![256, 384, 448, 512, 512, 512]);
}

#[test]
fn prune_rule_matches_brute_force_oracle() {
    let mut rng = rng::seeded(2024);
    let (mut pruned, mut exempt, mut kept) = (0, 0, 0);
    for case in 0..1000 {
        let (field, views, maps, dims, t, tau) = random_case(&mut rng, false);
        let stack = stack_of(dims.clone(), maps.clone());
        let d = compute_prune_mask(&field, &views, &stack, t, tau).unwrap();
        for j in 0..field.len() {
            let (expect, valid) = oracle_prune(&field.position(j), &views, &maps, &dims, t, tau);
            assert_eq!(d.mask[j], expect, "case {case} primitive {j}");
            assert_eq!(d.valid_view_count[j] as usize, valid, "case {case} primitive {j}");
            match (expect, valid < 2) {
                (true, _) => pruned += 1,
                (false, true) => exempt += 1,
                (false, false) => kept += 1,
            }
        }
    }
    // the generator exercises every branch
    assert!(pruned > 100 && exempt > 100 && kept > 100, "{pruned} {exempt} {kept}");
}

#[test]
fn threshold_extremes() {
    let mut rng = rng::seeded(77);
    for _ in 0..200 {
        let (field, views, maps, dims, t, _) = random_case(&mut rng, true);
        let stack = stack_of(dims, maps);
        let low = compute_prune_mask(&field, &views, &stack, t, 1e-12).unwrap();
        assert!(low.mask.iter().all(|m| !m));
        let tol = 1e-9;
        let high = compute_prune_mask_with(&field, &views, &stack, t, 1.0 - tol, true).unwrap();
        for (j, sims) in high.pairwise_sims.as_ref().unwrap().iter().enumerate() {
            let expect = high.valid_view_count[j] >= 2 && sims.iter().all(|s| *s < 1.0 - tol);
            assert_eq!(high.mask[j], expect);
        }
    }
}

proptest! {
    #[test]
    fn masked_similarity_is_scale_invariant(
        a in prop::collection::vec(-5.0f64..5.0, 6),
        b in prop::collection::vec(-5.0f64..5.0, 6),
        mask in prop::collection::vec(any::<bool>(), 6),
        lambda in 0.01f64..100.0,
    ) {
        let s = masked_similarity(&a, &b, &mask);
        let scaled: Vec<f64> = a.iter().map(|x| x * lambda).collect();
        prop_assert!((masked_similarity(&scaled, &b, &mask) - s).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn level_masks_grow_with_t(dims in prop::collection::vec(1usize..20, 1..6)) {
        for t in 2..dims.len() + 3 {
            let prev = level_mask(t - 1, &dims).unwrap();
            let cur = level_mask(t, &dims).unwrap();
            prop_assert!(prev.iter().zip(&cur).all(|(p, c)| !p || *c));
        }
    }
}
