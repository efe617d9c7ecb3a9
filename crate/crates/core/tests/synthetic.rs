use mcgs_core::initializer::{build_seed_cloud, generate_matches};
use mcgs_core::raster::reference::render_reference;
use mcgs_core::synthetic::{make_scene, ScenePreset, SceneSpec, BACKGROUND};
use mcgs_core::CameraView;
use nalgebra::Vector3;

/// Pinhole projection written out by hand: inside the image and in front of the camera.
fn visible(v: &CameraView, p: &Vector3<f64>) -> bool {
    let c = v.rotation * p + v.translation;
    if c.z <= 0.0 {
        return false;
    }
    let u = v.fx * c.x / c.z + v.cx;
    let w = v.fy * c.y / c.z + v.cy;
    u >= 0.0 && w >= 0.0 && u <= (v.width - 1) as f64 && w <= (v.height - 1) as f64
}

#[test]
fn shell_samples_are_seen_at_least_twice() {
    let scene = make_scene(&SceneSpec::new(ScenePreset::Shell, 100, 8, (64, 64), 7)).unwrap();
    assert_eq!(scene.surface_samples.len(), 100);
    for (i, s) in scene.surface_samples.iter().enumerate() {
        assert_eq!(s.point, scene.gt_field.position(i));
        let seen: Vec<u32> = scene.views.iter().filter(|v| visible(v, &s.point)).map(|v| v.view_id).collect();
        assert_eq!(seen, s.visible_in);
        assert!(seen.len() >= 2, "sample {i} seen by {seen:?}");
    }
}

#[test]
fn oracle_matches_close_the_loop() {
    for preset in [ScenePreset::Cluster, ScenePreset::Plane, ScenePreset::Shell] {
        let scene = make_scene(&SceneSpec::new(preset, 40, 5, (48, 48), 21)).unwrap();
        let matches = generate_matches(&scene, &scene.views, 150, 0.0, 2).unwrap();
        let cloud = build_seed_cloud(&matches, &scene.views).unwrap();
        assert!(cloud.len() > 100, "{preset:?}: {} points", cloud.len());
        for p in &cloud.positions {
            let err = (0..scene.gt_field.len())
                .map(|i| (scene.gt_field.position(i) - p).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(err < 1e-6, "{preset:?}: {err}");
        }
    }
}

#[test]
fn heldout_images_match_the_reference_renderer() {
    let scene = make_scene(&SceneSpec::new(ScenePreset::Cluster, 15, 2, (20, 20), 5).with_heldout(2)).unwrap();
    for v in scene.views.iter().chain(&scene.heldout) {
        let r = render_reference(&scene.gt_field, v, BACKGROUND).color;
        let worst = v.image.data.iter().zip(&r.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 1.0 / 255.0, "{worst}");
    }
}

#[test]
fn presets_place_cameras_as_described() {
    let arc = make_scene(&SceneSpec::new(ScenePreset::Plane, 5, 6, (16, 16), 1)).unwrap();
    for v in &arc.views {
        // a horizontal arc: every centre at the same height
        assert!(v.center().y.abs() < 1e-12);
    }
    let shell = make_scene(&SceneSpec::new(ScenePreset::Shell, 5, 6, (16, 16), 1)).unwrap();
    let r0 = shell.views[0].center().norm();
    let heights: Vec<f64> = shell.views.iter().map(|v| v.center().y).collect();
    assert!(shell.views.iter().all(|v| (v.center().norm() - r0).abs() < 1e-9));
    assert!(heights.iter().any(|h| *h > 0.5) && heights.iter().any(|h| *h < -0.5));
    assert!(ScenePreset::Shell.is_panoramic() && !ScenePreset::Plane.is_panoramic());
}

#[test]
fn preset_names_round_trip() {
    for p in [ScenePreset::Cluster, ScenePreset::Plane, ScenePreset::Shell] {
        assert_eq!(ScenePreset::parse(p.name()).unwrap(), p);
    }
    assert!(ScenePreset::parse("torus").is_err());
}
