use nowcast_demo::ops::{cloud_scene, crps, forecast_drift, segment, INPUT_FRAMES};

#[test]
fn segmentation_masks_background_to_the_maximum() {
    let n = 64;
    let scene = cloud_scene(n, 3, 0.0, 0.0);
    let s = segment(&scene, n, n).unwrap();
    let top = scene.iter().copied().fold(f32::MIN, f32::max);
    assert!(s.cloud_fraction() > 0.0 && s.cloud_fraction() < 1.0);
    for (v, m) in scene.iter().zip(s.masked()) {
        if *v > s.threshold() {
            assert_eq!(m, top);
        } else {
            assert_eq!(m, *v);
        }
    }
}

#[test]
fn segmentation_rejects_bad_input() {
    assert!(segment(&[0.5; 16], 4, 4).is_err());
    assert!(segment(&[0.0, 1.0, 2.0], 2, 2).is_err());
}

#[test]
fn forecast_tracks_the_drift() {
    let f = forecast_drift(96, 5, 2.0, 1.0, 6).unwrap();
    assert!(!f.fallback());
    assert_eq!(f.inputs().len(), INPUT_FRAMES * 96 * 96);
    assert_eq!(f.frames().len(), 6 * 96 * 96);
    assert_eq!(f.features().len() % 4, 0);
    assert!((f.mean_u() - 2.0).abs() < 0.1 && (f.mean_v() - 1.0).abs() < 0.1);
}

#[test]
fn crps_values() {
    assert_eq!(crps(&[0.0, 2.0], 1.0, "nrg").unwrap(), 0.5);
    assert_eq!(crps(&[0.0, 2.0], 1.0, "fair").unwrap(), 0.0);
    assert!(crps(&[1.0], 0.0, "fair").is_err());
    assert!(crps(&[1.0], 0.0, "median").is_err());
}
