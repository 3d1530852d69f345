mod common;

use common::Lcg;
use splatinsert::camera::Intrinsics;
use splatinsert::mask::project_bbox_mask;
use splatinsert::metrics::{background_fidelity_eval, consistency_eval, psnr, region_ssim, Region, PSNR_CAP};
use splatinsert::recon::{EditedView, TrainingView};
use splatinsert::synthetic::{ring_cameras, room_bbox, room_scene};
use splatinsert::{render_fast, Error, GaussianScene, Image};

fn random_image(rng: &mut Lcg, w: usize, h: usize) -> Image {
    Image::from_data(w, h, 3, (0..w * h * 3).map(|_| rng.next_f64()).collect()).unwrap()
}

/// PSNR written out with plain loops over a list of selected pixels.
fn scalar_psnr(a: &Image, b: &Image, pixels: &[(usize, usize)]) -> f64 {
    let mut sum = 0.0;
    for &(x, y) in pixels {
        for c in 0..3 {
            sum += (a.get(x, y, c) - b.get(x, y, c)).powi(2);
        }
    }
    -10.0 * (sum / (3 * pixels.len()) as f64).log10()
}

#[test]
fn psnr_matches_a_scalar_oracle() {
    let mut rng = Lcg(21);
    let (w, h) = (17, 11);
    let a = random_image(&mut rng, w, h);
    let b = random_image(&mut rng, w, h);
    let all: Vec<_> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).collect();
    assert!((psnr(&a, &b, None).unwrap() - scalar_psnr(&a, &b, &all)).abs() < 1e-9);

    let mut mask = Image::new(w, h, 1);
    let mut inside = Vec::new();
    for &(x, y) in &all {
        if rng.next_f64() < 0.3 {
            mask.set(x, y, 0, 1.0);
            inside.push((x, y));
        }
    }
    assert!(!inside.is_empty());
    assert!((psnr(&a, &b, Some(&mask)).unwrap() - scalar_psnr(&a, &b, &inside)).abs() < 1e-9);
}

#[test]
fn masked_psnr_ignores_pixels_outside_the_region() {
    let mut rng = Lcg(22);
    let a = random_image(&mut rng, 12, 12);
    let mut b = a.clone();
    let mut mask = Image::new(12, 12, 1);
    for y in 0..12 {
        for x in 0..12 {
            if x < 6 {
                mask.set(x, y, 0, 1.0);
            } else {
                b.set(x, y, 0, 1.0 - a.get(x, y, 0));
            }
        }
    }
    assert_eq!(psnr(&a, &b, Some(&mask)).unwrap(), PSNR_CAP);
    assert!((region_ssim(&a, &b, Some(&mask)).unwrap()) < 1.0);
    assert!(psnr(&a, &b, Some(&mask.complement())).unwrap() < 20.0);
}

fn edited_views(scene: &GaussianScene, n: usize) -> Vec<EditedView> {
    ring_cameras(Intrinsics::from_fov(24, 24, 60.0), n, 2.0, 1.0)
        .unwrap()
        .into_iter()
        .map(|camera| EditedView {
            image: render_fast(scene, &camera, [0.0; 3]).unwrap().color,
            camera,
        })
        .collect()
}

#[test]
fn zero_views_are_rejected() {
    let scene = room_scene(0);
    assert!(matches!(consistency_eval(&scene, &[], None, [0.0; 3]), Err(Error::Parameter(_))));
    assert!(matches!(background_fidelity_eval(&scene, &scene, &[], [0.0; 3]), Err(Error::Parameter(_))));
}

#[test]
fn a_scene_matching_its_views_scores_the_cap() {
    let scene = room_scene(0);
    let views = edited_views(&scene, 3);
    let report = consistency_eval(&scene, &views, None, [0.0; 3]).unwrap();
    assert_eq!(report.region, Region::Full);
    assert_eq!(report.views.len(), 3);
    assert_eq!(report.mean_psnr, PSNR_CAP);
    assert!((report.mean_ssim - 1.0).abs() < 1e-12);

    let masks: Vec<Image> = views.iter().map(|v| project_bbox_mask(&room_bbox(), &v.camera)).collect();
    let masked = consistency_eval(&scene, &views, Some(&masks), [0.0; 3]).unwrap();
    assert_eq!(masked.region, Region::Masked);
    assert_eq!(masked.mean_psnr, PSNR_CAP);
    assert!(consistency_eval(&scene, &views, Some(&masks[..2]), [0.0; 3]).is_err());
}

#[test]
fn unchanged_scene_has_perfect_background_fidelity() {
    let scene = room_scene(0);
    let training: Vec<TrainingView> = edited_views(&scene, 3)
        .into_iter()
        .map(|v| TrainingView {
            mask: project_bbox_mask(&room_bbox(), &v.camera),
            image: v.image,
            camera: v.camera,
        })
        .collect();
    let report = background_fidelity_eval(&scene, &scene, &training, [0.0; 3]).unwrap();
    assert_eq!(report.region, Region::Unmasked);
    assert_eq!(report.mean_psnr, PSNR_CAP);
    assert!((report.mean_ssim - 1.0).abs() < 1e-12);

    let mut full = training.clone();
    for v in &mut full {
        v.mask = Image::filled(24, 24, 1, 1.0);
    }
    let err = background_fidelity_eval(&scene, &scene, &full, [0.0; 3]).unwrap_err();
    assert!(matches!(err, Error::Parameter(_)));
}

#[test]
fn reports_serialize_to_json_and_csv() {
    let scene = room_scene(0);
    let report = consistency_eval(&scene, &edited_views(&scene, 2), None, [0.0; 3])
        .unwrap()
        .with_metadata(Some("room".into()), Some("abc".into()));
    let json: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
    assert_eq!(json["region"], "full");
    assert_eq!(json["scene_id"], "room");
    assert_eq!(json["config_hash"], "abc");
    assert_eq!(json["views"].as_array().unwrap().len(), 2);
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().last().unwrap().starts_with("mean,full,"));
}
