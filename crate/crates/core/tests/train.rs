mod common;

use common::Lcg;
use splatinsert::camera::Intrinsics;
use splatinsert::imageio::{decode_png_image, encode_png8};
use splatinsert::mask::project_bbox_mask;
use splatinsert::metrics::psnr;
use splatinsert::pipeline::{seed_coarse_prior, MockInpainter};
use splatinsert::recon::{finetune, EditedView, SupervisionSet, TrainConfig, Trainer, TrainingView};
use splatinsert::synthetic::{ring_cameras, room_bbox, room_scene};
use splatinsert::{render_fast, Error, GaussianScene, Image};

const BG: [f64; 3] = [0.0; 3];

fn quantized(img: &Image) -> Image {
    decode_png_image(&encode_png8(img).unwrap()).unwrap()
}

/// Original views of the room as 8-bit captures, plus edited views of the
/// mock object from a second ring.
fn supervision(edited: bool) -> SupervisionSet {
    let scene = room_scene(0);
    let bbox = room_bbox();
    let k = Intrinsics::from_fov(32, 32, 60.0);
    let training_views = ring_cameras(k, 6, 2.4, 1.4)
        .unwrap()
        .into_iter()
        .map(|camera| TrainingView {
            image: quantized(&render_fast(&scene, &camera, BG).unwrap().color),
            mask: if edited { project_bbox_mask(&bbox, &camera) } else { Image::new(32, 32, 1) },
            camera,
        })
        .collect();
    let edited_views = if edited {
        let full = scene.merged(&MockInpainter::new(bbox).hidden_object("a toy", 7));
        ring_cameras(k, 4, 1.6, 1.0)
            .unwrap()
            .into_iter()
            .map(|camera| EditedView {
                image: render_fast(&full, &camera, BG).unwrap().color,
                camera,
            })
            .collect()
    } else {
        Vec::new()
    };
    SupervisionSet {
        edited_views,
        training_views,
    }
}

fn short_config(iterations: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        densify_from: 20,
        densify_interval: 20,
        densify_until: 80,
        opacity_reset_interval: Some(60),
        log_interval: 5,
        ..TrainConfig::toy()
    }
}

fn initial() -> GaussianScene {
    room_scene(0).merged(&seed_coarse_prior(&room_bbox(), 60, 1).unwrap())
}

#[test]
fn zero_iterations_return_the_initial_scene() {
    let sup = supervision(true);
    assert_eq!(finetune(initial(), &sup, short_config(0)).unwrap(), initial());
}

#[test]
fn training_is_deterministic_and_changes_the_scene() {
    let sup = supervision(true);
    let a = finetune(initial(), &sup, short_config(100)).unwrap();
    let b = finetune(initial(), &sup, short_config(100)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, initial());
    a.validate().unwrap();
    for q in a.rotations() {
        let n: f64 = q.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() <= 1e-6);
    }
    let c = finetune(initial(), &sup, TrainConfig { seed: 1, ..short_config(100) }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn checkpoint_resume_is_bit_exact() {
    let sup = supervision(true);
    let single = finetune(initial(), &sup, short_config(100)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    // Stop inside the densification window and right after a reset.
    for stop in [41, 61] {
        let path = dir.path().join(format!("ckpt_{stop}.ply"));
        let mut t = Trainer::new(initial(), &sup, short_config(100)).unwrap();
        t.run_until(stop, &mut |_| Ok(())).unwrap();
        t.save_checkpoint(&path).unwrap();
        drop(t);
        let mut resumed = Trainer::resume(&path, &sup, short_config(100)).unwrap();
        assert_eq!(resumed.iteration(), stop);
        resumed.run(&mut |_| Ok(())).unwrap();
        assert_eq!(resumed.into_scene(), single);
    }
    let path = dir.path().join("ckpt_41.ply");
    let err = Trainer::resume(&path, &sup, short_config(120)).err().unwrap();
    assert!(matches!(err, Error::Parameter(_)));
}

#[test]
fn log_records_follow_the_interval() {
    let sup = supervision(true);
    let mut t = Trainer::new(initial(), &sup, short_config(30)).unwrap();
    let mut iters = Vec::new();
    t.run(&mut |r| {
        assert!(r.loss.is_finite() && r.count > 0);
        iters.push(r.iter);
        Ok(())
    })
    .unwrap();
    assert_eq!(iters, [5, 10, 15, 20, 25, 30]);
    assert!(t.is_done());
}

/// Original views only, rendered from the scene itself and perturbed by
/// uniform capture noise (std 0.02) so the starting PSNR is finite.
fn noisy_original_views() -> SupervisionSet {
    let mut sup = supervision(false);
    let mut rng = Lcg(12345);
    for v in &mut sup.training_views {
        for x in v.image.data_mut() {
            *x = (*x + 0.02 * (rng.next_f64() - 0.5) * 12f64.sqrt()).clamp(0.0, 1.0);
        }
    }
    sup
}

#[test]
fn original_views_alone_keep_the_scene_stationary() {
    let sup = noisy_original_views();
    let scene = room_scene(0);
    // Densification is off: clones double the local opacity and need many
    // iterations to settle, which is not what this check is about.
    let config = TrainConfig {
        iterations: 300,
        densify_from: 300,
        ..TrainConfig::toy()
    };
    let mean_psnr = |s: &GaussianScene| {
        sup.training_views
            .iter()
            .map(|v| psnr(&render_fast(s, &v.camera, BG).unwrap().color, &v.image, None).unwrap())
            .sum::<f64>()
            / sup.training_views.len() as f64
    };
    let before = mean_psnr(&scene);
    let after = mean_psnr(&finetune(scene, &sup, config).unwrap());
    assert!(after >= before - 0.5, "{before:.2} dB -> {after:.2} dB");
}

#[test]
fn supervision_is_validated() {
    let mut sup = supervision(true);
    sup.training_views[0].mask = Image::filled(32, 32, 1, 0.5);
    assert!(matches!(Trainer::new(initial(), &sup, short_config(1)).err().unwrap(), Error::Parameter(_)));
    assert!(finetune(initial(), &SupervisionSet::default(), short_config(1)).is_err());
}
