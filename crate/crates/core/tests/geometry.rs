use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use splatinsert::camera::{central_camera, make_trajectory, ArcSide, Camera, Intrinsics, OrientedBBox, TrajectorySpec};
use splatinsert::mask::{project_bbox_mask, project_bbox_mask_with, MaskMode};

fn bbox() -> OrientedBBox {
    OrientedBBox::new(
        Vector3::new(0.3, -0.2, 0.5),
        Vector3::new(0.4, 0.25, 0.3),
        UnitQuaternion::from_euler_angles(0.1, -0.2, 0.7),
    )
    .unwrap()
}

#[test]
fn fourteen_views_over_120_degrees_per_side() {
    let b = bbox();
    let k = Intrinsics::from_fov(64, 48, 60.0);
    for side in [ArcSide::Left, ArcSide::Right] {
        let cams = make_trajectory(&b, &TrajectorySpec::new(side, k)).unwrap();
        assert_eq!(cams.len(), 14);
        let az: Vec<f64> = cams
            .iter()
            .map(|c| {
                let local = b.to_local(&c.position());
                local.y.atan2(local.x)
            })
            .collect();
        let step = 120f64.to_radians() / 13.0;
        for w in az.windows(2) {
            let d = (w[1] - w[0]).rem_euclid(std::f64::consts::TAU);
            assert!((d - step).abs() < 1e-9, "{d} vs {step}");
        }
        for c in &cams {
            let to_center = (b.center - c.position()).normalize();
            assert!((to_center.dot(&c.forward()) - 1.0).abs() < 1e-9);
            // Center lands on the principal point.
            let p = c.project_camera_point(&c.world_to_camera(&b.center));
            assert!((p[0] - 32.0).abs() < 1e-9 && (p[1] - 24.0).abs() < 1e-9);
        }
        assert_eq!(central_camera(&cams).unwrap(), &cams[6]);
    }
}

fn camera_toward(eye: Vector3<f64>, target: Vector3<f64>) -> Camera {
    Camera::look_at(Intrinsics::from_fov(48, 40, 70.0), eye, target, Vector3::z()).unwrap()
}

fn arb_box() -> impl Strategy<Value = OrientedBBox> {
    (
        prop::array::uniform3(-0.5f64..0.5),
        prop::array::uniform3(0.05f64..0.8),
        prop::array::uniform3(-3.0f64..3.0),
    )
        .prop_map(|(c, h, e)| {
            OrientedBBox::new(Vector3::from(c), Vector3::from(h), UnitQuaternion::from_euler_angles(e[0], e[1], e[2])).unwrap()
        })
}

fn arb_eye() -> impl Strategy<Value = Vector3<f64>> {
    (0.0f64..6.28, -1.2f64..1.2, 2.0f64..6.0).prop_map(|(a, e, r)| Vector3::new(r * a.cos() * e.cos(), r * a.sin() * e.cos(), r * e.sin()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn points_inside_the_box_land_on_the_mask(
        b in arb_box(),
        eye in arb_eye(),
        aim in prop::array::uniform3(-0.6f64..0.6),
        locals in prop::collection::vec(prop::array::uniform3(-0.999f64..0.999), 1..40),
    ) {
        let cam = camera_toward(eye, Vector3::from(aim));
        let mask = project_bbox_mask(&b, &cam);
        for l in locals {
            let p = b.to_world(&Vector3::new(l[0] * b.half_extents.x, l[1] * b.half_extents.y, l[2] * b.half_extents.z));
            let t = cam.world_to_camera(&p);
            if t.z <= 1e-3 {
                continue;
            }
            let [u, v] = cam.project_camera_point(&t);
            if u < 0.0 || v < 0.0 || u >= cam.width() as f64 || v >= cam.height() as f64 {
                continue;
            }
            prop_assert_eq!(mask.get(u as usize, v as usize, 0), 1.0, "point {:?} at ({}, {})", p, u, v);
        }
    }

    #[test]
    fn masks_grow_with_the_box(b in arb_box(), eye in arb_eye(), grow in 1.0f64..1.5) {
        let cam = camera_toward(eye, b.center);
        let big = OrientedBBox::new(b.center, b.half_extents * grow, b.rotation).unwrap();
        let small_mask = project_bbox_mask(&b, &cam);
        let big_mask = project_bbox_mask(&big, &cam);
        let rect = project_bbox_mask_with(&b, &cam, MaskMode::Rectangle);
        for i in 0..small_mask.pixel_count() {
            prop_assert!(small_mask.data()[i] <= big_mask.data()[i]);
            prop_assert!(small_mask.data()[i] <= rect.data()[i]);
        }
        prop_assert!(small_mask.is_binary());
    }
}
