//! Shared fixtures for the integration suites.

use nalgebra::{Matrix3, Vector3};
use sl_core::geometry::{Device, Distortion, Extrinsics, Intrinsics, StereoRig};
use sl_core::simulator::{Plane, Scene};

/// Camera-left-of-projector rig with the baseline along `baseline` meters.
pub fn rig(
    cam_size: (u32, u32),
    cam_f: f64,
    distortion: Distortion,
    baseline: Vector3<f64>,
) -> StereoRig {
    let (w, h) = cam_size;
    let cam = Device::new(
        Intrinsics::new(cam_f, cam_f, w as f64 / 2.0, h as f64 / 2.0, w, h).unwrap(),
        distortion,
    )
    .unwrap();
    let proj = Device::new(
        Intrinsics::new(700.0, 700.0, 456.0, 570.0, 912, 1140).unwrap(),
        distortion,
    )
    .unwrap();
    StereoRig::new(cam, proj, Extrinsics::new(Matrix3::identity(), baseline).unwrap()).unwrap()
}

pub fn fronto_plane(z: f64) -> Scene {
    Scene::Plane(Plane {
        point: Vector3::new(0.0, 0.0, z),
        normal: Vector3::new(0.0, 0.0, -1.0),
    })
}
