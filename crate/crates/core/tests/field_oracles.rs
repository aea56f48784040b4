//! Smoothing and field construction checked against direct computations.

use anatomy_warp_core::{
    anatomy_field, gaussian_kernel, gaussian_smooth, rasterize_indicator, spatial_gradient, AnisotropyMode,
    LabelVolume, ScalarVolume, SmoothingSpec, VolumeGeometry,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mirror index into `0..n` with the edge sample repeated.
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Dense O(n · k³) convolution with the outer product of three 1D kernels.
fn dense_convolution(vol: &ScalarVolume, kernels: &[Vec<f64>; 3]) -> Vec<f64> {
    let [nx, ny, nz] = vol.geometry().shape();
    let r = kernels.each_ref().map(|k| (k.len() / 2) as isize);
    let mut out = vec![0.0; nx * ny * nz];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let mut acc = 0.0;
                for kz in -r[2]..=r[2] {
                    let sz = mirror(z as isize + kz, nz);
                    let wz = kernels[2][(kz + r[2]) as usize];
                    for ky in -r[1]..=r[1] {
                        let sy = mirror(y as isize + ky, ny);
                        let wy = kernels[1][(ky + r[1]) as usize];
                        for kx in -r[0]..=r[0] {
                            let sx = mirror(x as isize + kx, nx);
                            acc += wz * wy * kernels[0][(kx + r[0]) as usize] * *vol.get(sx, sy, sz);
                        }
                    }
                }
                out[x + nx * (y + ny * z)] = acc;
            }
        }
    }
    out
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn impulse_matches_dense_convolution() {
    let g = VolumeGeometry::isotropic([33, 33, 33]).unwrap();
    let mut v = ScalarVolume::zeros(g);
    *v.get_mut(16, 16, 16) = 1.0;
    let spec = SmoothingSpec::voxel_isotropic(2.0);
    let fast = gaussian_smooth(&v, &spec).unwrap();
    let k = gaussian_kernel(2.0, 4.0);
    let dense = dense_convolution(&v, &[k.clone(), k.clone(), k]);
    assert!(max_abs_diff(fast.data(), &dense) <= 1e-6);
}

#[test]
fn random_volumes_match_dense_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cases = [
        ([33, 33, 33], [1.0, 1.0, 1.0], 1.0, AnisotropyMode::VoxelIsotropic),
        (
            [17, 13, 9],
            [0.3125, 0.3125, 3.0],
            6.0,
            AnisotropyMode::PhysicalIsotropic,
        ),
        ([5, 20, 7], [1.0, 0.5, 2.0], 2.5, AnisotropyMode::PhysicalIsotropic),
        ([3, 3, 3], [1.0; 3], 3.0, AnisotropyMode::VoxelIsotropic),
    ];
    for (shape, spacing, sigma, mode) in cases {
        let g = VolumeGeometry::new(shape, spacing).unwrap();
        let v = ScalarVolume::from_fn(g, |_, _, _| rng.gen_range(-1.0..1.0));
        let spec = SmoothingSpec {
            sigma_inplane: sigma,
            anisotropy: mode,
            truncation: 4.0,
        };
        let fast = gaussian_smooth(&v, &spec).unwrap();
        let kernels = spec.axis_sigmas(&g).map(|s| gaussian_kernel(s, 4.0));
        let dense = dense_convolution(&v, &kernels);
        let err = max_abs_diff(fast.data(), &dense);
        assert!(err <= 1e-6, "{shape:?}: {err}");
    }
}

/// Closed-form normalised sampled Gaussian.
fn sampled_gaussian(d: isize, sigma: f64, radius: isize) -> f64 {
    if d.abs() > radius {
        return 0.0;
    }
    let z: f64 = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .sum();
    (-(d * d) as f64 / (2.0 * sigma * sigma)).exp() / z
}

#[test]
fn gradient_of_smoothed_impulse_matches_closed_form() {
    let n = 33;
    let c = 16isize;
    let sigma = 2.0;
    let radius = 8;
    let g = VolumeGeometry::isotropic([n, n, n]).unwrap();
    let mut v = ScalarVolume::zeros(g);
    *v.get_mut(16, 16, 16) = 1.0;
    let grad = spatial_gradient(&gaussian_smooth(&v, &SmoothingSpec::voxel_isotropic(sigma)).unwrap()).unwrap();

    let profile = |d: isize| sampled_gaussian(d, sigma, radius);
    let derivative = |d: isize| 0.5 * (profile(d + 1) - profile(d - 1));
    let margin = (3.0 * sigma) as usize;
    let peak = derivative(-2);
    let mut checked = 0;
    for z in margin..n - margin {
        for y in margin..n - margin {
            for x in margin..n - margin {
                let d = [x as isize - c, y as isize - c, z as isize - c];
                let expected = [
                    derivative(d[0]) * profile(d[1]) * profile(d[2]),
                    profile(d[0]) * derivative(d[1]) * profile(d[2]),
                    profile(d[0]) * profile(d[1]) * derivative(d[2]),
                ];
                let got = grad.at(g.index(x, y, z));
                for a in 0..3 {
                    let e = expected[a];
                    if e.abs() > 1e-9 * peak {
                        assert!(((got[a] - e) / e).abs() <= 1e-3, "{d:?} axis {a}: {} vs {e}", got[a]);
                        checked += 1;
                    } else {
                        assert!((got[a] - e).abs() <= 1e-12 * peak);
                    }
                }
            }
        }
    }
    assert!(checked > 1000);
}

#[test]
fn gradient_tracks_continuous_derivative_for_wide_kernels() {
    // the central difference of g(d) = exp(-d²/2σ²) differs from g'(d) by a
    // relative (d²/σ² - 3)/(6σ²) to leading order
    let sigma = 12.0;
    let n = 121;
    let c = 60isize;
    // a plane impulse: y and z are constant so only x sees the kernel
    let g = VolumeGeometry::isotropic([n, 2, 2]).unwrap();
    let v = ScalarVolume::from_fn(g, |x, _, _| (x as isize == c) as u8 as f64);
    let smooth = gaussian_smooth(&v, &SmoothingSpec::voxel_isotropic(sigma)).unwrap();
    let grad = spatial_gradient(&smooth).unwrap();
    let z: f64 = (-48..=48)
        .map(|i: i32| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .sum();
    for x in (c - 24)..=(c + 24) {
        let d = (x - c) as f64;
        if d.abs() < sigma / 2.0 {
            continue;
        }
        let analytic = -d / (sigma * sigma) * (-d * d / (2.0 * sigma * sigma)).exp() / z;
        let bound = ((d * d / (sigma * sigma) - 3.0) / (6.0 * sigma * sigma)).abs();
        let got = grad.component(0)[x as usize];
        let rel = ((got - analytic) / analytic).abs();
        assert!(rel <= 1.05 * bound + 1e-5, "x={x}: {rel} > {bound}");
    }
}

fn blob_labels(g: VolumeGeometry, centre: [f64; 3], radius: [f64; 3], label: u32) -> LabelVolume {
    LabelVolume::from_fn(g, |x, y, z| {
        let p = [x as f64, y as f64, z as f64];
        let r2: f64 = (0..3).map(|a| ((p[a] - centre[a]) / radius[a]).powi(2)).sum();
        if r2 <= 1.0 {
            label
        } else {
            0
        }
    })
}

#[test]
fn two_organs_sum_to_combined_field() {
    let g = VolumeGeometry::new([40, 36, 12], [0.5, 0.5, 2.0]).unwrap();
    let rectum = blob_labels(g, [12.0, 18.0, 6.0], [5.0, 6.0, 2.0], 1);
    let bladder = blob_labels(g, [28.0, 18.0, 5.0], [6.0, 5.0, 2.5], 2);
    let labels = LabelVolume::from_fn(g, |x, y, z| (*rectum.get(x, y, z)).max(*bladder.get(x, y, z)));
    let spec = SmoothingSpec {
        sigma_inplane: 4.0,
        ..SmoothingSpec::default()
    };
    let both = anatomy_field(&labels, &[(1, 120.0), (2, -60.0)], &spec).unwrap();
    let mut sum = anatomy_field(&labels, &[(1, 120.0)], &spec).unwrap();
    sum.add_assign(&anatomy_field(&labels, &[(2, -60.0)], &spec).unwrap())
        .unwrap();
    for a in 0..3 {
        assert!(max_abs_diff(both.component(a), sum.component(a)) <= 1e-9);
    }
}

#[test]
fn translation_equivariance() {
    let n = [40, 40, 40];
    let g = VolumeGeometry::isotropic(n).unwrap();
    let sigma = 2.0;
    let offset = [3usize, 2, 1];
    // mask support stays ≥ 3σ + offset away from every face
    let a = blob_labels(g, [18.0, 19.0, 20.0], [4.0, 3.0, 5.0], 1);
    let b = LabelVolume::from_fn(g, |x, y, z| {
        if x >= offset[0] && y >= offset[1] && z >= offset[2] {
            *a.get(x - offset[0], y - offset[1], z - offset[2])
        } else {
            0
        }
    });
    let spec = SmoothingSpec::voxel_isotropic(sigma);
    let fa = anatomy_field(&a, &[(1, 1.0)], &spec).unwrap();
    let fb = anatomy_field(&b, &[(1, 1.0)], &spec).unwrap();
    let mut worst = 0.0f64;
    for z in 0..n[2] - offset[2] {
        for y in 0..n[1] - offset[1] {
            for x in 0..n[0] - offset[0] {
                let i = g.index(x, y, z);
                let j = g.index(x + offset[0], y + offset[1], z + offset[2]);
                for c in 0..3 {
                    worst = worst.max((fa.component(c)[i] - fb.component(c)[j]).abs());
                }
            }
        }
    }
    assert!(worst <= 1e-6, "{worst}");
}

#[test]
fn mirror_symmetry() {
    let n = [30, 26, 22];
    let g = VolumeGeometry::new(n, [0.7, 0.7, 1.5]).unwrap();
    let labels = blob_labels(g, [9.0, 11.0, 8.0], [4.0, 6.0, 3.0], 1);
    let spec = SmoothingSpec {
        sigma_inplane: 2.5,
        ..SmoothingSpec::default()
    };
    let f = anatomy_field(&labels, &[(1, 40.0)], &spec).unwrap();
    for axis in 0..3 {
        let flip = |p: [usize; 3]| {
            let mut q = p;
            q[axis] = n[axis] - 1 - p[axis];
            q
        };
        let mirrored = LabelVolume::from_fn(g, |x, y, z| {
            let q = flip([x, y, z]);
            *labels.get(q[0], q[1], q[2])
        });
        let fm = anatomy_field(&mirrored, &[(1, 40.0)], &spec).unwrap();
        for i in 0..g.len() {
            let q = flip(g.coords(i));
            let j = g.index(q[0], q[1], q[2]);
            for c in 0..3 {
                let sign = if c == axis { -1.0 } else { 1.0 };
                assert!((fm.component(c)[i] - sign * f.component(c)[j]).abs() <= 1e-6);
            }
        }
    }
}

#[test]
fn indicator_of_two_label_volume_matches_scan() {
    let g = VolumeGeometry::isotropic([12, 11, 10]).unwrap();
    let rectum = blob_labels(g, [3.0, 5.0, 5.0], [2.5, 3.0, 3.0], 1);
    let labels = LabelVolume::from_fn(g, |x, y, z| if x > 7 && y < 6 { 2 } else { *rectum.get(x, y, z) });
    let ind = rasterize_indicator(&labels, 2).unwrap();
    let mut count = 0;
    for z in 0..10 {
        for y in 0..11 {
            for x in 0..12 {
                let inside = x > 7 && y < 6;
                count += inside as usize;
                assert_eq!(*ind.get(x, y, z) == 1.0, inside);
            }
        }
    }
    assert_eq!(ind.data().iter().sum::<f64>() as usize, count);
    assert_eq!(count, 4 * 6 * 10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn field_is_linear_in_amplitude(
        seed in any::<u64>(),
        sigma in 0.8f64..4.0,
        amplitude in -1500.0f64..1500.0,
        alpha in -3.0f64..3.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = VolumeGeometry::new([20, 18, 10], [0.5, 0.5, 1.5]).unwrap();
        let labels = LabelVolume::from_fn(g, |_, _, _| (rng.gen::<f64>() < 0.15) as u32);
        let spec = SmoothingSpec { sigma_inplane: sigma, ..SmoothingSpec::default() };
        let base = anatomy_field(&labels, &[(1, amplitude)], &spec).unwrap();
        let scaled = anatomy_field(&labels, &[(1, alpha * amplitude)], &spec).unwrap();
        for c in 0..3 {
            for (s, b) in scaled.component(c).iter().zip(base.component(c)) {
                prop_assert!((s - alpha * b).abs() <= 1e-9);
            }
        }
    }
}
