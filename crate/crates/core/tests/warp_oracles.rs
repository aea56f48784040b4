use anatomy_warp_core::{
    gaussian_smooth, sample_at, warp_image, warp_labels, BoundaryMode, InterpolationMode, LabelVolume,
    MultiChannelVolume, ScalarVolume, SmoothingSpec, VectorField, VolumeGeometry,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRILINEAR: InterpolationMode = InterpolationMode::Trilinear;
const CLAMP: BoundaryMode = BoundaryMode::ClampToEdge;

/// Textbook trilinear interpolation with edge clamping.
fn eight_corner(vol: &ScalarVolume, p: [f64; 3]) -> f64 {
    let shape = vol.geometry().shape();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    let mut w = [0.0; 3];
    for a in 0..3 {
        let c = p[a].clamp(0.0, (shape[a] - 1) as f64);
        let f = c.floor();
        lo[a] = f as usize;
        hi[a] = (lo[a] + 1).min(shape[a] - 1);
        w[a] = c - f;
    }
    let mut acc = 0.0;
    for corner in 0..8 {
        let pick = |a: usize| corner >> a & 1 == 1;
        let (x, y, z) = (
            if pick(0) { hi[0] } else { lo[0] },
            if pick(1) { hi[1] } else { lo[1] },
            if pick(2) { hi[2] } else { lo[2] },
        );
        let weight: f64 = (0..3).map(|a| if pick(a) { w[a] } else { 1.0 - w[a] }).product();
        acc += weight * vol.get(x, y, z);
    }
    acc
}

fn random_volume(rng: &mut ChaCha8Rng, shape: [usize; 3]) -> ScalarVolume {
    ScalarVolume::from_fn(VolumeGeometry::isotropic(shape).unwrap(), |_, _, _| {
        rng.gen_range(-100.0..100.0)
    })
}

#[test]
fn trilinear_matches_eight_corner_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let vol = random_volume(&mut rng, [5, 5, 5]);
    for _ in 0..10_000 {
        let p = [0; 3].map(|_| rng.gen_range(-1.5..5.5));
        let got = sample_at(&vol, p, TRILINEAR, CLAMP).unwrap();
        let want = eight_corner(&vol, p);
        assert!((got - want).abs() <= 1e-12, "{p:?}: {got} vs {want}");
    }
}

#[test]
fn integer_shift_matches_index_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let vol = random_volume(&mut rng, [7, 6, 5]);
    let g = *vol.geometry();
    let img = MultiChannelVolume::from_scalar(vol.clone());
    for shift in [[1.0, 0.0, 0.0], [-2.0, 1.0, 0.0], [0.0, 0.0, 3.0], [1.0, -1.0, -1.0]] {
        let field = VectorField::constant(g, shift);
        for boundary in [CLAMP, BoundaryMode::Constant(-7.0)] {
            for interp in [TRILINEAR, InterpolationMode::Nearest] {
                let out = warp_image(&img, &field, interp, boundary).unwrap();
                for i in 0..g.len() {
                    let p = g.coords(i);
                    let src: Vec<isize> = (0..3).map(|a| p[a] as isize + shift[a] as isize).collect();
                    let inside = (0..3).all(|a| src[a] >= 0 && src[a] < g.shape()[a] as isize);
                    let want = match (inside, boundary) {
                        (false, BoundaryMode::Constant(v)) => v,
                        _ => {
                            let c: Vec<usize> = (0..3)
                                .map(|a| src[a].clamp(0, g.shape()[a] as isize - 1) as usize)
                                .collect();
                            *vol.get(c[0], c[1], c[2])
                        }
                    };
                    assert_eq!(out.channel(0)[i], want, "{shift:?} {boundary:?} {interp:?} at {p:?}");
                }
            }
        }
    }
}

#[test]
fn all_channels_share_the_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = random_volume(&mut rng, [9, 8, 4]);
    let b = random_volume(&mut rng, [9, 8, 4]);
    let g = *a.geometry();
    let field = smooth_random_field(&mut rng, g, 2.0);
    let both = MultiChannelVolume::new(g, vec![a.data().to_vec(), b.data().to_vec()]).unwrap();
    let out = warp_image(&both, &field, TRILINEAR, CLAMP).unwrap();
    let only_b = warp_image(&MultiChannelVolume::from_scalar(b), &field, TRILINEAR, CLAMP).unwrap();
    assert_eq!(out.channel(1), only_b.channel(0));
}

fn smooth_random_field(rng: &mut ChaCha8Rng, g: VolumeGeometry, amplitude: f64) -> VectorField {
    let spec = SmoothingSpec::voxel_isotropic(1.5);
    let comps = [0; 3].map(|_| {
        let noise = ScalarVolume::from_fn(g, |_, _, _| rng.gen_range(-1.0..1.0));
        let mut c = gaussian_smooth(&noise, &spec).unwrap().into_vec();
        let peak = c.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        c.iter_mut().for_each(|v| *v *= amplitude / peak);
        c
    });
    VectorField::from_components(g, comps).unwrap()
}

fn support(labels: &LabelVolume) -> Vec<u32> {
    let mut hist = std::collections::BTreeMap::<u32, usize>::new();
    for &l in labels.data() {
        *hist.entry(l).or_default() += 1;
    }
    hist.into_keys().collect()
}

#[test]
fn two_label_histogram_support_never_grows() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = VolumeGeometry::isotropic([16, 14, 10]).unwrap();
    let labels = LabelVolume::from_fn(g, |x, y, _| {
        if x < 5 {
            0
        } else if y < 7 {
            3
        } else {
            8
        }
    });
    let before = support(&labels);
    for _ in 0..50 {
        let field = smooth_random_field(&mut rng, g, 6.0);
        let after = support(&warp_labels(&labels, &field).unwrap());
        assert!(after.iter().all(|l| before.contains(l)), "{after:?} ⊄ {before:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trilinear_output_stays_in_input_range(seed in any::<u64>(), amplitude in 0.0f64..12.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vol = random_volume(&mut rng, [8, 7, 6]);
        let g = *vol.geometry();
        let field = smooth_random_field(&mut rng, g, amplitude);
        let (lo, hi) = vol.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let out = warp_image(&MultiChannelVolume::from_scalar(vol), &field, TRILINEAR, CLAMP).unwrap();
        for &v in out.channel(0) {
            prop_assert!(lo <= v && v <= hi);
        }
    }

    #[test]
    fn warped_labels_are_drawn_from_input(seed in any::<u64>(), amplitude in 0.0f64..12.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = VolumeGeometry::isotropic([8, 7, 6]).unwrap();
        let labels = LabelVolume::from_fn(g, |_, _, _| [0, 2, 5, 1000][rng.gen_range(0..4)]);
        let field = smooth_random_field(&mut rng, g, amplitude);
        let before = support(&labels);
        for l in support(&warp_labels(&labels, &field).unwrap()) {
            prop_assert!(before.contains(&l));
        }
    }

    #[test]
    fn zero_field_is_identity_in_both_modes(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vol = random_volume(&mut rng, [5, 4, 3]);
        let g = *vol.geometry();
        let img = MultiChannelVolume::from_scalar(vol);
        let zero = VectorField::zeros(g);
        for interp in [TRILINEAR, InterpolationMode::Nearest] {
            let out = warp_image(&img, &zero, interp, CLAMP).unwrap();
            prop_assert!(out.channel(0).iter().zip(img.channel(0)).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}

#[test]
fn warps_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let vol = random_volume(&mut rng, [12, 11, 6]);
    let field = smooth_random_field(&mut rng, *vol.geometry(), 3.0);
    let img = MultiChannelVolume::from_scalar(vol);
    let a = warp_image(&img, &field, TRILINEAR, CLAMP).unwrap();
    let b = warp_image(&img, &field, TRILINEAR, CLAMP).unwrap();
    assert_eq!(a, b);
}
