use std::collections::BTreeMap;

use super::*;
use crate::dataset::{synthesize_scene, SceneSpec};
use crate::imagecore::PatternDescriptor;
use crate::metrics::psnr;
use crate::mosaic::mosaic_from_stack;

fn smooth(w: usize, h: usize) -> Plane<f64> {
    Plane::from_fn(w, h, |x, y| {
        let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
        0.3 + 0.2 * u + 0.1 * v + 0.15 * u * v - 0.1 * u * u + 0.05 * v * v
    })
}

fn texture(w: usize, h: usize) -> Plane<f64> {
    Plane::from_fn(w, h, |x, y| {
        0.5 + 0.2 * (0.7 * x as f64).sin() * (0.45 * y as f64).cos() + 0.1 * ((x * 7 + y * 3) % 5) as f64 / 5.0
    })
}

fn mono_stack(planes: [Plane<f64>; 4]) -> PolarizationStack<f64> {
    PolarizationStack::mono(planes).unwrap()
}

fn equal_stack(x: &Plane<f64>) -> PolarizationStack<f64> {
    mono_stack([x.clone(), x.clone(), x.clone(), x.clone()])
}

fn color_stack(f: impl Fn(Angle, Color) -> Plane<f64>) -> PolarizationStack<f64> {
    let mut planes = BTreeMap::new();
    for c in Color::RGB {
        for a in Angle::ALL {
            planes.insert(Channel::new(a, c), f(a, c));
        }
    }
    PolarizationStack::new(planes).unwrap()
}

fn mpfa(stack: &PolarizationStack<f64>) -> MosaicImage<f64> {
    mosaic_from_stack(stack, &PatternDescriptor::mpfa(MpfaLayout::default())).unwrap()
}

fn cpfa(stack: &PolarizationStack<f64>) -> MosaicImage<f64> {
    mosaic_from_stack(stack, &PatternDescriptor::cpfa(MpfaLayout::default())).unwrap()
}

fn bayer(r: &Plane<f64>, g: &Plane<f64>, b: &Plane<f64>) -> MosaicImage<f64> {
    let pattern = PatternDescriptor::bayer();
    let plane = Plane::from_fn(r.width(), r.height(), |x, y| match pattern.channel_at(x, y).color {
        Color::R => r.get(x, y),
        Color::G => g.get(x, y),
        _ => b.get(x, y),
    });
    MosaicImage::new(plane, pattern).unwrap()
}

fn max_abs_diff(a: &Plane<f64>, b: &Plane<f64>, border: usize) -> f64 {
    let (w, h) = a.dims();
    let mut m = 0.0f64;
    for y in border..h - border {
        for x in border..w - border {
            m = m.max((a.get(x, y) - b.get(x, y)).abs());
        }
    }
    m
}

fn assert_constant(p: &Plane<f64>, c: f64) {
    assert!(p.samples().iter().all(|&v| v == c), "plane not exactly {c}");
}

fn assert_observed_kept(stack: &PolarizationStack<f64>, mosaic: &MosaicImage<f64>) {
    for y in 0..mosaic.height() {
        for x in 0..mosaic.width() {
            let ch = mosaic.pattern().channel_at(x, y);
            assert_eq!(stack.get(ch).unwrap().get(x, y), mosaic.plane().get(x, y), "{ch} at {x},{y}");
        }
    }
}

fn tight(eps: f64) -> GuidedFilterParams {
    GuidedFilterParams { radius: 2, epsilon: eps }
}

#[test]
fn guided_filter_identity_with_tiny_eps() {
    let g = texture(40, 30);
    let out = guided_filter(&g, &g, &tight(1e-12)).unwrap();
    assert!(max_abs_diff(&out, &g, 0) < 1e-6);
}

#[test]
fn guided_filter_keeps_constants() {
    let out = guided_filter(&Plane::filled(33, 17, 0.37), &texture(33, 17), &GuidedFilterParams::default()).unwrap();
    assert_constant(&out, 0.37);
}

#[test]
fn guided_filter_reproduces_affine_relation() {
    let g = texture(40, 30);
    let p = g.map(|v| 2.0 * v + 0.1);
    let out = guided_filter(&p, &g, &tight(1e-9)).unwrap();
    assert!(max_abs_diff(&out, &p, 0) < 1e-6);
}

#[test]
fn guided_filter_rejects_bad_input() {
    let g = texture(8, 8);
    assert!(guided_filter(&g, &texture(8, 6), &tight(1e-3)).is_err());
    assert!(guided_filter(&g, &g, &GuidedFilterParams { radius: 0, epsilon: 1e-3 }).is_err());
    assert!(guided_filter(&g, &g, &tight(0.0)).is_err());
}

#[test]
fn guide_of_constant_mosaic_is_constant() {
    let m = mpfa(&equal_stack(&Plane::filled(16, 12, 0.42)));
    assert_constant(&generate_intensity_guide(&m).unwrap(), 0.42);
}

#[test]
fn guide_follows_angle_independent_smooth_scene() {
    let x = smooth(64, 48);
    let g = generate_intensity_guide(&mpfa(&equal_stack(&x))).unwrap();
    assert!(max_abs_diff(&g, &x, 2) < 1e-3);
}

#[test]
fn guide_is_the_four_angle_average() {
    // Angles carrying different constants: the guide is their mean.
    let v = [0.2, 0.4, 0.6, 0.8].map(|c| Plane::filled(16, 16, c));
    let g = generate_intensity_guide(&mpfa(&mono_stack(v))).unwrap();
    assert!(max_abs_diff(&g, &Plane::filled(16, 16, 0.5), 0) < 1e-12);
}

#[test]
fn guide_does_not_smear_vertical_edges() {
    let edge = 15;
    let x = Plane::from_fn(32, 24, |x, _| if x < edge { 0.2 } else { 0.8 });
    let g = generate_intensity_guide(&mpfa(&equal_stack(&x))).unwrap();
    for yy in 0..24 {
        for xx in 0..32 {
            if xx + 1 < edge || xx > edge {
                assert!((g.get(xx, yy) - x.get(xx, yy)).abs() < 1e-6, "column {xx}");
            }
        }
    }
}

#[test]
fn guide_requires_mpfa() {
    let p = Plane::filled(8, 8, 0.5);
    assert!(generate_intensity_guide(&bayer(&p, &p, &p)).is_err());
}

#[test]
fn ri_recovers_guide_sampled_on_mask() {
    let g = texture(40, 32);
    let s = SparseChannel::from_lattice(&g, (1, 0), (2, 2)).unwrap();
    let out = residual_interpolate_channel(&s, &g, &tight(1e-9)).unwrap();
    assert!(max_abs_diff(&out, &g, 4) < 1e-4);
}

#[test]
fn ri_constant_and_observed() {
    let s = SparseChannel::from_lattice(&Plane::filled(20, 14, 0.61), (0, 1), (2, 2)).unwrap();
    let out = residual_interpolate_channel(&s, &texture(20, 14), &GuidedFilterParams::default()).unwrap();
    assert_constant(&out, 0.61);

    let v = texture(20, 14).map(|v| v * v);
    let s = SparseChannel::from_lattice(&v, (1, 1), (2, 2)).unwrap();
    let out = residual_interpolate_channel(&s, &smooth(20, 14), &GuidedFilterParams::default()).unwrap();
    for y in (1..14).step_by(2) {
        for x in (1..20).step_by(2) {
            assert_eq!(out.get(x, y), v.get(x, y));
        }
    }
}

#[test]
fn sparse_channel_contracts() {
    let p = Plane::filled(4, 4, 1.0);
    assert!(SparseChannel::from_lattice(&p, (2, 0), (2, 2)).is_err());
    assert!(SparseChannel::from_lattice(&Plane::filled(1, 1, 1.0), (0, 1), (2, 2)).is_err());
    let s = SparseChannel::from_lattice(&p, (1, 0), (2, 2)).unwrap();
    assert_eq!(s.mask().samples().iter().filter(|&&m| m == 1.0).count(), 4);
    assert!(residual_interpolate_channel(&s, &Plane::filled(4, 6, 1.0), &tight(1e-3)).is_err());
    // Bayer green occurs twice per tile.
    assert!(SparseChannel::from_mosaic(&bayer(&p, &p, &p), Channel::color_only(Color::G)).is_err());
}

#[test]
fn mpfa_smooth_scene_above_50db() {
    let x = smooth(64, 48);
    let m = mpfa(&equal_stack(&x));
    let out = demosaick_mpfa_igri2(&m, &DemosaicParams::default()).unwrap();
    for a in Angle::ALL {
        let db = psnr(&x, out.get(Channel::mono(a)).unwrap(), 1.0, 4).unwrap().db();
        assert!(db >= 50.0, "{a}: {db:.2} dB");
    }
    assert_observed_kept(&out, &m);
}

#[test]
fn mpfa_constant_mosaic() {
    let out = demosaick_mpfa_igri2(&mpfa(&equal_stack(&Plane::filled(12, 10, 0.33))), &DemosaicParams::default())
        .unwrap();
    for (_, p) in out.iter() {
        assert_constant(p, 0.33);
    }
}

#[test]
fn mpfa_observed_samples_on_polarized_scene() {
    let scene = synthesize_scene::<f64>(&SceneSpec::random(48, 40, 3)).unwrap();
    let m = mpfa(&scene);
    let params = DemosaicParams {
        iterations: 2,
        ..DemosaicParams::default()
    };
    assert_observed_kept(&demosaick_mpfa_igri2(&m, &params).unwrap(), &m);
}

#[test]
fn mpfa_transpose_equivariance() {
    let scene = synthesize_scene::<f64>(&SceneSpec::random(40, 32, 11)).unwrap();
    let m = mpfa(&scene);
    let params = DemosaicParams::default();
    let direct = demosaick_mpfa_igri2(&m, &params).unwrap().transpose();
    let flipped = demosaick_mpfa_igri2(&m.transpose(), &params).unwrap();
    for (ch, p) in direct.iter() {
        assert!(max_abs_diff(p, flipped.get(*ch).unwrap(), 0) < 1e-6, "{ch}");
    }
}

#[test]
fn igri_beats_bilinear_on_textured_scene() {
    let scene = synthesize_scene::<f64>(&SceneSpec::random(96, 64, 5)).unwrap();
    let m = mpfa(&scene);
    let score = |s: &PolarizationStack<f64>| {
        Angle::ALL
            .iter()
            .map(|&a| psnr(scene.get(Channel::mono(a)).unwrap(), s.get(Channel::mono(a)).unwrap(), 1.0, 4).unwrap().db())
            .sum::<f64>()
    };
    let igri = score(&demosaick_mpfa_igri2(&m, &DemosaicParams::default()).unwrap());
    let bil = score(&demosaick_bilinear(&m).unwrap());
    assert!(igri > bil, "IGRI {igri:.2} vs bilinear {bil:.2}");
}

#[test]
fn bayer_gray_world_above_45db() {
    let x = smooth(64, 48);
    let rgb = demosaick_bayer_ri(&bayer(&x, &x, &x), &DemosaicParams::default()).unwrap();
    for (c, p) in Color::RGB.iter().zip(rgb.planes()) {
        let db = psnr(&x, p, 1.0, 4).unwrap().db();
        assert!(db >= 45.0, "{c}: {db:.2} dB");
    }
}

#[test]
fn bayer_constant_and_observed() {
    let c = |v| Plane::filled(16, 12, v);
    let rgb = demosaick_bayer_ri(&bayer(&c(0.1), &c(0.5), &c(0.9)), &DemosaicParams::default()).unwrap();
    for (p, v) in rgb.planes().iter().zip([0.1, 0.5, 0.9]) {
        assert_constant(p, v);
    }

    let (r, g, b) = (texture(24, 20), smooth(24, 20), texture(24, 20).map(|v| 1.0 - v));
    let m = bayer(&r, &g, &b);
    let rgb = demosaick_bayer_ri(&m, &DemosaicParams::default()).unwrap();
    for y in 0..20 {
        for x in 0..24 {
            let c = m.pattern().channel_at(x, y).color;
            assert_eq!(rgb.channel(c).get(x, y), m.plane().get(x, y));
        }
    }
}

#[test]
fn cpfa_constant_planes_exact() {
    let values: BTreeMap<Channel, f64> = Color::RGB
        .iter()
        .flat_map(|&c| Angle::ALL.map(|a| Channel::new(a, c)))
        .enumerate()
        .map(|(i, ch)| (ch, 0.05 + 0.07 * i as f64))
        .collect();
    let stack = color_stack(|a, c| Plane::filled(16, 16, values[&Channel::new(a, c)]));
    let out = demosaick_cpfa(&cpfa(&stack), &DemosaicParams::default()).unwrap();
    assert_eq!(out.dims(), (16, 16));
    for (ch, p) in out.iter() {
        assert_constant(p, values[ch]);
    }
}

#[test]
fn cpfa_gray_unpolarized_above_40db() {
    let x = smooth(96, 64);
    let m = cpfa(&color_stack(|_, _| x.clone()));
    let out = demosaick_cpfa(&m, &DemosaicParams::default()).unwrap();
    for (ch, p) in out.iter() {
        let db = psnr(&x, p, 1.0, 4).unwrap().db();
        assert!(db >= 40.0, "{ch}: {db:.2} dB");
    }
    assert_observed_kept(&out, &m);
}

#[test]
fn cpfa_angle_constant_color_varying() {
    // Edge error of the half-resolution Bayer stage reaches the 4-pixel band
    // on smaller scenes; away from it the planes agree to ~1e-4.
    let x = smooth(128, 96);
    let tint = |c: Color| match c {
        Color::R => 0.9,
        Color::G => 0.6,
        _ => 0.3,
    };
    let out = demosaick_cpfa(
        &cpfa(&color_stack(|_, c| x.map(|v| v * tint(c)))),
        &DemosaicParams::default(),
    )
    .unwrap();
    for c in Color::RGB {
        let planes = out.angles(c).unwrap();
        for p in &planes[1..] {
            assert!(max_abs_diff(planes[0], p, 4) < 1e-3, "{c}");
        }
    }
}

#[test]
fn cpfa_rejects_mpfa() {
    assert!(demosaick_cpfa(&mpfa(&equal_stack(&smooth(8, 8))), &DemosaicParams::default()).is_err());
}

#[test]
fn bilinear_constants_and_ramps() {
    let out = demosaick_bilinear(&mpfa(&equal_stack(&Plane::filled(10, 8, 0.7)))).unwrap();
    for (_, p) in out.iter() {
        assert_constant(p, 0.7);
    }

    let ramp = |k: f64| Plane::from_fn(32, 24, move |x, y| 0.1 + k * (0.01 * x as f64 + 0.005 * y as f64));
    let mono = mono_stack([ramp(1.0), ramp(1.5), ramp(0.5), ramp(2.0)]);
    let out = demosaick_bilinear(&mpfa(&mono)).unwrap();
    for (ch, p) in out.iter() {
        assert!(max_abs_diff(p, mono.get(*ch).unwrap(), 4) < 1e-12, "{ch}");
    }

    let color = color_stack(|a, c| ramp(0.5 + a.index() as f64 * 0.3 + c as usize as f64 * 0.1));
    let m = cpfa(&color);
    let out = demosaick_bilinear(&m).unwrap();
    for (ch, p) in out.iter() {
        assert!(max_abs_diff(p, color.get(*ch).unwrap(), 4) < 1e-12, "{ch}");
    }
    assert_observed_kept(&out, &m);
}

#[test]
fn bilinear_rejects_bayer() {
    let p = Plane::filled(8, 8, 0.5);
    assert!(demosaick_bilinear(&bayer(&p, &p, &p)).is_err());
}

#[test]
fn dispatch_by_kind() {
    let x = smooth(16, 16);
    assert_eq!(demosaick(&mpfa(&equal_stack(&x)), &DemosaicParams::default()).unwrap().iter().count(), 4);
    assert_eq!(
        demosaick(&cpfa(&color_stack(|_, _| x.clone())), &DemosaicParams::default()).unwrap().iter().count(),
        12
    );
    assert!(demosaick(&bayer(&x, &x, &x), &DemosaicParams::default()).is_err());
}

#[test]
fn params_defaults_and_json() {
    let p: DemosaicParams = serde_json::from_str("{}").unwrap();
    assert_eq!(p, DemosaicParams::default());
    assert_eq!(p.polarization, GuidedFilterParams { radius: 2, epsilon: 1e-6 });
    assert_eq!(p.bayer, GuidedFilterParams { radius: 2, epsilon: 1e-5 });
    let p: DemosaicParams = serde_json::from_str(r#"{"iterations": 3, "bayer": {"radius": 1, "epsilon": 0.01}}"#).unwrap();
    assert_eq!(p.iterations, 3);
    assert_eq!(p.bayer.radius, 1);
    assert!(DemosaicParams { iterations: 0, ..p }.validate().is_err());
}
