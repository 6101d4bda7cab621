//! Bilinear baseline against IGRI on the 1024×768 synthetic benchmark
//! scenes, with and without the High-level sensor noise.

use dofp::dataset::{
    add_mosaic_noise, level_profile, synthesize_scene, synthetic_noise_seed, synthetic_scene_spec, NoiseLevel,
    SyntheticOptions,
};
use dofp::imagecore::{MpfaLayout, PatternDescriptor, PatternKind};
use dofp::metrics::{summarize, EvalOptions, Scores};
use dofp::mosaic::mosaic_from_stack;
use dofp::pipeline::{run_benchmark, Case, CaseId, Demosaicker, PipelineKind, RunConfig};

fn means(noisy: bool) -> (Scores, Scores) {
    let opts = SyntheticOptions {
        width: 1024,
        height: 768,
        scenes: 5,
        seed: 0,
        levels: vec![NoiseLevel::High],
        pattern: PatternKind::Mpfa,
        layout: MpfaLayout::default(),
    };
    let pattern = PatternDescriptor::mpfa(opts.layout);
    let profile = level_profile(NoiseLevel::High, PatternKind::Mpfa);
    let cases: Vec<CaseId> = (0..opts.scenes)
        .map(|i| CaseId {
            scene: i.to_string(),
            level: "high".into(),
        })
        .collect();
    let load = |id: &CaseId| -> dofp::Result<Case<f64>> {
        let i: usize = id.scene.parse().unwrap();
        let gt = synthesize_scene::<f64>(&synthetic_scene_spec(&opts, i))?;
        let clean = mosaic_from_stack(&gt, &pattern)?;
        let input = if noisy {
            add_mosaic_noise(&clean, &profile, synthetic_noise_seed(&opts, i, NoiseLevel::High))?
        } else {
            clean
        };
        Ok(Case {
            ground_truth: gt,
            noisy: input,
            noise: None,
        })
    };
    let configs: Vec<RunConfig> = [Demosaicker::Igri, Demosaicker::Bilinear]
        .into_iter()
        .map(|d| RunConfig {
            demosaicker: d,
            ..RunConfig::new(PipelineKind::DemosaickOnly)
        })
        .collect();
    let out = run_benchmark(&cases, load, &configs, &EvalOptions::default());
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    let rows = summarize(&out.reports);
    let pick = |label: &str| rows.iter().find(|r| r.0 == label).unwrap().2;
    (pick("demosaick-only"), pick("demosaick-only/bilinear"))
}

fn assert_bilinear_not_better(igri: &Scores, bilinear: &Scores) {
    let names = ["I0", "I45", "I90", "I135", "S0", "S1", "S2", "DoP"];
    let mut better = Vec::new();
    for ((name, i), b) in names.iter().zip(igri.psnrs()).zip(bilinear.psnrs()) {
        if b.db() > i.db() {
            better.push(format!("{name}: bilinear {:.2} dB > IGRI {:.2} dB", b.db(), i.db()));
        }
    }
    if bilinear.aop_err < igri.aop_err {
        better.push(format!("AoP: bilinear {:.2} < IGRI {:.2}", bilinear.aop_err, igri.aop_err));
    }
    assert!(better.is_empty(), "{}", better.join("; "));
}

#[test]
fn bilinear_never_beats_igri_on_clean_scenes() {
    let (igri, bilinear) = means(false);
    assert_bilinear_not_better(&igri, &bilinear);
}

#[test]
fn bilinear_never_beats_igri_on_noisy_scenes() {
    let (igri, bilinear) = means(true);
    assert_bilinear_not_better(&igri, &bilinear);
}
