//! `dofp`: demosaicking, denoising, evaluation and benchmarking of
//! polarization filter array images.

mod config;
mod report;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dofp::dataset::{
    build_dataset_from_bursts, level_profile, synthesize_scene, synthetic_noise_seed, synthetic_scene_spec,
    write_synthetic_dataset, add_mosaic_noise, BurstBuildOptions, GainMode, Manifest, NoiseLevel, SyntheticOptions,
};
use dofp::imagecore::{load_mosaic, load_stack, store_rgb8_png, store_stack};
use dofp::metrics::{evaluate, write_csv, EvalOptions, EvalReport, DEFAULT_BORDER};
use dofp::mosaic::mosaic_from_stack;
use dofp::pipeline::{run_benchmark, run_pipeline, Case, CaseId, Demosaicker, PipelineKind, Polarimetry, RunConfig};
use dofp::polarimetry::{render_aop_dop, render_gray, Rgb8Image};
use dofp::{Error, MpfaLayout, PatternKind, Scalar};

use config::Overrides;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_PARTIAL: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(Error),
    Partial(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(Error::Io { .. } | Error::Format { .. }) => EXIT_IO,
            CliError::Lib(_) => EXIT_USAGE,
            CliError::Partial(_) => EXIT_PARTIAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Partial(m) => f.write_str(m),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "dofp", version, about = "Polarization filter array denoising and demosaicking")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Working precision.
    #[arg(long, global = true, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PatternArg {
    Mpfa,
    Cpfa,
}

impl From<PatternArg> for PatternKind {
    fn from(p: PatternArg) -> Self {
        match p {
            PatternArg::Mpfa => PatternKind::Mpfa,
            PatternArg::Cpfa => PatternKind::Cpfa,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LevelArg {
    Low,
    Medium,
    High,
}

impl From<LevelArg> for NoiseLevel {
    fn from(l: LevelArg) -> Self {
        match l {
            LevelArg::Low => NoiseLevel::Low,
            LevelArg::Medium => NoiseLevel::Medium,
            LevelArg::High => NoiseLevel::High,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PipelineArg {
    DemosaickOnly,
    DemosaickThenDenoise,
    DenoiseThenDemosaick,
}

impl From<PipelineArg> for PipelineKind {
    fn from(p: PipelineArg) -> Self {
        match p {
            PipelineArg::DemosaickOnly => PipelineKind::DemosaickOnly,
            PipelineArg::DemosaickThenDenoise => PipelineKind::DemosaickThenDenoise,
            PipelineArg::DenoiseThenDemosaick => PipelineKind::DenoiseThenDemosaick,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DemosaickerArg {
    Igri,
    Bilinear,
}

impl From<DemosaickerArg> for Demosaicker {
    fn from(d: DemosaickerArg) -> Self {
        match d {
            DemosaickerArg::Igri => Demosaicker::Igri,
            DemosaickerArg::Bilinear => Demosaicker::Bilinear,
        }
    }
}

/// Flags shared by the commands that run a pipeline.
#[derive(Args, Debug, Clone)]
struct RunFlags {
    /// JSON run configuration; keys present in it override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sensor pattern (taken from the input file when it records one).
    #[arg(long, value_enum)]
    pattern: Option<PatternArg>,
    /// Polarizer angles of the 2×2 block, row-major degrees.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    layout: Option<Vec<i64>>,
    #[arg(long, value_enum)]
    demosaicker: Option<DemosaickerArg>,
    /// Noise standard deviation for every channel (full scale 1.0).
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    sigma_r: Option<f64>,
    #[arg(long)]
    sigma_g: Option<f64>,
    #[arg(long)]
    sigma_b: Option<f64>,
    /// Use the tabulated noise levels of a capture condition.
    #[arg(long, value_enum)]
    level: Option<LevelArg>,
}

impl RunFlags {
    fn overrides(&self, pipeline: Option<PipelineKind>) -> Overrides {
        Overrides {
            pattern: self.pattern.map(Into::into),
            layout: self.layout.clone(),
            demosaicker: self.demosaicker.map(Into::into),
            pipeline,
            sigma: self.sigma,
            sigma_rgb: [self.sigma_r, self.sigma_g, self.sigma_b],
            level: self.level.map(Into::into),
            seed: None,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct EvalFlags {
    /// Pixels ignored along every edge.
    #[arg(long, default_value_t = DEFAULT_BORDER)]
    border: usize,
    #[arg(long, default_value_t = 1.0)]
    peak: f64,
    /// Only count AoP errors where the reference DoP reaches this value.
    #[arg(long)]
    aop_min_dop: Option<f64>,
}

impl EvalFlags {
    fn options(&self) -> EvalOptions {
        EvalOptions {
            peak: self.peak,
            border: self.border,
            aop_min_dop: self.aop_min_dop,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Demosaick a raw mosaic into a full-resolution stack.
    Demosaick {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Denoise and demosaick a noisy mosaic.
    DenoiseDemosaick {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = PipelineArg::DenoiseThenDemosaick)]
        pipeline: PipelineArg,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Score a reconstructed stack against a reference stack.
    Eval {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[command(flatten)]
        eval: EvalFlags,
        /// Also write the scores as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write a synthetic dataset with a manifest.
    Synth {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 5)]
        scenes: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 192)]
        height: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = PatternArg::Mpfa)]
        pattern: PatternArg,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [LevelArg::Low, LevelArg::Medium, LevelArg::High])]
        levels: Vec<LevelArg>,
    },
    /// Build ground truth and noisy inputs from capture bursts.
    DatasetBuild {
        /// Directory of `<scene>/<angle>/*.pfi` RGB frames.
        #[arg(long)]
        bursts: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum)]
        level: LevelArg,
        /// Frames farthest from the median brightness that are dropped.
        #[arg(long, default_value_t = 100)]
        exclude: usize,
        /// Percentile of ground-truth pixels mapped to full scale.
        #[arg(long, default_value_t = 99.0, conflicts_with = "gain")]
        gain_percentile: f64,
        /// Fixed digital gain instead of the percentile rule.
        #[arg(long)]
        gain: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        layout: Option<Vec<i64>>,
    },
    /// Render AoP/DoP and per-quantity PNGs from a stack.
    Visualize {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run pipelines over a dataset and report scores.
    Bench {
        /// Dataset manifest; without it a synthetic set is generated.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Number of synthetic scenes.
        #[arg(long, default_value_t = 5)]
        synthetic: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 192)]
        height: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = PatternArg::Mpfa)]
        pattern: PatternArg,
        #[arg(long, value_enum, value_delimiter = ',')]
        levels: Option<Vec<LevelArg>>,
        /// Pipelines to compare (ignored when configs are given).
        #[arg(long, value_enum, value_delimiter = ',')]
        pipelines: Option<Vec<PipelineArg>>,
        /// Run configurations, one method each.
        #[arg(long = "config")]
        configs: Vec<PathBuf>,
        #[command(flatten)]
        eval: EvalFlags,
        /// Per-scene CSV destination (stdout when absent).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("thread pool is configured once");
    }
    let result = match cli.precision {
        Precision::F32 => run::<f32>(cli.command),
        Precision::F64 => run::<f64>(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run<T: Scalar>(command: Command) -> Result<(), CliError> {
    match command {
        Command::Demosaick { input, output, run } => {
            reconstruct_file::<T>(&input, &output, &run, PipelineKind::DemosaickOnly)
        }
        Command::DenoiseDemosaick {
            input,
            output,
            pipeline,
            run,
        } => reconstruct_file::<T>(&input, &output, &run, pipeline.into()),
        Command::Eval {
            reference,
            test,
            eval,
            csv,
        } => eval_files::<T>(&reference, &test, &eval.options(), csv.as_deref()),
        Command::Synth {
            output,
            scenes,
            width,
            height,
            seed,
            pattern,
            levels,
        } => {
            let opts = SyntheticOptions {
                width,
                height,
                scenes,
                seed,
                levels: levels.into_iter().map(Into::into).collect(),
                pattern: pattern.into(),
                layout: MpfaLayout::default(),
            };
            let path = write_synthetic_dataset(&output, &opts)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::DatasetBuild {
            bursts,
            output,
            level,
            exclude,
            gain_percentile,
            gain,
            layout,
        } => {
            let layout = match layout {
                Some(d) => MpfaLayout::from_degrees(&d)?,
                None => MpfaLayout::default(),
            };
            let opts = BurstBuildOptions {
                level: level.into(),
                exclude_count: exclude,
                gain: gain.map_or(GainMode::Percentile(gain_percentile), GainMode::Fixed),
                layout,
            };
            let summary = build_dataset_from_bursts(&bursts, &output, &opts)?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            Ok(())
        }
        Command::Visualize { input, output } => visualize::<T>(&input, &output),
        Command::Bench {
            manifest,
            synthetic,
            width,
            height,
            seed,
            pattern,
            levels,
            pipelines,
            configs,
            eval,
            csv,
        } => {
            let setup = BenchSetup {
                manifest,
                synthetic: SyntheticOptions {
                    width,
                    height,
                    scenes: synthetic,
                    seed,
                    levels: levels
                        .map(|l| l.into_iter().map(Into::into).collect())
                        .unwrap_or_else(|| vec![NoiseLevel::High]),
                    pattern: pattern.into(),
                    layout: MpfaLayout::default(),
                },
                pipelines: pipelines.map(|p| p.into_iter().map(Into::into).collect()),
                configs,
                eval: eval.options(),
                csv,
            };
            bench::<T>(&setup)
        }
    }
}

fn reconstruct_file<T: Scalar>(input: &Path, output: &Path, flags: &RunFlags, pipeline: PipelineKind) -> Result<(), CliError> {
    if input == output {
        return Err(CliError::Usage("input and output must differ".into()));
    }
    let mut base = RunConfig::new(pipeline);
    base.input = Some(input.to_path_buf());
    base.output = Some(output.to_path_buf());
    let cfg = config::build(base, &flags.overrides(Some(pipeline)), flags.config.as_deref())?;
    let fallback = cfg.pattern_descriptor()?;
    let mosaic = load_mosaic::<T>(input, Some(&fallback))?;
    let pattern_given = flags.pattern.is_some() || flags.config.is_some();
    let cfg = if !pattern_given && mosaic.kind() != cfg.pattern {
        RunConfig {
            pattern: mosaic.kind(),
            ..cfg
        }
    } else {
        cfg
    };
    if cfg.pipeline != PipelineKind::DemosaickOnly && cfg.noise.entries().next().is_none() {
        return Err(CliError::Usage(
            "denoising needs a noise level: --sigma, --sigma-r/g/b, --level or a config".into(),
        ));
    }
    let out = run_pipeline(&cfg, &mosaic)?;
    store_stack(&out.stack, output)?;
    Ok(())
}

fn eval_files<T: Scalar>(reference: &Path, test: &Path, opts: &EvalOptions, csv: Option<&Path>) -> Result<(), CliError> {
    let r = load_stack::<T>(reference)?;
    let t = load_stack::<T>(test)?;
    let scores = evaluate(&r, &t, opts)?;
    let stem = |p: &Path| p.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
    let reports = vec![EvalReport {
        scene: stem(reference),
        method: stem(test),
        noise_level: String::new(),
        scores,
    }];
    print!("{}", report::scores_table(&reports, None));
    if let Some(path) = csv {
        let file = std::fs::File::create(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        write_csv(file, &reports)?;
    }
    Ok(())
}

fn save_png(path: PathBuf, img: &Rgb8Image) -> Result<(), CliError> {
    store_rgb8_png(path, img.width, img.height, &img.data)?;
    Ok(())
}

fn visualize<T: Scalar>(input: &Path, output: &Path) -> Result<(), CliError> {
    let stack = load_stack::<T>(input)?;
    let pol = Polarimetry::of_stack(&stack)?;
    std::fs::create_dir_all(output).map_err(|e| Error::Io {
        path: output.to_path_buf(),
        source: e,
    })?;
    for (color, p) in &pol {
        let prefix = if stack.is_color() {
            format!("{}_", color.name())
        } else {
            String::new()
        };
        let s = &p.stokes;
        let s0_hi = s.s0().samples().iter().fold(0.0f64, |m, v| m.max(v.as_f64())).max(f64::MIN_POSITIVE);
        let lin = s
            .s1()
            .samples()
            .iter()
            .chain(s.s2().samples())
            .fold(0.0f64, |m, v| m.max(v.as_f64().abs()))
            .max(f64::MIN_POSITIVE);
        save_png(output.join(format!("{prefix}aop_dop.png")), &render_aop_dop(&p.aop, &p.dop, s.s0())?)?;
        save_png(output.join(format!("{prefix}s0.png")), &render_gray(s.s0(), 0.0, s0_hi))?;
        save_png(output.join(format!("{prefix}s1.png")), &render_gray(s.s1(), -lin, lin))?;
        save_png(output.join(format!("{prefix}s2.png")), &render_gray(s.s2(), -lin, lin))?;
        save_png(output.join(format!("{prefix}dop.png")), &render_gray(&p.dop, 0.0, 1.0))?;
        save_png(output.join(format!("{prefix}aop.png")), &render_gray(&p.aop, 0.0, 180.0))?;
    }
    Ok(())
}

struct BenchSetup {
    manifest: Option<PathBuf>,
    synthetic: SyntheticOptions,
    pipelines: Option<Vec<PipelineKind>>,
    configs: Vec<PathBuf>,
    eval: EvalOptions,
    csv: Option<PathBuf>,
}

fn bench_configs(setup: &BenchSetup, pattern: PatternKind, layout: &[i64]) -> Result<Vec<RunConfig>, CliError> {
    let base = RunConfig {
        pattern,
        layout: layout.to_vec(),
        ..RunConfig::default()
    };
    if !setup.configs.is_empty() {
        return setup
            .configs
            .iter()
            .map(|p| {
                let mut cfg = config::build(base.clone(), &Overrides::default(), Some(p))?;
                if cfg.name.is_none() {
                    cfg.name = p.file_stem().and_then(|s| s.to_str()).map(str::to_string);
                }
                Ok(cfg)
            })
            .collect();
    }
    let mut out: Vec<RunConfig> = match &setup.pipelines {
        Some(kinds) => kinds.iter().map(|&k| RunConfig { pipeline: k, ..base.clone() }).collect(),
        None => PipelineKind::ALL
            .iter()
            .map(|&k| RunConfig { pipeline: k, ..base.clone() })
            .collect(),
    };
    if setup.pipelines.is_none() {
        out.insert(
            0,
            RunConfig {
                pipeline: PipelineKind::DemosaickOnly,
                demosaicker: Demosaicker::Bilinear,
                ..base
            },
        );
    }
    Ok(out)
}

fn bench<T: Scalar>(setup: &BenchSetup) -> Result<(), CliError> {
    let (outcome, pattern) = match &setup.manifest {
        Some(path) => {
            let manifest = Manifest::load(path)?;
            let layout = manifest.layout.clone().unwrap_or_else(|| {
                MpfaLayout::default().to_degrees().iter().map(|&d| d as i64).collect()
            });
            let configs = bench_configs(setup, manifest.pattern, &layout)?;
            let explicit_noise = configs.iter().any(|c| c.noise.entries().next().is_some());
            let wanted = &setup.synthetic.levels;
            let mut cases = Vec::new();
            for scene in manifest.scenes() {
                for level in manifest.levels(&scene) {
                    if wanted.contains(&level) {
                        cases.push(CaseId {
                            scene: scene.clone(),
                            level: level.name().to_string(),
                        });
                    }
                }
            }
            if cases.is_empty() {
                return Err(CliError::Usage("manifest has no inputs at the requested levels".into()));
            }
            let pattern = manifest.pattern;
            let load = |id: &CaseId| -> dofp::Result<Case<T>> {
                let level = NoiseLevel::parse(&id.level).expect("levels come from the manifest");
                Ok(Case {
                    ground_truth: manifest.load_ground_truth(&id.scene)?,
                    noisy: manifest.load_noisy(&id.scene, level)?,
                    noise: (!explicit_noise).then(|| level_profile(level, pattern)),
                })
            };
            (run_benchmark(&cases, load, &configs, &setup.eval), pattern)
        }
        None => {
            let opts = &setup.synthetic;
            if opts.scenes == 0 {
                return Err(CliError::Usage("--synthetic needs at least one scene".into()));
            }
            let layout: Vec<i64> = opts.layout.to_degrees().iter().map(|&d| d as i64).collect();
            let configs = bench_configs(setup, opts.pattern, &layout)?;
            let explicit_noise = configs.iter().any(|c| c.noise.entries().next().is_some());
            let cases: Vec<CaseId> = (0..opts.scenes)
                .flat_map(|i| {
                    opts.levels.iter().map(move |l| CaseId {
                        scene: format!("scene_{i:03}"),
                        level: l.name().to_string(),
                    })
                })
                .collect();
            let pattern = dofp::PatternDescriptor::for_kind(opts.pattern, opts.layout);
            let load = |id: &CaseId| -> dofp::Result<Case<T>> {
                let index: usize = id.scene["scene_".len()..].parse().expect("generated scene name");
                let level = NoiseLevel::parse(&id.level).expect("generated level");
                let gt = synthesize_scene::<T>(&synthetic_scene_spec(opts, index))?;
                let clean = mosaic_from_stack(&gt, &pattern)?;
                let profile = level_profile(level, opts.pattern);
                let noisy = add_mosaic_noise(&clean, &profile, synthetic_noise_seed(opts, index, level))?;
                Ok(Case {
                    ground_truth: gt,
                    noisy,
                    noise: (!explicit_noise).then_some(profile),
                })
            };
            (run_benchmark(&cases, load, &configs, &setup.eval), opts.pattern)
        }
    };

    match &setup.csv {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            write_csv(file, &outcome.reports)?;
        }
        None => write_csv(std::io::stdout().lock(), &outcome.reports)?,
    }
    let mut err = std::io::stderr().lock();
    let _ = write!(err, "{}", report::scores_table(&outcome.reports, Some(pattern)));
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        let listing = serde_json::to_string_pretty(&outcome.failures).expect("failures serialize");
        let _ = writeln!(err, "{listing}");
        Err(CliError::Partial(format!("{} case(s) failed", outcome.failures.len())))
    }
}
