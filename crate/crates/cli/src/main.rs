//! occ4d: build, synthesize, baseline, evaluate, and inspect 4D occupancy
//! forecasting data. Non-interactive and deterministic given flags and seeds.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use occ4d::assoc::{associate_via_flow, extract_centers};
use occ4d::baseline::{
    constant_velocity_forecast, lift_bev_sequence, static_world, voxelize_labeled_points, Forecast,
};
use occ4d::grid::GridSpec;
use occ4d::metrics::{EvalAccumulator, EvalConfig};
use occ4d::pipeline::{build_sample, TaskMode};
use occ4d::scene::{filter_invalid_tracks, split_scene, to_present_frame};
use occ4d::synth::{generate_scene, SynthConfig};

#[derive(Parser)]
#[command(name = "occ4d", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Spatial/temporal grid flags shared by several subcommands.
#[derive(Args, Clone)]
struct SpecArgs {
    /// Past frames per window
    #[arg(long, default_value_t = 2)]
    np: usize,
    /// Future frames per window
    #[arg(long, default_value_t = 4)]
    nf: usize,
    /// Voxel edge length in meters
    #[arg(long, default_value_t = 0.2)]
    res: f64,
    /// x extent as "min:max" meters
    #[arg(long, default_value = "-51.2:51.2", value_parser = parse_range, allow_hyphen_values = true)]
    x_range: (f64, f64),
    /// y extent as "min:max" meters
    #[arg(long, default_value = "-51.2:51.2", value_parser = parse_range, allow_hyphen_values = true)]
    y_range: (f64, f64),
    /// z extent as "min:max" meters
    #[arg(long, default_value = "-5.0:3.0", value_parser = parse_range, allow_hyphen_values = true)]
    z_range: (f64, f64),
}

impl SpecArgs {
    fn to_spec(&self) -> Result<GridSpec> {
        Ok(GridSpec::new(
            self.x_range,
            self.y_range,
            self.z_range,
            self.res,
            self.np,
            self.nf,
        )?)
    }
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected min:max, got {s:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("bad min: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("bad max: {e}"))?;
    Ok((lo, hi))
}

#[derive(Copy, Clone, ValueEnum)]
enum BaselineKind {
    /// Future equals the present frame
    Static,
    /// Extrapolate each instance at its last observed velocity
    Cv,
    /// Lift a 2D bird's-eye-view grid to a height band
    BevLift,
    /// Voxelize labeled points by majority label
    Points,
}

#[derive(Subcommand)]
enum Command {
    /// Build samples (occupancy + instance IDs + backward flow) from scenes
    Build {
        /// Scene document(s), JSON
        #[arg(long, required = true, num_args = 1..)]
        scene: Vec<PathBuf>,
        #[command(flatten)]
        spec: SpecArgs,
        /// Labeling task
        #[arg(long, default_value = "inflated-gmo")]
        task: TaskMode,
        /// Output directory for sample files
        #[arg(long)]
        out_dir: PathBuf,
        /// Worker threads for parallel window processing
        #[arg(long, default_value_t = 0, help = "0 = all cores")]
        workers: usize,
    },
    /// Generate a deterministic synthetic scene
    Synth {
        /// Generator configuration, JSON (SynthConfig)
        #[arg(long)]
        config: PathBuf,
        /// Override the seed in the configuration
        #[arg(long)]
        seed: Option<u64>,
        /// Output scene document
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a non-neural baseline and save its forecast
    Baseline {
        #[arg(long)]
        kind: BaselineKind,
        /// Ground-truth sample base path (static baseline)
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Scene document (cv / bev-lift / points baselines)
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Present frame index within the scene (cv / bev-lift / points)
        #[arg(long, default_value_t = 2)]
        present: usize,
        #[command(flatten)]
        spec: SpecArgs,
        /// BEV grid file, nz = 1 (bev-lift)
        #[arg(long)]
        bev: Option<PathBuf>,
        /// Ground plane height for the BEV lift, meters
        #[arg(long, default_value_t = -2.0)]
        z_ground: f64,
        /// Lifted column height, meters
        #[arg(long, default_value_t = 2.0)]
        height: f64,
        /// Output forecast base path
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate forecasts against ground-truth samples
    Eval {
        /// Directory of predicted forecasts (grid files, optional flow files)
        #[arg(long)]
        pred: PathBuf,
        /// Directory of ground-truth samples
        #[arg(long)]
        gt: PathBuf,
        /// Expected labeling task; fails if the ground truth was built
        /// differently
        #[arg(long)]
        task: Option<TaskMode>,
        /// Report output path, JSON
        #[arg(long)]
        report: PathBuf,
        /// Also write the report as a delimiter-separated table
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Compute 3D VPQ (requires instance IDs or flow on predictions)
        #[arg(long)]
        vpq: bool,
        #[arg(long, default_value_t = 0.2)]
        vpq_threshold: f64,
        /// Center-extraction suppression radius, meters
        #[arg(long, default_value_t = 2.0)]
        nms_radius: f64,
        /// Flow-association radius, meters
        #[arg(long, default_value_t = 2.0)]
        assoc_radius: f64,
        #[arg(long, default_value_t = 0, help = "0 = all cores")]
        workers: usize,
    },
    /// Instance-duration histogram over a scene's windows
    Stats {
        #[arg(long, required = true, num_args = 1..)]
        scene: Vec<PathBuf>,
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Summarize a sample; optionally export its voxels for plotting
    Inspect {
        /// Sample base path
        #[arg(long)]
        sample: PathBuf,
        /// Write occupied voxels as CSV to this path
        #[arg(long)]
        export_voxels: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        builder = builder.num_threads(workers);
    }
    Ok(builder.build()?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Build { scene, spec, task, out_dir, workers } => {
            build(&scene, &spec.to_spec()?, task, &out_dir, workers)
        }
        Command::Synth { config, seed, out } => synth(&config, seed, &out),
        Command::Baseline {
            kind, gt, scene, present, spec, bev, z_ground, height, out,
        } => baseline(kind, gt, scene, present, &spec.to_spec()?, bev, z_ground, height, &out),
        Command::Eval {
            pred, gt, task, report, csv, vpq, vpq_threshold, nms_radius, assoc_radius, workers,
        } => eval(
            &pred, &gt, task, &report, csv.as_deref(), vpq, vpq_threshold, nms_radius,
            assoc_radius, workers,
        ),
        Command::Stats { scene, spec } => stats(&scene, &spec.to_spec()?),
        Command::Inspect { sample, export_voxels } => inspect(&sample, export_voxels.as_deref()),
    }
}

fn build(
    scenes: &[PathBuf],
    spec: &GridSpec,
    task: TaskMode,
    out_dir: &Path,
    workers: usize,
) -> Result<()> {
    use rayon::prelude::*;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let pool = thread_pool(workers)?;
    let mut total = 0usize;
    for path in scenes {
        let scene = occ4d::io::load_scene(path)
            .with_context(|| format!("loading scene {}", path.display()))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scene".into());
        let windows = split_scene(&scene, spec.n_past, spec.n_future);
        if windows.is_empty() {
            bail!(
                "{}: scene has {} frames, too short for Np={} + Nf={} windows",
                path.display(),
                scene.num_frames(),
                spec.n_past,
                spec.n_future
            );
        }
        pool.install(|| {
            windows
                .par_iter()
                .try_for_each(|window| -> Result<()> {
                    let prepared = to_present_frame(&scene, window)?;
                    let sample = build_sample(&prepared, spec, task, &stem)?;
                    let base = out_dir.join(format!("{stem}_{:04}", window.present));
                    occ4d::io::save_sample(&sample, &base)?;
                    Ok(())
                })
        })
        .with_context(|| format!("building samples from {}", path.display()))?;
        total += windows.len();
    }
    println!("wrote {total} samples to {}", out_dir.display());
    Ok(())
}

fn synth(config_path: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut config: SynthConfig = occ4d::io::read_json(config_path)
        .with_context(|| format!("loading generator config {}", config_path.display()))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let scene = generate_scene(&config)?;
    occ4d::io::save_scene(&scene, out)?;
    println!(
        "wrote scene with {} frames, {} instances to {}",
        scene.num_frames(),
        scene.tracks.len(),
        out.display()
    );
    Ok(())
}

fn save_forecast(forecast: &Forecast, out: &Path) -> Result<()> {
    let (grid_path, flow_path, _) = occ4d::io::sample_paths(out);
    occ4d::io::save_grid_sequence(&grid_path, &forecast.occupancy, TaskMode::InflatedGmo)?;
    if let Some(flows) = &forecast.flows {
        occ4d::io::save_flow_volumes(&flow_path, flows, TaskMode::InflatedGmo)?;
    }
    println!("wrote {} forecast to {}", forecast.method, grid_path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn baseline(
    kind: BaselineKind,
    gt: Option<PathBuf>,
    scene_path: Option<PathBuf>,
    present: usize,
    spec: &GridSpec,
    bev: Option<PathBuf>,
    z_ground: f64,
    height: f64,
    out: &Path,
) -> Result<()> {
    let prepared_window = |path: &Path| -> Result<occ4d::scene::PreparedWindow> {
        let scene = occ4d::io::load_scene(path)?;
        let window = split_scene(&scene, spec.n_past, spec.n_future)
            .into_iter()
            .find(|w| w.present == present)
            .with_context(|| {
                format!("no window with present frame {present} in {}", path.display())
            })?;
        Ok(to_present_frame(&scene, &window)?)
    };

    let forecast = match kind {
        BaselineKind::Static => {
            let base = gt.context("--kind static requires --gt <sample base>")?;
            let sample = occ4d::io::load_sample(&base)?;
            static_world(sample.occupancy.present(), sample.occupancy.n_future())
        }
        BaselineKind::Cv => {
            let path = scene_path.context("--kind cv requires --scene")?;
            let window = prepared_window(&path)?;
            let tracks = filter_invalid_tracks(&window, spec);
            constant_velocity_forecast(&tracks, spec, spec.n_future)?
        }
        BaselineKind::BevLift => {
            let path = bev.context("--kind bev-lift requires --bev <grid file>")?;
            let (bev_seq, _) = occ4d::io::load_grid_sequence(&path)?;
            lift_bev_sequence(bev_seq.frames(), z_ground, height, spec)?
        }
        BaselineKind::Points => {
            let path = scene_path.context("--kind points requires --scene")?;
            let window = prepared_window(&path)?;
            let clouds = window
                .clouds
                .context("scene has no labeled point clouds")?;
            voxelize_labeled_points(&clouds, spec)?
        }
    };
    save_forecast(&forecast, out)
}

/// Stems of all sample grid files in a directory.
fn grid_stems(dir: &Path) -> Result<Vec<String>> {
    let mut stems = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(".c4do") {
            stems.push(stem.to_string());
        }
    }
    stems.sort();
    Ok(stems)
}

#[allow(clippy::too_many_arguments)]
fn eval(
    pred_dir: &Path,
    gt_dir: &Path,
    task: Option<TaskMode>,
    report_path: &Path,
    csv: Option<&Path>,
    vpq: bool,
    vpq_threshold: f64,
    nms_radius: f64,
    assoc_radius: f64,
    workers: usize,
) -> Result<()> {
    use rayon::prelude::*;
    let stems = grid_stems(gt_dir)?;
    if stems.is_empty() {
        bail!("no samples (*.c4do) found in {}", gt_dir.display());
    }
    let cfg = EvalConfig {
        vpq_threshold,
        compute_vpq: vpq,
        ..EvalConfig::default()
    };
    let pool = thread_pool(workers)?;

    // each worker loads its own pair and folds a local accumulator; partial
    // accumulators merge associatively at the end
    let acc = pool.install(|| {
        stems
            .par_iter()
            .map(|stem| -> Result<EvalAccumulator> {
                let sample = occ4d::io::load_sample(&gt_dir.join(stem))?;
                if let Some(task) = task {
                    if sample.mode != task {
                        bail!("{stem}: sample was built as {}, expected {task}", sample.mode);
                    }
                }
                let pred_grid = pred_dir.join(format!("{stem}.c4do"));
                let pred_flow = pred_dir.join(format!("{stem}.c4df"));
                let mut forecast = occ4d::io::load_external_forecast(
                    &pred_grid,
                    pred_flow.exists().then_some(pred_flow.as_path()),
                    &sample.spec,
                )?;
                if vpq && !forecast.occupancy.present().has_ids() {
                    let flows = forecast.flows.as_ref().with_context(|| {
                        format!("{stem}: VPQ needs instance IDs or a flow file to derive them")
                    })?;
                    let centers =
                        extract_centers(forecast.occupancy.present(), nms_radius, 0.5)?;
                    forecast.occupancy =
                        associate_via_flow(&forecast.occupancy, flows, &centers, assoc_radius)?;
                }
                let mut acc = EvalAccumulator::new(
                    sample.occupancy.n_future(),
                    &cfg.classes,
                    cfg.compute_vpq,
                );
                acc.accumulate(&forecast, &sample, &cfg)?;
                Ok(acc)
            })
            .try_reduce_with(|mut a, b| {
                a.merge(&b)?;
                Ok(a)
            })
            .expect("at least one sample")
    })?;

    let report = acc.finalize();
    occ4d::io::write_json(report_path, &report)?;
    if let Some(csv_path) = csv {
        occ4d::io::write_report_csv(&report, csv_path)?;
    }
    for class in &report.classes {
        println!(
            "{:?}: IoU_c {} | IoU_f {} | discounted {}",
            class.class,
            fmt(class.iou_current),
            fmt(class.iou_future_mean),
            fmt(class.iou_discounted),
        );
    }
    if let Some(v) = report.vpq {
        println!("VPQ: {v:.4}");
    }
    println!("evaluated {} samples; report at {}", report.samples, report_path.display());
    Ok(())
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

fn stats(scenes: &[PathBuf], spec: &GridSpec) -> Result<()> {
    let mut per_window: Vec<Vec<occ4d::scene::InstanceTrack>> = Vec::new();
    for path in scenes {
        let scene = occ4d::io::load_scene(path)?;
        for window in split_scene(&scene, spec.n_past, spec.n_future) {
            let prepared = to_present_frame(&scene, &window)?;
            per_window.push(filter_invalid_tracks(&prepared, spec));
        }
    }
    let hist = occ4d::scene::instance_duration_stats(per_window.iter().map(|t| t.as_slice()));
    println!("duration [t_in, t_out] | count | fraction");
    for (&(t_in, t_out), &count) in &hist.counts {
        println!(
            "[{t_in:>3}, {t_out:>2}]          | {count:>5} | {:.4}",
            hist.fraction((t_in, t_out))
        );
    }
    println!("total instances: {}", hist.total);
    Ok(())
}

fn inspect(base: &Path, export_voxels: Option<&Path>) -> Result<()> {
    let sample = occ4d::io::load_sample(base)?;
    let spec = &sample.spec;
    println!("sample {} (present frame {})", sample.meta.scene_id, sample.meta.present_index);
    println!(
        "grid {}x{}x{} @ {} m | Np {} | Nf {} | task {}",
        spec.nx(), spec.ny(), spec.nz(), spec.resolution, spec.n_past, spec.n_future, sample.mode
    );
    println!("retained instances: {:?}", sample.meta.retained_instances);
    for (t, frame) in sample.occupancy.frames().iter().enumerate() {
        let valid_flow = sample.flows[t].valid().iter().filter(|&&v| v).count();
        println!(
            "  t={t}: GMO {:>7} | GSO {:>7} | flow-valid {valid_flow}",
            frame.count_label(occ4d::grid::SemanticLabel::Gmo),
            frame.count_label(occ4d::grid::SemanticLabel::Gso),
        );
    }
    if let Some(path) = export_voxels {
        let file = std::fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        let mut w = std::io::BufWriter::new(file);
        occ4d::io::export_voxels_csv(&sample.occupancy, &mut w)?;
        println!("voxel list written to {}", path.display());
    }
    Ok(())
}
