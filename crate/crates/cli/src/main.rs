//! `tactile`: pattern generation, simulation, tracking, depth, force and
//! benchmarking from the command line.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use tactile_core::depth::reconstruct_surface;
use tactile_core::flow::{AdaptiveTrackerState, FlowField};
use tactile_core::force::{
    build_features, calibrate, force_distribution, nhhd, quick_total_force, subsample_flow, subsample_plane,
    ForceDistribution, Split, AXIS_NAMES,
};
use tactile_core::io;
use tactile_core::pattern::{generate_pattern, validate_pattern, PatternParams};
use tactile_core::pipeline::{bench, pattern_sweep, run_pipeline, BenchSpec, PipelineConfig, SweepSpec};
use tactile_core::raster::{Image, VecField};
use tactile_core::simulator::{
    displacement_field, label_samples, protocol_scenarios, reference_model, render_deformed, synth_features,
    CameraModel, ProtocolGrid, SynthContext,
};

/// Output directory used when `-o` is omitted.
const OUT_ENV: &str = "TACTILE_OUT";

#[derive(Parser, Debug)]
#[command(name = "tactile", version, about = "Dense color-pattern tactile sensing pipeline")]
struct Cli {
    /// Pipeline config file (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config entry, e.g. `--set flow.window=15`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Worker threads (0 = all cores). Overrides the config.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dense random color pattern and its manifest.
    GenPattern(GenPatternArgs),
    /// Render indentation scenarios with ground-truth flow, or a force dataset.
    Simulate(SimulateArgs),
    /// Dense flow of a frame sequence against a reference, with adaptive referencing.
    Track(TrackArgs),
    /// Relative contact depth from a flow file.
    Depth(DepthArgs),
    /// Decompose a flow file into curl-free, divergence-free and harmonic parts.
    Nhhd(NhhdArgs),
    /// Fit a force model to a CSV dataset.
    Calibrate(CalibrateArgs),
    /// Force distribution from flow, depth and a model.
    Estimate(EstimateArgs),
    /// Full pipeline over a frame sequence.
    Run(RunArgs),
    /// Pattern-parameter sweep of tracking error.
    Sweep(SweepArgs),
    /// Per-stage latency on a synthetic stream.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct GenPatternArgs {
    /// Patch side in mm.
    #[arg(long)]
    d: f64,
    /// Minimum squared channel difference between neighboring patches.
    #[arg(long)]
    r: f64,
    /// Pattern side in pixels.
    #[arg(long, default_value_t = 700)]
    res: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Printed side in mm.
    #[arg(long)]
    print_area: Option<f64>,
    /// Crop the exported image to `WxH` pixels.
    #[arg(long, value_parser = parse_dims)]
    crop: Option<(usize, usize)>,
    /// Output image (.png or .ppm); the manifest goes next to it as .txt.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario CSV (shape, diameter, cx, cy, depth, sx, sy).
    #[arg(long, conflicts_with = "protocol")]
    scenarios: Option<PathBuf>,
    /// Use the built-in calibration protocol grid on the desk sensor.
    #[arg(long)]
    protocol: bool,
    /// Pattern manifest to regenerate the pattern from.
    #[arg(long)]
    pattern: Option<PathBuf>,
    /// Patch side (mm) when no manifest is given.
    #[arg(long, default_value_t = 0.75)]
    d: f64,
    #[arg(long, default_value_t = 0.1)]
    r: f64,
    /// Camera pixels per mm; defaults to raster width / 36.
    #[arg(long)]
    px_per_mm: Option<f64>,
    /// Camera noise std on [0, 1] intensities.
    #[arg(long, default_value_t = 1.0 / 255.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    blur: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write a labelled force dataset to this CSV.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Label noise std (N) for the dataset.
    #[arg(long, default_value_t = 0.1)]
    force_noise: f64,
    /// Skip writing frame images and ground-truth flow.
    #[arg(long)]
    no_frames: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SequenceArgs {
    /// Reference (undeformed) frame.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Frame directory or a single frame; directory entries are read in name order.
    #[arg(long)]
    seq: PathBuf,
    /// Absolute-coordinate remap (PIEH) applied to every image before tracking.
    #[arg(long)]
    remap: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrackArgs {
    #[command(flatten)]
    input: SequenceArgs,
    /// Flow parameters file; same keys as --config.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Track every frame directly against the reference.
    #[arg(long)]
    no_rebase: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DepthArgs {
    #[arg(long)]
    flow: PathBuf,
    /// Frame guiding the edge-preserving filter.
    #[arg(long)]
    frame: PathBuf,
    #[arg(long)]
    sigma: Option<f64>,
    /// Output DPTH file; a heat map is written next to it as .png.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct NhhdArgs {
    #[arg(long)]
    flow: PathBuf,
    /// Subsampling stride; defaults to force.stride.
    #[arg(long)]
    stride: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Training fraction.
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    /// Shuffle seed for the split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stride the dataset features were computed at.
    #[arg(long)]
    stride: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    flow: PathBuf,
    /// Processed depth (DPTH) on the flow raster.
    #[arg(long)]
    depth: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Per-cell force CSV; totals go next to it as .totals.txt.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    input: SequenceArgs,
    /// Force model; overrides the `model` config key.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Patch sizes (mm), comma separated.
    #[arg(long, value_delimiter = ',')]
    d: Option<Vec<f64>>,
    /// Randomness factors, comma separated.
    #[arg(long, value_delimiter = ',')]
    r: Option<Vec<f64>>,
    /// Keep only the first N standard indenters.
    #[arg(long)]
    indenters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value_t = 100)]
    frames: usize,
    #[arg(long, default_value_t = 3)]
    runs: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    /// Peak displacement of the synthetic press (px).
    #[arg(long, default_value_t = 8.0)]
    peak: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report as key = value lines.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_dims(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or_else(|| format!("{s:?} is not WxH"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(w)?, p(h)?))
}

/// Keys written by [`Manifest`] that are not pipeline settings.
fn is_echo_key(k: &str) -> bool {
    k == "command" || k.starts_with("arg.")
}

fn load_config(cli: &Cli, extra: Option<&Path>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    for path in cli.config.iter().map(PathBuf::as_path).chain(extra) {
        let kv = io::read_kv(path).with_context(|| format!("reading config {}", path.display()))?;
        for (k, v) in kv.iter().filter(|(k, _)| !is_echo_key(k)) {
            cfg.set(k, v).with_context(|| format!("in {}", path.display()))?;
        }
    }
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .with_context(|| format!("--set {o:?} is not KEY=VALUE"))?;
        cfg.set(k, v)?;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Run record echoed next to every output: the command, its arguments and
/// the effective pipeline config. Feeding it back through `--config`
/// reproduces the settings.
struct Manifest {
    pairs: Vec<(String, String)>,
}

impl Manifest {
    fn new(command: &str, config: &PipelineConfig) -> Self {
        let mut pairs = vec![("command".to_string(), command.to_string())];
        pairs.extend(config.to_pairs());
        Self { pairs }
    }

    fn arg(mut self, key: &str, value: impl ToString) -> Self {
        self.pairs.push((format!("arg.{key}"), value.to_string()));
        self
    }

    fn write(&self, path: &Path) -> Result<()> {
        io::write_kv(path, &self.pairs).with_context(|| format!("writing {}", path.display()))
    }
}

fn out_dir(given: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = given
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

fn is_image(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "ppm" | "pgm" | "pnm")
    )
}

fn list_frames(seq: &Path) -> Result<Vec<PathBuf>> {
    if seq.is_file() {
        return Ok(vec![seq.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = fs::read_dir(seq)
        .with_context(|| format!("listing {}", seq.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    out.sort();
    if out.is_empty() {
        bail!("no frames in {}", seq.display());
    }
    Ok(out)
}

struct Loader {
    remap: Option<VecField>,
}

impl Loader {
    fn new(remap: &Option<PathBuf>) -> Result<Self> {
        let remap = match remap {
            Some(p) => Some(io::read_flow(p).with_context(|| format!("reading remap {}", p.display()))?.u),
            None => None,
        };
        Ok(Self { remap })
    }

    fn load(&self, path: &Path) -> tactile_core::Result<Image> {
        let img = io::read_image(path)?;
        match &self.remap {
            Some(m) => io::apply_remap(&img, m),
            None => Ok(img),
        }
    }
}

fn gen_pattern(a: &GenPatternArgs) -> Result<()> {
    let mut params = PatternParams::new(a.res, a.d, a.r, a.seed);
    if let Some(p) = a.print_area {
        params.print_area_mm = p;
    }
    let pattern = generate_pattern(&params)?;
    let report = validate_pattern(&pattern, &params)?;
    ensure_parent(&a.output)?;
    io::write_pattern_image(&a.output, &pattern, a.crop)?;
    let mut manifest = io::pattern_manifest(&params, pattern.log.fallback_count());
    if let Some((w, h)) = a.crop {
        manifest.push(("crop".into(), format!("{w}x{h}")));
    }
    let mpath = a.output.with_extension("txt");
    io::write_kv(&mpath, &manifest)?;
    println!(
        "pattern {}x{} d={} r={} seed={}: satisfaction {:.4}, min gap {:.4}, fallbacks {}",
        params.resolution_px,
        params.resolution_px,
        params.patch_size_mm,
        params.randomness,
        params.seed,
        report.constraint_satisfaction_rate,
        report.min_neighbor_gap,
        report.fallback_count
    );
    println!("wrote {} and {}", a.output.display(), mpath.display());
    Ok(())
}

fn simulate(cfg: PipelineConfig, a: &SimulateArgs) -> Result<()> {
    let dir = out_dir(&a.output)?;
    let (ctx, scenarios) = if a.protocol {
        let ctx = SynthContext::desk(a.seed)?;
        (ctx, protocol_scenarios(&ProtocolGrid::default()))
    } else {
        let path = a.scenarios.as_ref().context("give --scenarios <csv> or --protocol")?;
        let scenarios = io::read_scenarios(path)?;
        let params = match &a.pattern {
            Some(m) => io::read_pattern_manifest(m)?.0,
            None => {
                let (w, h) = cfg.raster;
                let field_mm = 36.0_f64.max(h as f64 * 36.0 / w as f64);
                let print = field_mm + 1.0;
                PatternParams {
                    print_area_mm: print,
                    ..PatternParams::new(2 * (print / a.d).ceil() as usize, a.d, a.r, a.seed)
                }
            }
        };
        let (w, h) = cfg.raster;
        let camera = CameraModel {
            noise_sigma: a.noise,
            blur_sigma: a.blur,
            ..CameraModel::ideal(w, h, a.px_per_mm.unwrap_or(w as f64 / 36.0))
        };
        let pattern = generate_pattern(&params)?;
        (SynthContext::from_pattern(&pattern, camera, cfg.clone(), a.seed)?, scenarios)
    };
    info!("{} scenarios on a {}x{} camera", scenarios.len(), ctx.camera.width, ctx.camera.height);
    let reference = ctx.reference()?;
    io::write_image(&dir.join("reference.png"), &reference)?;
    io::write_scenarios(&dir.join("scenarios.csv"), &scenarios)?;
    if !a.no_frames {
        for (i, sc) in scenarios.iter().enumerate() {
            let gt = displacement_field(sc, &ctx.camera)?;
            let frame = render_deformed(&ctx.source, &gt, &ctx.camera, a.seed.wrapping_add(i as u64 + 1))?;
            io::write_image(&dir.join(format!("frame_{i:04}.png")), &frame.image)?;
            let flow = FlowField {
                u: gt.field,
                valid: frame.valid,
            };
            io::write_flow(&dir.join(format!("gt_{i:04}.flo")), &flow)?;
        }
    }
    if let Some(path) = &a.dataset {
        let feats = synth_features(&scenarios, &ctx)?;
        let truth = reference_model(&feats, ctx.config.force_stride)?;
        let samples = label_samples(&truth, &feats, a.force_noise, a.seed)?;
        ensure_parent(path)?;
        io::write_dataset(path, &samples)?;
        io::write_model(&dir.join("true_model.txt"), &truth)?;
        println!("wrote {} samples to {}", samples.len(), path.display());
    }
    Manifest::new("simulate", &ctx.config)
        .arg("scenarios", a.scenarios.as_ref().map(|p| p.display().to_string()).unwrap_or_default())
        .arg("protocol", a.protocol)
        .arg("pattern", a.pattern.as_ref().map(|p| p.display().to_string()).unwrap_or_default())
        .arg("d", a.d)
        .arg("r", a.r)
        .arg("px_per_mm", ctx.camera.px_per_mm)
        .arg("noise", ctx.camera.noise_sigma)
        .arg("blur", ctx.camera.blur_sigma)
        .arg("seed", a.seed)
        .arg("force_noise", a.force_noise)
        .write(&dir.join("manifest.txt"))?;
    println!("simulated {} scenarios into {}", scenarios.len(), dir.display());
    Ok(())
}

fn track(cfg: PipelineConfig, a: &TrackArgs) -> Result<()> {
    let dir = out_dir(&a.output)?;
    let loader = Loader::new(&a.input.remap)?;
    let reference = loader.load(&a.input.reference)?;
    let frames = list_frames(&a.input.seq)?;
    let threshold = if a.no_rebase { f64::INFINITY } else { cfg.rebase_threshold };
    let mut tracker = AdaptiveTrackerState::new(reference, threshold);
    for (i, path) in frames.iter().enumerate() {
        let frame = loader.load(path)?;
        let (flow, step) = tracker
            .step(&frame, &cfg.flow)
            .with_context(|| format!("tracking {}", path.display()))?;
        io::write_flow(&dir.join(format!("flow_{i:04}.flo")), &flow)?;
        info!(
            "{}: photometric error {:.4}{}",
            path.display(),
            step.photometric_error,
            if step.rebased { ", rebased" } else { "" }
        );
    }
    Manifest::new("track", &cfg)
        .arg("ref", a.input.reference.display())
        .arg("seq", a.input.seq.display())
        .arg("no_rebase", a.no_rebase)
        .write(&dir.join("manifest.txt"))?;
    println!(
        "tracked {} frames into {} ({} rebases)",
        frames.len(),
        dir.display(),
        tracker.rebase_count
    );
    Ok(())
}

fn depth(mut cfg: PipelineConfig, a: &DepthArgs) -> Result<()> {
    if let Some(s) = a.sigma {
        cfg.density.sigma = s;
        cfg.validate()?;
    }
    let flow = io::read_flow(&a.flow)?;
    let frame = io::read_image(&a.frame)?;
    let map = reconstruct_surface(&flow, &frame, &cfg.density, &cfg.guided)?;
    ensure_parent(&a.output)?;
    io::write_depth(&a.output, &map.processed)?;
    let heat = a.output.with_extension("png");
    io::write_image(&heat, &io::heat_map(&map.processed))?;
    Manifest::new("depth", &cfg)
        .arg("flow", a.flow.display())
        .arg("frame", a.frame.display())
        .write(&sibling(&a.output, ".manifest.txt"))?;
    let (_, peak) = map.processed.min_max();
    println!("depth peak {peak:.6}; wrote {} and {}", a.output.display(), heat.display());
    Ok(())
}

fn nhhd_cmd(cfg: PipelineConfig, a: &NhhdArgs) -> Result<()> {
    let dir = out_dir(&a.output)?;
    let stride = a.stride.unwrap_or(cfg.force_stride);
    if stride == 0 {
        bail!("stride must be at least 1");
    }
    let flow = io::read_flow(&a.flow)?;
    let comps = nhhd(&subsample_flow(&flow, stride));
    for (name, f) in [("d", &comps.d), ("r", &comps.r), ("h", &comps.h)] {
        io::write_flow(&dir.join(format!("{name}.flo")), &FlowField::from_field(f.clone()))?;
    }
    let (normal, shear) = quick_total_force(&comps);
    Manifest::new("nhhd", &cfg)
        .arg("flow", a.flow.display())
        .arg("stride", stride)
        .write(&dir.join("manifest.txt"))?;
    println!(
        "sum |d| = {normal:.6}, sum v = ({:.6}, {:.6}); wrote d.flo r.flo h.flo to {}",
        shear[0],
        shear[1],
        dir.display()
    );
    Ok(())
}

fn calibrate_cmd(cfg: PipelineConfig, a: &CalibrateArgs) -> Result<()> {
    let data = io::read_dataset(&a.data)?;
    let (mut model, report) = calibrate(
        &data,
        Split {
            train_fraction: a.split,
            seed: a.seed,
        },
    )?;
    model.stride = a.stride.unwrap_or(cfg.force_stride);
    ensure_parent(&a.output)?;
    io::write_model(&a.output, &model)?;
    let mut rep = Manifest::new("calibrate", &cfg)
        .arg("data", a.data.display())
        .arg("split", a.split)
        .arg("seed", a.seed)
        .arg("fit.train", report.train)
        .arg("fit.test", report.test);
    println!("calibrated on {} samples, tested on {}", report.train, report.test);
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    for (name, fit) in AXIS_NAMES.iter().zip(&report.axes) {
        println!(
            "  {name:<8} R2 {}  adjusted R2 {}  RMSE {:.4} N",
            fmt(fit.r2),
            fmt(fit.adjusted_r2),
            fit.rmse
        );
        rep = rep
            .arg(&format!("fit.{name}.adjusted_r2"), fmt(fit.adjusted_r2))
            .arg(&format!("fit.{name}.rmse"), fit.rmse);
    }
    rep.write(&sibling(&a.output, ".report.txt"))?;
    println!("wrote {}", a.output.display());
    Ok(())
}

fn write_forces(path: &Path, f: &ForceDistribution) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "x,y,f_normal,f_shear_x,f_shear_y")?;
    let (cw, ch) = f.f_normal.dims();
    for y in 0..ch {
        for x in 0..cw {
            writeln!(
                w,
                "{x},{y},{},{},{}",
                f.f_normal.get(x, y),
                f.f_shear_x.get(x, y),
                f.f_shear_y.get(x, y)
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

fn estimate(cfg: PipelineConfig, a: &EstimateArgs) -> Result<()> {
    let flow = io::read_flow(&a.flow)?;
    let depth = io::read_depth(&a.depth)?;
    if depth.dims() != flow.dims() {
        bail!("depth {:?} and flow {:?} rasters differ", depth.dims(), flow.dims());
    }
    let model = io::read_model(&a.model)?;
    let s = model.stride;
    let comps = nhhd(&subsample_flow(&flow, s));
    let dp = subsample_plane(&depth, s).map(|v| v.max(0.0));
    let feats = build_features(&dp, &comps, (s * s) as f64)?;
    let f = force_distribution(&model, &feats);
    ensure_parent(&a.output)?;
    write_forces(&a.output, &f)?;
    let mut totals = Manifest::new("estimate", &cfg)
        .arg("flow", a.flow.display())
        .arg("depth", a.depth.display())
        .arg("model", a.model.display());
    for (name, t) in AXIS_NAMES.iter().zip(f.totals) {
        totals = totals.arg(&format!("total.{name}"), t);
    }
    totals.write(&sibling(&a.output, ".totals.txt"))?;
    println!(
        "total force: normal {:.4} N, shear ({:.4}, {:.4}) N; wrote {}",
        f.totals[0],
        f.totals[1],
        f.totals[2],
        a.output.display()
    );
    Ok(())
}

fn run_cmd(mut cfg: PipelineConfig, a: &RunArgs) -> Result<()> {
    use std::io::Write;
    let dir = out_dir(&a.output)?;
    if let Some(m) = &a.model {
        cfg.model_path = Some(m.clone());
    }
    let model = match &cfg.model_path {
        Some(p) => Some(io::read_model(p).with_context(|| format!("reading model {}", p.display()))?),
        None => None,
    };
    let loader = Loader::new(&a.input.remap)?;
    let reference = loader.load(&a.input.reference)?;
    if reference.dims() != cfg.raster {
        info!("raster set to the reference size {:?}", reference.dims());
        cfg.raster = reference.dims();
    }
    let paths = list_frames(&a.input.seq)?;
    let mut log = std::io::BufWriter::new(fs::File::create(dir.join("frames.csv"))?);
    writeln!(log, "frame,file,photometric_error,rebased,depth_peak,F_normal,F_shear_x,F_shear_y,total_ms")?;
    let frames = paths.iter().map(|p| loader.load(p));
    let summary = run_pipeline(&cfg, reference, frames, model, |i, out| {
        io::write_flow(&dir.join(format!("flow_{i:04}.flo")), &out.flow)?;
        let dpath = dir.join(format!("depth_{i:04}.dpth"));
        io::write_depth(&dpath, &out.depth.processed)?;
        io::write_image(&dpath.with_extension("png"), &io::heat_map(&out.depth.processed))?;
        let t = out.forces.as_ref().map(|f| f.totals);
        let cell = |j: usize| t.map(|t| t[j].to_string()).unwrap_or_default();
        writeln!(
            log,
            "{i},{},{},{},{},{},{},{},{:.3}",
            paths[i].display(),
            out.step.photometric_error,
            out.step.rebased,
            out.depth.processed.min_max().1,
            cell(0),
            cell(1),
            cell(2),
            1e3 * out.timings.total
        )?;
        Ok(())
    })?;
    log.flush()?;
    Manifest::new("run", &cfg)
        .arg("ref", a.input.reference.display())
        .arg("seq", a.input.seq.display())
        .write(&dir.join("manifest.txt"))?;
    println!(
        "processed {} of {} frames ({} rebases) into {}",
        summary.processed,
        paths.len(),
        summary.rebase_count,
        dir.display()
    );
    for (i, e) in &summary.failures {
        eprintln!("frame {i} failed: {e}");
    }
    Ok(())
}

fn sweep_cmd(cfg: PipelineConfig, a: &SweepArgs) -> Result<()> {
    let dir = out_dir(&a.output)?;
    let mut spec = SweepSpec {
        flow: cfg.flow.clone(),
        seed: a.seed,
        ..SweepSpec::default()
    };
    if let Some(d) = &a.d {
        spec.d_values = d.clone();
    }
    if let Some(r) = &a.r {
        spec.r_values = r.clone();
    }
    if let Some(n) = a.indenters {
        spec.indenters.truncate(n.max(1));
    }
    let table = pattern_sweep(&spec)?;
    io::write_sweep_csv(fs::File::create(dir.join("sweep.csv"))?, &table)?;
    io::write_sweep_plot(fs::File::create(dir.join("sweep_plot.csv"))?, &table)?;
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    Manifest::new("sweep", &cfg)
        .arg("d", join(&spec.d_values))
        .arg("r", join(&spec.r_values))
        .arg("indenters", spec.indenters.len())
        .arg("seed", a.seed)
        .write(&dir.join("manifest.txt"))?;
    for (d, r) in table.pairs() {
        match table.mean_over_indenters(d, r) {
            Some(m) => println!("d={d:<6} r={r:<4} mean error {m:.4} mm"),
            None => println!("d={d:<6} r={r:<4} failed"),
        }
    }
    Ok(())
}

fn bench_cmd(cfg: PipelineConfig, a: &BenchArgs) -> Result<()> {
    let spec = BenchSpec {
        frames: a.frames,
        runs: a.runs,
        warmup: a.warmup,
        peak_px: a.peak,
        seed: a.seed,
    };
    let r = bench(&cfg, &spec)?;
    println!(
        "{}x{} on {} threads, {} timed frames",
        r.raster.0, r.raster.1, r.threads, r.samples
    );
    println!(
        "median ms: flow {:.2}  density {:.2}  nhhd {:.2}  features {:.2}  total {:.2}  ({:.1} frames/s)",
        r.flow_ms, r.density_ms, r.nhhd_ms, r.features_ms, r.total_ms, r.frames_per_second
    );
    if let Some(path) = &a.output {
        ensure_parent(path)?;
        Manifest::new("bench", &cfg)
            .arg("frames", a.frames)
            .arg("runs", a.runs)
            .arg("warmup", a.warmup)
            .arg("peak", a.peak)
            .arg("seed", a.seed)
            .arg("flow_ms", r.flow_ms)
            .arg("density_ms", r.density_ms)
            .arg("nhhd_ms", r.nhhd_ms)
            .arg("features_ms", r.features_ms)
            .arg("total_ms", r.total_ms)
            .arg("frames_per_second", r.frames_per_second)
            .arg("threads", r.threads)
            .write(path)?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let extra = match &cli.command {
        Command::Track(a) => a.params.as_deref(),
        _ => None,
    };
    let cfg = load_config(cli, extra)?;
    let pool = cfg.thread_pool()?;
    pool.install(|| match &cli.command {
        Command::GenPattern(a) => gen_pattern(a),
        Command::Simulate(a) => simulate(cfg.clone(), a),
        Command::Track(a) => track(cfg.clone(), a),
        Command::Depth(a) => depth(cfg.clone(), a),
        Command::Nhhd(a) => nhhd_cmd(cfg.clone(), a),
        Command::Calibrate(a) => calibrate_cmd(cfg.clone(), a),
        Command::Estimate(a) => estimate(cfg.clone(), a),
        Command::Run(a) => run_cmd(cfg.clone(), a),
        Command::Sweep(a) => sweep_cmd(cfg.clone(), a),
        Command::Bench(a) => bench_cmd(cfg.clone(), a),
    })
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = dispatch(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
