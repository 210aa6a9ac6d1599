use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use weakseg::annosim::{baseline_slices, sample_skilled, AnnotationSet, SimParams};
use weakseg::asm::{initial_template, DeformParams};
use weakseg::bench::{self, BenchConfig, Cell, Method};
use weakseg::grid::{edt, iou, rvol, weight_map, BinaryGrid, Dims, GridSpec, VoxelGrid, WeightParams};
use weakseg::mesh::{icosphere, obj, validate};
use weakseg::pipeline::{fit_points, DEFAULT_SUBDIVISIONS};
use weakseg::service::{read_bundle, ServiceConfig};
use weakseg::varseg::{self, make_phantom, Init, PhantomSpec, VarSegConfig};
use weakseg::voxelize::{rasterize, surface_points};
use weakseg::{Error, Point3};

#[derive(Parser)]
#[command(name = "weakseg", version, about = "Sparse-point template deformation and weakly-supervised segmentation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write an icosphere OBJ.
    Icosphere {
        #[arg(long, default_value_t = DEFAULT_SUBDIVISIONS)]
        subdivisions: u32,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        /// Centre as z,y,x (mm).
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.0, 0.0])]
        center: Vec<f64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Check mesh invariants; prints a JSON report, exit status 1 if invalid.
    Validate { mesh: PathBuf },
    /// Deform a template toward annotation points.
    Deform(DeformCmd),
    /// Rasterize a closed mesh onto the grid of a reference volume.
    Rasterize {
        mesh: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Euclidean distance transform of a binary volume (voxel units).
    Edt {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Boundary-band weight map of a template mask.
    Weightmap {
        template: PathBuf,
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Print the cross-entropy / weighted-reconstruction loss breakdown as JSON.
    Loss {
        /// Binary supervision mask Y.
        #[arg(long)]
        y: PathBuf,
        /// Predicted probabilities Yhat.
        #[arg(long)]
        yhat: PathBuf,
        /// Image X.
        #[arg(long)]
        x: PathBuf,
        /// Reconstruction Xhat; derived from Yhat and X when omitted.
        #[arg(long)]
        xhat: Option<PathBuf>,
        /// Template defining the weight map; Y when omitted.
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-4)]
        lambda: f64,
        #[command(flatten)]
        weights: WeightArgs,
    },
    /// Generate a synthetic ellipsoid phantom: image.rvol, truth.rvol, template.rvol.
    Phantom {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use member `id` of the benchmark family instead of the default phantom.
        #[arg(long)]
        family: Option<usize>,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Per-voxel variational segmentation of an image from a template mask.
    Segment {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        template: PathBuf,
        #[command(flatten)]
        opt: VarSegArgs,
        #[command(flatten)]
        weights: WeightArgs,
        /// Probability volume (f32).
        #[arg(short, long)]
        out: PathBuf,
        /// Thresholded mask at gamma.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// JSON with the per-step loss trace and final breakdown.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Lambda x gamma grid; CSV lambda,gamma,iou_vs_truth,iou_vs_template,final_loss.
    Sweep {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        template: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1.0])]
        lambdas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.95])]
        gammas: Vec<f64>,
        #[command(flatten)]
        opt: VarSegArgs,
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Simulate an annotator on a ground-truth mask.
    Simulate {
        gt: PathBuf,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        p: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Simulate the slice baseline with this many slices instead of points.
        #[arg(long)]
        slices: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_SUBDIVISIONS)]
        subdivisions: u32,
        /// Annotation JSON.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Also write the chosen deformed mesh (points method).
        #[arg(long)]
        mesh: Option<PathBuf>,
    },
    /// Effort benchmark; writes the per-run CSV.
    Bench(BenchCmd),
    /// Iso-IoU curves from a benchmark CSV.
    Iso {
        csv: PathBuf,
        #[arg(long)]
        target: f64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP session service.
    Serve {
        #[arg(long, env = "WEAKSEG_BIND", default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Runtime worker threads; 0 picks the core count.
        #[arg(long, env = "WEAKSEG_WORKERS", default_value_t = 0)]
        workers: usize,
        #[arg(long, env = "WEAKSEG_SNAPSHOT_DIR")]
        snapshot_dir: Option<PathBuf>,
        /// Directory with the browser client, served at `/`.
        #[arg(long, env = "WEAKSEG_STATIC_DIR")]
        static_dir: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SUBDIVISIONS)]
        subdivisions: u32,
    },
    /// Work with exported session bundles.
    Bundle {
        #[command(subcommand)]
        cmd: BundleCmd,
    },
}

#[derive(Subcommand)]
enum BundleCmd {
    /// Print the manifest and annotation of a bundle.
    Inspect { bundle: PathBuf },
    /// Re-rasterize the bundled mesh on the bundled grid; `--check` compares
    /// against the bundled raster.
    Rasterize {
        bundle: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        check: bool,
    },
    /// Extract the annotation points as JSON.
    Points {
        bundle: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DeformCmd {
    /// Annotation JSON (`{"points": [[z,y,x], ...]}`).
    #[arg(long)]
    points: PathBuf,
    /// Start from this OBJ instead of a sphere placed from the points.
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SUBDIVISIONS)]
    subdivisions: u32,
    #[command(flatten)]
    params: DeformArgs,
    /// Reference volume; with it the mesh is also rasterized.
    #[arg(long)]
    volume: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    raster: Option<PathBuf>,
}

#[derive(Args)]
struct DeformArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

impl DeformArgs {
    fn params(&self) -> DeformParams {
        let d = DeformParams::default();
        DeformParams {
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            tau: self.tau.unwrap_or(d.tau),
            kappa: self.kappa.unwrap_or(d.kappa),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            tol: self.tol.unwrap_or(d.tol),
        }
    }
}

#[derive(Args)]
struct GridArgs {
    /// Copy dims, spacing and origin from this RVOL.
    #[arg(long, conflicts_with = "dims")]
    like: Option<PathBuf>,
    /// Grid dims as d,h,w (unit spacing unless --spacing is given).
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', requires = "dims")]
    spacing: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', requires = "dims")]
    origin: Option<Vec<f64>>,
}

impl GridArgs {
    fn spec(&self) -> Result<GridSpec> {
        if let Some(p) = &self.like {
            return Ok(*read_rvol(p)?.spec());
        }
        let Some(d) = &self.dims else { bail!("give --like or --dims") };
        let spacing = self.spacing.as_deref().map_or(Ok([1.0; 3]), arr3)?;
        let origin = self.origin.as_deref().map_or(Ok([0.0; 3]), arr3)?;
        let [d, h, w] = arr3(d)?;
        Ok(GridSpec::new(Dims::new(d, h, w), spacing, origin)?)
    }
}

#[derive(Args)]
struct WeightArgs {
    /// Band radius around the template boundary (voxels).
    #[arg(long, default_value_t = 3.0)]
    band: f64,
    #[arg(long, default_value_t = 1.0)]
    w_hi: f32,
    #[arg(long, default_value_t = 0.1)]
    w_lo: f32,
}

impl WeightArgs {
    fn params(&self) -> WeightParams {
        WeightParams { d: self.band, w_hi: self.w_hi, w_lo: self.w_lo }
    }
}

#[derive(Args)]
struct VarSegArgs {
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    #[arg(long, default_value_t = 0.95)]
    gamma: f64,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 1.0)]
    step_size: f64,
    /// Start from a uniform 0.5 instead of the template.
    #[arg(long)]
    uniform_init: bool,
    #[arg(long)]
    no_backtracking: bool,
}

impl VarSegArgs {
    fn config(&self) -> VarSegConfig {
        VarSegConfig {
            lambda: self.lambda,
            gamma: self.gamma,
            steps: self.steps,
            step_size: self.step_size,
            init: if self.uniform_init { Init::Uniform } else { Init::FromTemplate },
            backtracking: !self.no_backtracking,
        }
    }
}

#[derive(Args)]
struct BenchCmd {
    /// JSON config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    /// Effort levels: points per sample or slices per sample.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    /// Samples per cell; crossed with --levels.
    #[arg(long, value_delimiter = ',')]
    samples: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    phantoms: Option<Vec<usize>>,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Fill wall_ms with measured time (makes output vary between runs).
    #[arg(long)]
    timing: bool,
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Also write aggregated per-cell records as JSON.
    #[arg(long)]
    records: Option<PathBuf>,
}

impl BenchCmd {
    fn config(&self) -> Result<BenchConfig> {
        let mut cfg: BenchConfig = match &self.config {
            Some(p) => serde_json::from_str(&read_text(p)?).with_context(|| format!("parsing {}", p.display()))?,
            None => BenchConfig::default(),
        };
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if self.levels.is_some() || self.samples.is_some() {
            let levels = self.levels.clone().unwrap_or_else(|| cfg.cells.iter().map(|c| c.level).collect());
            let samples = self.samples.clone().unwrap_or_else(|| vec![1]);
            let mut cells: Vec<Cell> =
                levels.iter().flat_map(|&level| samples.iter().map(move |&s| Cell { level, samples: s })).collect();
            cells.dedup();
            cfg.cells = cells;
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(p) = &self.phantoms {
            cfg.phantom_ids = p.clone();
        }
        if let Some(g) = self.grid_size {
            cfg.grid_size = g;
        }
        if let Some(p) = self.p {
            cfg.p = p;
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.record_timing |= self.timing;
        Ok(cfg)
    }
}

fn arr3<T: Copy>(v: &[T]) -> Result<[T; 3]> {
    match v {
        [a, b, c] => Ok([*a, *b, *c]),
        _ => bail!("expected 3 comma-separated values, got {}", v.len()),
    }
}

fn read_text(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn read_rvol(p: &Path) -> Result<rvol::AnyGrid> {
    rvol::read_file(p).with_context(|| format!("reading {}", p.display()))
}

fn read_mask(p: &Path) -> Result<BinaryGrid> {
    Ok(read_rvol(p)?.into_binary().with_context(|| format!("{} is not a binary mask", p.display()))?)
}

fn read_f32(p: &Path) -> Result<VoxelGrid<f32>> {
    Ok(read_rvol(p)?.into_f32())
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_points(p: &Path) -> Result<Vec<Point3>> {
    let text = read_text(p)?;
    // full annotation files and bare `{"points": ...}` objects are both accepted
    if let Ok(a) = AnnotationSet::from_json(&text) {
        return Ok(a.points().to_vec());
    }
    #[derive(serde::Deserialize)]
    struct Bare {
        points: Vec<[f64; 3]>,
    }
    let bare: Bare = serde_json::from_str(&text).with_context(|| format!("parsing points from {}", p.display()))?;
    Ok(bare.points.into_iter().map(Point3::from).collect())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Icosphere { subdivisions, radius, center, out } => {
            let m = icosphere(subdivisions, radius, Point3::from(arr3(&center)?))?;
            obj::write_file(&out, &m)?;
        }
        Cmd::Validate { mesh } => {
            let r = validate(&obj::read_file(&mesh)?);
            println!("{}", serde_json::to_string_pretty(&r)?);
            if !r.valid {
                return Ok(ExitCode::from(1));
            }
        }
        Cmd::Deform(d) => {
            let points = read_points(&d.points)?;
            let template = d.template.as_deref().map(obj::read_file).transpose()?;
            let params = d.params.params();
            params.validate()?;
            let (mesh, report, raster) = match &d.volume {
                Some(v) => {
                    let spec = *read_rvol(v)?.spec();
                    let fit = fit_points(&points, &spec, template.as_ref(), d.subdivisions, &params)?;
                    (fit.mesh, fit.report, Some(fit.raster))
                }
                None => {
                    let t = match template {
                        Some(t) => t,
                        None => {
                            weakseg::pipeline::check_non_coplanar(&points)?;
                            initial_template(&points, d.subdivisions)?
                        }
                    };
                    let (m, r) = weakseg::asm::deform(&t, &points, &params)?;
                    (m, r, None)
                }
            };
            obj::write_file(&d.out, &mesh)?;
            let report_json = serde_json::to_string_pretty(&report)?;
            match &d.report {
                Some(p) => fs::write(p, report_json)?,
                None => println!("{report_json}"),
            }
            match (d.raster, raster) {
                (Some(p), Some(r)) => rvol::write_file(p, &r)?,
                (Some(_), None) => bail!("--raster needs --volume for the target grid"),
                _ => {}
            }
        }
        Cmd::Rasterize { mesh, grid, out } => {
            let r = rasterize(&obj::read_file(&mesh)?, &grid.spec()?)?;
            rvol::write_file(&out, &r)?;
        }
        Cmd::Edt { input, out } => {
            rvol::write_file(&out, &edt(&read_mask(&input)?)?)?;
        }
        Cmd::Weightmap { template, weights, out } => {
            rvol::write_file(&out, &weight_map(&read_mask(&template)?, weights.params())?.grid)?;
        }
        Cmd::Loss { y, yhat, x, xhat, template, lambda, weights } => {
            let y = read_mask(&y)?;
            let yhat = read_f32(&yhat)?;
            let x = read_f32(&x)?;
            let xhat = match xhat {
                Some(p) => read_f32(&p)?.to_f64(),
                None => varseg::reconstruct(&yhat, &x)?,
            };
            let t = match template {
                Some(p) => read_mask(&p)?,
                None => y.clone(),
            };
            let w = weight_map(&t, weights.params())?;
            let l = weakseg::loss::total_loss(&y, &yhat, &x, &xhat, &w, lambda)?;
            println!("{}", serde_json::to_string_pretty(&l)?);
        }
        Cmd::Phantom { seed, family, size, sigma, out_dir } => {
            let mut spec = match family {
                Some(id) => bench::phantom_family(id, size)?,
                None if size == 64 => PhantomSpec::default(),
                None => bench::phantom_family(1, size)?,
            };
            if let Some(s) = sigma {
                spec = spec.with_sigma(s);
            }
            let ph = make_phantom(&spec, seed)?;
            fs::create_dir_all(&out_dir)?;
            rvol::write_file(out_dir.join("image.rvol"), &ph.image)?;
            rvol::write_file(out_dir.join("truth.rvol"), &ph.truth)?;
            rvol::write_file(out_dir.join("template.rvol"), &ph.template)?;
            println!("template IoU vs truth: {:.4}", iou(&ph.template, &ph.truth)?);
        }
        Cmd::Segment { image, template, opt, weights, out, mask, trace } => {
            let x = read_f32(&image)?;
            let t = read_mask(&template)?;
            let w = weight_map(&t, weights.params())?;
            let cfg = opt.config();
            let seg = varseg::optimize(&x, &t, &w, &cfg)?;
            rvol::write_file(&out, &seg.prob)?;
            if let Some(p) = mask {
                rvol::write_file(p, &seg.mask(cfg.gamma)?)?;
            }
            let summary = serde_json::json!({
                "steps_taken": seg.steps_taken,
                "final_loss": seg.final_loss,
                "trace": seg.trace,
            });
            match trace {
                Some(p) => fs::write(p, serde_json::to_string_pretty(&summary)?)?,
                None => println!("{}", serde_json::to_string_pretty(&seg.final_loss)?),
            }
        }
        Cmd::Sweep { image, truth, template, lambdas, gammas, opt, weights, out } => {
            let x = read_f32(&image)?;
            let truth = read_mask(&truth)?;
            let t = read_mask(&template)?;
            let w = weight_map(&t, weights.params())?;
            let rows = varseg::sweep(&x, &truth, &t, &w, &lambdas, &gammas, &opt.config())?;
            let mut csv = String::from("lambda,gamma,iou_vs_truth,iou_vs_template,final_loss\n");
            for r in rows {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.lambda, r.gamma, r.iou_vs_truth, r.iou_vs_template, r.final_loss
                ));
            }
            write_out(out.as_deref(), &csv)?;
        }
        Cmd::Simulate { gt, n, p, k, seed, slices, subdivisions, out, mesh } => {
            let gt = read_mask(&gt)?;
            let text = match slices {
                Some(num) => serde_json::to_string_pretty(&baseline_slices(&gt, num, seed)?)?,
                None => {
                    let surface = surface_points(&gt, true)?;
                    let template = initial_template(&surface, subdivisions)?;
                    let s = sample_skilled(&surface, &template, &gt, &SimParams { n, p, k, seed }, &DeformParams::default())?;
                    eprintln!("chosen IoU {:.4}", s.iou);
                    if let Some(m) = mesh {
                        obj::write_file(m, &s.mesh)?;
                    }
                    s.annotation.to_json()
                }
            };
            write_out(out.as_deref(), &(text + "\n"))?;
        }
        Cmd::Bench(b) => {
            let cfg = b.config()?;
            let run = bench::run_grid(&cfg)?;
            let failures = run.rows.iter().filter(|r| r.error.is_some()).count();
            if failures > 0 {
                eprintln!("{failures} of {} runs failed (NaN rows)", run.rows.len());
            }
            write_out(b.out.as_deref(), &bench::to_csv(&run.rows))?;
            if let Some(p) = b.records {
                fs::write(p, serde_json::to_string_pretty(&run.records)?)?;
            }
        }
        Cmd::Iso { csv, target, out } => {
            let rows = bench::from_csv(&read_text(&csv)?)?;
            let curves = bench::iso_curves(&bench::aggregate(&rows), target)?;
            write_out(out.as_deref(), &(serde_json::to_string_pretty(&curves)? + "\n"))?;
        }
        Cmd::Serve { bind, workers, snapshot_dir, static_dir, subdivisions } => {
            let mut rt = tokio::runtime::Builder::new_multi_thread();
            if workers > 0 {
                rt.worker_threads(workers);
            }
            let config = ServiceConfig { snapshot_dir, static_dir, subdivisions, deform: DeformParams::default() };
            rt.enable_all().build()?.block_on(weakseg::service::serve(bind, config))?;
        }
        Cmd::Bundle { cmd } => return bundle_cmd(cmd),
    }
    Ok(ExitCode::SUCCESS)
}

fn bundle_cmd(cmd: BundleCmd) -> Result<ExitCode> {
    let open = |p: &Path| -> Result<weakseg::service::Bundle> {
        let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        Ok(read_bundle(&bytes)?)
    };
    match cmd {
        BundleCmd::Inspect { bundle } => {
            let b = open(&bundle)?;
            let info = serde_json::json!({
                "manifest": b.manifest,
                "points": b.annotation.len(),
                "report": b.report,
            });
            println!("{}", serde_json::to_string_pretty(&info)?);
        }
        BundleCmd::Points { bundle, out } => {
            fs::write(out, open(&bundle)?.annotation.to_json())?;
        }
        BundleCmd::Rasterize { bundle, out, check } => {
            let b = open(&bundle)?;
            let Some(mesh) = &b.mesh else { bail!("bundle has no deformed mesh") };
            let r = rasterize(mesh, &b.manifest.grid)?;
            if let Some(p) = out {
                rvol::write_file(p, &r)?;
            }
            if check {
                let Some(stored) = &b.raster else { bail!("bundle has no raster to compare against") };
                if stored != &r {
                    eprintln!("raster mismatch");
                    return Ok(ExitCode::from(1));
                }
                eprintln!("raster matches");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            // invalid input gets 2 so scripts can tell it from runtime failures
            let usage = matches!(
                e.downcast_ref::<Error>(),
                Some(Error::Parameter(_) | Error::Shape(_) | Error::Format(_) | Error::Empty(_))
            );
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
