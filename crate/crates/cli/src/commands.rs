//! Argument definitions and the command implementations.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use cssa::cdl::{learn, CdlOptions, TrainingBatch};
use cssa::fusion::{fuse_multifocus, fuse_multifocus_rgb, fuse_nir_vl, lowpass_decompose, luma};
use cssa::metrics::report;
use cssa::solver::{sparsity_ratio, support_overlap, EncodeDiagnostics, Encoder, Encoding, Regularizer, Structure};
use cssa::{DictionarySet, Plane, RgbImage};

use crate::config::RunConfig;
use crate::dictfile::{load_dict, save_dict};
use crate::error::{CliError, Result};
use crate::image_io::{load_image, load_luma, save_image, Image};
use crate::report::{write_encode, write_metrics, write_objective, write_table1, Table1Row};

#[derive(Debug, Parser)]
#[command(name = "cssa", version, about = "Convolutional simultaneous sparse approximation and image fusion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a (multimodal) convolutional dictionary and write a dictionary file.
    Learn(LearnArgs),
    /// Jointly encode images and report coefficient statistics.
    Encode(EncodeArgs),
    /// Fuse a visible colour image with a near-infrared image.
    FuseNirvl(NirVlArgs),
    /// Fuse registered images with different focus.
    FuseMf(MultifocusArgs),
    /// Score a fused image against its inputs.
    Metrics(MetricsArgs),
    /// Sweep structures and weights over an image pair.
    ReportTable1(Table1Args),
}

/// Solver and regularization flags shared by all commands.
#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    /// Sparsity structure: l1, l21, linf1 or l1l21.
    #[arg(long, value_parser = parse_structure)]
    pub structure: Option<Structure>,
    /// Weight for l1, l21 and linf1.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Element weight of l1l21.
    #[arg(long)]
    pub gamma1: Option<f64>,
    /// Row weight of l1l21.
    #[arg(long)]
    pub gamma2: Option<f64>,
    /// ADMM penalty.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Primal and dual residual tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Regularization of the lowpass split.
    #[arg(long)]
    pub lowpass_reg: Option<f64>,
    /// Absolute threshold below which coefficients count as zero.
    #[arg(long)]
    pub zero_tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_structure(s: &str) -> std::result::Result<Structure, String> {
    s.parse().map_err(|e: cssa::CssaError| e.to_string())
}

impl SolverArgs {
    pub fn apply(&self, base: RunConfig) -> Result<RunConfig> {
        let mut cfg = base;
        if let Some(s) = self.structure {
            cfg.structure = s;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.gamma1 {
            cfg.gamma1 = v;
        }
        if let Some(v) = self.gamma2 {
            cfg.gamma2 = v;
        }
        if let Some(v) = self.rho {
            cfg.solver.rho = v;
        }
        if let Some(v) = self.max_iter {
            cfg.solver.max_iter = v;
        }
        if let Some(v) = self.tol {
            cfg.solver.tol_primal = v;
            cfg.solver.tol_dual = v;
        }
        if let Some(v) = self.lowpass_reg {
            cfg.lowpass_reg = v;
        }
        if let Some(v) = self.zero_tol {
            if !(v >= 0.0) {
                return Err(CliError::Config(format!("zero tolerance must be non-negative, got {v}")));
            }
            cfg.zero_tol = Some(v);
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.regularizer().validate()?;
        cfg.solver.validate()?;
        if !(cfg.lowpass_reg > 0.0) {
            return Err(CliError::Config(format!("lowpass regularization must be positive, got {}", cfg.lowpass_reg)));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct LearnArgs {
    /// Training sets; each is a comma-separated list with one image per modality.
    #[arg(required = true)]
    pub sets: Vec<String>,
    /// Output dictionary file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub filters: usize,
    /// Filter side length.
    #[arg(long, default_value_t = 8)]
    pub side: usize,
    /// Number of coding / dictionary-update alternations.
    #[arg(long, default_value_t = 20)]
    pub iters: usize,
    /// Train on the images themselves instead of their highpass bands.
    #[arg(long)]
    pub raw: bool,
    /// Optional CSV of the objective after every alternation.
    #[arg(long)]
    pub objective: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EncodeArgs {
    /// Images to encode jointly (one per modality, or any number with a single dictionary).
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
    #[arg(long)]
    pub dict: PathBuf,
    /// CSV of coefficient statistics; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Reconstruction output, one path per input image.
    #[arg(long)]
    pub recon: Vec<PathBuf>,
    /// Encode the images themselves instead of their highpass bands.
    #[arg(long)]
    pub raw: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct NirVlArgs {
    /// Visible (colour) image.
    #[arg(long)]
    pub vl: PathBuf,
    /// Near-infrared image; colour files are reduced to luma.
    #[arg(long)]
    pub nir: PathBuf,
    /// Two-modality dictionary file (visible first).
    #[arg(long)]
    pub dict: PathBuf,
    /// Fused image output.
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics CSV; standard output when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct MultifocusArgs {
    /// Registered inputs; colour output when all of them are colour.
    #[arg(required = true, num_args = 2..)]
    pub images: Vec<PathBuf>,
    /// Dictionary file; its first modality is used.
    #[arg(long)]
    pub dict: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics CSV; standard output when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct MetricsArgs {
    /// Fused image.
    #[arg(long)]
    pub fused: PathBuf,
    /// Source images.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Metrics CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct Table1Args {
    /// The two images of the pair.
    #[arg(num_args = 2, required = true)]
    pub pair: Vec<PathBuf>,
    /// Dictionary file with one shared or two modality dictionaries.
    #[arg(long)]
    pub dict: PathBuf,
    /// Comma-separated weights; `lambda` for l1, l21, linf1 and `gamma2` for l1l21.
    #[arg(long, value_delimiter = ',', default_values_t = [0.001, 0.01, 0.05, 0.1, 0.5])]
    pub lambda_grid: Vec<f64>,
    /// Comma-separated structures to sweep.
    #[arg(long, value_delimiter = ',', value_parser = parse_structure, default_values_t = Structure::ALL)]
    pub structures: Vec<Structure>,
    /// Comma-separated `gamma1 / gamma2` ratios swept for l1l21.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1])]
    pub gamma_ratios: Vec<f64>,
    /// CSV output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Encode the images themselves instead of their highpass bands.
    #[arg(long)]
    pub raw: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn check_shapes(paths: &[PathBuf], planes: &[Plane]) -> Result<()> {
    let dim = planes[0].dim();
    for (p, plane) in paths.iter().zip(planes) {
        if plane.dim() != dim {
            return Err(CliError::Shape(format!(
                "{} is {}x{}, expected {}x{}",
                p.display(),
                plane.dim().0,
                plane.dim().1,
                dim.0,
                dim.1
            )));
        }
    }
    Ok(())
}

/// Diagnostics of an encoding, honouring an explicit zero tolerance.
pub fn diagnostics(enc: &Encoding, cfg: &RunConfig) -> EncodeDiagnostics {
    let mut d = enc.diagnostics;
    if let Some(tol) = cfg.zero_tol {
        d.sparsity_ratio = sparsity_ratio(&enc.coefficients, tol);
        if let Ok(pct) = support_overlap(&enc.coefficients, tol) {
            d.common_support_pct = pct;
        }
    }
    d
}

fn row(reg: &Regularizer, lambda: f64, d: &EncodeDiagnostics) -> Table1Row {
    Table1Row {
        structure: reg.structure,
        lambda,
        gamma1: reg.gamma1,
        gamma2: reg.gamma2,
        sparsity: d.sparsity_ratio,
        common_support_pct: d.common_support_pct,
        approx_error: d.approx_error,
        iterations: d.iterations,
    }
}

fn bands(planes: &[Plane], raw: bool, reg: f64) -> Result<(Vec<Plane>, Vec<Plane>)> {
    if raw {
        let lows = planes.iter().map(|p| Plane::zeros(p.dim())).collect();
        return Ok((lows, planes.to_vec()));
    }
    let mut lows = Vec::with_capacity(planes.len());
    let mut highs = Vec::with_capacity(planes.len());
    for p in planes {
        let b = lowpass_decompose(p, reg)?;
        lows.push(b.low);
        highs.push(b.high);
    }
    Ok((lows, highs))
}

pub fn cmd_learn(args: &LearnArgs) -> Result<()> {
    let cfg = args.solver.apply(RunConfig::default())?;
    let mut samples = Vec::with_capacity(args.sets.len());
    for set in &args.sets {
        let paths: Vec<PathBuf> = set.split(',').map(PathBuf::from).collect();
        let planes = paths.iter().map(load_luma).collect::<Result<Vec<_>>>()?;
        check_shapes(&paths, &planes)?;
        samples.push(planes);
    }
    let batch = TrainingBatch::new(samples)?;
    let opts = CdlOptions {
        filters: args.filters,
        side: args.side,
        outer_iters: args.iters,
        regularizer: cfg.regularizer(),
        sparse: cfg.solver,
        seed: cfg.seed,
        highpass: if args.raw { None } else { Some(cfg.lowpass_reg) },
        ..Default::default()
    };
    let learned = learn(&batch, opts)?;
    save_dict(&learned.dictionaries, &args.out)?;
    if let Some(path) = &args.objective {
        write_objective(&learned.objective, output(Some(path))?)?;
    }
    Ok(())
}

pub fn cmd_encode(args: &EncodeArgs) -> Result<()> {
    let cfg = args.solver.apply(RunConfig::default())?;
    let dicts = load_dict(&args.dict)?;
    let planes = args.images.iter().map(load_luma).collect::<Result<Vec<_>>>()?;
    check_shapes(&args.images, &planes)?;
    if !args.recon.is_empty() && args.recon.len() != planes.len() {
        return Err(CliError::Config(format!(
            "{} reconstruction paths for {} images",
            args.recon.len(),
            planes.len()
        )));
    }
    let (lows, highs) = bands(&planes, args.raw, cfg.lowpass_reg)?;
    let reg = cfg.regularizer();
    let encoder = Encoder::new(&highs, dicts.dicts(), reg, cfg.solver)?;
    let enc = encoder.solve();
    let d = diagnostics(&enc, &cfg);
    write_encode(&row(&reg, cfg.lambda, &d), &d, output(args.out.as_deref())?)?;
    if !args.recon.is_empty() {
        for ((high, low), path) in encoder.reconstruct(&enc.coefficients).iter().zip(&lows).zip(&args.recon) {
            save_image(&Image::Gray(high + low), path)?;
        }
    }
    Ok(())
}

pub fn cmd_fuse_nirvl(args: &NirVlArgs) -> Result<()> {
    let cfg = args.solver.apply(RunConfig::default())?;
    let dicts = load_dict(&args.dict)?;
    let vl = match load_image(&args.vl)? {
        Image::Rgb(c) => c,
        Image::Gray(p) => RgbImage::new(p.clone(), p.clone(), p)?,
    };
    let nir = load_luma(&args.nir)?;
    if nir.dim() != vl.dim() {
        return Err(CliError::Shape(format!(
            "{} is {:?}, visible image is {:?}",
            args.nir.display(),
            nir.dim(),
            vl.dim()
        )));
    }
    let fused = fuse_nir_vl(&vl, &nir, &dicts, &cfg.nir_vl())?;
    save_image(&Image::Rgb(fused.image.clone()), &args.out)?;
    let metrics = report(&luma(&fused.image), &[luma(&vl), nir])?;
    write_metrics(&[(args.out.display().to_string(), metrics)], output(args.report.as_deref())?)
}

pub fn cmd_fuse_mf(args: &MultifocusArgs) -> Result<()> {
    let cfg = args.solver.apply(RunConfig::multifocus())?;
    let dicts = load_dict(&args.dict)?;
    let dict = &dicts.dicts()[0];
    let images = args.images.iter().map(load_image).collect::<Result<Vec<_>>>()?;
    let lumas: Vec<Plane> = images.iter().map(Image::luma).collect();
    check_shapes(&args.images, &lumas)?;
    let colour: Option<Vec<RgbImage>> = images
        .iter()
        .map(|i| match i {
            Image::Rgb(c) => Some(c.clone()),
            Image::Gray(_) => None,
        })
        .collect();
    let mf = cfg.multifocus_config();
    let fused = match colour {
        Some(rgb) => Image::Rgb(fuse_multifocus_rgb(&rgb, dict, &mf)?.0),
        None => Image::Gray(fuse_multifocus(&lumas, dict, &mf)?.luma.mapv(|v| v.clamp(0.0, 1.0))),
    };
    save_image(&fused, &args.out)?;
    let metrics = report(&fused.luma(), &lumas)?;
    write_metrics(&[(args.out.display().to_string(), metrics)], output(args.report.as_deref())?)
}

pub fn cmd_metrics(args: &MetricsArgs) -> Result<()> {
    let fused = load_luma(&args.fused)?;
    let inputs = args.inputs.iter().map(load_luma).collect::<Result<Vec<_>>>()?;
    let metrics = report(&fused, &inputs)?;
    write_metrics(&[(args.fused.display().to_string(), metrics)], output(args.out.as_deref())?)
}

/// The rows of the structure x weight sweep over one pair of planes.
pub fn table1_rows(
    pair: &[Plane],
    dicts: &DictionarySet,
    cfg: &RunConfig,
    structures: &[Structure],
    lambdas: &[f64],
    ratios: &[f64],
) -> Result<Vec<Table1Row>> {
    let mut rows = Vec::new();
    for &structure in structures {
        for &lambda in lambdas {
            let regs: Vec<Regularizer> = match structure {
                Structure::L1L21 => ratios.iter().map(|r| Regularizer::l1_l21(r * lambda, lambda)).collect(),
                s => vec![Regularizer::weighted(s, lambda)],
            };
            for reg in regs {
                let enc = Encoder::new(pair, dicts.dicts(), reg, cfg.solver)?.solve();
                rows.push(row(&reg, lambda, &diagnostics(&enc, cfg)));
            }
        }
    }
    Ok(rows)
}

pub fn cmd_report_table1(args: &Table1Args) -> Result<()> {
    let cfg = args.solver.apply(RunConfig::default())?;
    let dicts = load_dict(&args.dict)?;
    let planes = args.pair.iter().map(load_luma).collect::<Result<Vec<_>>>()?;
    check_shapes(&args.pair, &planes)?;
    let (_, highs) = bands(&planes, args.raw, cfg.lowpass_reg)?;
    if let Some(&bad) = args.lambda_grid.iter().chain(&args.gamma_ratios).find(|v| !(**v >= 0.0)) {
        return Err(CliError::Config(format!("weights must be non-negative, got {bad}")));
    }
    let rows = table1_rows(&highs, &dicts, &cfg, &args.structures, &args.lambda_grid, &args.gamma_ratios)?;
    write_table1(&rows, output(args.out.as_deref())?)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Learn(a) => cmd_learn(a),
        Command::Encode(a) => cmd_encode(a),
        Command::FuseNirvl(a) => cmd_fuse_nirvl(a),
        Command::FuseMf(a) => cmd_fuse_mf(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::ReportTable1(a) => cmd_report_table1(a),
    }
}
