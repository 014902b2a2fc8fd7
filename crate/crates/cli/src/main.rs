mod config;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use palette_forge::conditioning::{build_condition, AugmentationType, ConditionParams, ConditionSampler};
use palette_forge::curation::{rank_bins, scan_paths, select_rare_paths, CorpusStats, CorpusStatsJson};
use palette_forge::eval::{
    ablation_report, evaluate_paths, filter_color_captions, load_eval_manifest, make_palette_2d, Downsample,
};
use palette_forge::histogram::{histogram_of_rgb8, SparseHistogramJson};
use palette_forge::imageio::RgbImage;
use palette_forge::palette::{extract_kmeans, extract_median_cut, palette_to_histogram};
use palette_forge::transport::{emd, emd_oracle, quadratic_chi, GroundDistance, SimilarityMatrix};
use palette_forge::{DistanceParams, HsvHistogram, Palette};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use config::Config;

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nformats: PHST v1, PCND v1, palette JSON, sparse histogram JSON"
);

#[derive(Parser)]
#[command(name = "palette-forge", version, long_version = LONG_VERSION)]
#[command(about = "Color-conditioning histograms, palette distances and evaluation")]
struct Cli {
    /// Worker threads (default: available cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Human-readable output instead of compact JSON
    #[arg(long, global = true)]
    pretty: bool,
    /// TOML config file
    #[arg(long, global = true, env = "PALETTE_FORGE_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// HSV histogram of an image (.phst output is binary, otherwise sparse JSON)
    Hist {
        image: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Extract a palette from an image
    Extract {
        image: PathBuf,
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(short)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Distance between two histograms, palettes or images
    Dist {
        #[arg(value_enum)]
        metric: Metric,
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        distance: DistanceFlags,
        /// Recompute EMD with the LP oracle (small supports only)
        #[arg(long)]
        oracle: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Shannon entropy (bits) of a histogram, palette or image
    Entropy {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Encode condition records (PCND)
    Encode(EncodeArgs),
    /// Corpus color statistics on the 8x8x8 RGB grid
    ScanCorpus {
        /// Image directory or a file listing one image path per line
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Select images containing rare corpus colors
    SelectRare {
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        rare_k: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
        /// Image directory or a file listing one image path per line
        input: PathBuf,
        /// .txt writes one selected path per line, anything else JSON
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// EMD of generated images against their conditioning palettes
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory that relative image paths resolve against (default: the manifest's)
        #[arg(long)]
        images: Option<PathBuf>,
        /// Drop cases whose caption mentions a color word
        #[arg(long)]
        filter_captions: bool,
        #[command(flatten)]
        distance: DistanceFlags,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Build a 2D palette image aligned to the image layout
    #[command(name = "align-2d")]
    Align2d {
        image: PathBuf,
        palette: PathBuf,
        #[arg(long, value_enum, default_value = "box")]
        downsample: DownsampleArg,
        #[command(flatten)]
        distance: DistanceFlags,
        /// PNG output for the 512x512 palette image
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Per-block mean/std EMD from a runs manifest
    AblateReport {
        /// JSON lines: {"block": ..., "image": ..., "palette": ...}
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        distance: DistanceFlags,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// EMD through the LP oracle
    Oracle {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        distance: DistanceFlags,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DistanceFlags {
    /// Clip threshold T in ΔE00 units
    #[arg(long)]
    threshold: Option<f64>,
    /// Sharpening exponent γ
    #[arg(long)]
    gamma: Option<f64>,
    /// Quadratic-Chi normalization exponent m
    #[arg(long)]
    m: Option<f64>,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    image: Option<PathBuf>,
    #[arg(long, conflicts_with = "manifest")]
    palette: Option<PathBuf>,
    /// Augmentation type; sampled from the dropout table when omitted
    #[arg(long)]
    aug: Option<AugmentationType>,
    #[arg(long)]
    seed: Option<u64>,
    /// Mark the text condition as dropped
    #[arg(long)]
    no_text: bool,
    /// Zero the entropy feature
    #[arg(long)]
    drop_entropy: bool,
    /// Batch mode: one `image [palette]` per line
    #[arg(long, requires = "out_dir")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    distance: DistanceFlags,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    MedianCut,
    Kmeans,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Emd,
    Qc,
}

#[derive(Clone, Copy, ValueEnum)]
enum DownsampleArg {
    Box,
    Nearest,
}

/// Errors in how the tool was invoked rather than in the data.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

struct Ctx {
    config: Config,
    pretty: bool,
}

#[derive(Serialize)]
struct ParamsEcho {
    threshold: f64,
    gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<f64>,
}

impl Ctx {
    fn distance_params(&self, flags: &DistanceFlags) -> Result<DistanceParams> {
        let d = &self.config.distance;
        Ok(DistanceParams::new(
            flags.threshold.unwrap_or(d.threshold),
            flags.gamma.unwrap_or(d.gamma),
        )?)
    }

    fn ground(&self, flags: &DistanceFlags) -> Result<GroundDistance> {
        Ok(GroundDistance::standard(self.distance_params(flags)?)?)
    }

    fn qc_exponent(&self, flags: &DistanceFlags) -> f64 {
        flags.m.unwrap_or(self.config.distance.m)
    }

    /// Writes JSON to `output`, or to stdout (or `human` text with --pretty).
    fn emit(&self, value: &impl Serialize, output: Option<&Path>, human: Option<String>) -> Result<()> {
        match output {
            Some(path) => {
                let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
                serde_json::to_writer_pretty(&mut w, value)?;
                writeln!(w)?;
                w.flush()?;
            }
            None => {
                let text = match (self.pretty, human) {
                    (true, Some(h)) => h,
                    (true, None) => serde_json::to_string_pretty(value)?,
                    (false, _) => serde_json::to_string(value)?,
                };
                println!("{text}");
            }
        }
        Ok(())
    }
}

fn open_image(path: &Path) -> Result<RgbImage> {
    Ok(RgbImage::open(path)?)
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default()
}

/// Histogram from a `.phst` file, a sparse-histogram or palette JSON file,
/// or an image. Stored histograms are renormalized after loading.
fn load_histogram(path: &Path) -> Result<HsvHistogram> {
    let h = match extension(path).as_str() {
        "phst" => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            HsvHistogram::read_phst(BufReader::new(f))
                .with_context(|| format!("reading {}", path.display()))?
                .normalize()?
        }
        "json" => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let value: serde_json::Value =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            if value.get("bins").is_some() {
                let sparse: SparseHistogramJson = serde_json::from_value(value)?;
                HsvHistogram::from_sparse_json(&sparse)?.normalize()?
            } else if value.get("colors").is_some() {
                palette_to_histogram(&serde_json::from_value::<Palette>(value)?)
            } else {
                bail!("{}: neither a sparse histogram nor a palette", path.display());
            }
        }
        _ => {
            let img = open_image(path)?;
            histogram_of_rgb8(img.data(), img.width(), img.height())?
        }
    };
    Ok(h)
}

/// Image files under a directory (recursively, sorted) or listed in a file.
fn collect_images(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_dir() {
        let mut out = Vec::new();
        let mut stack = vec![input.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
                let path = entry?.path();
                if path.is_dir() {
                    stack.push(path);
                } else if matches!(extension(&path).as_str(), "png" | "jpg" | "jpeg") {
                    out.push(path);
                }
            }
        }
        out.sort();
        Ok(out)
    } else {
        let base = input.parent().unwrap_or(Path::new(""));
        let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
        Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| base.join(l))
            .collect())
    }
}

fn cmd_hist(ctx: &Ctx, image: &Path, output: Option<&Path>) -> Result<()> {
    let img = open_image(image)?;
    let h = histogram_of_rgb8(img.data(), img.width(), img.height())?;
    match output {
        Some(path) if extension(path) == "phst" => {
            let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
            h.write_phst(&mut w)?;
            w.flush()?;
            Ok(())
        }
        _ => ctx.emit(&h.to_sparse_json(), output, None),
    }
}

fn cmd_extract(
    ctx: &Ctx,
    image: &Path,
    method: Option<Method>,
    k: Option<usize>,
    seed: Option<u64>,
    output: Option<&Path>,
) -> Result<()> {
    let method = match method {
        Some(m) => m,
        None => {
            Method::from_str(&ctx.config.extract.method, true).map_err(|e| anyhow!("config extract.method: {e}"))?
        }
    };
    let k = k.unwrap_or(ctx.config.extract.k);
    let pixels = open_image(image)?.pixels();
    let palette = match method {
        Method::MedianCut => extract_median_cut(&pixels, k)?,
        Method::Kmeans => extract_kmeans(&pixels, k, seed.unwrap_or(ctx.config.seeds.extract))?,
    };
    let human = palette
        .colors()
        .iter()
        .map(|c| c.to_hex())
        .collect::<Vec<_>>()
        .join(" ");
    ctx.emit(&palette, output, Some(human))
}

fn cmd_dist(
    ctx: &Ctx,
    metric: Metric,
    a: &Path,
    b: &Path,
    flags: &DistanceFlags,
    oracle: bool,
    output: Option<&Path>,
) -> Result<()> {
    let (p, q) = (load_histogram(a)?, load_histogram(b)?);
    let g = ctx.ground(flags)?;
    let params = g.params().copied().expect("standard ground has params");
    let (distance, name, m) = match (metric, oracle) {
        (Metric::Emd, false) => (emd(&p, &q, &g)?.0, "emd", None),
        (Metric::Emd, true) => (emd_oracle(&p, &q, &g)?, "emd-lp", None),
        (Metric::Qc, false) => {
            let m = ctx.qc_exponent(flags);
            (
                quadratic_chi(&p, &q, &SimilarityMatrix::from_ground(&g), m)?,
                "quadratic-chi",
                Some(m),
            )
        }
        (Metric::Qc, true) => return Err(usage("--oracle applies to emd only")),
    };
    let echo = ParamsEcho {
        threshold: params.threshold,
        gamma: params.sharpen_exponent,
        m,
    };
    ctx.emit(
        &json!({"distance": distance, "metric": name, "params": echo}),
        output,
        Some(format!("{name} = {distance:.6}")),
    )
}

fn cmd_entropy(ctx: &Ctx, input: &Path, output: Option<&Path>) -> Result<()> {
    let bits = load_histogram(input)?.entropy()?.bits;
    ctx.emit(
        &json!({"entropy_bits": bits}),
        output,
        Some(format!("entropy = {bits:.6} bits")),
    )
}

#[derive(Serialize)]
struct EncodeSummary {
    image: PathBuf,
    output: PathBuf,
    aug: AugmentationType,
    text_present: bool,
    distance: f64,
    entropy: f64,
}

struct EncodeJob {
    image: PathBuf,
    palette: Option<PathBuf>,
    aug: AugmentationType,
    text_present: bool,
    drop_entropy: bool,
    output: PathBuf,
}

fn encode_one(ctx: &Ctx, g: &GroundDistance, m: f64, job: &EncodeJob) -> Result<EncodeSummary> {
    let img = open_image(&job.image)?;
    let hist = histogram_of_rgb8(img.data(), img.width(), img.height())?;
    let palette = match (&job.palette, job.aug) {
        (Some(p), _) => Some(Palette::load(p).with_context(|| format!("loading palette {}", p.display()))?),
        (None, AugmentationType::Palette) => Some(extract_kmeans(
            &img.pixels(),
            ctx.config.extract.k,
            ctx.config.seeds.extract,
        )?),
        (None, _) => None,
    };
    let params = ConditionParams {
        ground: g,
        qc_exponent: m,
        text_present: job.text_present,
        drop_entropy: job.drop_entropy,
    };
    let record = build_condition(&hist, palette.as_ref(), job.aug, &params)?;
    std::fs::write(&job.output, record.to_bytes()?).with_context(|| format!("writing {}", job.output.display()))?;
    Ok(EncodeSummary {
        image: job.image.clone(),
        output: job.output.clone(),
        aug: record.aug_type,
        text_present: record.text_present,
        distance: record.distance,
        entropy: record.entropy,
    })
}

fn cmd_encode(ctx: &Ctx, args: &EncodeArgs) -> Result<()> {
    let g = ctx.ground(&args.distance)?;
    let m = ctx.qc_exponent(&args.distance);
    let seed = args.seed.unwrap_or(ctx.config.seeds.sampler);
    let mut sampler = ConditionSampler::new(ctx.config.dropout, seed)?;

    let Some(manifest) = &args.manifest else {
        let image = args.image.clone().expect("clap requires --image without --manifest");
        let output = args
            .output
            .clone()
            .ok_or_else(|| usage("encode --image requires -o <out.pcnd>"))?;
        let (aug, text_present, drop_entropy) = match args.aug {
            Some(aug) => (aug, !args.no_text, args.drop_entropy),
            None => {
                let d = sampler.draw();
                (d.aug, d.text_present, d.entropy_dropped)
            }
        };
        let job = EncodeJob {
            image,
            palette: args.palette.clone(),
            aug,
            text_present,
            drop_entropy,
            output,
        };
        let summary = encode_one(ctx, &g, m, &job)?;
        return ctx.emit(&summary, None, None);
    };

    let out_dir = args.out_dir.as_ref().expect("clap requires --out-dir with --manifest");
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let base = manifest.parent().unwrap_or(Path::new(""));
    let text = std::fs::read_to_string(manifest).with_context(|| format!("reading {}", manifest.display()))?;
    // draws happen in manifest order so results do not depend on threading
    let jobs: Vec<EncodeJob> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .enumerate()
        .map(|(i, line)| {
            let mut fields = line.split_whitespace();
            let image = base.join(fields.next().expect("nonempty line"));
            let palette = fields.next().map(|p| base.join(p));
            let d = sampler.draw();
            let aug = args.aug.unwrap_or(d.aug);
            let stem = image
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("image")
                .to_string();
            EncodeJob {
                image,
                palette,
                aug,
                text_present: d.text_present && !args.no_text,
                drop_entropy: d.entropy_dropped || args.drop_entropy,
                output: out_dir.join(format!("{i:06}_{stem}.pcnd")),
            }
        })
        .collect();
    let results: Vec<_> = jobs.par_iter().map(|j| encode_one(ctx, &g, m, j)).collect();
    let mut encoded = Vec::new();
    let mut failed = Vec::new();
    for (job, r) in jobs.iter().zip(results) {
        match r {
            Ok(s) => encoded.push(s),
            Err(e) => failed.push(json!({"image": job.image, "error": format!("{e:#}")})),
        }
    }
    let n_failed = failed.len();
    ctx.emit(
        &json!({"encoded": encoded, "failed": failed}),
        args.output.as_deref(),
        None,
    )?;
    if n_failed > 0 {
        bail!("{n_failed} manifest entries failed");
    }
    Ok(())
}

fn cmd_scan(ctx: &Ctx, input: &Path, output: Option<&Path>) -> Result<()> {
    let paths = collect_images(input)?;
    if paths.is_empty() {
        bail!("no images found in {}", input.display());
    }
    let report = scan_paths(&paths)?;
    for s in &report.skipped {
        eprintln!("warning: skipped {}: {}", s.path.display(), s.reason);
    }
    let ranking = rank_bins(&report.stats);
    let human = {
        let mut t = format!(
            "{} images, {} skipped\nrank  bin  share     cumulative\n",
            report.stats.image_count,
            report.skipped.len()
        );
        for (r, ((bin, share), cum)) in ranking.entries.iter().zip(&ranking.cumulative).take(10).enumerate() {
            t += &format!("{:>4}  {bin:>3}  {share:.6}  {cum:.6}\n", r + 1);
        }
        t += &format!(
            "top-100 share {:.6}, bottom-100 share {:.6}",
            ranking.top_k_share(100),
            ranking.bottom_k_share(100)
        );
        t
    };
    ctx.emit(&report.to_json(), output, Some(human))
}

fn cmd_select_rare(
    ctx: &Ctx,
    stats: &Path,
    rare_k: Option<usize>,
    tau: Option<f64>,
    input: &Path,
    output: Option<&Path>,
) -> Result<()> {
    let text = std::fs::read_to_string(stats).with_context(|| format!("reading {}", stats.display()))?;
    let json: CorpusStatsJson = serde_json::from_str(&text).with_context(|| format!("parsing {}", stats.display()))?;
    let stats = CorpusStats::from_json(&json)?;
    let rare_k = rare_k.unwrap_or(ctx.config.curation.rare_k);
    let tau = tau.unwrap_or(ctx.config.curation.tau);
    let rare = rank_bins(&stats).rarest(rare_k);
    let paths = collect_images(input)?;
    let (selection, skipped) = select_rare_paths(&paths, &rare, tau)?;
    for s in &skipped {
        eprintln!("warning: skipped {}: {}", s.path.display(), s.reason);
    }
    if let Some(path) = output.filter(|p| extension(p) == "txt") {
        let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        for s in &selection.selected {
            writeln!(w, "{}", s.id)?;
        }
        w.flush()?;
        return Ok(());
    }
    let human = selection
        .selected
        .iter()
        .map(|s| format!("{:.4}  {}", s.fraction, s.id))
        .collect::<Vec<_>>()
        .join("\n");
    ctx.emit(
        &json!({
            "tau": tau,
            "rare_k": rare_k,
            "rare_bins": rare.bins,
            "share_covered": rare.share_covered,
            "considered": selection.considered,
            "selected": selection.selected,
            "skipped": skipped,
        }),
        output,
        Some(human),
    )
}

fn cmd_eval(
    ctx: &Ctx,
    manifest: &Path,
    images: Option<&Path>,
    filter: bool,
    flags: &DistanceFlags,
    output: Option<&Path>,
) -> Result<()> {
    let mut cases = load_eval_manifest(manifest).with_context(|| format!("loading {}", manifest.display()))?;
    let total = cases.len();
    if filter {
        let keep: Vec<bool> = filter_color_captions(&cases.iter().map(|c| c.caption.as_str()).collect::<Vec<_>>())
            .into_iter()
            .map(|(_, passes)| passes)
            .collect();
        let mut it = keep.iter();
        cases.retain(|_| *it.next().expect("one flag per case"));
    }
    let manifest_dir = manifest.parent().unwrap_or(Path::new(""));
    let report = evaluate_paths(&cases, Some(images.unwrap_or(manifest_dir)), &ctx.ground(flags)?)?;
    for c in report.cases.iter().filter(|c| c.error.is_some()) {
        eprintln!(
            "warning: case {} failed: {}",
            c.image.display(),
            c.error.as_deref().unwrap_or("")
        );
    }
    let human = match (report.mean, report.std) {
        (Some(mean), Some(std)) => format!(
            "EMD {mean:.3} ± {std:.3} (population std) over {} cases, {} failed, {} filtered",
            report.case_count,
            report.failed_count,
            total - cases.len()
        ),
        _ => format!("no case scored ({} failed)", report.failed_count),
    };
    let mut value = serde_json::to_value(&report)?;
    value["filtered_out"] = json!(total - cases.len());
    ctx.emit(&value, output, Some(human))
}

fn cmd_align(
    ctx: &Ctx,
    image: &Path,
    palette: &Path,
    method: DownsampleArg,
    flags: &DistanceFlags,
    output: Option<&Path>,
) -> Result<()> {
    let img = open_image(image)?;
    let palette = Palette::load(palette).with_context(|| format!("loading palette {}", palette.display()))?;
    let method = match method {
        DownsampleArg::Box => Downsample::BoxAverage,
        DownsampleArg::Nearest => Downsample::Nearest,
    };
    let out = make_palette_2d(&img, &palette, &ctx.distance_params(flags)?, method)?;
    if let Some(path) = output {
        out.upsampled().save(path)?;
    }
    let rows: Vec<String> = out
        .grid
        .chunks(8)
        .map(|r| r.iter().map(|c| c.to_hex()).collect::<Vec<_>>().join(" "))
        .collect();
    let value = json!({
        "grid": out.grid.chunks(8).map(|r| r.iter().map(|c| c.to_hex()).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "assignment": out.assignment,
        "cost": out.cost,
        "output": output,
    });
    ctx.emit(&value, None, Some(rows.join("\n")))
}

#[derive(Deserialize)]
struct RunLine {
    block: String,
    image: PathBuf,
    palette: PathBuf,
}

fn cmd_ablate(ctx: &Ctx, manifest: &Path, flags: &DistanceFlags, output: Option<&Path>) -> Result<()> {
    let base = manifest.parent().unwrap_or(Path::new(""));
    let text = std::fs::read_to_string(manifest).with_context(|| format!("reading {}", manifest.display()))?;
    let lines: Vec<RunLine> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", manifest.display(), n + 1)))
        .collect::<Result<_>>()?;
    let loaded: Vec<_> = lines
        .par_iter()
        .map(|r| -> Result<(RgbImage, Palette)> {
            Ok((open_image(&base.join(&r.image))?, Palette::load(base.join(&r.palette))?))
        })
        .collect();
    let mut runs: BTreeMap<String, Vec<(RgbImage, Palette)>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for (line, item) in lines.iter().zip(loaded) {
        let entry = runs.entry(line.block.clone()).or_default();
        match item {
            Ok(run) => entry.push(run),
            Err(e) => warnings.push(format!(
                "block {:?}: skipped {}: {e:#}",
                line.block,
                line.image.display()
            )),
        }
    }
    let mut report = ablation_report(&runs, &ctx.ground(flags)?)?;
    warnings.append(&mut report.warnings);
    report.warnings = warnings;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let width = report.rows.iter().map(|r| r.block.len()).max().unwrap_or(5).max(5);
    let mut human = format!("{:<width$}  mean    std     n\n", "block");
    for r in &report.rows {
        human += &format!("{:<width$}  {:.4}  {:.4}  {}\n", r.block, r.mean, r.std, r.count);
    }
    ctx.emit(&report, output, Some(human.trim_end().to_string()))
}

fn cmd_oracle(ctx: &Ctx, a: &Path, b: &Path, flags: &DistanceFlags, output: Option<&Path>) -> Result<()> {
    let (p, q) = (load_histogram(a)?, load_histogram(b)?);
    let g = ctx.ground(flags)?;
    let distance = emd_oracle(&p, &q, &g)?;
    let params = g.params().copied().expect("standard ground has params");
    ctx.emit(
        &json!({"distance": distance, "metric": "emd-lp", "params": {"threshold": params.threshold, "gamma": params.sharpen_exponent}}),
        output,
        Some(format!("emd-lp = {distance:.6}")),
    )
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let ctx = Ctx {
        config,
        pretty: cli.pretty,
    };
    match &cli.command {
        Command::Hist { image, output } => cmd_hist(&ctx, image, output.as_deref()),
        Command::Extract {
            image,
            method,
            k,
            seed,
            output,
        } => cmd_extract(&ctx, image, *method, *k, *seed, output.as_deref()),
        Command::Dist {
            metric,
            a,
            b,
            distance,
            oracle,
            output,
        } => cmd_dist(&ctx, *metric, a, b, distance, *oracle, output.as_deref()),
        Command::Entropy { input, output } => cmd_entropy(&ctx, input, output.as_deref()),
        Command::Encode(args) => cmd_encode(&ctx, args),
        Command::ScanCorpus { input, output } => cmd_scan(&ctx, input, output.as_deref()),
        Command::SelectRare {
            stats,
            rare_k,
            tau,
            input,
            output,
        } => cmd_select_rare(&ctx, stats, *rare_k, *tau, input, output.as_deref()),
        Command::Eval {
            manifest,
            images,
            filter_captions,
            distance,
            output,
        } => cmd_eval(
            &ctx,
            manifest,
            images.as_deref(),
            *filter_captions,
            distance,
            output.as_deref(),
        ),
        Command::Align2d {
            image,
            palette,
            downsample,
            distance,
            output,
        } => cmd_align(&ctx, image, palette, *downsample, distance, output.as_deref()),
        Command::AblateReport {
            manifest,
            distance,
            output,
        } => cmd_ablate(&ctx, manifest, distance, output.as_deref()),
        Command::Oracle { a, b, distance, output } => cmd_oracle(&ctx, a, b, distance, output.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
