//! Palette-adherence evaluation: caption filtering, per-image EMD against
//! the conditioning palette, 2D palette construction and block-ablation
//! aggregation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::colorspace::{rgb_to_lab, thresholded_distance, ColorRgb, DistanceParams};
use crate::error::{Error, Result};
use crate::histogram::histogram_of_rgb8;
use crate::imageio::RgbImage;
use crate::numeric::mean_std;
use crate::palette::{palette_to_histogram_with, Palette};
use crate::transport::{emd, min_cost_transport, GroundDistance, SolverOptions};

/// Bump when [`COLOR_WORDS`] changes.
pub const COLOR_WORDS_VERSION: u32 = 1;

pub const COLOR_WORDS: &[&str] = &[
    "red",
    "orange",
    "yellow",
    "green",
    "blue",
    "purple",
    "violet",
    "pink",
    "brown",
    "black",
    "white",
    "gray",
    "grey",
    "cyan",
    "magenta",
    "teal",
    "gold",
    "golden",
    "silver",
    "beige",
    "tan",
    "maroon",
    "navy",
    "turquoise",
    "crimson",
    "scarlet",
    "indigo",
    "lavender",
    "olive",
    "colorful",
];

pub const GRID: usize = 8;
pub const UPSAMPLED_SIZE: usize = 512;

fn color_word_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(&format!(r"(?i)\b(?:{})\b", COLOR_WORDS.join("|"))).expect("color word pattern"))
}

/// True if the caption contains a color word as a whole word.
pub fn mentions_color(caption: &str) -> bool {
    color_word_regex().is_match(caption)
}

/// Pairs each caption with whether it passes (mentions no color).
pub fn filter_color_captions<S: AsRef<str>>(captions: &[S]) -> Vec<(String, bool)> {
    captions
        .iter()
        .map(|c| (c.as_ref().to_string(), !mentions_color(c.as_ref())))
        .collect()
}

/// EMD between an image's HSV histogram and a palette's sparse histogram.
pub fn image_palette_emd(image: &RgbImage, palette: &Palette, ground: &GroundDistance) -> Result<f64> {
    let hist = histogram_of_rgb8(image.data(), image.width(), image.height())?;
    let target = palette_to_histogram_with(hist.dims(), palette);
    Ok(emd(&hist, &target, ground)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub image: PathBuf,
    pub palette: Palette,
    pub caption: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseResult {
    pub image: PathBuf,
    pub caption: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalParams {
    pub threshold: f64,
    pub sharpen_exponent: f64,
    pub dims: [u16; 3],
    pub color_words_version: u32,
    pub toolkit_version: &'static str,
}

impl EvalParams {
    fn of(ground: &GroundDistance) -> Self {
        let p = ground.params().copied().unwrap_or_default();
        Self {
            threshold: p.threshold,
            sharpen_exponent: p.sharpen_exponent,
            dims: crate::histogram::Dims::STANDARD.as_array(),
            color_words_version: COLOR_WORDS_VERSION,
            toolkit_version: crate::VERSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub cases: Vec<CaseResult>,
    /// Cases that produced a distance; mean and std are over these only.
    pub case_count: usize,
    pub failed_count: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub std_kind: &'static str,
    pub params: EvalParams,
}

/// Scores each case against its generated image. A missing or undecodable
/// image (`Err(reason)`) marks the case failed.
pub fn evaluate(
    cases: &[EvalCase],
    generated: &[std::result::Result<RgbImage, String>],
    ground: &GroundDistance,
) -> Result<EvalReport> {
    if cases.len() != generated.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} cases but {} generated images",
            cases.len(),
            generated.len()
        )));
    }
    let results: Vec<CaseResult> = cases
        .par_iter()
        .zip(generated.par_iter())
        .map(|(case, img)| {
            let outcome = img
                .as_ref()
                .map_err(|e| e.clone())
                .and_then(|img| image_palette_emd(img, &case.palette, ground).map_err(|e| e.to_string()));
            CaseResult {
                image: case.image.clone(),
                caption: case.caption.clone(),
                seed: case.seed,
                emd: outcome.as_ref().ok().copied(),
                error: outcome.err(),
            }
        })
        .collect();
    Ok(summarize(results, ground))
}

fn summarize(cases: Vec<CaseResult>, ground: &GroundDistance) -> EvalReport {
    let values: Vec<f64> = cases.iter().filter_map(|c| c.emd).collect();
    let stats = mean_std(&values);
    EvalReport {
        case_count: values.len(),
        failed_count: cases.len() - values.len(),
        mean: stats.map(|s| s.0),
        std: stats.map(|s| s.1),
        std_kind: "population",
        params: EvalParams::of(ground),
        cases,
    }
}

/// Where a case's generated image lives: relative paths resolve against
/// `images_dir`.
pub fn resolve_image(case: &EvalCase, images_dir: Option<&Path>) -> PathBuf {
    match images_dir {
        Some(dir) if case.image.is_relative() => dir.join(&case.image),
        _ => case.image.clone(),
    }
}

/// [`evaluate`] with images loaded from disk.
pub fn evaluate_paths(cases: &[EvalCase], images_dir: Option<&Path>, ground: &GroundDistance) -> Result<EvalReport> {
    let generated: Vec<_> = cases
        .par_iter()
        .map(|c| RgbImage::open(resolve_image(c, images_dir)).map_err(|e| e.to_string()))
        .collect();
    evaluate(cases, &generated, ground)
}

/// One line of a `cases.jsonl` manifest. The palette is a path to a palette
/// JSON file, relative to the manifest's directory.
#[derive(Debug, Clone, Deserialize)]
struct ManifestLine {
    image: PathBuf,
    palette: PathBuf,
    #[serde(default)]
    caption: String,
    #[serde(default)]
    seed: u64,
}

/// Reads a JSON-lines eval manifest. Blank lines are ignored.
pub fn load_eval_manifest(path: impl AsRef<Path>) -> Result<Vec<EvalCase>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let text = std::fs::read_to_string(path)?;
    let mut cases = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestLine =
            serde_json::from_str(line).map_err(|e| Error::format("manifest", format!("line {}: {e}", n + 1)))?;
        let palette = Palette::load(base.join(&entry.palette))?;
        cases.push(EvalCase {
            image: entry.image,
            palette,
            caption: entry.caption,
            seed: entry.seed,
        });
    }
    Ok(cases)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Downsample {
    #[default]
    BoxAverage,
    Nearest,
}

impl std::str::FromStr for Downsample {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" | "box-average" => Ok(Self::BoxAverage),
            "nearest" => Ok(Self::Nearest),
            other => Err(Error::InvalidParameter(format!("unknown downsample method {other:?}"))),
        }
    }
}

/// Reduces an image to an `8 × 8` grid of colors, row-major.
pub fn downsample_8x8(image: &RgbImage, method: Downsample) -> Result<Vec<ColorRgb>> {
    if image.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (w, h) = (image.width(), image.height());
    let span = |c: usize, n: usize| {
        let lo = c * n / GRID;
        (lo, ((c + 1) * n / GRID).max(lo + 1))
    };
    let mut grid = Vec::with_capacity(GRID * GRID);
    for cy in 0..GRID {
        for cx in 0..GRID {
            let cell = match method {
                Downsample::Nearest => {
                    ColorRgb::from_u8(image.get((2 * cx + 1) * w / (2 * GRID), (2 * cy + 1) * h / (2 * GRID)))
                }
                Downsample::BoxAverage => {
                    let (x0, x1) = span(cx, w);
                    let (y0, y1) = span(cy, h);
                    let mut sum = [0u64; 3];
                    for y in y0..y1 {
                        for x in x0..x1 {
                            for (s, v) in sum.iter_mut().zip(image.get(x, y)) {
                                *s += u64::from(v);
                            }
                        }
                    }
                    let n = ((x1 - x0) * (y1 - y0)) as f64 * 255.0;
                    ColorRgb::from_channels(sum.map(|s| s as f64 / n))
                }
            };
            grid.push(cell);
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Palette2D {
    /// Row-major `8 × 8` cells, each a target palette color.
    pub grid: Vec<ColorRgb>,
    /// Palette index assigned to each cell.
    pub assignment: Vec<usize>,
    /// OT plan as `(cell, palette color, mass)`.
    pub plan: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

impl Palette2D {
    /// Nearest-neighbor expansion of the grid to `512 × 512`.
    pub fn upsampled(&self) -> RgbImage {
        let colors: Vec<[u8; 3]> = self.grid.iter().map(|c| c.to_u8()).collect();
        let scale = UPSAMPLED_SIZE / GRID;
        RgbImage::from_fn(UPSAMPLED_SIZE, UPSAMPLED_SIZE, |x, y| {
            colors[(y / scale) * GRID + x / scale]
        })
    }
}

/// Aligns the downsampled image to `target` by optimal transport and
/// recolors each cell with the palette color receiving most of its mass.
pub fn make_palette_2d(
    image: &RgbImage,
    target: &Palette,
    params: &DistanceParams,
    method: Downsample,
) -> Result<Palette2D> {
    params.validate()?;
    if target.is_empty() {
        return Err(Error::InvalidPalette("empty palette".into()));
    }
    let cells = downsample_8x8(image, method)?;
    let cell_lab: Vec<_> = cells.iter().map(|c| rgb_to_lab(*c)).collect();
    let target_lab: Vec<_> = target.colors().iter().map(|c| rgb_to_lab(*c)).collect();
    let cost: Vec<f64> = cell_lab
        .iter()
        .flat_map(|a| target_lab.iter().map(move |b| thresholded_distance(*a, *b, params)))
        .collect();
    let supply = vec![1.0 / (GRID * GRID) as f64; GRID * GRID];
    let demand: Vec<f64> = (0..target.len()).map(|i| target.weight(i)).collect();
    let solution = min_cost_transport(&supply, &demand, &cost, SolverOptions::default());

    let mut best = vec![(0usize, f64::NEG_INFINITY); cells.len()];
    for &(cell, color, mass) in &solution.flows {
        let b = &mut best[cell];
        if mass > b.1 || (mass == b.1 && color < b.0) {
            *b = (color, mass);
        }
    }
    let assignment: Vec<usize> = best.iter().map(|b| b.0).collect();
    Ok(Palette2D {
        grid: assignment.iter().map(|&i| target.colors()[i]).collect(),
        assignment,
        plan: solution.flows,
        cost: solution.cost,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub block: String,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    /// Ascending by mean EMD, ties by block name.
    pub rows: Vec<AblationRow>,
    pub best: Option<String>,
    pub std_kind: &'static str,
    pub warnings: Vec<String>,
}

/// Per-block mean/std EMD of generated images against their palettes.
/// Blocks without any scorable run are excluded with a warning.
pub fn ablation_report(
    runs: &BTreeMap<String, Vec<(RgbImage, Palette)>>,
    ground: &GroundDistance,
) -> Result<AblationReport> {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (block, items) in runs {
        if items.is_empty() {
            warnings.push(format!("block {block:?} has no runs; excluded"));
            continue;
        }
        let values = items
            .par_iter()
            .map(|(img, p)| image_palette_emd(img, p, ground))
            .collect::<Result<Vec<f64>>>()?;
        let (mean, std) = mean_std(&values).expect("nonempty");
        rows.push(AblationRow {
            block: block.clone(),
            mean,
            std,
            count: values.len(),
        });
    }
    rows.sort_by(|a, b| a.mean.total_cmp(&b.mean).then_with(|| a.block.cmp(&b.block)));
    Ok(AblationReport {
        best: rows.first().map(|r| r.block.clone()),
        rows,
        std_kind: "population",
        warnings,
    })
}
