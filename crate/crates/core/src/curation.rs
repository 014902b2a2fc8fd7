//! Corpus color-bias statistics on a coarse `8 × 8 × 8` RGB grid, and
//! selection of images that contain rarely seen colors.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::RgbImage;
use crate::numeric::neumaier_sum;

pub const RGB_LEVELS: usize = 8;
pub const RGB_BINS: usize = RGB_LEVELS * RGB_LEVELS * RGB_LEVELS;
pub const DEFAULT_RARE_K: usize = 100;
pub const DEFAULT_TAU: f64 = 0.05;

/// Fixed-point scale for per-image shares. Integer accumulation makes the
/// corpus totals independent of image order and parallel chunking.
const SHARE_SCALE: f64 = 18_446_744_073_709_551_616.0; // 2^64

/// Flat index of the RGB bin holding `rgb`: `floor(channel · 8)` per channel,
/// clamped to 7, flattened as `(r · 8 + g) · 8 + b`.
pub fn rgb_bin(rgb: [u8; 3]) -> usize {
    let level = |v: u8| (usize::from(v) * RGB_LEVELS / 255).min(RGB_LEVELS - 1);
    (level(rgb[0]) * RGB_LEVELS + level(rgb[1])) * RGB_LEVELS + level(rgb[2])
}

/// Representative 8-bit color inside RGB bin `bin`.
pub fn rgb_bin_color(bin: usize) -> [u8; 3] {
    let level = |k: usize| (k * 32 + 16) as u8;
    [
        level(bin / (RGB_LEVELS * RGB_LEVELS)),
        level((bin / RGB_LEVELS) % RGB_LEVELS),
        level(bin % RGB_LEVELS),
    ]
}

fn pixel_counts(image: &RgbImage) -> [u64; RGB_BINS] {
    let mut counts = [0u64; RGB_BINS];
    for p in image.data().chunks_exact(3) {
        counts[rgb_bin([p[0], p[1], p[2]])] += 1;
    }
    counts
}

/// Mergeable partial corpus statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusAccumulator {
    shares: Vec<u128>,
    images: u64,
}

impl Default for CorpusAccumulator {
    fn default() -> Self {
        Self {
            shares: vec![0; RGB_BINS],
            images: 0,
        }
    }
}

impl CorpusAccumulator {
    /// Adds one image with equal total weight regardless of its resolution.
    /// Empty images are ignored.
    pub fn add_image(&mut self, image: &RgbImage) {
        if image.is_empty() {
            return;
        }
        let counts = pixel_counts(image);
        let n = image.len() as u128;
        for (acc, c) in self.shares.iter_mut().zip(counts) {
            if c > 0 {
                *acc += (u128::from(c) << 64) / n;
            }
        }
        self.images += 1;
    }

    pub fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.shares.iter_mut().zip(other.shares) {
            *a += b;
        }
        self.images += other.images;
        self
    }

    pub fn image_count(&self) -> u64 {
        self.images
    }

    pub fn finish(self) -> Result<CorpusStats> {
        if self.images == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(CorpusStats {
            bin_counts: self.shares.iter().map(|&s| s as f64 / SHARE_SCALE).collect(),
            image_count: self.images,
        })
    }
}

/// Aggregate color population of a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    /// Sum over images of each image's normalized bin mass.
    pub bin_counts: Vec<f64>,
    pub image_count: u64,
}

impl CorpusStats {
    pub fn per_bin_share(&self) -> Vec<f64> {
        let total = neumaier_sum(self.bin_counts.iter().copied());
        self.bin_counts.iter().map(|c| c / total).collect()
    }

    pub fn to_json(&self) -> CorpusStatsJson {
        CorpusStatsJson {
            image_count: self.image_count,
            bins: self.per_bin_share(),
            skipped: Vec::new(),
        }
    }

    pub fn from_json(json: &CorpusStatsJson) -> Result<Self> {
        if json.bins.len() != RGB_BINS {
            return Err(Error::format(
                "stats",
                format!("{} bins, expected {RGB_BINS}", json.bins.len()),
            ));
        }
        if json.image_count == 0 {
            return Err(Error::format("stats", "image_count must be positive"));
        }
        if json.bins.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::format("stats", "bin shares must be non-negative"));
        }
        let n = json.image_count as f64;
        Ok(Self {
            bin_counts: json.bins.iter().map(|s| s * n).collect(),
            image_count: json.image_count,
        })
    }
}

/// `{"image_count":N,"bins":[512 shares]}`, plus skipped inputs if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStatsJson {
    pub image_count: u64,
    pub bins: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedImage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedImage {
    pub path: PathBuf,
    pub reason: String,
}

/// Corpus statistics plus the inputs that could not be decoded.
#[derive(Debug, Clone)]
pub struct ScanReport {
    pub stats: CorpusStats,
    pub skipped: Vec<SkippedImage>,
}

impl ScanReport {
    pub fn to_json(&self) -> CorpusStatsJson {
        CorpusStatsJson {
            skipped: self.skipped.clone(),
            ..self.stats.to_json()
        }
    }
}

/// Statistics over already-decoded images.
pub fn scan_corpus<'a, I>(images: I) -> Result<CorpusStats>
where
    I: IntoParallelIterator<Item = &'a RgbImage>,
{
    images
        .into_par_iter()
        .fold(CorpusAccumulator::default, |mut acc, img| {
            acc.add_image(img);
            acc
        })
        .reduce(CorpusAccumulator::default, CorpusAccumulator::merge)
        .finish()
}

/// Decodes and scans image files. Undecodable files are skipped and listed
/// in the report, sorted by path.
pub fn scan_paths(paths: &[PathBuf]) -> Result<ScanReport> {
    let (acc, mut skipped) = paths
        .par_iter()
        .fold(
            || (CorpusAccumulator::default(), Vec::new()),
            |(mut acc, mut skipped), path| {
                match RgbImage::open(path) {
                    Ok(img) if !img.is_empty() => acc.add_image(&img),
                    Ok(_) => skipped.push(SkippedImage {
                        path: path.clone(),
                        reason: "empty image".into(),
                    }),
                    Err(e) => skipped.push(SkippedImage {
                        path: path.clone(),
                        reason: e.to_string(),
                    }),
                }
                (acc, skipped)
            },
        )
        .reduce(
            || (CorpusAccumulator::default(), Vec::new()),
            |(a, mut sa), (b, sb)| {
                sa.extend(sb);
                (a.merge(b), sa)
            },
        );
    skipped.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(ScanReport {
        stats: acc.finish()?,
        skipped,
    })
}

/// Bins ranked by share, most common first.
#[derive(Debug, Clone, PartialEq)]
pub struct BinRanking {
    /// `(bin, share)` descending by share, ties by ascending bin index.
    pub entries: Vec<(usize, f64)>,
    /// `cumulative[i]` is the summed share of the `i + 1` most common bins.
    pub cumulative: Vec<f64>,
}

impl BinRanking {
    pub fn top_k_share(&self, k: usize) -> f64 {
        match k.min(self.entries.len()) {
            0 => 0.0,
            k => self.cumulative[k - 1],
        }
    }

    pub fn bottom_k_share(&self, k: usize) -> f64 {
        let k = k.min(self.entries.len());
        neumaier_sum(self.entries[self.entries.len() - k..].iter().map(|(_, s)| *s))
    }

    /// The `k` rarest bins, rarest first.
    pub fn rarest(&self, k: usize) -> RareBinSet {
        let k = k.min(self.entries.len());
        let tail: Vec<(usize, f64)> = self.entries[self.entries.len() - k..].iter().rev().copied().collect();
        RareBinSet {
            bins: tail.iter().map(|(b, _)| *b).collect(),
            share_covered: neumaier_sum(tail.iter().map(|(_, s)| *s)),
        }
    }
}

pub fn rank_bins(stats: &CorpusStats) -> BinRanking {
    let mut entries: Vec<(usize, f64)> = stats.per_bin_share().into_iter().enumerate().collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut cumulative = Vec::with_capacity(entries.len());
    let mut running = Vec::with_capacity(entries.len());
    for (_, s) in &entries {
        running.push(*s);
        cumulative.push(neumaier_sum(running.iter().copied()).min(1.0));
    }
    BinRanking { entries, cumulative }
}

/// Rare RGB bins, ordered from rarest.
#[derive(Debug, Clone, PartialEq)]
pub struct RareBinSet {
    pub bins: Vec<usize>,
    pub share_covered: f64,
}

impl RareBinSet {
    fn mask(&self) -> [bool; RGB_BINS] {
        let mut mask = [false; RGB_BINS];
        for &b in &self.bins {
            mask[b] = true;
        }
        mask
    }

    /// Fraction of the image's pixels that fall in a rare bin.
    pub fn rare_fraction(&self, image: &RgbImage) -> f64 {
        if image.is_empty() {
            return 0.0;
        }
        let mask = self.mask();
        let rare = image
            .data()
            .chunks_exact(3)
            .filter(|p| mask[rgb_bin([p[0], p[1], p[2]])])
            .count();
        rare as f64 / image.len() as f64
    }
}

/// Images whose rare-pixel fraction is at least `tau`, in input order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurationSelection {
    pub selected: Vec<SelectedImage>,
    pub considered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectedImage {
    pub id: String,
    pub fraction: f64,
}

pub fn select_rare_images<'a, I>(candidates: I, rare: &RareBinSet, tau: f64) -> Result<CurationSelection>
where
    I: IntoParallelIterator<Item = (&'a str, &'a RgbImage)>,
    I::Iter: IndexedParallelIterator,
{
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("tau must be in [0,1], got {tau}")));
    }
    let scored: Vec<(&str, f64)> = candidates
        .into_par_iter()
        .map(|(id, img)| (id, rare.rare_fraction(img)))
        .collect();
    Ok(CurationSelection {
        considered: scored.len(),
        selected: scored
            .into_iter()
            .filter(|(_, f)| *f >= tau)
            .map(|(id, fraction)| SelectedImage {
                id: id.to_string(),
                fraction,
            })
            .collect(),
    })
}

/// [`select_rare_images`] over image files; undecodable files are skipped.
pub fn select_rare_paths(
    paths: &[PathBuf],
    rare: &RareBinSet,
    tau: f64,
) -> Result<(CurationSelection, Vec<SkippedImage>)> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("tau must be in [0,1], got {tau}")));
    }
    let scored: Vec<(&Path, Result<f64>)> = paths
        .par_iter()
        .map(|p| (p.as_path(), RgbImage::open(p).map(|img| rare.rare_fraction(&img))))
        .collect();
    let mut selected = Vec::new();
    let mut skipped = Vec::new();
    let mut considered = 0;
    for (path, score) in scored {
        match score {
            Ok(fraction) => {
                considered += 1;
                if fraction >= tau {
                    selected.push(SelectedImage {
                        id: path.display().to_string(),
                        fraction,
                    });
                }
            }
            Err(e) => skipped.push(SkippedImage {
                path: path.to_path_buf(),
                reason: e.to_string(),
            }),
        }
    }
    Ok((CurationSelection { selected, considered }, skipped))
}
