//! Palettes: extraction from images and conversion to sparse histograms.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorspace::ColorRgb;
use crate::error::{Error, Result};
use crate::histogram::{Dims, HsvHistogram};
use crate::numeric::neumaier_sum;

/// Most colors median-cut extraction will produce.
pub const MAX_EXTRACTED_COLORS: usize = 8;
pub const DEFAULT_KMEANS_K: usize = 5;
const KMEANS_MAX_ITERATIONS: usize = 100;
const KMEANS_TOLERANCE: f64 = 1e-4;
const WEIGHT_TOLERANCE: f64 = 1e-9;

/// An ordered list of colors with optional weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PaletteJson", into = "PaletteJson")]
pub struct Palette {
    colors: Vec<ColorRgb>,
    weights: Option<Vec<f64>>,
}

/// `{"colors":["#RRGGBB",...],"weights":[...]}`
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PaletteJson {
    colors: Vec<ColorRgb>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

impl TryFrom<PaletteJson> for Palette {
    type Error = Error;

    fn try_from(json: PaletteJson) -> Result<Self> {
        match json.weights {
            Some(w) => Palette::with_weights(json.colors, w),
            None => Palette::new(json.colors),
        }
    }
}

impl From<Palette> for PaletteJson {
    fn from(p: Palette) -> Self {
        PaletteJson {
            colors: p.colors,
            weights: p.weights,
        }
    }
}

impl Palette {
    pub fn new(colors: Vec<ColorRgb>) -> Result<Self> {
        if colors.is_empty() {
            return Err(Error::InvalidPalette("a palette needs at least one color".into()));
        }
        if let Some(c) = colors.iter().find(|c| !c.is_valid()) {
            return Err(Error::InvalidPalette(format!("channel out of [0,1] in {c:?}")));
        }
        Ok(Self { colors, weights: None })
    }

    pub fn with_weights(colors: Vec<ColorRgb>, weights: Vec<f64>) -> Result<Self> {
        let mut p = Self::new(colors)?;
        if weights.len() != p.colors.len() {
            return Err(Error::InvalidPalette(format!(
                "{} weights for {} colors",
                weights.len(),
                p.colors.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidPalette("weights must be positive".into()));
        }
        let total = neumaier_sum(weights.iter().copied());
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::InvalidPalette(format!("weights sum to {total}, expected 1")));
        }
        p.weights = Some(weights);
        Ok(p)
    }

    pub fn colors(&self) -> &[ColorRgb] {
        &self.colors
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    /// Weight of color `i`, `1/k` when no weights are attached.
    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.colors.len() as f64,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn to_histogram(&self) -> HsvHistogram {
        palette_to_histogram_with(Dims::STANDARD, self)
    }
}

/// Sparse histogram of a palette on the standard grid: each color puts its
/// weight into its bin.
pub fn palette_to_histogram(p: &Palette) -> HsvHistogram {
    palette_to_histogram_with(Dims::STANDARD, p)
}

pub fn palette_to_histogram_with(dims: Dims, p: &Palette) -> HsvHistogram {
    let mut mass = vec![0.0; dims.len()];
    match p.weights() {
        None => {
            let mut counts: HashMap<usize, usize> = HashMap::new();
            for c in p.colors() {
                *counts.entry(dims.bin_of_rgb(*c)).or_default() += 1;
            }
            let k = p.len() as f64;
            for (bin, n) in counts {
                mass[bin] = n as f64 / k;
            }
        }
        Some(weights) => {
            let mut per_bin: HashMap<usize, Vec<f64>> = HashMap::new();
            for (c, w) in p.colors().iter().zip(weights) {
                per_bin.entry(dims.bin_of_rgb(*c)).or_default().push(*w);
            }
            for (bin, ws) in per_bin {
                mass[bin] = neumaier_sum(ws);
            }
        }
    }
    HsvHistogram::from_dense(dims, mass)
        .and_then(|h| h.normalize())
        .expect("palette weights are positive and sum to one")
}

/// Median-cut quantization in RGB.
///
/// The box with the widest channel range is split at the median of that
/// channel until `min(k, distinct colors)` boxes exist. Equal ranges prefer
/// R, then G, then B. The median value and everything equal to it goes to
/// the lower half. Colors are the box means, largest box first.
pub fn extract_median_cut(pixels: &[ColorRgb], k: usize) -> Result<Palette> {
    if pixels.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(1..=MAX_EXTRACTED_COLORS).contains(&k) {
        return Err(Error::InvalidParameter(format!(
            "median-cut palette size must be in 1..={MAX_EXTRACTED_COLORS}, got {k}"
        )));
    }

    let mut boxes: Vec<Vec<[f64; 3]>> = vec![pixels.iter().map(|c| c.channels()).collect()];
    while boxes.len() < k {
        let widest = boxes
            .iter()
            .enumerate()
            .map(|(i, b)| (i, widest_channel(b)))
            .filter(|(_, (_, range))| *range > 0.0)
            .fold(None, |best: Option<(usize, usize, f64)>, (i, (ch, range))| match best {
                Some((_, _, r)) if r >= range => best,
                _ => Some((i, ch, range)),
            });
        let Some((index, channel, _)) = widest else {
            break;
        };
        let upper = split_box(&mut boxes[index], channel);
        boxes.insert(index + 1, upper);
    }

    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(boxes[i].len()));
    let colors = order
        .into_iter()
        .map(|i| {
            let b = &boxes[i];
            let n = b.len() as f64;
            ColorRgb::from_channels(std::array::from_fn(|ch| neumaier_sum(b.iter().map(|p| p[ch])) / n))
        })
        .collect();
    Palette::new(colors)
}

/// (channel, range) of the widest channel; ties resolve to the lower channel.
fn widest_channel(pixels: &[[f64; 3]]) -> (usize, f64) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in pixels {
        for ch in 0..3 {
            lo[ch] = lo[ch].min(p[ch]);
            hi[ch] = hi[ch].max(p[ch]);
        }
    }
    (0..3).fold((0, f64::NEG_INFINITY), |(bc, br), ch| {
        let r = hi[ch] - lo[ch];
        if r > br {
            (ch, r)
        } else {
            (bc, br)
        }
    })
}

/// Splits `pixels` in place, returning the upper half.
fn split_box(pixels: &mut Vec<[f64; 3]>, channel: usize) -> Vec<[f64; 3]> {
    pixels.sort_by(|a, b| a[channel].total_cmp(&b[channel]));
    let median = pixels[(pixels.len() - 1) / 2][channel];
    let max = pixels[pixels.len() - 1][channel];
    let cut = if median < max {
        pixels.partition_point(|p| p[channel] <= median)
    } else {
        pixels.partition_point(|p| p[channel] < max)
    };
    pixels.split_off(cut)
}

/// Unique colors and their pixel counts, sorted by color.
fn weighted_unique(pixels: &[ColorRgb]) -> Vec<([f64; 3], f64)> {
    let mut counts: HashMap<[u64; 3], f64> = HashMap::new();
    for p in pixels {
        *counts.entry(p.channels().map(f64::to_bits)).or_default() += 1.0;
    }
    let mut unique: Vec<([f64; 3], f64)> = counts
        .into_iter()
        .map(|(bits, n)| (bits.map(f64::from_bits), n))
        .collect();
    unique.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    unique
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum()
}

fn nearest(p: &[f64; 3], centroids: &[[f64; 3]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Picks an index with probability proportional to `weights`.
fn sample_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total = neumaier_sum(weights.iter().copied());
    let mut target = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            if target < *w {
                return i;
            }
            target -= w;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// K-means in RGB with k-means++ seeding.
///
/// Runs at most 100 Lloyd iterations, stopping early once no centroid moves
/// by 1e-4 or more. `k` is capped at the number of distinct colors. Colors
/// are returned largest cluster first.
pub fn extract_kmeans(pixels: &[ColorRgb], k: usize, seed: u64) -> Result<Palette> {
    if pixels.is_empty() {
        return Err(Error::EmptyInput);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k-means needs k >= 1".into()));
    }
    let points = weighted_unique(pixels);
    let k = k.min(points.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding over the weighted unique colors
    let weights: Vec<f64> = points.iter().map(|(_, w)| *w).collect();
    let mut centroids = vec![points[sample_weighted(&mut rng, &weights)].0];
    let mut d2: Vec<f64> = points.iter().map(|(p, _)| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let scores: Vec<f64> = points.iter().zip(&d2).map(|((_, w), d)| w * d).collect();
        let next = points[sample_weighted(&mut rng, &scores)].0;
        for (d, (p, _)) in d2.iter_mut().zip(&points) {
            *d = d.min(sq_dist(p, &next));
        }
        centroids.push(next);
    }

    let assign = |centroids: &[[f64; 3]]| -> Vec<(usize, f64)> {
        points.par_iter().map(|(p, _)| nearest(p, centroids)).collect()
    };

    let mut assignment = assign(&centroids);
    for _ in 0..KMEANS_MAX_ITERATIONS {
        let mut sums = vec![[0.0f64; 3]; k];
        let mut mass = vec![0.0f64; k];
        for ((p, w), (j, _)) in points.iter().zip(&assignment) {
            for ch in 0..3 {
                sums[*j][ch] += w * p[ch];
            }
            mass[*j] += w;
        }
        let mut updated = centroids.clone();
        let mut taken = vec![false; points.len()];
        for j in 0..k {
            if mass[j] > 0.0 {
                updated[j] = sums[j].map(|s| s / mass[j]);
            } else {
                // reseed to the point farthest from its own centroid
                let far = assignment
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !taken[*i])
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |best, (i, (_, d))| {
                            if *d > best.1 {
                                (i, *d)
                            } else {
                                best
                            }
                        },
                    )
                    .0;
                taken[far] = true;
                updated[j] = points[far].0;
            }
        }
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        assignment = assign(&centroids);
        if shift < KMEANS_TOLERANCE {
            break;
        }
    }

    let mut mass = vec![0.0f64; k];
    for ((_, w), (j, _)) in points.iter().zip(&assignment) {
        mass[*j] += w;
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| mass[b].total_cmp(&mass[a]).then(a.cmp(&b)));
    Palette::new(
        order
            .into_iter()
            .map(|j| ColorRgb::from_channels(centroids[j].map(|c| c.clamp(0.0, 1.0))))
            .collect(),
    )
}
