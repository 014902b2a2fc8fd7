//! Condition records for adapter training and guidance arithmetic.
//!
//! A [`ConditionRecord`] is the raw payload handed to the adapter's
//! projection layer: the 4080-bin histogram plus the scalar features
//! (augmentation type, palette-to-image distance, image entropy).

use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{Dims, HsvHistogram};
use crate::palette::{palette_to_histogram_with, Palette};
use crate::transport::{palette_image_distance, GroundDistance, DEFAULT_QC_EXPONENT};

pub const PCND_MAGIC: &[u8; 4] = b"PCND";
pub const PCND_VERSION: u16 = 1;

/// Which color condition a training sample carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum AugmentationType {
    Unconditioned = 0,
    Histogram = 1,
    Palette = 2,
}

impl AugmentationType {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Self::Unconditioned),
            1 => Ok(Self::Histogram),
            2 => Ok(Self::Palette),
            other => Err(Error::format("PCND", format!("unknown augmentation type {other}"))),
        }
    }
}

impl std::str::FromStr for AugmentationType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "unconditioned" => Ok(Self::Unconditioned),
            "histogram" | "hist" => Ok(Self::Histogram),
            "palette" => Ok(Self::Palette),
            _ => Err(Error::InvalidParameter(format!("unknown augmentation {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionRecord {
    pub histogram: HsvHistogram,
    pub aug_type: AugmentationType,
    pub distance: f64,
    pub entropy: f64,
    pub text_present: bool,
}

impl ConditionRecord {
    pub fn unconditioned(text_present: bool) -> Self {
        Self {
            histogram: HsvHistogram::zeros(Dims::STANDARD),
            aug_type: AugmentationType::Unconditioned,
            distance: 0.0,
            entropy: 0.0,
            text_present,
        }
    }

    /// `PCND` bytes: magic, version `u16`, aug type `u8`, text flag `u8`,
    /// distance `f32`, entropy `f32`, then the `PHST` histogram block. All
    /// little-endian.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(16 + 12 + 4 * self.histogram.len());
        out.extend_from_slice(PCND_MAGIC);
        out.extend_from_slice(&PCND_VERSION.to_le_bytes());
        out.push(self.aug_type.code());
        out.push(u8::from(self.text_present));
        out.extend_from_slice(&(self.distance as f32).to_le_bytes());
        out.extend_from_slice(&(self.entropy as f32).to_le_bytes());
        self.histogram.write_phst(&mut out)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut header = [0u8; 16];
        r.read_exact(&mut header)
            .map_err(|_| Error::format("PCND", "truncated header"))?;
        if &header[..4] != PCND_MAGIC {
            return Err(Error::format("PCND", "bad magic"));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != PCND_VERSION {
            return Err(Error::format("PCND", format!("unsupported version {version}")));
        }
        let aug_type = AugmentationType::from_code(header[6])?;
        let text_present = match header[7] {
            0 => false,
            1 => true,
            other => return Err(Error::format("PCND", format!("bad text flag {other}"))),
        };
        let f32_at = |i: usize| f32::from_le_bytes([header[i], header[i + 1], header[i + 2], header[i + 3]]);
        let distance = f64::from(f32_at(8));
        let entropy = f64::from(f32_at(12));
        let histogram = HsvHistogram::read_phst(&mut r)?;
        if !r.is_empty() {
            return Err(Error::format("PCND", format!("{} trailing bytes", r.len())));
        }
        Ok(Self {
            histogram,
            aug_type,
            distance,
            entropy,
            text_present,
        })
    }
}

pub fn serialize_condition(rec: &ConditionRecord) -> Result<Vec<u8>> {
    rec.to_bytes()
}

pub fn deserialize_condition(bytes: &[u8]) -> Result<ConditionRecord> {
    ConditionRecord::from_bytes(bytes)
}

/// Inputs to [`build_condition`] beyond the image and palette.
#[derive(Debug, Clone)]
pub struct ConditionParams<'a> {
    pub ground: &'a GroundDistance,
    pub qc_exponent: f64,
    pub text_present: bool,
    pub drop_entropy: bool,
}

impl<'a> ConditionParams<'a> {
    pub fn new(ground: &'a GroundDistance) -> Self {
        Self {
            ground,
            qc_exponent: DEFAULT_QC_EXPONENT,
            text_present: true,
            drop_entropy: false,
        }
    }
}

/// Assembles the condition record for one training image.
///
/// The entropy feature is always that of the full image histogram. The
/// distance feature is nonzero only for palette conditions.
pub fn build_condition(
    image_hist: &HsvHistogram,
    palette: Option<&Palette>,
    aug: AugmentationType,
    params: &ConditionParams<'_>,
) -> Result<ConditionRecord> {
    if aug == AugmentationType::Unconditioned {
        return Ok(ConditionRecord::unconditioned(params.text_present));
    }
    let entropy = if params.drop_entropy {
        0.0
    } else {
        image_hist.entropy()?.bits
    };
    let (histogram, distance) = match aug {
        AugmentationType::Histogram => {
            image_hist.require_normalized()?;
            (image_hist.clone(), 0.0)
        }
        AugmentationType::Palette => {
            let p = palette.ok_or(Error::MissingPalette)?;
            let d = palette_image_distance(p, image_hist, params.ground, params.qc_exponent)?;
            (palette_to_histogram_with(image_hist.dims(), p), d)
        }
        AugmentationType::Unconditioned => unreachable!(),
    };
    Ok(ConditionRecord {
        histogram,
        aug_type: aug,
        distance,
        entropy,
        text_present: params.text_present,
    })
}

/// Per-sample conditioning dropout.
///
/// `color_probs` picks the augmentation type. `text_keep_probs` is the
/// probability of keeping the text embedding given that type, in the same
/// (histogram, palette, none) order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DropoutTable {
    pub color_probs: [f64; 3],
    pub text_keep_probs: [f64; 3],
    pub entropy_drop_prob: f64,
}

impl Default for DropoutTable {
    fn default() -> Self {
        Self {
            color_probs: [0.45, 0.45, 0.10],
            text_keep_probs: [0.80, 0.80, 0.05],
            entropy_drop_prob: 0.10,
        }
    }
}

impl DropoutTable {
    pub fn validate(&self) -> Result<()> {
        let probs = self
            .color_probs
            .iter()
            .chain(&self.text_keep_probs)
            .chain(std::iter::once(&self.entropy_drop_prob));
        for p in probs {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::InvalidParameter(format!("probability {p} outside [0,1]")));
            }
        }
        let total: f64 = self.color_probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("color probabilities sum to {total}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AugmentationDraw {
    pub aug: AugmentationType,
    pub text_present: bool,
    pub entropy_dropped: bool,
}

/// Seeded stream of augmentation draws.
#[derive(Debug, Clone)]
pub struct ConditionSampler {
    table: DropoutTable,
    rng: ChaCha8Rng,
}

impl ConditionSampler {
    pub fn new(table: DropoutTable, seed: u64) -> Result<Self> {
        table.validate()?;
        Ok(Self {
            table,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn draw(&mut self) -> AugmentationDraw {
        let [p_hist, p_palette, _] = self.table.color_probs;
        let u: f64 = self.rng.gen();
        let (aug, column) = if u < p_hist {
            (AugmentationType::Histogram, 0)
        } else if u < p_hist + p_palette {
            (AugmentationType::Palette, 1)
        } else {
            (AugmentationType::Unconditioned, 2)
        };
        let text_present = self.rng.gen::<f64>() < self.table.text_keep_probs[column];
        let entropy_dropped = self.rng.gen::<f64>() < self.table.entropy_drop_prob;
        AugmentationDraw {
            aug,
            text_present,
            entropy_dropped,
        }
    }
}

impl Iterator for ConditionSampler {
    type Item = AugmentationDraw;

    fn next(&mut self) -> Option<AugmentationDraw> {
        Some(self.draw())
    }
}

/// First draw of the stream seeded with `seed`.
pub fn sample_augmentation(table: &DropoutTable, seed: u64) -> Result<AugmentationDraw> {
    Ok(ConditionSampler::new(*table, seed)?.draw())
}

/// Guidance with a negative condition: `w·ε⁺ + (1 − w)·ε⁻` elementwise.
///
/// Conventional classifier-free guidance `(1 + s)·ε⁺ − s·ε⁻` is the same
/// combination with `w = 1 + s`.
pub fn cfg_combine(eps_pos: &[f64], eps_neg: &[f64], w: f64) -> Result<Vec<f64>> {
    if eps_pos.len() != eps_neg.len() {
        return Err(Error::DimensionMismatch(format!(
            "positive prediction has {} elements, negative {}",
            eps_pos.len(),
            eps_neg.len()
        )));
    }
    Ok(eps_pos
        .iter()
        .zip(eps_neg)
        .map(|(&a, &b)| if a == b { a } else { w * a + (1.0 - w) * b })
        .collect())
}

/// Guidance scale and the entropy values fed to the positive and null branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceWeights {
    pub w: f64,
    pub entropy_pos: f64,
    pub entropy_neg: f64,
}

impl GuidanceWeights {
    pub fn relative_entropy(&self) -> f64 {
        relative_entropy(self.entropy_pos, self.entropy_neg)
    }
}

/// `E⁺ − E⁻`. Negative values push generation below the unconditioned entropy.
pub fn relative_entropy(entropy_pos: f64, entropy_neg: f64) -> f64 {
    debug_assert!(entropy_pos >= 0.0 && entropy_neg >= 0.0);
    entropy_pos - entropy_neg
}
