//! The HSV conditioning histogram.
//!
//! Colors are binned on a `34 × 12 × 10` grid over hue, saturation and
//! value, flattened as `(h_bin · 12 + s_bin) · 10 + v_bin`. Other grid sizes
//! are supported in memory (mostly for small test instances) but the binary
//! format only carries the standard grid.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorspace::{hsv_to_rgb, rgb_to_hsv, rgb_to_lab, ColorHsv, ColorLab, ColorRgb};
use crate::error::{Error, Result};
use crate::numeric::neumaier_sum;

/// Allowed deviation of the total mass from 1 for a normalized histogram.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

pub const PHST_MAGIC: &[u8; 4] = b"PHST";
pub const PHST_VERSION: u16 = 1;

/// Pixel count above which image binning is split across threads.
const PARALLEL_PIXEL_THRESHOLD: usize = 1 << 16;

/// Bin counts along hue, saturation and value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub h: u16,
    pub s: u16,
    pub v: u16,
}

impl Dims {
    pub const STANDARD: Dims = Dims { h: 34, s: 12, v: 10 };

    pub fn new(h: u16, s: u16, v: u16) -> Result<Self> {
        if h == 0 || s == 0 || v == 0 {
            return Err(Error::InvalidParameter(format!(
                "histogram dims must be positive, got ({h}, {s}, {v})"
            )));
        }
        Ok(Self { h, s, v })
    }

    pub const fn len(&self) -> usize {
        self.h as usize * self.s as usize * self.v as usize
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_array(&self) -> [u16; 3] {
        [self.h, self.s, self.v]
    }

    pub fn flat(&self, h_bin: usize, s_bin: usize, v_bin: usize) -> usize {
        (h_bin * self.s as usize + s_bin) * self.v as usize + v_bin
    }

    pub fn index(&self, flat: usize) -> BinIndex {
        assert!(flat < self.len(), "bin {flat} out of range for {self:?}");
        let v = self.v as usize;
        let s = self.s as usize;
        BinIndex {
            h_bin: flat / (s * v),
            s_bin: (flat / v) % s,
            v_bin: flat % v,
            flat,
        }
    }

    /// Bin containing `c`. Boundary values (`s = 1`, `v = 1`, `h → 360`) fall
    /// into the last bin of their axis.
    pub fn bin_of(&self, c: ColorHsv) -> BinIndex {
        let axis = |x: f64, n: u16| ((x * f64::from(n)).floor().max(0.0) as usize).min(n as usize - 1);
        let h_bin = axis(c.h / 360.0, self.h);
        let s_bin = axis(c.s, self.s);
        let v_bin = axis(c.v, self.v);
        BinIndex {
            h_bin,
            s_bin,
            v_bin,
            flat: self.flat(h_bin, s_bin, v_bin),
        }
    }

    pub fn bin_of_rgb(&self, c: ColorRgb) -> usize {
        self.bin_of(rgb_to_hsv(c)).flat
    }

    pub fn center_hsv(&self, b: BinIndex) -> ColorHsv {
        ColorHsv::new(
            (b.h_bin as f64 + 0.5) * 360.0 / f64::from(self.h),
            (b.s_bin as f64 + 0.5) / f64::from(self.s),
            (b.v_bin as f64 + 0.5) / f64::from(self.v),
        )
    }

    pub fn center_lab(&self, b: BinIndex) -> ColorLab {
        rgb_to_lab(hsv_to_rgb(self.center_hsv(b)))
    }

    /// Lab centers of every bin, in flat order.
    pub fn centers_lab(&self) -> Vec<ColorLab> {
        (0..self.len()).map(|i| self.center_lab(self.index(i))).collect()
    }
}

impl Default for Dims {
    fn default() -> Self {
        Self::STANDARD
    }
}

/// Position of a bin on the HSV grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BinIndex {
    pub h_bin: usize,
    pub s_bin: usize,
    pub v_bin: usize,
    pub flat: usize,
}

/// Bin of `c` on the standard grid.
pub fn bin_of(c: ColorHsv) -> BinIndex {
    Dims::STANDARD.bin_of(c)
}

/// Lab color of the HSV center of a standard-grid bin.
pub fn bin_center_lab(b: BinIndex) -> ColorLab {
    Dims::STANDARD.center_lab(b)
}

/// Shannon entropy in bits.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct EntropyValue {
    pub bits: f64,
}

/// Mass over HSV bins, stored densely in flat order.
#[derive(Debug, Clone, PartialEq)]
pub struct HsvHistogram {
    dims: Dims,
    mass: Vec<f64>,
    normalized: bool,
}

impl HsvHistogram {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            mass: vec![0.0; dims.len()],
            normalized: false,
        }
    }

    /// Wraps dense masses. The histogram counts as normalized when its total
    /// is within [`NORMALIZATION_TOLERANCE`] of 1.
    pub fn from_dense(dims: Dims, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} masses for {} bins",
                mass.len(),
                dims.len()
            )));
        }
        if let Some(bad) = mass.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "bin masses must be finite and non-negative, got {bad}"
            )));
        }
        let normalized = (neumaier_sum(mass.iter().copied()) - 1.0).abs() <= NORMALIZATION_TOLERANCE;
        Ok(Self { dims, mass, normalized })
    }

    pub fn from_sparse(dims: Dims, bins: &BTreeMap<usize, f64>) -> Result<Self> {
        let mut mass = vec![0.0; dims.len()];
        for (&flat, &m) in bins {
            if flat >= dims.len() {
                return Err(Error::DimensionMismatch(format!(
                    "bin {flat} out of range for {} bins",
                    dims.len()
                )));
            }
            mass[flat] = m;
        }
        Self::from_dense(dims, mass)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn get(&self, flat: usize) -> f64 {
        self.mass[flat]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn total(&self) -> f64 {
        neumaier_sum(self.mass.iter().copied())
    }

    /// Nonzero bins as `(flat index, mass)` in ascending index order.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(i, m)| (i, *m))
    }

    pub fn support_len(&self) -> usize {
        self.mass.iter().filter(|m| **m > 0.0).count()
    }

    pub fn to_sparse(&self) -> BTreeMap<usize, f64> {
        self.nonzero().collect()
    }

    pub fn is_all_zero(&self) -> bool {
        self.mass.iter().all(|m| *m == 0.0)
    }

    pub fn normalize(&self) -> Result<Self> {
        if self.normalized {
            return Ok(self.clone());
        }
        let total = self.total();
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        Ok(Self {
            dims: self.dims,
            mass: self.mass.iter().map(|m| m / total).collect(),
            normalized: true,
        })
    }

    pub(crate) fn require_normalized(&self) -> Result<()> {
        if self.normalized {
            Ok(())
        } else {
            Err(Error::NotNormalized(self.total()))
        }
    }

    /// `-Σ hᵢ log₂ hᵢ`, with empty bins contributing nothing.
    pub fn entropy(&self) -> Result<EntropyValue> {
        self.require_normalized()?;
        let bits = -neumaier_sum(self.mass.iter().filter(|m| **m > 0.0).map(|&m| m * m.log2()));
        Ok(EntropyValue { bits: bits.max(0.0) })
    }

    /// Writes the binary `PHST` form (standard grid only, f32 masses).
    pub fn write_phst<W: Write>(&self, mut w: W) -> Result<()> {
        if self.dims != Dims::STANDARD {
            return Err(Error::format(
                "PHST",
                format!("only the standard 34x12x10 grid is serializable, got {:?}", self.dims),
            ));
        }
        let mut buf = Vec::with_capacity(4 + 2 * 4 + 4 * self.mass.len());
        buf.extend_from_slice(PHST_MAGIC);
        buf.extend_from_slice(&PHST_VERSION.to_le_bytes());
        for d in self.dims.as_array() {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        for m in &self.mass {
            buf.extend_from_slice(&(*m as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_phst_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_phst(&mut out)?;
        Ok(out)
    }

    pub fn read_phst<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 12];
        r.read_exact(&mut header)
            .map_err(|e| Error::format("PHST", format!("truncated header: {e}")))?;
        if &header[..4] != PHST_MAGIC {
            return Err(Error::format("PHST", "bad magic"));
        }
        let u16_at = |i: usize| u16::from_le_bytes([header[i], header[i + 1]]);
        let version = u16_at(4);
        if version != PHST_VERSION {
            return Err(Error::format("PHST", format!("unsupported version {version}")));
        }
        let dims = Dims {
            h: u16_at(6),
            s: u16_at(8),
            v: u16_at(10),
        };
        if dims != Dims::STANDARD {
            return Err(Error::format("PHST", format!("unexpected dims {:?}", dims.as_array())));
        }
        let mut body = vec![0u8; 4 * dims.len()];
        r.read_exact(&mut body)
            .map_err(|e| Error::format("PHST", format!("truncated body: {e}")))?;
        let mass = body
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        Self::from_dense(dims, mass).map_err(|e| Error::format("PHST", e.to_string()))
    }

    pub fn from_phst_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_phst(bytes)
    }

    pub fn to_sparse_json(&self) -> SparseHistogramJson {
        SparseHistogramJson {
            dims: self.dims.as_array(),
            bins: self.to_sparse(),
        }
    }

    pub fn from_sparse_json(json: &SparseHistogramJson) -> Result<Self> {
        let [h, s, v] = json.dims;
        Self::from_sparse(Dims::new(h, s, v)?, &json.bins)
    }
}

/// `{"dims":[34,12,10],"bins":{"<flat>":mass,...}}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseHistogramJson {
    pub dims: [u16; 3],
    pub bins: BTreeMap<usize, f64>,
}

/// Integer pixel counts per bin. Merging is exact, so partial counts from
/// any chunking of an image combine to the same histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinCounts {
    dims: Dims,
    counts: Vec<u64>,
    total: u64,
}

impl BinCounts {
    pub fn new(dims: Dims) -> Self {
        Self {
            dims,
            counts: vec![0; dims.len()],
            total: 0,
        }
    }

    pub fn add(&mut self, c: ColorRgb) {
        self.counts[self.dims.bin_of_rgb(c)] += 1;
        self.total += 1;
    }

    pub fn merge(mut self, other: &BinCounts) -> Self {
        assert_eq!(self.dims, other.dims, "merging counts over different grids");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn into_histogram(self) -> Result<HsvHistogram> {
        if self.total == 0 {
            return Err(Error::EmptyInput);
        }
        let n = self.total as f64;
        Ok(HsvHistogram {
            dims: self.dims,
            mass: self.counts.iter().map(|&c| c as f64 / n).collect(),
            normalized: true,
        })
    }
}

/// Normalized histogram of `pixels` on the standard grid.
pub fn histogram_of_image(pixels: &[ColorRgb]) -> Result<HsvHistogram> {
    histogram_of_image_with(Dims::STANDARD, pixels)
}

pub fn histogram_of_image_with(dims: Dims, pixels: &[ColorRgb]) -> Result<HsvHistogram> {
    if pixels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let counts = if pixels.len() >= PARALLEL_PIXEL_THRESHOLD {
        pixels
            .par_chunks(PARALLEL_PIXEL_THRESHOLD)
            .map(|chunk| count_pixels(dims, chunk.iter().copied()))
            .reduce(|| BinCounts::new(dims), |a, b| a.merge(&b))
    } else {
        count_pixels(dims, pixels.iter().copied())
    };
    counts.into_histogram()
}

/// Histogram of an interleaved 8-bit RGB buffer of `width × height` pixels.
pub fn histogram_of_rgb8(buffer: &[u8], width: usize, height: usize) -> Result<HsvHistogram> {
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| Error::DimensionMismatch("image size overflows".into()))?;
    if buffer.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "buffer holds {} bytes, {width}x{height} RGB needs {expected}",
            buffer.len()
        )));
    }
    if expected == 0 {
        return Err(Error::EmptyInput);
    }
    let dims = Dims::STANDARD;
    let chunk = 3 * PARALLEL_PIXEL_THRESHOLD;
    buffer
        .par_chunks(chunk)
        .map(|bytes| {
            count_pixels(
                dims,
                bytes.chunks_exact(3).map(|p| ColorRgb::from_u8([p[0], p[1], p[2]])),
            )
        })
        .reduce(|| BinCounts::new(dims), |a, b| a.merge(&b))
        .into_histogram()
}

fn count_pixels(dims: Dims, pixels: impl Iterator<Item = ColorRgb>) -> BinCounts {
    let mut counts = BinCounts::new(dims);
    for p in pixels {
        counts.add(p);
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const RED: ColorRgb = ColorRgb::new(1.0, 0.0, 0.0);
    const CYAN: ColorRgb = ColorRgb::new(0.0, 1.0, 1.0);

    #[test]
    fn bin_of_corners() {
        let b = bin_of(ColorHsv::new(0.0, 0.0, 0.0));
        assert_eq!((b.h_bin, b.s_bin, b.v_bin, b.flat), (0, 0, 0, 0));
        let b = bin_of(ColorHsv::new(359.999, 0.999, 0.999));
        assert_eq!((b.h_bin, b.s_bin, b.v_bin, b.flat), (33, 11, 9, 4079));
        let b = bin_of(ColorHsv::new(0.0, 1.0, 1.0));
        assert_eq!((b.h_bin, b.s_bin, b.v_bin), (0, 11, 9));
        let b = bin_of(ColorHsv::new(360.0, 1.0, 1.0));
        assert_eq!(b.flat, 4079);
    }

    #[test]
    fn flat_index_round_trip() {
        let dims = Dims::STANDARD;
        for flat in 0..dims.len() {
            let b = dims.index(flat);
            assert!(b.h_bin < 34 && b.s_bin < 12 && b.v_bin < 10);
            assert_eq!(dims.flat(b.h_bin, b.s_bin, b.v_bin), flat);
            assert_eq!(dims.bin_of(dims.center_hsv(b)), b);
        }
    }

    #[test]
    fn bin_of_is_surjective_on_dense_sweep() {
        let dims = Dims::STANDARD;
        let mut hit = vec![false; dims.len()];
        for hi in 0..340 {
            for si in 0..120 {
                for vi in 0..100 {
                    let c = ColorHsv::new(
                        (hi as f64 + 0.5) * 360.0 / 340.0,
                        (si as f64 + 0.5) / 120.0,
                        (vi as f64 + 0.5) / 100.0,
                    );
                    hit[dims.bin_of(c).flat] = true;
                }
            }
        }
        assert!(hit.iter().all(|h| *h));
    }

    #[test]
    fn bin_center_of_origin() {
        // Python recomputation with the unrounded sRGB matrix
        let lab = bin_center_lab(Dims::STANDARD.index(0));
        assert_abs_diff_eq!(lab.l, 3.4342717022890348, epsilon = 1e-9);
        assert_abs_diff_eq!(lab.a, 0.13799068181663543, epsilon = 1e-9);
        assert_abs_diff_eq!(lab.b, 0.07129537755429793, epsilon = 1e-9);
        // scikit-image rounds the matrix to six digits
        assert_abs_diff_eq!(lab.l, 3.43425483, epsilon = 1e-3);
        assert_abs_diff_eq!(lab.a, 0.13777492, epsilon = 1e-3);
        assert_abs_diff_eq!(lab.b, 0.07170182, epsilon = 1e-3);

        let again = bin_center_lab(Dims::STANDARD.index(0));
        assert_eq!(lab.l.to_bits(), again.l.to_bits());
    }

    #[test]
    fn centers_are_distinct() {
        let dims = Dims::STANDARD;
        let mut seen = std::collections::HashSet::new();
        for flat in 0..dims.len() {
            let c = dims.center_hsv(dims.index(flat));
            assert!(seen.insert((c.h.to_bits(), c.s.to_bits(), c.v.to_bits())));
        }
    }

    #[test]
    fn solid_and_split_images() {
        let h = histogram_of_image(&[RED; 100]).unwrap();
        let red_bin = Dims::STANDARD.flat(0, 11, 9);
        assert_eq!(h.get(red_bin), 1.0);
        assert_eq!(h.support_len(), 1);

        let mut pixels = vec![RED; 50];
        pixels.extend(vec![CYAN; 50]);
        let h = histogram_of_image(&pixels).unwrap();
        assert_eq!(h.get(red_bin), 0.5);
        assert_eq!(h.get(bin_of(rgb_to_hsv(CYAN)).flat), 0.5);
    }

    #[test]
    fn random_image_is_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pixels: Vec<_> = (0..1000)
            .map(|_| ColorRgb::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let h = histogram_of_image(&pixels).unwrap();
        assert!(h.is_normalized());
        assert!((h.total() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn empty_image_is_rejected() {
        assert!(matches!(histogram_of_image(&[]), Err(Error::EmptyInput)));
        assert!(matches!(histogram_of_rgb8(&[], 0, 0), Err(Error::EmptyInput)));
    }

    #[test]
    fn pixel_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pixels: Vec<_> = (0..(PARALLEL_PIXEL_THRESHOLD * 2 + 17))
            .map(|_| ColorRgb::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let a = histogram_of_image(&pixels).unwrap();
        pixels.shuffle(&mut rng);
        let b = histogram_of_image(&pixels).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rgb8_buffer_matches_pixel_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (w, h) = (37, 23);
        let buf: Vec<u8> = (0..w * h * 3).map(|_| rng.gen()).collect();
        let pixels: Vec<_> = buf
            .chunks_exact(3)
            .map(|p| ColorRgb::from_u8([p[0], p[1], p[2]]))
            .collect();
        assert_eq!(
            histogram_of_rgb8(&buf, w, h).unwrap(),
            histogram_of_image(&pixels).unwrap()
        );
        assert!(matches!(
            histogram_of_rgb8(&buf, w + 1, h),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn entropy_analytic_values() {
        let dims = Dims::STANDARD;
        let delta = HsvHistogram::from_sparse(dims, &BTreeMap::from([(17, 1.0)])).unwrap();
        assert_eq!(delta.entropy().unwrap().bits, 0.0);

        let uniform = HsvHistogram::from_dense(dims, vec![1.0 / 4080.0; 4080]).unwrap();
        assert_abs_diff_eq!(uniform.entropy().unwrap().bits, 4080f64.log2(), epsilon = 1e-9);

        let eight: BTreeMap<_, _> = (0..8).map(|i| (i * 100, 0.125)).collect();
        let h = HsvHistogram::from_sparse(dims, &eight).unwrap();
        assert_eq!(h.entropy().unwrap().bits, 3.0);
    }

    #[test]
    fn entropy_requires_normalized() {
        let h = HsvHistogram::from_sparse(Dims::STANDARD, &BTreeMap::from([(0, 2.0)])).unwrap();
        let err = h.entropy().unwrap_err();
        assert!(err.to_string().contains("histogram not normalized"));
    }

    #[test]
    fn normalize_cases() {
        let dims = Dims::new(1, 1, 2).unwrap();
        let h = HsvHistogram::from_dense(dims, vec![2.0, 2.0])
            .unwrap()
            .normalize()
            .unwrap();
        assert_eq!(h.mass(), &[0.5, 0.5]);
        assert!(h.is_normalized());
        assert_eq!(h.normalize().unwrap(), h);
        let h = HsvHistogram::from_dense(dims, vec![1.0, 3.0])
            .unwrap()
            .normalize()
            .unwrap();
        assert_eq!(h.mass(), &[0.25, 0.75]);
        assert!(matches!(HsvHistogram::zeros(dims).normalize(), Err(Error::ZeroMass)));
    }

    #[test]
    fn rejects_bad_masses() {
        let dims = Dims::new(1, 1, 2).unwrap();
        assert!(HsvHistogram::from_dense(dims, vec![-1.0, 2.0]).is_err());
        assert!(HsvHistogram::from_dense(dims, vec![f64::NAN, 1.0]).is_err());
        assert!(HsvHistogram::from_dense(dims, vec![1.0]).is_err());
    }

    #[test]
    fn phst_layout() {
        let h = histogram_of_image(&[RED]).unwrap();
        let bytes = h.to_phst_bytes().unwrap();
        assert_eq!(bytes.len(), 12 + 4 * 4080);
        assert_eq!(&bytes[..4], b"PHST");
        assert_eq!(&bytes[4..12], &[1, 0, 34, 0, 12, 0, 10, 0]);
        let red_bin = Dims::STANDARD.flat(0, 11, 9);
        let off = 12 + 4 * red_bin;
        assert_eq!(&bytes[off..off + 4], &1.0f32.to_le_bytes());
        assert_eq!(HsvHistogram::from_phst_bytes(&bytes).unwrap(), h);
    }

    #[test]
    fn phst_rejects_corruption() {
        let mut bytes = histogram_of_image(&[RED]).unwrap().to_phst_bytes().unwrap();
        assert!(HsvHistogram::from_phst_bytes(&bytes[..100]).is_err());
        bytes[6] = 35;
        assert!(HsvHistogram::from_phst_bytes(&bytes).is_err());
        bytes[0] = b'X';
        assert!(HsvHistogram::from_phst_bytes(&bytes).is_err());
        let small = HsvHistogram::zeros(Dims::new(2, 2, 2).unwrap());
        assert!(small.to_phst_bytes().is_err());
    }

    #[test]
    fn sparse_json_shape() {
        let h = histogram_of_image(&[RED, CYAN]).unwrap();
        let json = serde_json::to_value(h.to_sparse_json()).unwrap();
        assert_eq!(json["dims"], serde_json::json!([34, 12, 10]));
        let red_bin = Dims::STANDARD.flat(0, 11, 9);
        assert_eq!(json["bins"][red_bin.to_string()], 0.5);
        let back: SparseHistogramJson = serde_json::from_value(json).unwrap();
        assert_eq!(HsvHistogram::from_sparse_json(&back).unwrap(), h);
    }

    fn sparse_strategy() -> impl Strategy<Value = BTreeMap<usize, f64>> {
        prop::collection::btree_map(0usize..4080, 1e-6..10.0f64, 1..40)
    }

    proptest! {
        #[test]
        fn sparse_dense_round_trip(bins in sparse_strategy()) {
            let h = HsvHistogram::from_sparse(Dims::STANDARD, &bins).unwrap();
            prop_assert_eq!(h.to_sparse(), bins);
        }

        #[test]
        fn phst_round_trip_of_f32_values(bins in sparse_strategy()) {
            let bins: BTreeMap<_, _> = bins.into_iter().map(|(k, v)| (k, f64::from(v as f32))).collect();
            let h = HsvHistogram::from_sparse(Dims::STANDARD, &bins).unwrap();
            let bytes = h.to_phst_bytes().unwrap();
            let back = HsvHistogram::from_phst_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_sparse(), bins);
            prop_assert_eq!(back.to_phst_bytes().unwrap(), bytes);
        }

        #[test]
        fn entropy_is_permutation_invariant(bins in sparse_strategy(), seed in any::<u64>()) {
            let h = HsvHistogram::from_sparse(Dims::STANDARD, &bins).unwrap().normalize().unwrap();
            let mut masses: Vec<f64> = bins.values().copied().collect();
            masses.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let permuted: BTreeMap<_, _> = bins.keys().copied().zip(masses).collect();
            let g = HsvHistogram::from_sparse(Dims::STANDARD, &permuted).unwrap().normalize().unwrap();
            let (a, b) = (h.entropy().unwrap().bits, g.entropy().unwrap().bits);
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!(a <= 4080f64.log2() + 1e-12);
        }
    }
}
