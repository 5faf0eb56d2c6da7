//! Feature tensors and their extraction from preprocessed faces.
//!
//! Flat layout: bins fastest, then blocks, then scales, so entry
//! `(bin, block, scale)` sits at `bin + 256·block + 256·blocks·scale`.
//!
//! Single-tensor file (`.kvft`), all integers little-endian:
//!
//! ```text
//! "KVFT" | version u32 = 1 | endian tag u32 = 0x01020304
//! bins u32 = 256 | blocks u32 | scales u32
//! f64 × (256·blocks·scales) in flat order
//! ```

use std::fmt::Write as _;
use std::path::Path;

use rustfft::num_complex::Complex64;

use super::conv::FftCorrelator;
use super::histogram::{block_histograms, quantize_response, BlockGrid, QuantizedMap};
use super::{GaborBank, Part};
use crate::error::{Error, Result};
use crate::io::{read_file, write_atomic, write_header, ByteReader, ByteWriter};
use crate::par;
use crate::preprocess::GrayImage;
use crate::tensor::Tensor;

pub const BINS: usize = 256;

const TENSOR_MAGIC: &[u8; 4] = b"KVFT";
const SET_MAGIC: &[u8; 4] = b"KVFS";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    n_blocks: usize,
    n_scales: usize,
    data: Vec<f64>,
}

impl FeatureTensor {
    pub fn from_flat(n_blocks: usize, n_scales: usize, data: Vec<f64>) -> Result<Self> {
        if n_blocks == 0 || n_scales == 0 {
            return Err(Error::InvalidArgument("feature tensor needs blocks and scales".into()));
        }
        if data.len() != BINS * n_blocks * n_scales {
            return Err(Error::DimMismatch {
                what: "feature tensor length".into(),
                expected: (BINS * n_blocks * n_scales).to_string(),
                found: data.len().to_string(),
            });
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Data("feature tensor entries must be finite and >= 0".into()));
        }
        Ok(Self {
            n_blocks,
            n_scales,
            data,
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn n_scales(&self) -> usize {
        self.n_scales
    }

    /// `[256, blocks, scales]`.
    pub fn shape(&self) -> [usize; 3] {
        [BINS, self.n_blocks, self.n_scales]
    }

    pub fn get(&self, bin: usize, block: usize, scale: usize) -> f64 {
        self.data[bin + BINS * block + BINS * self.n_blocks * scale]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// Histogram columns of one scale group, `256 × blocks` column-major.
    pub fn scale_slice(&self, scale: usize) -> &[f64] {
        let len = BINS * self.n_blocks;
        &self.data[scale * len..(scale + 1) * len]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.shape().to_vec(), self.data.clone()).expect("consistent shape")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        write_header(&mut w, TENSOR_MAGIC, FORMAT_VERSION);
        for d in self.shape() {
            w.u32(d as u32);
        }
        w.f64s(&self.data);
        w.into_inner()
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(path, bytes);
        r.header(TENSOR_MAGIC, FORMAT_VERSION)?;
        let (bins, blocks, scales) = read_dims(&mut r)?;
        let data = r.f64s(bins * blocks * scales)?;
        r.finish()?;
        Self::from_flat(blocks, scales, data).map_err(|e| r.err(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(path, &read_file(path)?)
    }

    /// Plain-text dump: a dims line, then one line per (block, scale) with 256 counts.
    pub fn to_text(&self) -> String {
        let mut s = format!("# bins={BINS} blocks={} scales={}\n", self.n_blocks, self.n_scales);
        for scale in 0..self.n_scales {
            for block in 0..self.n_blocks {
                let _ = write!(s, "{scale} {block}");
                for bin in 0..BINS {
                    let _ = write!(s, " {}", self.get(bin, block, scale));
                }
                s.push('\n');
            }
        }
        s
    }
}

fn read_dims(r: &mut ByteReader<'_>) -> Result<(usize, usize, usize)> {
    let bins = r.u32()? as usize;
    let blocks = r.u32()? as usize;
    let scales = r.u32()? as usize;
    if bins != BINS {
        return Err(r.err(format!("expected {BINS} bins, found {bins}")));
    }
    Ok((bins, blocks, scales))
}

/// One orientation of a scale group: the complex kernel `real + i·imag`.
struct ComplexFilter {
    spectrum: Vec<Complex64>,
}

/// Precomputed kernel spectra for extracting features from images of one size.
pub struct FeatureExtractor {
    height: usize,
    width: usize,
    grid: BlockGrid,
    correlator: FftCorrelator,
    groups: Vec<Vec<ComplexFilter>>,
}

impl std::fmt::Debug for FeatureExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureExtractor")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("grid", &self.grid)
            .field("scales", &self.groups.len())
            .finish()
    }
}

impl FeatureExtractor {
    pub fn new(bank: &GaborBank, grid: BlockGrid, height: usize, width: usize) -> Result<Self> {
        let correlator = FftCorrelator::new(height, width, bank.max_radius())?;
        let mut groups = Vec::with_capacity(bank.n_scales());
        for members in bank.scale_groups() {
            // pair real/imaginary parts sharing the same parameters
            let mut pairs: Vec<(Option<usize>, Option<usize>)> = Vec::new();
            let mut keys = Vec::new();
            for &i in members {
                let (p, part) = bank.filters()[i];
                let slot = match keys.iter().position(|q| *q == p) {
                    Some(s) => s,
                    None => {
                        keys.push(p);
                        pairs.push((None, None));
                        keys.len() - 1
                    }
                };
                match part {
                    Part::Real => pairs[slot].0 = Some(i),
                    Part::Imaginary => pairs[slot].1 = Some(i),
                }
            }
            let filters = par::try_map(&pairs, |&(re, im)| {
                let (re_k, im_k) = (re.map(|i| bank.kernel(i)), im.map(|i| bank.kernel(i)));
                let radius = re_k.as_ref().or(im_k.as_ref()).expect("non-empty pair").radius();
                let spectrum = correlator.kernel_spectrum(radius, |dy, dx| {
                    Complex64::new(
                        re_k.as_ref().map_or(0.0, |k| k.at(dy, dx)),
                        im_k.as_ref().map_or(0.0, |k| k.at(dy, dx)),
                    )
                })?;
                Ok::<_, Error>(ComplexFilter { spectrum })
            })?;
            groups.push(filters);
        }
        Ok(Self {
            height,
            width,
            grid,
            correlator,
            groups,
        })
    }

    pub fn n_scales(&self) -> usize {
        self.groups.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.grid.n_blocks(self.height, self.width)
    }

    /// Per-scale-group response: the complex magnitude `√(re² + im²)` summed over orientations.
    pub fn magnitude_maps(&self, img: &GrayImage) -> Result<Vec<Vec<f64>>> {
        if (img.height(), img.width()) != (self.height, self.width) {
            return Err(Error::DimMismatch {
                what: "image size for feature extraction".into(),
                expected: format!("{}x{}", self.height, self.width),
                found: format!("{}x{}", img.height(), img.width()),
            });
        }
        let spec = self.correlator.image_spectrum(img);
        Ok(self
            .groups
            .iter()
            .map(|filters| {
                let mut acc = vec![0.0; self.height * self.width];
                for f in filters {
                    let resp = self.correlator.correlate(&spec, &f.spectrum);
                    for (a, z) in acc.iter_mut().zip(&resp) {
                        *a += z.norm();
                    }
                }
                acc
            })
            .collect())
    }

    pub fn extract(&self, img: &GrayImage) -> Result<FeatureTensor> {
        let maps = self.magnitude_maps(img)?;
        let mut data = Vec::with_capacity(BINS * self.n_blocks() * maps.len());
        for map in &maps {
            let q = QuantizedMap {
                height: self.height,
                width: self.width,
                values: quantize_response(map)?,
            };
            data.extend(block_histograms(&q, &self.grid)?);
        }
        FeatureTensor::from_flat(self.n_blocks(), maps.len(), data)
    }

    /// Extracts every image, in parallel when enabled; output order matches input.
    pub fn extract_batch(&self, images: &[GrayImage]) -> Result<Vec<FeatureTensor>> {
        par::try_map(images, |img| self.extract(img))
    }
}

/// One-shot extraction; prefer [`FeatureExtractor`] for many images of one size.
pub fn extract_feature_tensor(img: &GrayImage, bank: &GaborBank, grid: &BlockGrid) -> Result<FeatureTensor> {
    FeatureExtractor::new(bank, *grid, img.height(), img.width())?.extract(img)
}

/// Parent/child feature tensors for every manifest row, in row order.
///
/// File layout (`.kvfs`), little-endian:
///
/// ```text
/// "KVFS" | version u32 = 1 | endian tag u32 = 0x01020304
/// bins u32 = 256 | blocks u32 | scales u32
/// tag: u32 length + UTF-8 bytes
/// entries u64, then per entry: family_id u64, parent f64×len, child f64×len
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub tag: String,
    pub family_ids: Vec<u64>,
    pub parents: Vec<FeatureTensor>,
    pub children: Vec<FeatureTensor>,
}

impl FeatureSet {
    pub fn new(
        tag: impl Into<String>,
        family_ids: Vec<u64>,
        parents: Vec<FeatureTensor>,
        children: Vec<FeatureTensor>,
    ) -> Result<Self> {
        if family_ids.len() != parents.len() || parents.len() != children.len() {
            return Err(Error::InvalidArgument(
                "feature set needs one family id, parent and child per entry".into(),
            ));
        }
        let shape = parents.first().map(FeatureTensor::shape);
        if parents.iter().chain(&children).any(|t| Some(t.shape()) != shape) {
            return Err(Error::InvalidArgument("feature set tensors differ in shape".into()));
        }
        Ok(Self {
            tag: tag.into(),
            family_ids,
            parents,
            children,
        })
    }

    pub fn len(&self) -> usize {
        self.family_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.family_ids.is_empty()
    }

    pub fn shape(&self) -> Option<[usize; 3]> {
        self.parents.first().map(FeatureTensor::shape)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        write_header(&mut w, SET_MAGIC, FORMAT_VERSION);
        for d in self.shape().unwrap_or([BINS, 0, 0]) {
            w.u32(d as u32);
        }
        w.str(&self.tag);
        w.u64(self.len() as u64);
        for i in 0..self.len() {
            w.u64(self.family_ids[i]);
            w.f64s(self.parents[i].as_slice());
            w.f64s(self.children[i].as_slice());
        }
        w.into_inner()
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(path, bytes);
        r.header(SET_MAGIC, FORMAT_VERSION)?;
        let (bins, blocks, scales) = read_dims(&mut r)?;
        let tag = r.str()?;
        let n = r.u64()? as usize;
        let len = bins * blocks * scales;
        let mut family_ids = Vec::with_capacity(n);
        let mut parents = Vec::with_capacity(n);
        let mut children = Vec::with_capacity(n);
        for _ in 0..n {
            family_ids.push(r.u64()?);
            for dst in [&mut parents, &mut children] {
                let data = r.f64s(len)?;
                dst.push(FeatureTensor::from_flat(blocks, scales, data).map_err(|e| r.err(e.to_string()))?);
            }
        }
        r.finish()?;
        Self::new(tag, family_ids, parents, children)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(path, &read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gabor::{build_bank, BankConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(h, w, |_, _| rng.random::<f64>() * 255.0)
    }

    fn small_bank() -> GaborBank {
        build_bank(&[0.0, std::f64::consts::FRAC_PI_2], &[4.0, 5.66], &[0.0, 1.0], 1.0, 2.5).unwrap()
    }

    #[test]
    fn shape_and_mass() {
        let img = random_image(40, 48, 1);
        let grid = BlockGrid::for_counts(40, 48, 3, 4).unwrap();
        let t = extract_feature_tensor(&img, &small_bank(), &grid).unwrap();
        assert_eq!(t.shape(), [256, 12, 4]);
        assert_eq!(t.flatten().len(), 4 * 256 * 12);
        let mass = (grid.block_pixels()) as f64;
        for s in 0..4 {
            for b in 0..12 {
                let sum: f64 = (0..256).map(|bin| t.get(bin, b, s)).sum();
                assert_eq!(sum, mass);
            }
        }
        let total: f64 = t.flatten().iter().sum();
        assert_eq!(total, 4.0 * 12.0 * mass);
    }

    #[test]
    fn permuting_scale_groups_permutes_slices() {
        let img = random_image(36, 36, 2);
        let grid = BlockGrid::for_counts(36, 36, 2, 2).unwrap();
        let bank = small_bank();
        let t = extract_feature_tensor(&img, &bank, &grid).unwrap();
        let order = [2, 0, 3, 1];
        let tp = extract_feature_tensor(&img, &bank.permute_scales(&order).unwrap(), &grid).unwrap();
        for (new, &old) in order.iter().enumerate() {
            assert_eq!(tp.scale_slice(new), t.scale_slice(old));
        }
    }

    #[test]
    fn one_hot_index() {
        let (blocks, scales) = (12, 6);
        let (b, j, s) = (17, 5, 3);
        let mut data = vec![0.0; 256 * blocks * scales];
        data[b + 256 * j + 256 * blocks * s] = 1.0;
        let t = FeatureTensor::from_flat(blocks, scales, data).unwrap();
        assert_eq!(t.get(b, j, s), 1.0);
        assert_eq!(t.to_tensor().get(&[b, j, s]), 1.0);
    }

    #[test]
    fn default_config_fits_face_crop() {
        let cfg = BankConfig::default();
        let bank = GaborBank::from_config(&cfg).unwrap();
        let grid = BlockGrid::for_counts(115, 126, 3, 4).unwrap();
        let ex = FeatureExtractor::new(&bank, grid, 115, 126).unwrap();
        assert_eq!((ex.n_blocks(), ex.n_scales()), (12, 6));
    }

    #[test]
    fn wrong_image_size_is_rejected() {
        let grid = BlockGrid::for_counts(30, 30, 2, 2).unwrap();
        let ex = FeatureExtractor::new(&small_bank(), grid, 30, 30).unwrap();
        assert!(ex.extract(&random_image(31, 30, 0)).is_err());
    }

    #[test]
    fn text_export_lists_every_fiber() {
        let t = FeatureTensor::from_flat(2, 3, vec![1.0; 256 * 6]).unwrap();
        let txt = t.to_text();
        assert!(txt.starts_with("# bins=256 blocks=2 scales=3"));
        assert_eq!(txt.lines().count(), 1 + 6);
    }

    #[test]
    fn set_rejects_mismatched_shapes() {
        let a = FeatureTensor::from_flat(2, 1, vec![0.0; 512]).unwrap();
        let b = FeatureTensor::from_flat(1, 2, vec![0.0; 512]).unwrap();
        assert!(FeatureSet::new("x", vec![0], vec![a], vec![b]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn tensor_file_round_trip(blocks in 1usize..5, scales in 1usize..4, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..256 * blocks * scales).map(|_| rng.random::<f64>() * 100.0).collect();
            let t = FeatureTensor::from_flat(blocks, scales, data).unwrap();
            let back = FeatureTensor::from_bytes(Path::new("mem"), &t.to_bytes()).unwrap();
            prop_assert_eq!(back, t);
        }

        #[test]
        fn set_file_round_trip(n in 0usize..4, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut mk = || FeatureTensor::from_flat(2, 2, (0..1024).map(|_| rng.random::<f64>()).collect()).unwrap();
            let parents: Vec<_> = (0..n).map(|_| mk()).collect();
            let children: Vec<_> = (0..n).map(|_| mk()).collect();
            let set = FeatureSet::new("retinex", (0..n as u64).collect(), parents, children).unwrap();
            let back = FeatureSet::from_bytes(Path::new("mem"), &set.to_bytes()).unwrap();
            prop_assert_eq!(back, set);
        }
    }
}
