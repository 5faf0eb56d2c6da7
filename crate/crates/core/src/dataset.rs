//! Pair manifests, family-level fold assignment, negative-pair sampling and a
//! synthetic family generator.
//!
//! Manifest format: UTF-8 text, one `parent_rel_path,child_rel_path,family_id`
//! record per line, paths relative to the manifest's directory. Blank lines
//! and lines starting with `#` are ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::par;
use crate::preprocess::GrayImage;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairEntry {
    pub parent: PathBuf,
    pub child: PathBuf,
    pub family_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairManifest {
    pub root_dir: PathBuf,
    pub entries: Vec<PairEntry>,
}

/// Parses manifest text without touching the filesystem.
pub fn parse_manifest(text: &str, source: &Path, root_dir: &Path) -> Result<PairManifest> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Manifest {
            path: source.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 comma-separated fields, found {}", fields.len())));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(err("empty image path".into()));
        }
        let family_id = fields[2].parse::<u64>().map_err(|_| {
            err(format!(
                "family_id must be a non-negative integer, got {:?}",
                fields[2]
            ))
        })?;
        entries.push(PairEntry {
            parent: PathBuf::from(fields[0]),
            child: PathBuf::from(fields[1]),
            family_id,
        });
    }
    Ok(PairManifest {
        root_dir: root_dir.to_path_buf(),
        entries,
    })
}

/// Reads and validates a manifest; every referenced image must exist and
/// have a decodable header.
pub fn load_manifest(path: &Path) -> Result<PairManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let manifest = parse_manifest(&text, path, &root)?;
    let paths: Vec<PathBuf> = manifest
        .entries
        .iter()
        .flat_map(|e| [manifest.resolve(&e.parent), manifest.resolve(&e.child)])
        .collect();
    par::try_map(&paths, |p| {
        image::ImageReader::open(p)
            .map_err(|e| Error::io(p, e))?
            .with_guessed_format()
            .map_err(|e| Error::io(p, e))?
            .into_dimensions()
            .map(|_| ())
            .map_err(|source| Error::Image {
                path: p.clone(),
                source,
            })
    })?;
    Ok(manifest)
}

impl PairManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root_dir.join(rel)
    }

    pub fn family_ids(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.family_id).collect()
    }

    /// Distinct families, ascending.
    pub fn families(&self) -> Vec<u64> {
        self.entries
            .iter()
            .map(|e| e.family_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("# parent_rel_path,child_rel_path,family_id\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{}", e.parent.display(), e.child.display(), e.family_id);
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Family → fold map; folds partition families.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: BTreeMap<u64, usize>,
}

impl FoldAssignment {
    pub fn families_in(&self, fold: usize) -> Vec<u64> {
        self.fold_of
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(&fam, _)| fam)
            .collect()
    }

    /// Manifest row indices `(train, test)` for holding out `fold`.
    pub fn split(&self, manifest: &PairManifest, fold: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, e) in manifest.entries.iter().enumerate() {
            match self.fold_of.get(&e.family_id) {
                Some(&f) if f == fold => test.push(i),
                Some(_) => train.push(i),
                None => {
                    return Err(Error::Data(format!(
                        "family {} has no fold assignment",
                        e.family_id
                    )))
                }
            }
        }
        Ok((train, test))
    }
}

/// Shuffles families with `seed` and deals them round-robin into `k` folds.
pub fn make_folds(manifest: &PairManifest, k: usize, seed: u64) -> Result<FoldAssignment> {
    make_folds_for(&manifest.family_ids(), k, seed)
}

/// [`make_folds`] over a list of per-row family ids (duplicates allowed).
pub fn make_folds_for(family_ids: &[u64], k: usize, seed: u64) -> Result<FoldAssignment> {
    let mut families: Vec<u64> = family_ids.to_vec();
    families.sort_unstable();
    families.dedup();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need k >= 2 folds, got {k}")));
    }
    if k > families.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} families into {k} folds",
            families.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    families.shuffle(&mut rng);
    Ok(FoldAssignment {
        k,
        fold_of: families
            .into_iter()
            .enumerate()
            .map(|(i, fam)| (fam, i % k))
            .collect(),
    })
}

/// Positive and negative `(parent_index, child_index)` pairs over one manifest.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabeledPairSet {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

impl LabeledPairSet {
    /// Row `i` pairs `(i, i)`; these are the kin pairs.
    pub fn positives_only(n: usize) -> Self {
        Self {
            positives: (0..n).map(|i| (i, i)).collect(),
            negatives: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty() && self.negatives.is_empty()
    }

    /// `(parent, child, is_kin)` for all pairs, positives first.
    pub fn labeled(&self) -> impl Iterator<Item = (usize, usize, bool)> + '_ {
        self.positives
            .iter()
            .map(|&(p, c)| (p, c, true))
            .chain(self.negatives.iter().map(|&(p, c)| (p, c, false)))
    }
}

/// Positives are the manifest rows; negatives are drawn uniformly, without
/// replacement, from all cross-family `(parent, child)` combinations.
pub fn sample_negative_pairs(manifest: &PairManifest, per_positive: usize, seed: u64) -> Result<LabeledPairSet> {
    sample_negatives_for(&manifest.family_ids(), per_positive, seed)
}

/// [`sample_negative_pairs`] over a bare list of per-row family ids.
pub fn sample_negatives_for(family_ids: &[u64], per_positive: usize, seed: u64) -> Result<LabeledPairSet> {
    let distinct: BTreeSet<u64> = family_ids.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::Data(format!(
            "negative pairs need at least 2 families, found {}",
            distinct.len()
        )));
    }
    let n = family_ids.len();
    let mut pairs = LabeledPairSet::positives_only(n);
    let wanted = per_positive * n;
    if wanted == 0 {
        return Ok(pairs);
    }
    let candidates: Vec<(usize, usize)> = (0..n)
        .flat_map(|p| (0..n).map(move |c| (p, c)))
        .filter(|&(p, c)| family_ids[p] != family_ids[c])
        .collect();
    if wanted > candidates.len() {
        return Err(Error::Data(format!(
            "requested {wanted} negative pairs but only {} cross-family pairs exist",
            candidates.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<(usize, usize)> = rand::seq::index::sample(&mut rng, candidates.len(), wanted)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    picked.sort_unstable();
    pairs.negatives = picked;
    Ok(pairs)
}

/// Parameters for the synthetic family generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_families: usize,
    /// `(height, width)` of generated images.
    pub image_size: (usize, usize),
    /// 0: child texture equals the parent's; 1: child texture is independent.
    pub kin_noise: f64,
    /// Log-range of the multiplicative illumination ramp; larger is harsher.
    pub illumination: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_families: 50,
            image_size: (200, 200),
            kin_noise: 0.2,
            illumination: 0.5,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_families < 2 {
            return Err(Error::InvalidArgument(format!(
                "synthetic dataset needs at least 2 families to form negatives, got {}",
                self.n_families
            )));
        }
        let (h, w) = self.image_size;
        if h < 64 || w < 64 {
            return Err(Error::InvalidArgument(format!(
                "synthetic images must be at least 64x64, got {h}x{w}"
            )));
        }
        if !(0.0..=1.0).contains(&self.kin_noise) {
            return Err(Error::InvalidArgument(format!(
                "kin_noise must lie in [0, 1], got {}",
                self.kin_noise
            )));
        }
        if !(self.illumination >= 0.0 && self.illumination.is_finite()) {
            return Err(Error::InvalidArgument("illumination must be >= 0".into()));
        }
        Ok(())
    }
}

/// A random family appearance: localized oriented gratings plus blobs.
#[derive(Debug, Clone)]
struct Texture {
    gratings: Vec<Grating>,
    blobs: Vec<Blob>,
}

#[derive(Debug, Clone)]
struct Grating {
    freq_x: f64,
    freq_y: f64,
    phase: f64,
    amp: f64,
    cx: f64,
    cy: f64,
    spread: f64,
}

#[derive(Debug, Clone)]
struct Blob {
    cx: f64,
    cy: f64,
    radius: f64,
    amp: f64,
}

impl Texture {
    /// Coordinates are in units of a 200-pixel frame so that textures keep
    /// their scale relative to the face crop whatever the output size.
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let gratings = (0..5)
            .map(|_| {
                let theta = rng.random::<f64>() * std::f64::consts::PI;
                let lambda = 10.0 + 30.0 * rng.random::<f64>();
                Grating {
                    freq_x: theta.cos() / lambda,
                    freq_y: theta.sin() / lambda,
                    phase: rng.random::<f64>() * std::f64::consts::TAU,
                    amp: 0.5 + 0.5 * rng.random::<f64>(),
                    cx: 55.0 + 125.0 * rng.random::<f64>(),
                    cy: 43.0 + 114.0 * rng.random::<f64>(),
                    spread: 25.0 + 30.0 * rng.random::<f64>(),
                }
            })
            .collect();
        let blobs = (0..6)
            .map(|_| Blob {
                cx: 55.0 + 125.0 * rng.random::<f64>(),
                cy: 43.0 + 114.0 * rng.random::<f64>(),
                radius: 6.0 + 14.0 * rng.random::<f64>(),
                amp: rng.random::<f64>() * 2.0 - 1.0,
            })
            .collect();
        Self { gratings, blobs }
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        let mut v = 0.0;
        for g in &self.gratings {
            let d2 = (x - g.cx).powi(2) + (y - g.cy).powi(2);
            let env = (-d2 / (2.0 * g.spread * g.spread)).exp();
            v += g.amp * env * (std::f64::consts::TAU * (g.freq_x * x + g.freq_y * y) + g.phase).cos();
        }
        for b in &self.blobs {
            let d2 = (x - b.cx).powi(2) + (y - b.cy).powi(2);
            v += b.amp * (-d2 / (2.0 * b.radius * b.radius)).exp();
        }
        v
    }

    /// Texture raster mapped into `[0.1, 1]`.
    fn render(&self, h: usize, w: usize) -> Vec<f64> {
        let (sy, sx) = (200.0 / h as f64, 200.0 / w as f64);
        let raw: Vec<f64> = (0..h * w)
            .map(|i| self.eval((i % w) as f64 * sx, (i / w) as f64 * sy))
            .collect();
        raw.into_iter()
            .map(|v| 0.55 + 0.45 * (v / 2.5).tanh())
            .collect()
    }
}

/// Smooth multiplicative illumination: an exponential ramp with a mild
/// quadratic bend, normalized to peak 1.
fn illumination_field(rng: &mut ChaCha8Rng, h: usize, w: usize, strength: f64) -> Vec<f64> {
    let angle = rng.random::<f64>() * std::f64::consts::TAU;
    let (gx, gy) = (angle.cos(), angle.sin());
    let bend = rng.random::<f64>() * 2.0 - 1.0;
    let log: Vec<f64> = (0..h * w)
        .map(|i| {
            let x = (i % w) as f64 / (w - 1) as f64 - 0.5;
            let y = (i / w) as f64 / (h - 1) as f64 - 0.5;
            let t = gx * x + gy * y;
            strength * (t + 0.5 * bend * (x * x + y * y))
        })
        .collect();
    let peak = log.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    log.into_iter().map(|l| (l - peak).exp()).collect()
}

/// Renders family `family`'s parent and child images (8-bit quantized values).
pub fn synth_family(spec: &SynthSpec, family: u64) -> (GrayImage, GrayImage) {
    let (h, w) = spec.image_size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(family + 1);
    let parent_tex = Texture::random(&mut rng).render(h, w);
    let foreign_tex = Texture::random(&mut rng).render(h, w);
    let child_tex: Vec<f64> = parent_tex
        .iter()
        .zip(&foreign_tex)
        .map(|(p, f)| (1.0 - spec.kin_noise) * p + spec.kin_noise * f)
        .collect();
    let mut shade = |tex: &[f64]| {
        let light = illumination_field(&mut rng, h, w, spec.illumination);
        let px = tex
            .iter()
            .zip(&light)
            .map(|(t, l)| (255.0 * t * l).round().clamp(0.0, 255.0))
            .collect();
        GrayImage::new(h, w, px).expect("finite pixels")
    };
    let parent = shade(&parent_tex);
    let child = shade(&child_tex);
    (parent, child)
}

/// Writes `fam<id>_parent.png`, `fam<id>_child.png` for every family plus
/// `manifest.csv` into `out_dir`.
pub fn generate_synthetic_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<PairManifest> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let entries = par::try_map_range(spec.n_families, |fam| {
        let (parent, child) = synth_family(spec, fam as u64);
        let entry = PairEntry {
            parent: PathBuf::from(format!("fam{fam}_parent.png")),
            child: PathBuf::from(format!("fam{fam}_child.png")),
            family_id: fam as u64,
        };
        parent.save_png(&out_dir.join(&entry.parent))?;
        child.save_png(&out_dir.join(&entry.child))?;
        Ok::<_, Error>(entry)
    })?;
    let manifest = PairManifest {
        root_dir: out_dir.to_path_buf(),
        entries,
    };
    manifest.save(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
