//! Face normalization: grayscale load, resize, fixed crop, single-scale
//! Retinex and elliptical masking.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Luminance weights (ITU-R BT.601) used to reduce color inputs.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Dense grayscale image, row-major, nominal intensity range `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image must be non-empty, got {height}x{width}"
            )));
        }
        if pixels.len() != height * width {
            return Err(Error::DimMismatch {
                what: "image pixel buffer".into(),
                expected: (height * width).to_string(),
                found: pixels.len().to_string(),
            });
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("image contains non-finite pixels".into()));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "image must be non-empty");
        Self {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "image must be non-empty");
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.pixels[row * self.width + col] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }

    /// Writes the image as 8-bit grayscale PNG, clamping and rounding.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf: Vec<u8> = self
            .pixels
            .iter()
            .map(|p| p.round().clamp(0.0, 255.0) as u8)
            .collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer size matches dimensions");
        img.save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }
}

/// Reads an image file as grayscale in `[0, 255]`.
///
/// Color inputs are reduced with [`LUMA_WEIGHTS`]; 16-bit inputs are scaled
/// down by 257 so that 8-bit and 16-bit encodings of the same picture agree.
pub fn load_grayscale(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Image {
            path: path.to_path_buf(),
            source,
        },
    })?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<f64> = if img.color().has_color() {
        img.to_rgb16()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0.map(|v| f64::from(v) / 257.0);
                LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b
            })
            .collect()
    } else {
        img.to_luma16()
            .pixels()
            .map(|p| f64::from(p.0[0]) / 257.0)
            .collect()
    };
    GrayImage::new(height, width, pixels)
}

/// Ellipse in pixel coordinates: `x0` is the center column, `y0` the center row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub x0: f64,
    pub y0: f64,
    pub a: f64,
    pub b: f64,
}

impl Ellipse {
    pub fn new(x0: f64, y0: f64, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ellipse axes must be positive, got a={a} b={b}"
            )));
        }
        Ok(Self { x0, y0, a, b })
    }

    /// Ellipse inscribed in a `height × width` image.
    pub fn inscribed(height: usize, width: usize) -> Self {
        Self {
            x0: (width as f64 - 1.0) / 2.0,
            y0: (height as f64 - 1.0) / 2.0,
            a: width as f64 / 2.0,
            b: height as f64 / 2.0,
        }
    }

    #[inline]
    pub fn contains(&self, col: f64, row: f64) -> bool {
        let dx = (col - self.x0) / self.a;
        let dy = (row - self.y0) / self.b;
        dx * dx + dy * dy <= 1.0
    }
}

/// Preprocessing variant; the four rows of the method comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "basic")]
    Basic,
    #[serde(rename = "retinex")]
    Retinex,
    #[serde(rename = "mask")]
    Mask,
    #[serde(rename = "retinex+mask")]
    RetinexMask,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Basic,
        Method::Retinex,
        Method::Mask,
        Method::RetinexMask,
    ];

    pub fn uses_retinex(self) -> bool {
        matches!(self, Method::Retinex | Method::RetinexMask)
    }

    pub fn uses_mask(self) -> bool {
        matches!(self, Method::Mask | Method::RetinexMask)
    }

    pub fn key(self) -> &'static str {
        match self {
            Method::Basic => "basic",
            Method::Retinex => "retinex",
            Method::Mask => "mask",
            Method::RetinexMask => "retinex+mask",
        }
    }

    /// Human-readable label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::Basic => "Basic system",
            Method::Retinex => "Retinex filter",
            Method::Mask => "Elliptical mask",
            Method::RetinexMask => "Retinex filter + Elliptical mask",
        }
    }

    /// File-name-safe tag.
    pub fn file_tag(self) -> &'static str {
        match self {
            Method::RetinexMask => "retinex_mask",
            m => m.key(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.key() == s || m.file_tag() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown method {s:?} (expected basic, retinex, mask or retinex+mask)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocConfig {
    /// `(height, width)` after resizing.
    pub target_size: (usize, usize),
    /// Inclusive column range kept by the crop.
    pub crop_x: (usize, usize),
    /// Inclusive row range kept by the crop.
    pub crop_y: (usize, usize),
    pub retinex_sigma: f64,
    pub mask_fill: f64,
    /// Mask ellipse in cropped-image coordinates; `None` uses the inscribed ellipse.
    pub ellipse: Option<Ellipse>,
    pub enable_retinex: bool,
    pub enable_mask: bool,
}

impl Default for PreprocConfig {
    fn default() -> Self {
        Self {
            target_size: (200, 200),
            crop_x: (55, 180),
            crop_y: (43, 157),
            retinex_sigma: 15.0,
            mask_fill: 0.0,
            ellipse: None,
            enable_retinex: false,
            enable_mask: false,
        }
    }
}

impl PreprocConfig {
    pub fn validate(&self) -> Result<()> {
        let (th, tw) = self.target_size;
        let bad = |msg: String| Err(Error::Config(msg));
        if th == 0 || tw == 0 {
            return bad(format!("target_size must be positive, got {th}x{tw}"));
        }
        if self.crop_x.0 > self.crop_x.1 || self.crop_x.1 >= tw {
            return bad(format!(
                "crop_x {:?} must be an ordered range inside width {tw}",
                self.crop_x
            ));
        }
        if self.crop_y.0 > self.crop_y.1 || self.crop_y.1 >= th {
            return bad(format!(
                "crop_y {:?} must be an ordered range inside height {th}",
                self.crop_y
            ));
        }
        if !(self.retinex_sigma > 0.0 && self.retinex_sigma.is_finite()) {
            return bad(format!(
                "retinex_sigma must be positive, got {}",
                self.retinex_sigma
            ));
        }
        if !self.mask_fill.is_finite() {
            return bad("mask_fill must be finite".into());
        }
        if let Some(e) = self.ellipse {
            Ellipse::new(e.x0, e.y0, e.a, e.b).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn with_method(&self, method: Method) -> Self {
        Self {
            enable_retinex: method.uses_retinex(),
            enable_mask: method.uses_mask(),
            ..self.clone()
        }
    }

    /// `(height, width)` of the cropped face.
    pub fn crop_size(&self) -> (usize, usize) {
        (
            self.crop_y.1 - self.crop_y.0 + 1,
            self.crop_x.1 - self.crop_x.0 + 1,
        )
    }

    pub fn effective_ellipse(&self) -> Ellipse {
        let (h, w) = self.crop_size();
        self.ellipse.unwrap_or_else(|| Ellipse::inscribed(h, w))
    }
}

/// Bilinear resampling with half-pixel-centered sampling and edge clamping.
pub fn resize_bilinear(img: &GrayImage, out_h: usize, out_w: usize) -> GrayImage {
    if img.height == out_h && img.width == out_w {
        return img.clone();
    }
    let rows = axis_samples(img.height, out_h);
    let cols = axis_samples(img.width, out_w);
    GrayImage::from_fn(out_h, out_w, |r, c| {
        let (r0, r1, tr) = rows[r];
        let (c0, c1, tc) = cols[c];
        let top = img.get(r0, c0) * (1.0 - tc) + img.get(r0, c1) * tc;
        let bottom = img.get(r1, c0) * (1.0 - tc) + img.get(r1, c1) * tc;
        top * (1.0 - tr) + bottom * tr
    })
}

/// For each output index: the two source neighbours and the interpolation weight.
fn axis_samples(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    let last = (n_in - 1) as f64;
    (0..n_out)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let lo = src.floor();
            let i0 = lo as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, src - lo)
        })
        .collect()
}

/// Extracts rows `y0..=y1` and columns `x0..=x1`.
pub fn crop(img: &GrayImage, (x0, x1): (usize, usize), (y0, y1): (usize, usize)) -> Result<GrayImage> {
    if x0 > x1 || y0 > y1 || x1 >= img.width || y1 >= img.height {
        return Err(Error::InvalidArgument(format!(
            "crop x {x0}..={x1}, y {y0}..={y1} outside {}x{} image",
            img.height, img.width
        )));
    }
    Ok(GrayImage::from_fn(y1 - y0 + 1, x1 - x0 + 1, |r, c| {
        img.get(y0 + r, x0 + c)
    }))
}

/// Resizes to the configured target size, then applies the inclusive crop.
pub fn resize_and_crop(img: &GrayImage, cfg: &PreprocConfig) -> Result<GrayImage> {
    let (th, tw) = cfg.target_size;
    let resized = resize_bilinear(img, th, tw);
    crop(&resized, cfg.crop_x, cfg.crop_y)
}

/// Maps any integer offset onto `[0, n)` by half-sample symmetric reflection
/// (`d c b a | a b c d | d c b a`), folding as many times as needed.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Normalized 1-D Gaussian taps with radius `ceil(3 sigma)`.
pub fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Separable Gaussian blur with symmetric-reflection boundary.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    let taps = gaussian_taps(sigma);
    let radius = (taps.len() / 2) as isize;
    let (h, w) = (img.height, img.width);
    let horiz = GrayImage::from_fn(h, w, |r, c| {
        taps.iter()
            .enumerate()
            .map(|(k, t)| t * img.get(r, reflect_index(c as isize + k as isize - radius, w)))
            .sum()
    });
    GrayImage::from_fn(h, w, |r, c| {
        taps.iter()
            .enumerate()
            .map(|(k, t)| t * horiz.get(reflect_index(r as isize + k as isize - radius, h), c))
            .sum()
    })
}

/// Relative spread below which a map counts as constant when rescaling.
const FLAT_TOLERANCE: f64 = 1e-9;

/// Min–max rescale to `[0, 255]`; (numerically) constant maps become all zeros.
pub fn rescale_to_u8_range(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    let scale = lo.abs().max(hi.abs()).max(1.0);
    if !(range > FLAT_TOLERANCE * scale) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|&v| (v - lo) / range * 255.0).collect()
}

/// Log-domain reflectance `ln(S+1) - ln(G_sigma * S + 1)`, before rescaling.
pub fn retinex_log_reflectance(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "retinex sigma must be positive, got {sigma}"
        )));
    }
    let surround = gaussian_blur(img, sigma);
    let pixels = img
        .pixels
        .iter()
        .zip(&surround.pixels)
        .map(|(&s, &l)| (s + 1.0).ln() - (l + 1.0).ln())
        .collect();
    Ok(GrayImage {
        height: img.height,
        width: img.width,
        pixels,
    })
}

/// Single-scale Retinex with Gaussian surround, min–max rescaled to `[0, 255]`.
pub fn retinex_ssr(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    let r = retinex_log_reflectance(img, sigma)?;
    Ok(GrayImage {
        height: r.height,
        width: r.width,
        pixels: rescale_to_u8_range(&r.pixels),
    })
}

/// Replaces every pixel outside `e` by `fill`.
pub fn elliptical_mask(img: &GrayImage, e: &Ellipse, fill: f64) -> GrayImage {
    let mut out = img.clone();
    for r in 0..img.height {
        for c in 0..img.width {
            if !e.contains(c as f64, r as f64) {
                out.set(r, c, fill);
            }
        }
    }
    out
}

/// Intermediate results of [`preprocess_image`], for debugging.
#[derive(Debug, Clone)]
pub struct Stages {
    pub cropped: GrayImage,
    pub retinex: Option<GrayImage>,
    pub masked: Option<GrayImage>,
}

impl Stages {
    pub fn output(&self) -> &GrayImage {
        self.masked
            .as_ref()
            .or(self.retinex.as_ref())
            .unwrap_or(&self.cropped)
    }

    /// Writes each stage present as `<stem>_<n>_<stage>.png` under `dir`.
    pub fn write_debug(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let stages = [
            ("0_crop", Some(&self.cropped)),
            ("1_retinex", self.retinex.as_ref()),
            ("2_mask", self.masked.as_ref()),
        ];
        for (name, img) in stages {
            if let Some(img) = img {
                let path = dir.join(format!("{stem}_{name}.png"));
                img.save_png(&path)?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

/// Resize → crop → Retinex → mask, honoring the enable flags.
pub fn preprocess_stages(img: &GrayImage, cfg: &PreprocConfig) -> Result<Stages> {
    cfg.validate()?;
    let cropped = resize_and_crop(img, cfg)?;
    let retinex = if cfg.enable_retinex {
        Some(retinex_ssr(&cropped, cfg.retinex_sigma)?)
    } else {
        None
    };
    let masked = if cfg.enable_mask {
        let input = retinex.as_ref().unwrap_or(&cropped);
        Some(elliptical_mask(input, &cfg.effective_ellipse(), cfg.mask_fill))
    } else {
        None
    };
    Ok(Stages {
        cropped,
        retinex,
        masked,
    })
}

pub fn preprocess_image(img: &GrayImage, cfg: &PreprocConfig) -> Result<GrayImage> {
    let stages = preprocess_stages(img, cfg)?;
    Ok(match stages {
        Stages {
            masked: Some(m), ..
        } => m,
        Stages {
            retinex: Some(r), ..
        } => r,
        Stages { cropped, .. } => cropped,
    })
}

/// Loads `path` and runs the full preprocessing chain.
pub fn preprocess_pipeline(path: &Path, cfg: &PreprocConfig) -> Result<GrayImage> {
    preprocess_image(&load_grayscale(path)?, cfg)
}
