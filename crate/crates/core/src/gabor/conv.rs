//! 2-D correlation with symmetric-reflection boundary.
//!
//! Output pixel `(r, c)` is `Σ_{dy,dx} k(dy, dx) · I(r + dy, c + dx)` with
//! out-of-range coordinates reflected (see [`reflect_index`]). An impulse
//! image therefore reproduces the kernel rotated by 180°.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Kernel;
use crate::error::{Error, Result};
use crate::preprocess::{reflect_index, GrayImage};

fn check_support(h: usize, w: usize, radius: usize) -> Result<()> {
    if radius > h.min(w) {
        return Err(Error::InvalidArgument(format!(
            "kernel radius {radius} exceeds the {h}x{w} image it is applied to"
        )));
    }
    Ok(())
}

/// Nested-loop reference correlation.
pub fn correlate_direct(img: &GrayImage, kernel: &Kernel) -> Result<GrayImage> {
    let (h, w) = (img.height(), img.width());
    check_support(h, w, kernel.radius())?;
    let r = kernel.radius() as isize;
    Ok(GrayImage::from_fn(h, w, |row, col| {
        let mut acc = 0.0;
        for dy in -r..=r {
            let src_row = reflect_index(row as isize + dy, h);
            for dx in -r..=r {
                let src_col = reflect_index(col as isize + dx, w);
                acc += kernel.at(dy, dx) * img.get(src_row, src_col);
            }
        }
        acc
    }))
}

/// FFT-based correlation, equal to [`correlate_direct`] up to rounding.
pub fn convolve(img: &GrayImage, kernel: &Kernel) -> Result<GrayImage> {
    let corr = FftCorrelator::new(img.height(), img.width(), kernel.radius())?;
    let spec = corr.image_spectrum(img);
    let ker = corr.kernel_spectrum(kernel.radius(), |dy, dx| {
        Complex64::new(kernel.at(dy, dx), 0.0)
    })?;
    let out = corr.correlate(&spec, &ker);
    GrayImage::new(img.height(), img.width(), out.into_iter().map(|z| z.re).collect())
}

/// Reusable FFT plan for correlating `height × width` images with kernels of
/// radius up to `pad`.
///
/// The image is padded by `pad` pixels of reflection on every side; the
/// circular convolution of the padded image with the flipped kernel equals
/// the linear correlation on the unpadded region.
pub struct FftCorrelator {
    height: usize,
    width: usize,
    pad: usize,
    fwd_rows: Arc<dyn Fft<f64>>,
    inv_rows: Arc<dyn Fft<f64>>,
    fwd_cols: Arc<dyn Fft<f64>>,
    inv_cols: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftCorrelator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftCorrelator")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("pad", &self.pad)
            .finish()
    }
}

impl FftCorrelator {
    pub fn new(height: usize, width: usize, pad: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument("empty image".into()));
        }
        check_support(height, width, pad)?;
        let (ph, pw) = (height + 2 * pad, width + 2 * pad);
        let mut planner = FftPlanner::new();
        Ok(Self {
            height,
            width,
            pad,
            fwd_rows: planner.plan_fft_forward(pw),
            inv_rows: planner.plan_fft_inverse(pw),
            fwd_cols: planner.plan_fft_forward(ph),
            inv_cols: planner.plan_fft_inverse(ph),
        })
    }

    fn padded_dims(&self) -> (usize, usize) {
        (self.height + 2 * self.pad, self.width + 2 * self.pad)
    }

    /// Forward 2-D FFT of a `ph × pw` row-major buffer. The result is left
    /// transposed (`pw × ph`); [`Self::inverse`] undoes both steps.
    fn forward(&self, mut buf: Vec<Complex64>) -> Vec<Complex64> {
        let (ph, pw) = self.padded_dims();
        self.fwd_rows.process(&mut buf);
        let mut t = transpose(&buf, ph, pw);
        self.fwd_cols.process(&mut t);
        t
    }

    fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<Complex64> {
        let (ph, pw) = self.padded_dims();
        self.inv_cols.process(&mut spec);
        let mut buf = transpose(&spec, pw, ph);
        self.inv_rows.process(&mut buf);
        let norm = 1.0 / (ph * pw) as f64;
        buf.iter_mut().for_each(|z| *z *= norm);
        buf
    }

    /// Spectrum of the reflection-padded image.
    pub fn image_spectrum(&self, img: &GrayImage) -> Vec<Complex64> {
        assert_eq!((img.height(), img.width()), (self.height, self.width));
        let (ph, pw) = self.padded_dims();
        let pad = self.pad as isize;
        let mut buf = Vec::with_capacity(ph * pw);
        for r in 0..ph {
            let src_r = reflect_index(r as isize - pad, self.height);
            for c in 0..pw {
                let src_c = reflect_index(c as isize - pad, self.width);
                buf.push(Complex64::new(img.get(src_r, src_c), 0.0));
            }
        }
        self.forward(buf)
    }

    /// Spectrum of a (possibly complex) kernel given by `k(dy, dx)` over offsets in `[-radius, radius]`.
    pub fn kernel_spectrum(
        &self,
        radius: usize,
        k: impl Fn(isize, isize) -> Complex64,
    ) -> Result<Vec<Complex64>> {
        if radius > self.pad {
            return Err(Error::InvalidArgument(format!(
                "kernel radius {radius} exceeds correlator padding {}",
                self.pad
            )));
        }
        let (ph, pw) = self.padded_dims();
        let mut buf = vec![Complex64::new(0.0, 0.0); ph * pw];
        let r = radius as isize;
        for dy in -r..=r {
            for dx in -r..=r {
                // flipped kernel at circular position (-dy, -dx)
                let row = (-dy).rem_euclid(ph as isize) as usize;
                let col = (-dx).rem_euclid(pw as isize) as usize;
                buf[row * pw + col] = k(dy, dx);
            }
        }
        Ok(self.forward(buf))
    }

    /// Correlates a padded-image spectrum with a kernel spectrum, returning
    /// the `height × width` row-major response.
    pub fn correlate(&self, image_spec: &[Complex64], kernel_spec: &[Complex64]) -> Vec<Complex64> {
        let prod: Vec<Complex64> = image_spec
            .iter()
            .zip(kernel_spec)
            .map(|(a, b)| a * b)
            .collect();
        let full = self.inverse(prod);
        let (_, pw) = self.padded_dims();
        let mut out = Vec::with_capacity(self.height * self.width);
        for r in 0..self.height {
            let start = (r + self.pad) * pw + self.pad;
            out.extend_from_slice(&full[start..start + self.width]);
        }
        out
    }
}

fn transpose(src: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut dst = vec![Complex64::new(0.0, 0.0); src.len()];
    const TILE: usize = 32;
    for rb in (0..rows).step_by(TILE) {
        for cb in (0..cols).step_by(TILE) {
            for r in rb..(rb + TILE).min(rows) {
                for c in cb..(cb + TILE).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
    dst
}
