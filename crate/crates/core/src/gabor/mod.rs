//! Hist-Gabor features: Gabor kernel bank, correlation, block histograms and
//! the per-sample `256 × blocks × scales` feature tensor.

mod conv;
mod features;
mod histogram;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use conv::{convolve, correlate_direct, FftCorrelator};
pub use features::{extract_feature_tensor, FeatureExtractor, FeatureSet, FeatureTensor, BINS};
pub use histogram::{block_histograms, quantize_response, BlockGrid, QuantizedMap};

/// Parameters of one Gabor filter. `theta` is kept in `[0, π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaborParams {
    pub lambda: f64,
    pub theta: f64,
    pub psi: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl GaborParams {
    pub fn new(lambda: f64, theta: f64, psi: f64, sigma: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [("lambda", lambda), ("sigma", sigma), ("gamma", gamma)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "gabor {name} must be positive, got {v}"
                )));
            }
        }
        if !theta.is_finite() || !psi.is_finite() {
            return Err(Error::InvalidArgument("gabor theta/psi must be finite".into()));
        }
        Ok(Self {
            lambda,
            theta: theta.rem_euclid(PI),
            psi,
            sigma,
            gamma,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Part {
    /// Cosine carrier.
    Real,
    /// Sine carrier.
    Imaginary,
}

/// Square kernel of side `2·radius + 1`, row-major; entry `(dy, dx)` with
/// offsets in `[-radius, radius]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    radius: usize,
    data: Vec<f64>,
}

impl Kernel {
    pub fn from_fn(radius: usize, f: impl Fn(isize, isize) -> f64) -> Self {
        let r = radius as isize;
        let mut data = Vec::with_capacity((2 * radius + 1).pow(2));
        for dy in -r..=r {
            for dx in -r..=r {
                data.push(f(dy, dx));
            }
        }
        Self { radius, data }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, dy: isize, dx: isize) -> f64 {
        let r = self.radius as isize;
        let side = self.side();
        self.data[(dy + r) as usize * side + (dx + r) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Samples one Gabor component on the `(2·radius+1)²` grid.
///
/// With column offset `x` and row offset `y`:
/// `x' = x cosθ + y sinθ`, `y' = −x sinθ + y cosθ` and the entry is
/// `exp(−(x'² + γ² y'²) / 2σ²) · cos(2π x'/λ + ψ)` (sine for the imaginary part).
pub fn make_gabor_kernel(p: &GaborParams, part: Part, radius: usize) -> Result<Kernel> {
    if radius < 1 {
        return Err(Error::InvalidArgument("kernel radius must be >= 1".into()));
    }
    let (sin_t, cos_t) = p.theta.sin_cos();
    let two_sigma_sq = 2.0 * p.sigma * p.sigma;
    let gamma_sq = p.gamma * p.gamma;
    Ok(Kernel::from_fn(radius, |dy, dx| {
        let (x, y) = (dx as f64, dy as f64);
        let xr = x * cos_t + y * sin_t;
        let yr = -x * sin_t + y * cos_t;
        let envelope = (-(xr * xr + gamma_sq * yr * yr) / two_sigma_sq).exp();
        let phase = 2.0 * PI * xr / p.lambda + p.psi;
        envelope
            * match part {
                Part::Real => phase.cos(),
                Part::Imaginary => phase.sin(),
            }
    }))
}

/// Ordered filter bank. Filters are sorted λ-major, then θ, then ψ, then part;
/// each scale group holds the filters sharing one `(λ, ψ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaborBank {
    filters: Vec<(GaborParams, Part)>,
    scale_groups: Vec<Vec<usize>>,
    radius_factor: f64,
}

pub const DEFAULT_RADIUS_FACTOR: f64 = 2.5;

/// Builds one real and one imaginary filter per `(λ, θ, ψ)` with `σ = λ`.
pub fn build_bank(
    orientations: &[f64],
    wavelengths: &[f64],
    psis: &[f64],
    gamma: f64,
    radius_factor: f64,
) -> Result<GaborBank> {
    if orientations.is_empty() || wavelengths.is_empty() || psis.is_empty() {
        return Err(Error::InvalidArgument(
            "gabor bank needs at least one orientation, wavelength and phase".into(),
        ));
    }
    if !(radius_factor > 0.0 && radius_factor.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "radius factor must be positive, got {radius_factor}"
        )));
    }
    let mut filters = Vec::new();
    let mut groups = vec![Vec::new(); wavelengths.len() * psis.len()];
    for (li, &lambda) in wavelengths.iter().enumerate() {
        for &theta in orientations {
            for (pi, &psi) in psis.iter().enumerate() {
                let p = GaborParams::new(lambda, theta, psi, lambda, gamma)?;
                for part in [Part::Real, Part::Imaginary] {
                    groups[li * psis.len() + pi].push(filters.len());
                    filters.push((p, part));
                }
            }
        }
    }
    Ok(GaborBank {
        filters,
        scale_groups: groups,
        radius_factor,
    })
}

impl GaborBank {
    /// The published settings: θ ∈ {45°, 67.5°, 90°, 112.5°}, λ ∈ {16, 22.63},
    /// ψ ∈ {0°, 90°}, σ = λ, circular envelope. 32 filters, 4 scale groups.
    pub fn paper_default() -> Self {
        let deg = |d: f64| d.to_radians();
        build_bank(
            &[deg(45.0), deg(67.5), deg(90.0), deg(112.5)],
            &[16.0, 22.63],
            &[0.0, deg(90.0)],
            1.0,
            DEFAULT_RADIUS_FACTOR,
        )
        .expect("static parameters are valid")
    }

    pub fn from_config(cfg: &BankConfig) -> Result<Self> {
        cfg.validate()?;
        let orientations: Vec<f64> = cfg.orientations_deg.iter().map(|d| d.to_radians()).collect();
        let psis: Vec<f64> = cfg.psis_deg.iter().map(|d| d.to_radians()).collect();
        let bank = build_bank(
            &orientations,
            &cfg.wavelengths(),
            &psis,
            cfg.gamma,
            cfg.radius_factor,
        )?;
        Ok(bank.truncate_scales(cfg.n_scales))
    }

    /// Keeps the first `n` scale groups and the filters they reference.
    pub fn truncate_scales(&self, n: usize) -> Self {
        if n >= self.scale_groups.len() {
            return self.clone();
        }
        let mut keep: Vec<usize> = self.scale_groups[..n].iter().flatten().copied().collect();
        keep.sort_unstable();
        let remap = |old: usize| keep.binary_search(&old).expect("kept filter");
        Self {
            filters: keep.iter().map(|&i| self.filters[i]).collect(),
            scale_groups: self.scale_groups[..n]
                .iter()
                .map(|g| g.iter().map(|&i| remap(i)).collect())
                .collect(),
            radius_factor: self.radius_factor,
        }
    }

    /// Same filters with scale groups reordered: new group `i` is old group `order[i]`.
    pub fn permute_scales(&self, order: &[usize]) -> Result<Self> {
        let mut sorted = order.to_vec();
        sorted.sort_unstable();
        if sorted != (0..self.scale_groups.len()).collect::<Vec<_>>() {
            return Err(Error::InvalidArgument(format!(
                "{order:?} is not a permutation of the scale groups"
            )));
        }
        Ok(Self {
            filters: self.filters.clone(),
            scale_groups: order.iter().map(|&i| self.scale_groups[i].clone()).collect(),
            radius_factor: self.radius_factor,
        })
    }

    pub fn filters(&self) -> &[(GaborParams, Part)] {
        &self.filters
    }

    pub fn scale_groups(&self) -> &[Vec<usize>] {
        &self.scale_groups
    }

    pub fn n_scales(&self) -> usize {
        self.scale_groups.len()
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn radius_for(&self, p: &GaborParams) -> usize {
        ((self.radius_factor * p.sigma).ceil() as usize).max(1)
    }

    pub fn max_radius(&self) -> usize {
        self.filters
            .iter()
            .map(|(p, _)| self.radius_for(p))
            .max()
            .unwrap_or(1)
    }

    pub fn kernel(&self, index: usize) -> Kernel {
        let (p, part) = &self.filters[index];
        make_gabor_kernel(p, *part, self.radius_for(p)).expect("radius >= 1")
    }
}

/// Filter-bank and block-grid settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankConfig {
    pub orientations_deg: Vec<f64>,
    pub psis_deg: Vec<f64>,
    /// First wavelength; further wavelengths grow geometrically by `wavelength_ratio`.
    pub base_wavelength: f64,
    pub wavelength_ratio: f64,
    /// Number of `(λ, ψ)` scale groups.
    pub n_scales: usize,
    pub gamma: f64,
    pub radius_factor: f64,
    /// Block grid as `(rows, cols)`.
    pub blocks: (usize, usize),
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            orientations_deg: vec![45.0, 67.5, 90.0, 112.5],
            psis_deg: vec![0.0, 90.0],
            base_wavelength: 16.0,
            wavelength_ratio: std::f64::consts::SQRT_2,
            n_scales: 6,
            gamma: 1.0,
            radius_factor: DEFAULT_RADIUS_FACTOR,
            blocks: (3, 4),
        }
    }
}

impl BankConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.orientations_deg.is_empty() || self.psis_deg.is_empty() {
            return bad("features need at least one orientation and one phase".into());
        }
        if self.n_scales == 0 {
            return bad("n_scales must be >= 1".into());
        }
        if !(self.base_wavelength > 0.0) || !(self.wavelength_ratio > 1.0) {
            return bad(format!(
                "need base_wavelength > 0 and wavelength_ratio > 1, got {} and {}",
                self.base_wavelength, self.wavelength_ratio
            ));
        }
        if !(self.gamma > 0.0) || !(self.radius_factor > 0.0) {
            return bad("gamma and radius_factor must be positive".into());
        }
        if self.blocks.0 == 0 || self.blocks.1 == 0 {
            return bad(format!("block grid must be positive, got {:?}", self.blocks));
        }
        Ok(())
    }

    /// Enough wavelengths that `wavelengths × phases ≥ n_scales`.
    pub fn wavelengths(&self) -> Vec<f64> {
        let n = self.n_scales.div_ceil(self.psis_deg.len().max(1));
        (0..n)
            .map(|i| self.base_wavelength * self.wavelength_ratio.powi(i as i32))
            .collect()
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.0 * self.blocks.1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(lambda: f64, theta_deg: f64, psi_deg: f64) -> GaborParams {
        GaborParams::new(lambda, theta_deg.to_radians(), psi_deg.to_radians(), lambda, 1.0).unwrap()
    }

    #[test]
    fn real_kernel_center_values() {
        let k = make_gabor_kernel(&p(16.0, 45.0, 0.0), Part::Real, 5).unwrap();
        assert_eq!(k.at(0, 0), 1.0);
        let k = make_gabor_kernel(&p(16.0, 45.0, 90.0), Part::Real, 5).unwrap();
        assert!(k.at(0, 0).abs() < 1e-15);
    }

    #[test]
    fn kernel_parity_and_zero_sum() {
        for theta in [0.0, 45.0, 67.5, 90.0, 112.5, 170.0] {
            let params = p(16.0, theta, 0.0);
            let even = make_gabor_kernel(&params, Part::Real, 12).unwrap();
            let odd = make_gabor_kernel(&params, Part::Imaginary, 12).unwrap();
            for dy in -12..=12 {
                for dx in -12..=12 {
                    assert!((even.at(dy, dx) - even.at(-dy, -dx)).abs() < 1e-12);
                    assert!((odd.at(dy, dx) + odd.at(-dy, -dx)).abs() < 1e-12);
                }
            }
            assert!(odd.sum().abs() < 1e-9);
        }
    }

    #[test]
    fn kernel_matches_formula() {
        let params = GaborParams::new(10.0, 0.3, 0.7, 4.0, 0.5).unwrap();
        let k = make_gabor_kernel(&params, Part::Imaginary, 6).unwrap();
        let (x, y) = (3.0f64, -2.0f64);
        let xr = x * 0.3f64.cos() + y * 0.3f64.sin();
        let yr = -x * 0.3f64.sin() + y * 0.3f64.cos();
        let expected =
            (-(xr * xr + 0.25 * yr * yr) / 32.0).exp() * (2.0 * PI * xr / 10.0 + 0.7).sin();
        assert!((k.at(-2, 3) - expected).abs() < 1e-15);
    }

    #[test]
    fn bad_params_are_rejected() {
        assert!(GaborParams::new(0.0, 0.0, 0.0, 1.0, 1.0).is_err());
        assert!(GaborParams::new(1.0, 0.0, 0.0, -1.0, 1.0).is_err());
        assert!(make_gabor_kernel(&p(8.0, 0.0, 0.0), Part::Real, 0).is_err());
        assert!(build_bank(&[], &[16.0], &[0.0], 1.0, 2.5).is_err());
    }

    #[test]
    fn theta_is_normalized() {
        let params = GaborParams::new(8.0, 4.0, 0.0, 8.0, 1.0).unwrap();
        assert!((params.theta - (4.0 - PI)).abs() < 1e-15);
    }

    #[test]
    fn paper_bank_layout() {
        let bank = GaborBank::paper_default();
        assert_eq!(bank.len(), 32);
        assert_eq!(bank.n_scales(), 4);
        assert!(bank.filters().iter().all(|(p, _)| p.sigma == p.lambda));
        let mut seen: Vec<usize> = bank.scale_groups().iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..32).collect::<Vec<_>>());
        // λ-major, then θ, then ψ, then part
        let (p0, part0) = bank.filters()[0];
        let (p1, part1) = bank.filters()[1];
        let (p2, _) = bank.filters()[2];
        let (p4, _) = bank.filters()[4];
        assert_eq!((part0, part1), (Part::Real, Part::Imaginary));
        assert_eq!(p0, p1);
        assert_eq!((p2.theta, p2.psi), (p0.theta, 90f64.to_radians()));
        assert!(p4.theta > p0.theta);
        assert_eq!(bank.filters()[16].0.lambda, 22.63);
        for (g, members) in bank.scale_groups().iter().enumerate() {
            assert_eq!(members.len(), 8);
            let (l, s) = (bank.filters()[members[0]].0.lambda, bank.filters()[members[0]].0.psi);
            assert!(members
                .iter()
                .all(|&i| bank.filters()[i].0.lambda == l && bank.filters()[i].0.psi == s));
            assert_eq!(l, [16.0, 16.0, 22.63, 22.63][g]);
        }
    }

    #[test]
    fn single_filter_bank() {
        let bank = build_bank(&[0.5], &[8.0], &[0.0], 1.0, 2.5).unwrap();
        assert_eq!(bank.len(), 2);
        assert_eq!(bank.n_scales(), 1);
    }

    #[test]
    fn config_extends_wavelengths() {
        let cfg = BankConfig::default();
        let w = cfg.wavelengths();
        assert_eq!(w.len(), 3);
        assert!((w[1] - 22.627).abs() < 1e-3 && (w[2] - 32.0).abs() < 1e-9);
        let bank = GaborBank::from_config(&cfg).unwrap();
        assert_eq!(bank.n_scales(), 6);
        assert_eq!(bank.len(), 48);

        let odd = GaborBank::from_config(&BankConfig {
            n_scales: 5,
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(odd.n_scales(), 5);
        assert_eq!(odd.len(), 40);
        let mut all: Vec<usize> = odd.scale_groups().iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn kernel_radius_rule() {
        let bank = GaborBank::paper_default();
        assert_eq!(bank.radius_for(&bank.filters()[0].0), 40);
        assert_eq!(bank.max_radius(), (2.5f64 * 22.63).ceil() as usize);
    }
}
