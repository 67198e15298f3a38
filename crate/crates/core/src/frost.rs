//! Frost despeckling filter.
//!
//! Each pixel becomes a normalized, exponentially weighted average of its
//! `n × n` window. The weight of a neighbour at offset `(dx, dy)` is
//! `exp(-β (|dx| + |dy|))`, where β grows with the window's coefficient of
//! variation so that homogeneous regions are smoothed and edges kept.
//! Windows are clamped at the image border (edge pixels replicated).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::cube::{Dtype, HyperCube, SpectralBand};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BetaMode {
    /// `β = damping · (D/μ)²`, the classical Frost damping factor.
    #[default]
    Damped,
    /// `β = 4 / (n μ²)`: the printed formula `(4/(n D²))(D²/μ²)` with `D²` cancelled.
    Literal,
}

impl fmt::Display for BetaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BetaMode::Damped => "damped",
            BetaMode::Literal => "literal",
        })
    }
}

impl FromStr for BetaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "damped" => Ok(BetaMode::Damped),
            "literal" => Ok(BetaMode::Literal),
            other => Err(Error::InvalidConfig(format!("unknown beta mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrostConfig {
    /// Odd window side `n`.
    pub window: usize,
    pub damping: f64,
    pub beta_mode: BetaMode,
}

impl Default for FrostConfig {
    fn default() -> Self {
        FrostConfig { window: 5, damping: 2.0, beta_mode: BetaMode::Damped }
    }
}

impl FrostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("window must be odd and >= 3, got {}", self.window)));
        }
        if !(self.damping.is_finite() && self.damping > 0.0) {
            return Err(Error::InvalidConfig(format!("damping must be positive, got {}", self.damping)));
        }
        Ok(())
    }

    fn half(&self) -> isize {
        (self.window / 2) as isize
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowStats {
    pub mean: f64,
    pub stddev: f64,
    pub beta: f64,
}

/// Normalized Frost weights over an `n × n` window, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMask {
    pub n: usize,
    pub weights: Vec<f64>,
    pub alpha: f64,
}

impl WeightMask {
    /// Unnormalized weight at offset `(dx, dy)` from the centre.
    pub fn weight(&self, dx: isize, dy: isize) -> f64 {
        let h = (self.n / 2) as isize;
        self.weights[((dy + h) as usize) * self.n + (dx + h) as usize]
    }

    /// Share of the output contributed by the centre pixel.
    pub fn center_share(&self) -> f64 {
        self.alpha * self.weight(0, 0)
    }
}

fn beta_for(mean: f64, stddev: f64, cfg: &FrostConfig) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    match cfg.beta_mode {
        BetaMode::Damped => cfg.damping * (stddev * stddev) / (mean * mean),
        BetaMode::Literal => 4.0 / (cfg.window as f64 * mean * mean),
    }
}

/// Mean, population standard deviation and β of the clamped window centred on `(cx, cy)`.
pub fn window_stats(band: &SpectralBand, cx: usize, cy: usize, cfg: &FrostConfig) -> WindowStats {
    let h = cfg.half();
    let (cx, cy) = (cx as isize, cy as isize);
    let count = (cfg.window * cfg.window) as f64;

    let mut sum = 0.0;
    for dy in -h..=h {
        for dx in -h..=h {
            sum += f64::from(band.get_clamped(cx + dx, cy + dy));
        }
    }
    let mean = sum / count;
    let mut sq = 0.0;
    for dy in -h..=h {
        for dx in -h..=h {
            let d = f64::from(band.get_clamped(cx + dx, cy + dy)) - mean;
            sq += d * d;
        }
    }
    let stddev = (sq / count).sqrt();
    WindowStats { mean, stddev, beta: beta_for(mean, stddev, cfg) }
}

pub fn frost_weights(stats: &WindowStats, n: usize) -> WeightMask {
    let h = (n / 2) as isize;
    let mut weights = Vec::with_capacity(n * n);
    for dy in -h..=h {
        for dx in -h..=h {
            weights.push((-stats.beta * (dx.abs() + dy.abs()) as f64).exp());
        }
    }
    let alpha = 1.0 / weights.iter().sum::<f64>();
    WeightMask { n, weights, alpha }
}

/// Filtered band at full `f64` precision, row-major.
pub fn filter_plane(band: &SpectralBand, cfg: &FrostConfig) -> Vec<f64> {
    let h = cfg.half();
    let mut out = Vec::with_capacity(band.pixels.len());
    for cy in 0..band.height {
        for cx in 0..band.width {
            let stats = window_stats(band, cx, cy, cfg);
            let mask = frost_weights(&stats, cfg.window);
            let mut acc = 0.0;
            let mut k = 0;
            for dy in -h..=h {
                for dx in -h..=h {
                    let p = f64::from(band.get_clamped(cx as isize + dx, cy as isize + dy));
                    acc += mask.alpha * mask.weights[k] * p;
                    k += 1;
                }
            }
            out.push(acc);
        }
    }
    out
}

pub fn filter_band(band: &SpectralBand, cfg: &FrostConfig) -> SpectralBand {
    let pixels = filter_plane(band, cfg).into_iter().map(|v| v as f32).collect();
    SpectralBand::new(band.index, band.width, band.height, pixels)
}

/// Filters every band independently on the current rayon pool; the output cube is `f32`.
pub fn filter_cube(cube: &HyperCube, cfg: &FrostConfig) -> Result<HyperCube> {
    cfg.validate()?;
    let bands = cube.bands.par_iter().map(|b| filter_band(b, cfg)).collect();
    let mut header = cube.header.clone();
    header.dtype = Dtype::F32;
    HyperCube::new(header, bands)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(window: usize, damping: f64, beta_mode: BetaMode) -> FrostConfig {
        FrostConfig { window, damping, beta_mode }
    }

    #[test]
    fn constant_window_has_zero_beta() {
        let band = SpectralBand::filled(0, 5, 5, 100.0);
        let s = window_stats(&band, 2, 2, &FrostConfig::default());
        assert_eq!((s.mean, s.stddev, s.beta), (100.0, 0.0, 0.0));
    }

    #[test]
    fn single_nine_among_zeros() {
        let band = SpectralBand::from_fn(0, 3, 3, |x, y| if (x, y) == (2, 2) { 9.0 } else { 0.0 });
        let s = window_stats(&band, 1, 1, &cfg(3, 2.0, BetaMode::Damped));
        assert!((s.mean - 1.0).abs() < 1e-12);
        assert!((s.stddev - 8f64.sqrt()).abs() < 1e-12);
        assert!((s.beta - 16.0).abs() < 1e-12);
    }

    #[test]
    fn literal_beta_ignores_spread() {
        let band = SpectralBand::from_fn(0, 3, 3, |x, _| [1.0, 2.0, 3.0][x]);
        let s = window_stats(&band, 1, 1, &cfg(3, 2.0, BetaMode::Literal));
        assert!((s.mean - 2.0).abs() < 1e-12);
        assert!((s.beta - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_mean_window_is_uniform() {
        let band = SpectralBand::filled(0, 4, 4, 0.0);
        for mode in [BetaMode::Damped, BetaMode::Literal] {
            assert_eq!(window_stats(&band, 1, 1, &cfg(3, 2.0, mode)).beta, 0.0);
        }
    }

    #[test]
    fn uniform_mask_at_zero_beta() {
        let m = frost_weights(&WindowStats { mean: 1.0, stddev: 0.0, beta: 0.0 }, 5);
        assert!(m.weights.iter().all(|&w| w == 1.0));
        assert!((m.alpha - 1.0 / 25.0).abs() < 1e-15);
    }

    #[test]
    fn mask_values_at_unit_beta() {
        let m = frost_weights(&WindowStats { mean: 1.0, stddev: 1.0, beta: 1.0 }, 3);
        assert_eq!(m.weight(0, 0), 1.0);
        assert!((m.weight(1, 0) - (-1f64).exp()).abs() < 1e-15);
        assert!((m.weight(1, 1) - (-2f64).exp()).abs() < 1e-15);
        assert!((m.weight(-1, -1) - m.weight(1, 1)).abs() == 0.0);
    }

    #[test]
    fn large_beta_approaches_identity() {
        let m = frost_weights(&WindowStats { mean: 1.0, stddev: 1.0, beta: 10.0 }, 3);
        assert!(m.center_share() > 0.99);
    }

    #[test]
    fn constant_band_unchanged() {
        let band = SpectralBand::filled(0, 7, 6, 42.5);
        for c in [cfg(3, 2.0, BetaMode::Damped), cfg(5, 0.5, BetaMode::Literal)] {
            for v in filter_plane(&band, &c) {
                assert!((v - 42.5).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn impulse_spreads_with_center_dominant() {
        let band = SpectralBand::from_fn(0, 9, 9, |x, y| if (x, y) == (4, 4) { 200.0 } else { 10.0 });
        let out = filter_plane(&band, &cfg(3, 2.0, BetaMode::Damped));
        let center = out[4 * 9 + 4];
        assert!(center > out[4 * 9 + 3] && center > out[3 * 9 + 4]);
        assert!(out[4 * 9 + 3] > 10.0);
        assert!((out[0] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_even_window_and_bad_damping() {
        assert!(cfg(4, 2.0, BetaMode::Damped).validate().is_err());
        assert!(cfg(1, 2.0, BetaMode::Damped).validate().is_err());
        assert!(cfg(3, 0.0, BetaMode::Damped).validate().is_err());
        assert!("bogus".parse::<BetaMode>().is_err());
    }

    #[test]
    fn cube_header_promoted_to_f32() {
        let header = crate::cube::CubeHeader::full_range(6, 5, 2, Dtype::U8);
        let bands = (0..2).map(|i| SpectralBand::from_fn(i, 6, 5, |x, y| ((x + y * i) % 4 * 50) as f32)).collect();
        let cube = HyperCube::new(header, bands).unwrap();
        let out = filter_cube(&cube, &FrostConfig::default()).unwrap();
        assert_eq!(out.header.dtype, Dtype::F32);
        assert_eq!((out.header.width, out.header.height, out.header.bands), (6, 5, 2));
        assert_eq!(out.header.max_value, 255.0);
        assert_eq!(out.bands[1], filter_band(&cube.bands[1], &FrostConfig::default()));
    }
}
