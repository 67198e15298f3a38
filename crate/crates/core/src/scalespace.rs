//! Gaussian scale space, difference-of-Gaussian keypoints and the per-band
//! feature vector.
//!
//! Intensities are divided by the cube's `max` before any scale-space work, so
//! the contrast threshold is independent of the storage type.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::cube::{HyperCube, SpectralBand};
use crate::error::{Error, Result};

/// Smallest octave side accepted by [`build_scale_space`].
pub const MIN_OCTAVE_SIDE: usize = 16;
pub const DESCRIPTOR_LEN: usize = 128;
/// Length of [`BandFeatureVector`]: descriptor mean, keypoint density, mean, stddev, 8-bin histogram.
pub const FEATURE_DIM: usize = 139;
pub const HISTOGRAM_BINS: usize = 8;

const PATCH: isize = 16;
const CELL: isize = 4;
const ORIENTATION_BINS: usize = 8;
const PATCH_SIGMA: f64 = 8.0;
const DESCRIPTOR_CLIP: f64 = 0.2;

/// Row-major `f64` image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height);
        Image { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Image::new(width, height, data)
    }

    /// Band intensities divided by `max_value`.
    pub fn normalized(band: &SpectralBand, max_value: f64) -> Self {
        let data = band.pixels.iter().map(|&v| f64::from(v) / max_value).collect();
        Image::new(band.width, band.height, data)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.get(cx, cy)
    }

    /// Keeps every second pixel in both directions.
    pub fn downsample(&self) -> Image {
        let w = self.width.div_ceil(2);
        let h = self.height.div_ceil(2);
        Image::from_fn(w, h, |x, y| self.get(2 * x, 2 * y))
    }

    pub fn sub(&self, other: &Image) -> Image {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Image::new(self.width, self.height, data)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleSpaceConfig {
    pub octaves: usize,
    pub scales_per_octave: usize,
    pub base_sigma: f64,
    /// Minimum |DoG| of a keypoint, on intensities normalized to [0, 1].
    pub contrast_threshold: f64,
}

impl Default for ScaleSpaceConfig {
    fn default() -> Self {
        ScaleSpaceConfig { octaves: 3, scales_per_octave: 3, base_sigma: 1.6, contrast_threshold: 0.03 }
    }
}

impl ScaleSpaceConfig {
    /// Ratio between adjacent blur levels, `2^(1/s)`.
    pub fn scale_factor(&self) -> f64 {
        2f64.powf(1.0 / self.scales_per_octave as f64)
    }

    /// Blur of level `i` relative to its octave's sampling grid.
    pub fn level_sigma(&self, level: usize) -> f64 {
        self.base_sigma * self.scale_factor().powi(level as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.octaves == 0 || self.scales_per_octave == 0 {
            return Err(Error::InvalidConfig("octaves and scales per octave must be at least 1".into()));
        }
        if !(self.base_sigma.is_finite() && self.base_sigma > 0.0) {
            return Err(Error::InvalidSigma(self.base_sigma));
        }
        if self.contrast_threshold.is_nan() || self.contrast_threshold < 0.0 {
            return Err(Error::InvalidConfig(format!("contrast threshold must be >= 0, got {}", self.contrast_threshold)));
        }
        Ok(())
    }
}

/// Discrete Gaussian of radius `ceil(3σ)`, normalized to unit sum. Index `radius` is the centre.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidSigma(sigma));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let two_s2 = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (-radius..=radius).map(|x| (-((x * x) as f64) / two_s2).exp()).collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    Ok(k)
}

/// Separable Gaussian blur (rows, then columns) with clamp-to-edge borders.
pub fn convolve(img: &Image, sigma: f64) -> Result<Image> {
    let kernel = gaussian_kernel(sigma)?;
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (img.width, img.height);

    let rows = Image::from_fn(w, h, |x, y| {
        kernel.iter().enumerate().map(|(i, k)| k * img.get_clamped(x as isize + i as isize - r, y as isize)).sum()
    });
    Ok(Image::from_fn(w, h, |x, y| {
        kernel.iter().enumerate().map(|(i, k)| k * rows.get_clamped(x as isize, y as isize + i as isize - r)).sum()
    }))
}

#[derive(Clone, Debug)]
pub struct Octave {
    /// `s + 2` blur levels.
    pub blurred: Vec<Image>,
    /// `s + 1` differences, `dog[i] = blurred[i + 1] - blurred[i]`.
    pub dog: Vec<Image>,
}

#[derive(Clone, Debug)]
pub struct ScaleSpace {
    pub octaves: Vec<Octave>,
}

pub fn build_scale_space(img: &Image, cfg: &ScaleSpaceConfig) -> Result<ScaleSpace> {
    cfg.validate()?;
    let (mut w, mut h) = (img.width, img.height);
    for octave in 0..cfg.octaves {
        if w < MIN_OCTAVE_SIDE || h < MIN_OCTAVE_SIDE {
            return Err(Error::OctaveTooSmall { octave, width: w, height: h });
        }
        w = w.div_ceil(2);
        h = h.div_ceil(2);
    }

    let s = cfg.scales_per_octave;
    let mut octaves: Vec<Octave> = Vec::with_capacity(cfg.octaves);
    for o in 0..cfg.octaves {
        let base = match octaves.last() {
            None => convolve(img, cfg.base_sigma)?,
            // Level s of the previous octave carries twice the base blur.
            Some(prev) => prev.blurred[s].downsample(),
        };
        let mut blurred = Vec::with_capacity(s + 2);
        blurred.push(base);
        for i in 1..s + 2 {
            let (prev, cur) = (cfg.level_sigma(i - 1), cfg.level_sigma(i));
            let inc = (cur * cur - prev * prev).sqrt();
            let next = convolve(&blurred[i - 1], inc)?;
            blurred.push(next);
        }
        let dog = blurred.windows(2).map(|pair| pair[1].sub(&pair[0])).collect();
        debug_assert!(o == octaves.len());
        octaves.push(Octave { blurred, dog });
    }
    Ok(ScaleSpace { octaves })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Keypoint {
    /// Column in the original band frame.
    pub x: usize,
    /// Row in the original band frame.
    pub y: usize,
    pub octave: usize,
    /// Index into the octave's DoG stack (and its blurred levels).
    pub level: usize,
    pub sigma: f64,
    pub dog_value: f64,
}

impl Keypoint {
    /// Position on its octave's grid.
    pub fn octave_xy(&self) -> (usize, usize) {
        (self.x >> self.octave, self.y >> self.octave)
    }
}

fn is_extremum(below: &Image, here: &Image, above: &Image, x: usize, y: usize) -> bool {
    let v = here.get(x, y);
    let mut is_max = true;
    let mut is_min = true;
    for (li, layer) in [below, here, above].into_iter().enumerate() {
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if li == 1 && nx == x && ny == y {
                    continue;
                }
                let n = layer.get(nx, ny);
                is_max &= v > n;
                is_min &= v < n;
                if !is_max && !is_min {
                    return false;
                }
            }
        }
    }
    true
}

/// Strict 26-neighbour DoG extrema with `|DoG| >= contrast_threshold`,
/// sorted by (octave, level, y, x).
pub fn detect_extrema(ss: &ScaleSpace, cfg: &ScaleSpaceConfig) -> Vec<Keypoint> {
    let mut keypoints = Vec::new();
    for (o, octave) in ss.octaves.iter().enumerate() {
        for level in 1..octave.dog.len().saturating_sub(1) {
            let (below, here, above) = (&octave.dog[level - 1], &octave.dog[level], &octave.dog[level + 1]);
            for y in 1..here.height.saturating_sub(1) {
                for x in 1..here.width.saturating_sub(1) {
                    let v = here.get(x, y);
                    if v.abs() >= cfg.contrast_threshold && is_extremum(below, here, above, x, y) {
                        keypoints.push(Keypoint {
                            x: x << o,
                            y: y << o,
                            octave: o,
                            level,
                            sigma: cfg.level_sigma(level) * (1u64 << o) as f64,
                            dog_value: v,
                        });
                    }
                }
            }
        }
    }
    keypoints
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
    /// Radians in (-π, π]; zero where the gradient vanishes.
    pub orientation: Vec<f64>,
}

impl GradientField {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.magnitude[i], self.orientation[i])
    }
}

/// Central-difference gradient magnitude and orientation, clamp-to-edge.
pub fn gradients(img: &Image) -> GradientField {
    let n = img.width * img.height;
    let mut magnitude = Vec::with_capacity(n);
    let mut orientation = Vec::with_capacity(n);
    for y in 0..img.height as isize {
        for x in 0..img.width as isize {
            let dx = img.get_clamped(x + 1, y) - img.get_clamped(x - 1, y);
            let dy = img.get_clamped(x, y + 1) - img.get_clamped(x, y - 1);
            magnitude.push((dx * dx + dy * dy).sqrt());
            let mut theta = if dx == 0.0 && dy == 0.0 { 0.0 } else { dy.atan2(dx) };
            if theta <= -std::f64::consts::PI {
                theta = std::f64::consts::PI;
            }
            orientation.push(theta);
        }
    }
    GradientField { width: img.width, height: img.height, magnitude, orientation }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f64>,
}

impl Descriptor {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn orientation_bin(theta: f64) -> usize {
    let b = (ORIENTATION_BINS as f64 * (theta + std::f64::consts::PI) / (2.0 * std::f64::consts::PI)).floor();
    (b as usize) % ORIENTATION_BINS
}

/// Gaussian-weighted 4×4×8 orientation histogram, L2-normalized then clipped at 0.2.
/// Returns the clipped vector before its final renormalization.
fn clipped_histogram(cx: usize, cy: usize, field: &GradientField) -> Vec<f64> {
    let mut hist = vec![0.0; DESCRIPTOR_LEN];
    let half = PATCH / 2;
    let cells = (PATCH / CELL) as usize;
    for dy in -half..half {
        for dx in -half..half {
            let sx = (cx as isize + dx).clamp(0, field.width as isize - 1) as usize;
            let sy = (cy as isize + dy).clamp(0, field.height as isize - 1) as usize;
            let (m, theta) = field.at(sx, sy);
            if m == 0.0 {
                continue;
            }
            let (fx, fy) = (dx as f64 + 0.5, dy as f64 + 0.5);
            let weight = (-(fx * fx + fy * fy) / (2.0 * PATCH_SIGMA * PATCH_SIGMA)).exp();
            let cell = ((dy + half) / CELL) as usize * cells + ((dx + half) / CELL) as usize;
            hist[cell * ORIENTATION_BINS + orientation_bin(theta)] += m * weight;
        }
    }
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return hist;
    }
    hist.iter_mut().for_each(|v| *v = (*v / norm).min(DESCRIPTOR_CLIP));
    hist
}

/// Descriptor of `kp` from the gradient field of its octave level.
pub fn build_descriptor(kp: &Keypoint, field: &GradientField) -> Descriptor {
    let (cx, cy) = kp.octave_xy();
    let mut values = clipped_histogram(cx, cy, field);
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    Descriptor { values }
}

/// Fixed-length band summary. `.fvec` files store it at `f32` precision.
#[derive(Clone, Debug, PartialEq)]
pub struct BandFeatureVector {
    pub values: Vec<f64>,
}

impl BandFeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        assert_eq!(values.len(), FEATURE_DIM);
        BandFeatureVector { values }
    }

    pub fn descriptor_mean(&self) -> &[f64] {
        &self.values[..DESCRIPTOR_LEN]
    }

    pub fn keypoint_density(&self) -> f64 {
        self.values[DESCRIPTOR_LEN]
    }

    pub fn intensity_mean(&self) -> f64 {
        self.values[DESCRIPTOR_LEN + 1]
    }

    pub fn intensity_stddev(&self) -> f64 {
        self.values[DESCRIPTOR_LEN + 2]
    }

    pub fn histogram(&self) -> &[f64] {
        &self.values[DESCRIPTOR_LEN + 3..]
    }
}

/// Keypoints and their descriptors for one band.
pub fn keypoints_and_descriptors(img: &Image, cfg: &ScaleSpaceConfig) -> Result<(Vec<Keypoint>, Vec<Descriptor>)> {
    let ss = build_scale_space(img, cfg)?;
    let keypoints = detect_extrema(&ss, cfg);
    let mut fields: Vec<Vec<Option<GradientField>>> =
        ss.octaves.iter().map(|o| vec![None; o.blurred.len()]).collect();
    let descriptors = keypoints
        .iter()
        .map(|kp| {
            let field = fields[kp.octave][kp.level]
                .get_or_insert_with(|| gradients(&ss.octaves[kp.octave].blurred[kp.level]));
            build_descriptor(kp, field)
        })
        .collect();
    Ok((keypoints, descriptors))
}

pub fn extract_band_features(band: &SpectralBand, max_value: f64, cfg: &ScaleSpaceConfig) -> Result<BandFeatureVector> {
    let img = Image::normalized(band, max_value);
    let (keypoints, descriptors) = keypoints_and_descriptors(&img, cfg)?;

    let mut values = vec![0.0; FEATURE_DIM];
    if !descriptors.is_empty() {
        for d in &descriptors {
            for (acc, v) in values.iter_mut().zip(&d.values) {
                *acc += v;
            }
        }
        let n = descriptors.len() as f64;
        values[..DESCRIPTOR_LEN].iter_mut().for_each(|v| *v /= n);
    }
    let pixels = img.data.len() as f64;
    values[DESCRIPTOR_LEN] = keypoints.len() as f64 / pixels;

    let mean = img.data.iter().sum::<f64>() / pixels;
    let var = img.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / pixels;
    values[DESCRIPTOR_LEN + 1] = mean;
    values[DESCRIPTOR_LEN + 2] = var.sqrt();

    let mut hist = [0usize; HISTOGRAM_BINS];
    for &v in &img.data {
        let bin = ((v * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
        hist[bin] += 1;
    }
    for (slot, count) in values[DESCRIPTOR_LEN + 3..].iter_mut().zip(hist) {
        *slot = count as f64 / pixels;
    }

    Ok(BandFeatureVector::new(values))
}

/// Per-band features for a whole cube, computed in parallel on the current rayon pool.
pub fn extract_cube_features(cube: &HyperCube, cfg: &ScaleSpaceConfig) -> Result<FeatureFile> {
    let max = cube.max_value();
    let entries = cube
        .bands
        .par_iter()
        .map(|b| extract_band_features(b, max, cfg).map(|f| (b.index, f)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureFile { entries })
}

// ---------------------------------------------------------------------------
// `.fvec` files

pub const FVEC_MAGIC: &str = "FVEC1";

/// Band index and feature vector per line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureFile {
    pub entries: Vec<(usize, BandFeatureVector)>,
}

impl FeatureFile {
    pub fn get(&self, band: usize) -> Option<&BandFeatureVector> {
        self.entries.iter().find(|(b, _)| *b == band).map(|(_, f)| f)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{FVEC_MAGIC} dim={FEATURE_DIM} bands={}\n", self.entries.len());
        for (band, f) in &self.entries {
            out.push_str(&band.to_string());
            for &v in &f.values {
                out.push_str(&format!(" {:.8e}", v as f32));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let mut parts = header.split_whitespace();
        if parts.next() != Some(FVEC_MAGIC) {
            return Err(Error::BadMagic { path: path.to_path_buf(), expected: FVEC_MAGIC });
        }
        let dim = parts.next().and_then(|p| p.strip_prefix("dim=")).and_then(|v| v.parse::<usize>().ok());
        let bands = parts.next().and_then(|p| p.strip_prefix("bands=")).and_then(|v| v.parse::<usize>().ok());
        let (Some(dim), Some(bands)) = (dim, bands) else {
            return Err(Error::format(path, 1, "expected `FVEC1 dim=<int> bands=<int>`"));
        };
        if dim != FEATURE_DIM {
            return Err(Error::format(path, 1, format!("dim={dim}, this build reads dim={FEATURE_DIM}")));
        }
        let mut entries = Vec::with_capacity(bands);
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let lineno = i + 2;
            let mut fields = line.split_whitespace();
            let band = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::format(path, lineno, "bad band index"))?;
            let values = fields
                .map(|s| s.parse::<f32>().map(f64::from))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format(path, lineno, e.to_string()))?;
            if values.len() != FEATURE_DIM {
                return Err(Error::format(path, lineno, format!("{} values, expected {FEATURE_DIM}", values.len())));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(path, lineno, "non-finite feature value"));
            }
            entries.push((band, BandFeatureVector::new(values)));
        }
        if entries.len() != bands {
            return Err(Error::format(path, 1, format!("header declares {bands} bands, found {}", entries.len())));
        }
        Ok(FeatureFile { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FeatureFile::parse(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
