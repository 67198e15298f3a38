//! Hyperspectral cube model and its on-disk formats.
//!
//! A cube is stored as two files: a small text header (`HSC1` magic, then
//! `width=`, `height=`, `bands=`, `dtype=`, `max=` lines in that order) and a raw
//! little-endian band-sequential data file. Labels live in a `band,label,role`
//! CSV next to them.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::DetRng;

pub const HEADER_MAGIC: &str = "HSC1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    U8,
    U16,
    F32,
}

impl Dtype {
    pub fn byte_width(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U16 => 2,
            Dtype::F32 => 4,
        }
    }

    /// Largest value the element type can hold, if it is an integer type.
    fn integer_limit(self) -> Option<f64> {
        match self {
            Dtype::U8 => Some(255.0),
            Dtype::U16 => Some(65535.0),
            Dtype::F32 => None,
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dtype::U8 => "u8",
            Dtype::U16 => "u16",
            Dtype::F32 => "f32",
        })
    }
}

impl FromStr for Dtype {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "u8" => Ok(Dtype::U8),
            "u16" => Ok(Dtype::U16),
            "f32" => Ok(Dtype::F32),
            _ => Err(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CubeHeader {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub dtype: Dtype,
    /// Dynamic-range maximum `r`; PSNR and feature normalization divide by it.
    pub max_value: f64,
}

impl CubeHeader {
    pub fn new(width: usize, height: usize, bands: usize, dtype: Dtype, max_value: f64) -> Self {
        CubeHeader { width, height, bands, dtype, max_value }
    }

    /// Header for an integer dtype, using the full range of the type as `max`.
    pub fn full_range(width: usize, height: usize, bands: usize, dtype: Dtype) -> Self {
        let max_value = dtype.integer_limit().unwrap_or(1.0);
        CubeHeader::new(width, height, bands, dtype, max_value)
    }

    fn check(&self, path: &Path) -> Result<()> {
        let bad = |field: &str| Error::HeaderFieldMissing { path: path.to_path_buf(), field: field.into() };
        if self.width == 0 {
            return Err(bad("width"));
        }
        if self.height == 0 {
            return Err(bad("height"));
        }
        if self.bands == 0 {
            return Err(bad("bands"));
        }
        if !(self.max_value.is_finite() && self.max_value > 0.0) {
            return Err(bad("max"));
        }
        if let Some(limit) = self.dtype.integer_limit() {
            if self.max_value > limit || self.max_value.fract() != 0.0 {
                return Err(bad("max"));
            }
        }
        Ok(())
    }

    pub fn pixels_per_band(&self) -> usize {
        self.width * self.height
    }

    pub fn data_len(&self) -> u64 {
        (self.pixels_per_band() * self.bands * self.dtype.byte_width()) as u64
    }

    pub fn to_text(&self) -> String {
        format!(
            "{HEADER_MAGIC}\nwidth={}\nheight={}\nbands={}\ndtype={}\nmax={}\n",
            self.width, self.height, self.bands, self.dtype, self.max_value
        )
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim_end) != Some(HEADER_MAGIC) {
            return Err(Error::BadMagic { path: path.to_path_buf(), expected: HEADER_MAGIC });
        }
        let mut field = |name: &str| -> Result<String> {
            let missing = || Error::HeaderFieldMissing { path: path.to_path_buf(), field: name.into() };
            let line = lines.next().ok_or_else(missing)?;
            let (key, value) = line.split_once('=').ok_or_else(missing)?;
            if key.trim() != name {
                return Err(missing());
            }
            Ok(value.trim().to_string())
        };
        let invalid = |name: &str| Error::HeaderFieldMissing { path: path.to_path_buf(), field: name.into() };

        let width = field("width")?.parse().map_err(|_| invalid("width"))?;
        let height = field("height")?.parse().map_err(|_| invalid("height"))?;
        let bands = field("bands")?.parse().map_err(|_| invalid("bands"))?;
        let dtype = field("dtype")?.parse().map_err(|_| invalid("dtype"))?;
        let max_value = field("max")?.parse().map_err(|_| invalid("max"))?;
        let header = CubeHeader { width, height, bands, dtype, max_value };
        header.check(path)?;
        Ok(header)
    }
}

/// One spectral band: a `height × width` row-major intensity grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBand {
    pub index: usize,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl SpectralBand {
    pub fn new(index: usize, width: usize, height: usize, pixels: Vec<f32>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel buffer does not match {width}x{height}");
        SpectralBand { index, width, height, pixels }
    }

    pub fn filled(index: usize, width: usize, height: usize, value: f32) -> Self {
        SpectralBand::new(index, width, height, vec![value; width * height])
    }

    pub fn from_fn(index: usize, width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let pixels = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        SpectralBand::new(index, width, height, pixels)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Pixel at signed coordinates, replicating the border outside the grid.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f32 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.get(cx, cy)
    }

    pub fn check_range(&self, max_value: f64, dtype: Dtype) -> Result<()> {
        for (offset, &v) in self.pixels.iter().enumerate() {
            let v = f64::from(v);
            let integral_ok = dtype.integer_limit().is_none() || v.fract() == 0.0;
            if !v.is_finite() || v < 0.0 || v > max_value || !integral_ok {
                return Err(Error::ValueOutOfRange { band: self.index, offset, value: v, max: max_value });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperCube {
    pub header: CubeHeader,
    pub bands: Vec<SpectralBand>,
}

impl HyperCube {
    /// Builds a cube, checking shape consistency and the value range of every band.
    pub fn new(header: CubeHeader, bands: Vec<SpectralBand>) -> Result<Self> {
        header.check(Path::new("<memory>"))?;
        if bands.len() != header.bands {
            return Err(Error::DimMismatch(format!("header declares {} bands, got {}", header.bands, bands.len())));
        }
        for (i, band) in bands.iter().enumerate() {
            if band.index != i || band.width != header.width || band.height != header.height {
                return Err(Error::DimMismatch(format!(
                    "band {i}: index {} size {}x{}, expected {}x{}",
                    band.index, band.width, band.height, header.width, header.height
                )));
            }
            band.check_range(header.max_value, header.dtype)?;
        }
        Ok(HyperCube { header, bands })
    }

    pub fn max_value(&self) -> f64 {
        self.header.max_value
    }
}

/// Header/data/labels paths derived from a common prefix.
#[derive(Clone, Debug)]
pub struct CubePaths {
    pub header: PathBuf,
    pub data: PathBuf,
    pub labels: PathBuf,
}

impl CubePaths {
    pub fn from_prefix(prefix: impl AsRef<Path>) -> Self {
        let p = prefix.as_ref().as_os_str().to_owned();
        let with = |ext: &str| {
            let mut s = p.clone();
            s.push(ext);
            PathBuf::from(s)
        };
        CubePaths { header: with(".hsch"), data: with(".bsq"), labels: with(".labels") }
    }

    /// Paths of the noise-free companion cube written by the synthetic generator.
    pub fn clean_companion(prefix: impl AsRef<Path>) -> Self {
        let mut p = prefix.as_ref().as_os_str().to_owned();
        p.push(".clean");
        CubePaths::from_prefix(PathBuf::from(p))
    }
}

pub fn load_cube(header_path: impl AsRef<Path>, data_path: impl AsRef<Path>) -> Result<HyperCube> {
    let header_path = header_path.as_ref();
    let data_path = data_path.as_ref();
    let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header = CubeHeader::parse(&text, header_path)?;
    let bytes = fs::read(data_path).map_err(|e| Error::io(data_path, e))?;
    if bytes.len() as u64 != header.data_len() {
        return Err(Error::SizeMismatch {
            path: data_path.to_path_buf(),
            expected: header.data_len(),
            found: bytes.len() as u64,
        });
    }

    let n = header.pixels_per_band();
    let elem = header.dtype.byte_width();
    let mut bands = Vec::with_capacity(header.bands);
    for (index, chunk) in bytes.chunks_exact(n * elem).enumerate() {
        let pixels: Vec<f32> = match header.dtype {
            Dtype::U8 => chunk.iter().map(|&b| f32::from(b)).collect(),
            Dtype::U16 => chunk.chunks_exact(2).map(|c| f32::from(u16::from_le_bytes([c[0], c[1]]))).collect(),
            Dtype::F32 => chunk.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
        };
        bands.push(SpectralBand::new(index, header.width, header.height, pixels));
    }
    HyperCube::new(header, bands)
}

pub fn save_cube(cube: &HyperCube, header_path: impl AsRef<Path>, data_path: impl AsRef<Path>) -> Result<()> {
    for band in &cube.bands {
        band.check_range(cube.header.max_value, cube.header.dtype)?;
    }
    let header_path = header_path.as_ref();
    let data_path = data_path.as_ref();

    let mut data = Vec::with_capacity(cube.header.data_len() as usize);
    for band in &cube.bands {
        for &v in &band.pixels {
            match cube.header.dtype {
                Dtype::U8 => data.push(v as u8),
                Dtype::U16 => data.extend_from_slice(&(v as u16).to_le_bytes()),
                Dtype::F32 => data.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    fs::write(header_path, cube.header.to_text()).map_err(|e| Error::io(header_path, e))?;
    fs::write(data_path, data).map_err(|e| Error::io(data_path, e))
}

pub fn load_cube_prefix(prefix: impl AsRef<Path>) -> Result<HyperCube> {
    let paths = CubePaths::from_prefix(prefix);
    load_cube(&paths.header, &paths.data)
}

pub fn save_cube_prefix(cube: &HyperCube, prefix: impl AsRef<Path>) -> Result<()> {
    let paths = CubePaths::from_prefix(prefix);
    save_cube(cube, &paths.header, &paths.data)
}

// ---------------------------------------------------------------------------
// Labels

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Train,
    Test,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Test => "test",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelEntry {
    pub band: usize,
    pub label: usize,
    pub role: Role,
}

/// Ground-truth class per band plus its train/test role.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelFile {
    pub entries: Vec<LabelEntry>,
}

impl LabelFile {
    pub fn label_of(&self, band: usize) -> Option<usize> {
        self.entries.iter().find(|e| e.band == band).map(|e| e.label)
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &LabelEntry> + '_ {
        self.entries.iter().filter(move |e| e.role == role)
    }

    /// Number of classes implied by the largest label.
    pub fn num_classes(&self) -> usize {
        self.entries.iter().map(|e| e.label + 1).max().unwrap_or(0)
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        let mut has_train = vec![false; classes];
        for e in &self.entries {
            if !seen.insert(e.band) {
                return Err(Error::SpecInvalid(format!("duplicate band {} in labels", e.band)));
            }
            if e.label >= classes {
                return Err(Error::SpecInvalid(format!("label {} out of range 0..{classes}", e.label)));
            }
            if e.role == Role::Train {
                has_train[e.label] = true;
            }
        }
        let used: std::collections::BTreeSet<_> = self.entries.iter().map(|e| e.label).collect();
        if let Some(l) = used.into_iter().find(|&l| !has_train[l]) {
            return Err(Error::SpecInvalid(format!("label {l} has no train entry")));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("band,label,role\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.band, e.label, e.role));
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "band,label,role" => {}
            _ => return Err(Error::format(path, 1, "expected header `band,label,role`")),
        }
        let mut entries = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::format(path, i + 1, what.to_string());
            let mut cols = line.split(',').map(str::trim);
            let band = cols.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad band index"))?;
            let label = cols.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad label"))?;
            let role = match cols.next() {
                Some("train") => Role::Train,
                Some("test") => Role::Test,
                _ => return Err(bad("role must be train or test")),
            };
            if cols.next().is_some() {
                return Err(bad("too many columns"));
            }
            entries.push(LabelEntry { band, label, role });
        }
        Ok(LabelFile { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LabelFile::parse(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

// ---------------------------------------------------------------------------
// Synthetic cubes

/// Per-class texture parameters: spatial frequency in cycles per image side,
/// and a length scale in pixels (checker smoothing / blob radius).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TextureParams {
    pub frequency: f64,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub bands_per_class: usize,
    pub width: usize,
    pub height: usize,
    pub noise_amplitude: f64,
    pub seed: u64,
    pub texture: Vec<TextureParams>,
}

/// Dynamic range of generated cubes.
pub const SYNTH_MAX: f64 = 255.0;

impl SynthSpec {
    pub fn new(classes: usize, bands_per_class: usize, width: usize, height: usize, noise: f64, seed: u64) -> Self {
        let texture = (0..classes).map(default_texture).collect();
        SynthSpec { classes, bands_per_class, width, height, noise_amplitude: noise, seed, texture }
    }

    pub fn total_bands(&self) -> usize {
        self.classes * self.bands_per_class
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::SpecInvalid(m));
        if !(2..=8).contains(&self.classes) {
            return bad(format!("classes must be in 2..=8, got {}", self.classes));
        }
        if self.bands_per_class == 0 {
            return bad("bands_per_class must be at least 1".into());
        }
        if self.width == 0 || self.height == 0 {
            return bad("width and height must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.noise_amplitude) {
            return bad(format!("noise amplitude must be in [0, 1), got {}", self.noise_amplitude));
        }
        if self.texture.len() != self.classes {
            return bad(format!("{} texture entries for {} classes", self.texture.len(), self.classes));
        }
        if self.texture.iter().any(|t| !(t.frequency > 0.0 && t.scale > 0.0)) {
            return bad("texture frequency and scale must be positive".into());
        }
        Ok(())
    }
}

/// Families cycle every four classes; later cycles use finer textures.
pub fn default_texture(class: usize) -> TextureParams {
    let cycle = (class / 4) as f64;
    let base = if texture_family(class) < 2 { STRIPE_FREQUENCY } else { 4.0 };
    TextureParams { frequency: base + 2.0 * cycle, scale: 3.0 + cycle }
}

/// Stripe frequency in cycles per side; puts the stripe DoG response on the detected levels.
pub const STRIPE_FREQUENCY: f64 = 5.5;

/// Depth of the along-ridge modulation of stripes.
pub const STRIPE_MODULATION: f64 = 0.5;

/// Upper bound on the saturated fraction of a band's height.
pub const MAX_SATURATION: f64 = 0.9;

/// Texture family of a class: 0 horizontal stripes, 1 vertical stripes,
/// 2 checkerboard, 3 Gaussian blobs.
pub fn texture_family(class: usize) -> usize {
    class % 4
}

struct BandStyle {
    offset: f64,
    amplitude: f64,
    phase_x: f64,
    phase_y: f64,
    blobs: Vec<(f64, f64)>,
    saturated: f64,
}

fn draw_style(rng: &mut DetRng, spec: &SynthSpec, class: usize) -> BandStyle {
    let r = SYNTH_MAX;
    // Peak-to-peak swing 2·amplitude stays within [0.5r, 0.7r].
    let amplitude = rng.uniform(0.25 * r, 0.35 * r);
    let offset = rng.uniform(amplitude, r - amplitude);
    let phase_x = rng.uniform(0.0, 2.0 * PI);
    let phase_y = rng.uniform(0.0, 2.0 * PI);
    let tex = spec.texture[class];
    let count = if texture_family(class) == 3 { (tex.frequency * 2.0).round() as usize } else { 0 };
    let blobs = (0..count)
        .map(|_| (rng.uniform(0.0, spec.width as f64), rng.uniform(0.0, spec.height as f64)))
        .collect();
    let saturated = rng.uniform(0.0, MAX_SATURATION);
    BandStyle { offset, amplitude, phase_x, phase_y, blobs, saturated }
}

/// Texture value in [-1, 1].
fn texture_value(family: usize, tex: TextureParams, style: &BandStyle, x: f64, y: f64, w: f64, h: f64) -> f64 {
    let fx = 2.0 * PI * tex.frequency * x / w + style.phase_x;
    let fy = 2.0 * PI * tex.frequency * y / h + style.phase_y;
    // Stripes are amplitude-modulated along their length so ridges have isolated peaks.
    let along = |t: f64, phase: f64| 1.0 - STRIPE_MODULATION + STRIPE_MODULATION * (4.0 * PI * t + phase).cos();
    match family {
        0 => fy.sin() * along(x / w, style.phase_x),
        1 => fx.sin() * along(y / h, style.phase_y),
        2 => {
            let s = fx.sin() * fy.sin();
            // Soft sign keeps the checker edges a few pixels wide.
            (s * tex.scale).tanh() / tex.scale.tanh()
        }
        _ => {
            let two_s2 = 2.0 * tex.scale * tex.scale;
            let sum: f64 = style
                .blobs
                .iter()
                .map(|&(bx, by)| (-((x - bx).powi(2) + (y - by).powi(2)) / two_s2).exp())
                .sum();
            2.0 * sum.min(1.0) - 1.0
        }
    }
}

/// Clean pixel value: textured band with a saturated strip along the top edge,
/// blended over a 4 px ramp.
fn clean_value(family: usize, tex: TextureParams, style: &BandStyle, x: f64, y: f64, w: f64, h: f64) -> f64 {
    let t = texture_value(family, tex, style, x, y, w, h);
    let v = (style.offset + style.amplitude * t).clamp(0.0, SYNTH_MAX);
    let m = ((y - style.saturated * h) / 4.0).clamp(0.0, 1.0);
    SYNTH_MAX * (1.0 - m) + v * m
}

fn synth_labels(spec: &SynthSpec) -> LabelFile {
    let entries = (0..spec.total_bands())
        .map(|band| LabelEntry {
            band,
            label: band / spec.bands_per_class,
            role: if (band % spec.bands_per_class).is_multiple_of(2) { Role::Train } else { Role::Test },
        })
        .collect();
    LabelFile { entries }
}

/// Clean and speckled cubes from one spec.
#[derive(Clone, Debug)]
pub struct SyntheticCube {
    pub clean: HyperCube,
    pub noisy: HyperCube,
    pub labels: LabelFile,
}

/// Generates the noise-free cube, its speckled counterpart and the label file.
///
/// Bands are grouped by class (`band / bands_per_class`). Within a class the
/// roles alternate train/test starting with train. One PCG32 stream seeded with
/// `spec.seed` first draws every band's style (band order), then the speckle
/// (band-major, row-major).
pub fn generate_pair(spec: &SynthSpec) -> Result<SyntheticCube> {
    spec.validate()?;
    let mut rng = DetRng::new(spec.seed);
    let (w, h) = (spec.width, spec.height);
    let n = spec.total_bands();

    let styles: Vec<BandStyle> = (0..n).map(|b| draw_style(&mut rng, spec, b / spec.bands_per_class)).collect();
    let clean_bands: Vec<SpectralBand> = styles
        .iter()
        .enumerate()
        .map(|(b, style)| {
            let class = b / spec.bands_per_class;
            let family = texture_family(class);
            let tex = spec.texture[class];
            SpectralBand::from_fn(b, w, h, |x, y| {
                clean_value(family, tex, style, x as f64, y as f64, w as f64, h as f64) as f32
            })
        })
        .collect();
    let noisy_bands = clean_bands
        .iter()
        .map(|band| add_speckle_with(band, spec.noise_amplitude, SYNTH_MAX, &mut rng))
        .collect();

    let header = CubeHeader::new(w, h, n, Dtype::F32, SYNTH_MAX);
    Ok(SyntheticCube {
        clean: HyperCube::new(header.clone(), clean_bands)?,
        noisy: HyperCube::new(header, noisy_bands)?,
        labels: synth_labels(spec),
    })
}

/// The speckled cube and its labels.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(HyperCube, LabelFile)> {
    let s = generate_pair(spec)?;
    Ok((s.noisy, s.labels))
}

/// Multiplicative uniform speckle: `clamp(v·(1 + ρ(2u − 1)), 0, max)`, one draw per pixel in row-major order.
pub fn add_speckle(band: &SpectralBand, amplitude: f64, max_value: f64, seed: u64) -> SpectralBand {
    add_speckle_with(band, amplitude, max_value, &mut DetRng::new(seed))
}

pub fn add_speckle_with(band: &SpectralBand, amplitude: f64, max_value: f64, rng: &mut DetRng) -> SpectralBand {
    let pixels = band
        .pixels
        .iter()
        .map(|&v| {
            let u = rng.next_f64();
            (f64::from(v) * (1.0 + amplitude * (2.0 * u - 1.0))).clamp(0.0, max_value) as f32
        })
        .collect();
    SpectralBand::new(band.index, band.width, band.height, pixels)
}

// ---------------------------------------------------------------------------
// Netpbm export

/// Side length of one class cell in exported class maps.
pub const CLASSMAP_CELL: usize = 16;

/// Rescales `[0, max]` to a byte, rounding half up.
fn to_byte(v: f64, max_value: f64) -> u8 {
    (v / max_value * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn export_band(band: &SpectralBand, max_value: f64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = format!("P5\n{} {}\n255\n", band.width, band.height).into_bytes();
    buf.extend(band.pixels.iter().map(|&v| to_byte(f64::from(v), max_value)));
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Palette colour of `class` out of `classes`: HSV(360·k/K, 1, 1) in RGB.
pub fn class_color(class: usize, classes: usize) -> [u8; 3] {
    let hue = 360.0 * class as f64 / classes as f64;
    let sector = hue / 60.0;
    let x = 1.0 - ((sector % 2.0) - 1.0).abs();
    let (r, g, b) = match sector as usize {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [to_byte(r, 1.0), to_byte(g, 1.0), to_byte(b, 1.0)]
}

/// Writes a P6 strip with one `CLASSMAP_CELL`-sized square per band, left to right.
pub fn export_classmap(labels: &[usize], classes: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::SpecInvalid(format!("class {bad} out of range 0..{classes}")));
    }
    let width = labels.len() * CLASSMAP_CELL;
    let mut buf = format!("P6\n{} {}\n255\n", width, CLASSMAP_CELL).into_bytes();
    for _ in 0..CLASSMAP_CELL {
        for &label in labels {
            let rgb = class_color(label, classes);
            for _ in 0..CLASSMAP_CELL {
                buf.write_all(&rgb).expect("write to Vec");
            }
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}
