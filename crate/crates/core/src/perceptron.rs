//! Distance-matching perceptron.
//!
//! A band's feature vector `x(t)` is projected to a hidden state
//! `h(t) = τ₀·x(t) + τ·h(t−1)` (linear, `τ` only in recurrent mode) and then to an
//! embedding `e(t) = τ₁·h(t)`. Gallery references are embedded the same way with a
//! zero previous state. A pair matches when `sigmoid(θ − ‖e_band − e_ref‖) ≥ 0.5`,
//! i.e. when the embedding distance is at most the learned bias `θ`.
//!
//! Training is full-batch gradient descent on the mean squared error between the
//! match score and the pair target (1 for same class, 0 otherwise) over every
//! (train band, gallery reference) pair.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cube::{LabelFile, Role};
use crate::error::{Error, Result};
use crate::rng::DetRng;
use crate::scalespace::{FeatureFile, FEATURE_DIM};

pub const DEFAULT_HIDDEN: usize = 32;
pub const DEFAULT_EMBED: usize = 16;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    /// `selfᵀ · v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a * vr;
            }
        }
        out
    }

    /// `self += scale · a bᵀ`.
    fn add_outer(&mut self, scale: f64, a: &[f64], b: &[f64]) {
        for (r, &ar) in a.iter().enumerate() {
            let s = scale * ar;
            if s == 0.0 {
                continue;
            }
            for (d, &bc) in self.data[r * self.cols..(r + 1) * self.cols].iter_mut().zip(b) {
                *d += s * bc;
            }
        }
    }

    fn axpy(&mut self, scale: f64, other: &Matrix) {
        for (d, o) in self.data.iter_mut().zip(&other.data) {
            *d += scale * o;
        }
    }

    fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerceptronModel {
    /// Input → hidden, `H × F`.
    pub tau0: Matrix,
    /// Hidden → hidden across consecutive bands, `H × H`. Unused unless `recurrent`.
    pub tau: Matrix,
    /// Hidden → embedding, `E × H`.
    pub tau1: Matrix,
    pub theta: f64,
    pub recurrent: bool,
}

impl PerceptronModel {
    /// Uniform `[−1/√F, 1/√F]` init for `τ₀` then `τ₁` (row-major), zero `τ`, `θ = 1`.
    pub fn init(input: usize, hidden: usize, embed: usize, recurrent: bool, seed: u64) -> Self {
        let mut rng = DetRng::new(seed);
        let bound = 1.0 / (input as f64).sqrt();
        let mut draw = |rows, cols| {
            let mut m = Matrix::zeros(rows, cols);
            m.data.iter_mut().for_each(|v| *v = rng.uniform(-bound, bound));
            m
        };
        let tau0 = draw(hidden, input);
        let tau1 = draw(embed, hidden);
        PerceptronModel { tau0, tau: Matrix::zeros(hidden, hidden), tau1, theta: 1.0, recurrent }
    }

    pub fn input_dim(&self) -> usize {
        self.tau0.cols
    }

    pub fn hidden_dim(&self) -> usize {
        self.tau0.rows
    }

    pub fn embed_dim(&self) -> usize {
        self.tau1.rows
    }

    fn check(&self) -> Result<()> {
        let (f, h, e) = (self.input_dim(), self.hidden_dim(), self.embed_dim());
        if self.tau.rows != h || self.tau.cols != h || self.tau1.cols != h || f == 0 || h == 0 || e == 0 {
            return Err(Error::DimMismatch(format!(
                "tau0 {}x{}, tau {}x{}, tau1 {}x{}",
                self.tau0.rows, self.tau0.cols, self.tau.rows, self.tau.cols, self.tau1.rows, self.tau1.cols
            )));
        }
        Ok(())
    }

    /// Embedding of a gallery reference (zero previous state).
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(forward(self, x, None)?.embedding)
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Logistic function, evaluated without overflow for large |v|.
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub prev_hidden: Vec<f64>,
    pub hidden: Vec<f64>,
    pub embedding: Vec<f64>,
}

pub fn forward(model: &PerceptronModel, x: &[f64], h_prev: Option<&[f64]>) -> Result<ForwardTrace> {
    model.check()?;
    if x.len() != model.input_dim() {
        return Err(Error::DimMismatch(format!("input has {} values, model expects {}", x.len(), model.input_dim())));
    }
    let h_dim = model.hidden_dim();
    let prev = match h_prev {
        Some(p) if p.len() != h_dim => {
            return Err(Error::DimMismatch(format!("previous hidden has {} values, expected {h_dim}", p.len())))
        }
        Some(p) => p.to_vec(),
        None => vec![0.0; h_dim],
    };
    let mut hidden = model.tau0.mul_vec(x);
    if model.recurrent {
        for (h, r) in hidden.iter_mut().zip(model.tau.mul_vec(&prev)) {
            *h += r;
        }
    }
    let embedding = model.tau1.mul_vec(&hidden);
    Ok(ForwardTrace { input: x.to_vec(), prev_hidden: prev, hidden, embedding })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchResult {
    pub distance: f64,
    pub score: f64,
    pub matched: bool,
    pub label: usize,
}

/// Scores one embedding pair; `label` is the reference's class.
pub fn match_embeddings(model: &PerceptronModel, e_band: &[f64], e_ref: &[f64], label: usize) -> Result<MatchResult> {
    let distance = euclidean(e_band, e_ref)?;
    let score = sigmoid(model.theta - distance);
    Ok(MatchResult { distance, score, matched: score >= 0.5, label })
}

/// Labelled reference feature vectors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gallery {
    pub entries: Vec<(usize, Vec<f64>)>,
}

pub const GALLERY_MAGIC: &str = "GAL1";

impl Gallery {
    /// Per-class mean of the train-split features (ascending label), or every
    /// train band as its own reference when `per_band` is set.
    pub fn from_train_split(features: &FeatureFile, labels: &LabelFile, per_band: bool) -> Result<Self> {
        let mut by_class: BTreeMap<usize, Vec<&[f64]>> = BTreeMap::new();
        for e in labels.with_role(Role::Train) {
            let f = features
                .get(e.band)
                .ok_or_else(|| Error::DimMismatch(format!("train band {} has no feature vector", e.band)))?;
            by_class.entry(e.label).or_default().push(&f.values);
        }
        if by_class.is_empty() {
            return Err(Error::EmptyGallery);
        }
        let mut entries = Vec::new();
        for (label, vectors) in by_class {
            if per_band {
                entries.extend(vectors.iter().map(|v| (label, v.to_vec())));
            } else {
                let mut mean = vec![0.0; vectors[0].len()];
                for v in &vectors {
                    mean.iter_mut().zip(*v).for_each(|(m, x)| *m += x);
                }
                mean.iter_mut().for_each(|m| *m /= vectors.len() as f64);
                entries.push((label, mean));
            }
        }
        Ok(Gallery { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.first().map_or(FEATURE_DIM, |(_, v)| v.len())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{GALLERY_MAGIC} dim={}\n", self.dim());
        for (label, v) in &self.entries {
            out.push_str(&label.to_string());
            for x in v {
                write!(out, " {x:.16e}").expect("write to String");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let mut parts = header.split_whitespace();
        if parts.next() != Some(GALLERY_MAGIC) {
            return Err(Error::BadMagic { path: path.to_path_buf(), expected: GALLERY_MAGIC });
        }
        let dim = parts
            .next()
            .and_then(|p| p.strip_prefix("dim="))
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| Error::format(path, 1, "expected `GAL1 dim=<int>`"))?;
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let lineno = i + 2;
            let mut fields = line.split_whitespace();
            let label =
                fields.next().and_then(|s| s.parse().ok()).ok_or_else(|| Error::format(path, lineno, "bad label"))?;
            let v = parse_floats(fields, path, lineno)?;
            if v.len() != dim {
                return Err(Error::format(path, lineno, format!("{} values, expected {dim}", v.len())));
            }
            entries.push((label, v));
        }
        Ok(Gallery { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Gallery::parse(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn parse_floats<'a>(fields: impl Iterator<Item = &'a str>, path: &Path, line: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for s in fields {
        let v: f64 = s.parse().map_err(|_| Error::format(path, line, format!("bad number `{s}`")))?;
        if !v.is_finite() {
            return Err(Error::format(path, line, format!("non-finite value `{s}`")));
        }
        out.push(v);
    }
    Ok(out)
}

/// Closest reference under the model; ties go to the lowest label, then the lowest gallery index.
fn closest(model: &PerceptronModel, e_band: &[f64], refs: &[(usize, Vec<f64>)]) -> Result<MatchResult> {
    let mut best: Option<MatchResult> = None;
    for (label, e_ref) in refs {
        let m = match_embeddings(model, e_band, e_ref, *label)?;
        let better = match &best {
            None => true,
            Some(b) => m.distance < b.distance || (m.distance == b.distance && m.label < b.label),
        };
        if better {
            best = Some(m);
        }
    }
    best.ok_or(Error::EmptyGallery)
}

fn embed_gallery(model: &PerceptronModel, gallery: &Gallery) -> Result<Vec<(usize, Vec<f64>)>> {
    gallery.entries.iter().map(|(label, f)| Ok((*label, model.embed(f)?))).collect()
}

/// Classifies one band; returns its label, the winning match and the new hidden state.
pub fn classify_band(
    model: &PerceptronModel,
    features: &[f64],
    gallery: &Gallery,
    h_prev: Option<&[f64]>,
) -> Result<(usize, MatchResult, Vec<f64>)> {
    if gallery.entries.is_empty() {
        return Err(Error::EmptyGallery);
    }
    let refs = embed_gallery(model, gallery)?;
    let trace = forward(model, features, h_prev)?;
    let m = closest(model, &trace.embedding, &refs)?;
    Ok((m.label, m, trace.hidden))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandPrediction {
    pub band: usize,
    pub result: MatchResult,
}

/// Classifies bands in the given order, threading the hidden state from one band to the next.
pub fn classify_cube(model: &PerceptronModel, features: &[(usize, &[f64])], gallery: &Gallery) -> Result<Vec<BandPrediction>> {
    if features.is_empty() {
        return Err(Error::Empty("feature list"));
    }
    if gallery.entries.is_empty() {
        return Err(Error::EmptyGallery);
    }
    let refs = embed_gallery(model, gallery)?;
    let mut h_prev: Option<Vec<f64>> = None;
    let mut out = Vec::with_capacity(features.len());
    for &(band, x) in features {
        let trace = forward(model, x, h_prev.as_deref())?;
        let result = closest(model, &trace.embedding, &refs)?;
        out.push(BandPrediction { band, result });
        h_prev = Some(trace.hidden);
    }
    Ok(out)
}

/// Nearest reference by raw feature distance, no learned projection.
pub fn classify_raw(features: &[f64], gallery: &Gallery) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (label, v) in &gallery.entries {
        let d = euclidean(features, v)?;
        if best.is_none_or(|(bd, bl)| d < bd || (d == bd && *label < bl)) {
            best = Some((d, *label));
        }
    }
    best.map(|(_, l)| l).ok_or(Error::EmptyGallery)
}

/// Squared error of one match score.
pub fn loss(score: f64, target: f64) -> f64 {
    (target - score) * (target - score)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once an epoch improves the mean loss by less than this.
    pub tolerance: f64,
    pub seed: u64,
    pub recurrent: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 3.0, max_epochs: 200, tolerance: 1e-6, seed: 7, recurrent: false }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate must be >= 0, got {}", self.learning_rate)));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Gradient of the mean pair loss with respect to every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub tau0: Matrix,
    pub tau: Matrix,
    pub tau1: Matrix,
    pub theta: f64,
}

/// One labelled training band, in sequence order.
#[derive(Clone, Debug)]
pub struct TrainBand {
    pub features: Vec<f64>,
    pub label: usize,
}

fn check_pairs(bands: &[TrainBand], gallery: &Gallery) -> Result<()> {
    if gallery.entries.is_empty() {
        return Err(Error::EmptyGallery);
    }
    let positive = bands.iter().any(|b| gallery.entries.iter().any(|(l, _)| *l == b.label));
    let negative = bands.iter().any(|b| gallery.entries.iter().any(|(l, _)| *l != b.label));
    if !positive || !negative {
        return Err(Error::NoTrainingPairs(format!(
            "{} train bands against {} references give no {} pair",
            bands.len(),
            gallery.entries.len(),
            if positive { "negative" } else { "positive" }
        )));
    }
    Ok(())
}

/// Mean pair loss and its exact gradient (backpropagated through the hidden
/// recurrence when the model is recurrent).
pub fn loss_and_gradients(model: &PerceptronModel, bands: &[TrainBand], gallery: &Gallery) -> Result<(f64, Gradients)> {
    check_pairs(bands, gallery)?;
    let (h_dim, e_dim) = (model.hidden_dim(), model.embed_dim());

    let mut traces: Vec<ForwardTrace> = Vec::with_capacity(bands.len());
    for b in bands {
        let prev = traces.last().map(|t| t.hidden.clone());
        traces.push(forward(model, &b.features, prev.as_deref())?);
    }
    let ref_hidden: Vec<Vec<f64>> = gallery.entries.iter().map(|(_, r)| model.tau0.mul_vec(r)).collect();
    let ref_embed: Vec<Vec<f64>> = ref_hidden.iter().map(|u| model.tau1.mul_vec(u)).collect();

    let pairs = (bands.len() * gallery.entries.len()) as f64;
    let mut total = 0.0;
    let mut grad = Gradients {
        tau0: Matrix::zeros(h_dim, model.input_dim()),
        tau: Matrix::zeros(h_dim, h_dim),
        tau1: Matrix::zeros(e_dim, h_dim),
        theta: 0.0,
    };
    let mut d_hidden = vec![vec![0.0; h_dim]; bands.len()];
    let mut d_ref_hidden = vec![vec![0.0; h_dim]; gallery.entries.len()];

    for (t, (band, trace)) in bands.iter().zip(&traces).enumerate() {
        for (j, (label, _)) in gallery.entries.iter().enumerate() {
            let diff: Vec<f64> = trace.embedding.iter().zip(&ref_embed[j]).map(|(a, b)| a - b).collect();
            let l = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
            let s = sigmoid(model.theta - l);
            let target = if *label == band.label { 1.0 } else { 0.0 };
            total += loss(s, target);

            // d(mean loss)/dz with z = θ − l.
            let dz = -2.0 * (target - s) * s * (1.0 - s) / pairs;
            grad.theta += dz;
            if l == 0.0 {
                continue;
            }
            let d_diff: Vec<f64> = diff.iter().map(|d| -dz * d / l).collect();
            let hidden_gap: Vec<f64> = trace.hidden.iter().zip(&ref_hidden[j]).map(|(a, b)| a - b).collect();
            grad.tau1.add_outer(1.0, &d_diff, &hidden_gap);
            let back = model.tau1.tr_mul_vec(&d_diff);
            for ((dh, dr), b) in d_hidden[t].iter_mut().zip(d_ref_hidden[j].iter_mut()).zip(&back) {
                *dh += b;
                *dr -= b;
            }
        }
    }
    let mean = total / pairs;

    for (j, (_, r)) in gallery.entries.iter().enumerate() {
        grad.tau0.add_outer(1.0, &d_ref_hidden[j], r);
    }
    let mut carry = vec![0.0; h_dim];
    for t in (0..bands.len()).rev() {
        let adj: Vec<f64> = d_hidden[t].iter().zip(&carry).map(|(a, c)| a + c).collect();
        grad.tau0.add_outer(1.0, &adj, &bands[t].features);
        if model.recurrent {
            grad.tau.add_outer(1.0, &adj, &traces[t].prev_hidden);
            carry = model.tau.tr_mul_vec(&adj);
        }
    }
    Ok((mean, grad))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: PerceptronModel,
    /// Mean pair loss at the start of each epoch.
    pub loss_history: Vec<f64>,
}

/// Full-batch gradient descent from `model`.
pub fn train(model: &PerceptronModel, bands: &[TrainBand], gallery: &Gallery, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model = model.clone();
    model.recurrent = cfg.recurrent;
    let mut history = Vec::new();
    for epoch in 0..cfg.max_epochs {
        let (loss, grad) = loss_and_gradients(&model, bands, gallery)?;
        if !loss.is_finite() {
            return Err(Error::NaNLoss { epoch });
        }
        let improvement = history.last().map(|prev: &f64| prev - loss);
        history.push(loss);
        if improvement.is_some_and(|d| d < cfg.tolerance) {
            break;
        }
        model.tau0.axpy(-cfg.learning_rate, &grad.tau0);
        model.tau1.axpy(-cfg.learning_rate, &grad.tau1);
        model.theta -= cfg.learning_rate * grad.theta;
        if model.recurrent {
            model.tau.axpy(-cfg.learning_rate, &grad.tau);
        }
        if !(model.tau0.is_finite() && model.tau1.is_finite() && model.tau.is_finite() && model.theta.is_finite()) {
            return Err(Error::NaNLoss { epoch });
        }
    }
    Ok(TrainOutcome { model, loss_history: history })
}

/// Train-split bands in ascending band order, paired with their labels.
pub fn train_bands(features: &FeatureFile, labels: &LabelFile) -> Result<Vec<TrainBand>> {
    let mut entries: Vec<_> = labels.with_role(Role::Train).collect();
    entries.sort_by_key(|e| e.band);
    entries
        .into_iter()
        .map(|e| {
            let f = features
                .get(e.band)
                .ok_or_else(|| Error::DimMismatch(format!("train band {} has no feature vector", e.band)))?;
            Ok(TrainBand { features: f.values.clone(), label: e.label })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// `.mlp` files

pub const MODEL_MAGIC: &str = "MLP1";

fn write_matrix(out: &mut String, name: &str, m: &Matrix) {
    out.push_str(name);
    out.push_str(":\n");
    for r in 0..m.rows {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

pub fn model_to_text(model: &PerceptronModel) -> String {
    let mut out = format!(
        "{MODEL_MAGIC} F={} H={} E={} recurrent={} theta={:.16e}\n",
        model.input_dim(),
        model.hidden_dim(),
        model.embed_dim(),
        u8::from(model.recurrent),
        model.theta
    );
    write_matrix(&mut out, "tau0", &model.tau0);
    write_matrix(&mut out, "tau", &model.tau);
    write_matrix(&mut out, "tau1", &model.tau1);
    out
}

pub fn parse_model(text: &str, path: &Path) -> Result<PerceptronModel> {
    let mut lines = text.lines().enumerate().peekable();
    let (_, header) = lines.next().unwrap_or((0, ""));
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MODEL_MAGIC) {
        return Err(Error::BadMagic { path: path.to_path_buf(), expected: MODEL_MAGIC });
    }
    let mut field = |name: &str| -> Result<String> {
        parts
            .next()
            .and_then(|p| p.strip_prefix(name))
            .and_then(|p| p.strip_prefix('='))
            .map(str::to_string)
            .ok_or_else(|| Error::format(path, 1, format!("missing `{name}=`")))
    };
    let bad = |what: &str| Error::format(path, 1, format!("invalid {what}"));
    let f: usize = field("F")?.parse().map_err(|_| bad("F"))?;
    let h: usize = field("H")?.parse().map_err(|_| bad("H"))?;
    let e: usize = field("E")?.parse().map_err(|_| bad("E"))?;
    let recurrent = match field("recurrent")?.as_str() {
        "0" => false,
        "1" => true,
        _ => return Err(bad("recurrent flag")),
    };
    let theta: f64 = field("theta")?.parse().map_err(|_| bad("theta"))?;
    if f == 0 || h == 0 || e == 0 || !theta.is_finite() {
        return Err(bad("dimensions or theta"));
    }

    let mut block = |name: &str, rows: usize, cols: usize| -> Result<Matrix> {
        let (i, label) = lines.next().ok_or_else(|| Error::format(path, 0, format!("missing `{name}:` block")))?;
        if label.trim() != format!("{name}:") {
            return Err(Error::format(path, i + 1, format!("expected `{name}:`")));
        }
        let mut m = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let (i, line) = lines
                .next()
                .ok_or_else(|| Error::format(path, 0, format!("{name}: missing row {r}")))?;
            let values = parse_floats(line.split_whitespace(), path, i + 1)?;
            if values.len() != cols {
                return Err(Error::format(
                    path,
                    i + 1,
                    format!("{name} row {r} has {} values, header says {cols}", values.len()),
                ));
            }
            m.data[r * cols..(r + 1) * cols].copy_from_slice(&values);
        }
        Ok(m)
    };
    let tau0 = block("tau0", h, f)?;
    let tau = block("tau", h, h)?;
    let tau1 = block("tau1", e, h)?;
    if let Some((i, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::format(path, i + 1, format!("unexpected trailing content `{extra}`")));
    }
    Ok(PerceptronModel { tau0, tau, tau1, theta, recurrent })
}

pub fn save_model(model: &PerceptronModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_text(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<PerceptronModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_vec(rng: &mut DetRng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
    }

    #[test]
    fn euclidean_examples() {
        assert_eq!(euclidean(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 5.0);
        assert_eq!(euclidean(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert!(matches!(euclidean(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn euclidean_matches_loop() {
        let mut rng = DetRng::new(3);
        let (a, b) = (random_vec(&mut rng, FEATURE_DIM), random_vec(&mut rng, FEATURE_DIM));
        let mut acc = 0.0;
        for i in 0..FEATURE_DIM {
            acc += (a[i] - b[i]).powi(2);
        }
        assert!((euclidean(&a, &b).unwrap() - acc.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_properties() {
        assert_eq!(sigmoid(0.0), 0.5);
        for v in [-30.0, -2.5, 0.1, 7.0, 499.0] {
            assert!((sigmoid(v) + sigmoid(-v) - 1.0).abs() < 1e-12);
        }
        let tiny = sigmoid(-500.0);
        assert!(tiny > 0.0 && tiny < 1e-200);
        assert_eq!(sigmoid(500.0), 1.0);
    }

    #[test]
    fn forward_identity_and_zero() {
        let mut model = PerceptronModel::init(4, 4, 4, false, 1);
        model.tau0 = Matrix::identity(4);
        let x = [0.5, -1.0, 2.0, 3.0];
        assert_eq!(forward(&model, &x, None).unwrap().hidden, x.to_vec());
        model.tau0 = Matrix::zeros(4, 4);
        let t = forward(&model, &[0.0; 4], None).unwrap();
        assert!(t.hidden.iter().chain(&t.embedding).all(|&v| v == 0.0));
        assert!(matches!(forward(&model, &[0.0; 3], None), Err(Error::DimMismatch(_))));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn forward_matches_chained_loops() {
        let mut model = PerceptronModel::init(7, 5, 3, true, 9);
        let mut rng = DetRng::new(10);
        model.tau.data.iter_mut().for_each(|v| *v = rng.uniform(-0.5, 0.5));
        let x = random_vec(&mut rng, 7);
        let prev = random_vec(&mut rng, 5);
        let mut h = [0.0; 5];
        for i in 0..5 {
            for j in 0..7 {
                h[i] += model.tau0.get(i, j) * x[j];
            }
            for j in 0..5 {
                h[i] += model.tau.get(i, j) * prev[j];
            }
        }
        let mut e = [0.0; 3];
        for i in 0..3 {
            for j in 0..5 {
                e[i] += model.tau1.get(i, j) * h[j];
            }
        }
        let t = forward(&model, &x, Some(&prev)).unwrap();
        for (a, b) in t.embedding.iter().zip(e) {
            assert!((a - b).abs() < 1e-12);
        }
        model.recurrent = false;
        let t = forward(&model, &x, Some(&prev)).unwrap();
        assert_eq!(t.hidden, model.tau0.mul_vec(&x));
    }

    #[test]
    fn match_boundaries() {
        let mut model = PerceptronModel::init(2, 2, 2, false, 0);
        let m = match_embeddings(&model, &[1.0, 1.0], &[1.0, 1.0], 3).unwrap();
        assert_eq!(m.distance, 0.0);
        assert!(m.score > 0.5 && m.matched && m.label == 3);

        model.theta = 5.0;
        let m = match_embeddings(&model, &[3.0, 4.0], &[0.0, 0.0], 0).unwrap();
        assert_eq!(m.score, 0.5);
        assert!(m.matched);

        model.theta = 1.0;
        let m = match_embeddings(&model, &[3.0, 0.0], &[0.0, 0.0], 0).unwrap();
        assert!((m.score - 0.11920292202211755).abs() < 1e-12);
        assert!(!m.matched);
    }

    #[test]
    fn tie_goes_to_lowest_label() {
        let mut model = PerceptronModel::init(2, 2, 2, false, 0);
        model.tau0 = Matrix::identity(2);
        model.tau1 = Matrix::identity(2);
        let gallery = Gallery { entries: vec![(5, vec![1.0, 0.0]), (2, vec![-1.0, 0.0])] };
        let (label, m, _) = classify_band(&model, &[0.0, 0.0], &gallery, None).unwrap();
        assert_eq!((label, m.distance), (2, 1.0));
    }

    #[test]
    fn own_reference_wins_at_zero_distance() {
        let model = PerceptronModel::init(6, 4, 3, false, 2);
        let mut rng = DetRng::new(4);
        let gallery = Gallery { entries: (0..4).map(|l| (l, random_vec(&mut rng, 6))).collect() };
        let (label, m, _) = classify_band(&model, &gallery.entries[2].1, &gallery, None).unwrap();
        assert_eq!((label, m.distance), (2, 0.0));
        assert!(matches!(classify_band(&model, &[0.0; 6], &Gallery::default(), None), Err(Error::EmptyGallery)));
    }

    #[test]
    fn loss_values() {
        assert_eq!(loss(1.0, 1.0), 0.0);
        assert_eq!(loss(0.5, 1.0), 0.25);
        assert_eq!(loss(0.25, 0.0), 0.0625);
    }

    fn numeric_gradient(model: &PerceptronModel, bands: &[TrainBand], gallery: &Gallery) -> Gradients {
        let h = 1e-5;
        let eval = |m: &PerceptronModel| loss_and_gradients(m, bands, gallery).unwrap().0;
        let central = |set: &dyn Fn(&mut PerceptronModel, f64)| {
            let (mut plus, mut minus) = (model.clone(), model.clone());
            set(&mut plus, h);
            set(&mut minus, -h);
            (eval(&plus) - eval(&minus)) / (2.0 * h)
        };
        let mut g = Gradients {
            tau0: Matrix::zeros(model.tau0.rows, model.tau0.cols),
            tau: Matrix::zeros(model.tau.rows, model.tau.cols),
            tau1: Matrix::zeros(model.tau1.rows, model.tau1.cols),
            theta: central(&|m, d| m.theta += d),
        };
        for i in 0..g.tau0.data.len() {
            g.tau0.data[i] = central(&|m, d| m.tau0.data[i] += d);
        }
        for i in 0..g.tau.data.len() {
            g.tau.data[i] = central(&|m, d| m.tau.data[i] += d);
        }
        for i in 0..g.tau1.data.len() {
            g.tau1.data[i] = central(&|m, d| m.tau1.data[i] += d);
        }
        g
    }

    fn relative_error(a: &[f64], b: &[f64]) -> f64 {
        let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }

    fn gradient_fixture(recurrent: bool) -> (PerceptronModel, Vec<TrainBand>, Gallery) {
        let mut rng = DetRng::new(21);
        let mut model = PerceptronModel::init(6, 4, 3, recurrent, 8);
        if recurrent {
            model.tau.data.iter_mut().for_each(|v| *v = rng.uniform(-0.4, 0.4));
        }
        model.theta = 0.8;
        // Five bands against one reference each side: five positive/negative pairs.
        let bands: Vec<TrainBand> =
            (0..5).map(|i| TrainBand { features: random_vec(&mut rng, 6), label: i % 2 }).collect();
        let gallery = Gallery { entries: vec![(0, random_vec(&mut rng, 6)), (1, random_vec(&mut rng, 6))] };
        (model, bands, gallery)
    }

    #[test]
    fn analytic_gradient_matches_finite_difference() {
        for recurrent in [false, true] {
            let (model, bands, gallery) = gradient_fixture(recurrent);
            let (_, g) = loss_and_gradients(&model, &bands, &gallery).unwrap();
            let n = numeric_gradient(&model, &bands, &gallery);
            assert!(relative_error(&g.tau0.data, &n.tau0.data) <= 1e-5, "tau0 recurrent={recurrent}");
            assert!(relative_error(&g.tau1.data, &n.tau1.data) <= 1e-5, "tau1 recurrent={recurrent}");
            assert!(relative_error(&[g.theta], &[n.theta]) <= 1e-5, "theta recurrent={recurrent}");
            if recurrent {
                assert!(relative_error(&g.tau.data, &n.tau.data) <= 1e-5, "tau");
            } else {
                assert!(g.tau.data.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn zero_learning_rate_leaves_model_unchanged() {
        let model = PerceptronModel::init(3, 4, 2, false, 5);
        let bands = vec![
            TrainBand { features: vec![1.0, 0.0, 0.5], label: 0 },
            TrainBand { features: vec![0.0, 1.0, 0.2], label: 1 },
        ];
        let gallery = Gallery { entries: vec![(0, vec![1.0, 0.1, 0.5]), (1, vec![0.1, 1.0, 0.2])] };
        let cfg = TrainConfig { learning_rate: 0.0, max_epochs: 5, tolerance: -1.0, ..Default::default() };
        let out = train(&model, &bands, &gallery, &cfg).unwrap();
        assert_eq!(out.model, model);
        assert_eq!(out.loss_history.len(), 5);
    }

    #[test]
    fn training_needs_both_pair_kinds() {
        let model = PerceptronModel::init(2, 2, 2, false, 5);
        let bands = vec![TrainBand { features: vec![1.0, 0.0], label: 0 }];
        let gallery = Gallery { entries: vec![(0, vec![1.0, 0.0])] };
        let err = train(&model, &bands, &gallery, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NoTrainingPairs(_)));
    }

    #[test]
    fn model_text_round_trip() {
        let mut model = PerceptronModel::init(5, 3, 2, true, 11);
        model.tau.data[4] = -0.123_456_789_012_345_67;
        model.theta = 0.612_345_678_9;
        let text = model_to_text(&model);
        let back = parse_model(&text, Path::new("m")).unwrap();
        assert_eq!(back, model);
        assert_eq!(model_to_text(&back), text);
    }

    #[test]
    fn model_format_errors() {
        let p = Path::new("m");
        assert!(matches!(parse_model("MLP2 F=1 H=1 E=1 recurrent=0 theta=1\n", p), Err(Error::BadMagic { .. })));
        let text = model_to_text(&PerceptronModel::init(3, 2, 2, false, 1));
        let broken = text.replacen("F=3", "F=4", 1);
        match parse_model(&broken, p) {
            Err(Error::Format { line: 3, detail, .. }) => assert!(detail.contains("tau0 row 0"), "{detail}"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
