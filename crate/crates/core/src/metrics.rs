//! Evaluation metrics: PSNR, classification accuracy, misclassification rate
//! and classification time.

use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::cube::{HyperCube, SpectralBand};
use crate::error::{Error, Result};

/// Pixel-wise mean squared error.
pub fn mse(reference: &SpectralBand, candidate: &SpectralBand) -> Result<f64> {
    if (reference.width, reference.height) != (candidate.width, candidate.height) {
        return Err(Error::DimMismatch(format!(
            "{}x{} vs {}x{}",
            reference.width, reference.height, candidate.width, candidate.height
        )));
    }
    let sum: f64 = reference
        .pixels
        .iter()
        .zip(&candidate.pixels)
        .map(|(&a, &b)| {
            let d = f64::from(a) - f64::from(b);
            d * d
        })
        .sum();
    Ok(sum / reference.pixels.len() as f64)
}

/// MSE over every pixel of every band.
pub fn mse_cube(reference: &HyperCube, candidate: &HyperCube) -> Result<f64> {
    if reference.bands.len() != candidate.bands.len() {
        return Err(Error::LengthMismatch { left: reference.bands.len(), right: candidate.bands.len() });
    }
    let per_band = reference.bands.iter().zip(&candidate.bands).map(|(a, b)| mse(a, b)).collect::<Result<Vec<_>>>()?;
    Ok(per_band.iter().sum::<f64>() / per_band.len() as f64)
}

/// `10·log10(r² / mse)` in dB; a perfect reconstruction gives `+∞`.
pub fn psnr(mse: f64, max_value: f64) -> f64 {
    if mse == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (max_value * max_value / mse).log10()
}

fn count_correct(predicted: &[usize], truth: &[usize]) -> Result<usize> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch { left: predicted.len(), right: truth.len() });
    }
    if predicted.is_empty() {
        return Err(Error::Empty("label vectors"));
    }
    Ok(predicted.iter().zip(truth).filter(|(p, t)| p == t).count())
}

/// Percentage of bands classified correctly.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    let correct = count_correct(predicted, truth)?;
    Ok(100.0 * correct as f64 / truth.len() as f64)
}

/// Percentage of bands classified incorrectly (the complement of [`accuracy`]).
pub fn false_positive_rate(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    let correct = count_correct(predicted, truth)?;
    Ok(100.0 * (truth.len() - correct) as f64 / truth.len() as f64)
}

/// Total time for `n_bands` bands at `per_band_ms` each.
pub fn classification_time(n_bands: usize, per_band_ms: f64) -> f64 {
    n_bands as f64 * per_band_ms
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingSummary {
    pub median_ms: f64,
    pub mean_ms: f64,
    pub repetitions: usize,
}

/// Runs `run` `repetitions` times on a monotonic clock and summarizes the wall time.
pub fn time_classify<T>(repetitions: usize, mut run: impl FnMut() -> T) -> (T, TimingSummary) {
    assert!(repetitions >= 1);
    let mut samples = Vec::with_capacity(repetitions);
    let mut last = None;
    for _ in 0..repetitions {
        let start = Instant::now();
        let out = run();
        samples.push(start.elapsed().as_secs_f64() * 1e3);
        last = Some(out);
    }
    let mean_ms = samples.iter().sum::<f64>() / repetitions as f64;
    samples.sort_by(f64::total_cmp);
    let mid = repetitions / 2;
    let median_ms = if repetitions % 2 == 1 { samples[mid] } else { 0.5 * (samples[mid - 1] + samples[mid]) };
    (last.expect("at least one repetition"), TimingSummary { median_ms, mean_ms, repetitions })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub psnr_db: f64,
    pub mse: f64,
    pub accuracy_pct: f64,
    pub fpr_pct: f64,
    pub classification_time_ms: f64,
    pub per_band_time_ms: f64,
    pub n_bands: usize,
}

pub const REPORT_ROWS: [&str; 7] =
    ["psnr_db", "mse", "accuracy_pct", "fpr_pct", "classification_time_ms", "per_band_time_ms", "n_bands"];

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.6}")
    }
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let values = [
            fmt_value(self.psnr_db),
            fmt_value(self.mse),
            fmt_value(self.accuracy_pct),
            fmt_value(self.fpr_pct),
            fmt_value(self.classification_time_ms),
            fmt_value(self.per_band_time_ms),
            self.n_bands.to_string(),
        ];
        let mut out = String::from("metric,value\n");
        for (name, value) in REPORT_ROWS.iter().zip(values) {
            out.push_str(&format!("{name},{value}\n"));
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        if lines.next().map(|(_, l)| l.trim()) != Some("metric,value") {
            return Err(Error::format(path, 1, "expected header `metric,value`"));
        }
        let mut values = [0.0; 7];
        let mut seen = 0;
        for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
            let (name, value) = line.split_once(',').ok_or_else(|| Error::format(path, i + 1, "missing comma"))?;
            if seen >= REPORT_ROWS.len() || name != REPORT_ROWS[seen] {
                return Err(Error::format(path, i + 1, format!("unexpected metric `{name}`")));
            }
            values[seen] = value.parse().map_err(|_| Error::format(path, i + 1, format!("bad value `{value}`")))?;
            seen += 1;
        }
        if seen != REPORT_ROWS.len() {
            return Err(Error::format(path, seen + 2, "missing metric rows"));
        }
        Ok(MetricsReport {
            psnr_db: values[0],
            mse: values[1],
            accuracy_pct: values[2],
            fpr_pct: values[3],
            classification_time_ms: values[4],
            per_band_time_ms: values[5],
            n_bands: values[6] as usize,
        })
    }
}

pub fn write_report(report: &MetricsReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, report.to_csv()).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<MetricsReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MetricsReport::parse(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_basics() {
        let a = SpectralBand::from_fn(0, 4, 3, |x, y| (x + 2 * y) as f32);
        let b = SpectralBand::from_fn(0, 4, 3, |x, y| (x + 2 * y) as f32 + 1.0);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &b).unwrap(), 1.0);
        assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        let c = SpectralBand::filled(0, 3, 4, 0.0);
        assert!(matches!(mse(&a, &c), Err(Error::DimMismatch(_))));
    }

    #[test]
    fn mse_matches_double_loop() {
        let a = SpectralBand::from_fn(0, 4, 4, |x, y| ((x * 37 + y * 91) % 17) as f32 * 1.25);
        let b = SpectralBand::from_fn(0, 4, 4, |x, y| ((x * 11 + y * 5) % 13) as f32 * 0.75);
        let mut acc = 0.0;
        for y in 0..4 {
            for x in 0..4 {
                let d = f64::from(a.get(x, y)) - f64::from(b.get(x, y));
                acc += d * d;
            }
        }
        assert!((mse(&a, &b).unwrap() - acc / 16.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_values() {
        assert_eq!(psnr(255.0 * 255.0, 255.0), 0.0);
        assert_eq!(psnr(0.0, 255.0), f64::INFINITY);
        assert!((psnr(1.0, 255.0) - 48.1308).abs() < 1e-3);
        assert!(psnr(2.0, 255.0) < psnr(1.0, 255.0));
    }

    #[test]
    fn worked_accuracy_example() {
        let truth = vec![0, 1, 2, 3, 0, 1, 2, 3, 0, 1];
        let mut pred = truth.clone();
        pred[3] = 0;
        pred[7] = 1;
        assert_eq!(accuracy(&pred, &truth).unwrap(), 80.0);
        assert_eq!(false_positive_rate(&pred, &truth).unwrap(), 20.0);
        assert_eq!(accuracy(&truth, &truth).unwrap(), 100.0);
        assert_eq!(false_positive_rate(&truth, &truth).unwrap(), 0.0);
        let wrong: Vec<usize> = truth.iter().map(|t| t + 1).collect();
        assert_eq!(accuracy(&wrong, &truth).unwrap(), 0.0);
    }

    #[test]
    fn accuracy_errors() {
        assert!(matches!(accuracy(&[], &[]), Err(Error::Empty(_))));
        assert!(matches!(false_positive_rate(&[1], &[1, 2]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn classification_time_is_product() {
        assert_eq!(classification_time(10, 1.5), 15.0);
        assert_eq!(classification_time(1, 2.25), 2.25);
    }

    #[test]
    fn timing_harness_reports_median() {
        let mut calls = 0;
        let (out, t) = time_classify(5, || {
            calls += 1;
            calls
        });
        assert_eq!((out, calls, t.repetitions), (5, 5, 5));
        assert!(t.median_ms >= 0.0 && t.mean_ms >= 0.0);
    }

    #[test]
    fn report_layout_and_parse_back() {
        let report = MetricsReport {
            psnr_db: f64::INFINITY,
            mse: 0.0,
            accuracy_pct: 80.0,
            fpr_pct: 20.0,
            classification_time_ms: 15.0,
            per_band_time_ms: 1.5,
            n_bands: 10,
        };
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 8);
        assert_eq!(lines[1], "psnr_db,inf");
        assert_eq!(lines[3], "accuracy_pct,80.000000");
        assert_eq!(lines[7], "n_bands,10");
        assert_eq!(MetricsReport::parse(&csv, Path::new("m")).unwrap(), report);
    }

    #[test]
    fn report_parse_rounds_to_six_decimals() {
        let report = MetricsReport {
            psnr_db: 31.123456789,
            mse: 50.0000004,
            accuracy_pct: 87.5,
            fpr_pct: 12.5,
            classification_time_ms: 0.1234567,
            per_band_time_ms: 0.0061728,
            n_bands: 20,
        };
        let back = MetricsReport::parse(&report.to_csv(), Path::new("m")).unwrap();
        assert_eq!(back.psnr_db, 31.123457);
        assert_eq!(back.mse, 50.0);
        assert_eq!(back.accuracy_pct, 87.5);
        assert_eq!(back.n_bands, 20);
        assert!(MetricsReport::parse("metric,value\nmse,1\n", Path::new("m")).is_err());
    }
}
