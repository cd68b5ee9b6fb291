//! Depth metrics, aggregation and report output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pfm;
use crate::projection::RangeMask;
use crate::raster::{DepthMap, Raster};
use crate::scalar::Real;

pub const REPORT_SCHEMA: u32 = 1;
const DELTA_BASE: f64 = 1.25;
const DELTA_BAR_BASE: f64 = 1.025;

/// Raw per-pixel sums, kept so reports can be pooled exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSums {
    pub n: usize,
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub sq_err: f64,
    pub n_log: usize,
    pub sq_log: f64,
    pub delta: [usize; 3],
    pub delta_bar: [usize; 3],
}

impl MetricSums {
    fn add_pixel(&mut self, d: f64, r: f64) {
        let e = d - r;
        self.n += 1;
        self.abs_rel += e.abs() / r;
        self.sq_rel += e * e / r;
        self.sq_err += e * e;
        let ratio = if d > 0.0 {
            self.n_log += 1;
            let l = d.ln() - r.ln();
            self.sq_log += l * l;
            (r / d).max(d / r)
        } else {
            f64::INFINITY
        };
        for t in 0..3 {
            let p = (t + 1) as i32;
            self.delta[t] += (ratio < DELTA_BASE.powi(p)) as usize;
            self.delta_bar[t] += (ratio < DELTA_BAR_BASE.powi(p)) as usize;
        }
    }

    fn merge(&mut self, o: &MetricSums) {
        self.n += o.n;
        self.abs_rel += o.abs_rel;
        self.sq_rel += o.sq_rel;
        self.sq_err += o.sq_err;
        self.n_log += o.n_log;
        self.sq_log += o.sq_log;
        for t in 0..3 {
            self.delta[t] += o.delta[t];
            self.delta_bar[t] += o.delta_bar[t];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub log_rmse: f64,
    pub delta: [f64; 3],
    pub delta_bar: [f64; 3],
    pub n_pixels: usize,
    pub n_frames: usize,
    pub n_failed_frames: usize,
    /// Reference-valid pixels the prediction left invalid.
    pub n_failed_pixels: usize,
    /// Pixels left out of LogRMSE because the prediction was not positive.
    pub n_log_excluded: usize,
    pub sums: MetricSums,
}

impl MetricsReport {
    fn from_sums(sums: MetricSums, n_frames: usize, n_failed_frames: usize, n_failed_pixels: usize) -> Self {
        let n = sums.n as f64;
        let frac = |c: [usize; 3]| c.map(|x| x as f64 / n);
        Self {
            abs_rel: sums.abs_rel / n,
            sq_rel: sums.sq_rel / n,
            rmse: (sums.sq_err / n).sqrt(),
            log_rmse: (sums.sq_log / sums.n_log as f64).sqrt(),
            delta: frac(sums.delta),
            delta_bar: frac(sums.delta_bar),
            n_pixels: sums.n,
            n_frames,
            n_failed_frames,
            n_failed_pixels,
            n_log_excluded: sums.n - sums.n_log,
            sums,
        }
    }

    /// Values in table order: AbsRel SqRel RMSE LogRMSE δ1 δ2 δ3 δ̄1 δ̄2 δ̄3.
    pub fn table_row(&self) -> [f64; 10] {
        [
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.log_rmse,
            self.delta[0],
            self.delta[1],
            self.delta[2],
            self.delta_bar[0],
            self.delta_bar[1],
            self.delta_bar[2],
        ]
    }
}

pub const TABLE_HEADER: [&str; 10] = ["AbsRel", "SqRel", "RMSE", "LogRMSE", "δ1", "δ2", "δ3", "δ̄1", "δ̄2", "δ̄3"];

/// Metrics of one frame over reference pixels inside `range`.
///
/// Prediction pixels that are non-finite where the reference is valid are
/// counted as failed and left out of every mean.
pub fn compute_metrics<T: Real>(pred: &DepthMap<T>, reference: &DepthMap<T>, range: &RangeMask<f64>) -> Result<MetricsReport> {
    pred.ensure_dims(reference.dims())?;
    let mut sums = MetricSums::default();
    let mut failed = 0;
    for (d, r) in pred.data().iter().zip(reference.data()) {
        let (d, r) = (d.as_f64(), r.as_f64());
        if !(r.is_finite() && range.contains(r)) {
            continue;
        }
        if d.is_finite() {
            sums.add_pixel(d, r);
        } else {
            failed += 1;
        }
    }
    if sums.n == 0 {
        return Err(Error::EmptyEvaluation);
    }
    Ok(MetricsReport::from_sums(sums, 1, 0, failed))
}

/// Pixel-pooled aggregate: every evaluated pixel weighs the same.
/// `failed_frames` are frames with no usable prediction.
pub fn aggregate(reports: &[MetricsReport], failed_frames: usize) -> Result<MetricsReport> {
    if reports.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut sums = MetricSums::default();
    for r in reports {
        sums.merge(&r.sums);
    }
    let frames = reports.iter().map(|r| r.n_frames).sum::<usize>();
    let failed_pixels = reports.iter().map(|r| r.n_failed_pixels).sum();
    let failed = reports.iter().map(|r| r.n_failed_frames).sum::<usize>() + failed_frames;
    Ok(MetricsReport::from_sums(sums, frames + failed_frames, failed, failed_pixels))
}

/// Frame-averaged aggregate: plain mean of the per-frame metrics.
pub fn frame_average(reports: &[MetricsReport], failed_frames: usize) -> Result<MetricsReport> {
    let mut out = aggregate(reports, failed_frames)?;
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    out.abs_rel = mean(&|r| r.abs_rel);
    out.sq_rel = mean(&|r| r.sq_rel);
    out.rmse = mean(&|r| r.rmse);
    out.log_rmse = mean(&|r| r.log_rmse);
    for t in 0..3 {
        out.delta[t] = mean(&|r| r.delta[t]);
        out.delta_bar[t] = mean(&|r| r.delta_bar[t]);
    }
    Ok(out)
}

/// Per-pixel `|D − D*| / D*`; invalid where either map is.
pub fn abs_rel_error_map<T: Real>(pred: &DepthMap<T>, reference: &DepthMap<T>) -> Result<Raster<f64>> {
    pred.ensure_dims(reference.dims())?;
    let data = pred
        .data()
        .iter()
        .zip(reference.data())
        .map(|(d, r)| {
            let (d, r) = (d.as_f64(), r.as_f64());
            if d.is_finite() && r.is_finite() && r > 0.0 {
                (d - r).abs() / r
            } else {
                f64::NAN
            }
        })
        .collect();
    Raster::from_vec(pred.width(), pred.height(), data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame_id: String,
    pub metrics: Option<MetricsReport>,
    /// Error kind when the frame could not be evaluated.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    pub range_m: [f64; 2],
    /// Which aggregate the headline numbers are.
    pub aggregation: String,
    pub pooled: MetricsReport,
    pub frame_averaged: MetricsReport,
    pub frames: Vec<FrameResult>,
}

impl EvalReport {
    pub fn build(frames: Vec<FrameResult>, range: &RangeMask<f64>) -> Result<Self> {
        let ok: Vec<MetricsReport> = frames.iter().filter_map(|f| f.metrics.clone()).collect();
        let failed = frames.len() - ok.len();
        Ok(Self {
            schema: REPORT_SCHEMA,
            range_m: [range.min, range.max],
            aggregation: "pixel-pooled".into(),
            pooled: aggregate(&ok, failed)?,
            frame_averaged: frame_average(&ok, failed)?,
            frames,
        })
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "| aggregation | {} |", TABLE_HEADER.join(" | "));
        let _ = writeln!(s, "|---{}|", "|---".repeat(TABLE_HEADER.len()));
        for (name, r) in [("pixel-pooled", &self.pooled), ("frame-averaged", &self.frame_averaged)] {
            let cells: Vec<String> = r.table_row().iter().map(|v| format!("{v:.4}")).collect();
            let _ = writeln!(s, "| {name} | {} |", cells.join(" | "));
        }
        let _ = writeln!(
            s,
            "\nrange {}–{} m, {} frames ({} failed), {} pixels",
            self.range_m[0], self.range_m[1], self.pooled.n_frames, self.pooled.n_failed_frames, self.pooled.n_pixels
        );
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Markdown,
}

pub fn emit_report(report: &EvalReport, path: &Path, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).map_err(|source| Error::Json { path: path.into(), source })? + "\n"
        }
        ReportFormat::Markdown => report.to_markdown(),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write `<dir>/<frame>_abs_rel.pfm` and a grayscale PNG (0 → black,
/// `png_max` and above → white, invalid → black).
pub fn write_error_map(dir: &Path, frame_id: &str, map: &Raster<f64>, png_max: f64) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    pfm::save(dir.join(format!("{frame_id}_abs_rel.pfm")), map)?;
    let gray: Vec<u8> = map
        .data()
        .iter()
        .map(|&e| if e.is_finite() { (e / png_max).clamp(0.0, 1.0) * 255.0 } else { 0.0 }.round() as u8)
        .collect();
    save_gray_png(&dir.join(format!("{frame_id}_abs_rel.png")), map.width(), map.height(), &gray)
}

/// 8-bit grayscale PNG.
pub fn save_gray_png(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
    let mut w = enc.write_header().map_err(to_io)?;
    w.write_image_data(pixels).map_err(to_io)?;
    w.finish().map_err(to_io)
}
