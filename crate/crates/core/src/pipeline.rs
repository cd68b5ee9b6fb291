//! Batch orchestration: per frame, segment the ground, project the GDEM,
//! drop occluded and masked anchors, fit scale and shift, write the result.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::camera::{read_pose_records, Intrinsics, Pose, PoseRecord};
use crate::error::{Error, Result};
use crate::gdem::{densify, load_gdem, triangulate_2_5d, GdemCloud, SourceTag, DEFAULT_DENSITY};
use crate::geodesy::{altitude_sync, DEFAULT_SYNC_RADIUS};
use crate::groundseg::{rough_scale, segment_ground, GroundSegConfig, SiteProfile};
use crate::pfm;
use crate::synth::write_json;
use crate::projection::{apply_masks, project_gdem, reject_occluded, OcclusionConfig, RangeMask};
use crate::raster::{DepthMap, DisparityMap, GroundMask};
use crate::scaling::{
    anchor_pairs, apply_scale, camera_height_factor, camera_height_scale, lsq_align, median_scale, normal_ground_mask,
    reference_scale, Alignment, ScaleOutcome, CameraHeightOptions, RoughScaleParams, DEFAULT_GROUND_NORMAL_TOLERANCE_DEG,
    DEFAULT_MIN_ANCHORS,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleMethod {
    /// GDEM anchors with closed-form scale and shift.
    #[default]
    Tandepth,
    /// Constant offline parameters.
    Fixed,
    /// Median ratio against the reference depth.
    Median,
    /// Flat-ground disparity from AGL and pitch.
    Camheight,
    /// Single factor `agl / median(ground height below camera)` on the rough depth.
    #[serde(rename = "camheight-factor")]
    CamheightFactor,
    /// Least squares against the dense reference.
    Reference,
}

impl ScaleMethod {
    pub fn name(self) -> &'static str {
        match self {
            ScaleMethod::Tandepth => "tandepth",
            ScaleMethod::Fixed => "fixed",
            ScaleMethod::Median => "median",
            ScaleMethod::Camheight => "camheight",
            ScaleMethod::CamheightFactor => "camheight-factor",
            ScaleMethod::Reference => "reference",
        }
    }

    pub fn needs_reference(self) -> bool {
        matches!(self, ScaleMethod::Median | ScaleMethod::Reference)
    }
}

impl FromStr for ScaleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "tandepth" => Self::Tandepth,
            "fixed" => Self::Fixed,
            "median" => Self::Median,
            "camheight" | "camera-height" => Self::Camheight,
            "camheight-factor" => Self::CamheightFactor,
            "reference" => Self::Reference,
            _ => return Err(Error::Config(format!("unknown scale method '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdemSource {
    pub path: PathBuf,
    /// Densify a raw GDEM to this many points per m²; 0 disables.
    pub density: f64,
    pub seed: u64,
}

impl Default for GdemSource {
    fn default() -> Self {
        Self {
            path: PathBuf::new(),
            density: DEFAULT_DENSITY,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub gdem: GdemSource,
    pub intrinsics: PathBuf,
    pub poses: PathBuf,
    /// `<frame_id>.pfm` relative disparities.
    pub disparity_dir: PathBuf,
    /// `<frame_id>.pfm` reference depths, for the median and reference methods.
    pub reference_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub method: ScaleMethod,
    /// `[s̄, t̄]`.
    pub rough: [f64; 2],
    /// Anchor depth range in metres.
    pub range: [f64; 2],
    pub profile: SiteProfile,
    /// `[width, height]` of the CSF input.
    pub csf_input_size: Option<[usize; 2]>,
    pub occlusion: OcclusionConfig,
    pub min_anchors: usize,
    pub normal_tolerance_deg: f64,
    /// Search radius for the GDEM point under the camera when a pose has no AGL.
    pub sync_radius: f64,
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            gdem: GdemSource::default(),
            intrinsics: PathBuf::new(),
            poses: PathBuf::new(),
            disparity_dir: PathBuf::new(),
            reference_dir: None,
            output_dir: PathBuf::from("out"),
            method: ScaleMethod::Tandepth,
            rough: [1.0, 0.0],
            range: [30.0, 150.0],
            profile: SiteProfile::Default,
            csf_input_size: None,
            occlusion: OcclusionConfig::default(),
            min_anchors: DEFAULT_MIN_ANCHORS,
            normal_tolerance_deg: DEFAULT_GROUND_NORMAL_TOLERANCE_DEG,
            sync_radius: DEFAULT_SYNC_RADIUS,
            jobs: 1,
        }
    }
}

impl PipelineConfig {
    /// Resolve relative paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.gdem.path);
        fix(&mut self.intrinsics);
        fix(&mut self.poses);
        fix(&mut self.disparity_dir);
        fix(&mut self.output_dir);
        if let Some(r) = self.reference_dir.as_mut() {
            fix(r);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let exists = |what: &str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} not found: {}", p.display())))
            }
        };
        exists("GDEM", &self.gdem.path)?;
        exists("intrinsics", &self.intrinsics)?;
        exists("poses", &self.poses)?;
        exists("disparity directory", &self.disparity_dir)?;
        if self.method.needs_reference() {
            let r = self
                .reference_dir
                .as_deref()
                .ok_or_else(|| Error::Config(format!("method '{}' needs reference_dir", self.method.name())))?;
            exists("reference directory", r)?;
        }
        if !(self.gdem.density >= 0.0 && self.gdem.density.is_finite()) {
            return Err(Error::Config(format!("GDEM density must be >= 0, got {}", self.gdem.density)));
        }
        RangeMask::new(self.range[0], self.range[1])?;
        RoughScaleParams::new(self.rough[0], self.rough[1])?;
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn groundseg(&self) -> GroundSegConfig {
        GroundSegConfig {
            profile: self.profile,
            csf_input_size: self.csf_input_size.map(|[w, h]| (w, h)),
            ..GroundSegConfig::default()
        }
    }
}

/// Shared read-only inputs of a session.
#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub gdem: GdemCloud,
    pub intrinsics: Intrinsics,
    pub poses: Vec<PoseRecord>,
}

pub fn load_inputs(config: &PipelineConfig) -> Result<PipelineInputs> {
    config.validate()?;
    let mut gdem: GdemCloud = load_gdem(&config.gdem.path)?;
    if gdem.source == SourceTag::Raw && config.gdem.density > 0.0 {
        gdem = densify(&triangulate_2_5d(&gdem)?, config.gdem.density, config.gdem.seed)?;
    }
    let intrinsics = Intrinsics::load(&config.intrinsics)?;
    let file = fs::File::open(&config.poses).map_err(|e| Error::io(&config.poses, e))?;
    let poses = read_pose_records(BufReader::new(file))?;
    Ok(PipelineInputs { gdem, intrinsics, poses })
}

/// Wall-clock milliseconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub segmentation: f64,
    pub projection: f64,
    pub occlusion: f64,
    pub masking: f64,
    pub least_squares: f64,
    pub apply: f64,
    pub total: f64,
}

impl StageTimings {
    pub const STAGES: [&'static str; 7] =
        ["segmentation", "projection", "occlusion", "masking", "least_squares", "apply", "total"];

    pub fn values(&self) -> [f64; 7] {
        [
            self.segmentation,
            self.projection,
            self.occlusion,
            self.masking,
            self.least_squares,
            self.apply,
            self.total,
        ]
    }

    pub fn stage_sum(&self) -> f64 {
        self.values()[..6].iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSidecar {
    pub frame_id: String,
    pub method: ScaleMethod,
    pub alignment: Option<Alignment>,
    /// Single multiplicative factor (median method).
    pub scale_factor: Option<f64>,
    pub cf: Option<f64>,
    pub agl_m: f64,
    pub agl_from_gdem: bool,
    pub n_projected: usize,
    pub n_after_occlusion: usize,
    pub n_anchors: usize,
}

#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub depth: DepthMap,
    pub ground: Option<GroundMask>,
    pub sidecar: FrameSidecar,
    pub timings: StageTimings,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Pose with AGL, looked up from the GDEM when the record has none.
pub fn resolve_pose(record: &PoseRecord, gdem: &GdemCloud, sync_radius: f64) -> Result<(Pose, bool)> {
    match record.agl_m {
        Some(agl) => Ok((record.to_pose(Some(agl))?, false)),
        None => {
            let [x, y, z] = record.position_xyz_m;
            let ground = altitude_sync(0.0, (x, y), &gdem.points, sync_radius)?;
            Ok((record.to_pose(Some(z - ground))?, true))
        }
    }
}

/// Run one frame in memory.
pub fn process_frame(
    config: &PipelineConfig,
    inputs: &PipelineInputs,
    record: &PoseRecord,
    disp: &DisparityMap,
    reference: Option<&DepthMap>,
) -> Result<FrameOutput> {
    let start = Instant::now();
    let k = &inputs.intrinsics;
    disp.ensure_dims(k.dims())?;
    let (pose, agl_from_gdem) = resolve_pose(record, &inputs.gdem, config.sync_radius)?;
    let rough = RoughScaleParams::new(config.rough[0], config.rough[1])?;
    let range = RangeMask::new(config.range[0], config.range[1])?;
    let mut t = StageTimings::default();
    let mut sidecar = FrameSidecar {
        frame_id: record.frame_id.clone(),
        method: config.method,
        alignment: None,
        scale_factor: None,
        cf: None,
        agl_m: pose.agl,
        agl_from_gdem,
        n_projected: 0,
        n_after_occlusion: 0,
        n_anchors: 0,
    };
    let need_reference = || {
        reference.ok_or_else(|| Error::Config(format!("no reference depth for frame {}", record.frame_id)))
    };

    let mut ground = None;
    let depth = match config.method {
        ScaleMethod::Fixed => {
            let s = Instant::now();
            let d = rough_scale(disp, &rough)?;
            t.apply = ms(s);
            d
        }
        ScaleMethod::Median => {
            let reference = need_reference()?;
            let s = Instant::now();
            let d = rough_scale(disp, &rough)?;
            let f = median_scale(&d, reference)?;
            t.least_squares = ms(s);
            let s = Instant::now();
            let d = d.map(|z| z * f);
            t.apply = ms(s);
            sidecar.scale_factor = Some(f);
            d
        }
        ScaleMethod::Reference => {
            let reference = need_reference()?;
            let s = Instant::now();
            let out = reference_scale(disp, reference, &range, config.min_anchors)?;
            t.least_squares = ms(s);
            sidecar.alignment = Some(out.alignment);
            out.depth
        }
        ScaleMethod::CamheightFactor => {
            let s = Instant::now();
            let seg = segment_ground(disp, &pose, k, &rough, &config.groundseg())?;
            t.segmentation = ms(s);
            sidecar.cf = Some(seg.cf);
            let s = Instant::now();
            let rough_full = rough_scale(disp, &rough)?;
            let normals = normal_ground_mask(&rough_full, k, pose.pitch_deg, config.normal_tolerance_deg);
            let mask = normals.zip_with(&seg.mask, |a, b| a && b);
            t.masking = ms(s);
            let s = Instant::now();
            let f = camera_height_factor(&rough_full, &pose, k, &mask)?;
            t.least_squares = ms(s);
            let s = Instant::now();
            let d = rough_full.map(|z| z * f);
            t.apply = ms(s);
            sidecar.scale_factor = Some(f);
            ground = Some(seg.mask);
            d
        }
        ScaleMethod::Camheight | ScaleMethod::Tandepth => {
            let s = Instant::now();
            let seg = segment_ground(disp, &pose, k, &rough, &config.groundseg())?;
            t.segmentation = ms(s);
            sidecar.cf = Some(seg.cf);
            let out = if config.method == ScaleMethod::Camheight {
                let s = Instant::now();
                let rough_full = rough_scale(disp, &rough)?;
                let normals = normal_ground_mask(&rough_full, k, pose.pitch_deg, config.normal_tolerance_deg);
                let mask = normals.zip_with(&seg.mask, |a, b| a && b);
                t.masking = ms(s);
                let s = Instant::now();
                let opts = CameraHeightOptions {
                    restrict_to_ground: true,
                    min_anchors: config.min_anchors,
                };
                let out = camera_height_scale(disp, &pose, k, &mask, &opts)?;
                t.least_squares = ms(s);
                out
            } else {
                let s = Instant::now();
                let projected = project_gdem(&inputs.gdem.points, &pose, k)?;
                t.projection = ms(s);
                sidecar.n_projected = projected.count();
                let s = Instant::now();
                let visible = reject_occluded(&projected, &config.occlusion);
                t.occlusion = ms(s);
                sidecar.n_after_occlusion = visible.count();
                let s = Instant::now();
                let anchors = apply_masks(&visible, &seg.mask, &range)?;
                t.masking = ms(s);
                sidecar.n_anchors = anchors.count();
                let s = Instant::now();
                let (x, y) = anchor_pairs(disp, &anchors)?;
                let alignment = lsq_align(&x, &y, config.min_anchors)?;
                t.least_squares = ms(s);
                let s = Instant::now();
                let depth = apply_scale(disp, &alignment.params);
                t.apply = ms(s);
                ScaleOutcome { alignment, depth }
            };
            ground = Some(seg.mask);
            sidecar.alignment = Some(out.alignment);
            out.depth
        }
    };
    t.total = ms(start);
    info!(
        "frame={} method={} segmentation_ms={:.2} projection_ms={:.2} occlusion_ms={:.2} lsq_ms={:.2} anchors={}",
        record.frame_id,
        config.method.name(),
        t.segmentation,
        t.projection,
        t.occlusion,
        t.least_squares,
        sidecar.n_anchors
    );
    Ok(FrameOutput {
        depth,
        ground,
        sidecar,
        timings: t,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFailure {
    pub frame_id: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub frames: usize,
    pub stages: Vec<(String, StageSummary)>,
}

/// Mean, median and nearest-rank 95th percentile per stage.
pub fn timing_report(timings: &[StageTimings]) -> Result<TimingReport> {
    if timings.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let stages = StageTimings::STAGES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mut v: Vec<f64> = timings.iter().map(|t| t.values()[i]).collect();
            v.sort_by(f64::total_cmp);
            let n = v.len();
            let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
            let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
            let summary = StageSummary {
                mean_ms: v.iter().sum::<f64>() / n as f64,
                median_ms: median,
                p95_ms: v[rank - 1],
            };
            (name.to_string(), summary)
        })
        .collect();
    Ok(TimingReport {
        frames: timings.len(),
        stages,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub method: ScaleMethod,
    pub succeeded: Vec<String>,
    pub failures: Vec<FrameFailure>,
}

/// Output locations under `output_dir`.
pub fn depth_path(out: &Path, frame_id: &str) -> PathBuf {
    out.join("depth").join(format!("{frame_id}.pfm"))
}

pub fn sidecar_path(out: &Path, frame_id: &str) -> PathBuf {
    out.join("depth").join(format!("{frame_id}.json"))
}

fn load_and_process(config: &PipelineConfig, inputs: &PipelineInputs, record: &PoseRecord) -> Result<FrameOutput> {
    let disp: DisparityMap = pfm::load(config.disparity_dir.join(format!("{}.pfm", record.frame_id)))?;
    let reference: Option<DepthMap> = match (&config.reference_dir, config.method.needs_reference()) {
        (Some(dir), true) => Some(pfm::load(dir.join(format!("{}.pfm", record.frame_id)))?),
        _ => None,
    };
    let out = process_frame(config, inputs, record, &disp, reference.as_ref())?;
    pfm::save(depth_path(&config.output_dir, &record.frame_id), &out.depth)?;
    write_json(&sidecar_path(&config.output_dir, &record.frame_id), &out.sidecar)?;
    Ok(out)
}

/// Process every pose record on `config.jobs` threads. Per-frame errors are
/// collected; only configuration and input loading errors are fatal.
/// Writes `session.json` and `timing.json` into the output directory.
pub fn run_pipeline(config: &PipelineConfig) -> Result<(SessionReport, Option<TimingReport>)> {
    let inputs = load_inputs(config)?;
    let depth_dir = config.output_dir.join("depth");
    fs::create_dir_all(&depth_dir).map_err(|e| Error::io(&depth_dir, e))?;

    let n = inputs.poses.len();
    let results: Vec<Mutex<Option<Result<StageTimings>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..config.jobs.min(n.max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = load_and_process(config, &inputs, &inputs.poses[i]).map(|o| o.timings);
                *results[i].lock().expect("result slot") = Some(r);
            });
        }
    });

    let mut report = SessionReport {
        method: config.method,
        succeeded: Vec::new(),
        failures: Vec::new(),
    };
    let mut timings = Vec::new();
    for (record, slot) in inputs.poses.iter().zip(results) {
        match slot.into_inner().expect("result slot").expect("every frame visited") {
            Ok(t) => {
                report.succeeded.push(record.frame_id.clone());
                timings.push(t);
            }
            Err(e) => {
                warn!("frame={} failed kind={} error={e}", record.frame_id, e.kind());
                report.failures.push(FrameFailure {
                    frame_id: record.frame_id.clone(),
                    kind: e.kind().into(),
                    message: e.to_string(),
                });
            }
        }
    }
    let timing = timing_report(&timings).ok();
    write_json(&config.output_dir.join("session.json"), &report)?;
    if let Some(t) = &timing {
        write_json(&config.output_dir.join("timing.json"), t)?;
    }
    Ok((report, timing))
}
