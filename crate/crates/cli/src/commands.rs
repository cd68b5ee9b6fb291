use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use demscale::camera::{read_pose_records, PoseRecord};
use demscale::eval::{self, EvalReport, FrameResult, ReportFormat};
use demscale::gdem::{densify, load_gdem, save_gdem, triangulate_2_5d, SourceTag};
use demscale::geodesy::{to_local_frame, GlobalShift, DEFAULT_SYNC_RADIUS};
use demscale::groundseg::segment_ground as run_segmentation;
use demscale::pipeline::{self, GdemSource, PipelineConfig, StageTimings};
use demscale::synth::{build_scene, layout, write_scene, SceneSpec};
use demscale::{pfm, DepthMap, DisparityMap, Error, GdemCloud, Intrinsics, RangeMask, Result, RoughScaleParams};
use log::info;
use serde::Serialize;

use crate::args::{EvalArgs, FrameArgs, PipelineArgs, PrepareGdemArgs, ScaleArgs, SegmentGroundArgs, SynthArgs};

const PIPELINE_CONFIG: &str = "pipeline.toml";

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.into(), source })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

fn require(what: &str, path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} not found: {}", path.display())))
    }
}

/// `<path>.json` next to an output file.
fn sidecar_for(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn prepare_gdem(a: PrepareGdemArgs) -> Result<()> {
    require("XYZ input", &a.input)?;
    if !(a.density >= 0.0 && a.density.is_finite()) {
        return Err(Error::Config(format!("density must be >= 0, got {}", a.density)));
    }
    let file = fs::File::open(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let triples = demscale::geodesy::read_xyz(BufReader::new(file))?;
    let shift = a.shift.map(|[x, y, z]| GlobalShift::new(x, y, z));
    let frame = to_local_frame(&triples, a.kind.into(), a.zone, shift)?;
    let mut cloud: GdemCloud = GdemCloud::raw(frame.points)?;
    let n_raw = cloud.len();
    if a.density > 0.0 {
        cloud = densify(&triangulate_2_5d(&cloud)?, a.density, a.seed)?;
    }
    ensure_parent(&a.output)?;
    save_gdem(&cloud, &a.output)?;

    #[derive(Serialize)]
    struct Meta {
        input: PathBuf,
        kind: demscale::geodesy::XyzKind,
        zone: Option<String>,
        shift: GlobalShift,
        n_raw: usize,
        n_points: usize,
        source: SourceTag,
        density_pts_per_m2: Option<f64>,
        seed: u64,
    }
    let meta = Meta {
        input: a.input.clone(),
        kind: a.kind.into(),
        zone: frame.zone.map(|z| z.to_string()),
        shift: frame.shift,
        n_raw,
        n_points: cloud.len(),
        source: cloud.source,
        density_pts_per_m2: cloud.density_pts_per_m2,
        seed: cloud.seed,
    };
    write_json(&sidecar_for(&a.output), &meta)?;
    info!("gdem={} raw={} points={}", a.output.display(), n_raw, cloud.len());
    println!("{}: {} points ({} raw)", a.output.display(), cloud.len(), n_raw);
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut spec: SceneSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => SceneSpec::default(),
    };
    macro_rules! apply {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = a.$flag { spec.$field = v; }
        )*};
    }
    apply!(frames => n_frames, seed => seed, width => width, height => height, agl => agl,
        pitch => pitch_deg, disparity_noise => disparity_noise, gdem_sigma => gdem_sigma);
    spec.terrain.validate()?;

    let scene = build_scene(&spec)?;
    write_scene(&a.out, &scene)?;

    let config = PipelineConfig {
        gdem: GdemSource {
            path: layout::GDEM.into(),
            seed: spec.seed,
            ..GdemSource::default()
        },
        intrinsics: layout::INTRINSICS.into(),
        poses: layout::POSES.into(),
        disparity_dir: layout::DISPARITY_DIR.into(),
        reference_dir: Some(layout::DEPTH_DIR.into()),
        output_dir: "out".into(),
        rough: spec.rough_params(),
        ..PipelineConfig::default()
    };
    let text = toml::to_string(&config).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
    let path = a.out.join(PIPELINE_CONFIG);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    println!("{}: {} frames, {} GDEM points", a.out.display(), scene.frames.len(), scene.gdem.len());
    Ok(())
}

struct FrameInputs {
    record: PoseRecord,
    disparity: DisparityMap,
    intrinsics: Intrinsics,
    rough: [f64; 2],
}

fn load_frame(a: &FrameArgs) -> Result<FrameInputs> {
    require("disparity", &a.disparity)?;
    require("poses", &a.pose)?;
    require("intrinsics", &a.intrinsics)?;
    require("rough params", &a.rough_params)?;
    let file = fs::File::open(&a.pose).map_err(|e| Error::io(&a.pose, e))?;
    let records = read_pose_records(BufReader::new(file))?;
    let record = match &a.frame_id {
        Some(id) => records.into_iter().find(|r| &r.frame_id == id),
        None => records.into_iter().next(),
    }
    .ok_or_else(|| Error::Config(format!("no matching pose record in {}", a.pose.display())))?;
    let rough: RoughScaleParams = read_json(&a.rough_params)?;
    RoughScaleParams::new(rough.s_bar, rough.t_bar)?;
    Ok(FrameInputs {
        record,
        disparity: pfm::load(&a.disparity)?,
        intrinsics: Intrinsics::load(&a.intrinsics)?,
        rough: [rough.s_bar, rough.t_bar],
    })
}

pub fn segment_ground(a: SegmentGroundArgs) -> Result<()> {
    let f = load_frame(&a.frame)?;
    let pose = match (f.record.agl_m, &a.gdem) {
        (Some(agl), _) => f.record.to_pose(Some(agl))?,
        (None, Some(path)) => {
            require("GDEM", path)?;
            let gdem: GdemCloud = load_gdem(path)?;
            pipeline::resolve_pose(&f.record, &gdem, DEFAULT_SYNC_RADIUS)?.0
        }
        (None, None) => {
            return Err(Error::Config(format!(
                "pose {} has no agl_m; pass --gdem to derive it",
                f.record.frame_id
            )))
        }
    };
    let config = PipelineConfig {
        profile: a.frame.profile,
        csf_input_size: a.frame.csf_input_size,
        ..PipelineConfig::default()
    };
    let rough = RoughScaleParams::new(f.rough[0], f.rough[1])?;
    let seg = run_segmentation(&f.disparity, &pose, &f.intrinsics, &rough, &config.groundseg())?;

    let (w, h) = seg.mask.dims();
    let gray: Vec<u8> = seg.mask.data().iter().map(|&g| if g { 255 } else { 0 }).collect();
    ensure_parent(&a.output)?;
    eval::save_gray_png(&a.output, w, h, &gray)?;
    if let Some(path) = &a.bitset {
        let mut bits = vec![0u8; seg.mask.len().div_ceil(8)];
        for (i, _) in seg.mask.data().iter().enumerate().filter(|(_, &g)| g) {
            bits[i / 8] |= 1 << (i % 8);
        }
        ensure_parent(path)?;
        fs::write(path, bits).map_err(|e| Error::io(path, e))?;
    }
    let n_ground = gray.iter().filter(|&&g| g > 0).count();
    println!(
        "{}: {} of {} pixels ground ({:.1}%), cf {:.4}, {} points",
        f.record.frame_id,
        n_ground,
        w * h,
        100.0 * n_ground as f64 / (w * h) as f64,
        seg.cf,
        seg.n_points
    );
    Ok(())
}

pub fn scale(a: ScaleArgs) -> Result<()> {
    if a.method.needs_reference() && a.reference.is_none() {
        return Err(Error::Config(format!("method '{}' needs --reference", a.method.name())));
    }
    let f = load_frame(&a.frame)?;
    let parent = |p: &Path| p.parent().map(Path::to_path_buf).unwrap_or_default();
    let config = PipelineConfig {
        gdem: GdemSource {
            path: a.gdem.clone(),
            density: a.density,
            seed: a.seed,
        },
        intrinsics: a.frame.intrinsics.clone(),
        poses: a.frame.pose.clone(),
        disparity_dir: parent(&a.frame.disparity),
        reference_dir: a.reference.as_deref().map(parent),
        method: a.method,
        rough: f.rough,
        range: a.range,
        profile: a.frame.profile,
        csf_input_size: a.frame.csf_input_size,
        ..PipelineConfig::default()
    };
    if let Some(r) = &a.reference {
        require("reference depth", r)?;
    }
    let mut inputs = pipeline::load_inputs(&config)?;
    inputs.intrinsics = f.intrinsics;
    let reference: Option<DepthMap> = match &a.reference {
        Some(p) if a.method.needs_reference() => Some(pfm::load(p)?),
        _ => None,
    };
    let out = pipeline::process_frame(&config, &inputs, &f.record, &f.disparity, reference.as_ref())?;

    #[derive(Serialize)]
    struct Sidecar<'a> {
        #[serde(flatten)]
        frame: &'a pipeline::FrameSidecar,
        timings_ms: StageTimings,
    }
    ensure_parent(&a.output)?;
    pfm::save(&a.output, &out.depth)?;
    write_json(
        &sidecar_for(&a.output),
        &Sidecar {
            frame: &out.sidecar,
            timings_ms: out.timings,
        },
    )?;
    match out.sidecar.alignment {
        Some(al) => println!(
            "{}: s {:.6} t {:.6} residual {:.3e} anchors {}",
            f.record.frame_id, al.params.s, al.params.t, al.residual_rms, al.n_pairs
        ),
        None => println!("{}: {} done", f.record.frame_id, a.method.name()),
    }
    Ok(())
}

fn list_pfm(dir: &Path) -> Result<Vec<String>> {
    let mut ids: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "pfm"))
        .filter_map(|p| p.file_stem().and_then(|s| s.to_str()).map(String::from))
        .collect();
    ids.sort();
    Ok(ids)
}

pub fn eval(a: EvalArgs) -> Result<()> {
    require("prediction directory", &a.pred_dir)?;
    require("reference directory", &a.ref_dir)?;
    let range = RangeMask::new(a.range[0], a.range[1])?;
    let ids = list_pfm(&a.ref_dir)?;
    if ids.is_empty() {
        return Err(Error::Config(format!("no .pfm references in {}", a.ref_dir.display())));
    }
    let mut frames = Vec::with_capacity(ids.len());
    for id in ids {
        let pred_path = a.pred_dir.join(format!("{id}.pfm"));
        if !pred_path.exists() {
            frames.push(FrameResult {
                frame_id: id,
                metrics: None,
                failure: Some("MissingPrediction".into()),
            });
            continue;
        }
        let pred: DepthMap = pfm::load(&pred_path)?;
        let reference: DepthMap = pfm::load(a.ref_dir.join(format!("{id}.pfm")))?;
        let result = eval::compute_metrics(&pred, &reference, &range);
        if let (Some(dir), Ok(_)) = (&a.plots, &result) {
            eval::write_error_map(dir, &id, &eval::abs_rel_error_map(&pred, &reference)?, a.plot_max)?;
        }
        frames.push(match result {
            Ok(m) => FrameResult {
                frame_id: id,
                metrics: Some(m),
                failure: None,
            },
            Err(e) => {
                log::warn!("frame={id} eval failed kind={}", e.kind());
                FrameResult {
                    frame_id: id,
                    metrics: None,
                    failure: Some(e.kind().into()),
                }
            }
        });
    }
    let report = EvalReport::build(frames, &range)?;
    let format = match a.report.extension().and_then(|x| x.to_str()) {
        Some("md" | "markdown") => ReportFormat::Markdown,
        _ => ReportFormat::Json,
    };
    ensure_parent(&a.report)?;
    eval::emit_report(&report, &a.report, format)?;
    print!("{}", report.to_markdown());
    Ok(())
}

pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    require("config", path)?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut config: PipelineConfig =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(config)
}

pub fn pipeline(a: PipelineArgs) -> Result<()> {
    let mut config = load_config(&a.config)?;
    if let Some(v) = a.jobs {
        config.jobs = v;
    }
    if let Some(v) = a.method {
        config.method = v;
    }
    if let Some(v) = a.output_dir {
        config.output_dir = v;
    }
    if let Some(v) = a.profile {
        config.profile = v;
    }
    if let Some(v) = a.range {
        config.range = v;
    }
    if let Some(v) = a.csf_input_size {
        config.csf_input_size = Some(v);
    }
    if let Some(v) = a.density {
        config.gdem.density = v;
    }
    if let Some(v) = a.seed {
        config.gdem.seed = v;
    }

    let (session, timing) = pipeline::run_pipeline(&config)?;
    let total = session.succeeded.len() + session.failures.len();
    println!(
        "{} of {} frames succeeded ({}), output in {}",
        session.succeeded.len(),
        total,
        session.method.name(),
        config.output_dir.display()
    );
    for f in &session.failures {
        println!("  failed {}: {} ({})", f.frame_id, f.kind, f.message);
    }
    if let Some(t) = timing {
        println!("  {:<14} {:>10} {:>10} {:>10}", "stage", "mean ms", "median ms", "p95 ms");
        for (name, s) in &t.stages {
            println!("  {name:<14} {:>10.2} {:>10.2} {:>10.2}", s.mean_ms, s.median_ms, s.p95_ms);
        }
    }
    Ok(())
}
