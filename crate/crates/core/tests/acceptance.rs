//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use demscale::camera::{PoseRecord, Projection};
use demscale::eval::{compute_metrics, MetricsReport};
use demscale::gdem::{densify, triangulate_2_5d, GdemCloud};
use demscale::geodesy::{geodetic_to_utm, utm_to_geodetic, GeodeticPoint, UtmZone};
use demscale::geom::Vec3;
use demscale::groundseg::{segment_ground, GroundSegConfig};
use demscale::pipeline::{process_frame, run_pipeline, GdemSource, PipelineConfig, PipelineInputs, ScaleMethod};
use demscale::projection::{project_gdem, reject_occluded, OcclusionConfig, RangeMask};
use demscale::raster::mask_iou;
use demscale::scaling::{lsq_align, lsq_objective, ScaleParams};
use demscale::synth::{build_scene, layout, sample_synthetic_gdem, write_scene, AnalyticTerrain, SceneSpec, SyntheticScene, TerrainBox};
use demscale::{Intrinsics, Pose, Raster, RoughScaleParams};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn range() -> RangeMask {
    RangeMask::new(30.0, 150.0).unwrap()
}

fn densified(scene: &SyntheticScene) -> GdemCloud {
    densify(&triangulate_2_5d(&scene.gdem).unwrap(), 0.05, 11).unwrap()
}

struct LoopResult {
    metrics: MetricsReport,
    frame_ms: f64,
}

/// Run every frame of `scene` through `method` in memory and pool the metrics.
fn closed_loop(scene: &SyntheticScene, gdem: &GdemCloud, method: ScaleMethod, csf_input: Option<[usize; 2]>) -> Result<LoopResult, String> {
    let inputs = PipelineInputs {
        gdem: gdem.clone(),
        intrinsics: scene.intrinsics,
        poses: vec![],
    };
    let cfg = PipelineConfig {
        method,
        rough: scene.spec.rough_params(),
        csf_input_size: csf_input,
        ..PipelineConfig::default()
    };
    let mut reports = Vec::new();
    let mut worst_ms = 0.0f64;
    for f in &scene.frames {
        let record = PoseRecord::from_pose(f.id.clone(), &f.pose, true);
        let start = Instant::now();
        let out = process_frame(&cfg, &inputs, &record, &f.disparity, Some(&f.depth)).map_err(|e| format!("{}: {e}", f.id))?;
        worst_ms = worst_ms.max(start.elapsed().as_secs_f64() * 1e3);
        reports.push(compute_metrics(&out.depth, &f.depth, &range()).map_err(|e| e.to_string())?);
    }
    Ok(LoopResult {
        metrics: demscale::eval::aggregate(&reports, 0).map_err(|e| e.to_string())?,
        frame_ms: worst_ms,
    })
}

fn flat_spec(width: usize, height: usize) -> SceneSpec {
    SceneSpec {
        width,
        height,
        gdem_margin: 320.0,
        ..SceneSpec::default()
    }
}

/// Compass search on the quadratic objective; knows nothing about its form.
fn pattern_search(x: &[f64], y: &[f64]) -> ScaleParams {
    let f = |s: f64, t: f64| lsq_objective(x, y, &ScaleParams::new(s, t));
    let (mut s, mut t) = (1.0, 0.0);
    let mut best = f(s, t);
    let mut step = 1.0;
    while step > 1e-13 {
        let mut improved = false;
        for (ds, dt) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step), (step, -step), (-step, step)] {
            let v = f(s + ds, t + dt);
            if v < best {
                best = v;
                s += ds;
                t += dt;
                improved = true;
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    ScaleParams::new(s, t)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut instances = Vec::new();
    for _ in 0..1000 {
        let n = rng.gen_range(10..200);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.001..0.05)).collect();
        let (s0, t0) = (rng.gen_range(0.1..10.0), rng.gen_range(-0.5..0.5));
        instances.push((x, s0, t0));
    }
    let start = Instant::now();
    let fits: Vec<_> = instances
        .iter()
        .map(|(x, s0, t0)| {
            let y: Vec<f64> = x.iter().map(|v| s0 * v + t0).collect();
            lsq_align(x, &y, 10).unwrap().params
        })
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    let mut worst_rel = 0.0f64;
    for ((_, s0, t0), p) in instances.iter().zip(&fits) {
        worst_rel = worst_rel.max(rel(p.s, *s0)).max(rel(p.t, *t0));
    }

    // objective against an iterative minimiser on noisy data
    let mut worst_obj = 0.0f64;
    for (x, s0, t0) in instances.iter().take(200) {
        let y: Vec<f64> = x.iter().map(|v| s0 * v + t0 + rng.gen_range(-0.01..0.01)).collect();
        let closed = lsq_objective(x, &y, &lsq_align(x, &y, 10).unwrap().params);
        let brute = lsq_objective(x, &y, &pattern_search(x, &y));
        worst_obj = worst_obj.max((closed - brute).abs().max(0.0));
        if closed > brute + 1e-12 {
            return Err(format!("closed form {closed} worse than search {brute}"));
        }
    }
    check(
        worst_rel < 1e-9 && worst_obj < 1e-6 && elapsed < 1.0,
        format!("max rel err {worst_rel:.2e}, max objective gap {worst_obj:.2e}, 1000 fits in {:.1} ms", elapsed * 1e3),
    )
}

fn criterion_2() -> Outcome {
    let scene = build_scene(&flat_spec(1024, 512)).map_err(|e| e.to_string())?;
    let r = closed_loop(&scene, &densified(&scene), ScaleMethod::Tandepth, None)?;
    let m = &r.metrics;
    check(
        m.abs_rel < 0.01 && m.rmse < 0.5 && r.frame_ms < 10_000.0,
        format!("AbsRel {:.5}, RMSE {:.4} m, {:.0} ms/frame", m.abs_rel, m.rmse, r.frame_ms),
    )
}

fn criterion_3() -> Outcome {
    let spec = SceneSpec {
        terrain: AnalyticTerrain::LinearSlope { z0: 100.0, grade_percent: 10.0, azimuth_deg: 0.0 },
        n_frames: 3,
        frame_step_m: 25.0,
        ..flat_spec(512, 256)
    };
    let scene = build_scene(&spec).map_err(|e| e.to_string())?;
    let gdem = densified(&scene);
    let tan = closed_loop(&scene, &gdem, ScaleMethod::Tandepth, None)?.metrics;
    let cam = closed_loop(&scene, &gdem, ScaleMethod::Camheight, None)?.metrics;
    check(
        tan.abs_rel < 0.03 && cam.abs_rel > tan.abs_rel,
        format!("tandepth AbsRel {:.5}, camera-height AbsRel {:.5}", tan.abs_rel, cam.abs_rel),
    )
}

fn criterion_4() -> Outcome {
    let spec = SceneSpec {
        disparity_noise: 0.05,
        gdem_sigma: 2.0,
        n_frames: 3,
        seed: 4,
        ..flat_spec(512, 256)
    };
    let scene = build_scene(&spec).map_err(|e| e.to_string())?;
    let m = closed_loop(&scene, &densified(&scene), ScaleMethod::Tandepth, None)?.metrics;
    check(m.abs_rel < 0.06, format!("AbsRel {:.5} with 5% disparity and 2 m GDEM noise", m.abs_rel))
}

/// Whether the box blocks the line of sight from `c` to `p`.
fn segment_hits_box(c: Vec3, p: Vec3, b: &TerrainBox, z0: f64) -> bool {
    let (lo, hi) = ([b.min_xy[0], b.min_xy[1], z0], [b.max_xy[0], b.max_xy[1], z0 + b.height]);
    let (o, d) = ([c.x, c.y, c.z], [p.x - c.x, p.y - c.y, p.z - c.z]);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for i in 0..3 {
        if d[i].abs() < 1e-12 {
            if o[i] < lo[i] || o[i] > hi[i] {
                return false;
            }
            continue;
        }
        let (a, b) = ((lo[i] - o[i]) / d[i], (hi[i] - o[i]) / d[i]);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    // clearly inside the line of sight, not grazing the target itself
    t0 < t1 && t0 < 0.98
}

fn criterion_5() -> Outcome {
    // spans the whole field of view, so every hidden point is behind its top
    let wall = TerrainBox { min_xy: [-400.0, 55.0], max_xy: [400.0, 80.0], height: 8.0 };
    let terrain = AnalyticTerrain::PlanePlusBoxes { z0: 100.0, boxes: vec![wall] };
    let k = Intrinsics::new(128.0, 128.0, 128.0, 64.0, 256, 128).unwrap();
    let pose = Pose::looking(Vec3::new(0.0, 0.0, 150.0), 0.0, 45.0, 50.0).unwrap();
    // surface model including the wall, fine enough to cover its top
    let mut points = Vec::new();
    for j in 0..=200 {
        for i in 0..=320 {
            let (x, y) = (-160.0 + i as f64, j as f64);
            points.push(Vec3::new(x, y, terrain.height(x, y)));
        }
    }
    let projected = project_gdem(&points, &pose, &k).map_err(|e| e.to_string())?;
    let cfg = OcclusionConfig::default();
    let kept = reject_occluded(&projected, &cfg);

    // which projected anchor came from which point
    let mut source = Raster::filled(k.width, k.height, usize::MAX);
    for (i, &p) in points.iter().enumerate() {
        if let Projection::Visible { u, v, z } = demscale::camera::project(p, &pose, &k) {
            let (ui, vi) = (u.floor() as usize, v.floor() as usize);
            if projected.get(ui, vi) == Some(z) {
                source.set(ui, vi, i);
            }
        }
    }
    let (mut occluded, mut occluded_rejected, mut closest, mut closest_rejected) = (0, 0, 0, 0);
    let (w, h) = projected.dims();
    let map = &projected;
    for (u, v, z) in projected.anchors() {
        let p = points[source.get(u, v)];
        let rejected = kept.get(u, v).is_none();
        if segment_hits_box(pose.position, p, &wall, 100.0) {
            occluded += 1;
            occluded_rejected += rejected as usize;
        }
        let (u0, u1) = (u.saturating_sub(cfg.window_width / 2), (u + cfg.window_width - cfg.window_width / 2).min(w));
        let (v0, v1) = (v.saturating_sub(cfg.window_height / 2), (v + cfg.window_height - cfg.window_height / 2).min(h));
        let window_min = (v0..v1)
            .flat_map(|vv| (u0..u1).filter_map(move |uu| map.get(uu, vv)))
            .fold(f64::INFINITY, f64::min);
        if z <= window_min {
            closest += 1;
            closest_rejected += rejected as usize;
        }
    }
    let frac = occluded_rejected as f64 / occluded.max(1) as f64;
    check(
        occluded > 100 && frac >= 0.9 && closest_rejected == 0,
        format!("{occluded_rejected}/{occluded} occluded anchors rejected ({:.1}%), {closest_rejected}/{closest} window-closest rejected", 100.0 * frac),
    )
}

fn boxes_scene() -> SceneSpec {
    let mut boxes = Vec::new();
    for &cy in &[28.0, 50.0, 78.0, 110.0] {
        for i in -4..=4 {
            let cx = i as f64 * 30.0 + if cy == 50.0 || cy == 110.0 { 15.0 } else { 0.0 };
            let half = 3.0 + cy / 25.0;
            boxes.push(TerrainBox { min_xy: [cx - half, cy - half], max_xy: [cx + half, cy + half], height: 6.0 });
        }
    }
    SceneSpec {
        terrain: AnalyticTerrain::PlanePlusBoxes { z0: 100.0, boxes },
        ..flat_spec(512, 256)
    }
}

fn criterion_6() -> Outcome {
    let cfg = GroundSegConfig::default();

    let flat = build_scene(&flat_spec(512, 256)).map_err(|e| e.to_string())?;
    let f = &flat.frames[0];
    let rough = RoughScaleParams::new(flat.spec.rough_params()[0], flat.spec.rough_params()[1]).unwrap();
    let seg = segment_ground(&f.disparity, &f.pose, &flat.intrinsics, &rough, &cfg).map_err(|e| e.to_string())?;
    let truth = f.ground.zip_with(&f.depth, |g, z| g && z.is_finite());
    let total = truth.data().iter().filter(|&&g| g).count();
    let hit = truth.zip_with(&seg.mask, |t, m| t && m).data().iter().filter(|&&g| g).count();
    let recall = hit as f64 / total as f64;

    let boxed = build_scene(&boxes_scene()).map_err(|e| e.to_string())?;
    let b = &boxed.frames[0];
    let valid = b.depth.count_valid();
    let box_px = b.ground.zip_with(&b.depth, |g, z| !g && z.is_finite()).data().iter().filter(|&&x| x).count();
    let coverage = box_px as f64 / valid as f64;
    let seg_b = segment_ground(&b.disparity, &b.pose, &boxed.intrinsics, &rough, &cfg).map_err(|e| e.to_string())?;
    let truth_b = b.ground.zip_with(&b.depth, |g, z| g && z.is_finite());
    let iou = mask_iou(&seg_b.mask, &truth_b);

    let mut invariant = true;
    for factor in [0.5, 2.0, 10.0] {
        let scaled = RoughScaleParams::new(rough.s_bar / factor, rough.t_bar / factor).unwrap();
        let s = segment_ground(&b.disparity, &b.pose, &boxed.intrinsics, &scaled, &cfg).map_err(|e| e.to_string())?;
        invariant &= s.mask == seg_b.mask;
    }
    check(
        recall >= 0.99 && iou >= 0.85 && invariant && (0.1..0.35).contains(&coverage),
        format!(
            "plane recall {:.4}, boxes ({:.0}% of pixels) IoU {:.4}, masks identical under x0.5/x2/x10: {invariant}",
            recall,
            100.0 * coverage,
            iou
        ),
    )
}

fn criterion_7() -> Outcome {
    let scene = build_scene(&flat_spec(1024, 512)).map_err(|e| e.to_string())?;
    let f = &scene.frames[0];
    let rough = RoughScaleParams::new(scene.spec.rough_params()[0], scene.spec.rough_params()[1]).unwrap();
    let time = |cfg: &GroundSegConfig| -> Result<f64, String> {
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let s = Instant::now();
            segment_ground(&f.disparity, &f.pose, &scene.intrinsics, &rough, cfg).map_err(|e| e.to_string())?;
            best = best.min(s.elapsed().as_secs_f64() * 1e3);
        }
        Ok(best)
    };
    let full_cfg = GroundSegConfig::default();
    let small_cfg = GroundSegConfig {
        csf_input_size: Some((128, 64)),
        ..GroundSegConfig::default()
    };
    let (full_ms, small_ms) = (time(&full_cfg)?, time(&small_cfg)?);
    let gdem = densified(&scene);
    let full = closed_loop(&scene, &gdem, ScaleMethod::Tandepth, None)?.metrics;
    let small = closed_loop(&scene, &gdem, ScaleMethod::Tandepth, Some([128, 64]))?.metrics;
    let speedup = full_ms / small_ms;
    let degradation = small.abs_rel - full.abs_rel;
    check(
        speedup >= 2.0 && degradation < 0.01,
        format!(
            "CSF {full_ms:.1} ms at 512x1024 vs {small_ms:.1} ms at 64x128 ({speedup:.1}x), AbsRel {:.5} -> {:.5}",
            full.abs_rel, small.abs_rel
        ),
    )
}

fn criterion_8() -> Outcome {
    let terrain = AnalyticTerrain::SinusoidalHills { z0: 100.0, amplitude: 6.0, wavelength: 150.0 };
    let raw = sample_synthetic_gdem(&terrain, [-1000.0, 1000.0, -1000.0, 1000.0], 30.0, 0.0, 3).map_err(|e| e.to_string())?;
    let gdem = densify(&triangulate_2_5d(&raw).unwrap(), 0.05, 5).unwrap();
    let k = Intrinsics::new(512.0, 512.0, 512.0, 256.0, 1024, 512).unwrap();
    let pose = Pose::looking(Vec3::new(0.0, 0.0, 160.0), 30.0, 45.0, 60.0).unwrap();
    let cfg = OcclusionConfig::default();
    let mut times = Vec::new();
    let mut anchors = 0;
    for _ in 0..7 {
        let s = Instant::now();
        let map = project_gdem(&gdem.points, &pose, &k).map_err(|e| e.to_string())?;
        let kept = reject_occluded(&map, &cfg);
        times.push(s.elapsed().as_secs_f64() * 1e3);
        anchors = kept.count();
    }
    times.sort_by(f64::total_cmp);
    let median = times[times.len() / 2];
    check(
        median < 50.0 && (150_000..=250_000).contains(&gdem.len()),
        format!("{} GDEM points, {anchors} anchors kept, median {median:.1} ms per frame", gdem.len()),
    )
}

/// Straightforward per-pixel metric definitions.
fn brute_metrics(pred: &[f64], reference: &[f64]) -> [f64; 10] {
    let n = pred.len() as f64;
    let mut out = [0.0; 10];
    for (&d, &r) in pred.iter().zip(reference) {
        out[0] += (d - r).abs() / r / n;
        out[1] += (d - r) * (d - r) / r / n;
        out[2] += (d - r) * (d - r) / n;
        out[3] += (d.ln() - r.ln()).powi(2) / n;
        let ratio = f64::max(d / r, r / d);
        for t in 0..3 {
            if ratio < 1.25f64.powi(t as i32 + 1) {
                out[4 + t] += 1.0 / n;
            }
            if ratio < 1.025f64.powi(t as i32 + 1) {
                out[7 + t] += 1.0 / n;
            }
        }
    }
    out[2] = out[2].sqrt();
    out[3] = out[3].sqrt();
    out
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let wide = RangeMask::new(1e-3, 1e9).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let reference: Vec<f64> = (0..64).map(|_| rng.gen_range(5.0..200.0)).collect();
        let pred: Vec<f64> = reference.iter().map(|r| r * rng.gen_range(0.6..1.6)).collect();
        let m = compute_metrics(
            &Raster::from_vec(8, 8, pred.clone()).unwrap(),
            &Raster::from_vec(8, 8, reference.clone()).unwrap(),
            &wide,
        )
        .map_err(|e| e.to_string())?;
        for (a, b) in m.table_row().iter().zip(brute_metrics(&pred, &reference)) {
            worst = worst.max((a - b).abs());
        }
    }
    let reference = Raster::from_fn(8, 8, |u, v| 10.0 + (u * 8 + v) as f64);
    let pred = reference.map(|r| 1.03 * r);
    let m = compute_metrics(&pred, &reference, &wide).map_err(|e| e.to_string())?;
    check(
        worst <= 1e-12 && m.delta_bar[0] == 0.0 && m.delta_bar[1] == 1.0,
        format!("max deviation {worst:.1e} over 100 rasters; 1.03 case δ̄1={}, δ̄2={}", m.delta_bar[0], m.delta_bar[1]),
    )
}

fn criterion_10() -> Outcome {
    let spec = SceneSpec {
        n_frames: 4,
        disparity_noise: 0.02,
        gdem_sigma: 1.0,
        seed: 10,
        ..flat_spec(256, 128)
    };
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in 0..2 {
        let dir = root.path().join(format!("run{run}"));
        write_scene(&dir, &build_scene(&spec).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let mut cfg = PipelineConfig {
            gdem: GdemSource { path: layout::GDEM.into(), density: 0.05, seed: 42 },
            intrinsics: layout::INTRINSICS.into(),
            poses: layout::POSES.into(),
            disparity_dir: layout::DISPARITY_DIR.into(),
            output_dir: "out".into(),
            rough: spec.rough_params(),
            jobs: 1 + run,
            ..PipelineConfig::default()
        };
        cfg.resolve_paths(&dir);
        let (report, _) = run_pipeline(&cfg).map_err(|e| e.to_string())?;
        if !report.failures.is_empty() {
            return Err(format!("run {run} failures: {:?}", report.failures));
        }
        let mut files = Vec::new();
        let mut stack = vec![dir.clone()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).map_err(|e| e.to_string())? {
                let p = entry.map_err(|e| e.to_string())?.path();
                if p.is_dir() {
                    stack.push(p);
                } else if p.file_name().is_some_and(|n| n != "timing.json") {
                    files.push((p.strip_prefix(&dir).unwrap().to_path_buf(), std::fs::read(&p).map_err(|e| e.to_string())?));
                }
            }
        }
        files.sort();
        outputs.push(files);
    }
    check(
        outputs[0] == outputs[1],
        format!("{} files compared byte for byte across two runs (1 and 2 worker threads)", outputs[0].len()),
    )
}

fn criterion_11() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..10 {
        for j in 0..10 {
            let lat = -79.0 + i as f64 * 17.5;
            let lon = -177.0 + j as f64 * 39.0;
            let zone = UtmZone::from_lon_lat(lon, lat);
            let p = GeodeticPoint::new(lat, lon + 1.3, 0.0).unwrap();
            let (e, n) = geodetic_to_utm(&p, zone).map_err(|e| e.to_string())?;
            let (lat2, lon2) = utm_to_geodetic(e, n, zone);
            worst = worst.max((lat2 - p.latitude).abs()).max((lon2 - p.longitude).abs());
        }
    }
    // PROJ reference values
    let golden: [(f64, f64, &str, f64, f64); 6] = [
        (47.0, 9.0, "32N", 500_000.000_000, 5_205_164.110_152),
        (48.2, 10.5, "32N", 611_458.685_792, 5_339_617.543_069),
        (51.9, 7.3, "32N", 383_038.285_278, 5_751_281.659_824),
        (60.0, 6.2, "32N", 343_853.566_030, 6_654_716.392_473),
        (-25.75, 28.7, "35S", 670_506.204_083, 7_150_902.455_287),
        (45.2, 29.6, "35N", 704_205.217_674, 5_008_457.019_597),
    ];
    let mut worst_mm = 0.0f64;
    for (lat, lon, zone, e_ref, n_ref) in golden {
        let (e, n) = geodetic_to_utm(&GeodeticPoint::new(lat, lon, 0.0).unwrap(), UtmZone::parse(zone).unwrap()).map_err(|e| e.to_string())?;
        worst_mm = worst_mm.max((e - e_ref).abs() * 1e3).max((n - n_ref).abs() * 1e3);
    }
    check(
        worst < 1e-9 && worst_mm < 1.0,
        format!("round trip max {worst:.1e} deg over 100 points, golden max {worst_mm:.4} mm"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("exact affine recovery", criterion_1),
        ("closed-loop flat scene", criterion_2),
        ("closed-loop sloped scene", criterion_3),
        ("noise robustness", criterion_4),
        ("occlusion filter", criterion_5),
        ("CSF correctness", criterion_6),
        ("CSF speed-up", criterion_7),
        ("projection throughput", criterion_8),
        ("metric suite equivalence", criterion_9),
        ("determinism", criterion_10),
        ("geodesy", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
