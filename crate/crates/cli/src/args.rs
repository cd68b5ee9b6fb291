use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use demscale::geodesy::XyzKind;
use demscale::pipeline::ScaleMethod;
use demscale::{Error, Result, SiteProfile};

pub const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (commit ",
    env!("DEMSCALE_COMMIT"),
    ", ",
    env!("DEMSCALE_TARGET"),
    ", ",
    env!("DEMSCALE_PROFILE"),
    ")"
);

/// Metric scale recovery for relative monocular depth using terrain elevation points.
///
/// Log level comes from DEMSCALE_LOG (default: info).
#[derive(Debug, Parser)]
#[command(name = "demscale", version = VERSION)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert an ASCII XYZ elevation file to a local-frame TDGD cloud.
    PrepareGdem(PrepareGdemArgs),
    /// Render a synthetic scene directory with a matching pipeline config.
    Synth(SynthArgs),
    /// Cloth-simulation ground mask for one frame.
    SegmentGround(SegmentGroundArgs),
    /// Recover metric depth for one frame.
    Scale(ScaleArgs),
    /// Compare predicted depths with references.
    Eval(EvalArgs),
    /// Process every frame listed in a TOML config.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Geodetic,
    Metric,
}

impl From<KindArg> for XyzKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Geodetic => XyzKind::Geodetic,
            KindArg::Metric => XyzKind::Metric,
        }
    }
}

#[derive(Debug, Args)]
pub struct PrepareGdemArgs {
    /// Whitespace-separated triples, `#` comments allowed.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value = "geodetic")]
    pub kind: KindArg,
    /// UTM zone such as `32N`; derived from the mean longitude if omitted.
    #[arg(long, value_parser = parse_zone)]
    pub zone: Option<demscale::geodesy::UtmZone>,
    /// Global shift `x,y,z` subtracted after projection.
    #[arg(long, value_parser = parse_triple)]
    pub shift: Option<[f64; 3]>,
    /// Densify to this many points per m²; 0 keeps the raw samples.
    #[arg(long, default_value_t = 0.0)]
    pub density: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output scene directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Scene description JSON; flags below override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub agl: Option<f64>,
    #[arg(long)]
    pub pitch: Option<f64>,
    /// Log-normal sigma on the metric disparity.
    #[arg(long)]
    pub disparity_noise: Option<f64>,
    /// Gaussian sigma on GDEM altitudes, metres.
    #[arg(long)]
    pub gdem_sigma: Option<f64>,
}

/// Inputs shared by the per-frame commands.
#[derive(Debug, Args)]
pub struct FrameArgs {
    #[arg(long)]
    pub disparity: PathBuf,
    /// JSONL pose file.
    #[arg(long)]
    pub pose: PathBuf,
    /// Record to use; defaults to the first line.
    #[arg(long)]
    pub frame_id: Option<String>,
    #[arg(long)]
    pub intrinsics: PathBuf,
    /// JSON object with `s_bar` and `t_bar`.
    #[arg(long)]
    pub rough_params: PathBuf,
    #[arg(long, value_parser = parse_profile, default_value = "default")]
    pub profile: SiteProfile,
    /// Run the cloth simulation at `WxH` and upsample the mask.
    #[arg(long, value_parser = parse_size)]
    pub csf_input_size: Option<[usize; 2]>,
}

#[derive(Debug, Args)]
pub struct SegmentGroundArgs {
    #[command(flatten)]
    pub frame: FrameArgs,
    /// Needed only when the pose record has no AGL.
    #[arg(long)]
    pub gdem: Option<PathBuf>,
    /// Mask PNG, ground = 255.
    #[arg(long)]
    pub output: PathBuf,
    /// Also write a row-major bitset, LSB first.
    #[arg(long)]
    pub bitset: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScaleArgs {
    #[command(flatten)]
    pub frame: FrameArgs,
    #[arg(long, value_parser = parse_method, default_value = "tandepth")]
    pub method: ScaleMethod,
    #[arg(long)]
    pub gdem: PathBuf,
    /// Points per m² when the GDEM is raw; 0 uses it as is.
    #[arg(long, default_value_t = 0.05)]
    pub density: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reference depth PFM for the median and reference methods.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, value_parser = parse_range, default_value = "30:150")]
    pub range: [f64; 2],
    /// Metric depth PFM; the sidecar goes next to it as `.json`.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred_dir: PathBuf,
    #[arg(long)]
    pub ref_dir: PathBuf,
    #[arg(long, value_parser = parse_range, default_value = "30:150")]
    pub range: [f64; 2],
    /// `.md` writes a Markdown table, anything else JSON.
    #[arg(long)]
    pub report: PathBuf,
    /// Per-frame AbsRel maps (PFM and PNG).
    #[arg(long)]
    pub plots: Option<PathBuf>,
    /// AbsRel mapped to white in the PNG maps.
    #[arg(long, default_value_t = 0.25)]
    pub plot_max: f64,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// TOML config; relative paths resolve against its directory.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_parser = parse_method)]
    pub method: Option<ScaleMethod>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_profile)]
    pub profile: Option<SiteProfile>,
    #[arg(long, value_parser = parse_range)]
    pub range: Option<[f64; 2]>,
    #[arg(long, value_parser = parse_size)]
    pub csf_input_size: Option<[usize; 2]>,
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_zone(s: &str) -> Result<demscale::geodesy::UtmZone> {
    demscale::geodesy::UtmZone::parse(s)
}

fn parse_method(s: &str) -> Result<ScaleMethod> {
    s.parse()
}

fn parse_profile(s: &str) -> Result<SiteProfile> {
    s.parse()
}

fn parse_triple(s: &str) -> Result<[f64; 3]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("bad triple {s:?}: {e}")))?;
    <[f64; 3]>::try_from(v).map_err(|_| Error::Config(format!("expected x,y,z, got {s:?}")))
}

pub fn parse_range(s: &str) -> Result<[f64; 2]> {
    let bad = || Error::Config(format!("expected a:b, got {s:?}"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    demscale::RangeMask::new(a, b)?;
    Ok([a, b])
}

fn parse_size(s: &str) -> Result<[usize; 2]> {
    let bad = || Error::Config(format!("expected WxH, got {s:?}"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok([w, h])
}
