//! Command-line front end: argument definitions and subcommand drivers.
//!
//! Every subcommand returns a JSON summary that `main` prints as one line on
//! stdout. Randomized subcommands derive one RNG substream per output index,
//! so results do not depend on `--workers`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use fetalaug::augment::{apply_pipeline, AugmentConfig, LabeledSample};
use fetalaug::eval::{ga_binned_stats, pck, AcquisitionSeries, Frame};
use fetalaug::heatmap::{extract, synthesize, HeatmapStack, KEYPOINT_NAMES, NUM_KEYPOINTS};
use fetalaug::inpaint::{build_bank_entry, mix_choice, sample_composite, Bank, InpaintParams};
use fetalaug::io::{self, KeypointFile, ReportFile};
use fetalaug::phantom::{make_phantom, PhantomSpec};
use fetalaug::rng::{substream, Domain};
use fetalaug::Error;

pub const OUTPUT_MANIFEST_VERSION: u32 = 1;
pub const HEATMAP_INDEX_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const HEATMAP_INDEX_FILE: &str = "heatmaps.json";

#[derive(Debug, Parser)]
#[command(name = "fetalaug", version, about = "Fetal pose volume augmentation toolkit")]
pub struct Cli {
    /// Master seed; required by every randomized subcommand.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// JSON run configuration; its values override flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic phantoms.
    #[command(subcommand)]
    Phantom(PhantomCmd),
    /// Inpainting banks.
    #[command(subcommand)]
    Bank(BankCmd),
    /// Augmentation streams.
    #[command(subcommand)]
    Augment(AugmentCmd),
    /// Inpainted composites.
    #[command(subcommand)]
    Composite(CompositeCmd),
    /// Ground-truth heatmaps.
    #[command(subcommand)]
    Heatmap(HeatmapCmd),
    /// Keypoints from heatmaps.
    #[command(subcommand)]
    Keypoints(KeypointsCmd),
    /// Evaluation.
    #[command(subcommand)]
    Eval(EvalCmd),
}

#[derive(Debug, Subcommand)]
pub enum PhantomCmd {
    /// Write phantom samples with masks and keypoints.
    Gen(PhantomGen),
}

#[derive(Debug, Args)]
pub struct PhantomGen {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Use 2 mm spacing instead of 3 mm.
    #[arg(long)]
    pub clinical: bool,
}

#[derive(Debug, Subcommand)]
pub enum BankCmd {
    /// Build a bank from masked samples.
    Build(BankBuild),
}

#[derive(Debug, Args)]
pub struct BankBuild {
    /// Directory of samples with body and fluid masks.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum AugmentCmd {
    /// Augment samples, optionally mixing in bank composites.
    Run(AugmentRun),
}

#[derive(Debug, Args)]
pub struct AugmentRun {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Output count; inputs are cycled. Defaults to the number of inputs.
    #[arg(long)]
    pub count: Option<usize>,
    /// Bank to draw composites from.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Fraction of outputs drawn from the bank.
    #[arg(long, default_value_t = 0.0)]
    pub mix_fraction: f64,
}

#[derive(Debug, Subcommand)]
pub enum CompositeCmd {
    /// Sample composites from a bank.
    Sample(CompositeSample),
}

#[derive(Debug, Args)]
pub struct CompositeSample {
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
}

#[derive(Debug, Subcommand)]
pub enum HeatmapCmd {
    /// Synthesize the 15 heatmap channels of a sample.
    Make(HeatmapMake),
}

#[derive(Debug, Args)]
pub struct HeatmapMake {
    /// Sample keypoint document.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Heatmap σ in voxels; defaults to the sample's.
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum KeypointsCmd {
    /// Extract sub-voxel keypoints from a heatmap directory.
    Extract(KeypointsExtract),
}

#[derive(Debug, Args)]
pub struct KeypointsExtract {
    /// Directory written by `heatmap make`.
    #[arg(long)]
    pub input: PathBuf,
    /// Output keypoint document.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// PCK of predicted against ground-truth keypoint documents.
    Pck(EvalPck),
}

#[derive(Debug, Args)]
pub struct EvalPck {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub tau: f64,
    /// JSON report path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// GA bin edges in weeks, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ga_bins: Option<Vec<f64>>,
    /// Spacing (mm) for documents that do not record one, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub spacing: Option<Vec<f64>>,
}

/// Values from `--config`; each present field overrides the matching flag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub tau_mm: Option<f64>,
    pub mix_fraction: Option<f64>,
    pub augment: Option<AugmentConfig>,
    pub inpaint: Option<InpaintParams>,
    pub phantom: Option<PhantomSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                Error::Io { .. } => 3,
                Error::Schema(_) | Error::Format(_) => 4,
                Error::PlacementInfeasible { .. } => 5,
                _ => 1,
            },
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.code(),
        }
    }

    /// Structured error line for stderr.
    pub fn to_json(&self) -> Value {
        json!({ "error": self.code(), "exit_code": self.exit_code(), "message": self.to_string() })
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Entry of the manifest written next to generated samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub index: usize,
    pub stem: String,
    pub acquisition_id: String,
    pub provenance: fetalaug::Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputManifest {
    pub version: u32,
    pub command: String,
    pub seed: u64,
    pub entries: Vec<OutputEntry>,
}

/// Index of channel files written by `heatmap make`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapIndex {
    pub version: u32,
    pub acquisition_id: String,
    pub sigma_vox: f64,
    pub spacing: [f64; 3],
    pub channels: Vec<HeatmapChannel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapChannel {
    pub name: String,
    pub file: String,
    pub valid: bool,
}

struct Resolved {
    seed: Option<u64>,
    workers: usize,
    config: RunConfig,
}

impl Resolved {
    fn seed(&self) -> CliResult<u64> {
        self.seed
            .ok_or_else(|| CliError::Usage("this subcommand is randomized and requires --seed".into()))
    }
}

/// Parse-free entry point used by `main` and tests.
pub fn run(cli: Cli) -> CliResult<Value> {
    let config = match &cli.config {
        Some(p) => {
            let cfg: RunConfig = io::read_json(p)?;
            if let Some(a) = &cfg.augment {
                a.validate()?;
            }
            if let Some(i) = &cfg.inpaint {
                i.validate()?;
            }
            if let Some(s) = &cfg.phantom {
                s.validate()?;
            }
            cfg
        }
        None => RunConfig::default(),
    };
    let r = Resolved {
        seed: config.seed.or(cli.seed),
        workers: config.workers.unwrap_or(cli.workers),
        config,
    };
    if r.workers == 0 {
        return Err(CliError::Usage("--workers must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(r.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", r.workers)))?;
    pool.install(|| match &cli.command {
        Command::Phantom(PhantomCmd::Gen(a)) => phantom_gen(&r, a),
        Command::Bank(BankCmd::Build(a)) => bank_build(&r, a),
        Command::Augment(AugmentCmd::Run(a)) => augment_run(&r, a),
        Command::Composite(CompositeCmd::Sample(a)) => composite_sample(&r, a),
        Command::Heatmap(HeatmapCmd::Make(a)) => heatmap_make(a),
        Command::Keypoints(KeypointsCmd::Extract(a)) => keypoints_extract(a),
        Command::Eval(EvalCmd::Pck(a)) => eval_pck(&r, a),
    })
}

fn require_dir(p: &Path, what: &str) -> CliResult<()> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(CliError::Core(Error::io(
            p,
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} directory not found")),
        )))
    }
}

fn create_dir(p: &Path) -> CliResult<()> {
    std::fs::create_dir_all(p).map_err(|e| CliError::Core(Error::io(p, e)))
}

/// Sample documents in `dir`, sorted by file name.
pub fn list_documents(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.ends_with(".json") && name != MANIFEST_FILE && name != HEATMAP_INDEX_FILE {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn stem_of(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or("sample").to_string()
}

fn spacing_extra(sample: &LabeledSample) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("spacing".into(), json!(sample.volume.spacing()));
    m
}

fn write_outputs(out: &Path, command: &str, seed: u64, entries: Vec<OutputEntry>) -> CliResult<()> {
    let manifest = OutputManifest {
        version: OUTPUT_MANIFEST_VERSION,
        command: command.into(),
        seed,
        entries,
    };
    io::write_json(out.join(MANIFEST_FILE), &manifest)?;
    Ok(())
}

fn entry(index: usize, stem: String, s: &LabeledSample) -> OutputEntry {
    OutputEntry {
        index,
        stem,
        acquisition_id: s.acquisition_id.clone(),
        provenance: s.provenance(),
    }
}

fn phantom_gen(r: &Resolved, a: &PhantomGen) -> CliResult<Value> {
    let seed = r.seed()?;
    let mut spec = r.config.phantom.clone().unwrap_or_default();
    if a.clinical && r.config.phantom.is_none() {
        spec.spacing = PhantomSpec::clinical().spacing;
    }
    spec.validate()?;
    create_dir(&a.out)?;
    let entries = (0..a.count)
        .into_par_iter()
        .map(|i| -> CliResult<OutputEntry> {
            let mut p = make_phantom(&spec, &mut substream(seed, Domain::Phantom, i as u64))?;
            p.sample.acquisition_id = format!("phantom_{i:05}");
            let stem = format!("phantom_{i:05}");
            let mut extra = spacing_extra(&p.sample);
            extra.insert("skeleton".into(), serde_json::to_value(&p.skeleton).map_err(Error::from)?);
            io::write_sample(&a.out, &stem, &p.sample, Some(p.ga_weeks), extra)?;
            Ok(entry(i, stem, &p.sample))
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_outputs(&a.out, "phantom gen", seed, entries)?;
    Ok(json!({ "command": "phantom gen", "count": a.count, "out": a.out }))
}

fn bank_build(r: &Resolved, a: &BankBuild) -> CliResult<Value> {
    let seed = r.seed()?;
    let params = r.config.inpaint.unwrap_or_default();
    params.validate()?;
    require_dir(&a.input, "input")?;
    let docs = list_documents(&a.input)?;
    let pairs = docs
        .par_iter()
        .enumerate()
        .map(|(i, path)| -> CliResult<_> {
            let (s, _) = io::read_sample(path)?;
            let masks = s.masks.as_ref().ok_or_else(|| {
                Error::Data(format!("{}: sample has no masks", path.display()))
            })?;
            let pair = build_bank_entry(
                &s.volume,
                &masks.body,
                &masks.fluid,
                &s.keypoints,
                &params,
                &mut substream(seed, Domain::Bank, i as u64),
                &stem_of(path),
            )?;
            Ok(pair)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut bank = Bank {
        bodies: Vec::with_capacity(pairs.len()),
        uteri: Vec::with_capacity(pairs.len()),
    };
    for (u, b) in pairs {
        bank.uteri.push(u);
        bank.bodies.push(b);
    }
    create_dir(&a.out)?;
    io::save_bank(&a.out, &bank, &params, Some(seed), Map::new())?;
    Ok(json!({ "command": "bank build", "bodies": bank.bodies.len(), "uteri": bank.uteri.len(), "out": a.out }))
}

fn augment_run(r: &Resolved, a: &AugmentRun) -> CliResult<Value> {
    let seed = r.seed()?;
    let cfg = r.config.augment.unwrap_or_default();
    cfg.validate()?;
    let fraction = r.config.mix_fraction.unwrap_or(a.mix_fraction);
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Parameter(format!("mix fraction must lie in [0, 1], got {fraction}")).into());
    }
    require_dir(&a.input, "input")?;
    let docs = list_documents(&a.input)?;
    let inputs = docs
        .par_iter()
        .map(|p| Ok((stem_of(p), io::read_sample(p)?.0)))
        .collect::<CliResult<Vec<_>>>()?;
    let bank = match &a.bank {
        Some(dir) => Some(io::load_bank(dir)?),
        None if fraction > 0.0 => return Err(CliError::Usage("--mix-fraction needs --bank".into())),
        None => None,
    };
    let count = a.count.unwrap_or(inputs.len());
    if count > 0 && inputs.is_empty() {
        return Err(Error::Data(format!("{}: no input samples", a.input.display())).into());
    }
    let params = r.config.inpaint.or_else(|| bank.as_ref().map(|b| b.1.params)).unwrap_or_default();
    create_dir(&a.out)?;
    let entries = (0..count)
        .into_par_iter()
        .map(|i| -> CliResult<OutputEntry> {
            let mut extra = Map::new();
            let composite = match &bank {
                Some((bank, _)) if mix_choice(seed, i as u64, fraction) => {
                    let (s, placement) = sample_composite(bank, &params, &mut substream(seed, Domain::Composite, i as u64))?;
                    extra.insert("placement".into(), serde_json::to_value(placement).map_err(Error::from)?);
                    Some(s)
                }
                _ => None,
            };
            let source = match &composite {
                Some(s) => s,
                None => {
                    let (stem, s) = &inputs[i % inputs.len()];
                    extra.insert("source".into(), Value::from(stem.clone()));
                    s
                }
            };
            let (out, log) = apply_pipeline(source, &cfg, &mut substream(seed, Domain::Augment, i as u64))?;
            extra.insert("augment_log".into(), io::log_value(&log)?);
            extra.extend(spacing_extra(&out));
            let stem = format!("aug_{i:05}");
            io::write_sample(&a.out, &stem, &out, None, extra)?;
            Ok(entry(i, stem, &out))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let inpainted = entries.iter().filter(|e| e.provenance == fetalaug::Provenance::Inpainted).count();
    write_outputs(&a.out, "augment run", seed, entries)?;
    Ok(json!({ "command": "augment run", "count": count, "inpainted": inpainted, "out": a.out }))
}

fn composite_sample(r: &Resolved, a: &CompositeSample) -> CliResult<Value> {
    let seed = r.seed()?;
    require_dir(&a.bank, "bank")?;
    let (bank, manifest) = io::load_bank(&a.bank)?;
    let params = r.config.inpaint.unwrap_or(manifest.params);
    params.validate()?;
    create_dir(&a.out)?;
    let entries = (0..a.count)
        .into_par_iter()
        .map(|i| -> CliResult<OutputEntry> {
            let (s, placement) = sample_composite(&bank, &params, &mut substream(seed, Domain::Composite, i as u64))?;
            let mut extra = spacing_extra(&s);
            extra.insert("placement".into(), serde_json::to_value(placement).map_err(Error::from)?);
            let stem = format!("composite_{i:05}");
            io::write_sample(&a.out, &stem, &s, None, extra)?;
            Ok(entry(i, stem, &s))
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_outputs(&a.out, "composite sample", seed, entries)?;
    Ok(json!({ "command": "composite sample", "count": a.count, "out": a.out }))
}

fn heatmap_make(a: &HeatmapMake) -> CliResult<Value> {
    let (s, _) = io::read_sample(&a.input)?;
    let sigma = a.sigma.unwrap_or(s.heatmap_sigma);
    let hm = synthesize(&s.keypoints, s.volume.dims(), sigma)?;
    create_dir(&a.out)?;
    let spacing = s.volume.spacing();
    let channels = (0..NUM_KEYPOINTS)
        .into_par_iter()
        .map(|i| -> CliResult<HeatmapChannel> {
            let file = format!("heatmap_{}.nii", KEYPOINT_NAMES[i]);
            io::write_volume(&hm.channel_volume(i, spacing)?, a.out.join(&file))?;
            Ok(HeatmapChannel {
                name: KEYPOINT_NAMES[i].into(),
                file,
                valid: hm.valid()[i],
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let index = HeatmapIndex {
        version: HEATMAP_INDEX_VERSION,
        acquisition_id: s.acquisition_id.clone(),
        sigma_vox: sigma,
        spacing,
        channels,
    };
    io::write_json(a.out.join(HEATMAP_INDEX_FILE), &index)?;
    Ok(json!({ "command": "heatmap make", "sigma_vox": sigma, "valid": hm.valid().iter().filter(|v| **v).count(), "out": a.out }))
}

fn keypoints_extract(a: &KeypointsExtract) -> CliResult<Value> {
    let index: HeatmapIndex =
        io::parse_versioned(&io::read_text(a.input.join(HEATMAP_INDEX_FILE))?, "heatmap index", HEATMAP_INDEX_VERSION)?;
    if index.channels.len() != NUM_KEYPOINTS
        || index.channels.iter().zip(KEYPOINT_NAMES).any(|(c, n)| c.name != n)
    {
        return Err(Error::Schema("heatmap index must list the 15 channels in keypoint order".into()).into());
    }
    let vols = index
        .channels
        .par_iter()
        .map(|c| io::read_volume(a.input.join(&c.file)))
        .collect::<Result<Vec<_>, _>>()?;
    let dims = vols[0].dims();
    if let Some(v) = vols.iter().find(|v| v.dims() != dims) {
        return Err(Error::Shape(format!("channel dims {:?} differ from {dims:?}", v.dims())).into());
    }
    let valid = std::array::from_fn(|i| index.channels[i].valid);
    let hm = HeatmapStack::from_channels(dims, index.sigma_vox, vols.into_iter().map(|v| v.into_data()).collect(), valid)?;
    let kps = extract(&hm)?;
    let mut doc = KeypointFile::new(index.acquisition_id, kps);
    doc.extra.insert("spacing".into(), json!(index.spacing));
    io::write_keypoints(&a.out, &doc)?;
    Ok(json!({ "command": "keypoints extract", "visible": doc.keypoints.visible_count(), "out": a.out }))
}

fn doc_spacing(doc: &KeypointFile) -> CliResult<Option<[f64; 3]>> {
    match doc.extra.get("spacing") {
        Some(v) => Ok(Some(serde_json::from_value(v.clone()).map_err(Error::from)?)),
        None => Ok(None),
    }
}

/// Pair prediction and ground-truth documents by file name and group frames
/// into acquisitions by ground-truth `acquisition_id`, in file-name order.
pub fn load_series(pred_dir: &Path, gt_dir: &Path, fallback_spacing: Option<[f64; 3]>) -> CliResult<Vec<AcquisitionSeries>> {
    require_dir(pred_dir, "prediction")?;
    require_dir(gt_dir, "ground-truth")?;
    let gts = list_documents(gt_dir)?;
    let mut groups: Vec<(String, Option<f64>, Vec<Frame>)> = Vec::new();
    for gt_path in gts {
        let name = gt_path.file_name().expect("listed file");
        let gt = io::read_keypoints(&gt_path)?;
        let pred = io::read_keypoints(pred_dir.join(name))?;
        let spacing = match (doc_spacing(&gt)?, doc_spacing(&pred)?, fallback_spacing) {
            (Some(s), _, _) | (None, Some(s), _) | (None, None, Some(s)) => s,
            _ => {
                return Err(Error::Schema(format!(
                    "{}: no spacing recorded; pass --spacing",
                    gt_path.display()
                ))
                .into())
            }
        };
        let frame = Frame {
            prediction: pred.keypoints,
            ground_truth: gt.keypoints,
            spacing,
        };
        match groups.iter_mut().find(|g| g.0 == gt.acquisition_id) {
            Some(g) => g.2.push(frame),
            None => groups.push((gt.acquisition_id, gt.ga_weeks, vec![frame])),
        }
    }
    groups
        .into_iter()
        .map(|(id, ga, frames)| Ok(AcquisitionSeries::new(id, frames, ga)?))
        .collect()
}

fn eval_pck(r: &Resolved, a: &EvalPck) -> CliResult<Value> {
    let tau = r.config.tau_mm.unwrap_or(a.tau);
    let spacing = match a.spacing.as_deref() {
        None => None,
        Some(&[x, y, z]) => Some([x, y, z]),
        Some(_) => return Err(CliError::Usage("--spacing takes exactly three values".into())),
    };
    let series = load_series(&a.pred, &a.gt, spacing)?;
    let report = pck(&series, tau)?;
    let mut file = ReportFile::new(report);
    if let Some(edges) = &a.ga_bins {
        file.ga_bins = Some(ga_binned_stats(&file.report, edges)?);
    }
    io::write_json(&a.out, &file)?;
    if let Some(csv) = &a.csv {
        let mut buf = Vec::new();
        file.report.write_csv(&mut buf)?;
        io::write_atomic(csv, &buf)?;
    }
    let total = file.report.total();
    Ok(json!({
        "command": "eval pck",
        "tau_mm": tau,
        "acquisitions": file.report.acquisitions.len(),
        "evaluated": total.evaluated,
        "correct": total.correct,
        "pck": total.pck(),
        "out": a.out,
    }))
}
