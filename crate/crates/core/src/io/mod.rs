//! File formats: NIfTI-1 volumes and masks, versioned JSON documents for
//! keypoints, samples, bank manifests and evaluation reports.
//!
//! Every write goes to a temporary file in the destination directory and is
//! renamed into place, so readers never observe partial files.

mod bank;
mod nifti;

pub use bank::{load_bank, save_bank, BankManifest, BodyRecord, UterusRecord, MANIFEST_FILE, MANIFEST_VERSION};
pub use nifti::{
    decode_volume, encode_mask, encode_volume, read_mask, read_volume, write_mask, write_volume,
    Datatype, NiftiHeader,
};

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::augment::{AugmentConfig, AugmentLog, LabeledSample, Provenance, SampleMasks};
use crate::error::{Error, Result};
use crate::eval::{Counts, EvalReport, GaTable, SummaryRow};
use crate::heatmap::{Keypoint, KeypointSet, KEYPOINT_NAMES, NUM_KEYPOINTS};
use crate::inpaint::InpaintParams;
use crate::phantom::PhantomSpec;

pub const KEYPOINT_FILE_VERSION: u32 = 1;
pub const REPORT_VERSION: u32 = 1;

/// Write `bytes` to `path` through a temporary sibling and an atomic rename.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(value)?)
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

/// Parse a document whose top-level `version` must equal `expected`.
pub fn parse_versioned<T: DeserializeOwned>(text: &str, kind: &str, expected: u32) -> Result<T> {
    let value: Value = serde_json::from_str(text)?;
    let version = value
        .get("version")
        .ok_or_else(|| Error::Schema(format!("{kind}: missing version")))?;
    if version.as_u64() != Some(expected as u64) {
        return Err(Error::Schema(format!(
            "{kind}: unsupported version {version} (expected {expected})"
        )));
    }
    Ok(serde_json::from_value(value)?)
}

/// Serde adapter writing a [`KeypointSet`] as a list of named entries
/// `{name, x, y, z, visible}`. Reading requires every name exactly once.
pub mod named_keypoints {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Entry {
        name: String,
        x: f64,
        y: f64,
        z: f64,
        visible: bool,
    }

    pub fn serialize<S: Serializer>(k: &KeypointSet, s: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<Entry> = k
            .iter()
            .zip(KEYPOINT_NAMES)
            .map(|(p, name)| Entry {
                name: name.to_string(),
                x: p.position[0],
                y: p.position[1],
                z: p.position[2],
                visible: p.visible,
            })
            .collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<KeypointSet, D::Error> {
        use serde::de::Error as _;
        let entries = Vec::<Entry>::deserialize(d)?;
        let mut slots: [Option<Keypoint>; NUM_KEYPOINTS] = [None; NUM_KEYPOINTS];
        for e in entries {
            let i = crate::heatmap::keypoint_index(&e.name)
                .ok_or_else(|| D::Error::custom(format!("unknown keypoint name '{}'", e.name)))?;
            if slots[i].is_some() {
                return Err(D::Error::custom(format!("duplicate keypoint entry '{}'", e.name)));
            }
            slots[i] = Some(Keypoint {
                position: [e.x, e.y, e.z],
                visible: e.visible,
            });
        }
        let missing: Vec<&str> = (0..NUM_KEYPOINTS)
            .filter(|&i| slots[i].is_none())
            .map(|i| KEYPOINT_NAMES[i])
            .collect();
        if !missing.is_empty() {
            return Err(D::Error::custom(format!("missing keypoint entry '{}'", missing.join("', '"))));
        }
        Ok(KeypointSet::new(slots.map(|s| s.expect("checked"))))
    }
}

/// Keypoint annotation document. Fields it does not know are kept in `extra`
/// and written back unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointFile {
    pub version: u32,
    pub acquisition_id: String,
    /// Path of the annotated volume, relative to this file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ga_weeks: Option<f64>,
    #[serde(with = "named_keypoints")]
    pub keypoints: KeypointSet,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl KeypointFile {
    pub fn new(acquisition_id: impl Into<String>, keypoints: KeypointSet) -> Self {
        KeypointFile {
            version: KEYPOINT_FILE_VERSION,
            acquisition_id: acquisition_id.into(),
            volume: None,
            ga_weeks: None,
            keypoints,
            extra: Map::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_versioned(text, "keypoint file", KEYPOINT_FILE_VERSION)
    }
}

pub fn read_keypoints(path: impl AsRef<Path>) -> Result<KeypointFile> {
    let path = path.as_ref();
    KeypointFile::parse(&read_text(path)?).map_err(|e| with_path(e, path))
}

pub fn write_keypoints(path: impl AsRef<Path>, file: &KeypointFile) -> Result<()> {
    write_json(path, file)
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn read_config<T: DeserializeOwned>(path: &Path, validate: impl Fn(&T) -> Result<()>) -> Result<T> {
    let cfg: T = read_json(path)?;
    validate(&cfg)?;
    Ok(cfg)
}

/// Configs reject unknown fields and are range-checked after parsing.
pub fn read_augment_config(path: impl AsRef<Path>) -> Result<AugmentConfig> {
    read_config(path.as_ref(), AugmentConfig::validate)
}

pub fn read_inpaint_params(path: impl AsRef<Path>) -> Result<InpaintParams> {
    read_config(path.as_ref(), InpaintParams::validate)
}

pub fn read_phantom_spec(path: impl AsRef<Path>) -> Result<PhantomSpec> {
    read_config(path.as_ref(), PhantomSpec::validate)
}

/// File names used for a sample stored under `stem`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskFiles {
    pub body: String,
    pub fluid: String,
    pub uterus: String,
}

/// Write `<stem>.nii`, `<stem>.json` and, when present, `<stem>_body.nii`,
/// `<stem>_fluid.nii`, `<stem>_uterus.nii`. `extra` entries are merged into
/// the keypoint document.
pub fn write_sample(
    dir: impl AsRef<Path>,
    stem: &str,
    sample: &LabeledSample,
    ga_weeks: Option<f64>,
    mut extra: Map<String, Value>,
) -> Result<()> {
    let dir = dir.as_ref();
    let volume = format!("{stem}.nii");
    write_volume(&sample.volume, dir.join(&volume))?;
    if let Some(m) = &sample.masks {
        let files = MaskFiles {
            body: format!("{stem}_body.nii"),
            fluid: format!("{stem}_fluid.nii"),
            uterus: format!("{stem}_uterus.nii"),
        };
        write_mask(&m.body, dir.join(&files.body))?;
        write_mask(&m.fluid, dir.join(&files.fluid))?;
        write_mask(&m.uterus, dir.join(&files.uterus))?;
        extra.insert("masks".into(), serde_json::to_value(files)?);
    }
    extra.insert("heatmap_sigma".into(), serde_json::to_value(sample.heatmap_sigma)?);
    extra.insert("provenance".into(), serde_json::to_value(sample.provenance())?);
    let mut doc = KeypointFile::new(sample.acquisition_id.clone(), sample.keypoints.clone());
    doc.volume = Some(volume);
    doc.ga_weeks = ga_weeks;
    doc.extra = extra;
    write_keypoints(dir.join(format!("{stem}.json")), &doc)
}

/// Read a sample written by [`write_sample`] from its keypoint document.
pub fn read_sample(json_path: impl AsRef<Path>) -> Result<(LabeledSample, KeypointFile)> {
    let json_path = json_path.as_ref();
    let doc = read_keypoints(json_path)?;
    let dir = json_path.parent().unwrap_or(Path::new("."));
    let volume = doc
        .volume
        .as_ref()
        .ok_or_else(|| Error::Schema(format!("{}: no volume reference", json_path.display())))?;
    let vol = read_volume(dir.join(volume))?;
    let field = |k: &str| doc.extra.get(k).cloned();
    let sigma = match field("heatmap_sigma") {
        Some(v) => serde_json::from_value(v)?,
        None => crate::heatmap::DEFAULT_SIGMA_VOX,
    };
    let provenance = match field("provenance") {
        Some(v) => serde_json::from_value(v)?,
        None => Provenance::Raw,
    };
    let mut sample = LabeledSample::new(vol, doc.keypoints.clone(), sigma, provenance, doc.acquisition_id.clone())?;
    if let Some(m) = field("masks") {
        let files: MaskFiles = serde_json::from_value(m)?;
        let masks = SampleMasks {
            body: read_mask(dir.join(&files.body))?,
            fluid: read_mask(dir.join(&files.fluid))?,
            uterus: read_mask(dir.join(&files.uterus))?,
        };
        sample = sample.with_masks(masks)?;
    }
    Ok((sample, doc))
}

/// Augmentation log as stored in sample documents.
pub fn log_value(log: &AugmentLog) -> Result<Value> {
    Ok(serde_json::to_value(log)?)
}

/// Evaluation report document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub version: u32,
    pub report: EvalReport,
    pub summary: Vec<SummaryRow>,
    /// Pooled counts for groups 1-3.
    pub groups: [Counts; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ga_bins: Option<GaTable>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ReportFile {
    pub fn new(report: EvalReport) -> Self {
        let summary = report.summary();
        let groups = crate::eval::group_stats(&report);
        ReportFile {
            version: REPORT_VERSION,
            report,
            summary,
            groups,
            ga_bins: None,
            extra: Map::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_versioned(text, "report", REPORT_VERSION)
    }
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ReportFile> {
    let path = path.as_ref();
    ReportFile::parse(&read_text(path)?).map_err(|e| with_path(e, path))
}
