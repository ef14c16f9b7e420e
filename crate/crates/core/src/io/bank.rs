//! Bank directory: `manifest.json` plus one image/mask pair per entry under
//! `bodies/` and `uteri/`. The manifest is written last.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{named_keypoints, parse_versioned, read_mask, read_text, read_volume, write_json, write_mask, write_volume};
use crate::error::{Error, Result};
use crate::heatmap::KeypointSet;
use crate::inpaint::{Bank, BodyEntry, InpaintParams, UterusEntry};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyRecord {
    pub source_id: String,
    pub image: String,
    pub mask: String,
    pub origin: [usize; 3],
    /// Crop coordinates.
    #[serde(with = "named_keypoints")]
    pub keypoints: KeypointSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UterusRecord {
    pub source_id: String,
    pub image: String,
    pub mask: String,
    pub fluid_median: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankManifest {
    pub version: u32,
    /// Parameters the entries were built with.
    pub params: InpaintParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub bodies: Vec<BodyRecord>,
    pub uteri: Vec<UterusRecord>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

pub fn save_bank(
    dir: impl AsRef<Path>,
    bank: &Bank,
    params: &InpaintParams,
    seed: Option<u64>,
    extra: Map<String, Value>,
) -> Result<BankManifest> {
    let dir = dir.as_ref();
    for sub in ["bodies", "uteri"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    let mut bodies = Vec::with_capacity(bank.bodies.len());
    for (i, b) in bank.bodies.iter().enumerate() {
        let rec = BodyRecord {
            source_id: b.source_id.clone(),
            image: format!("bodies/body_{i:05}.nii"),
            mask: format!("bodies/body_{i:05}_mask.nii"),
            origin: b.origin,
            keypoints: b.keypoints.clone(),
        };
        write_volume(&b.image, dir.join(&rec.image))?;
        write_mask(&b.body_mask, dir.join(&rec.mask))?;
        bodies.push(rec);
    }
    let mut uteri = Vec::with_capacity(bank.uteri.len());
    for (i, u) in bank.uteri.iter().enumerate() {
        let rec = UterusRecord {
            source_id: u.source_id.clone(),
            image: format!("uteri/uterus_{i:05}.nii"),
            mask: format!("uteri/uterus_{i:05}_mask.nii"),
            fluid_median: u.fluid_median,
            gamma: u.gamma,
        };
        write_volume(&u.image, dir.join(&rec.image))?;
        write_mask(&u.uterus_mask, dir.join(&rec.mask))?;
        uteri.push(rec);
    }
    let manifest = BankManifest {
        version: MANIFEST_VERSION,
        params: *params,
        seed,
        bodies,
        uteri,
        extra,
    };
    write_json(dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn load_bank(dir: impl AsRef<Path>) -> Result<(Bank, BankManifest)> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let manifest: BankManifest = parse_versioned(&read_text(&path)?, "bank manifest", MANIFEST_VERSION)
        .map_err(|e| match e {
            Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
            other => other,
        })?;
    manifest.params.validate()?;
    let mut bank = Bank {
        bodies: Vec::with_capacity(manifest.bodies.len()),
        uteri: Vec::with_capacity(manifest.uteri.len()),
    };
    for r in &manifest.bodies {
        let image = read_volume(dir.join(&r.image))?;
        let body_mask = read_mask(dir.join(&r.mask))?;
        image.check_same_grid(&body_mask, &r.mask)?;
        bank.bodies.push(BodyEntry {
            image,
            body_mask,
            keypoints: r.keypoints.clone(),
            source_id: r.source_id.clone(),
            origin: r.origin,
        });
    }
    for r in &manifest.uteri {
        let image = read_volume(dir.join(&r.image))?;
        let uterus_mask = read_mask(dir.join(&r.mask))?;
        image.check_same_grid(&uterus_mask, &r.mask)?;
        bank.uteri.push(UterusEntry {
            image,
            uterus_mask,
            source_id: r.source_id.clone(),
            fluid_median: r.fluid_median,
            gamma: r.gamma,
        });
    }
    Ok((bank, manifest))
}
