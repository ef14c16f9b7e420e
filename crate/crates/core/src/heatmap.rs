//! Keypoint sets, ground-truth Gaussian heatmaps and sub-voxel extraction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{point_in_grid, Point3, Volume};

pub const NUM_KEYPOINTS: usize = 15;

/// Fixed channel order used by every file format and array interface.
pub const KEYPOINT_NAMES: [&str; NUM_KEYPOINTS] = [
    "bladder",
    "eye_L",
    "eye_R",
    "shoulder_L",
    "shoulder_R",
    "elbow_L",
    "elbow_R",
    "wrist_L",
    "wrist_R",
    "hip_L",
    "hip_R",
    "knee_L",
    "knee_R",
    "ankle_L",
    "ankle_R",
];

/// Stabilizer in the refinement denominator.
pub const REFINE_EPS: f64 = 1e-10;

pub const DEFAULT_SIGMA_VOX: f64 = 2.0;

pub fn keypoint_index(name: &str) -> Option<usize> {
    KEYPOINT_NAMES.iter().position(|n| *n == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub position: Point3,
    pub visible: bool,
}

impl Keypoint {
    pub fn visible(position: Point3) -> Self {
        Keypoint {
            position,
            visible: true,
        }
    }

    pub fn hidden() -> Self {
        Keypoint {
            position: [0.0; 3],
            visible: false,
        }
    }
}

/// The 15 landmarks in [`KEYPOINT_NAMES`] order, in continuous voxel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeypointSet {
    points: [Keypoint; NUM_KEYPOINTS],
}

impl KeypointSet {
    pub fn new(points: [Keypoint; NUM_KEYPOINTS]) -> Self {
        KeypointSet { points }
    }

    pub fn from_positions(positions: [Point3; NUM_KEYPOINTS]) -> Self {
        KeypointSet {
            points: positions.map(Keypoint::visible),
        }
    }

    pub fn hidden() -> Self {
        KeypointSet {
            points: [Keypoint::hidden(); NUM_KEYPOINTS],
        }
    }

    pub fn points(&self) -> &[Keypoint; NUM_KEYPOINTS] {
        &self.points
    }

    pub fn get(&self, i: usize) -> &Keypoint {
        &self.points[i]
    }

    pub fn set(&mut self, i: usize, kp: Keypoint) {
        self.points[i] = kp;
    }

    pub fn by_name(&self, name: &str) -> Option<&Keypoint> {
        keypoint_index(name).map(|i| &self.points[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Keypoint> {
        self.points.iter()
    }

    pub fn visible_count(&self) -> usize {
        self.points.iter().filter(|k| k.visible).count()
    }

    /// Apply `f` to every visible position, then hide points that leave `dims`.
    pub fn map_within(&self, dims: [usize; 3], f: impl Fn(Point3) -> Point3) -> KeypointSet {
        let points = self.points.map(|k| {
            if !k.visible {
                return k;
            }
            let p = f(k.position);
            Keypoint {
                position: p,
                visible: point_in_grid(dims, p),
            }
        });
        KeypointSet { points }
    }

    /// Error if a visible keypoint lies outside the voxel-center hull of `dims`.
    pub fn check_within(&self, dims: [usize; 3]) -> Result<()> {
        for (k, name) in self.points.iter().zip(KEYPOINT_NAMES) {
            if k.position.iter().any(|c| !c.is_finite()) {
                return Err(Error::InputDomain(format!("keypoint {name} is not finite")));
            }
            if k.visible && !point_in_grid(dims, k.position) {
                return Err(Error::Data(format!(
                    "visible keypoint {name} at {:?} lies outside grid {dims:?}",
                    k.position
                )));
            }
        }
        Ok(())
    }

    /// 15×4 table `(x, y, z, visible)` used at array boundaries.
    pub fn to_table(&self) -> Vec<[f64; 4]> {
        self.points
            .iter()
            .map(|k| {
                let [x, y, z] = k.position;
                [x, y, z, if k.visible { 1.0 } else { 0.0 }]
            })
            .collect()
    }

    pub fn from_table(rows: &[[f64; 4]]) -> Result<Self> {
        if rows.len() != NUM_KEYPOINTS {
            return Err(Error::Shape(format!(
                "keypoint table needs {NUM_KEYPOINTS} rows, got {}",
                rows.len()
            )));
        }
        let mut points = [Keypoint::hidden(); NUM_KEYPOINTS];
        for (i, r) in rows.iter().enumerate() {
            if r[3] != 0.0 && r[3] != 1.0 {
                return Err(Error::Parameter(format!(
                    "row {i}: visibility must be 0 or 1, got {}",
                    r[3]
                )));
            }
            points[i] = Keypoint {
                position: [r[0], r[1], r[2]],
                visible: r[3] == 1.0,
            };
        }
        Ok(KeypointSet { points })
    }
}

/// One scalar grid per keypoint plus the σ used at synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack {
    dims: [usize; 3],
    sigma_vox: f64,
    channels: Vec<Vec<f32>>,
    valid: [bool; NUM_KEYPOINTS],
}

impl HeatmapStack {
    /// Wrap externally produced channels (e.g. network predictions). Values
    /// are not range-checked.
    pub fn from_channels(
        dims: [usize; 3],
        sigma_vox: f64,
        channels: Vec<Vec<f32>>,
        valid: [bool; NUM_KEYPOINTS],
    ) -> Result<Self> {
        if !(sigma_vox > 0.0 && sigma_vox.is_finite()) {
            return Err(Error::Parameter(format!("sigma must be > 0, got {sigma_vox}")));
        }
        if channels.len() != NUM_KEYPOINTS {
            return Err(Error::Shape(format!(
                "expected {NUM_KEYPOINTS} channels, got {}",
                channels.len()
            )));
        }
        let n = dims.iter().product::<usize>();
        if n == 0 || channels.iter().any(|c| c.len() != n) {
            return Err(Error::Shape(format!("channel length must equal {dims:?}")));
        }
        Ok(HeatmapStack {
            dims,
            sigma_vox,
            channels,
            valid,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn sigma_vox(&self) -> f64 {
        self.sigma_vox
    }

    pub fn channel(&self, i: usize) -> &[f32] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f32>] {
        &self.channels
    }

    pub fn valid(&self) -> &[bool; NUM_KEYPOINTS] {
        &self.valid
    }

    /// Channel `i` as a volume with the given spacing.
    pub fn channel_volume(&self, i: usize, spacing: [f64; 3]) -> Result<Volume> {
        Volume::new(self.dims, spacing, self.channels[i].clone())
    }
}

fn axis_profile(n: usize, center: f64, sigma: f64) -> Vec<f64> {
    let s2 = 2.0 * sigma * sigma;
    (0..n)
        .map(|i| {
            let d = i as f64 - center;
            (-(d * d) / s2).exp()
        })
        .collect()
}

/// Peak-normalized isotropic Gaussians `exp(-|x - k|² / 2σ²)` at voxel centers.
/// Invisible keypoints give all-zero, invalid channels.
pub fn synthesize(kps: &KeypointSet, dims: [usize; 3], sigma_vox: f64) -> Result<HeatmapStack> {
    if !(sigma_vox > 0.0 && sigma_vox.is_finite()) {
        return Err(Error::Parameter(format!(
            "heatmap sigma must be > 0, got {sigma_vox}"
        )));
    }
    if dims.contains(&0) {
        return Err(Error::Shape(format!("dims must be positive, got {dims:?}")));
    }
    let [nx, ny, nz] = dims;
    let channels: Vec<Vec<f32>> = kps
        .points
        .par_iter()
        .map(|k| {
            let mut out = vec![0f32; nx * ny * nz];
            if !k.visible {
                return out;
            }
            // Separable: the exponent of a sum is the product of per-axis factors.
            let gx = axis_profile(nx, k.position[0], sigma_vox);
            let gy = axis_profile(ny, k.position[1], sigma_vox);
            let gz = axis_profile(nz, k.position[2], sigma_vox);
            for (z, wz) in gz.iter().enumerate() {
                for (y, wy) in gy.iter().enumerate() {
                    let wyz = wy * wz;
                    let row = &mut out[nx * (y + ny * z)..nx * (y + ny * z + 1)];
                    for (o, wx) in row.iter_mut().zip(&gx) {
                        *o = (wx * wyz) as f32;
                    }
                }
            }
            out
        })
        .collect();
    Ok(HeatmapStack {
        dims,
        sigma_vox,
        channels,
        valid: kps.points.map(|k| k.visible),
    })
}

/// Global argmax; ties go to the lowest linear index and NaNs are skipped.
fn argmax(channel: &[f32]) -> Option<usize> {
    let mut best: Option<(usize, f32)> = None;
    for (i, &v) in channel.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Weighted centroid over the 3×3×3 neighbourhood of `peak`:
/// `Σ u·H(u) / (ε + Σ H(u))`. Neighbours outside the grid are omitted.
fn refine(channel: &[f32], dims: [usize; 3], peak: usize) -> Point3 {
    let [nx, ny, nz] = dims;
    let c = [peak % nx, (peak / nx) % ny, peak / (nx * ny)];
    let mut num = [0f64; 3];
    let mut den = 0f64;
    for dz in -1i64..=1 {
        let z = c[2] as i64 + dz;
        if z < 0 || z >= nz as i64 {
            continue;
        }
        for dy in -1i64..=1 {
            let y = c[1] as i64 + dy;
            if y < 0 || y >= ny as i64 {
                continue;
            }
            for dx in -1i64..=1 {
                let x = c[0] as i64 + dx;
                if x < 0 || x >= nx as i64 {
                    continue;
                }
                let h = channel[x as usize + nx * (y as usize + ny * z as usize)] as f64;
                num[0] += x as f64 * h;
                num[1] += y as f64 * h;
                num[2] += z as f64 * h;
                den += h;
            }
        }
    }
    num.map(|v| v / (REFINE_EPS + den))
}

/// Recover one keypoint per valid channel: argmax, then local weighted refinement.
pub fn extract(hm: &HeatmapStack) -> Result<KeypointSet> {
    let found: Vec<Result<Keypoint>> = hm
        .channels
        .par_iter()
        .zip(hm.valid.par_iter())
        .enumerate()
        .map(|(i, (ch, &valid))| {
            if !valid {
                return Ok(Keypoint::hidden());
            }
            let peak = argmax(ch).ok_or_else(|| {
                Error::Data(format!("channel {} has no finite value", KEYPOINT_NAMES[i]))
            })?;
            Ok(Keypoint::visible(refine(ch, hm.dims, peak)))
        })
        .collect();
    let mut points = [Keypoint::hidden(); NUM_KEYPOINTS];
    for (slot, r) in points.iter_mut().zip(found) {
        *slot = r?;
    }
    Ok(KeypointSet { points })
}

/// Mean squared error over the voxels of channels that are valid in `gt`.
pub fn mse(pred: &HeatmapStack, gt: &HeatmapStack) -> Result<f64> {
    if pred.dims != gt.dims {
        return Err(Error::Shape(format!(
            "prediction dims {:?} differ from ground truth {:?}",
            pred.dims, gt.dims
        )));
    }
    let (sum, count) = pred
        .channels
        .par_iter()
        .zip(gt.channels.par_iter())
        .zip(gt.valid.par_iter())
        .filter(|(_, &v)| v)
        .map(|((p, g), _)| {
            let s: f64 = p
                .iter()
                .zip(g)
                .map(|(&a, &b)| {
                    let d = a as f64 - b as f64;
                    d * d
                })
                .sum();
            (s, p.len())
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0usize), |(s, n), (a, b)| (s + a, n + b));
    if count == 0 {
        return Err(Error::Data("no valid ground-truth channel".into()));
    }
    Ok(sum / count as f64)
}
