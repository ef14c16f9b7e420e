//! Rotation, scaling and cropping with keypoint co-transformation.

use rand::Rng;

use super::{check_range, draw, AppliedOp, CropConfig, LabeledSample, Range};
use crate::error::{Error, Result};
use crate::grid::{rescale_grid, warp_rigid, Affine, Interpolation, Point3, RigidTransform};
use crate::rng::SampleRng;

/// Background estimate used to fill voxels uncovered by a warp or pad.
fn background(s: &LabeledSample) -> f32 {
    s.volume.percentile(1.0)
}

/// Rotate about the volume center by Euler angles (degrees, x then y then z).
pub fn apply_rotation(s: &LabeledSample, angles_deg: [f64; 3]) -> Result<LabeledSample> {
    if angles_deg == [0.0; 3] {
        return Ok(s.clone());
    }
    let dims = s.volume.dims();
    let t = RigidTransform::from_euler_deg(angles_deg, [0.0; 3], s.volume.center())?;
    let volume = warp_rigid(&s.volume, &t, Interpolation::Trilinear, background(s));
    Ok(LabeledSample {
        volume,
        keypoints: s.keypoints.map_within(dims, |p| t.apply(p)),
        masks: s.masks.as_ref().map(|m| m.warp(&t.to_affine())).transpose()?,
        ..s.clone()
    })
}

pub fn rotate_sample(
    s: &LabeledSample,
    rng: &mut SampleRng,
    angle_range_deg: Range,
) -> Result<(LabeledSample, AppliedOp)> {
    check_range("rotation angle", angle_range_deg, [-180.0, 180.0])?;
    let angles_deg = [0, 1, 2].map(|_| draw(rng, angle_range_deg));
    Ok((apply_rotation(s, angles_deg)?, AppliedOp::Rotate { angles_deg }))
}

/// Zoom content about the center by `factor` on the same grid. The heatmap σ
/// is multiplied by the same factor.
pub fn apply_scale(s: &LabeledSample, factor: f64) -> Result<LabeledSample> {
    if factor == 1.0 {
        return Ok(s.clone());
    }
    let dims = s.volume.dims();
    let c = s.volume.center();
    let volume = rescale_grid(&s.volume, factor, Interpolation::Trilinear)?;
    let masks = s.masks.as_ref().map(|m| m.warp(&Affine::scaling(c, factor))).transpose()?;
    Ok(LabeledSample {
        volume,
        keypoints: s
            .keypoints
            .map_within(dims, |p| [0, 1, 2].map(|a| c[a] + factor * (p[a] - c[a]))),
        heatmap_sigma: s.heatmap_sigma * factor,
        masks,
        ..s.clone()
    })
}

pub fn scale_sample(
    s: &LabeledSample,
    rng: &mut SampleRng,
    factor_range: Range,
) -> Result<(LabeledSample, AppliedOp)> {
    check_range("scale factor", factor_range, [0.5, 2.0])?;
    let factor = draw(rng, factor_range);
    Ok((apply_scale(s, factor)?, AppliedOp::Scale { factor }))
}

/// Window origin along each axis for a crop of `size` centered on `center`
/// and shifted by `offset`, clamped so the window stays inside `dims`.
/// Axes shorter than `size` get a centered window with a negative origin,
/// which `apply_crop` fills by padding.
pub fn crop_window(dims: [usize; 3], center: Point3, size: usize, offset: [i64; 3]) -> [i64; 3] {
    [0, 1, 2].map(|a| {
        let n = dims[a] as i64;
        let size = size as i64;
        if n < size {
            return -((size - n) / 2);
        }
        let ideal = (center[a] - (size - 1) as f64 / 2.0).round() as i64 + offset[a];
        ideal.clamp(0, n - size)
    })
}

/// Extract the `size³` window at `origin` (sample coordinates, may extend past
/// the grid). Voxels outside the source take the background estimate, masks
/// take `false`, keypoints are shifted and those leaving the window hidden.
pub fn apply_crop(s: &LabeledSample, origin: [i64; 3], size: usize) -> Result<LabeledSample> {
    if size == 0 {
        return Err(Error::Parameter("crop size must be positive".into()));
    }
    let dims = s.volume.dims();
    let out_dims = [size; 3];
    if origin == [0; 3] && dims == out_dims {
        return Ok(s.clone());
    }
    let mut lo = [0usize; 3];
    let mut padded = [0usize; 3];
    for a in 0..3 {
        lo[a] = (-origin[a]).max(0) as usize;
        let hi = (origin[a] + size as i64 - dims[a] as i64).max(0) as usize;
        padded[a] = dims[a] + lo[a] + hi;
    }
    let start = [0, 1, 2].map(|a| (origin[a] + lo[a] as i64) as usize);
    let needs_pad = padded != dims;
    let volume = if needs_pad {
        s.volume.pad(padded, lo, background(s)).crop(start, out_dims)
    } else {
        s.volume.crop(start, out_dims)
    };
    let masks = s.masks.as_ref().map(|m| {
        m.map(|g| {
            if needs_pad {
                g.pad(padded, lo, false).crop(start, out_dims)
            } else {
                g.crop(start, out_dims)
            }
        })
    });
    Ok(LabeledSample {
        volume,
        keypoints: s
            .keypoints
            .map_within(out_dims, |p| [0, 1, 2].map(|a| p[a] - origin[a] as f64)),
        masks,
        ..s.clone()
    })
}

/// Center of the fetal bounding box: the body mask if present and non-empty,
/// otherwise the visible keypoints.
fn fetal_center(s: &LabeledSample) -> Result<Point3> {
    if let Some((lo, hi)) = s.masks.as_ref().and_then(|m| m.body.bbox()) {
        return Ok([0, 1, 2].map(|a| (lo[a] + hi[a]) as f64 / 2.0));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for k in s.keypoints.iter().filter(|k| k.visible) {
        for a in 0..3 {
            lo[a] = lo[a].min(k.position[a]);
            hi[a] = hi[a].max(k.position[a]);
        }
    }
    if !lo[0].is_finite() {
        return Err(Error::Data(
            "cannot center crop: no body mask and no visible keypoints".into(),
        ));
    }
    Ok([0, 1, 2].map(|a| (lo[a] + hi[a]) / 2.0))
}

/// Fetus-centered crop with uniform integer jitter in `[-jitter, jitter]` per axis.
pub fn crop_sample(
    s: &LabeledSample,
    rng: &mut SampleRng,
    cfg: CropConfig,
) -> Result<(LabeledSample, AppliedOp)> {
    let center = fetal_center(s)?;
    let j = cfg.jitter as i64;
    let offset = [0, 1, 2].map(|_| rng.random_range(-j..=j));
    let origin = crop_window(s.volume.dims(), center, cfg.size, offset);
    Ok((
        apply_crop(s, origin, cfg.size)?,
        AppliedOp::Crop {
            origin,
            size: cfg.size,
        },
    ))
}
