//! Fetal inpainting: empty uteruses, extracted bodies, and composites of a
//! scaled, rigidly moved body inside a foreign uterus.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::augment::{draw, LabeledSample, Provenance, Range, SampleMasks};
use crate::error::{Error, Result};
use crate::grid::{gaussian_blur, Affine, Mask, Point3, RigidTransform, Volume};
use crate::heatmap::{KeypointSet, DEFAULT_SIGMA_VOX};
use crate::rng::{substream, Domain, SampleRng};

/// Hard cap on α reductions before placement gives up.
pub const MAX_BACKOFFS: usize = 10;

/// An extracted fetal body: tight crop of the image and body mask.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyEntry {
    pub image: Volume,
    pub body_mask: Mask,
    /// Keypoints in crop coordinates.
    pub keypoints: KeypointSet,
    pub source_id: String,
    /// Crop origin in the source grid.
    pub origin: [usize; 3],
}

impl BodyEntry {
    /// Body center in source coordinates (center of the crop).
    pub fn center(&self) -> Point3 {
        let c = self.image.center();
        [0, 1, 2].map(|a| c[a] + self.origin[a] as f64)
    }
}

/// A uterus with the fetus removed and fluid synthesized in its place.
#[derive(Debug, Clone, PartialEq)]
pub struct UterusEntry {
    pub image: Volume,
    pub uterus_mask: Mask,
    pub source_id: String,
    /// Median fluid intensity Ã used for the fill.
    pub fluid_median: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InpaintParams {
    /// Fill noise std as a fraction of Ã.
    pub sigma_eps: f64,
    /// Blending kernel σ in voxels.
    pub sigma_u_vox: f64,
    pub gamma_range: Range,
    pub alpha_range: Range,
    pub max_attempts: usize,
    pub alpha_backoff: f64,
    /// Heatmap σ of an unscaled body; composites use `heatmap_sigma · α`.
    pub heatmap_sigma: f64,
}

impl Default for InpaintParams {
    fn default() -> Self {
        InpaintParams {
            sigma_eps: 0.05,
            sigma_u_vox: 1.0,
            gamma_range: [0.8, 1.2],
            alpha_range: [0.5, 1.0],
            max_attempts: 100,
            alpha_backoff: 0.9,
            heatmap_sigma: DEFAULT_SIGMA_VOX,
        }
    }
}

impl InpaintParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if !(self.sigma_eps.is_finite() && self.sigma_eps >= 0.0) {
            return bad(format!("sigma_eps must be >= 0, got {}", self.sigma_eps));
        }
        if !(self.sigma_u_vox.is_finite() && self.sigma_u_vox >= 0.0) {
            return bad(format!("sigma_u_vox must be >= 0, got {}", self.sigma_u_vox));
        }
        let [g0, g1] = self.gamma_range;
        if !(g0 > 0.0 && g0 <= g1 && g1.is_finite()) {
            return bad(format!("gamma_range must satisfy 0 < lo <= hi, got {:?}", self.gamma_range));
        }
        let [a0, a1] = self.alpha_range;
        if !(a0 > 0.0 && a0 <= a1 && a1 <= 2.0) {
            return bad(format!("alpha_range must satisfy 0 < lo <= hi <= 2, got {:?}", self.alpha_range));
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be >= 1".into());
        }
        if !(self.alpha_backoff > 0.0 && self.alpha_backoff < 1.0) {
            return bad(format!("alpha_backoff must lie in (0, 1), got {}", self.alpha_backoff));
        }
        if !(self.heatmap_sigma > 0.0 && self.heatmap_sigma.is_finite()) {
            return bad(format!("heatmap_sigma must be > 0, got {}", self.heatmap_sigma));
        }
        Ok(())
    }
}

/// Median with the two middle values averaged for even counts.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Split one annotated volume into an emptied uterus and an extracted body.
///
/// Body voxels are refilled with `Ã + N(0, (σ_ε Ã)²)`, the result is blurred
/// with σ_u by normalized convolution over `U = B ∪ A` and scaled by
/// `γ ~ U(gamma_range)` inside `U`. Voxels outside `U` are untouched.
pub fn build_bank_entry(
    image: &Volume,
    body: &Mask,
    fluid: &Mask,
    keypoints: &KeypointSet,
    params: &InpaintParams,
    rng: &mut SampleRng,
    source_id: &str,
) -> Result<(UterusEntry, BodyEntry)> {
    params.validate()?;
    image.check_same_grid(body, "body mask")?;
    image.check_same_grid(fluid, "fluid mask")?;
    if body.intersects(fluid)? {
        return Err(Error::Data(format!("{source_id}: body and fluid masks overlap")));
    }
    let mut fluid_values: Vec<f64> = image
        .data()
        .iter()
        .zip(fluid.data())
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v as f64)
        .collect();
    let a_tilde = median(&mut fluid_values)
        .ok_or_else(|| Error::Data(format!("{source_id}: empty fluid mask")))?;
    let (lo, hi) = body
        .bbox()
        .ok_or_else(|| Error::Data(format!("{source_id}: empty body mask")))?;
    keypoints.check_within(image.dims())?;

    let noise_sd = params.sigma_eps * a_tilde.abs();
    let mut filled = image.clone();
    for (v, &b) in filled.data_mut().iter_mut().zip(body.data()) {
        if b {
            let e: f64 = if noise_sd > 0.0 {
                noise_sd * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            *v = (a_tilde + e) as f32;
        }
    }
    let gamma = draw(rng, params.gamma_range);
    let uterus = body.union(fluid)?;
    let mut blended = gaussian_blur(&filled, params.sigma_u_vox, Some(&uterus))?;
    if gamma != 1.0 {
        for (v, &u) in blended.data_mut().iter_mut().zip(uterus.data()) {
            if u {
                *v = (*v as f64 * gamma) as f32;
            }
        }
    }
    let size = [0, 1, 2].map(|a| hi[a] - lo[a] + 1);
    let body_entry = BodyEntry {
        image: image.crop(lo, size),
        body_mask: body.crop(lo, size),
        keypoints: keypoints.map_within(size, |p| [0, 1, 2].map(|a| p[a] - lo[a] as f64)),
        source_id: source_id.to_string(),
        origin: lo,
    };
    let uterus_entry = UterusEntry {
        image: blended,
        uterus_mask: uterus,
        source_id: source_id.to_string(),
        fluid_median: a_tilde,
        gamma,
    };
    Ok((uterus_entry, body_entry))
}

/// Banks of extracted bodies and emptied uteruses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bank {
    pub bodies: Vec<BodyEntry>,
    pub uteri: Vec<UterusEntry>,
}

/// How a composite was placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub body_index: usize,
    pub uterus_index: usize,
    pub body_source: String,
    pub uterus_source: String,
    pub alpha: f64,
    /// Rotation rows.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    /// Rotation pivot: the body center in its source coordinates.
    pub center: [f64; 3],
    pub attempts: usize,
    pub backoffs: usize,
}

/// Uniform random rotation (Shoemake's quaternion method).
pub fn uniform_rotation(rng: &mut SampleRng) -> Matrix3<f64> {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let q = Quaternion::new(
        b * (2.0 * PI * u3).cos(),
        a * (2.0 * PI * u2).sin(),
        a * (2.0 * PI * u2).cos(),
        b * (2.0 * PI * u3).sin(),
    );
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

/// Map from body-crop coordinates to target coordinates: `T(c + α(q + o - c))`
/// with `c` the body center and `o` the crop origin.
fn body_to_target(body: &BodyEntry, alpha: f64, t: &RigidTransform) -> Affine {
    let shift = Affine {
        linear: Matrix3::identity(),
        offset: Vector3::from(body.origin.map(|v| v as f64)),
    };
    t.to_affine()
        .after(&Affine::scaling(body.center(), alpha).after(&shift))
}

/// Pull the body mask into the uterus grid over the region its crop can reach.
/// Returns `None` when the body would leave the grid or any warped body voxel
/// falls outside `U`.
fn warp_contained(body: &BodyEntry, uterus: &UterusEntry, fwd: &Affine) -> Option<Mask> {
    let dims = uterus.uterus_mask.dims();
    let bd = body.body_mask.dims();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for corner in 0..8 {
        let p = [0, 1, 2].map(|a| {
            if corner >> a & 1 == 1 {
                bd[a] as f64 - 0.5
            } else {
                -0.5
            }
        });
        let q = fwd.apply(p);
        for a in 0..3 {
            lo[a] = lo[a].min(q[a]);
            hi[a] = hi[a].max(q[a]);
        }
    }
    if (0..3).any(|a| lo[a] < -0.5 || hi[a] > dims[a] as f64 - 0.5) {
        return None;
    }
    let inv = fwd.inverse()?;
    let start = [0, 1, 2].map(|a| lo[a].max(0.0).floor() as usize);
    let end = [0, 1, 2].map(|a| (hi[a].ceil() as usize).min(dims[a] - 1));
    let mut warped = Mask::filled(dims, uterus.uterus_mask.spacing(), false).ok()?;
    for z in start[2]..=end[2] {
        for y in start[1]..=end[1] {
            for x in start[0]..=end[0] {
                let p = [x as f64, y as f64, z as f64];
                if body.body_mask.contains_point(inv.apply(p)) {
                    if !*uterus.uterus_mask.get(x, y, z) {
                        return None;
                    }
                    warped.set(x, y, z, true);
                }
            }
        }
    }
    if warped.count() == 0 {
        return None;
    }
    Some(warped)
}

fn is_mask_boundary(m: &Mask, x: usize, y: usize, z: usize) -> bool {
    let [nx, ny, nz] = m.dims();
    let p = [x, y, z];
    let n = [nx, ny, nz];
    for a in 0..3 {
        for d in [-1i64, 1] {
            let c = p[a] as i64 + d;
            if c < 0 || c >= n[a] as i64 {
                return true;
            }
            let mut q = p;
            q[a] = c as usize;
            if !*m.get(q[0], q[1], q[2]) {
                return true;
            }
        }
    }
    false
}

fn composite(
    body: &BodyEntry,
    uterus: &UterusEntry,
    fwd: &Affine,
    warped: Mask,
    alpha: f64,
    params: &InpaintParams,
) -> Result<LabeledSample> {
    let inv = fwd
        .inverse()
        .ok_or_else(|| Error::Parameter("body placement is not invertible".into()))?;
    let dims = uterus.image.dims();
    let mut image = uterus.image.clone();
    for idx in 0..warped.len() {
        if !warped.data()[idx] {
            continue;
        }
        let [x, y, z] = warped.coords(idx);
        let b = body
            .image
            .sample_clamped(inv.apply([x as f64, y as f64, z as f64]));
        let u = image.data()[idx] as f64;
        let v = if is_mask_boundary(&warped, x, y, z) {
            0.5 * (b + u)
        } else {
            b
        };
        image.data_mut()[idx] = v as f32;
    }
    let keypoints = body.keypoints.map_within(dims, |p| fwd.apply(p));
    let fluid = uterus.uterus_mask.difference(&warped)?;
    let masks = SampleMasks {
        body: warped,
        fluid,
        uterus: uterus.uterus_mask.clone(),
    };
    LabeledSample::new(
        image,
        keypoints,
        params.heatmap_sigma * alpha,
        Provenance::Inpainted,
        format!("{}@{}", body.source_id, uterus.source_id),
    )?
    .with_masks(masks)
}

/// Composite `body` into `uterus` with an explicit scale and rigid transform.
/// `t` acts on the body's source coordinates; the body is first scaled by
/// `alpha` about its center. Fails with `PlacementInfeasible` if the result
/// is not contained in `U`.
pub fn place_body(
    body: &BodyEntry,
    uterus: &UterusEntry,
    alpha: f64,
    t: &RigidTransform,
    params: &InpaintParams,
) -> Result<LabeledSample> {
    params.validate()?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Parameter(format!("alpha must be > 0, got {alpha}")));
    }
    let fwd = body_to_target(body, alpha, t);
    let warped = warp_contained(body, uterus, &fwd).ok_or(Error::PlacementInfeasible {
        attempts: 1,
        backoffs: 0,
    })?;
    composite(body, uterus, &fwd, warped, alpha, params)
}

/// Draw a body and a uterus uniformly, then rejection-sample α and `T` until
/// `T(αB) ⊂ U`. After `max_attempts` failures α is multiplied by
/// `alpha_backoff`, at most [`MAX_BACKOFFS`] times.
pub fn sample_composite(
    bank: &Bank,
    params: &InpaintParams,
    rng: &mut SampleRng,
) -> Result<(LabeledSample, Placement)> {
    params.validate()?;
    if bank.bodies.is_empty() {
        return Err(Error::EmptyBank("body"));
    }
    if bank.uteri.is_empty() {
        return Err(Error::EmptyBank("uterus"));
    }
    let bi = rng.random_range(0..bank.bodies.len());
    let ui = rng.random_range(0..bank.uteri.len());
    let body = &bank.bodies[bi];
    let uterus = &bank.uteri[ui];
    let (ulo, uhi) = uterus
        .uterus_mask
        .bbox()
        .ok_or_else(|| Error::Data(format!("{}: empty uterus mask", uterus.source_id)))?;
    let center = body.center();
    let mut alpha = draw(rng, params.alpha_range);
    let mut attempts = 0;
    for backoffs in 0..=MAX_BACKOFFS {
        for _ in 0..params.max_attempts {
            attempts += 1;
            let rotation = uniform_rotation(rng);
            let target = [0, 1, 2].map(|a| draw(rng, [ulo[a] as f64, uhi[a] as f64]));
            let translation = [0, 1, 2].map(|a| target[a] - center[a]);
            let t = RigidTransform::new(rotation, translation, center)?;
            let fwd = body_to_target(body, alpha, &t);
            if let Some(warped) = warp_contained(body, uterus, &fwd) {
                let sample = composite(body, uterus, &fwd, warped, alpha, params)?;
                let placement = Placement {
                    body_index: bi,
                    uterus_index: ui,
                    body_source: body.source_id.clone(),
                    uterus_source: uterus.source_id.clone(),
                    alpha,
                    rotation: [0, 1, 2].map(|r| [0, 1, 2].map(|c| rotation[(r, c)])),
                    translation,
                    center,
                    attempts,
                    backoffs,
                };
                return Ok((sample, placement));
            }
        }
        alpha *= params.alpha_backoff;
    }
    Err(Error::PlacementInfeasible {
        attempts,
        backoffs: MAX_BACKOFFS,
    })
}

/// Whether stream index `index` should be a composite: a Bernoulli draw with
/// probability `fraction` from the index's own substream.
pub fn mix_choice(master_seed: u64, index: u64, fraction: f64) -> bool {
    let u: f64 = substream(master_seed, Domain::Mix, index).random();
    u < fraction
}

/// Infinite stream mixing raw and composite samples. Each source is called
/// with the sample index, so output never depends on iteration order.
pub struct MixStream<R, C> {
    raw: R,
    composite: C,
    fraction: f64,
    master_seed: u64,
    index: u64,
}

pub fn bank_mix_stream<R, C>(raw: R, composite: C, fraction: f64, master_seed: u64) -> Result<MixStream<R, C>>
where
    R: FnMut(u64) -> Result<LabeledSample>,
    C: FnMut(u64) -> Result<LabeledSample>,
{
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Parameter(format!("mix fraction must lie in [0, 1], got {fraction}")));
    }
    Ok(MixStream {
        raw,
        composite,
        fraction,
        master_seed,
        index: 0,
    })
}

impl<R, C> Iterator for MixStream<R, C>
where
    R: FnMut(u64) -> Result<LabeledSample>,
    C: FnMut(u64) -> Result<LabeledSample>,
{
    type Item = Result<LabeledSample>;

    fn next(&mut self) -> Option<Self::Item> {
        let i = self.index;
        self.index += 1;
        Some(if mix_choice(self.master_seed, i, self.fraction) {
            (self.composite)(i)
        } else {
            (self.raw)(i)
        })
    }
}
