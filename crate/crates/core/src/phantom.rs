//! Synthetic uterus/fetus volumes with exact masks and keypoints.
//!
//! Geometry is defined in voxel units in a body frame with `x` pointing to the
//! head, `y` to the fetus' left and `z` anterior, centered on the trunk. The
//! posed body is rotated and translated into an ellipsoidal uterus.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::augment::{LabeledSample, Provenance, Range, SampleMasks};
use crate::error::{Error, Result};
use crate::eval::Group;
use crate::grid::{gaussian_blur, grid_center, Mask, Point3, Volume};
use crate::heatmap::{Keypoint, KeypointSet, DEFAULT_SIGMA_VOX, NUM_KEYPOINTS};
use crate::inpaint::uniform_rotation;
use crate::rng::SampleRng;

/// Blur applied to the label image before noise.
pub const PHANTOM_BLUR_SIGMA: f64 = 0.5;

/// Minimum radius of the ball kept around every keypoint. Exceeds the largest
/// distance from a point to its nearest voxel center (√3/2).
const KEYPOINT_BALL: f64 = 1.0;

/// Uterus semi-axes as fractions of the grid size per axis.
const UTERUS_FRACTION: [f64; 3] = [0.42, 0.36, 0.36];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlacementMode {
    /// Uniform rotation and a random center inside the uterus.
    Random,
    /// No rotation, trunk at the grid center.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Body size relative to the uterus; drawn uniformly from this range.
    pub scale_range: Range,
    /// Shoulder abduction and flexion, degrees.
    pub shoulder_deg: Range,
    pub elbow_deg: Range,
    pub hip_deg: Range,
    pub knee_deg: Range,
    pub fluid_intensity: f64,
    pub body_intensity: f64,
    pub background_intensity: f64,
    pub noise_sd: f64,
    /// Relative amplitude of a sinusoidal body texture (0 = flat body).
    pub body_texture: f64,
    pub placement: PlacementMode,
    pub max_attempts: usize,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: [96; 3],
            spacing: [3.0; 3],
            scale_range: [0.4, 1.0],
            shoulder_deg: [-60.0, 60.0],
            elbow_deg: [0.0, 90.0],
            hip_deg: [-45.0, 45.0],
            knee_deg: [0.0, 90.0],
            fluid_intensity: 1000.0,
            body_intensity: 500.0,
            background_intensity: 100.0,
            noise_sd: 10.0,
            body_texture: 0.0,
            placement: PlacementMode::Random,
            max_attempts: 100,
        }
    }
}

impl PhantomSpec {
    /// 2 mm isotropic variant.
    pub fn clinical() -> Self {
        PhantomSpec {
            spacing: [2.0; 3],
            ..Self::default()
        }
    }

    /// Fixed scale, zero joint angles, identity placement.
    pub fn canonical(scale: f64) -> Self {
        PhantomSpec {
            scale_range: [scale, scale],
            shoulder_deg: [0.0, 0.0],
            elbow_deg: [0.0, 0.0],
            hip_deg: [0.0, 0.0],
            knee_deg: [0.0, 0.0],
            placement: PlacementMode::Identity,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 16) {
            return Err(Error::Parameter(format!("phantom dims must be >= 16, got {:?}", self.dims)));
        }
        if self.spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Parameter(format!("invalid spacing {:?}", self.spacing)));
        }
        let range = |name: &str, r: Range, lim: Range| {
            if !(r[0] <= r[1] && r[0] >= lim[0] && r[1] <= lim[1]) {
                Err(Error::Parameter(format!("{name} range {r:?} outside {lim:?}")))
            } else {
                Ok(())
            }
        };
        range("scale", self.scale_range, [0.4, 1.0])?;
        range("shoulder", self.shoulder_deg, [-180.0, 180.0])?;
        range("elbow", self.elbow_deg, [0.0, 180.0])?;
        range("hip", self.hip_deg, [-180.0, 180.0])?;
        range("knee", self.knee_deg, [0.0, 180.0])?;
        if !(self.fluid_intensity > self.body_intensity && self.body_intensity > self.background_intensity) {
            return Err(Error::Parameter(
                "intensities must satisfy fluid > body > background".into(),
            ));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Parameter(format!("noise sd must be >= 0, got {}", self.noise_sd)));
        }
        if !(0.0..1.0).contains(&self.body_texture) {
            return Err(Error::Parameter(format!("body texture must be in [0, 1), got {}", self.body_texture)));
        }
        if self.max_attempts == 0 {
            return Err(Error::Parameter("max_attempts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Gestational-age proxy: scale 0.4..1.0 maps linearly to 20..37 weeks.
pub fn ga_weeks(scale: f64) -> f64 {
    20.0 + (scale - 0.4) / 0.6 * 17.0
}

/// Joint angles (degrees) and rigid placement of one phantom. Paired arrays are
/// `[left, right]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub scale: f64,
    pub shoulder: [[f64; 2]; 2],
    pub elbow: [f64; 2],
    pub hip: [[f64; 2]; 2],
    pub knee: [f64; 2],
    /// Body-to-grid rotation rows.
    pub rotation: [[f64; 3]; 3],
    /// Grid position of the trunk center.
    pub center: Point3,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSample {
    /// Carries the masks: body `B`, fluid `A = U \ B` and uterus `U`.
    pub sample: LabeledSample,
    pub skeleton: Skeleton,
    pub ga_weeks: f64,
}

impl PhantomSample {
    pub fn masks(&self) -> &SampleMasks {
        self.sample.masks.as_ref().expect("phantoms carry masks")
    }
}

/// Body-frame dimensions for unit `u` voxels.
struct Body {
    u: f64,
    trunk: [f64; 3],
    head_center: Vector3<f64>,
    head_radius: f64,
    arm_radius: f64,
    leg_radius: f64,
    /// Keypoints in body frame.
    keypoints: [Vector3<f64>; NUM_KEYPOINTS],
}

fn axis_rotation(axis: Vector3<f64>, deg: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), deg.to_radians())
}

impl Body {
    fn new(scale: f64, dims: [usize; 3], sk: &Skeleton) -> Body {
        let u = scale * *dims.iter().max().expect("3 dims") as f64 / 96.0;
        let (ex, ey, ez) = (Vector3::x(), Vector3::y(), Vector3::z());
        let head_center = Vector3::new(19.0 * u, 0.0, 0.0);
        let mut kp = [Vector3::zeros(); NUM_KEYPOINTS];
        kp[0] = Vector3::new(-9.0 * u, 0.0, 1.5 * u);
        for (side, s) in [(0, 1.0), (1, -1.0)] {
            kp[1 + side] = head_center + Vector3::new(3.0 * u, s * 2.5 * u, 2.0 * u);
            let shoulder = Vector3::new(8.0 * u, s * 4.0 * u, 0.0);
            let hip = Vector3::new(-10.0 * u, s * 3.5 * u, 0.0);

            // Signed angles about x and z keep the two sides mirror images.
            let [a, b] = sk.shoulder[side];
            let r_sh = axis_rotation(ez, s * a) * axis_rotation(ex, s * b);
            let upper = r_sh * (s * ey);
            let fore = axis_rotation(r_sh * ez, s * sk.elbow[side]) * upper;
            let elbow = shoulder + 8.0 * u * upper;
            let wrist = elbow + 7.0 * u * fore;

            let [a, b] = sk.hip[side];
            let r_hip = axis_rotation(ey, a) * axis_rotation(ez, s * b);
            let thigh = r_hip * -ex;
            let shin = axis_rotation(r_hip * ey, sk.knee[side]) * thigh;
            let knee = hip + 9.0 * u * thigh;
            let ankle = knee + 8.0 * u * shin;

            kp[3 + side] = shoulder;
            kp[5 + side] = elbow;
            kp[7 + side] = wrist;
            kp[9 + side] = hip;
            kp[11 + side] = knee;
            kp[13 + side] = ankle;
        }
        Body {
            u,
            trunk: [12.0 * u, 7.0 * u, 6.0 * u],
            head_center,
            head_radius: 7.0 * u,
            arm_radius: (2.0 * u).max(1.2),
            leg_radius: (2.5 * u).max(1.2),
            keypoints: kp,
        }
    }

    /// Capsule segments `(a, b, radius)`.
    fn segments(&self) -> [(Vector3<f64>, Vector3<f64>, f64); 8] {
        let k = &self.keypoints;
        [
            (k[3], k[5], self.arm_radius),
            (k[5], k[7], self.arm_radius),
            (k[4], k[6], self.arm_radius),
            (k[6], k[8], self.arm_radius),
            (k[9], k[11], self.leg_radius),
            (k[11], k[13], self.leg_radius),
            (k[10], k[12], self.leg_radius),
            (k[12], k[14], self.leg_radius),
        ]
    }

    fn contains(&self, q: &Vector3<f64>) -> bool {
        let t = self.trunk;
        if (q.x / t[0]).powi(2) + (q.y / t[1]).powi(2) + (q.z / t[2]).powi(2) <= 1.0 {
            return true;
        }
        if (q - self.head_center).norm_squared() <= self.head_radius.powi(2) {
            return true;
        }
        if self.segments().iter().any(|(a, b, r)| segment_distance_sq(q, a, b) <= r * r) {
            return true;
        }
        self.keypoints
            .iter()
            .any(|k| (q - k).norm_squared() <= KEYPOINT_BALL * KEYPOINT_BALL)
    }

    /// Radius of a trunk-centered ball containing the body.
    fn bounding_radius(&self) -> f64 {
        let mut r = self.trunk[0].max(self.head_center.norm() + self.head_radius);
        for (a, b, rad) in self.segments() {
            r = r.max(a.norm() + rad).max(b.norm() + rad);
        }
        for k in &self.keypoints {
            r = r.max(k.norm() + KEYPOINT_BALL);
        }
        r
    }

    /// Smooth multiplicative pattern fixed to the body.
    fn texture(&self, q: &Vector3<f64>) -> f64 {
        let w = 1.3 / self.u.max(0.5);
        (w * q.x).sin() * (0.8 * w * q.y + 0.5).sin() * (0.6 * w * q.z + 1.0).cos()
    }
}

fn segment_distance_sq(q: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((q - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (q - (a + t * ab)).norm_squared()
}

fn uterus_axes(dims: [usize; 3]) -> [f64; 3] {
    [0, 1, 2].map(|a| UTERUS_FRACTION[a] * dims[a] as f64)
}

fn in_ellipsoid(p: [f64; 3], center: Point3, axes: [f64; 3]) -> bool {
    (0..3).map(|a| ((p[a] - center[a]) / axes[a]).powi(2)).sum::<f64>() <= 1.0
}

fn uterus_mask(dims: [usize; 3], spacing: [f64; 3]) -> Result<Mask> {
    let c = grid_center(dims);
    let axes = uterus_axes(dims);
    let mut m = Mask::filled(dims, spacing, false)?;
    for (i, v) in m.data_mut().iter_mut().enumerate() {
        let x = i % dims[0];
        let y = (i / dims[0]) % dims[1];
        let z = i / (dims[0] * dims[1]);
        *v = in_ellipsoid([x as f64, y as f64, z as f64], c, axes);
    }
    Ok(m)
}

/// Rasterize the posed body. Returns `None` when any body voxel leaves `uterus`.
fn rasterize(body: &Body, rot: &Matrix3<f64>, center: Point3, uterus: &Mask) -> Option<Mask> {
    let dims = uterus.dims();
    let r = body.bounding_radius() + 1.0;
    let c = Vector3::from(center);
    let mut out = Mask::filled(dims, uterus.spacing(), false).ok()?;
    let lo = [0, 1, 2].map(|a| (center[a] - r).floor().max(0.0) as usize);
    let hi = [0, 1, 2].map(|a| ((center[a] + r).ceil().max(0.0) as usize).min(dims[a] - 1));
    let inv = rot.transpose();
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                let q = inv * (Vector3::new(x as f64, y as f64, z as f64) - c);
                if body.contains(&q) {
                    if !*uterus.get(x, y, z) {
                        return None;
                    }
                    out.set(x, y, z, true);
                }
            }
        }
    }
    Some(out)
}

fn draw_in(rng: &mut SampleRng, r: Range) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

/// A uniform point in the ellipsoid with the given semi-axes.
fn point_in_ellipsoid(rng: &mut SampleRng, center: Point3, axes: [f64; 3]) -> Point3 {
    loop {
        let v: [f64; 3] = [0, 1, 2].map(|_| rng.random_range(-1.0..=1.0));
        if v.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            return [0, 1, 2].map(|a| center[a] + axes[a] * v[a]);
        }
    }
}

/// Masks, keypoints and skeleton of one phantom, without intensities.
pub fn pose_phantom(spec: &PhantomSpec, rng: &mut SampleRng) -> Result<(SampleMasks, KeypointSet, Skeleton)> {
    spec.validate()?;
    let dims = spec.dims;
    let scale = draw_in(rng, spec.scale_range);
    let mut sk = Skeleton {
        scale,
        shoulder: [[0.0; 2]; 2],
        elbow: [0.0; 2],
        hip: [[0.0; 2]; 2],
        knee: [0.0; 2],
        rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        center: grid_center(dims),
        attempts: 0,
    };
    for side in 0..2 {
        sk.shoulder[side] = [draw_in(rng, spec.shoulder_deg), draw_in(rng, spec.shoulder_deg)];
        sk.elbow[side] = draw_in(rng, spec.elbow_deg);
        sk.hip[side] = [draw_in(rng, spec.hip_deg), draw_in(rng, spec.hip_deg)];
        sk.knee[side] = draw_in(rng, spec.knee_deg);
    }
    let body = Body::new(scale, dims, &sk);
    let uterus = uterus_mask(dims, spec.spacing)?;
    let gc = grid_center(dims);
    let shrunk = uterus_axes(dims).map(|a| (a - body.bounding_radius()).max(0.0));

    let mut placed = None;
    for attempt in 1..=spec.max_attempts {
        let (rot, center) = match spec.placement {
            PlacementMode::Identity => (Matrix3::identity(), gc),
            PlacementMode::Random => {
                let rot = uniform_rotation(rng);
                (rot, point_in_ellipsoid(rng, gc, shrunk))
            }
        };
        if let Some(mask) = rasterize(&body, &rot, center, &uterus) {
            placed = Some((mask, rot, center, attempt));
            break;
        }
        if spec.placement == PlacementMode::Identity {
            return Err(Error::PlacementInfeasible { attempts: attempt, backoffs: 0 });
        }
    }
    let Some((body_mask, rot, center, attempts)) = placed else {
        return Err(Error::PlacementInfeasible {
            attempts: spec.max_attempts,
            backoffs: 0,
        });
    };
    sk.rotation = std::array::from_fn(|r| std::array::from_fn(|c| rot[(r, c)]));
    sk.center = center;
    sk.attempts = attempts;

    let c = Vector3::from(center);
    let keypoints = KeypointSet::new(std::array::from_fn(|i| {
        let p = rot * body.keypoints[i] + c;
        Keypoint::visible([p.x, p.y, p.z])
    }));
    let fluid = uterus.difference(&body_mask)?;
    let masks = SampleMasks {
        body: body_mask,
        fluid,
        uterus,
    };
    Ok((masks, keypoints, sk))
}

/// Generate a phantom: pose and place the body, paint fluid/body/background,
/// blur with σ = 0.5 voxel and add Gaussian noise.
pub fn make_phantom(spec: &PhantomSpec, rng: &mut SampleRng) -> Result<PhantomSample> {
    let (masks, keypoints, skeleton) = pose_phantom(spec, rng)?;
    let dims = spec.dims;
    let body = Body::new(skeleton.scale, dims, &skeleton);
    let rot = Matrix3::from_fn(|r, c| skeleton.rotation[r][c]);
    let inv = rot.transpose();
    let c = Vector3::from(skeleton.center);

    let mut labels = Volume::filled(dims, spec.spacing, spec.background_intensity as f32)?;
    for (i, v) in labels.data_mut().iter_mut().enumerate() {
        if masks.body.data()[i] {
            let mut level = spec.body_intensity;
            if spec.body_texture > 0.0 {
                let x = i % dims[0];
                let y = (i / dims[0]) % dims[1];
                let z = i / (dims[0] * dims[1]);
                let q = inv * (Vector3::new(x as f64, y as f64, z as f64) - c);
                level *= 1.0 + spec.body_texture * body.texture(&q);
            }
            *v = level as f32;
        } else if masks.fluid.data()[i] {
            *v = spec.fluid_intensity as f32;
        }
    }
    let mut vol = gaussian_blur(&labels, PHANTOM_BLUR_SIGMA, None)?;
    if spec.noise_sd > 0.0 {
        for v in vol.data_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *v = (*v as f64 + spec.noise_sd * n) as f32;
        }
    }
    let ga = ga_weeks(skeleton.scale);
    let sample = LabeledSample::new(vol, keypoints, DEFAULT_SIGMA_VOX, Provenance::Raw, "phantom")?
        .with_masks(masks)?;
    Ok(PhantomSample {
        sample,
        skeleton,
        ga_weeks: ga,
    })
}

/// Synthetic predictions: every visible keypoint is displaced by isotropic
/// Gaussian noise with its group's σ (mm), converted to voxels per axis.
/// Three normals are drawn per visible keypoint regardless of σ.
pub fn oracle_predict(
    keypoints: &KeypointSet,
    spacing: [f64; 3],
    noise_mm: [f64; 3],
    rng: &mut SampleRng,
) -> Result<KeypointSet> {
    if noise_mm.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(Error::Parameter(format!("oracle noise must be >= 0, got {noise_mm:?}")));
    }
    if spacing.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::Parameter(format!("invalid spacing {spacing:?}")));
    }
    let mut out = keypoints.clone();
    for i in 0..NUM_KEYPOINTS {
        let k = keypoints.get(i);
        if !k.visible {
            continue;
        }
        let sigma = noise_mm[Group::of(i).index()];
        let mut p = k.position;
        for a in 0..3 {
            let n: f64 = rng.sample(StandardNormal);
            p[a] += sigma * n / spacing[a];
        }
        out.set(i, Keypoint::visible(p));
    }
    Ok(out)
}
