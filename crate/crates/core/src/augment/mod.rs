//! Online MRI augmentations with keypoint co-transformation.
//!
//! Each augmentation comes in two forms: a deterministic `apply_*` taking
//! explicit parameters, and a draw-from-range wrapper taking an RNG stream.
//! Intensity ops never touch keypoints, masks, dims or spacing; geometric ops
//! move keypoints with the volume and rescale `heatmap_sigma` when scaling.

mod geometric;
mod intensity;
mod spike;

pub use geometric::{
    apply_crop, apply_rotation, apply_scale, crop_sample, crop_window, rotate_sample,
    scale_sample,
};
pub use intensity::{
    additive_noise, anisotropize, apply_anisotropy, apply_bias_field, apply_gamma, apply_noise,
    bias_field, bias_terms, gamma_adjust, BiasField,
};
pub use spike::{apply_spikes, kspace_spike, max_spectrum_magnitude, Spike};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{warp_masks_affine, Affine, Mask, Volume};
use crate::heatmap::{KeypointSet, DEFAULT_SIGMA_VOX};
use crate::rng::SampleRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Raw,
    Inpainted,
}

/// Body, fluid and uterus masks on the sample's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMasks {
    pub body: Mask,
    pub fluid: Mask,
    pub uterus: Mask,
}

impl SampleMasks {
    /// Uterus is derived as `body ∪ fluid`.
    pub fn from_body_fluid(body: Mask, fluid: Mask) -> Result<Self> {
        let uterus = body.union(&fluid)?;
        Ok(SampleMasks {
            body,
            fluid,
            uterus,
        })
    }

    fn map(&self, f: impl Fn(&Mask) -> Mask) -> SampleMasks {
        SampleMasks {
            body: f(&self.body),
            fluid: f(&self.fluid),
            uterus: f(&self.uterus),
        }
    }

    /// Nearest-neighbour pull-back of all three masks under `forward`.
    pub(crate) fn warp(&self, forward: &Affine) -> Result<SampleMasks> {
        let mut out = warp_masks_affine(&[&self.body, &self.fluid, &self.uterus], forward)?.into_iter();
        let mut next = || out.next().expect("three masks");
        Ok(SampleMasks {
            body: next(),
            fluid: next(),
            uterus: next(),
        })
    }
}

/// A training sample: volume, keypoints and the heatmap σ to synthesize with.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub volume: Volume,
    pub keypoints: KeypointSet,
    pub heatmap_sigma: f64,
    pub acquisition_id: String,
    pub masks: Option<SampleMasks>,
    provenance: Provenance,
}

impl LabeledSample {
    pub fn new(
        volume: Volume,
        keypoints: KeypointSet,
        heatmap_sigma: f64,
        provenance: Provenance,
        acquisition_id: impl Into<String>,
    ) -> Result<Self> {
        if !(heatmap_sigma > 0.0 && heatmap_sigma.is_finite()) {
            return Err(Error::Parameter(format!(
                "heatmap sigma must be > 0, got {heatmap_sigma}"
            )));
        }
        keypoints.check_within(volume.dims())?;
        Ok(LabeledSample {
            volume,
            keypoints,
            heatmap_sigma,
            acquisition_id: acquisition_id.into(),
            masks: None,
            provenance,
        })
    }

    pub fn with_masks(mut self, masks: SampleMasks) -> Result<Self> {
        self.volume.check_same_grid(&masks.body, "body mask")?;
        self.volume.check_same_grid(&masks.fluid, "fluid mask")?;
        self.volume.check_same_grid(&masks.uterus, "uterus mask")?;
        self.masks = Some(masks);
        Ok(self)
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Same labels on a new volume of identical grid (intensity-only ops).
    fn with_volume(&self, volume: Volume) -> LabeledSample {
        debug_assert!(volume.same_grid(&self.volume));
        LabeledSample {
            volume,
            ..self.clone()
        }
    }
}

pub type Range = [f64; 2];

fn check_range(name: &str, r: Range, bounds: Range) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite()) || r[0] > r[1] {
        return Err(Error::Parameter(format!("{name}: empty or non-finite range {r:?}")));
    }
    if r[0] < bounds[0] || r[1] > bounds[1] {
        return Err(Error::Parameter(format!(
            "{name}: range {r:?} outside allowed {bounds:?}"
        )));
    }
    Ok(())
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!(
            "{name}: probability must lie in [0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Uniform draw from `[lo, hi]`; always consumes exactly one value.
pub(crate) fn draw(rng: &mut SampleRng, r: Range) -> f64 {
    let u: f64 = rng.random();
    r[0] + u * (r[1] - r[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationConfig {
    pub p: f64,
    /// Per-axis Euler angle range in degrees.
    pub angle_range_deg: Range,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleConfig {
    pub p: f64,
    pub factor_range: Range,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub p: f64,
    /// Noise σ as a fraction of the p1–p99 intensity range.
    pub sigma_frac_range: Range,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasFieldConfig {
    pub p: f64,
    pub order: usize,
    pub coeff_range: Range,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaConfig {
    pub p: f64,
    pub log_gamma_range: Range,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikeConfig {
    pub p: f64,
    pub count_range: [usize; 2],
    /// Spike magnitude relative to the spectrum maximum.
    pub strength_range: Range,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnisotropyConfig {
    pub p: f64,
    pub factor_range: Range,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropConfig {
    pub size: usize,
    /// Maximum uniform offset (voxels, per axis) of the window from the fetus center.
    pub jitter: usize,
}

/// Per-augmentation gates and parameter ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub rotation: RotationConfig,
    pub scale: ScaleConfig,
    pub noise: NoiseConfig,
    pub bias_field: BiasFieldConfig,
    pub gamma: GammaConfig,
    pub spike: SpikeConfig,
    pub anisotropy: AnisotropyConfig,
    pub crop: CropConfig,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotation: RotationConfig {
                p: 0.5,
                angle_range_deg: [-30.0, 30.0],
            },
            scale: ScaleConfig {
                p: 0.5,
                factor_range: [0.75, 1.25],
            },
            noise: NoiseConfig {
                p: 0.5,
                sigma_frac_range: [0.0, 0.1],
            },
            bias_field: BiasFieldConfig {
                p: 0.5,
                order: 3,
                coeff_range: [-0.3, 0.3],
            },
            gamma: GammaConfig {
                p: 0.5,
                log_gamma_range: [-(1.5f64.ln()), 1.5f64.ln()],
            },
            spike: SpikeConfig {
                p: 0.3,
                count_range: [1, 3],
                strength_range: [0.05, 0.15],
            },
            anisotropy: AnisotropyConfig {
                p: 0.3,
                factor_range: [1.5, 2.0],
            },
            crop: CropConfig { size: 64, jitter: 8 },
        }
    }
}

impl AugmentConfig {
    /// Every augmentation gate closed; the pipeline reduces to the crop.
    pub fn crop_only() -> Self {
        let mut c = Self::default();
        c.set_all_probabilities(0.0);
        c
    }

    pub fn set_all_probabilities(&mut self, p: f64) {
        self.rotation.p = p;
        self.scale.p = p;
        self.noise.p = p;
        self.bias_field.p = p;
        self.gamma.p = p;
        self.spike.p = p;
        self.anisotropy.p = p;
    }

    pub fn validate(&self) -> Result<()> {
        check_prob("rotation.p", self.rotation.p)?;
        check_range("rotation.angle_range_deg", self.rotation.angle_range_deg, [-180.0, 180.0])?;
        check_prob("scale.p", self.scale.p)?;
        check_range("scale.factor_range", self.scale.factor_range, [0.5, 2.0])?;
        check_prob("noise.p", self.noise.p)?;
        check_range("noise.sigma_frac_range", self.noise.sigma_frac_range, [0.0, 0.3])?;
        check_prob("bias_field.p", self.bias_field.p)?;
        if self.bias_field.order > 4 {
            return Err(Error::Parameter(format!(
                "bias_field.order must be <= 4, got {}",
                self.bias_field.order
            )));
        }
        check_range("bias_field.coeff_range", self.bias_field.coeff_range, [-1.0, 1.0])?;
        check_prob("gamma.p", self.gamma.p)?;
        check_range(
            "gamma.log_gamma_range",
            self.gamma.log_gamma_range,
            [0.5f64.ln(), 2f64.ln()],
        )?;
        check_prob("spike.p", self.spike.p)?;
        let [lo, hi] = self.spike.count_range;
        if lo > hi || hi > 16 {
            return Err(Error::Parameter(format!(
                "spike.count_range must satisfy lo <= hi <= 16, got {:?}",
                self.spike.count_range
            )));
        }
        check_range("spike.strength_range", self.spike.strength_range, [0.0, 1.0])?;
        check_prob("anisotropy.p", self.anisotropy.p)?;
        check_range("anisotropy.factor_range", self.anisotropy.factor_range, [1.0, 4.0])?;
        if !(8..=512).contains(&self.crop.size) {
            return Err(Error::Parameter(format!(
                "crop.size must lie in [8, 512], got {}",
                self.crop.size
            )));
        }
        Ok(())
    }
}

/// One applied augmentation and the parameters it drew.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AppliedOp {
    Rotate { angles_deg: [f64; 3] },
    Scale { factor: f64 },
    BiasField { order: usize, coeffs: Vec<f64> },
    Gamma { gamma: f64 },
    Spike { strength: f64, spikes: Vec<Spike> },
    Noise { sigma_frac: f64, sigma: f64 },
    Anisotropy { axis: usize, factor: f64 },
    Crop { origin: [i64; 3], size: usize },
}

impl AppliedOp {
    pub fn name(&self) -> &'static str {
        match self {
            AppliedOp::Rotate { .. } => "rotate",
            AppliedOp::Scale { .. } => "scale",
            AppliedOp::BiasField { .. } => "bias_field",
            AppliedOp::Gamma { .. } => "gamma",
            AppliedOp::Spike { .. } => "spike",
            AppliedOp::Noise { .. } => "noise",
            AppliedOp::Anisotropy { .. } => "anisotropy",
            AppliedOp::Crop { .. } => "crop",
        }
    }
}

pub type AugmentLog = Vec<AppliedOp>;

pub const DEFAULT_HEATMAP_SIGMA: f64 = DEFAULT_SIGMA_VOX;

/// Run the augmentation chain in its fixed order:
/// rotate → scale → bias field → gamma → spike → noise → anisotropy → crop.
///
/// Each op fires on its own Bernoulli gate; gates are always drawn so the
/// stream position does not depend on earlier outcomes. Inpainted samples
/// are only cropped.
pub fn apply_pipeline(
    sample: &LabeledSample,
    cfg: &AugmentConfig,
    rng: &mut SampleRng,
) -> Result<(LabeledSample, AugmentLog)> {
    cfg.validate()?;
    let mut log = AugmentLog::new();
    if sample.provenance() == Provenance::Inpainted {
        let (out, op) = crop_sample(sample, rng, cfg.crop)?;
        log.push(op);
        return Ok((out, log));
    }

    let mut gates = [false; 7];
    let probs = [
        cfg.rotation.p,
        cfg.scale.p,
        cfg.bias_field.p,
        cfg.gamma.p,
        cfg.spike.p,
        cfg.noise.p,
        cfg.anisotropy.p,
    ];
    for (g, p) in gates.iter_mut().zip(probs) {
        let u: f64 = rng.random();
        *g = u < p;
    }

    let mut s = sample.clone();
    if gates[0] {
        let (out, op) = rotate_sample(&s, rng, cfg.rotation.angle_range_deg)?;
        s = out;
        log.push(op);
    }
    if gates[1] {
        let (out, op) = scale_sample(&s, rng, cfg.scale.factor_range)?;
        s = out;
        log.push(op);
    }
    if gates[2] {
        let (out, op) = bias_field(&s, rng, cfg.bias_field.order, cfg.bias_field.coeff_range)?;
        s = out;
        log.push(op);
    }
    if gates[3] {
        let (out, op) = gamma_adjust(&s, rng, cfg.gamma.log_gamma_range)?;
        s = out;
        log.push(op);
    }
    if gates[4] {
        let (out, op) = kspace_spike(&s, rng, cfg.spike.count_range, cfg.spike.strength_range)?;
        s = out;
        log.push(op);
    }
    if gates[5] {
        let (out, op) = additive_noise(&s, rng, cfg.noise.sigma_frac_range)?;
        s = out;
        log.push(op);
    }
    if gates[6] {
        let (out, op) = anisotropize(&s, rng, cfg.anisotropy.factor_range)?;
        s = out;
        log.push(op);
    }
    let (out, op) = crop_sample(&s, rng, cfg.crop)?;
    log.push(op);
    Ok((out, log))
}


#[cfg(test)]
mod tests {
    use super::test_support::blob_sample;
    use super::*;
    use crate::rng::{substream, Domain};

    #[test]
    fn default_config_is_valid() {
        AugmentConfig::default().validate().unwrap();
        AugmentConfig::crop_only().validate().unwrap();
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut c = AugmentConfig::default();
        c.noise.p = 1.2;
        assert_eq!(c.validate().unwrap_err().code(), "parameter");
        let mut c = AugmentConfig::default();
        c.anisotropy.factor_range = [2.0, 1.5];
        assert!(c.validate().is_err());
        let mut c = AugmentConfig::default();
        c.gamma.log_gamma_range = [-1.0, 0.0];
        assert!(c.validate().is_err());
        let mut c = AugmentConfig::default();
        c.bias_field.order = 5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn all_gates_closed_is_crop_only() {
        let s = blob_sample(64);
        let mut rng = substream(1, Domain::Augment, 0);
        let (out, log) = apply_pipeline(&s, &AugmentConfig::crop_only(), &mut rng).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].name(), "crop");
        assert_eq!(out.volume, s.volume);
        assert_eq!(out.keypoints, s.keypoints);
    }

    #[test]
    fn inpainted_samples_are_only_cropped() {
        let raw = blob_sample(72);
        let s = LabeledSample::new(raw.volume.clone(), raw.keypoints.clone(), 2.0, Provenance::Inpainted, "x").unwrap();
        let mut cfg = AugmentConfig::default();
        cfg.set_all_probabilities(1.0);
        let mut rng = substream(5, Domain::Augment, 0);
        let (out, log) = apply_pipeline(&s, &cfg, &mut rng).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].name(), "crop");
        assert_eq!(out.volume.dims(), [64; 3]);
        assert_eq!(out.provenance(), Provenance::Inpainted);
    }

    #[test]
    fn all_gates_open_fire_in_order() {
        let s = blob_sample(64);
        let mut cfg = AugmentConfig::default();
        cfg.set_all_probabilities(1.0);
        let mut rng = substream(3, Domain::Augment, 9);
        let (_, log) = apply_pipeline(&s, &cfg, &mut rng).unwrap();
        let names: Vec<_> = log.iter().map(|o| o.name()).collect();
        assert_eq!(names, ["rotate", "scale", "bias_field", "gamma", "spike", "noise", "anisotropy", "crop"]);
    }

    #[test]
    fn pipeline_is_deterministic() {
        let s = blob_sample(64);
        let mut cfg = AugmentConfig::default();
        cfg.set_all_probabilities(0.7);
        let run = || {
            let mut rng = substream(42, Domain::Augment, 17);
            apply_pipeline(&s, &cfg, &mut rng).unwrap()
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(la, lb);
        assert!(a.volume.data().iter().zip(b.volume.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.keypoints, b.keypoints);
    }

    #[test]
    fn log_serializes_with_op_tag() {
        let op = AppliedOp::Anisotropy { axis: 2, factor: 1.75 };
        let js = serde_json::to_string(&op).unwrap();
        assert_eq!(js, r#"{"op":"anisotropy","axis":2,"factor":1.75}"#);
        let back: AppliedOp = serde_json::from_str(&js).unwrap();
        assert_eq!(back, op);
    }

    #[test]
    fn sample_rejects_out_of_grid_keypoints() {
        let s = blob_sample(16);
        let mut k = s.keypoints.clone();
        k.set(0, crate::heatmap::Keypoint::visible([20.0, 1.0, 1.0]));
        assert!(LabeledSample::new(s.volume.clone(), k, 2.0, Provenance::Raw, "a").is_err());
        assert!(LabeledSample::new(s.volume.clone(), s.keypoints.clone(), 0.0, Provenance::Raw, "a").is_err());
    }
}
