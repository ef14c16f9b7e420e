//! 3D grid primitives shared by every other module.
//!
//! Conventions, fixed crate-wide:
//! - `dims = [nx, ny, nz]`, storage is row-major with **x fastest**:
//!   `index = x + nx * (y + ny * z)`.
//! - Continuous voxel coordinates put voxel `(i, j, k)` at the point
//!   `(i, j, k)`; the grid occupies `[-0.5, n - 0.5]` along each axis and its
//!   geometric center is `((nx - 1) / 2, (ny - 1) / 2, (nz - 1) / 2)`.
//! - Warps use pull-back semantics: output voxel `y` receives the input value
//!   at `T⁻¹(y)`.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<T>,
}

/// Scalar intensity grid.
pub type Volume = Grid<f32>;
/// Binary membership grid.
pub type Mask = Grid<bool>;

fn check_meta(dims: [usize; 3], spacing: [f64; 3]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::Shape(format!("dims must be positive, got {dims:?}")));
    }
    if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::Parameter(format!(
            "spacing must be finite and > 0, got {spacing:?}"
        )));
    }
    Ok(())
}

impl<T: Clone + Send + Sync> Grid<T> {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<T>) -> Result<Self> {
        check_meta(dims, spacing)?;
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(Error::Shape(format!(
                "data length {} does not match dims {dims:?} ({n})",
                data.len()
            )));
        }
        Ok(Grid {
            dims,
            spacing,
            data,
        })
    }

    pub fn filled(dims: [usize; 3], spacing: [f64; 3], value: T) -> Result<Self> {
        check_meta(dims, spacing)?;
        Ok(Grid {
            dims,
            spacing,
            data: vec![value; dims[0] * dims[1] * dims[2]],
        })
    }

    /// A grid with the same metadata and new contents.
    pub fn with_data<U: Clone + Send + Sync>(&self, data: Vec<U>) -> Result<Grid<U>> {
        Grid::new(self.dims, self.spacing, data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> &T {
        &self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: T) {
        let i = self.index(x, y, z);
        self.data[i] = value;
    }

    pub fn same_grid<U>(&self, other: &Grid<U>) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }

    pub fn check_same_grid<U>(&self, other: &Grid<U>, what: &str) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: grid {:?}/{:?} does not match {:?}/{:?}",
                other.dims, other.spacing, self.dims, self.spacing
            )))
        }
    }

    pub fn center(&self) -> Point3 {
        grid_center(self.dims)
    }

    /// Whether `p` lies within the hull of voxel centers, `[0, n - 1]` per axis.
    pub fn contains(&self, p: Point3) -> bool {
        point_in_grid(self.dims, p)
    }

    /// Sub-grid `[origin, origin + size)`. Panics if the window leaves the grid.
    pub fn crop(&self, origin: [usize; 3], size: [usize; 3]) -> Grid<T> {
        for a in 0..3 {
            assert!(origin[a] + size[a] <= self.dims[a], "crop window out of bounds");
        }
        let mut data = Vec::with_capacity(size[0] * size[1] * size[2]);
        for z in 0..size[2] {
            for y in 0..size[1] {
                let start = self.index(origin[0], origin[1] + y, origin[2] + z);
                data.extend_from_slice(&self.data[start..start + size[0]]);
            }
        }
        Grid {
            dims: size,
            spacing: self.spacing,
            data,
        }
    }

    /// Embed into a larger grid at `offset`, filling the rest with `fill`.
    pub fn pad(&self, new_dims: [usize; 3], offset: [usize; 3], fill: T) -> Grid<T> {
        for a in 0..3 {
            assert!(offset[a] + self.dims[a] <= new_dims[a], "pad offset out of bounds");
        }
        let mut out = Grid {
            dims: new_dims,
            spacing: self.spacing,
            data: vec![fill; new_dims[0] * new_dims[1] * new_dims[2]],
        };
        let nx = self.dims[0];
        for z in 0..self.dims[2] {
            for y in 0..self.dims[1] {
                let src = self.index(0, y, z);
                let dst = out.index(offset[0], offset[1] + y, offset[2] + z);
                out.data[dst..dst + nx].clone_from_slice(&self.data[src..src + nx]);
            }
        }
        out
    }
}

pub fn grid_center(dims: [usize; 3]) -> Point3 {
    [
        (dims[0] as f64 - 1.0) / 2.0,
        (dims[1] as f64 - 1.0) / 2.0,
        (dims[2] as f64 - 1.0) / 2.0,
    ]
}

pub fn point_in_grid(dims: [usize; 3], p: Point3) -> bool {
    (0..3).all(|a| p[a] >= 0.0 && p[a] <= dims[a] as f64 - 1.0)
}

#[inline]
fn in_extent(dims: [usize; 3], p: Point3) -> bool {
    (0..3).all(|a| p[a] >= -0.5 && p[a] <= dims[a] as f64 - 0.5)
}

impl Volume {
    /// Volume constructor that also enforces finite intensities.
    pub fn from_vec(dims: [usize; 3], spacing: [f64; 3], data: Vec<f32>) -> Result<Self> {
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InputDomain(format!("non-finite intensity at index {i}")));
        }
        Grid::new(dims, spacing, data)
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Nearest-rank percentile, `q` in `[0, 100]`.
    pub fn percentile(&self, q: f64) -> f32 {
        percentile(&self.data, q)
    }

    /// Edge-clamped trilinear interpolation; the point must be finite.
    #[inline]
    pub(crate) fn sample_clamped(&self, p: Point3) -> f64 {
        let [nx, ny, _] = self.dims;
        let stride = [1, nx, nx * ny];
        let mut base = 0;
        let mut step = [0usize; 3];
        let mut t = [0f64; 3];
        for a in 0..3 {
            let hi = (self.dims[a] - 1) as f64;
            let c = p[a].clamp(0.0, hi);
            let i = c as usize;
            t[a] = c - i as f64;
            base += i * stride[a];
            step[a] = if i + 1 < self.dims[a] { stride[a] } else { 0 };
        }
        let d = &self.data;
        let v = |o: usize| d[base + o] as f64;
        let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
        let [sx, sy, sz] = step;
        let c00 = lerp(v(0), v(sx), t[0]);
        let c10 = lerp(v(sy), v(sx + sy), t[0]);
        let c01 = lerp(v(sz), v(sx + sz), t[0]);
        let c11 = lerp(v(sy + sz), v(sx + sy + sz), t[0]);
        lerp(lerp(c00, c10, t[1]), lerp(c01, c11, t[1]), t[2])
    }
}

pub(crate) fn percentile(data: &[f32], q: f64) -> f32 {
    if data.is_empty() {
        return f32::NAN;
    }
    let mut buf = data.to_vec();
    let rank = ((q.clamp(0.0, 100.0) / 100.0) * (buf.len() - 1) as f64).round() as usize;
    let (_, v, _) = buf.select_nth_unstable_by(rank, |a, b| a.total_cmp(b));
    *v
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Inclusive voxel bounding box `(min, max)` of the set voxels.
    pub fn bbox(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for (i, &b) in self.data.iter().enumerate() {
            if b {
                any = true;
                let c = self.coords(i);
                for a in 0..3 {
                    lo[a] = lo[a].min(c[a]);
                    hi[a] = hi[a].max(c[a]);
                }
            }
        }
        any.then_some((lo, hi))
    }

    pub fn centroid(&self) -> Option<Point3> {
        let mut acc = [0f64; 3];
        let mut n = 0usize;
        for (i, &b) in self.data.iter().enumerate() {
            if b {
                let c = self.coords(i);
                for a in 0..3 {
                    acc[a] += c[a] as f64;
                }
                n += 1;
            }
        }
        (n > 0).then(|| acc.map(|v| v / n as f64))
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.check_same_grid(other, "mask union")?;
        self.with_data(self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect())
    }

    pub fn difference(&self, other: &Mask) -> Result<Mask> {
        self.check_same_grid(other, "mask difference")?;
        self.with_data(self.data.iter().zip(&other.data).map(|(a, b)| *a && !*b).collect())
    }

    pub fn intersects(&self, other: &Mask) -> Result<bool> {
        self.check_same_grid(other, "mask intersection")?;
        Ok(self.data.iter().zip(&other.data).any(|(a, b)| *a && *b))
    }

    /// Whether every set voxel of `self` is set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> Result<bool> {
        self.check_same_grid(other, "mask subset")?;
        Ok(self.data.iter().zip(&other.data).all(|(a, b)| !*a || *b))
    }

    /// Nearest-voxel membership of a continuous point; points off the grid are outside.
    pub fn contains_point(&self, p: Point3) -> bool {
        if !in_extent(self.dims, p) {
            return false;
        }
        let idx = nearest_index(self.dims, p);
        self.data[self.index(idx[0], idx[1], idx[2])]
    }
}

#[inline]
fn nearest_index(dims: [usize; 3], p: Point3) -> [usize; 3] {
    let mut out = [0usize; 3];
    for a in 0..3 {
        // truncation equals floor once clamped to be non-negative
        out[a] = (p[a] + 0.5).clamp(0.0, (dims[a] - 1) as f64) as usize;
    }
    out
}

/// Edge-clamped trilinear interpolation at a continuous voxel coordinate.
pub fn trilinear_sample(vol: &Volume, point: Point3) -> Result<f32> {
    if point.iter().any(|c| !c.is_finite()) {
        return Err(Error::InputDomain(format!("non-finite sample point {point:?}")));
    }
    Ok(vol.sample_clamped(point) as f32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Trilinear,
    Nearest,
}

/// Forward map `x ↦ linear · x + offset` in voxel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub linear: Matrix3<f64>,
    pub offset: Vector3<f64>,
}

impl Affine {
    pub fn identity() -> Self {
        Affine {
            linear: Matrix3::identity(),
            offset: Vector3::zeros(),
        }
    }

    /// Isotropic scaling by `factor` about `center`.
    pub fn scaling(center: Point3, factor: f64) -> Self {
        let c = Vector3::from(center);
        Affine {
            linear: Matrix3::identity() * factor,
            offset: c - c * factor,
        }
    }

    #[inline]
    pub fn apply(&self, p: Point3) -> Point3 {
        let v = self.linear * Vector3::from(p) + self.offset;
        [v.x, v.y, v.z]
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn after(&self, first: &Affine) -> Affine {
        Affine {
            linear: self.linear * first.linear,
            offset: self.linear * first.offset + self.offset,
        }
    }

    pub fn inverse(&self) -> Option<Affine> {
        let inv = self.linear.try_inverse()?;
        Some(Affine {
            linear: inv,
            offset: -(inv * self.offset),
        })
    }
}

/// Rotation about a pivot followed by a translation, in voxel units:
/// `x ↦ R (x - center) + center + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    center: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Point3, center: Point3) -> Result<Self> {
        if rotation.iter().chain(&translation).chain(&center).any(|v| !v.is_finite()) {
            return Err(Error::InputDomain("non-finite transform component".into()));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if ortho > 1e-6 || (det - 1.0).abs() > 1e-6 {
            return Err(Error::Parameter(format!(
                "rotation must be orthonormal with det +1 (deviation {ortho:e}, det {det})"
            )));
        }
        Ok(RigidTransform {
            rotation,
            translation: Vector3::from(translation),
            center: Vector3::from(center),
        })
    }

    pub fn identity(center: Point3) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            center: Vector3::from(center),
        }
    }

    /// Rotation `Rz(γ) · Ry(β) · Rx(α)` with angles in degrees.
    pub fn from_euler_deg(angles: [f64; 3], translation: Point3, center: Point3) -> Result<Self> {
        Self::new(euler_rotation(angles), translation, center)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> Point3 {
        self.translation.into()
    }

    pub fn center(&self) -> Point3 {
        self.center.into()
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        self.to_affine().apply(p)
    }

    pub fn to_affine(&self) -> Affine {
        Affine {
            linear: self.rotation,
            offset: self.center + self.translation - self.rotation * self.center,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        // x = Rᵀ (y - c - t) + c, pivot moved to c + t.
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -self.translation,
            center: self.center + self.translation,
        }
    }
}

pub fn euler_rotation(angles_deg: [f64; 3]) -> Matrix3<f64> {
    let [a, b, g] = angles_deg.map(f64::to_radians);
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, a.cos(), -a.sin(), 0.0, a.sin(), a.cos());
    let ry = Matrix3::new(b.cos(), 0.0, b.sin(), 0.0, 1.0, 0.0, -b.sin(), 0.0, b.cos());
    let rz = Matrix3::new(g.cos(), -g.sin(), 0.0, g.sin(), g.cos(), 0.0, 0.0, 0.0, 1.0);
    rz * ry * rx
}

/// Pull-back warp of a volume under the forward map `forward`.
/// Samples whose pre-image falls outside the source extent get `fill`.
pub fn warp_affine(vol: &Volume, forward: &Affine, interp: Interpolation, fill: f32) -> Volume {
    let inv = forward
        .inverse()
        .expect("warp requires an invertible transform");
    warp_pullback(vol.dims, vol.spacing, &inv, |p| {
        if !in_extent(vol.dims, p) {
            return fill;
        }
        match interp {
            Interpolation::Trilinear => vol.sample_clamped(p) as f32,
            Interpolation::Nearest => {
                let i = nearest_index(vol.dims, p);
                *vol.get(i[0], i[1], i[2])
            }
        }
    })
}

/// Nearest-neighbour pull-back warp of a mask; off-source samples are unset.
pub fn warp_mask_affine(mask: &Mask, forward: &Affine) -> Mask {
    let inv = forward
        .inverse()
        .expect("warp requires an invertible transform");
    warp_pullback(mask.dims, mask.spacing, &inv, |p| mask.contains_point(p))
}

/// Nearest-neighbour pull-back of up to eight masks on one grid. The source
/// voxel is located once per output voxel and shared by all masks.
pub fn warp_masks_affine(masks: &[&Mask], forward: &Affine) -> Result<Vec<Mask>> {
    let Some(first) = masks.first() else {
        return Ok(Vec::new());
    };
    if masks.len() > 8 {
        return Err(Error::Parameter(format!("at most 8 masks per joint warp, got {}", masks.len())));
    }
    for m in masks {
        first.check_same_grid(m, "mask")?;
    }
    let inv = forward
        .inverse()
        .ok_or_else(|| Error::Parameter("warp requires an invertible transform".into()))?;
    let dims = first.dims;
    let bits = warp_pullback(dims, first.spacing, &inv, |p| {
        if !in_extent(dims, p) {
            return 0u8;
        }
        let [x, y, z] = nearest_index(dims, p);
        let idx = x + dims[0] * (y + dims[1] * z);
        masks
            .iter()
            .enumerate()
            .fold(0u8, |acc, (k, m)| acc | (u8::from(m.data[idx]) << k))
    });
    Ok((0..masks.len())
        .map(|k| Grid {
            dims,
            spacing: first.spacing,
            data: bits.data.iter().map(|b| b >> k & 1 == 1).collect(),
        })
        .collect())
}

fn warp_pullback<T, F>(dims: [usize; 3], spacing: [f64; 3], inv: &Affine, sample: F) -> Grid<T>
where
    T: Clone + Send + Sync + Default,
    F: Fn(Point3) -> T + Sync,
{
    let [nx, ny, _] = dims;
    let mut data = vec![T::default(); dims[0] * dims[1] * dims[2]];
    let col0 = inv.linear.column(0).into_owned();
    data.par_chunks_mut(nx).enumerate().for_each(|(row, out)| {
        let y = (row % ny) as f64;
        let z = (row / ny) as f64;
        let base = inv.linear * Vector3::new(0.0, y, z) + inv.offset;
        for (x, o) in out.iter_mut().enumerate() {
            let p = base + col0 * x as f64;
            *o = sample([p.x, p.y, p.z]);
        }
    });
    Grid { dims, spacing, data }
}

pub fn warp_rigid(vol: &Volume, t: &RigidTransform, interp: Interpolation, fill: f32) -> Volume {
    warp_affine(vol, &t.to_affine(), interp, fill)
}

/// Masks only warp with nearest-neighbour sampling so they stay binary.
pub fn warp_mask_rigid(mask: &Mask, t: &RigidTransform) -> Mask {
    warp_mask_affine(mask, &t.to_affine())
}

fn check_scale_factor(factor: f64) -> Result<()> {
    if !(0.1..=10.0).contains(&factor) {
        return Err(Error::Parameter(format!(
            "scale factor must lie in [0.1, 10], got {factor}"
        )));
    }
    Ok(())
}

/// Scale content about the volume center on the same grid; spacing is unchanged.
/// Uncovered voxels take the edge-clamped value of the source.
pub fn rescale_grid(vol: &Volume, factor: f64, interp: Interpolation) -> Result<Volume> {
    check_scale_factor(factor)?;
    if factor == 1.0 {
        return Ok(vol.clone());
    }
    let fwd = Affine::scaling(vol.center(), factor);
    let inv = fwd.inverse().expect("nonzero scale");
    Ok(warp_pullback(vol.dims, vol.spacing, &inv, |p| match interp {
        Interpolation::Trilinear => vol.sample_clamped(p) as f32,
        Interpolation::Nearest => {
            let i = nearest_index(vol.dims, p);
            *vol.get(i[0], i[1], i[2])
        }
    }))
}

pub fn rescale_mask(mask: &Mask, factor: f64) -> Result<Mask> {
    check_scale_factor(factor)?;
    if factor == 1.0 {
        return Ok(mask.clone());
    }
    Ok(warp_mask_affine(mask, &Affine::scaling(mask.center(), factor)))
}

/// Normalized discrete Gaussian taps `[-r, r]` with `r = ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Half-sample symmetric reflection of an index into `[0, n)`.
#[inline]
fn reflect(mut i: i64, n: i64) -> usize {
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

fn convolve_axis(src: &[f64], dims: [usize; 3], axis: usize, kernel: &[f64]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let r = (kernel.len() / 2) as i64;
    let mut out = vec![0f64; src.len()];
    out.par_chunks_mut(nx).enumerate().for_each(|(row, o)| {
        let y = row % ny;
        let z = row / ny;
        match axis {
            0 => {
                let line = &src[row * nx..(row + 1) * nx];
                for (x, ov) in o.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (k, w) in kernel.iter().enumerate() {
                        acc += w * line[reflect(x as i64 + k as i64 - r, nx as i64)];
                    }
                    *ov = acc;
                }
            }
            1 => {
                for (k, w) in kernel.iter().enumerate() {
                    let yy = reflect(y as i64 + k as i64 - r, ny as i64);
                    let base = nx * (yy + ny * z);
                    for (ov, s) in o.iter_mut().zip(&src[base..base + nx]) {
                        *ov += w * s;
                    }
                }
            }
            _ => {
                for (k, w) in kernel.iter().enumerate() {
                    let zz = reflect(z as i64 + k as i64 - r, nz as i64);
                    let base = nx * (y + ny * zz);
                    for (ov, s) in o.iter_mut().zip(&src[base..base + nx]) {
                        *ov += w * s;
                    }
                }
            }
        }
    });
    out
}

fn blur_f64(mut buf: Vec<f64>, dims: [usize; 3], kernel: &[f64]) -> Vec<f64> {
    for axis in 0..3 {
        if dims[axis] > 1 {
            buf = convolve_axis(&buf, dims, axis, kernel);
        }
    }
    buf
}

/// Separable Gaussian blur, kernel truncated at 3σ and renormalized, with
/// half-sample symmetric boundaries (mass preserving).
///
/// With a support mask this is a normalized convolution: only in-mask voxels
/// contribute and only in-mask voxels are written.
pub fn gaussian_blur(vol: &Volume, sigma_vox: f64, support: Option<&Mask>) -> Result<Volume> {
    if !sigma_vox.is_finite() || sigma_vox < 0.0 {
        return Err(Error::Parameter(format!(
            "blur sigma must be finite and >= 0, got {sigma_vox}"
        )));
    }
    if let Some(m) = support {
        vol.check_same_grid(m, "blur support mask")?;
    }
    if sigma_vox == 0.0 {
        return Ok(vol.clone());
    }
    let kernel = gaussian_kernel(sigma_vox);
    let out = match support {
        None => {
            let buf = vol.data.iter().map(|&v| v as f64).collect();
            blur_f64(buf, vol.dims, &kernel)
                .into_iter()
                .map(|v| v as f32)
                .collect()
        }
        Some(mask) => {
            let num = vol
                .data
                .iter()
                .zip(&mask.data)
                .map(|(&v, &m)| if m { v as f64 } else { 0.0 })
                .collect();
            let den = mask.data.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
            let num = blur_f64(num, vol.dims, &kernel);
            let den = blur_f64(den, vol.dims, &kernel);
            vol.data
                .iter()
                .zip(&mask.data)
                .zip(num.iter().zip(&den))
                .map(|((&v, &m), (n, d))| if m && *d > 0.0 { (n / d) as f32 } else { v })
                .collect()
        }
    };
    vol.with_data(out)
}
