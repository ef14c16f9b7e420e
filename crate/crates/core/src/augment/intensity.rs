use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{draw, AppliedOp, LabeledSample, Range};
use crate::error::{Error, Result};
use crate::grid::Volume;
use crate::rng::SampleRng;

/// Add i.i.d. zero-mean Gaussian noise of absolute standard deviation `sigma`.
pub fn apply_noise(vol: &Volume, sigma: f64, rng: &mut SampleRng) -> Volume {
    if sigma == 0.0 {
        return vol.clone();
    }
    let data = vol
        .data()
        .iter()
        .map(|&v| {
            let n: f64 = StandardNormal.sample(rng);
            (v as f64 + sigma * n) as f32
        })
        .collect();
    vol.with_data(data).expect("same grid")
}

/// Noise with σ = f · (p99 − p1), f drawn from `frac_range`.
pub fn additive_noise(
    s: &LabeledSample,
    rng: &mut SampleRng,
    frac_range: Range,
) -> Result<(LabeledSample, AppliedOp)> {
    super::check_range("noise fraction", frac_range, [0.0, 0.3])?;
    let frac = draw(rng, frac_range);
    let spread = (s.volume.percentile(99.0) - s.volume.percentile(1.0)) as f64;
    let sigma = frac * spread;
    let out = apply_noise(&s.volume, sigma, rng);
    Ok((
        s.with_volume(out),
        AppliedOp::Noise {
            sigma_frac: frac,
            sigma,
        },
    ))
}

/// Smooth multiplicative field `exp(P(x̂))`, `P` a polynomial of total degree
/// `order` in coordinates normalized to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasField {
    pub order: usize,
    /// One coefficient per term of [`bias_terms`], same order.
    pub coeffs: Vec<f64>,
}

/// Monomial exponents `(i, j, k)` with `i + j + k <= order`, ordered by `i`,
/// then `j`, then `k`.
pub fn bias_terms(order: usize) -> Vec<[usize; 3]> {
    let mut t = Vec::new();
    for i in 0..=order {
        for j in 0..=order - i {
            for k in 0..=order - i - j {
                t.push([i, j, k]);
            }
        }
    }
    t
}

fn normalized_axis(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|i| 2.0 * i as f64 / (n - 1) as f64 - 1.0).collect()
}

impl BiasField {
    pub fn new(order: usize, coeffs: Vec<f64>) -> Result<Self> {
        let n = bias_terms(order).len();
        if coeffs.len() != n {
            return Err(Error::Parameter(format!(
                "bias field of order {order} needs {n} coefficients, got {}",
                coeffs.len()
            )));
        }
        Ok(BiasField { order, coeffs })
    }

    /// Field values `exp(P)` on the grid, x fastest.
    pub fn values(&self, dims: [usize; 3]) -> Vec<f64> {
        let [nx, ny, nz] = dims;
        let terms = bias_terms(self.order);
        let xs = normalized_axis(nx);
        let ys = normalized_axis(ny);
        let zs = normalized_axis(nz);
        let pow = |v: f64, e: usize| v.powi(e as i32);
        let mut out = vec![0f64; nx * ny * nz];
        out.par_chunks_mut(nx).enumerate().for_each(|(row, o)| {
            let y = ys[row % ny];
            let z = zs[row / ny];
            // Collapse y/z into one coefficient per power of x.
            let mut q = vec![0f64; self.order + 1];
            for (t, c) in terms.iter().zip(&self.coeffs) {
                q[t[0]] += c * pow(y, t[1]) * pow(z, t[2]);
            }
            for (ov, &x) in o.iter_mut().zip(&xs) {
                let p = q.iter().rev().fold(0.0, |acc, c| acc * x + c);
                *ov = p.exp();
            }
        });
        out
    }
}

pub fn apply_bias_field(vol: &Volume, field: &BiasField) -> Volume {
    if field.coeffs.iter().all(|&c| c == 0.0) {
        return vol.clone();
    }
    let f = field.values(vol.dims());
    let data = vol
        .data()
        .iter()
        .zip(&f)
        .map(|(&v, &m)| (v as f64 * m) as f32)
        .collect();
    vol.with_data(data).expect("same grid")
}

pub fn bias_field(
    s: &LabeledSample,
    rng: &mut SampleRng,
    order: usize,
    coeff_range: Range,
) -> Result<(LabeledSample, AppliedOp)> {
    if order > 4 {
        return Err(Error::Parameter(format!("bias field order must be <= 4, got {order}")));
    }
    let n = bias_terms(order).len();
    let coeffs: Vec<f64> = (0..n).map(|_| draw(rng, coeff_range)).collect();
    let field = BiasField::new(order, coeffs)?;
    let out = apply_bias_field(&s.volume, &field);
    Ok((
        s.with_volume(out),
        AppliedOp::BiasField {
            order,
            coeffs: field.coeffs,
        },
    ))
}

/// Min-max normalize, raise to `gamma`, restore the original range. Endpoints
/// are kept exactly; constant volumes are returned unchanged.
pub fn apply_gamma(vol: &Volume, gamma: f64) -> Volume {
    let (lo, hi) = vol.min_max();
    if gamma == 1.0 || lo >= hi {
        return vol.clone();
    }
    let (lo64, range) = (lo as f64, hi as f64 - lo as f64);
    let data = vol
        .data()
        .par_iter()
        .map(|&v| {
            if v == lo || v == hi {
                return v;
            }
            let t = (v as f64 - lo64) / range;
            (lo64 + t.powf(gamma) * range) as f32
        })
        .collect();
    vol.with_data(data).expect("same grid")
}

pub fn gamma_adjust(
    s: &LabeledSample,
    rng: &mut SampleRng,
    log_gamma_range: Range,
) -> Result<(LabeledSample, AppliedOp)> {
    super::check_range("log gamma", log_gamma_range, [0.5f64.ln(), 2f64.ln()])?;
    let gamma = draw(rng, log_gamma_range).exp();
    let out = apply_gamma(&s.volume, gamma);
    Ok((s.with_volume(out), AppliedOp::Gamma { gamma }))
}

/// One output sample of the thick-slice operator: a reference input index
/// and sparse weights, applied as `x[r] + Σ w_k (x[k] - x[r])` so constant
/// lines are reproduced exactly.
struct ResampleRow {
    reference: usize,
    taps: Vec<(usize, f64)>,
}

/// Area-average `n` samples down to `m` cells, then linearly interpolate back
/// to `n` with cell-centered alignment, composed into one operator.
fn thick_slice_operator(n: usize, m: usize) -> Vec<ResampleRow> {
    let w = n as f64 / m as f64;
    let down: Vec<Vec<(usize, f64)>> = (0..m)
        .map(|j| {
            let a = j as f64 * w;
            let b = (j + 1) as f64 * w;
            let mut taps = Vec::new();
            let mut i = a.floor() as usize;
            while (i as f64) < b && i < n {
                let ov = (b.min(i as f64 + 1.0) - a.max(i as f64)).max(0.0);
                if ov > 0.0 {
                    taps.push((i, ov));
                }
                i += 1;
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter().map(|&(i, ov)| (i, ov / total)).collect()
        })
        .collect();
    (0..n)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * m as f64 / n as f64 - 0.5).clamp(0.0, (m - 1) as f64);
            let j0 = pos.floor() as usize;
            let j1 = (j0 + 1).min(m - 1);
            let t = pos - j0 as f64;
            let mut taps: Vec<(usize, f64)> = down[j0].iter().map(|&(k, v)| (k, (1.0 - t) * v)).collect();
            for &(k, v) in &down[j1] {
                match taps.iter_mut().find(|e| e.0 == k) {
                    Some(e) => e.1 += t * v,
                    None => taps.push((k, t * v)),
                }
            }
            ResampleRow {
                reference: down[j0][0].0,
                taps,
            }
        })
        .collect()
}

/// Simulate a thick-slice acquisition along `axis`: area-average down by
/// `factor`, then linearly resample back. Grid dims are unchanged.
pub fn apply_anisotropy(vol: &Volume, axis: usize, factor: f64) -> Result<Volume> {
    if axis > 2 {
        return Err(Error::Parameter(format!("axis must be 0..=2, got {axis}")));
    }
    if !(1.0..=4.0).contains(&factor) {
        return Err(Error::Parameter(format!(
            "anisotropy factor must lie in [1, 4], got {factor}"
        )));
    }
    let dims = vol.dims();
    let n = dims[axis];
    let m = ((n as f64 / factor).round() as usize).max(1);
    if m == n {
        return Ok(vol.clone());
    }
    let [nx, ny, _] = dims;
    let stride = [1, nx, nx * ny][axis];
    let rows = thick_slice_operator(n, m);
    let src = vol.data();
    let mut out = vec![0f32; vol.len()];
    out.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slab)| {
        let offset = z * nx * ny;
        for (i, o) in slab.iter_mut().enumerate() {
            let idx = offset + i;
            let c = (idx / stride) % n;
            let base = idx - c * stride;
            let row = &rows[c];
            let r = src[base + row.reference * stride] as f64;
            let acc: f64 = row
                .taps
                .iter()
                .map(|&(k, w)| w * (src[base + k * stride] as f64 - r))
                .sum();
            *o = (r + acc) as f32;
        }
    });
    vol.with_data(out)
}

pub fn anisotropize(
    s: &LabeledSample,
    rng: &mut SampleRng,
    factor_range: Range,
) -> Result<(LabeledSample, AppliedOp)> {
    super::check_range("anisotropy factor", factor_range, [1.0, 4.0])?;
    let axis = rng.random_range(0..3usize);
    let factor = draw(rng, factor_range);
    let out = apply_anisotropy(&s.volume, axis, factor)?;
    Ok((s.with_volume(out), AppliedOp::Anisotropy { axis, factor }))
}
