//! K-space spike artifacts.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::{Complex, Complex64};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{draw, AppliedOp, LabeledSample, Range};
use crate::error::{Error, Result};
use crate::grid::Volume;
use crate::rng::SampleRng;

/// One injected spectral component. Its Hermitian partner at `-coord` gets
/// the conjugate value, so the image stays real.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub coord: [usize; 3],
    pub magnitude: f64,
    pub phase: f64,
}

fn conjugate_coord(k: [usize; 3], dims: [usize; 3]) -> [usize; 3] {
    [0, 1, 2].map(|a| (dims[a] - k[a]) % dims[a])
}

/// In-place unnormalized forward 3D DFT (x fastest).
fn fft3_forward<T: rustfft::FftNum>(buf: &mut [Complex<T>], dims: [usize; 3]) {
    let [nx, ny, nz] = dims;
    let mut planner = FftPlanner::<T>::new();
    if nx > 1 {
        let fft = planner.plan_fft_forward(nx);
        buf.par_chunks_mut(nx * ny).for_each(|slab| fft.process(slab));
    }
    if ny > 1 {
        let fft = planner.plan_fft_forward(ny);
        buf.par_chunks_mut(nx * ny).for_each(|slab| {
            let mut lines = vec![Complex::new(T::zero(), T::zero()); nx * ny];
            for y in 0..ny {
                for x in 0..nx {
                    lines[x * ny + y] = slab[x + nx * y];
                }
            }
            fft.process(&mut lines);
            for y in 0..ny {
                for x in 0..nx {
                    slab[x + nx * y] = lines[x * ny + y];
                }
            }
        });
    }
    if nz > 1 {
        let fft = planner.plan_fft_forward(nz);
        let plane = nx * ny;
        let mut lines = vec![Complex::new(T::zero(), T::zero()); buf.len()];
        for z in 0..nz {
            for i in 0..plane {
                lines[i * nz + z] = buf[i + plane * z];
            }
        }
        lines.par_chunks_mut(nz * nx).for_each(|c| fft.process(c));
        for z in 0..nz {
            for i in 0..plane {
                buf[i + plane * z] = lines[i * nz + z];
            }
        }
    }
}

/// Largest spectral magnitude of the volume's 3D DFT, computed in single
/// precision (it only sets the spike scale).
pub fn max_spectrum_magnitude(vol: &Volume) -> f64 {
    let mut buf: Vec<Complex<f32>> = vol.data().iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft3_forward(&mut buf, vol.dims());
    buf.iter().map(|c| c.norm() as f64).fold(0.0, f64::max)
}

/// Add the given spikes (and their conjugate partners) to the spectrum and
/// return the real inverse transform. By linearity this is the input plus one
/// real plane wave per spike, evaluated directly so the spectral difference is
/// confined to the injected coordinates.
pub fn apply_spikes(vol: &Volume, spikes: &[Spike]) -> Result<Volume> {
    let dims = vol.dims();
    let [nx, ny, nz] = dims;
    let n_total = (nx * ny * nz) as f64;
    let mut delta = vec![0f64; vol.len()];
    for s in spikes {
        if s.coord == [0, 0, 0] {
            return Err(Error::Parameter("spikes must exclude the DC coordinate".into()));
        }
        if (0..3).any(|a| s.coord[a] >= dims[a]) {
            return Err(Error::Parameter(format!("spike coordinate {:?} off grid", s.coord)));
        }
        if s.magnitude == 0.0 {
            continue;
        }
        let self_conjugate = conjugate_coord(s.coord, dims) == s.coord;
        // A self-conjugate bin must hold a real value: snap the phase to 0 or π.
        let (scale, phase) = if self_conjugate {
            (1.0, if s.phase.cos() >= 0.0 { 0.0 } else { PI })
        } else {
            (2.0, s.phase)
        };
        let amp = Complex64::from_polar(scale * s.magnitude / n_total, phase);
        let axis = |k: usize, n: usize| -> Vec<Complex64> {
            (0..n)
                .map(|i| Complex64::from_polar(1.0, 2.0 * PI * ((k * i) % n) as f64 / n as f64))
                .collect()
        };
        let ex = axis(s.coord[0], nx);
        let ey = axis(s.coord[1], ny);
        let ez = axis(s.coord[2], nz);
        delta.par_chunks_mut(nx).enumerate().for_each(|(row, d)| {
            let w = amp * ey[row % ny] * ez[row / ny];
            for (dv, e) in d.iter_mut().zip(&ex) {
                *dv += (w * e).re;
            }
        });
    }
    let data = vol
        .data()
        .iter()
        .zip(&delta)
        .map(|(&v, &d)| (v as f64 + d) as f32)
        .collect();
    vol.with_data(data)
}

/// Inject `n` spikes (n from `count_range`) of magnitude `r · max|F|`,
/// `r` from `strength_range`, at uniformly drawn non-DC coordinates.
pub fn kspace_spike(
    s: &LabeledSample,
    rng: &mut SampleRng,
    count_range: [usize; 2],
    strength_range: Range,
) -> Result<(LabeledSample, AppliedOp)> {
    super::check_range("spike strength", strength_range, [0.0, 1.0])?;
    if count_range[0] > count_range[1] {
        return Err(Error::Parameter(format!("empty spike count range {count_range:?}")));
    }
    let dims = s.volume.dims();
    if dims == [1, 1, 1] {
        return Err(Error::Parameter("spikes need more than one voxel".into()));
    }
    let count = rng.random_range(count_range[0]..=count_range[1]);
    let strength = draw(rng, strength_range);
    let magnitude = if strength == 0.0 || count == 0 {
        0.0
    } else {
        strength * max_spectrum_magnitude(&s.volume)
    };
    let mut spikes = Vec::with_capacity(count);
    while spikes.len() < count {
        let coord = [0, 1, 2].map(|a| rng.random_range(0..dims[a]));
        let phase = rng.random_range(0.0..2.0 * PI);
        if coord == [0, 0, 0] {
            continue;
        }
        spikes.push(Spike {
            coord,
            magnitude,
            phase,
        });
    }
    let out = if magnitude == 0.0 {
        s.volume.clone()
    } else {
        apply_spikes(&s.volume, &spikes)?
    };
    Ok((s.with_volume(out), AppliedOp::Spike { strength, spikes }))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::blob_sample;
    use super::*;
    use crate::rng::{substream, Domain};

    /// Naive O(N²) DFT, independent of rustfft.
    fn naive_dft(data: &[f64], dims: [usize; 3]) -> Vec<Complex64> {
        let [nx, ny, nz] = dims;
        let mut out = vec![Complex64::default(); data.len()];
        for kz in 0..nz {
            for ky in 0..ny {
                for kx in 0..nx {
                    let mut acc = Complex64::default();
                    for z in 0..nz {
                        for y in 0..ny {
                            for x in 0..nx {
                                let ang = -2.0 * PI * ((kx * x) as f64 / nx as f64 + (ky * y) as f64 / ny as f64 + (kz * z) as f64 / nz as f64);
                                acc += data[x + nx * (y + ny * z)] * Complex64::from_polar(1.0, ang);
                            }
                        }
                    }
                    out[kx + nx * (ky + ny * kz)] = acc;
                }
            }
        }
        out
    }

    fn small_volume(dims: [usize; 3]) -> Volume {
        let n = dims.iter().product::<usize>();
        let data = (0..n).map(|i| (10.0 + ((i * 37) % 11) as f64 + (i as f64 * 0.3).sin()) as f32).collect();
        Volume::new(dims, [1.0; 3], data).unwrap()
    }

    #[test]
    fn fft_matches_naive_dft() {
        let dims = [6, 5, 4];
        let v = small_volume(dims);
        let mut buf: Vec<Complex64> = v.data().iter().map(|&x| Complex64::new(x as f64, 0.0)).collect();
        fft3_forward(&mut buf, dims);
        let d: Vec<f64> = v.data().iter().map(|&x| x as f64).collect();
        let expect = naive_dft(&d, dims);
        for (a, b) in buf.iter().zip(&expect) {
            assert!((a - b).norm() < 1e-9);
        }
        let max = expect.iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!((max_spectrum_magnitude(&v) / max - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_strength_is_identity() {
        let s = blob_sample(16);
        let mut rng = substream(1, Domain::Augment, 0);
        let (out, _) = kspace_spike(&s, &mut rng, [1, 3], [0.0, 0.0]).unwrap();
        assert_eq!(out.volume, s.volume);
    }

    #[test]
    fn difference_spectrum_is_local() {
        let dims = [8, 6, 5];
        let v = small_volume(dims);
        let spikes = [
            Spike { coord: [3, 1, 2], magnitude: 40.0, phase: 0.7 },
            Spike { coord: [4, 3, 0], magnitude: 25.0, phase: 2.0 }, // x=4, y=3 are Nyquist; z=0
            Spike { coord: [0, 0, 1], magnitude: 10.0, phase: -1.0 },
        ];
        let out = apply_spikes(&v, &spikes).unwrap();
        let diff: Vec<f64> = out.data().iter().zip(v.data()).map(|(a, b)| *a as f64 - *b as f64).collect();
        let spec = naive_dft(&diff, dims);
        let mut allowed = Vec::new();
        for s in &spikes {
            allowed.push(s.coord);
            allowed.push(conjugate_coord(s.coord, dims));
        }
        let peak = spec.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for kz in 0..5 {
            for ky in 0..6 {
                for kx in 0..8 {
                    let m = spec[kx + 8 * (ky + 6 * kz)].norm();
                    if !allowed.contains(&[kx, ky, kz]) {
                        // f32 storage of the output bounds the residue
                        assert!(m < 1e-4 * peak, "{kx},{ky},{kz}: {m}");
                    }
                }
            }
        }
        // injected value recovered at the spike coordinate
        let k = spec[3 + 8 * (1 + 6 * 2)];
        assert!((k.norm() - 40.0).abs() < 1e-3 && (k.arg() - 0.7).abs() < 1e-4);
        // self-conjugate bin holds a real value
        let sc = spec[4 + 8 * 3];
        assert!((sc.re.abs() - 25.0).abs() < 1e-3 && sc.im.abs() < 1e-3);
    }

    #[test]
    fn output_is_real_and_labels_untouched() {
        let s = blob_sample(16);
        let mut rng = substream(4, Domain::Augment, 2);
        let (out, op) = kspace_spike(&s, &mut rng, [1, 3], [0.05, 0.15]).unwrap();
        assert_eq!(out.keypoints, s.keypoints);
        let AppliedOp::Spike { spikes, strength } = op else { panic!() };
        assert!((1..=3).contains(&spikes.len()));
        assert!((0.05..=0.15).contains(&strength));
        assert!(spikes.iter().all(|s| s.coord != [0, 0, 0]));
        assert!(out.volume.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_dc_spike() {
        let v = small_volume([4, 4, 4]);
        let err = apply_spikes(&v, &[Spike { coord: [0, 0, 0], magnitude: 1.0, phase: 0.0 }]).unwrap_err();
        assert_eq!(err.code(), "parameter");
    }
}
