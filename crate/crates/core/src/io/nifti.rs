//! Uncompressed single-file NIfTI-1 (`n+1`), little-endian, 3D only.
//!
//! Supported datatypes are uint8, int16 and float32. Spacing comes from
//! `pixdim[1..=3]`; qform/sform orientation is neither read nor written.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Mask, Volume};

pub const HEADER_SIZE: usize = 348;
/// Header plus the 4-byte extension flag.
pub const DATA_OFFSET: usize = 352;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(i16)]
pub enum Datatype {
    U8 = 2,
    I16 = 4,
    F32 = 16,
}

impl Datatype {
    fn from_code(code: i16) -> Result<Datatype> {
        match code {
            2 => Ok(Datatype::U8),
            4 => Ok(Datatype::I16),
            16 => Ok(Datatype::F32),
            c => Err(Error::Format(format!("unsupported NIfTI datatype code {c}"))),
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            Datatype::U8 => 1,
            Datatype::I16 => 2,
            Datatype::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NiftiHeader {
    pub dims: [usize; 3],
    pub datatype: Datatype,
    pub spacing: [f32; 3],
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub vox_offset: usize,
}

impl NiftiHeader {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], datatype: Datatype) -> NiftiHeader {
        NiftiHeader {
            dims,
            datatype,
            spacing: spacing.map(|s| s as f32),
            scl_slope: 1.0,
            scl_inter: 0.0,
            vox_offset: DATA_OFFSET,
        }
    }

    fn voxels(&self) -> usize {
        self.dims.iter().product()
    }

    /// Header and zeroed extension flag.
    pub fn encode(&self) -> Result<[u8; DATA_OFFSET]> {
        let mut h = [0u8; DATA_OFFSET];
        let put_i16 = |h: &mut [u8], at: usize, v: i16| h[at..at + 2].copy_from_slice(&v.to_le_bytes());
        let put_f32 = |h: &mut [u8], at: usize, v: f32| h[at..at + 4].copy_from_slice(&v.to_le_bytes());
        h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
        put_i16(&mut h, 40, 3);
        for a in 0..3 {
            let d = i16::try_from(self.dims[a])
                .map_err(|_| Error::Format(format!("dimension {} exceeds NIfTI-1 limit", self.dims[a])))?;
            put_i16(&mut h, 42 + 2 * a, d);
        }
        for a in 3..7 {
            put_i16(&mut h, 42 + 2 * a, 1);
        }
        put_i16(&mut h, 70, self.datatype as i16);
        put_i16(&mut h, 72, 8 * self.datatype.bytes() as i16);
        put_f32(&mut h, 76, 1.0);
        for a in 0..3 {
            put_f32(&mut h, 80 + 4 * a, self.spacing[a]);
        }
        put_f32(&mut h, 108, self.vox_offset as f32);
        put_f32(&mut h, 112, self.scl_slope);
        put_f32(&mut h, 116, self.scl_inter);
        // millimetres, seconds
        h[123] = 2 | 8;
        h[344..348].copy_from_slice(b"n+1\0");
        Ok(h)
    }

    pub fn decode(bytes: &[u8]) -> Result<NiftiHeader> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::Format(format!("truncated NIfTI header: {} bytes", bytes.len())));
        }
        let i32_at = |at: usize| i32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let i16_at = |at: usize| i16::from_le_bytes(bytes[at..at + 2].try_into().expect("2 bytes"));
        let f32_at = |at: usize| f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let sizeof_hdr = i32_at(0);
        if sizeof_hdr != HEADER_SIZE as i32 {
            if sizeof_hdr.swap_bytes() == HEADER_SIZE as i32 {
                return Err(Error::Format("big-endian NIfTI files are not supported".into()));
            }
            return Err(Error::Format(format!("sizeof_hdr is {sizeof_hdr}, expected 348")));
        }
        match &bytes[344..348] {
            b"n+1\0" => {}
            b"ni1\0" => {
                return Err(Error::Format(
                    "detached header/image pair (magic ni1) is not supported; use single-file .nii".into(),
                ))
            }
            m => return Err(Error::Format(format!("bad NIfTI magic {m:?}"))),
        }
        let ndim = i16_at(40);
        if ndim != 3 {
            return Err(Error::Format(format!("expected a 3D image, dim[0] = {ndim}")));
        }
        let mut dims = [0usize; 3];
        for a in 0..3 {
            let d = i16_at(42 + 2 * a);
            if d < 1 {
                return Err(Error::Format(format!("dim[{}] = {d} must be >= 1", a + 1)));
            }
            dims[a] = d as usize;
        }
        let datatype = Datatype::from_code(i16_at(70))?;
        let bitpix = i16_at(72);
        if bitpix as usize != 8 * datatype.bytes() {
            return Err(Error::Format(format!("bitpix {bitpix} does not match datatype {datatype:?}")));
        }
        let spacing = [f32_at(80), f32_at(84), f32_at(88)];
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Format(format!("pixdim must be positive, got {spacing:?}")));
        }
        let off = f32_at(108);
        if !(off >= DATA_OFFSET as f32 && off.fract() == 0.0) {
            return Err(Error::Format(format!("vox_offset {off} must be an integer >= 352")));
        }
        Ok(NiftiHeader {
            dims,
            datatype,
            spacing,
            scl_slope: f32_at(112),
            scl_inter: f32_at(116),
            vox_offset: off as usize,
        })
    }

    /// Whether stored values pass through `slope · raw + inter`. A zero or
    /// non-finite slope means no scaling.
    fn scaling(&self) -> Option<(f64, f64)> {
        let (s, i) = (self.scl_slope, self.scl_inter);
        if s == 0.0 || !s.is_finite() || (s == 1.0 && i == 0.0) {
            None
        } else {
            Some((s as f64, if i.is_finite() { i as f64 } else { 0.0 }))
        }
    }
}

/// Parse a complete single-file image into a float volume.
pub fn decode_volume(bytes: &[u8]) -> Result<(NiftiHeader, Volume)> {
    let h = NiftiHeader::decode(bytes)?;
    let n = h.voxels();
    let need = h.vox_offset + n * h.datatype.bytes();
    if bytes.len() < need {
        return Err(Error::Format(format!(
            "truncated NIfTI payload: {} bytes, need {need}",
            bytes.len()
        )));
    }
    let payload = &bytes[h.vox_offset..need];
    let raw: Vec<f32> = match h.datatype {
        Datatype::U8 => payload.iter().map(|&b| b as f32).collect(),
        Datatype::I16 => payload
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32)
            .collect(),
        Datatype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    };
    let data = match h.scaling() {
        Some((s, i)) => raw.iter().map(|&v| (s * v as f64 + i) as f32).collect(),
        None => raw,
    };
    let vol = Volume::new(h.dims, h.spacing.map(|s| s as f64), data)?;
    Ok((h, vol))
}

/// Serialize as float32 with identity scaling.
pub fn encode_volume(vol: &Volume) -> Result<Vec<u8>> {
    let h = NiftiHeader::new(vol.dims(), vol.spacing(), Datatype::F32);
    let mut out = Vec::with_capacity(DATA_OFFSET + 4 * vol.len());
    out.extend_from_slice(&h.encode()?);
    for v in vol.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Serialize as uint8 0/1.
pub fn encode_mask(mask: &Mask) -> Result<Vec<u8>> {
    let h = NiftiHeader::new(mask.dims(), mask.spacing(), Datatype::U8);
    let mut out = Vec::with_capacity(DATA_OFFSET + mask.len());
    out.extend_from_slice(&h.encode()?);
    out.extend(mask.data().iter().map(|&b| b as u8));
    Ok(out)
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_volume(&bytes)
        .map(|(_, v)| v)
        .map_err(|e| in_file(e, path))
}

pub fn write_volume(vol: &Volume, path: impl AsRef<Path>) -> Result<()> {
    super::write_atomic(path, &encode_volume(vol)?)
}

/// Any supported datatype; nonzero stored values are inside.
pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let vol = read_volume(path)?;
    let data = vol.data().iter().map(|&v| v != 0.0).collect();
    vol.with_data(data)
}

pub fn write_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    super::write_atomic(path, &encode_mask(mask)?)
}

fn in_file(e: Error, path: &Path) -> Error {
    match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain};
    use rand::Rng;

    fn random_volume(n: usize, seed: u64) -> Volume {
        let mut rng = substream(seed, Domain::Oracle, 0);
        let data = (0..n * n * n).map(|_| rng.random::<f32>() * 2000.0 - 500.0).collect();
        Volume::new([n, n, n], [3.0, 2.5, 2.0], data).unwrap()
    }

    #[test]
    fn float_round_trip_is_bitwise() {
        let v = random_volume(32, 1);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.nii");
        write_volume(&v, &p).unwrap();
        let back = read_volume(&p).unwrap();
        assert_eq!(back.dims(), v.dims());
        assert_eq!(back.spacing(), v.spacing());
        assert!(back.data().iter().zip(v.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 352 + 4 * 32 * 32 * 32);
    }

    #[test]
    fn header_layout_matches_nifti1_offsets() {
        let h = NiftiHeader::new([7, 5, 3], [1.5, 2.0, 4.0], Datatype::F32).encode().unwrap();
        assert_eq!(i32::from_le_bytes(h[0..4].try_into().unwrap()), 348);
        assert_eq!(i16::from_le_bytes([h[40], h[41]]), 3);
        assert_eq!(i16::from_le_bytes([h[42], h[43]]), 7);
        assert_eq!(i16::from_le_bytes([h[46], h[47]]), 3);
        assert_eq!(i16::from_le_bytes([h[70], h[71]]), 16);
        assert_eq!(i16::from_le_bytes([h[72], h[73]]), 32);
        assert_eq!(f32::from_le_bytes(h[80..84].try_into().unwrap()), 1.5);
        assert_eq!(f32::from_le_bytes(h[108..112].try_into().unwrap()), 352.0);
        assert_eq!(&h[344..348], b"n+1\0");
    }

    #[test]
    fn int16_scaling_decodes_affinely() {
        let mut h = NiftiHeader::new([4, 1, 1], [1.0; 3], Datatype::I16);
        h.scl_slope = 2.0;
        h.scl_inter = 1.0;
        let mut bytes = h.encode().unwrap().to_vec();
        let raw: [i16; 4] = [-3, 0, 7, 1000];
        for r in raw {
            bytes.extend_from_slice(&r.to_le_bytes());
        }
        let (_, v) = decode_volume(&bytes).unwrap();
        let expect: Vec<f32> = raw.iter().map(|&r| 2.0 * r as f32 + 1.0).collect();
        assert_eq!(v.data(), &expect[..]);
    }

    #[test]
    fn zero_slope_means_unscaled() {
        let mut h = NiftiHeader::new([2, 1, 1], [1.0; 3], Datatype::U8);
        h.scl_slope = 0.0;
        h.scl_inter = 5.0;
        let mut bytes = h.encode().unwrap().to_vec();
        bytes.extend_from_slice(&[3, 250]);
        assert_eq!(decode_volume(&bytes).unwrap().1.data(), &[3.0, 250.0]);
    }

    #[test]
    fn rejections() {
        let good = encode_volume(&random_volume(4, 2)).unwrap();
        let msg = |b: &[u8]| match decode_volume(b) {
            Err(Error::Format(m)) => m,
            other => panic!("expected format error, got {other:?}"),
        };

        let mut ni1 = good.clone();
        ni1[344..348].copy_from_slice(b"ni1\0");
        assert!(msg(&ni1).contains("detached"));

        let mut bad = good.clone();
        bad[344..348].copy_from_slice(b"xyz\0");
        assert!(msg(&bad).contains("magic"));

        assert!(msg(&good[..200]).contains("truncated NIfTI header"));
        assert!(msg(&good[..good.len() - 1]).contains("truncated NIfTI payload"));

        let mut dt = good.clone();
        dt[70..72].copy_from_slice(&64i16.to_le_bytes());
        assert!(msg(&dt).contains("datatype"));

        let mut px = good.clone();
        px[84..88].copy_from_slice(&(-1.0f32).to_le_bytes());
        assert!(msg(&px).contains("pixdim"));

        let mut be = good.clone();
        be[0..4].copy_from_slice(&348i32.to_be_bytes());
        assert!(msg(&be).contains("big-endian"));

        let mut d4 = good;
        d4[40..42].copy_from_slice(&4i16.to_le_bytes());
        assert!(msg(&d4).contains("3D"));
    }

    #[test]
    fn mask_round_trip() {
        let mut m = Mask::filled([5, 6, 7], [2.0; 3], false).unwrap();
        m.set(1, 2, 3, true);
        m.set(4, 5, 6, true);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.nii");
        write_mask(&m, &p).unwrap();
        assert_eq!(read_mask(&p).unwrap(), m);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_volume("/nonexistent/x.nii").unwrap_err();
        assert_eq!(err.code(), "io");
    }
}
