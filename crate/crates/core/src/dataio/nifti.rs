//! Single-file, uncompressed, little-endian NIfTI-1 reader and writer.
//!
//! Only float32 and float64 payloads are supported. Values are always held
//! as `f64` in memory; `scl_slope`/`scl_inter` are applied on read when the
//! slope is nonzero.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::{Dims3, MapKind, ScalarMap, Volume4D};

const HEADER_SIZE: usize = 348;
const DEFAULT_VOX_OFFSET: usize = 352;
const MAGIC: &[u8; 4] = b"n+1\0";

const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;

const UNITS_MM: u8 = 2;
const UNITS_SEC: u8 = 8;
const UNITS_MSEC: u8 = 16;
const UNITS_USEC: u8 = 24;

const INTENT_TTEST: i16 = 3;
const KIND_TAG: &str = "neuroglm:kind=";

/// On-disk sample type.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NiftiDtype {
    F32,
    F64,
}

impl NiftiDtype {
    fn code(self) -> i16 {
        match self {
            NiftiDtype::F32 => DT_FLOAT32,
            NiftiDtype::F64 => DT_FLOAT64,
        }
    }

    fn bytes(self) -> usize {
        match self {
            NiftiDtype::F32 => 4,
            NiftiDtype::F64 => 8,
        }
    }
}

/// Header fields this crate reads or writes.
#[derive(Clone, Debug, PartialEq)]
pub struct NiftiHeader {
    pub dim: [i16; 8],
    pub pixdim: [f32; 8],
    pub datatype: NiftiDtype,
    pub vox_offset: usize,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub xyzt_units: u8,
    pub intent_code: i16,
    pub descrip: String,
}

/// Either a 4-D series or a 3-D map, depending on `dim[0]`.
#[derive(Clone, Debug, PartialEq)]
pub enum NiftiImage {
    Volume(Volume4D),
    Map(ScalarMap),
}

impl NiftiImage {
    pub fn into_volume(self) -> Result<Volume4D> {
        match self {
            NiftiImage::Volume(v) => Ok(v),
            NiftiImage::Map(m) => {
                Err(Error::Validation(format!("expected a 4-D volume, found a 3-D {} map", m.kind().as_str())))
            }
        }
    }

    /// Accepts 3-D maps and single-scan 4-D volumes.
    pub fn into_map(self) -> Result<ScalarMap> {
        match self {
            NiftiImage::Map(m) => Ok(m),
            NiftiImage::Volume(v) if v.nt() == 1 => ScalarMap::new(v.dims(), MapKind::Contrast, v.data().to_vec()),
            NiftiImage::Volume(v) => {
                Err(Error::Validation(format!("expected a 3-D map, found a 4-D volume with {} scans", v.nt())))
            }
        }
    }
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format { offset, message: message.into() }
}

fn i16_at(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn i32_at(b: &[u8], off: usize) -> i32 {
    i32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn f32_at(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

pub fn parse_header(bytes: &[u8]) -> Result<NiftiHeader> {
    if bytes.len() < HEADER_SIZE {
        return Err(format_err(
            bytes.len(),
            format!("file is {} bytes, shorter than the 348-byte header", bytes.len()),
        ));
    }
    let sizeof_hdr = i32_at(bytes, 0);
    if sizeof_hdr != HEADER_SIZE as i32 {
        return Err(format_err(0, format!("sizeof_hdr is {sizeof_hdr}, expected 348")));
    }
    if &bytes[344..348] != MAGIC {
        if &bytes[344..348] == b"ni1\0" {
            return Err(format_err(344, "paired .hdr/.img files are not supported"));
        }
        return Err(format_err(344, format!("bad magic {:?}", &bytes[344..348])));
    }

    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = i16_at(bytes, 40 + 2 * i);
    }
    if !(dim[0] == 3 || dim[0] == 4) {
        return Err(format_err(40, format!("dim[0] = {} (only 3 or 4 supported)", dim[0])));
    }
    for i in 1..=dim[0] as usize {
        if dim[i] < 1 {
            return Err(format_err(40 + 2 * i, format!("dim[{i}] = {} must be positive", dim[i])));
        }
    }

    let datatype = match i16_at(bytes, 70) {
        DT_FLOAT32 => NiftiDtype::F32,
        DT_FLOAT64 => NiftiDtype::F64,
        other => {
            return Err(format_err(70, format!("unsupported datatype code {other}")));
        }
    };
    let bitpix = i16_at(bytes, 72);
    if bitpix as usize != datatype.bytes() * 8 {
        return Err(format_err(72, format!("bitpix {bitpix} disagrees with datatype")));
    }

    let mut pixdim = [0f32; 8];
    for (i, p) in pixdim.iter_mut().enumerate() {
        *p = f32_at(bytes, 76 + 4 * i);
    }
    let vox_offset = f32_at(bytes, 108);
    if !(vox_offset >= DEFAULT_VOX_OFFSET as f32) || vox_offset.fract() != 0.0 {
        return Err(format_err(108, format!("vox_offset {vox_offset} must be an integer >= 352")));
    }
    let descrip_raw = &bytes[148..228];
    let end = descrip_raw.iter().position(|&c| c == 0).unwrap_or(descrip_raw.len());
    let descrip = String::from_utf8_lossy(&descrip_raw[..end]).into_owned();

    Ok(NiftiHeader {
        dim,
        pixdim,
        datatype,
        vox_offset: vox_offset as usize,
        scl_slope: f32_at(bytes, 112),
        scl_inter: f32_at(bytes, 116),
        xyzt_units: bytes[123],
        intent_code: i16_at(bytes, 68),
        descrip,
    })
}

/// Decodes a complete in-memory `.nii` file.
pub fn decode_nifti(bytes: &[u8]) -> Result<NiftiImage> {
    let hdr = parse_header(bytes)?;
    let dims = Dims3::new(hdr.dim[1] as usize, hdr.dim[2] as usize, hdr.dim[3] as usize);
    let nt = if hdr.dim[0] == 4 { hdr.dim[4] as usize } else { 1 };
    let n = dims.len() * nt;
    let width = hdr.datatype.bytes();
    let needed = hdr.vox_offset + n * width;
    if bytes.len() < needed {
        return Err(format_err(
            bytes.len(),
            format!("payload truncated: need {n} scalars ({needed} bytes total), file has {} bytes", bytes.len()),
        ));
    }
    let payload = &bytes[hdr.vox_offset..needed];
    let mut data: Vec<f64> = match hdr.datatype {
        NiftiDtype::F32 => payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
        NiftiDtype::F64 => payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
    };
    if hdr.scl_slope != 0.0 && hdr.scl_slope.is_finite() {
        let slope = hdr.scl_slope as f64;
        let inter = if hdr.scl_inter.is_finite() { hdr.scl_inter as f64 } else { 0.0 };
        for v in &mut data {
            *v = *v * slope + inter;
        }
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(format_err(hdr.vox_offset + i * width, "non-finite sample in payload"));
    }

    let voxel_size = [hdr.pixdim[1], hdr.pixdim[2], hdr.pixdim[3]].map(|p| {
        let p = (p as f64).abs();
        if p > 0.0 && p.is_finite() {
            p
        } else {
            1.0
        }
    });

    if hdr.dim[0] == 4 {
        let tr = match hdr.xyzt_units & 0x38 {
            UNITS_MSEC => hdr.pixdim[4] as f64 / 1e3,
            UNITS_USEC => hdr.pixdim[4] as f64 / 1e6,
            _ => hdr.pixdim[4] as f64,
        };
        let tr = if tr > 0.0 { tr } else { 1.0 };
        return Ok(NiftiImage::Volume(Volume4D::new(dims, nt, voxel_size, tr, data)?));
    }

    let kind = hdr.descrip.strip_prefix(KIND_TAG).and_then(MapKind::parse).unwrap_or(MapKind::Contrast);
    Ok(NiftiImage::Map(ScalarMap::new(dims, kind, data)?))
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<NiftiImage> {
    let path = path.as_ref();
    let lower = path.to_string_lossy().to_ascii_lowercase();
    if lower.ends_with(".gz") {
        return Err(format_err(0, "compressed NIfTI is not supported"));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_nifti(&bytes)
}

struct Layout {
    dim: [i16; 8],
    pixdim: [f32; 8],
    xyzt_units: u8,
    intent_code: i16,
    descrip: String,
}

fn encode(layout: &Layout, data: &[f64], dtype: NiftiDtype) -> Vec<u8> {
    let mut b = vec![0u8; DEFAULT_VOX_OFFSET + data.len() * dtype.bytes()];
    b[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    b[38] = b'r';
    for (i, d) in layout.dim.iter().enumerate() {
        b[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
    }
    b[68..70].copy_from_slice(&layout.intent_code.to_le_bytes());
    b[70..72].copy_from_slice(&dtype.code().to_le_bytes());
    b[72..74].copy_from_slice(&((dtype.bytes() * 8) as i16).to_le_bytes());
    for (i, p) in layout.pixdim.iter().enumerate() {
        b[76 + 4 * i..80 + 4 * i].copy_from_slice(&p.to_le_bytes());
    }
    b[108..112].copy_from_slice(&(DEFAULT_VOX_OFFSET as f32).to_le_bytes());
    // scl_slope = 0 means "no scaling".
    b[123] = layout.xyzt_units;
    let desc = layout.descrip.as_bytes();
    let n = desc.len().min(79);
    b[148..148 + n].copy_from_slice(&desc[..n]);
    // sform: axis-aligned voxel-size scaling.
    b[254..256].copy_from_slice(&1i16.to_le_bytes());
    for axis in 0..3 {
        let off = 280 + axis * 16 + axis * 4;
        b[off..off + 4].copy_from_slice(&layout.pixdim[axis + 1].to_le_bytes());
    }
    b[344..348].copy_from_slice(MAGIC);

    let body = &mut b[DEFAULT_VOX_OFFSET..];
    match dtype {
        NiftiDtype::F32 => {
            for (chunk, &v) in body.chunks_exact_mut(4).zip(data) {
                chunk.copy_from_slice(&(v as f32).to_le_bytes());
            }
        }
        NiftiDtype::F64 => {
            for (chunk, &v) in body.chunks_exact_mut(8).zip(data) {
                chunk.copy_from_slice(&v.to_le_bytes());
            }
        }
    }
    b
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_volume(volume: &Volume4D, dtype: NiftiDtype) -> Vec<u8> {
    let d = volume.dims();
    let vs = volume.voxel_size_mm();
    let layout = Layout {
        dim: [4, d.nx as i16, d.ny as i16, d.nz as i16, volume.nt() as i16, 1, 1, 1],
        pixdim: [1.0, vs[0] as f32, vs[1] as f32, vs[2] as f32, volume.tr_seconds() as f32, 0.0, 0.0, 0.0],
        xyzt_units: UNITS_MM | UNITS_SEC,
        intent_code: 0,
        descrip: String::new(),
    };
    encode(&layout, volume.data(), dtype)
}

pub fn encode_map(map: &ScalarMap, voxel_size_mm: [f64; 3], dtype: NiftiDtype) -> Vec<u8> {
    let d = map.dims();
    let intent_code = match map.kind() {
        MapKind::TmapSpeechGtSilence | MapKind::TmapSilenceGtSpeech => INTENT_TTEST,
        _ => 0,
    };
    let layout = Layout {
        dim: [3, d.nx as i16, d.ny as i16, d.nz as i16, 1, 1, 1, 1],
        pixdim: [1.0, voxel_size_mm[0] as f32, voxel_size_mm[1] as f32, voxel_size_mm[2] as f32, 0.0, 0.0, 0.0, 0.0],
        xyzt_units: UNITS_MM,
        intent_code,
        descrip: format!("{KIND_TAG}{}", map.kind().as_str()),
    };
    encode(&layout, map.data(), dtype)
}

/// Writes a 4-D volume as float64.
pub fn write_volume(path: impl AsRef<Path>, volume: &Volume4D) -> Result<()> {
    write_volume_as(path, volume, NiftiDtype::F64)
}

pub fn write_volume_as(path: impl AsRef<Path>, volume: &Volume4D, dtype: NiftiDtype) -> Result<()> {
    check_dims_fit(volume.dims(), volume.nt())?;
    write_bytes(path.as_ref(), &encode_volume(volume, dtype))
}

/// Writes a 3-D map as float64; the map kind is kept in the description field.
pub fn write_map(path: impl AsRef<Path>, map: &ScalarMap, voxel_size_mm: [f64; 3]) -> Result<()> {
    check_dims_fit(map.dims(), 1)?;
    write_bytes(path.as_ref(), &encode_map(map, voxel_size_mm, NiftiDtype::F64))
}

fn check_dims_fit(d: Dims3, nt: usize) -> Result<()> {
    let max = i16::MAX as usize;
    if d.nx > max || d.ny > max || d.nz > max || nt > max {
        return Err(Error::Dims(format!("{d}x{nt} exceeds NIfTI-1 dimension limits")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_volume(value: f64) -> Volume4D {
        let d = Dims3::new(2, 2, 2);
        Volume4D::new(d, 3, [2.0, 2.0, 2.0], 0.9, vec![value; 24]).unwrap()
    }

    #[test]
    fn round_trip_float64_exact() {
        let d = Dims3::new(3, 2, 2);
        let data: Vec<f64> = (0..36).map(|i| (i as f64).sin() * 1e3 + 1.0 / 3.0).collect();
        let vol = Volume4D::new(d, 3, [2.0, 2.5, 3.0], 0.9, data).unwrap();
        let bytes = encode_volume(&vol, NiftiDtype::F64);
        let back = decode_nifti(&bytes).unwrap().into_volume().unwrap();
        assert_eq!(back.data(), vol.data());
        assert_eq!(back.dims(), vol.dims());
        assert_eq!(back.nt(), 3);
        assert!((back.tr_seconds() - 0.9).abs() < 1e-6);

        let ones = small_volume(1.0);
        let back = decode_nifti(&encode_volume(&ones, NiftiDtype::F64)).unwrap();
        assert_eq!(back.into_volume().unwrap().data(), ones.data());
    }

    #[test]
    fn float32_round_trip_within_one_ulp() {
        let d = Dims3::new(4, 1, 1);
        let data = vec![0.1, -3.3333, 1e-7, 12345.678];
        let map = ScalarMap::new(d, MapKind::Contrast, data.clone()).unwrap();
        let bytes = encode_map(&map, [1.0; 3], NiftiDtype::F32);
        let back = decode_nifti(&bytes).unwrap().into_map().unwrap();
        for (a, b) in data.iter().zip(back.data()) {
            let ulp = (*a as f32).abs() * f32::EPSILON;
            assert!((a - b).abs() <= ulp as f64, "{a} vs {b}");
        }
    }

    #[test]
    fn map_kind_survives_round_trip() {
        let d = Dims3::new(2, 1, 1);
        let map = ScalarMap::new(d, MapKind::TmapSilenceGtSpeech, vec![0.0, 4.2]).unwrap();
        let back = decode_nifti(&encode_map(&map, [2.0; 3], NiftiDtype::F64)).unwrap();
        assert_eq!(back.into_map().unwrap(), map);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let bytes = encode_volume(&small_volume(1.0), NiftiDtype::F64);
        let cut = &bytes[..bytes.len() - 8];
        match decode_nifti(cut) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, cut.len()),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_datatype() {
        let mut bytes = encode_volume(&small_volume(1.0), NiftiDtype::F64);
        bytes[344] = b'x';
        assert!(matches!(decode_nifti(&bytes), Err(Error::Format { offset: 344, .. })));

        let mut bytes = encode_volume(&small_volume(1.0), NiftiDtype::F64);
        bytes[70..72].copy_from_slice(&4i16.to_le_bytes());
        assert!(matches!(decode_nifti(&bytes), Err(Error::Format { offset: 70, .. })));

        assert!(matches!(decode_nifti(&bytes[..100]), Err(Error::Format { offset: 100, .. })));
    }

    #[test]
    fn scaling_applied_on_read() {
        let d = Dims3::new(1, 1, 1);
        let map = ScalarMap::new(d, MapKind::Contrast, vec![3.0]).unwrap();
        let mut bytes = encode_map(&map, [1.0; 3], NiftiDtype::F64);
        bytes[112..116].copy_from_slice(&2f32.to_le_bytes());
        bytes[116..120].copy_from_slice(&1f32.to_le_bytes());
        assert_eq!(decode_nifti(&bytes).unwrap().into_map().unwrap().data(), &[7.0]);
    }

    #[test]
    fn time_units_in_milliseconds() {
        let mut bytes = encode_volume(&small_volume(0.0), NiftiDtype::F32);
        bytes[92..96].copy_from_slice(&900f32.to_le_bytes());
        bytes[123] = UNITS_MM | UNITS_MSEC;
        let vol = decode_nifti(&bytes).unwrap().into_volume().unwrap();
        assert!((vol.tr_seconds() - 0.9).abs() < 1e-9);
    }
}
