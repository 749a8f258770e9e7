//! On-disk layout for [`TargetMaps`].
//!
//! All integers and floats are little-endian:
//!
//! | bytes | content                                  |
//! |-------|------------------------------------------|
//! | 8     | magic `BBAVMAP\0`                        |
//! | 4     | format version (`u32`, currently 1)      |
//! | 4     | classes `K` (`u32`)                      |
//! | 4     | grid rows (`u32`)                        |
//! | 4     | grid cols (`u32`)                        |
//! | 4     | stride (`u32`)                           |
//! | ...   | `f32` planes: heatmap (`K·rows·cols`), offset (`2·rows·cols`), box (`10·rows·cols`), orientation (`rows·cols`) |
//!
//! Planes are channel-major then row-major. A sidecar text header with the same
//! fields as `key=value` lines is produced by [`header_text`].

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::codec::{CodecError, TargetMaps};

pub const MAGIC: &[u8; 8] = b"BBAVMAP\0";
pub const VERSION: u32 = 1;
pub const EXTENSION: &str = "bbavmap";
pub const HEADER_EXTENSION: &str = "hdr";

#[derive(Debug, Error)]
pub enum MapFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic bytes, not a map file")]
    BadMagic,
    #[error("unsupported map file version {0}")]
    UnsupportedVersion(u32),
    #[error("map dimensions too large")]
    TooLarge,
    #[error(transparent)]
    Shape(#[from] CodecError),
}

pub fn write_maps<W: Write>(maps: &TargetMaps, mut w: W) -> Result<(), MapFileError> {
    w.write_all(MAGIC)?;
    for v in [
        VERSION,
        maps.classes() as u32,
        maps.rows() as u32,
        maps.cols() as u32,
        maps.stride() as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(
        4 * (maps.heatmap.len() + maps.offset.len() + maps.box_params.len() + maps.orientation.len()),
    );
    for plane in [&maps.heatmap, &maps.offset, &maps.box_params, &maps.orientation] {
        for &v in plane.iter() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_plane<R: Read>(r: &mut R, len: usize) -> io::Result<Vec<f64>> {
    // Read through `take` so a corrupt header cannot force a huge allocation.
    let mut bytes = Vec::new();
    r.take(len as u64 * 4).read_to_end(&mut bytes)?;
    if bytes.len() != len * 4 {
        return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "map plane truncated"));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

pub fn read_maps<R: Read>(mut r: R) -> Result<TargetMaps, MapFileError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(MapFileError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(MapFileError::UnsupportedVersion(version));
    }
    let classes = read_u32(&mut r)? as usize;
    let rows = read_u32(&mut r)? as usize;
    let cols = read_u32(&mut r)? as usize;
    let stride = read_u32(&mut r)? as usize;
    let cells = rows.checked_mul(cols).ok_or(MapFileError::TooLarge)?;
    let heat_len = cells.checked_mul(classes).ok_or(MapFileError::TooLarge)?;
    if cells.checked_mul(13).and_then(|c| c.checked_add(heat_len)).and_then(|n| n.checked_mul(4)).is_none() {
        return Err(MapFileError::TooLarge);
    }
    let heatmap = read_plane(&mut r, heat_len)?;
    let offset = read_plane(&mut r, 2 * cells)?;
    let box_params = read_plane(&mut r, 10 * cells)?;
    let orientation = read_plane(&mut r, cells)?;
    Ok(TargetMaps::from_planes(
        classes, rows, cols, stride, heatmap, offset, box_params, orientation,
    )?)
}

/// Human-readable sidecar describing a map file.
pub fn header_text(maps: &TargetMaps) -> String {
    format!(
        "format=bbavmap\nversion={VERSION}\nendianness=little\ndtype=f32\nclasses={}\nrows={}\ncols={}\nstride={}\nimage_height={}\nimage_width={}\nplanes=heatmap,offset,box,orientation\n",
        maps.classes(),
        maps.rows(),
        maps.cols(),
        maps.stride(),
        maps.image_height(),
        maps.image_width()
    )
}
