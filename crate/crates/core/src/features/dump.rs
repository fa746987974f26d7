//! Descriptor dump files.
//!
//! Byte layout, all integers and floats little-endian:
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 8    | magic `LSRDDESC`                          |
//! | 8      | 4    | version (u32, currently 1)                |
//! | 12     | 4    | keypoint count `n` (u32)                  |
//! | 16     | 4    | descriptor length `dim` (u32)             |
//! | 20     | 4    | channel count (u32, always 4)             |
//! | 24     | 4    | channel order, one byte per channel index |
//! | 28     | ...  | `n * 4 * dim` f32 values                  |
//!
//! Rows are keypoints; each row holds the four channels back to back in the
//! order listed in the header. Keypoint coordinates go in a companion JSON
//! file, see [`KeypointFile`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DescriptorBundle, Keypoint, NUM_CHANNELS};
use crate::binio::{expect_end, expect_magic, expect_version, read_f32s, read_u32, write_f32s, write_u32};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LSRDDESC";
pub const VERSION: u32 = 1;

pub fn write_descriptors(w: &mut impl Write, bundles: &[DescriptorBundle]) -> Result<()> {
    let dim = bundles.first().map_or(0, |b| b.dim());
    if bundles.iter().any(|b| b.channels.iter().any(|c| c.len() != dim)) {
        return Err(Error::InvalidArgument("descriptors of mixed dimension".into()));
    }
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    write_u32(w, bundles.len() as u32)?;
    write_u32(w, dim as u32)?;
    write_u32(w, NUM_CHANNELS as u32)?;
    w.write_all(&[0, 1, 2, 3])?;
    for b in bundles {
        for c in &b.channels {
            write_f32s(w, c)?;
        }
    }
    Ok(())
}

pub fn read_descriptors(r: &mut impl Read) -> Result<Vec<DescriptorBundle>> {
    expect_magic(r, MAGIC)?;
    expect_version(r, VERSION)?;
    let n = read_u32(r)? as usize;
    let dim = read_u32(r)? as usize;
    if read_u32(r)? as usize != NUM_CHANNELS {
        return Err(Error::Format("descriptor dump must hold 4 channels".into()));
    }
    let mut order = [0u8; NUM_CHANNELS];
    r.read_exact(&mut order)?;
    if order != [0, 1, 2, 3] {
        return Err(Error::Format(format!("unsupported channel order {order:?}")));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut channels: [Vec<f32>; NUM_CHANNELS] = Default::default();
        for c in channels.iter_mut() {
            *c = read_f32s(r, dim)?;
        }
        out.push(DescriptorBundle::new(channels));
    }
    expect_end(r)?;
    Ok(out)
}

pub fn save_descriptors(path: impl AsRef<Path>, bundles: &[DescriptorBundle]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_descriptors(&mut w, bundles)?;
    w.flush()?;
    Ok(())
}

pub fn load_descriptors(path: impl AsRef<Path>) -> Result<Vec<DescriptorBundle>> {
    read_descriptors(&mut BufReader::new(File::open(path)?))
}

/// Companion JSON of a descriptor dump; entry `i` describes row `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointFile {
    pub width: usize,
    pub height: usize,
    pub keypoints: Vec<Keypoint>,
}

impl KeypointFile {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let b = DescriptorBundle::new([vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0], vec![7.0, 8.0]]);
        let mut buf = Vec::new();
        write_descriptors(&mut buf, &[b]).unwrap();
        assert_eq!(&buf[..8], b"LSRDDESC");
        assert_eq!(&buf[8..12], &1u32.to_le_bytes());
        assert_eq!(&buf[12..16], &1u32.to_le_bytes());
        assert_eq!(&buf[16..20], &2u32.to_le_bytes());
        assert_eq!(&buf[20..24], &4u32.to_le_bytes());
        assert_eq!(&buf[24..28], &[0, 1, 2, 3]);
        assert_eq!(buf.len(), 28 + 8 * 4);
        assert_eq!(&buf[28 + 12..28 + 16], &4.0f32.to_le_bytes());
    }

    #[test]
    fn rejects_corruption() {
        let b = DescriptorBundle::replicated(vec![0.5; 3]);
        let mut buf = Vec::new();
        write_descriptors(&mut buf, &[b]).unwrap();
        assert!(read_descriptors(&mut &buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_descriptors(&mut &extra[..]).is_err());
        buf[0] = b'X';
        assert!(matches!(read_descriptors(&mut &buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn keypoint_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kp.json");
        let mut kp = Keypoint::new(1.5, 2.25, 1.6);
        kp.orientation = -0.5;
        kp.response = 0.03;
        let f = KeypointFile { width: 64, height: 48, keypoints: vec![kp] };
        f.save(&path).unwrap();
        assert_eq!(KeypointFile::load(&path).unwrap(), f);
    }

    proptest! {
        #[test]
        fn dump_round_trip_is_bit_exact(rows in proptest::collection::vec(proptest::collection::vec(any::<f32>(), 12), 0..6)) {
            let bundles: Vec<DescriptorBundle> = rows
                .iter()
                .map(|r| DescriptorBundle::new([r[0..3].to_vec(), r[3..6].to_vec(), r[6..9].to_vec(), r[9..12].to_vec()]))
                .collect();
            let mut buf = Vec::new();
            write_descriptors(&mut buf, &bundles).unwrap();
            let back = read_descriptors(&mut &buf[..]).unwrap();
            prop_assert_eq!(back.len(), bundles.len());
            for (a, b) in back.iter().zip(&bundles) {
                for (x, y) in a.channels.iter().zip(&b.channels) {
                    prop_assert_eq!(x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), y.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
                }
            }
        }
    }
}
