//! Binary container for encoded images.
//!
//! All integers little-endian:
//!
//! ```text
//! magic        4 bytes  "GAF1"
//! version      u32      currently 1
//! count        u32      number of images
//! n            u32      image side
//! encoding     u8       0 = gasf, 1 = row_tiled
//! labels       u8       number of label entries, then per entry:
//!                         index u8, tag_len u8, tag bytes
//! provenance   count x (id_len u16, id bytes, offset u64)
//! payload      count x (label u8, n*n x f32 row-major)
//! ```
//!
//! The payload is the tail of the file, so its length is always
//! `count * (1 + 4 n^2)` bytes.

use std::fs;
use std::path::Path;

use crate::dataset::{ClassLabel, SignalInstance};
use crate::error::{Error, Result};
use crate::gaf::{Encoder, Encoding};
use crate::train_eval::ImageSet;

pub const ARCHIVE_MAGIC: &[u8; 4] = b"GAF1";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ArchiveEntry {
    pub label: ClassLabel,
    pub record_id: String,
    pub offset: u64,
    pub pixels: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GafArchive {
    pub size: usize,
    pub encoding: Encoding,
    pub entries: Vec<ArchiveEntry>,
}

impl GafArchive {
    pub fn new(size: usize, encoding: Encoding) -> Self {
        Self {
            size,
            encoding,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Encodes every window. Constant windows are skipped and counted.
    pub fn encode(instances: &[SignalInstance], encoder: &Encoder) -> Result<(Self, usize)> {
        let mut archive = Self::new(encoder.image_size(), encoder.encoding);
        let mut skipped = 0;
        for inst in instances {
            match encoder.encode(&inst.values) {
                Ok(img) => archive.entries.push(ArchiveEntry {
                    label: inst.label,
                    record_id: inst.record_id.clone(),
                    offset: inst.offset as u64,
                    pixels: img.into_iter().map(|v| v as f32).collect(),
                }),
                Err(Error::DegenerateRange) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        Ok((archive, skipped))
    }

    pub fn class_counts(&self) -> [usize; ClassLabel::COUNT] {
        let mut counts = [0; ClassLabel::COUNT];
        for e in &self.entries {
            counts[e.label.index()] += 1;
        }
        counts
    }

    /// Widens the stored pixels to 64-bit for the network.
    pub fn to_image_set(&self) -> Result<ImageSet> {
        let mut set = ImageSet::new(self.size);
        let mut buf = Vec::with_capacity(self.size * self.size);
        for e in &self.entries {
            buf.clear();
            buf.extend(e.pixels.iter().map(|&v| f64::from(v)));
            set.push(&buf, e.label)?;
        }
        Ok(set)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n2 = self.size * self.size;
        let mut out = Vec::with_capacity(64 + self.len() * (1 + 4 * n2 + 24));
        out.extend_from_slice(ARCHIVE_MAGIC);
        out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.size as u32).to_le_bytes());
        out.push(match self.encoding {
            Encoding::Gasf => 0,
            Encoding::RowTiled => 1,
        });
        out.push(ClassLabel::COUNT as u8);
        for label in ClassLabel::ALL {
            out.push(label.index() as u8);
            out.push(label.tag().len() as u8);
            out.extend_from_slice(label.tag().as_bytes());
        }
        for e in &self.entries {
            out.extend_from_slice(&(e.record_id.len() as u16).to_le_bytes());
            out.extend_from_slice(e.record_id.as_bytes());
            out.extend_from_slice(&e.offset.to_le_bytes());
        }
        for e in &self.entries {
            out.push(e.label.index() as u8);
            for v in &e.pixels {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0, path };
        if r.take(4)? != ARCHIVE_MAGIC {
            return Err(Error::format(path, "not a GAF1 archive"));
        }
        let version = r.u32()?;
        if version != ARCHIVE_VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let size = r.u32()? as usize;
        let encoding = match r.u8()? {
            0 => Encoding::Gasf,
            1 => Encoding::RowTiled,
            other => return Err(Error::format(path, format!("unknown encoding byte {other}"))),
        };
        let n_labels = r.u8()? as usize;
        for _ in 0..n_labels {
            let index = r.u8()? as usize;
            let len = r.u8()? as usize;
            let tag = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::format(path, "label tag is not UTF-8"))?;
            if ClassLabel::from_index(index).map(ClassLabel::tag) != Some(tag) {
                return Err(Error::format(path, format!("label map entry {index} -> {tag:?}")));
            }
        }
        let mut provenance = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u16()? as usize;
            let id = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::format(path, "record id is not UTF-8"))?
                .to_string();
            provenance.push((id, r.u64()?));
        }
        let n2 = size * size;
        let remaining = bytes.len() - r.pos;
        if remaining != count * (1 + 4 * n2) {
            return Err(Error::format(
                path,
                format!("payload is {remaining} bytes, expected {}", count * (1 + 4 * n2)),
            ));
        }
        let mut entries = Vec::with_capacity(count);
        for (record_id, offset) in provenance {
            let byte = r.u8()?;
            let label = ClassLabel::from_index(byte as usize)
                .ok_or_else(|| Error::format(path, format!("label byte {byte} out of range")))?;
            let pixels = r
                .take(4 * n2)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            entries.push(ArchiveEntry {
                label,
                record_id,
                offset,
                pixels,
            });
        }
        Ok(Self {
            size,
            encoding,
            entries,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::write(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::read(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(self.path, "truncated archive"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
