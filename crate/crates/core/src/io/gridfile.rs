//! Binary container for named float channels over one grid.
//!
//! Little-endian layout: magic `MODG`, u16 version, u32 width, u32 height,
//! f64 origin_x, f64 origin_y, f64 cell_size, u16 channel count, then per
//! channel a u8 name length, the name bytes and `width * height` f32
//! values in row-major order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Mask, Raster};

use super::atomic::write_atomic;

pub const MAGIC: &[u8; 4] = b"MODG";
pub const GRID_FILE_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub spec: GridSpec,
    pub channels: Vec<Channel>,
}

impl GridFile {
    pub fn new(spec: GridSpec) -> Self {
        GridFile { spec, channels: Vec::new() }
    }

    /// Adds a channel, storing values at f32 precision.
    pub fn push(&mut self, name: &str, raster: &Raster) -> Result<()> {
        self.push_f32(name, raster.data.iter().map(|&v| v as f32).collect())
    }

    pub fn push_mask(&mut self, name: &str, mask: &Mask) -> Result<()> {
        self.push_f32(name, mask.data.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect())
    }

    pub fn push_f32(&mut self, name: &str, values: Vec<f32>) -> Result<()> {
        if name.is_empty() || name.len() > u8::MAX as usize {
            return Err(Error::validation("channel", "name must be 1 to 255 bytes"));
        }
        if self.channel(name).is_some() {
            return Err(Error::validation("channel", format!("duplicate channel `{name}`")));
        }
        if values.len() != self.spec.num_cells() {
            return Err(Error::ShapeMismatch(format!("channel `{name}` has {} values for {} cells", values.len(), self.spec.num_cells())));
        }
        self.channels.push(Channel { name: name.to_string(), values });
        Ok(())
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn raster(&self, name: &str) -> Option<Raster> {
        let c = self.channel(name)?;
        Some(Raster {
            width: self.spec.width,
            height: self.spec.height,
            data: c.values.iter().map(|&v| v as f64).collect(),
        })
    }

    pub fn mask(&self, name: &str) -> Option<Mask> {
        let c = self.channel(name)?;
        Some(Mask {
            width: self.spec.width,
            height: self.spec.height,
            data: c.values.iter().map(|&v| v != 0.0).collect(),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let s = &self.spec;
        let channels = u16::try_from(self.channels.len()).map_err(|_| Error::validation("channels", "too many channels"))?;
        let width = u32::try_from(s.width).map_err(|_| Error::validation("width", "too large"))?;
        let height = u32::try_from(s.height).map_err(|_| Error::validation("height", "too large"))?;
        let mut out = Vec::with_capacity(40 + self.channels.len() * (256 + 4 * s.num_cells()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&GRID_FILE_VERSION.to_le_bytes());
        out.extend_from_slice(&width.to_le_bytes());
        out.extend_from_slice(&height.to_le_bytes());
        out.extend_from_slice(&s.origin_x.to_le_bytes());
        out.extend_from_slice(&s.origin_y.to_le_bytes());
        out.extend_from_slice(&s.cell_size.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        for c in &self.channels {
            out.push(c.name.len() as u8);
            out.extend_from_slice(c.name.as_bytes());
            for v in &c.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<GridFile> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(4)? != MAGIC {
            return Err(Error::format(path, "not a grid file (bad magic)"));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != GRID_FILE_VERSION {
            return Err(Error::format(path, format!("unsupported grid file version {version}")));
        }
        let width = u32::from_le_bytes(r.array()?) as usize;
        let height = u32::from_le_bytes(r.array()?) as usize;
        let origin_x = f64::from_le_bytes(r.array()?);
        let origin_y = f64::from_le_bytes(r.array()?);
        let cell_size = f64::from_le_bytes(r.array()?);
        let spec = GridSpec::new(origin_x, origin_y, cell_size, width, height).map_err(|e| Error::format(path, e))?;
        let count = u16::from_le_bytes(r.array()?);
        let mut file = GridFile::new(spec);
        for _ in 0..count {
            let len = r.take(1)?[0] as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| Error::format(path, "channel name is not UTF-8"))?.to_string();
            let raw = r.take(4 * spec.num_cells())?;
            let values = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
            file.push_f32(&name, values).map_err(|e| Error::format(path, e))?;
        }
        if r.pos != bytes.len() {
            return Err(Error::format(path, "trailing bytes after the last channel"));
        }
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<GridFile> {
        GridFile::from_bytes(&std::fs::read(path)?, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::format(self.path, "file is truncated"));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}
