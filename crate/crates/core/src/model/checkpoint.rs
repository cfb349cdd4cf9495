//! Binary checkpoint container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic           8 bytes   "CASMCKPT"
//! version         u32       1
//! dtype           u8        4 = f32, 8 = f64
//! num_items       u64
//! num_behaviors   u64
//! dim             u64
//! heads           u64
//! blocks          u64
//! max_len         u64
//! use_context     u8        0 / 1
//! plain_block     u8        0 / 1
//! meta_len        u32
//! meta            meta_len bytes of UTF-8 (`key = value` lines, free-form)
//! tensor_count    u32
//! tensor_count × {
//!     name_len    u16
//!     name        name_len bytes of UTF-8
//!     rows        u64
//!     cols        u64
//!     data        rows·cols values of `dtype`, row-major
//! }
//! ```
//!
//! Tensors appear in layout order; loading rebuilds the layout from the
//! stored config and rejects any name or shape mismatch.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::{ModelConfig, ModelParams};
use crate::error::{CasmError, Result};
use crate::numerics::{Matrix, ParamSet, Real};

pub const MAGIC: &[u8; 8] = b"CASMCKPT";
pub const VERSION: u32 = 1;

/// Parameters plus free-form run metadata (typically the resolved config).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub params: ModelParams<T>,
    pub meta: String,
}

fn dtype_tag<T: Real>() -> u8 {
    std::mem::size_of::<T>() as u8
}

impl<T: Real> Checkpoint<T> {
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let c = &self.params.config;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[dtype_tag::<T>()])?;
        for v in [c.num_items, c.num_behaviors, c.dim, c.heads, c.blocks, c.max_len] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&[c.use_context as u8, c.plain_block as u8])?;
        w.write_all(&(self.meta.len() as u32).to_le_bytes())?;
        w.write_all(self.meta.as_bytes())?;
        let set = &self.params.set;
        w.write_all(&(set.len() as u32).to_le_bytes())?;
        for id in set.ids() {
            let name = set.name(id).as_bytes();
            let m = set.get(id);
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&(m.rows() as u64).to_le_bytes())?;
            w.write_all(&(m.cols() as u64).to_le_bytes())?;
            for &x in m.data() {
                if dtype_tag::<T>() == 4 {
                    w.write_all(&(x.as_f64() as f32).to_le_bytes())?;
                } else {
                    w.write_all(&x.as_f64().to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = Reader(r);
        let mut magic = [0u8; 8];
        r.bytes(&mut magic)?;
        if &magic != MAGIC {
            return Err(CasmError::Data("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CasmError::Data(format!("unsupported checkpoint version {version}")));
        }
        let dtype = r.u8()?;
        if dtype != dtype_tag::<T>() {
            return Err(CasmError::Data(format!(
                "checkpoint stores {}-byte floats, expected {}",
                dtype,
                dtype_tag::<T>()
            )));
        }
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.u64()? as usize;
        }
        let config = ModelConfig {
            num_items: dims[0],
            num_behaviors: dims[1],
            dim: dims[2],
            heads: dims[3],
            blocks: dims[4],
            max_len: dims[5],
            use_context: r.u8()? != 0,
            plain_block: r.u8()? != 0,
        };
        let meta_len = r.u32()? as usize;
        let meta = String::from_utf8(r.vec(meta_len)?)
            .map_err(|_| CasmError::Data("checkpoint metadata is not UTF-8".into()))?;
        let count = r.u32()? as usize;
        let mut set = ParamSet::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.vec(name_len)?)
                .map_err(|_| CasmError::Data("tensor name is not UTF-8".into()))?;
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                let x = if dtype == 4 { f64::from(r.f32()?) } else { r.f64()? };
                data.push(T::of(x));
            }
            set.push(name, Matrix::new(rows, cols, data)?);
        }
        let params = ModelParams::from_set(&config, set)?;
        Ok(Self { params, meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path)
            .map_err(|e| CasmError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::read_from(BufReader::new(f))
    }
}

struct Reader<R>(R);

impl<R: Read> Reader<R> {
    fn bytes(&mut self, buf: &mut [u8]) -> Result<()> {
        self.0
            .read_exact(buf)
            .map_err(|e| CasmError::Data(format!("truncated checkpoint: {e}")))
    }

    fn vec(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut v = vec![0; n];
        self.bytes(&mut v)?;
        Ok(v)
    }

    fn u8(&mut self) -> Result<u8> {
        let mut b = [0; 1];
        self.bytes(&mut b)?;
        Ok(b[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let mut b = [0; 2];
        self.bytes(&mut b)?;
        Ok(u16::from_le_bytes(b))
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0; 4];
        self.bytes(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0; 8];
        self.bytes(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f32(&mut self) -> Result<f32> {
        let mut b = [0; 4];
        self.bytes(&mut b)?;
        Ok(f32::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut b = [0; 8];
        self.bytes(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
}
