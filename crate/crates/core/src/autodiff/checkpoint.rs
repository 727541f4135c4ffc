//! Flat little-endian parameter container.
//!
//! ```text
//! "MMBT" | version u32 | param count u32 | optimizer step u64
//! per parameter:
//!   name length u32 | UTF-8 name | rank u32 | extents u64 × rank
//!   values f64 × n | first moment f64 × n | second moment f64 × n
//! trailer length u64 | trailer bytes (opaque to this module)
//! ```

use std::io::Write;

use super::{AdamState, AutodiffError, ParamStore, Tensor};

pub const MAGIC: &[u8; 4] = b"MMBT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamRecord {
    pub name: String,
    pub tensor: Tensor,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointData {
    pub records: Vec<ParamRecord>,
    pub optimizer_step: u64,
    pub trailer: Vec<u8>,
}

impl CheckpointData {
    pub fn capture(store: &ParamStore, adam: Option<&AdamState>, trailer: Vec<u8>) -> Self {
        let records = store
            .iter()
            .enumerate()
            .map(|(i, (name, t))| {
                let zeros = || vec![0.0; t.len()];
                ParamRecord {
                    name: name.to_string(),
                    tensor: Tensor::new(t.shape(), t.values().to_vec())
                        .expect("stored tensor is valid"),
                    first_moment: adam.map_or_else(zeros, |a| a.first_moment[i].clone()),
                    second_moment: adam.map_or_else(zeros, |a| a.second_moment[i].clone()),
                }
            })
            .collect();
        Self {
            records,
            optimizer_step: adam.map_or(0, |a| a.step_count),
            trailer,
        }
    }

    /// Copies weights (and moments, when `adam` is given) into an existing
    /// store. Names and extents must match one-to-one; an extent error lists
    /// every mismatched parameter.
    pub fn restore_into(
        &self,
        store: &mut ParamStore,
        adam: Option<&mut AdamState>,
    ) -> Result<(), AutodiffError> {
        let mismatch = |message: String| AutodiffError::Format { offset: 0, message };
        if self.records.len() != store.len() {
            let missing = store
                .iter()
                .map(|(n, _)| n)
                .find(|n| !self.records.iter().any(|r| r.name == *n))
                .or_else(|| {
                    self.records
                        .iter()
                        .map(|r| r.name.as_str())
                        .find(|n| store.find(n).is_none())
                })
                .unwrap_or("?")
                .to_string();
            return Err(mismatch(format!(
                "parameter count {} does not match model ({}); first unmatched parameter: {missing}",
                self.records.len(),
                store.len()
            )));
        }
        let mut wrong_extents = Vec::new();
        for (i, rec) in self.records.iter().enumerate() {
            let id = store
                .find(&rec.name)
                .ok_or_else(|| mismatch(format!("unknown parameter {}", rec.name)))?;
            if id.index() != i {
                return Err(mismatch(format!("parameter {} out of order", rec.name)));
            }
            let have = store.get(id).shape();
            if have != rec.tensor.shape() {
                wrong_extents.push(format!(
                    "{} ({:?} in checkpoint, {:?} in model)",
                    rec.name,
                    rec.tensor.shape(),
                    have
                ));
            }
        }
        if !wrong_extents.is_empty() {
            return Err(mismatch(format!(
                "parameter extents differ: {}",
                wrong_extents.join(", ")
            )));
        }
        for (i, rec) in self.records.iter().enumerate() {
            let t = store.get_mut(super::ParamId(i));
            t.values_mut().copy_from_slice(rec.tensor.values());
            t.clear_grad();
        }
        if let Some(adam) = adam {
            adam.step_count = self.optimizer_step;
            adam.first_moment = self
                .records
                .iter()
                .map(|r| r.first_moment.clone())
                .collect();
            adam.second_moment = self
                .records
                .iter()
                .map(|r| r.second_moment.clone())
                .collect();
        }
        Ok(())
    }
}

pub fn write_checkpoint(mut w: impl Write, data: &CheckpointData) -> Result<(), AutodiffError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(data.records.len() as u32).to_le_bytes());
    buf.extend_from_slice(&data.optimizer_step.to_le_bytes());
    for r in &data.records {
        buf.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(r.name.as_bytes());
        buf.extend_from_slice(&(r.tensor.shape().len() as u32).to_le_bytes());
        for &e in r.tensor.shape() {
            buf.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for block in [r.tensor.values(), &r.first_moment, &r.second_moment] {
            for v in block {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    buf.extend_from_slice(&(data.trailer.len() as u64).to_le_bytes());
    buf.extend_from_slice(&data.trailer);
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> AutodiffError {
        AutodiffError::Format {
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], AutodiffError> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, AutodiffError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, AutodiffError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, AutodiffError> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| self.err("payload size overflow"))?,
            what,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<CheckpointData, AutodiffError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        c.pos = 0;
        return Err(c.err("bad magic, expected MMBT"));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(c.err(format!("unsupported version {version}")));
    }
    let count = c.u32("parameter count")? as usize;
    let optimizer_step = c.u64("optimizer step")?;
    let mut records = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = c.u32("name length")? as usize;
        let name = std::str::from_utf8(c.take(len, "name")?)
            .map_err(|_| c.err("parameter name is not UTF-8"))?
            .to_string();
        let rank = c.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(c.u64("extent")? as usize);
        }
        let n: usize = shape.iter().product();
        let values = c.f64s(n, &name)?;
        let tensor = Tensor::new(&shape, values).map_err(|e| c.err(format!("{name}: {e}")))?;
        let first_moment = c.f64s(n, &name)?;
        let second_moment = c.f64s(n, &name)?;
        records.push(ParamRecord {
            name,
            tensor,
            first_moment,
            second_moment,
        });
    }
    let tlen = c.u64("trailer length")? as usize;
    let trailer = c.take(tlen, "trailer")?.to_vec();
    if c.pos != bytes.len() {
        return Err(c.err("trailing bytes after checkpoint"));
    }
    Ok(CheckpointData {
        records,
        optimizer_step,
        trailer,
    })
}
