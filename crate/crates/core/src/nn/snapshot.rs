//! Model snapshots.
//!
//! Binary layout (all integers little-endian `u32`):
//!
//! ```text
//! magic "RFLM" | version | scalar bytes (4 or 8) | layer count
//! per layer: in_dim | out_dim | activation code (u32) | weights (row-major) | bias
//! ```
//!
//! Floats are written with their exact bit patterns, so a binary round trip is bit-exact.
//! The JSON form carries the same fields through serde plus a `version` tag.

use serde::{Deserialize, Serialize};

use super::layer::{Activation, DenseLayer};
use super::matrix::Matrix;
use super::model::MlpModel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"RFLM";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct JsonSnapshot<F: Scalar> {
    version: u32,
    model: MlpModel<F>,
}

pub fn to_json<F: Scalar>(model: &MlpModel<F>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&JsonSnapshot {
        version: SNAPSHOT_VERSION,
        model: model.clone(),
    })?)
}

pub fn from_json<F: Scalar>(text: &str) -> Result<MlpModel<F>> {
    let snap: JsonSnapshot<F> = serde_json::from_str(text)?;
    if snap.version != SNAPSHOT_VERSION {
        return Err(Error::Config(format!(
            "unsupported snapshot version {}",
            snap.version
        )));
    }
    MlpModel::new(snap.model.layers().to_vec())
}

pub fn to_bytes<F: Scalar>(model: &MlpModel<F>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + model.parameter_count() * F::BYTES);
    out.extend_from_slice(SNAPSHOT_MAGIC);
    push_u32(&mut out, SNAPSHOT_VERSION);
    push_u32(&mut out, F::BYTES as u32);
    push_u32(&mut out, model.layers().len() as u32);
    for layer in model.layers() {
        push_u32(&mut out, layer.in_dim() as u32);
        push_u32(&mut out, layer.out_dim() as u32);
        push_u32(&mut out, u32::from(layer.activation.code()));
        for &w in layer.weights.as_slice() {
            w.write_le(&mut out);
        }
        for &b in &layer.bias {
            b.write_le(&mut out);
        }
    }
    out
}

pub fn from_bytes<F: Scalar>(bytes: &[u8]) -> Result<MlpModel<F>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != SNAPSHOT_MAGIC {
        return Err(r.err(0, "bad snapshot magic"));
    }
    let version = r.u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(r.err(4, format!("unsupported snapshot version {version}")));
    }
    let width = r.u32()? as usize;
    if width != F::BYTES {
        return Err(r.err(
            8,
            format!("snapshot stores {width}-byte floats, reader expects {}", F::BYTES),
        ));
    }
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let at = r.pos;
        let code = r.u32()?;
        let activation = u8::try_from(code)
            .ok()
            .and_then(Activation::from_code)
            .ok_or_else(|| r.err(at, format!("unknown activation code {code}")))?;
        let weights = (0..in_dim * out_dim)
            .map(|_| r.scalar::<F>())
            .collect::<Result<Vec<_>>>()?;
        let bias = (0..out_dim)
            .map(|_| r.scalar::<F>())
            .collect::<Result<Vec<_>>>()?;
        layers.push(DenseLayer::new(
            Matrix::from_vec(out_dim, in_dim, weights)?,
            bias,
            activation,
        )?);
    }
    if r.pos != bytes.len() {
        return Err(r.err(r.pos, "trailing bytes after last layer"));
    }
    MlpModel::new(layers)
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn err(&self, offset: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            offset,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err(self.pos, "truncated snapshot"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn scalar<F: Scalar>(&mut self) -> Result<F> {
        Ok(F::read_le(self.take(F::BYTES)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_model, ModelSpec};

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let m: MlpModel<f64> = init_model(&ModelSpec::standard(7, 3), 11).unwrap();
        let bytes = to_bytes(&m);
        let back: MlpModel<f64> = from_bytes(&bytes).unwrap();
        assert_eq!(to_bytes(&back), bytes);
        assert_eq!(back, m);
    }

    #[test]
    fn f32_snapshot_is_rejected_by_f64_reader() {
        let m: MlpModel<f32> = init_model(&ModelSpec::standard(3, 2), 0).unwrap();
        let err = from_bytes::<f64>(&to_bytes(&m)).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 8, .. }));
    }

    #[test]
    fn truncated_snapshot_names_offset() {
        let m: MlpModel<f64> = init_model(&ModelSpec::standard(3, 2), 0).unwrap();
        let bytes = to_bytes(&m);
        let err = from_bytes::<f64>(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn json_round_trip() {
        let m: MlpModel<f64> = init_model(&ModelSpec::standard(4, 3), 5).unwrap();
        let back: MlpModel<f64> = from_json(&to_json(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
