//! Binary weight files.
//!
//! Layout (little-endian): magic `MNV2`, u32 version, then the model
//! configuration (u32 resolution, f32 width, u32 classes, f32 dropout,
//! u8 frozen backbone), u32 class-name count with length-prefixed UTF-8
//! names, u32 record count, and one record per stored tensor: u32 id,
//! length-prefixed name, u32 rank, u32 extents, f32 values.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};

pub const WEIGHTS_MAGIC: [u8; 4] = *b"MNV2";
pub const WEIGHTS_VERSION: u32 = 1;

pub fn write_weights(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    let c = &model.config;
    out.extend_from_slice(&(c.input_resolution as u32).to_le_bytes());
    out.extend_from_slice(&c.width_multiplier.to_le_bytes());
    out.extend_from_slice(&(c.num_classes as u32).to_le_bytes());
    out.extend_from_slice(&c.dropout_rate.to_le_bytes());
    out.push(model.backbone_frozen() as u8);
    out.extend_from_slice(&(model.class_names.len() as u32).to_le_bytes());
    for name in &model.class_names {
        put_str(&mut out, name);
    }
    let tensors: Vec<_> = model.layers.iter().flat_map(|l| l.tensors()).collect();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (id, t) in tensors.iter().enumerate() {
        out.extend_from_slice(&(id as u32).to_le_bytes());
        put_str(&mut out, &t.name);
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &e in &t.shape {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for v in t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Truncated(format!("file ends inside {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Truncated(format!("{what} is not UTF-8")))
    }
}

/// Rebuilds the model described by the header and fills every tensor,
/// checking names and shapes record by record.
pub fn read_weights(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
    if magic != WEIGHTS_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.u32("version")?;
    if version != WEIGHTS_VERSION {
        return Err(Error::VersionMismatch {
            expected: WEIGHTS_VERSION,
            found: version,
        });
    }
    let config = ModelConfig {
        input_resolution: r.u32("config")? as usize,
        width_multiplier: r.f32("config")?,
        num_classes: r.u32("config")? as usize,
        dropout_rate: r.f32("config")?,
    };
    let frozen = r.take(1, "config")?[0] != 0;
    let n_names = r.u32("class names")? as usize;
    let names = (0..n_names)
        .map(|_| r.string("class name"))
        .collect::<Result<Vec<_>>>()?;
    let mut model = Model::new(config, 0)?.with_class_names(names)?;
    model.set_backbone_trainable(!frozen);

    let count = r.u32("record count")? as usize;
    let mut slots: Vec<_> = model.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect();
    if count != slots.len() {
        return Err(Error::Truncated(format!(
            "header lists {count} records, this configuration has {}",
            slots.len()
        )));
    }
    for (index, slot) in slots.iter_mut().enumerate() {
        let what = format!("record {index}");
        let id = r.u32(&what)? as usize;
        let name = r.string(&what)?;
        let rank = r.u32(&what)? as usize;
        let shape = (0..rank)
            .map(|_| r.u32(&what).map(|e| e as usize))
            .collect::<Result<Vec<_>>>()?;
        if id != index || name != slot.name || shape != slot.shape {
            return Err(Error::WeightShape {
                index,
                name,
                expected: slot.shape.clone(),
                found: shape,
            });
        }
        let raw = r.take(slot.data.len() * 4, &what)?;
        for (d, chunk) in slot.data.iter_mut().zip(raw.chunks_exact(4)) {
            *d = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
    }
    let rest = bytes.len() - r.pos;
    if rest > 0 {
        return Err(Error::TrailingBytes(rest));
    }
    Ok(model)
}

pub fn save_weights(path: &Path, model: &Model) -> Result<()> {
    std::fs::write(path, write_weights(model)).map_err(|e| Error::from(e).in_file(path))
}

pub fn load_weights(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    read_weights(&bytes).map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Rng;
    use crate::tensor::Tensor;

    fn model() -> Model {
        let config = ModelConfig {
            input_resolution: 32,
            width_multiplier: 0.25,
            num_classes: 2,
            dropout_rate: 0.2,
        };
        let mut m = Model::new(config, 21).unwrap();
        // Move running statistics away from their defaults.
        let mut rng = Rng::new(3);
        let x = Tensor::from_fn([2, 3, 32, 32], |_| rng.uniform(-1.0, 1.0) as f32);
        m.forward_train(&x, &mut rng).unwrap();
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let bytes = write_weights(&m);
        let back = read_weights(&bytes).unwrap();
        assert_eq!(back, m);
        let x = Tensor::full([1, 3, 32, 32], 0.3);
        assert_eq!(back.infer(&x).unwrap(), m.infer(&x).unwrap());
    }

    #[test]
    fn frozen_flag_survives() {
        let m = model().attach_head(2, true, 1).unwrap();
        let back = read_weights(&write_weights(&m)).unwrap();
        assert!(back.backbone_frozen());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = write_weights(&model());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_weights(&bad), Err(Error::BadMagic(_))));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(read_weights(&bad), Err(Error::VersionMismatch { found: 9, .. })));

        assert!(matches!(read_weights(&bytes[..bytes.len() - 3]), Err(Error::Truncated(_))));

        let mut long = bytes.clone();
        long.extend_from_slice(&[0, 0]);
        assert!(matches!(read_weights(&long), Err(Error::TrailingBytes(2))));
    }

    #[test]
    fn rejects_shape_mismatch() {
        let bytes = write_weights(&model());
        // First record: id 0, name "stem.weight", rank 4, extents (8, 3, 3, 3).
        let header = 4 + 4 + 17 + 4 + 2 * 4 + "with_mask".len() + "without_mask".len() + 4;
        let first_extent = header + 4 + 4 + "stem.weight".len() + 4;
        let mut bad = bytes.clone();
        bad[first_extent] = 16;
        match read_weights(&bad) {
            Err(Error::WeightShape { index: 0, expected, found, .. }) => {
                assert_eq!(expected, vec![8, 3, 3, 3]);
                assert_eq!(found, vec![16, 3, 3, 3]);
            }
            other => panic!("{other:?}"),
        }
    }
}
