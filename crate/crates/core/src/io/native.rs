//! Native container layout:
//!
//! ```text
//! u64 LE   header length in bytes
//! [u8]     JSON header
//! [f64 LE] payload, row-major in label order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::containers::{Geometry, LabeledArray};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

// Guards against reading a garbage length as an allocation size.
const MAX_HEADER_BYTES: u64 = 1 << 26;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema_version: u32,
    shape: Vec<usize>,
    labels: Vec<String>,
    dtype: String,
    byte_order: String,
    geometry: Option<Geometry>,
    crc32: u32,
}

pub fn write_native(a: &LabeledArray, path: impl AsRef<Path>) -> Result<()> {
    let payload: Vec<u8> = a.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
    let header = Header {
        schema_version: SCHEMA_VERSION,
        shape: a.shape().to_vec(),
        labels: a.labels().to_vec(),
        dtype: "f64".into(),
        byte_order: "little".into(),
        geometry: a.geometry().cloned(),
        crc32: crc32fast::hash(&payload),
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

pub fn read_native(path: impl AsRef<Path>) -> Result<LabeledArray> {
    let mut r = BufReader::new(File::open(path)?);
    let mut len = [0u8; 8];
    read_exact(&mut r, &mut len, "header length")?;
    let len = u64::from_le_bytes(len);
    if len > MAX_HEADER_BYTES {
        return Err(Error::Format(format!("implausible header length {len}")));
    }
    let mut header = vec![0u8; len as usize];
    read_exact(&mut r, &mut header, "header")?;
    let header: Header =
        serde_json::from_slice(&header).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported schema version {} (this build reads {SCHEMA_VERSION})",
            header.schema_version
        )));
    }
    if header.dtype != "f64" {
        return Err(Error::Format(format!("unsupported dtype `{}`", header.dtype)));
    }
    if header.byte_order != "little" {
        return Err(Error::Format(format!("unsupported byte order `{}`", header.byte_order)));
    }

    let count: usize = header.shape.iter().product();
    let mut payload = vec![0u8; count * 8];
    read_exact(&mut r, &mut payload, "payload")?;
    if r.read(&mut [0u8])? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    let crc = crc32fast::hash(&payload);
    if crc != header.crc32 {
        return Err(Error::Format(format!(
            "payload checksum mismatch: header {:08x}, data {crc:08x}",
            header.crc32
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    let values = ArrayD::from_shape_vec(IxDyn(&header.shape), values)
        .map_err(|e| Error::Format(e.to_string()))?;
    LabeledArray::from_parts_unchecked(values, header.labels, header.geometry)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("file truncated in {what}")),
        _ => e.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::containers::{AcquisitionGeometry, Angles, ConePlacement, Panel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..shape.iter().product()).map(|_| rng.random_range(-1e3..1e3)).collect()
    }

    fn bits(a: &LabeledArray) -> Vec<u64> {
        a.as_slice().iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.tk");
        let mut values = random(&[3, 4, 5], 1);
        values[0] = -0.0;
        values[1] = f64::MIN_POSITIVE / 3.0;
        values[2] = f64::NAN;
        let a = LabeledArray::from_vec(&[3, 4, 5], values, &["a", "b", "c"]).unwrap();
        write_native(&a, &path).unwrap();
        let b = read_native(&path).unwrap();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.labels(), b.labels());
        assert!(b.geometry().is_none());
        let text = std::fs::read(&path).unwrap();
        assert!(String::from_utf8_lossy(&text).contains("\"geometry\":null"));
    }

    #[test]
    fn geometry_survives() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.tk");
        let ag = AcquisitionGeometry::cone(
            ConePlacement::new([0.1, -500.3, 0.0], [0.0, 1000.0 / 3.0, 0.7]),
            Panel::new([7, 5], [0.3, 0.1 + 0.2]).unwrap(),
            Angles::golden(11),
        )
        .unwrap();
        let mut a = LabeledArray::zeros(&ag.into());
        let v = random(a.shape(), 2);
        a.as_slice_mut().copy_from_slice(&v);
        write_native(&a, &path).unwrap();
        let b = read_native(&path).unwrap();
        assert_eq!(a.geometry(), b.geometry());
        assert_eq!(bits(&a), bits(&b));
    }

    fn rewrite_header(path: &Path, edit: impl Fn(&mut serde_json::Value)) {
        let bytes = std::fs::read(path).unwrap();
        let len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let mut header: serde_json::Value = serde_json::from_slice(&bytes[8..8 + len]).unwrap();
        edit(&mut header);
        let header = serde_json::to_vec(&header).unwrap();
        let mut out = (header.len() as u64).to_le_bytes().to_vec();
        out.extend(header);
        out.extend(&bytes[8 + len..]);
        std::fs::write(path, out).unwrap();
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tk");
        let a = LabeledArray::from_vec(&[2, 3], random(&[2, 3], 3), &["r", "c"]).unwrap();
        let fresh = || write_native(&a, &path).unwrap();

        fresh();
        rewrite_header(&path, |h| h["byte_order"] = "big".into());
        assert!(matches!(read_native(&path), Err(Error::Format(m)) if m.contains("byte order")));

        fresh();
        rewrite_header(&path, |h| h["schema_version"] = 99.into());
        assert!(matches!(read_native(&path), Err(Error::Format(m)) if m.contains("schema")));

        fresh();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_native(&path), Err(Error::Format(m)) if m.contains("truncated")));

        fresh();
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x01;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_native(&path), Err(Error::Format(m)) if m.contains("checksum")));

        std::fs::write(&path, [1u8, 2, 3]).unwrap();
        assert!(read_native(&path).is_err());
    }

    proptest::proptest! {
        #[test]
        fn any_values_round_trip(values in proptest::collection::vec(proptest::num::f64::ANY, 1..64)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.tk");
            let a = LabeledArray::vector(values, "x");
            write_native(&a, &path).unwrap();
            proptest::prop_assert_eq!(bits(&a), bits(&read_native(&path).unwrap()));
        }
    }
}
