use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, Axis, IxDyn};
use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype::Gray32Float, TiffEncoder};

use crate::containers::LabeledArray;
use crate::error::{Error, Result};

fn tiff_error(e: tiff::TiffError) -> Error {
    match e {
        tiff::TiffError::IoError(e) => Error::Io(e),
        other => Error::Format(other.to_string()),
    }
}

/// Write one 32-bit float TIFF per index of `axis`, named
/// `<prefix>_<index:04>.tiff`. Samples are rounded to f32.
pub fn write_tiff_stack(
    a: &LabeledArray,
    dir: impl AsRef<Path>,
    axis: &str,
    prefix: &str,
) -> Result<Vec<PathBuf>> {
    if a.shape().len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "TIFF stacks need a 3-D array, got shape {:?}",
            a.shape()
        )));
    }
    let k = a.axis_index(axis)?;
    std::fs::create_dir_all(dir.as_ref())?;
    let mut paths = Vec::new();
    for (i, image) in a.values().axis_iter(Axis(k)).enumerate() {
        let (h, w) = (image.shape()[0], image.shape()[1]);
        let samples: Vec<f32> = image.iter().map(|&v| v as f32).collect();
        let path = dir.as_ref().join(format!("{prefix}_{i:04}.tiff"));
        let mut enc = TiffEncoder::new(BufWriter::new(File::create(&path)?)).map_err(tiff_error)?;
        enc.write_image::<Gray32Float>(w as u32, h as u32, &samples)
            .map_err(tiff_error)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Read a TIFF stack from a directory (every `.tif`/`.tiff` inside) or a glob
/// pattern. Files are ordered by the number at the end of their stem and the
/// result is labelled `(labels[0], labels[1], labels[2])`, stack axis first.
pub fn read_tiff_stack(source: impl AsRef<Path>, labels: &[&str]) -> Result<LabeledArray> {
    if labels.len() != 3 {
        return Err(Error::InvalidArgument(format!("expected 3 labels, got {}", labels.len())));
    }
    let files = ordered_files(source.as_ref())?;
    let mut dims: Option<(u32, u32)> = None;
    let mut values = Vec::new();
    for (_, path) in &files {
        let mut dec = Decoder::new(BufReader::new(File::open(path)?)).map_err(tiff_error)?;
        let d = dec.dimensions().map_err(tiff_error)?;
        match dims {
            None => dims = Some(d),
            Some(first) if first != d => {
                return Err(Error::Format(format!(
                    "{} is {}×{}, earlier files are {}×{}",
                    path.display(),
                    d.0,
                    d.1,
                    first.0,
                    first.1
                )))
            }
            _ => {}
        }
        match dec.read_image().map_err(tiff_error)? {
            DecodingResult::F32(v) => values.extend(v.into_iter().map(f64::from)),
            DecodingResult::F64(v) => values.extend(v),
            DecodingResult::U8(v) => values.extend(v.into_iter().map(f64::from)),
            DecodingResult::U16(v) => values.extend(v.into_iter().map(f64::from)),
            _ => {
                return Err(Error::Format(format!(
                    "{}: unsupported sample format",
                    path.display()
                )))
            }
        }
    }
    let (w, h) = dims.expect("at least one file");
    let shape = [files.len(), h as usize, w as usize];
    if values.len() != shape.iter().product::<usize>() {
        return Err(Error::Format("multi-channel TIFFs are not supported".into()));
    }
    let values = ArrayD::from_shape_vec(IxDyn(&shape), values).expect("length checked");
    LabeledArray::new(values, labels.iter().map(|s| s.to_string()).collect())
}

fn ordered_files(source: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let candidates: Vec<PathBuf> = if source.is_dir() {
        std::fs::read_dir(source)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("tif" | "tiff")))
            .collect()
    } else {
        let pattern = source.to_str().ok_or_else(|| Error::InvalidArgument("non-UTF-8 path".into()))?;
        glob::glob(pattern)
            .map_err(|e| Error::InvalidArgument(format!("bad pattern `{pattern}`: {e}")))?
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Io(e.into()))?
    };
    if candidates.is_empty() {
        return Err(Error::Format(format!("no TIFF files match {}", source.display())));
    }
    let mut files = candidates
        .into_iter()
        .map(|p| stack_index(&p).map(|i| (i, p)))
        .collect::<Result<Vec<_>>>()?;
    files.sort();
    if let Some(w) = files.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Format(format!(
            "{} and {} share stack index {}",
            w[0].1.display(),
            w[1].1.display(),
            w[0].0
        )));
    }
    Ok(files)
}

fn stack_index(path: &Path) -> Result<u64> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    let digits = stem.len() - stem.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    stem[stem.len() - digits..]
        .parse()
        .map_err(|_| Error::Format(format!("{} has no numeric stack index", path.display())))
}
