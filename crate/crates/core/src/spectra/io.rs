//! On-disk formats.
//!
//! * Images: a JSON header next to a raw little-endian `f64` payload
//!   (`foo.json` + `foo.bin`), pixel-major with all bands of a pixel contiguous.
//! * Libraries: CSV `class,b0,...,b{L-1}`, one signature per row.
//! * Abundances: CSV with one column per class, one row per pixel.
//!
//! Floats are written with Rust's shortest round-trip formatting, so text
//! formats are lossless.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::types::LibraryClass;
use super::{AbundanceMap, EndmemberField, SpectralImage, SpectralLibrary};
use crate::error::{Error, Result};

pub const DTYPE: &str = "f64";
pub const ORDER: &str = "row-major band-interleaved-by-pixel";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageHeader {
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub dtype: String,
    pub order: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelengths: Option<Vec<f64>>,
    /// Set for endmember fields: `bands = L * classes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
}

fn payload_path(header: &Path) -> PathBuf {
    header.with_extension("bin")
}

fn write_raw(header: &ImageHeader, values: &[f64], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, serde_json::to_string_pretty(header)? + "\n")?;
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(payload_path(path))?.write_all(&bytes)?;
    Ok(())
}

fn read_raw(path: &Path) -> Result<(ImageHeader, Vec<f64>)> {
    let header: ImageHeader = serde_json::from_str(&fs::read_to_string(path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if header.dtype != DTYPE {
        return Err(Error::Format(format!("unsupported dtype `{}`", header.dtype)));
    }
    if header.order != ORDER {
        return Err(Error::Format(format!("unsupported order `{}`", header.order)));
    }
    let mut bytes = Vec::new();
    fs::File::open(payload_path(path))?.read_to_end(&mut bytes)?;
    let expected = header.height * header.width * header.bands;
    if bytes.len() % 8 != 0 || bytes.len() / 8 != expected {
        return Err(Error::PayloadSize {
            expected,
            found: bytes.len() / 8,
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(path.display().to_string()));
    }
    Ok((header, values))
}

/// Writes `path` (JSON header) and the sibling `.bin` payload.
pub fn save_image(image: &SpectralImage, path: impl AsRef<Path>) -> Result<()> {
    let header = ImageHeader {
        name: image.name.clone(),
        height: image.height(),
        width: image.width(),
        bands: image.bands(),
        dtype: DTYPE.into(),
        order: ORDER.into(),
        wavelengths: image.wavelengths.clone(),
        classes: None,
    };
    write_raw(&header, image.as_slice(), path.as_ref())
}

pub fn load_image(path: impl AsRef<Path>) -> Result<SpectralImage> {
    let (h, values) = read_raw(path.as_ref())?;
    let img = SpectralImage::new(h.name, h.height, h.width, h.bands, values)?;
    match h.wavelengths {
        Some(w) => img.with_wavelengths(w),
        None => Ok(img),
    }
}

/// Endmember fields use the image format with `L * P` bands per pixel.
pub fn save_field(field: &EndmemberField, height: usize, width: usize, path: impl AsRef<Path>) -> Result<()> {
    if height * width != field.n_pixels() {
        return Err(Error::Dimension("grid does not match field".into()));
    }
    let header = ImageHeader {
        name: "endmembers".into(),
        height,
        width,
        bands: field.bands() * field.n_classes(),
        dtype: DTYPE.into(),
        order: ORDER.into(),
        wavelengths: None,
        classes: Some(field.n_classes()),
    };
    write_raw(&header, field.matrix().as_slice(), path.as_ref())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<EndmemberField> {
    let (h, values) = read_raw(path.as_ref())?;
    let p = h
        .classes
        .filter(|&p| p > 0 && h.bands % p == 0)
        .ok_or_else(|| Error::Format("field header lacks a valid `classes` entry".into()))?;
    EndmemberField::new(
        h.bands / p,
        p,
        DMatrix::from_vec(h.bands, h.height * h.width, values),
    )
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad number `{s}` in {what}")))?;
    if !v.is_finite() {
        return Err(Error::NonFinite(what.to_string()));
    }
    Ok(v)
}

pub fn save_library(library: &SpectralLibrary, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["class".to_string()];
    header.extend((0..library.bands()).map(|b| format!("b{b}")));
    w.write_record(&header)?;
    for class in library.classes() {
        for sig in class.signatures.column_iter() {
            let mut rec = vec![class.name.clone()];
            rec.extend(sig.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a library CSV. Rows sharing a class name form one bundle; classes
/// keep the order of first appearance. A row with a class name and no values
/// declares the class without adding a signature.
pub fn load_library(path: impl AsRef<Path>) -> Result<SpectralLibrary> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path.as_ref())?;
    let header = r.headers()?.clone();
    if header.get(0) != Some("class") {
        return Err(Error::Format("library header must start with `class`".into()));
    }
    let bands = header.len() - 1;
    if bands == 0 {
        return Err(Error::Format("library has no band columns".into()));
    }
    let mut classes: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let name = rec.get(0).unwrap_or("").to_string();
        let idx = match classes.iter().position(|(n, _)| *n == name) {
            Some(i) => i,
            None => {
                classes.push((name.clone(), Vec::new()));
                classes.len() - 1
            }
        };
        let fields: Vec<&str> = rec.iter().skip(1).collect();
        if fields.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if fields.len() != bands {
            return Err(Error::Dimension(format!(
                "library row for `{name}` has {} values, header has {bands}",
                fields.len()
            )));
        }
        let sig = fields
            .iter()
            .map(|f| parse_f64(f, "library"))
            .collect::<Result<Vec<_>>>()?;
        classes[idx].1.push(sig);
    }
    SpectralLibrary::new(bands, classes)
}

pub fn save_abundances(abundances: &AbundanceMap, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(abundances.class_names())?;
    for n in 0..abundances.n_pixels() {
        w.write_record(abundances.pixel(n).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_abundances(path: impl AsRef<Path>, sum_to_one: bool) -> Result<AbundanceMap> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(Error::Dimension("abundance row width differs from header".into()));
        }
        rows.push(
            rec.iter()
                .map(|f| parse_f64(f, "abundances"))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    if rows.is_empty() {
        return Err(Error::Format("abundance file has no rows".into()));
    }
    AbundanceMap::from_rows(&rows, sum_to_one)?.with_class_names(names)
}

impl LibraryClass {
    pub fn new(name: impl Into<String>, signatures: DMatrix<f64>) -> Self {
        Self {
            name: name.into(),
            signatures,
        }
    }
}
