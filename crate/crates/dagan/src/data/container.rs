//! The `DGAN` container: one file per dataset, little-endian throughout.
//!
//! ```text
//! magic    4 × u8   "DGAN"
//! version  u32      currently 1
//! class_count, h, w, c   u32 each
//! offsets  class_count × u64   image index of each class's first image
//! counts   class_count × u64   images per class
//! payload  total_images · c·h·w × f32, CHW per image
//! ```

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::data::dataset::{Dataset, ImageShape};
use crate::error::{data_err, Error, Result};

const MAGIC: &[u8; 4] = b"DGAN";
const VERSION: u32 = 1;

/// Serializes a dataset to the container byte format. Identical datasets
/// produce identical bytes.
pub fn container_bytes(dataset: &Dataset) -> Result<Vec<u8>> {
    dataset.validate()?;
    let shape = dataset.shape;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u32::<LE>(VERSION).unwrap();
    out.write_u32::<LE>(dataset.class_count() as u32).unwrap();
    out.write_u32::<LE>(shape.h as u32).unwrap();
    out.write_u32::<LE>(shape.w as u32).unwrap();
    out.write_u32::<LE>(shape.c as u32).unwrap();
    let mut offset = 0u64;
    for class in &dataset.classes {
        out.write_u64::<LE>(offset).unwrap();
        offset += class.len() as u64;
    }
    for class in &dataset.classes {
        out.write_u64::<LE>(class.len() as u64).unwrap();
    }
    for class in &dataset.classes {
        for image in class {
            for &p in image {
                out.write_f32::<LE>(p).unwrap();
            }
        }
    }
    Ok(out)
}

pub fn save_container(path: &Path, dataset: &Dataset) -> Result<()> {
    fs::write(path, container_bytes(dataset)?)?;
    Ok(())
}

pub fn load_container(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    let name = path.display();
    let mut cur = Cursor::new(bytes.as_slice());
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic)
        .map_err(|_| data_err!("{name}: truncated header"))?;
    if &magic != MAGIC {
        return Err(data_err!("{name}: bad magic {magic:?}, not a DGAN container"));
    }
    let version = read_u32(&mut cur, &name)?;
    if version != VERSION {
        return Err(data_err!("{name}: unsupported container version {version}"));
    }
    let class_count = read_u32(&mut cur, &name)? as usize;
    let h = read_u32(&mut cur, &name)? as usize;
    let w = read_u32(&mut cur, &name)? as usize;
    let c = read_u32(&mut cur, &name)? as usize;
    let shape = ImageShape::new(c, h, w);
    let mut offsets = Vec::with_capacity(class_count);
    for _ in 0..class_count {
        offsets.push(read_u64(&mut cur, &name)? as usize);
    }
    let mut counts = Vec::with_capacity(class_count);
    for _ in 0..class_count {
        counts.push(read_u64(&mut cur, &name)? as usize);
    }
    let mut expected = 0usize;
    for (k, (&off, &count)) in offsets.iter().zip(&counts).enumerate() {
        if off != expected {
            return Err(data_err!("{name}: class {k} offset {off}, expected {expected}"));
        }
        expected += count;
    }
    let per = shape.len();
    let payload_len = bytes.len() - cur.position() as usize;
    if payload_len != expected * per * 4 {
        return Err(data_err!(
            "{name}: payload is {payload_len} bytes, header implies {}",
            expected * per * 4
        ));
    }
    let mut classes = Vec::with_capacity(class_count);
    for &count in &counts {
        let mut class = Vec::with_capacity(count);
        for _ in 0..count {
            let mut image = vec![0f32; per];
            cur.read_f32_into::<LE>(&mut image)
                .map_err(|_| data_err!("{name}: truncated payload"))?;
            class.push(image);
        }
        classes.push(class);
    }
    let dataset = Dataset { shape, classes };
    dataset
        .validate()
        .map_err(|e| data_err!("{name}: {e}"))?;
    Ok(dataset)
}

fn read_u32(cur: &mut Cursor<&[u8]>, name: &dyn std::fmt::Display) -> Result<u32> {
    cur.read_u32::<LE>().map_err(|_| data_err!("{name}: truncated header"))
}

fn read_u64(cur: &mut Cursor<&[u8]>, name: &dyn std::fmt::Display) -> Result<u64> {
    cur.read_u64::<LE>().map_err(|_| data_err!("{name}: truncated header"))
}

/// How `pack_dataset` normalizes decoded images.
#[derive(Clone, Copy, Debug)]
pub struct PackOptions {
    /// Output channels: 1 (luminance) or 3 (RGB).
    pub channels: usize,
    /// Resample every image to `(h, w)` by area averaging. `None` keeps
    /// native sizes and errors if they disagree across the tree.
    pub resize: Option<(usize, usize)>,
}

impl Default for PackOptions {
    fn default() -> Self {
        PackOptions { channels: 1, resize: Some((32, 32)) }
    }
}

/// Packs a directory tree (one subdirectory per class, images inside) into
/// a dataset. Class folders and files are visited in name order, so the
/// result — and its container bytes — are deterministic.
pub fn pack_dataset(dir: &Path, options: &PackOptions) -> Result<Dataset> {
    if options.channels != 1 && options.channels != 3 {
        return Err(data_err!("pack supports 1 or 3 channels, got {}", options.channels));
    }
    let mut class_dirs: Vec<_> = fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(data_err!("{}: no class folders", dir.display()));
    }

    let mut shape: Option<ImageShape> = None;
    let mut classes = Vec::with_capacity(class_dirs.len());
    for class_dir in &class_dirs {
        let mut files: Vec<_> = fs::read_dir(class_dir)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(data_err!("class folder {} is empty", class_dir.display()));
        }
        let mut class = Vec::with_capacity(files.len());
        for file in &files {
            let (image, decoded_shape) = decode_image(file, options)?;
            match shape {
                None => shape = Some(decoded_shape),
                Some(s) if s != decoded_shape => {
                    return Err(data_err!(
                        "{}: image is {:?}, earlier images were {:?}",
                        file.display(),
                        decoded_shape,
                        s
                    ));
                }
                Some(_) => {}
            }
            class.push(image);
        }
        classes.push(class);
    }
    let dataset = Dataset { shape: shape.unwrap(), classes };
    dataset.validate()?;
    Ok(dataset)
}

/// Decodes one file to flat CHW floats in `[0, 1]`, applying the channel
/// and resize options.
fn decode_image(path: &Path, options: &PackOptions) -> Result<(Vec<f32>, ImageShape)> {
    let decoded = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(e) => Error::Io(e),
        e => data_err!("{}: {e}", path.display()),
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    // Planes arrive in HWC from the decoder; transpose into CHW.
    let planes: Vec<Vec<f32>> = if options.channels == 1 {
        let luma = decoded.to_luma32f();
        vec![luma.into_raw()]
    } else {
        let rgb = decoded.to_rgb32f().into_raw();
        (0..3)
            .map(|ch| rgb.iter().skip(ch).step_by(3).copied().collect())
            .collect()
    };
    let (out_h, out_w) = options.resize.unwrap_or((h, w));
    let mut image = Vec::with_capacity(options.channels * out_h * out_w);
    for plane in &planes {
        if (out_h, out_w) == (h, w) {
            image.extend(plane.iter().map(|p| p.clamp(0.0, 1.0)));
        } else {
            image.extend(area_resize(plane, h, w, out_h, out_w));
        }
    }
    Ok((image, ImageShape::new(options.channels, out_h, out_w)))
}

/// Area-averaging resample of one channel plane: each output pixel is the
/// coverage-weighted mean of the source rectangle it spans.
fn area_resize(src: &[f32], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<f32> {
    let spans = |s: usize, d: usize| -> Vec<Vec<(usize, f64)>> {
        (0..d)
            .map(|i| {
                let lo = i as f64 * s as f64 / d as f64;
                let hi = (i + 1) as f64 * s as f64 / d as f64;
                let mut weights = Vec::new();
                for j in lo.floor() as usize..(hi.ceil() as usize).min(s) {
                    let overlap = hi.min((j + 1) as f64) - lo.max(j as f64);
                    if overlap > 0.0 {
                        weights.push((j, overlap));
                    }
                }
                weights
            })
            .collect()
    };
    let rows = spans(sh, dh);
    let cols = spans(sw, dw);
    let mut out = Vec::with_capacity(dh * dw);
    for row in &rows {
        for col in &cols {
            let mut acc = 0.0;
            let mut total = 0.0;
            for &(y, wy) in row {
                for &(x, wx) in col {
                    acc += src[y * sw + x] as f64 * wy * wx;
                    total += wy * wx;
                }
            }
            out.push((acc / total).clamp(0.0, 1.0) as f32);
        }
    }
    out
}
