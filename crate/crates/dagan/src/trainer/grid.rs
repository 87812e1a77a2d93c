//! Sample sheets: a real seed image in the top-left cell, and the rest of
//! the grid filled with generations whose latents sweep a spherically
//! interpolated subspace between four random corners.

use std::path::Path;

use image::{GrayImage, RgbImage};
use rand::Rng;

use dagan_nn::{NoGradGuard, Scalar, Tensor};

use crate::data::{batch_tensor, ImageShape};
use crate::error::{config_err, data_err, Result};
use crate::generator::Generator;
use crate::trainer::slerp::slerp;

/// Latents for an `rows × cols` grid, row-major: four random corners,
/// slerp down the side edges, then slerp across each row. Corner cells
/// reproduce the corner draws exactly.
pub fn slerp_latent_grid<T: Scalar>(
    rows: usize,
    cols: usize,
    z_dim: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Tensor<T>>> {
    if rows == 0 || cols == 0 {
        return Err(config_err!("grid must have at least one row and column"));
    }
    let tl = Tensor::<T>::randn(&[z_dim], rng);
    let tr = Tensor::<T>::randn(&[z_dim], rng);
    let bl = Tensor::<T>::randn(&[z_dim], rng);
    let br = Tensor::<T>::randn(&[z_dim], rng);
    let frac = |i: usize, n: usize| if n <= 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let v = frac(r, rows);
        let left = slerp(&tl, &bl, v)?;
        let right = slerp(&tr, &br, v)?;
        for c in 0..cols {
            out.push(slerp(&left, &right, frac(c, cols))?);
        }
    }
    Ok(out)
}

/// Renders flat CHW images (row-major cells) into one PNG.
pub fn write_image_grid(
    path: &Path,
    cells: &[Vec<f32>],
    shape: ImageShape,
    rows: usize,
    cols: usize,
) -> Result<()> {
    if cells.len() != rows * cols {
        return Err(config_err!("{} cells for a {rows}x{cols} grid", cells.len()));
    }
    let quant = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let (h, w) = (shape.h, shape.w);
    let (out_h, out_w) = ((rows * h) as u32, (cols * w) as u32);
    match shape.c {
        1 => {
            let mut img = GrayImage::new(out_w, out_h);
            for (i, cell) in cells.iter().enumerate() {
                let (r0, c0) = ((i / cols) * h, (i % cols) * w);
                for y in 0..h {
                    for x in 0..w {
                        img.put_pixel(
                            (c0 + x) as u32,
                            (r0 + y) as u32,
                            image::Luma([quant(cell[y * w + x])]),
                        );
                    }
                }
            }
            img.save(path)?;
        }
        3 => {
            let mut img = RgbImage::new(out_w, out_h);
            for (i, cell) in cells.iter().enumerate() {
                let (r0, c0) = ((i / cols) * h, (i % cols) * w);
                for y in 0..h {
                    for x in 0..w {
                        let px = [
                            quant(cell[y * w + x]),
                            quant(cell[h * w + y * w + x]),
                            quant(cell[2 * h * w + y * w + x]),
                        ];
                        img.put_pixel((c0 + x) as u32, (r0 + y) as u32, image::Rgb(px));
                    }
                }
            }
            img.save(path)?;
        }
        c => return Err(data_err!("grids render 1- or 3-channel images, got {c}")),
    }
    Ok(())
}

/// Generates the cell images for a sample grid: the seed first, then one
/// generation per remaining latent, eval mode, batched in small chunks.
pub fn sample_grid_cells<T: Scalar>(
    generator: &mut Generator<T>,
    seed_image: &[f32],
    rows: usize,
    cols: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<f32>>> {
    let shape = generator.spec().image_shape;
    if seed_image.len() != shape.len() {
        return Err(data_err!(
            "seed image has {} pixels, generator wants {:?}",
            seed_image.len(),
            shape
        ));
    }
    let z_dim = generator.spec().z_dim;
    let latents = slerp_latent_grid::<T>(rows, cols, z_dim, rng)?;
    let mut cells = vec![seed_image.to_vec()];
    let _guard = NoGradGuard::new();
    for chunk in latents[1..].chunks(8) {
        let n = chunk.len();
        let x = batch_tensor::<T>(&vec![seed_image; n], shape);
        let mut z_data = Vec::with_capacity(n * z_dim);
        for zt in chunk {
            z_data.extend(zt.to_vec());
        }
        let z = Tensor::from_vec(&[n, z_dim], z_data);
        let out = generator.generate(&x, &z, false, rng)?;
        let flat = out.to_vec();
        let per = shape.len();
        for i in 0..n {
            cells.push(flat[i * per..(i + 1) * per].iter().map(|v| v.as_f64() as f32).collect());
        }
    }
    Ok(cells)
}

/// Writes the full sample sheet PNG: real seed top-left, generations
/// elsewhere.
pub fn sample_grid<T: Scalar>(
    generator: &mut Generator<T>,
    seed_image: &[f32],
    rows: usize,
    cols: usize,
    rng: &mut impl Rng,
    path: &Path,
) -> Result<()> {
    let cells = sample_grid_cells(generator, seed_image, rows, cols, rng)?;
    write_image_grid(path, &cells, generator.spec().image_shape, rows, cols)
}

/// A 1×`steps` strip interpolating between two fresh latents over one
/// seed image — the leftmost cell is the seed.
pub fn interpolation_strip<T: Scalar>(
    generator: &mut Generator<T>,
    seed_image: &[f32],
    steps: usize,
    rng: &mut impl Rng,
    path: &Path,
) -> Result<()> {
    sample_grid(generator, seed_image, 1, steps, rng, path)
}
