//! Procedurally drawn glyph families: a self-contained stand-in corpus
//! with real class structure (shape × size/thickness variants) and
//! per-sample jitter, used by tests, demos, and `data synth`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::dataset::{Dataset, ImageShape};
use crate::error::{data_err, Result};

pub const GLYPH_SIZE: usize = 32;
const BASE_COUNT: usize = 12;
const VARIANT_COUNT: usize = 4;

/// Largest class count the generator supports (12 shapes × 4 variants).
pub const MAX_GLYPH_CLASSES: usize = BASE_COUNT * VARIANT_COUNT;

/// Draws `class_count` glyph families with `samples_per_class` jittered
/// renderings each, 32×32 single-channel, deterministic in `seed`.
/// Classes cycle through the base shapes first so small sets are maximally
/// distinct.
pub fn synth_glyph_set(class_count: usize, samples_per_class: usize, seed: u64) -> Result<Dataset> {
    if class_count == 0 || class_count > MAX_GLYPH_CLASSES {
        return Err(data_err!("glyph class count must be in 1..={MAX_GLYPH_CLASSES}, got {class_count}"));
    }
    if samples_per_class == 0 {
        return Err(data_err!("samples_per_class must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = ImageShape::new(1, GLYPH_SIZE, GLYPH_SIZE);
    let mut classes = Vec::with_capacity(class_count);
    for class in 0..class_count {
        let base = class % BASE_COUNT;
        let variant = class / BASE_COUNT;
        let mut images = Vec::with_capacity(samples_per_class);
        for _ in 0..samples_per_class {
            images.push(render(base, variant, &mut rng));
        }
        classes.push(images);
    }
    Ok(Dataset { shape, classes })
}

/// Variant → (radius scale, stroke half-width).
const VARIANTS: [(f64, f64); VARIANT_COUNT] = [(0.7, 1.2), (1.0, 1.2), (0.7, 2.4), (1.0, 2.4)];

fn render<R: Rng>(base: usize, variant: usize, rng: &mut R) -> Vec<f32> {
    let (size, stroke) = VARIANTS[variant];
    let cy = (GLYPH_SIZE as f64 - 1.0) / 2.0 + rng.random_range(-2.0..=2.0);
    let cx = (GLYPH_SIZE as f64 - 1.0) / 2.0 + rng.random_range(-2.0..=2.0);
    let r = 10.0 * size * rng.random_range(0.92..=1.08);
    let intensity = rng.random_range(0.75..=1.0) as f32;
    let mut out = Vec::with_capacity(GLYPH_SIZE * GLYPH_SIZE);
    for yi in 0..GLYPH_SIZE {
        for xi in 0..GLYPH_SIZE {
            let y = yi as f64 - cy;
            let x = xi as f64 - cx;
            let coverage = shape_coverage(base, y, x, r, stroke);
            out.push(intensity * coverage.clamp(0.0, 1.0) as f32);
        }
    }
    out
}

/// Coverage in [0, 1] of the pixel at offset (y, x) from the glyph
/// center. Shapes are signed-distance sketches with a one-pixel soft edge
/// (`soft`), which keeps small translations smooth.
fn shape_coverage(base: usize, y: f64, x: f64, r: f64, stroke: f64) -> f64 {
    let soft = |d: f64| (1.0 - d).clamp(0.0, 1.0); // d = signed distance outside the shape
    let dist = (y * y + x * x).sqrt();
    match base {
        // Solid disk.
        0 => soft(dist - r),
        // Ring.
        1 => soft((dist - r).abs() - stroke),
        // Upright cross.
        2 => {
            let arm = soft(y.abs() - stroke).min(soft(x.abs().max(y.abs()) - r));
            let arm2 = soft(x.abs() - stroke).min(soft(x.abs().max(y.abs()) - r));
            arm.max(arm2)
        }
        // Diagonal cross.
        3 => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let (u, v) = (s * (x + y), s * (x - y));
            let arm = soft(u.abs() - stroke).min(soft(dist - r));
            let arm2 = soft(v.abs() - stroke).min(soft(dist - r));
            arm.max(arm2)
        }
        // Solid upward triangle: inside when below the two slanted edges.
        4 => soft((-y - r * 0.8).max(y + 0.5 * x.abs() - r * 0.8)),
        // Square outline.
        5 => soft((x.abs().max(y.abs()) - r).abs() - stroke),
        // Solid diamond (L1 disk).
        6 => soft(x.abs() + y.abs() - r),
        // Horizontal stripes over a disk footprint.
        7 => soft(dist - r).min(stripe(y, stroke)),
        // Vertical stripes over a disk footprint.
        8 => soft(dist - r).min(stripe(x, stroke)),
        // Checkerboard over a square footprint.
        9 => {
            let cell = (stroke * 2.0).max(2.0);
            let par = ((x.div_euclid(cell) + y.div_euclid(cell)) as i64).rem_euclid(2);
            if par == 0 { soft(x.abs().max(y.abs()) - r) } else { 0.0 }
        }
        // Solid corner triangle: inside when x + y is small.
        10 => soft((x + y) * std::f64::consts::FRAC_1_SQRT_2).min(soft(dist - r)),
        // Dot grid.
        11 => {
            let cell = (stroke * 2.0 + 2.0).max(4.0);
            let dy = y - (y / cell).round() * cell;
            let dx = x - (x / cell).round() * cell;
            soft((dy * dy + dx * dx).sqrt() - stroke).min(soft(dist - r))
        }
        _ => unreachable!("glyph base {base} out of range"),
    }
}

/// Periodic bands of half-width `stroke`, period `4·stroke`.
fn stripe(coord: f64, stroke: f64) -> f64 {
    let period = 4.0 * stroke;
    let offset = coord - (coord / period).round() * period;
    (1.0 - (offset.abs() - stroke)).clamp(0.0, 1.0)
}
