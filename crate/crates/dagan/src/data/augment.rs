use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::dataset::ImageShape;

/// Std-dev of the additive Gaussian noise, as a fraction of the unit
/// dynamic range.
pub const NOISE_SIGMA: f32 = 0.05;

/// Largest shift per axis, in pixels.
pub const MAX_SHIFT: i32 = 2;

/// One concrete draw of the augmentation stack, separated from its
/// application so tests can force specific outcomes.
#[derive(Clone, Debug)]
pub struct AugmentChoices {
    /// Per-pixel additive noise (full image length), drawn with p = 0.5.
    pub noise: Option<Vec<f32>>,
    /// `(dy, dx)` integer shift with zero fill, each axis in `±MAX_SHIFT`,
    /// drawn with p = 0.5.
    pub shift: Option<(i32, i32)>,
    /// Quarter turns, uniform on {0,1,2,3}; non-square images restrict to
    /// {0,2} so the shape survives.
    pub quarter_turns: u8,
}

impl AugmentChoices {
    pub fn identity() -> Self {
        AugmentChoices { noise: None, shift: None, quarter_turns: 0 }
    }

    pub fn sample<R: Rng + ?Sized>(shape: ImageShape, rng: &mut R) -> Self {
        let noise = if rng.random_bool(0.5) {
            Some(
                (0..shape.len())
                    .map(|_| rng.sample::<f32, _>(StandardNormal) * NOISE_SIGMA)
                    .collect(),
            )
        } else {
            None
        };
        let shift = if rng.random_bool(0.5) {
            Some((rng.random_range(-MAX_SHIFT..=MAX_SHIFT), rng.random_range(-MAX_SHIFT..=MAX_SHIFT)))
        } else {
            None
        };
        let quarter_turns = if shape.h == shape.w {
            rng.random_range(0..4u8)
        } else {
            2 * rng.random_range(0..2u8)
        };
        AugmentChoices { noise, shift, quarter_turns }
    }

    /// Applies the draw in fixed order: noise (then clamp), shift, rotate.
    pub fn apply(&self, image: &[f32], shape: ImageShape) -> Vec<f32> {
        assert_eq!(image.len(), shape.len(), "image length does not match shape {shape:?}");
        let mut out = image.to_vec();
        if let Some(noise) = &self.noise {
            for (p, n) in out.iter_mut().zip(noise) {
                *p = (*p + n).clamp(0.0, 1.0);
            }
        }
        if let Some((dy, dx)) = self.shift {
            out = shift_image(&out, shape, dy, dx);
        }
        match self.quarter_turns % 4 {
            0 => {}
            2 => out = rot180(&out, shape),
            k => {
                assert_eq!(shape.h, shape.w, "odd quarter turns need square images");
                for _ in 0..k {
                    out = rot90(&out, shape);
                }
            }
        }
        out
    }
}

/// The standard augmentation stack: sample a draw and apply it.
pub fn standard_augment<R: Rng + ?Sized>(image: &[f32], shape: ImageShape, rng: &mut R) -> Vec<f32> {
    AugmentChoices::sample(shape, rng).apply(image, shape)
}

fn shift_image(image: &[f32], shape: ImageShape, dy: i32, dx: i32) -> Vec<f32> {
    let (h, w) = (shape.h as i32, shape.w as i32);
    let mut out = vec![0f32; image.len()];
    for c in 0..shape.c {
        let plane = c * shape.h * shape.w;
        for y in 0..h {
            let sy = y - dy;
            if sy < 0 || sy >= h {
                continue;
            }
            for x in 0..w {
                let sx = x - dx;
                if sx >= 0 && sx < w {
                    out[plane + (y * w + x) as usize] = image[plane + (sy * w + sx) as usize];
                }
            }
        }
    }
    out
}

/// One counter-clockwise quarter turn of each (square) channel plane.
fn rot90(image: &[f32], shape: ImageShape) -> Vec<f32> {
    let (h, w) = (shape.h, shape.w);
    let mut out = vec![0f32; image.len()];
    for c in 0..shape.c {
        let plane = c * h * w;
        for y in 0..h {
            for x in 0..w {
                // (y, x) lands at (w-1-x, y).
                out[plane + (w - 1 - x) * h + y] = image[plane + y * w + x];
            }
        }
    }
    out
}

/// Half turn: both axes reversed, so each plane is simply read backwards.
/// Shape-preserving for any aspect ratio.
fn rot180(image: &[f32], shape: ImageShape) -> Vec<f32> {
    let mut out = image.to_vec();
    for plane in out.chunks_mut(shape.h * shape.w) {
        plane.reverse();
    }
    out
}
