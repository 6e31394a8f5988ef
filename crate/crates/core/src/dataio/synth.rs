//! Synthetic slide corpus standing in for real biopsy scans.
//!
//! Each slide is a grid of cells; tissue cells carry a class-specific
//! texture rendered in a per-slide H&E-like palette, the rest are
//! near-white background.
//!
//! | class  | texture                              |
//! |--------|--------------------------------------|
//! | EE     | 2-pixel checkerboard + noise         |
//! | CD     | diagonal sinusoidal stripes + noise  |
//! | Normal | smooth low-frequency blobs + noise   |

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataio::ppm::write_image;
use crate::dataio::{write_atomic, write_dir_atomic};
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::patching::ClassLabel;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub slides_per_class: usize,
    /// Cells per slide along x and y.
    pub grid: (usize, usize),
    pub patch_size: usize,
    /// Probability that a cell holds tissue. Every slide gets at least one
    /// tissue and one background cell.
    pub tissue_fraction: f64,
    /// Gaussian pixel noise on tissue, in `[0, 1]` units.
    pub noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 0,
            slides_per_class: 6,
            grid: (4, 4),
            patch_size: 64,
            tissue_fraction: 0.6,
            noise: 0.04,
        }
    }
}

/// Background pixel noise (8-bit units); keeps the per-channel standard
/// deviation of a background patch well under 2/255.
const BACKGROUND_NOISE: f64 = 0.7;

#[derive(Debug, Clone)]
pub struct SyntheticSlide {
    pub slide_id: String,
    pub class_label: ClassLabel,
    pub image: RgbImage,
    /// Row-major over the cell grid.
    pub tissue: Vec<bool>,
}

/// Per-slide stain: two endmember colours the texture value blends between.
#[derive(Debug, Clone, Copy)]
struct Palette {
    hematoxylin: [f64; 3],
    eosin: [f64; 3],
    background: [f64; 3],
}

impl Palette {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let jitter = |rng: &mut ChaCha8Rng, base: [f64; 3]| {
            let gain: f64 = rng.random_range(0.85..1.1);
            base.map(|b| (b * gain * rng.random_range(0.92..1.08)).clamp(0.0, 1.0))
        };
        let bg_level: f64 = rng.random_range(0.93..0.97);
        Palette {
            hematoxylin: jitter(rng, [0.42, 0.24, 0.60]),
            eosin: jitter(rng, [0.90, 0.56, 0.74]),
            background: [bg_level, bg_level - 0.01, bg_level + 0.01],
        }
    }

    fn shade(&self, t: f64) -> [f64; 3] {
        let t = t.clamp(0.0, 1.0);
        std::array::from_fn(|c| t * self.hematoxylin[c] + (1.0 - t) * self.eosin[c])
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Class texture value in `[0, 1]` at global pixel `(x, y)`.
struct Texture {
    class: ClassLabel,
    phase: f64,
    offset: (usize, usize),
    blobs: Vec<(f64, f64, f64)>,
}

impl Texture {
    fn new(class: ClassLabel, width: usize, height: usize, rng: &mut ChaCha8Rng) -> Self {
        let blobs = if class == ClassLabel::Normal {
            let n = (width * height / 600).max(4);
            (0..n)
                .map(|_| {
                    (
                        rng.random_range(0.0..width as f64),
                        rng.random_range(0.0..height as f64),
                        if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                    )
                })
                .collect()
        } else {
            Vec::new()
        };
        Texture {
            class,
            phase: rng.random_range(0.0..std::f64::consts::TAU),
            offset: (rng.random_range(0..4), rng.random_range(0..4)),
            blobs,
        }
    }

    fn value(&self, x: usize, y: usize) -> f64 {
        match self.class {
            ClassLabel::Ee => {
                let (cx, cy) = ((x + self.offset.0) / 2, (y + self.offset.1) / 2);
                if (cx + cy) % 2 == 0 {
                    0.85
                } else {
                    0.15
                }
            }
            ClassLabel::Cd => {
                let u = (x + y) as f64 * std::f64::consts::TAU / 10.0 + self.phase;
                0.5 + 0.4 * u.sin()
            }
            ClassLabel::Normal => {
                let sigma2 = 2.0 * 12.0f64 * 12.0;
                let s: f64 = self
                    .blobs
                    .iter()
                    .map(|&(bx, by, sign)| {
                        let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                        sign * (-d2 / sigma2).exp()
                    })
                    .sum();
                0.5 + 0.45 * s.tanh()
            }
        }
    }
}

fn slide_seed(seed: u64, class: ClassLabel, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ ((class.index() as u64 + 1) << 40)
        ^ (index as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93)
}

fn render_slide(spec: &SyntheticSpec, class: ClassLabel, index: usize) -> Result<SyntheticSlide> {
    let mut rng = ChaCha8Rng::seed_from_u64(slide_seed(spec.seed, class, index));
    let (cols, rows) = spec.grid;
    let ps = spec.patch_size;
    let (w, h) = (cols * ps, rows * ps);
    let palette = Palette::random(&mut rng);
    let texture = Texture::new(class, w, h, &mut rng);

    let cells = cols * rows;
    let mut tissue: Vec<bool> = (0..cells)
        .map(|_| rng.random_bool(spec.tissue_fraction.clamp(0.0, 1.0)))
        .collect();
    if cells >= 2 {
        if !tissue.contains(&true) {
            tissue[rng.random_range(0..cells)] = true;
        }
        if !tissue.contains(&false) {
            tissue[rng.random_range(0..cells)] = false;
        }
    }

    let tissue_noise =
        Normal::new(0.0, spec.noise.max(0.0)).map_err(|e| Error::invalid(format!("noise: {e}")))?;
    let bg_noise = Normal::new(0.0, BACKGROUND_NOISE / 255.0).expect("positive sigma");
    let mut image = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let cell = (y / ps) * cols + x / ps;
            let px = if tissue[cell] {
                let base = palette.shade(texture.value(x, y));
                base.map(|b| to_u8(b + tissue_noise.sample(&mut rng)))
            } else {
                palette
                    .background
                    .map(|b| to_u8(b + bg_noise.sample(&mut rng)))
            };
            image.set_pixel(x, y, px);
        }
    }
    Ok(SyntheticSlide {
        slide_id: format!("{}-{index:03}", class.as_str()),
        class_label: class,
        image,
        tissue,
    })
}

/// Deterministic for a given spec.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<SyntheticSlide>> {
    if spec.patch_size == 0 || spec.grid.0 == 0 || spec.grid.1 == 0 || spec.slides_per_class == 0 {
        return Err(Error::invalid(format!(
            "degenerate synthetic spec {spec:?}"
        )));
    }
    let mut out = Vec::new();
    for class in ClassLabel::ALL {
        for i in 0..spec.slides_per_class {
            out.push(render_slide(spec, class, i)?);
        }
    }
    Ok(out)
}

/// One standalone `size × size` tissue patch of `class`.
pub fn textured_patch(class: ClassLabel, size: usize, rng: &mut ChaCha8Rng) -> RgbImage {
    let palette = Palette::random(rng);
    let texture = Texture::new(class, size, size, rng);
    let noise = Normal::new(0.0, 0.04).expect("positive sigma");
    RgbImage::from_fn(size, size, |x, y| {
        palette
            .shade(texture.value(x, y))
            .map(|b| to_u8(b + noise.sample(rng)))
    })
}

/// One standalone near-white background patch.
pub fn background_patch(size: usize, rng: &mut ChaCha8Rng) -> RgbImage {
    let palette = Palette::random(rng);
    let noise = Normal::new(0.0, BACKGROUND_NOISE / 255.0).expect("positive sigma");
    RgbImage::from_fn(size, size, |_, _| {
        palette.background.map(|b| to_u8(b + noise.sample(rng)))
    })
}

/// Mean squared forward difference of luminance over both axes, in
/// `[0, 1]²` units.
pub fn gradient_energy(image: &RgbImage) -> f64 {
    let lum = |x: usize, y: usize| {
        let p = image.pixel(x, y);
        (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0
    };
    let (w, h) = (image.width(), image.height());
    let mut total = 0.0;
    let mut n = 0usize;
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                total += (lum(x + 1, y) - lum(x, y)).powi(2);
                n += 1;
            }
            if y + 1 < h {
                total += (lum(x, y + 1) - lum(x, y)).powi(2);
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

pub const TRUTH_FILE: &str = "truth.csv";

/// Writes `<dir>/<class>/<slide_id>.ppm` plus `<dir>/truth.csv`
/// (`slide_id,class_label,grid_x,grid_y,tissue`).
pub fn write_corpus(slides: &[SyntheticSlide], dir: &Path, patch_size: usize) -> Result<()> {
    write_dir_atomic(dir, |tmp| {
        let mut truth = String::from("slide_id,class_label,grid_x,grid_y,tissue\n");
        for s in slides {
            let path = tmp
                .join(s.class_label.as_str())
                .join(format!("{}.ppm", s.slide_id));
            write_image(&path, &s.image)?;
            let cols = s.image.width() / patch_size;
            for (i, &t) in s.tissue.iter().enumerate() {
                let _ = writeln!(
                    truth,
                    "{},{},{},{},{}",
                    s.slide_id,
                    s.class_label,
                    i % cols,
                    i / cols,
                    t as u8
                );
            }
        }
        write_atomic(&tmp.join(TRUTH_FILE), truth.as_bytes())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SyntheticSpec {
        SyntheticSpec {
            slides_per_class: 2,
            grid: (3, 2),
            patch_size: 32,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate_synthetic(&tiny()).unwrap();
        let b = generate_synthetic(&tiny()).unwrap();
        assert_eq!(a.len(), 6);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.tissue, y.tissue);
        }
        let c = generate_synthetic(&SyntheticSpec { seed: 1, ..tiny() }).unwrap();
        assert_ne!(a[0].image, c[0].image);
    }

    #[test]
    fn background_is_nearly_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let p = background_patch(64, &mut rng);
            let n = 64.0 * 64.0;
            for c in 0..3 {
                let vals: Vec<f64> = p
                    .as_raw()
                    .iter()
                    .skip(c)
                    .step_by(3)
                    .map(|&v| v as f64 / 255.0)
                    .collect();
                let mean = vals.iter().sum::<f64>() / n;
                let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                assert!(sd < 2.0 / 255.0, "sd {sd}");
            }
        }
    }

    #[test]
    fn every_slide_has_both_cell_kinds() {
        for s in generate_synthetic(&tiny()).unwrap() {
            assert!(s.tissue.contains(&true) && s.tissue.contains(&false));
        }
    }
}
