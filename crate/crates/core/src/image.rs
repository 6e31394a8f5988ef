use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// 8-bit interleaved RGB raster, row-major from the top-left.
#[derive(Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for RgbImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RgbImage({}x{})", self.width, self.height)
    }
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::shape(
                "RgbImage::from_raw",
                format!("{} bytes for {width}x{height}", width * height * 3),
                format!("{} bytes", data.len()),
            ));
        }
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        RgbImage {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn as_raw_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, px: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&px);
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<RgbImage> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::invalid(format!(
                "crop {width}x{height} at ({x0},{y0}) exceeds {}x{} image",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height * 3);
        for y in y0..y0 + height {
            let start = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[start..start + width * 3]);
        }
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    /// Area-average downscale by an integer factor per axis. Requires the
    /// target to divide the source dims.
    pub fn downscale_area(&self, width: usize, height: usize) -> Result<RgbImage> {
        if width == 0
            || height == 0
            || !self.width.is_multiple_of(width)
            || !self.height.is_multiple_of(height)
        {
            return Err(Error::invalid(format!(
                "cannot area-downscale {}x{} to {width}x{height}",
                self.width, self.height
            )));
        }
        let (fx, fy) = (self.width / width, self.height / height);
        if fx == 1 && fy == 1 {
            return Ok(self.clone());
        }
        let area = (fx * fy) as u32;
        Ok(RgbImage::from_fn(width, height, |x, y| {
            let mut acc = [0u32; 3];
            for sy in y * fy..(y + 1) * fy {
                for sx in x * fx..(x + 1) * fx {
                    let p = self.pixel(sx, sy);
                    for c in 0..3 {
                        acc[c] += p[c] as u32;
                    }
                }
            }
            acc.map(|s| ((s + area / 2) / area) as u8)
        }))
    }

    /// Mean over channels of the per-channel pixel standard deviation, in
    /// 8-bit units.
    pub fn mean_channel_std(&self) -> f64 {
        let n = (self.width * self.height) as f64;
        if n == 0.0 {
            return 0.0;
        }
        let mut total = 0.0;
        for c in 0..3 {
            let vals = self.data.iter().skip(c).step_by(3).map(|&v| v as f64);
            let mean = vals.clone().sum::<f64>() / n;
            let var = vals.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            total += var.sqrt();
        }
        total / 3.0
    }

    /// `(1, h, w, 3)` tensor with values scaled to `[0, 1]`.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let scale = T::one() / T::of(255.0);
        Tensor::from_vec(
            &[1, self.height, self.width, 3],
            self.data.iter().map(|&v| T::of(v as f64) * scale).collect(),
        )
        .expect("image buffer length matches its dims")
    }
}

/// Stacks equally-sized images into one `(n, h, w, 3)` batch.
pub fn images_to_batch<T: Scalar>(images: &[&RgbImage]) -> Result<Tensor<T>> {
    let first = images
        .first()
        .ok_or_else(|| Error::invalid("empty image batch"))?;
    let (w, h) = (first.width(), first.height());
    let scale = T::one() / T::of(255.0);
    let mut data = Vec::with_capacity(images.len() * w * h * 3);
    for img in images {
        if img.width() != w || img.height() != h {
            return Err(Error::shape(
                "images_to_batch",
                format!("{w}x{h}"),
                format!("{}x{}", img.width(), img.height()),
            ));
        }
        data.extend(img.as_raw().iter().map(|&v| T::of(v as f64) * scale));
    }
    Tensor::from_vec(&[images.len(), h, w, 3], data)
}
