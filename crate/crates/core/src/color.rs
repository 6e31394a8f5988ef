//! Percentile-driven color balancing.
//!
//! The transform is `out = clamp(α · A · diag(wb) · (in − black))^γ` on
//! `[0, 1]`-normalized pixels. [`derive_params`] fills in `black` and the
//! gains from symmetric histogram-tail clipping at the given percentage.

use crate::error::{Error, Result};
use crate::image::RgbImage;

pub const TRAIN_PERCENTAGES: [f64; 4] = [0.001, 0.01, 0.1, 1.0];
pub const TEST_PERCENTAGES: [f64; 4] = [0.5, 1.0, 1.5, 2.0];

const IDENTITY3: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Debug, Clone, PartialEq)]
pub struct ColorBalanceParams {
    /// Clip fraction, in percent, applied to each histogram tail.
    pub percentage: f64,
    /// Exposure gain shared by all channels.
    pub alpha: f64,
    /// Per-channel black level subtracted before the gains.
    pub black_point: [f64; 3],
    pub color_matrix: [[f64; 3]; 3],
    pub wb_gains: [f64; 3],
    pub gamma: f64,
}

impl Default for ColorBalanceParams {
    fn default() -> Self {
        Self::identity()
    }
}

impl ColorBalanceParams {
    pub fn identity() -> Self {
        ColorBalanceParams {
            percentage: 0.0,
            alpha: 1.0,
            black_point: [0.0; 3],
            color_matrix: IDENTITY3,
            wb_gains: [1.0; 3],
            gamma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.black_point.iter().all(|v| v.is_finite())
            && self.color_matrix.iter().flatten().all(|v| v.is_finite());
        if !(self.alpha > 0.0)
            || !(self.gamma > 0.0)
            || !self.wb_gains.iter().all(|&g| g > 0.0 && g.is_finite())
            || !finite
        {
            return Err(Error::invalid(format!(
                "invalid color balance params {self:?}"
            )));
        }
        Ok(())
    }

    /// Composite per-channel linear gain `α · wb_c`.
    pub fn channel_gain(&self, c: usize) -> f64 {
        self.alpha * self.wb_gains[c]
    }
}

/// Nearest-rank quantile on a 256-bin histogram: the smallest value whose
/// cumulative count reaches `ceil(p/100 · n)` (rank clamped to `[1, n]`).
pub fn histogram_quantile(hist: &[u64; 256], percentile: f64) -> u8 {
    let n: u64 = hist.iter().sum();
    let rank = ((percentile * n as f64) / 100.0)
        .ceil()
        .clamp(1.0, n as f64) as u64;
    let mut cum = 0;
    for (v, &count) in hist.iter().enumerate() {
        cum += count;
        if cum >= rank {
            return v as u8;
        }
    }
    255
}

fn channel_histograms(image: &RgbImage) -> [[u64; 256]; 3] {
    let mut hist = [[0u64; 256]; 3];
    for px in image.as_raw().chunks_exact(3) {
        for c in 0..3 {
            hist[c][px[c] as usize] += 1;
        }
    }
    hist
}

/// Stretch parameters mapping each channel's `[q_lo, q_hi]` onto `[0, 1]`,
/// where the quantiles sit `percentage`% in from either tail.
///
/// Percentage 0 means "no balancing" and yields the identity. A channel whose
/// quantiles coincide keeps composite gain 1 and no offset.
pub fn derive_params(image: &RgbImage, percentage: f64) -> Result<ColorBalanceParams> {
    if !(0.0..=50.0).contains(&percentage) {
        return Err(Error::invalid(format!(
            "color balancing percentage must be in [0, 50], got {percentage}"
        )));
    }
    if image.is_empty() {
        return Err(Error::invalid("color balancing an empty image"));
    }
    if percentage == 0.0 {
        return Ok(ColorBalanceParams::identity());
    }

    let hist = channel_histograms(image);
    let mut composite = [None; 3];
    let mut black_point = [0.0; 3];
    for c in 0..3 {
        let lo = histogram_quantile(&hist[c], percentage);
        let hi = histogram_quantile(&hist[c], 100.0 - percentage);
        if hi > lo {
            composite[c] = Some(255.0 / f64::from(hi - lo));
            black_point[c] = f64::from(lo) / 255.0;
        }
    }

    let alpha = composite
        .iter()
        .flatten()
        .copied()
        .fold(None, |acc: Option<f64>, g| {
            Some(acc.map_or(g, |a| a.min(g)))
        })
        .unwrap_or(1.0);
    let wb_gains = composite.map(|g| g.unwrap_or(1.0) / alpha);

    Ok(ColorBalanceParams {
        percentage,
        alpha,
        black_point,
        color_matrix: IDENTITY3,
        wb_gains,
        gamma: 1.0,
    })
}

/// Applies the transform and re-quantizes with round-half-up.
pub fn apply_balance(image: &RgbImage, params: &ColorBalanceParams) -> Result<RgbImage> {
    params.validate()?;
    let a = &params.color_matrix;
    let identity_gamma = params.gamma == 1.0;
    let mut out = image.clone();
    for px in out.as_raw_mut().chunks_exact_mut(3) {
        let mut w = [0.0; 3];
        for c in 0..3 {
            w[c] = (f64::from(px[c]) / 255.0 - params.black_point[c]) * params.wb_gains[c];
        }
        for (r, row) in a.iter().enumerate() {
            let mixed = row[0] * w[0] + row[1] * w[1] + row[2] * w[2];
            let mut v = (params.alpha * mixed).clamp(0.0, 1.0);
            if !identity_gamma {
                v = v.powf(params.gamma);
            }
            px[r] = (v * 255.0 + 0.5).floor() as u8;
        }
    }
    Ok(out)
}

/// Colour matrix and gamma laid over every derived stretch. The default is
/// the identity, which leaves [`derive_params`] output untouched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorShaping {
    pub color_matrix: [[f64; 3]; 3],
    pub gamma: f64,
}

impl Default for ColorShaping {
    fn default() -> Self {
        ColorShaping {
            color_matrix: IDENTITY3,
            gamma: 1.0,
        }
    }
}

impl ColorShaping {
    pub fn is_identity(&self) -> bool {
        *self == ColorShaping::default()
    }

    /// Row-major matrix from nine values.
    pub fn matrix_from_slice(values: &[f64]) -> Result<[[f64; 3]; 3]> {
        if values.len() != 9 {
            return Err(Error::invalid(format!(
                "color matrix needs 9 values, got {}",
                values.len()
            )));
        }
        Ok(std::array::from_fn(|r| {
            std::array::from_fn(|c| values[r * 3 + c])
        }))
    }
}

/// One balanced copy per percentage, in input order.
pub fn balance_sweep(image: &RgbImage, percentages: &[f64]) -> Result<Vec<RgbImage>> {
    balance_sweep_shaped(image, percentages, &ColorShaping::default())
}

/// [`balance_sweep`] with `shaping` replacing the identity matrix and gamma.
pub fn balance_sweep_shaped(
    image: &RgbImage,
    percentages: &[f64],
    shaping: &ColorShaping,
) -> Result<Vec<RgbImage>> {
    if percentages.is_empty() {
        return Err(Error::invalid(
            "balance sweep needs at least one percentage",
        ));
    }
    percentages
        .iter()
        .map(|&p| {
            let mut params = derive_params(image, p)?;
            params.color_matrix = shaping.color_matrix;
            params.gamma = shaping.gamma;
            apply_balance(image, &params)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image() -> RgbImage {
        RgbImage::from_fn(16, 16, |x, y| {
            [
                (40 + x * 9) as u8,
                (60 + y * 7) as u8,
                (30 + (x + y) * 4) as u8,
            ]
        })
    }

    #[test]
    fn zero_percentage_is_identity() {
        let img = gradient_image();
        let p = derive_params(&img, 0.0).unwrap();
        assert_eq!(p, ColorBalanceParams::identity());
        assert_eq!(apply_balance(&img, &p).unwrap(), img);
    }

    #[test]
    fn two_pixel_stretch() {
        // 0.2 and 0.8 in 8-bit units.
        let img = RgbImage::from_raw(2, 1, vec![51, 51, 51, 204, 204, 204]).unwrap();
        let p = derive_params(&img, 0.001).unwrap();
        for c in 0..3 {
            assert!((p.black_point[c] - 0.2).abs() < 1e-12);
            assert!((p.channel_gain(c) - 1.0 / 0.6).abs() < 1e-12);
        }
        let out = apply_balance(&img, &p).unwrap();
        assert_eq!(out.as_raw(), &[0, 0, 0, 255, 255, 255]);
    }

    #[test]
    fn fifty_percent_hits_degenerate_rule() {
        let img = gradient_image();
        let p = derive_params(&img, 50.0).unwrap();
        for c in 0..3 {
            assert_eq!(p.channel_gain(c), 1.0);
            assert_eq!(p.black_point[c], 0.0);
        }
    }

    #[test]
    fn out_of_range_percentage_is_error() {
        let img = gradient_image();
        assert!(derive_params(&img, -0.1).is_err());
        assert!(derive_params(&img, 50.5).is_err());
        assert!(derive_params(&img, f64::NAN).is_err());
    }

    #[test]
    fn pure_exposure_scaling() {
        let img = RgbImage::from_raw(1, 1, vec![64, 64, 64]).unwrap();
        let p = ColorBalanceParams {
            alpha: 2.0,
            ..ColorBalanceParams::identity()
        };
        // 64/255·2 = 0.50196 → 128
        assert_eq!(apply_balance(&img, &p).unwrap().as_raw(), &[128, 128, 128]);
    }

    #[test]
    fn gains_positive_for_nonconstant_image() {
        let p = derive_params(&gradient_image(), 1.0).unwrap();
        assert!(p.alpha > 0.0 && p.alpha.is_finite());
        assert!(p.wb_gains.iter().all(|&g| g > 0.0 && g.is_finite()));
    }

    #[test]
    fn nearest_rank_quantile() {
        let mut hist = [0u64; 256];
        hist[10] = 1;
        hist[20] = 98;
        hist[30] = 1;
        assert_eq!(histogram_quantile(&hist, 1.0), 10);
        assert_eq!(histogram_quantile(&hist, 1.5), 20);
        assert_eq!(histogram_quantile(&hist, 99.0), 20);
        assert_eq!(histogram_quantile(&hist, 99.5), 30);
    }

    #[test]
    fn empty_sweep_is_error() {
        assert!(balance_sweep(&gradient_image(), &[]).is_err());
        assert_eq!(
            balance_sweep(&gradient_image(), &[0.0]).unwrap(),
            vec![gradient_image()]
        );
    }

    #[test]
    fn shaping_mixes_channels_then_applies_gamma() {
        let img = RgbImage::from_raw(1, 1, vec![64, 0, 255]).unwrap();
        let shaping = ColorShaping {
            color_matrix: ColorShaping::matrix_from_slice(&[
                0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0,
            ])
            .unwrap(),
            gamma: 0.5,
        };
        let out = balance_sweep_shaped(&img, &[0.0], &shaping).unwrap();
        // sqrt(64 / 255) * 255 = sqrt(64 * 255) ≈ 127.75
        assert_eq!(out[0].as_raw(), &[255, 0, 128]);
        assert!(ColorShaping::matrix_from_slice(&[1.0; 8]).is_err());
        assert!(ColorShaping::default().is_identity());
    }
}
