//! Depth evaluation metrics, relative-error distributions and the latent
//! regularization / scale-invariant losses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::{DepthMap, Sample};
use crate::segmentation::Mask;

pub const DEFAULT_MIN_DEPTH: f64 = 1e-3;
pub const DEFAULT_MAX_DEPTH: f64 = 80.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("no pixels left to evaluate")]
    EmptyEvaluation,
    #[error("value out of domain: {0}")]
    Domain(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("crop for {width}x{height} is empty")]
    DegenerateCrop { width: usize, height: usize },
    #[error("invalid evaluation bounds: min {min} must be below max {max}")]
    Bounds { min: f64, max: f64 },
}

/// Half-open pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl CropRect {
    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.top..self.bottom).contains(&y) && (self.left..self.right).contains(&x)
    }
}

/// The conventional KITTI evaluation crop. Bounds are truncated toward
/// zero.
pub fn garg_crop(width: usize, height: usize) -> Result<CropRect, MetricsError> {
    let (w, h) = (width as f64, height as f64);
    let crop = CropRect {
        top: (0.408_108_11 * h) as usize,
        bottom: (0.991_891_89 * h) as usize,
        left: (0.035_947_71 * w) as usize,
        right: (0.964_052_29 * w) as usize,
    };
    if crop.top >= crop.bottom || crop.left >= crop.right {
        return Err(MetricsError::DegenerateCrop { width, height });
    }
    Ok(crop)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub min_depth: f64,
    pub max_depth: f64,
    pub crop: Option<CropRect>,
    /// Rescale predictions by `median(gt) / median(pred)` before scoring.
    /// Diagnostic only.
    pub median_scaling: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            min_depth: DEFAULT_MIN_DEPTH,
            max_depth: DEFAULT_MAX_DEPTH,
            crop: None,
            median_scaling: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    /// Meters.
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_pixels: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    /// Fraction of pixels with `|pred - gt| / gt <= 0.05`.
    pub pct_within_5: f64,
    /// Fraction of pixels with `|pred - gt| / gt <= 0.10`.
    pub pct_within_10: f64,
    pub n_pixels: usize,
}

fn check_dims(a: &DepthMap, b: &DepthMap, mask: Option<&Mask>) -> Result<(), MetricsError> {
    if a.dims() != b.dims() {
        return Err(MetricsError::DimensionMismatch {
            expected: b.dims(),
            actual: a.dims(),
        });
    }
    if let Some(m) = mask {
        if m.dims() != b.dims() {
            return Err(MetricsError::DimensionMismatch {
                expected: b.dims(),
                actual: m.dims(),
            });
        }
    }
    Ok(())
}

/// `(pred, gt)` pairs valid in both maps and inside the mask, in raster
/// order.
fn joint_pairs(pred: &DepthMap, gt: &DepthMap, mask: Option<&Mask>) -> Vec<(usize, f64, f64)> {
    pred.samples()
        .iter()
        .zip(gt.samples())
        .enumerate()
        .filter(|(i, _)| mask.is_none_or(|m| m.bits()[*i]))
        .filter_map(|(i, (p, g))| Some((i, p.depth()?, g.depth()?)))
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Standard depth-evaluation metrics over pixels valid in both maps, inside
/// `mask` and the optional crop, with `gt` in `[min_depth, max_depth]`.
pub fn depth_metrics(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: Option<&Mask>,
    opts: &EvalOptions,
) -> Result<MetricsReport, MetricsError> {
    check_dims(pred, gt, mask)?;
    if !(opts.min_depth < opts.max_depth) {
        return Err(MetricsError::Bounds {
            min: opts.min_depth,
            max: opts.max_depth,
        });
    }
    let w = gt.width();
    let mut pairs: Vec<(f64, f64)> = joint_pairs(pred, gt, mask)
        .into_iter()
        .filter(|&(i, _, g)| {
            g >= opts.min_depth
                && g <= opts.max_depth
                && opts.crop.is_none_or(|c| c.contains(i % w, i / w))
        })
        .map(|(_, p, g)| (p, g))
        .collect();
    if pairs.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    if opts.median_scaling {
        let ratio = median(pairs.iter().map(|p| p.1).collect())
            / median(pairs.iter().map(|p| p.0).collect());
        for p in &mut pairs {
            p.0 *= ratio;
        }
    }
    let n = pairs.len() as f64;
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let mut within = [0usize; 3];
    for &(p, g) in &pairs {
        let diff = p - g;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        sq += diff * diff;
        let dl = p.ln() - g.ln();
        sq_log += dl * dl;
        let ratio = (p / g).max(g / p);
        for (k, slot) in within.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                *slot += 1;
            }
        }
    }
    Ok(MetricsReport {
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        rmse: (sq / n).sqrt(),
        rmse_log: (sq_log / n).sqrt(),
        delta1: within[0] as f64 / n,
        delta2: within[1] as f64 / n,
        delta3: within[2] as f64 / n,
        n_pixels: pairs.len(),
    })
}

/// Share of jointly valid, masked pixels within 5% and 10% relative error.
pub fn error_distribution(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: Option<&Mask>,
) -> Result<ErrorDistribution, MetricsError> {
    check_dims(pred, gt, mask)?;
    let pairs = joint_pairs(pred, gt, mask);
    if pairs.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    let (mut w5, mut w10) = (0usize, 0usize);
    for &(_, p, g) in &pairs {
        let rel = (p - g).abs() / g;
        if rel <= 0.05 {
            w5 += 1;
        }
        if rel <= 0.10 {
            w10 += 1;
        }
    }
    let n = pairs.len() as f64;
    Ok(ErrorDistribution {
        pct_within_5: w5 as f64 / n,
        pct_within_10: w10 as f64 / n,
        n_pixels: pairs.len(),
    })
}

/// Scale-invariant log loss:
/// `(1/n) sum(ln g - ln p)^2 - (1/n^2) (sum(ln g - ln p))^2`.
pub fn silog_loss(pred: &[f64], gt: &[f64]) -> Result<f64, MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), gt.len()));
    }
    if pred.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    if let Some(v) = pred.iter().chain(gt).find(|v| !(**v > 0.0)) {
        return Err(MetricsError::Domain(format!("depth {v} is not positive")));
    }
    let n = pred.len() as f64;
    let (mut s, mut s2) = (0.0, 0.0);
    for (p, g) in pred.iter().zip(gt) {
        let d = g.ln() - p.ln();
        s += d;
        s2 += d * d;
    }
    // Guard against tiny negative values from cancellation.
    Ok((s2 / n - (s * s) / (n * n)).max(0.0))
}

/// Mean and standard deviation of a diagonal Gaussian latent.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentParams {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl LatentParams {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self, MetricsError> {
        if mu.len() != sigma.len() {
            return Err(MetricsError::LengthMismatch(mu.len(), sigma.len()));
        }
        if let Some(s) = sigma.iter().find(|s| !(**s > 0.0)) {
            return Err(MetricsError::Domain(format!("sigma {s} is not positive")));
        }
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlReduction {
    #[default]
    Mean,
    Sum,
}

/// KL divergence from `N(mu, sigma^2)` to `N(0, 1)` per dimension,
/// `-ln sigma + (sigma^2 + mu^2) / 2 - 1/2`, reduced over dimensions.
pub fn kl_loss(params: &LatentParams, reduction: KlReduction) -> Result<f64, MetricsError> {
    if params.dim() == 0 {
        return Err(MetricsError::EmptyEvaluation);
    }
    let total: f64 = params
        .mu
        .iter()
        .zip(&params.sigma)
        .map(|(&m, &s)| -s.ln() + 0.5 * (s * s + m * m) - 0.5)
        .sum();
    Ok(match reduction {
        KlReduction::Mean => total / params.dim() as f64,
        KlReduction::Sum => total,
    })
}

/// `z = mu + eps * sigma`.
pub fn reparameterize(params: &LatentParams, eps: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if eps.len() != params.dim() {
        return Err(MetricsError::LengthMismatch(eps.len(), params.dim()));
    }
    Ok(params
        .mu
        .iter()
        .zip(&params.sigma)
        .zip(eps)
        .map(|((m, s), e)| m + e * s)
        .collect())
}

/// Resizes `pred` to `width x height` with bilinear interpolation over valid
/// samples only (weights renormalized over the valid corners). A target
/// pixel whose corners are all sky is sky; one with no valid corner
/// otherwise is invalid.
pub fn upsample_bilinear(pred: &DepthMap, width: usize, height: usize) -> DepthMap {
    if pred.dims() == (width, height) {
        return pred.clone();
    }
    let (sw, sh) = pred.dims();
    let sx = sw as f64 / width as f64;
    let sy = sh as f64 / height as f64;
    let mut out = DepthMap::invalid(width, height);
    for y in 0..height {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let ty = fy - y0 as f64;
        for x in 0..width {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let tx = fx - x0 as f64;
            let corners = [
                (x0, y0, (1.0 - tx) * (1.0 - ty)),
                (x1, y0, tx * (1.0 - ty)),
                (x0, y1, (1.0 - tx) * ty),
                (x1, y1, tx * ty),
            ];
            let (mut num, mut den) = (0.0, 0.0);
            let mut all_sky = true;
            for (cx, cy, wgt) in corners {
                match pred.get(cx, cy) {
                    Sample::Depth(d) if wgt > 0.0 => {
                        num += wgt * d;
                        den += wgt;
                        all_sky = false;
                    }
                    Sample::Sky => {}
                    _ if wgt > 0.0 => all_sky = false,
                    _ => {}
                }
            }
            if den > 0.0 {
                out.set(x, y, Sample::Depth(num / den));
            } else if all_sky {
                out.set(x, y, Sample::Sky);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(w: usize, h: usize, vals: &[f64]) -> DepthMap {
        DepthMap::from_values(w, h, vals).unwrap()
    }

    #[test]
    fn identical_maps_score_perfectly() {
        let g = map(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let r = depth_metrics(&g, &g, None, &EvalOptions::default()).unwrap();
        assert_eq!((r.abs_rel, r.sq_rel, r.rmse, r.rmse_log), (0.0, 0.0, 0.0, 0.0));
        assert_eq!((r.delta1, r.delta2, r.delta3), (1.0, 1.0, 1.0));
        assert_eq!(r.n_pixels, 6);
        let d = error_distribution(&g, &g, None).unwrap();
        assert_eq!((d.pct_within_5, d.pct_within_10), (1.0, 1.0));
    }

    #[test]
    fn doubled_prediction() {
        let g = map(2, 2, &[1.0, 2.0, 5.0, 10.0]);
        let p = map(2, 2, &[2.0, 4.0, 10.0, 20.0]);
        let r = depth_metrics(&p, &g, None, &EvalOptions::default()).unwrap();
        assert!((r.abs_rel - 1.0).abs() < 1e-12);
        assert_eq!((r.delta1, r.delta2, r.delta3), (0.0, 0.0, 0.0));
        assert!((r.rmse_log - 2f64.ln()).abs() < 1e-12);
        // median scaling recovers the ground truth exactly
        let scaled = depth_metrics(&p, &g, None, &EvalOptions { median_scaling: true, ..Default::default() }).unwrap();
        assert!(scaled.abs_rel < 1e-12);
    }

    #[test]
    fn error_distribution_examples() {
        let g = map(2, 2, &[10.0, 20.0, 30.0, 40.0]);
        let p = map(2, 2, &[10.7, 21.4, 32.1, 42.8]);
        let d = error_distribution(&p, &g, None).unwrap();
        assert_eq!((d.pct_within_5, d.pct_within_10), (0.0, 1.0));
        let half = map(2, 2, &[10.0, 24.0, 30.0, 48.0]);
        let d = error_distribution(&half, &g, None).unwrap();
        assert_eq!((d.pct_within_5, d.pct_within_10), (0.5, 0.5));
    }

    #[test]
    fn empty_and_mismatch_errors() {
        let g = map(2, 1, &[1.0, 2.0]);
        let none = DepthMap::invalid(2, 1);
        assert_eq!(depth_metrics(&none, &g, None, &EvalOptions::default()), Err(MetricsError::EmptyEvaluation));
        assert_eq!(error_distribution(&none, &g, None), Err(MetricsError::EmptyEvaluation));
        let mask = Mask::filled(2, 1, false);
        assert_eq!(error_distribution(&g, &g, Some(&mask)), Err(MetricsError::EmptyEvaluation));
        assert!(matches!(
            depth_metrics(&map(1, 1, &[1.0]), &g, None, &EvalOptions::default()),
            Err(MetricsError::DimensionMismatch { .. })
        ));
        let bad = EvalOptions { min_depth: 5.0, max_depth: 5.0, ..Default::default() };
        assert!(matches!(depth_metrics(&g, &g, None, &bad), Err(MetricsError::Bounds { .. })));
        // gt above the cap is ignored
        let far = map(2, 1, &[100.0, 200.0]);
        assert_eq!(depth_metrics(&far, &far, None, &EvalOptions::default()), Err(MetricsError::EmptyEvaluation));
    }

    #[test]
    fn garg_crop_examples() {
        assert_eq!(
            garg_crop(1242, 375).unwrap(),
            CropRect { top: 153, bottom: 371, left: 44, right: 1197 }
        );
        assert_eq!(garg_crop(100, 100).unwrap(), CropRect { top: 40, bottom: 99, left: 3, right: 96 });
        assert!(matches!(garg_crop(1, 1), Err(MetricsError::DegenerateCrop { .. })));
        for (w, h) in [(3, 3), (17, 9), (640, 192), (2000, 40)] {
            let c = garg_crop(w, h).unwrap();
            assert!(c.top < c.bottom && c.bottom < h && c.left < c.right && c.right < w);
        }
        let c = garg_crop(640, 192).unwrap();
        assert!(c.top > 0 && c.left > 0);
    }

    #[test]
    fn loss_spot_values() {
        assert_eq!(silog_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let v = silog_loss(&[1.0, std::f64::consts::E], &[1.0, 1.0]).unwrap();
        assert!((v - 0.25).abs() < 1e-12);
        assert!(matches!(silog_loss(&[0.0], &[1.0]), Err(MetricsError::Domain(_))));
        assert!(silog_loss(&[], &[]).is_err());

        let kl = |m: f64, s: f64| kl_loss(&LatentParams::new(vec![m], vec![s]).unwrap(), KlReduction::Mean).unwrap();
        assert_eq!(kl(0.0, 1.0), 0.0);
        assert_eq!(kl(1.0, 1.0), 0.5);
        assert!((kl(0.0, 2.0) - (-(2f64.ln()) + 1.5)).abs() < 1e-12);
        let two = LatentParams::new(vec![1.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(kl_loss(&two, KlReduction::Mean).unwrap(), 0.25);
        assert_eq!(kl_loss(&two, KlReduction::Sum).unwrap(), 0.5);
        assert!(LatentParams::new(vec![0.0], vec![0.0]).is_err());

        let p = LatentParams::new(vec![1.0, 3.0], vec![2.0, 0.5]).unwrap();
        assert_eq!(reparameterize(&p, &[0.0, 0.0]).unwrap(), vec![1.0, 3.0]);
        assert_eq!(reparameterize(&p, &[0.5, 2.0]).unwrap(), vec![2.0, 4.0]);
        assert!(reparameterize(&p, &[0.5]).is_err());
        let unit = LatentParams::new(vec![0.0; 3], vec![1.0; 3]).unwrap();
        assert_eq!(reparameterize(&unit, &[0.1, -2.0, 7.0]).unwrap(), vec![0.1, -2.0, 7.0]);
    }

    #[test]
    fn upsample_keeps_constant_and_sky() {
        let m = DepthMap::from_samples(2, 2, vec![Sample::Sky, Sample::Sky, Sample::Depth(4.0), Sample::Depth(4.0)]).unwrap();
        let up = upsample_bilinear(&m, 6, 6);
        assert_eq!(up.dims(), (6, 6));
        assert!(up.get(0, 0).is_sky());
        assert_eq!(up.depth(3, 5), Some(4.0));
        assert_eq!(up.depth(2, 3), Some(4.0));
    }
}
