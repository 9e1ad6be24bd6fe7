//! Per-class extreme-value models over centroid distances.
//!
//! For every seen class the Euclidean distances from its train instances to
//! the class centroid are computed, the `n` largest are kept as the tail and a
//! three-parameter Weibull is fitted to them: the location sits just below the
//! smallest tail value and shape/scale come from the two-parameter maximum
//! likelihood fit on the shifted tail.

use std::collections::BTreeMap;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::data::{class_centroid, Dataset};
use crate::error::{GzslError, Result};
use crate::math::{euclidean, l2_normalized};

pub const DEFAULT_TAIL_SIZE: usize = 20;

/// Relative offset of the location below the smallest tail distance.
const LOCATION_OFFSET: f64 = 1e-6;
const SHAPE_LO: f64 = 1e-3;
const SHAPE_HI: f64 = 1e3;
const SHAPE_TOL: f64 = 1e-9;
const MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullParams {
    pub location: f64,
    pub scale: f64,
    pub shape: f64,
}

impl WeibullParams {
    pub fn cdf(&self, d: f64) -> f64 {
        weibull_cdf(self.location, self.scale, self.shape, d)
    }
}

/// `1 - exp(-((d - location) / scale)^shape)` for `d > location`, else 0.
pub fn weibull_cdf(location: f64, scale: f64, shape: f64, d: f64) -> f64 {
    if d.is_nan() || d <= location {
        return 0.0;
    }
    -(-((d - location) / scale).powf(shape)).exp_m1()
}

/// Residual of the shape likelihood equation on strictly positive data:
///
/// `g(k) = Σ w^k ln w / Σ w^k - 1/k - mean(ln w)`
///
/// `g` is increasing in `k` and its root is the MLE shape.
pub fn shape_residual(shifted: &[f64], shape: f64) -> f64 {
    let max = shifted.iter().copied().fold(0.0, f64::max);
    let logs: Vec<f64> = shifted.iter().map(|w| (w / max).ln()).collect();
    residual_and_slope(&logs, shape).0
}

/// `logs` holds `ln(w / max w)`, so every power is at most 1.
fn residual_and_slope(logs: &[f64], k: f64) -> (f64, f64) {
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &l in logs {
        let p = (k * l).exp();
        s0 += p;
        s1 += p * l;
        s2 += p * l * l;
    }
    let mean_log = logs.iter().sum::<f64>() / logs.len() as f64;
    let ratio = s1 / s0;
    let g = ratio - 1.0 / k - mean_log;
    let slope = s2 / s0 - ratio * ratio + 1.0 / (k * k);
    (g, slope)
}

/// Fits a Weibull to the `tail_size` largest `distances`.
pub fn fit_weibull_tail(distances: &[f64], tail_size: usize) -> Result<WeibullParams> {
    if tail_size < 2 {
        return Err(GzslError::InvalidArgument(format!(
            "tail size must be >= 2, got {tail_size}"
        )));
    }
    if distances.len() < tail_size {
        return Err(GzslError::InvalidArgument(format!(
            "need {tail_size} distances for the tail, got {}",
            distances.len()
        )));
    }
    if let Some(d) = distances.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(GzslError::InvalidArgument(format!(
            "distances must be finite and non-negative, found {d}"
        )));
    }
    let mut sorted = distances.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let tail = &sorted[..tail_size];
    let (max, min) = (tail[0], tail[tail_size - 1]);
    if max == min {
        return Err(GzslError::Numerical(format!(
            "degenerate tail: all {tail_size} tail distances equal {max}"
        )));
    }
    if min == 0.0 {
        return Err(GzslError::Numerical(
            "degenerate tail: smallest tail distance is zero".into(),
        ));
    }

    let location = min * (1.0 - LOCATION_OFFSET);
    let shifted: Vec<f64> = tail.iter().map(|d| d - location).collect();
    let w_max = max - location;
    let logs: Vec<f64> = shifted.iter().map(|w| (w / w_max).ln()).collect();

    let shape = solve_shape(&logs)?;
    let mean_pow = logs.iter().map(|l| (shape * l).exp()).sum::<f64>() / logs.len() as f64;
    let scale = w_max * mean_pow.powf(1.0 / shape);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(GzslError::Numerical(format!(
            "fitted scale {scale} is invalid"
        )));
    }
    Ok(WeibullParams {
        location,
        scale,
        shape,
    })
}

/// Newton iteration on `g(k) = 0`, falling back to bisection whenever the
/// Newton step leaves the current bracket.
fn solve_shape(logs: &[f64]) -> Result<f64> {
    let (mut lo, mut hi) = (SHAPE_LO, SHAPE_HI);
    let (g_lo, _) = residual_and_slope(logs, lo);
    let (g_hi, _) = residual_and_slope(logs, hi);
    if !(g_lo < 0.0 && g_hi > 0.0) {
        return Err(GzslError::Numerical(format!(
            "shape root not bracketed: g({lo})={g_lo:.3e}, g({hi})={g_hi:.3e}"
        )));
    }
    let mut k = 1.0;
    for _ in 0..MAX_ITER {
        let (g, slope) = residual_and_slope(logs, k);
        if g == 0.0 {
            return Ok(k);
        }
        if g < 0.0 {
            lo = k;
        } else {
            hi = k;
        }
        let newton = k - g / slope;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - k).abs();
        k = next;
        if step < SHAPE_TOL * k.max(1.0) {
            return Ok(k);
        }
    }
    Err(GzslError::Numerical(format!(
        "shape solver did not converge in {MAX_ITER} iterations: bracket [{lo}, {hi}], k={k}"
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassEvtModel {
    pub class_id: u32,
    pub centroid: Vec<f64>,
    pub params: WeibullParams,
    pub tail_size: usize,
}

impl ClassEvtModel {
    pub fn cdf(&self, d: f64) -> f64 {
        self.params.cdf(d)
    }

    /// The distance lies beyond the class boundary: `P > alpha_out`.
    pub fn out_of_class(&self, d: f64, alpha_out: f64) -> bool {
        self.cdf(d) > alpha_out
    }

    /// The distance lies well inside the class: `P < alpha_in`.
    pub fn in_class(&self, d: f64, alpha_in: f64) -> bool {
        self.cdf(d) < alpha_in
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvtThresholds {
    pub alpha_out: f64,
    pub alpha_in: f64,
}

impl EvtThresholds {
    pub fn new(alpha_out: f64, alpha_in: f64) -> Result<Self> {
        let th = Self {
            alpha_out,
            alpha_in,
        };
        th.validate()?;
        Ok(th)
    }

    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.alpha_out) || !open(self.alpha_in) {
            return Err(GzslError::config(
                "0 < alpha < 1",
                format!("alpha_o={}, alpha_in={}", self.alpha_out, self.alpha_in),
            ));
        }
        if self.alpha_in > self.alpha_out {
            return Err(GzslError::config(
                "alpha_in <= alpha_o",
                format!("alpha_in={} > alpha_o={}", self.alpha_in, self.alpha_out),
            ));
        }
        Ok(())
    }
}

/// One model per seen class plus the feature transform they were fitted under.
#[derive(Debug, Clone, PartialEq)]
pub struct EvtModelSet {
    models: BTreeMap<u32, ClassEvtModel>,
    normalized: bool,
}

impl EvtModelSet {
    pub fn new(models: BTreeMap<u32, ClassEvtModel>, normalized: bool) -> Self {
        Self { models, normalized }
    }

    pub fn get(&self, class_id: u32) -> Option<&ClassEvtModel> {
        self.models.get(&class_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClassEvtModel> {
        self.models.values()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Whether features are L2-normalised before distances are taken.
    pub fn normalized(&self) -> bool {
        self.normalized
    }

    /// Distance from `x` to the model's centroid under this set's transform.
    pub fn distance<T: Copy + Into<f64>>(&self, model: &ClassEvtModel, x: &[T]) -> f64 {
        if self.normalized {
            euclidean(&l2_normalized(x), &model.centroid)
        } else {
            euclidean(x, &model.centroid)
        }
    }

    pub(crate) fn models_mut(&mut self) -> impl Iterator<Item = &mut ClassEvtModel> {
        self.models.values_mut()
    }
}

fn fit_class(
    ds: &Dataset,
    class_id: u32,
    tail_size: usize,
    normalize: bool,
) -> Result<ClassEvtModel> {
    let members: Vec<usize> = ds.train_indices_of(class_id).collect();
    if members.len() < 2 {
        return Err(GzslError::Numerical(format!(
            "class {class_id} has {} train instances; EVT needs at least 2",
            members.len()
        )));
    }
    let centroid = if normalize {
        let mut sum = vec![0.0; ds.dim()];
        for &i in &members {
            for (s, v) in sum.iter_mut().zip(l2_normalized(ds.feature(i))) {
                *s += v;
            }
        }
        sum.iter_mut().for_each(|s| *s /= members.len() as f64);
        sum
    } else {
        class_centroid(ds, class_id)?
    };
    let distances: Vec<f64> = members
        .iter()
        .map(|&i| {
            if normalize {
                euclidean(&l2_normalized(ds.feature(i)), &centroid)
            } else {
                euclidean(ds.feature(i), &centroid)
            }
        })
        .collect();
    let tail = tail_size.min(distances.len());
    let params = fit_weibull_tail(&distances, tail)
        .map_err(|e| GzslError::Numerical(format!("class {class_id}: {e}")))?;
    Ok(ClassEvtModel {
        class_id,
        centroid,
        params,
        tail_size: tail,
    })
}

/// Fits a model for every seen class. Classes with fewer than `tail_size`
/// train instances use all of their distances.
pub fn fit_all_classes(ds: &Dataset, tail_size: usize, normalize: bool) -> Result<EvtModelSet> {
    if tail_size < 2 {
        return Err(GzslError::config(
            "tail_size >= 2",
            format!("got {tail_size}"),
        ));
    }
    let seen = ds.seen_classes();
    #[cfg(feature = "parallel")]
    let fitted: Vec<Result<ClassEvtModel>> = seen
        .par_iter()
        .map(|&c| fit_class(ds, c, tail_size, normalize))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let fitted: Vec<Result<ClassEvtModel>> = seen
        .iter()
        .map(|&c| fit_class(ds, c, tail_size, normalize))
        .collect();
    let models = fitted
        .into_iter()
        .map(|m| m.map(|m| (m.class_id, m)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(EvtModelSet::new(models, normalize))
}
