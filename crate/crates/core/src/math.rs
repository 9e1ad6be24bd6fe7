use ndarray::{Array2, ArrayView1};

use crate::data::Dataset;

/// Softmax of `logits / temperature` with max-logit subtraction.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits
        .iter()
        .map(|&z| ((z - max) / temperature).exp())
        .collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// `log(sum(exp(z)))` computed stably.
pub fn log_sum_exp(z: ArrayView1<'_, f64>) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

pub fn squared_distance<A, B>(a: &[A], b: &[B]) -> f64
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.into() - y.into();
            d * d
        })
        .sum()
}

pub fn euclidean<A, B>(a: &[A], b: &[B]) -> f64
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    squared_distance(a, b).sqrt()
}

pub fn to_f64<T: Copy + Into<f64>>(x: &[T]) -> Vec<f64> {
    x.iter().map(|&v| v.into()).collect()
}

/// L2-normalised copy; a zero vector is returned unchanged.
pub fn l2_normalized<T: Copy + Into<f64>>(x: &[T]) -> Vec<f64> {
    let v = to_f64(x);
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.into_iter().map(|a| a / norm).collect()
    } else {
        v
    }
}

/// Feature rows of `idx` as an `len × d` matrix.
pub fn gather_rows(ds: &Dataset, idx: &[u32]) -> Array2<f64> {
    let d = ds.dim();
    let mut out = Array2::zeros((idx.len(), d));
    for (mut row, &i) in out.rows_mut().into_iter().zip(idx) {
        for (o, &v) in row.iter_mut().zip(ds.feature(i as usize)) {
            *o = v as f64;
        }
    }
    out
}

/// Rounds through `f32`, the precision of every on-disk parameter.
pub fn snap_f32(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v as f32 as f64);
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    #[test]
    fn softmax_is_shift_invariant_and_normalised() {
        let p = softmax(&[1.0, 2.0, 3.0], 1.0);
        let q = softmax(&[1001.0, 1002.0, 1003.0], 1.0);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lse_matches_naive() {
        let z = arr1(&[0.1, -2.0, 3.5]);
        let naive = z.iter().map(|v: &f64| v.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(z.view()) - naive).abs() < 1e-12);
    }

    #[test]
    fn normalise_zero_vector() {
        assert_eq!(l2_normalized(&[0.0f32, 0.0]), vec![0.0, 0.0]);
        let v = l2_normalized(&[3.0f64, 4.0]);
        assert!((v[0] - 0.6).abs() < 1e-12 && (v[1] - 0.8).abs() < 1e-12);
    }
}
