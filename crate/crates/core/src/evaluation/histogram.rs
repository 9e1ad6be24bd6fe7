use std::fmt::Write as _;

use crate::error::{GzslError, Result};

/// Equal-width bins over `[lo, hi]`; values equal to `hi` land in the last
/// bin and values outside the range are clamped into the end bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins == 0 {
            return Err(GzslError::InvalidArgument(
                "histogram needs at least one bin".into(),
            ));
        }
        if !(hi > lo && lo.is_finite() && hi.is_finite()) {
            return Err(GzslError::InvalidArgument(format!(
                "bad histogram range [{lo}, {hi}]"
            )));
        }
        Ok(Self {
            lo,
            hi,
            counts: vec![0; bins],
        })
    }

    pub fn from_values(
        values: impl IntoIterator<Item = f64>,
        bins: usize,
        lo: f64,
        hi: f64,
    ) -> Result<Self> {
        let mut h = Self::new(bins, lo, hi)?;
        for v in values {
            h.add(v);
        }
        Ok(h)
    }

    pub fn add(&mut self, v: f64) {
        let bins = self.counts.len();
        let pos = (v - self.lo) / (self.hi - self.lo) * bins as f64;
        let idx = if pos.is_nan() {
            0
        } else {
            (pos.max(0.0) as usize).min(bins - 1)
        };
        self.counts[idx] += 1;
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn edges(&self, i: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.bins() as f64;
        (self.lo + w * i as f64, self.lo + w * (i + 1) as f64)
    }
}

/// Renders histograms sharing one binning as CSV columns.
pub fn histograms_csv(columns: &[(&str, &Histogram)]) -> String {
    let mut out = String::from("bin_lo,bin_hi");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let Some((_, first)) = columns.first() else {
        return out;
    };
    for i in 0..first.bins() {
        let (lo, hi) = first.edges(i);
        let _ = write!(out, "{lo:.6},{hi:.6}");
        for (_, h) in columns {
            let _ = write!(out, ",{}", h.counts[i]);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_sum_and_edges() {
        let vals = [0.0, 0.1, 0.5, 0.99, 1.0, 1.0];
        let h = Histogram::from_values(vals, 4, 0.0, 1.0).unwrap();
        assert_eq!(h.counts, vec![2, 0, 1, 3]);
        assert_eq!(h.total(), vals.len());
        let doubled = Histogram::from_values(vals, 8, 0.0, 1.0).unwrap();
        assert_eq!(doubled.total(), h.total());
        assert_eq!(h.edges(1), (0.25, 0.5));
    }

    #[test]
    fn out_of_range_is_clamped() {
        let h = Histogram::from_values([-1.0, 2.0], 2, 0.0, 1.0).unwrap();
        assert_eq!(h.counts, vec![1, 1]);
    }

    #[test]
    fn csv_layout() {
        let a = Histogram::from_values([0.1, 0.9], 2, 0.0, 1.0).unwrap();
        let b = Histogram::from_values([0.2], 2, 0.0, 1.0).unwrap();
        let csv = histograms_csv(&[("seen", &a), ("unseen", &b)]);
        assert_eq!(
            csv,
            "bin_lo,bin_hi,seen,unseen\n0.000000,0.500000,1,1\n0.500000,1.000000,1,0\n"
        );
    }

    #[test]
    fn rejects_bad_setup() {
        assert!(Histogram::new(0, 0.0, 1.0).is_err());
        assert!(Histogram::new(3, 1.0, 1.0).is_err());
    }
}
