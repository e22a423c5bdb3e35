//! Running moments, pairwise merging and small fitting helpers.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Welford accumulator for a real variable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. merge of two partial accumulators.
    pub fn merge(&self, o: &Moments) -> Moments {
        if self.n == 0 {
            return *o;
        }
        if o.n == 0 {
            return *self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        let mean = self.mean + d * o.n as f64 / n as f64;
        let m2 = self.m2 + o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64;
        Moments { n, mean, m2 }
    }

    /// Unbiased sample variance; NaN below two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            f64::NAN
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Real and imaginary parts tracked separately.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComplexMoments {
    pub re: Moments,
    pub im: Moments,
}

impl ComplexMoments {
    pub fn push(&mut self, z: Complex64) {
        self.re.push(z.re);
        self.im.push(z.im);
    }

    pub fn merge(&self, o: &ComplexMoments) -> ComplexMoments {
        ComplexMoments { re: self.re.merge(&o.re), im: self.im.merge(&o.im) }
    }

    pub fn mean(&self) -> Complex64 {
        Complex64::new(self.re.mean, self.im.mean)
    }

    /// Root-sum-square of the two standard errors.
    pub fn stderr(&self) -> f64 {
        self.re.stderr().hypot(self.im.stderr())
    }

    pub fn count(&self) -> u64 {
        self.re.n
    }
}

/// Merge a slice of accumulators as a balanced binary tree (independent of
/// how the work was scheduled).
pub fn pairwise<T: Copy>(parts: &[T], merge: impl Fn(&T, &T) -> T + Copy, empty: T) -> T {
    match parts.len() {
        0 => empty,
        1 => parts[0],
        n => {
            let (l, r) = parts.split_at(n / 2);
            merge(&pairwise(l, merge, empty), &pairwise(r, merge, empty))
        }
    }
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

const SUM_CHUNK: usize = 4096;

/// `sum_i f(i)` over `0..n`, in parallel over fixed chunks, so the rounding
/// does not depend on the thread count or on scheduling.
pub fn ordered_sum<T>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> T
where
    T: std::iter::Sum<T> + Send,
{
    use rayon::prelude::*;
    let parts: Vec<T> = (0..n.div_ceil(SUM_CHUNK))
        .into_par_iter()
        .map(|c| (c * SUM_CHUNK..((c + 1) * SUM_CHUNK).min(n)).map(&f).sum())
        .collect();
    parts.into_iter().sum()
}

/// Slope of log|y| against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    linear_fit(&lx, &ly).0
}

/// Jackknife standard error of a statistic computed from a sample.
pub fn jackknife<T: Clone>(data: &[T], stat: impl Fn(&[T]) -> f64) -> f64 {
    let n = data.len();
    if n < 2 {
        return f64::NAN;
    }
    let mut buf: Vec<T> = Vec::with_capacity(n - 1);
    let mut vals = Vec::with_capacity(n);
    for i in 0..n {
        buf.clear();
        buf.extend(data[..i].iter().cloned());
        buf.extend(data[i + 1..].iter().cloned());
        vals.push(stat(&buf));
    }
    let m = vals.iter().sum::<f64>() / n as f64;
    let ss: f64 = vals.iter().map(|v| (v - m) * (v - m)).sum();
    ((n as f64 - 1.0) / n as f64 * ss).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn merge_matches_sequential(xs in prop::collection::vec(-1e3f64..1e3, 2..60), cut in 0usize..60) {
            let cut = cut.min(xs.len());
            let mut all = Moments::default();
            xs.iter().for_each(|x| all.push(*x));
            let mut a = Moments::default();
            let mut b = Moments::default();
            xs[..cut].iter().for_each(|x| a.push(*x));
            xs[cut..].iter().for_each(|x| b.push(*x));
            let m = a.merge(&b);
            prop_assert_eq!(m.n, all.n);
            prop_assert!((m.mean - all.mean).abs() <= 1e-9 * (1.0 + all.mean.abs()));
            prop_assert!((m.m2 - all.m2).abs() <= 1e-7 * (1.0 + all.m2.abs()));
        }
    }

    #[test]
    fn jackknife_of_mean_is_stderr() {
        let d: Vec<f64> = (0..40).map(|i| ((i * 37) % 11) as f64).collect();
        let mut m = Moments::default();
        d.iter().for_each(|x| m.push(*x));
        let jk = jackknife(&d, |s| s.iter().sum::<f64>() / s.len() as f64);
        assert!((jk - m.stderr()).abs() < 1e-12);
    }

    #[test]
    fn slope_of_power_law() {
        let x: Vec<f64> = (1..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(-1.5)).collect();
        assert!((loglog_slope(&x, &y) + 1.5).abs() < 1e-12);
    }
}
