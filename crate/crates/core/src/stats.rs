//! Running sums for Monte Carlo means, combinable in a fixed order.

use libm::sqrt;

/// Two-sided 99% standard normal quantile, `Φ⁻¹(0.995)`.
pub const Z_99: f64 = 2.575_829_303_548_900_4;
/// Two-sided 95% standard normal quantile, `Φ⁻¹(0.975)`.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Sum, sum of squares and count of the non-zero contributions.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub sum: f64,
    pub sum_sq: f64,
    pub hits: u64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum_sq += x * x;
        self.hits += 1;
    }

    #[inline]
    pub fn merge(&mut self, other: &Moments) {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.hits += other.hits;
    }

    /// Mean and standard error over `n` samples, zeros included.
    pub fn mean_se(&self, n: u64) -> (f64, f64) {
        if n == 0 {
            return (0.0, 0.0);
        }
        let nf = n as f64;
        let mean = self.sum / nf;
        if n < 2 {
            return (mean, 0.0);
        }
        let var = ((self.sum_sq / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
        (mean, sqrt(var / nf))
    }
}
