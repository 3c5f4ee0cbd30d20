//! Small numeric helpers shared across the crate: compensated summation,
//! dyadic ladders, and the 17-significant-digit float format used by every
//! text output.

/// Neumaier-compensated accumulator. Summing n values keeps the error at
/// O(eps) instead of O(n*eps), which is what lets the partition and
/// flux-split identities hold to 1e-12 on multi-million-node grids.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator.
pub fn csum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

pub fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// Scales 2^-j for j in j_min..=j_max, largest first.
pub fn dyadic_ladder(j_min: u32, j_max: u32) -> Vec<f64> {
    (j_min..=j_max).map(|j| (2f64).powi(-(j as i32))).collect()
}

/// Format with 17 significant digits, enough to round-trip any f64.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_naive() {
        // 1 + 1e-16 repeated: naive summation loses the small terms entirely.
        let mut acc = CompensatedSum::new();
        acc.add(1.0);
        for _ in 0..1000 {
            acc.add(1e-16);
        }
        let exact = 1.0 + 1000.0 * 1e-16;
        assert!((acc.value() - exact).abs() < 1e-18);
    }

    #[test]
    fn ladder_is_descending_dyadic() {
        let l = dyadic_ladder(2, 5);
        assert_eq!(l, vec![0.25, 0.125, 0.0625, 0.03125]);
    }

    #[test]
    fn g17_round_trips() {
        for &x in &[std::f64::consts::PI, 1.0 / 3.0, 6.02e23, -0.0, 5e-324] {
            let s = fmt_g17(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }
}
