use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Analysis/synthesis window family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Window {
    /// Periodic Hann.
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; len],
        }
    }

    /// Ratio of max to min of the squared-window overlap sum at `hop`.
    /// Equal to 1 exactly when the window is COLA for weighted overlap-add.
    pub fn overlap_ripple(self, len: usize, hop: usize) -> f64 {
        let w = self.coefficients(len);
        let mut acc = vec![0.0; hop];
        for (n, v) in w.iter().enumerate() {
            acc[n % hop] += v * v;
        }
        let max = acc.iter().cloned().fold(f64::MIN, f64::max);
        let min = acc.iter().cloned().fold(f64::MAX, f64::min);
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}
