use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse plan pair for a fixed size. The inverse is normalized by
/// `1/n`, so `inverse(forward(x)) == x`.
#[derive(Clone)]
pub struct RealFft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RealFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RealFft").field("n", &self.n).finish()
    }
}

impl RealFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let scale = 1.0 / self.n as f64;
        for c in buf.iter_mut() {
            *c *= scale;
        }
    }

    /// Forward transform of a real sequence, zero-padded to `n`.
    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        self.forward_in_place(&mut buf);
        buf
    }

    /// Expands `n/2+1` half-spectrum values of an even real sequence to the
    /// full length-`n` sequence.
    pub fn mirror_even(&self, half: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|k| if k <= n / 2 { half[k] } else { half[n - k] })
            .collect()
    }
}
