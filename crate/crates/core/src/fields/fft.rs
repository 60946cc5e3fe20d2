use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

/// In-place unnormalised n-dimensional DFT over a row-major `m^dim` block
/// (last axis fastest).
pub(crate) fn fft_nd(data: &mut [Complex64], dim: usize, m: usize, direction: FftDirection) {
    debug_assert_eq!(data.len(), m.pow(dim as u32));
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft(m, direction);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    // Last axis is contiguous.
    fft.process_with_scratch(data, &mut scratch);

    let total = data.len();
    let mut line = vec![Complex64::new(0.0, 0.0); m];
    for axis in (0..dim.saturating_sub(1)).rev() {
        let stride = m.pow((dim - 1 - axis) as u32);
        let block = stride * m;
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (t, v) in line.iter_mut().enumerate() {
                    *v = data[base + t * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (t, v) in line.iter().enumerate() {
                    data[base + t * stride] = *v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct O(P^2) DFT over a 2-D block.
    fn naive_dft_2d(data: &[Complex64], m: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); m * m];
        for k1 in 0..m {
            for k2 in 0..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for x1 in 0..m {
                    for x2 in 0..m {
                        let ph = -2.0 * std::f64::consts::PI * ((k1 * x1 + k2 * x2) as f64)
                            / m as f64;
                        acc += data[x1 * m + x2] * Complex64::from_polar(1.0, ph);
                    }
                }
                out[k1 * m + k2] = acc;
            }
        }
        out
    }

    #[test]
    fn matches_naive_dft() {
        let m = 6;
        let data: Vec<Complex64> = (0..m * m)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let mut fast = data.clone();
        fft_nd(&mut fast, 2, m, FftDirection::Forward);
        for (a, b) in fast.iter().zip(naive_dft_2d(&data, m)) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
