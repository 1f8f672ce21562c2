//! Multi-dimensional FFT along one axis of a row-major array.

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Transform `data` (row-major with the given shape) along `axis`, in place and
/// unnormalized.
pub(crate) fn fft_along(data: &mut [Complex64], shape: &[usize], axis: usize, inverse: bool, planner: &mut FftPlanner<f64>) {
    let n = shape[axis];
    if n == 1 {
        return;
    }
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * n * stride + s;
            for k in 0..n {
                buf[k] = data[base + k * stride];
            }
            fft.process(&mut buf);
            for k in 0..n {
                data[base + k * stride] = buf[k];
            }
        }
    }
}
