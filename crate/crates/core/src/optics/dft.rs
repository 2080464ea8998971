//! Centered, unitary 2D discrete Fourier transform.
//!
//! Coordinates in both domains are measured from `floor(size / 2)`, so a
//! delta at the grid center transforms to a constant and a field centered
//! on the grid has its zero frequency at the grid center as well. The
//! forward kernel is `exp(-i2π(ux/W + vy/H))` and both directions carry a
//! `1/sqrt(W·H)` factor, making the inverse the exact adjoint.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Centered unitary transform of `field`.
pub fn dft2_unitary(field: &Field, direction: Direction) -> Field {
    let (w, h) = (field.width(), field.height());
    let mut plan = FftPlan2::new(w, h);
    let mut buf = field.values().to_vec();
    ifftshift(&mut buf, w, h);
    match direction {
        Direction::Forward => {
            plan.forward_t(&mut buf);
            plan.transpose_into_tmp(&buf, h, w);
            std::mem::swap(&mut buf, &mut plan.tmp);
        }
        Direction::Inverse => {
            plan.transpose_into_tmp(&buf, w, h);
            std::mem::swap(&mut buf, &mut plan.tmp);
            plan.inverse_t(&mut buf);
        }
    }
    fftshift(&mut buf, w, h);
    let scale = 1.0 / ((w * h) as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= scale);
    Field::from_raw(w, h, buf)
}

/// Moves the element at `(floor(W/2), floor(H/2))` to the origin.
pub(crate) fn ifftshift<T: Copy>(buf: &mut [T], width: usize, height: usize) {
    let (cx, cy) = (width / 2, height / 2);
    for row in buf.chunks_exact_mut(width) {
        row.rotate_left(cx);
    }
    buf.rotate_left(cy * width);
}

/// Inverse of [`ifftshift`]: moves the origin to `(floor(W/2), floor(H/2))`.
pub(crate) fn fftshift<T: Copy>(buf: &mut [T], width: usize, height: usize) {
    let (cx, cy) = (width / 2, height / 2);
    for row in buf.chunks_exact_mut(width) {
        row.rotate_right(cx);
    }
    buf.rotate_right(cy * width);
}

/// Reusable unnormalized 2D FFT over uncentered buffers.
///
/// To save a transpose per call, the frequency domain is kept transposed:
/// [`forward_t`](Self::forward_t) takes a row-major `height × width` buffer
/// and leaves a row-major `width × height` one, and
/// [`inverse_t`](Self::inverse_t) does the reverse.
pub(crate) struct FftPlan2 {
    width: usize,
    height: usize,
    fwd_w: Arc<dyn Fft<f64>>,
    inv_w: Arc<dyn Fft<f64>>,
    fwd_h: Arc<dyn Fft<f64>>,
    inv_h: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl FftPlan2 {
    pub(crate) fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd_w = planner.plan_fft_forward(width);
        let inv_w = planner.plan_fft_inverse(width);
        let fwd_h = planner.plan_fft_forward(height);
        let inv_h = planner.plan_fft_inverse(height);
        let scratch_len = [&fwd_w, &inv_w, &fwd_h, &inv_h]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            width,
            height,
            fwd_w,
            inv_w,
            fwd_h,
            inv_h,
            scratch: vec![Complex64::default(); scratch_len],
            tmp: vec![Complex64::default(); width * height],
        }
    }

    pub(crate) fn forward_t(&mut self, buf: &mut Vec<Complex64>) {
        for row in buf.chunks_exact_mut(self.width) {
            self.fwd_w.process_with_scratch(row, &mut self.scratch);
        }
        self.transpose_into_tmp(buf, self.width, self.height);
        std::mem::swap(buf, &mut self.tmp);
        for col in buf.chunks_exact_mut(self.height) {
            self.fwd_h.process_with_scratch(col, &mut self.scratch);
        }
    }

    pub(crate) fn inverse_t(&mut self, buf: &mut Vec<Complex64>) {
        for col in buf.chunks_exact_mut(self.height) {
            self.inv_h.process_with_scratch(col, &mut self.scratch);
        }
        self.transpose_into_tmp(buf, self.height, self.width);
        std::mem::swap(buf, &mut self.tmp);
        for row in buf.chunks_exact_mut(self.width) {
            self.inv_w.process_with_scratch(row, &mut self.scratch);
        }
    }

    /// Transposes a row-major buffer with rows of length `cols` into `tmp`.
    fn transpose_into_tmp(&mut self, src: &[Complex64], cols: usize, rows: usize) {
        transpose(src, &mut self.tmp, cols, rows);
    }
}

/// Blocked transpose of a row-major `rows × cols` matrix.
pub(crate) fn transpose<T: Copy>(src: &[T], dst: &mut [T], cols: usize, rows: usize) {
    const BLOCK: usize = 32;
    for rb in (0..rows).step_by(BLOCK) {
        for cb in (0..cols).step_by(BLOCK) {
            for r in rb..(rb + BLOCK).min(rows) {
                for c in cb..(cb + BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(w: usize, h: usize, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..w * h)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        Field::new(w, h, values).unwrap()
    }

    /// Direct O(N²) evaluation of the centered kernel.
    fn naive(field: &Field, sign: f64) -> Vec<Complex64> {
        let (w, h) = (field.width(), field.height());
        let (cx, cy) = ((w / 2) as f64, (h / 2) as f64);
        let scale = 1.0 / ((w * h) as f64).sqrt();
        let mut out = vec![Complex64::default(); w * h];
        for v in 0..h {
            for u in 0..w {
                let mut acc = Complex64::default();
                for y in 0..h {
                    for x in 0..w {
                        let arg = sign
                            * 2.0
                            * PI
                            * ((u as f64 - cx) * (x as f64 - cx) / w as f64
                                + (v as f64 - cy) * (y as f64 - cy) / h as f64);
                        acc += field.values()[y * w + x] * Complex64::from_polar(1.0, arg);
                    }
                }
                out[v * w + u] = acc * scale;
            }
        }
        out
    }

    #[test]
    fn matches_direct_sum_on_odd_and_even_grids() {
        for &(w, h) in &[(8, 6), (7, 5), (4, 9)] {
            let f = random_field(w, h, (w * 31 + h) as u64);
            let fwd = dft2_unitary(&f, Direction::Forward);
            for (a, b) in fwd.values().iter().zip(naive(&f, -1.0)) {
                assert!((a - b).norm() < 1e-12);
            }
            let inv = dft2_unitary(&f, Direction::Inverse);
            for (a, b) in inv.values().iter().zip(naive(&f, 1.0)) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn centered_delta_gives_flat_spectrum() {
        let (w, h) = (16, 12);
        let mut values = vec![Complex64::default(); w * h];
        values[(h / 2) * w + w / 2] = Complex64::new(1.0, 0.0);
        let f = Field::new(w, h, values).unwrap();
        let out = dft2_unitary(&f, Direction::Forward);
        let expected = 1.0 / ((w * h) as f64).sqrt();
        for v in out.values() {
            assert!((v.re - expected).abs() < 1e-15 && v.im.abs() < 1e-15);
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        let f = random_field(32, 24, 9);
        let fwd = dft2_unitary(&f, Direction::Forward);
        assert!((fwd.energy() - f.energy()).abs() <= 1e-12 * f.energy());
        let back = dft2_unitary(&fwd, Direction::Inverse);
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn shifts_are_inverse_for_odd_sizes() {
        let orig: Vec<usize> = (0..35).collect();
        let mut buf = orig.clone();
        ifftshift(&mut buf, 7, 5);
        assert_eq!(buf[0], 2 * 7 + 3);
        fftshift(&mut buf, 7, 5);
        assert_eq!(buf, orig);
    }
}
