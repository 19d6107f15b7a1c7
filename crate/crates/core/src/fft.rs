//! Centered, unitary 2D FFTs on complex grids.
//!
//! All propagators in this crate share one transform convention: the grid
//! origin sits at pixel `(n/2, n/2)`, transforms are computed as
//! `fftshift(fft(ifftshift(x)))`, and both directions carry a `1/sqrt(n)`
//! scale so that total intensity is preserved exactly (discrete Parseval).

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Roll the array so that index `n/2` moves to index 0 (ifftshift).
fn ifftshift(a: &Array2<Complex64>) -> Array2<Complex64> {
    let (h, w) = a.dim();
    let (sy, sx) = (h / 2, w / 2);
    Array2::from_shape_fn((h, w), |(y, x)| a[[(y + sy) % h, (x + sx) % w]])
}

/// Roll the array so that index 0 moves to index `n/2` (fftshift).
fn fftshift(a: &Array2<Complex64>) -> Array2<Complex64> {
    let (h, w) = a.dim();
    let (sy, sx) = (h - h / 2, w - w / 2);
    Array2::from_shape_fn((h, w), |(y, x)| a[[(y + sy) % h, (x + sx) % w]])
}

fn fft2_inplace(a: &mut Array2<Complex64>, dir: Direction) {
    let (h, w) = a.dim();
    let mut planner = FftPlanner::new();
    let row_fft = match dir {
        Direction::Forward => planner.plan_fft_forward(w),
        Direction::Inverse => planner.plan_fft_inverse(w),
    };
    for mut row in a.rows_mut() {
        row_fft.process(row.as_slice_mut().expect("rows are contiguous"));
    }
    let col_fft = match dir {
        Direction::Forward => planner.plan_fft_forward(h),
        Direction::Inverse => planner.plan_fft_inverse(h),
    };
    // materialize the transpose in standard layout so rows are contiguous
    let mut t = Array2::from_shape_fn((w, h), |(x, y)| a[[y, x]]);
    for mut row in t.rows_mut() {
        col_fft.process(row.as_slice_mut().expect("rows are contiguous"));
    }
    *a = Array2::from_shape_fn((h, w), |(y, x)| t[[x, y]]);
}

/// Centered unitary 2D FFT: `fftshift(fft2(ifftshift(x))) / sqrt(h*w)`.
pub fn fft2_centered(a: &Array2<Complex64>, dir: Direction) -> Array2<Complex64> {
    let (h, w) = a.dim();
    let mut work = ifftshift(a);
    fft2_inplace(&mut work, dir);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    let mut out = fftshift(&work);
    out.mapv_inplace(|v| v * scale);
    out
}
