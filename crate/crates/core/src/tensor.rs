//! Dense row-major containers and the resampling kernels shared by the
//! feature, detector and post-processing stages.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major 2-D matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::zero())
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { T::one() } else { T::zero() })
    }
}

impl<T: Copy> Matrix<T> {
    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// H×W×C tensor stored row-major with channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor3<T> {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Tensor3 {
            height,
            width,
            channels,
            data: vec![T::zero(); height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {height}x{width}x{channels} tensor",
                data.len()
            )));
        }
        Ok(Tensor3 {
            height,
            width,
            channels,
            data,
        })
    }

    /// Bilinear resize of every channel to `out_h`×`out_w` using
    /// half-pixel centers. Equal sizes return an exact copy.
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Self {
        if out_h == self.height && out_w == self.width {
            return self.clone();
        }
        let rows = axis_weights::<T>(self.height, out_h);
        let cols = axis_weights::<T>(self.width, out_w);
        let c = self.channels;
        let mut out = Tensor3::zeros(out_h, out_w, c);
        for (oh, &(h0, h1, fh)) in rows.iter().enumerate() {
            for (ow, &(w0, w1, fw)) in cols.iter().enumerate() {
                let a = self.vector(h0, w0);
                let b = self.vector(h0, w1);
                let p = self.vector(h1, w0);
                let q = self.vector(h1, w1);
                let dst = out.vector_mut(oh, ow);
                for k in 0..c {
                    let top = a[k] + (b[k] - a[k]) * fw;
                    let bottom = p[k] + (q[k] - p[k]) * fw;
                    dst[k] = top + (bottom - top) * fh;
                }
            }
        }
        out
    }
}

impl<T: Copy> Tensor3<T> {
    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// The C-vector at position (h, w).
    #[inline]
    pub fn vector(&self, h: usize, w: usize) -> &[T] {
        let start = (h * self.width + w) * self.channels;
        &self.data[start..start + self.channels]
    }

    #[inline]
    pub fn vector_mut(&mut self, h: usize, w: usize) -> &mut [T] {
        let start = (h * self.width + w) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    /// Iterates the H·W patch vectors in (h, w) row-major order.
    pub fn vectors(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        // chunks_exact with C = 0 would panic; an empty tensor yields no vectors.
        let n = if self.channels == 0 {
            0
        } else {
            self.height * self.width
        };
        (0..n).map(move |i| {
            let start = i * self.channels;
            &self.data[start..start + self.channels]
        })
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }
}

/// Per-output-index (lo, hi, frac) source coordinates for half-pixel bilinear resampling.
fn axis_weights<T: Scalar>(input: usize, output: usize) -> Vec<(usize, usize, T)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(input - 1);
            (lo, hi, T::of(src - lo as f64))
        })
        .collect()
}

/// Bilinear resize of a single-channel map.
pub fn resize_matrix<T: Scalar>(m: &Matrix<T>, out_rows: usize, out_cols: usize) -> Matrix<T> {
    if m.shape() == (out_rows, out_cols) {
        return m.clone();
    }
    let t = Tensor3::from_vec(m.rows(), m.cols(), 1, m.as_slice().to_vec())
        .expect("matrix data fills a single-channel tensor");
    let r = t.resize_bilinear(out_rows, out_cols);
    Matrix::from_vec(out_rows, out_cols, r.data).expect("resized tensor has the requested size")
}

/// Normalized 1-D Gaussian taps truncated at 4σ.
pub fn gaussian_kernel<T: Scalar>(sigma: f64) -> Vec<T> {
    let radius = (4.0 * sigma).ceil() as usize;
    let raw: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| T::of(v / total)).collect()
}

/// Separable Gaussian blur with clamp-to-edge borders. `sigma <= 0` is the identity.
pub fn gaussian_blur<T: Scalar>(m: &Matrix<T>, sigma: f64) -> Matrix<T> {
    if sigma <= 0.0 || m.as_slice().is_empty() {
        return m.clone();
    }
    let kernel = gaussian_kernel::<T>(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (rows, cols) = m.shape();
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut tmp = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = T::zero();
            for (k, &w) in kernel.iter().enumerate() {
                let cc = clamp(c as isize + k as isize - radius, cols);
                acc += w * m.get(r, cc);
            }
            tmp.set(r, c, acc);
        }
    }
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = T::zero();
            for (k, &w) in kernel.iter().enumerate() {
                let rr = clamp(r as isize + k as isize - radius, rows);
                acc += w * tmp.get(rr, c);
            }
            out.set(r, c, acc);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_identity_and_constant() {
        let t = Tensor3::from_vec(2, 3, 2, (0..12).map(|v| v as f64).collect()).unwrap();
        assert_eq!(t.resize_bilinear(2, 3), t);

        let c = Tensor3::from_vec(3, 4, 1, vec![2.5f64; 12]).unwrap();
        let up = c.resize_bilinear(7, 9);
        assert!(up.as_slice().iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn bilinear_downsample_by_two_averages_pairs() {
        // Half-pixel centers put each output sample halfway between two inputs.
        let m = Matrix::from_vec(1, 4, vec![0.0f64, 2.0, 4.0, 6.0]).unwrap();
        let r = resize_matrix(&m, 1, 2);
        assert_eq!(r.as_slice(), &[1.0, 5.0]);
    }

    #[test]
    fn blur_preserves_constants() {
        let m = Matrix::filled(5, 6, 3.0f64);
        let b = gaussian_blur(&m, 2.0);
        assert!(b.as_slice().iter().all(|&v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn blur_sigma_zero_is_identity() {
        let m = Matrix::from_fn(4, 4, |r, c| (r * 4 + c) as f64);
        assert_eq!(gaussian_blur(&m, 0.0), m);
    }

    #[test]
    fn kernel_sums_to_one() {
        let k = gaussian_kernel::<f64>(1.5);
        assert_eq!(k.len(), 2 * 6 + 1);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
