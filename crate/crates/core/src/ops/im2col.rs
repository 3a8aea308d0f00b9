use crate::tensor::Scalar;

/// Geometry of one convolution over a single (C, H, W) image.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Window {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Window {
    pub fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// True when the column matrix is the input itself.
    pub fn is_pointwise_identity(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Output columns `[lo, hi)` whose input column `ox*stride + kx - pad` lies inside the image.
    #[inline]
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        let lo = if kx >= self.pad {
            0
        } else {
            (self.pad - kx).div_ceil(self.stride)
        };
        // Need ox*stride + kx - pad <= in_w - 1.
        let hi = if self.in_w + self.pad > kx {
            ((self.in_w + self.pad - kx - 1) / self.stride + 1).min(self.out_w)
        } else {
            0
        };
        (lo.min(hi), hi)
    }
}

/// Unfolds `image` (C·H·W) into `col` with rows `(c, ky, kx)` and columns
/// `(oy, ox)`. Out-of-image taps are zero.
pub(crate) fn im2col<T: Scalar>(win: &Window, image: &[T], col: &mut [T]) {
    debug_assert_eq!(image.len(), win.channels * win.in_h * win.in_w);
    debug_assert_eq!(col.len(), win.col_rows() * win.col_cols());
    let cols = win.col_cols();
    let mut row = 0;
    for c in 0..win.channels {
        let plane = &image[c * win.in_h * win.in_w..(c + 1) * win.in_h * win.in_w];
        for ky in 0..win.kh {
            for kx in 0..win.kw {
                let dst = &mut col[row * cols..(row + 1) * cols];
                let (lo, hi) = win.valid_cols(kx);
                for oy in 0..win.out_h {
                    let out_row = &mut dst[oy * win.out_w..(oy + 1) * win.out_w];
                    let iy = (oy * win.stride + ky) as isize - win.pad as isize;
                    if iy < 0 || iy >= win.in_h as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * win.in_w..(iy as usize + 1) * win.in_w];
                    out_row[..lo].fill(T::zero());
                    out_row[hi..].fill(T::zero());
                    if win.stride == 1 {
                        let start = lo + kx - win.pad;
                        out_row[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                    } else {
                        for ox in lo..hi {
                            out_row[ox] = src[ox * win.stride + kx - win.pad];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the image,
/// accumulating where windows overlap.
pub(crate) fn col2im<T: Scalar>(win: &Window, col: &[T], image: &mut [T]) {
    debug_assert_eq!(image.len(), win.channels * win.in_h * win.in_w);
    image.fill(T::zero());
    let cols = win.col_cols();
    let mut row = 0;
    for c in 0..win.channels {
        let plane = &mut image[c * win.in_h * win.in_w..(c + 1) * win.in_h * win.in_w];
        for ky in 0..win.kh {
            for kx in 0..win.kw {
                let src = &col[row * cols..(row + 1) * cols];
                let (lo, hi) = win.valid_cols(kx);
                for oy in 0..win.out_h {
                    let iy = (oy * win.stride + ky) as isize - win.pad as isize;
                    if iy < 0 || iy >= win.in_h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * win.in_w..(iy as usize + 1) * win.in_w];
                    let src_row = &src[oy * win.out_w..(oy + 1) * win.out_w];
                    for ox in lo..hi {
                        dst[ox * win.stride + kx - win.pad] += src_row[ox];
                    }
                }
                row += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(in_h: usize, in_w: usize, k: usize, stride: usize, pad: usize) -> Window {
        Window {
            channels: 2,
            in_h,
            in_w,
            kh: k,
            kw: k,
            stride,
            pad,
            out_h: (in_h + 2 * pad - k) / stride + 1,
            out_w: (in_w + 2 * pad - k) / stride + 1,
        }
    }

    fn naive_im2col(win: &Window, image: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        for c in 0..win.channels {
            for ky in 0..win.kh {
                for kx in 0..win.kw {
                    for oy in 0..win.out_h {
                        for ox in 0..win.out_w {
                            let iy = (oy * win.stride + ky) as isize - win.pad as isize;
                            let ix = (ox * win.stride + kx) as isize - win.pad as isize;
                            let inside = iy >= 0 && ix >= 0 && (iy as usize) < win.in_h && (ix as usize) < win.in_w;
                            out.push(if inside {
                                image[(c * win.in_h + iy as usize) * win.in_w + ix as usize]
                            } else {
                                0.0
                            });
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn unfold_matches_direct_indexing() {
        for &(h, w, k, s, p) in &[(5, 5, 3, 1, 1), (6, 7, 3, 2, 1), (4, 4, 1, 1, 0), (5, 3, 3, 2, 0), (2, 2, 3, 2, 1), (7, 5, 3, 3, 2)] {
            let win = window(h, w, k, s, p);
            let image: Vec<f64> = (0..2 * h * w).map(|v| v as f64 + 1.0).collect();
            let mut col = vec![f64::NAN; win.col_rows() * win.col_cols()];
            im2col(&win, &image, &mut col);
            assert_eq!(col, naive_im2col(&win, &image), "{h}x{w} k{k} s{s} p{p}");
        }
    }

    #[test]
    fn col2im_is_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        let win = window(6, 5, 3, 2, 1);
        let x: Vec<f64> = (0..2 * 30).map(|v| (v as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..win.col_rows() * win.col_cols()).map(|v| (v as f64 * 0.11).cos()).collect();
        let mut col = vec![0.0; y.len()];
        im2col(&win, &x, &mut col);
        let mut back = vec![0.0; x.len()];
        col2im(&win, &y, &mut back);
        let lhs: f64 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
