use crate::image::ImageBuffer;
use crate::scalar::Scalar;

const KX: [[i32; 3]; 3] = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]];
const KY: [[i32; 3]; 3] = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]];

#[inline]
fn clamp_idx(v: isize, n: usize) -> usize {
    v.clamp(0, n as isize - 1) as usize
}

/// Sobel responses `(gx, gy)` per channel with replicate padding.
pub fn sobel<S: Scalar>(img: &ImageBuffer<S>) -> (ImageBuffer<S>, ImageBuffer<S>) {
    let (w, h, c) = (img.width, img.height, img.channels);
    let mut gx = ImageBuffer::new(w, h, c);
    let mut gy = ImageBuffer::new(w, h, c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                // Weighted central differences, exact zero on flat regions.
                let (xl, xr) = (clamp_idx(x as isize - 1, w), clamp_idx(x as isize + 1, w));
                let (yu, yd) = (clamp_idx(y as isize - 1, h), clamp_idx(y as isize + 1, h));
                let two = S::lit(2.0);
                let sx = (img.get(xr, yu, ch) - img.get(xl, yu, ch))
                    + two * (img.get(xr, y, ch) - img.get(xl, y, ch))
                    + (img.get(xr, yd, ch) - img.get(xl, yd, ch));
                let sy = (img.get(xl, yd, ch) - img.get(xl, yu, ch))
                    + two * (img.get(x, yd, ch) - img.get(x, yu, ch))
                    + (img.get(xr, yd, ch) - img.get(xr, yu, ch));
                let idx = img.index(x, y, ch);
                gx.data[idx] = sx;
                gy.data[idx] = sy;
            }
        }
    }
    (gx, gy)
}

/// Adjoint of [`sobel`]: maps upstream gradients on `(gx, gy)` back to the
/// input image.
pub fn sobel_adjoint<S: Scalar>(d_gx: &ImageBuffer<S>, d_gy: &ImageBuffer<S>) -> ImageBuffer<S> {
    let (w, h, c) = (d_gx.width, d_gx.height, d_gx.channels);
    let mut out = ImageBuffer::new(w, h, c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let idx = d_gx.index(x, y, ch);
                let (gx, gy) = (d_gx.data[idx], d_gy.data[idx]);
                if gx == S::zero() && gy == S::zero() {
                    continue;
                }
                for (j, (rx, ry)) in KX.iter().zip(KY.iter()).enumerate() {
                    let yy = clamp_idx(y as isize + j as isize - 1, h);
                    for i in 0..3 {
                        let xx = clamp_idx(x as isize + i as isize - 1, w);
                        let o = out.index(xx, yy, ch);
                        out.data[o] += S::from_i32(rx[i]).unwrap() * gx + S::from_i32(ry[i]).unwrap() * gy;
                    }
                }
            }
        }
    }
    out
}
