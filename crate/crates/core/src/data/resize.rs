use crate::data::Image;

/// Bilinear resampling with half-pixel centers: a destination coordinate `d`
/// samples source position `(d + 0.5)·scale − 0.5`, clamped to the border.
pub fn resize_bilinear(image: &Image, out_w: usize, out_h: usize) -> Image {
    assert!(out_w >= 1 && out_h >= 1, "resize target must be at least 1x1");
    let (in_w, in_h) = (image.width(), image.height());
    if (in_w, in_h) == (out_w, out_h) {
        return image.clone();
    }
    let xs = taps(in_w, out_w);
    let ys = taps(in_h, out_h);
    let src = image.pixels();
    let mut pixels = Vec::with_capacity(3 * out_w * out_h);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let p = |x: usize, y: usize| src[3 * (y * in_w + x) + c] as f32;
                let top = p(x0, y0) + (p(x1, y0) - p(x0, y0)) * fx;
                let bottom = p(x0, y1) + (p(x1, y1) - p(x0, y1)) * fx;
                let v = top + (bottom - top) * fy;
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image::new(out_w, out_h, pixels).expect("sized above")
}

/// For every output coordinate: the two source indices and the weight of the second.
fn taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f32)> {
    let scale = in_len as f32 / out_len as f32;
    (0..out_len)
        .map(|d| {
            let s = ((d as f32 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f32);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, s - i0 as f32)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(w: usize, h: usize, values: &[u8]) -> Image {
        Image::new(w, h, values.iter().flat_map(|&v| [v, v, v]).collect()).unwrap()
    }

    #[test]
    fn same_size_is_identity() {
        let img = gray(3, 2, &[1, 50, 200, 7, 8, 9]);
        assert_eq!(resize_bilinear(&img, 3, 2), img);
    }

    #[test]
    fn two_by_two_to_center_mean() {
        let img = gray(2, 2, &[0, 2, 4, 6]);
        let out = resize_bilinear(&img, 1, 1);
        assert_eq!(out.get(0, 0), [3, 3, 3]);
    }

    #[test]
    fn upsample_interpolates() {
        let img = gray(2, 1, &[0, 100]);
        let out = resize_bilinear(&img, 4, 1);
        // Sources: -0.25→0, 0.25, 0.75, 1.25→1.
        let row: Vec<u8> = (0..4).map(|x| out.get(x, 0)[0]).collect();
        assert_eq!(row, vec![0, 25, 75, 100]);
    }

    proptest! {
        #[test]
        fn constant_stays_constant(w in 1usize..9, h in 1usize..9, ow in 1usize..20, oh in 1usize..20, v in any::<[u8; 3]>()) {
            let out = resize_bilinear(&Image::filled(w, h, v), ow, oh);
            prop_assert!(out.pixels().chunks(3).all(|p| p == v));
        }

        #[test]
        fn output_within_input_range(seed in any::<u64>(), ow in 1usize..12, oh in 1usize..12) {
            let mut rng = crate::data::Rng::new(seed);
            let img = Image::new(5, 4, (0..60).map(|_| rng.below(256) as u8).collect()).unwrap();
            let out = resize_bilinear(&img, ow, oh);
            for c in 0..3 {
                let chan = |im: &Image| im.pixels().iter().skip(c).step_by(3).copied().collect::<Vec<u8>>();
                let (src, dst) = (chan(&img), chan(&out));
                let (lo, hi) = (*src.iter().min().unwrap(), *src.iter().max().unwrap());
                prop_assert!(dst.iter().all(|&v| v >= lo && v <= hi));
            }
        }
    }
}
