//! Procedural stand-ins for real photographs.
//!
//! Faces are skin-toned ellipses with eyes on a noisy background. Masked faces
//! get a rectangle over the lower face in a color that contrasts with the skin.

use std::sync::Arc;

use crate::data::{Image, Label, LabeledDataset, Rgb, Rng, Sample};

const SKIN: [Rgb; 6] = [
    [255, 224, 196],
    [234, 192, 134],
    [198, 134, 66],
    [141, 85, 36],
    [224, 172, 105],
    [255, 205, 148],
];

const MASK_COLORS: [Rgb; 7] = [
    [120, 180, 230],
    [245, 245, 250],
    [25, 25, 30],
    [30, 50, 110],
    [230, 150, 180],
    [60, 140, 90],
    [200, 200, 80],
];

/// Minimum Euclidean RGB distance between a mask and the skin under it,
/// leaving room for jitter of both.
const MIN_CONTRAST: f64 = 120.0;

fn color_distance(a: Rgb, b: Rgb) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn jitter(rng: &mut Rng, c: Rgb, amount: i32) -> Rgb {
    c.map(|v| (v as i32 + rng.below(2 * amount as usize + 1) as i32 - amount).clamp(0, 255) as u8)
}

fn background(rng: &mut Rng, res: usize) -> Image {
    let base = [rng.below(256) as u8, rng.below(256) as u8, rng.below(256) as u8];
    let mut img = Image::filled(res, res, base);
    for px in img.pixels_mut().chunks_exact_mut(3) {
        let n = rng.below(25) as i32 - 12;
        for v in px.iter_mut() {
            *v = (*v as i32 + n).clamp(0, 255) as u8;
        }
    }
    img
}

fn fill_ellipse(img: &mut Image, cx: f64, cy: f64, rx: f64, ry: f64, color: Rgb) {
    let (w, h) = (img.width(), img.height());
    let y0 = (cy - ry).floor().max(0.0) as usize;
    let y1 = ((cy + ry).ceil() as usize).min(h.saturating_sub(1));
    let x0 = (cx - rx).floor().max(0.0) as usize;
    let x1 = ((cx + rx).ceil() as usize).min(w.saturating_sub(1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = (x as f64 + 0.5 - cx) / rx;
            let dy = (y as f64 + 0.5 - cy) / ry;
            if dx * dx + dy * dy <= 1.0 {
                img.put(x, y, color);
            }
        }
    }
}

fn fill_rect(img: &mut Image, x0: f64, y0: f64, x1: f64, y1: f64, color: Rgb) {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let xa = x0.max(0.0).round() as usize;
    let xb = x1.min(w).round() as usize;
    let ya = y0.max(0.0).round() as usize;
    let yb = y1.min(h).round() as usize;
    for y in ya..yb {
        for x in xa..xb {
            img.put(x, y, color);
        }
    }
}

/// One face image at `res`×`res`.
pub fn synth_face(label: Label, res: usize, rng: &mut Rng) -> Image {
    let r = res as f64;
    let mut img = background(rng, res);
    let cx = r / 2.0 + rng.uniform(-0.08, 0.08) * r;
    let cy = r / 2.0 + rng.uniform(-0.06, 0.06) * r;
    let rx = r * rng.uniform(0.27, 0.34);
    let ry = rx * rng.uniform(1.15, 1.35);
    let base = SKIN[rng.below(SKIN.len())];
    let skin = jitter(rng, base, 12);
    fill_ellipse(&mut img, cx, cy, rx, ry, skin);

    let eye = jitter(rng, [40, 30, 25], 15);
    let eye_r = r * rng.uniform(0.03, 0.045);
    let eye_dx = rx * rng.uniform(0.35, 0.45);
    let eye_y = cy - ry * rng.uniform(0.2, 0.3);
    fill_ellipse(&mut img, cx - eye_dx, eye_y, eye_r, eye_r, eye);
    fill_ellipse(&mut img, cx + eye_dx, eye_y, eye_r, eye_r, eye);

    match label {
        Label::WithMask => {
            let contrasting: Vec<Rgb> = MASK_COLORS
                .iter()
                .copied()
                .filter(|&c| color_distance(c, skin) >= MIN_CONTRAST)
                .collect();
            let base = contrasting[rng.below(contrasting.len())];
            let color = jitter(rng, base, 15);
            let half_w = rx * rng.uniform(0.85, 1.05);
            let shift = rng.uniform(-0.08, 0.08) * rx;
            let top = cy + ry * rng.uniform(-0.05, 0.12);
            let bottom = cy + ry * rng.uniform(0.75, 0.95);
            fill_rect(&mut img, cx - half_w + shift, top, cx + half_w + shift, bottom, color);
        }
        Label::WithoutMask => {}
    }
    img
}

/// `n_per_class` masked faces followed by `n_per_class` unmasked faces,
/// fully determined by `seed`.
pub fn synth_dataset(n_per_class: usize, resolution: usize, seed: u64) -> LabeledDataset {
    let mut rng = Rng::new(seed);
    let mut items = Vec::with_capacity(2 * n_per_class);
    for label in [Label::WithMask, Label::WithoutMask] {
        for i in 0..n_per_class {
            items.push(Sample {
                name: format!("synth/{}/{i:05}", label.name()),
                label: label.index(),
                image: Arc::new(synth_face(label, resolution, &mut rng)),
            });
        }
    }
    LabeledDataset::new(LabeledDataset::mask_classes(), items).expect("labels in range")
}

/// Pretraining task: one to three filled ellipses and rectangles of random
/// size, position and color on a noisy background. The label is the kind of
/// the frontmost shape (0 ellipse, 1 rectangle), which is drawn last and at
/// least as large as the shapes behind it.
pub fn synth_shapes(n_per_class: usize, resolution: usize, seed: u64) -> LabeledDataset {
    let mut rng = Rng::new(seed);
    let r = resolution as f64;
    let mut items = Vec::with_capacity(2 * n_per_class);
    for label in 0..2 {
        for i in 0..n_per_class {
            let mut img = background(&mut rng, resolution);
            let behind = rng.below(3);
            for k in 0..=behind {
                let front = k == behind;
                let kind = if front { label } else { rng.below(2) };
                let color = [rng.below(256) as u8, rng.below(256) as u8, rng.below(256) as u8];
                let (lo, hi) = if front { (0.18, 0.35) } else { (0.1, 0.25) };
                let (hw, hh) = (r * rng.uniform(lo, hi), r * rng.uniform(lo, hi));
                let cx = rng.uniform(hw, r - hw);
                let cy = rng.uniform(hh, r - hh);
                if kind == 0 {
                    fill_ellipse(&mut img, cx, cy, hw, hh, color);
                } else {
                    fill_rect(&mut img, cx - hw, cy - hh, cx + hw, cy + hh, color);
                }
            }
            items.push(Sample {
                name: format!("shapes/{label}/{i:05}"),
                label,
                image: Arc::new(img),
            });
        }
    }
    LabeledDataset::new(vec!["ellipse".into(), "rectangle".into()], items).expect("labels in range")
}

/// Variance of all channel values in the lower half of the image.
pub fn lower_half_variance(image: &Image) -> f64 {
    let start = 3 * image.width() * (image.height() / 2);
    let vals = &image.pixels()[start..];
    let n = vals.len() as f64;
    let mean = vals.iter().map(|&v| v as f64).sum::<f64>() / n;
    vals.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_determinism() {
        let a = synth_dataset(300, 64, 7);
        assert_eq!(a.len(), 600);
        assert_eq!(a.counts(), vec![300, 300]);
        let b = synth_dataset(300, 64, 7);
        assert!(a.items.iter().zip(&b.items).all(|(x, y)| x.image == y.image && x.label == y.label));
        let c = synth_dataset(3, 64, 8);
        assert_ne!(c.items[0].image, a.items[0].image);
    }

    #[test]
    fn shapes_counts() {
        let d = synth_shapes(5, 32, 1);
        assert_eq!(d.counts(), vec![5, 5]);
        assert_eq!(d.class_names, vec!["ellipse", "rectangle"]);
    }
}
