use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 8-bit RGB image, row-major, three bytes per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

pub type Rgb = [u8; 3];

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != 3 * width * height {
            return Err(Error::InvalidArgument(format!(
                "image {width}x{height} needs {} bytes, got {}",
                3 * width * height,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        Self {
            width,
            height,
            pixels: color.iter().copied().cycle().take(3 * width * height).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, rgb: Rgb) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Copies the `w`×`h` region at (`x`, `y`). The region must lie inside the image.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Image> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::InvalidArgument(format!(
                "crop ({x},{y},{w},{h}) outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(3 * w * h);
        for row in y..y + h {
            let start = 3 * (row * self.width + x);
            pixels.extend_from_slice(&self.pixels[start..start + 3 * w]);
        }
        Ok(Image { width: w, height: h, pixels })
    }

    /// Draws `other` with its top-left corner at (`x`, `y`), clipping at the borders.
    pub fn paste(&mut self, other: &Image, x: usize, y: usize) {
        for row in 0..other.height.min(self.height.saturating_sub(y)) {
            let cols = other.width.min(self.width.saturating_sub(x));
            let src = 3 * row * other.width;
            let dst = 3 * ((y + row) * self.width + x);
            self.pixels[dst..dst + 3 * cols].copy_from_slice(&other.pixels[src..src + 3 * cols]);
        }
    }
}

/// Maps bytes to `x / 127.5 − 1` in a (1, 3, H, W) tensor, RGB channel order.
pub fn normalize(image: &Image) -> Tensor<f32> {
    let (w, h) = (image.width, image.height);
    let mut data = vec![0.0f32; 3 * w * h];
    for (p, px) in image.pixels.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * w * h + p] = px[c] as f32 / 127.5 - 1.0;
        }
    }
    Tensor::new([1, 3, h, w], data).expect("sized above")
}
