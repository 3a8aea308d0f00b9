use crate::error::{Error, Result};

/// Inverted-residual stage table: (expansion t, output channels c, repeats n, first stride s).
pub const STAGES: [(usize, usize, usize, usize); 7] = [
    (1, 16, 1, 1),
    (6, 24, 2, 2),
    (6, 32, 3, 2),
    (6, 64, 4, 2),
    (6, 96, 3, 1),
    (6, 160, 3, 2),
    (6, 320, 1, 1),
];

pub const STEM_CHANNELS: usize = 32;
pub const FEATURE_CHANNELS: usize = 1280;

/// Scales `channels` by `width` and rounds half up to a multiple of 8, never below 8.
pub fn scaled_channels(channels: usize, width: f32) -> usize {
    let v = channels as f64 * width as f64;
    (((v + 4.0) / 8.0).floor() as usize * 8).max(8)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub input_resolution: usize,
    pub width_multiplier: f32,
    pub num_classes: usize,
    pub dropout_rate: f32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_resolution: 224,
            width_multiplier: 1.0,
            num_classes: 2,
            dropout_rate: 0.5,
        }
    }
}

impl ModelConfig {
    /// The 64 px, width-0.25 build used for desk-scale training.
    pub fn reduced() -> Self {
        Self {
            input_resolution: 64,
            width_multiplier: 0.25,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_resolution == 0 || self.input_resolution % 32 != 0 {
            return Err(Error::InvalidArgument(format!(
                "input resolution {} must be a positive multiple of 32",
                self.input_resolution
            )));
        }
        if !(self.width_multiplier > 0.0 && self.width_multiplier <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "width multiplier {} not in (0, 1]",
                self.width_multiplier
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {} not in [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }

    pub fn stem_channels(&self) -> usize {
        scaled_channels(STEM_CHANNELS, self.width_multiplier)
    }

    /// Width of the final 1×1 feature convolution: 1280·max(1, width).
    pub fn feature_channels(&self) -> usize {
        if self.width_multiplier > 1.0 {
            scaled_channels(FEATURE_CHANNELS, self.width_multiplier)
        } else {
            FEATURE_CHANNELS
        }
    }

    /// Every bottleneck block of the backbone in order, with its stage index.
    pub fn bottlenecks(&self) -> Vec<(usize, BottleneckSpec)> {
        let mut blocks = Vec::new();
        let mut in_channels = self.stem_channels();
        for (stage, &(t, c, n, s)) in STAGES.iter().enumerate() {
            let out_channels = scaled_channels(c, self.width_multiplier);
            for i in 0..n {
                blocks.push((
                    stage,
                    BottleneckSpec {
                        expansion: t,
                        in_channels,
                        out_channels,
                        stride: if i == 0 { s } else { 1 },
                    },
                ));
                in_channels = out_channels;
            }
        }
        blocks
    }
}

/// One inverted residual block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BottleneckSpec {
    pub expansion: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
}

impl BottleneckSpec {
    pub fn has_residual(&self) -> bool {
        self.stride == 1 && self.in_channels == self.out_channels
    }

    /// Expansion factor 1 blocks have no 1×1 expand convolution.
    pub fn has_expand(&self) -> bool {
        self.expansion != 1
    }

    pub fn hidden_channels(&self) -> usize {
        self.in_channels * self.expansion
    }
}
