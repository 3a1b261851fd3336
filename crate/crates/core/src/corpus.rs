//! Built-in synthetic grayscale test images on the nominal [0, 255]
//! scale. The four kinds cover the content classes the estimators react
//! to differently: long-range oscillatory structure, plaid-like product
//! waves, oriented texture and flat cartoon shapes. All of them continue
//! periodically across the image border, matching the periodic boundary
//! of the global operators, and their dominant features live at the
//! 10-20 pixel scale of the default filters.

use crate::image::Image;
use crate::scalar::{num, Scalar};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Concentric mid-frequency rings under a smooth envelope.
    Rings,
    /// Product of low/mid-frequency waves in two orientations.
    Plaid,
    /// Two oriented wave systems blended by a smooth mask.
    Texture,
    /// Hard-edged disks over a gently structured background.
    Cartoon,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 4] = [
        SyntheticKind::Rings,
        SyntheticKind::Plaid,
        SyntheticKind::Texture,
        SyntheticKind::Cartoon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Rings => "rings",
            SyntheticKind::Plaid => "plaid",
            SyntheticKind::Texture => "texture",
            SyntheticKind::Cartoon => "cartoon",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }
}

pub fn synthetic_image<T: Scalar>(kind: SyntheticKind, height: usize, width: usize) -> Image<T> {
    let h = height as f64;
    let w = width as f64;
    let value = |r: usize, c: usize| -> f64 {
        let y = r as f64 / h;
        let x = c as f64 / w;
        match kind {
            SyntheticKind::Rings => {
                let d = ((y - 0.5).powi(2) + (x - 0.5).powi(2)).sqrt();
                let env = (1.0 - (2.0 * d).min(1.0)).powi(2);
                120.0 + 95.0 * (2.0 * PI * 5.0 * d).cos() * env
            }
            SyntheticKind::Plaid => {
                110.0 + 45.0 * (2.0 * PI * 3.0 * y).sin() * (2.0 * PI * 3.0 * x).cos()
                    + 35.0 * (2.0 * PI * 4.0 * (x + y)).sin()
            }
            SyntheticKind::Texture => {
                let w1 = (2.0 * PI * (5.0 * x + 2.0 * y)).sin();
                let w2 = (2.0 * PI * (2.0 * x - 5.0 * y)).sin();
                let blend = 0.5 + 0.5 * (2.0 * PI * y).sin() * (2.0 * PI * x).cos();
                125.0 + 48.0 * (blend * w1 + (1.0 - blend) * w2)
            }
            SyntheticKind::Cartoon => {
                if ((y - 0.40).powi(2) + (x - 0.36).powi(2)).sqrt() < 0.20 {
                    205.0
                } else if ((y - 0.70).powi(2) + (x - 0.68).powi(2)).sqrt() < 0.13 {
                    35.0
                } else {
                    115.0 + 30.0 * (2.0 * PI * 2.0 * y).cos() * (2.0 * PI * 2.0 * x).cos()
                }
            }
        }
    };
    Image::from_fn(height, width, |r, c| {
        num::<T>(value(r, c).clamp(0.0, 255.0))
    })
}

/// The four named desk-scale test images at a given side length.
pub fn desk_corpus<T: Scalar>(side: usize) -> Vec<(String, Image<T>)> {
    SyntheticKind::ALL
        .iter()
        .map(|&k| (k.name().to_string(), synthetic_image(k, side, side)))
        .collect()
}
