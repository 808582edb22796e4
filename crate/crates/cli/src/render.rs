//! Orthographic stick-figure rendering of pose sequences.
//!
//! The camera looks along −z: x maps to the image's horizontal axis and y
//! upward. One scale is shared by every frame so motion stays comparable.

use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use emogest_core::PoseSequence;
use image::codecs::gif::{GifEncoder, Repeat};
use image::{Delay, Frame, Rgb, RgbImage, Rgba, RgbaImage};

const BACKGROUND: Rgb<u8> = Rgb([250, 250, 250]);
const BONE: Rgb<u8> = Rgb([60, 60, 70]);
const JOINT: Rgb<u8> = Rgb([200, 40, 40]);
const ROOT: Rgb<u8> = Rgb([40, 80, 200]);

/// Maps world x/y to pixels.
#[derive(Debug, Clone, Copy)]
pub struct Projection {
    scale: f64,
    cx: f64,
    cy: f64,
    size: u32,
}

impl Projection {
    /// Fits every joint of the sequence into a square of `size` pixels with a
    /// 10% margin.
    pub fn fit(poses: &PoseSequence, size: u32) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in poses.as_slice().chunks(3) {
            x0 = x0.min(p[0]);
            x1 = x1.max(p[0]);
            y0 = y0.min(p[1]);
            y1 = y1.max(p[1]);
        }
        let extent = (x1 - x0).max(y1 - y0).max(1e-6);
        Self {
            scale: 0.8 * size as f64 / extent,
            cx: (x0 + x1) / 2.0,
            cy: (y0 + y1) / 2.0,
            size,
        }
    }

    pub fn project(&self, p: [f64; 3]) -> (f64, f64) {
        let half = self.size as f64 / 2.0;
        (half + (p[0] - self.cx) * self.scale, half - (p[1] - self.cy) * self.scale)
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn disc(img: &mut RgbImage, (x, y): (f64, f64), r: f64, c: Rgb<u8>) {
    let ri = r.ceil() as i64;
    for dy in -ri..=ri {
        for dx in -ri..=ri {
            if (dx * dx + dy * dy) as f64 <= r * r {
                put(img, x.round() as i64 + dx, y.round() as i64 + dy, c);
            }
        }
    }
}

fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
    let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        disc(img, (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t), 1.0, c);
    }
}

/// Draws frame `t` of `poses`.
pub fn draw_frame(poses: &PoseSequence, t: usize, proj: &Projection) -> RgbImage {
    let mut img = RgbImage::from_pixel(proj.size, proj.size, BACKGROUND);
    let sk = poses.skeleton();
    for (child, parent) in sk.bones() {
        line(&mut img, proj.project(poses.joint(t, parent)), proj.project(poses.joint(t, child)), BONE);
    }
    let root = sk.root();
    for j in 0..poses.joints() {
        let c = if j == root { ROOT } else { JOINT };
        disc(&mut img, proj.project(poses.joint(t, j)), 3.0, c);
    }
    img
}

pub struct Rendered {
    pub frames: Vec<PathBuf>,
    pub gif: Option<PathBuf>,
    pub keyframes: Option<PathBuf>,
}

/// Evenly spaced frame indices, first and last included.
pub fn keyframe_indices(frames: usize, n: usize) -> Vec<usize> {
    match (frames, n) {
        (0, _) | (_, 0) => Vec::new(),
        (_, 1) => vec![0],
        _ => (0..n).map(|i| (i * (frames - 1) + (n - 1) / 2) / (n - 1)).collect(),
    }
}

/// Writes `frame_00000.png`, ... into `out`, plus the optional GIF and
/// keyframe strip.
pub fn render_sequence(
    poses: &PoseSequence,
    out: &Path,
    size: u32,
    gif: bool,
    keyframes: Option<usize>,
) -> Result<Rendered> {
    let proj = Projection::fit(poses, size);
    let images: Vec<RgbImage> = (0..poses.frames()).map(|t| draw_frame(poses, t, &proj)).collect();
    let mut frames = Vec::with_capacity(images.len());
    for (t, img) in images.iter().enumerate() {
        let path = out.join(format!("frame_{t:05}.png"));
        img.save(&path).with_context(|| format!("writing {}", path.display()))?;
        frames.push(path);
    }
    let gif_path = if gif {
        let path = out.join("animation.gif");
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut enc = GifEncoder::new(file);
        enc.set_repeat(Repeat::Infinite)?;
        let delay = Delay::from_numer_denom_ms(1000, poses.skeleton().fps.round().max(1.0) as u32);
        enc.encode_frames(images.iter().map(|img| {
            let rgba = RgbaImage::from_fn(img.width(), img.height(), |x, y| {
                let p = img.get_pixel(x, y).0;
                Rgba([p[0], p[1], p[2], 255])
            });
            Frame::from_parts(rgba, 0, 0, delay)
        }))?;
        Some(path)
    } else {
        None
    };
    let strip_path = match keyframes {
        Some(n) if n > 0 => {
            let idx = keyframe_indices(images.len(), n);
            let mut strip = RgbImage::from_pixel(size * idx.len() as u32, size, BACKGROUND);
            for (k, &t) in idx.iter().enumerate() {
                image::imageops::replace(&mut strip, &images[t], (k as u32 * size) as i64, 0);
            }
            let path = out.join("keyframes.png");
            strip.save(&path).with_context(|| format!("writing {}", path.display()))?;
            Some(path)
        }
        _ => None,
    };
    Ok(Rendered {
        frames,
        gif: gif_path,
        keyframes: strip_path,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use emogest_core::SkeletonSpec;

    use super::*;

    fn sequence(frames: usize) -> PoseSequence {
        let sk = Arc::new(SkeletonSpec::upper_body_8());
        let data = (0..frames * 24).map(|i| ((i % 24) as f64 * 0.1) + (i / 24) as f64 * 0.01).collect();
        PoseSequence::new(data, sk).unwrap()
    }

    #[test]
    fn keyframes_span_the_sequence() {
        assert_eq!(keyframe_indices(150, 5), vec![0, 37, 75, 112, 149]);
        assert_eq!(keyframe_indices(10, 1), vec![0]);
        assert!(keyframe_indices(0, 3).is_empty());
    }

    #[test]
    fn joints_land_inside_the_frame() {
        let poses = sequence(4);
        let proj = Projection::fit(&poses, 64);
        for t in 0..4 {
            for j in 0..8 {
                let (x, y) = proj.project(poses.joint(t, j));
                assert!((0.0..64.0).contains(&x) && (0.0..64.0).contains(&y));
            }
        }
        let img = draw_frame(&poses, 0, &proj);
        assert!(img.pixels().any(|p| *p == JOINT));
        assert!(img.pixels().any(|p| *p == BONE));
    }

    #[test]
    fn writes_one_png_per_frame() {
        let dir = tempfile::tempdir().unwrap();
        let r = render_sequence(&sequence(6), dir.path(), 32, true, Some(3)).unwrap();
        assert_eq!(r.frames.len(), 6);
        assert!(r.frames.iter().all(|p| p.is_file()));
        let strip = image::open(r.keyframes.unwrap()).unwrap();
        assert_eq!((strip.width(), strip.height()), (96, 32));
        assert!(r.gif.unwrap().is_file());
    }
}
