//! Conditioning images: the 20 normalized feature values written as a
//! centered 5x4 grid of 2x2 pixel patches on an empty image.

use crate::error::{Error, Result};
use crate::features::{AuPose, NormStats, FRAME_DIM};
use crate::synthesizer::image::FrameImage;

pub const PATCH: usize = 2;
pub const GRID_ROWS: usize = 5;
pub const GRID_COLS: usize = 4;
pub const BLOCK_H: usize = GRID_ROWS * PATCH; // 10
pub const BLOCK_W: usize = GRID_COLS * PATCH; // 8

/// Feature order is row-major: the 17 AUs then rx, ry, rz.
pub fn aupose_to_conditioning_image(
    p: &AuPose,
    stats: &NormStats,
    res: usize,
) -> Result<FrameImage> {
    if res < BLOCK_H || res < BLOCK_W {
        return Err(Error::Data(format!(
            "resolution {res} too small for the {BLOCK_H}x{BLOCK_W} feature block"
        )));
    }
    let values = stats.normalize(p).to_vec20();
    let mut img = FrameImage::zeros(res, res);
    let top = (res - BLOCK_H) / 2;
    let left = (res - BLOCK_W) / 2;
    for (f, &v) in values.iter().enumerate() {
        let row = f / GRID_COLS;
        let col = f % GRID_COLS;
        for dy in 0..PATCH {
            for dx in 0..PATCH {
                img.set(left + col * PATCH + dx, top + row * PATCH + dy, v);
            }
        }
    }
    Ok(img)
}

/// Reads the normalized feature values back from patch corners.
pub fn read_back_features(img: &FrameImage) -> Result<[f64; FRAME_DIM]> {
    let res_h = img.height();
    let res_w = img.width();
    if res_h < BLOCK_H || res_w < BLOCK_W {
        return Err(Error::Data("image too small for feature block".into()));
    }
    let top = (res_h - BLOCK_H) / 2;
    let left = (res_w - BLOCK_W) / 2;
    let mut out = [0.0; FRAME_DIM];
    for (f, slot) in out.iter_mut().enumerate() {
        let row = f / GRID_COLS;
        let col = f % GRID_COLS;
        *slot = img.get(left + col * PATCH, top + row * PATCH);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{AU_MAX, NUM_AU, POSE_MAX, POSE_MIN};

    #[test]
    fn min_features_give_empty_looking_center() {
        let stats = NormStats::native_ranges();
        let mut p = AuPose::zero();
        p.pose = [POSE_MIN; 3];
        let img = aupose_to_conditioning_image(&p, &stats, 32).unwrap();
        assert!(img.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn max_features_fill_center_with_ones() {
        let stats = NormStats::native_ranges();
        let p = AuPose {
            au: [AU_MAX; NUM_AU],
            pose: [POSE_MAX; 3],
        };
        let img = aupose_to_conditioning_image(&p, &stats, 32).unwrap();
        let top = (32 - BLOCK_H) / 2;
        let left = (32 - BLOCK_W) / 2;
        for y in 0..32 {
            for x in 0..32 {
                let inside =
                    y >= top && y < top + BLOCK_H && x >= left && x < left + BLOCK_W;
                assert_eq!(img.get(x, y), if inside { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn read_back_is_exact() {
        let stats = NormStats::native_ranges();
        let mut p = AuPose::zero();
        for (i, a) in p.au.iter_mut().enumerate() {
            *a = (i as f64 * 0.29) % 5.0;
        }
        p.pose = [0.3, -0.7, 1.1];
        let img = aupose_to_conditioning_image(&p, &stats, 32).unwrap();
        let back = read_back_features(&img).unwrap();
        let expected = stats.normalize(&p).to_vec20();
        assert_eq!(back, expected);
    }

    #[test]
    fn too_small_resolution_is_error() {
        let stats = NormStats::native_ranges();
        assert!(aupose_to_conditioning_image(&AuPose::zero(), &stats, 8).is_err());
        assert!(aupose_to_conditioning_image(&AuPose::zero(), &stats, 10).is_ok());
    }
}
