//! Deterministic schematic-face renderer.
//!
//! The face is a tilted head ellipse plus axis-aligned antialiased
//! rectangles (brows, eyelid bars, nose and chin markers, lip bars). Every
//! geometry-to-pixel map is linear with the coefficients below, and the
//! rectangle dimensions are chosen so the extractor can invert the maps
//! from pixel moments: rect positions come from centroids (exact for
//! integer-height/width bars), rect sizes and intensities from masses.
//!
//! AU channels used: AU01, AU02, AU04 (brows), AU05, AU07, AU45 (eyes),
//! AU12, AU20, AU25, AU26 (mouth). Eight of them are individually
//! invertible; AU25/AU26 only enter through their sum.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::features::AuPose;
use crate::synthesizer::image::FrameImage;

// All lengths are in pixels at the 32x32 base resolution and scale by
// res/32. Intensities are absolute.
pub mod coeffs {
    /// Head fill intensity; feature masses are measured above it.
    pub const HEAD_FILL: f64 = 0.30;
    /// Face center at rest, both axes.
    pub const CENTER: f64 = 16.0;
    /// Pixels of center shift per radian: x from ry, y from rx.
    pub const POSE_SHIFT: f64 = 1.2;
    /// Ellipse semi-axes.
    pub const ELLIPSE_A: f64 = 13.5;
    pub const ELLIPSE_B: f64 = 14.5;
    /// Ellipse tilt radians per rz radian.
    pub const TILT_PER_RZ: f64 = 0.12;

    /// Nose marker: rect W x H at (cx, cy + NOSE_DY).
    pub const NOSE_W: f64 = 3.0;
    pub const NOSE_H: f64 = 2.0;
    pub const NOSE_DY: f64 = 2.0;
    pub const MARKER_INTENSITY: f64 = 0.75;

    /// Chin marker: rect W x H at cy + CHIN_DIST rotated by the tilt.
    pub const CHIN_W: f64 = 3.0;
    pub const CHIN_H: f64 = 2.0;
    pub const CHIN_DIST: f64 = 12.5;

    /// Brows: 5x2 bars at x = cx -/+ BROW_DX.
    /// y = cy - (BROW_BASE + BROW_RAISE*(AU01+AU02-AU04) +/- BROW_ASYM*(AU01-AU02))
    /// intensity = BROW_I0 + BROW_I_PER_AU04 * AU04.
    pub const BROW_W: f64 = 5.0;
    pub const BROW_H: f64 = 2.0;
    pub const BROW_DX: f64 = 5.5;
    pub const BROW_BASE: f64 = 8.0;
    pub const BROW_RAISE: f64 = 0.12;
    pub const BROW_ASYM: f64 = 0.1;
    pub const BROW_I0: f64 = 0.60;
    pub const BROW_I_PER_AU04: f64 = 0.08;

    /// Eyes: per side, two 3x1 lid bars around the eye center at
    /// x = cx -/+ (EYE_DX + EYE_SEP_PER_AU07 * AU07),
    /// y = cy - (EYE_BASE + EYE_RAISE * AU05).
    /// The lid gap (aperture) = APERTURE_PER_UNIT * max(AU05-AU07-AU45, 0).
    pub const EYE_BAR_W: f64 = 3.0;
    pub const EYE_BAR_H: f64 = 1.0;
    pub const EYE_DX: f64 = 4.0;
    pub const EYE_SEP_PER_AU07: f64 = 0.16;
    pub const EYE_BASE: f64 = 2.4;
    pub const EYE_RAISE: f64 = 0.1;
    pub const APERTURE_PER_UNIT: f64 = 0.5;
    pub const EYE_INTENSITY: f64 = 0.9;

    /// Mouth: two lip bars of width MOUTH_W0 + MOUTH_W_PER_UNIT*(AU12+AU20),
    /// height 2, around y = cy + MOUTH_BASE - MOUTH_RAISE*AU12, separated by
    /// the opening MOUTH_OPEN_PER_UNIT*(AU25+AU26).
    pub const LIP_H: f64 = 2.0;
    pub const MOUTH_W0: f64 = 3.0;
    pub const MOUTH_W_PER_UNIT: f64 = 0.5;
    pub const MOUTH_BASE: f64 = 7.5;
    pub const MOUTH_RAISE: f64 = 0.1;
    pub const MOUTH_OPEN_PER_UNIT: f64 = 0.2;
    pub const MOUTH_INTENSITY: f64 = 1.0;
}

use coeffs::*;

/// Axis-aligned rectangle with analytic pixel coverage.
#[derive(Debug, Clone, Copy)]
struct Rect {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    intensity: f64,
}

fn overlap(lo: f64, hi: f64, p: f64) -> f64 {
    (hi.min(p + 1.0) - lo.max(p)).max(0.0)
}

fn blend_rect(img: &mut FrameImage, r: &Rect) {
    if r.w <= 0.0 || r.h <= 0.0 {
        return;
    }
    let (x0, x1) = (r.cx - r.w / 2.0, r.cx + r.w / 2.0);
    let (y0, y1) = (r.cy - r.h / 2.0, r.cy + r.h / 2.0);
    let px0 = (x0.floor().max(0.0)) as usize;
    let px1 = (x1.ceil().min(img.width() as f64)) as usize;
    let py0 = (y0.floor().max(0.0)) as usize;
    let py1 = (y1.ceil().min(img.height() as f64)) as usize;
    for py in py0..py1 {
        let oy = overlap(y0, y1, py as f64);
        if oy == 0.0 {
            continue;
        }
        for px in px0..px1 {
            let ox = overlap(x0, x1, px as f64);
            if ox == 0.0 {
                continue;
            }
            let cov = ox * oy;
            let old = img.get(px, py);
            img.set(px, py, old * (1.0 - cov) + r.intensity * cov);
        }
    }
}

/// Filled tilted ellipse via 4x4 supersampling (dyadic offsets keep the
/// neutral face bit-exactly mirror symmetric).
fn fill_ellipse(img: &mut FrameImage, cx: f64, cy: f64, a: f64, b: f64, theta: f64) {
    let (sin_t, cos_t) = theta.sin_cos();
    let res_w = img.width();
    let res_h = img.height();
    for py in 0..res_h {
        for px in 0..res_w {
            let mut hits = 0u32;
            for sy in 0..4u32 {
                let y = py as f64 + (sy as f64 + 0.5) / 4.0 - cy;
                for sx in 0..4u32 {
                    let x = px as f64 + (sx as f64 + 0.5) / 4.0 - cx;
                    let u = x * cos_t + y * sin_t;
                    let v = -x * sin_t + y * cos_t;
                    if (u / a) * (u / a) + (v / b) * (v / b) <= 1.0 {
                        hits += 1;
                    }
                }
            }
            if hits > 0 {
                let cov = hits as f64 / 16.0;
                let old = img.get(px, py);
                img.set(px, py, old * (1.0 - cov) + HEAD_FILL * cov);
            }
        }
    }
}

/// Derived rectangle layout for a (clamped) AU+POSE frame at scale u.
pub(crate) struct FaceLayout {
    pub cx: f64,
    pub cy: f64,
    pub theta: f64,
    rects: Vec<Rect>,
}

pub(crate) fn layout(p: &AuPose, u: f64) -> FaceLayout {
    let au = &p.au;
    let (rx, ry, rz) = (p.pose[0], p.pose[1], p.pose[2]);
    let cx = (CENTER + POSE_SHIFT * ry) * u;
    let cy = (CENTER + POSE_SHIFT * rx) * u;
    let theta = TILT_PER_RZ * rz;

    let mut rects = Vec::with_capacity(11);
    // nose and chin markers
    rects.push(Rect {
        cx,
        cy: cy + NOSE_DY * u,
        w: NOSE_W * u,
        h: NOSE_H * u,
        intensity: MARKER_INTENSITY,
    });
    rects.push(Rect {
        cx: cx - CHIN_DIST * u * theta.sin(),
        cy: cy + CHIN_DIST * u * theta.cos(),
        w: CHIN_W * u,
        h: CHIN_H * u,
        intensity: MARKER_INTENSITY,
    });
    // brows: AU01 inner raise, AU02 outer raise, AU04 lowers and darkens
    let raise_combo = au[0] + au[1] - au[2];
    let asym = au[0] - au[1];
    let brow_i = BROW_I0 + BROW_I_PER_AU04 * au[2];
    for (side, sign) in [(-1.0f64, 1.0f64), (1.0, -1.0)] {
        rects.push(Rect {
            cx: cx + side * BROW_DX * u,
            cy: cy - (BROW_BASE + BROW_RAISE * raise_combo + sign * BROW_ASYM * asym) * u,
            w: BROW_W * u,
            h: BROW_H * u,
            intensity: brow_i,
        });
    }
    // eyes: two lid bars per side; the gap between them is the aperture
    let aperture = APERTURE_PER_UNIT * (au[3] - au[5] - au[16]).max(0.0);
    let eye_y = cy - (EYE_BASE + EYE_RAISE * au[3]) * u;
    let eye_dx = (EYE_DX + EYE_SEP_PER_AU07 * au[5]) * u;
    for side in [-1.0f64, 1.0] {
        let x = cx + side * eye_dx;
        let half = (EYE_BAR_H / 2.0 + aperture / 2.0) * u;
        rects.push(Rect {
            cx: x,
            cy: eye_y - half,
            w: EYE_BAR_W * u,
            h: EYE_BAR_H * u,
            intensity: EYE_INTENSITY,
        });
        rects.push(Rect {
            cx: x,
            cy: eye_y + half,
            w: EYE_BAR_W * u,
            h: EYE_BAR_H * u,
            intensity: EYE_INTENSITY,
        });
    }
    // mouth: two lips around the mouth line, opening with AU25+AU26
    let mouth_w = (MOUTH_W0 + MOUTH_W_PER_UNIT * (au[8] + au[12])) * u;
    let mouth_y = cy + (MOUTH_BASE - MOUTH_RAISE * au[8]) * u;
    let opening = MOUTH_OPEN_PER_UNIT * (au[14] + au[15]);
    let lip_half = (LIP_H / 2.0 + opening / 2.0) * u;
    for side in [-1.0f64, 1.0] {
        rects.push(Rect {
            cx,
            cy: mouth_y + side * lip_half,
            w: mouth_w,
            h: LIP_H * u,
            intensity: MOUTH_INTENSITY,
        });
    }
    FaceLayout {
        cx,
        cy,
        theta,
        rects,
    }
}

/// Renders the schematic face. Out-of-range inputs are clamped to native
/// ranges; the returned flag reports whether clamping occurred.
pub fn render_face(p: &AuPose, res: usize) -> Result<(FrameImage, bool)> {
    let clamped = p.clamp_native();
    let was_clamped = clamped != *p;
    let u = res as f64 / 32.0;
    let mut img = FrameImage::zeros(res, res);
    let lay = layout(&clamped, u);
    fill_ellipse(
        &mut img,
        lay.cx,
        lay.cy,
        ELLIPSE_A * u,
        ELLIPSE_B * u,
        lay.theta,
    );
    for r in &lay.rects {
        blend_rect(&mut img, r);
    }
    Ok((img, was_clamped))
}

/// Writes the coefficient table as `name = value` lines so external tools
/// can verify the inversion.
pub fn write_renderer_spec(path: &Path) -> Result<()> {
    let mut out = String::new();
    let mut kv = |k: &str, v: f64| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("head_fill", HEAD_FILL);
    kv("center", CENTER);
    kv("pose_shift_px_per_rad", POSE_SHIFT);
    kv("ellipse_a", ELLIPSE_A);
    kv("ellipse_b", ELLIPSE_B);
    kv("tilt_per_rz", TILT_PER_RZ);
    kv("nose_w", NOSE_W);
    kv("nose_h", NOSE_H);
    kv("nose_dy", NOSE_DY);
    kv("marker_intensity", MARKER_INTENSITY);
    kv("chin_w", CHIN_W);
    kv("chin_h", CHIN_H);
    kv("chin_dist", CHIN_DIST);
    kv("brow_w", BROW_W);
    kv("brow_h", BROW_H);
    kv("brow_dx", BROW_DX);
    kv("brow_base", BROW_BASE);
    kv("brow_raise_per_unit", BROW_RAISE);
    kv("brow_asym_per_unit", BROW_ASYM);
    kv("brow_intensity_base", BROW_I0);
    kv("brow_intensity_per_au04", BROW_I_PER_AU04);
    kv("eye_bar_w", EYE_BAR_W);
    kv("eye_bar_h", EYE_BAR_H);
    kv("eye_dx", EYE_DX);
    kv("eye_sep_per_au07", EYE_SEP_PER_AU07);
    kv("eye_base", EYE_BASE);
    kv("eye_raise_per_au05", EYE_RAISE);
    kv("aperture_per_unit", APERTURE_PER_UNIT);
    kv("eye_intensity", EYE_INTENSITY);
    kv("lip_h", LIP_H);
    kv("mouth_w0", MOUTH_W0);
    kv("mouth_w_per_unit", MOUTH_W_PER_UNIT);
    kv("mouth_base", MOUTH_BASE);
    kv("mouth_raise_per_au12", MOUTH_RAISE);
    kv("mouth_open_per_unit", MOUTH_OPEN_PER_UNIT);
    kv("mouth_intensity", MOUTH_INTENSITY);
    std::fs::write(path, out)?;
    Ok(())
}
