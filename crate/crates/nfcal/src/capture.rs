//! Capture bundles: a directory holding `depth.f32`, `rgb.ppm` and
//! `intrinsics.txt`.
//!
//! `depth.f32` is a three-line text header followed by row-major
//! little-endian `f32` samples:
//!
//! ```text
//! NFDEPTH1
//! <width> <height>
//! <scale>
//! ```
//!
//! Depth in meters is `sample * scale`. Zero or non-finite samples mark
//! invalid pixels.

use std::path::Path;

use nfcal_core::{CameraIntrinsics, DepthCapture};

use crate::error::{self, IoError, Result};

pub const DEPTH_FILE: &str = "depth.f32";
pub const RGB_FILE: &str = "rgb.ppm";
pub const INTRINSICS_FILE: &str = "intrinsics.txt";

const DEPTH_MAGIC: &str = "NFDEPTH1";

/// Raw depth samples already scaled to meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f32>,
}

/// Splits `count` newline-terminated header lines off `bytes`.
fn header_lines<'a>(bytes: &'a [u8], count: usize, format: &'static str) -> Result<(Vec<&'a str>, &'a [u8])> {
    let mut lines = Vec::with_capacity(count);
    let mut rest = bytes;
    for _ in 0..count {
        let end = rest
            .iter()
            .take(256)
            .position(|b| *b == b'\n')
            .ok_or_else(|| IoError::malformed(format, "truncated header"))?;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| IoError::malformed(format, "header is not UTF-8"))?;
        lines.push(line.trim_end_matches('\r'));
        rest = &rest[end + 1..];
    }
    Ok((lines, rest))
}

pub fn parse_depth(bytes: &[u8]) -> Result<DepthMap> {
    const F: &str = "depth map";
    let (lines, data) = header_lines(bytes, 3, F)?;
    if lines[0] != DEPTH_MAGIC {
        return Err(IoError::malformed(F, format!("bad magic {:?}", lines[0])));
    }
    let dims: Vec<&str> = lines[1].split_whitespace().collect();
    let [w, h] = dims.as_slice() else {
        return Err(IoError::malformed(F, "expected `<width> <height>`"));
    };
    let width: usize = w
        .parse()
        .map_err(|_| IoError::malformed(F, format!("bad width {w:?}")))?;
    let height: usize = h
        .parse()
        .map_err(|_| IoError::malformed(F, format!("bad height {h:?}")))?;
    let scale: f64 = lines[2]
        .trim()
        .parse()
        .map_err(|_| IoError::malformed(F, format!("bad scale {:?}", lines[2])))?;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(IoError::malformed(F, format!("scale {scale} must be positive")));
    }
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| IoError::malformed(F, "dimensions overflow"))?;
    if data.len() != expected {
        return Err(IoError::malformed(
            F,
            format!("{width}x{height} needs {expected} data bytes, found {}", data.len()),
        ));
    }
    let depth = data
        .chunks_exact(4)
        .map(|c| {
            let raw = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if scale == 1.0 {
                raw
            } else {
                (raw as f64 * scale) as f32
            }
        })
        .collect();
    Ok(DepthMap { width, height, depth })
}

pub fn format_depth(width: usize, height: usize, depth: &[f32]) -> Vec<u8> {
    let mut out = format!("{DEPTH_MAGIC}\n{width} {height}\n1\n").into_bytes();
    out.reserve(depth.len() * 4);
    for d in depth {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out
}

/// Binary PPM (`P6`, maxval 255) as `(width, height, pixels)`.
pub fn parse_ppm(bytes: &[u8]) -> Result<(usize, usize, Vec<[u8; 3]>)> {
    const F: &str = "PPM image";
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|b| *b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(IoError::malformed(F, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
            pos += 1;
            if pos - start > 20 {
                return Err(IoError::malformed(F, "header field too long"));
            }
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P6" {
        return Err(IoError::malformed(F, format!("unsupported magic {:?}", fields[0])));
    }
    let number = |s: &str, what: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| IoError::malformed(F, format!("bad {what} {s:?}")))
    };
    let width = number(&fields[1], "width")?;
    let height = number(&fields[2], "height")?;
    let maxval = number(&fields[3], "maxval")?;
    if maxval != 255 {
        return Err(IoError::malformed(F, format!("maxval {maxval} unsupported, need 255")));
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(IoError::malformed(F, "missing whitespace after header"));
    }
    let data = &bytes[pos + 1..];
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| IoError::malformed(F, "dimensions overflow"))?;
    if data.len() != expected {
        return Err(IoError::malformed(
            F,
            format!("{width}x{height} needs {expected} data bytes, found {}", data.len()),
        ));
    }
    let pixels = data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok((width, height, pixels))
}

pub fn format_ppm(width: usize, height: usize, pixels: &[[u8; 3]]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.reserve(pixels.len() * 3);
    for p in pixels {
        out.extend_from_slice(p);
    }
    out
}

/// `fx fy cx cy`, one value per line.
pub fn parse_intrinsics(text: &str) -> Result<CameraIntrinsics> {
    const F: &str = "intrinsics";
    let values: Vec<&str> = text.split_whitespace().collect();
    if values.len() != 4 {
        return Err(IoError::malformed(
            F,
            format!("expected 4 values, found {}", values.len()),
        ));
    }
    let mut v = [0.0; 4];
    for (slot, s) in v.iter_mut().zip(&values) {
        *slot = s
            .parse()
            .map_err(|_| IoError::malformed(F, format!("bad number {s:?}")))?;
    }
    Ok(CameraIntrinsics::new(v[0], v[1], v[2], v[3])?)
}

pub fn format_intrinsics(k: &CameraIntrinsics) -> String {
    format!("{:?}\n{:?}\n{:?}\n{:?}\n", k.fx, k.fy, k.cx, k.cy)
}

/// Assembles a capture from the three bundle files' contents.
pub fn parse_capture(depth: &[u8], rgb: &[u8], intrinsics: &str) -> Result<DepthCapture> {
    let map = parse_depth(depth)?;
    let (w, h, pixels) = parse_ppm(rgb)?;
    if (w, h) != (map.width, map.height) {
        return Err(IoError::malformed(
            "capture bundle",
            format!("depth is {}x{} but rgb is {w}x{h}", map.width, map.height),
        ));
    }
    let k = parse_intrinsics(intrinsics)?;
    Ok(DepthCapture::new(map.width, map.height, map.depth, pixels, k)?)
}

pub fn load_capture(dir: &Path) -> Result<DepthCapture> {
    let depth = error::read(&dir.join(DEPTH_FILE))?;
    let rgb = error::read(&dir.join(RGB_FILE))?;
    let k = error::read(&dir.join(INTRINSICS_FILE))?;
    let k = String::from_utf8(k).map_err(|_| IoError::malformed("intrinsics", "not UTF-8"))?;
    parse_capture(&depth, &rgb, &k)
}

pub fn save_capture(dir: &Path, capture: &DepthCapture) -> Result<()> {
    let (w, h) = (capture.width(), capture.height());
    error::write(&dir.join(DEPTH_FILE), &format_depth(w, h, capture.depth()))?;
    error::write(&dir.join(RGB_FILE), &format_ppm(w, h, capture.rgb()))?;
    error::write(
        &dir.join(INTRINSICS_FILE),
        format_intrinsics(capture.intrinsics()).as_bytes(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DepthCapture {
        let k = CameraIntrinsics::new(500.0, 501.5, 0.5, 0.25).unwrap();
        DepthCapture::new(
            2,
            2,
            vec![0.3, 0.0, 1.25, f32::from_bits(0.3f32.to_bits() + 1)],
            vec![[1, 2, 3], [4, 5, 6], [7, 8, 9], [255, 0, 128]],
            k,
        )
        .unwrap()
    }

    #[test]
    fn two_by_two_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let c = tiny();
        save_capture(dir.path(), &c).unwrap();
        let back = load_capture(dir.path()).unwrap();
        assert_eq!(back, c);
        for (a, b) in back.depth().iter().zip(c.depth()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_depth_is_malformed() {
        let bytes = format_depth(2, 2, &[0.3; 4]);
        for cut in 0..bytes.len() {
            assert!(
                matches!(parse_depth(&bytes[..cut]), Err(IoError::Malformed { .. })),
                "cut {cut}"
            );
        }
    }

    #[test]
    fn nan_depth_is_invalid_pixel() {
        let bytes = format_depth(2, 1, &[f32::NAN, 0.5]);
        let map = parse_depth(&bytes).unwrap();
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let c = DepthCapture::new(2, 1, map.depth, vec![[0; 3]; 2], k).unwrap();
        assert_eq!(c.depth(), &[0.0, 0.5]);
    }

    #[test]
    fn depth_scale_converts_to_meters() {
        let mut bytes = b"NFDEPTH1\n1 1\n0.001\n".to_vec();
        bytes.extend_from_slice(&300f32.to_le_bytes());
        assert_eq!(parse_depth(&bytes).unwrap().depth, vec![0.3f32]);
    }

    #[test]
    fn ppm_comments_are_skipped() {
        let mut bytes = b"P6 # made by hand\n1 1\n# max\n255\n".to_vec();
        bytes.extend_from_slice(&[9, 8, 7]);
        assert_eq!(parse_ppm(&bytes).unwrap(), (1, 1, vec![[9, 8, 7]]));
    }

    #[test]
    fn mismatched_bundle_is_rejected() {
        let depth = format_depth(2, 2, &[0.3; 4]);
        let rgb = format_ppm(1, 1, &[[0; 3]]);
        assert!(matches!(
            parse_capture(&depth, &rgb, "1\n1\n0\n0\n"),
            Err(IoError::Malformed { .. })
        ));
    }

    #[test]
    fn bad_intrinsics_are_rejected() {
        assert!(parse_intrinsics("1 2 3").is_err());
        assert!(matches!(parse_intrinsics("-1 2 3 4"), Err(IoError::Core(_))));
    }
}
