use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Vector3};

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::geometry::CameraModel;

/// Hypothesis count assumed when a camera file gives only `d_min d_interval`:
/// the far bound is `d_min + d_interval·(count − 1)`.
pub const DEFAULT_STAGE1_HYPOTHESES: usize = 48;

/// Rotations read from text are re-orthonormalised when they are off by less
/// than this (six-digit files are common); anything worse is rejected.
const ROTATION_REPAIR_LIMIT: f64 = 1e-3;

/// Serialises a camera in the MVSNet text layout:
///
/// ```text
/// extrinsic
/// r00 r01 r02 t0
/// r10 r11 r12 t1
/// r20 r21 r22 t2
/// 0 0 0 1
///
/// intrinsic
/// k00 k01 k02
/// k10 k11 k12
/// k20 k21 k22
///
/// d_min d_interval
/// ```
///
/// Values are printed in shortest round-trip form.
pub fn format_cam(cam: &CameraModel) -> String {
    let mut s = String::from("extrinsic\n");
    for r in 0..3 {
        let _ = writeln!(s, "{} {} {} {}", cam.r[(r, 0)], cam.r[(r, 1)], cam.r[(r, 2)], cam.t[r]);
    }
    s.push_str("0 0 0 1\n\nintrinsic\n");
    for r in 0..3 {
        let _ = writeln!(s, "{} {} {}", cam.k[(r, 0)], cam.k[(r, 1)], cam.k[(r, 2)]);
    }
    let (lo, hi) = cam.depth_range;
    let _ = writeln!(s, "\n{} {}", lo, (hi - lo) / (DEFAULT_STAGE1_HYPOTHESES - 1) as f64);
    s
}

struct Lines<'a> {
    origin: &'a str,
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.origin.to_string(),
            line,
            message: message.into(),
        }
    }

    /// Next non-blank line, or an error naming what was expected.
    fn next(&mut self, expecting: &str) -> Result<(usize, &'a str)> {
        for (i, l) in self.iter.by_ref() {
            self.last = i + 1;
            if !l.trim().is_empty() {
                return Ok((i + 1, l.trim()));
            }
        }
        Err(self.err(self.last + 1, format!("unexpected end of file, expected {expecting}")))
    }

    fn numbers(&mut self, expecting: &str, min: usize, max: usize) -> Result<(usize, Vec<f64>)> {
        let (n, l) = self.next(expecting)?;
        let vals: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| self.err(n, format!("{expecting}: {e}")))?;
        if vals.len() < min || vals.len() > max {
            let want = if min == max { min.to_string() } else { format!("{min}–{max}") };
            return Err(self.err(n, format!("{expecting}: expected {want} numbers, found {}", vals.len())));
        }
        Ok((n, vals))
    }

    fn keyword(&mut self, word: &str) -> Result<()> {
        let (n, l) = self.next(&format!("section '{word}'"))?;
        if l != word {
            return Err(self.err(n, format!("expected section '{word}', found '{l}'")));
        }
        Ok(())
    }
}

/// Parses the text layout written by [`format_cam`]. The depth line may hold
/// `d_min d_interval` or the four-value `d_min d_interval count d_max` form.
/// `origin` names the source in error messages.
pub fn parse_cam(text: &str, origin: &str) -> Result<CameraModel> {
    let mut lines = Lines {
        origin,
        iter: text.lines().enumerate(),
        last: 0,
    };
    lines.keyword("extrinsic")?;
    let mut r = Matrix3::zeros();
    let mut t = Vector3::zeros();
    for row in 0..3 {
        let (_, v) = lines.numbers("extrinsic row", 4, 4)?;
        for c in 0..3 {
            r[(row, c)] = v[c];
        }
        t[row] = v[3];
    }
    let (n, last) = lines.numbers("extrinsic row", 4, 4)?;
    if last != [0.0, 0.0, 0.0, 1.0] {
        return Err(lines.err(n, "last extrinsic row must be 0 0 0 1"));
    }
    lines.keyword("intrinsic")?;
    let mut k = Matrix3::zeros();
    for row in 0..3 {
        let (_, v) = lines.numbers("intrinsic row", 3, 3)?;
        for c in 0..3 {
            k[(row, c)] = v[c];
        }
    }
    let (n, depth) = lines.numbers("depth range line", 2, 4)?;
    let d_max = match depth.len() {
        4 => depth[3],
        2 => depth[0] + depth[1] * (DEFAULT_STAGE1_HYPOTHESES - 1) as f64,
        _ => depth[0] + depth[1] * (depth[2] - 1.0),
    };

    let drift = (r.transpose() * r - Matrix3::identity()).amax();
    if drift > 1e-9 && drift < ROTATION_REPAIR_LIMIT {
        log::warn!("{origin}: re-orthonormalising rotation (drift {drift:e})");
        r = Rotation3::from_matrix_eps(&r, 1e-15, 100, Rotation3::identity()).into_inner();
    }
    CameraModel::new(k, r, t, (depth[0], d_max)).map_err(|e| lines.err(n, e.to_string()))
}

pub fn read_cam(path: &Path) -> Result<CameraModel> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: "file is not UTF-8 text".into(),
    })?;
    parse_cam(&text, &path.display().to_string())
}

pub fn write_cam(path: &Path, cam: &CameraModel) -> Result<()> {
    write_bytes(path, format_cam(cam).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::look_at;

    fn sample() -> CameraModel {
        let r = look_at(&Vector3::new(300.0, 20.0, 0.0), &Vector3::new(0.0, 0.0, 600.0));
        let k = Matrix3::new(160.0, 0.0, 31.5, 0.0, 161.0, 32.5, 0.0, 0.0, 1.0);
        CameraModel::new(k, r, -(r * Vector3::new(300.0, 20.0, 0.0)), (425.0, 935.0)).unwrap()
    }

    #[test]
    fn round_trip() {
        let cam = sample();
        let back = parse_cam(&format_cam(&cam), "mem").unwrap();
        assert!((back.r - cam.r).amax() < 1e-9);
        assert!((back.t - cam.t).amax() < 1e-9);
        assert!((back.k - cam.k).amax() < 1e-9);
        assert!((back.depth_range.1 - 935.0).abs() < 1e-9);
    }

    #[test]
    fn two_value_depth_line() {
        let text = "extrinsic\n1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n\nintrinsic\n100 0 32\n0 100 32\n0 0 1\n\n425 10.851\n";
        let cam = parse_cam(text, "mem").unwrap();
        assert_eq!(cam.k, Matrix3::new(100.0, 0.0, 32.0, 0.0, 100.0, 32.0, 0.0, 0.0, 1.0));
        assert_eq!(cam.r, Matrix3::identity());
        assert_eq!(cam.depth_range.0, 425.0);
        // 425 + 47·10.851
        assert!((cam.depth_range.1 - 934.997).abs() < 1e-9);
        assert!((cam.interval(DEFAULT_STAGE1_HYPOTHESES) - 10.851).abs() < 1e-9);
    }

    #[test]
    fn four_value_depth_line() {
        let text = "extrinsic\n1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\nintrinsic\n100 0 32\n0 100 32\n0 0 1\n425 2.5 192 900\n";
        assert_eq!(parse_cam(text, "mem").unwrap().depth_range, (425.0, 900.0));
    }

    #[test]
    fn truncated_file_names_missing_section() {
        let text = "extrinsic\n1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n\n";
        let msg = parse_cam(text, "cams/x.txt").unwrap_err().to_string();
        assert!(msg.contains("intrinsic") && msg.contains("cams/x.txt"), "{msg}");
    }

    #[test]
    fn bad_number_reports_line() {
        let text = "extrinsic\n1 0 0 0\n0 1 zero 0\n";
        match parse_cam(text, "mem").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn six_digit_rotation_is_repaired() {
        let mut text = format_cam(&sample());
        let r = sample().r;
        let rounded = format!("{:.6} {:.6} {:.6}", r[(0, 0)], r[(0, 1)], r[(0, 2)]);
        let first = text.lines().nth(1).unwrap().to_string();
        let t0 = first.split_whitespace().nth(3).unwrap().to_string();
        text = text.replacen(&first, &format!("{rounded} {t0}"), 1);
        let cam = parse_cam(&text, "mem").unwrap();
        assert!((cam.r - r).amax() < 1e-5);
    }
}
