use std::path::Path;

use nalgebra::Vector3;

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::harness::cloud::PointCloud;

fn header(count: usize) -> String {
    format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {count}\n\
         property float x\nproperty float y\nproperty float z\nend_header\n"
    )
}

/// Binary little-endian PLY with `float x, y, z` per vertex; coordinates are
/// narrowed to `f32` and confidences are not stored.
pub fn encode_ply(cloud: &PointCloud) -> Vec<u8> {
    let mut out = header(cloud.len()).into_bytes();
    out.reserve(12 * cloud.len());
    for p in &cloud.points {
        for v in p.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

/// Reads files in the layout of [`encode_ply`]: a single vertex element whose
/// first three properties are `float x`, `float y`, `float z`.
pub fn decode_ply(bytes: &[u8], origin: &str) -> Result<PointCloud> {
    let err = |line: usize, message: &str| Error::Parse {
        path: origin.to_string(),
        line,
        message: message.to_string(),
    };
    let marker = b"end_header\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| err(1, "missing end_header"))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| err(1, "header is not text"))?;
    let lines: Vec<&str> = text.lines().collect();
    let expect = |i: usize, want: &str| -> Result<()> {
        match lines.get(i) {
            Some(l) if l.trim() == want => Ok(()),
            Some(l) => Err(err(i + 1, &format!("expected '{want}', found '{}'", l.trim()))),
            None => Err(err(i + 1, &format!("expected '{want}'"))),
        }
    };
    expect(0, "ply")?;
    expect(1, "format binary_little_endian 1.0")?;
    let count: usize = lines
        .get(2)
        .and_then(|l| l.trim().strip_prefix("element vertex "))
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| err(3, "expected 'element vertex <count>'"))?;
    expect(3, "property float x")?;
    expect(4, "property float y")?;
    expect(5, "property float z")?;
    if lines.len() != 6 {
        return Err(err(7, "only x, y, z vertex properties are supported"));
    }
    let body = &bytes[end + marker.len()..];
    if body.len() != 12 * count {
        return Err(err(
            lines.len() + 1,
            &format!("{count} vertices need {} bytes, found {}", 12 * count, body.len()),
        ));
    }
    let points = body
        .chunks_exact(12)
        .map(|c| {
            let f = |o: usize| f32::from_le_bytes([c[o], c[o + 1], c[o + 2], c[o + 3]]) as f64;
            Vector3::new(f(0), f(4), f(8))
        })
        .collect();
    Ok(PointCloud::new(points))
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_bytes(path, &encode_ply(cloud))
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    decode_ply(&read_bytes(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_cloud_is_valid() {
        let bytes = encode_ply(&PointCloud::default());
        assert_eq!(bytes.len(), header(0).len());
        assert!(decode_ply(&bytes, "mem").unwrap().is_empty());
    }

    #[test]
    fn one_point_round_trip() {
        let c = PointCloud::new(vec![Vector3::new(1.5, -2.0, 600.25)]);
        assert_eq!(decode_ply(&encode_ply(&c), "mem").unwrap(), c);
    }

    #[test]
    fn size_is_header_plus_twelve_per_point() {
        let n = 100_000;
        let c = PointCloud::new((0..n).map(|i| Vector3::new(i as f64, 0.0, 1.0)).collect());
        assert_eq!(encode_ply(&c).len(), header(n).len() + 12 * n);
    }

    #[test]
    fn truncated_body_rejected() {
        let mut bytes = encode_ply(&PointCloud::new(vec![Vector3::zeros(); 2]));
        bytes.pop();
        assert!(decode_ply(&bytes, "mem").is_err());
        assert!(decode_ply(b"ply\nformat ascii 1.0\nend_header\n", "mem").is_err());
    }
}
