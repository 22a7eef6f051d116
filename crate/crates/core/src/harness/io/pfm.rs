use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Single-channel little-endian PFM: `Pf\n{w} {h}\n-1.0\n` followed by
/// `f32` samples, bottom row first. Values are narrowed to `f32`.
pub fn encode_pfm(map: &Tensor) -> Result<Vec<u8>> {
    map.expect_ndim("encode_pfm", 2)?;
    let (h, w) = map.hw();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * h * w);
    for row in map.data().chunks(w.max(1)).rev() {
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Header {
    width: usize,
    height: usize,
    little_endian: bool,
    data_start: usize,
}

fn parse_header(bytes: &[u8], origin: &str) -> Result<Header> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut pos = 0;
    let mut line = 1;
    let mut token = |what: &str| -> Result<(String, usize)> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            if bytes[pos] == b'\n' {
                line += 1;
            }
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(err(line, format!("header ends before the {what}")));
        }
        Ok((String::from_utf8_lossy(&bytes[start..pos]).into_owned(), line))
    };
    let (magic, l) = token("magic")?;
    match magic.as_str() {
        "Pf" => {}
        "PF" => return Err(err(l, "three-channel PFM is not a depth map".into())),
        other => return Err(err(l, format!("bad magic '{other}', expected 'Pf'"))),
    }
    let mut dim = |what: &str| -> Result<usize> {
        let (t, l) = token(what)?;
        match t.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(err(l, format!("bad {what} '{t}'"))),
        }
    };
    let width = dim("width")?;
    let height = dim("height")?;
    let (scale, l) = token("scale")?;
    let scale: f64 = scale.parse().map_err(|_| err(l, format!("bad scale '{scale}'")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(err(l, "scale must be a nonzero number".into()));
    }
    // exactly one whitespace byte separates the header from the samples
    if pos >= bytes.len() {
        return Err(err(l, "missing sample data".into()));
    }
    Ok(Header {
        width,
        height,
        little_endian: scale < 0.0,
        data_start: pos + 1,
    })
}

/// Inverse of [`encode_pfm`]; also accepts big-endian files (positive scale).
pub fn decode_pfm(bytes: &[u8], origin: &str) -> Result<Tensor> {
    let hdr = parse_header(bytes, origin)?;
    let (w, h) = (hdr.width, hdr.height);
    let need = 4 * w * h;
    let body = &bytes[hdr.data_start.min(bytes.len())..];
    if body.len() != need {
        return Err(Error::Parse {
            path: origin.to_string(),
            line: 3,
            message: format!("{w}×{h} map needs {need} data bytes, found {}", body.len()),
        });
    }
    let mut data = vec![0.0; w * h];
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if hdr.little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (row, col) = (h - 1 - i / w, i % w);
        data[row * w + col] = v as f64;
    }
    Tensor::new(&[h, w], data)
}

pub fn write_pfm(path: &Path, map: &Tensor) -> Result<()> {
    write_bytes(path, &encode_pfm(map)?)
}

pub fn read_pfm(path: &Path) -> Result<Tensor> {
    decode_pfm(&read_bytes(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_layout() {
        let bytes = encode_pfm(&Tensor::full(&[1, 1], 600.0)).unwrap();
        let mut want = b"Pf\n1 1\n-1.0\n".to_vec();
        want.extend_from_slice(&[0x00, 0x00, 0x16, 0x44]);
        assert_eq!(bytes, want);
    }

    #[test]
    fn rows_are_stored_bottom_up() {
        let t = Tensor::new(&[2, 1], vec![1.0, 2.0]).unwrap();
        let bytes = encode_pfm(&t).unwrap();
        assert_eq!(&bytes[bytes.len() - 8..bytes.len() - 4], &2.0f32.to_le_bytes());
    }

    #[test]
    fn big_endian_input() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&1.5f32.to_be_bytes());
        bytes.extend_from_slice(&(-3.25f32).to_be_bytes());
        let t = decode_pfm(&bytes, "mem").unwrap();
        assert_eq!(t.data(), &[1.5, -3.25]);
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(decode_pfm(b"PF\n1 1\n-1.0\n\0\0\0\0", "mem").is_err());
        assert!(decode_pfm(b"P6\n1 1\n-1.0\n\0\0\0\0", "mem").is_err());
        assert!(decode_pfm(b"Pf\n0 1\n-1.0\n", "mem").is_err());
        assert!(decode_pfm(b"Pf\n2 2\n-1.0\n\0\0\0\0", "mem").is_err());
        let msg = decode_pfm(b"Pf\n2 x\n-1.0\n", "a.pfm").unwrap_err().to_string();
        assert!(msg.contains("a.pfm:2"), "{msg}");
    }
}
