//! Binary PPM (P6) and PGM (P5) reading and writing, 8-bit only.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{LabelImage, RgbImage};

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    data_offset: usize,
}

fn parse_header(bytes: &[u8]) -> std::result::Result<Header, String> {
    if bytes.len() < 2 {
        return Err("file too short".into());
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and '#' comments may precede each header token
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err("expected a decimal header field".into());
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("header field out of range")?;
    }
    // exactly one whitespace byte separates the header from the samples
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err("missing separator after maxval".into()),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(format!("only maxval 255 is supported, got {maxval}"));
    }
    if width == 0 || height == 0 {
        return Err("zero-sized raster".into());
    }
    Ok(Header {
        magic,
        width,
        height,
        data_offset: pos,
    })
}

fn read_raster(path: &Path, magic: &[u8; 2], channels: usize) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::Raster {
        path: path.to_path_buf(),
        reason,
    };
    let header = parse_header(&bytes).map_err(bad)?;
    if &header.magic != magic {
        return Err(bad(format!(
            "expected magic {}, found {}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&header.magic)
        )));
    }
    let len = header.width * header.height * channels;
    let data = bytes
        .get(header.data_offset..header.data_offset + len)
        .ok_or_else(|| bad(format!("expected {len} sample bytes")))?;
    Ok((header.width, header.height, data.to_vec()))
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let (w, h, data) = read_raster(path, b"P6", 3)?;
    RgbImage::new(w, h, data)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<LabelImage> {
    let path = path.as_ref();
    let (w, h, data) = read_raster(path, b"P5", 1)?;
    LabelImage::new(w, h, data)
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.data());
    out
}

pub fn encode_pgm(labels: &LabelImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", labels.width(), labels.height()).into_bytes();
    out.extend_from_slice(labels.labels());
    out
}

pub fn write_ppm(path: impl AsRef<Path>, image: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(image)).map_err(|e| Error::io(path, e))
}

pub fn write_pgm(path: impl AsRef<Path>, labels: &LabelImage) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(labels)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_with_comments() {
        let mut bytes = b"P5\n# made by hand\n2 1\n# another\n255\n".to_vec();
        bytes.extend_from_slice(&[3, 4]);
        let h = parse_header(&bytes).unwrap();
        assert_eq!((h.width, h.height), (2, 1));
        assert_eq!(&bytes[h.data_offset..], &[3, 4]);
    }

    #[test]
    fn rejects_16_bit() {
        assert!(parse_header(b"P5 2 2 65535\n").is_err());
    }

    #[test]
    fn roundtrip_files() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::new(2, 1, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let lab = LabelImage::new(2, 1, vec![0, 255]).unwrap();
        write_ppm(dir.path().join("a.ppm"), &img).unwrap();
        write_pgm(dir.path().join("a.pgm"), &lab).unwrap();
        assert_eq!(read_ppm(dir.path().join("a.ppm")).unwrap(), img);
        assert_eq!(read_pgm(dir.path().join("a.pgm")).unwrap(), lab);
        // wrong magic
        assert!(read_pgm(dir.path().join("a.ppm")).is_err());
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.ppm");
        std::fs::write(&p, b"P6\n2 2\n255\n\x00\x01").unwrap();
        assert!(matches!(read_ppm(&p), Err(Error::Raster { .. })));
    }
}
