//! Little-endian binary container for images, sinograms and weights maps.
//!
//! ```text
//! "TPRI"  u32 version  u32 kind  u32 rank  u32 extent[rank]
//! sinograms only: u32 num_views  u32 num_bins  f64 bin_spacing  f64 angle[num_views]
//! f64 payload[product of extents]
//! ```
//!
//! Images and weights use extents `[width, height]`, sinograms
//! `[num_bins, num_views]`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::core::{Geometry, Image, Sinogram};
use crate::error::{Error, Result};
use crate::weights::WeightsMap;

pub const MAGIC: &[u8; 4] = b"TPRI";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Image = 1,
    Sinogram = 2,
    Weights = 3,
}

impl Kind {
    fn from_u32(v: u32) -> Option<Self> {
        match v {
            1 => Some(Kind::Image),
            2 => Some(Kind::Sinogram),
            3 => Some(Kind::Weights),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Kind::Image => "image",
            Kind::Sinogram => "sinogram",
            Kind::Weights => "weights",
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn header(kind: Kind, extents: [usize; 2]) -> Self {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.u32(kind as u32);
        w.u32(2);
        w.u32(extents[0] as u32);
        w.u32(extents[1] as u32);
        w
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        self.0.reserve(v.len() * 8);
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.buf.len() as u64,
                format!(
                    "truncated {what}: file is {} bytes, expected at least {}",
                    self.buf.len(),
                    self.pos + n
                ),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn payload(&mut self, count: usize) -> Result<Vec<f64>> {
        let expected = self.pos + count * 8;
        if self.buf.len() != expected {
            let what = if self.buf.len() < expected {
                "truncated payload"
            } else {
                "trailing bytes after payload"
            };
            return Err(Error::format(
                self.buf.len().min(expected) as u64,
                format!("{what}: file is {} bytes, expected {expected}", self.buf.len()),
            ));
        }
        let data = self.buf[self.pos..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        self.pos = expected;
        Ok(data)
    }
}

/// Parses the common header and checks the kind.
fn read_header<'a>(buf: &'a [u8], want: Kind) -> Result<(Reader<'a>, [usize; 2])> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}, expected \"TPRI\"")));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}, expected {VERSION}")));
    }
    let kind = r.u32("kind")?;
    match Kind::from_u32(kind) {
        Some(k) if k == want => {}
        Some(k) => {
            return Err(Error::format(
                8,
                format!("file holds a {}, expected a {}", k.name(), want.name()),
            ))
        }
        None => return Err(Error::format(8, format!("unknown kind {kind}"))),
    }
    let rank = r.u32("rank")?;
    if rank != 2 {
        return Err(Error::format(12, format!("rank {rank}, expected 2")));
    }
    let a = r.u32("extent")? as usize;
    let b = r.u32("extent")? as usize;
    Ok((r, [a, b]))
}

pub fn encode_image(img: &Image) -> Vec<u8> {
    encode_grid(Kind::Image, img)
}

fn encode_grid(kind: Kind, img: &Image) -> Vec<u8> {
    let mut w = Writer::header(kind, [img.width(), img.height()]);
    w.f64s(img.data());
    w.0
}

fn decode_grid(buf: &[u8], kind: Kind) -> Result<Image> {
    let (mut r, [w, h]) = read_header(buf, kind)?;
    let data = r.payload(w * h)?;
    Image::from_vec(w, h, data).map_err(|e| Error::format(16, e.to_string()))
}

pub fn decode_image(buf: &[u8]) -> Result<Image> {
    decode_grid(buf, Kind::Image)
}

pub fn encode_weights(w: &WeightsMap) -> Vec<u8> {
    encode_grid(Kind::Weights, w.as_image())
}

pub fn decode_weights(buf: &[u8]) -> Result<WeightsMap> {
    let img = decode_grid(buf, Kind::Weights)?;
    WeightsMap::from_image(img).map_err(|e| Error::format(24, e.to_string()))
}

pub fn encode_sinogram(s: &Sinogram) -> Vec<u8> {
    let g = s.geometry();
    let mut w = Writer::header(Kind::Sinogram, [g.num_bins(), g.num_views()]);
    w.u32(g.num_views() as u32);
    w.u32(g.num_bins() as u32);
    w.f64s(&[g.bin_spacing()]);
    w.f64s(g.angles());
    w.f64s(s.data());
    w.0
}

pub fn decode_sinogram(buf: &[u8]) -> Result<Sinogram> {
    let (mut r, [nb, nv]) = read_header(buf, Kind::Sinogram)?;
    let at = r.pos as u64;
    let views = r.u32("geometry block")? as usize;
    let bins = r.u32("geometry block")? as usize;
    if views != nv || bins != nb {
        return Err(Error::format(
            at,
            format!("geometry block {views} views x {bins} bins disagrees with extents {nv} x {nb}"),
        ));
    }
    let spacing = r.f64("geometry block")?;
    let angles = (0..views)
        .map(|_| r.f64("angles"))
        .collect::<Result<Vec<_>>>()?;
    let data = r.payload(nv * nb)?;
    let geom = Geometry::new(angles, bins, spacing).map_err(|e| Error::format(at, e.to_string()))?;
    Sinogram::from_vec(geom, data).map_err(|e| Error::format(at, e.to_string()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.context(path.display()))
}

pub fn save_image(path: &Path, img: &Image) -> Result<()> {
    write_file(path, &encode_image(img))
}

pub fn load_image(path: &Path) -> Result<Image> {
    with_path(path, decode_image(&fs::read(path)?))
}

pub fn save_sinogram(path: &Path, s: &Sinogram) -> Result<()> {
    write_file(path, &encode_sinogram(s))
}

pub fn load_sinogram(path: &Path) -> Result<Sinogram> {
    with_path(path, decode_sinogram(&fs::read(path)?))
}

pub fn save_weights(path: &Path, w: &WeightsMap) -> Result<()> {
    write_file(path, &encode_weights(w))
}

pub fn load_weights(path: &Path) -> Result<WeightsMap> {
    with_path(path, decode_weights(&fs::read(path)?))
}

/// 8-bit binary PGM, values mapped linearly from `[lo, hi]` and clamped.
pub fn save_pgm(path: &Path, img: &Image, lo: f64, hi: f64) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    let span = if hi > lo { hi - lo } else { 1.0 };
    bytes.extend(
        img.data()
            .iter()
            .map(|v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    write_file(path, &bytes)
}
