//! Images, padding and flat `key = value` configuration files.
//!
//! Supported image formats are binary PGM (`P5`), binary PPM (`P6`) and
//! 8-bit non-interlaced PNG (grayscale or RGB). Samples are normalized to
//! `[0, 1]` by dividing by 255.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// An 8-bit image with 1 or 3 interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Row-major, channel-interleaved samples.
    pub samples: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, samples: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid("ImageBuffer", format!("{channels} channels, expected 1 or 3")));
        }
        if width == 0 || height == 0 || samples.len() != width * height * channels {
            return Err(Error::shape(
                "ImageBuffer",
                format!("{} samples for {width}x{height}x{channels}", samples.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            channels,
            samples,
        })
    }

    /// Planar `[C, H, W]` tensor in `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor {
        let (c, n) = (self.channels, self.width * self.height);
        let mut data = vec![0.0; c * n];
        for (i, s) in self.samples.iter().enumerate() {
            data[(i % c) * n + i / c] = *s as f64 / 255.0;
        }
        Tensor::new(&[c, self.height, self.width], data).expect("validated buffer")
    }

    /// Quantizes a `[C, H, W]` tensor, clamping to `[0, 1]` first.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (c, h, w) = t.dims3()?;
        let n = h * w;
        let mut samples = vec![0u8; c * n];
        for (i, s) in samples.iter_mut().enumerate() {
            let v = t.data()[(i % c) * n + i / c];
            *s = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        Self::new(w, h, c, samples)
    }
}

fn format_err(path: &Path, offset: usize, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        detail: detail.into(),
    }
}

/// Prefixes an I/O error with the file it concerns.
pub(crate) fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Loads by content: `P5`/`P6` headers or the PNG signature.
pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    let bytes = fs::read(path).map_err(|e| with_path(e, path))?;
    decode_image(&bytes, path)
}

pub fn decode_image(bytes: &[u8], path: &Path) -> Result<ImageBuffer> {
    match bytes {
        [b'P', b'5', ..] => decode_pnm(bytes, 1, path),
        [b'P', b'6', ..] => decode_pnm(bytes, 3, path),
        [0x89, b'P', b'N', b'G', ..] => decode_png(bytes, path),
        _ => Err(format_err(path, 0, "unrecognized signature; expected P5, P6 or PNG")),
    }
}

/// Saves by extension: `.pgm`, `.ppm`, `.pnm` or `.png`.
pub fn save_image(buf: &ImageBuffer, path: &Path) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let bytes = match ext.as_str() {
        "png" => encode_png(buf)?,
        "pgm" | "ppm" | "pnm" => {
            if (ext == "pgm" && buf.channels != 1) || (ext == "ppm" && buf.channels != 3) {
                return Err(Error::invalid(
                    "save_image",
                    format!("{}-channel image cannot be written as .{ext}", buf.channels),
                ));
            }
            encode_pnm(buf)
        }
        _ => {
            return Err(Error::invalid(
                "save_image",
                format!("unsupported extension {:?}; use .png, .pgm or .ppm", path.extension()),
            ))
        }
    };
    fs::write(path, bytes).map_err(|e| with_path(e, path))
}

pub fn encode_pnm(buf: &ImageBuffer) -> Vec<u8> {
    let magic = if buf.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", buf.width, buf.height).into_bytes();
    out.extend_from_slice(&buf.samples);
    out
}

fn decode_pnm(bytes: &[u8], channels: usize, path: &Path) -> Result<ImageBuffer> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    let mut starts = [0usize; 3];
    for (k, name) in ["width", "height", "maxval"].iter().enumerate() {
        // whitespace and comments before each field
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|b| *b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(format_err(path, pos, format!("truncated header before {name}"))),
            }
        }
        let start = pos;
        starts[k] = start;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(path, start, format!("expected decimal {name}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        fields[k] = text
            .parse()
            .map_err(|_| format_err(path, start, format!("{name} {text} out of range")))?;
        if fields[k] == 0 {
            return Err(format_err(path, start, format!("{name} must be positive")));
        }
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(format_err(
            path,
            starts[2],
            format!("unsupported bit depth: maxval {maxval}, only 255 is supported"),
        ));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(format_err(path, pos, "expected single whitespace after maxval"));
    }
    pos += 1;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| format_err(path, 0, "image dimensions overflow"))?;
    let data = &bytes[pos..];
    if data.len() < need {
        return Err(format_err(
            path,
            bytes.len(),
            format!("truncated pixel data: {} of {need} bytes", data.len()),
        ));
    }
    ImageBuffer::new(width, height, channels, data[..need].to_vec())
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<ImageBuffer> {
    let decoder = png::Decoder::new(bytes);
    let mut reader = decoder
        .read_info()
        .map_err(|e| format_err(path, 8, format!("bad PNG header: {e}")))?;
    let info = reader.info();
    if info.interlaced {
        return Err(format_err(path, 28, "interlaced PNG is not supported"));
    }
    if info.bit_depth != png::BitDepth::Eight {
        return Err(format_err(
            path,
            24,
            format!("unsupported bit depth {:?}, only 8-bit is supported", info.bit_depth),
        ));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(format_err(
                path,
                25,
                format!("unsupported color type {other:?}; expected grayscale or RGB"),
            ))
        }
    };
    let (width, height) = (info.width as usize, info.height as usize);
    let mut samples = vec![0u8; reader.output_buffer_size()];
    let frame = reader
        .next_frame(&mut samples)
        .map_err(|e| format_err(path, 33, format!("corrupt PNG data: {e}")))?;
    samples.truncate(frame.buffer_size());
    ImageBuffer::new(width, height, channels, samples)
}

fn encode_png(buf: &ImageBuffer) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(BufWriter::new(&mut out), buf.width as u32, buf.height as u32);
        enc.set_color(if buf.channels == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        w.write_image_data(&buf.samples)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    Ok(out)
}

/// Loads a region mask: pixels brighter than 0.5 are observed. Color masks
/// are averaged over channels first.
pub fn load_mask(path: &Path) -> Result<Tensor> {
    let t = load_image(path)?.to_tensor();
    let (c, h, w) = t.dims3()?;
    let n = h * w;
    let plane = (0..n)
        .map(|i| {
            let mean = (0..c).map(|k| t.data()[k * n + i]).sum::<f64>() / c as f64;
            if mean > 0.5 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Tensor::new(&[1, h, w], plane)
}

/// An image grown to power-of-two extents by mirroring its bottom and
/// right edges.
#[derive(Clone, Debug, PartialEq)]
pub struct Padded {
    pub tensor: Tensor,
    pub orig_height: usize,
    pub orig_width: usize,
    /// `[H, W]` plane, 1 inside the original image and 0 on padding.
    pub support: Vec<f64>,
}

impl Padded {
    pub fn is_padded(&self) -> bool {
        let (_, h, w) = self.tensor.dims3().expect("3-d");
        (h, w) != (self.orig_height, self.orig_width)
    }

    /// Sidecar text recording the original extents.
    pub fn sidecar(&self) -> String {
        let s = self.tensor.shape();
        format!(
            "orig_height = {}\norig_width = {}\npadded_height = {}\npadded_width = {}\n",
            self.orig_height, self.orig_width, s[1], s[2]
        )
    }
}

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

/// Pads each spatial extent to the next power of two that is at least
/// `min_size`, reflecting content from the bottom and right edges.
pub fn pad_to_pow2(t: &Tensor, min_size: usize) -> Result<Padded> {
    let (c, h, w) = t.dims3()?;
    let ph = h.max(min_size).next_power_of_two();
    let pw = w.max(min_size).next_power_of_two();
    let mut data = Vec::with_capacity(c * ph * pw);
    for k in 0..c {
        for i in 0..ph {
            let si = reflect(i, h);
            for j in 0..pw {
                data.push(t.data()[(k * h + si) * w + reflect(j, w)]);
            }
        }
    }
    let support = (0..ph * pw)
        .map(|p| if p / pw < h && p % pw < w { 1.0 } else { 0.0 })
        .collect();
    Ok(Padded {
        tensor: Tensor::new(&[c, ph, pw], data)?,
        orig_height: h,
        orig_width: w,
        support,
    })
}

/// Smooth shading, a blob, a disk, a bar and a band-limited texture patch:
/// a deterministic test image covering all frequency ranges.
pub fn synthetic_image(h: usize, w: usize) -> Tensor {
    let mut data = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let (y, x) = (i as f64 / h as f64, j as f64 / w as f64);
            let mut v = 0.3 + 0.25 * (-((x - 0.3).powi(2) + (y - 0.35).powi(2)) / 0.02).exp();
            if (x - 0.65).powi(2) + (y - 0.6).powi(2) < 0.04 {
                v += 0.35;
            }
            if x > 0.1 && x < 0.45 && y > 0.65 && y < 0.9 {
                v += 0.15;
            }
            if y < 0.3 {
                v += 0.1 * (2.0 * std::f64::consts::PI * 6.0 * x).sin();
            }
            data.push(v.clamp(0.0, 1.0));
        }
    }
    Tensor::new(&[1, h, w], data).expect("finite")
}

/// Parsed flat configuration: `key = value` per line, `#` starts a
/// comment, blank lines are ignored, keys are unique.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            let k = k.trim();
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(Error::Config(format!("line {}: invalid key {k:?}", n + 1)));
            }
            if entries.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k}", n + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| with_path(e, path))?)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Parses `key` with `FromStr`, naming the key in the error.
    pub fn parse_key<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| Error::Config(format!("{key} = {v:?}: {e}"))))
            .transpose()
    }

    /// Entries from `other` win.
    pub fn merge(&mut self, other: &KeyValues) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// `dir/stem.ext`, creating `dir` if needed.
pub fn output_path(dir: &Path, stem: &str, ext: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.join(format!("{stem}.{ext}")))
}
