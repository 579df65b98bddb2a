//! Point-cloud, depth-image and intrinsics files, plus back-projection of a
//! masked depth image into a metric cloud.
//!
//! Formats:
//! - csv-xyz: `x,y,z` per line in millimeters, `.` decimal, LF newlines.
//! - ply-ascii: `element vertex N` with float `x y z` properties.
//! - depth PNG: 16-bit grayscale, value = millimeters, 0 = invalid.
//! - mask PNG: 8-bit grayscale, any value > 0 marks an object pixel.
//! - intrinsics JSON: `{"fx", "fy", "cx", "cy", "width", "height"}`.
//!
//! Every writer renders the full file in memory and then renames a sibling
//! temp file into place, so a failed write never leaves a partial file.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, Cursor, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};
use crate::types::{CameraIntrinsics, DepthFrame, MaskRegion, Point3, PointCloud};

/// Default depth gate in millimeters.
pub const DEFAULT_MIN_DEPTH_MM: f64 = 100.0;
pub const DEFAULT_MAX_DEPTH_MM: f64 = 10_000.0;

/// Significant digits written for csv-xyz and ply-ascii coordinates.
pub const CLOUD_SIG_DIGITS: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CloudFileFormat {
    CsvXyz,
    PlyAscii,
}

impl CloudFileFormat {
    /// Guesses the format from a file extension (`.ply` or anything else = csv).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("ply") => CloudFileFormat::PlyAscii,
            _ => CloudFileFormat::CsvXyz,
        }
    }
}

impl std::str::FromStr for CloudFileFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" | "csv-xyz" => Ok(CloudFileFormat::CsvXyz),
            "ply" | "ply-ascii" => Ok(CloudFileFormat::PlyAscii),
            other => Err(Error::invalid(format!("unknown cloud format '{other}'"))),
        }
    }
}

/// Formats `v` rounded to `digits` significant digits, using the shortest
/// decimal that reproduces the rounded value.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".to_owned() } else { v.to_string() };
    }
    let sci = format!("{:.*e}", digits.saturating_sub(1), v);
    let rounded: f64 = sci.parse().unwrap_or(v);
    let s = rounded.to_string();
    if s == "-0" {
        "0".to_owned()
    } else {
        s
    }
}

/// Writes `bytes` to `path` through a temp file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_coord(tok: &str, path: &Path, line: usize) -> Result<f64> {
    let v: f64 = tok.trim().parse().map_err(|_| Error::Parse {
        path: path.to_owned(),
        line,
        message: format!("'{}' is not a number", tok.trim()),
    })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Parse {
            path: path.to_owned(),
            line,
            message: format!("non-finite coordinate '{}'", tok.trim()),
        })
    }
}

fn point_from<T: Real>(xyz: [f64; 3], path: &Path, line: usize) -> Result<Point3<T>> {
    Point3::new(lit(xyz[0]), lit(xyz[1]), lit(xyz[2])).map_err(|_| Error::Parse {
        path: path.to_owned(),
        line,
        message: "coordinate overflows the scalar type".into(),
    })
}

pub fn load_point_cloud<T: Real>(path: &Path, format: CloudFileFormat) -> Result<PointCloud<T>> {
    let text = read_text(path)?;
    let cloud = match format {
        CloudFileFormat::CsvXyz => parse_csv_xyz(&text, path)?,
        CloudFileFormat::PlyAscii => parse_ply_ascii(&text, path)?,
    };
    Ok(cloud.with_source(path.display().to_string()))
}

fn parse_csv_xyz<T: Real>(text: &str, path: &Path) -> Result<PointCloud<T>> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: line_no,
                message: format!("expected 3 comma-separated values, found {}", fields.len()),
            });
        }
        let xyz = [
            parse_coord(fields[0], path, line_no)?,
            parse_coord(fields[1], path, line_no)?,
            parse_coord(fields[2], path, line_no)?,
        ];
        points.push(point_from(xyz, path, line_no)?);
    }
    Ok(PointCloud::new(points))
}

struct PlyElement {
    name: String,
    count: usize,
    props: Vec<String>,
}

fn parse_ply_ascii<T: Real>(text: &str, path: &Path) -> Result<PointCloud<T>> {
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(perr(1, "missing 'ply' magic".into())),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut ascii = false;
    let mut header_done = false;
    for (no, line) in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => ascii = true,
            ["format", other, _] => return Err(perr(no, format!("unsupported PLY format '{other}'"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| perr(no, format!("bad element count '{count}'")))?;
                elements.push(PlyElement {
                    name: (*name).to_owned(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", .., name] | ["property", _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| perr(no, "property before any element".into()))?;
                el.props.push((*name).to_owned());
            }
            ["end_header"] => {
                header_done = true;
                break;
            }
            _ => return Err(perr(no, format!("unrecognized header line '{line}'"))),
        }
    }
    if !header_done {
        return Err(perr(0, "missing end_header".into()));
    }
    if !ascii {
        return Err(perr(0, "missing 'format ascii 1.0' line".into()));
    }

    let mut points = Vec::new();
    for el in &elements {
        if el.name != "vertex" {
            for _ in 0..el.count {
                lines
                    .next()
                    .ok_or_else(|| perr(0, format!("truncated '{}' element", el.name)))?;
            }
            continue;
        }
        let col = |axis: &str| {
            el.props
                .iter()
                .position(|p| p == axis)
                .ok_or_else(|| perr(0, format!("vertex element lacks property '{axis}'")))
        };
        let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);
        for _ in 0..el.count {
            let (no, line) = lines.next().ok_or_else(|| perr(0, "truncated vertex list".into()))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() < el.props.len() {
                return Err(perr(
                    no,
                    format!("expected {} values, found {}", el.props.len(), toks.len()),
                ));
            }
            let xyz = [
                parse_coord(toks[ix], path, no)?,
                parse_coord(toks[iy], path, no)?,
                parse_coord(toks[iz], path, no)?,
            ];
            points.push(point_from(xyz, path, no)?);
        }
    }
    Ok(PointCloud::new(points))
}

/// Renders the cloud in the given text format.
pub fn encode_point_cloud<T: Real>(cloud: &PointCloud<T>, format: CloudFileFormat) -> String {
    let mut out = String::new();
    let sep = match format {
        CloudFileFormat::CsvXyz => ",",
        CloudFileFormat::PlyAscii => {
            out.push_str("ply\nformat ascii 1.0\n");
            let _ = writeln!(out, "element vertex {}", cloud.len());
            out.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");
            " "
        }
    };
    for p in cloud {
        let [x, y, z] = p.to_array().map(|c| format_sig(to_f64(c), CLOUD_SIG_DIGITS));
        let _ = writeln!(out, "{x}{sep}{y}{sep}{z}");
    }
    out
}

pub fn save_point_cloud<T: Real>(cloud: &PointCloud<T>, path: &Path, format: CloudFileFormat) -> Result<()> {
    write_atomic(path, encode_point_cloud(cloud, format).as_bytes())
}

fn decode_gray_png(path: &Path) -> Result<(usize, usize, png::BitDepth, Vec<u8>)> {
    let img_err = |message: String| Error::Image {
        path: path.to_owned(),
        message,
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(Cursor::new(bytes)));
    let mut reader = decoder.read_info().map_err(|e| img_err(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| img_err("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| img_err(e.to_string()))?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(img_err(format!("expected grayscale PNG, got {:?}", info.color_type)));
    }
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, info.bit_depth, buf))
}

fn encode_gray_png(width: usize, height: usize, depth: png::BitDepth, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(depth);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::invalid(format!("png encode: {e}")))?;
        writer
            .write_image_data(data)
            .map_err(|e| Error::invalid(format!("png encode: {e}")))?;
    }
    Ok(out)
}

/// Loads a 16-bit depth PNG (millimeters).
pub fn load_depth_png<T: Real>(path: &Path) -> Result<DepthFrame<T>> {
    let (w, h, bits, buf) = decode_gray_png(path)?;
    if bits != png::BitDepth::Sixteen {
        return Err(Error::Image {
            path: path.to_owned(),
            message: format!("expected 16-bit depth PNG, got {bits:?}"),
        });
    }
    let values = buf
        .chunks_exact(2)
        .map(|b| lit::<T>(u16::from_be_bytes([b[0], b[1]]) as f64))
        .collect();
    DepthFrame::new(w, h, values)
}

/// Encodes depth as a 16-bit PNG, rounding to whole millimeters.
pub fn encode_depth_png<T: Real>(frame: &DepthFrame<T>) -> Result<Vec<u8>> {
    let mut data = Vec::with_capacity(frame.values().len() * 2);
    for &d in frame.values() {
        let mm = to_f64(d).round();
        if !(0.0..=u16::MAX as f64).contains(&mm) {
            return Err(Error::invalid(format!("depth {mm} mm does not fit a 16-bit PNG")));
        }
        data.extend_from_slice(&(mm as u16).to_be_bytes());
    }
    encode_gray_png(frame.width(), frame.height(), png::BitDepth::Sixteen, &data)
}

pub fn save_depth_png<T: Real>(frame: &DepthFrame<T>, path: &Path) -> Result<()> {
    write_atomic(path, &encode_depth_png(frame)?)
}

pub fn load_mask_png(path: &Path) -> Result<MaskRegion> {
    let (w, h, bits, buf) = decode_gray_png(path)?;
    if bits != png::BitDepth::Eight {
        return Err(Error::Image {
            path: path.to_owned(),
            message: format!("expected 8-bit mask PNG, got {bits:?}"),
        });
    }
    MaskRegion::new(w, h, buf.iter().map(|&b| b > 0).collect())
}

pub fn encode_mask_png(mask: &MaskRegion) -> Result<Vec<u8>> {
    let data: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode_gray_png(mask.width(), mask.height(), png::BitDepth::Eight, &data)
}

pub fn save_mask_png(mask: &MaskRegion, path: &Path) -> Result<()> {
    write_atomic(path, &encode_mask_png(mask)?)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct IntrinsicsDoc {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

pub fn parse_intrinsics<T: Real>(json: &str) -> Result<CameraIntrinsics<T>> {
    let doc: IntrinsicsDoc = serde_json::from_str(json).map_err(|e| Error::invalid(format!("intrinsics JSON: {e}")))?;
    CameraIntrinsics::new(
        lit(doc.fx),
        lit(doc.fy),
        lit(doc.cx),
        lit(doc.cy),
        doc.width,
        doc.height,
    )
}

pub fn load_intrinsics<T: Real>(path: &Path) -> Result<CameraIntrinsics<T>> {
    let text = read_text(path)?;
    serde_json::from_str::<IntrinsicsDoc>(&text).map_err(|e| Error::Parse {
        path: path.to_owned(),
        line: e.line(),
        message: e.to_string(),
    })?;
    parse_intrinsics(&text)
}

pub fn encode_intrinsics<T: Real>(intr: &CameraIntrinsics<T>) -> String {
    let doc = IntrinsicsDoc {
        fx: to_f64(intr.fx()),
        fy: to_f64(intr.fy()),
        cx: to_f64(intr.cx()),
        cy: to_f64(intr.cy()),
        width: intr.width(),
        height: intr.height(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("intrinsics serialize");
    s.push('\n');
    s
}

pub fn save_intrinsics<T: Real>(intr: &CameraIntrinsics<T>, path: &Path) -> Result<()> {
    write_atomic(path, encode_intrinsics(intr).as_bytes())
}

/// Pinhole back-projection of masked pixels with depth in `[min_depth_mm, max_depth_mm]`.
///
/// `x = (u - cx) z / fx`, `y = (v - cy) z / fy`; pixels are visited row-major.
pub fn back_project<T: Real>(
    depth: &DepthFrame<T>,
    mask: &MaskRegion,
    intr: &CameraIntrinsics<T>,
    min_depth_mm: T,
    max_depth_mm: T,
) -> Result<PointCloud<T>> {
    let (w, h) = (intr.width(), intr.height());
    if depth.width() != w || depth.height() != h || mask.width() != w || mask.height() != h {
        return Err(Error::invalid(format!(
            "dimension mismatch: depth {}x{}, mask {}x{}, intrinsics {w}x{h}",
            depth.width(),
            depth.height(),
            mask.width(),
            mask.height()
        )));
    }
    if !(min_depth_mm > T::zero() && min_depth_mm < max_depth_mm) {
        return Err(Error::invalid(format!(
            "depth gate [{min_depth_mm}, {max_depth_mm}] must satisfy 0 < min < max"
        )));
    }
    let mut points = Vec::new();
    for v in 0..h {
        for u in 0..w {
            if !mask.get(u, v) {
                continue;
            }
            let z = depth.get(u, v);
            if z <= T::zero() || z < min_depth_mm || z > max_depth_mm {
                continue;
            }
            points.push(Point3::from_vector(intr.ray(u, v) * z)?);
        }
    }
    Ok(PointCloud::new(points))
}

/// Binary erosion by the `(2r+1)²` square; pixels outside the image count as background.
pub fn erode_mask(mask: &MaskRegion, radius: usize) -> MaskRegion {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width(), mask.height());
    let horizontal = erode_lines(mask.bits(), w, h, radius, |x, y| y * w + x);
    let vertical = erode_lines(&horizontal, h, w, radius, |y, x| y * w + x);
    MaskRegion::new(w, h, vertical).expect("erosion preserves dimensions")
}

/// 1-D erosion along lines of length `len`; `index(pos, line)` addresses the buffer.
fn erode_lines(
    bits: &[bool],
    len: usize,
    lines: usize,
    radius: usize,
    index: impl Fn(usize, usize) -> usize,
) -> Vec<bool> {
    let mut out = vec![false; bits.len()];
    let mut prefix = vec![0usize; len + 1];
    for line in 0..lines {
        for pos in 0..len {
            prefix[pos + 1] = prefix[pos] + bits[index(pos, line)] as usize;
        }
        for pos in 0..len {
            if pos < radius || pos + radius >= len {
                continue;
            }
            let ones = prefix[pos + radius + 1] - prefix[pos - radius];
            out[index(pos, line)] = ones == 2 * radius + 1;
        }
    }
    out
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_owned(),
            line,
            message: format!("{other:?}"),
        },
    }
}
