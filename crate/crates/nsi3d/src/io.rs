//! Output formats: commented CSV tables, PGM rasters, raw float volumes and
//! RF dumps with TOML side-car headers.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nsi3d_core::aperture::ElementWeights;
use nsi3d_core::beamform::{EnvelopeVolume, VolumeLabel, VoxelGrid};
use nsi3d_core::geometry::ArrayGeometry;
use nsi3d_core::sequence::VirtualSource;
use nsi3d_core::sim::{EventRf, RfDataset};
use nsi3d_core::Vec3;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

/// Provenance written as the first line of every table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Meta {
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    pub fn line(&self) -> String {
        format!("# config_hash={} seed={}", self.config_hash, self.seed)
    }

    pub fn parse(line: &str) -> Option<Meta> {
        let rest = line.strip_prefix("# ")?;
        let mut hash = None;
        let mut seed = None;
        for kv in rest.split_whitespace() {
            match kv.split_once('=')? {
                ("config_hash", v) => hash = Some(v.to_string()),
                ("seed", v) => seed = v.parse().ok(),
                _ => {}
            }
        }
        Some(Meta {
            config_hash: hash?,
            seed: seed?,
        })
    }
}

/// Fixed six-decimal formatting used for every float cell.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        format!("{x}")
    }
}

fn create(path: &Path) -> AppResult<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| AppError::io(path, e))?))
}

pub fn write_csv(path: &Path, meta: &Meta, headers: &[&str], rows: &[Vec<String>]) -> AppResult<()> {
    let mut out = create(path)?;
    writeln!(out, "{}", meta.line()).map_err(|e| AppError::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(headers)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| AppError::io(path, e))?;
    Ok(())
}

/// A parsed table: provenance, header names and rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: Option<Meta>,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn value(&self, row: usize, name: &str) -> Option<&str> {
        Some(self.rows.get(row)?.get(self.column(name)?)?.as_str())
    }
}

pub fn read_csv(path: &Path) -> AppResult<Table> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    let meta = text.lines().next().and_then(Meta::parse);
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|x| x.iter().map(str::to_string).collect()))
        .collect::<Result<_, _>>()?;
    Ok(Table { meta, headers, rows })
}

/// Binary PGM (P5). `maxval` ≤ 255 writes one byte per pixel, otherwise
/// two bytes big-endian.
pub fn write_pgm(path: &Path, width: usize, height: usize, maxval: u16, pixels: &[u16]) -> AppResult<()> {
    assert_eq!(pixels.len(), width * height);
    let mut out = create(path)?;
    let mut buf = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval <= 255 {
        buf.extend(pixels.iter().map(|&p| p as u8));
    } else {
        buf.extend(pixels.iter().flat_map(|p| p.to_be_bytes()));
    }
    out.write_all(&buf).map_err(|e| AppError::io(path, e))?;
    out.flush().map_err(|e| AppError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

pub fn read_pgm(path: &Path) -> AppResult<Pgm> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    let bad = |reason: &str| AppError::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    let data = &bytes[i + 1..];
    let pixels: Vec<u16> = if maxval <= 255 {
        data.iter().map(|&b| b as u16).collect()
    } else {
        data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    };
    if pixels.len() != width * height {
        return Err(bad("pixel count does not match header"));
    }
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

/// Gray level for blank wiring rows in weight rasters.
pub const BLANK_ROW_GRAY: u8 = 128;
/// Gray level for elements outside the aperture.
pub const UNUSED_GRAY: u8 = 0;

/// Maps a weight in [−2, 2] to [32, 255].
pub fn weight_gray(w: f64) -> u8 {
    let t = ((w.clamp(-2.0, 2.0) + 2.0) / 4.0 * 223.0).round();
    32 + t as u8
}

/// One pixel per physical element position (columns × physical rows, row 0
/// at the top).
pub fn weight_raster(geom: &ArrayGeometry, weights: &ElementWeights) -> (usize, usize, Vec<u16>) {
    let cfg = geom.config();
    let (w, h) = (cfg.n_cols, cfg.n_rows_physical);
    let mut px = vec![BLANK_ROW_GRAY as u16; w * h];
    for e in geom.elements() {
        let g = weights.get(e.id).map_or(UNUSED_GRAY, weight_gray);
        px[e.physical_row * w + e.col] = g as u16;
    }
    (w, h, px)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plane {
    /// Azimuth–depth at a fixed elevation index.
    Xz,
    /// Elevation–depth at a fixed azimuth index.
    Yz,
    /// Constant-depth C-plane.
    Xy,
}

impl Plane {
    pub fn name(self) -> &'static str {
        match self {
            Plane::Xz => "xz",
            Plane::Yz => "yz",
            Plane::Xy => "xy",
        }
    }
}

/// 16-bit render of a log-compressed volume slice, mapping [−DR, 0] dB to
/// [0, 65535]. Depth runs down the image for the axial planes.
pub fn slice_pgm(db: &[f64], grid: &VoxelGrid, plane: Plane, index: usize, dr: f64) -> (usize, usize, Vec<u16>) {
    let [nx, ny, nz] = grid.dims;
    let px = |v: f64| (((v + dr) / dr).clamp(0.0, 1.0) * 65535.0).round() as u16;
    match plane {
        Plane::Xz => {
            let mut out = Vec::with_capacity(nx * nz);
            for iz in 0..nz {
                for ix in 0..nx {
                    out.push(px(db[grid.index(ix, index, iz)]));
                }
            }
            (nx, nz, out)
        }
        Plane::Yz => {
            let mut out = Vec::with_capacity(ny * nz);
            for iz in 0..nz {
                for iy in 0..ny {
                    out.push(px(db[grid.index(index, iy, iz)]));
                }
            }
            (ny, nz, out)
        }
        Plane::Xy => {
            let mut out = Vec::with_capacity(nx * ny);
            for iy in 0..ny {
                for ix in 0..nx {
                    out.push(px(db[grid.index(ix, iy, index)]));
                }
            }
            (nx, ny, out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub format: String,
    pub label: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub order: String,
    pub dtype: String,
    pub dynamic_range_db: f64,
    pub config_hash: String,
    pub seed: u64,
    pub data: String,
}

const VOLUME_FORMAT: &str = "nsi3d-volume-1";
const RF_FORMAT: &str = "nsi3d-rf-1";

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn write_f32(path: &Path, values: impl Iterator<Item = f64>) -> AppResult<()> {
    let mut out = create(path)?;
    for v in values {
        out.write_all(&(v as f32).to_le_bytes()).map_err(|e| AppError::io(path, e))?;
    }
    out.flush().map_err(|e| AppError::io(path, e))
}

fn read_f32(path: &Path) -> AppResult<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(AppError::Format {
            path: path.to_path_buf(),
            reason: "length is not a multiple of 4".into(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Writes `<stem>.f32` (little-endian, z-fastest) and `<stem>.toml`;
/// returns the header path.
pub fn write_volume(stem: &Path, vol: &EnvelopeVolume, meta: &Meta, dr: f64) -> AppResult<PathBuf> {
    let data = with_ext(stem, ".f32");
    write_f32(&data, vol.values.iter().copied())?;
    let g = &vol.grid;
    let header = VolumeHeader {
        format: VOLUME_FORMAT.into(),
        label: vol.label.name().into(),
        dims: g.dims,
        spacing: [g.spacing.x, g.spacing.y, g.spacing.z],
        origin: [g.origin.x, g.origin.y, g.origin.z],
        order: "z-fastest".into(),
        dtype: "f32le".into(),
        dynamic_range_db: dr,
        config_hash: meta.config_hash.clone(),
        seed: meta.seed,
        data: data.file_name().expect("file name").to_string_lossy().into_owned(),
    };
    let path = with_ext(stem, ".toml");
    let mut out = create(&path)?;
    out.write_all(toml::to_string(&header).expect("header serialises").as_bytes())
        .map_err(|e| AppError::io(&path, e))?;
    out.flush().map_err(|e| AppError::io(&path, e))?;
    Ok(path)
}

pub fn read_volume(header_path: &Path) -> AppResult<(VolumeHeader, EnvelopeVolume)> {
    let text = fs::read_to_string(header_path).map_err(|e| AppError::io(header_path, e))?;
    let bad = |reason: String| AppError::Format {
        path: header_path.to_path_buf(),
        reason,
    };
    let h: VolumeHeader = toml::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if h.format != VOLUME_FORMAT || h.order != "z-fastest" || h.dtype != "f32le" {
        return Err(bad("unsupported volume layout".into()));
    }
    let label = VolumeLabel::parse(&h.label).ok_or_else(|| bad(format!("unknown label {}", h.label)))?;
    let grid = VoxelGrid::new(
        Vec3::new(h.origin[0], h.origin[1], h.origin[2]),
        Vec3::new(h.spacing[0], h.spacing[1], h.spacing[2]),
        h.dims,
    )?;
    let data_path = header_path.with_file_name(&h.data);
    let values = read_f32(&data_path)?;
    if values.len() != grid.len() {
        return Err(bad(format!("{} values for {} voxels", values.len(), grid.len())));
    }
    Ok((h, EnvelopeVolume { grid, values, label }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfEventHeader {
    pub event_index: usize,
    pub angle_index: usize,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub standoff: f64,
    pub t0: f64,
    pub n_samples: usize,
    /// Offset of the first sample in the data file, in floats.
    pub offset: usize,
    /// Receive element for each channel, in channel order.
    pub elements: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfHeader {
    pub format: String,
    pub dtype: String,
    pub layout: String,
    pub sampling_rate: f64,
    pub sound_speed: f64,
    pub config_hash: String,
    pub seed: u64,
    pub data: String,
    pub events: Vec<RfEventHeader>,
}

/// Writes `<stem>.f32` (each event channel-major, samples contiguous) and
/// `<stem>.toml`; returns the header path.
pub fn write_rf(stem: &Path, ds: &RfDataset, meta: &Meta) -> AppResult<PathBuf> {
    let data = with_ext(stem, ".f32");
    write_f32(&data, ds.events.iter().flat_map(|e| e.data.iter().copied()))?;
    let mut offset = 0;
    let events = ds
        .events
        .iter()
        .map(|e| {
            let h = RfEventHeader {
                event_index: e.event_index,
                angle_index: e.angle_index,
                azimuth_deg: e.source.azimuth_deg,
                elevation_deg: e.source.elevation_deg,
                standoff: e.source.standoff,
                t0: e.t0,
                n_samples: e.n_samples,
                offset,
                elements: e.rx_elements.clone(),
            };
            offset += e.data.len();
            h
        })
        .collect();
    let header = RfHeader {
        format: RF_FORMAT.into(),
        dtype: "f32le".into(),
        layout: "event, channel, sample".into(),
        sampling_rate: ds.sampling_rate,
        sound_speed: ds.sound_speed,
        config_hash: meta.config_hash.clone(),
        seed: meta.seed,
        data: data.file_name().expect("file name").to_string_lossy().into_owned(),
        events,
    };
    let path = with_ext(stem, ".toml");
    let mut out = create(&path)?;
    out.write_all(toml::to_string(&header).expect("header serialises").as_bytes())
        .map_err(|e| AppError::io(&path, e))?;
    out.flush().map_err(|e| AppError::io(&path, e))?;
    Ok(path)
}

pub fn read_rf(header_path: &Path) -> AppResult<RfDataset> {
    let text = fs::read_to_string(header_path).map_err(|e| AppError::io(header_path, e))?;
    let bad = |reason: String| AppError::Format {
        path: header_path.to_path_buf(),
        reason,
    };
    let h: RfHeader = toml::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if h.format != RF_FORMAT || h.dtype != "f32le" {
        return Err(bad("unsupported RF layout".into()));
    }
    let values = read_f32(&header_path.with_file_name(&h.data))?;
    let events = h
        .events
        .iter()
        .map(|e| {
            let n = e.elements.len() * e.n_samples;
            let data = values
                .get(e.offset..e.offset + n)
                .ok_or_else(|| bad(format!("event {} runs past the data", e.event_index)))?
                .to_vec();
            Ok(EventRf {
                event_index: e.event_index,
                angle_index: e.angle_index,
                source: VirtualSource::steered(e.azimuth_deg, e.elevation_deg, e.standoff),
                rx_elements: e.elements.clone(),
                t0: e.t0,
                n_samples: e.n_samples,
                data,
            })
        })
        .collect::<AppResult<_>>()?;
    Ok(RfDataset {
        sampling_rate: h.sampling_rate,
        sound_speed: h.sound_speed,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_line_round_trips() {
        let m = Meta {
            config_hash: "abc123".into(),
            seed: 7,
        };
        assert_eq!(m.line(), "# config_hash=abc123 seed=7");
        assert_eq!(Meta::parse(&m.line()), Some(m));
        assert_eq!(Meta::parse("a,b"), None);
    }

    #[test]
    fn weight_grays_are_distinct() {
        let g: Vec<u8> = [-2.0, -1.0, 0.0, 1.0, 2.0].iter().map(|&w| weight_gray(w)).collect();
        assert_eq!(g, vec![32, 88, 144, 199, 255]);
        assert!(!g.contains(&BLANK_ROW_GRAY) && !g.contains(&UNUSED_GRAY));
    }

    #[test]
    fn num_is_fixed_precision() {
        assert_eq!(num(1.0), "1.000000");
        assert_eq!(num(-0.1234567), "-0.123457");
        assert_eq!(num(f64::NEG_INFINITY), "-inf");
    }
}
