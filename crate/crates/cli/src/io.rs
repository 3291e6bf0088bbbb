//! On-disk formats: CSV point lists, JSON metadata, PNG rasters.
//!
//! Class ids are 1 = background cell, 2 = tumor cell. Tissue labels are
//! 1 = background, 2 = cancer, 255 = unknown. Probability maps are stored
//! one 16-bit grayscale PNG per channel with `value = round(p * 65535)`, next
//! to a `channels.json` index.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use celldet_core::geometry::PatchRegistration;
use celldet_core::{CellClass, CellPoint, Detection, LabelMap, PointAnnotations, Raster};
use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MAP_SCALE: f64 = 65535.0;

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::parse(path, None, e.to_string()))?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, Some(e.line() as u64), e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub x: usize,
    pub y: usize,
    pub class_id: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub x: usize,
    pub y: usize,
    pub class_id: i64,
    pub confidence: f64,
}

fn csv_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            other => CliError::parse(path, None, format!("{other:?}")),
        })?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::parse(path, Some(1), format!("unreadable header: {e}")))?
        .clone();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::parse(path, e.position().map(|p| p.line()), format!("malformed row: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .deserialize::<T>(Some(&headers))
            .map_err(|e| CliError::parse(path, Some(line), format!("malformed row: {e}")))?;
        out.push((line, row));
    }
    Ok(out)
}

fn class_of(path: &Path, line: u64, id: i64) -> Result<CellClass> {
    CellClass::from_id(id).map_err(|_| CliError::parse(path, Some(line), format!("class_id {id} is not 1 or 2")))
}

pub fn read_annotations(path: &Path, mpp: f64) -> Result<PointAnnotations> {
    let points = csv_rows::<AnnotationRow>(path)?
        .into_iter()
        .map(|(line, r)| Ok(CellPoint::new(r.x, r.y, class_of(path, line, r.class_id)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PointAnnotations::new(points, mpp))
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>, header: &[&str]) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    let fail = |e: csv::Error| CliError::parse(path, None, e.to_string());
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.serialize(r).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_annotations(path: &Path, pts: &PointAnnotations) -> Result<()> {
    write_csv(
        path,
        pts.points.iter().map(|p| AnnotationRow {
            x: p.x,
            y: p.y,
            class_id: p.class.id() as i64,
        }),
        &["x", "y", "class_id"],
    )
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    csv_rows::<DetectionRow>(path)?
        .into_iter()
        .map(|(line, r)| {
            if !r.confidence.is_finite() {
                return Err(CliError::parse(path, Some(line), "confidence must be finite"));
            }
            Ok(Detection {
                x: r.x,
                y: r.y,
                class: class_of(path, line, r.class_id)?,
                confidence: r.confidence,
            })
        })
        .collect()
}

pub fn write_detections(path: &Path, dets: &[Detection]) -> Result<()> {
    write_csv(
        path,
        dets.iter().map(|d| DetectionRow {
            x: d.x,
            y: d.y,
            class_id: d.class.id() as i64,
            confidence: d.confidence,
        }),
        &["x", "y", "class_id", "confidence"],
    )
}

/// Rows of a plain table; every row must have as many cells as the header.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let fail = |e: csv::Error| CliError::parse(path, None, e.to_string());
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Per-scene metadata; the registration places the cell patch inside the
/// tissue patch in tissue pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub cell_mpp: f64,
    pub tissue_mpp: f64,
    /// `[x, y]` of the cell field of view's top-left tissue pixel.
    pub cell_offset_in_tissue: [usize; 2],
    /// `[width, height]` of the cell field of view in tissue pixels.
    pub cell_extent_in_tissue: [usize; 2],
    pub organ_tag: String,
}

impl SceneMeta {
    pub fn registration(&self) -> PatchRegistration {
        PatchRegistration {
            tissue_mpp: self.tissue_mpp,
            cell_mpp: self.cell_mpp,
            cell_offset_in_tissue: (self.cell_offset_in_tissue[0], self.cell_offset_in_tissue[1]),
            cell_extent_in_tissue: (self.cell_extent_in_tissue[0], self.cell_extent_in_tissue[1]),
        }
    }
}

fn encode_png(path: &Path, bytes: &[u8], w: usize, h: usize, color: ExtendedColorType) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let enc = PngEncoder::new_with_quality(BufWriter::new(file), CompressionType::Default, FilterType::Adaptive);
    enc.write_image(bytes, w as u32, h as u32, color)
        .map_err(|e| CliError::parse(path, None, e.to_string()))
}

fn decode_png(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.display().to_string()));
    }
    image::open(path).map_err(|e| CliError::parse(path, None, e.to_string()))
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 8-bit RGB from the first three channels, clamped to [0, 1].
pub fn write_rgb(path: &Path, img: &Raster) -> Result<()> {
    if img.channels() < 3 {
        return Err(CliError::Config(format!("an RGB image needs 3 channels, got {}", img.channels())));
    }
    let (h, w) = img.dims();
    let n = h * w;
    let d = img.data();
    let mut bytes = Vec::with_capacity(3 * n);
    for i in 0..n {
        for c in 0..3 {
            bytes.push(to_u8(d[c * n + i]));
        }
    }
    encode_png(path, &bytes, w, h, ExtendedColorType::Rgb8)
}

pub fn read_rgb(path: &Path, mpp: Option<f64>) -> Result<Raster> {
    let img = decode_png(path)?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let n = h * w;
    let mut data = vec![0.0; 3 * n];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * n + i] = px[c] as f64 / 255.0;
        }
    }
    let r = Raster::from_vec(h, w, 3, data)?;
    Ok(match mpp {
        Some(m) => r.with_mpp(m),
        None => r,
    })
}

fn write_gray16(path: &Path, values: impl Iterator<Item = u16>, w: usize, h: usize) -> Result<()> {
    let bytes: Vec<u8> = values.flat_map(u16::to_ne_bytes).collect();
    debug_assert_eq!(bytes.len(), 2 * w * h);
    encode_png(path, &bytes, w, h, ExtendedColorType::L16)
}

fn read_gray16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    match decode_png(path)? {
        DynamicImage::ImageLuma16(img) => Ok((img.height() as usize, img.width() as usize, img.into_raw())),
        other => Err(CliError::parse(
            path,
            None,
            format!("expected a 16-bit grayscale PNG, found {:?}", other.color()),
        )),
    }
}

pub fn quantize(p: f64) -> u16 {
    (p.clamp(0.0, 1.0) * MAP_SCALE).round() as u16
}

pub fn write_map_plane(path: &Path, r: &Raster, c: usize) -> Result<()> {
    let (h, w) = r.dims();
    write_gray16(path, r.plane(c).iter().map(|&v| quantize(v)), w, h)
}

pub fn read_map_plane(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let (h, w, v) = read_gray16(path)?;
    Ok((h, w, v.into_iter().map(|q| q as f64 / MAP_SCALE).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelIndex {
    /// File name and meaning of every channel, in order.
    pub channels: Vec<ChannelFile>,
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mpp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFile {
    pub name: String,
    pub file: String,
}

pub const CHANNEL_INDEX_FILE: &str = "channels.json";
pub const CELL_CHANNELS: [&str; 3] = ["background", "background_cell", "tumor_cell"];
pub const TISSUE_CHANNELS: [&str; 2] = ["background", "cancer"];

/// Writes one PNG per channel plus `channels.json` into `dir`; returns the
/// written paths.
pub fn write_maps(dir: &Path, r: &Raster, names: &[&str], format: Option<&str>) -> Result<Vec<PathBuf>> {
    if names.len() != r.channels() {
        return Err(CliError::Config(format!(
            "{} channel names for a {}-channel map",
            names.len(),
            r.channels()
        )));
    }
    create_dir(dir)?;
    let mut written = Vec::new();
    let mut channels = Vec::new();
    for (c, name) in names.iter().enumerate() {
        let file = format!("map_{c}_{name}.png");
        let path = dir.join(&file);
        write_map_plane(&path, r, c)?;
        written.push(path);
        channels.push(ChannelFile {
            name: name.to_string(),
            file,
        });
    }
    let index = ChannelIndex {
        channels,
        scale: MAP_SCALE,
        mpp: r.mpp,
        format: format.map(str::to_string),
    };
    let path = dir.join(CHANNEL_INDEX_FILE);
    write_json(&path, &index)?;
    written.push(path);
    Ok(written)
}

pub fn read_maps(dir: &Path) -> Result<(Raster, ChannelIndex)> {
    let index_path = dir.join(CHANNEL_INDEX_FILE);
    if !index_path.exists() {
        return Err(CliError::MissingInput(index_path.display().to_string()));
    }
    let index: ChannelIndex = read_json(&index_path)?;
    let mut planes = Vec::new();
    let mut dims = None;
    for ch in &index.channels {
        let path = dir.join(&ch.file);
        let (h, w, v) = read_map_plane(&path)?;
        if dims.is_some_and(|d| d != (h, w)) {
            return Err(CliError::parse(&path, None, "channel sizes differ"));
        }
        dims = Some((h, w));
        planes.extend(v);
    }
    let (h, w) = dims.ok_or_else(|| CliError::parse(&index_path, None, "no channels listed"))?;
    let mut r = Raster::from_vec(h, w, index.channels.len(), planes)?;
    r.mpp = index.mpp;
    Ok((r, index))
}

/// 16-bit instance labels.
pub fn write_instances(path: &Path, labels: &LabelMap) -> Result<()> {
    let (h, w) = labels.dims();
    if labels.max_label() > u16::MAX as u32 {
        return Err(CliError::Config(format!(
            "instance label {} does not fit a 16-bit PNG",
            labels.max_label()
        )));
    }
    write_gray16(path, labels.labels().iter().map(|&l| l as u16), w, h)
}

pub fn read_instances(path: &Path) -> Result<LabelMap> {
    let (h, w, v) = read_gray16(path)?;
    Ok(LabelMap::from_vec(h, w, v.into_iter().map(u32::from).collect())?)
}

/// 8-bit tissue labels.
pub fn write_tissue_labels(path: &Path, labels: &LabelMap) -> Result<()> {
    let (h, w) = labels.dims();
    let bytes = labels
        .labels()
        .iter()
        .map(|&l| u8::try_from(l).map_err(|_| CliError::Config(format!("tissue label {l} exceeds 255"))))
        .collect::<Result<Vec<_>>>()?;
    encode_png(path, &bytes, w, h, ExtendedColorType::L8)
}

pub fn read_tissue_labels(path: &Path) -> Result<LabelMap> {
    let img = decode_png(path)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(LabelMap::from_vec(h, w, img.into_raw().into_iter().map(u32::from).collect())?)
}

/// Standard file names inside a scene directory.
pub mod scene_files {
    pub const IMAGE: &str = "image.png";
    pub const TISSUE: &str = "tissue.png";
    pub const ANNOTATIONS: &str = "annotations.csv";
    pub const INSTANCES: &str = "instances.png";
    pub const TISSUE_GT: &str = "tissue_gt.png";
    pub const META: &str = "meta.json";
}

/// A scene as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneData {
    pub cell_img: Raster,
    pub tissue_img: Raster,
    pub annotations: PointAnnotations,
    pub instances: LabelMap,
    pub tissue_gt: LabelMap,
    pub meta: SceneMeta,
}

pub fn write_scene(dir: &Path, s: &SceneData) -> Result<Vec<PathBuf>> {
    use scene_files::*;
    create_dir(dir)?;
    let p = |f: &str| dir.join(f);
    write_rgb(&p(IMAGE), &s.cell_img)?;
    write_rgb(&p(TISSUE), &s.tissue_img)?;
    write_annotations(&p(ANNOTATIONS), &s.annotations)?;
    write_instances(&p(INSTANCES), &s.instances)?;
    write_tissue_labels(&p(TISSUE_GT), &s.tissue_gt)?;
    write_json(&p(META), &s.meta)?;
    Ok([IMAGE, TISSUE, ANNOTATIONS, INSTANCES, TISSUE_GT, META].iter().map(|f| p(f)).collect())
}

pub fn read_scene(dir: &Path) -> Result<SceneData> {
    use scene_files::*;
    let meta_path = dir.join(META);
    if !meta_path.exists() {
        return Err(CliError::MissingInput(meta_path.display().to_string()));
    }
    let meta: SceneMeta = read_json(&meta_path)?;
    let cell_img = read_rgb(&dir.join(IMAGE), Some(meta.cell_mpp))?;
    let tissue_img = read_rgb(&dir.join(TISSUE), Some(meta.tissue_mpp))?;
    let ann_path = dir.join(ANNOTATIONS);
    let annotations = read_annotations(&ann_path, meta.cell_mpp)?;
    let (h, w) = cell_img.dims();
    annotations
        .validate(h, w)
        .map_err(|e| CliError::parse(&ann_path, None, e.to_string()))?;
    let instances = read_instances(&dir.join(INSTANCES))?;
    let tissue_gt = read_tissue_labels(&dir.join(TISSUE_GT))?;
    if instances.dims() != (h, w) || tissue_gt.dims() != tissue_img.dims() {
        return Err(CliError::parse(dir, None, "scene rasters do not share the expected sizes"));
    }
    meta.registration()
        .validate(tissue_img.height(), tissue_img.width())?;
    Ok(SceneData {
        cell_img,
        tissue_img,
        annotations,
        instances,
        tissue_gt,
        meta,
    })
}

/// Paths of the files making up a scene directory.
pub fn scene_paths(dir: &Path) -> Vec<PathBuf> {
    use scene_files::*;
    [IMAGE, TISSUE, ANNOTATIONS, INSTANCES, TISSUE_GT, META]
        .iter()
        .map(|f| dir.join(f))
        .collect()
}

/// Scene directories directly below `root` (any directory holding a
/// `meta.json`), sorted by name; `root` itself if it is a scene.
pub fn list_scenes(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(scene_files::META).exists() {
        return Ok(vec![root.to_path_buf()]);
    }
    let entries = fs::read_dir(root).map_err(|e| CliError::io(root, e))?;
    let mut dirs = Vec::new();
    for e in entries {
        let path = e.map_err(|e| CliError::io(root, e))?.path();
        if path.join(scene_files::META).exists() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::MissingInput(format!("no scene directories under {}", root.display())));
    }
    Ok(dirs)
}

pub fn flush_stdout(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    let _ = out.flush();
}
