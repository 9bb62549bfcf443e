//! Dataset manifests, image decoding and cached feature extraction.
//!
//! A manifest is a CSV file with header `path,mos[,split]`. Two optional
//! comment lines before the header declare metadata:
//!
//! ```text
//! # source=KonIQ-10k
//! # mos_range=1,5
//! path,mos,split
//! img/0001.png,3.42,train
//! ```

use std::fmt;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::color::{ColorSpace, Image};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::model::DualBranchModel;
use crate::preprocess::{prepare, BranchPreprocessConfig};
use crate::weights::WeightStore;

pub const CACHE_DIR_ENV: &str = "NRIQA_CACHE_DIR";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "" | "unassigned" => Ok(Split::Unassigned),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub mos: f64,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub source: String,
    /// Inclusive; unbounded by default.
    pub mos_range: (f64, f64),
    pub entries: Vec<ManifestEntry>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            source: String::new(),
            mos_range: (f64::NEG_INFINITY, f64::INFINITY),
            entries: Vec::new(),
        }
    }
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mos(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.mos).collect()
    }

    /// Entries in `split`, keeping manifest order.
    pub fn filter_split(&self, split: Split) -> Manifest {
        Manifest {
            entries: self.entries.iter().filter(|e| e.split == split).cloned().collect(),
            ..self.clone()
        }
    }

    pub fn select(&self, indices: &[usize]) -> Manifest {
        Manifest {
            entries: indices.iter().map(|&i| self.entries[i].clone()).collect(),
            ..self.clone()
        }
    }
}

fn manifest_err(file: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Manifest {
        file: file.to_string(),
        line,
        msg: msg.into(),
    }
}

pub fn parse_manifest(text: &str, file: &str, base_dir: &Path) -> Result<Manifest> {
    let mut m = Manifest::default();
    let mut header_line = 0;
    for (n, line) in text.lines().enumerate() {
        let t = line.trim();
        let Some(comment) = t.strip_prefix('#') else {
            header_line = n + 1;
            break;
        };
        if let Some((k, v)) = comment.trim().split_once('=') {
            match k.trim() {
                "source" => m.source = v.trim().to_string(),
                "mos_range" => {
                    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                    let parse = |s: &str| s.parse::<f64>().map_err(|e| manifest_err(file, n + 1, format!("bad mos_range: {e}")));
                    let [lo, hi] = parts[..] else {
                        return Err(manifest_err(file, n + 1, "mos_range needs `lo,hi`"));
                    };
                    m.mos_range = (parse(lo)?, parse(hi)?);
                    if !(m.mos_range.0 <= m.mos_range.1) {
                        return Err(manifest_err(file, n + 1, "mos_range needs lo <= hi"));
                    }
                }
                _ => {}
            }
        }
    }
    if header_line == 0 {
        return Err(manifest_err(file, 1, "missing header `path,mos[,split]`"));
    }
    let body: String = text.lines().skip(header_line - 1).collect::<Vec<_>>().join("\n");
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(body.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| manifest_err(file, header_line, e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let has_split = match cols[..] {
        ["path", "mos"] => false,
        ["path", "mos", "split"] => true,
        _ => {
            return Err(manifest_err(
                file,
                header_line,
                format!("missing header `path,mos[,split]` (found `{}`)", cols.join(",")),
            ))
        }
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(header_line, |p| header_line - 1 + p.line() as usize);
            manifest_err(file, line, e.to_string())
        })?;
        let line = header_line - 1 + rec.position().map_or(0, |p| p.line() as usize);
        let path = rec.get(0).unwrap_or("");
        if path.is_empty() {
            return Err(manifest_err(file, line, "empty path"));
        }
        let mos_text = rec.get(1).unwrap_or("");
        let mos: f64 = mos_text
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| manifest_err(file, line, format!("mos `{mos_text}` is not a number")))?;
        if mos < m.mos_range.0 || mos > m.mos_range.1 {
            return Err(manifest_err(
                file,
                line,
                format!("mos {mos} outside declared range [{}, {}]", m.mos_range.0, m.mos_range.1),
            ));
        }
        let split = if has_split {
            rec.get(2)
                .unwrap_or("")
                .parse()
                .map_err(|e: Error| manifest_err(file, line, e.to_string()))?
        } else {
            Split::Unassigned
        };
        let p = PathBuf::from(path);
        let path = if p.is_absolute() { p } else { base_dir.join(p) };
        m.entries.push(ManifestEntry { path, mos, split });
    }
    Ok(m)
}

/// Relative paths are resolved against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, &path.display().to_string(), base)
}

pub fn manifest_to_string(m: &Manifest) -> Result<String> {
    let mut out = String::new();
    if !m.source.is_empty() {
        out.push_str(&format!("# source={}\n", m.source));
    }
    if m.mos_range.0.is_finite() || m.mos_range.1.is_finite() {
        out.push_str(&format!("# mos_range={},{}\n", m.mos_range.0, m.mos_range.1));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Malformed(e.to_string());
    w.write_record(["path", "mos", "split"]).map_err(io)?;
    for e in &m.entries {
        w.write_record([e.path.display().to_string(), e.mos.to_string(), e.split.to_string()])
            .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Malformed(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).map_err(|e| Error::Malformed(e.to_string()))?);
    Ok(out)
}

pub fn save_manifest(m: &Manifest, path: &Path) -> Result<()> {
    std::fs::write(path, manifest_to_string(m)?).map_err(|e| Error::io(path, e))
}

fn corrupt(path: &Path, msg: impl Into<String>) -> Error {
    Error::CorruptImage {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Decodes 8-bit PNG or binary PPM (P6) to RGB in `[0, 1]` via `v / maxval`.
pub fn decode_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image_bytes(&bytes, path)
}

pub fn decode_image_bytes(bytes: &[u8], path: &Path) -> Result<Image> {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(bytes, path)
    } else if bytes.starts_with(b"P6") {
        decode_ppm(bytes, path)
    } else {
        Err(Error::UnsupportedFormat(path.to_path_buf()))
    }
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<Image> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND);
    let mut reader = dec.read_info().map_err(|e| corrupt(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| corrupt(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| corrupt(path, e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(path.to_path_buf()));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(corrupt(path, "palette not expanded")),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = Vec::with_capacity(w * h * 3);
    for row in buf.chunks(info.line_size).take(h) {
        for px in row[..w * channels].chunks(channels) {
            let rgb = if channels < 3 { [px[0]; 3] } else { [px[0], px[1], px[2]] };
            data.extend(rgb.map(|v| v as f32 / 255.0));
        }
    }
    Image::rgb(w, h, data)
}

fn decode_ppm(bytes: &[u8], path: &Path) -> Result<Image> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(corrupt(path, "truncated PPM header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt(path, "bad PPM header field"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(corrupt(path, "PPM header must end with one whitespace byte"));
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 {
        return Err(corrupt(path, "PPM has zero size"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat(path.to_path_buf()));
    }
    let need = w * h * 3;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(corrupt(
            path,
            format!("truncated PPM raster: expected {need} bytes, got {}", raster.len()),
        ));
    }
    let scale = maxval as f32;
    Image::rgb(w, h, raster[..need].iter().map(|&v| v as f32 / scale).collect())
}

fn quantize(img: &Image) -> Vec<u8> {
    img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(quantize(img));
    out
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| Error::Malformed(e.to_string()))?;
        w.write_image_data(&quantize(img)).map_err(|e| Error::Malformed(e.to_string()))?;
    }
    Ok(out)
}

/// Writes PNG or PPM depending on the extension (`.png`, otherwise PPM).
pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    let bytes = match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("png") => encode_png(img)?,
        _ => encode_ppm(img),
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Row-major `rows × cols` matrix of features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("feature_matrix", "data length", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::shape("feature_matrix", format!("row {bad} length"), cols, rows[bad].len()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let data = indices.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        FeatureMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Column-wise concatenation `[self ‖ other]`.
    pub fn hconcat(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.rows != other.rows {
            return Err(Error::shape("feature_matrix", "row counts", self.rows, other.rows));
        }
        let data = (0..self.rows)
            .flat_map(|i| self.row(i).iter().chain(other.row(i)).copied())
            .collect();
        Ok(FeatureMatrix {
            rows: self.rows,
            cols: self.cols + other.cols,
            data,
        })
    }
}

/// Feature container: tensors `features` `[N, C]` and `mos` `[N]`, both f64.
pub fn save_features(path: &Path, features: &FeatureMatrix, mos: &[f64]) -> Result<()> {
    let mut store = WeightStore::new();
    store.insert_slice("features", vec![features.rows, features.cols], &features.data)?;
    store.insert_slice("mos", vec![mos.len()], mos)?;
    store.save(path)
}

pub fn load_features(path: &Path) -> Result<(FeatureMatrix, Vec<f64>)> {
    let store = WeightStore::load(path)?;
    let f = store.get("features").ok_or_else(|| Error::MissingTensor("features".into()))?;
    let [rows, cols] = f.dims[..] else {
        return Err(Error::TensorShape {
            name: "features".into(),
            expected: vec![0, 0],
            actual: f.dims.clone(),
        });
    };
    let features = FeatureMatrix::new(rows, cols, f.data.to_vec())?;
    let mos = store.take::<f64>("mos", &[rows])?;
    Ok((features, mos))
}

/// Cache key over the encoder weights, preprocessing, color space and
/// every image (path, MOS and file bytes).
pub fn feature_cache_key(
    encoder: &Encoder,
    preprocess: &BranchPreprocessConfig,
    space: ColorSpace,
    manifest: &Manifest,
) -> Result<String> {
    let mut h = Sha256::new();
    h.update(encoder.fingerprint().as_bytes());
    h.update(serde_json::to_vec(preprocess).map_err(|e| Error::Malformed(e.to_string()))?);
    h.update(space.name().as_bytes());
    for e in &manifest.entries {
        h.update(e.path.to_string_lossy().as_bytes());
        h.update(e.mos.to_le_bytes());
        let bytes = std::fs::read(&e.path).map_err(|err| Error::io(&e.path, err))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Encodes every manifest image with one branch. Rows follow manifest order;
/// failures are collected and reported together. With `cache_dir`, results
/// are stored under a content-derived key and reused.
pub fn extract_features(
    encoder: &Encoder,
    preprocess: &BranchPreprocessConfig,
    space: ColorSpace,
    manifest: &Manifest,
    cache_dir: Option<&Path>,
) -> Result<(FeatureMatrix, Vec<f64>)> {
    if manifest.is_empty() {
        return Err(Error::InvalidArgument("manifest has no entries".into()));
    }
    let cache_file = match cache_dir {
        Some(dir) => {
            let key = feature_cache_key(encoder, preprocess, space, manifest)?;
            Some(dir.join(format!("{key}.larw")))
        }
        None => None,
    };
    if let Some(f) = cache_file.as_deref().filter(|f| f.exists()) {
        return load_features(f);
    }
    let results: Vec<Result<Vec<f64>>> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let img = decode_image(&e.path)?;
            let x = prepare(&img, preprocess, space)?;
            Ok(encoder.forward(&x)?.into_iter().map(f64::from).collect())
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (e, r) in manifest.entries.iter().zip(results) {
        match r {
            Ok(v) => rows.push(v),
            Err(err) => failures.push(format!("{}: {err}", e.path.display())),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Extraction(failures));
    }
    let features = FeatureMatrix::from_rows(&rows)?;
    let mos = manifest.mos();
    if let Some(f) = cache_file {
        let dir = f.parent().unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tmp = f.with_extension("tmp");
        save_features(&tmp, &features, &mos)?;
        std::fs::rename(&tmp, &f).map_err(|e| Error::io(&f, e))?;
    }
    Ok((features, mos))
}

/// `[authentic ‖ synthetic]` features for the dual model.
pub fn extract_joint_features(
    model: &DualBranchModel,
    space: ColorSpace,
    manifest: &Manifest,
    cache_dir: Option<&Path>,
) -> Result<(FeatureMatrix, Vec<f64>)> {
    let cfg = model.config();
    let (a, mos) = extract_features(model.auth_encoder(), &cfg.auth_preprocess, space, manifest, cache_dir)?;
    let (s, _) = extract_features(model.synth_encoder(), &cfg.synth_preprocess, space, manifest, cache_dir)?;
    Ok((a.hconcat(&s)?, mos))
}

/// Scores every manifest image in parallel; output follows manifest order
/// and all per-image failures are reported together.
pub fn score_manifest(model: &DualBranchModel, space: ColorSpace, manifest: &Manifest) -> Result<Vec<f64>> {
    let results: Vec<Result<f64>> = manifest
        .entries
        .par_iter()
        .map(|e| model.predict(&decode_image(&e.path)?, space))
        .collect();
    let mut scores = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (e, r) in manifest.entries.iter().zip(results) {
        match r {
            Ok(v) => scores.push(v),
            Err(err) => failures.push(format!("{}: {err}", e.path.display())),
        }
    }
    if failures.is_empty() {
        Ok(scores)
    } else {
        Err(Error::Extraction(failures))
    }
}

/// The cache directory from [`CACHE_DIR_ENV`], if set.
pub fn cache_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}
