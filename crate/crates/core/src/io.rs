//! File formats: MOT-style CSV for detections and track records, a compact
//! little-endian container for embeddings, and the sequence directory that
//! ties them together.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::Path;

use crate::appearance::Embedding;
use crate::error::{Error, Result};
use crate::geometry::{BBox, ScoredBox};
use crate::metrics::TrackRecord;
use crate::sim::{Provenance, SubsampleRatio};
use crate::tracker::FrameInput;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"TCBE";
pub const EMBEDDING_VERSION: u16 = 1;
const HEADER_LEN: usize = 12;

pub const DETECTIONS_FILE: &str = "det.txt";
pub const EMBEDDINGS_FILE: &str = "emb.bin";
pub const GT_FILE: &str = "gt.txt";
pub const SEQINFO_FILE: &str = "seqinfo.txt";
pub const PROVENANCE_FILE: &str = "prov.txt";

/// Detections grouped by frame, in file order within each frame.
pub type DetectionSet = BTreeMap<u32, Vec<ScoredBox>>;

/// One MOT row after field mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct MotRow {
    pub line: usize,
    pub frame: u32,
    /// `None` for the `-1` placeholder.
    pub id: Option<u64>,
    pub bbox: BBox,
    pub conf: f64,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses MOT rows `frame,id,x,y,w,h,conf[,a,b,c]`.
pub fn parse_mot_rows(text: impl Read, path: &Path) -> Result<Vec<MotRow>> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let fail = |msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
        if !(7..=10).contains(&rec.len()) {
            return Err(fail(format!("expected 7 to 10 fields, found {}", rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            let field = &rec[i];
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(fail(format!("field {} '{field}' is not a finite number", i + 1))),
            }
        };
        let frame = num(0)?;
        if frame < 1.0 || frame.fract() != 0.0 || frame > u32::MAX as f64 {
            return Err(fail(format!("frame '{}' must be a positive integer", &rec[0])));
        }
        let id = num(1)?;
        let id = if id == -1.0 {
            None
        } else if id >= 0.0 && id.fract() == 0.0 {
            Some(id as u64)
        } else {
            return Err(fail(format!("id '{}' must be a non-negative integer or -1", &rec[1])));
        };
        let bbox = BBox::new(num(2)?, num(3)?, num(4)?, num(5)?).map_err(|e| fail(e.to_string()))?;
        let conf = num(6)?;
        for i in 7..rec.len() {
            num(i)?;
        }
        rows.push(MotRow { line, frame: frame as u32, id, bbox, conf });
    }
    Ok(rows)
}

pub fn parse_detections(text: impl Read, path: &Path) -> Result<DetectionSet> {
    let mut set = DetectionSet::new();
    for row in parse_mot_rows(text, path)? {
        let det = ScoredBox::single_class(row.bbox, row.conf).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: row.line,
            msg: e.to_string(),
        })?;
        set.entry(row.frame).or_default().push(det);
    }
    Ok(set)
}

pub fn read_detections(path: &Path) -> Result<DetectionSet> {
    parse_detections(read_file(path)?.as_slice(), path)
}

/// Reads ground truth or tracker output. Every row needs a real id.
pub fn read_track_records(path: &Path) -> Result<Vec<TrackRecord>> {
    let rows = parse_mot_rows(read_file(path)?.as_slice(), path)?;
    rows.into_iter()
        .map(|r| match r.id {
            Some(id) => Ok(TrackRecord { frame: r.frame, id, bbox: r.bbox, conf: r.conf }),
            None => Err(Error::Parse {
                path: path.to_path_buf(),
                line: r.line,
                msg: "track records need an id".into(),
            }),
        })
        .collect()
}

fn push_row(out: &mut String, frame: u32, id: Option<u64>, b: &BBox, conf: f64) {
    let id = id.map_or_else(|| "-1".to_string(), |i| i.to_string());
    let _ = writeln!(out, "{frame},{id},{:.6},{:.6},{:.6},{:.6},{conf:.6},-1,-1,-1", b.x, b.y, b.w, b.h);
}

/// Renders records sorted by (frame, id) with six decimals.
pub fn format_results(records: &[TrackRecord]) -> String {
    let mut sorted: Vec<&TrackRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.frame, r.id));
    let mut out = String::new();
    for r in sorted {
        push_row(&mut out, r.frame, Some(r.id), &r.bbox, r.conf);
    }
    out
}

pub fn write_results(path: &Path, records: &[TrackRecord]) -> Result<()> {
    write_file(path, format_results(records).as_bytes())
}

/// Writes detections with the `-1` id placeholder, frame by frame in order.
pub fn write_detections(path: &Path, frames: &[FrameInput]) -> Result<()> {
    let mut out = String::new();
    for f in frames {
        for d in &f.detections {
            push_row(&mut out, f.frame_index, None, &d.bbox, d.conf);
        }
    }
    write_file(path, out.as_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub frame: u32,
    /// Row position of the detection within its frame.
    pub det_index: u32,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub dim: usize,
    pub records: Vec<EmbeddingRecord>,
}

impl EmbeddingFile {
    pub fn from_frames(frames: &[FrameInput], dim: usize) -> Result<Self> {
        let mut records = Vec::new();
        for f in frames {
            for (i, e) in f.embeddings.iter().enumerate() {
                if e.dim() != dim {
                    return Err(Error::InvalidInput(format!(
                        "frame {} detection {i}: embedding dim {} != {dim}",
                        f.frame_index,
                        e.dim()
                    )));
                }
                records.push(EmbeddingRecord {
                    frame: f.frame_index,
                    det_index: i as u32,
                    values: e.0.clone(),
                });
            }
        }
        Ok(EmbeddingFile { dim, records })
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let dim = u16::try_from(self.dim)
            .map_err(|_| Error::InvalidInput(format!("dim {} exceeds u16", self.dim)))?;
        let count = u32::try_from(self.records.len())
            .map_err(|_| Error::InvalidInput("too many embedding records".into()))?;
        let mut out = Vec::with_capacity(HEADER_LEN + self.records.len() * (8 + 4 * self.dim));
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
        out.extend_from_slice(&dim.to_le_bytes());
        out.extend_from_slice(&count.to_le_bytes());
        for r in &self.records {
            if r.values.len() != self.dim {
                return Err(Error::InvalidInput(format!(
                    "record (frame {}, index {}) has {} values, expected {}",
                    r.frame,
                    r.det_index,
                    r.values.len(),
                    self.dim
                )));
            }
            out.extend_from_slice(&r.frame.to_le_bytes());
            out.extend_from_slice(&r.det_index.to_le_bytes());
            for v in &r.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if &bytes[0..4] != EMBEDDING_MAGIC {
            return Err(Error::Format("bad magic, expected TCBE".into()));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u16_at(4);
        if version != EMBEDDING_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dim = u16_at(6) as usize;
        let count = u32_at(8) as usize;
        let stride = 8 + 4 * dim;
        let expected = count
            .checked_mul(stride)
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(|| Error::Format("record count overflows".into()))?;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "{count} records of dim {dim} need {expected} bytes, file has {}",
                bytes.len()
            )));
        }
        let records = bytes[HEADER_LEN..]
            .chunks_exact(stride)
            .map(|chunk| EmbeddingRecord {
                frame: u32::from_le_bytes(chunk[0..4].try_into().unwrap()),
                det_index: u32::from_le_bytes(chunk[4..8].try_into().unwrap()),
                values: chunk[8..]
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                    .collect(),
            })
            .collect();
        Ok(EmbeddingFile { dim, records })
    }
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingFile> {
    EmbeddingFile::decode(&read_file(path)?)
}

pub fn write_embeddings(path: &Path, file: &EmbeddingFile) -> Result<()> {
    write_file(path, &file.encode()?)
}

/// Pairs every detection with exactly one embedding record and emits a
/// frame for each index in `1..=max(frame_count, last detection frame)`,
/// so frames without detections still age the tracks.
pub fn assemble_frames(
    dets: &DetectionSet,
    embs: &EmbeddingFile,
    frame_count: Option<u32>,
) -> Result<Vec<FrameInput>> {
    let total: usize = dets.values().map(Vec::len).sum();
    if total != embs.records.len() {
        return Err(Error::Alignment(format!(
            "{total} detections but {} embedding records",
            embs.records.len()
        )));
    }
    let mut slots: BTreeMap<u32, Vec<Option<Embedding>>> =
        dets.iter().map(|(&f, d)| (f, vec![None; d.len()])).collect();
    for r in &embs.records {
        let slot =
            slots.get_mut(&r.frame).and_then(|s| s.get_mut(r.det_index as usize)).ok_or_else(|| {
                Error::Alignment(format!(
                    "embedding for frame {} index {} has no detection",
                    r.frame, r.det_index
                ))
            })?;
        if slot.is_some() {
            return Err(Error::Alignment(format!(
                "duplicate embedding for frame {} index {}",
                r.frame, r.det_index
            )));
        }
        *slot = Some(Embedding(r.values.clone()));
    }
    let last = dets.keys().next_back().copied().unwrap_or(0).max(frame_count.unwrap_or(0));
    let mut frames = Vec::with_capacity(last as usize);
    for f in 1..=last {
        let (boxes, embeddings) = match dets.get(&f) {
            Some(d) => {
                // Counts match and duplicates are rejected, so every slot is filled.
                let e = slots.remove(&f).unwrap_or_default().into_iter().flatten().collect();
                (d.clone(), e)
            }
            None => (Vec::new(), Vec::new()),
        };
        frames.push(FrameInput::new(f, boxes, embeddings)?);
    }
    Ok(frames)
}

/// Contents of `seqinfo.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMeta {
    pub name: String,
    pub fps: f64,
    pub frame_count: u32,
    pub image_size: (u32, u32),
    pub embedding_dim: usize,
}

impl SequenceMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::InvalidInput(format!("fps {} must be positive", self.fps)));
        }
        if self.embedding_dim == 0 || self.embedding_dim > u16::MAX as usize {
            return Err(Error::InvalidInput(format!("embedding_dim {} out of range", self.embedding_dim)));
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        format!(
            "name={}\nfps={:.6}\nframe_count={}\nimage_width={}\nimage_height={}\nembedding_dim={}\n",
            self.name, self.fps, self.frame_count, self.image_size.0, self.image_size.1, self.embedding_dim
        )
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let kv = parse_key_values(text, path)?;
        let get = |k: &str| -> Result<&str> {
            kv.get(k).map(|(_, v)| v.as_str()).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: format!("missing key '{k}'"),
            })
        };
        let num = |k: &str| -> Result<f64> {
            let (line, v) = &kv[k];
            v.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: *line,
                msg: format!("'{v}' is not a number"),
            })
        };
        for k in kv.keys() {
            if !["name", "fps", "frame_count", "image_width", "image_height", "embedding_dim"]
                .contains(&k.as_str())
            {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: kv[k].0,
                    msg: format!("unknown key '{k}'"),
                });
            }
        }
        let count = |k: &str| -> Result<u32> {
            get(k)?;
            let v = num(k)?;
            if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: kv[k].0,
                    msg: format!("'{k}' must be a non-negative integer"),
                });
            }
            Ok(v as u32)
        };
        let meta = SequenceMeta {
            name: get("name")?.to_string(),
            fps: {
                get("fps")?;
                num("fps")?
            },
            frame_count: count("frame_count")?,
            image_size: (count("image_width")?, count("image_height")?),
            embedding_dim: count("embedding_dim")? as usize,
        };
        meta.validate()?;
        Ok(meta)
    }
}

/// Parses `key=value` lines, skipping blanks and `#` comments. Values keep
/// the line they came from for error reporting.
pub fn parse_key_values(text: &str, path: &Path) -> Result<BTreeMap<String, (usize, String)>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fail = |msg: String| Error::Parse { path: path.to_path_buf(), line: n + 1, msg };
        let (k, v) = line.split_once('=').ok_or_else(|| fail(format!("expected key=value, got '{line}'")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(fail("empty key".into()));
        }
        if out.insert(k.to_string(), (n + 1, v.to_string())).is_some() {
            return Err(fail(format!("duplicate key '{k}'")));
        }
    }
    Ok(out)
}

/// A sequence directory: detections, embeddings, optional ground truth and
/// optional detection provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceData {
    pub meta: SequenceMeta,
    pub frames: Vec<FrameInput>,
    pub gt: Vec<TrackRecord>,
    pub provenance: Option<Vec<Vec<Provenance>>>,
}

fn render_provenance(frames: &[FrameInput], prov: &[Vec<Provenance>]) -> String {
    let mut out = String::new();
    for (f, p) in frames.iter().zip(prov) {
        for (i, src) in p.iter().enumerate() {
            let id = match src {
                Provenance::Agent(id) => *id as i64,
                Provenance::FalsePositive => -1,
            };
            let _ = writeln!(out, "{},{i},{id}", f.frame_index);
        }
    }
    out
}

fn parse_provenance(text: &str, path: &Path, frames: &[FrameInput]) -> Result<Vec<Vec<Provenance>>> {
    let mut out: Vec<Vec<Provenance>> =
        frames.iter().map(|f| Vec::with_capacity(f.detections.len())).collect();
    let index: BTreeMap<u32, usize> = frames.iter().enumerate().map(|(i, f)| (f.frame_index, i)).collect();
    for (n, line) in text.lines().enumerate() {
        let fail = |msg: &str| Error::Parse { path: path.to_path_buf(), line: n + 1, msg: msg.to_string() };
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        let [frame, det, id] = parts[..] else {
            return Err(fail("expected frame,det_index,id"));
        };
        let frame: u32 = frame.parse().map_err(|_| fail("bad frame"))?;
        let det: usize = det.parse().map_err(|_| fail("bad det_index"))?;
        let id: i64 = id.parse().map_err(|_| fail("bad id"))?;
        let slot = index.get(&frame).map(|&i| &mut out[i]).ok_or_else(|| fail("frame has no detections"))?;
        if det != slot.len() {
            return Err(fail("det_index out of order"));
        }
        slot.push(match id {
            -1 => Provenance::FalsePositive,
            id if id >= 0 => Provenance::Agent(id as u64),
            _ => return Err(fail("id must be -1 or non-negative")),
        });
    }
    for (f, p) in frames.iter().zip(&out) {
        if f.detections.len() != p.len() {
            return Err(Error::Alignment(format!(
                "frame {}: {} detections, {} provenance rows",
                f.frame_index,
                f.detections.len(),
                p.len()
            )));
        }
    }
    Ok(out)
}

impl SequenceData {
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.meta.validate()?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join(SEQINFO_FILE), self.meta.render().as_bytes())?;
        write_detections(&dir.join(DETECTIONS_FILE), &self.frames)?;
        write_embeddings(
            &dir.join(EMBEDDINGS_FILE),
            &EmbeddingFile::from_frames(&self.frames, self.meta.embedding_dim)?,
        )?;
        write_results(&dir.join(GT_FILE), &self.gt)?;
        if let Some(p) = &self.provenance {
            write_file(&dir.join(PROVENANCE_FILE), render_provenance(&self.frames, p).as_bytes())?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(SEQINFO_FILE);
        let meta = SequenceMeta::parse(&String::from_utf8_lossy(&read_file(&meta_path)?), &meta_path)?;
        let dets = read_detections(&dir.join(DETECTIONS_FILE))?;
        let embs = read_embeddings(&dir.join(EMBEDDINGS_FILE))?;
        if embs.dim != meta.embedding_dim && !embs.records.is_empty() {
            return Err(Error::Alignment(format!(
                "{SEQINFO_FILE} says dim {}, {EMBEDDINGS_FILE} has {}",
                meta.embedding_dim, embs.dim
            )));
        }
        let frames = assemble_frames(&dets, &embs, Some(meta.frame_count))?;
        let gt_path = dir.join(GT_FILE);
        let gt = if gt_path.exists() { read_track_records(&gt_path)? } else { Vec::new() };
        let prov_path = dir.join(PROVENANCE_FILE);
        let provenance = if prov_path.exists() {
            let text = String::from_utf8_lossy(&read_file(&prov_path)?).into_owned();
            Some(parse_provenance(&text, &prov_path, &frames)?)
        } else {
            None
        };
        Ok(SequenceData { meta, frames, gt, provenance })
    }

    /// Keeps frames 1, 1 + k, 1 + 2k, ... and renumbers them.
    pub fn subsample(&self, ratio: SubsampleRatio) -> Self {
        let (frames, gt, provenance) =
            crate::sim::subsample_parts(&self.frames, &self.gt, self.provenance.as_deref(), ratio);
        let kept = (1..=self.meta.frame_count).filter(|&f| ratio.remap(f).is_some()).count() as u32;
        SequenceData {
            meta: SequenceMeta {
                frame_count: kept,
                fps: self.meta.fps / ratio.step() as f64,
                ..self.meta.clone()
            },
            frames,
            gt,
            provenance,
        }
    }
}
