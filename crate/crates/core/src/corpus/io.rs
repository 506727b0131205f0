//! Corpus directory layout:
//!
//! ```text
//! corpus/
//!   manifest.txt          format line, shape, class names in index order
//!   labels.tsv            id <TAB> frames <TAB> comma-separated class names
//!   features/00000000.f32 little-endian f32, row-major frames x freq_bins
//! ```
//!
//! A payload may hold fewer frames than the manifest declares (variable-length
//! clips); it is zero-padded to the declared shape on load.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{check_class_name, ClassId, CorpusError, FeatureShape, MultiLabelCorpus, Sample};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const LABELS_FILE: &str = "labels.tsv";
pub const FEATURES_DIR: &str = "features";
const FORMAT_LINE: &str = "psla-corpus 1";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn payload_name(index: usize) -> String {
    format!("{index:08}.f32")
}

pub fn write_corpus(corpus: &MultiLabelCorpus, dir: &Path) -> Result<(), CorpusError> {
    let features = dir.join(FEATURES_DIR);
    fs::create_dir_all(&features).map_err(io_err(&features))?;
    let shape = corpus.feature_shape();
    let mut manifest = format!(
        "{FORMAT_LINE}\ntime_frames {}\nfreq_bins {}\nclasses {}\n",
        shape.time_frames,
        shape.freq_bins,
        corpus.num_classes()
    );
    for name in &corpus.class_table().names {
        let _ = writeln!(manifest, "class {name}");
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest).map_err(io_err(&path))?;

    for (i, s) in corpus.samples().iter().enumerate() {
        let bytes: Vec<u8> = s.features.iter().flat_map(|v| v.to_le_bytes()).collect();
        let path = features.join(payload_name(i));
        fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    write_labels(corpus, &corpus.label_sets(), &dir.join(LABELS_FILE))
}

/// Writes a label file for `corpus`'s samples with the given label sets, in
/// the same format `read_corpus` consumes.
pub fn write_labels(
    corpus: &MultiLabelCorpus,
    labels: &[Vec<ClassId>],
    path: &Path,
) -> Result<(), CorpusError> {
    let names = &corpus.class_table().names;
    let frames = corpus.feature_shape().time_frames;
    let mut out = String::new();
    for (s, set) in corpus.samples().iter().zip(labels) {
        let joined: Vec<&str> = set.iter().map(|&k| names[k].as_str()).collect();
        let _ = writeln!(out, "{}\t{}\t{}", s.id, frames, joined.join(","));
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn read_corpus(dir: &Path) -> Result<MultiLabelCorpus, CorpusError> {
    read_corpus_with_labels(dir, &dir.join(LABELS_FILE))
}

/// Reads a corpus, taking labels from `labels_path` instead of the corpus's
/// own label file (e.g. an enhanced label set).
pub fn read_corpus_with_labels(
    dir: &Path,
    labels_path: &Path,
) -> Result<MultiLabelCorpus, CorpusError> {
    let (names, shape) = read_manifest(&dir.join(MANIFEST_FILE))?;
    let rows = parse_label_file(labels_path, &names)?;
    let mut samples = Vec::with_capacity(rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        if row.frames > shape.time_frames || row.frames == 0 {
            return Err(CorpusError::ShapeMismatch {
                sample: row.id,
                reason: format!(
                    "{} frames declared, corpus allows 1..={}",
                    row.frames, shape.time_frames
                ),
            });
        }
        let path = dir.join(FEATURES_DIR).join(payload_name(i));
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let expected = row.frames * shape.freq_bins * 4;
        if bytes.len() != expected {
            return Err(CorpusError::ShapeMismatch {
                sample: row.id,
                reason: format!(
                    "payload has {} bytes, {}x{} f32 needs {expected}",
                    bytes.len(),
                    row.frames,
                    shape.freq_bins
                ),
            });
        }
        let mut features: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        features.resize(shape.len(), 0.0);
        samples.push(Sample::new(row.id, features, row.labels));
    }
    MultiLabelCorpus::new(names, shape, samples)
}

/// Reads just the label sets of a label file against a known class list.
pub fn read_labels(path: &Path, class_names: &[String]) -> Result<Vec<Vec<ClassId>>, CorpusError> {
    Ok(parse_label_file(path, class_names)?
        .into_iter()
        .map(|r| r.labels)
        .collect())
}

fn read_manifest(path: &Path) -> Result<(Vec<String>, FeatureShape), CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |line: usize, reason: String| CorpusError::MalformedManifest {
        path: path.display().to_string(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, l)) if l == FORMAT_LINE => {}
        Some((n, l)) => return Err(bad(n, format!("expected {FORMAT_LINE:?}, got {l:?}"))),
        None => return Err(bad(1, "empty manifest".into())),
    }
    let mut time = None;
    let mut freq = None;
    let mut declared = None;
    let mut names = Vec::new();
    for (n, line) in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| bad(n, format!("expected `key value`, got {line:?}")))?;
        let value = value.trim();
        let number = || {
            value
                .parse::<usize>()
                .map_err(|e| bad(n, format!("{key}: {e}")))
        };
        match key {
            "time_frames" => time = Some(number()?),
            "freq_bins" => freq = Some(number()?),
            "classes" => declared = Some(number()?),
            "class" => {
                check_class_name(value).map_err(|r| bad(n, r))?;
                if names.iter().any(|x| x == value) {
                    return Err(bad(n, format!("duplicate class {value:?}")));
                }
                names.push(value.to_string());
            }
            other => return Err(bad(n, format!("unknown key {other:?}"))),
        }
    }
    let last = text.lines().count();
    let time = time.ok_or_else(|| bad(last, "missing time_frames".into()))?;
    let freq = freq.ok_or_else(|| bad(last, "missing freq_bins".into()))?;
    if time == 0 || freq == 0 {
        return Err(bad(last, "zero-sized feature shape".into()));
    }
    if let Some(d) = declared {
        if d != names.len() {
            return Err(bad(last, format!("declares {d} classes, lists {}", names.len())));
        }
    }
    if names.is_empty() {
        return Err(bad(last, "no classes".into()));
    }
    Ok((names, FeatureShape::new(time, freq)))
}

struct LabelRow {
    id: String,
    frames: usize,
    labels: Vec<ClassId>,
}

fn parse_label_file(path: &Path, names: &[String]) -> Result<Vec<LabelRow>, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| CorpusError::MalformedLabels {
            path: path.display().to_string(),
            line: n,
            reason,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, frames, labels] = fields[..] else {
            return Err(bad(format!("expected 3 tab-separated fields, got {}", fields.len())));
        };
        let frames = frames
            .parse::<usize>()
            .map_err(|e| bad(format!("frames: {e}")))?;
        let labels = labels
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|name| {
                names
                    .iter()
                    .position(|x| x == name)
                    .ok_or_else(|| CorpusError::UnknownClass {
                        name: name.to_string(),
                        path: path.display().to_string(),
                        line: n,
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(LabelRow {
            id: id.to_string(),
            frames,
            labels,
        });
    }
    Ok(rows)
}
