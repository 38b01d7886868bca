//! Point annotations, detections, the dataset manifest and the detections
//! file format.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth mitosis center.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub x: f64,
    pub y: f64,
    pub slide_id: String,
    pub domain_id: String,
}

/// Predicted mitosis location.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub score: f64,
    pub slide_id: String,
}

impl Detection {
    pub fn new(slide_id: impl Into<String>, x: f64, y: f64, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidConfig(format!(
                "detection score {score} outside [0, 1]"
            )));
        }
        Ok(Self {
            x,
            y,
            score,
            slide_id: slide_id.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlideEntry {
    pub slide_id: String,
    pub image_path: PathBuf,
    pub domain_id: String,
    pub width: usize,
    pub height: usize,
    pub annotations: Vec<[f64; 2]>,
}

impl SlideEntry {
    pub fn annotations(&self) -> Vec<Annotation> {
        self.annotations
            .iter()
            .map(|&[x, y]| Annotation {
                x,
                y,
                slide_id: self.slide_id.clone(),
                domain_id: self.domain_id.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub slides: Vec<SlideEntry>,
    /// Directory relative image paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        Self::from_json_at(text, base_dir.into(), Path::new("<inline>"))
    }

    fn from_json_at(text: &str, base_dir: PathBuf, path: &Path) -> Result<Self> {
        let mut manifest: DatasetManifest =
            serde_json::from_str(text).map_err(|e| Error::ManifestSchema {
                path: path.to_owned(),
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        manifest.base_dir = base_dir;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for slide in &self.slides {
            if !seen.insert(slide.slide_id.as_str()) {
                return Err(Error::DuplicateSlideId(slide.slide_id.clone()));
            }
            if slide.width == 0 || slide.height == 0 {
                return Err(Error::InvalidConfig(format!(
                    "slide `{}` has zero dimension",
                    slide.slide_id
                )));
            }
            for &[x, y] in &slide.annotations {
                let inside =
                    x >= 0.0 && y >= 0.0 && x < slide.width as f64 && y < slide.height as f64;
                if !inside {
                    return Err(Error::AnnotationOutOfBounds {
                        slide_id: slide.slide_id.clone(),
                        x,
                        y,
                        width: slide.width,
                        height: slide.height,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn image_path(&self, slide: &SlideEntry) -> PathBuf {
        self.base_dir.join(&slide.image_path)
    }

    pub fn slide(&self, slide_id: &str) -> Option<&SlideEntry> {
        self.slides.iter().find(|s| s.slide_id == slide_id)
    }

    pub fn domains(&self) -> BTreeSet<&str> {
        self.slides.iter().map(|s| s.domain_id.as_str()).collect()
    }

    pub fn annotation_count(&self) -> usize {
        self.slides.iter().map(|s| s.annotations.len()).sum()
    }

    pub fn all_annotations(&self) -> Vec<Annotation> {
        self.slides
            .iter()
            .flat_map(SlideEntry::annotations)
            .collect()
    }
}

pub fn parse_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    DatasetManifest::from_json_at(&text, base, path)
}

pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, manifest.to_json()).map_err(|e| Error::io(path, e))
}

/// Sorts detections by `(slide_id, y, x)`, the canonical file order.
pub fn sort_detections(detections: &mut [Detection]) {
    detections.sort_by(|a, b| {
        a.slide_id
            .cmp(&b.slide_id)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
}

/// Renders detections as `slide_id<TAB>x<TAB>y<TAB>score` lines.
pub fn format_detections(detections: &[Detection]) -> String {
    let mut out = String::new();
    for d in detections {
        writeln!(out, "{}\t{}\t{}\t{:.4}", d.slide_id, d.x, d.y, d.score).unwrap();
    }
    out
}

pub fn write_detections(detections: &[Detection], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut sorted = detections.to_vec();
    sort_detections(&mut sorted);
    fs::write(path, format_detections(&sorted)).map_err(|e| Error::io(path, e))
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, reason: String| Error::DetectionsFormat {
        path: path.to_owned(),
        line,
        reason,
    };
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad(
                i + 1,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let num = |s: &str, what: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| bad(i + 1, format!("invalid {what} `{s}`")))
        };
        let det = Detection::new(
            fields[0],
            num(fields[1], "x")?,
            num(fields[2], "y")?,
            num(fields[3], "score")?,
        )
        .map_err(|e| bad(i + 1, e.to_string()))?;
        out.push(det);
    }
    Ok(out)
}
