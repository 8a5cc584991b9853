//! Datasets on disk: a directory of PFM images, fixation CSVs and GT maps,
//! indexed by a JSON-lines manifest whose paths are relative to it.

use std::fs;
use std::path::{Path, PathBuf};

use saldist_core::data::{Blob, Sample};
use saldist_core::pipeline::{make_gt_logits, GtParams};
use saldist_core::softmax;
use serde::{Deserialize, Serialize};

use crate::{fixations, jsonl, pfm, IoError, IoResult};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub image: PathBuf,
    pub fixations: PathBuf,
    pub gt: PathBuf,
    pub height: usize,
    pub width: usize,
    #[serde(default)]
    pub blobs: Vec<Blob>,
}

/// Writes `samples` into `dir` and returns the manifest path.
pub fn write_dataset(dir: &Path, samples: &[Sample]) -> IoResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let mut entries = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let e = Entry {
            image: format!("img_{i:04}.pfm").into(),
            fixations: format!("fix_{i:04}.csv").into(),
            gt: format!("gt_{i:04}.pfm").into(),
            height: s.image.height(),
            width: s.image.width(),
            blobs: s.blobs.clone(),
        };
        pfm::write_tensor(&dir.join(&e.image), &s.image)?;
        fixations::write(&dir.join(&e.fixations), &s.fixations)?;
        pfm::write_map(&dir.join(&e.gt), s.gt.grid())?;
        entries.push(e);
    }
    let path = dir.join(MANIFEST_NAME);
    jsonl::write_all(&path, &entries)?;
    Ok(path)
}

pub fn read_entries(manifest: &Path) -> IoResult<Vec<Entry>> {
    let entries: Vec<Entry> = jsonl::read_all(manifest)?;
    if entries.is_empty() {
        return Err(IoError::format(manifest, "manifest lists no samples"));
    }
    Ok(entries)
}

/// Loads every sample of a manifest. Ground truth is rebuilt from the
/// fixations with `gt` (the stored GT maps are 32-bit and for inspection).
pub fn read_dataset(manifest: &Path, gt: &GtParams) -> IoResult<Vec<Sample>> {
    let dir = manifest.parent().unwrap_or(Path::new("."));
    read_entries(manifest)?
        .into_iter()
        .map(|e| {
            let image = pfm::read_tensor(&dir.join(&e.image))?;
            if (image.height(), image.width()) != (e.height, e.width) {
                return Err(IoError::format(&dir.join(&e.image), "image size differs from manifest"));
            }
            let fix_path = dir.join(&e.fixations);
            let fixations = fixations::read(&fix_path, e.height, e.width)?;
            let gt_logits = make_gt_logits(&fixations, gt).map_err(|err| IoError::core(&fix_path, err))?;
            let gt = softmax(&gt_logits).map_err(|err| IoError::core(&fix_path, err))?;
            Ok(Sample {
                image,
                fixations,
                gt_logits,
                gt,
                blobs: e.blobs,
            })
        })
        .collect()
}
