//! Directory-backed video and advert catalogs.

use std::fs;
use std::path::{Path, PathBuf};

use adforge_core::videoio;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaEntry {
    pub id: String,
    pub name: String,
    pub width: usize,
    pub height: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub frame_count: Option<usize>,
}

/// Files in `dir` with extension `ext`, as `(id, path)` sorted by id; the id
/// is the file stem.
fn files_with_ext(dir: &Path, ext: &str) -> std::io::Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn list_videos(dir: &Path) -> Result<Vec<MediaEntry>, String> {
    let files = files_with_ext(dir, "y4m").map_err(|e| format!("{}: {e}", dir.display()))?;
    files
        .into_iter()
        .map(|(id, path)| {
            let s = videoio::probe_y4m(&path).map_err(|e| e.to_string())?;
            Ok(MediaEntry { id, name: file_name(&path), width: s.width, height: s.height, frame_count: Some(s.frame_count) })
        })
        .collect()
}

pub fn list_adverts(dir: &Path) -> Result<Vec<MediaEntry>, String> {
    let files = files_with_ext(dir, "png").map_err(|e| format!("{}: {e}", dir.display()))?;
    files
        .into_iter()
        .map(|(id, path)| {
            let (width, height) = videoio::png_dimensions(&path).map_err(|e| e.to_string())?;
            Ok(MediaEntry { id, name: file_name(&path), width, height, frame_count: None })
        })
        .collect()
}

/// Ids are file stems; anything that could escape the directory is rejected.
pub fn resolve(dir: &Path, id: &str, ext: &str) -> Option<PathBuf> {
    if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
        return None;
    }
    let p = dir.join(format!("{id}.{ext}"));
    p.is_file().then_some(p)
}
