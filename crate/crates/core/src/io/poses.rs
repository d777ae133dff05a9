use std::path::Path;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::evaluation::SceneEstimates;

/// One JSON object per line: `{"scene_id": …, "estimates": [...]}`.
pub fn encode_pose_records(records: &[SceneEstimates]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::invalid(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_pose_records(text: &str, path: &Path) -> Result<Vec<SceneEstimates>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let mut de = serde_json::Deserializer::from_str(line);
            serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Parse {
                path: path.to_owned(),
                location: format!("line {} column {} (`{}`)", i + 1, e.inner().column(), e.path()),
                message: e.inner().to_string(),
            })
        })
        .collect()
}

pub fn write_pose_records(path: &Path, records: &[SceneEstimates]) -> Result<()> {
    write_atomic(path, encode_pose_records(records)?.as_bytes())
}

pub fn read_pose_records(path: &Path) -> Result<Vec<SceneEstimates>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pose_records(&text, path)
}
