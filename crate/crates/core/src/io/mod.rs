//! Audio, weight, and scene-metadata files.

pub mod scene_meta;
pub mod wav;
pub mod weights;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub use scene_meta::{load_scene_metadata, save_scene_metadata, SceneMetadata};
pub use wav::{read_wav, write_wav, WavFormat, read_wav_expect};
pub use weights::{load_weights, save_weights, WeightFile, WEIGHT_FORMAT_VERSION, WEIGHT_MAGIC};

use crate::error::Result;

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes through a sibling temporary file so that a failed write never
/// leaves a truncated `path` behind.
pub(crate) fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let tmp = temp_path(path);
    match write(&tmp) {
        Ok(()) => {
            fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

pub fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, |tmp| {
        let mut f = fs::File::create(tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        Ok(())
    })
}
