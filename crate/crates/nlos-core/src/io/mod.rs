//! File formats: the NTV transient container, scene description files,
//! 16-bit graymap images, and parameter checkpoints.

mod checkpoint;
mod ntv;
mod pgm;
mod scene;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointProvenance};
pub use ntv::{read_ntv, write_ntv, NTV_HEADER_LEN, NTV_MAGIC, NTV_VERSION};
pub use pgm::{read_image, write_image, ImageKind};
pub use scene::{parse_scene, read_scene};

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::Result;

/// Writes a file atomically: the payload lands in a sibling temp file which
/// is then renamed over the destination.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = match path.extension() {
        Some(ext) => {
            let mut e = ext.to_os_string();
            e.push(".tmp");
            path.with_extension(e)
        }
        None => path.with_extension("tmp"),
    };
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
