use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::step::TrainState;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8] = b"INTERLUDE-CKPT-v1\n";

/// Resolved configuration plus the full training state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub state: TrainState,
}

pub fn encode_checkpoint(config: &TrainConfig, state: &TrainState) -> Result<Vec<u8>> {
    #[derive(Serialize)]
    struct Borrowed<'a> {
        config: &'a TrainConfig,
        state: &'a TrainState,
    }
    let mut out = CHECKPOINT_MAGIC.to_vec();
    serde_json::to_writer(&mut out, &Borrowed { config, state })
        .map_err(|e| Error::Checkpoint(format!("serialize: {e}")))?;
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let body = bytes
        .strip_prefix(CHECKPOINT_MAGIC)
        .ok_or_else(|| Error::Checkpoint("missing INTERLUDE-CKPT-v1 header".into()))?;
    serde_json::from_slice(body).map_err(|e| Error::Checkpoint(format!("corrupt checkpoint: {e}")))
}

/// Write atomically: a sibling temporary file is renamed over `path`.
pub fn save_checkpoint(path: &Path, config: &TrainConfig, state: &TrainState) -> Result<()> {
    let bytes = encode_checkpoint(config, state)?;
    let tmp = path.with_extension("ckpt.tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
