//! Checkpoints: a model file followed by the optimizer state (an 8-byte
//! tag, a JSON block with the step counter, then both moment tensors).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::AdamState;
use crate::error::{Error, Result};
use crate::scorer::file::{read_json, read_values, write_json, write_values};
use crate::scorer::Model;

const TAG: &[u8; 8] = b"ADAMSTAT";

#[derive(Serialize, Deserialize)]
struct StateHeader {
    step: u64,
}

pub fn write_checkpoint<W: Write>(w: &mut W, model: &Model, state: &AdamState) -> Result<()> {
    model.write_to(w)?;
    w.write_all(TAG)?;
    write_json(w, &StateHeader { step: state.step })?;
    write_values(w, &state.m)?;
    write_values(w, &state.v)
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(Model, AdamState)> {
    let model = Model::read_from(r)?;
    let mut tag = [0u8; 8];
    r.read_exact(&mut tag)
        .map_err(|_| Error::ModelFormat("no optimizer state after the model".into()))?;
    if &tag != TAG {
        return Err(Error::ModelFormat("unrecognized section after the model".into()));
    }
    let h: StateHeader = read_json(r)?;
    let mut state = AdamState::new(&model.params);
    state.step = h.step;
    read_values(r, &mut state.m)?;
    read_values(r, &mut state.v)?;
    Ok((model, state))
}

/// Writes to a sibling temporary file first so a crash never leaves a
/// truncated checkpoint behind.
pub fn save_checkpoint(path: &Path, model: &Model, state: &AdamState) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write_checkpoint(&mut w, model, state)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, AdamState)> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}
