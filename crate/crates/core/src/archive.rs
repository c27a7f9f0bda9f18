//! Network archive: a JSON header followed by raw little-endian tables.
//!
//! ```text
//! "FNETARC1"                       8 bytes
//! header length                    u32 LE
//! header                           UTF-8 JSON, see `Header`
//! per neuron, in (k, k1) order:
//!   k, k1                          u32 LE each
//!   wh1                            f64 LE
//!   weights                        784 × f64 LE, row-major
//! ```
//!
//! Every float is stored by its bit pattern, so a save/load cycle is exact
//! and two saves of the same network are byte-identical.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_sim::{CellTable, PhysicalConfig, WeightTable};
use crate::metric_net::{Network, PairNeuron, Reference};
use crate::CELLS;

const MAGIC: &[u8; 8] = b"FNETARC1";
const FORMAT: &str = "fieldnet-network";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    cells: usize,
    config: PhysicalConfig,
    references: Vec<Reference>,
    neuron_count: usize,
}

pub fn write_archive<W: Write>(net: &Network, mut w: W) -> Result<()> {
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        cells: CELLS,
        config: *net.config(),
        references: net.references().to_vec(),
        neuron_count: net.neuron_count(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Archive(e.to_string()))?;
    let io = |e: std::io::Error| Error::Archive(e.to_string());
    w.write_all(MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(json.len() as u32).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for n in net.neurons() {
        w.write_u32::<LittleEndian>(n.k as u32).map_err(io)?;
        w.write_u32::<LittleEndian>(n.k1 as u32).map_err(io)?;
        w.write_f64::<LittleEndian>(n.wh1).map_err(io)?;
        for &v in n.weights.values() {
            w.write_f64::<LittleEndian>(v).map_err(io)?;
        }
    }
    Ok(())
}

pub fn read_archive<R: Read>(mut r: R) -> Result<Network> {
    let io = |e: std::io::Error| Error::Archive(format!("truncated or unreadable archive: {e}"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Archive("not a fieldnet network archive".into()));
    }
    let len = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(io)?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| Error::Archive(format!("bad header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::Archive(format!(
            "unsupported archive {} v{}",
            header.format, header.version
        )));
    }
    if header.cells != CELLS {
        return Err(Error::Archive(format!(
            "archive tables have {} cells, this build expects {CELLS}",
            header.cells
        )));
    }

    let mut neurons = Vec::with_capacity(header.neuron_count);
    for _ in 0..header.neuron_count {
        let k = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let k1 = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let wh1 = r.read_f64::<LittleEndian>().map_err(io)?;
        let mut values = vec![0.0; CELLS];
        r.read_f64_into::<LittleEndian>(&mut values).map_err(io)?;
        neurons.push(PairNeuron {
            k,
            k1,
            weights: WeightTable::from_values(values)?,
            wh1,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io)? != 0 {
        return Err(Error::Archive("trailing bytes after last neuron".into()));
    }
    Network::from_parts(header.config, header.references, neurons)
        .map_err(|e| Error::Archive(format!("inconsistent archive: {e}")))
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_archive(net, &mut buf)?;
    fs::write(path.as_ref(), buf).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Network> {
    let bytes = fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    read_archive(bytes.as_slice())
}
