//! Model file (little-endian):
//!
//! ```text
//! "MOFT" | u32 version
//! u32 max_depth | u64 min_samples_leaf | u32 n_bins | u8 exact_splits | u64 seed
//! u64 dataset_seed | u64 dataset_size | f64 train_r2
//! u64 node_count | node_count × node
//! u32 crc32 of everything above
//! node = u32 feature | f64 threshold | u32 left | u32 right | f64 value[2] | u64 count
//! ```

use std::fs::File;
use std::io::{BufWriter, Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Node, TrainingMeta, TreeError, TreeModel, TreeParams};

pub const MODEL_MAGIC: [u8; 4] = *b"MOFT";
pub const MODEL_VERSION: u32 = 1;
pub const NODE_BYTES: u64 = 4 + 8 + 4 + 4 + 16 + 8;
const HEADER_BYTES: u64 = 8 + 25 + 24 + 8;
const TRAILER_BYTES: u64 = 4;

pub(super) fn encoded_len(nodes: usize) -> u64 {
    HEADER_BYTES + nodes as u64 * NODE_BYTES + TRAILER_BYTES
}

impl TreeModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::with_capacity(encoded_len(self.nodes.len()) as usize);
        // writes into a Vec cannot fail
        self.encode(&mut w).expect("in-memory write");
        let crc = crc32fast::hash(&w);
        w.write_u32::<LittleEndian>(crc).expect("in-memory write");
        w
    }

    fn encode(&self, w: &mut Vec<u8>) -> std::io::Result<()> {
        let p = &self.params;
        w.write_all(&MODEL_MAGIC)?;
        w.write_u32::<LittleEndian>(MODEL_VERSION)?;
        w.write_u32::<LittleEndian>(p.max_depth as u32)?;
        w.write_u64::<LittleEndian>(p.min_samples_leaf as u64)?;
        w.write_u32::<LittleEndian>(p.n_bins as u32)?;
        w.write_u8(p.exact_splits as u8)?;
        w.write_u64::<LittleEndian>(p.seed)?;
        w.write_u64::<LittleEndian>(self.meta.dataset_seed)?;
        w.write_u64::<LittleEndian>(self.meta.dataset_size)?;
        w.write_f64::<LittleEndian>(self.meta.train_r2)?;
        w.write_u64::<LittleEndian>(self.nodes.len() as u64)?;
        for n in &self.nodes {
            w.write_u32::<LittleEndian>(n.feature)?;
            w.write_f64::<LittleEndian>(n.threshold)?;
            w.write_u32::<LittleEndian>(n.left)?;
            w.write_u32::<LittleEndian>(n.right)?;
            w.write_f64::<LittleEndian>(n.value[0])?;
            w.write_f64::<LittleEndian>(n.value[1])?;
            w.write_u64::<LittleEndian>(n.count)?;
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TreeError> {
        if bytes.len() < 8 {
            return Err(TreeError::Truncated);
        }
        if bytes[..4] != MODEL_MAGIC {
            return Err(TreeError::BadMagic);
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(TreeError::Version(version));
        }
        if (bytes.len() as u64) < HEADER_BYTES + TRAILER_BYTES {
            return Err(TreeError::Truncated);
        }
        let mut r = Cursor::new(&bytes[8..]);
        let truncated = |_| TreeError::Truncated;
        let params = TreeParams {
            max_depth: r.read_u32::<LittleEndian>().map_err(truncated)? as usize,
            min_samples_leaf: r.read_u64::<LittleEndian>().map_err(truncated)? as usize,
            n_bins: r.read_u32::<LittleEndian>().map_err(truncated)? as usize,
            exact_splits: r.read_u8().map_err(truncated)? != 0,
            seed: r.read_u64::<LittleEndian>().map_err(truncated)?,
        };
        let meta = TrainingMeta {
            dataset_seed: r.read_u64::<LittleEndian>().map_err(truncated)?,
            dataset_size: r.read_u64::<LittleEndian>().map_err(truncated)?,
            train_r2: r.read_f64::<LittleEndian>().map_err(truncated)?,
        };
        let count = r.read_u64::<LittleEndian>().map_err(truncated)?;
        let expected = HEADER_BYTES
            .checked_add(count.checked_mul(NODE_BYTES).ok_or(TreeError::Truncated)?)
            .and_then(|v| v.checked_add(TRAILER_BYTES))
            .ok_or(TreeError::Truncated)?;
        if (bytes.len() as u64) < expected {
            return Err(TreeError::Truncated);
        }
        if (bytes.len() as u64) > expected {
            return Err(TreeError::Malformed("trailing bytes"));
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(TreeError::Checksum);
        }
        let mut nodes = Vec::with_capacity(count as usize);
        for _ in 0..count {
            nodes.push(Node {
                feature: r.read_u32::<LittleEndian>()?,
                threshold: r.read_f64::<LittleEndian>()?,
                left: r.read_u32::<LittleEndian>()?,
                right: r.read_u32::<LittleEndian>()?,
                value: [r.read_f64::<LittleEndian>()?, r.read_f64::<LittleEndian>()?],
                count: r.read_u64::<LittleEndian>()?,
            });
        }
        TreeModel::from_parts(nodes, params, meta)
    }

    pub fn save(&self, path: &Path) -> Result<(), TreeError> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&self.to_bytes())?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TreeError> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
