//! Binary dataset format (little-endian, no padding):
//!
//! ```text
//! magic "CSID" | version u32 = 1 | n_ant u32 | n_sub u32 | subcarrier_spacing_hz f64
//! | pilot_spacing u32 | n_pilots u32 | record_count u32
//! record_count × ( seed u64 | DL block | UL block )
//! ```
//!
//! Each block holds `n_ant · n_sub` complex values row-major as `(re f32, im f32)`.
//! Values are narrowed to `f32` on write; reading a file and writing it back
//! reproduces it byte for byte.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::channel::ChannelPair;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::matrix::{CsiMatrix, Domain, C64};

pub const MAGIC: [u8; 4] = *b"CSID";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 4 + 4 + 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub cfg: SystemConfig,
    pub records: Vec<ChannelPair>,
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::BadHeader(format!("{what} = {v} does not fit in u32")))
}

pub fn write_to<W: Write>(mut w: W, cfg: &SystemConfig, records: &[ChannelPair]) -> Result<()> {
    let shape = (cfg.n_ant, cfg.n_sub);
    for r in records {
        r.dl.expect_shape(shape)?;
        r.ul.expect_shape(shape)?;
        r.dl.expect_domain(Domain::AF)?;
        r.ul.expect_domain(Domain::AF)?;
    }
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&to_u32(cfg.n_ant, "n_ant")?.to_le_bytes())?;
    w.write_all(&to_u32(cfg.n_sub, "n_sub")?.to_le_bytes())?;
    w.write_all(&cfg.subcarrier_spacing_hz.to_le_bytes())?;
    w.write_all(&to_u32(cfg.pilot_spacing, "pilot_spacing")?.to_le_bytes())?;
    w.write_all(&to_u32(cfg.n_pilots, "n_pilots")?.to_le_bytes())?;
    w.write_all(&to_u32(records.len(), "record_count")?.to_le_bytes())?;

    let mut block = Vec::with_capacity(cfg.n_ant * cfg.n_sub * 8);
    for r in records {
        w.write_all(&r.seed.to_le_bytes())?;
        for m in [&r.dl, &r.ul] {
            block.clear();
            for z in m.data().iter() {
                block.extend_from_slice(&(z.re as f32).to_le_bytes());
                block.extend_from_slice(&(z.im as f32).to_le_bytes());
            }
            w.write_all(&block)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Fills `buf` completely or reports truncation.
fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated,
        _ => Error::Io(e),
    })
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

pub fn read_from<R: Read>(mut r: R) -> Result<Dataset> {
    let mut magic = [0u8; 4];
    read_exact_or_truncated(&mut r, &mut magic)?;
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let mut head = [0u8; HEADER_LEN - 4];
    read_exact_or_truncated(&mut r, &mut head)?;
    let version = u32_at(&head, 0);
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let n_ant = u32_at(&head, 4) as usize;
    let n_sub = u32_at(&head, 8) as usize;
    let spacing = f64::from_le_bytes(head[12..20].try_into().unwrap());
    let pilot_spacing = u32_at(&head, 20) as usize;
    let n_pilots = u32_at(&head, 24) as usize;
    let count = u32_at(&head, 28) as usize;
    let cfg = SystemConfig::new(n_ant, n_sub, pilot_spacing, n_pilots, spacing)
        .map_err(|e| Error::BadHeader(e.to_string()))?;

    let block_len = n_ant * n_sub * 8;
    let mut buf = vec![0u8; block_len];
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let mut seed = [0u8; 8];
        read_exact_or_truncated(&mut r, &mut seed)?;
        read_exact_or_truncated(&mut r, &mut buf)?;
        let dl = decode_block(&buf, n_ant, n_sub);
        read_exact_or_truncated(&mut r, &mut buf)?;
        let ul = decode_block(&buf, n_ant, n_sub);
        records.push(ChannelPair {
            dl,
            ul,
            truth: None,
            seed: u64::from_le_bytes(seed),
        });
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::TrailingData(rest.len()));
    }
    Ok(Dataset { cfg, records })
}

fn decode_block(buf: &[u8], n_ant: usize, n_sub: usize) -> CsiMatrix {
    let values: Vec<C64> = buf
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
            let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
            C64::new(re as f64, im as f64)
        })
        .collect();
    let data = Array2::from_shape_vec((n_ant, n_sub), values).expect("block length matches shape");
    CsiMatrix::new(data, Domain::AF)
}

pub fn write_dataset(path: impl AsRef<Path>, cfg: &SystemConfig, records: &[ChannelPair]) -> Result<()> {
    write_to(BufWriter::new(File::create(path)?), cfg, records)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_from(BufReader::new(File::open(path)?))
}

/// Rounds every entry to `f32` precision, i.e. what a write/read cycle keeps.
pub fn quantize(m: &CsiMatrix) -> CsiMatrix {
    CsiMatrix::new(
        m.data()
            .mapv(|z| C64::new(z.re as f32 as f64, z.im as f32 as f64)),
        m.domain(),
    )
}
