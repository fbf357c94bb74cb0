//! Snapshot persistence: a short text header followed by raw little-endian
//! parameter bytes, so files survive format evolution via the version line
//! and stay byte-reproducible for equal models.

use super::net::{ArchSpec, Mlp};
use super::{ClassifierSnapshot, ModelError, TrainingMode};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &str = "FRAL-SNAPSHOT v1";

pub fn save_snapshot(path: &Path, snapshot: &ClassifierSnapshot) -> Result<(), ModelError> {
    let net = snapshot.network();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "arch={}", snapshot.arch_id())?;
    writeln!(out, "mode={}", snapshot.mode().as_str())?;
    writeln!(out, "seed={}", snapshot.seed())?;
    writeln!(out, "round={}", snapshot.round())?;
    writeln!(out, "input_dim={}", net.input_dim())?;
    writeln!(out, "num_classes={}", net.num_classes())?;
    writeln!(out, "params={}", net.num_params())?;
    writeln!(out)?;
    for v in net.params() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<ClassifierSnapshot, ModelError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;

    // The header is everything up to the first blank line; the parameter
    // blob begins right after it.
    let header_end = find_header_end(&bytes)
        .ok_or_else(|| ModelError::Snapshot("missing header terminator".to_string()))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| ModelError::Snapshot("header is not UTF-8".to_string()))?;
    let blob = &bytes[header_end + 2..];
    let mut lines = header.lines();
    let magic = lines.next().unwrap_or_default();
    if magic != MAGIC {
        return Err(ModelError::Snapshot(format!(
            "unsupported snapshot format {magic:?}"
        )));
    }

    let mut arch = None;
    let mut mode = None;
    let mut seed = None;
    let mut round = None;
    let mut input_dim = None;
    let mut num_classes = None;
    let mut params = None;
    for line in lines {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ModelError::Snapshot(format!("malformed header line {line:?}")))?;
        match key {
            "arch" => arch = Some(value.to_string()),
            "mode" => mode = Some(TrainingMode::parse(value)?),
            "seed" => seed = Some(parse_num(key, value)?),
            "round" => round = Some(parse_num::<u32>(key, value)?),
            "input_dim" => input_dim = Some(parse_num::<usize>(key, value)?),
            "num_classes" => num_classes = Some(parse_num::<usize>(key, value)?),
            "params" => params = Some(parse_num::<usize>(key, value)?),
            other => {
                return Err(ModelError::Snapshot(format!(
                    "unknown header key {other:?}"
                )))
            }
        }
    }
    let missing = |k: &str| ModelError::Snapshot(format!("missing header key {k:?}"));
    let arch_id = arch.ok_or_else(|| missing("arch"))?;
    let mode = mode.ok_or_else(|| missing("mode"))?;
    let seed: u64 = seed.ok_or_else(|| missing("seed"))?;
    let round = round.ok_or_else(|| missing("round"))?;
    let input_dim = input_dim.ok_or_else(|| missing("input_dim"))?;
    let num_classes = num_classes.ok_or_else(|| missing("num_classes"))?;
    let param_count = params.ok_or_else(|| missing("params"))?;

    if blob.len() != param_count * 8 {
        return Err(ModelError::Snapshot(format!(
            "expected {} parameter bytes, found {}",
            param_count * 8,
            blob.len()
        )));
    }
    let flat: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();

    let spec = ArchSpec::parse(&arch_id)?;
    let mut net = Mlp::init(&spec, input_dim, num_classes, 0);
    if net.num_params() != param_count {
        return Err(ModelError::Snapshot(format!(
            "arch {arch_id:?} with input_dim={input_dim}, num_classes={num_classes} \
             has {} parameters, header claims {param_count}",
            net.num_params()
        )));
    }
    net.set_params(&flat)?;
    Ok(ClassifierSnapshot::new(net, mode, seed, round))
}

/// Offset of the first "\n\n": the header keeps the first newline, the
/// blob starts two bytes past the returned position. The header itself
/// never contains an empty line, so the first match is the terminator even
/// though the blob may contain arbitrary bytes.
fn find_header_end(bytes: &[u8]) -> Option<usize> {
    bytes.windows(2).position(|w| w == b"\n\n")
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ModelError> {
    value
        .parse()
        .map_err(|_| ModelError::Snapshot(format!("invalid value {value:?} for {key:?}")))
}
