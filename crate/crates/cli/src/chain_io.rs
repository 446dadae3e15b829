//! Chain persistence: one CSV per parameter block (`coefficients.csv`,
//! `hyper.csv`, `annual.csv`, `fields.csv`), each with a `draw` column and
//! one column per parameter, plus `meta.json` holding the configuration,
//! site layout and acceptance counts. The field block can instead be
//! stored as `fields.bin`: little-endian f64 values, draw-major, with the
//! column names listed in `meta.json`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use ehe_core::flatten::{Block, Flatten};
use ehe_core::mcmc::{BlockAcceptance, PosteriorChain, SamplerConfig};
use ehe_core::model::{ModelConfig, ModelLayout};
use serde::{Deserialize, Serialize};

pub const META_FILE: &str = "meta.json";
pub const FIELDS_BINARY_FILE: &str = "fields.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    TwoState,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldsFormat {
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub kind: ChainKind,
    pub n_draws: usize,
    pub fields_format: FieldsFormat,
    /// Column order of `fields.bin`.
    pub field_columns: Vec<String>,
    pub acceptance: Vec<BlockAcceptance>,
    pub sampler: SamplerConfig,
    pub model: ModelConfig,
    pub layout: ModelLayout,
}

fn block_file(block: Block) -> String {
    format!("{}.csv", block.name())
}

pub fn write_chain<S: Flatten>(
    chain: &PosteriorChain<S>,
    kind: ChainKind,
    format: FieldsFormat,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let rows: Vec<_> = chain.draws.iter().map(|d| d.columns(&chain.layout)).collect();
    let names = |block: Block| -> Vec<String> {
        rows.first()
            .map(|r| r.iter().filter(|c| c.block == block).map(|c| c.name.clone()).collect())
            .unwrap_or_default()
    };
    for block in Block::ALL {
        if block == Block::Fields && format == FieldsFormat::Binary {
            let mut w = BufWriter::new(File::create(dir.join(FIELDS_BINARY_FILE))?);
            for row in &rows {
                for c in row.iter().filter(|c| c.block == block) {
                    w.write_all(&c.value.to_le_bytes())?;
                }
            }
            w.flush()?;
            continue;
        }
        let path = dir.join(block_file(block));
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
        let mut header = vec!["draw".to_string()];
        header.extend(names(block));
        w.write_record(&header)?;
        for (i, row) in rows.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(row.iter().filter(|c| c.block == block).map(|c| c.value.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    let meta = ChainMeta {
        kind,
        n_draws: chain.draws.len(),
        fields_format: format,
        field_columns: if format == FieldsFormat::Binary { names(Block::Fields) } else { Vec::new() },
        acceptance: chain.acceptance.clone(),
        sampler: chain.sampler.clone(),
        model: chain.model.clone(),
        layout: chain.layout.clone(),
    };
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    std::fs::write(dir.join(META_FILE), text)?;
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<ChainMeta> {
    let path = dir.join(META_FILE);
    let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid chain metadata in {}", path.display()))
}

fn read_block_csv(path: &Path, draws: &mut [HashMap<String, f64>]) -> Result<()> {
    let mut rdr = csv::Reader::from_reader(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ));
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("draw") {
        bail!("{}: first column must be `draw`", path.display());
    }
    let mut n = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let map = draws
            .get_mut(i)
            .ok_or_else(|| anyhow!("{}: more rows than draws in metadata", path.display()))?;
        for (name, cell) in header.iter().zip(rec.iter()).skip(1) {
            let v: f64 = cell
                .parse()
                .map_err(|_| anyhow!("{}: line {line}: `{cell}` is not a number", path.display()))?;
            map.insert(name.clone(), v);
        }
        n += 1;
    }
    if n != draws.len() {
        bail!("{}: {n} rows, metadata says {}", path.display(), draws.len());
    }
    Ok(())
}

fn read_fields_binary(path: &Path, names: &[String], draws: &mut [HashMap<String, f64>]) -> Result<()> {
    let mut bytes = Vec::new();
    File::open(path)
        .with_context(|| format!("cannot open {}", path.display()))?
        .read_to_end(&mut bytes)?;
    if bytes.len() != 8 * names.len() * draws.len() {
        bail!("{}: size does not match {} draws of {} columns", path.display(), draws.len(), names.len());
    }
    let mut values = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")));
    for map in draws.iter_mut() {
        for name in names {
            map.insert(name.clone(), values.next().expect("length checked"));
        }
    }
    Ok(())
}

pub fn read_chain<S: Flatten>(dir: &Path, expected: ChainKind) -> Result<PosteriorChain<S>> {
    let meta = read_meta(dir)?;
    if meta.kind != expected {
        bail!("{}: chain is {:?}, expected {:?}", dir.display(), meta.kind, expected);
    }
    let mut maps = vec![HashMap::new(); meta.n_draws];
    for block in Block::ALL {
        if block == Block::Fields && meta.fields_format == FieldsFormat::Binary {
            read_fields_binary(&dir.join(FIELDS_BINARY_FILE), &meta.field_columns, &mut maps)?;
        } else {
            read_block_csv(&dir.join(block_file(block)), &mut maps)?;
        }
    }
    let decay = meta.model.decay();
    let draws = maps
        .iter()
        .map(|m| S::from_columns(m, &meta.layout, decay))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PosteriorChain {
        draws,
        acceptance: meta.acceptance,
        sampler: meta.sampler,
        model: meta.model,
        layout: meta.layout,
    })
}
