//! CSV ingestion and emission, and the JSON model envelope.
//!
//! Two tabular layouts are understood:
//!
//! * long: one measurement per row, `unit_id,value`; rows of a unit need not
//!   be contiguous.
//! * wide: one quantile function per row, header `unit_id,p_1,...,p_M` (the
//!   id column is optional) with the header levels matching the grid.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::d2d::D2DFit;
use crate::d2s::ScalarFit;
use crate::distribution::{estimate_distribution, DistributionQ, SampleSet};
use crate::error::{Error, Result};
use crate::grid::ProbGrid;
use crate::war::ARFit;

/// Tolerance on header levels of wide files.
const LEVEL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    LongSamples,
    WideQuantiles,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "long" | "long-samples" | "long_samples" => Ok(Self::LongSamples),
            "wide" | "wide-quantiles" | "wide_quantiles" => Ok(Self::WideQuantiles),
            _ => Err(Error::InvalidInput(format!("unknown input format '{s}'"))),
        }
    }
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::LongSamples => "long",
            Self::WideQuantiles => "wide",
        })
    }
}

/// Distributions with their unit identifiers, in first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub dists: Vec<DistributionQ>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.dists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dists.is_empty()
    }

    /// Position of each id.
    pub fn index(&self) -> HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

fn parse_f64(s: &str, what: &str, line: u64) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::InvalidInput(format!("line {line}: cannot parse {what} '{s}'")))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

/// Reads a CSV file of either layout onto `grid`.
pub fn ingest(path: impl AsRef<Path>, format: InputFormat, grid: &Arc<ProbGrid>) -> Result<Dataset> {
    ingest_reader(File::open(path)?, format, grid)
}

pub fn ingest_reader<R: Read>(r: R, format: InputFormat, grid: &Arc<ProbGrid>) -> Result<Dataset> {
    match format {
        InputFormat::LongSamples => ingest_long(r, grid),
        InputFormat::WideQuantiles => ingest_wide(r, grid),
    }
}

fn ingest_long<R: Read>(r: R, grid: &Arc<ProbGrid>) -> Result<Dataset> {
    let mut rdr = reader(r);
    if rdr.headers()?.len() < 2 {
        return Err(Error::InvalidInput("long format needs columns unit_id,value".into()));
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<f64>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let (Some(id), Some(v)) = (rec.get(0), rec.get(1)) else {
            return Err(Error::InvalidInput(format!("line {line}: expected unit_id,value")));
        };
        let v = parse_f64(v, "value", line)?;
        groups
            .entry(id.to_string())
            .or_insert_with(|| {
                order.push(id.to_string());
                Vec::new()
            })
            .push(v);
    }
    if order.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let dists = order
        .iter()
        .map(|id| {
            let vals = groups.remove(id).expect("grouped id");
            if vals.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "unit '{id}' has {} measurement(s); at least 2 are needed",
                    vals.len()
                )));
            }
            estimate_distribution(&SampleSet::new(vals)?, Arc::clone(grid))
        })
        .collect::<Result<_>>()?;
    Ok(Dataset { ids: order, dists })
}

fn ingest_wide<R: Read>(r: R, grid: &Arc<ProbGrid>) -> Result<Dataset> {
    let mut rdr = reader(r);
    let header = rdr.headers()?.clone();
    let has_id = header
        .get(0)
        .is_some_and(|h| h.parse::<f64>().is_err());
    let skip = usize::from(has_id);
    let levels: Vec<f64> = header
        .iter()
        .skip(skip)
        .map(|h| parse_f64(h, "header level", 1))
        .collect::<Result<_>>()?;
    if levels.len() != grid.len() {
        return Err(Error::IncompatibleGrid {
            left: levels.len(),
            right: grid.len(),
        });
    }
    if let Some(k) = levels
        .iter()
        .zip(grid.points())
        .position(|(a, b)| (a - b).abs() > LEVEL_TOL)
    {
        return Err(Error::InvalidInput(format!(
            "header level {} at column {} does not match grid level {}",
            levels[k],
            k + skip + 1,
            grid.points()[k]
        )));
    }
    let mut ds = Dataset { ids: Vec::new(), dists: Vec::new() };
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != levels.len() + skip {
            return Err(Error::InvalidInput(format!(
                "line {line}: expected {} fields, got {}",
                levels.len() + skip,
                rec.len()
            )));
        }
        let id = if has_id { rec[0].to_string() } else { (row + 1).to_string() };
        let q = rec
            .iter()
            .skip(skip)
            .map(|v| parse_f64(v, "quantile", line))
            .collect::<Result<Vec<_>>>()?;
        let d = DistributionQ::new(Arc::clone(grid), q).map_err(|e| match e {
            Error::NonMonotone { .. } => Error::InvalidInput(format!("unit '{id}': {e}")),
            e => e,
        })?;
        ds.ids.push(id);
        ds.dists.push(d);
    }
    if ds.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    Ok(ds)
}

/// Reads `unit_id,y` pairs.
pub fn read_scalars(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    read_scalars_from(File::open(path)?)
}

pub fn read_scalars_from<R: Read>(r: R) -> Result<Vec<(String, f64)>> {
    let mut rdr = reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let (Some(id), Some(v)) = (rec.get(0), rec.get(1)) else {
            return Err(Error::InvalidInput(format!("line {line}: expected unit_id,y")));
        };
        out.push((id.to_string(), parse_f64(v, "response", line)?));
    }
    Ok(out)
}

/// Reorders `values` to follow `ids`; every id must appear exactly once.
pub fn align_by_id<T: Clone>(ids: &[String], values: &[(String, T)]) -> Result<Vec<T>> {
    let mut map: HashMap<&str, &T> = HashMap::with_capacity(values.len());
    for (id, v) in values {
        if map.insert(id.as_str(), v).is_some() {
            return Err(Error::InvalidInput(format!("duplicate unit id '{id}'")));
        }
    }
    if map.len() != ids.len() {
        return Err(Error::LengthMismatch(ids.len(), map.len()));
    }
    ids.iter()
        .map(|id| {
            map.get(id.as_str())
                .map(|v| (*v).clone())
                .ok_or_else(|| Error::InvalidInput(format!("unit id '{id}' has no match")))
        })
        .collect()
}

/// Tidy quantile rows `unit_id,p,qval[,eta]`.
pub fn write_quantiles<W: Write>(
    w: W,
    ids: &[String],
    dists: &[DistributionQ],
    etas: Option<&[f64]>,
) -> Result<()> {
    if ids.len() != dists.len() {
        return Err(Error::LengthMismatch(ids.len(), dists.len()));
    }
    if let Some(e) = etas {
        if e.len() != dists.len() {
            return Err(Error::LengthMismatch(e.len(), dists.len()));
        }
    }
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["unit_id", "p", "qval"];
    if etas.is_some() {
        header.push("eta");
    }
    wtr.write_record(&header)?;
    for (i, (id, d)) in ids.iter().zip(dists).enumerate() {
        for (p, q) in d.grid().points().iter().zip(d.qvals()) {
            let mut row = vec![id.clone(), p.to_string(), q.to_string()];
            if let Some(e) = etas {
                row.push(e[i].to_string());
            }
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Finite-difference density `unit_id,x,density` at midpoints of consecutive
/// quantiles. Units with a flat segment are skipped; their ids are returned.
pub fn write_densities<W: Write>(w: W, ids: &[String], dists: &[DistributionQ]) -> Result<Vec<String>> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["unit_id", "x", "density"])?;
    let mut skipped = Vec::new();
    for (id, d) in ids.iter().zip(dists) {
        let q = d.qvals();
        if q.windows(2).any(|s| s[1] <= s[0]) {
            skipped.push(id.clone());
            continue;
        }
        for (pp, qq) in d.grid().points().windows(2).zip(q.windows(2)) {
            let x = 0.5 * (qq[0] + qq[1]);
            let dens = (pp[1] - pp[0]) / (qq[1] - qq[0]);
            wtr.write_record([id.clone(), x.to_string(), dens.to_string()])?;
        }
    }
    wtr.flush()?;
    Ok(skipped)
}

/// Writes `path` (tidy quantiles) and a sibling `<stem>_density.csv`.
pub fn emit_quantiles(
    path: impl AsRef<Path>,
    ids: &[String],
    dists: &[DistributionQ],
    etas: Option<&[f64]>,
) -> Result<()> {
    let path = path.as_ref();
    write_quantiles(File::create(path)?, ids, dists, etas)?;
    let skipped = write_densities(File::create(density_path(path))?, ids, dists)?;
    for id in skipped {
        log::warn!("unit '{id}' has a flat quantile segment; density not written");
    }
    Ok(())
}

/// `dir/name.csv` to `dir/name_density.csv`.
pub fn density_path(path: &Path) -> std::path::PathBuf {
    let stem = path.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}_density.csv"))
}

/// Wide quantile rows; reading them back with [`ingest`] reproduces `dists`.
pub fn write_wide<W: Write>(w: W, ids: &[String], dists: &[DistributionQ]) -> Result<()> {
    let first = dists.first().ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["unit_id".to_string()];
    header.extend(first.grid().points().iter().map(|p| p.to_string()));
    wtr.write_record(&header)?;
    for (id, d) in ids.iter().zip(dists) {
        first.check_grid(d)?;
        let mut row = vec![id.clone()];
        row.extend(d.qvals().iter().map(|q| q.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Rows of any serializable record type.
pub fn write_records<W: Write, T: Serialize>(w: W, records: &[T]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// First 16 hex digits of the SHA-256 of the JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let json = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&json);
    Ok(hex::encode(&digest[..8]))
}

pub const MODEL_FORMAT: &str = "wreg-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum Model {
    D2d(D2DFit),
    D2s(ScalarFit),
    Ar(ARFit),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::D2d(_) => "d2d",
            Model::D2s(_) => "d2s",
            Model::Ar(_) => "ar",
        }
    }

    fn grid_len(&self) -> usize {
        match self {
            Model::D2d(f) => f.grid_len(),
            Model::D2s(f) => f.predictor_mean().mean.len(),
            Model::Ar(f) => f.mean().mean.len(),
        }
    }
}

/// Versioned JSON envelope of a fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub grid_m: usize,
    pub provenance: Provenance,
    #[serde(flatten)]
    pub model: Model,
}

impl ModelFile {
    pub fn new(model: Model, provenance: Provenance) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            grid_m: model.grid_len(),
            provenance,
            model,
        }
    }

    pub fn to_writer<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = File::create(path)?;
        self.to_writer(&mut f)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn from_reader<R: Read>(r: R) -> Result<Self> {
        let mf: ModelFile = serde_json::from_reader(r)?;
        if mf.format != MODEL_FORMAT {
            return Err(Error::InvalidInput(format!("not a model file (format '{}')", mf.format)));
        }
        if mf.version != MODEL_VERSION {
            return Err(Error::InvalidInput(format!("unsupported model version {}", mf.version)));
        }
        if mf.grid_m != mf.model.grid_len() {
            return Err(Error::IncompatibleGrid {
                left: mf.grid_m,
                right: mf.model.grid_len(),
            });
        }
        Ok(mf)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::io::BufReader::new(File::open(path)?))
    }
}
