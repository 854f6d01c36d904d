//! File formats: tidy CSV tables, raw label volumes and JSON sidecars.
//!
//! Every output `<file>` gets a `<file>.meta.json` sidecar naming its
//! schema and version together with the seed and config hash that
//! produced it. Readers reject a sidecar whose schema does not match.
//! Files are written to a temporary sibling and renamed into place.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cells::CellRecord;
use crate::error::{Error, Result};
use crate::evaluation::{CoverageReport, HistogramBin};
use crate::lattice::{LabelVolume, LatticeSpec, MrfParams, Neighborhood};
use crate::matching::{Point3D, Provenance};
use crate::mple::RecoveryReport;
use crate::sampling::Geometry;

pub const SCHEMA_VERSION: u32 = 1;

pub mod schema {
    pub const CELLS: &str = "cell_records";
    pub const VOLUME: &str = "label_volume";
    pub const OBSERVATION_SITES: &str = "observation_sites";
    pub const RECOVERY: &str = "recovery";
    pub const RECOVERY_SUMMARY: &str = "recovery_summary";
    pub const COVERAGE: &str = "coverage";
    pub const HISTOGRAM: &str = "localization_histogram";
    pub const POINTS: &str = "point_cloud";
    pub const ABUNDANCE: &str = "abundance";
    pub const DETECTABILITY: &str = "detectability";
    pub const ENRICHMENT: &str = "enrichment";
    pub const STABILITY: &str = "stability";
    pub const STABILITY_SUMMARY: &str = "stability_summary";
    pub const STRUCTURES: &str = "structures";
    pub const DISTANCES: &str = "distances";
    pub const PROFILES: &str = "profiles";
    pub const JSON: &str = "json_document";
}

pub const CELL_HEADER: [&str; 7] = ["cell_id", "x", "y", "z", "area", "type", "section"];
pub const RECOVERY_HEADER: [&str; 7] = ["geometry", "seed", "budget", "mae_alpha", "rmse_alpha", "mae_B", "rmse_B"];
pub const COVERAGE_HEADER: [&str; 8] = [
    "delta_z",
    "offset",
    "sc_frac",
    "lc_frac",
    "captured_frac",
    "missed_frac",
    "loc_mean",
    "loc_std",
];
pub const POINT_HEADER: [&str; 9] = ["cell_id", "x", "y", "z", "z_lo", "z_hi", "type", "provenance", "chain_len"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub schema: String,
    pub schema_version: u32,
    pub generator: String,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<serde_json::Value>,
}

impl Meta {
    pub fn new(schema: &str, seed: Option<u64>, config_hash: Option<&str>) -> Self {
        Self {
            schema: schema.to_string(),
            schema_version: SCHEMA_VERSION,
            generator: concat!("sectionstack ", env!("CARGO_PKG_VERSION")).to_string(),
            seed,
            config_hash: config_hash.map(str::to_string),
            warnings: Vec::new(),
            info: None,
        }
    }

    pub fn with_schema(&self, schema: &str) -> Self {
        Self {
            schema: schema.to_string(),
            info: None,
            ..self.clone()
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes `bytes` to a temporary file next to `path` and renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_with_meta(path: &Path, bytes: &[u8], meta: &Meta) -> Result<()> {
    write_atomic(path, bytes)?;
    let mut m = serde_json::to_vec_pretty(meta)?;
    m.push(b'\n');
    write_atomic(&meta_path(path), &m)
}

pub fn read_meta(path: &Path) -> Result<Option<Meta>> {
    let mp = meta_path(path);
    match std::fs::read(&mp) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| Error::Schema(format!("{}: unreadable sidecar: {e}", mp.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(mp, e)),
    }
}

/// Rejects a file whose sidecar declares another schema or version.
/// Files without a sidecar (external inputs) are accepted.
pub fn check_schema(path: &Path, expected: &str) -> Result<Option<Meta>> {
    let meta = read_meta(path)?;
    if let Some(m) = &meta {
        if m.schema != expected {
            return Err(Error::Schema(format!(
                "{}: expected schema '{expected}', sidecar says '{}'",
                path.display(),
                m.schema
            )));
        }
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "{}: schema '{expected}' version {} is not supported (expected {SCHEMA_VERSION})",
                path.display(),
                m.schema_version
            )));
        }
    }
    Ok(meta)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T, meta: &Meta) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_with_meta(path, &bytes, &meta.with_schema(schema::JSON))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    check_schema(path, schema::JSON)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

/// Shortest decimal text that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Serialises rows under a fixed header.
pub fn csv_bytes<S: AsRef<str>>(header: &[&str], rows: &[Vec<S>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|s| s.as_ref()))?;
    }
    w.into_inner().map_err(|e| Error::Io {
        path: PathBuf::from("<csv buffer>"),
        source: e.into_error(),
    })
}

pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[&str], rows: &[Vec<S>], meta: &Meta) -> Result<()> {
    write_with_meta(path, &csv_bytes(header, rows)?, meta)
}

/// A CSV file with named-column access.
pub struct Table {
    path: PathBuf,
    columns: HashMap<String, usize>,
    pub rows: Vec<csv::StringRecord>,
}

impl Table {
    pub fn read(path: &Path, schema_name: &str, required: &[&str]) -> Result<Self> {
        check_schema(path, schema_name)?;
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers = r.headers()?.clone();
        let columns: HashMap<String, usize> = headers.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
        for c in required {
            if !columns.contains_key(*c) {
                return Err(Error::Schema(format!("{}: missing column '{c}'", path.display())));
            }
        }
        let rows = r.records().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self {
            path: path.to_path_buf(),
            columns,
            rows,
        })
    }

    pub fn has(&self, column: &str) -> bool {
        self.columns.contains_key(column)
    }

    pub fn str<'a>(&self, row: &'a csv::StringRecord, column: &str) -> Result<&'a str> {
        let i = *self
            .columns
            .get(column)
            .ok_or_else(|| Error::Schema(format!("{}: missing column '{column}'", self.path.display())))?;
        row.get(i).ok_or_else(|| {
            Error::Schema(format!(
                "{}: line {} has no field '{column}'",
                self.path.display(),
                row.position().map_or(0, |p| p.line())
            ))
        })
    }

    pub fn parse<T: std::str::FromStr>(&self, row: &csv::StringRecord, column: &str) -> Result<T> {
        let s = self.str(row, column)?;
        s.parse().map_err(|_| {
            Error::Schema(format!(
                "{}: line {}: cannot parse '{s}' in column '{column}'",
                self.path.display(),
                row.position().map_or(0, |p| p.line())
            ))
        })
    }
}

pub fn write_cells(path: &Path, cells: &[CellRecord], meta: &Meta) -> Result<()> {
    let with_truth = cells.iter().any(|c| c.true_volume_id.is_some());
    let mut header: Vec<&str> = CELL_HEADER.to_vec();
    if with_truth {
        header.push("true_volume_id");
    }
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            let mut r = vec![
                c.cell_id.clone(),
                fmt_f64(c.x),
                fmt_f64(c.y),
                fmt_f64(c.z),
                fmt_f64(c.area),
                c.type_label.clone(),
                c.section_index.to_string(),
            ];
            if with_truth {
                r.push(c.true_volume_id.clone().unwrap_or_default());
            }
            r
        })
        .collect();
    write_csv(path, &header, &rows, &meta.with_schema(schema::CELLS))
}

pub fn read_cells(path: &Path) -> Result<Vec<CellRecord>> {
    let t = Table::read(path, schema::CELLS, &CELL_HEADER)?;
    let truth = t.has("true_volume_id");
    t.rows
        .iter()
        .map(|r| {
            let c = CellRecord {
                cell_id: t.str(r, "cell_id")?.to_string(),
                x: t.parse(r, "x")?,
                y: t.parse(r, "y")?,
                z: t.parse(r, "z")?,
                area: t.parse(r, "area")?,
                type_label: t.str(r, "type")?.to_string(),
                section_index: t.parse(r, "section")?,
                true_volume_id: if truth {
                    Some(t.str(r, "true_volume_id")?).filter(|s| !s.is_empty()).map(str::to_string)
                } else {
                    None
                },
            };
            c.validate()?;
            Ok(c)
        })
        .collect()
}

pub fn write_recovery(path: &Path, reports: &[RecoveryReport], meta: &Meta) -> Result<()> {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.geometry.map(|g| g.as_str().to_string()).unwrap_or_default(),
                r.seed.map(|s| s.to_string()).unwrap_or_default(),
                r.budget.map(|b| b.to_string()).unwrap_or_default(),
                fmt_f64(r.mae_alpha),
                fmt_f64(r.rmse_alpha),
                fmt_f64(r.mae_b),
                fmt_f64(r.rmse_b),
            ]
        })
        .collect();
    write_csv(path, &RECOVERY_HEADER, &rows, &meta.with_schema(schema::RECOVERY))
}

pub fn read_recovery(path: &Path) -> Result<Vec<RecoveryReport>> {
    let t = Table::read(path, schema::RECOVERY, &RECOVERY_HEADER)?;
    let opt = |r: &csv::StringRecord, c: &str| -> Result<Option<String>> {
        Ok(Some(t.str(r, c)?).filter(|s| !s.is_empty()).map(str::to_string))
    };
    t.rows
        .iter()
        .map(|r| {
            Ok(RecoveryReport {
                geometry: opt(r, "geometry")?
                    .map(|g| Geometry::parse(&g).map_err(|e| Error::Schema(e.to_string())))
                    .transpose()?,
                seed: opt(r, "seed")?.map(|_| t.parse(r, "seed")).transpose()?,
                budget: opt(r, "budget")?.map(|_| t.parse(r, "budget")).transpose()?,
                mae_alpha: t.parse(r, "mae_alpha")?,
                rmse_alpha: t.parse(r, "rmse_alpha")?,
                mae_b: t.parse(r, "mae_B")?,
                rmse_b: t.parse(r, "rmse_B")?,
            })
        })
        .collect()
}

/// One row of the coverage table; `offset` is `None` for pooled rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub delta_z: f64,
    pub offset: Option<f64>,
    pub sc_frac: f64,
    pub lc_frac: f64,
    pub captured_frac: f64,
    pub missed_frac: f64,
    pub loc_mean: f64,
    pub loc_std: f64,
}

impl From<&CoverageReport> for CoverageRow {
    fn from(r: &CoverageReport) -> Self {
        Self {
            delta_z: r.delta_z,
            offset: r.offset,
            sc_frac: r.sc_fraction,
            lc_frac: r.lc_fraction,
            captured_frac: r.captured_fraction,
            missed_frac: r.missed_fraction,
            loc_mean: r.localization.mean,
            loc_std: r.localization.std,
        }
    }
}

pub fn write_coverage(path: &Path, rows: &[CoverageRow], meta: &Meta) -> Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.delta_z),
                r.offset.map(fmt_f64).unwrap_or_else(|| "pooled".into()),
                fmt_f64(r.sc_frac),
                fmt_f64(r.lc_frac),
                fmt_f64(r.captured_frac),
                fmt_f64(r.missed_frac),
                fmt_f64(r.loc_mean),
                fmt_f64(r.loc_std),
            ]
        })
        .collect();
    write_csv(path, &COVERAGE_HEADER, &rows, &meta.with_schema(schema::COVERAGE))
}

pub fn read_coverage(path: &Path) -> Result<Vec<CoverageRow>> {
    let t = Table::read(path, schema::COVERAGE, &COVERAGE_HEADER)?;
    t.rows
        .iter()
        .map(|r| {
            Ok(CoverageRow {
                delta_z: t.parse(r, "delta_z")?,
                offset: match t.str(r, "offset")? {
                    "pooled" => None,
                    _ => Some(t.parse(r, "offset")?),
                },
                sc_frac: t.parse(r, "sc_frac")?,
                lc_frac: t.parse(r, "lc_frac")?,
                captured_frac: t.parse(r, "captured_frac")?,
                missed_frac: t.parse(r, "missed_frac")?,
                loc_mean: t.parse(r, "loc_mean")?,
                loc_std: t.parse(r, "loc_std")?,
            })
        })
        .collect()
}

pub fn write_histogram(path: &Path, rows: &[(f64, Option<f64>, Vec<HistogramBin>)], meta: &Meta) -> Result<()> {
    let mut out = Vec::new();
    for (dz, off, bins) in rows {
        for b in bins {
            out.push(vec![
                fmt_f64(*dz),
                off.map(fmt_f64).unwrap_or_else(|| "pooled".into()),
                fmt_f64(b.lo),
                fmt_f64(b.hi),
                b.count.to_string(),
            ]);
        }
    }
    write_csv(
        path,
        &["delta_z", "offset", "bin_lo", "bin_hi", "count"],
        &out,
        &meta.with_schema(schema::HISTOGRAM),
    )
}

/// The point-cloud CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub cell_id: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub z_lo: f64,
    pub z_hi: f64,
    pub type_label: String,
    pub provenance: Provenance,
    pub chain_len: usize,
}

impl From<&Point3D> for PointRecord {
    fn from(p: &Point3D) -> Self {
        Self {
            cell_id: p.cell_id.clone(),
            x: p.x,
            y: p.y,
            z: p.z,
            z_lo: p.depth_interval[0],
            z_hi: p.depth_interval[1],
            type_label: p.type_label.clone(),
            provenance: p.provenance,
            chain_len: p.chain_len,
        }
    }
}

pub fn write_points(path: &Path, points: &[PointRecord], meta: &Meta) -> Result<()> {
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                p.cell_id.clone(),
                fmt_f64(p.x),
                fmt_f64(p.y),
                fmt_f64(p.z),
                fmt_f64(p.z_lo),
                fmt_f64(p.z_hi),
                p.type_label.clone(),
                p.provenance.as_str().to_string(),
                p.chain_len.to_string(),
            ]
        })
        .collect();
    write_csv(path, &POINT_HEADER, &rows, &meta.with_schema(schema::POINTS))
}

pub fn read_points(path: &Path) -> Result<Vec<PointRecord>> {
    let t = Table::read(path, schema::POINTS, &POINT_HEADER)?;
    t.rows
        .iter()
        .map(|r| {
            Ok(PointRecord {
                cell_id: t.str(r, "cell_id")?.to_string(),
                x: t.parse(r, "x")?,
                y: t.parse(r, "y")?,
                z: t.parse(r, "z")?,
                z_lo: t.parse(r, "z_lo")?,
                z_hi: t.parse(r, "z_hi")?,
                type_label: t.str(r, "type")?.to_string(),
                provenance: match t.str(r, "provenance")? {
                    "SC" => Provenance::SC,
                    "LC" => Provenance::LC,
                    other => return Err(Error::Schema(format!("unknown provenance '{other}'"))),
                },
                chain_len: t.parse(r, "chain_len")?,
            })
        })
        .collect()
}

/// Volume sidecar contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub k: usize,
    pub neighborhood: Neighborhood,
    pub seed: u64,
    pub sweeps: Option<usize>,
    pub params: Option<MrfParams>,
}

/// Raw one-based `u8` labels in lattice index order (`x` fastest).
pub fn write_volume(
    path: &Path,
    volume: &LabelVolume,
    sweeps: Option<usize>,
    params: Option<&MrfParams>,
    meta: &Meta,
) -> Result<()> {
    let header = VolumeHeader {
        dims: volume.spec().dims,
        k: volume.k(),
        neighborhood: volume.spec().neighborhood,
        seed: volume.seed(),
        sweeps,
        params: params.cloned(),
    };
    let mut m = meta.with_schema(schema::VOLUME);
    m.info = Some(serde_json::to_value(&header)?);
    write_with_meta(path, &volume.to_one_based(), &m)
}

pub fn read_volume(path: &Path) -> Result<(LabelVolume, VolumeHeader)> {
    let meta = check_schema(path, schema::VOLUME)?
        .ok_or_else(|| Error::Schema(format!("{}: volume has no sidecar", path.display())))?;
    let info = meta
        .info
        .ok_or_else(|| Error::Schema(format!("{}: sidecar lacks volume header", path.display())))?;
    let header: VolumeHeader =
        serde_json::from_value(info).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let spec = LatticeSpec::new(header.dims, header.neighborhood)?;
    if bytes.len() != spec.len() {
        return Err(Error::Schema(format!(
            "{}: {} bytes for a {:?} volume",
            path.display(),
            bytes.len(),
            header.dims
        )));
    }
    let v = LabelVolume::from_one_based(spec, header.k, &bytes, header.seed)?;
    Ok((v, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::cell;

    fn meta() -> Meta {
        Meta::new(schema::CELLS, Some(7), Some("abc"))
    }

    #[test]
    fn cells_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cells.csv");
        let mut cells = vec![
            cell("a", 0.1, 2.0 / 3.0, 4.0, std::f64::consts::PI, "T cell", 0),
            cell("b,quoted", -1e-300, 5.0, 8.0, 1e6, "B", 1),
        ];
        write_cells(&p, &cells, &meta()).unwrap();
        assert_eq!(read_cells(&p).unwrap(), cells);
        cells[0].true_volume_id = Some("v1".into());
        write_cells(&p, &cells, &meta()).unwrap();
        let header = std::fs::read_to_string(&p).unwrap();
        assert!(header.starts_with("cell_id,x,y,z,area,type,section,true_volume_id\n"));
        assert_eq!(read_cells(&p).unwrap(), cells);
    }

    #[test]
    fn missing_column_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cells.csv");
        std::fs::write(&p, "cell_id,x,y,z,type,section\na,0,0,0,T,0\n").unwrap();
        let e = read_cells(&p).unwrap_err();
        assert!(matches!(&e, Error::Schema(m) if m.contains("'area'")), "{e}");
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn mismatched_sidecar_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rec.csv");
        write_cells(&p, &[cell("a", 0.0, 0.0, 0.0, 1.0, "T", 0)], &meta()).unwrap();
        assert!(matches!(read_recovery(&p), Err(Error::Schema(_))));
        let mut m: Meta = serde_json::from_slice(&std::fs::read(meta_path(&p)).unwrap()).unwrap();
        m.schema_version = 99;
        std::fs::write(meta_path(&p), serde_json::to_vec(&m).unwrap()).unwrap();
        assert!(matches!(read_cells(&p), Err(Error::Schema(_))));
    }

    #[test]
    fn recovery_and_coverage_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("recovery.csv");
        let reports = vec![
            RecoveryReport {
                geometry: Some(Geometry::Serial3D),
                seed: Some(3),
                budget: Some(6144),
                mae_alpha: 0.1,
                rmse_alpha: 0.2,
                mae_b: 1.0 / 3.0,
                rmse_b: 0.5,
            },
            RecoveryReport {
                geometry: None,
                seed: None,
                budget: None,
                mae_alpha: 0.0,
                rmse_alpha: 0.0,
                mae_b: 0.0,
                rmse_b: 0.0,
            },
        ];
        write_recovery(&p, &reports, &meta()).unwrap();
        assert!(std::fs::read_to_string(&p)
            .unwrap()
            .starts_with("geometry,seed,budget,mae_alpha,rmse_alpha,mae_B,rmse_B\n"));
        assert_eq!(read_recovery(&p).unwrap(), reports);

        let c = dir.path().join("coverage.csv");
        let rows = vec![
            CoverageRow {
                delta_z: 4.0,
                offset: Some(2.0),
                sc_frac: 0.6,
                lc_frac: 0.4,
                captured_frac: 0.9,
                missed_frac: 0.1,
                loc_mean: 1.25,
                loc_std: 0.5,
            },
            CoverageRow {
                delta_z: 4.0,
                offset: None,
                sc_frac: 0.7,
                lc_frac: 0.3,
                captured_frac: 1.0,
                missed_frac: 0.0,
                loc_mean: 1.0,
                loc_std: 0.25,
            },
        ];
        write_coverage(&c, &rows, &meta()).unwrap();
        assert_eq!(read_coverage(&c).unwrap(), rows);
    }

    #[test]
    fn points_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("points.csv");
        let pts = vec![PointRecord {
            cell_id: "c1".into(),
            x: 1.5,
            y: -2.0,
            z: 7.000000000000001,
            z_lo: 4.0,
            z_hi: 12.0,
            type_label: "A".into(),
            provenance: Provenance::SC,
            chain_len: 2,
        }];
        write_points(&p, &pts, &meta()).unwrap();
        assert_eq!(read_points(&p).unwrap(), pts);
    }

    #[test]
    fn volume_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.labels");
        let spec = LatticeSpec::new([3, 2, 2], Neighborhood::N6).unwrap();
        let labels: Vec<u8> = (0..12).map(|i| (i % 3) as u8).collect();
        let v = LabelVolume::new(spec, 3, labels, 99).unwrap();
        let params = MrfParams::zeros(3, 0.0).unwrap();
        write_volume(&p, &v, Some(10), Some(&params), &meta()).unwrap();
        assert_eq!(std::fs::read(&p).unwrap()[..3], [1, 2, 3]);
        let (back, header) = read_volume(&p).unwrap();
        assert_eq!(back, v);
        assert_eq!(header.sweeps, Some(10));
        assert_eq!(header.params, Some(params));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
