//! Patch manifest CSV:
//! `patch_id,slide_id,class_label,grid_x,grid_y,cluster,split`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::dataio::{read_bytes, write_atomic};
use crate::error::{Error, Result};
use crate::patching::PatchRecord;

pub const HEADER: [&str; 7] = [
    "patch_id",
    "slide_id",
    "class_label",
    "grid_x",
    "grid_y",
    "cluster",
    "split",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<PatchRecord>,
}

fn manifest_err(line: usize, message: impl Into<String>) -> Error {
    Error::Manifest {
        line,
        message: message.into(),
    }
}

impl Manifest {
    pub fn new(records: Vec<PatchRecord>) -> Result<Self> {
        let m = Manifest { records };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, r) in self.records.iter().enumerate() {
            if !seen.insert(r.patch_id.as_str()) {
                return Err(manifest_err(
                    i + 2,
                    format!("duplicate patch_id `{}`", r.patch_id),
                ));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::invalid(format!("manifest encode: {e}"));
        w.write_record(HEADER).map_err(csv_err)?;
        for r in &self.records {
            w.write_record([
                r.patch_id.as_str(),
                r.slide_id.as_str(),
                r.class_label.as_str(),
                &r.grid_x.to_string(),
                &r.grid_y.to_string(),
                r.cluster.as_str(),
                r.split.as_str(),
            ])
            .map_err(csv_err)?;
        }
        w.into_inner()
            .map_err(|e| Error::invalid(format!("manifest encode: {e}")))
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(bytes);
        let header = rdr.headers().map_err(|e| manifest_err(1, e.to_string()))?;
        if header.iter().ne(HEADER) {
            return Err(manifest_err(
                1,
                format!("header must be `{}`", HEADER.join(",")),
            ));
        }
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| manifest_err(line, e.to_string()))?;
            if row.len() != HEADER.len() {
                return Err(manifest_err(
                    line,
                    format!("expected 7 fields, got {}", row.len()),
                ));
            }
            let field = |j: usize| &row[j];
            let parse_usize = |j: usize| {
                field(j).parse::<usize>().map_err(|_| {
                    manifest_err(
                        line,
                        format!("{} `{}` is not an integer", HEADER[j], field(j)),
                    )
                })
            };
            let wrap = |e: Error| manifest_err(line, e.to_string());
            records.push(PatchRecord {
                patch_id: field(0).to_string(),
                slide_id: field(1).to_string(),
                class_label: field(2).parse().map_err(wrap)?,
                grid_x: parse_usize(3)?,
                grid_y: parse_usize(4)?,
                cluster: field(5).parse().map_err(wrap)?,
                split: field(6).parse().map_err(wrap)?,
            });
        }
        Manifest::new(records)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_csv(&read_bytes(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv()?)
    }

    pub fn patch_path(root: &Path, record: &PatchRecord) -> PathBuf {
        root.join(format!("{}.ppm", record.patch_id))
    }

    /// Every record has its patch file under `root`.
    pub fn check_files(&self, root: &Path) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            let p = Self::patch_path(root, r);
            if !p.is_file() {
                return Err(manifest_err(
                    i + 2,
                    format!("missing patch file {}", p.display()),
                ));
            }
        }
        Ok(())
    }
}
