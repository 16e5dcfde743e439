use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::graph::MobilityGraph;
use super::grid::{LabeledScenario, Role};
use super::scenario::Scenario;
use super::seir::{Simulator, Trajectory};
use crate::error::{Error, Result};
use crate::rng::{purpose, stream_seed};

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// One simulated sample, as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub scenario_id: usize,
    pub role: Role,
    pub sample: usize,
    pub scenario: Scenario,
    pub trajectory: Trajectory,
}

/// Seed of sample `sample` of scenario `id`.
pub fn sample_seed(base: u64, id: usize, sample: usize) -> u64 {
    stream_seed(base, &[purpose::SIMULATION, id as u64, sample as u64])
}

/// Runs `samples` seeds of every scenario. Output order is (id, sample)
/// regardless of scheduling.
pub fn generate(
    scenarios: &[LabeledScenario],
    simulator: &dyn Simulator,
    samples: usize,
    base_seed: u64,
) -> Result<Vec<SimRecord>> {
    let jobs: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|i| (0..samples).map(move |s| (i, s)))
        .collect();
    jobs.par_iter()
        .map(|&(i, sample)| {
            let ls = &scenarios[i];
            let trajectory = simulator.simulate(&ls.scenario, sample_seed(base_seed, ls.id, sample))?;
            Ok(SimRecord {
                scenario_id: ls.id,
                role: ls.role,
                sample,
                scenario: ls.scenario.clone(),
                trajectory,
            })
        })
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn to_jsonl(records: &[SimRecord]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

/// Writes through a temporary file and a rename so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = BufWriter::new(fs::File::create(&tmp)?);
        f.write_all(bytes)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<SimRecord>> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(out)
}

/// Describes a dataset file: scenario table, split, seeding and checksum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub simulator: String,
    pub samples: usize,
    pub base_seed: u64,
    pub records: usize,
    pub data_file: String,
    pub sha256: String,
    /// Coupling of a metapopulation dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<MobilityGraph>,
    pub scenarios: Vec<LabeledScenario>,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let m: Manifest = serde_json::from_slice(&fs::read(path)?)?;
        if m.version != DATASET_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "dataset format version {} is not supported (expected {DATASET_FORMAT_VERSION})",
                m.version
            )));
        }
        if let Some(g) = &m.graph {
            g.check_rows()?;
        }
        Ok(m)
    }

    /// Loads the data file next to the manifest and checks its checksum.
    pub fn load_records(&self, manifest_path: &Path) -> Result<Vec<SimRecord>> {
        let data = manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&self.data_file);
        let bytes = fs::read(&data)?;
        let digest = sha256_hex(&bytes);
        if digest != self.sha256 {
            return Err(Error::Integrity(format!(
                "{} has sha256 {digest}, manifest says {}",
                data.display(),
                self.sha256
            )));
        }
        let records = read_jsonl(&data)?;
        if records.len() != self.records {
            return Err(Error::Integrity(format!(
                "{} holds {} records, manifest says {}",
                data.display(),
                records.len(),
                self.records
            )));
        }
        Ok(records)
    }
}

/// Manifest path for a dataset file: `data/seir.jsonl` → `data/seir.manifest.json`.
pub fn manifest_path(data: &Path) -> std::path::PathBuf {
    data.with_extension("manifest.json")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::grid::{split_grid, GridRange};
    use crate::sim::seir::SeirSimulator;

    #[test]
    fn jsonl_round_trip_and_checksum() {
        let split = split_grid(GridRange::new(1.1, 1.3, 0.1), GridRange::new(0.25, 0.35, 0.05), 1, 1).unwrap();
        let recs = generate(&split, &SeirSimulator, 2, 7).unwrap();
        assert_eq!(recs.len(), split.len() * 2);
        let again = generate(&split, &SeirSimulator, 2, 7).unwrap();
        assert_eq!(to_jsonl(&recs).unwrap(), to_jsonl(&again).unwrap());

        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("d.jsonl");
        let bytes = to_jsonl(&recs).unwrap();
        write_atomic(&data, &bytes).unwrap();
        let m = Manifest {
            version: DATASET_FORMAT_VERSION,
            simulator: "seir".into(),
            samples: 2,
            base_seed: 7,
            records: recs.len(),
            data_file: "d.jsonl".into(),
            sha256: sha256_hex(&bytes),
            graph: None,
            scenarios: split,
        };
        let mp = manifest_path(&data);
        m.write(&mp).unwrap();
        let back = Manifest::read(&mp).unwrap();
        assert_eq!(back.load_records(&mp).unwrap(), recs);

        fs::write(&data, b"{}\n").unwrap();
        assert!(matches!(back.load_records(&mp), Err(Error::Integrity(_))));
    }
}
