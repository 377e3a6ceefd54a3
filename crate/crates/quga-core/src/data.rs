//! Training-corpus construction: port ingestion, great-circle distances,
//! 4-port graph sampling under the minimum-distance rejection rule, and
//! dataset persistence.
//!
//! Edge weights use a fixed canonical order over the node pairs of the
//! complete 4-node graph: (0,1), (0,2), (0,3), (1,2), (1,3), (2,3).

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Mean Earth radius in nautical miles.
pub const EARTH_RADIUS_NM: f64 = 3440.065;
/// Minimum pairwise port distance accepted into a graph, in nautical miles.
pub const DEFAULT_MIN_DISTANCE_NM: f64 = 100.0;
/// Consecutive rejections after which sampling gives up.
pub const MAX_CONSECUTIVE_REJECTIONS: usize = 10_000;
/// Normalized weights must sum to one within this tolerance.
pub const SUM_TOLERANCE: f64 = 1e-9;
/// Raw edge sums at or below this are degenerate and cannot be normalized.
pub const DEGENERATE_SUM_EPS: f64 = 1e-12;

/// Canonical node-pair order of the six edges.
pub const EDGE_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Index of edge (a, b) in [`EDGE_PAIRS`]; arguments in either order.
pub fn edge_index(a: usize, b: usize) -> usize {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    EDGE_PAIRS
        .iter()
        .position(|&(x, y)| (x, y) == (lo, hi))
        .expect("node indices must be distinct and < 4")
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("port {id}: {field} = {value} out of range")]
    CoordinateOutOfRange { id: u64, field: &'static str, value: f64 },
    #[error("duplicate port id {0}")]
    DuplicateId(u64),
    #[error("too few ports: need at least 4, got {0}")]
    TooFewPorts(usize),
    #[error("gave up after {0} consecutive rejections; port list too clustered for the threshold")]
    Infeasible(usize),
    #[error("edge sum {0} is degenerate, cannot normalize")]
    DegenerateSum(f64),
    #[error("corrupt dataset at line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

/// A harbor with validated coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Port {
    pub id: u64,
    pub name: String,
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl Port {
    fn validate(&self) -> Result<(), DataError> {
        if !(-90.0..=90.0).contains(&self.lat_deg) || !self.lat_deg.is_finite() {
            return Err(DataError::CoordinateOutOfRange {
                id: self.id,
                field: "lat_deg",
                value: self.lat_deg,
            });
        }
        // Longitude convention is (-180, 180].
        if !(self.lon_deg > -180.0 && self.lon_deg <= 180.0) {
            return Err(DataError::CoordinateOutOfRange {
                id: self.id,
                field: "lon_deg",
                value: self.lon_deg,
            });
        }
        Ok(())
    }
}

/// Haversine great-circle distance in nautical miles.
pub fn great_circle_nm(a: &Port, b: &Port) -> f64 {
    let lat1 = a.lat_deg.to_radians();
    let lat2 = b.lat_deg.to_radians();
    let dlat = (b.lat_deg - a.lat_deg).to_radians();
    let dlon = (b.lon_deg - a.lon_deg).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_NM * h.sqrt().min(1.0).asin()
}

/// Parse and validate a ports CSV with header `id,name,lat_deg,lon_deg`.
pub fn load_ports(path: &Path) -> Result<Vec<Port>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => DataError::Io {
                path: path.to_path_buf(),
                source: io::Error::other(e.to_string()),
            },
            _ => DataError::Parse {
                line: 1,
                message: e.to_string(),
            },
        })?;
    let mut ports = Vec::new();
    for (i, record) in reader.deserialize::<Port>().enumerate() {
        // Header is line 1, first record line 2.
        let line = i + 2;
        let port: Port = record.map_err(|e| DataError::Parse {
            line,
            message: e.to_string(),
        })?;
        port.validate()?;
        if ports.iter().any(|p: &Port| p.id == port.id) {
            return Err(DataError::DuplicateId(port.id));
        }
        ports.push(port);
    }
    Ok(ports)
}

/// SHA-256 over a canonical serialization of the port list, used to tie a
/// dataset back to its distance universe.
pub fn port_list_hash(ports: &[Port]) -> String {
    let mut canonical = String::new();
    for p in ports {
        let _ = writeln!(canonical, "{},{},{:?},{:?}", p.id, p.name, p.lat_deg, p.lon_deg);
    }
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Six nonnegative edge weights of a complete 4-node graph, in canonical
/// pair order, normalized to sum one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphSample {
    weights: [f64; 6],
}

impl GraphSample {
    /// Normalize raw nonnegative edge weights to sum one. Pairwise ratios
    /// are preserved exactly up to floating point.
    pub fn from_raw(raw: [f64; 6]) -> Result<Self, DataError> {
        let sum: f64 = raw.iter().sum();
        if !(sum > DEGENERATE_SUM_EPS) {
            return Err(DataError::DegenerateSum(sum));
        }
        let mut weights = raw;
        for w in &mut weights {
            *w /= sum;
        }
        Ok(Self { weights })
    }

    /// Accept already-normalized weights, validating the invariants
    /// (nonnegative, sum one within tolerance). This is the load path.
    pub fn from_normalized(weights: [f64; 6]) -> Result<Self, DataError> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DataError::Corrupt {
                line: 0,
                message: "negative or non-finite weight".into(),
            });
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(DataError::Corrupt {
                line: 0,
                message: format!("weights sum to {sum}, expected 1"),
            });
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64; 6] {
        &self.weights
    }
}

/// One accepted quadruple: the normalized sample plus its raw distances and
/// the ids of the drawn ports.
#[derive(Debug, Clone)]
pub struct SampledGraph {
    pub sample: GraphSample,
    pub raw_nm: [f64; 6],
    pub port_ids: [u64; 4],
}

/// Draw four distinct ports uniformly; reject the whole quadruple whenever
/// any pairwise distance falls below the threshold and redraw.
pub fn sample_graph<R: Rng + ?Sized>(
    rng: &mut R,
    ports: &[Port],
    threshold_nm: f64,
) -> Result<SampledGraph, DataError> {
    if ports.len() < 4 {
        return Err(DataError::TooFewPorts(ports.len()));
    }
    let mut indices: Vec<usize> = (0..ports.len()).collect();
    let mut rejections = 0;
    loop {
        // Partial Fisher-Yates: exactly four RNG draws per attempt.
        for slot in 0..4 {
            let pick = rng.random_range(slot..indices.len());
            indices.swap(slot, pick);
        }
        let quad = [indices[0], indices[1], indices[2], indices[3]];
        let mut raw = [0.0; 6];
        for (k, (a, b)) in EDGE_PAIRS.iter().enumerate() {
            raw[k] = great_circle_nm(&ports[quad[*a]], &ports[quad[*b]]);
        }
        if raw.iter().any(|&d| d < threshold_nm) {
            rejections += 1;
            if rejections >= MAX_CONSECUTIVE_REJECTIONS {
                return Err(DataError::Infeasible(rejections));
            }
            continue;
        }
        return Ok(SampledGraph {
            sample: GraphSample::from_raw(raw)?,
            raw_nm: raw,
            port_ids: [
                ports[quad[0]].id,
                ports[quad[1]].id,
                ports[quad[2]].id,
                ports[quad[3]].id,
            ],
        });
    }
}

/// Where a dataset came from: enough to rebuild it bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub port_list_hash: String,
    pub seed: u64,
    pub threshold_nm: f64,
    /// Hash of the full experiment configuration that produced the file,
    /// when it was produced by the command-line runner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// The training corpus.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<GraphSample>,
    pub provenance: Option<Provenance>,
}

impl Dataset {
    /// Population standard deviation over all pooled edge weights.
    pub fn pooled_weight_std(&self) -> f64 {
        let values: Vec<f64> = self
            .samples
            .iter()
            .flat_map(|s| s.weights().iter().copied())
            .collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

/// Deterministically sample `count` accepted graphs from the port list.
pub fn build_dataset(
    count: usize,
    seed: u64,
    ports: &[Port],
    threshold_nm: f64,
) -> Result<Dataset, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        samples.push(sample_graph(&mut rng, ports, threshold_nm)?.sample);
    }
    Ok(Dataset {
        samples,
        provenance: Some(Provenance {
            port_list_hash: port_list_hash(ports),
            seed,
            threshold_nm,
            config_hash: None,
        }),
    })
}

fn sidecar_path(dataset_path: &Path) -> PathBuf {
    let mut os = dataset_path.as_os_str().to_os_string();
    os.push(".provenance.json");
    PathBuf::from(os)
}

/// Render a dataset as CSV text. Weights are written in scientific notation
/// with 17 significant digits, which round-trips f64 exactly.
pub fn dataset_to_csv(dataset: &Dataset) -> String {
    let mut out = String::from("graph_id,w01,w02,w03,w12,w13,w23\n");
    for (i, sample) in dataset.samples.iter().enumerate() {
        let _ = write!(out, "{i}");
        for w in sample.weights() {
            let _ = write!(out, ",{w:.16e}");
        }
        out.push('\n');
    }
    out
}

/// Write the dataset CSV and its provenance sidecar (`<path>.provenance.json`).
pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<(), DataError> {
    let io_err = |source: io::Error| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    fs::write(path, dataset_to_csv(dataset)).map_err(io_err)?;
    if let Some(provenance) = &dataset.provenance {
        let json = serde_json::to_string_pretty(provenance).expect("provenance serializes");
        fs::write(sidecar_path(path), json).map_err(io_err)?;
    }
    Ok(())
}

/// Load a dataset CSV, validating every sample invariant. A missing sidecar
/// leaves `provenance` empty; the dataset is still usable.
pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    let io_err = |source: io::Error| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let text = fs::read_to_string(path).map_err(io_err)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "graph_id,w01,w02,w03,w12,w13,w23")) => {}
        Some((_, other)) => {
            return Err(DataError::Corrupt {
                line: 1,
                message: format!("unexpected header {other:?}"),
            })
        }
        None => {
            return Err(DataError::Corrupt {
                line: 1,
                message: "empty file".into(),
            })
        }
    }
    let mut samples = Vec::new();
    for (i, row) in lines {
        let line = i + 1;
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 7 {
            return Err(DataError::Corrupt {
                line,
                message: format!("expected 7 fields, got {}", fields.len()),
            });
        }
        let mut weights = [0.0; 6];
        for (k, field) in fields[1..].iter().enumerate() {
            weights[k] = field.parse::<f64>().map_err(|e| DataError::Corrupt {
                line,
                message: format!("bad weight {field:?}: {e}"),
            })?;
        }
        let sample = GraphSample::from_normalized(weights).map_err(|e| match e {
            DataError::Corrupt { message, .. } => DataError::Corrupt { line, message },
            other => other,
        })?;
        samples.push(sample);
    }
    let provenance = match fs::read_to_string(sidecar_path(path)) {
        Ok(json) => Some(
            serde_json::from_str(&json).map_err(|e| DataError::Corrupt {
                line: 0,
                message: format!("bad provenance sidecar: {e}"),
            })?,
        ),
        Err(_) => None,
    };
    Ok(Dataset {
        samples,
        provenance,
    })
}
