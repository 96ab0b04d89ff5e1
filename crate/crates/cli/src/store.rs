//! Locating, writing and loading cached `SLDS` domain files.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::Serialize;
use shiftlab::datasets::{
    load_mnist_dir, make_cmnist, make_cs_cmnist, read_dataset, write_dataset, ColoredDataset, DatasetKind, DomainRole,
};
use shiftlab::trainer::write_atomic;

pub const CACHE_ENV: &str = "SHIFTLAB_CACHE";
pub const DEFAULT_CACHE: &str = "shiftlab-cache";

/// `explicit` if given, else `$SHIFTLAB_CACHE`, else `fallback`, else
/// `./shiftlab-cache`.
pub fn cache_dir(explicit: Option<&Path>, fallback: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(v) = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(v);
    }
    fallback.map_or_else(|| PathBuf::from(DEFAULT_CACHE), Path::to_path_buf)
}

pub fn domain_path(dir: &Path, kind: DatasetKind, seed: u64, domain: usize) -> PathBuf {
    dir.join(format!("{}-seed{seed}-domain{domain}.slds", kind.slug()))
}

pub fn stats_path(dir: &Path, kind: DatasetKind, seed: u64) -> PathBuf {
    dir.join(format!("{}-seed{seed}-stats.json", kind.slug()))
}

#[derive(Debug, Serialize)]
pub struct DomainStats {
    pub index: usize,
    pub role: DomainRole,
    pub bias: f64,
    pub size: usize,
    pub color_label_agreement: f64,
    pub expected_color_label_agreement: f64,
    pub label_flip_rate: f64,
    pub file: String,
}

#[derive(Debug, Serialize)]
pub struct DatasetStats {
    pub kind: DatasetKind,
    pub seed: u64,
    pub domains: Vec<DomainStats>,
}

fn expected_agreement(kind: DatasetKind, bias: f64) -> f64 {
    match kind {
        DatasetKind::Cmnist => 1.0 - bias,
        DatasetKind::CsCmnist => (1.0 - bias) / (1.0 + 8.0 * bias),
    }
}

pub fn generate(kind: DatasetKind, mnist_dir: &Path, seed: u64) -> shiftlab::Result<[ColoredDataset; 3]> {
    let (train, test) = load_mnist_dir(mnist_dir)?;
    let pool = train.concat(test)?;
    match kind {
        DatasetKind::Cmnist => make_cmnist(&pool, seed),
        DatasetKind::CsCmnist => make_cs_cmnist(&pool, seed),
    }
}

/// Writes the three domain files and the stats JSON into `dir`.
pub fn save(dir: &Path, domains: &[ColoredDataset; 3]) -> shiftlab::Result<DatasetStats> {
    fs::create_dir_all(dir)?;
    let (kind, seed) = (domains[0].kind, domains[0].seed);
    let mut stats = DatasetStats { kind, seed, domains: Vec::new() };
    for d in domains {
        let path = domain_path(dir, kind, seed, d.domain.index);
        let mut bytes = Vec::new();
        write_dataset(d, BufWriter::new(&mut bytes))?;
        write_atomic(&path, &bytes)?;
        stats.domains.push(DomainStats {
            index: d.domain.index,
            role: d.domain.role,
            bias: d.domain.bias,
            size: d.len(),
            color_label_agreement: d.color_label_agreement(),
            expected_color_label_agreement: expected_agreement(kind, d.domain.bias),
            label_flip_rate: d.label_flip_rate(),
            file: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        });
    }
    let mut json = serde_json::to_vec_pretty(&stats)?;
    json.push(b'\n');
    write_atomic(&stats_path(dir, kind, seed), &json)?;
    Ok(stats)
}

/// Cached domains if all three files exist.
pub fn load(dir: &Path, kind: DatasetKind, seed: u64) -> shiftlab::Result<Option<[ColoredDataset; 3]>> {
    let paths = [1, 2, 3].map(|e| domain_path(dir, kind, seed, e));
    if !paths.iter().all(|p| p.is_file()) {
        return Ok(None);
    }
    let mut out = Vec::with_capacity(3);
    for p in &paths {
        let ds = read_dataset(BufReader::new(File::open(p)?))?;
        if ds.kind != kind || ds.seed != seed {
            return Err(shiftlab::Error::Config(format!("{} does not hold {} seed {seed}", p.display(), kind.slug())));
        }
        out.push(ds);
    }
    Ok(out.try_into().ok())
}
