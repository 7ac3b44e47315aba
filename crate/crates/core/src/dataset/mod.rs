//! Dataset generation: parameter and IC sampling, solving, text attachment,
//! splitting and on-disk serialization.

mod descriptions;
pub mod format;
mod samples;

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use descriptions::{feature_keyword, generate_descriptions, Facet, TextDescriptionSet, DESCRIPTIONS_PER_FAMILY};
pub use samples::{load_records, load_samples, MultimodalSample, QuerySelection, D_MAX};

use crate::catalog::{
    catalog, get_equation, parameters_from_unit, render_input_sentence, sample_initial_condition,
    sample_parameters, with_porous_exponent, CatalogError, EquationSpec, InitialCondition, ParameterSet,
};
use crate::numerics::{self, SolverError};
use crate::rng::{purpose_stream, StreamPurpose};
use crate::tokenizer::{TokenizerError, Vocab};
use format::RawRecord;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const VOCAB_FILE: &str = "vocab.json";
/// Solver attempts per sample before it is given up.
const MAX_ATTEMPTS: u64 = 4;
const MAX_REJECTION_RATE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt record in {file} at byte {offset}")]
    CorruptRecord { file: String, offset: u64 },
    #[error("family {family}: only {got} distinct descriptions could be formed")]
    TemplateExhausted { family: usize, got: usize },
    #[error("family {family}: {rejected} of {requested} samples rejected by the solver")]
    RejectionRate {
        family: usize,
        rejected: usize,
        requested: usize,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("split {0:?} is not present in the manifest")]
    MissingSplit(Split),
    #[error("split hygiene violated: family {family} sample appears in {a:?} and {b:?}")]
    SplitOverlap { family: usize, a: Split, b: Split },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error("family {family}: {source}")]
    Solver {
        family: usize,
        #[source]
        source: SolverError,
    },
}

impl DatasetError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Train,
    TestId,
    Ood20,
    Ood30,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::TestId, Split::Ood20, Split::Ood30];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Split> {
        Split::ALL.get(c as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::TestId => "test",
            Split::Ood20 => "ood20",
            Split::Ood30 => "ood30",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|x| x.name() == s)
    }
}

/// Sample counts and sampling ranges for a build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    pub master_seed: u64,
    pub train_params: usize,
    pub train_ics_ode: usize,
    pub train_ics_pde: usize,
    /// Parameter draws per test split; shared by the three test splits.
    pub test_params: usize,
    pub test_ics: usize,
    /// Family indices to build; empty means all.
    pub families: Vec<usize>,
    pub train_range: f64,
    pub ood20_range: f64,
    pub ood30_range: f64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl BuildConfig {
    pub fn desk() -> Self {
        Self {
            master_seed: 0,
            train_params: 8,
            train_ics_ode: 8,
            train_ics_pde: 8,
            test_params: 2,
            test_ics: 2,
            families: Vec::new(),
            train_range: 0.1,
            ood20_range: 0.2,
            ood30_range: 0.3,
        }
    }

    pub fn paper() -> Self {
        Self {
            train_params: 100,
            train_ics_ode: 50,
            train_ics_pde: 100,
            test_params: 10,
            test_ics: 5,
            ..Self::desk()
        }
    }

    pub fn relative_range(&self, split: Split) -> f64 {
        match split {
            Split::Train | Split::TestId => self.train_range,
            Split::Ood20 => self.ood20_range,
            Split::Ood30 => self.ood30_range,
        }
    }

    /// `(parameter draws, ICs per draw)` for one family and split.
    pub fn counts(&self, spec: &EquationSpec, split: Split) -> (usize, usize) {
        match split {
            Split::Train if spec.is_ode() => (self.train_params, self.train_ics_ode),
            Split::Train => (self.train_params, self.train_ics_pde),
            _ => (self.test_params, self.test_ics),
        }
    }

    pub fn family_specs(&self) -> Result<Vec<&'static EquationSpec>, DatasetError> {
        if self.families.is_empty() {
            return Ok(catalog().iter().collect());
        }
        let mut idx = self.families.clone();
        idx.sort_unstable();
        idx.dedup();
        idx.into_iter()
            .map(|i| get_equation(i).map_err(DatasetError::from))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub split: Split,
    pub relative_range: f64,
    pub n_params: usize,
    pub n_ics: usize,
    /// Byte range of this split inside the family file.
    pub offset: u64,
    pub length: u64,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub split: Split,
    pub param_index: usize,
    pub ic_index: usize,
    pub attempt: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyEntry {
    pub index: usize,
    pub file: String,
    pub splits: Vec<SplitEntry>,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub master_seed: u64,
    pub config: BuildConfig,
    pub vocab_file: String,
    pub families: Vec<FamilyEntry>,
}

impl DatasetManifest {
    /// Distinct training parameter draws over all families.
    pub fn parameterized_equations(&self) -> usize {
        self.families
            .iter()
            .flat_map(|f| &f.splits)
            .filter(|s| s.split == Split::Train)
            .map(|s| s.n_params)
            .sum()
    }

    pub fn total_records(&self) -> usize {
        self.families.iter().flat_map(|f| &f.splits).map(|s| s.records).sum()
    }

    pub fn split_records(&self, split: Split) -> usize {
        self.families
            .iter()
            .flat_map(|f| &f.splits)
            .filter(|s| s.split == split)
            .map(|s| s.records)
            .sum()
    }

    pub fn read(dir: &Path) -> Result<Self, DatasetError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| DatasetError::io(&path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text).map_err(|e| DatasetError::Manifest(e.to_string()))?;
        if m.format_version != FORMAT_VERSION {
            return Err(DatasetError::Manifest(format!(
                "format version {} is not supported",
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn vocab(&self, dir: &Path) -> Result<Vocab, DatasetError> {
        let path = dir.join(&self.vocab_file);
        let text = fs::read_to_string(&path).map_err(|e| DatasetError::io(&path, e))?;
        Ok(Vocab::from_json(&text)?)
    }
}

fn family_file(index: usize) -> String {
    format!("family_{index:02}.bin")
}

/// Manifest with the counts a build would produce, without solving anything.
/// Offsets and lengths are zero.
pub fn plan(config: &BuildConfig) -> Result<DatasetManifest, DatasetError> {
    let families = config
        .family_specs()?
        .into_iter()
        .map(|spec| FamilyEntry {
            index: spec.index,
            file: family_file(spec.index),
            splits: Split::ALL
                .iter()
                .map(|&split| {
                    let (n_params, n_ics) = config.counts(spec, split);
                    SplitEntry {
                        split,
                        relative_range: config.relative_range(split),
                        n_params,
                        n_ics,
                        offset: 0,
                        length: 0,
                        records: n_params * n_ics,
                    }
                })
                .collect(),
            rejected: Vec::new(),
        })
        .collect();
    Ok(DatasetManifest {
        format_version: FORMAT_VERSION,
        master_seed: config.master_seed,
        config: config.clone(),
        vocab_file: VOCAB_FILE.to_string(),
        families,
    })
}

/// Every sentence and description the catalog can produce. Sentence text
/// only depends on discrete parameters, so nominal values suffice apart from
/// the porous-medium exponent.
pub fn vocab_corpus() -> Result<Vec<String>, DatasetError> {
    let mut out = Vec::new();
    for spec in catalog() {
        let ic = InitialCondition::from_values(spec.ic_family, vec![0.0; spec.frame_width()]);
        let mut seen = HashSet::new();
        for k in 0..3 {
            let params = with_porous_exponent(spec, spec.nominal_parameters(), k);
            let s = render_input_sentence(spec, &params, &ic)?;
            if seen.insert(s.text.clone()) {
                out.push(s.text);
            }
        }
        out.extend(generate_descriptions(spec)?.descriptions);
    }
    Ok(out)
}

pub fn build_vocab() -> Result<Vocab, DatasetError> {
    let corpus = vocab_corpus()?;
    Ok(Vocab::build(corpus.iter().map(String::as_str))?)
}

/// Parameters for draw `p` of a split. The three test splits share the unit
/// draws, so they differ only in the relative range.
pub fn split_parameters(
    config: &BuildConfig,
    spec: &EquationSpec,
    split: Split,
    p: usize,
    attempt: u64,
) -> ParameterSet {
    let seed = config.master_seed;
    let range = config.relative_range(split);
    let params = match split {
        Split::Train => {
            let mut rng = purpose_stream(seed, spec.index, StreamPurpose::TrainParams, p as u64, attempt);
            sample_parameters(spec, range, &mut rng)
        }
        _ => {
            let mut rng = purpose_stream(seed, spec.index, StreamPurpose::TestParams, p as u64, attempt);
            let xi: Vec<f64> = spec.continuous_params().map(|_| rng.gen_range(-1.0..=1.0)).collect();
            parameters_from_unit(spec, range, &xi)
        }
    };
    let mut params = with_porous_exponent(spec, params, p);
    params.seed_path = vec![spec.index as u64, split.code() as u64, p as u64, attempt];
    params
}

pub fn split_initial_condition(
    config: &BuildConfig,
    spec: &EquationSpec,
    split: Split,
    p: usize,
    i: usize,
    attempt: u64,
) -> InitialCondition {
    let purpose = match split {
        Split::Train => StreamPurpose::TrainIc,
        _ => StreamPurpose::TestIc,
    };
    let index = ((p as u64) << 32) | i as u64;
    let mut rng = purpose_stream(config.master_seed, spec.index, purpose, index, attempt);
    sample_initial_condition(spec, &mut rng)
}

fn description_choice(config: &BuildConfig, spec: &EquationSpec, split: Split, p: usize, i: usize) -> usize {
    let index = ((split.code() as u64) << 48) | ((p as u64) << 24) | i as u64;
    let mut rng = purpose_stream(config.master_seed, spec.index, StreamPurpose::Description, index, 0);
    rng.gen_range(0..DESCRIPTIONS_PER_FAMILY)
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

struct FamilyOutput {
    bytes: Vec<u8>,
    entry: FamilyEntry,
}

fn build_family(config: &BuildConfig, spec: &EquationSpec) -> Result<FamilyOutput, DatasetError> {
    let texts = generate_descriptions(spec)?;
    let mut bytes = Vec::new();
    let mut splits = Vec::new();
    let mut rejected = Vec::new();
    let mut requested = 0;
    let mut sample = 0u32;
    for split in Split::ALL {
        let (n_params, n_ics) = config.counts(spec, split);
        let offset = bytes.len() as u64;
        requested += n_params * n_ics;
        for p in 0..n_params {
            for i in 0..n_ics {
                let mut attempt = 0;
                let (params, ic, traj) = loop {
                    let params = split_parameters(config, spec, split, p, attempt);
                    let ic = split_initial_condition(config, spec, split, p, i, attempt);
                    match numerics::solve(spec, &params, &ic) {
                        Ok(traj) => break (params, ic, traj),
                        Err(e) => {
                            rejected.push(Rejection {
                                split,
                                param_index: p,
                                ic_index: i,
                                attempt,
                                reason: e.to_string(),
                            });
                            attempt += 1;
                            if attempt == MAX_ATTEMPTS {
                                return Err(DatasetError::Solver {
                                    family: spec.index,
                                    source: e,
                                });
                            }
                        }
                    }
                };
                // Store exactly what the loader will reconstruct from f32.
                let sentence = render_input_sentence(spec, &params, &ic)?;
                let d = description_choice(config, spec, split, p, i);
                let rec = RawRecord {
                    family: spec.index as u16,
                    split: split.code(),
                    ic_kind: ic.kind,
                    sample,
                    description_index: d as u16,
                    params: to_f32(&params.raw()),
                    ic: to_f32(&ic.values),
                    times: to_f32(&traj.times),
                    width: traj.width,
                    values: to_f32(&traj.values),
                    sentence: sentence.text,
                    description: texts.descriptions[d].clone(),
                };
                bytes.extend(format::encode(&rec));
                sample += 1;
            }
        }
        splits.push(SplitEntry {
            split,
            relative_range: config.relative_range(split),
            n_params,
            n_ics,
            offset,
            length: bytes.len() as u64 - offset,
            records: n_params * n_ics,
        });
    }
    if requested > 0 && rejected.len() as f64 > MAX_REJECTION_RATE * requested as f64 {
        return Err(DatasetError::RejectionRate {
            family: spec.index,
            rejected: rejected.len(),
            requested,
        });
    }
    Ok(FamilyOutput {
        bytes,
        entry: FamilyEntry {
            index: spec.index,
            file: family_file(spec.index),
            splits,
            rejected,
        },
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| DatasetError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| DatasetError::io(&tmp, e))?;
    f.sync_all().map_err(|e| DatasetError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| DatasetError::io(path, e))
}

#[cfg(feature = "parallel")]
fn map_families<T: Send>(
    specs: &[&'static EquationSpec],
    f: impl Fn(&EquationSpec) -> Result<T, DatasetError> + Sync,
) -> Result<Vec<T>, DatasetError> {
    use rayon::prelude::*;
    specs.par_iter().map(|s| f(s)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_families<T: Send>(
    specs: &[&'static EquationSpec],
    f: impl Fn(&EquationSpec) -> Result<T, DatasetError> + Sync,
) -> Result<Vec<T>, DatasetError> {
    specs.iter().map(|s| f(s)).collect()
}

/// Generates every family file under `out`, then the vocabulary, then the
/// manifest. The manifest is written last; its absence marks a partial build.
pub fn build_dataset(config: &BuildConfig, out: &Path) -> Result<DatasetManifest, DatasetError> {
    fs::create_dir_all(out).map_err(|e| DatasetError::io(out, e))?;
    let manifest_path = out.join(MANIFEST_FILE);
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(|e| DatasetError::io(&manifest_path, e))?;
    }
    let specs = config.family_specs()?;
    let families = map_families(&specs, |spec| {
        let built = build_family(config, spec)?;
        write_atomic(&out.join(&built.entry.file), &built.bytes)?;
        Ok(built.entry)
    })?;

    let vocab = build_vocab()?;
    write_atomic(&out.join(VOCAB_FILE), vocab.to_json().as_bytes())?;

    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        master_seed: config.master_seed,
        config: config.clone(),
        vocab_file: VOCAB_FILE.to_string(),
        families,
    };
    check_split_hygiene(out, &manifest)?;
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| DatasetError::Manifest(e.to_string()))?;
    write_atomic(&manifest_path, json.as_bytes())?;
    Ok(manifest)
}

/// Fails if any (family, parameters, IC) triple occurs in training and in a
/// test split.
pub fn check_split_hygiene(dir: &Path, manifest: &DatasetManifest) -> Result<(), DatasetError> {
    for fam in &manifest.families {
        let mut owner = std::collections::HashMap::new();
        for split in Split::ALL {
            for r in load_records(dir, manifest, split, Some(fam.index))? {
                let key: (Vec<u32>, Vec<u32>) = (
                    r.params.iter().map(|v| v.to_bits()).collect(),
                    r.ic.iter().map(|v| v.to_bits()).collect(),
                );
                if let Some(&a) = owner.get(&key) {
                    // Test splits share their draws by design; a family without
                    // continuous parameters repeats them exactly.
                    if a != split && (a == Split::Train || split == Split::Train) {
                        return Err(DatasetError::SplitOverlap {
                            family: fam.index,
                            a,
                            b: split,
                        });
                    }
                }
                owner.insert(key, split);
            }
        }
    }
    Ok(())
}
