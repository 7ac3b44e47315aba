//! Reading records back as model-ready samples.

use std::fs;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::format::{self, RawRecord};
use super::{DatasetError, DatasetManifest, Split};
use crate::catalog::{get_equation, render_input_sentence, EquationSpec, InitialCondition, ParameterSet, SentenceWithSlots};
use crate::rng::{purpose_stream, StreamPurpose};

/// Unified output dimension: the largest ODE state.
pub const D_MAX: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuerySelection {
    All,
    /// Random subset without replacement, reproducible from `seed`.
    Subsample { count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalSample {
    pub family: usize,
    pub split: Split,
    pub sample: u32,
    pub sentence: SentenceWithSlots,
    pub description: String,
    pub description_index: usize,
    pub params: ParameterSet,
    pub ic: InitialCondition,
    pub times: Vec<f64>,
    /// Frame width of the stored trajectory.
    pub width: usize,
    /// Normalized `(t / T, x / L)`; `x` is zero for ODEs.
    pub queries: Vec<[f64; 2]>,
    pub targets: Vec<[f64; D_MAX]>,
    /// Valid output channels; padding channels are false.
    pub mask: [bool; D_MAX],
}

impl MultimodalSample {
    /// Builds a sample from a trajectory `values` of shape `[times x width]`.
    pub fn new(
        spec: &EquationSpec,
        params: ParameterSet,
        ic: InitialCondition,
        times: Vec<f64>,
        values: &[f64],
        description: String,
        description_index: usize,
    ) -> Result<Self, DatasetError> {
        let sentence = render_input_sentence(spec, &params, &ic)?;
        let width = spec.frame_width();
        let horizon = spec.time_horizon;
        let mut queries = Vec::new();
        let mut targets = Vec::new();
        let mut mask = [false; D_MAX];
        if spec.is_ode() {
            mask[..width].iter_mut().for_each(|m| *m = true);
            for (k, &t) in times.iter().enumerate() {
                queries.push([t / horizon, 0.0]);
                let mut y = [0.0; D_MAX];
                y[..width].copy_from_slice(&values[k * width..(k + 1) * width]);
                targets.push(y);
            }
        } else {
            mask[0] = true;
            for (k, &t) in times.iter().enumerate() {
                for j in 0..width {
                    queries.push([t / horizon, j as f64 / width as f64]);
                    let mut y = [0.0; D_MAX];
                    y[0] = values[k * width + j];
                    targets.push(y);
                }
            }
        }
        Ok(Self {
            family: spec.index,
            split: Split::Train,
            sample: 0,
            sentence,
            description,
            description_index,
            params,
            ic,
            times,
            width,
            queries,
            targets,
            mask,
        })
    }

    pub fn channels(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Keeps only the queries at `keep` (indices into `queries`).
    pub fn select_queries(&mut self, keep: &[usize]) {
        self.queries = keep.iter().map(|&i| self.queries[i]).collect();
        self.targets = keep.iter().map(|&i| self.targets[i]).collect();
    }

    pub fn from_record(r: RawRecord) -> Result<Self, DatasetError> {
        let spec = get_equation(r.family as usize)?;
        let params = ParameterSet {
            values: spec
                .params
                .iter()
                .zip(&r.params)
                .map(|(p, &v)| (p.symbol.to_string(), v as f64))
                .collect(),
            relative_range: 0.0,
            seed_path: Vec::new(),
        };
        let ic = InitialCondition::from_values(r.ic_kind, r.ic.iter().map(|&v| v as f64).collect());
        let times = r.times.iter().map(|&v| v as f64).collect();
        let values: Vec<f64> = r.values.iter().map(|&v| v as f64).collect();
        let mut s = Self::new(spec, params, ic, times, &values, r.description, r.description_index as usize)?;
        if s.sentence.text != r.sentence {
            return Err(DatasetError::Manifest(format!(
                "family {} sample {}: stored sentence does not match the catalog",
                r.family, r.sample
            )));
        }
        s.split = Split::from_code(r.split).unwrap_or(Split::Train);
        s.sample = r.sample;
        Ok(s)
    }
}

/// Raw records of one split, optionally restricted to one family.
pub fn load_records(
    dir: &Path,
    manifest: &DatasetManifest,
    split: Split,
    family: Option<usize>,
) -> Result<Vec<RawRecord>, DatasetError> {
    let mut out = Vec::new();
    let mut found = false;
    for fam in manifest.families.iter().filter(|f| family.is_none_or(|i| i == f.index)) {
        let Some(entry) = fam.splits.iter().find(|s| s.split == split) else {
            continue;
        };
        found = true;
        if entry.records == 0 {
            continue;
        }
        let path = dir.join(&fam.file);
        let bytes = fs::read(&path).map_err(|e| DatasetError::io(&path, e))?;
        let corrupt = |offset: u64| DatasetError::CorruptRecord {
            file: fam.file.clone(),
            offset,
        };
        let end = entry.offset + entry.length;
        if end > bytes.len() as u64 {
            return Err(corrupt(bytes.len() as u64));
        }
        let mut pos = entry.offset;
        let before = out.len();
        while pos < end {
            let (rec, n) = format::decode(&bytes[pos as usize..end as usize]).ok_or_else(|| corrupt(pos))?;
            if rec.family as usize != fam.index || rec.split != split.code() {
                return Err(corrupt(pos));
            }
            out.push(rec);
            pos += n as u64;
        }
        if out.len() - before != entry.records {
            return Err(corrupt(pos));
        }
    }
    if !found {
        return Err(DatasetError::MissingSplit(split));
    }
    Ok(out)
}

/// Loads a split as tokenizer-ready samples.
pub fn load_samples(
    dir: &Path,
    manifest: &DatasetManifest,
    split: Split,
    selection: QuerySelection,
) -> Result<Vec<MultimodalSample>, DatasetError> {
    load_records(dir, manifest, split, None)?
        .into_iter()
        .map(|r| {
            let mut s = MultimodalSample::from_record(r)?;
            if let QuerySelection::Subsample { count, seed } = selection {
                let n = s.queries.len();
                if count < n {
                    let mut rng = purpose_stream(
                        seed,
                        s.family,
                        StreamPurpose::QuerySubsample,
                        ((split.code() as u64) << 32) | s.sample as u64,
                        0,
                    );
                    let mut keep = index::sample(&mut rng, n, count).into_vec();
                    keep.sort_unstable();
                    s.select_queries(&keep);
                }
            }
            Ok(s)
        })
        .collect()
}
