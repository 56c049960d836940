use std::fs;
use std::path::{Path, PathBuf};

use anchorlab::aligner::Profile;
use anchorlab::eval::{ConditionKind, DEFAULT_KS};
use anchorlab::reconstruct::{GenerationParams, Mode};
use anchorlab::synth::SynthSpec;
use anchorlab::Error;
use serde::{Deserialize, Serialize};

/// Resolved settings of a run. Read from `--config` (or the snapshot left in
/// `--out` by an earlier step), then overridden by flags, then frozen next to
/// the outputs. Secrets never appear here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub profile: Profile,
    pub paths: Paths,
    pub vocab: VocabSection,
    pub synth: SynthSpec,
    pub train: TrainSection,
    pub decode: DecodeSection,
    pub reconstruct: ReconstructSection,
    pub generation: GenerationParams,
    pub endpoint: EndpointSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            profile: Profile::Compact,
            paths: Paths::default(),
            vocab: VocabSection::default(),
            synth: SynthSpec::default(),
            train: TrainSection::default(),
            decode: DecodeSection::default(),
            reconstruct: ReconstructSection::default(),
            generation: GenerationParams::default(),
            endpoint: EndpointSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub word_bank: Option<PathBuf>,
    pub keyword_bank: Option<PathBuf>,
    pub sentence_bank: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub decoded: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub exclusions: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub root_map: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSection {
    pub size: usize,
    pub min_freq: usize,
    pub reserve_fraction: f64,
}

impl Default for VocabSection {
    fn default() -> Self {
        VocabSection {
            size: 100,
            min_freq: 5,
            reserve_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Unset: 1e-3 for the compact profile, 1e-4 for the full one.
    pub learning_rate: Option<f64>,
    /// Unset: 30 for compact, 50 for full.
    pub epochs: Option<usize>,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub tau: f64,
    pub learn_tau: bool,
    pub aux_weight: f64,
    pub aux_noise: f64,
    pub split_ratios: [f64; 3],
    /// Unset: inferred from the first sample in the dataset.
    pub feature_dim: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            learning_rate: None,
            epochs: None,
            batch_size: 32,
            weight_decay: 0.0,
            tau: 0.07,
            learn_tau: false,
            aux_weight: 0.0,
            aux_noise: 0.1,
            split_ratios: [0.8, 0.1, 0.1],
            feature_dim: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSection {
    pub m: usize,
    /// `train`, `val`, `test` or `all`.
    pub part: String,
}

impl Default for DecodeSection {
    fn default() -> Self {
        DecodeSection {
            m: 5,
            part: "test".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructSection {
    pub mode: Mode,
    /// References retrieved for the rag modes.
    pub k: usize,
}

impl Default for ReconstructSection {
    fn default() -> Self {
        ReconstructSection {
            mode: Mode::CotRag,
            k: anchorlab::reconstruct::DEFAULT_K,
        }
    }
}

/// Endpoint settings; the URL and key only ever come from the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointSection {
    pub model: String,
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_s: u64,
    pub concurrency: usize,
    pub embedding_model: String,
}

impl Default for EndpointSection {
    fn default() -> Self {
        let d = anchorlab::reconstruct::EndpointConfig::default();
        EndpointSection {
            model: d.model,
            retries: d.retries,
            backoff_ms: d.backoff_ms,
            timeout_s: d.timeout_s,
            concurrency: d.concurrency,
            embedding_model: "all-mpnet-base-v2".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub ks: Vec<usize>,
    pub ms: Vec<usize>,
    pub modes: Vec<Mode>,
    pub conditions: Vec<ConditionKind>,
    /// `idf`, `sentence-bank` or `remote`.
    pub embedder: String,
    pub n_perm: usize,
    pub perm_k: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            ks: DEFAULT_KS.to_vec(),
            ms: vec![3, 5, 7],
            modes: Mode::ALL.to_vec(),
            conditions: ConditionKind::ALL.to_vec(),
            embedder: "idf".into(),
            n_perm: 500,
            perm_k: 5,
        }
    }
}

pub const SNAPSHOT: &str = "config.toml";

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// `--config` if given, else the snapshot in `out`, else defaults.
    pub fn resolve(explicit: Option<&Path>, out: &Path) -> Result<Self, Error> {
        match explicit {
            Some(p) => Self::load(p),
            None if out.join(SNAPSHOT).exists() => Self::load(&out.join(SNAPSHOT)),
            None => Ok(RunConfig::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Writes the cumulative snapshot and a per-step copy.
    pub fn freeze(&self, out: &Path, step: &str) -> Result<(), Error> {
        let text = self.to_toml();
        for name in [SNAPSHOT.to_string(), format!("{step}.config.toml")] {
            let p = out.join(name);
            fs::write(&p, &text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
        }
        Ok(())
    }

    pub fn learning_rate(&self) -> f64 {
        self.train.learning_rate.unwrap_or(match self.profile {
            Profile::Compact => 1e-3,
            Profile::Full => 1e-4,
        })
    }

    pub fn epochs(&self) -> usize {
        self.train.epochs.unwrap_or(match self.profile {
            Profile::Compact => 30,
            Profile::Full => 50,
        })
    }
}
