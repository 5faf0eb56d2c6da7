//! Run configuration: a TOML file, defaults for every field, and CLI overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::SynthSpec;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::gabor::BankConfig;
use crate::preprocess::{Method, PreprocConfig};
use crate::txqda::TxqdaConfig;

/// Where pairs come from. Exactly one of `manifest` and `synthetic` may be
/// set; with neither, a default synthetic dataset is generated.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub manifest: Option<PathBuf>,
    pub synthetic: Option<SynthSpec>,
    /// Directory for generated images; defaults to `<output_dir>/synthetic`.
    pub synthetic_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Preprocessing variants to compare; each overrides the
    /// `enable_retinex`/`enable_mask` flags of `[preprocess]`.
    pub methods: Vec<Method>,
    pub dataset: DatasetConfig,
    pub preprocess: PreprocConfig,
    pub features: BankConfig,
    pub txqda: TxqdaConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("kinship_out"),
            methods: Method::ALL.to_vec(),
            dataset: DatasetConfig::default(),
            preprocess: PreprocConfig::default(),
            features: BankConfig::default(),
            txqda: TxqdaConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub methods: Option<Vec<Method>>,
    pub d_sweep: Option<Vec<usize>>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfig {
    /// Parses TOML; relative paths stay relative.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.output_dir);
        if let Some(m) = cfg.dataset.manifest.as_mut() {
            rebase(m);
        }
        if let Some(d) = cfg.dataset.synthetic_dir.as_mut() {
            rebase(d);
        }
        Ok(cfg)
    }

    /// `load(path)` or the defaults, then overrides, then validation.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.finalize()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(m) = &o.manifest {
            self.dataset.manifest = Some(m.clone());
            self.dataset.synthetic = None;
        }
        if let Some(m) = &o.methods {
            self.methods = m.clone();
        }
        if let Some(d) = &o.d_sweep {
            self.txqda.d_sweep = d.clone();
        }
        if let Some(k) = o.k {
            self.eval.k = k;
        }
        if let Some(s) = o.seed {
            self.eval.seed = s;
        }
    }

    /// Fills implied values so the echo lists every effective parameter, then validates.
    pub fn finalize(&mut self) -> Result<()> {
        if self.dataset.manifest.is_none() {
            self.dataset.synthetic.get_or_insert_with(SynthSpec::default);
            self.dataset
                .synthetic_dir
                .get_or_insert_with(|| self.output_dir.join("synthetic"));
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let ds = &self.dataset;
        if ds.manifest.is_some() && ds.synthetic.is_some() {
            return Err(Error::Config(
                "dataset: set either manifest or synthetic, not both".into(),
            ));
        }
        if let Some(s) = &ds.synthetic {
            s.validate().map_err(|e| Error::Config(format!("dataset.synthetic: {e}")))?;
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::Config("methods contains duplicates".into()));
        }
        self.preprocess.validate()?;
        self.features.validate()?;
        self.txqda.validate()?;
        self.eval.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    /// Effective configuration without the output directory, so reports from
    /// the same run settings compare byte-for-byte wherever they are written.
    pub fn echo(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::from(".");
        c.to_toml()
    }

    pub fn features_dir(&self) -> PathBuf {
        self.output_dir.join("features")
    }

    pub fn bases_dir(&self) -> PathBuf {
        self.output_dir.join("bases")
    }

    pub fn features_path(&self, method: Method) -> PathBuf {
        self.features_dir().join(format!("features_{}.kvfs", method.file_tag()))
    }

    pub fn basis_path(&self, method: Method, fold: usize) -> PathBuf {
        self.bases_dir()
            .join(format!("basis_{}_fold{fold}.kvpb", method.file_tag()))
    }
}
