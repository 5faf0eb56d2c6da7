//! End-to-end driver: dataset → features per method → per-fold training →
//! scoring over the feature-count sweep → report files.
//!
//! The staged entry points (`stage_extract`, `stage_train`, `stage_eval`)
//! persist features and bases and produce the same reports as [`run_all`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::dataset::{generate_synthetic_dataset, load_manifest, make_folds_for, FoldAssignment, PairManifest};
use crate::error::{Error, Result, StageContext};
use crate::eval::{order_outcomes, roc_points, score_fold, split_rows, train_fold, FoldOutcome, Samples, SweepResult};
use crate::gabor::{BlockGrid, FeatureExtractor, FeatureSet, GaborBank};
use crate::io::write_atomic;
use crate::par;
use crate::preprocess::{load_grayscale, preprocess_image, GrayImage, Method};
use crate::txqda::ProjectionBasis;

/// Loads the configured manifest or generates the synthetic dataset.
pub fn prepare_dataset(cfg: &RunConfig) -> Result<PairManifest> {
    match (&cfg.dataset.manifest, &cfg.dataset.synthetic) {
        (Some(path), _) => load_manifest(path),
        (None, Some(spec)) => {
            let dir = cfg
                .dataset
                .synthetic_dir
                .clone()
                .unwrap_or_else(|| cfg.output_dir.join("synthetic"));
            generate_synthetic_dataset(spec, &dir)
        }
        (None, None) => Err(Error::Config("no dataset configured".into())),
    }
}

/// Raw `(parent, child)` images of every manifest row.
pub fn load_pairs(manifest: &PairManifest) -> Result<Vec<(GrayImage, GrayImage)>> {
    par::try_map(&manifest.entries, |e| {
        Ok((
            load_grayscale(&manifest.resolve(&e.parent))?,
            load_grayscale(&manifest.resolve(&e.child))?,
        ))
    })
}

/// Preprocesses with `method` and extracts feature tensors for every pair.
pub fn extract_method(
    cfg: &RunConfig,
    method: Method,
    images: &[(GrayImage, GrayImage)],
    family_ids: &[u64],
) -> Result<FeatureSet> {
    let pcfg = cfg.preprocess.with_method(method);
    let (h, w) = pcfg.crop_size();
    let bank = GaborBank::from_config(&cfg.features)?;
    let grid = BlockGrid::for_counts(h, w, cfg.features.blocks.0, cfg.features.blocks.1)?;
    let extractor = FeatureExtractor::new(&bank, grid, h, w)?;
    let tensors = par::try_map(images, |(p, c)| {
        Ok::<_, Error>((
            extractor.extract(&preprocess_image(p, &pcfg)?)?,
            extractor.extract(&preprocess_image(c, &pcfg)?)?,
        ))
    })?;
    let (parents, children) = tensors.into_iter().unzip();
    FeatureSet::new(method.file_tag(), family_ids.to_vec(), parents, children)
}

fn folds_for(cfg: &RunConfig, set: &FeatureSet) -> Result<FoldAssignment> {
    make_folds_for(&set.family_ids, cfg.eval.k, cfg.eval.seed)
}

fn max_d(cfg: &RunConfig) -> usize {
    *cfg.txqda.d_values().last().expect("d_values is never empty")
}

fn train_method(cfg: &RunConfig, set: &FeatureSet) -> Result<Vec<ProjectionBasis>> {
    let samples = Samples::from_feature_set(set);
    let folds = folds_for(cfg, set)?;
    par::try_map_range(folds.k, |fold| {
        let (train, _) = split_rows(&samples, &folds, fold)?;
        train_fold(&samples, &train, fold, &cfg.txqda, max_d(cfg), &cfg.eval)
    })
}

fn check_basis(set: &FeatureSet, basis: &ProjectionBasis, path: &Path) -> Result<()> {
    let found = basis.input_dims();
    let expected = set.shape().map(|s| s.to_vec()).unwrap_or_default();
    if found != expected {
        return Err(Error::DimMismatch {
            what: format!("projection basis {}", path.display()),
            expected: format!("{expected:?}"),
            found: format!("{found:?}"),
        });
    }
    Ok(())
}

fn score_method(
    cfg: &RunConfig,
    method: Method,
    set: &FeatureSet,
    bases: &[ProjectionBasis],
) -> Result<Vec<FoldOutcome>> {
    let samples = Samples::from_feature_set(set);
    let folds = folds_for(cfg, set)?;
    let d_values = cfg.txqda.d_values();
    let per_fold = par::try_map_range(folds.k, |fold| {
        let (train, test) = split_rows(&samples, &folds, fold)?;
        score_fold(&samples, &bases[fold], (&train, &test), fold, method, &d_values, &cfg.eval)
    })?;
    Ok(order_outcomes(per_fold))
}

/// Everything a run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub sweep: SweepResult,
    pub roc_csv: String,
}

impl RunOutput {
    fn assemble(cfg: &RunConfig, outcomes: Vec<(Method, Vec<FoldOutcome>)>) -> Self {
        let mut rows = Vec::new();
        let mut roc = String::from("method,d,threshold,tpr,fpr\n");
        for (method, outs) in &outcomes {
            for d in cfg.txqda.d_values() {
                let pooled: Vec<_> = outs
                    .iter()
                    .filter(|o| o.row.d == d)
                    .flat_map(|o| o.test_scores.iter().copied())
                    .collect();
                for (t, tpr, fpr) in roc_points(&pooled) {
                    let _ = writeln!(roc, "{},{d},{t},{tpr},{fpr}", method.key());
                }
            }
            rows.extend(outs.iter().map(|o| o.row.clone()));
        }
        Self {
            sweep: SweepResult {
                config_echo: cfg.echo(),
                rows,
            },
            roc_csv: roc,
        }
    }

    /// Writes `report.txt`, `report.csv`, `roc.csv` and `config.toml`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let files = [
            ("report.txt", self.sweep.render_text()),
            ("report.csv", self.sweep.to_csv()),
            ("roc.csv", self.roc_csv.clone()),
            ("config.toml", self.sweep.config_echo.clone()),
        ];
        files
            .into_iter()
            .map(|(name, body)| {
                let p = dir.join(name);
                write_atomic(&p, body.as_bytes())?;
                Ok(p)
            })
            .collect()
    }
}

/// Computes the full sweep in memory and writes the reports.
pub fn run_all(cfg: &RunConfig) -> Result<RunOutput> {
    let out = compute_all(cfg)?;
    out.write(&cfg.output_dir).stage(|| "write reports".into())?;
    Ok(out)
}

/// [`run_all`] without writing anything.
pub fn compute_all(cfg: &RunConfig) -> Result<RunOutput> {
    let (manifest, images) = dataset_stage(cfg)?;
    let families = manifest.family_ids();
    let mut outcomes = Vec::new();
    for &method in &cfg.methods {
        let set = extract_method(cfg, method, &images, &families).stage(|| format!("extract [{method}]"))?;
        let bases = train_method(cfg, &set).stage(|| format!("train [{method}]"))?;
        let scored = score_method(cfg, method, &set, &bases).stage(|| format!("eval [{method}]"))?;
        outcomes.push((method, scored));
    }
    Ok(RunOutput::assemble(cfg, outcomes))
}

fn dataset_stage(cfg: &RunConfig) -> Result<(PairManifest, Vec<(GrayImage, GrayImage)>)> {
    let manifest = prepare_dataset(cfg).stage(|| "dataset".into())?;
    let images = load_pairs(&manifest).stage(|| "load images".into())?;
    Ok((manifest, images))
}

/// Writes one feature set per method; returns the written paths.
pub fn stage_extract(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let (manifest, images) = dataset_stage(cfg)?;
    let families = manifest.family_ids();
    cfg.methods
        .iter()
        .map(|&m| {
            let path = cfg.features_path(m);
            extract_method(cfg, m, &images, &families)
                .and_then(|set| set.save(&path))
                .stage(|| format!("extract [{m}]"))?;
            Ok(path)
        })
        .collect()
}

/// Trains one basis per method and fold from stored feature sets.
pub fn stage_train(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for &m in &cfg.methods {
        let mut run = || -> Result<()> {
            let set = FeatureSet::load(&cfg.features_path(m))?;
            for (fold, basis) in train_method(cfg, &set)?.iter().enumerate() {
                let path = cfg.basis_path(m, fold);
                basis.save(&path)?;
                written.push(path);
            }
            Ok(())
        };
        run().stage(|| format!("train [{m}]"))?;
    }
    Ok(written)
}

/// Scores stored feature sets with stored bases and writes the reports.
pub fn stage_eval(cfg: &RunConfig) -> Result<RunOutput> {
    let mut outcomes = Vec::new();
    for &m in &cfg.methods {
        let run = || -> Result<Vec<FoldOutcome>> {
            let set = FeatureSet::load(&cfg.features_path(m))?;
            let bases = (0..cfg.eval.k)
                .map(|fold| {
                    let path = cfg.basis_path(m, fold);
                    let basis = ProjectionBasis::load(&path)?;
                    check_basis(&set, &basis, &path)?;
                    Ok(basis)
                })
                .collect::<Result<Vec<_>>>()?;
            score_method(cfg, m, &set, &bases)
        };
        outcomes.push((m, run().stage(|| format!("eval [{m}]"))?));
    }
    let out = RunOutput::assemble(cfg, outcomes);
    out.write(&cfg.output_dir).stage(|| "write reports".into())?;
    Ok(out)
}

/// Re-renders the text report from a CSV written by a run.
pub fn render_report(csv_path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
    Ok(SweepResult::from_csv(&text, csv_path)?.render_text())
}
