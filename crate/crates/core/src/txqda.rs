//! Tensor cross-view quadratic discriminant analysis.
//!
//! Learns one projection matrix per tensor mode from two views (parents and
//! children). For mode `k`, samples are first projected on every other mode
//! with the current matrices, then the intrapersonal scatter `S_I` (positive
//! pair differences) and extrapersonal scatter `S_E` (negative pair
//! differences) of the mode-k unfoldings give the generalized eigenproblem
//! `S_E w = λ (S_I + reg·I) w`, whose leading eigenvectors become `W_k`.
//! Modes are solved in turn; sweeps repeat up to `iteration_max` times or
//! until every `W_k` moves less than `eps_stop · I_k · I'_k` (Frobenius).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledPairSet;
use crate::error::{Error, Result};
use crate::io::{read_file, write_atomic, write_header, ByteReader, ByteWriter};
use crate::par;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TxqdaConfig {
    /// Reduced size per mode; `0` (or a missing trailing entry) keeps the full mode.
    pub target_dims: Vec<usize>,
    pub iteration_max: usize,
    pub eps_stop: f64,
    /// `S_I` is regularized by `reg_scale · trace(S_I) / I_k` on its diagonal.
    pub reg_scale: f64,
    /// Retained features after ranking.
    pub d: usize,
    /// Feature counts evaluated by the experiment driver; empty means `[d]`.
    pub d_sweep: Vec<usize>,
}

impl Default for TxqdaConfig {
    fn default() -> Self {
        Self {
            target_dims: vec![48],
            iteration_max: 2,
            eps_stop: 1e-3,
            reg_scale: 1e-3,
            d: 190,
            d_sweep: (150..=200).step_by(10).collect(),
        }
    }
}

impl TxqdaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iteration_max < 1 {
            return Err(Error::Config("iteration_max must be >= 1".into()));
        }
        if !(self.eps_stop >= 0.0) || !(self.reg_scale >= 0.0) {
            return Err(Error::Config("eps_stop and reg_scale must be >= 0".into()));
        }
        if self.d == 0 || self.d_sweep.contains(&0) {
            return Err(Error::Config("d and every d_sweep entry must be >= 1".into()));
        }
        Ok(())
    }

    /// Sorted, deduplicated feature counts to evaluate.
    pub fn d_values(&self) -> Vec<usize> {
        let mut v = if self.d_sweep.is_empty() {
            vec![self.d]
        } else {
            self.d_sweep.clone()
        };
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Concrete `I'_k` for input dims `dims`.
    pub fn resolve_dims(&self, dims: &[usize]) -> Result<Vec<usize>> {
        if self.target_dims.len() > dims.len() {
            return Err(Error::Config(format!(
                "target_dims {:?} has more modes than the data {dims:?}",
                self.target_dims
            )));
        }
        dims.iter()
            .enumerate()
            .map(|(k, &full)| match self.target_dims.get(k).copied().unwrap_or(0) {
                0 => Ok(full),
                t if t <= full => Ok(t),
                t => Err(Error::Config(format!(
                    "target dim {t} for mode {k} exceeds input dim {full}"
                ))),
            })
            .collect()
    }
}

/// Two-view training samples. Row `i` of each view carries a class label.
#[derive(Debug, Clone)]
pub struct TrainTensors {
    pub parents: Vec<Tensor>,
    pub children: Vec<Tensor>,
    pub parent_labels: Vec<u64>,
    pub child_labels: Vec<u64>,
}

impl TrainTensors {
    pub fn new(
        parents: Vec<Tensor>,
        children: Vec<Tensor>,
        parent_labels: Vec<u64>,
        child_labels: Vec<u64>,
    ) -> Result<Self> {
        if parents.is_empty() || children.is_empty() {
            return Err(Error::InvalidArgument("both views need samples".into()));
        }
        if parents.len() != parent_labels.len() || children.len() != child_labels.len() {
            return Err(Error::InvalidArgument("one label per sample required".into()));
        }
        let shape = parents[0].shape();
        if let Some(t) = parents.iter().chain(&children).find(|t| t.shape() != shape) {
            return Err(Error::DimMismatch {
                what: "training tensor shape".into(),
                expected: format!("{shape:?}"),
                found: format!("{:?}", t.shape()),
            });
        }
        Ok(Self {
            parents,
            children,
            parent_labels,
            child_labels,
        })
    }

    pub fn dims(&self) -> &[usize] {
        self.parents[0].shape()
    }

    fn check_pairs(&self, pairs: &LabeledPairSet) -> Result<()> {
        if pairs.positives.is_empty() || pairs.negatives.is_empty() {
            return Err(Error::InvalidArgument(
                "training needs both positive and negative pairs".into(),
            ));
        }
        for (p, c, kin) in pairs.labeled() {
            if p >= self.parents.len() || c >= self.children.len() {
                return Err(Error::InvalidArgument(format!("pair ({p}, {c}) out of range")));
            }
            if (self.parent_labels[p] == self.child_labels[c]) != kin {
                return Err(Error::Data(format!(
                    "pair ({p}, {c}) labeled {} but families are {} and {}",
                    if kin { "kin" } else { "non-kin" },
                    self.parent_labels[p],
                    self.child_labels[c]
                )));
            }
        }
        Ok(())
    }
}

/// Intrapersonal and extrapersonal scatter of mode `k`:
/// `S = (1/|pairs|) Σ D Dᵀ` with `D = unfold_k(x_p − z_c)`.
pub fn mode_scatter(
    parents: &[Tensor],
    children: &[Tensor],
    pairs: &LabeledPairSet,
    k: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if pairs.positives.is_empty() || pairs.negatives.is_empty() {
        return Err(Error::InvalidArgument(
            "scatter needs non-empty positive and negative pair sets".into(),
        ));
    }
    let xs = par::try_map(parents, |t| t.unfold(k))?;
    let zs = par::try_map(children, |t| t.unfold(k))?;
    let scatter = |list: &[(usize, usize)]| -> Result<DMatrix<f64>> {
        let rows = xs[0].nrows();
        let cols = xs[0].ncols();
        let mut stacked = DMatrix::zeros(rows, cols * list.len());
        for (slot, &(p, c)) in list.iter().enumerate() {
            let (x, z) = (
                xs.get(p).ok_or_else(|| Error::InvalidArgument(format!("parent {p} out of range")))?,
                zs.get(c).ok_or_else(|| Error::InvalidArgument(format!("child {c} out of range")))?,
            );
            stacked.columns_mut(slot * cols, cols).copy_from(&(x - z));
        }
        let mut s = &stacked * stacked.transpose();
        s /= list.len() as f64;
        Ok(symmetrize(s))
    };
    Ok((scatter(&pairs.positives)?, scatter(&pairs.negatives)?))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Leading `dim` solutions of `S_E w = λ (S_I + reg·I) w`, eigenvalues
/// descending. Columns have unit Euclidean norm with their largest-magnitude
/// entry positive.
pub fn solve_gen_eigen(
    s_e: &DMatrix<f64>,
    s_i: &DMatrix<f64>,
    dim: usize,
    reg: f64,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = s_e.nrows();
    if !s_e.is_square() || s_i.shape() != s_e.shape() {
        return Err(Error::DimMismatch {
            what: "scatter matrices".into(),
            expected: format!("{n}x{n}"),
            found: format!("{:?} and {:?}", s_e.shape(), s_i.shape()),
        });
    }
    if dim == 0 || dim > n {
        return Err(Error::InvalidArgument(format!(
            "cannot keep {dim} eigenvectors of a {n}x{n} problem"
        )));
    }
    if s_e.iter().chain(s_i.iter()).any(|v| !v.is_finite()) || !reg.is_finite() {
        return Err(Error::Numeric("scatter matrices contain non-finite values".into()));
    }
    let mut a = symmetrize(s_i.clone());
    for i in 0..n {
        a[(i, i)] += reg;
    }
    let chol = a.cholesky().ok_or_else(|| {
        Error::Numeric("regularized intrapersonal scatter is not positive definite".into())
    })?;
    let l = chol.l();
    // C = L⁻¹ S_E L⁻ᵀ
    let left = l
        .solve_lower_triangular(s_e)
        .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
    let eig = symmetrize(c).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let lt = l.transpose();
    let mut w = DMatrix::zeros(n, dim);
    let mut lambdas = Vec::with_capacity(dim);
    for (col, &idx) in order.iter().take(dim).enumerate() {
        let v = eig.eigenvectors.column(idx).into_owned();
        let mut u = lt
            .solve_upper_triangular(&v)
            .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
        normalize_with_sign(&mut u);
        w.set_column(col, &u);
        lambdas.push(eig.eigenvalues[idx]);
    }
    Ok((w, lambdas))
}

fn normalize_with_sign(u: &mut DVector<f64>) {
    let norm = u.norm();
    if norm > 0.0 {
        *u /= norm;
    }
    let pivot = u
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |best, (i, v)| if v.abs() > best.1.abs() { (i, *v) } else { best });
    if pivot.1 < 0.0 {
        u.neg_mut();
    }
}

/// `‖S_E w − λ (S_I + reg·I) w‖` for each column of `w`.
pub fn gen_eigen_residuals(
    s_e: &DMatrix<f64>,
    s_i: &DMatrix<f64>,
    reg: f64,
    w: &DMatrix<f64>,
    lambdas: &[f64],
) -> Vec<f64> {
    w.column_iter()
        .zip(lambdas)
        .map(|(col, &lam)| {
            let lhs = s_e * col;
            let rhs = (s_i * col + col * reg) * lam;
            (lhs - rhs).norm()
        })
        .collect()
}

/// Trained per-mode projections plus the ranking of projected coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBasis {
    w: Vec<DMatrix<f64>>,
    lambda: Vec<Vec<f64>>,
    feature_rank: Vec<usize>,
    d: usize,
}

impl ProjectionBasis {
    pub fn new(w: Vec<DMatrix<f64>>, lambda: Vec<Vec<f64>>, d: usize) -> Result<Self> {
        let feature_rank = rank_by_eigen_products(&lambda);
        Self::from_parts(w, lambda, feature_rank, d)
    }

    fn from_parts(
        w: Vec<DMatrix<f64>>,
        lambda: Vec<Vec<f64>>,
        feature_rank: Vec<usize>,
        d: usize,
    ) -> Result<Self> {
        if w.is_empty() || w.len() != lambda.len() {
            return Err(Error::InvalidArgument("one eigenvalue vector per mode required".into()));
        }
        for (k, (wk, lk)) in w.iter().zip(&lambda).enumerate() {
            if wk.ncols() == 0 || wk.ncols() > wk.nrows() || lk.len() != wk.ncols() {
                return Err(Error::InvalidArgument(format!(
                    "mode {k}: W is {}x{} with {} eigenvalues",
                    wk.nrows(),
                    wk.ncols(),
                    lk.len()
                )));
            }
            if lk.iter().any(|v| !v.is_finite()) || lk.windows(2).any(|p| p[0] < p[1]) {
                return Err(Error::Numeric(format!(
                    "mode {k}: eigenvalues must be finite and descending"
                )));
            }
        }
        let total: usize = w.iter().map(|m| m.ncols()).product();
        let mut seen = vec![false; total];
        if feature_rank.len() != total
            || feature_rank.iter().any(|&i| i >= total || std::mem::replace(&mut seen[i], true))
        {
            return Err(Error::InvalidArgument(format!(
                "feature rank must be a permutation of 0..{total}"
            )));
        }
        if d == 0 || d > total {
            return Err(Error::InvalidArgument(format!(
                "d = {d} must lie in 1..={total} (product of reduced dims)"
            )));
        }
        Ok(Self {
            w,
            lambda,
            feature_rank,
            d,
        })
    }

    pub fn w(&self) -> &[DMatrix<f64>] {
        &self.w
    }

    pub fn lambda(&self) -> &[Vec<f64>] {
        &self.lambda
    }

    pub fn feature_rank(&self) -> &[usize] {
        &self.feature_rank
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.w.iter().map(|m| m.nrows()).collect()
    }

    pub fn output_dims(&self) -> Vec<usize> {
        self.w.iter().map(|m| m.ncols()).collect()
    }

    pub fn total_features(&self) -> usize {
        self.feature_rank.len()
    }

    /// Same basis keeping `d` features.
    pub fn with_d(&self, d: usize) -> Result<Self> {
        Self::from_parts(self.w.clone(), self.lambda.clone(), self.feature_rank.clone(), d)
    }

    /// `t ×₁ W₁ᵀ … ×_N W_Nᵀ`, flattened, reordered by rank and truncated to `d`.
    pub fn project(&self, t: &Tensor) -> Result<Vec<f64>> {
        let dims = self.input_dims();
        if t.shape() != dims.as_slice() {
            return Err(Error::DimMismatch {
                what: "tensor dims for projection".into(),
                expected: format!("{dims:?}"),
                found: format!("{:?}", t.shape()),
            });
        }
        let bases: Vec<Option<&DMatrix<f64>>> = self.w.iter().map(Some).collect();
        let y = t.project_modes(&bases)?;
        Ok(self.feature_rank[..self.d].iter().map(|&i| y.data()[i]).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = ByteWriter::new();
        write_header(&mut out, BASIS_MAGIC, BASIS_VERSION);
        out.u32(self.w.len() as u32);
        for (w, l) in self.w.iter().zip(&self.lambda) {
            out.u32(w.nrows() as u32);
            out.u32(w.ncols() as u32);
            out.f64s(w.as_slice());
            out.f64s(l);
        }
        out.u64(self.feature_rank.len() as u64);
        for &i in &self.feature_rank {
            out.u64(i as u64);
        }
        out.u64(self.d as u64);
        out.into_inner()
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(path, bytes);
        r.header(BASIS_MAGIC, BASIS_VERSION)?;
        let modes = r.u32()? as usize;
        let mut w = Vec::with_capacity(modes);
        let mut lambda = Vec::with_capacity(modes);
        for _ in 0..modes {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            w.push(DMatrix::from_vec(rows, cols, r.f64s(rows * cols)?));
            lambda.push(r.f64s(cols)?);
        }
        let len = r.u64()? as usize;
        let total: usize = w.iter().map(|m| m.ncols()).product();
        if len != total {
            return Err(r.err(format!("feature rank has {len} entries, expected {total}")));
        }
        let mut rank = Vec::with_capacity(len);
        for _ in 0..len {
            rank.push(r.u64()? as usize);
        }
        let d = r.u64()? as usize;
        r.finish()?;
        Self::from_parts(w, lambda, rank, d).map_err(|e| r.err(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(path, &read_file(path)?)
    }
}

/// Basis file (`.kvpb`), little-endian:
///
/// ```text
/// "KVPB" | version u32 = 1 | endian tag u32 = 0x01020304 | modes u32
/// per mode: I_k u32 | I'_k u32 | W_k f64×(I_k·I'_k) column-major | Λ_k f64×I'_k
/// rank length u64 | rank u64×length | d u64
/// ```
const BASIS_MAGIC: &[u8; 4] = b"KVPB";
const BASIS_VERSION: u32 = 1;

/// Flat indices (first mode fastest) sorted by `Π_k Λ_k[i_k]`, descending;
/// ties keep index order.
pub fn rank_by_eigen_products(lambda: &[Vec<f64>]) -> Vec<usize> {
    let dims: Vec<usize> = lambda.iter().map(Vec::len).collect();
    let products = Tensor::from_fn(&dims, |idx| {
        idx.iter().zip(lambda).map(|(&i, l)| l[i]).product()
    });
    let vals = products.data();
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    order
}

/// Per-sweep diagnostics from training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub sweeps: usize,
    pub converged: bool,
    /// `‖W_k^iter − W_k^{iter−1}‖_F` per sweep and mode.
    pub deltas: Vec<Vec<f64>>,
    /// Largest generalized-eigen residual over every solve.
    pub max_residual: f64,
}

pub fn train_txqda(data: &TrainTensors, pairs: &LabeledPairSet, cfg: &TxqdaConfig) -> Result<ProjectionBasis> {
    Ok(train_txqda_logged(data, pairs, cfg)?.0)
}

pub fn train_txqda_logged(
    data: &TrainTensors,
    pairs: &LabeledPairSet,
    cfg: &TxqdaConfig,
) -> Result<(ProjectionBasis, TrainLog)> {
    cfg.validate()?;
    data.check_pairs(pairs)?;
    let dims = data.dims().to_vec();
    let target = cfg.resolve_dims(&dims)?;
    let total: usize = target.iter().product();
    if cfg.d > total {
        return Err(Error::Config(format!(
            "d = {} exceeds the {total} features of the reduced tensor {target:?}",
            cfg.d
        )));
    }
    let n_modes = dims.len();
    let mut w: Vec<DMatrix<f64>> = dims
        .iter()
        .zip(&target)
        .map(|(&n, &t)| DMatrix::identity(n, t))
        .collect();
    let mut lambda: Vec<Vec<f64>> = target.iter().map(|&t| vec![1.0; t]).collect();
    let mut log = TrainLog {
        sweeps: 0,
        converged: false,
        deltas: Vec::new(),
        max_residual: 0.0,
    };

    for _ in 0..cfg.iteration_max {
        let previous = w.clone();
        for k in 0..n_modes {
            let bases: Vec<Option<&DMatrix<f64>>> = w
                .iter()
                .enumerate()
                .map(|(j, m)| (j != k).then_some(m))
                .collect();
            let xp = par::try_map(&data.parents, |t| t.project_modes(&bases))?;
            let zp = par::try_map(&data.children, |t| t.project_modes(&bases))?;
            let (s_i, s_e) = mode_scatter(&xp, &zp, pairs, k)?;
            if s_e.iter().all(|&v| v == 0.0) {
                return Err(Error::DegenerateScatter { mode: k });
            }
            let reg = regularization(&s_i, &s_e, cfg.reg_scale);
            let (wk, lk) = solve_gen_eigen(&s_e, &s_i, target[k], reg)?;
            let worst = gen_eigen_residuals(&s_e, &s_i, reg, &wk, &lk)
                .into_iter()
                .fold(0.0, f64::max);
            log.max_residual = log.max_residual.max(worst);
            w[k] = wk;
            lambda[k] = lk;
        }
        log.sweeps += 1;
        let deltas: Vec<f64> = w.iter().zip(&previous).map(|(a, b)| (a - b).norm()).collect();
        let converged = deltas
            .iter()
            .zip(dims.iter().zip(&target))
            .all(|(&delta, (&n, &t))| delta < cfg.eps_stop * (n * t) as f64);
        log.deltas.push(deltas);
        if converged {
            log.converged = true;
            break;
        }
    }
    let basis = ProjectionBasis::new(w, lambda, cfg.d)?;
    Ok((basis, log))
}

/// `reg_scale · trace(S_I) / I_k`, falling back to `S_E`'s trace when the
/// intrapersonal scatter vanishes.
fn regularization(s_i: &DMatrix<f64>, s_e: &DMatrix<f64>, scale: f64) -> f64 {
    let n = s_i.nrows() as f64;
    let t = s_i.trace();
    let base = if t > 0.0 { t } else { s_e.trace() };
    scale * base / n
}
