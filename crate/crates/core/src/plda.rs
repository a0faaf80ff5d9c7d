//! Two-covariance PLDA: `e = μ + y + ε` with speaker latent `y ~ N(0, Σ_b)`
//! and residual `ε ~ N(0, Σ_w)`, trained by EM and scored with the
//! same-speaker / different-speaker log-likelihood ratio.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_reg, from_rows, inverse, logdet, outer, symmetrize, to_rows};

/// Centering and optional length normalization applied before PLDA.
#[derive(Debug, Clone, PartialEq)]
pub struct Preproc {
    pub center_mean: DVector<f64>,
    pub length_norm: bool,
}

impl Preproc {
    pub fn identity(d: usize) -> Self {
        Self {
            center_mean: DVector::zeros(d),
            length_norm: false,
        }
    }

    pub fn fit(embeddings: &[DVector<f64>], length_norm: bool) -> Result<Self> {
        let first = embeddings
            .first()
            .ok_or_else(|| Error::Precondition("preprocessing needs at least one embedding".into()))?;
        let d = first.len();
        let mut sum = DVector::zeros(d);
        for e in embeddings {
            check_dim(e, d)?;
            sum += e;
        }
        Ok(Self {
            center_mean: sum / embeddings.len() as f64,
            length_norm,
        })
    }

    pub fn apply(&self, e: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(e, self.center_mean.len())?;
        let c = e - &self.center_mean;
        if !self.length_norm {
            return Ok(c);
        }
        let norm = c.norm();
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let k = (c.len() as f64).sqrt() / norm;
        Ok(c * k)
    }
}

/// Fits preprocessing on `embeddings` and applies it to each of them.
pub fn preprocess(embeddings: &[DVector<f64>], length_norm: bool) -> Result<(Vec<DVector<f64>>, Preproc)> {
    let p = Preproc::fit(embeddings, length_norm)?;
    let out = embeddings.iter().map(|e| p.apply(e)).collect::<Result<_>>()?;
    Ok((out, p))
}

fn check_dim(e: &DVector<f64>, d: usize) -> Result<()> {
    if e.len() != d {
        return Err(Error::ShapeMismatch {
            expected: format!("dimension {d}"),
            found: format!("{}", e.len()),
        });
    }
    Ok(())
}

/// Embeddings grouped by speaker, already preprocessed.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    speakers: Vec<(String, Vec<DVector<f64>>)>,
    dim: usize,
}

impl TrainingSet {
    pub fn new(speakers: Vec<(String, Vec<DVector<f64>>)>) -> Result<Self> {
        if speakers.len() < 2 {
            return Err(Error::Precondition(format!(
                "PLDA training needs at least 2 speakers, got {}",
                speakers.len()
            )));
        }
        if speakers.iter().any(|(_, v)| v.is_empty()) {
            return Err(Error::Precondition("speaker without embeddings".into()));
        }
        if !speakers.iter().any(|(_, v)| v.len() >= 2) {
            return Err(Error::Precondition(
                "PLDA training needs a speaker with at least 2 embeddings".into(),
            ));
        }
        let dim = speakers[0].1[0].len();
        for (_, v) in &speakers {
            for e in v {
                check_dim(e, dim)?;
                if e.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("training embedding".into()));
                }
            }
        }
        Ok(Self { speakers, dim })
    }

    /// Groups `(speaker, embedding)` pairs, speakers in first-seen order.
    pub fn from_labeled(items: impl IntoIterator<Item = (String, DVector<f64>)>) -> Result<Self> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: BTreeMap<String, Vec<DVector<f64>>> = BTreeMap::new();
        for (spk, e) in items {
            let g = groups.entry(spk.clone()).or_default();
            if g.is_empty() {
                order.push(spk);
            }
            g.push(e);
        }
        let speakers = order
            .into_iter()
            .map(|s| {
                let v = groups.remove(&s).unwrap_or_default();
                (s, v)
            })
            .collect();
        Self::new(speakers)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn speakers(&self) -> &[(String, Vec<DVector<f64>>)] {
        &self.speakers
    }

    pub fn n_embeddings(&self) -> usize {
        self.speakers.iter().map(|(_, v)| v.len()).sum()
    }
}

/// Matrices for the closed-form log-likelihood ratio. With total covariance
/// `T = Σ_b + Σ_w`, the same-speaker joint precision is `[[A, G], [G, A]]`
/// where `A = (T − Σ_b T⁻¹ Σ_b)⁻¹` and `G = −T⁻¹ Σ_b A`.
#[derive(Debug, Clone, PartialEq)]
struct LlrTerms {
    /// `A − T⁻¹`
    quad: DMatrix<f64>,
    cross: DMatrix<f64>,
    constant: f64,
}

impl LlrTerms {
    fn new(sigma_b: &DMatrix<f64>, sigma_w: &DMatrix<f64>) -> Result<Self> {
        let total = sigma_b + sigma_w;
        let total_chol = cholesky_reg(&total, "total covariance Σ_b + Σ_w")?;
        let total_inv = inverse(&total_chol);
        let schur = symmetrize(&(&total - sigma_b * &total_inv * sigma_b));
        let schur_chol = cholesky_reg(&schur, "same-speaker conditional covariance")?;
        let a = inverse(&schur_chol);
        let cross = symmetrize(&(-(&total_inv * sigma_b * &a)));
        Ok(Self {
            quad: &a - &total_inv,
            cross,
            constant: -0.5 * (logdet(&schur_chol) - logdet(&total_chol)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PldaModel {
    mu: DVector<f64>,
    sigma_b: DMatrix<f64>,
    sigma_w: DMatrix<f64>,
    preproc: Preproc,
    terms: LlrTerms,
}

impl PldaModel {
    pub fn new(mu: DVector<f64>, sigma_b: DMatrix<f64>, sigma_w: DMatrix<f64>, preproc: Preproc) -> Result<Self> {
        let d = mu.len();
        for (name, m) in [("sigma_b", &sigma_b), ("sigma_w", &sigma_w)] {
            if m.shape() != (d, d) {
                return Err(Error::ShapeMismatch {
                    expected: format!("{name} {d}x{d}"),
                    found: format!("{}x{}", m.nrows(), m.ncols()),
                });
            }
            let scale = m.amax().max(1.0);
            if (m - m.transpose()).amax() > 1e-9 * scale {
                return Err(Error::InvalidConfig(format!("{name} is not symmetric")));
            }
            let min_eig = SymmetricEigen::new(symmetrize(m)).eigenvalues.min();
            if min_eig < -1e-9 * scale {
                return Err(Error::Singular(format!(
                    "{name} is not positive semi-definite (min eigenvalue {min_eig:e})"
                )));
            }
        }
        if nalgebra::Cholesky::new(symmetrize(&sigma_w)).is_none() {
            return Err(Error::Singular("sigma_w is not positive definite".into()));
        }
        check_dim(&preproc.center_mean, d)?;
        let sigma_b = symmetrize(&sigma_b);
        let sigma_w = symmetrize(&sigma_w);
        let terms = LlrTerms::new(&sigma_b, &sigma_w)?;
        Ok(Self {
            mu,
            sigma_b,
            sigma_w,
            preproc,
            terms,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma_b(&self) -> &DMatrix<f64> {
        &self.sigma_b
    }

    pub fn sigma_w(&self) -> &DMatrix<f64> {
        &self.sigma_w
    }

    pub fn preproc(&self) -> &Preproc {
        &self.preproc
    }

    pub fn with_preproc(self, preproc: Preproc) -> Result<Self> {
        check_dim(&preproc.center_mean, self.dim())?;
        Ok(Self { preproc, ..self })
    }

    /// Log-likelihood ratio `log p(a, b | same) − log p(a, b | different)` of
    /// two preprocessed embeddings. Exactly symmetric in its arguments.
    pub fn score(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
        check_dim(a, self.dim())?;
        check_dim(b, self.dim())?;
        let (a, b) = (a - &self.mu, b - &self.mu);
        let qa = a.dot(&(&self.terms.quad * &a));
        let qb = b.dot(&(&self.terms.quad * &b));
        let ab = a.dot(&(&self.terms.cross * &b));
        let ba = b.dot(&(&self.terms.cross * &a));
        Ok(self.terms.constant - 0.5 * (qa + qb) - 0.5 * (ab + ba))
    }

    /// Applies the model's preprocessing to raw embeddings, then scores.
    pub fn score_raw(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
        self.score(&self.preproc.apply(a)?, &self.preproc.apply(b)?)
    }

    pub fn to_json(&self) -> String {
        let file = PldaFile {
            mu: self.mu.iter().copied().collect(),
            sigma_b: to_rows(&self.sigma_b),
            sigma_w: to_rows(&self.sigma_w),
            center_mean: self.preproc.center_mean.iter().copied().collect(),
            length_norm: self.preproc.length_norm,
        };
        let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: PldaFile = serde_json::from_str(text)?;
        Self::new(
            DVector::from_vec(f.mu),
            from_rows(&f.sigma_b, "sigma_b")?,
            from_rows(&f.sigma_w, "sigma_w")?,
            Preproc {
                center_mean: DVector::from_vec(f.center_mean),
                length_norm: f.length_norm,
            },
        )
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PldaFile {
    mu: Vec<f64>,
    sigma_b: Vec<Vec<f64>>,
    sigma_w: Vec<Vec<f64>>,
    center_mean: Vec<f64>,
    length_norm: bool,
}

// ---------------------------------------------------------------------------
// EM training

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PldaConfig {
    pub iterations: usize,
    pub center: bool,
    pub length_norm: bool,
}

impl Default for PldaConfig {
    fn default() -> Self {
        Self {
            iterations: 20,
            center: true,
            length_norm: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PldaFit {
    pub model: PldaModel,
    /// Total log-likelihood of the training data at the initial parameters.
    pub initial_loglik: f64,
    /// Total log-likelihood after each EM iteration.
    pub loglik_trace: Vec<f64>,
}

struct Params {
    mu: DVector<f64>,
    b: DMatrix<f64>,
    w: DMatrix<f64>,
}

/// Speaker posterior `y | x_1..x_n ~ N(mean, cov)` with the log marginal
/// likelihood of that speaker's embeddings.
struct Posterior {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    loglik: f64,
}

fn posteriors(data: &TrainingSet, p: &Params) -> Result<Vec<Posterior>> {
    let d = data.dim() as f64;
    let w_chol = cholesky_reg(&p.w, "within-speaker covariance Σ_w")?;
    let b_chol = cholesky_reg(&p.b, "between-speaker covariance Σ_b")?;
    let (w_inv, b_inv) = (inverse(&w_chol), inverse(&b_chol));
    let (w_logdet, b_logdet) = (logdet(&w_chol), logdet(&b_chol));

    // posterior covariance depends only on the utterance count
    let mut by_count: BTreeMap<usize, (DMatrix<f64>, f64)> = BTreeMap::new();
    let mut out = Vec::with_capacity(data.speakers().len());
    for (_, xs) in data.speakers() {
        let n = xs.len();
        if let Entry::Vacant(slot) = by_count.entry(n) {
            let prec = &b_inv + &w_inv * n as f64;
            let chol = cholesky_reg(&prec, "speaker posterior precision")?;
            slot.insert((inverse(&chol), -logdet(&chol)));
        }
        let (cov, cov_logdet) = &by_count[&n];
        let centered: Vec<DVector<f64>> = xs.iter().map(|x| x - &p.mu).collect();
        let sum = centered.iter().fold(DVector::zeros(p.mu.len()), |acc, z| acc + z);
        let mean = cov * (&w_inv * sum);

        // log p(x) = Σ log N(x_i; μ + m, Σ_w) + log N(m; 0, Σ_b) − log N(m; m, C)
        let resid: f64 = centered
            .iter()
            .map(|z| {
                let r = z - &mean;
                r.dot(&(&w_inv * &r))
            })
            .sum();
        let loglik = -0.5 * (n as f64 * (d * (2.0 * PI).ln() + w_logdet) + resid)
            - 0.5 * (b_logdet + mean.dot(&(&b_inv * &mean)))
            + 0.5 * cov_logdet;
        out.push(Posterior {
            mean,
            cov: cov.clone(),
            loglik,
        });
    }
    Ok(out)
}

/// Total log marginal likelihood of the training data under a model.
pub fn log_likelihood(
    data: &TrainingSet,
    mu: &DVector<f64>,
    sigma_b: &DMatrix<f64>,
    sigma_w: &DMatrix<f64>,
) -> Result<f64> {
    let p = Params {
        mu: mu.clone(),
        b: sigma_b.clone(),
        w: sigma_w.clone(),
    };
    Ok(posteriors(data, &p)?.iter().map(|q| q.loglik).sum())
}

fn initial_params(data: &TrainingSet) -> Params {
    let d = data.dim();
    let n = data.n_embeddings() as f64;
    let s = data.speakers().len() as f64;
    let mut mu = DVector::zeros(d);
    for (_, xs) in data.speakers() {
        for x in xs {
            mu += x;
        }
    }
    mu /= n;
    let mut within = DMatrix::zeros(d, d);
    let mut between = DMatrix::zeros(d, d);
    for (_, xs) in data.speakers() {
        let mean = xs.iter().fold(DVector::zeros(d), |a, x| a + x) / xs.len() as f64;
        for x in xs {
            within += outer(&(x - &mean));
        }
        between += outer(&(&mean - &mu));
    }
    Params {
        mu,
        b: between / s,
        w: within / n,
    }
}

fn m_step(data: &TrainingSet, post: &[Posterior]) -> Params {
    let d = data.dim();
    let n = data.n_embeddings() as f64;
    let s = data.speakers().len() as f64;

    let mut mu = DVector::zeros(d);
    for ((_, xs), q) in data.speakers().iter().zip(post) {
        for x in xs {
            mu += x - &q.mean;
        }
    }
    mu /= n;

    let mut b = DMatrix::zeros(d, d);
    let mut w = DMatrix::zeros(d, d);
    for ((_, xs), q) in data.speakers().iter().zip(post) {
        b += &q.cov + outer(&q.mean);
        for x in xs {
            w += outer(&(x - &mu - &q.mean));
        }
        w += &q.cov * xs.len() as f64;
    }
    Params {
        mu,
        b: symmetrize(&(b / s)),
        w: symmetrize(&(w / n)),
    }
}

/// Runs exactly `iterations` EM iterations from the scatter-matrix
/// initialization. Input embeddings are used as given; the returned model
/// carries an identity preprocessing.
pub fn train_plda(data: &TrainingSet, iterations: usize) -> Result<PldaFit> {
    let mut params = initial_params(data);
    let mut post = posteriors(data, &params)?;
    let initial_loglik: f64 = post.iter().map(|q| q.loglik).sum();
    let mut trace = Vec::with_capacity(iterations);
    for it in 0..iterations {
        params = m_step(data, &post);
        post = posteriors(data, &params)?;
        let ll: f64 = post.iter().map(|q| q.loglik).sum();
        if !ll.is_finite() {
            return Err(Error::NonFinite(format!("PLDA log-likelihood at iteration {}", it + 1)));
        }
        trace.push(ll);
    }
    let model = PldaModel::new(params.mu, params.b, params.w, Preproc::identity(data.dim()))?;
    Ok(PldaFit {
        model,
        initial_loglik,
        loglik_trace: trace,
    })
}

/// Preprocesses raw labeled embeddings per `cfg`, trains, and attaches the
/// fitted preprocessing to the model.
pub fn fit_plda(labeled: &[(String, DVector<f64>)], cfg: &PldaConfig) -> Result<PldaFit> {
    let raw: Vec<DVector<f64>> = labeled.iter().map(|(_, e)| e.clone()).collect();
    let mut pre = Preproc::fit(&raw, cfg.length_norm)?;
    if !cfg.center {
        pre.center_mean.fill(0.0);
    }
    let items = labeled
        .iter()
        .map(|(s, e)| Ok((s.clone(), pre.apply(e)?)))
        .collect::<Result<Vec<_>>>()?;
    let data = TrainingSet::from_labeled(items)?;
    let mut fit = train_plda(&data, cfg.iterations)?;
    fit.model = fit.model.with_preproc(pre)?;
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_model() -> PldaModel {
        PldaModel::new(
            DVector::from_element(1, 0.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            Preproc::identity(1),
        )
        .unwrap()
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn one_dimensional_worked_values() {
        let m = unit_model();
        // closed-form bivariate Gaussians, evaluated independently
        assert!((m.score(&v(&[0.0]), &v(&[0.0])).unwrap() - 0.5 * (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((m.score(&v(&[1.0]), &v(&[1.0])).unwrap() - 0.3105077028925569).abs() < 1e-12);
        assert!((m.score(&v(&[1.0]), &v(&[-1.0])).unwrap() + 0.35615896377410916).abs() < 1e-12);
    }

    #[test]
    fn identity_alignment_is_monotone() {
        let m = unit_model();
        let mut prev_same = f64::NEG_INFINITY;
        let mut prev_opp = f64::INFINITY;
        for i in 0..20 {
            let x = 0.25 * i as f64;
            let same = m.score(&v(&[x]), &v(&[x])).unwrap();
            let opp = m.score(&v(&[x]), &v(&[-x])).unwrap();
            if i > 0 {
                assert!(same > prev_same && opp < prev_opp);
            }
            prev_same = same;
            prev_opp = opp;
        }
    }

    #[test]
    fn preprocessing_cases() {
        let (out, p) = preprocess(&[v(&[1.0, 1.0]), v(&[-1.0, -1.0])], false).unwrap();
        assert_eq!(p.center_mean, v(&[0.0, 0.0]));
        assert_eq!(out[0], v(&[1.0, 1.0]));

        let ln = Preproc {
            center_mean: v(&[0.0, 0.0]),
            length_norm: true,
        };
        let y = ln.apply(&v(&[3.0, 4.0])).unwrap();
        let s2 = 2f64.sqrt();
        assert!((y - v(&[0.6 * s2, 0.8 * s2])).amax() < 1e-15);

        let shift = Preproc {
            center_mean: v(&[1.0, 2.0]),
            length_norm: false,
        };
        assert_eq!(shift.apply(&v(&[4.0, 4.0])).unwrap(), v(&[3.0, 2.0]));
        assert!(matches!(ln.apply(&v(&[0.0, 0.0])), Err(Error::ZeroNorm)));
        assert!(preprocess(&[], true).is_err());
    }

    #[test]
    fn training_set_preconditions() {
        let one_speaker = vec![("a".to_string(), vec![v(&[1.0]), v(&[2.0]), v(&[3.0])])];
        assert!(TrainingSet::new(one_speaker).is_err());
        let singletons = vec![("a".to_string(), vec![v(&[1.0])]), ("b".to_string(), vec![v(&[2.0])])];
        assert!(TrainingSet::new(singletons).is_err());
    }

    #[test]
    fn model_validation() {
        let not_pd = PldaModel::new(
            v(&[0.0, 0.0]),
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            Preproc::identity(2),
        );
        assert!(matches!(not_pd, Err(Error::Singular(_))));
        let asym = PldaModel::new(
            v(&[0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
            DMatrix::identity(2, 2),
            Preproc::identity(2),
        );
        assert!(asym.is_err());
        let m = unit_model();
        assert!(m.score(&v(&[0.0, 1.0]), &v(&[0.0])).is_err());
    }

    #[test]
    fn zero_between_covariance_scores_zero() {
        let m = PldaModel::new(
            v(&[0.0, 0.0]),
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            Preproc::identity(2),
        )
        .unwrap();
        assert!(m.score(&v(&[1.0, -3.0]), &v(&[0.5, 2.0])).unwrap().abs() < 1e-15);
    }

    #[test]
    fn json_roundtrip() {
        let m = unit_model();
        let text = m.to_json();
        assert!(text.contains("\"center_mean\""));
        let back = PldaModel::from_json(&text).unwrap();
        assert_eq!(back.to_json(), text);
        assert!(PldaModel::from_json("{\"mu\":[0]}").is_err());
    }

    /// Brute-force marginal likelihood of one speaker: stack its n embeddings
    /// into an nd vector with covariance I⊗Σ_w + 11ᵀ⊗Σ_b.
    fn stacked_loglik(xs: &[DVector<f64>], mu: &DVector<f64>, b: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
        let (n, d) = (xs.len(), mu.len());
        let cov = DMatrix::from_fn(n * d, n * d, |i, j| {
            let (bi, bj) = (i / d, j / d);
            let v = b[(i % d, j % d)];
            if bi == bj {
                v + w[(i % d, j % d)]
            } else {
                v
            }
        });
        let z = DVector::from_fn(n * d, |i, _| xs[i / d][i % d] - mu[i % d]);
        let chol = nalgebra::Cholesky::new(cov).unwrap();
        let sol = chol.solve(&z);
        -0.5 * ((n * d) as f64 * (2.0 * PI).ln() + logdet(&chol) + z.dot(&sol))
    }

    #[test]
    fn loglik_matches_stacked_gaussian() {
        let xs_a = vec![v(&[0.3, -1.0]), v(&[1.2, 0.4]), v(&[-0.5, 0.9])];
        let xs_b = vec![v(&[2.0, 1.0])];
        let data = TrainingSet::new(vec![("a".into(), xs_a.clone()), ("b".into(), xs_b.clone())]).unwrap();
        let mu = v(&[0.1, -0.2]);
        let b = DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 0.8]);
        let w = DMatrix::from_row_slice(2, 2, &[0.7, -0.1, -0.1, 0.4]);
        let fast = log_likelihood(&data, &mu, &b, &w).unwrap();
        let slow = stacked_loglik(&xs_a, &mu, &b, &w) + stacked_loglik(&xs_b, &mu, &b, &w);
        assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
    }

    #[test]
    fn em_runs_requested_iterations_monotonically() {
        let data = TrainingSet::new(vec![
            ("a".into(), vec![v(&[1.0, 0.2]), v(&[1.3, -0.1]), v(&[0.8, 0.4])]),
            ("b".into(), vec![v(&[-1.0, 0.5]), v(&[-0.7, 0.1])]),
            ("c".into(), vec![v(&[0.1, -1.2]), v(&[0.3, -0.8]), v(&[-0.2, -1.0])]),
        ])
        .unwrap();
        let fit = train_plda(&data, 7).unwrap();
        assert_eq!(fit.loglik_trace.len(), 7);
        let mut prev = fit.initial_loglik;
        for &ll in &fit.loglik_trace {
            assert!(ll - prev >= -1e-8, "{prev} -> {ll}");
            prev = ll;
        }
    }
}
