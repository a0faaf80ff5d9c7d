use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::augment::Source;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AamOutput {
    pub loss: f64,
    pub grad_embedding: DVector<f64>,
    /// Gradient w.r.t. the (un-normalized) class weight rows.
    pub grad_weights: DMatrix<f64>,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Additive angular margin softmax loss for one embedding.
///
/// Logits are `s·cos θ_j` for the other classes and `s·cos(θ_y + m)` for the
/// true class `y`, where `θ_j` is the angle between `e` and class row `j`.
pub fn aam_loss(weights: &DMatrix<f64>, scale: f64, margin: f64, e: &DVector<f64>, label: usize) -> Result<AamOutput> {
    let (classes, dim) = weights.shape();
    if label >= classes {
        return Err(Error::Precondition(format!(
            "label {label} out of range for {classes} classes"
        )));
    }
    if e.len() != dim {
        return Err(Error::ShapeMismatch {
            expected: format!("embedding dimension {dim}"),
            found: format!("{}", e.len()),
        });
    }
    let e_norm = e.norm();
    if e_norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let e_hat = e / e_norm;

    let w_norms: Vec<f64> = weights.row_iter().map(|r| r.norm()).collect();
    if w_norms.contains(&0.0) {
        return Err(Error::ZeroNorm);
    }
    let cos: Vec<f64> = weights
        .row_iter()
        .zip(&w_norms)
        .map(|(r, n)| (r.transpose().dot(&e_hat) / n).clamp(-1.0, 1.0))
        .collect();

    let theta = cos[label].acos();
    let sin_theta = theta.sin();
    let mut logits: Vec<f64> = cos.iter().map(|c| scale * c).collect();
    logits[label] = scale * (theta + margin).cos();
    // d cos(θ + m) / d cos θ = cos m + sin m · cos θ / sin θ, floored away from θ = 0
    let target_slope = margin.cos() + margin.sin() * cos[label] / sin_theta.max(1e-6);

    let lse = log_sum_exp(&logits);
    let loss = lse - logits[label];

    let mut grad_embedding = DVector::zeros(dim);
    let mut grad_weights = DMatrix::zeros(classes, dim);
    for j in 0..classes {
        let p = (logits[j] - lse).exp();
        let mut g_cos = scale * (p - if j == label { 1.0 } else { 0.0 });
        if j == label {
            g_cos *= target_slope;
        }
        let w_hat = weights.row(j).transpose() / w_norms[j];
        grad_embedding += (&w_hat - &e_hat * cos[j]) * (g_cos / e_norm);
        let gw = (&e_hat - &w_hat * cos[j]) * (g_cos / w_norms[j]);
        grad_weights.row_mut(j).copy_from(&gw.transpose());
    }
    Ok(AamOutput {
        loss,
        grad_embedding,
        grad_weights,
    })
}

#[derive(Debug, Clone)]
pub struct ContrastiveItem<'a> {
    pub embedding: &'a DVector<f64>,
    pub utt_id: &'a str,
    pub source: Source,
}

#[derive(Debug, Clone)]
pub struct ContrastiveOutput {
    pub loss: f64,
    pub n_pairs: usize,
    /// Gradient per batch item, in batch order.
    pub grads: Vec<DVector<f64>>,
}

/// NT-Xent over orig/anon views of the same utterance.
///
/// Each item of a positive pair serves once as anchor: its term is
/// `−log(exp(cos(a, p)/τ) / Σ_{k≠a} exp(cos(a, k)/τ))` where the sum runs
/// over every other item in the batch. The loss is the mean over all anchor
/// terms, i.e. the mean over pairs of the two directional terms.
pub fn contrastive_loss(items: &[ContrastiveItem<'_>], temperature: f64) -> Result<ContrastiveOutput> {
    if items.len() < 2 {
        return Err(Error::Precondition("contrastive batch needs at least 2 items".into()));
    }
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::InvalidConfig("temperature must be positive".into()));
    }
    let dim = items[0].embedding.len();
    let mut slots: HashMap<(&str, Source), usize> = HashMap::new();
    for (i, it) in items.iter().enumerate() {
        if it.embedding.len() != dim {
            return Err(Error::ShapeMismatch {
                expected: format!("dimension {dim}"),
                found: format!("{}", it.embedding.len()),
            });
        }
        if slots.insert((it.utt_id, it.source), i).is_some() {
            return Err(Error::Precondition(format!(
                "utterance {} appears twice as {}",
                it.utt_id, it.source
            )));
        }
    }
    let partner: Vec<Option<usize>> = items
        .iter()
        .map(|it| {
            let other = match it.source {
                Source::Orig => Source::Anon,
                Source::Anon => Source::Orig,
            };
            slots.get(&(it.utt_id, other)).copied()
        })
        .collect();
    let n_anchors = partner.iter().filter(|p| p.is_some()).count();
    let mut grads = vec![DVector::zeros(dim); items.len()];
    if n_anchors == 0 {
        return Ok(ContrastiveOutput {
            loss: 0.0,
            n_pairs: 0,
            grads,
        });
    }

    let norms: Vec<f64> = items.iter().map(|it| it.embedding.norm()).collect();
    if norms.contains(&0.0) {
        return Err(Error::ZeroNorm);
    }
    let units: Vec<DVector<f64>> = items.iter().zip(&norms).map(|(it, n)| it.embedding / *n).collect();

    // gradients w.r.t. the unit vectors first
    let mut g_units = vec![DVector::zeros(dim); items.len()];
    let mut total = 0.0;
    let weight = 1.0 / n_anchors as f64;
    for (a, p) in partner.iter().enumerate() {
        let Some(p) = *p else { continue };
        let others: Vec<usize> = (0..items.len()).filter(|&k| k != a).collect();
        let logits: Vec<f64> = others.iter().map(|&k| units[a].dot(&units[k]) / temperature).collect();
        let lse = log_sum_exp(&logits);
        let pos = units[a].dot(&units[p]) / temperature;
        total += lse - pos;
        for (&k, z) in others.iter().zip(&logits) {
            let coef = weight * ((z - lse).exp() - if k == p { 1.0 } else { 0.0 }) / temperature;
            g_units[a] += &units[k] * coef;
            g_units[k] += &units[a] * coef;
        }
    }
    for i in 0..items.len() {
        // project through u = e/‖e‖
        let g = &g_units[i];
        grads[i] = (g - &units[i] * units[i].dot(g)) / norms[i];
    }
    Ok(ContrastiveOutput {
        loss: total * weight,
        n_pairs: n_anchors / 2,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn aam_without_margin_is_scaled_softmax() {
        let w = DMatrix::identity(2, 2);
        let out = aam_loss(&w, 1.0, 0.0, &v(&[1.0, 0.0]), 0).unwrap();
        // log(1 + e^-1)
        assert!((out.loss - 0.31326168751822286).abs() < 1e-12);

        let w = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.6, 0.8, -1.0, 0.0]);
        let e = v(&[0.3, -1.7]);
        let out = aam_loss(&w, 2.5, 0.0, &e, 1).unwrap();
        let cos: Vec<f64> = w
            .row_iter()
            .map(|r| r.transpose().dot(&e) / (r.norm() * e.norm()))
            .collect();
        let z: Vec<f64> = cos.iter().map(|c| 2.5 * c).collect();
        let ce = z.iter().map(|x| x.exp()).sum::<f64>().ln() - z[1];
        assert!((out.loss - ce).abs() < 1e-12);
    }

    #[test]
    fn aam_with_margin() {
        let w = DMatrix::identity(2, 2);
        let out = aam_loss(&w, 1.0, 0.5, &v(&[1.0, 0.0]), 0).unwrap();
        // log(1 + e^{-cos 0.5})
        assert!((out.loss - 0.3476854448672507).abs() < 1e-12);
    }

    #[test]
    fn aam_rejects_bad_input() {
        let w = DMatrix::identity(2, 2);
        assert!(matches!(
            aam_loss(&w, 1.0, 0.2, &v(&[0.0, 0.0]), 0),
            Err(Error::ZeroNorm)
        ));
        assert!(aam_loss(&w, 1.0, 0.2, &v(&[1.0, 0.0]), 2).is_err());
    }

    #[test]
    fn contrastive_reference_value() {
        let (a, b) = (v(&[1.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0]));
        let items = [
            ContrastiveItem {
                embedding: &a,
                utt_id: "u1",
                source: Source::Orig,
            },
            ContrastiveItem {
                embedding: &a,
                utt_id: "u1",
                source: Source::Anon,
            },
            ContrastiveItem {
                embedding: &b,
                utt_id: "u2",
                source: Source::Orig,
            },
            ContrastiveItem {
                embedding: &b,
                utt_id: "u2",
                source: Source::Anon,
            },
        ];
        let out = contrastive_loss(&items, 1.0).unwrap();
        // -log(e / (e + 2))
        assert!((out.loss - 0.5514447139320511).abs() < 1e-12);
        assert_eq!(out.n_pairs, 2);
    }

    #[test]
    fn contrastive_without_pairs_is_zero() {
        let (a, b) = (v(&[1.0, 0.0]), v(&[0.3, 1.0]));
        let items = [
            ContrastiveItem {
                embedding: &a,
                utt_id: "u1",
                source: Source::Orig,
            },
            ContrastiveItem {
                embedding: &b,
                utt_id: "u2",
                source: Source::Anon,
            },
        ];
        let out = contrastive_loss(&items, 0.1).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grads.iter().all(|g| g.iter().all(|x| *x == 0.0)));
        assert!(contrastive_loss(&items[..1], 0.1).is_err());
    }

    #[test]
    fn contrastive_constant_cosines_ignore_temperature() {
        let a = v(&[2.0, 0.0]);
        let items = [
            ContrastiveItem {
                embedding: &a,
                utt_id: "u1",
                source: Source::Orig,
            },
            ContrastiveItem {
                embedding: &a,
                utt_id: "u1",
                source: Source::Anon,
            },
            ContrastiveItem {
                embedding: &a,
                utt_id: "u2",
                source: Source::Orig,
            },
        ];
        let l1 = contrastive_loss(&items, 0.3).unwrap().loss;
        let l2 = contrastive_loss(&items, 0.6).unwrap().loss;
        assert!((l1 - l2).abs() < 1e-12);
        assert!((l1 - 2f64.ln()).abs() < 1e-12);
    }
}
