//! Training objective: expected cross-entropy under the Dirichlet, the
//! fairness-regularized variant, the cross-view consistency term, and their
//! class-balanced composition. Every term returns its gradient with respect to
//! the evidence (equivalently the concentrations, since `∂α̂/∂e = 1`).

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{FamlError, Result};
use crate::numerics::{digamma_unchecked, trigamma_unchecked};
use crate::opinion::{DirichletParams, PriorVector};
use crate::prior::PriorSet;

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// `ψ(Ŝ) − ψ(α̂_y)`, gradient `ψ′(Ŝ) − [k = y] ψ′(α̂_y)`.
pub fn ace_loss(d: &DirichletParams, label: usize) -> Result<LossGrad> {
    let k = d.num_classes();
    if label >= k {
        return Err(FamlError::Argument(format!("label {label} out of range for {k} classes")));
    }
    let s = d.strength();
    let a = d.alpha()[label];
    let value = digamma_unchecked(s) - digamma_unchecked(a);
    let ts = trigamma_unchecked(s);
    let mut grad = vec![ts; k];
    grad[label] -= trigamma_unchecked(a);
    Ok(LossGrad { value, grad })
}

fn ace_from_slice(alpha: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    let s: f64 = alpha.iter().sum();
    let ts = trigamma_unchecked(s);
    grad.iter_mut().for_each(|g| *g = ts);
    grad[label] -= trigamma_unchecked(alpha[label]);
    digamma_unchecked(s) - digamma_unchecked(alpha[label])
}

fn check_labels(labels: &[usize], rows: usize, k: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(FamlError::dim("batch labels", rows, labels.len()));
    }
    if let Some(y) = labels.iter().find(|y| **y >= k) {
        return Err(FamlError::Argument(format!("label {y} out of range for {k} classes")));
    }
    Ok(())
}

/// Minibatch fairness degree over the label-conditioned class means
/// `m_k = mean_{n: y_n = k} e_{n,k}`, restricted to the classes present in the
/// batch, and its gradient `[k = y_n] · 2 (m_k − m̄) / (K' · B_k)` where `K'`
/// counts present classes and `B_k` the samples of class `k`.
pub fn batch_fairness(evidence: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (rows, k) = evidence.dim();
    if rows == 0 {
        return Err(FamlError::Argument("fairness term needs a non-empty batch".into()));
    }
    check_labels(labels, rows, k)?;
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (n, &y) in labels.iter().enumerate() {
        sums[y] += evidence[[n, y]];
        counts[y] += 1;
    }
    let present: Vec<usize> = (0..k).filter(|&c| counts[c] > 0).collect();
    let kp = present.len() as f64;
    let means: Vec<f64> = (0..k)
        .map(|c| if counts[c] > 0 { sums[c] / counts[c] as f64 } else { 0.0 })
        .collect();
    let grand = present.iter().map(|&c| means[c]).sum::<f64>() / kp;
    let value = present.iter().map(|&c| (means[c] - grand).powi(2)).sum::<f64>() / kp;
    let mut grad = Array2::zeros((rows, k));
    for (n, &y) in labels.iter().enumerate() {
        grad[[n, y]] = 2.0 * (means[y] - grand) / (kp * counts[y] as f64);
    }
    Ok((value, grad))
}

/// `mean_n ace(e_n + β, y_n) + λ · FD(batch)`.
pub fn acc_loss(
    evidence: ArrayView2<f64>,
    labels: &[usize],
    prior: &PriorVector,
    lambda: f64,
) -> Result<(f64, Array2<f64>)> {
    let (rows, k) = evidence.dim();
    if prior.num_classes() != k {
        return Err(FamlError::dim("prior", k, prior.num_classes()));
    }
    let (fd, fd_grad) = batch_fairness(evidence, labels)?;
    let mut grad = fd_grad * lambda;
    let mut alpha = vec![0.0; k];
    let mut g = vec![0.0; k];
    let mut ace = 0.0;
    for n in 0..rows {
        for c in 0..k {
            alpha[c] = evidence[[n, c]] + prior.as_slice()[c];
        }
        ace += ace_from_slice(&alpha, labels[n], &mut g);
        for c in 0..k {
            grad[[n, c]] += g[c] / rows as f64;
        }
    }
    Ok((ace / rows as f64 + lambda * fd, grad))
}

/// `J[k][j] = ∂Var_k / ∂α̂_j`.
fn variance_jacobian(alpha: &[f64]) -> Vec<Vec<f64>> {
    let s: f64 = alpha.iter().sum();
    let g = s * s * (s + 1.0);
    let dg = 3.0 * s * s + 2.0 * s;
    alpha
        .iter()
        .enumerate()
        .map(|(k, &ak)| {
            let f = ak * (s - ak);
            (0..alpha.len())
                .map(|j| {
                    let df = ak + if j == k { s - 2.0 * ak } else { 0.0 };
                    df / g - f * dg / (g * g)
                })
                .collect()
        })
        .collect()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn consistency_raw(alphas: &[&[f64]], grads: &mut [Vec<f64>]) -> f64 {
    let vars: Vec<Vec<f64>> = alphas
        .iter()
        .map(|a| {
            let s: f64 = a.iter().sum();
            let denom = s * s * (s + 1.0);
            a.iter().map(|x| x * (s - x) / denom).collect()
        })
        .collect();
    let jacobians: Vec<Vec<Vec<f64>>> = alphas.iter().map(|a| variance_jacobian(a)).collect();
    let k = alphas.first().map_or(0, |a| a.len());
    grads.iter_mut().for_each(|g| g.iter_mut().for_each(|x| *x = 0.0));
    let mut value = 0.0;
    for p in 0..alphas.len() {
        for q in (p + 1)..alphas.len() {
            for c in 0..k {
                let diff = vars[p][c] - vars[q][c];
                // Ordered pairs: (p, q) and (q, p) both count.
                value += 2.0 * diff.abs();
                let s = 2.0 * sign(diff);
                if s != 0.0 {
                    for j in 0..k {
                        grads[p][j] += s * jacobians[p][c][j];
                        grads[q][j] -= s * jacobians[q][c][j];
                    }
                }
            }
        }
    }
    value
}

/// `Σ_p Σ_{q≠p} Σ_k |Var_k(p) − Var_k(q)|` with per-view gradients.
pub fn consistency_loss(views: &[DirichletParams]) -> Result<(f64, Vec<Vec<f64>>)> {
    let k = views.first().map_or(0, |d| d.num_classes());
    if let Some(d) = views.iter().find(|d| d.num_classes() != k) {
        return Err(FamlError::dim("view classes", k, d.num_classes()));
    }
    let alphas: Vec<&[f64]> = views.iter().map(|d| d.alpha()).collect();
    let mut grads = vec![vec![0.0; k]; views.len()];
    let value = consistency_raw(&alphas, &mut grads);
    Ok((value, grads))
}

/// Linear ramp `epoch / total_epochs` clamped to `[0, 1]`.
pub fn lambda_schedule(epoch: usize, total_epochs: usize) -> f64 {
    (epoch as f64 / total_epochs.max(1) as f64).clamp(0.0, 1.0)
}

/// Per-class weights proportional to `1 / N_k`, normalized to unit mean.
pub fn class_balance_weights(class_counts: &[usize]) -> Result<Vec<f64>> {
    if class_counts.is_empty() {
        return Err(FamlError::Argument("no classes".into()));
    }
    if let Some(c) = class_counts.iter().position(|c| *c == 0) {
        return Err(FamlError::Argument(format!("class {c} has no training samples")));
    }
    let raw: Vec<f64> = class_counts.iter().map(|c| 1.0 / *c as f64).collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    Ok(raw.into_iter().map(|w| w / mean).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSettings {
    pub lambda: f64,
    pub beta_con: f64,
    /// Differentiate through the fusion confidences too, instead of holding
    /// them constant in the backward pass.
    pub exact_fusion_grad: bool,
}

/// Batch-level loss terms. Supervised terms are class-weighted batch means;
/// fairness terms are the raw minibatch fairness degrees; `consistency` is the
/// unweighted batch mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ace_per_view: Vec<f64>,
    pub ace_fused: f64,
    pub fairness_per_view: Vec<f64>,
    pub fairness_fused: f64,
    pub consistency: f64,
    pub mean_class_weight: f64,
    pub total: f64,
    pub lambda_t: f64,
    pub beta_con: f64,
}

impl LossBreakdown {
    /// Recomputes the objective from its parts.
    pub fn recompose(&self) -> f64 {
        let ace = self.ace_fused + self.ace_per_view.iter().sum::<f64>();
        let fd = self.fairness_fused + self.fairness_per_view.iter().sum::<f64>();
        ace + self.mean_class_weight * self.lambda_t * fd + self.beta_con * self.consistency
    }
}

#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub breakdown: LossBreakdown,
    /// `∂L/∂e` for each view, `B × K`.
    pub view_grads: Vec<Array2<f64>>,
    /// Fused evidence per sample, `B × K`.
    pub fused_evidence: Array2<f64>,
}

/// Confidence-weighted fusion of one sample's view evidence. Returns the
/// fused row and the confidences `c_v = 1 − u_v`.
pub(crate) fn fuse_row(
    views: &[ArrayView2<f64>],
    n: usize,
    priors: &PriorSet,
    out: &mut [f64],
) -> Vec<f64> {
    let conf: Vec<f64> = views
        .iter()
        .zip(&priors.views)
        .map(|(e, p)| {
            let total: f64 = e.row(n).sum();
            total / (total + p.weight_total())
        })
        .collect();
    let c_total: f64 = conf.iter().sum();
    out.iter_mut().for_each(|o| *o = 0.0);
    let weights: Vec<f64> = if c_total > 0.0 {
        conf.iter().map(|c| c / c_total).collect()
    } else {
        vec![1.0 / views.len() as f64; views.len()]
    };
    for (e, w) in views.iter().zip(&weights) {
        for (o, x) in out.iter_mut().zip(e.row(n)) {
            *o += w * x;
        }
    }
    conf
}

/// The class-balanced objective over a minibatch:
///
/// `L = mean_n [ w_{y_n} (ace_fused + Σ_v ace_v) + β_con · con_n ]
///      + mean_n(w_{y_n}) · λ · (FD_fused + Σ_v FD_v)`
pub fn batch_loss(
    views: &[ArrayView2<f64>],
    labels: &[usize],
    priors: &PriorSet,
    class_weights: &[f64],
    settings: LossSettings,
) -> Result<BatchLoss> {
    let first = views
        .first()
        .ok_or_else(|| FamlError::Argument("batch loss needs at least one view".into()))?;
    let (rows, k) = first.dim();
    if rows == 0 {
        return Err(FamlError::Argument("empty batch".into()));
    }
    for v in views {
        if v.dim() != (rows, k) {
            return Err(FamlError::dim("view evidence columns", k, v.ncols()));
        }
    }
    if priors.views.len() != views.len() {
        return Err(FamlError::dim("view priors", views.len(), priors.views.len()));
    }
    if priors.fused.num_classes() != k || priors.views.iter().any(|p| p.num_classes() != k) {
        return Err(FamlError::dim("prior classes", k, priors.fused.num_classes()));
    }
    if class_weights.len() != k {
        return Err(FamlError::dim("class weights", k, class_weights.len()));
    }
    check_labels(labels, rows, k)?;

    let nv = views.len();
    let b = rows as f64;
    let mean_w = labels.iter().map(|&y| class_weights[y]).sum::<f64>() / b;
    let LossSettings {
        lambda,
        beta_con,
        exact_fusion_grad,
    } = settings;

    let mut fused = Array2::zeros((rows, k));
    let mut confidences = Vec::with_capacity(rows);
    let mut row = vec![0.0; k];
    for n in 0..rows {
        confidences.push(fuse_row(views, n, priors, &mut row));
        for c in 0..k {
            fused[[n, c]] = row[c];
        }
    }

    let mut view_grads: Vec<Array2<f64>> = vec![Array2::zeros((rows, k)); nv];
    let mut fused_grad = Array2::zeros((rows, k));

    // Fairness terms.
    let mut fairness_per_view = Vec::with_capacity(nv);
    for (v, e) in views.iter().enumerate() {
        let (fd, g) = batch_fairness(e.view(), labels)?;
        fairness_per_view.push(fd);
        view_grads[v].scaled_add(mean_w * lambda, &g);
    }
    let (fairness_fused, g) = batch_fairness(fused.view(), labels)?;
    fused_grad.scaled_add(mean_w * lambda, &g);

    // Per-sample supervised and consistency terms.
    let mut ace_per_view = vec![0.0; nv];
    let mut ace_fused = 0.0;
    let mut consistency = 0.0;
    let mut alphas = vec![vec![0.0; k]; nv];
    let mut con_grads = vec![vec![0.0; k]; nv];
    let mut alpha_f = vec![0.0; k];
    let mut g = vec![0.0; k];
    for n in 0..rows {
        let y = labels[n];
        let w = class_weights[y];
        for c in 0..k {
            alpha_f[c] = fused[[n, c]] + priors.fused.as_slice()[c];
        }
        ace_fused += w * ace_from_slice(&alpha_f, y, &mut g) / b;
        for c in 0..k {
            fused_grad[[n, c]] += w * g[c] / b;
        }
        for v in 0..nv {
            for c in 0..k {
                alphas[v][c] = views[v][[n, c]] + priors.views[v].as_slice()[c];
            }
            ace_per_view[v] += w * ace_from_slice(&alphas[v], y, &mut g) / b;
            for c in 0..k {
                view_grads[v][[n, c]] += w * g[c] / b;
            }
        }
        if nv > 1 {
            let refs: Vec<&[f64]> = alphas.iter().map(|a| a.as_slice()).collect();
            consistency += consistency_raw(&refs, &mut con_grads) / b;
            if beta_con != 0.0 {
                for v in 0..nv {
                    for c in 0..k {
                        view_grads[v][[n, c]] += beta_con * con_grads[v][c] / b;
                    }
                }
            }
        }
    }

    // Backpropagate the fused gradient into the views.
    for n in 0..rows {
        let conf = &confidences[n];
        let c_total: f64 = conf.iter().sum();
        if c_total > 0.0 {
            for v in 0..nv {
                let w = conf[v] / c_total;
                for c in 0..k {
                    view_grads[v][[n, c]] += w * fused_grad[[n, c]];
                }
            }
            if exact_fusion_grad {
                for v in 0..nv {
                    // ∂c_v/∂e_{v,j} = W_v / S_v² for every j.
                    let total: f64 = views[v].row(n).sum();
                    let wv = priors.views[v].weight_total();
                    let dc = wv / (total + wv).powi(2);
                    let dl_dc: f64 = (0..k)
                        .map(|c| fused_grad[[n, c]] * (views[v][[n, c]] - fused[[n, c]]) / c_total)
                        .sum();
                    for c in 0..k {
                        view_grads[v][[n, c]] += dl_dc * dc;
                    }
                }
            }
        } else {
            for g in view_grads.iter_mut() {
                for c in 0..k {
                    g[[n, c]] += fused_grad[[n, c]] / nv as f64;
                }
            }
        }
    }

    let mut breakdown = LossBreakdown {
        ace_per_view,
        ace_fused,
        fairness_per_view,
        fairness_fused,
        consistency,
        mean_class_weight: mean_w,
        total: 0.0,
        lambda_t: lambda,
        beta_con,
    };
    breakdown.total = breakdown.recompose();
    Ok(BatchLoss {
        breakdown,
        view_grads,
        fused_evidence: fused,
    })
}

/// Single-sample form of [`batch_loss`]: `class_weight` multiplies the
/// supervised terms directly. With one sample the minibatch fairness degree is
/// zero, so only the supervised and consistency terms contribute.
pub fn total_loss(
    view_evidence: &[Vec<f64>],
    label: usize,
    class_weight: f64,
    priors: &PriorSet,
    settings: LossSettings,
) -> Result<(LossBreakdown, Vec<Vec<f64>>)> {
    let k = priors.fused.num_classes();
    let arrays = view_evidence
        .iter()
        .map(|e| {
            Array2::from_shape_vec((1, e.len()), e.clone())
                .map_err(|_| FamlError::Numeric("bad evidence shape".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<ArrayView2<f64>> = arrays.iter().map(|a| a.view()).collect();
    if label >= k {
        return Err(FamlError::Argument(format!("label {label} out of range for {k} classes")));
    }
    let mut weights = vec![1.0; k];
    weights[label] = class_weight;
    let out = batch_loss(&views, &[label], priors, &weights, settings)?;
    let grads = out.view_grads.iter().map(|g| g.row(0).to_vec()).collect();
    Ok((out.breakdown, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_check;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dir(a: &[f64]) -> DirichletParams {
        DirichletParams::from_alpha(a.to_vec()).unwrap()
    }

    #[test]
    fn ace_examples() {
        assert_relative_eq!(ace_loss(&dir(&[1.0, 1.0]), 0).unwrap().value, 1.0, epsilon = 1e-12);
        assert_relative_eq!(ace_loss(&dir(&[2.0, 1.0, 1.0]), 0).unwrap().value, 5.0 / 6.0, epsilon = 1e-12);
        assert!(ace_loss(&dir(&[1.0, 1.0]), 2).is_err());
    }

    #[test]
    fn ace_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let k = rng.random_range(2..=5);
            let alpha: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..20.0)).collect();
            let y = rng.random_range(0..k);
            let lg = ace_loss(&dir(&alpha), y).unwrap();
            let r = finite_diff_check(|a| ace_loss(&dir(a), y).unwrap().value, &lg.grad, &alpha, 1e-5, 1e-4)
                .unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn acc_reduces_to_ace_without_lambda() {
        let e = array![[3.0, 1.0], [0.5, 2.0]];
        let prior = PriorVector::uniform(2);
        let (v, _) = acc_loss(e.view(), &[0, 1], &prior, 0.0).unwrap();
        let a = ace_loss(&dir(&[4.0, 2.0]), 0).unwrap().value;
        let b = ace_loss(&dir(&[1.5, 3.0]), 1).unwrap().value;
        assert_relative_eq!(v, (a + b) / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn balanced_class_means_have_no_fairness_gradient() {
        let e = array![[2.0, 7.0], [9.0, 2.0], [2.0, 0.0]];
        let (fd, g) = batch_fairness(e.view(), &[0, 1, 0]).unwrap();
        assert_eq!(fd, 0.0);
        assert!(g.iter().all(|x| *x == 0.0));
        assert!(batch_fairness(Array2::<f64>::zeros((0, 2)).view(), &[]).is_err());
    }

    #[test]
    fn consistency_examples() {
        let (v, g) = consistency_loss(&[dir(&[1.0, 2.0])]).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![vec![0.0, 0.0]]);
        let same = dir(&[3.0, 1.0, 2.0]);
        assert_eq!(consistency_loss(&[same.clone(), same]).unwrap().0, 0.0);
        let (v, _) = consistency_loss(&[dir(&[1.0, 1.0]), dir(&[2.0, 2.0])]).unwrap();
        assert_relative_eq!(v, 2.0 / 15.0, epsilon = 1e-14);
        assert!(consistency_loss(&[dir(&[1.0, 1.0]), dir(&[2.0, 2.0, 1.0])]).is_err());
    }

    #[test]
    fn consistency_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let k = rng.random_range(2..=5);
            let v = rng.random_range(2..=3);
            let flat: Vec<f64> = (0..k * v).map(|_| rng.random_range(0.5..10.0)).collect();
            let views = |p: &[f64]| p.chunks(k).map(dir).collect::<Vec<_>>();
            let (_, grads) = consistency_loss(&views(&flat)).unwrap();
            let grad: Vec<f64> = grads.concat();
            let r = finite_diff_check(|p| consistency_loss(&views(p)).unwrap().0, &grad, &flat, 1e-4, 1e-4)
                .unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn lambda_schedule_endpoints() {
        assert_eq!(lambda_schedule(0, 200), 0.0);
        assert_eq!(lambda_schedule(200, 200), 1.0);
        assert_eq!(lambda_schedule(100, 200), 0.5);
        assert_eq!(lambda_schedule(300, 200), 1.0);
        assert_eq!(lambda_schedule(0, 0), 0.0);
    }

    #[test]
    fn class_weights_normalize_to_unit_mean() {
        let w = class_balance_weights(&[100, 50, 10]).unwrap();
        assert_relative_eq!(w.iter().sum::<f64>() / 3.0, 1.0, epsilon = 1e-14);
        assert_relative_eq!(w[1] / w[0], 2.0, epsilon = 1e-14);
        assert!(class_balance_weights(&[3, 0]).is_err());
    }

    #[test]
    fn single_view_composition_identity() {
        let priors = PriorSet::shared(PriorVector::uniform(3), 1);
        let e = vec![vec![2.0, 0.5, 1.0]];
        let settings = LossSettings { lambda: 0.0, beta_con: 0.0, exact_fusion_grad: false };
        let (bd, _) = total_loss(&e, 1, 1.0, &priors, settings).unwrap();
        let ace = ace_loss(&dir(&[3.0, 1.5, 2.0]), 1).unwrap().value;
        assert_relative_eq!(bd.total, 2.0 * ace, epsilon = 1e-12);
        assert_relative_eq!(bd.total, bd.recompose(), epsilon = 1e-15);
    }

    #[test]
    fn doubling_class_count_halves_supervised_term() {
        let priors = PriorSet::shared(PriorVector::uniform(2), 2);
        let e = vec![vec![2.0, 0.5], vec![1.0, 3.0]];
        let settings = LossSettings { lambda: 0.0, beta_con: 0.0, exact_fusion_grad: false };
        let (a, _) = total_loss(&e, 0, 1.0 / 10.0, &priors, settings).unwrap();
        let (b, _) = total_loss(&e, 0, 1.0 / 20.0, &priors, settings).unwrap();
        assert_relative_eq!(b.total, a.total / 2.0, epsilon = 1e-14);
    }
}
