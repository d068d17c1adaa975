//! Subjective-logic algebra over Dirichlet evidence.
//!
//! Evidence produced by a view network parameterizes a Dirichlet distribution
//! through an additive prior, which in turn maps to a multinomial opinion
//! (belief masses, uncertainty mass, base rates). Opinions project onto a
//! probability vector and are fused across views by confidence-weighted
//! evidence averaging.

use serde::{Deserialize, Serialize};

use crate::error::{FamlError, Result};

const SUM_TOL: f64 = 1e-9;

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(FamlError::Numeric(format!("{what} contains non-finite value {v}")));
    }
    Ok(())
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(FamlError::dim(what, expected, got));
    }
    Ok(())
}

/// Non-negative per-class evidence mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EvidenceVector(Vec<f64>);

impl EvidenceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(FamlError::Argument(format!(
                "evidence needs at least 2 classes, got {}",
                values.len()
            )));
        }
        check_finite(&values, "evidence")?;
        if let Some(v) = values.iter().find(|v| **v < 0.0) {
            return Err(FamlError::Numeric(format!("evidence entry {v} is negative")));
        }
        Ok(Self(values))
    }

    pub fn zeros(num_classes: usize) -> Self {
        Self(vec![0.0; num_classes])
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for EvidenceVector {
    type Error = FamlError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<EvidenceVector> for Vec<f64> {
    fn from(e: EvidenceVector) -> Self {
        e.0
    }
}

/// Strictly positive Dirichlet prior weights with their cached total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PriorVector {
    values: Vec<f64>,
    weight_total: f64,
}

impl PriorVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(FamlError::Argument(format!(
                "prior needs at least 2 classes, got {}",
                values.len()
            )));
        }
        check_finite(&values, "prior")?;
        if let Some(v) = values.iter().find(|v| **v <= 0.0) {
            return Err(FamlError::Numeric(format!("prior weight {v} is not positive")));
        }
        let weight_total = values.iter().sum();
        Ok(Self {
            values,
            weight_total,
        })
    }

    /// The all-ones prior of standard evidential learning.
    pub fn uniform(num_classes: usize) -> Self {
        Self {
            values: vec![1.0; num_classes],
            weight_total: num_classes as f64,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn weight_total(&self) -> f64 {
        self.weight_total
    }

    /// Base rates implied by the prior, `a_k = β_k / W`.
    pub fn base_rates(&self) -> ProbabilityVector {
        ProbabilityVector(self.values.iter().map(|b| b / self.weight_total).collect())
    }

    /// Returns a copy with `β_k` replaced, keeping the cached total consistent.
    pub fn with_component(&self, k: usize, value: f64) -> Result<Self> {
        let mut values = self.values.clone();
        values[k] = value;
        Self::new(values)
    }
}

impl TryFrom<Vec<f64>> for PriorVector {
    type Error = FamlError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PriorVector> for Vec<f64> {
    fn from(p: PriorVector) -> Self {
        p.values
    }
}

/// Dirichlet concentration parameters `α̂` with cached strength `Ŝ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    alpha: Vec<f64>,
    strength: f64,
}

impl DirichletParams {
    /// Builds parameters directly from concentrations (each must be positive).
    pub fn from_alpha(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(FamlError::Argument("dirichlet needs at least 2 classes".into()));
        }
        check_finite(&alpha, "alpha")?;
        if let Some(a) = alpha.iter().find(|a| **a <= 0.0) {
            return Err(FamlError::Numeric(format!("concentration {a} is not positive")));
        }
        let strength = alpha.iter().sum();
        Ok(Self { alpha, strength })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn num_classes(&self) -> usize {
        self.alpha.len()
    }

    /// Mean of the distribution, `α̂_k / Ŝ`.
    pub fn mean(&self) -> ProbabilityVector {
        ProbabilityVector(self.alpha.iter().map(|a| a / self.strength).collect())
    }
}

/// Belief masses, uncertainty mass and base rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Opinion {
    pub belief: Vec<f64>,
    pub uncertainty: f64,
    pub base_rates: Vec<f64>,
}

impl Opinion {
    pub fn num_classes(&self) -> usize {
        self.belief.len()
    }

    /// Checks additivity, base-rate normalization and non-negativity.
    pub fn validate(&self) -> Result<()> {
        check_len("opinion base rates", self.belief.len(), self.base_rates.len())?;
        let mass: f64 = self.belief.iter().sum::<f64>() + self.uncertainty;
        if (mass - 1.0).abs() > SUM_TOL {
            return Err(FamlError::Numeric(format!("belief + uncertainty sums to {mass}")));
        }
        let rate: f64 = self.base_rates.iter().sum();
        if (rate - 1.0).abs() > SUM_TOL {
            return Err(FamlError::Numeric(format!("base rates sum to {rate}")));
        }
        let negative = self
            .belief
            .iter()
            .chain(&self.base_rates)
            .chain(std::iter::once(&self.uncertainty))
            .any(|v| *v < 0.0);
        if negative {
            return Err(FamlError::Numeric("opinion has a negative component".into()));
        }
        Ok(())
    }

    /// Recovers the Dirichlet parameters of an opinion whose base rates were
    /// derived from a prior of total weight `prior_weight`.
    pub fn to_dirichlet(&self, prior_weight: f64) -> Result<DirichletParams> {
        let strength = prior_weight / self.uncertainty;
        let alpha = self
            .belief
            .iter()
            .zip(&self.base_rates)
            .map(|(b, a)| b * strength + a * prior_weight)
            .collect();
        DirichletParams::from_alpha(alpha)
    }

    /// Dissonance between two opinions, via their Dirichlet variances.
    pub fn dissonance(&self, other: &Opinion, prior_weight: f64) -> Result<f64> {
        dissonance(&self.to_dirichlet(prior_weight)?, &other.to_dirichlet(prior_weight)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_finite(&probs, "probabilities")?;
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(FamlError::Numeric("probability outside [0, 1]".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(FamlError::Numeric(format!("probabilities sum to {total}")));
        }
        Ok(Self(probs))
    }

    pub fn uniform(num_classes: usize) -> Self {
        Self(vec![1.0 / num_classes as f64; num_classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Index and value of the largest entry; ties resolve to the lowest index.
    pub fn argmax(&self) -> (usize, f64) {
        self.0
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, p)| if p > best.1 { (k, p) } else { best })
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// `α̂_k = e_k + β_k`.
pub fn dirichlet_from_evidence(e: &EvidenceVector, prior: &PriorVector) -> Result<DirichletParams> {
    check_len("prior", e.num_classes(), prior.num_classes())?;
    let alpha: Vec<f64> = e.0.iter().zip(&prior.values).map(|(e, b)| e + b).collect();
    check_finite(&alpha, "alpha")?;
    let strength = alpha.iter().sum();
    Ok(DirichletParams { alpha, strength })
}

/// `b_k = (α̂_k − β_k) / Ŝ`, `u = W / Ŝ`. With the unit prior this is `u = K / S`.
pub fn opinion_from_dirichlet(
    d: &DirichletParams,
    prior: &PriorVector,
    base_rates: &ProbabilityVector,
) -> Result<Opinion> {
    let k = d.num_classes();
    check_len("prior", k, prior.num_classes())?;
    check_len("base rates", k, base_rates.0.len())?;
    let s = d.strength;
    let mut belief = Vec::with_capacity(k);
    for (a, b) in d.alpha.iter().zip(&prior.values) {
        let e = a - b;
        if e < -1e-12 * a.abs().max(1.0) {
            return Err(FamlError::Argument(format!(
                "concentration {a} is below its prior weight {b}; parameters were built from a different prior"
            )));
        }
        belief.push(e.max(0.0) / s);
    }
    Ok(Opinion {
        belief,
        uncertainty: prior.weight_total / s,
        base_rates: base_rates.0.clone(),
    })
}

/// Convenience: evidence to opinion in one step.
pub fn opinion_from_evidence(
    e: &EvidenceVector,
    prior: &PriorVector,
    base_rates: &ProbabilityVector,
) -> Result<Opinion> {
    opinion_from_dirichlet(&dirichlet_from_evidence(e, prior)?, prior, base_rates)
}

/// `P_k = b_k + a_k · u`.
pub fn project(o: &Opinion) -> ProbabilityVector {
    ProbabilityVector(
        o.belief
            .iter()
            .zip(&o.base_rates)
            .map(|(b, a)| b + a * o.uncertainty)
            .collect(),
    )
}

/// Confidence-weighted mean of per-view evidence with weights `c_v = 1 − u_v`.
///
/// When every view is fully uncertain the weights vanish and the plain mean is
/// returned instead (which is the zero vector for genuinely vacuous views).
pub fn aggregate_weighted(views: &[(EvidenceVector, f64)]) -> Result<EvidenceVector> {
    let (first, _) = views
        .first()
        .ok_or_else(|| FamlError::Argument("aggregation needs at least one view".into()))?;
    let k = first.num_classes();
    for (e, u) in views {
        check_len("view evidence", k, e.num_classes())?;
        if !(0.0..=1.0).contains(u) {
            return Err(FamlError::Argument(format!("uncertainty {u} outside [0, 1]")));
        }
    }
    let confidence_total: f64 = views.iter().map(|(_, u)| 1.0 - u).sum();
    let mut out = vec![0.0; k];
    if confidence_total > 0.0 {
        for (e, u) in views {
            let w = (1.0 - u) / confidence_total;
            for (o, x) in out.iter_mut().zip(&e.0) {
                *o += w * x;
            }
        }
    } else {
        let w = 1.0 / views.len() as f64;
        for (e, _) in views {
            for (o, x) in out.iter_mut().zip(&e.0) {
                *o += w * x;
            }
        }
    }
    // Convex combination of non-negative values; clamp rounding below zero.
    Ok(EvidenceVector(out.into_iter().map(|x| x.max(0.0)).collect()))
}

/// Per-class Dirichlet variance `α̂_k (Ŝ − α̂_k) / (Ŝ² (Ŝ + 1))`.
pub fn dirichlet_variance(d: &DirichletParams) -> Vec<f64> {
    let s = d.strength;
    let denom = s * s * (s + 1.0);
    d.alpha.iter().map(|a| a * (s - a) / denom).collect()
}

/// `Σ_k |Var_k(a) − Var_k(b)|`.
pub fn dissonance(a: &DirichletParams, b: &DirichletParams) -> Result<f64> {
    check_len("dissonance operands", a.num_classes(), b.num_classes())?;
    Ok(dirichlet_variance(a)
        .iter()
        .zip(dirichlet_variance(b))
        .map(|(x, y)| (x - y).abs())
        .sum())
}

fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Variance across classes of the per-class mean evidence over a set of samples.
pub fn fairness_degree(evidences: &[EvidenceVector]) -> Result<f64> {
    let first = evidences
        .first()
        .ok_or_else(|| FamlError::Argument("fairness degree of an empty sample set".into()))?;
    let k = first.num_classes();
    let mut means = vec![0.0; k];
    for e in evidences {
        check_len("sample evidence", k, e.num_classes())?;
        for (m, x) in means.iter_mut().zip(&e.0) {
            *m += x;
        }
    }
    let n = evidences.len() as f64;
    means.iter_mut().for_each(|m| *m /= n);
    Ok(population_variance(&means))
}

/// Label-conditioned fairness degree: the class mean for class `k` averages the
/// evidence `e_k` that samples of true class `k` receive. Classes with no samples
/// are left out of the variance. Returns the value and the class means
/// (`None` for absent classes).
pub fn class_fairness_degree(
    evidences: &[EvidenceVector],
    labels: &[usize],
) -> Result<(f64, Vec<Option<f64>>)> {
    let first = evidences
        .first()
        .ok_or_else(|| FamlError::Argument("fairness degree of an empty sample set".into()))?;
    check_len("labels", evidences.len(), labels.len())?;
    let k = first.num_classes();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (e, &y) in evidences.iter().zip(labels) {
        check_len("sample evidence", k, e.num_classes())?;
        if y >= k {
            return Err(FamlError::Argument(format!("label {y} out of range for {k} classes")));
        }
        sums[y] += e.0[y];
        counts[y] += 1;
    }
    let means: Vec<Option<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    let present: Vec<f64> = means.iter().flatten().copied().collect();
    Ok((population_variance(&present), means))
}
