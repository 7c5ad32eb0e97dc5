//! Label-flipping attacks. Every transform rewrites labels only; inputs are
//! passed through untouched.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttackKind {
    None,
    /// Relabel every `source` sample as `target`.
    Targeted { source: usize, target: usize },
    /// Replace every label with one drawn uniformly from the label set.
    UntargetedRandom,
    /// Replace every label with `flood_label`.
    UntargetedFixed { flood_label: usize },
    /// Relabel every `source` sample with the label of its farthest neighbour.
    DistanceBased { source: usize },
}

/// Which samples a distance-based attack searches for the farthest partner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceScope {
    #[default]
    Batch,
    Shard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub seed: u64,
    #[serde(default)]
    pub scope: DistanceScope,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::None,
            seed: 0,
            scope: DistanceScope::Batch,
        }
    }
}

impl AttackConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(kind: AttackKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            scope: DistanceScope::Batch,
        }
    }

    /// Checks that every referenced label lies in `0..num_classes`.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let labels: &[usize] = match &self.kind {
            AttackKind::None => &[],
            AttackKind::Targeted { source, target } => &[*source, *target],
            AttackKind::UntargetedRandom => {
                if num_classes < 2 {
                    return Err(Error::Config("random relabeling needs at least 2 classes".into()));
                }
                &[]
            }
            AttackKind::UntargetedFixed { flood_label } => std::slice::from_ref(flood_label),
            AttackKind::DistanceBased { source } => std::slice::from_ref(source),
        };
        check_labels(labels, num_classes)
    }

    /// Poisoned copy of `labels` for the samples in `inputs`.
    pub fn apply<R: Rng + ?Sized>(
        &self,
        inputs: &Tensor,
        labels: &[usize],
        num_classes: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        match self.kind {
            AttackKind::None => Ok(labels.to_vec()),
            AttackKind::Targeted { source, target } => {
                targeted_labels(labels, num_classes, source, target)
            }
            AttackKind::UntargetedRandom => random_labels(labels.len(), num_classes, rng),
            AttackKind::UntargetedFixed { flood_label } => {
                fixed_labels(labels.len(), num_classes, flood_label)
            }
            AttackKind::DistanceBased { source } => {
                distance_labels(inputs, labels, num_classes, source)
            }
        }
    }
}

/// CLI names of the attack families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackName {
    None,
    Targeted,
    UntargetedRandom,
    UntargetedFixed,
    Distance,
}

impl AttackName {
    pub const ALL: [AttackName; 5] = [
        AttackName::None,
        AttackName::Targeted,
        AttackName::UntargetedRandom,
        AttackName::UntargetedFixed,
        AttackName::Distance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackName::None => "none",
            AttackName::Targeted => "targeted",
            AttackName::UntargetedRandom => "untargeted-random",
            AttackName::UntargetedFixed => "untargeted-fixed",
            AttackName::Distance => "distance",
        }
    }
}

impl fmt::Display for AttackName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackName::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown attack {s:?}")))
    }
}

impl From<&AttackKind> for AttackName {
    fn from(kind: &AttackKind) -> Self {
        match kind {
            AttackKind::None => AttackName::None,
            AttackKind::Targeted { .. } => AttackName::Targeted,
            AttackKind::UntargetedRandom => AttackName::UntargetedRandom,
            AttackKind::UntargetedFixed { .. } => AttackName::UntargetedFixed,
            AttackKind::DistanceBased { .. } => AttackName::Distance,
        }
    }
}

/// Inputs `x_i` with labels `y_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

impl LabeledBatch {
    pub fn new(inputs: Tensor, labels: Vec<usize>) -> Result<Self> {
        if inputs.batch_size() != labels.len() {
            return Err(Error::shape(
                "labeled batch",
                vec![inputs.batch_size()],
                vec![labels.len()],
            ));
        }
        Ok(Self { inputs, labels })
    }

    fn with_labels(&self, labels: Vec<usize>) -> Self {
        Self {
            inputs: self.inputs.clone(),
            labels,
        }
    }
}

fn check_labels(labels: &[usize], num_classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= num_classes) {
        Some(&label) => Err(Error::LabelOutOfRange { label, num_classes }),
        None => Ok(()),
    }
}

fn targeted_labels(labels: &[usize], num_classes: usize, source: usize, target: usize) -> Result<Vec<usize>> {
    check_labels(&[source, target], num_classes)?;
    Ok(labels
        .iter()
        .map(|&y| if y == source { target } else { y })
        .collect())
}

fn random_labels<R: Rng + ?Sized>(n: usize, num_classes: usize, rng: &mut R) -> Result<Vec<usize>> {
    if num_classes < 2 {
        return Err(Error::Config("random relabeling needs at least 2 classes".into()));
    }
    Ok((0..n).map(|_| rng.random_range(0..num_classes)).collect())
}

fn fixed_labels(n: usize, num_classes: usize, flood_label: usize) -> Result<Vec<usize>> {
    check_labels(&[flood_label], num_classes)?;
    Ok(vec![flood_label; n])
}

fn distance_labels(inputs: &Tensor, labels: &[usize], num_classes: usize, source: usize) -> Result<Vec<usize>> {
    check_labels(&[source], num_classes)?;
    if inputs.batch_size() != labels.len() {
        return Err(Error::shape("distance attack batch", vec![inputs.batch_size()], vec![labels.len()]));
    }
    let indices: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == source).collect();
    let mut out = labels.to_vec();
    if indices.is_empty() || labels.len() < 2 {
        return Ok(out);
    }
    for i in indices {
        let xi = inputs.row(i);
        let mut best: Option<(usize, f64)> = None;
        for j in (0..labels.len()).filter(|&j| j != i) {
            let d = squared_distance(xi, inputs.row(j));
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, _)) = best {
            // pre-attack label of the partner
            out[i] = labels[j];
        }
    }
    Ok(out)
}

fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn euclidean_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape("euclidean distance", vec![x.len()], vec![y.len()]));
    }
    Ok(squared_distance(x, y).sqrt())
}

pub fn poison_targeted(batch: &LabeledBatch, num_classes: usize, source: usize, target: usize) -> Result<LabeledBatch> {
    Ok(batch.with_labels(targeted_labels(&batch.labels, num_classes, source, target)?))
}

pub fn poison_untargeted_random<R: Rng + ?Sized>(
    batch: &LabeledBatch,
    num_classes: usize,
    rng: &mut R,
) -> Result<LabeledBatch> {
    Ok(batch.with_labels(random_labels(batch.labels.len(), num_classes, rng)?))
}

pub fn poison_untargeted_fixed(batch: &LabeledBatch, num_classes: usize, flood_label: usize) -> Result<LabeledBatch> {
    Ok(batch.with_labels(fixed_labels(batch.labels.len(), num_classes, flood_label)?))
}

/// Each sample labeled `source` takes the pre-attack label of the sample
/// farthest from it (lowest index on ties). A batch without `source`
/// samples, or with a single sample, comes back unchanged.
pub fn poison_distance_based(batch: &LabeledBatch, num_classes: usize, source: usize) -> Result<LabeledBatch> {
    Ok(batch.with_labels(distance_labels(&batch.inputs, &batch.labels, num_classes, source)?))
}

/// Source = best-recognised class, target = runner-up; ties go to the lower index.
pub fn auto_select_source_target(per_class_accuracy: &[f64]) -> Result<(usize, usize)> {
    if per_class_accuracy.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 classes to pick source and target, got {}",
            per_class_accuracy.len()
        )));
    }
    let mut order: Vec<usize> = (0..per_class_accuracy.len()).collect();
    order.sort_by(|&a, &b| {
        per_class_accuracy[b]
            .total_cmp(&per_class_accuracy[a])
            .then(a.cmp(&b))
    });
    Ok((order[0], order[1]))
}
