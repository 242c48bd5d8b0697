//! Class taxonomy, Monte-Carlo dropout aggregation and classification entropy.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SivoError};
use crate::infotheory::{entropy_bits_unchecked, DiscreteDistribution};

/// Whether a class is a reliable long-term reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mobility {
    Static,
    Dynamic,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticClass {
    pub id: usize,
    pub name: String,
    pub mobility: Mobility,
}

/// Dense, immutable list of classes; ids are `0..len`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    classes: Vec<SemanticClass>,
}

const URBAN_CLASSES: [(&str, Mobility); 15] = [
    ("road", Mobility::Static),
    ("sidewalk", Mobility::Static),
    ("building", Mobility::Static),
    ("wall/fence", Mobility::Static),
    ("pole", Mobility::Static),
    ("traffic light", Mobility::Static),
    ("traffic sign", Mobility::Static),
    ("vegetation", Mobility::Static),
    ("terrain", Mobility::Static),
    ("sky", Mobility::Dynamic),
    ("person/rider", Mobility::Dynamic),
    ("car", Mobility::Dynamic),
    ("truck/bus", Mobility::Dynamic),
    ("motorcycle/bicycle", Mobility::Dynamic),
    ("void", Mobility::Dynamic),
];

impl Default for Taxonomy {
    /// The 15-class urban driving taxonomy: nine static, six dynamic.
    fn default() -> Self {
        Taxonomy::new(
            URBAN_CLASSES
                .iter()
                .map(|(name, mobility)| (name.to_string(), *mobility))
                .collect(),
        )
        .expect("built-in taxonomy is valid")
    }
}

impl Taxonomy {
    pub fn new(classes: Vec<(String, Mobility)>) -> Result<Self> {
        if classes.is_empty() {
            return Err(SivoError::InvalidConfig("taxonomy has no classes".into()));
        }
        Ok(Taxonomy {
            classes: classes
                .into_iter()
                .enumerate()
                .map(|(id, (name, mobility))| SemanticClass { id, name, mobility })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class(&self, id: usize) -> Option<&SemanticClass> {
        self.classes.get(id)
    }

    pub fn classes(&self) -> &[SemanticClass] {
        &self.classes
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    pub fn mobility(&self, id: usize) -> Option<Mobility> {
        self.class(id).map(|c| c.mobility)
    }

    pub fn static_ids(&self) -> Vec<usize> {
        self.ids_with(Mobility::Static)
    }

    pub fn dynamic_ids(&self) -> Vec<usize> {
        self.ids_with(Mobility::Dynamic)
    }

    fn ids_with(&self, m: Mobility) -> Vec<usize> {
        self.classes
            .iter()
            .filter(|c| c.mobility == m)
            .map(|c| c.id)
            .collect()
    }

    /// True iff the belief's most likely class is static. Unknown ids are
    /// never admissible.
    pub fn is_admissible(&self, belief: &SemanticBelief) -> bool {
        self.mobility(belief.argmax_class()) == Some(Mobility::Static)
    }
}

/// Numerically stable softmax over finite logits.
pub fn softmax(logits: &[f64]) -> Result<DiscreteDistribution> {
    if logits.is_empty() || logits.iter().any(|v| !v.is_finite()) {
        return Err(SivoError::InvalidDistribution(
            "softmax needs a non-empty vector of finite logits".into(),
        ));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|y| (y - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    DiscreteDistribution::new(exps.into_iter().map(|e| e / total).collect())
}

/// Per-feature outcome of N stochastic forward passes.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticBelief {
    samples: Vec<DiscreteDistribution>,
    aggregate: Vec<f64>,
    variance: Vec<f64>,
    entropy_bits: f64,
    argmax_class: usize,
}

impl SemanticBelief {
    pub fn samples(&self) -> &[DiscreteDistribution] {
        &self.samples
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn class_count(&self) -> usize {
        self.aggregate.len()
    }

    /// Mean of the sample probability vectors.
    pub fn aggregate(&self) -> &[f64] {
        &self.aggregate
    }

    /// Per-class population variance (divides by N) across samples.
    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn entropy_bits(&self) -> f64 {
        self.entropy_bits
    }

    pub fn argmax_class(&self) -> usize {
        self.argmax_class
    }

    /// A single certain sample of `class` among `classes`.
    pub fn certain(class: usize, classes: usize) -> Result<Self> {
        if class >= classes {
            return Err(SivoError::InvalidDistribution(format!(
                "class {class} out of range for {classes} classes"
            )));
        }
        let mut p = vec![0.0; classes];
        p[class] = 1.0;
        aggregate_mc(vec![DiscreteDistribution::new(p)?])
    }
}

/// Averages MC-dropout samples; ties in the argmax go to the lowest class id.
pub fn aggregate_mc(samples: Vec<DiscreteDistribution>) -> Result<SemanticBelief> {
    let first = samples.first().ok_or(SivoError::EmptySampleSet)?;
    let classes = first.len();
    if let Some((index, s)) = samples.iter().enumerate().find(|(_, s)| s.len() != classes) {
        return Err(SivoError::LengthMismatch {
            index,
            expected: classes,
            found: s.len(),
        });
    }
    let n = samples.len() as f64;
    let mut aggregate = vec![0.0; classes];
    for s in &samples {
        for (acc, p) in aggregate.iter_mut().zip(s.probabilities()) {
            *acc += p;
        }
    }
    aggregate.iter_mut().for_each(|v| *v /= n);

    let mut variance = vec![0.0; classes];
    for s in &samples {
        for ((var, p), mean) in variance.iter_mut().zip(s.probabilities()).zip(&aggregate) {
            *var += (p - mean) * (p - mean);
        }
    }
    variance.iter_mut().for_each(|v| *v /= n);

    let mut argmax_class = 0;
    for (c, &p) in aggregate.iter().enumerate() {
        if p > aggregate[argmax_class] {
            argmax_class = c;
        }
    }

    let entropy_bits = entropy_bits_unchecked(&aggregate);
    Ok(SemanticBelief {
        samples,
        aggregate,
        variance,
        entropy_bits,
        argmax_class,
    })
}

/// Entropy of the MC-averaged class distribution, in bits.
pub fn classification_entropy(belief: &SemanticBelief) -> f64 {
    belief.entropy_bits()
}
