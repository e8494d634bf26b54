use std::collections::BTreeSet;

use crate::encoder::{Encoder, EncoderGradient, HashedEncoder};
use crate::ingestion::MentionInstance;
use crate::taxonomy::{LabelId, LabelMapping, TaxonomyError, UnifiedHierarchy};

use super::training::Trainable;
use super::{ClassSpace, Result, TypePredictor};

/// Encoder plus unified head.
#[derive(Clone, Debug, PartialEq)]
pub struct UhlsModel<E: Encoder = HashedEncoder> {
    pub encoder: E,
    pub head: TypePredictor,
}

/// A training instance with its precomputed candidate classes (sorted, non-empty).
#[derive(Clone, Debug, PartialEq)]
pub struct UhlsExample {
    pub instance: MentionInstance,
    pub candidates: Vec<usize>,
}

impl UhlsExample {
    /// Candidates are the union of `candidate_set(g)` over the instance's gold labels.
    pub fn new(
        instance: MentionInstance,
        h: &UnifiedHierarchy,
        mapping: &LabelMapping,
        classes: &ClassSpace,
    ) -> std::result::Result<Self, TaxonomyError> {
        let mut set = BTreeSet::new();
        for g in &instance.gold {
            let label = LabelId::new(&instance.dataset, g);
            for node in mapping.candidate_set(h, &label)? {
                set.insert(classes.class_of_node(h, node).expect("non-root node has a class"));
            }
        }
        Ok(UhlsExample {
            instance,
            candidates: set.into_iter().collect(),
        })
    }
}

/// One prediction over the unified label set.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub key: String,
    pub confidence: f64,
}

/// Parameter gradient of [`UhlsModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGradient<G> {
    pub encoder: G,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl<G: EncoderGradient> ModelGradient<G> {
    pub fn accumulate(&mut self, other: &Self) {
        self.encoder.accumulate(&other.encoder);
        self.weights.iter_mut().zip(&other.weights).for_each(|(a, b)| *a += b);
        self.bias.iter_mut().zip(&other.bias).for_each(|(a, b)| *a += b);
    }
}

impl<E: Encoder> UhlsModel<E> {
    pub fn new(encoder: E, classes: ClassSpace, beta: f64) -> Self {
        let head = TypePredictor::zeros(encoder.dim(), classes, beta);
        UhlsModel { encoder, head }
    }

    pub fn classes(&self) -> &ClassSpace {
        &self.head.classes
    }

    /// Adjusted distribution over all classes.
    pub fn distribution(&self, inst: &MentionInstance) -> Result<Vec<f64>> {
        let r = self.encoder.encode(inst)?;
        let p = self.head.label_distribution(r.as_slice())?;
        Ok(self.head.adjusted_distribution(&p))
    }

    pub fn predict(&self, inst: &MentionInstance) -> Result<Prediction> {
        let r = self.encoder.encode(inst)?;
        let (class, confidence) = self.head.predict(r.as_slice())?;
        Ok(Prediction {
            class,
            key: self.head.classes.key(class).to_string(),
            confidence,
        })
    }

    /// Partial loss of one example with the selected class.
    pub fn loss(&self, ex: &UhlsExample) -> Result<(f64, usize)> {
        let adjusted = self.distribution(&ex.instance)?;
        self.head.partial_loss(&adjusted, &ex.candidates)
    }

    /// Loss and exact parameter gradient of one example.
    pub fn backward(&self, ex: &UhlsExample) -> Result<(f64, ModelGradient<E::Gradient>)> {
        let r = self.encoder.encode(&ex.instance)?;
        let g = self.head.loss_backward(r.as_slice(), &ex.candidates)?;
        let encoder = self.encoder.backward(&ex.instance, &g.repr)?;
        Ok((
            g.loss,
            ModelGradient {
                encoder,
                weights: g.weights,
                bias: g.bias,
            },
        ))
    }
}

impl<E: Encoder> Trainable for UhlsModel<E> {
    type Example = UhlsExample;
    type Gradient = ModelGradient<E::Gradient>;

    fn example_gradient(&self, ex: &UhlsExample) -> Result<(f64, Self::Gradient)> {
        self.backward(ex)
    }

    fn zero_gradient(&self) -> Self::Gradient {
        ModelGradient {
            encoder: self.encoder.zero_gradient(),
            weights: vec![0.0; self.head.weights.len()],
            bias: vec![0.0; self.head.bias.len()],
        }
    }

    fn accumulate(total: &mut Self::Gradient, g: &Self::Gradient) {
        total.accumulate(g);
    }

    fn apply(&mut self, g: &Self::Gradient, step: f64) {
        self.encoder.apply(&g.encoder, step);
        self.head.weights.iter_mut().zip(&g.weights).for_each(|(w, d)| *w -= step * d);
        self.head.bias.iter_mut().zip(&g.bias).for_each(|(b, d)| *b -= step * d);
    }
}
