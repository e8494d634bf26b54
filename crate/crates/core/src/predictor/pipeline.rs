use crate::encoder::{EncoderConfig, HashedEncoder};
use crate::evaluation::{evaluate_realistic, Criterion, Evaluated};
use crate::ingestion::{pool_train, pool_validation, DatasetSplits};
use crate::taxonomy::{LabelMapping, UnifiedHierarchy};

use super::{fit, ClassSpace, ModelError, Result, TrainingConfig, TrainingLog, UhlsExample, UhlsModel};

/// Trains the unified model on the pooled training splits.
///
/// After each epoch the model is scored by best-effort micro-F1 on the
/// combined validation split; the best epoch is returned.
pub fn train_uhls(
    datasets: &[DatasetSplits],
    h: &UnifiedHierarchy,
    m: &LabelMapping,
    encoder: &EncoderConfig,
    config: &TrainingConfig,
) -> Result<(UhlsModel, TrainingLog)> {
    config.validate()?;
    let classes = ClassSpace::from_hierarchy(h);
    let train = pool_train(datasets.iter().map(|d| &d.splits))?;
    let val = pool_validation(datasets.iter().map(|d| &d.splits)).unwrap_or_default();
    let examples = train
        .into_iter()
        .map(|inst| UhlsExample::new(inst, h, m, &classes))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let model = UhlsModel::new(HashedEncoder::new(encoder.clone()), classes, config.beta);
    fit(model, &examples, config, |model| {
        let (report, _) = evaluate_realistic(Evaluated::Uhls(model), &val, Criterion::Direct, h, m)
            .map_err(|e| ModelError::Validation(e.to_string()))?;
        Ok(report.micro_f1)
    })
}
