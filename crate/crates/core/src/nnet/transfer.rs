use crate::error::{Error, Result};
use crate::nnet::model::{AcousticModel, OutputLayer, TrainingState};
use crate::{rng, Real};

/// Copies every hidden layer and the input normalization, and attaches a fresh
/// output layer for `new_phone_set`. The extractor fingerprint carries over.
pub fn transfer_hidden<T: Real>(
    source: &AcousticModel<T>,
    new_phone_set: &[String],
    seed: u64,
) -> Result<AcousticModel<T>> {
    source.validate()?;
    if new_phone_set.is_empty() {
        return Err(Error::InvalidArgument("new phone set is empty".into()));
    }
    let top = source
        .hidden
        .last()
        .map(|l| l.output_dim())
        .unwrap_or(source.input_dim());
    let mut r = rng::stream(seed, &["transfer-output", &new_phone_set.len().to_string()]);
    Ok(AcousticModel {
        input_norm: source.input_norm.clone(),
        hidden: source.hidden.clone(),
        output: OutputLayer::random(top, new_phone_set.len(), &mut r),
        phone_set: new_phone_set.to_vec(),
        fingerprint: source.fingerprint,
        dropout_rate: source.dropout_rate,
        state: TrainingState::default(),
    })
}

/// Copies the entire model, output layer included.
pub fn transfer_full<T: Real>(source: &AcousticModel<T>) -> Result<AcousticModel<T>> {
    source.validate()?;
    Ok(AcousticModel {
        state: TrainingState::default(),
        ..source.clone()
    })
}
