use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::LabelTrack;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::nnet::model::{AcousticModel, Gradients};
use crate::{rng, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub final_lr: f64,
    pub epochs: u32,
    /// Sequences (chunks) per SGD step.
    pub batch: usize,
    /// Frames per training chunk; 0 trains on whole utterances.
    pub bptt_chunk: usize,
    pub seed: u64,
    pub dropout_rate: f64,
    /// Rescale the step gradient to this L2 norm when it is larger.
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 0.5,
            final_lr: 0.05,
            epochs: 4,
            batch: 8,
            bptt_chunk: 50,
            seed: 0,
            dropout_rate: 0.1,
            max_grad_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.initial_lr > 0.0 && self.final_lr > 0.0) || !self.initial_lr.is_finite() {
            return bad("learning rates must be positive");
        }
        if self.final_lr > self.initial_lr {
            return bad("final_lr must not exceed initial_lr");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch == 0 {
            return bad("batch must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        if matches!(self.max_grad_norm, Some(n) if !(n > 0.0)) {
            return bad("max_grad_norm must be positive");
        }
        Ok(())
    }
}

/// Exponential decay from `initial` (step 0) to exactly `final_lr` (last step).
pub fn learning_rate(initial: f64, final_lr: f64, step: usize, total_steps: usize) -> f64 {
    if total_steps <= 1 || step == 0 {
        return initial;
    }
    if step + 1 >= total_steps {
        return final_lr;
    }
    initial * (final_lr / initial).powf(step as f64 / (total_steps - 1) as f64)
}

/// One utterance of network input with its frame labels (phone indices).
#[derive(Clone, Debug, PartialEq)]
pub struct Example<T> {
    pub id: String,
    pub inputs: FeatureMatrix<T>,
    pub labels: Vec<usize>,
}

/// Maps a label track onto indices into `phone_set`.
pub fn phone_indices(track: &LabelTrack, phone_set: &[String]) -> Result<Vec<usize>> {
    track
        .0
        .iter()
        .map(|p| {
            phone_set
                .iter()
                .position(|q| q == p)
                .ok_or_else(|| Error::UnknownPhone(p.clone()))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    /// Mean frame cross-entropy over the epoch, measured with dropout active.
    pub loss: f64,
    pub frames: usize,
    pub lr_start: f64,
    pub lr_end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub initial_lr: f64,
    pub final_lr: f64,
    pub dropout_rate: f64,
    pub steps: usize,
    pub epochs: Vec<EpochRecord>,
    /// Set when inputs were built with an embedding whose fingerprint differs from the model's.
    #[serde(default)]
    pub fingerprint_override: bool,
}

#[derive(Clone, Copy, Debug)]
struct Chunk {
    example: usize,
    /// Frames fed to the network.
    span: (usize, usize),
    /// Frames scored, relative to `span.0`.
    target: (usize, usize),
}

fn chunks<T>(data: &[Example<T>], chunk: usize, context: (usize, usize)) -> Vec<Chunk> {
    let mut out = Vec::new();
    for (i, e) in data.iter().enumerate() {
        let n = e.labels.len();
        let step = if chunk == 0 { n } else { chunk };
        let mut start = 0;
        while start < n {
            let end = (start + step).min(n);
            let lo = start.saturating_sub(context.0);
            let hi = (end + context.1).min(n);
            out.push(Chunk {
                example: i,
                span: (lo, hi),
                target: (start - lo, end - lo),
            });
            start = end;
        }
    }
    out
}

fn check_data<T: Real>(m: &AcousticModel<T>, data: &[Example<T>]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyInput("training data"));
    }
    for e in data {
        if e.inputs.dims() != m.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}: input has {} dims, model expects {}",
                e.id,
                e.inputs.dims(),
                m.input_dim()
            )));
        }
        if e.labels.len() != e.inputs.frames() || e.labels.is_empty() {
            return Err(Error::Label(format!(
                "{}: {} labels for {} frames",
                e.id,
                e.labels.len(),
                e.inputs.frames()
            )));
        }
        if let Some(&l) = e.labels.iter().find(|&&l| l >= m.num_phones()) {
            return Err(Error::Label(format!(
                "{}: label index {l} outside phone set",
                e.id
            )));
        }
    }
    Ok(())
}

/// Plain SGD on frame cross-entropy. Chunks are shuffled per epoch from the seed;
/// per-chunk gradients may be computed in parallel but are summed in batch order,
/// so the result is bit-reproducible.
pub fn train<T: Real>(
    mut m: AcousticModel<T>,
    data: &[Example<T>],
    cfg: &TrainConfig,
) -> Result<(AcousticModel<T>, TrainingLog)> {
    cfg.validate()?;
    m.validate()?;
    check_data(&m, data)?;
    let context = m.context();
    let mut order = chunks(data, cfg.bptt_chunk, context);
    let steps_per_epoch = order.len().div_ceil(cfg.batch);
    let total = steps_per_epoch * cfg.epochs as usize;
    let mut log = TrainingLog {
        initial_lr: cfg.initial_lr,
        final_lr: cfg.final_lr,
        dropout_rate: cfg.dropout_rate,
        steps: total,
        epochs: Vec::new(),
        fingerprint_override: false,
    };
    m.dropout_rate = cfg.dropout_rate;
    let mut step = 0usize;
    let mut last_lr = cfg.initial_lr;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(cfg.seed, &["shuffle", &epoch.to_string()]));
        let lr_start = learning_rate(cfg.initial_lr, cfg.final_lr, step, total);
        let (mut loss_sum, mut frames) = (0.0f64, 0usize);
        for batch in order.chunks(cfg.batch) {
            let results: Vec<Result<(T, usize, Gradients<T>)>> = batch
                .par_iter()
                .enumerate()
                .map(|(k, c)| {
                    let e = &data[c.example];
                    let inputs = e
                        .inputs
                        .data
                        .slice(ndarray::s![c.span.0..c.span.1, ..])
                        .to_owned();
                    let labels = &e.labels[c.span.0..c.span.1];
                    let masks = (cfg.dropout_rate > 0.0).then(|| {
                        let tags = [
                            "dropout",
                            &epoch.to_string(),
                            &step.to_string(),
                            &k.to_string(),
                        ];
                        m.dropout_masks(
                            inputs.nrows(),
                            cfg.dropout_rate,
                            &mut rng::stream(cfg.seed, &tags),
                        )
                    });
                    let mut g = m.zero_gradients();
                    let loss =
                        m.loss_sum_and_grads(&inputs, labels, c.target, masks.as_ref(), &mut g)?;
                    Ok((loss, c.target.1 - c.target.0, g))
                })
                .collect();
            let mut grad: Option<Gradients<T>> = None;
            let (mut step_loss, mut step_frames) = (0.0f64, 0usize);
            for r in results {
                let (l, n, g) = r?;
                step_loss += l.as_f64();
                step_frames += n;
                match grad.as_mut() {
                    Some(acc) => acc.add_assign(&g),
                    None => grad = Some(g),
                }
            }
            if !step_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch as usize,
                    step,
                    loss: step_loss / step_frames as f64,
                });
            }
            let mut grad = grad.expect("non-empty batch");
            grad.scale(T::lit(1.0 / step_frames as f64));
            if let Some(max) = cfg.max_grad_norm {
                let norm = grad.norm().as_f64();
                if norm > max {
                    grad.scale(T::lit(max / norm));
                }
            }
            let lr = learning_rate(cfg.initial_lr, cfg.final_lr, step, total);
            let neg_lr = T::lit(-lr);
            for (p, g) in m.param_slices_mut().into_iter().zip(grad.slices()) {
                p.iter_mut().zip(g).for_each(|(p, &g)| *p += neg_lr * g);
            }
            last_lr = lr;
            loss_sum += step_loss;
            frames += step_frames;
            step += 1;
        }
        log.epochs.push(EpochRecord {
            epoch: m.state.epochs_completed + 1,
            loss: loss_sum / frames as f64,
            frames,
            lr_start,
            lr_end: last_lr,
        });
        m.state.epochs_completed += 1;
    }
    m.state.last_lr = last_lr;
    Ok((m, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Fingerprint;
    use crate::nnet::{Architecture, LayerSpec};
    use ndarray::Array2;
    use rand::Rng;

    fn toy(n_utts: usize, frames: usize, seed: u64) -> Vec<Example<f64>> {
        let mut r = rng::stream(seed, &["toy"]);
        (0..n_utts)
            .map(|u| {
                let labels: Vec<usize> = (0..frames).map(|t| (t / 4 + u) % 2).collect();
                let data = Array2::from_shape_fn((frames, 3), |(t, j)| {
                    let centre = if labels[t] == 0 { -1.0 } else { 1.0 };
                    centre * [1.0, 0.5, -0.7][j] + 0.3 * r.random_range(-1.0..1.0)
                });
                Example {
                    id: format!("u{u}"),
                    inputs: FeatureMatrix::new(data, 10.0).unwrap(),
                    labels,
                }
            })
            .collect()
    }

    fn small_model() -> AcousticModel<f64> {
        let arch = Architecture {
            layers: vec![LayerSpec::tdnn(&[-1, 0, 1], 8), LayerSpec::lstmp(6, 4)],
        };
        AcousticModel::random(&arch, 3, vec!["a".into(), "b".into()], Fingerprint(1), 11).unwrap()
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(learning_rate(0.3, 0.01, 0, 1), 0.3);
        assert_eq!(learning_rate(0.3, 0.01, 0, 10), 0.3);
        assert!((learning_rate(0.3, 0.01, 9, 10) - 0.01).abs() < 1e-9);
        let mid = learning_rate(0.4, 0.1, 1, 3);
        assert!((mid - 0.2).abs() < 1e-12);
    }

    #[test]
    fn schedule_is_monotone() {
        let lrs: Vec<f64> = (0..20).map(|s| learning_rate(1.0, 0.001, s, 20)).collect();
        assert!(lrs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn single_step_uses_initial_lr() {
        let data = toy(1, 10, 1);
        let cfg = TrainConfig {
            epochs: 1,
            batch: 4,
            bptt_chunk: 0,
            initial_lr: 0.2,
            final_lr: 0.02,
            dropout_rate: 0.0,
            ..Default::default()
        };
        let (m, log) = train(small_model(), &data, &cfg).unwrap();
        assert_eq!(log.steps, 1);
        assert_eq!(log.epochs[0].lr_start, 0.2);
        assert_eq!(m.state.last_lr, 0.2);
    }

    #[test]
    fn last_step_uses_final_lr() {
        let data = toy(4, 30, 2);
        let cfg = TrainConfig {
            epochs: 3,
            batch: 2,
            bptt_chunk: 10,
            initial_lr: 0.2,
            final_lr: 0.02,
            ..Default::default()
        };
        let (m, log) = train(small_model(), &data, &cfg).unwrap();
        assert_eq!(log.steps, 18);
        assert!((m.state.last_lr - 0.02).abs() < 1e-9);
        assert_eq!(m.state.epochs_completed, 3);
    }

    #[test]
    fn separable_toy_loss_decreases() {
        let data = toy(6, 40, 3);
        let cfg = TrainConfig {
            epochs: 6,
            batch: 2,
            bptt_chunk: 20,
            initial_lr: 0.3,
            final_lr: 0.1,
            dropout_rate: 0.0,
            ..Default::default()
        };
        let (_, log) = train(small_model(), &data, &cfg).unwrap();
        let losses: Vec<f64> = log.epochs.iter().map(|e| e.loss).collect();
        assert!(losses[..6].windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }

    #[test]
    fn training_is_reproducible() {
        let data = toy(5, 33, 4);
        let cfg = TrainConfig {
            epochs: 2,
            batch: 3,
            bptt_chunk: 8,
            ..Default::default()
        };
        let a = train(small_model(), &data, &cfg).unwrap();
        let b = train(small_model(), &data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_inputs_rejected() {
        let mut data = toy(1, 10, 5);
        data[0].labels[3] = 7;
        assert!(matches!(
            train(small_model(), &data, &TrainConfig::default()),
            Err(Error::Label(_))
        ));
        assert!(train(small_model(), &[], &TrainConfig::default()).is_err());
        let cfg = TrainConfig {
            final_lr: 1.0,
            initial_lr: 0.1,
            ..Default::default()
        };
        assert!(train(small_model(), &toy(1, 10, 5), &cfg).is_err());
    }

    #[test]
    fn divergence_reported() {
        let mut m = small_model();
        m.output.b[0] = f64::NAN;
        assert!(matches!(
            train(m, &toy(2, 10, 6), &TrainConfig::default()),
            Err(Error::Diverged { .. })
        ));
    }
}
