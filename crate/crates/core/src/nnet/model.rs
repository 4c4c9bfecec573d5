use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Fingerprint};
use crate::nnet::layers::{uniform, Layer, LayerCache, LayerSpec};
use crate::{rng, Real};

/// Hidden layer stack plus dropout, independent of input and output sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Two TDNN layers (context -1..+1, 64 units) followed by an LSTMP (cell 64, projection 32).
    pub fn desk() -> Self {
        Self {
            layers: vec![
                LayerSpec::tdnn(&[-1, 0, 1], 64),
                LayerSpec::tdnn(&[-1, 0, 1], 64),
                LayerSpec::lstmp(64, 32),
            ],
        }
    }

    /// Seven 1024-unit TDNN layers interleaved with three LSTMP layers (cell 1024,
    /// projection 256) in the order T-T-T-L-T-T-L-T-T-L.
    pub fn paper_scale() -> Self {
        let t = |o: &[isize]| LayerSpec::tdnn(o, 1024);
        let l = || LayerSpec::lstmp(1024, 256);
        Self {
            layers: vec![
                t(&[0]),
                t(&[-1, 0, 1]),
                t(&[-1, 0, 1]),
                l(),
                t(&[-3, 0, 3]),
                t(&[-3, 0, 3]),
                l(),
                t(&[-3, 0, 3]),
                t(&[-3, 0, 3]),
                l(),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument(
                "architecture needs at least one hidden layer".into(),
            ));
        }
        for l in &self.layers {
            l.validate().map_err(Error::InvalidArgument)?;
        }
        Ok(())
    }
}

/// Fixed affine normalization of the network input, estimated once from the
/// first training data a model sees and carried along by weight transfer.
#[derive(Clone, Debug, PartialEq)]
pub struct InputNorm<T> {
    pub mean: Array1<T>,
    pub inv_std: Array1<T>,
}

impl<T: Real> InputNorm<T> {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            inv_std: Array1::ones(dim),
        }
    }

    pub fn estimate<'a>(
        dim: usize,
        data: impl IntoIterator<Item = &'a FeatureMatrix<T>>,
    ) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = Array1::<f64>::zeros(dim);
        let mut sq = Array1::<f64>::zeros(dim);
        for f in data {
            if f.dims() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "input has {} dims, model {dim}",
                    f.dims()
                )));
            }
            for row in f.data.rows() {
                for (j, &v) in row.iter().enumerate() {
                    let v = v.as_f64();
                    sum[j] += v;
                    sq[j] += v * v;
                }
            }
            n += f.frames();
        }
        if n == 0 {
            return Err(Error::EmptyInput("normalization data"));
        }
        let mean = &sum / n as f64;
        let var = &sq / n as f64 - &mean * &mean;
        Ok(Self {
            mean: mean.mapv(T::lit),
            inv_std: var.mapv(|v| T::lit(1.0 / v.max(1e-8).sqrt())),
        })
    }

    pub fn apply(&self, x: &Array2<T>) -> Array2<T> {
        (x - &self.mean) * &self.inv_std
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputLayer<T> {
    /// `phones x input_dim`
    pub w: Array2<T>,
    pub b: Array1<T>,
}

impl<T: Real> OutputLayer<T> {
    /// Uniform in `+-1/sqrt(fan_in)`, zero bias.
    pub fn random<R: Rng>(input_dim: usize, phones: usize, r: &mut R) -> Self {
        Self {
            w: uniform(phones, input_dim, 1.0 / (input_dim as f64).sqrt(), r),
            b: Array1::zeros(phones),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.len()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingState {
    pub epochs_completed: u32,
    pub last_lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcousticModel<T> {
    pub input_norm: InputNorm<T>,
    pub hidden: Vec<Layer<T>>,
    pub output: OutputLayer<T>,
    pub phone_set: Vec<String>,
    pub fingerprint: Fingerprint,
    pub dropout_rate: f64,
    pub state: TrainingState,
}

/// Gradient buffers shaped like the trainable parts of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub hidden: Vec<Layer<T>>,
    pub output: OutputLayer<T>,
}

impl<T: Real> Gradients<T> {
    pub fn slices(&self) -> Vec<&[T]> {
        let mut v: Vec<&[T]> = self.hidden.iter().flat_map(|l| l.param_slices()).collect();
        v.push(self.output.w.as_slice().unwrap());
        v.push(self.output.b.as_slice().unwrap());
        v
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, &y)| *x += y);
        }
    }

    pub fn scale(&mut self, k: T) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|x| *x *= k);
        }
    }

    pub fn norm(&self) -> T {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|&x| x * x)
            .sum::<T>()
            .sqrt()
    }

    fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut v: Vec<&mut [T]> = self
            .hidden
            .iter_mut()
            .flat_map(|l| l.param_slices_mut())
            .collect();
        v.push(self.output.w.as_slice_mut().unwrap());
        v.push(self.output.b.as_slice_mut().unwrap());
        v
    }
}

/// Per-layer dropout masks for one sequence (already scaled by `1 / keep`).
pub type DropoutMasks<T> = Vec<Option<Array2<T>>>;

impl<T: Real> AcousticModel<T> {
    pub fn random(
        arch: &Architecture,
        input_dim: usize,
        phone_set: Vec<String>,
        fingerprint: Fingerprint,
        seed: u64,
    ) -> Result<Self> {
        arch.validate()?;
        if phone_set.is_empty() {
            return Err(Error::InvalidArgument("phone set must be non-empty".into()));
        }
        if input_dim == 0 {
            return Err(Error::InvalidArgument("input dim must be positive".into()));
        }
        let mut r = rng::stream(seed, &["model-init"]);
        let mut dim = input_dim;
        let mut hidden = Vec::with_capacity(arch.layers.len());
        for spec in &arch.layers {
            hidden.push(Layer::random(spec, dim, &mut r));
            dim = spec.output_dim();
        }
        let output = OutputLayer::random(
            dim,
            phone_set.len(),
            &mut rng::stream(seed, &["output-init"]),
        );
        Ok(Self {
            input_norm: InputNorm::identity(input_dim),
            hidden,
            output,
            phone_set,
            fingerprint,
            dropout_rate: 0.0,
            state: TrainingState::default(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_norm.mean.len()
    }

    pub fn num_phones(&self) -> usize {
        self.phone_set.len()
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            layers: self.hidden.iter().map(Layer::spec).collect(),
        }
    }

    pub fn phone_index(&self, phone: &str) -> Option<usize> {
        self.phone_set.iter().position(|p| p == phone)
    }

    pub fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Checks that dimensions chain and the output matches the phone set.
    pub fn validate(&self) -> Result<()> {
        let mut dim = self.input_dim();
        if self.input_norm.inv_std.len() != dim {
            return Err(Error::DimensionMismatch(
                "input normalization sizes differ".into(),
            ));
        }
        for (i, l) in self.hidden.iter().enumerate() {
            if l.input_dim() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "layer {i} expects {} inputs, gets {dim}",
                    l.input_dim()
                )));
            }
            dim = l.output_dim();
        }
        if self.output.w.ncols() != dim || self.output.b.len() != self.output.w.nrows() {
            return Err(Error::DimensionMismatch(
                "output layer does not match last hidden layer".into(),
            ));
        }
        if self.output.w.nrows() != self.phone_set.len() {
            return Err(Error::DimensionMismatch(format!(
                "output has {} rows for {} phones",
                self.output.w.nrows(),
                self.phone_set.len()
            )));
        }
        Ok(())
    }

    /// Trainable tensors in a fixed order: hidden layers, then output weights and bias.
    pub fn param_slices(&self) -> Vec<&[T]> {
        let mut v: Vec<&[T]> = self.hidden.iter().flat_map(|l| l.param_slices()).collect();
        v.push(self.output.w.as_slice().unwrap());
        v.push(self.output.b.as_slice().unwrap());
        v
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut v: Vec<&mut [T]> = self
            .hidden
            .iter_mut()
            .flat_map(|l| l.param_slices_mut())
            .collect();
        v.push(self.output.w.as_slice_mut().unwrap());
        v.push(self.output.b.as_slice_mut().unwrap());
        v
    }

    /// Names matching [`Self::param_slices`], e.g. `hidden2.lstmp.peep_f`.
    pub fn param_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (i, l) in self.hidden.iter().enumerate() {
            let kind = match l {
                Layer::Tdnn(_) => "tdnn",
                Layer::Lstmp(_) => "lstmp",
            };
            v.extend(
                l.param_names()
                    .iter()
                    .map(|n| format!("hidden{i}.{kind}.{n}")),
            );
        }
        v.push("output.w".into());
        v.push("output.b".into());
        v
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients {
            hidden: self.hidden.iter().map(Layer::zeros_like).collect(),
            output: self.output.zeros_like(),
        }
    }

    /// Frames of left and right context the TDNN stack reads.
    pub fn context(&self) -> (usize, usize) {
        self.hidden.iter().fold((0, 0), |(l, r), layer| {
            let (a, b) = layer.context();
            (l + a, r + b)
        })
    }

    fn check_input(&self, inputs: &Array2<T>) -> Result<()> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input has {} dims, model expects {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        if inputs.nrows() == 0 {
            return Err(Error::EmptyInput("input frames"));
        }
        Ok(())
    }

    fn logits(
        &self,
        inputs: &Array2<T>,
        masks: Option<&DropoutMasks<T>>,
    ) -> (Array2<T>, Vec<Array2<T>>, Vec<LayerCache<T>>) {
        let mut h = self.input_norm.apply(inputs);
        let mut acts = Vec::with_capacity(self.hidden.len() + 1);
        let mut caches = Vec::with_capacity(self.hidden.len());
        for (i, layer) in self.hidden.iter().enumerate() {
            let (mut y, cache) = layer.forward(&h);
            if let Some(Some(mask)) = masks.and_then(|m| m.get(i)) {
                y *= mask;
            }
            acts.push(h);
            caches.push(cache);
            h = y;
        }
        let logits = h.dot(&self.output.w.t()) + &self.output.b;
        acts.push(h);
        (logits, acts, caches)
    }

    /// Per-frame phone posteriors, frames x phones; each row sums to one.
    pub fn forward(&self, inputs: &FeatureMatrix<T>) -> Result<Array2<T>> {
        self.check_input(&inputs.data)?;
        let (logits, _, _) = self.logits(&inputs.data, None);
        Ok(softmax_rows(logits))
    }

    /// Draws inverted-dropout masks for a sequence of `frames` frames.
    pub fn dropout_masks<R: Rng>(&self, frames: usize, rate: f64, r: &mut R) -> DropoutMasks<T> {
        if rate <= 0.0 {
            return vec![None; self.hidden.len()];
        }
        let keep = 1.0 - rate;
        let scale = T::lit(1.0 / keep);
        self.hidden
            .iter()
            .map(|l| {
                Some(Array2::from_shape_simple_fn(
                    (frames, l.output_dim()),
                    || {
                        if r.random::<f64>() < keep {
                            scale
                        } else {
                            T::zero()
                        }
                    },
                ))
            })
            .collect()
    }

    /// Summed cross-entropy over frames `[from, to)` and gradients of that sum.
    /// Frames outside the range still feed context and recurrence.
    pub fn loss_sum_and_grads(
        &self,
        inputs: &Array2<T>,
        labels: &[usize],
        range: (usize, usize),
        masks: Option<&DropoutMasks<T>>,
        grads: &mut Gradients<T>,
    ) -> Result<T> {
        self.check_input(inputs)?;
        if labels.len() != inputs.nrows() {
            return Err(Error::Label(format!(
                "{} labels for {} frames",
                labels.len(),
                inputs.nrows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.num_phones()) {
            return Err(Error::Label(format!(
                "label index {bad} outside phone set of {}",
                self.num_phones()
            )));
        }
        let (from, to) = range;
        let (logits, acts, caches) = self.logits(inputs, masks);
        let mut probs = softmax_rows(logits);
        let mut loss = T::zero();
        for (t, mut row) in probs.rows_mut().into_iter().enumerate() {
            if t < from || t >= to {
                row.fill(T::zero());
                continue;
            }
            loss += nll(row[labels[t]]);
            row[labels[t]] -= T::one();
        }
        let dlogits = probs;
        let top = acts.last().expect("output input");
        grads.output.w += &dlogits.t().dot(top);
        grads.output.b += &dlogits.sum_axis(Axis(0));
        let mut dh = dlogits.dot(&self.output.w);
        for i in (0..self.hidden.len()).rev() {
            if let Some(Some(mask)) = masks.and_then(|m| m.get(i)) {
                dh *= mask;
            }
            dh = self.hidden[i].backward(&caches[i], &dh, &mut grads.hidden[i]);
        }
        Ok(loss)
    }

    /// Mean cross-entropy over all frames and its gradients.
    pub fn loss_and_grads(
        &self,
        inputs: &FeatureMatrix<T>,
        labels: &[usize],
    ) -> Result<(T, Gradients<T>)> {
        let mut g = self.zero_gradients();
        let n = inputs.frames();
        let loss = self.loss_sum_and_grads(&inputs.data, labels, (0, n), None, &mut g)?;
        let k = T::one() / T::lit(n as f64);
        g.scale(k);
        Ok((loss * k, g))
    }

    /// Mean cross-entropy without gradients.
    pub fn loss(&self, inputs: &FeatureMatrix<T>, labels: &[usize]) -> Result<T> {
        let p = self.forward(inputs)?;
        if labels.len() != p.nrows() {
            return Err(Error::Label(format!(
                "{} labels for {} frames",
                labels.len(),
                p.nrows()
            )));
        }
        let mut loss = T::zero();
        for (row, &l) in p.rows().into_iter().zip(labels) {
            let pl = *row
                .get(l)
                .ok_or_else(|| Error::Label(format!("label index {l} outside phone set")))?;
            loss += nll(pl);
        }
        Ok(loss / T::lit(labels.len() as f64))
    }

    pub fn convert<U: Real>(&self) -> AcousticModel<U> {
        let c2 = |a: &Array2<T>| a.mapv(|v| U::lit(v.as_f64()));
        let c1 = |a: &Array1<T>| a.mapv(|v| U::lit(v.as_f64()));
        use crate::nnet::layers::{LstmpLayer, TdnnLayer};
        AcousticModel {
            input_norm: InputNorm {
                mean: c1(&self.input_norm.mean),
                inv_std: c1(&self.input_norm.inv_std),
            },
            hidden: self
                .hidden
                .iter()
                .map(|l| match l {
                    Layer::Tdnn(t) => Layer::Tdnn(TdnnLayer {
                        offsets: t.offsets.clone(),
                        w: c2(&t.w),
                        b: c1(&t.b),
                    }),
                    Layer::Lstmp(t) => Layer::Lstmp(LstmpLayer {
                        w_x: c2(&t.w_x),
                        w_r: c2(&t.w_r),
                        b: c1(&t.b),
                        peep_i: c1(&t.peep_i),
                        peep_f: c1(&t.peep_f),
                        peep_o: c1(&t.peep_o),
                        w_proj: c2(&t.w_proj),
                    }),
                })
                .collect(),
            output: OutputLayer {
                w: c2(&self.output.w),
                b: c1(&self.output.b),
            },
            phone_set: self.phone_set.clone(),
            fingerprint: self.fingerprint,
            dropout_rate: self.dropout_rate,
            state: self.state,
        }
    }
}

/// Negative log of a posterior, floored away from zero; NaN passes through so
/// divergence stays visible.
fn nll<T: Real>(p: T) -> T {
    if p.is_nan() {
        p
    } else {
        -p.max(T::min_positive_value()).ln()
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows<T: Real>(mut logits: Array2<T>) -> Array2<T> {
    for mut row in logits.rows_mut() {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    logits
}
