use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use super::{Conv1d, Dense, InitScheme};
use crate::datakit::CHANNELS;
use crate::ndtensor::{
    binary_cross_entropy, categorical_cross_entropy, conv1d_backward, conv1d_backward_params,
    conv1d_forward, dense_backward, dense_forward, dropout, global_max_pool,
    global_max_pool_backward, l2_penalty, l2_value, relu, relu_backward, sigmoid, softmax, Differentiable,
    DropoutMask, GradientMap, Parameter, RegularizationConfig, Tensor,
};
use crate::rng::{self, Rng};
use crate::signals::TransformKind;
use crate::{Error, Result};

/// `(filters, kernel width)` of the three convolutional layers.
pub const CORE_LAYERS: [(usize, usize); 3] = [(32, 24), (64, 16), (96, 8)];
/// Length of the pooled core output.
pub const FEATURE_DIM: usize = 96;
pub const HAR_HIDDEN: usize = 1024;
pub const TD_HIDDEN: usize = 256;
pub const DROPOUT_RATE: f64 = 0.1;

const TD_COUNT: usize = TransformKind::COUNT;

/// One training or evaluation input with whichever targets apply.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    /// Row-major `timesteps × 3` values.
    pub values: &'a [f64],
    /// Activity distribution (one-hot or teacher soft label).
    pub har: Option<&'a [f64]>,
    pub td: Option<[f64; TD_COUNT]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub features: Vec<f64>,
    pub class_probs: Option<Vec<f64>>,
    pub td_probs: Option<[f64; TD_COUNT]>,
}

/// Three ReLU convolutions with dropout after the first two, then global max
/// pooling to a 96-vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TpnCore {
    pub convs: [Conv1d; 3],
    pub dropout_rate: f64,
}

struct CoreTrace {
    inputs: Vec<Tensor>,
    pre: Vec<Tensor>,
    masks: Vec<DropoutMask>,
    pool_idx: Vec<usize>,
    features: Tensor,
}

impl TpnCore {
    pub fn new(init: InitScheme, seed: u64) -> Self {
        let mut channels = CHANNELS;
        let convs = std::array::from_fn(|i| {
            let (filters, width) = CORE_LAYERS[i];
            let conv = Conv1d::new(&format!("core.conv{}", i + 1), filters, width, channels, init, seed);
            channels = filters;
            conv
        });
        Self {
            convs,
            dropout_rate: DROPOUT_RATE,
        }
    }

    /// Shortest input the valid-padding stack accepts.
    pub fn min_timesteps() -> usize {
        CORE_LAYERS.iter().map(|&(_, w)| w - 1).sum::<usize>() + 1
    }

    pub fn params(&self) -> Vec<&Parameter> {
        self.convs.iter().flat_map(|c| [&c.kernels, &c.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.convs.iter_mut().flat_map(|c| [&mut c.kernels, &mut c.bias]).collect()
    }

    fn forward(&self, values: &[f64], training: bool, rng: &mut Rng) -> Result<CoreTrace> {
        if !values.len().is_multiple_of(CHANNELS) {
            return Err(Error::dim("TpnCore::forward", "channels", CHANNELS, values.len() % CHANNELS));
        }
        let time = values.len() / CHANNELS;
        if time < Self::min_timesteps() {
            return Err(Error::dim("TpnCore::forward", "time", Self::min_timesteps(), time));
        }
        let mut inputs = Vec::with_capacity(3);
        let mut pre = Vec::with_capacity(3);
        let mut masks = Vec::with_capacity(2);
        let mut x = Tensor::new(vec![time, CHANNELS], values.to_vec())?;
        for (i, conv) in self.convs.iter().enumerate() {
            let z = conv1d_forward(&x, &conv.kernels.value, &conv.bias.value)?;
            let a = relu(&z);
            inputs.push(x);
            pre.push(z);
            if i < 2 {
                let (d, mask) = dropout(&a, self.dropout_rate, rng, training)?;
                masks.push(mask);
                x = d;
            } else {
                x = a;
            }
        }
        let (features, pool_idx) = global_max_pool(&x)?;
        Ok(CoreTrace {
            inputs,
            pre,
            masks,
            pool_idx,
            features,
        })
    }

    /// Backpropagates `d_features`, stopping at the lowest trainable layer.
    fn backward(&self, trace: &CoreTrace, d_features: &Tensor, grads: &mut GradientMap) -> Result<()> {
        let Some(lowest) = self.convs.iter().position(|c| !c.is_frozen()) else {
            return Ok(());
        };
        let time3 = trace.pre[2].dim(0);
        let mut upstream = global_max_pool_backward(&trace.pool_idx, d_features, time3)?;
        for i in (lowest..3).rev() {
            let conv = &self.convs[i];
            let dz = relu_backward(&trace.pre[i], &upstream)?;
            let g = if i > lowest {
                conv1d_backward(&trace.inputs[i], &conv.kernels.value, &dz)?
            } else {
                conv1d_backward_params(&trace.inputs[i], &conv.kernels.value, &dz)?
            };
            if !conv.kernels.frozen {
                grads.accumulate(&conv.kernels.name, &g.weights)?;
            }
            if !conv.bias.frozen {
                grads.accumulate(&conv.bias.name, &g.bias)?;
            }
            if i > lowest {
                let d_input = g.input.expect("requested input gradient");
                upstream = trace.masks[i - 1].backward(&d_input);
            }
        }
        Ok(())
    }
}

fn accumulate_dense(layer: &Dense, g: &crate::ndtensor::LayerGradients, grads: &mut GradientMap) -> Result<()> {
    if !layer.weights.frozen {
        grads.accumulate(&layer.weights.name, &g.weights)?;
    }
    if !layer.bias.frozen {
        grads.accumulate(&layer.bias.name, &g.bias)?;
    }
    Ok(())
}

/// Dense 1024 (ReLU) then dense |A| (softmax).
#[derive(Debug, Clone, PartialEq)]
pub struct HarHead {
    pub hidden: Dense,
    pub output: Dense,
}

/// Dense |A| (softmax) with no hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub output: Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierHead {
    Har(HarHead),
    Linear(LinearHead),
}

impl ClassifierHead {
    pub fn params(&self) -> Vec<&Parameter> {
        match self {
            ClassifierHead::Har(h) => h.hidden.params().into_iter().chain(h.output.params()).collect(),
            ClassifierHead::Linear(h) => h.output.params().to_vec(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        match self {
            ClassifierHead::Har(h) => h.hidden.params_mut().into_iter().chain(h.output.params_mut()).collect(),
            ClassifierHead::Linear(h) => h.output.params_mut().into_iter().collect(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ClassifierHead::Har(_) => "har",
            ClassifierHead::Linear(_) => "linear",
        }
    }

    fn output(&self) -> &Dense {
        match self {
            ClassifierHead::Har(h) => &h.output,
            ClassifierHead::Linear(h) => &h.output,
        }
    }
}

/// Eight binary heads: dense 256 (ReLU) then dense 1 (sigmoid). With
/// `shared` set, one 256-unit layer feeds all eight outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TdHeads {
    pub shared: Option<Dense>,
    pub hidden: Vec<Dense>,
    pub outputs: Vec<Dense>,
}

impl TdHeads {
    pub fn new(shared_hidden: bool, init: InitScheme, seed: u64) -> Self {
        let shared = shared_hidden.then(|| Dense::new("td.shared.hidden", FEATURE_DIM, TD_HIDDEN, init, seed));
        let hidden = if shared_hidden {
            Vec::new()
        } else {
            TransformKind::ALL
                .iter()
                .map(|k| Dense::new(&format!("td.{}.hidden", k.name()), FEATURE_DIM, TD_HIDDEN, init, seed))
                .collect()
        };
        let outputs = TransformKind::ALL
            .iter()
            .map(|k| Dense::new(&format!("td.{}.output", k.name()), TD_HIDDEN, 1, init, seed))
            .collect();
        Self { shared, hidden, outputs }
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out: Vec<&Parameter> = Vec::new();
        if let Some(s) = &self.shared {
            out.extend(s.params());
        }
        for t in 0..TD_COUNT {
            if let Some(h) = self.hidden.get(t) {
                out.extend(h.params());
            }
            out.extend(self.outputs[t].params());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = Vec::new();
        if let Some(s) = &mut self.shared {
            out.extend(s.params_mut());
        }
        let mut hidden = self.hidden.iter_mut();
        for o in self.outputs.iter_mut() {
            if let Some(h) = hidden.next() {
                out.extend(h.params_mut());
            }
            out.extend(o.params_mut());
        }
        out
    }
}

struct DenseTrace {
    pre: Tensor,
    act: Tensor,
}

/// All trainable tensors of one network plus their frozen flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    core: TpnCore,
    classifier: Option<ClassifierHead>,
    td_heads: Option<TdHeads>,
    num_classes: usize,
}

impl ModelParameters {
    fn check_classes(num_classes: usize) -> Result<()> {
        if num_classes < 2 {
            return Err(Error::config(format!("need at least 2 activity classes, got {num_classes}")));
        }
        Ok(())
    }

    /// Core plus activity head.
    pub fn har(num_classes: usize, init: InitScheme, seed: u64) -> Result<Self> {
        Self::check_classes(num_classes)?;
        let mut m = Self {
            core: TpnCore::new(init, seed),
            classifier: None,
            td_heads: None,
            num_classes,
        };
        m.attach_har_head(init, seed);
        Ok(m)
    }

    /// Core shared by the activity head and all eight discrimination heads.
    pub fn multitask(num_classes: usize, init: InitScheme, shared_td_hidden: bool, seed: u64) -> Result<Self> {
        let mut m = Self::har(num_classes, init, seed)?;
        m.td_heads = Some(TdHeads::new(shared_td_hidden, init, seed));
        Ok(m)
    }

    /// Core with discrimination heads only.
    pub fn transformation(num_classes: usize, init: InitScheme, shared_td_hidden: bool, seed: u64) -> Result<Self> {
        Self::check_classes(num_classes)?;
        Ok(Self {
            core: TpnCore::new(init, seed),
            classifier: None,
            td_heads: Some(TdHeads::new(shared_td_hidden, init, seed)),
            num_classes,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn core(&self) -> &TpnCore {
        &self.core
    }

    pub fn core_mut(&mut self) -> &mut TpnCore {
        &mut self.core
    }

    pub fn classifier(&self) -> Option<&ClassifierHead> {
        self.classifier.as_ref()
    }

    pub fn td_heads(&self) -> Option<&TdHeads> {
        self.td_heads.as_ref()
    }

    /// Replaces the classifier with a freshly initialized activity head.
    pub fn attach_har_head(&mut self, init: InitScheme, seed: u64) {
        let k = self.num_classes;
        self.classifier = Some(ClassifierHead::Har(HarHead {
            hidden: Dense::new("har.hidden", FEATURE_DIM, HAR_HIDDEN, init, seed),
            output: Dense::new("har.output", HAR_HIDDEN, k, init, seed),
        }));
    }

    /// Replaces the classifier with a Gaussian(0, 0.01²) linear head.
    pub fn attach_linear_head(&mut self, seed: u64) {
        let k = self.num_classes;
        self.classifier = Some(ClassifierHead::Linear(LinearHead {
            output: Dense::new("linear.output", FEATURE_DIM, k, InitScheme::Gaussian { std: 0.01 }, seed),
        }));
    }

    pub fn attach_td_heads(&mut self, shared_hidden: bool, init: InitScheme, seed: u64) {
        self.td_heads = Some(TdHeads::new(shared_hidden, init, seed));
    }

    pub fn detach_td_heads(&mut self) -> Option<TdHeads> {
        self.td_heads.take()
    }

    pub fn detach_classifier(&mut self) -> Option<ClassifierHead> {
        self.classifier.take()
    }

    /// Copies another model's core tensors (and frozen flags) into this one.
    pub fn set_core(&mut self, core: TpnCore) {
        self.core = core;
    }

    /// Fine-tuning policy: conv layers 1–2 frozen, conv 3 and heads trainable.
    pub fn freeze_for_finetune(&mut self) {
        self.unfreeze_all();
        self.core.convs[0].set_frozen(true);
        self.core.convs[1].set_frozen(true);
    }

    /// Linear-evaluation policy: the whole core frozen, heads trainable.
    pub fn freeze_core_full(&mut self) {
        self.unfreeze_all();
        for c in &mut self.core.convs {
            c.set_frozen(true);
        }
    }

    pub fn unfreeze_all(&mut self) {
        for p in self.parameters_mut() {
            p.frozen = false;
        }
    }

    /// Parameters in declaration order: core, classifier, discrimination heads.
    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut out = self.core.params();
        if let Some(c) = &self.classifier {
            out.extend(c.params());
        }
        if let Some(t) = &self.td_heads {
            out.extend(t.params());
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.core.params_mut();
        if let Some(c) = &mut self.classifier {
            out.extend(c.params_mut());
        }
        if let Some(t) = &mut self.td_heads {
            out.extend(t.params_mut());
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.value.len()).sum()
    }

    pub fn l2_penalty(&self, config: &RegularizationConfig) -> (f64, GradientMap) {
        l2_penalty(self.parameters(), config)
    }

    /// Evaluation-mode forward pass.
    pub fn predict(&self, values: &[f64]) -> Result<Prediction> {
        let mut r = rng::seeded(0);
        let trace = self.core.forward(values, false, &mut r)?;
        let class_probs = match &self.classifier {
            Some(c) => Some(self.classifier_forward(c, &trace.features)?.1),
            None => None,
        };
        let td_probs = match &self.td_heads {
            Some(t) => Some(self.td_forward(t, &trace.features)?.1),
            None => None,
        };
        Ok(Prediction {
            features: trace.features.into_data(),
            class_probs,
            td_probs,
        })
    }

    /// Pooled 96-dimensional core output in evaluation mode.
    pub fn features(&self, values: &[f64]) -> Result<Vec<f64>> {
        let mut r = rng::seeded(0);
        Ok(self.core.forward(values, false, &mut r)?.features.into_data())
    }

    fn classifier_forward(&self, head: &ClassifierHead, feat: &Tensor) -> Result<(Option<DenseTrace>, Vec<f64>)> {
        let (hidden, top_in) = match head {
            ClassifierHead::Har(h) => {
                let pre = dense_forward(feat, &h.hidden.weights.value, &h.hidden.bias.value)?;
                let act = relu(&pre);
                (Some(DenseTrace { pre, act }), None)
            }
            ClassifierHead::Linear(_) => (None, Some(feat)),
        };
        let out = head.output();
        let input = match (&hidden, top_in) {
            (Some(t), _) => &t.act,
            (None, Some(f)) => f,
            _ => unreachable!(),
        };
        let logits = dense_forward(input, &out.weights.value, &out.bias.value)?;
        let probs = softmax(logits.data())?;
        Ok((hidden, probs))
    }

    fn td_forward(&self, heads: &TdHeads, feat: &Tensor) -> Result<(Vec<DenseTrace>, [f64; TD_COUNT])> {
        let mut traces = Vec::with_capacity(TD_COUNT);
        if let Some(s) = &heads.shared {
            let pre = dense_forward(feat, &s.weights.value, &s.bias.value)?;
            let act = relu(&pre);
            traces.push(DenseTrace { pre, act });
        }
        let mut probs = [0.0; TD_COUNT];
        for t in 0..TD_COUNT {
            if heads.shared.is_none() {
                let h = &heads.hidden[t];
                let pre = dense_forward(feat, &h.weights.value, &h.bias.value)?;
                let act = relu(&pre);
                traces.push(DenseTrace { pre, act });
            }
            let hidden = if heads.shared.is_some() { &traces[0] } else { &traces[t] };
            let o = &heads.outputs[t];
            let logit = dense_forward(&hidden.act, &o.weights.value, &o.bias.value)?;
            probs[t] = sigmoid(&logit).data()[0];
        }
        Ok((traces, probs))
    }

    /// Data loss of one example; with `grads`, also accumulates its gradients.
    /// With `regime`, hashes the ReLU masks and pool winners that the loss
    /// depends on.
    fn example_pass(
        &self,
        ex: &Example,
        training: bool,
        rng: &mut Rng,
        grads: Option<&mut GradientMap>,
        mut regime: Option<&mut DefaultHasher>,
    ) -> Result<f64> {
        let trace = self.core.forward(ex.values, training, rng)?;
        if let Some(h) = regime.as_deref_mut() {
            trace.pre.iter().for_each(|t| hash_mask(h, t));
            trace.pool_idx.hash(h);
        }
        let mut loss = 0.0;
        let mut d_feat = Tensor::zeros(&[FEATURE_DIM]);
        let want_grads = grads.is_some();
        let mut local = GradientMap::new();

        if let Some(target) = ex.har {
            let head = self
                .classifier
                .as_ref()
                .ok_or_else(|| Error::config("activity target given but the model has no classifier head"))?;
            if target.len() != self.num_classes {
                return Err(Error::dim("example", "activity target", self.num_classes, target.len()));
            }
            let (hidden, probs) = self.classifier_forward(head, &trace.features)?;
            if let (Some(h), Some(hidden)) = (regime.as_deref_mut(), &hidden) {
                hash_mask(h, &hidden.pre);
            }
            loss += categorical_cross_entropy(&probs, target)?;
            if want_grads {
                let d_logits = Tensor::vector(probs.iter().zip(target).map(|(p, t)| p - t).collect())?;
                let out = head.output();
                let top_input = hidden.as_ref().map_or(&trace.features, |h| &h.act);
                let g = dense_backward(top_input, &out.weights.value, &d_logits)?;
                accumulate_dense(out, &g, &mut local)?;
                let d_top = g.input.expect("dense input gradient");
                match (head, &hidden) {
                    (ClassifierHead::Har(h), Some(trace_h)) => {
                        let dz = relu_backward(&trace_h.pre, &d_top)?;
                        let gh = dense_backward(&trace.features, &h.hidden.weights.value, &dz)?;
                        accumulate_dense(&h.hidden, &gh, &mut local)?;
                        d_feat.add_scaled(gh.input.as_ref().expect("dense input gradient"), 1.0)?;
                    }
                    _ => d_feat.add_scaled(&d_top, 1.0)?,
                }
            }
        }

        if let Some(target) = ex.td {
            let heads = self
                .td_heads
                .as_ref()
                .ok_or_else(|| Error::config("transformation target given but the model has no discrimination heads"))?;
            let (traces, probs) = self.td_forward(heads, &trace.features)?;
            if let Some(h) = regime {
                traces.iter().for_each(|tr| hash_mask(h, &tr.pre));
            }
            for t in 0..TD_COUNT {
                loss += binary_cross_entropy(probs[t], target[t]);
            }
            if want_grads {
                let mut d_shared = heads.shared.as_ref().map(|_| Tensor::zeros(&[TD_HIDDEN]));
                for t in 0..TD_COUNT {
                    let hidden = if heads.shared.is_some() { &traces[0] } else { &traces[t] };
                    let o = &heads.outputs[t];
                    let d_logit = Tensor::vector(vec![probs[t] - target[t]])?;
                    let g = dense_backward(&hidden.act, &o.weights.value, &d_logit)?;
                    accumulate_dense(o, &g, &mut local)?;
                    let d_act = g.input.expect("dense input gradient");
                    match &mut d_shared {
                        Some(acc) => acc.add_scaled(&d_act, 1.0)?,
                        None => {
                            let h = &heads.hidden[t];
                            let dz = relu_backward(&hidden.pre, &d_act)?;
                            let gh = dense_backward(&trace.features, &h.weights.value, &dz)?;
                            accumulate_dense(h, &gh, &mut local)?;
                            d_feat.add_scaled(gh.input.as_ref().expect("dense input gradient"), 1.0)?;
                        }
                    }
                }
                if let (Some(acc), Some(s)) = (d_shared, &heads.shared) {
                    let dz = relu_backward(&traces[0].pre, &acc)?;
                    let gh = dense_backward(&trace.features, &s.weights.value, &dz)?;
                    accumulate_dense(s, &gh, &mut local)?;
                    d_feat.add_scaled(gh.input.as_ref().expect("dense input gradient"), 1.0)?;
                }
            }
        }

        if let Some(grads) = grads {
            self.core.backward(&trace, &d_feat, &mut local)?;
            grads.merge(&local)?;
        }
        Ok(loss)
    }

    /// Evaluation-mode data loss of one example (no regularization).
    pub fn example_loss(&self, ex: &Example) -> Result<f64> {
        let mut r = rng::seeded(0);
        self.example_pass(ex, false, &mut r, None, None)
    }

    /// Mean data loss and mean gradients over a batch. Dropout masks are drawn
    /// from `rng` in batch order when `training` is set.
    pub fn batch_loss_and_gradients(
        &self,
        batch: &[Example],
        training: bool,
        rng: &mut Rng,
    ) -> Result<(f64, GradientMap)> {
        if batch.is_empty() {
            return Err(Error::config("empty batch"));
        }
        let mut grads = GradientMap::new();
        let mut loss = 0.0;
        for ex in batch {
            loss += self.example_pass(ex, training, rng, Some(&mut grads), None)?;
        }
        let scale = 1.0 / batch.len() as f64;
        grads.scale(scale);
        Ok((loss * scale, grads))
    }

    /// Fingerprint of every ReLU mask and max-pool winner for `values`.
    pub fn regime(&self, values: &[f64]) -> Result<u64> {
        let mut r = rng::seeded(0);
        let trace = self.core.forward(values, false, &mut r)?;
        let mut h = DefaultHasher::new();
        trace.pre.iter().for_each(|t| hash_mask(&mut h, t));
        trace.pool_idx.hash(&mut h);
        if let Some(c) = &self.classifier {
            if let (Some(hidden), _) = self.classifier_forward(c, &trace.features)? {
                hash_mask(&mut h, &hidden.pre);
            }
        }
        if let Some(t) = &self.td_heads {
            for tr in self.td_forward(t, &trace.features)?.0 {
                hash_mask(&mut h, &tr.pre);
            }
        }
        Ok(h.finish())
    }
}

fn hash_mask(h: &mut DefaultHasher, t: &Tensor) {
    for v in t.data() {
        (*v > 0.0).hash(h);
    }
}

/// Deterministic objective (evaluation mode, data loss plus L2) over a model,
/// for finite-difference checking.
pub struct GradientProbe {
    pub model: ModelParameters,
    pub regularization: RegularizationConfig,
}

/// Targets of a probed example.
pub type ProbeTargets = (Option<Vec<f64>>, Option<[f64; TD_COUNT]>);

impl GradientProbe {
    fn example<'a>(values: &'a [f64], target: &'a ProbeTargets) -> Example<'a> {
        Example {
            values,
            har: target.0.as_deref(),
            td: target.1,
        }
    }
}

impl Differentiable for GradientProbe {
    type Input = [f64];
    type Target = ProbeTargets;

    fn parameters(&self) -> Vec<&Parameter> {
        self.model.parameters()
    }

    fn parameter_value_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.model
            .parameters_mut()
            .into_iter()
            .find(|p| p.name == name)
            .map(|p| &mut p.value)
    }

    fn loss(&self, input: &[f64], target: &ProbeTargets) -> Result<f64> {
        let data = self.model.example_loss(&Self::example(input, target))?;
        Ok(data + l2_value(self.model.parameters(), &self.regularization))
    }

    fn loss_and_gradients(&self, input: &[f64], target: &ProbeTargets) -> Result<(f64, GradientMap)> {
        let mut r = rng::seeded(0);
        let (data, mut grads) =
            self.model
                .batch_loss_and_gradients(&[Self::example(input, target)], false, &mut r)?;
        let (l2, l2_grads) = self.model.l2_penalty(&self.regularization);
        grads.merge(&l2_grads)?;
        Ok((data + l2, grads))
    }

    fn regime(&self, input: &[f64]) -> Result<u64> {
        self.model.regime(input)
    }

    fn loss_and_regime(&self, input: &[f64], target: &ProbeTargets) -> Result<(f64, u64)> {
        let mut r = rng::seeded(0);
        let mut h = DefaultHasher::new();
        let data = self
            .model
            .example_pass(&Self::example(input, target), false, &mut r, None, Some(&mut h))?;
        Ok((data + l2_value(self.model.parameters(), &self.regularization), h.finish()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndtensor::finite_difference_check;
    use rand::Rng as _;

    fn input(time: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::seeded(seed);
        (0..time * CHANNELS).map(|_| r.random_range(-2.0..2.0)).collect()
    }

    fn closed_form_har(k: usize) -> usize {
        let core = (24 * 3 * 32 + 32) + (16 * 32 * 64 + 64) + (8 * 64 * 96 + 96);
        core + (96 * 1024 + 1024) + (1024 * k + k)
    }

    #[test]
    fn shape_chain_and_outputs() {
        let m = ModelParameters::har(6, InitScheme::default(), 1).unwrap();
        let mut r = rng::seeded(0);
        let trace = m.core.forward(&input(400, 2), false, &mut r).unwrap();
        let shapes: Vec<Vec<usize>> = trace.pre.iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(shapes, vec![vec![377, 32], vec![362, 64], vec![355, 96]]);
        assert_eq!(trace.features.len(), 96);
        let p = m.predict(&input(400, 2)).unwrap();
        assert_eq!(p.class_probs.unwrap().len(), 6);
        assert!(p.td_probs.is_none());
    }

    #[test]
    fn parameter_counts_match_architecture() {
        for k in [2, 3, 6, 11] {
            let m = ModelParameters::har(k, InitScheme::default(), 0).unwrap();
            assert_eq!(m.parameter_count(), closed_form_har(k));
            let mt = ModelParameters::multitask(k, InitScheme::default(), false, 0).unwrap();
            let td = 8 * ((96 * 256 + 256) + (256 + 1));
            assert_eq!(mt.parameter_count(), closed_form_har(k) + td);
            let shared = ModelParameters::multitask(k, InitScheme::default(), true, 0).unwrap();
            assert_eq!(shared.parameter_count(), closed_form_har(k) + (96 * 256 + 256) + 8 * 257);
        }
        assert!(ModelParameters::har(1, InitScheme::default(), 0).is_err());
    }

    #[test]
    fn same_seed_same_weights() {
        let a = ModelParameters::har(6, InitScheme::default(), 42).unwrap();
        let b = ModelParameters::har(6, InitScheme::default(), 42).unwrap();
        let c = ModelParameters::har(6, InitScheme::default(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn multitask_core_is_shared() {
        let mut m = ModelParameters::multitask(4, InitScheme::GlorotUniform, false, 3).unwrap();
        assert_eq!(m.td_heads().unwrap().outputs.len(), 8);
        let x = input(120, 4);
        let before = m.predict(&x).unwrap();
        m.core_mut().convs[0].kernels.value.data_mut()[0] += 0.5;
        let after = m.predict(&x).unwrap();
        assert_ne!(before.class_probs, after.class_probs);
        let (b, a) = (before.td_probs.unwrap(), after.td_probs.unwrap());
        assert!((0..8).all(|t| b[t] != a[t]), "every task output depends on the core");
    }

    #[test]
    fn evaluation_forward_is_deterministic() {
        let m = ModelParameters::multitask(3, InitScheme::GlorotUniform, false, 5).unwrap();
        let x = input(200, 6);
        assert_eq!(m.predict(&x).unwrap(), m.predict(&x).unwrap());
    }

    #[test]
    fn total_loss_is_sum_of_task_losses_plus_l2() {
        let m = ModelParameters::multitask(3, InitScheme::GlorotUniform, false, 7).unwrap();
        let x = input(100, 8);
        let har = [0.2, 0.5, 0.3];
        let td = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let probe = GradientProbe {
            model: m.clone(),
            regularization: RegularizationConfig::default(),
        };
        let total = probe.loss(&x, &(Some(har.to_vec()), Some(td))).unwrap();

        let p = m.predict(&x).unwrap();
        let cp = p.class_probs.unwrap();
        let tp = p.td_probs.unwrap();
        let mut oracle = 0.0;
        for a in 0..3 {
            oracle -= har[a] * cp[a].ln();
        }
        for t in 0..8 {
            oracle -= td[t] * tp[t].ln() + (1.0 - td[t]) * (1.0 - tp[t]).ln();
        }
        let mut sq = 0.0;
        for param in m.parameters().iter().filter(|p| p.regularized) {
            sq += param.value.data().iter().map(|v| v * v).sum::<f64>();
        }
        oracle += 1e-4 * sq;
        assert!((total - oracle).abs() < 1e-9, "{total} vs {oracle}");
    }

    #[test]
    fn gradients_match_finite_differences_on_small_inputs() {
        for (seed, shared) in [(1, false), (2, true)] {
            let model = ModelParameters::multitask(3, InitScheme::GlorotUniform, shared, seed).unwrap();
            let mut probe = GradientProbe {
                model,
                regularization: RegularizationConfig::default(),
            };
            let x = input(52, seed + 10);
            let target = (Some(vec![0.1, 0.7, 0.2]), Some([0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
            let report = finite_difference_check(&mut probe, &x, &target, 1e-5, Some(12)).unwrap();
            assert!(report.max_relative_error < 1e-4, "{report:?}");
            assert!(report.checked > 200);
        }
    }

    #[test]
    fn frozen_layers_get_no_gradients() {
        let mut m = ModelParameters::har(3, InitScheme::GlorotUniform, 9).unwrap();
        m.freeze_for_finetune();
        let x = input(60, 1);
        let t = [0.0, 1.0, 0.0];
        let ex = Example { values: &x, har: Some(&t), td: None };
        let mut r = rng::seeded(1);
        let (_, g) = m.batch_loss_and_gradients(&[ex], true, &mut r).unwrap();
        assert!(g.get("core.conv1.kernels").is_none());
        assert!(g.get("core.conv2.bias").is_none());
        assert!(g.get("core.conv3.kernels").is_some());
        m.freeze_core_full();
        let (_, g) = m.batch_loss_and_gradients(&[ex], true, &mut r).unwrap();
        assert!(g.iter().all(|(name, _)| !name.starts_with("core.")));
    }

    #[test]
    fn freeze_policies_are_idempotent() {
        let mut m = ModelParameters::har(3, InitScheme::default(), 0).unwrap();
        m.freeze_for_finetune();
        let once = m.clone();
        m.freeze_for_finetune();
        assert_eq!(m, once);
        let frozen: Vec<bool> = m.parameters().iter().map(|p| p.frozen).collect();
        assert_eq!(&frozen[..6], &[true, true, true, true, false, false]);
        assert!(frozen[6..].iter().all(|f| !f));
        m.freeze_core_full();
        assert!(m.core().convs.iter().all(|c| c.is_frozen()));
    }

    #[test]
    fn rejects_short_input_and_missing_heads() {
        let m = ModelParameters::har(3, InitScheme::default(), 0).unwrap();
        assert!(matches!(m.predict(&input(45, 0)), Err(Error::Dimension { .. })));
        assert!(m.predict(&input(46, 0)).is_ok());
        let x = input(60, 0);
        let ex = Example { values: &x, har: None, td: Some([0.0; 8]) };
        assert!(m.example_loss(&ex).is_err());
    }
}
