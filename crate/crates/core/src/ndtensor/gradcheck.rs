use super::{GradientMap, Parameter, Tensor};
use crate::Result;

/// Gradient magnitudes below this are compared on an absolute scale.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// A deterministic scalar objective over named parameters.
pub trait Differentiable {
    type Input: ?Sized;
    type Target: ?Sized;

    fn parameters(&self) -> Vec<&Parameter>;
    fn parameter_value_mut(&mut self, name: &str) -> Option<&mut Tensor>;
    fn loss(&self, input: &Self::Input, target: &Self::Target) -> Result<f64>;
    fn loss_and_gradients(&self, input: &Self::Input, target: &Self::Target)
        -> Result<(f64, GradientMap)>;

    /// Fingerprint of the piecewise-linear regime (ReLU masks, max-pool
    /// winners) at the current parameters. Central differences straddling a
    /// regime change do not estimate the derivative and are skipped.
    fn regime(&self, _input: &Self::Input) -> Result<u64> {
        Ok(0)
    }

    /// Loss and regime together; override when one forward pass gives both.
    fn loss_and_regime(&self, input: &Self::Input, target: &Self::Target) -> Result<(f64, u64)> {
        Ok((self.loss(input, target)?, self.regime(input)?))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Probes skipped because ±h crossed a ReLU kink or changed a pooling winner.
    pub skipped: usize,
}

/// Compares analytic gradients with central differences of step `h`.
///
/// Every parameter tensor is probed; `probes_per_tensor` limits each tensor to
/// that many evenly spaced entries (`None` probes every entry).
pub fn finite_difference_check<N: Differentiable>(
    net: &mut N,
    input: &N::Input,
    target: &N::Target,
    h: f64,
    probes_per_tensor: Option<usize>,
) -> Result<GradCheckReport> {
    let (_, grads) = net.loss_and_gradients(input, target)?;
    let (_, base_regime) = net.loss_and_regime(input, target)?;
    let names: Vec<(String, usize)> = net
        .parameters()
        .iter()
        .map(|p| (p.name.clone(), p.value.len()))
        .collect();

    let mut report = GradCheckReport::default();
    for (name, len) in names {
        let indices: Vec<usize> = match probes_per_tensor {
            Some(k) if k < len => (0..k).map(|i| i * len / k).collect(),
            _ => (0..len).collect(),
        };
        for i in indices {
            let original = net.parameter_value_mut(&name).expect("listed parameter").data()[i];
            let eval = |net: &mut N, v: f64| -> Result<(f64, u64)> {
                net.parameter_value_mut(&name).expect("listed parameter").data_mut()[i] = v;
                net.loss_and_regime(input, target)
            };
            let (plus, regime_plus) = eval(net, original + h)?;
            let (minus, regime_minus) = eval(net, original - h)?;
            net.parameter_value_mut(&name).expect("listed parameter").data_mut()[i] = original;
            if regime_plus != base_regime || regime_minus != base_regime {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = grads.get(&name).map_or(0.0, |g| g.data()[i]);
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                if err >= report.max_relative_error {
                    report.worst = Some((name.clone(), i));
                }
            }
        }
    }
    Ok(report)
}
