//! The `Forecaster` contract every model implements, plus flat parameter
//! layout helpers shared by the quantum and classical models.

use std::ops::Range;

use crate::cmodels;
use crate::error::Result;
use crate::mlcore::{init_params, DifferentiableBlock, InitSegment};
use crate::qmodels::{self, Hyperparams, ModelSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ParamCounts {
    pub classical: usize,
    pub quantum: usize,
}

impl ParamCounts {
    pub fn total(&self) -> usize {
        self.classical + self.quantum
    }
}

/// Reverse-mode request: `d_output` maps the model output to `∂L/∂output`,
/// and parameter gradients are accumulated into `grad`.
pub struct Backward<'a> {
    pub d_output: &'a mut dyn FnMut(&[f64]) -> Vec<f64>,
    pub grad: &'a mut [f64],
}

/// A sequence-to-vector forecaster over a flat parameter vector.
///
/// `seq` is the input window flattened time-major (`l · d` values); the
/// output is the `d`-dimensional prediction.
pub trait Forecaster: Send + Sync {
    fn spec(&self) -> &ModelSpec;

    fn param_counts(&self) -> ParamCounts;

    /// Parameter initialization layout; lengths sum to `param_counts().total()`.
    fn init_segments(&self) -> Vec<InitSegment>;

    /// Runs the model, and the backward pass when `backward` is given.
    fn evaluate(
        &self,
        params: &[f64],
        seq: &[f64],
        backward: Option<Backward<'_>>,
    ) -> Result<Vec<f64>>;

    fn init_params(&self, seed: u64) -> Vec<f64> {
        init_params(&self.init_segments(), seed)
    }

    fn predict(&self, params: &[f64], seq: &[f64]) -> Result<Vec<f64>> {
        self.evaluate(params, seq, None)
    }

    fn backprop(
        &self,
        params: &[f64],
        seq: &[f64],
        d_output: &mut dyn FnMut(&[f64]) -> Vec<f64>,
        grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        self.evaluate(params, seq, Some(Backward { d_output, grad }))
    }
}

/// Builds the model described by `spec` (library mode: any positive sizes).
pub fn build_model(spec: &ModelSpec) -> Result<Box<dyn Forecaster>> {
    spec.validate()?;
    Ok(match &spec.hyperparams {
        Hyperparams::Dqnn { .. } => Box::new(qmodels::dqnn::Dqnn::new(spec.clone())?),
        Hyperparams::Ruqnn { .. } => Box::new(qmodels::ruqnn::Ruqnn::new(spec.clone())?),
        Hyperparams::Qrnn { .. } => Box::new(qmodels::qrnn::Qrnn::new(spec.clone())?),
        Hyperparams::Qlstm { .. } => Box::new(qmodels::qlstm::Qlstm::new(spec.clone())?),
        Hyperparams::Leqlstm { .. } => Box::new(qmodels::qlstm::LeQlstm::new(spec.clone())?),
        Hyperparams::Mlp { .. } => Box::new(cmodels::Mlp::new(spec.clone())?),
        Hyperparams::Rnn { .. } => Box::new(cmodels::RecurrentNet::rnn(spec.clone())?),
        Hyperparams::Lstm { .. } => Box::new(cmodels::RecurrentNet::lstm(spec.clone())?),
    })
}

/// `(classical, quantum)` parameter counts of a built model.
pub fn count_parameters(model: &dyn Forecaster) -> (usize, usize) {
    let c = model.param_counts();
    (c.classical, c.quantum)
}

/// Sequential allocator of parameter ranges inside a flat vector.
#[derive(Debug, Default)]
pub(crate) struct Layout {
    next: usize,
    pub segments: Vec<InitSegment>,
    pub classical: usize,
    pub quantum: usize,
}

impl Layout {
    pub fn block(&mut self, block: &dyn DifferentiableBlock) -> Range<usize> {
        self.segments.extend(block.init_segments());
        self.classical += block.param_count();
        self.take(block.param_count())
    }

    pub fn angles(&mut self, len: usize) -> Range<usize> {
        self.segments
            .push(InitSegment::new(len, crate::mlcore::Init::Angle));
        self.quantum += len;
        self.take(len)
    }

    fn take(&mut self, len: usize) -> Range<usize> {
        let r = self.next..self.next + len;
        self.next += len;
        r
    }

    pub fn counts(&self) -> ParamCounts {
        ParamCounts {
            classical: self.classical,
            quantum: self.quantum,
        }
    }
}

/// Accumulates the gradient of a block applied at `params[range]`.
pub(crate) fn block_backward(
    block: &dyn DifferentiableBlock,
    params: &[f64],
    range: &Range<usize>,
    input: &[f64],
    upstream: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    block.backward(
        &params[range.clone()],
        input,
        upstream,
        &mut grad[range.clone()],
    )
}
