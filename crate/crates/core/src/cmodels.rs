//! Classical baselines: MLP over the flattened window and stacked RNN / LSTM
//! networks reading out the top layer's final hidden state.

use std::ops::Range;

use crate::error::Result;
use crate::mlcore::{
    activation, linear, lstm_cell, rnn_cell, ActivationKind, DifferentiableBlock, InitSegment,
    Linear, RecurrentCell,
};
use crate::model::{block_backward, Backward, Forecaster, Layout, ParamCounts};
use crate::qmodels::{Hyperparams, ModelSpec};

pub struct Mlp {
    spec: ModelSpec,
    layers: Vec<(Linear, Range<usize>)>,
    layout: Layout,
}

impl Mlp {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let Hyperparams::Mlp {
            layers: depth,
            hidden,
        } = spec.hyperparams
        else {
            unreachable!("Mlp::new called with {}", spec.hyperparams)
        };
        let mut dims = vec![spec.seq_len * spec.data_dim];
        dims.extend(std::iter::repeat_n(hidden, depth));
        dims.push(spec.data_dim);
        let mut layout = Layout::default();
        let layers = dims
            .windows(2)
            .map(|w| {
                let l = linear(w[0], w[1], true);
                let r = layout.block(&l);
                (l, r)
            })
            .collect();
        Ok(Mlp {
            spec,
            layers,
            layout,
        })
    }
}

impl Forecaster for Mlp {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn param_counts(&self) -> ParamCounts {
        self.layout.counts()
    }

    fn init_segments(&self) -> Vec<InitSegment> {
        self.layout.segments.clone()
    }

    fn evaluate(
        &self,
        params: &[f64],
        seq: &[f64],
        backward: Option<Backward<'_>>,
    ) -> Result<Vec<f64>> {
        let relu = activation(ActivationKind::Relu);
        // inputs[k] feeds linear k; pre[k] is its output before the relu
        let mut inputs = vec![seq.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (k, (layer, r)) in self.layers.iter().enumerate() {
            let z = layer.forward(&params[r.clone()], &inputs[k]);
            if k + 1 < self.layers.len() {
                inputs.push(relu.forward(&[], &z));
            }
            pre.push(z);
        }
        let y = pre.last().cloned().unwrap_or_default();
        if let Some(Backward { d_output, grad }) = backward {
            let mut up = d_output(&y);
            for k in (0..self.layers.len()).rev() {
                if k + 1 < self.layers.len() {
                    up = relu.backward(&[], &pre[k], &up, &mut []);
                }
                let (layer, r) = &self.layers[k];
                up = block_backward(layer, params, r, &inputs[k], &up, grad);
            }
        }
        Ok(y)
    }
}

type Cell = Box<dyn RecurrentCell + Send + Sync>;

/// Stacked recurrent cells with zero initial states; layer `k + 1` consumes
/// layer `k`'s hidden state at every step.
pub struct RecurrentNet {
    spec: ModelSpec,
    cells: Vec<(Cell, Range<usize>)>,
    head: Linear,
    r_head: Range<usize>,
    layout: Layout,
}

impl RecurrentNet {
    pub fn rnn(spec: ModelSpec) -> Result<Self> {
        let Hyperparams::Rnn { layers, hidden } = spec.hyperparams else {
            unreachable!("RecurrentNet::rnn called with {}", spec.hyperparams)
        };
        let d = spec.data_dim;
        Ok(Self::stack(
            spec,
            layers,
            hidden,
            |i, h| Box::new(rnn_cell(i, h)) as Cell,
            d,
        ))
    }

    pub fn lstm(spec: ModelSpec) -> Result<Self> {
        let Hyperparams::Lstm { layers, hidden } = spec.hyperparams else {
            unreachable!("RecurrentNet::lstm called with {}", spec.hyperparams)
        };
        let d = spec.data_dim;
        Ok(Self::stack(
            spec,
            layers,
            hidden,
            |i, h| Box::new(lstm_cell(i, h)) as Cell,
            d,
        ))
    }

    fn stack(
        spec: ModelSpec,
        layers: usize,
        hidden: usize,
        make: impl Fn(usize, usize) -> Cell,
        d: usize,
    ) -> Self {
        let mut layout = Layout::default();
        let cells = (0..layers)
            .map(|k| {
                let cell = make(if k == 0 { d } else { hidden }, hidden);
                let r = layout.block(cell.as_ref());
                (cell, r)
            })
            .collect();
        let head = linear(hidden, d, true);
        let r_head = layout.block(&head);
        RecurrentNet {
            spec,
            cells,
            head,
            r_head,
            layout,
        }
    }
}

impl Forecaster for RecurrentNet {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn param_counts(&self) -> ParamCounts {
        self.layout.counts()
    }

    fn init_segments(&self) -> Vec<InitSegment> {
        self.layout.segments.clone()
    }

    fn evaluate(
        &self,
        params: &[f64],
        seq: &[f64],
        backward: Option<Backward<'_>>,
    ) -> Result<Vec<f64>> {
        let d = self.spec.data_dim;
        let mut states: Vec<Vec<f64>> = self
            .cells
            .iter()
            .map(|(c, _)| vec![0.0; c.state_dim()])
            .collect();
        // block inputs [x; state] per step and layer
        let mut tape: Vec<Vec<Vec<f64>>> = Vec::with_capacity(self.spec.seq_len);
        for x in seq.chunks(d) {
            let mut below = x.to_vec();
            let mut step = Vec::with_capacity(self.cells.len());
            for (k, (cell, r)) in self.cells.iter().enumerate() {
                let input: Vec<f64> = below.iter().chain(&states[k]).copied().collect();
                states[k] = cell.forward(&params[r.clone()], &input);
                below = states[k][..cell.hidden_dim()].to_vec();
                step.push(input);
            }
            tape.push(step);
        }
        let top = states.last().map(|s| &s[..self.head.in_dim]).unwrap_or(&[]);
        let y = self.head.forward(&params[self.r_head.clone()], top);

        let Some(Backward { d_output, grad }) = backward else {
            return Ok(y);
        };
        let dy = d_output(&y);
        let dtop = block_backward(&self.head, params, &self.r_head, top, &dy, grad);
        let mut carry: Vec<Vec<f64>> = self
            .cells
            .iter()
            .map(|(c, _)| vec![0.0; c.state_dim()])
            .collect();
        if let Some(last) = carry.last_mut() {
            last[..dtop.len()].copy_from_slice(&dtop);
        }
        for step in tape.iter().rev() {
            let mut from_above: Option<Vec<f64>> = None;
            for k in (0..self.cells.len()).rev() {
                let (cell, r) = &self.cells[k];
                let mut up = std::mem::take(&mut carry[k]);
                if let Some(dx) = from_above.take() {
                    for (u, g) in up.iter_mut().zip(dx) {
                        *u += g;
                    }
                }
                let din = block_backward(cell.as_ref(), params, r, &step[k], &up, grad);
                let split = cell.input_dim();
                carry[k] = din[split..].to_vec();
                from_above = Some(din[..split].to_vec());
            }
        }
        Ok(y)
    }
}
