//! Dense quantum neural network: the whole window is squeezed through a
//! linear layer onto `n` qubits, processed by `m` variational layers and read
//! back out through a second linear layer.

use std::ops::Range;

use crate::error::Result;
use crate::mlcore::{linear, DifferentiableBlock, InitSegment, Linear};
use crate::model::{block_backward, Backward, Forecaster, Layout, ParamCounts};
use crate::qgrad::forward;
use crate::qsim::{AngleSource, Gate, GateProgram, ProgramBuilder};

use super::{Hyperparams, ModelSpec};

pub struct Dqnn {
    spec: ModelSpec,
    input: Linear,
    output: Linear,
    program: GateProgram,
    r_in: Range<usize>,
    r_q: Range<usize>,
    r_out: Range<usize>,
    layout: Layout,
}

/// `RY(z_i)` on every qubit, then per layer an `RZ·RY·RZ` triplet per qubit
/// followed by a CNOT chain; all qubits measured.
pub fn dqnn_program(n: usize, layers: usize) -> Result<GateProgram> {
    let mut b = ProgramBuilder::new(n);
    for q in 0..n {
        b.push(Gate::ry(q, AngleSource::input(q)));
    }
    let mut p = 0;
    for _ in 0..layers {
        for q in 0..n {
            b.push(Gate::rz(q, AngleSource::Trainable(p)));
            b.push(Gate::ry(q, AngleSource::Trainable(p + 1)));
            b.push(Gate::rz(q, AngleSource::Trainable(p + 2)));
            p += 3;
        }
        for q in 0..n.saturating_sub(1) {
            b.push(Gate::cnot(q, q + 1));
        }
    }
    b.build((0..n).collect())
}

impl Dqnn {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let Hyperparams::Dqnn {
            n_qubits: n,
            layers,
        } = spec.hyperparams
        else {
            unreachable!("Dqnn::new called with {}", spec.hyperparams)
        };
        let input = linear(spec.seq_len * spec.data_dim, n, true);
        let output = linear(n, spec.data_dim, true);
        let program = dqnn_program(n, layers)?;
        let mut layout = Layout::default();
        let r_in = layout.block(&input);
        let r_q = layout.angles(program.n_trainable());
        let r_out = layout.block(&output);
        Ok(Dqnn {
            spec,
            input,
            output,
            program,
            r_in,
            r_q,
            r_out,
            layout,
        })
    }
}

impl Forecaster for Dqnn {
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
        let z = self.input.forward(&params[self.r_in.clone()], seq);
        let tape = forward(&self.program, &params[self.r_q.clone()], &z)?;
        let e = tape.expectations();
        let y = self.output.forward(&params[self.r_out.clone()], e);
        if let Some(Backward { d_output, grad }) = backward {
            let dy = d_output(&y);
            let de = block_backward(&self.output, params, &self.r_out, e, &dy, grad);
            let mut dz = vec![0.0; z.len()];
            tape.backward(&de, &mut grad[self.r_q.clone()], &mut dz);
            block_backward(&self.input, params, &self.r_in, seq, &dz, grad);
        }
        Ok(y)
    }
}
