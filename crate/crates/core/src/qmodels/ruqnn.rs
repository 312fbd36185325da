//! Data re-uploading quantum neural network: the ansatz is repeated once per
//! time step, each repetition encoding that step's data point with
//! exponentially scaled prefactors.

use std::ops::Range;

use crate::error::Result;
use crate::mlcore::{linear, DifferentiableBlock, InitSegment, Linear};
use crate::model::{block_backward, Backward, Forecaster, Layout, ParamCounts};
use crate::qgrad::forward;
use crate::qsim::{AngleSource, Gate, GateProgram, ProgramBuilder, Scaler};

use super::{AnsatzBlock, AnsatzDescriptor, Hyperparams, ModelSpec};

pub struct Ruqnn {
    spec: ModelSpec,
    output: Linear,
    program: GateProgram,
    r_q: Range<usize>,
    r_out: Range<usize>,
    layout: Layout,
}

/// Encoding prefactors `3^a / 3^(n-1)` for qubits `a = 0..n`.
pub fn prefactors(n: usize) -> Vec<f64> {
    let top = 3f64.powi(n as i32 - 1);
    (0..n).map(|a| 3f64.powi(a as i32) / top).collect()
}

/// Unrolls `ansatz` over `seq_len` steps of `data_dim`-dimensional input.
/// Variational weights are fresh for every step.
pub fn ruqnn_program(
    n: usize,
    ansatz: &AnsatzDescriptor,
    seq_len: usize,
    data_dim: usize,
) -> Result<GateProgram> {
    ansatz.validate(data_dim)?;
    let beta = prefactors(n);
    let mut b = ProgramBuilder::new(n);
    let mut p = 0;
    for t in 0..seq_len {
        for block in &ansatz.blocks {
            match *block {
                AnsatzBlock::Enc { axis, dim } => {
                    for (q, &bq) in beta.iter().enumerate() {
                        b.push(Gate::rotation(
                            axis,
                            q,
                            AngleSource::scaled_input(t * data_dim + dim, Scaler::Identity, bq),
                        ));
                    }
                }
                AnsatzBlock::VarSingle(axis) => {
                    for q in 0..n {
                        b.push(Gate::rotation(axis, q, AngleSource::Trainable(p)));
                        p += 1;
                    }
                }
                AnsatzBlock::VarEnt(axis) => {
                    for q in 0..n.saturating_sub(1) {
                        b.push(Gate::controlled_rotation(
                            axis,
                            q,
                            q + 1,
                            AngleSource::Trainable(p),
                        ));
                        p += 1;
                    }
                }
            }
        }
    }
    b.build((0..n).collect())
}

impl Ruqnn {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let Hyperparams::Ruqnn {
            n_qubits: n,
            ref ansatz,
        } = spec.hyperparams
        else {
            unreachable!("Ruqnn::new called with {}", spec.hyperparams)
        };
        let program = ruqnn_program(n, ansatz, spec.seq_len, spec.data_dim)?;
        let output = linear(n, spec.data_dim, true);
        let mut layout = Layout::default();
        let r_q = layout.angles(program.n_trainable());
        let r_out = layout.block(&output);
        Ok(Ruqnn {
            spec,
            output,
            program,
            r_q,
            r_out,
            layout,
        })
    }

    pub fn program(&self) -> &GateProgram {
        &self.program
    }
}

impl Forecaster for Ruqnn {
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
        let tape = forward(&self.program, &params[self.r_q.clone()], seq)?;
        let e = tape.expectations();
        let y = self.output.forward(&params[self.r_out.clone()], e);
        if let Some(Backward { d_output, grad }) = backward {
            let dy = d_output(&y);
            let de = block_backward(&self.output, params, &self.r_out, e, &dy, grad);
            let mut dx = vec![0.0; seq.len()];
            tape.backward(&de, &mut grad[self.r_q.clone()], &mut dx);
        }
        Ok(y)
    }
}
