//! Quantum recurrent neural network: a data register re-encoded every step
//! and a hidden register carrying memory, coupled by one shared variational
//! layer. Optionally the data register continues on fresh ancillas after
//! every step but the last.

use std::ops::Range;

use crate::error::{config_err, Result};
use crate::mlcore::{linear, DifferentiableBlock, InitSegment, Linear};
use crate::model::{block_backward, Backward, Forecaster, Layout, ParamCounts};
use crate::qgrad::forward;
use crate::qsim::{reset_qubits_fresh, AngleSource, Gate, GateProgram, ProgramBuilder, Scaler};

use super::{Hyperparams, ModelSpec};

pub struct Qrnn {
    spec: ModelSpec,
    output: Linear,
    program: GateProgram,
    r_q: Range<usize>,
    r_out: Range<usize>,
    layout: Layout,
}

fn encode(b: &mut ProgramBuilder, q: usize, t: usize, d: usize) -> Result<()> {
    let x = |j: usize| AngleSource::scaled_input(t * d + j, Scaler::Arccos, 1.0);
    match d {
        1 => {
            b.push(Gate::ry(q, x(0)));
        }
        2 => {
            b.push(Gate::rx(q, x(0)));
            b.push(Gate::ry(q, x(1)));
        }
        3 => {
            b.push(Gate::rx(q, x(0)));
            b.push(Gate::ry(q, x(1)));
            b.push(Gate::rx(q, x(2)));
        }
        _ => return Err(config_err!("qrnn encodes 1 to 3 data dimensions, got {d}")),
    }
    Ok(())
}

/// Shared-weight layer: `RZ·RY·RZ` per qubit, then `CNOT-RZ(θ)-CNOT` along the chain.
fn variational_layer(b: &mut ProgramBuilder, n: usize) {
    let mut p = 0;
    for q in 0..n {
        b.push(Gate::rz(q, AngleSource::Trainable(p)));
        b.push(Gate::ry(q, AngleSource::Trainable(p + 1)));
        b.push(Gate::rz(q, AngleSource::Trainable(p + 2)));
        p += 3;
    }
    for q in 0..n - 1 {
        b.push(Gate::cnot(q, q + 1));
        b.push(Gate::rz(q + 1, AngleSource::Trainable(p)));
        b.push(Gate::cnot(q, q + 1));
        p += 1;
    }
}

/// Number of shared quantum weights for `n` qubits.
pub fn qrnn_quantum_params(n: usize) -> usize {
    3 * n + n - 1
}

pub fn qrnn_program(
    data_qubits: usize,
    hidden_qubits: usize,
    reset: bool,
    seq_len: usize,
    data_dim: usize,
) -> Result<GateProgram> {
    let n = data_qubits + hidden_qubits;
    let mut b = ProgramBuilder::new(n);
    let mut block_starts = Vec::with_capacity(seq_len);
    for t in 0..seq_len {
        block_starts.push(b.len());
        for q in 0..data_qubits {
            encode(&mut b, q, t, data_dim)?;
        }
        variational_layer(&mut b, n);
    }
    let program = b.build((0..data_qubits).collect())?;
    if !reset {
        return Ok(program);
    }
    let data: Vec<usize> = (0..data_qubits).collect();
    let points: Vec<(usize, Vec<usize>)> = block_starts[1..]
        .iter()
        .map(|&p| (p, data.clone()))
        .collect();
    reset_qubits_fresh(&program, &points)
}

impl Qrnn {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let Hyperparams::Qrnn {
            data_qubits,
            hidden_qubits,
            reset,
        } = spec.hyperparams
        else {
            unreachable!("Qrnn::new called with {}", spec.hyperparams)
        };
        let program = qrnn_program(
            data_qubits,
            hidden_qubits,
            reset,
            spec.seq_len,
            spec.data_dim,
        )?;
        let output = linear(data_qubits, spec.data_dim, true);
        let mut layout = Layout::default();
        let r_q = layout.angles(program.n_trainable());
        let r_out = layout.block(&output);
        Ok(Qrnn {
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

impl Forecaster for Qrnn {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::model_grad_error;

    fn model(nd: usize, nh: usize, reset: bool, l: usize, d: usize) -> Qrnn {
        Qrnn::new(ModelSpec::new(
            Hyperparams::Qrnn {
                data_qubits: nd,
                hidden_qubits: nh,
                reset,
            },
            l,
            d,
        ))
        .unwrap()
    }

    #[test]
    fn shared_weights_do_not_grow_with_length() {
        let a = model(2, 3, false, 4, 1);
        let b = model(2, 3, false, 8, 1);
        assert_eq!(a.param_counts().quantum, b.param_counts().quantum);
        assert_eq!(a.param_counts().quantum, qrnn_quantum_params(5));
    }

    #[test]
    fn reset_expands_to_ten_qubits() {
        let m = model(2, 2, true, 4, 1);
        assert_eq!(m.program().n_qubits(), 10);
        assert_eq!(m.program().measured(), &[8, 9]);
    }

    #[test]
    fn reset_and_plain_agree_for_single_step() {
        let a = model(2, 2, true, 1, 2);
        let b = model(2, 2, false, 1, 2);
        let p = a.init_params(5);
        let x = [0.3, 0.6];
        assert_eq!(a.predict(&p, &x).unwrap(), b.predict(&p, &x).unwrap());
    }

    #[test]
    fn unit_input_with_zero_weights_reads_plus_one() {
        let m = model(2, 2, false, 3, 1);
        let p = vec![0.0; m.param_counts().quantum];
        let tape = forward(&m.program, &p, &[1.0, 1.0, 1.0]).unwrap();
        assert!(tape.expectations().iter().all(|&e| (e - 1.0).abs() < 1e-6));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (reset, d) in [(false, 1), (true, 1), (false, 3)] {
            let m = model(2, 2, reset, 3, d);
            let p = m.init_params(6);
            let seq: Vec<f64> = (0..3 * d).map(|i| 0.1 + 0.27 * i as f64 % 0.8).collect();
            let w: Vec<f64> = (0..d).map(|i| 1.0 - 0.4 * i as f64).collect();
            let err = model_grad_error(&m, &p, &seq, &w);
            assert!(err < 1e-5, "reset={reset} d={d}: {err}");
        }
    }
}
