//! Quantum LSTM variants. `Qlstm` replaces every network of an LSTM cell by a
//! PQC; `LeQlstm` wraps four PQCs in classical linear layers so the hidden
//! size is independent of the qubit count.

use std::ops::Range;

use crate::error::Result;
use crate::mlcore::{linear, sigmoid, DifferentiableBlock, InitSegment, Linear};
use crate::model::{block_backward, Backward, Forecaster, Layout, ParamCounts};
use crate::qgrad::{forward, ForwardTape};
use crate::qsim::{AngleSource, Gate, GateProgram, ProgramBuilder, Scaler};

use super::{Hyperparams, ModelSpec};

/// The shared PQC: `H` on every qubit, `RY(arctan v_i)` then `RZ(arctan v_i²)`
/// on qubit `i`, then `layers` rounds of nearest and next-nearest CNOT chains
/// followed by an `RZ·RX·RZ` triplet per qubit. The first `measured` qubits
/// are read out.
pub fn qlstm_pqc(n: usize, layers: usize, measured: usize) -> Result<GateProgram> {
    let mut b = ProgramBuilder::new(n);
    for q in 0..n {
        b.push(Gate::h(q));
    }
    for q in 0..n {
        b.push(Gate::ry(
            q,
            AngleSource::scaled_input(q, Scaler::Arctan, 1.0),
        ));
        b.push(Gate::rz(
            q,
            AngleSource::scaled_input(q, Scaler::ArctanSquare, 1.0),
        ));
    }
    let mut p = 0;
    for _ in 0..layers {
        for q in 0..n.saturating_sub(1) {
            b.push(Gate::cnot(q, q + 1));
        }
        for q in 0..n.saturating_sub(2) {
            b.push(Gate::cnot(q, q + 2));
        }
        for q in 0..n {
            b.push(Gate::rz(q, AngleSource::Trainable(p)));
            b.push(Gate::rx(q, AngleSource::Trainable(p + 1)));
            b.push(Gate::rz(q, AngleSource::Trainable(p + 2)));
            p += 3;
        }
    }
    b.build((0..measured).collect())
}

/// One LSTM gating step over preactivations `(f, i, g, o)`:
/// `c = σ(f)⊙c_prev + σ(i)⊙tanh(g)`, `s = σ(o)⊙tanh(c)`.
struct Gating {
    f: Vec<f64>,
    i: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c_prev: Vec<f64>,
    c: Vec<f64>,
}

impl Gating {
    fn new(pre: [&[f64]; 4], c_prev: &[f64]) -> Self {
        let f: Vec<f64> = pre[0].iter().map(|&v| sigmoid(v)).collect();
        let i: Vec<f64> = pre[1].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = pre[2].iter().map(|&v| v.tanh()).collect();
        let o: Vec<f64> = pre[3].iter().map(|&v| sigmoid(v)).collect();
        let c = (0..c_prev.len())
            .map(|k| f[k] * c_prev[k] + i[k] * g[k])
            .collect();
        Gating {
            f,
            i,
            g,
            o,
            c_prev: c_prev.to_vec(),
            c,
        }
    }

    fn output(&self) -> Vec<f64> {
        self.o
            .iter()
            .zip(&self.c)
            .map(|(o, c)| o * c.tanh())
            .collect()
    }

    /// Returns the preactivation gradients and `∂L/∂c_prev`.
    fn backward(&self, ds: &[f64], dc_next: &[f64]) -> ([Vec<f64>; 4], Vec<f64>) {
        let n = self.c.len();
        let mut d = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut dc_prev = vec![0.0; n];
        for k in 0..n {
            let (f, i, g, o) = (self.f[k], self.i[k], self.g[k], self.o[k]);
            let tc = self.c[k].tanh();
            let dc = dc_next[k] + ds[k] * o * (1.0 - tc * tc);
            d[0][k] = dc * self.c_prev[k] * f * (1.0 - f);
            d[1][k] = dc * g * i * (1.0 - i);
            d[2][k] = dc * i * (1.0 - g * g);
            d[3][k] = ds[k] * tc * o * (1.0 - o);
            dc_prev[k] = dc * f;
        }
        (d, dc_prev)
    }
}

pub struct Qlstm {
    spec: ModelSpec,
    n: usize,
    hidden: usize,
    full: GateProgram,
    reduce: GateProgram,
    output: Linear,
    r_pqc: Vec<Range<usize>>,
    r_out: Range<usize>,
    layout: Layout,
}

impl Qlstm {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let Hyperparams::Qlstm {
            n_qubits: n,
            layers,
        } = spec.hyperparams
        else {
            unreachable!("Qlstm::new called with {}", spec.hyperparams)
        };
        let hidden = n - spec.data_dim;
        let full = qlstm_pqc(n, layers, n)?;
        let reduce = qlstm_pqc(n, layers, hidden)?;
        let output = linear(n, spec.data_dim, true);
        let mut layout = Layout::default();
        let r_pqc = (0..6).map(|_| layout.angles(full.n_trainable())).collect();
        let r_out = layout.block(&output);
        Ok(Qlstm {
            spec,
            n,
            hidden,
            full,
            reduce,
            output,
            r_pqc,
            r_out,
            layout,
        })
    }
}

struct QlstmStep<'p> {
    gates: [ForwardTape<'p>; 4],
    gating: Gating,
    reduce: ForwardTape<'p>,
}

impl Forecaster for Qlstm {
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
        let theta = |k: usize| &params[self.r_pqc[k].clone()];
        let mut h = vec![0.0; self.hidden];
        let mut c = vec![0.0; self.n];
        let mut s = vec![0.0; self.n];
        let mut steps: Vec<QlstmStep<'_>> = Vec::with_capacity(self.spec.seq_len);
        for x in seq.chunks(d) {
            let v: Vec<f64> = h.iter().chain(x).copied().collect();
            let gates = [
                forward(&self.full, theta(0), &v)?,
                forward(&self.full, theta(1), &v)?,
                forward(&self.full, theta(2), &v)?,
                forward(&self.full, theta(3), &v)?,
            ];
            let gating = Gating::new(
                [
                    gates[0].expectations(),
                    gates[1].expectations(),
                    gates[2].expectations(),
                    gates[3].expectations(),
                ],
                &c,
            );
            c.clone_from(&gating.c);
            s = gating.output();
            let reduce = forward(&self.reduce, theta(4), &s)?;
            h = reduce.expectations().to_vec();
            steps.push(QlstmStep {
                gates,
                gating,
                reduce,
            });
        }
        let last = forward(&self.full, theta(5), &s)?;
        let e = last.expectations();
        let y = self.output.forward(&params[self.r_out.clone()], e);

        let Some(Backward { d_output, grad }) = backward else {
            return Ok(y);
        };
        let dy = d_output(&y);
        let de = block_backward(&self.output, params, &self.r_out, e, &dy, grad);
        let mut ds = vec![0.0; self.n];
        last.backward(&de, &mut grad[self.r_pqc[5].clone()], &mut ds);
        let mut dh = vec![0.0; self.hidden];
        let mut dc = vec![0.0; self.n];
        for step in steps.iter().rev() {
            step.reduce
                .backward(&dh, &mut grad[self.r_pqc[4].clone()], &mut ds);
            let (dpre, dc_prev) = step.gating.backward(&ds, &dc);
            let mut dv = vec![0.0; self.n];
            for k in 0..4 {
                step.gates[k].backward(&dpre[k], &mut grad[self.r_pqc[k].clone()], &mut dv);
            }
            dh.copy_from_slice(&dv[..self.hidden]);
            dc = dc_prev;
            ds.fill(0.0);
        }
        Ok(y)
    }
}

pub struct LeQlstm {
    spec: ModelSpec,
    hidden: usize,
    pqc: GateProgram,
    input: Linear,
    head: Linear,
    output: Linear,
    r_in: Range<usize>,
    r_pqc: Vec<Range<usize>>,
    r_head: Vec<Range<usize>>,
    r_out: Range<usize>,
    layout: Layout,
}

impl LeQlstm {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let Hyperparams::Leqlstm {
            n_qubits: n,
            layers,
            hidden,
        } = spec.hyperparams
        else {
            unreachable!("LeQlstm::new called with {}", spec.hyperparams)
        };
        let pqc = qlstm_pqc(n, layers, n)?;
        let input = linear(hidden + spec.data_dim, n, true);
        let head = linear(n, hidden, true);
        let output = linear(hidden, spec.data_dim, true);
        let mut layout = Layout::default();
        let r_in = layout.block(&input);
        let r_pqc = (0..4).map(|_| layout.angles(pqc.n_trainable())).collect();
        let r_head = (0..4).map(|_| layout.block(&head)).collect();
        let r_out = layout.block(&output);
        Ok(LeQlstm {
            spec,
            hidden,
            pqc,
            input,
            head,
            output,
            r_in,
            r_pqc,
            r_head,
            r_out,
            layout,
        })
    }
}

struct LeStep<'p> {
    v: Vec<f64>,
    tapes: [ForwardTape<'p>; 4],
    gating: Gating,
}

impl Forecaster for LeQlstm {
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
        let mut h = vec![0.0; self.hidden];
        let mut c = vec![0.0; self.hidden];
        let mut steps: Vec<LeStep<'_>> = Vec::with_capacity(self.spec.seq_len);
        for x in seq.chunks(d) {
            let v: Vec<f64> = h.iter().chain(x).copied().collect();
            let z = self.input.forward(&params[self.r_in.clone()], &v);
            let tapes = [
                forward(&self.pqc, &params[self.r_pqc[0].clone()], &z)?,
                forward(&self.pqc, &params[self.r_pqc[1].clone()], &z)?,
                forward(&self.pqc, &params[self.r_pqc[2].clone()], &z)?,
                forward(&self.pqc, &params[self.r_pqc[3].clone()], &z)?,
            ];
            let pre: Vec<Vec<f64>> = (0..4)
                .map(|k| {
                    self.head
                        .forward(&params[self.r_head[k].clone()], tapes[k].expectations())
                })
                .collect();
            let gating = Gating::new([&pre[0], &pre[1], &pre[2], &pre[3]], &c);
            c.clone_from(&gating.c);
            h = gating.output();
            steps.push(LeStep { v, tapes, gating });
        }
        let y = self.output.forward(&params[self.r_out.clone()], &h);

        let Some(Backward { d_output, grad }) = backward else {
            return Ok(y);
        };
        let dy = d_output(&y);
        let mut dh = block_backward(&self.output, params, &self.r_out, &h, &dy, grad);
        let mut dc = vec![0.0; self.hidden];
        let n = self.pqc.n_inputs();
        for step in steps.iter().rev() {
            let (dpre, dc_prev) = step.gating.backward(&dh, &dc);
            let mut dz = vec![0.0; n];
            for k in 0..4 {
                let de = block_backward(
                    &self.head,
                    params,
                    &self.r_head[k],
                    step.tapes[k].expectations(),
                    &dpre[k],
                    grad,
                );
                step.tapes[k].backward(&de, &mut grad[self.r_pqc[k].clone()], &mut dz);
            }
            let dv = block_backward(&self.input, params, &self.r_in, &step.v, &dz, grad);
            dh.copy_from_slice(&dv[..self.hidden]);
            dc = dc_prev;
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::model_grad_error;

    fn qlstm(n: usize, m: usize, l: usize, d: usize) -> Qlstm {
        Qlstm::new(ModelSpec::new(
            Hyperparams::Qlstm {
                n_qubits: n,
                layers: m,
            },
            l,
            d,
        ))
        .unwrap()
    }

    fn leqlstm(m: usize, h: usize, l: usize, d: usize) -> LeQlstm {
        LeQlstm::new(ModelSpec::new(
            Hyperparams::Leqlstm {
                n_qubits: 6,
                layers: m,
                hidden: h,
            },
            l,
            d,
        ))
        .unwrap()
    }

    #[test]
    fn quantum_counts() {
        assert_eq!(qlstm(4, 1, 4, 1).param_counts().quantum, 72);
        assert_eq!(qlstm(6, 3, 4, 1).param_counts().quantum, 324);
        assert_eq!(leqlstm(2, 32, 4, 1).param_counts().quantum, 144);
    }

    #[test]
    fn zero_input_encodes_only_hadamards() {
        let p = qlstm_pqc(4, 1, 4).unwrap();
        let theta = vec![0.0; p.n_trainable()];
        // H layer then CNOTs leave |+…+⟩ invariant: every ⟨Z⟩ is 0
        let tape = forward(&p, &theta, &[0.0; 4]).unwrap();
        assert!(tape.expectations().iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn zero_classical_weights_make_output_input_independent() {
        let m = leqlstm(1, 8, 3, 1);
        let mut p = m.init_params(3);
        p[m.r_in.clone()].fill(0.0);
        let a = m.predict(&p, &[0.1, 0.2, 0.3]).unwrap();
        let b = m.predict(&p, &[0.9, 0.4, 0.7]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn qlstm_gradient() {
        let m = qlstm(4, 1, 3, 2);
        let p = m.init_params(7);
        let err = model_grad_error(&m, &p, &[0.2, 0.7, 0.4, 0.1, 0.9, 0.5], &[1.0, 0.3]);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn leqlstm_gradient() {
        let m = leqlstm(1, 8, 3, 1);
        let p = m.init_params(8);
        let err = model_grad_error(&m, &p, &[0.2, 0.7, 0.4], &[1.0]);
        assert!(err < 1e-5, "{err}");
    }
}
