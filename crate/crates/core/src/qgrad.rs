//! Exact gradients of Pauli-Z readouts.
//!
//! [`forward`] records what the adjoint sweep needs (resolved angles, the
//! final state, register growth points). [`ForwardTape::backward`] then
//! computes a vector-Jacobian product for the weighted observable
//! `Σ_j w_j Z_j` in a single reverse sweep, which is what training uses.
//! [`adjoint_gradient`] assembles the full Jacobian from one sweep per
//! measured qubit; [`param_shift_gradient`] is an independent check.

use std::f64::consts::{FRAC_PI_2, SQRT_2};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::qsim::kernel::{self, rotation_derivative};
use crate::qsim::{expectations_with_angles, resolve_angles, AngleSource, GateProgram, Register};

/// Dense row-major matrix of partial derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct Jacobian {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Jacobian {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Jacobian {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn add(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.data.iter()
    }
}

/// `d_params[j][i] = ∂⟨Z_j⟩/∂θ_i`, `d_inputs[j][i] = ∂⟨Z_j⟩/∂x_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitGradient {
    pub d_params: Jacobian,
    pub d_inputs: Jacobian,
}

/// Forward pass retained for one or more adjoint sweeps.
#[derive(Clone, Debug)]
pub struct ForwardTape<'p> {
    program: &'p GateProgram,
    angles: Vec<(f64, f64)>,
    active_before: Vec<usize>,
    reg: Register,
    expectations: Vec<f64>,
}

pub fn forward<'p>(
    program: &'p GateProgram,
    params: &[f64],
    inputs: &[f64],
) -> Result<ForwardTape<'p>> {
    program.check_lengths(params, inputs)?;
    let angles = resolve_angles(program, params, inputs)?;
    let mut reg = Register::new();
    let mut active_before = Vec::with_capacity(angles.len());
    for (g, &(a, _)) in program.gates().iter().zip(&angles) {
        active_before.push(reg.active);
        reg.apply(g, a);
    }
    let expectations = reg.expectations(program.measured());
    Ok(ForwardTape {
        program,
        angles,
        active_before,
        reg,
        expectations,
    })
}

impl ForwardTape<'_> {
    pub fn expectations(&self) -> &[f64] {
        &self.expectations
    }

    /// Accumulates `Σ_j w_j ∂⟨Z_j⟩/∂·` into `d_params` and `d_inputs`.
    pub fn backward(&self, weights: &[f64], d_params: &mut [f64], d_inputs: &mut [f64]) {
        let program = self.program;
        debug_assert_eq!(weights.len(), program.measured().len());
        debug_assert_eq!(d_params.len(), program.n_trainable());
        debug_assert_eq!(d_inputs.len(), program.n_inputs());

        let mut active = self.reg.active;
        let mut psi = self.reg.amps.clone();
        let mut lambda = observable_times(&psi, active, program.measured(), weights);

        for (idx, g) in program.gates().iter().enumerate().rev() {
            let (angle, dfactor) = self.angles[idx];
            kernel::apply(&mut psi, g, angle, true);
            let slot = match g.angle() {
                Some(AngleSource::Trainable(i)) => Some((true, *i, 1.0)),
                Some(AngleSource::Input { feature, .. }) if dfactor != 0.0 => {
                    Some((false, *feature, dfactor))
                }
                _ => None,
            };
            if let Some((is_param, index, factor)) = slot {
                let axis = g.kind().axis().expect("angle-bearing gates are rotations");
                let qs = g.qubits();
                let (target, control) = if qs.len() == 2 {
                    (qs[1], Some(qs[0]))
                } else {
                    (qs[0], None)
                };
                let dm = rotation_derivative(axis, angle);
                let d_angle = 2.0 * kernel::sandwich(&lambda, &psi, target, control, &dm).re;
                if is_param {
                    d_params[index] += d_angle;
                } else {
                    d_inputs[index] += d_angle * factor;
                }
            }
            kernel::apply(&mut lambda, g, angle, true);
            let before = self.active_before[idx];
            if before < active {
                // the dropped half is exactly zero in the true state
                psi.truncate(1 << before);
                lambda.truncate(1 << before);
                active = before;
            }
        }
    }

    /// Convenience: freshly allocated VJP `(d_params, d_inputs)`.
    pub fn vjp(&self, weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut dp = vec![0.0; self.program.n_trainable()];
        let mut dx = vec![0.0; self.program.n_inputs()];
        self.backward(weights, &mut dp, &mut dx);
        (dp, dx)
    }
}

fn observable_times(psi: &[C64], active: usize, measured: &[usize], weights: &[f64]) -> Vec<C64> {
    // qubits not yet in the register are |0⟩, so their Z acts as +1
    let mut constant = 0.0;
    let mut terms = Vec::new();
    for (&q, &w) in measured.iter().zip(weights) {
        if q < active {
            terms.push((1usize << q, w));
        } else {
            constant += w;
        }
    }
    psi.iter()
        .enumerate()
        .map(|(i, a)| {
            let s: f64 = constant
                + terms
                    .iter()
                    .map(|&(bit, w)| if i & bit == 0 { w } else { -w })
                    .sum::<f64>();
            a * s
        })
        .collect()
}

/// Expectations and the full Jacobian via adjoint sweeps.
pub fn adjoint_gradient(
    program: &GateProgram,
    params: &[f64],
    inputs: &[f64],
) -> Result<(Vec<f64>, CircuitGradient)> {
    let tape = forward(program, params, inputs)?;
    let m = program.measured().len();
    let mut grad = CircuitGradient {
        d_params: Jacobian::zeros(m, program.n_trainable()),
        d_inputs: Jacobian::zeros(m, program.n_inputs()),
    };
    let mut w = vec![0.0; m];
    for j in 0..m {
        w.fill(0.0);
        w[j] = 1.0;
        tape.backward(&w, grad.d_params.row_mut(j), grad.d_inputs.row_mut(j));
    }
    Ok((tape.expectations, grad))
}

const SHIFT_NEAR: f64 = (SQRT_2 + 1.0) / (4.0 * SQRT_2);
const SHIFT_FAR: f64 = (SQRT_2 - 1.0) / (4.0 * SQRT_2);

/// Shift-rule gradient: two-term `±π/2` for single-qubit rotations and the
/// four-term rule for controlled rotations, whose generator spectrum is
/// `{0, ±1/2}` rather than `±1/2`.
pub fn param_shift_gradient(
    program: &GateProgram,
    params: &[f64],
    inputs: &[f64],
) -> Result<CircuitGradient> {
    program.check_lengths(params, inputs)?;
    let resolved = resolve_angles(program, params, inputs)?;
    let base: Vec<f64> = resolved.iter().map(|&(a, _)| a).collect();
    let m = program.measured().len();
    let mut grad = CircuitGradient {
        d_params: Jacobian::zeros(m, program.n_trainable()),
        d_inputs: Jacobian::zeros(m, program.n_inputs()),
    };
    let mut angles = base.clone();
    let mut eval_shift = |idx: usize, shift: f64| {
        angles[idx] = base[idx] + shift;
        let e = expectations_with_angles(program, &angles);
        angles[idx] = base[idx];
        e
    };

    for (idx, g) in program.gates().iter().enumerate() {
        let slot = match g.angle() {
            Some(AngleSource::Trainable(i)) => (true, *i, 1.0),
            Some(AngleSource::Input { feature, .. }) => (false, *feature, resolved[idx].1),
            _ => continue,
        };
        if g.kind().axis().is_none() {
            return Err(Error::UnsupportedGate(format!(
                "{:?} carries an angle but is not a rotation",
                g.kind()
            )));
        }
        let d_angle: Vec<f64> = if g.kind().is_controlled_rotation() {
            let (p1, m1) = (eval_shift(idx, FRAC_PI_2), eval_shift(idx, -FRAC_PI_2));
            let (p3, m3) = (
                eval_shift(idx, 3.0 * FRAC_PI_2),
                eval_shift(idx, -3.0 * FRAC_PI_2),
            );
            (0..m)
                .map(|j| SHIFT_NEAR * (p1[j] - m1[j]) - SHIFT_FAR * (p3[j] - m3[j]))
                .collect()
        } else {
            let (p, mi) = (eval_shift(idx, FRAC_PI_2), eval_shift(idx, -FRAC_PI_2));
            (0..m).map(|j| (p[j] - mi[j]) / 2.0).collect()
        };
        let (is_param, index, factor) = slot;
        for (j, d) in d_angle.into_iter().enumerate() {
            if is_param {
                grad.d_params.add(j, index, d);
            } else {
                grad.d_inputs.add(j, index, d * factor);
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::{run_program, Gate, Pauli, Scaler};
    use std::f64::consts::PI;

    fn single_ry() -> GateProgram {
        GateProgram::new(1, vec![Gate::ry(0, AngleSource::Trainable(0))], vec![0]).unwrap()
    }

    #[test]
    fn ry_gradient_is_minus_sine() {
        let p = single_ry();
        for theta in [0.0, 0.3, PI / 2.0, 2.5] {
            let (e, g) = adjoint_gradient(&p, &[theta], &[]).unwrap();
            assert!((e[0] - theta.cos()).abs() < 1e-12);
            assert!((g.d_params.get(0, 0) + theta.sin()).abs() < 1e-12);
        }
        let g = param_shift_gradient(&p, &[0.0], &[]).unwrap();
        assert!(g.d_params.get(0, 0).abs() < 1e-15);
    }

    #[test]
    fn constants_have_no_gradient() {
        let p = GateProgram::new(
            2,
            vec![
                Gate::rx(0, AngleSource::Constant(0.4)),
                Gate::ry(1, AngleSource::Trainable(0)),
                Gate::cnot(0, 1),
                Gate::ry(0, AngleSource::input(0)),
            ],
            vec![0, 1],
        )
        .unwrap();
        let (_, g) = adjoint_gradient(&p, &[0.2], &[0.9]).unwrap();
        assert_eq!(g.d_params.cols(), 1);
        assert_eq!(g.d_inputs.cols(), 1);
        // qubit 1 is only touched by the trainable RY and the CNOT
        assert!(g.d_params.get(1, 0).abs() > 1e-3);
    }

    #[test]
    fn controlled_rotation_with_idle_control() {
        let p = GateProgram::new(
            2,
            vec![
                Gate::ry(1, AngleSource::Constant(0.8)),
                Gate::controlled_rotation(Pauli::Y, 0, 1, AngleSource::Trainable(0)),
            ],
            vec![1],
        )
        .unwrap();
        let (_, g) = adjoint_gradient(&p, &[1.1], &[]).unwrap();
        assert!(g.d_params.get(0, 0).abs() < 1e-15);
        let s = param_shift_gradient(&p, &[1.1], &[]).unwrap();
        assert!(s.d_params.get(0, 0).abs() < 1e-15);
    }

    #[test]
    fn controlled_rotation_shift_rule() {
        let p = GateProgram::new(
            2,
            vec![
                Gate::h(0),
                Gate::controlled_rotation(Pauli::X, 0, 1, AngleSource::Trainable(0)),
            ],
            vec![1],
        )
        .unwrap();
        for theta in [0.1, 1.0, 2.7] {
            let a = adjoint_gradient(&p, &[theta], &[]).unwrap().1;
            let s = param_shift_gradient(&p, &[theta], &[]).unwrap();
            // ⟨Z_1⟩ = (1 + cos θ)/2
            assert!((a.d_params.get(0, 0) + theta.sin() / 2.0).abs() < 1e-12);
            assert!((s.d_params.get(0, 0) + theta.sin() / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_input_chain_rule() {
        for (scaler, x, dscale) in [
            (Scaler::Arccos, 0.3f64, -1.0 / (1.0 - 0.09f64).sqrt()),
            (Scaler::Arctan, 0.7, 1.0 / (1.0 + 0.49)),
            (Scaler::ArctanSquare, 0.7, 1.4 / (1.0 + 0.7f64.powi(4))),
        ] {
            let p = GateProgram::new(
                1,
                vec![Gate::ry(0, AngleSource::scaled_input(0, scaler, 2.0))],
                vec![0],
            )
            .unwrap();
            let (_, g) = adjoint_gradient(&p, &[], &[x]).unwrap();
            let angle = 2.0 * scaler.eval(x).unwrap().0;
            let expected = -angle.sin() * 2.0 * dscale;
            assert!(
                (g.d_inputs.get(0, 0) - expected).abs() < 1e-12,
                "{scaler:?}"
            );
        }
    }

    #[test]
    fn vjp_is_weighted_jacobian() {
        let p = GateProgram::new(
            3,
            vec![
                Gate::h(0),
                Gate::ry(1, AngleSource::Trainable(0)),
                Gate::controlled_rotation(Pauli::Z, 0, 2, AngleSource::Trainable(1)),
                Gate::cnot(1, 2),
                Gate::rx(2, AngleSource::input(0)),
                Gate::ry(0, AngleSource::Trainable(1)),
            ],
            vec![0, 1, 2],
        )
        .unwrap();
        let params = [0.3, -1.2];
        let inputs = [0.45];
        let (_, jac) = adjoint_gradient(&p, &params, &inputs).unwrap();
        let w = [0.5, -2.0, 1.5];
        let tape = forward(&p, &params, &inputs).unwrap();
        let (dp, dx) = tape.vjp(&w);
        for (i, &g) in dp.iter().enumerate() {
            let expect: f64 = (0..3).map(|j| w[j] * jac.d_params.get(j, i)).sum();
            assert!((g - expect).abs() < 1e-12);
        }
        let expect: f64 = (0..3).map(|j| w[j] * jac.d_inputs.get(j, 0)).sum();
        assert!((dx[0] - expect).abs() < 1e-12);
        assert_eq!(
            tape.expectations(),
            run_program(&p, &params, &inputs).unwrap().1.as_slice()
        );
    }
}
