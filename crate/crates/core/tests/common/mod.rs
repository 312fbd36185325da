//! Dense-matrix reference simulator and random program generator shared by
//! the integration and acceptance tests.
#![allow(dead_code)]

use num_complex::Complex64 as C;
use qforecast_core::qsim::{AngleSource, Gate, GateKind, GateProgram, Pauli, Scaler};
use rand::Rng;

type Mat = Vec<Vec<C>>;

fn identity(dim: usize) -> Mat {
    (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    if i == j {
                        C::new(1.0, 0.0)
                    } else {
                        C::new(0.0, 0.0)
                    }
                })
                .collect()
        })
        .collect()
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let mut out = vec![vec![C::new(0.0, 0.0); n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == C::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// exp(-iθP/2) = cos(θ/2) I - i sin(θ/2) P
fn rotation(axis: Pauli, theta: f64) -> [[C; 2]; 2] {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let i = C::new(0.0, 1.0);
    let p: [[C; 2]; 2] = match axis {
        Pauli::X => [
            [C::new(0.0, 0.0), C::new(1.0, 0.0)],
            [C::new(1.0, 0.0), C::new(0.0, 0.0)],
        ],
        Pauli::Y => [[C::new(0.0, 0.0), -i], [i, C::new(0.0, 0.0)]],
        Pauli::Z => [
            [C::new(1.0, 0.0), C::new(0.0, 0.0)],
            [C::new(0.0, 0.0), C::new(-1.0, 0.0)],
        ],
    };
    let mut u = [[C::new(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for k in 0..2 {
            let id = if r == k { c } else { 0.0 };
            u[r][k] = C::new(id, 0.0) - i * s * p[r][k];
        }
    }
    u
}

fn single(n: usize, q: usize, u: [[C; 2]; 2]) -> Mat {
    let dim = 1 << n;
    let mut m = vec![vec![C::new(0.0, 0.0); dim]; dim];
    for row in 0..dim {
        for col in 0..dim {
            if row & !(1 << q) == col & !(1 << q) {
                m[row][col] = u[(row >> q) & 1][(col >> q) & 1];
            }
        }
    }
    m
}

fn controlled(n: usize, c: usize, t: usize, u: [[C; 2]; 2]) -> Mat {
    let dim = 1 << n;
    let full = single(n, t, u);
    let mut m = identity(dim);
    for row in 0..dim {
        for col in 0..dim {
            if (row >> c) & 1 == 1 && (col >> c) & 1 == 1 {
                m[row][col] = full[row][col];
            } else if (row >> c) & 1 != (col >> c) & 1 {
                m[row][col] = C::new(0.0, 0.0);
            }
        }
    }
    m
}

fn scale(scaler: Scaler, x: f64) -> f64 {
    match scaler {
        Scaler::Identity => x,
        Scaler::Arccos => x.acos(),
        Scaler::Arctan => x.atan(),
        Scaler::ArctanSquare => (x * x).atan(),
    }
}

fn angle(src: &AngleSource, params: &[f64], inputs: &[f64]) -> f64 {
    match *src {
        AngleSource::Constant(v) => v,
        AngleSource::Trainable(i) => params[i],
        AngleSource::Input {
            feature,
            scaler,
            prefactor,
        } => prefactor * scale(scaler, inputs[feature]),
    }
}

/// Full unitary of `program` as a dense product of `2ⁿ × 2ⁿ` gate matrices.
pub fn dense_unitary(program: &GateProgram, params: &[f64], inputs: &[f64]) -> Mat {
    let n = program.n_qubits();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut u = identity(1 << n);
    for g in program.gates() {
        let q = g.qubits();
        let m = match g.kind() {
            GateKind::H => single(
                n,
                q[0],
                [
                    [C::new(h, 0.0), C::new(h, 0.0)],
                    [C::new(h, 0.0), C::new(-h, 0.0)],
                ],
            ),
            GateKind::CNOT => controlled(n, q[0], q[1], rotation_x_pi_phase_free()),
            k => {
                let theta = angle(g.angle().unwrap(), params, inputs);
                let axis = k.axis().unwrap();
                if k.is_controlled_rotation() {
                    controlled(n, q[0], q[1], rotation(axis, theta))
                } else {
                    single(n, q[0], rotation(axis, theta))
                }
            }
        };
        u = matmul(&m, &u);
    }
    u
}

fn rotation_x_pi_phase_free() -> [[C; 2]; 2] {
    [
        [C::new(0.0, 0.0), C::new(1.0, 0.0)],
        [C::new(1.0, 0.0), C::new(0.0, 0.0)],
    ]
}

/// ⟨Z⟩ on the measured qubits of `U|0…0⟩`.
pub fn oracle_expectations(program: &GateProgram, params: &[f64], inputs: &[f64]) -> Vec<f64> {
    let u = dense_unitary(program, params, inputs);
    let psi: Vec<C> = u.iter().map(|row| row[0]).collect();
    program
        .measured()
        .iter()
        .map(|&q| {
            psi.iter()
                .enumerate()
                .map(|(i, a)| {
                    if (i >> q) & 1 == 0 {
                        a.norm_sqr()
                    } else {
                        -a.norm_sqr()
                    }
                })
                .sum()
        })
        .collect()
}

pub struct RandomProgram {
    pub program: GateProgram,
    pub params: Vec<f64>,
    pub inputs: Vec<f64>,
}

/// A random program on up to `max_qubits` qubits with up to `max_gates`
/// gates over every gate kind and angle source. Inputs stay inside
/// `(-0.9, 0.9)` so the arccos scaler is smooth.
pub fn random_program<R: Rng>(rng: &mut R, max_qubits: usize, max_gates: usize) -> RandomProgram {
    let n = rng.gen_range(1..=max_qubits);
    let n_gates = rng.gen_range(1..=max_gates);
    let (mut n_params, mut n_inputs) = (0usize, 0usize);
    let mut gates = Vec::with_capacity(n_gates);
    let scalers = [
        Scaler::Identity,
        Scaler::Arccos,
        Scaler::Arctan,
        Scaler::ArctanSquare,
    ];
    for _ in 0..n_gates {
        let q = rng.gen_range(0..n);
        let two_qubit = n > 1 && rng.gen_bool(0.4);
        let other = if two_qubit {
            (q + rng.gen_range(1..n)) % n
        } else {
            q
        };
        let mut source = |rng: &mut R| -> AngleSource {
            match rng.gen_range(0..5) {
                0 => AngleSource::Constant(rng.gen_range(-3.0..3.0)),
                1 | 2 => {
                    let i = if n_params > 0 && rng.gen_bool(0.3) {
                        rng.gen_range(0..n_params)
                    } else {
                        n_params
                    };
                    n_params = n_params.max(i + 1);
                    AngleSource::Trainable(i)
                }
                _ => {
                    let f = if n_inputs > 0 && rng.gen_bool(0.3) {
                        rng.gen_range(0..n_inputs)
                    } else {
                        n_inputs
                    };
                    n_inputs = n_inputs.max(f + 1);
                    AngleSource::scaled_input(
                        f,
                        scalers[rng.gen_range(0..4)],
                        rng.gen_range(-2.0..2.0),
                    )
                }
            }
        };
        let axis = Pauli::ALL[rng.gen_range(0..3)];
        let gate = if two_qubit {
            if rng.gen_bool(0.4) {
                Gate::cnot(q, other)
            } else {
                Gate::controlled_rotation(axis, q, other, source(rng))
            }
        } else if rng.gen_bool(0.15) {
            Gate::h(q)
        } else {
            Gate::rotation(axis, q, source(rng))
        };
        gates.push(gate);
    }
    let mut measured: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.7)).collect();
    if measured.is_empty() {
        measured.push(rng.gen_range(0..n));
    }
    let program = GateProgram::new(n, gates, measured).expect("generated program is valid");
    let params = (0..n_params).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let inputs = (0..n_inputs).map(|_| rng.gen_range(-0.9..0.9)).collect();
    RandomProgram {
        program,
        params,
        inputs,
    }
}

/// Central finite-difference Jacobians `(d/dparams, d/dinputs)`, row per measured qubit.
pub fn fd_jacobians(
    program: &GateProgram,
    params: &[f64],
    inputs: &[f64],
    h: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let eval = |p: &[f64], x: &[f64]| qforecast_core::qsim::run_program(program, p, x).unwrap().1;
    let m = program.measured().len();
    let mut dp = vec![vec![0.0; params.len()]; m];
    let mut dx = vec![vec![0.0; inputs.len()]; m];
    for i in 0..params.len() {
        let (mut a, mut b) = (params.to_vec(), params.to_vec());
        a[i] += h;
        b[i] -= h;
        let (ea, eb) = (eval(&a, inputs), eval(&b, inputs));
        for j in 0..m {
            dp[j][i] = (ea[j] - eb[j]) / (2.0 * h);
        }
    }
    for i in 0..inputs.len() {
        let (mut a, mut b) = (inputs.to_vec(), inputs.to_vec());
        a[i] += h;
        b[i] -= h;
        let (ea, eb) = (eval(params, &a), eval(params, &b));
        for j in 0..m {
            dx[j][i] = (ea[j] - eb[j]) / (2.0 * h);
        }
    }
    (dp, dx)
}

/// `|a - b| / max(|a|, |b|, floor)`
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
