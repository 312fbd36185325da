//! Dense statevector simulation of parameterized gate programs.
//!
//! Conventions:
//!
//! * little-endian qubit order: qubit `q` is bit `q` of the amplitude index;
//! * rotations are `R_P(θ) = exp(-iθP/2)`; controlled rotations apply `R_P`
//!   to the target when the control is `|1⟩`;
//! * readout is the single-qubit Pauli-Z expectation of each measured qubit.
//!
//! Qubits enter the simulated register lazily: a qubit that has not yet been
//! touched by any gate is in `|0⟩`, so the register only grows (by
//! zero-padding the high half) when a gate first addresses a higher index.
//! This is exact and makes fresh-ancilla reset programs cheap to simulate.

use std::fmt;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 16;

/// Inputs to an arccos scaler are clamped to `[-1 + ε, 1 - ε]`.
pub const ARCCOS_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn symbol(self) -> char {
        match self {
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_symbol(c: char) -> Option<Pauli> {
        match c {
            'X' | 'x' => Some(Pauli::X),
            'Y' | 'y' => Some(Pauli::Y),
            'Z' | 'z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateKind {
    H,
    RX,
    RY,
    RZ,
    CNOT,
    CRX,
    CRY,
    CRZ,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::H | GateKind::RX | GateKind::RY | GateKind::RZ => 1,
            _ => 2,
        }
    }

    /// Rotation axis for (controlled) rotations.
    pub fn axis(self) -> Option<Pauli> {
        match self {
            GateKind::RX | GateKind::CRX => Some(Pauli::X),
            GateKind::RY | GateKind::CRY => Some(Pauli::Y),
            GateKind::RZ | GateKind::CRZ => Some(Pauli::Z),
            GateKind::H | GateKind::CNOT => None,
        }
    }

    pub fn is_controlled_rotation(self) -> bool {
        matches!(self, GateKind::CRX | GateKind::CRY | GateKind::CRZ)
    }

    pub fn rotation(axis: Pauli) -> GateKind {
        match axis {
            Pauli::X => GateKind::RX,
            Pauli::Y => GateKind::RY,
            Pauli::Z => GateKind::RZ,
        }
    }

    pub fn controlled_rotation(axis: Pauli) -> GateKind {
        match axis {
            Pauli::X => GateKind::CRX,
            Pauli::Y => GateKind::CRY,
            Pauli::Z => GateKind::CRZ,
        }
    }

    fn name(self) -> &'static str {
        match self {
            GateKind::H => "H",
            GateKind::RX => "RX",
            GateKind::RY => "RY",
            GateKind::RZ => "RZ",
            GateKind::CNOT => "CNOT",
            GateKind::CRX => "CRX",
            GateKind::CRY => "CRY",
            GateKind::CRZ => "CRZ",
        }
    }
}

/// Classical preprocessing applied to an input feature before it becomes an angle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scaler {
    Identity,
    Arccos,
    Arctan,
    /// `arctan(x²)`
    ArctanSquare,
}

impl Scaler {
    /// Returns `(value, derivative)` of the scaler at `x`.
    pub fn eval(self, x: f64) -> Result<(f64, f64)> {
        match self {
            Scaler::Identity => Ok((x, 1.0)),
            Scaler::Arctan => Ok((x.atan(), 1.0 / (1.0 + x * x))),
            Scaler::ArctanSquare => {
                let x2 = x * x;
                Ok((x2.atan(), 2.0 * x / (1.0 + x2 * x2)))
            }
            Scaler::Arccos => {
                if !(-1.0..=1.0).contains(&x) {
                    return Err(Error::Domain(format!(
                        "arccos argument {x} outside [-1, 1]"
                    )));
                }
                let lo = -1.0 + ARCCOS_EPS;
                let hi = 1.0 - ARCCOS_EPS;
                if x <= lo || x >= hi {
                    // clamped: flat, so no derivative flows back
                    Ok((x.clamp(lo, hi).acos(), 0.0))
                } else {
                    Ok((x.acos(), -1.0 / (1.0 - x * x).sqrt()))
                }
            }
        }
    }

    fn name(self) -> &'static str {
        match self {
            Scaler::Identity => "id",
            Scaler::Arccos => "arccos",
            Scaler::Arctan => "arctan",
            Scaler::ArctanSquare => "arctan_sq",
        }
    }
}

/// Where a rotation angle comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AngleSource {
    Constant(f64),
    Trainable(usize),
    /// `angle = prefactor * scaler(inputs[feature])`
    Input {
        feature: usize,
        scaler: Scaler,
        prefactor: f64,
    },
}

impl AngleSource {
    pub fn input(feature: usize) -> Self {
        AngleSource::Input {
            feature,
            scaler: Scaler::Identity,
            prefactor: 1.0,
        }
    }

    pub fn scaled_input(feature: usize, scaler: Scaler, prefactor: f64) -> Self {
        AngleSource::Input {
            feature,
            scaler,
            prefactor,
        }
    }

    /// Resolves to `(angle, d angle / d source)`; the derivative is 0 for constants.
    pub fn resolve(&self, params: &[f64], inputs: &[f64]) -> Result<(f64, f64)> {
        match *self {
            AngleSource::Constant(v) => Ok((v, 0.0)),
            AngleSource::Trainable(i) => params
                .get(i)
                .map(|&v| (v, 1.0))
                .ok_or_else(|| config_err!("trainable index {i} out of range ({})", params.len())),
            AngleSource::Input {
                feature,
                scaler,
                prefactor,
            } => {
                let x = *inputs.get(feature).ok_or_else(|| {
                    config_err!("input index {feature} out of range ({})", inputs.len())
                })?;
                let (v, dv) = scaler.eval(x)?;
                Ok((prefactor * v, prefactor * dv))
            }
        }
    }
}

impl fmt::Display for AngleSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AngleSource::Constant(v) => write!(f, "const({v})"),
            AngleSource::Trainable(i) => write!(f, "param({i})"),
            AngleSource::Input {
                feature,
                scaler,
                prefactor,
            } => {
                write!(f, "input({feature},{},{prefactor})", scaler.name())
            }
        }
    }
}

/// A gate acting on one or two qubits. For two-qubit gates `qubits[0]` is
/// the control and `qubits[1]` the target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gate {
    kind: GateKind,
    qubits: [usize; 2],
    angle: Option<AngleSource>,
}

impl Gate {
    pub fn h(q: usize) -> Self {
        Gate {
            kind: GateKind::H,
            qubits: [q, q],
            angle: None,
        }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Gate {
            kind: GateKind::CNOT,
            qubits: [control, target],
            angle: None,
        }
    }

    pub fn rotation(axis: Pauli, q: usize, angle: AngleSource) -> Self {
        Gate {
            kind: GateKind::rotation(axis),
            qubits: [q, q],
            angle: Some(angle),
        }
    }

    pub fn controlled_rotation(
        axis: Pauli,
        control: usize,
        target: usize,
        angle: AngleSource,
    ) -> Self {
        Gate {
            kind: GateKind::controlled_rotation(axis),
            qubits: [control, target],
            angle: Some(angle),
        }
    }

    pub fn rx(q: usize, angle: AngleSource) -> Self {
        Self::rotation(Pauli::X, q, angle)
    }

    pub fn ry(q: usize, angle: AngleSource) -> Self {
        Self::rotation(Pauli::Y, q, angle)
    }

    pub fn rz(q: usize, angle: AngleSource) -> Self {
        Self::rotation(Pauli::Z, q, angle)
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits[..self.kind.arity()]
    }

    pub fn angle(&self) -> Option<&AngleSource> {
        self.angle.as_ref()
    }

    /// Same gate with its qubits rewritten through `map`.
    pub fn remapped(&self, map: impl Fn(usize) -> usize) -> Self {
        let mut g = *self;
        g.qubits = [map(self.qubits[0]), map(self.qubits[1])];
        g
    }

    pub fn with_angle(&self, angle: AngleSource) -> Self {
        let mut g = *self;
        if g.angle.is_some() {
            g.angle = Some(angle);
        }
        g
    }

    fn max_qubit(&self) -> usize {
        self.qubits().iter().copied().max().unwrap_or(0)
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        let qs = self.qubits();
        if let Some(&q) = qs.iter().find(|&&q| q >= n_qubits) {
            return Err(config_err!(
                "{} targets qubit {q} of a {n_qubits}-qubit register",
                self.kind.name()
            ));
        }
        if qs.len() == 2 && qs[0] == qs[1] {
            return Err(config_err!(
                "{} with identical control and target {}",
                self.kind.name(),
                qs[0]
            ));
        }
        match (self.kind.axis(), self.angle) {
            (Some(_), None) => Err(config_err!("{} without an angle source", self.kind.name())),
            (None, Some(_)) => Err(config_err!(
                "{} cannot carry an angle source",
                self.kind.name()
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.name())?;
        for q in self.qubits() {
            write!(f, " {q}")?;
        }
        if let Some(a) = &self.angle {
            write!(f, " {a}")?;
        }
        Ok(())
    }
}

/// Immutable, validated gate list over a fixed register.
#[derive(Clone, Debug, PartialEq)]
pub struct GateProgram {
    n_qubits: usize,
    gates: Vec<Gate>,
    n_trainable: usize,
    n_inputs: usize,
    measured: Vec<usize>,
}

impl GateProgram {
    /// Validates the gate list; trainable and input index ranges are inferred
    /// and must be contiguous from zero.
    pub fn new(n_qubits: usize, gates: Vec<Gate>, measured: Vec<usize>) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(config_err!(
                "register of {n_qubits} qubits outside 1..={MAX_QUBITS}"
            ));
        }
        for g in &gates {
            g.validate(n_qubits)?;
        }
        if measured.is_empty() {
            return Err(config_err!("no measured qubits"));
        }
        for (i, &q) in measured.iter().enumerate() {
            if q >= n_qubits {
                return Err(config_err!(
                    "measured qubit {q} outside register of {n_qubits}"
                ));
            }
            if measured[..i].contains(&q) {
                return Err(config_err!("qubit {q} measured twice"));
            }
        }
        let mut params_seen = Vec::new();
        let mut inputs_seen = Vec::new();
        for g in &gates {
            match g.angle {
                Some(AngleSource::Trainable(i)) => mark(&mut params_seen, i),
                Some(AngleSource::Input { feature, .. }) => mark(&mut inputs_seen, feature),
                _ => {}
            }
        }
        if let Some(i) = params_seen.iter().position(|s| !s) {
            return Err(config_err!("trainable indices not contiguous: {i} unused"));
        }
        if let Some(i) = inputs_seen.iter().position(|s| !s) {
            return Err(config_err!("input indices not contiguous: {i} unused"));
        }
        Ok(GateProgram {
            n_qubits,
            gates,
            n_trainable: params_seen.len(),
            n_inputs: inputs_seen.len(),
            measured,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn n_trainable(&self) -> usize {
        self.n_trainable
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn measured(&self) -> &[usize] {
        &self.measured
    }

    pub(crate) fn check_lengths(&self, params: &[f64], inputs: &[f64]) -> Result<()> {
        if params.len() != self.n_trainable {
            return Err(config_err!(
                "expected {} params, got {}",
                self.n_trainable,
                params.len()
            ));
        }
        if inputs.len() != self.n_inputs {
            return Err(config_err!(
                "expected {} inputs, got {}",
                self.n_inputs,
                inputs.len()
            ));
        }
        Ok(())
    }

    /// Text netlist: a header line then one gate per line.
    pub fn netlist(&self) -> String {
        self.to_string()
    }
}

fn mark(seen: &mut Vec<bool>, i: usize) {
    if seen.len() <= i {
        seen.resize(i + 1, false);
    }
    seen[i] = true;
}

impl fmt::Display for GateProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "qubits {} params {} inputs {} measure",
            self.n_qubits, self.n_trainable, self.n_inputs
        )?;
        for q in &self.measured {
            write!(f, " {q}")?;
        }
        writeln!(f)?;
        for g in &self.gates {
            writeln!(f, "{g}")?;
        }
        Ok(())
    }
}

/// Incremental construction of a [`GateProgram`].
#[derive(Clone, Debug, Default)]
pub struct ProgramBuilder {
    n_qubits: usize,
    gates: Vec<Gate>,
}

impl ProgramBuilder {
    pub fn new(n_qubits: usize) -> Self {
        ProgramBuilder {
            n_qubits,
            gates: Vec::new(),
        }
    }

    pub fn push(&mut self, gate: Gate) -> &mut Self {
        self.gates.push(gate);
        self
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn build(self, measured: Vec<usize>) -> Result<GateProgram> {
        GateProgram::new(self.n_qubits, self.gates, measured)
    }
}

/// Pure state of `n_qubits` qubits; `amplitudes().len() == 2^n_qubits`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    /// Builds a state from raw amplitudes; the length must be a power of two.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let n = amps.len().trailing_zeros() as usize;
        if amps.len() != 1 << n || n == 0 || n > MAX_QUBITS {
            return Err(config_err!(
                "{} amplitudes is not a valid register size",
                amps.len()
            ));
        }
        Ok(StateVector { n_qubits: n, amps })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn expectation_z(&self, q: usize) -> f64 {
        expectation_z(&self.amps, q)
    }

    /// Probability that qubit `q` reads `|1⟩`.
    pub fn prob_one(&self, q: usize) -> f64 {
        let bit = 1 << q;
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & bit != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }
}

pub fn zero_state(n_qubits: usize) -> Result<StateVector> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(config_err!(
            "register of {n_qubits} qubits outside 1..={MAX_QUBITS}"
        ));
    }
    let mut amps = vec![C64::new(0.0, 0.0); 1 << n_qubits];
    amps[0] = C64::new(1.0, 0.0);
    Ok(StateVector { n_qubits, amps })
}

/// Applies one gate in place, resolving its angle from `params` / `inputs`.
pub fn apply_gate(
    state: &mut StateVector,
    gate: &Gate,
    params: &[f64],
    inputs: &[f64],
) -> Result<()> {
    gate.validate(state.n_qubits)?;
    let angle = match gate.angle {
        Some(src) => src.resolve(params, inputs)?.0,
        None => 0.0,
    };
    kernel::apply(&mut state.amps, gate, angle, false);
    Ok(())
}

/// Runs the program from `|0…0⟩` and reads ⟨Z⟩ on every measured qubit.
pub fn run_program(
    program: &GateProgram,
    params: &[f64],
    inputs: &[f64],
) -> Result<(StateVector, Vec<f64>)> {
    program.check_lengths(params, inputs)?;
    let angles = resolve_angles(program, params, inputs)?;
    let mut reg = Register::new();
    for (g, &(angle, _)) in program.gates.iter().zip(&angles) {
        reg.apply(g, angle);
    }
    let expectations = reg.expectations(&program.measured);
    let mut amps = reg.amps;
    amps.resize(1 << program.n_qubits, C64::new(0.0, 0.0));
    Ok((
        StateVector {
            n_qubits: program.n_qubits,
            amps,
        },
        expectations,
    ))
}

/// Per-gate `(angle, d angle / d source)`; zeros for fixed gates.
pub(crate) fn resolve_angles(
    program: &GateProgram,
    params: &[f64],
    inputs: &[f64],
) -> Result<Vec<(f64, f64)>> {
    program
        .gates
        .iter()
        .map(|g| match &g.angle {
            Some(src) => src.resolve(params, inputs),
            None => Ok((0.0, 0.0)),
        })
        .collect()
}

/// Expectations for an explicit per-gate angle list (used by shift rules).
pub(crate) fn expectations_with_angles(program: &GateProgram, angles: &[f64]) -> Vec<f64> {
    let mut reg = Register::new();
    for (g, &a) in program.gates.iter().zip(angles) {
        reg.apply(g, a);
    }
    reg.expectations(&program.measured)
}

/// Growable register: holds the qubits `0..active` touched so far.
#[derive(Clone, Debug)]
pub(crate) struct Register {
    pub(crate) amps: Vec<C64>,
    pub(crate) active: usize,
}

impl Register {
    pub(crate) fn new() -> Self {
        Register {
            amps: vec![C64::new(1.0, 0.0)],
            active: 0,
        }
    }

    pub(crate) fn ensure(&mut self, q: usize) {
        if q >= self.active {
            self.active = q + 1;
            self.amps.resize(1 << self.active, C64::new(0.0, 0.0));
        }
    }

    pub(crate) fn apply(&mut self, g: &Gate, angle: f64) {
        self.ensure(g.max_qubit());
        kernel::apply(&mut self.amps, g, angle, false);
    }

    pub(crate) fn expectations(&self, measured: &[usize]) -> Vec<f64> {
        measured
            .iter()
            .map(|&q| {
                if q < self.active {
                    expectation_z(&self.amps, q)
                } else {
                    1.0
                }
            })
            .collect()
    }
}

fn expectation_z(amps: &[C64], q: usize) -> f64 {
    let bit = 1 << q;
    amps.iter()
        .enumerate()
        .map(|(i, a)| {
            if i & bit == 0 {
                a.norm_sqr()
            } else {
                -a.norm_sqr()
            }
        })
        .sum()
}

/// Rewrites `program` so that at each reset point the listed qubits continue
/// on fresh ancillas in `|0⟩`. A reset point `(p, qs)` takes effect before
/// gate `p`. Measured qubits follow their final remapping.
pub fn reset_qubits_fresh(
    program: &GateProgram,
    reset_points: &[(usize, Vec<usize>)],
) -> Result<GateProgram> {
    if reset_points.is_empty() {
        return Ok(program.clone());
    }
    let mut points: Vec<&(usize, Vec<usize>)> = reset_points.iter().collect();
    points.sort_by_key(|(p, _)| *p);
    let extra: usize = points.iter().map(|(_, qs)| qs.len()).sum();
    let total = program.n_qubits + extra;
    if total > MAX_QUBITS {
        return Err(Error::Resource(format!(
            "reset expansion needs {total} qubits, budget is {MAX_QUBITS}"
        )));
    }
    for (p, qs) in &points {
        if *p > program.gates.len() {
            return Err(config_err!(
                "reset point {p} beyond program of {} gates",
                program.gates.len()
            ));
        }
        if let Some(q) = qs.iter().find(|&&q| q >= program.n_qubits) {
            return Err(config_err!("reset of qubit {q} outside register"));
        }
    }
    let mut map: Vec<usize> = (0..program.n_qubits).collect();
    let mut next = program.n_qubits;
    let mut gates = Vec::with_capacity(program.gates.len());
    let mut pending = points.iter().peekable();
    for (pos, g) in program.gates.iter().enumerate() {
        while let Some((_, qs)) = pending.next_if(|(p, _)| *p == pos) {
            for &q in qs {
                map[q] = next;
                next += 1;
            }
        }
        gates.push(g.remapped(|q| map[q]));
    }
    for (_, qs) in pending {
        for &q in qs {
            map[q] = next;
            next += 1;
        }
    }
    let measured = program.measured.iter().map(|&q| map[q]).collect();
    GateProgram::new(total, gates, measured)
}

pub(crate) mod kernel {
    //! In-place gate kernels over raw amplitude slices.

    use super::{Gate, GateKind, Pauli};
    use num_complex::Complex64 as C64;
    use std::f64::consts::FRAC_1_SQRT_2;

    pub(crate) type Mat2 = [[C64; 2]; 2];

    const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

    pub(crate) fn rotation_matrix(axis: Pauli, theta: f64) -> Mat2 {
        let (s, c) = (theta / 2.0).sin_cos();
        match axis {
            Pauli::X => [
                [C64::new(c, 0.0), C64::new(0.0, -s)],
                [C64::new(0.0, -s), C64::new(c, 0.0)],
            ],
            Pauli::Y => [
                [C64::new(c, 0.0), C64::new(-s, 0.0)],
                [C64::new(s, 0.0), C64::new(c, 0.0)],
            ],
            Pauli::Z => [[C64::new(c, -s), ZERO], [ZERO, C64::new(c, s)]],
        }
    }

    /// `dR_P(θ)/dθ = -i/2 · P · R_P(θ)`
    pub(crate) fn rotation_derivative(axis: Pauli, theta: f64) -> Mat2 {
        let (s, c) = (theta / 2.0).sin_cos();
        let h = 0.5;
        match axis {
            Pauli::X => [
                [C64::new(-h * s, 0.0), C64::new(0.0, -h * c)],
                [C64::new(0.0, -h * c), C64::new(-h * s, 0.0)],
            ],
            Pauli::Y => [
                [C64::new(-h * s, 0.0), C64::new(-h * c, 0.0)],
                [C64::new(h * c, 0.0), C64::new(-h * s, 0.0)],
            ],
            Pauli::Z => [
                [C64::new(-h * s, -h * c), ZERO],
                [ZERO, C64::new(-h * s, h * c)],
            ],
        }
    }

    /// Applies `gate` (or its inverse) with the resolved `angle`.
    pub(crate) fn apply(amps: &mut [C64], gate: &Gate, angle: f64, inverse: bool) {
        let theta = if inverse { -angle } else { angle };
        let q = gate.qubits;
        match gate.kind {
            GateKind::H => {
                let h = C64::new(FRAC_1_SQRT_2, 0.0);
                apply_1q(amps, q[0], &[[h, h], [h, -h]]);
            }
            GateKind::CNOT => cnot(amps, q[0], q[1]),
            GateKind::RZ => rz(amps, q[0], theta),
            GateKind::RX => apply_1q(amps, q[0], &rotation_matrix(Pauli::X, theta)),
            GateKind::RY => ry(amps, q[0], theta),
            GateKind::CRX | GateKind::CRY | GateKind::CRZ => {
                let axis = gate.kind.axis().unwrap();
                apply_c1q(amps, q[0], q[1], &rotation_matrix(axis, theta));
            }
        }
    }

    #[inline]
    fn pairs(len: usize, q: usize, mut f: impl FnMut(usize, usize)) {
        let stride = 1 << q;
        let mut base = 0;
        while base < len {
            for i in base..base + stride {
                f(i, i + stride);
            }
            base += 2 * stride;
        }
    }

    pub(crate) fn apply_1q(amps: &mut [C64], q: usize, m: &Mat2) {
        pairs(amps.len(), q, |i0, i1| {
            let (a0, a1) = (amps[i0], amps[i1]);
            amps[i0] = m[0][0] * a0 + m[0][1] * a1;
            amps[i1] = m[1][0] * a0 + m[1][1] * a1;
        });
    }

    fn ry(amps: &mut [C64], q: usize, theta: f64) {
        let (s, c) = (theta / 2.0).sin_cos();
        pairs(amps.len(), q, |i0, i1| {
            let (a0, a1) = (amps[i0], amps[i1]);
            amps[i0] = a0 * c - a1 * s;
            amps[i1] = a0 * s + a1 * c;
        });
    }

    fn rz(amps: &mut [C64], q: usize, theta: f64) {
        let (s, c) = (theta / 2.0).sin_cos();
        let p0 = C64::new(c, -s);
        let p1 = C64::new(c, s);
        pairs(amps.len(), q, |i0, i1| {
            amps[i0] *= p0;
            amps[i1] *= p1;
        });
    }

    pub(crate) fn apply_c1q(amps: &mut [C64], c: usize, t: usize, m: &Mat2) {
        let cbit = 1 << c;
        pairs(amps.len(), t, |i0, i1| {
            if i0 & cbit != 0 {
                let (a0, a1) = (amps[i0], amps[i1]);
                amps[i0] = m[0][0] * a0 + m[0][1] * a1;
                amps[i1] = m[1][0] * a0 + m[1][1] * a1;
            }
        });
    }

    fn cnot(amps: &mut [C64], c: usize, t: usize) {
        let cbit = 1 << c;
        pairs(amps.len(), t, |i0, i1| {
            if i0 & cbit != 0 {
                amps.swap(i0, i1);
            }
        });
    }

    /// `⟨λ| M_q |ψ⟩`, restricted to control-set amplitudes when `control` is given.
    pub(crate) fn sandwich(
        lambda: &[C64],
        psi: &[C64],
        q: usize,
        control: Option<usize>,
        m: &Mat2,
    ) -> C64 {
        let mut acc = ZERO;
        let cmask = control.map_or(0, |c| 1 << c);
        pairs(psi.len(), q, |i0, i1| {
            if i0 & cmask == cmask {
                let (a0, a1) = (psi[i0], psi[i1]);
                acc += lambda[i0].conj() * (m[0][0] * a0 + m[0][1] * a1)
                    + lambda[i1].conj() * (m[1][0] * a0 + m[1][1] * a1);
            }
        });
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn zero_state_bounds() {
        assert_eq!(zero_state(1).unwrap().amplitudes(), &[c(1.0), c(0.0)]);
        assert_eq!(
            zero_state(2).unwrap().amplitudes(),
            &[c(1.0), c(0.0), c(0.0), c(0.0)]
        );
        assert!(matches!(zero_state(17), Err(Error::Config(_))));
        assert!(matches!(zero_state(0), Err(Error::Config(_))));
    }

    #[test]
    fn ry_pi_flips() {
        let mut s = zero_state(1).unwrap();
        apply_gate(&mut s, &Gate::ry(0, AngleSource::Constant(PI)), &[], &[]).unwrap();
        assert!((s.expectation_z(0) + 1.0).abs() < 1e-12);
        assert!((s.amplitudes()[1].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ry_zero_is_identity() {
        let mut s = zero_state(2).unwrap();
        apply_gate(&mut s, &Gate::h(0), &[], &[]).unwrap();
        apply_gate(&mut s, &Gate::rx(1, AngleSource::Constant(0.3)), &[], &[]).unwrap();
        let before = s.clone();
        apply_gate(&mut s, &Gate::ry(1, AngleSource::Constant(0.0)), &[], &[]).unwrap();
        assert_eq!(before, s);
    }

    #[test]
    fn cnot_truth_table() {
        // |10⟩ with qubit 0 set is index 1
        let mut amps = vec![c(0.0); 4];
        amps[1] = c(1.0);
        let mut s = StateVector::from_amplitudes(amps).unwrap();
        apply_gate(&mut s, &Gate::cnot(0, 1), &[], &[]).unwrap();
        assert_eq!(s.amplitudes()[3], c(1.0));
        assert_eq!(s.amplitudes()[1], c(0.0));
    }

    #[test]
    fn single_readouts() {
        let p = GateProgram::new(1, vec![Gate::ry(0, AngleSource::Trainable(0))], vec![0]).unwrap();
        let (_, e) = run_program(&p, &[PI / 2.0], &[]).unwrap();
        assert!(e[0].abs() < 1e-12);
        let p = GateProgram::new(1, vec![Gate::h(0)], vec![0]).unwrap();
        let (_, e) = run_program(&p, &[], &[]).unwrap();
        assert!(e[0].abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_rejected() {
        let p = GateProgram::new(1, vec![Gate::ry(0, AngleSource::Trainable(0))], vec![0]).unwrap();
        assert!(matches!(run_program(&p, &[], &[]), Err(Error::Config(_))));
        assert!(matches!(
            run_program(&p, &[0.1], &[0.2]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn program_validation() {
        assert!(GateProgram::new(2, vec![Gate::cnot(0, 2)], vec![0]).is_err());
        assert!(GateProgram::new(2, vec![Gate::cnot(1, 1)], vec![0]).is_err());
        assert!(GateProgram::new(2, vec![Gate::h(0)], vec![]).is_err());
        assert!(GateProgram::new(2, vec![Gate::h(0)], vec![1, 1]).is_err());
        // param 0 unused
        assert!(
            GateProgram::new(1, vec![Gate::rx(0, AngleSource::Trainable(1))], vec![0]).is_err()
        );
        assert!(GateProgram::new(1, vec![Gate::rx(0, AngleSource::input(1))], vec![0]).is_err());
        let ok = GateProgram::new(
            2,
            vec![
                Gate::rx(0, AngleSource::Trainable(0)),
                Gate::ry(1, AngleSource::Trainable(0)),
            ],
            vec![0],
        )
        .unwrap();
        assert_eq!(ok.n_trainable(), 1);
    }

    #[test]
    fn arccos_domain() {
        let g = Gate::ry(0, AngleSource::scaled_input(0, Scaler::Arccos, 1.0));
        let mut s = zero_state(1).unwrap();
        assert!(matches!(
            apply_gate(&mut s, &g, &[], &[1.5]),
            Err(Error::Domain(_))
        ));
        // x = 1 clamps to a tiny angle
        let p = GateProgram::new(1, vec![g], vec![0]).unwrap();
        let (_, e) = run_program(&p, &[], &[1.0]).unwrap();
        assert!((e[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lazy_register_matches_full() {
        // gates only on the high qubit: inactive low qubits must not matter
        let p = GateProgram::new(
            3,
            vec![
                Gate::h(2),
                Gate::cnot(2, 0),
                Gate::ry(1, AngleSource::Constant(0.7)),
            ],
            vec![0, 1, 2],
        )
        .unwrap();
        let (s, e) = run_program(&p, &[], &[]).unwrap();
        assert_eq!(s.amplitudes().len(), 8);
        assert!(e[0].abs() < 1e-12 && e[2].abs() < 1e-12);
        assert!((e[1] - 0.7f64.cos()).abs() < 1e-12);
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unmeasured_untouched_qubit_reads_plus_one() {
        let p = GateProgram::new(4, vec![Gate::h(0)], vec![3]).unwrap();
        assert_eq!(run_program(&p, &[], &[]).unwrap().1, vec![1.0]);
    }

    #[test]
    fn netlist_golden() {
        let p = GateProgram::new(
            2,
            vec![
                Gate::h(0),
                Gate::ry(1, AngleSource::scaled_input(0, Scaler::Arccos, 1.0)),
                Gate::cnot(0, 1),
                Gate::controlled_rotation(Pauli::Z, 1, 0, AngleSource::Trainable(0)),
                Gate::rx(0, AngleSource::Constant(0.5)),
            ],
            vec![0, 1],
        )
        .unwrap();
        let golden = "qubits 2 params 1 inputs 1 measure 0 1\n\
                      H 0\n\
                      RY 1 input(0,arccos,1)\n\
                      CNOT 0 1\n\
                      CRZ 1 0 param(0)\n\
                      RX 0 const(0.5)\n";
        assert_eq!(p.netlist(), golden);
    }

    #[test]
    fn reset_without_points_is_identity() {
        let p = GateProgram::new(2, vec![Gate::h(0), Gate::cnot(0, 1)], vec![1]).unwrap();
        assert_eq!(reset_qubits_fresh(&p, &[]).unwrap(), p);
    }

    #[test]
    fn reset_remaps_and_budget() {
        let p = GateProgram::new(
            2,
            vec![Gate::h(0), Gate::cnot(0, 1), Gate::h(0)],
            vec![0, 1],
        )
        .unwrap();
        let r = reset_qubits_fresh(&p, &[(2, vec![0])]).unwrap();
        assert_eq!(r.n_qubits(), 3);
        assert_eq!(r.gates()[2].qubits(), &[2]);
        assert_eq!(r.measured(), &[2, 1]);
        // after reset the fresh qubit sees only the final H
        let (_, e) = run_program(&r, &[], &[]).unwrap();
        assert!(e[0].abs() < 1e-12);
        assert!(e[1].abs() < 1e-12);
        let big = GateProgram::new(8, vec![Gate::h(0)], vec![0]).unwrap();
        let pts: Vec<_> = (0..9).map(|_| (1, vec![0])).collect();
        assert!(matches!(
            reset_qubits_fresh(&big, &pts),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn reset_before_any_gate_changes_nothing() {
        let p = GateProgram::new(
            2,
            vec![
                Gate::ry(0, AngleSource::Trainable(0)),
                Gate::cnot(0, 1),
                Gate::rx(1, AngleSource::Trainable(1)),
            ],
            vec![0, 1],
        )
        .unwrap();
        let r = reset_qubits_fresh(&p, &[(0, vec![0, 1])]).unwrap();
        let params = [0.4, 1.3];
        let a = run_program(&p, &params, &[]).unwrap().1;
        let b = run_program(&r, &params, &[]).unwrap().1;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
