//! Block-structured circuit ansätze for the data re-uploading model.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::qsim::Pauli;

/// Shuffles tried per drawn block set before falling back to a full search.
pub const SHUFFLE_ATTEMPTS: usize = 50;
/// Node budget for the fallback ordering search.
const SEARCH_BUDGET: usize = 200_000;

pub const MAX_ENC_PER_DIM: usize = 3;
pub const MAX_VARIATIONAL: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnsatzBlock {
    /// Encode data dimension `dim` with rotations about `axis` on every qubit.
    Enc { axis: Pauli, dim: usize },
    /// One trainable rotation about `axis` per qubit.
    VarSingle(Pauli),
    /// Open chain of trainable controlled rotations, qubit `i` controlling `i + 1`.
    VarEnt(Pauli),
}

impl AnsatzBlock {
    pub fn axis(self) -> Pauli {
        match self {
            AnsatzBlock::Enc { axis, .. }
            | AnsatzBlock::VarSingle(axis)
            | AnsatzBlock::VarEnt(axis) => axis,
        }
    }

    pub fn is_variational(self) -> bool {
        !matches!(self, AnsatzBlock::Enc { .. })
    }
}

impl fmt::Display for AnsatzBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnsatzBlock::Enc { axis, dim } => write!(f, "E:{}:{dim}", axis.symbol()),
            AnsatzBlock::VarSingle(a) => write!(f, "VS:{}", a.symbol()),
            AnsatzBlock::VarEnt(a) => write!(f, "VE:{}", a.symbol()),
        }
    }
}

impl FromStr for AnsatzBlock {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let axis = |p: &str| {
            let mut chars = p.chars();
            match (chars.next().and_then(Pauli::from_symbol), chars.next()) {
                (Some(a), None) => Ok(a),
                _ => Err(config_err!("bad Pauli axis '{p}' in block '{s}'")),
            }
        };
        match parts.as_slice() {
            ["E", a, d] => Ok(AnsatzBlock::Enc {
                axis: axis(a)?,
                dim: d
                    .parse()
                    .map_err(|_| config_err!("bad dimension in block '{s}'"))?,
            }),
            ["VS", a] => Ok(AnsatzBlock::VarSingle(axis(a)?)),
            ["VE", a] => Ok(AnsatzBlock::VarEnt(axis(a)?)),
            _ => Err(config_err!("unrecognized ansatz block '{s}'")),
        }
    }
}

/// Ordered block list, serialized as e.g. `E:Y:0 | VS:X | VE:Z`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AnsatzDescriptor {
    pub blocks: Vec<AnsatzBlock>,
}

impl AnsatzDescriptor {
    pub fn new(blocks: Vec<AnsatzBlock>) -> Self {
        AnsatzDescriptor { blocks }
    }

    /// Checks the structural rules for a model over `data_dim` dimensions.
    pub fn validate(&self, data_dim: usize) -> Result<()> {
        let b = &self.blocks;
        let Some(first) = b.first() else {
            return Err(config_err!("empty ansatz"));
        };
        if matches!(first, AnsatzBlock::VarEnt(_)) {
            return Err(config_err!(
                "ansatz '{self}' starts with an entangling block"
            ));
        }
        if b[b.len() - 1].axis() == Pauli::Z {
            return Err(config_err!("ansatz '{self}' ends with a Pauli-Z block"));
        }
        for i in 0..b.len() {
            let next = b[(i + 1) % b.len()];
            if b.len() > 1 && b[i].axis() == next.axis() {
                return Err(config_err!(
                    "ansatz '{self}': blocks {i} and {} share axis",
                    (i + 1) % b.len()
                ));
            }
        }
        for dim in 0..data_dim {
            let n = b
                .iter()
                .filter(|x| matches!(x, AnsatzBlock::Enc { dim: d, .. } if *d == dim))
                .count();
            if !(1..=MAX_ENC_PER_DIM).contains(&n) {
                return Err(config_err!(
                    "ansatz '{self}' has {n} encoding blocks for dimension {dim}"
                ));
            }
        }
        if let Some(AnsatzBlock::Enc { dim, .. }) = b
            .iter()
            .find(|x| matches!(x, AnsatzBlock::Enc { dim, .. } if *dim >= data_dim))
        {
            return Err(config_err!(
                "ansatz '{self}' encodes dimension {dim} of {data_dim}"
            ));
        }
        let n_var = b.iter().filter(|x| x.is_variational()).count();
        if !(1..=MAX_VARIATIONAL).contains(&n_var) {
            return Err(config_err!(
                "ansatz '{self}' has {n_var} variational blocks"
            ));
        }
        Ok(())
    }
}

impl fmt::Display for AnsatzDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.blocks.iter().map(|b| b.to_string()).collect();
        f.write_str(&parts.join(" | "))
    }
}

impl FromStr for AnsatzDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let blocks = s.split('|').map(str::parse).collect::<Result<Vec<_>>>()?;
        Ok(AnsatzDescriptor { blocks })
    }
}

impl TryFrom<String> for AnsatzDescriptor {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AnsatzDescriptor> for String {
    fn from(a: AnsatzDescriptor) -> String {
        a.to_string()
    }
}

/// Draws a random valid ansatz for `data_dim`-dimensional data.
///
/// Each attempt draws 1-3 encoding blocks per dimension and 1-12 variational
/// blocks with uniform axes, then tries [`SHUFFLE_ATTEMPTS`] random orderings.
/// If none is valid, a randomized exhaustive search decides whether any valid
/// ordering exists; sets without one are discarded and redrawn.
pub fn sample_ansatz<R: Rng + ?Sized>(data_dim: usize, rng: &mut R) -> AnsatzDescriptor {
    assert!(data_dim >= 1, "data_dim must be positive");
    loop {
        let mut blocks = Vec::new();
        for dim in 0..data_dim {
            for _ in 0..rng.gen_range(1..=MAX_ENC_PER_DIM) {
                blocks.push(AnsatzBlock::Enc {
                    axis: random_axis(rng),
                    dim,
                });
            }
        }
        for _ in 0..rng.gen_range(1..=MAX_VARIATIONAL) {
            let axis = random_axis(rng);
            blocks.push(if rng.gen_bool(0.5) {
                AnsatzBlock::VarSingle(axis)
            } else {
                AnsatzBlock::VarEnt(axis)
            });
        }
        for _ in 0..SHUFFLE_ATTEMPTS {
            blocks.shuffle(rng);
            let candidate = AnsatzDescriptor::new(blocks.clone());
            if candidate.validate(data_dim).is_ok() {
                return candidate;
            }
        }
        if let Some(order) = search_ordering(&blocks, rng) {
            let candidate = AnsatzDescriptor::new(order);
            debug_assert!(candidate.validate(data_dim).is_ok());
            return candidate;
        }
    }
}

fn random_axis<R: Rng + ?Sized>(rng: &mut R) -> Pauli {
    Pauli::ALL[rng.gen_range(0..3)]
}

/// Depth-first search for a valid cyclic ordering, visiting candidates in a
/// random order.
fn search_ordering<R: Rng + ?Sized>(
    blocks: &[AnsatzBlock],
    rng: &mut R,
) -> Option<Vec<AnsatzBlock>> {
    let mut pool = blocks.to_vec();
    pool.shuffle(rng);
    let mut used = vec![false; pool.len()];
    let mut order = Vec::with_capacity(pool.len());
    let mut budget = SEARCH_BUDGET;
    if extend(&pool, &mut used, &mut order, &mut budget) {
        Some(order)
    } else {
        None
    }
}

fn extend(
    pool: &[AnsatzBlock],
    used: &mut [bool],
    order: &mut Vec<AnsatzBlock>,
    budget: &mut usize,
) -> bool {
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    let n = pool.len();
    if order.len() == n {
        let last = order[n - 1];
        return last.axis() != Pauli::Z && (n == 1 || last.axis() != order[0].axis());
    }
    // an axis can fill at most every other remaining slot
    let remaining = n - order.len();
    for axis in Pauli::ALL {
        let c = (0..n)
            .filter(|&i| !used[i] && pool[i].axis() == axis)
            .count();
        if c > remaining.div_ceil(2) {
            return false;
        }
    }
    let mut tried: Vec<AnsatzBlock> = Vec::new();
    for i in 0..n {
        let b = pool[i];
        if used[i] || tried.contains(&b) {
            continue;
        }
        tried.push(b);
        if order.is_empty() && matches!(b, AnsatzBlock::VarEnt(_)) {
            continue;
        }
        if order.last().is_some_and(|p| p.axis() == b.axis()) {
            continue;
        }
        used[i] = true;
        order.push(b);
        if extend(pool, used, order, budget) {
            return true;
        }
        order.pop();
        used[i] = false;
    }
    false
}
