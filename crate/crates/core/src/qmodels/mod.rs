//! Model descriptions and the five hybrid quantum forecasters.

pub mod ansatz;
pub mod dqnn;
pub mod qlstm;
pub mod qrnn;
pub mod ruqnn;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

pub use ansatz::{sample_ansatz, AnsatzBlock, AnsatzDescriptor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dqnn,
    Ruqnn,
    Qrnn,
    Qlstm,
    Leqlstm,
    Mlp,
    Rnn,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Dqnn,
        ModelKind::Ruqnn,
        ModelKind::Qrnn,
        ModelKind::Qlstm,
        ModelKind::Leqlstm,
        ModelKind::Mlp,
        ModelKind::Rnn,
        ModelKind::Lstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dqnn => "dqnn",
            ModelKind::Ruqnn => "ruqnn",
            ModelKind::Qrnn => "qrnn",
            ModelKind::Qlstm => "qlstm",
            ModelKind::Leqlstm => "leqlstm",
            ModelKind::Mlp => "mlp",
            ModelKind::Rnn => "rnn",
            ModelKind::Lstm => "lstm",
        }
    }

    pub fn is_quantum(self) -> bool {
        !matches!(self, ModelKind::Mlp | ModelKind::Rnn | ModelKind::Lstm)
    }

    /// The benchmark hyperparameter grid. The ru-QNN grid depends on sampled
    /// ansätze and is produced by the ansatz search instead, so it is empty here.
    pub fn grid(self) -> Vec<Hyperparams> {
        let sizes = [8, 16, 32];
        let depths = [1, 2, 3];
        let mut out = Vec::new();
        match self {
            ModelKind::Dqnn => {
                for n_qubits in [4, 6, 8] {
                    for layers in depths {
                        out.push(Hyperparams::Dqnn { n_qubits, layers });
                    }
                }
            }
            ModelKind::Ruqnn => {}
            ModelKind::Qrnn => {
                for data_qubits in [2, 3, 4] {
                    for hidden_qubits in [2, 3, 4] {
                        out.push(Hyperparams::Qrnn {
                            data_qubits,
                            hidden_qubits,
                            reset: false,
                        });
                    }
                }
            }
            ModelKind::Qlstm => {
                for n_qubits in [4, 6] {
                    for layers in depths {
                        out.push(Hyperparams::Qlstm { n_qubits, layers });
                    }
                }
            }
            ModelKind::Leqlstm => {
                for layers in depths {
                    for hidden in sizes {
                        out.push(Hyperparams::Leqlstm {
                            n_qubits: 6,
                            layers,
                            hidden,
                        });
                    }
                }
            }
            ModelKind::Mlp | ModelKind::Rnn | ModelKind::Lstm => {
                for layers in depths {
                    for hidden in sizes {
                        out.push(match self {
                            ModelKind::Mlp => Hyperparams::Mlp { layers, hidden },
                            ModelKind::Rnn => Hyperparams::Rnn { layers, hidden },
                            _ => Hyperparams::Lstm { layers, hidden },
                        });
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| config_err!("unknown model kind '{s}'"))
    }
}

/// Kind-specific hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyperparams {
    Dqnn {
        n_qubits: usize,
        layers: usize,
    },
    Ruqnn {
        n_qubits: usize,
        ansatz: AnsatzDescriptor,
    },
    Qrnn {
        data_qubits: usize,
        hidden_qubits: usize,
        reset: bool,
    },
    Qlstm {
        n_qubits: usize,
        layers: usize,
    },
    Leqlstm {
        n_qubits: usize,
        layers: usize,
        hidden: usize,
    },
    Mlp {
        layers: usize,
        hidden: usize,
    },
    Rnn {
        layers: usize,
        hidden: usize,
    },
    Lstm {
        layers: usize,
        hidden: usize,
    },
}

impl Hyperparams {
    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparams::Dqnn { .. } => ModelKind::Dqnn,
            Hyperparams::Ruqnn { .. } => ModelKind::Ruqnn,
            Hyperparams::Qrnn { .. } => ModelKind::Qrnn,
            Hyperparams::Qlstm { .. } => ModelKind::Qlstm,
            Hyperparams::Leqlstm { .. } => ModelKind::Leqlstm,
            Hyperparams::Mlp { .. } => ModelKind::Mlp,
            Hyperparams::Rnn { .. } => ModelKind::Rnn,
            Hyperparams::Lstm { .. } => ModelKind::Lstm,
        }
    }

    /// Named values in a fixed order; the ansatz (if any) is rendered in text form.
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        match self {
            Hyperparams::Dqnn { n_qubits, layers } | Hyperparams::Qlstm { n_qubits, layers } => {
                vec![
                    ("n_qubits", n_qubits.to_string()),
                    ("layers", layers.to_string()),
                ]
            }
            Hyperparams::Ruqnn { n_qubits, ansatz } => {
                vec![
                    ("n_qubits", n_qubits.to_string()),
                    ("ansatz", ansatz.to_string()),
                ]
            }
            Hyperparams::Qrnn {
                data_qubits,
                hidden_qubits,
                reset,
            } => vec![
                ("data_qubits", data_qubits.to_string()),
                ("hidden_qubits", hidden_qubits.to_string()),
                ("reset", reset.to_string()),
            ],
            Hyperparams::Leqlstm {
                n_qubits,
                layers,
                hidden,
            } => vec![
                ("n_qubits", n_qubits.to_string()),
                ("layers", layers.to_string()),
                ("hidden", hidden.to_string()),
            ],
            Hyperparams::Mlp { layers, hidden }
            | Hyperparams::Rnn { layers, hidden }
            | Hyperparams::Lstm { layers, hidden } => {
                vec![
                    ("layers", layers.to_string()),
                    ("hidden", hidden.to_string()),
                ]
            }
        }
    }

    /// Stable label such as `layers=1,hidden=8`.
    pub fn label(&self) -> String {
        self.fields()
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Key for the lexicographic tie-break: numeric fields compare as numbers.
    pub fn ordering_key(&self) -> Vec<(u64, String)> {
        self.fields()
            .into_iter()
            .map(|(_, v)| match v.parse::<u64>() {
                Ok(n) => (n, String::new()),
                Err(_) => (0, v),
            })
            .collect()
    }

    fn sizes(&self) -> Vec<usize> {
        match self {
            Hyperparams::Dqnn { n_qubits, layers } | Hyperparams::Qlstm { n_qubits, layers } => {
                vec![*n_qubits, *layers]
            }
            Hyperparams::Ruqnn { n_qubits, .. } => vec![*n_qubits],
            Hyperparams::Qrnn {
                data_qubits,
                hidden_qubits,
                ..
            } => vec![*data_qubits, *hidden_qubits],
            Hyperparams::Leqlstm {
                n_qubits,
                layers,
                hidden,
            } => vec![*n_qubits, *layers, *hidden],
            Hyperparams::Mlp { layers, hidden }
            | Hyperparams::Rnn { layers, hidden }
            | Hyperparams::Lstm { layers, hidden } => {
                vec![*layers, *hidden]
            }
        }
    }
}

impl fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind(), self.label())
    }
}

/// One model kind with its hyperparameters, bound to a task shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hyperparams: Hyperparams,
    pub seq_len: usize,
    pub data_dim: usize,
}

impl ModelSpec {
    pub fn new(hyperparams: Hyperparams, seq_len: usize, data_dim: usize) -> Self {
        ModelSpec {
            hyperparams,
            seq_len,
            data_dim,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.hyperparams.kind()
    }

    /// Library-mode checks: positive sizes and structural requirements.
    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.data_dim == 0 {
            return Err(config_err!(
                "sequence length and data dimension must be positive"
            ));
        }
        if self.hyperparams.sizes().contains(&0) {
            return Err(config_err!("{}: sizes must be positive", self.hyperparams));
        }
        match &self.hyperparams {
            Hyperparams::Qlstm { n_qubits, .. } if *n_qubits <= self.data_dim => Err(config_err!(
                "qlstm needs more qubits ({n_qubits}) than data dimensions ({})",
                self.data_dim
            )),
            Hyperparams::Ruqnn { ansatz, .. } => ansatz.validate(self.data_dim),
            Hyperparams::Qrnn {
                data_qubits,
                hidden_qubits,
                ..
            } if data_qubits + hidden_qubits > crate::qsim::MAX_QUBITS => Err(Error::Resource(
                format!("qrnn needs {} qubits", data_qubits + hidden_qubits),
            )),
            _ => Ok(()),
        }
    }

    /// Benchmark-mode checks: hyperparameters must lie on the benchmark grids.
    pub fn validate_benchmark(&self) -> Result<()> {
        self.validate()?;
        let on_grid = match &self.hyperparams {
            Hyperparams::Ruqnn { n_qubits, .. } => [4, 6, 8].contains(n_qubits),
            Hyperparams::Qrnn {
                data_qubits: 2,
                hidden_qubits: 2,
                reset: true,
            } => true,
            Hyperparams::Qrnn {
                data_qubits,
                hidden_qubits,
                reset: false,
            } => (2..=4).contains(data_qubits) && (2..=4).contains(hidden_qubits),
            Hyperparams::Qrnn { reset: true, .. } => false,
            other => self.kind().grid().contains(other),
        };
        if on_grid {
            Ok(())
        } else {
            Err(config_err!(
                "{} is off the benchmark grid",
                self.hyperparams
            ))
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} l={} d={}",
            self.hyperparams, self.seq_len, self.data_dim
        )
    }
}
