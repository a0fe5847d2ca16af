use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterMethod;
use crate::error::{Error, Result};
use crate::recurrent::CellKind;

/// Input layout of a recurrent method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureMode {
    /// CF only, recursive multi-step.
    Single,
    /// All features as one multivariate input, one net per horizon.
    Multi,
    /// One encoder per feature with attention, one net per horizon.
    Attention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Baseline {
    Naive,
    Ar,
    Gar,
    Var,
    Arma,
    Seir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Neural { cell: CellKind, mode: FeatureMode, pooling: ClusterMethod },
    Baseline(Baseline),
    Ensemble,
}

impl Method {
    pub fn is_neural(&self) -> bool {
        matches!(self, Method::Neural { .. })
    }

    pub fn pooling(&self) -> Option<ClusterMethod> {
        match self {
            Method::Neural { pooling, .. } => Some(*pooling),
            _ => None,
        }
    }

    /// Position in [`CANONICAL_METHODS`]; non-canonical names sort after.
    pub fn canonical_rank(&self) -> usize {
        let name = self.to_string();
        CANONICAL_METHODS.iter().position(|m| *m == name).unwrap_or(CANONICAL_METHODS.len())
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Neural { cell, mode, pooling } => {
                f.write_str(cell.name())?;
                match mode {
                    FeatureMode::Single => {}
                    FeatureMode::Multi => f.write_str("-m")?,
                    FeatureMode::Attention => f.write_str("-att")?,
                }
                if *pooling != ClusterMethod::Vanilla {
                    write!(f, "-{pooling}")?;
                }
                Ok(())
            }
            Method::Baseline(b) => f.write_str(match b {
                Baseline::Naive => "Naive",
                Baseline::Ar => "AR",
                Baseline::Gar => "GAR",
                Baseline::Var => "VAR",
                Baseline::Arma => "ARMA",
                Baseline::Seir => "SEIR",
            }),
            Method::Ensemble => f.write_str("ENS"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// `<RNN|GRU|LSTM>[-m|-att][-<geo|kmeans|tskmeans|kshape>]`, a baseline
    /// name, or `ENS`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let baseline = match s.to_ascii_uppercase().as_str() {
            "NAIVE" => Some(Baseline::Naive),
            "AR" => Some(Baseline::Ar),
            "GAR" => Some(Baseline::Gar),
            "VAR" => Some(Baseline::Var),
            "ARMA" => Some(Baseline::Arma),
            "SEIR" => Some(Baseline::Seir),
            "ENS" => return Ok(Method::Ensemble),
            _ => None,
        };
        if let Some(b) = baseline {
            return Ok(Method::Baseline(b));
        }
        let unknown = || Error::InvalidArgument(format!("unknown method `{s}`"));
        let mut parts = s.split('-');
        let cell = match parts.next().map(str::to_ascii_uppercase).as_deref() {
            Some("RNN") => CellKind::Rnn,
            Some("GRU") => CellKind::Gru,
            Some("LSTM") => CellKind::Lstm,
            _ => return Err(unknown()),
        };
        let mut mode = FeatureMode::Single;
        let mut pooling = ClusterMethod::Vanilla;
        let rest: Vec<&str> = parts.collect();
        let mut i = 0;
        if let Some(p) = rest.first() {
            match p.to_ascii_lowercase().as_str() {
                "m" => {
                    mode = FeatureMode::Multi;
                    i = 1;
                }
                "att" => {
                    mode = FeatureMode::Attention;
                    i = 1;
                }
                _ => {}
            }
        }
        match &rest[i..] {
            [] => {}
            [c] => {
                pooling = c.parse().map_err(|_| unknown())?;
                if pooling == ClusterMethod::Vanilla {
                    return Err(unknown());
                }
            }
            _ => return Err(unknown()),
        }
        Ok(Method::Neural { cell, mode, pooling })
    }
}

impl Serialize for MethodName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for MethodName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map(MethodName).map_err(serde::de::Error::custom)
    }
}

/// A method serialized by its display name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MethodName(pub Method);

pub const CANONICAL_METHODS: [&str; 20] = [
    "RNN", "GRU", "LSTM", "RNN-m", "GRU-m", "LSTM-m", "RNN-att", "GRU-att", "LSTM-att", "RNN-geo", "RNN-kmeans",
    "RNN-tskmeans", "RNN-kshape", "Naive", "AR", "GAR", "VAR", "ARMA", "SEIR", "ENS",
];

pub fn canonical_methods() -> Vec<Method> {
    CANONICAL_METHODS.iter().map(|m| m.parse().expect("canonical names parse")).collect()
}

/// Category → member method names, in reporting order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMap(pub Vec<(String, Vec<String>)>);

impl Default for CategoryMap {
    fn default() -> Self {
        let c = |name: &str, members: &[&str]| (name.to_string(), members.iter().map(|m| m.to_string()).collect());
        CategoryMap(vec![
            c("RNNs", &["RNN", "RNN-geo", "RNN-m", "RNN-att", "RNN-kmeans", "RNN-tskmeans", "RNN-kshape"]),
            c("GRUs", &["GRU", "GRU-m", "GRU-att"]),
            c("LSTMs", &["LSTM", "LSTM-m", "LSTM-att"]),
            c("ARs", &["AR", "ARMA", "VAR", "GAR"]),
            c("Vanillas", &["RNN"]),
            c("Clusters", &["RNN-geo", "RNN-kmeans", "RNN-tskmeans", "RNN-kshape"]),
            c("SglFtrs", &["RNN", "GRU", "LSTM"]),
            c("MulFtrs", &["RNN-m", "GRU-m", "LSTM-m", "RNN-att", "GRU-att", "LSTM-att"]),
            c("SEIRs", &["SEIR"]),
            c("Naive", &["Naive"]),
            c("ENS", &["ENS"]),
        ])
    }
}

impl CategoryMap {
    pub fn categories_of(&self, method: &str) -> Vec<&str> {
        self.0.iter().filter(|(_, m)| m.iter().any(|x| x == method)).map(|(c, _)| c.as_str()).collect()
    }

    pub fn as_map(&self) -> BTreeMap<&str, &[String]> {
        self.0.iter().map(|(c, m)| (c.as_str(), m.as_slice())).collect()
    }
}
