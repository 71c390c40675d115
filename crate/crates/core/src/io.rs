//! JSON network files.
//!
//! ```json
//! {
//!   "nodes": ["s", "d"],
//!   "arcs": [{"id": "a1", "tail": "s", "head": "d", "model": "mm1", "capacity": 2.0, "lambda0": 1.0}],
//!   "sources": [{"id": "k", "origin": "s", "destination": "d", "rate": "vegas", "alpha": 1.0, "D": 1.0}],
//!   "choice": "logit",
//!   "beta": 1.0
//! }
//! ```
//!
//! Ids may be strings or integers. Unknown fields are rejected. Besides `mm1`, arcs accept
//! `"model": "affine"` with an extra `slope`; sources accept `"rate": "power"` with
//! `scale` and `exponent`, an optional fixed `demand` and an optional `route` (arc ids).

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::choice::ChoiceModel;
use crate::error::{Error, Result};
use crate::network::{Arc, LatencyModel, Network, RateModel, Source};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Id {
    Int(i64),
    Str(String),
}

impl fmt::Display for Id {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Id::Int(i) => write!(f, "{i}"),
            Id::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcEntry {
    pub id: Id,
    pub tail: Id,
    pub head: Id,
    pub model: String,
    pub capacity: f64,
    pub lambda0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEntry {
    pub id: Id,
    pub origin: Id,
    pub destination: Id,
    pub rate: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<Vec<Id>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub nodes: Vec<Id>,
    pub arcs: Vec<ArcEntry>,
    #[serde(default)]
    pub sources: Vec<SourceEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

fn required(value: Option<f64>, field: &str, owner: &str) -> Result<f64> {
    value.ok_or_else(|| Error::InvalidInput(format!("{owner}: missing field `{field}`")))
}

impl NetworkFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Builds and validates the network. Returns the choice model if the file names one.
    pub fn to_network(&self) -> Result<(Network, Option<ChoiceModel>)> {
        let node_ids: Vec<String> = self.nodes.iter().map(Id::to_string).collect();
        let node = |id: &Id, owner: &str| {
            let key = id.to_string();
            node_ids
                .iter()
                .position(|n| *n == key)
                .ok_or_else(|| Error::Structural(format!("{owner}: undeclared node `{key}`")))
        };
        let mut arcs = Vec::with_capacity(self.arcs.len());
        for entry in &self.arcs {
            let owner = format!("arc `{}`", entry.id);
            let latency = match entry.model.as_str() {
                "mm1" => {
                    if entry.slope.is_some() {
                        return Err(Error::InvalidInput(format!(
                            "{owner}: `slope` is not an mm1 field"
                        )));
                    }
                    LatencyModel::mm1(entry.capacity, entry.lambda0)
                }
                "affine" => LatencyModel::affine_capped(
                    entry.lambda0,
                    required(entry.slope, "slope", &owner)?,
                    entry.capacity,
                ),
                other => {
                    return Err(Error::InvalidInput(format!(
                        "{owner}: unknown model `{other}`"
                    )))
                }
            };
            arcs.push(Arc {
                id: entry.id.to_string(),
                tail: node(&entry.tail, &owner)?,
                head: node(&entry.head, &owner)?,
                latency,
            });
        }
        let mut sources = Vec::with_capacity(self.sources.len());
        for entry in &self.sources {
            let owner = format!("source `{}`", entry.id);
            let rate = match entry.rate.as_str() {
                "vegas" => RateModel::Vegas {
                    alpha: required(entry.alpha, "alpha", &owner)?,
                    d: required(entry.d, "D", &owner)?,
                },
                "power" => RateModel::PowerLaw {
                    scale: required(entry.scale, "scale", &owner)?,
                    exponent: required(entry.exponent, "exponent", &owner)?,
                },
                other => {
                    return Err(Error::InvalidInput(format!(
                        "{owner}: unknown rate `{other}`"
                    )))
                }
            };
            let route = entry
                .route
                .as_ref()
                .map(|ids| {
                    ids.iter()
                        .map(|id| {
                            let key = id.to_string();
                            arcs.iter().position(|a| a.id == key).ok_or_else(|| {
                                Error::Structural(format!(
                                    "{owner}: route uses unknown arc `{key}`"
                                ))
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .transpose()?;
            sources.push(Source {
                id: entry.id.to_string(),
                origin: node(&entry.origin, &owner)?,
                destination: node(&entry.destination, &owner)?,
                rate,
                demand: entry.demand,
                route,
            });
        }
        let net = Network::new(node_ids, arcs, sources)?;
        let choice = match (self.choice.as_deref(), self.beta) {
            (None, None) => None,
            (None, Some(beta)) | (Some("logit"), Some(beta)) => Some(ChoiceModel::logit(beta)?),
            (Some("logit"), None) => {
                return Err(Error::InvalidInput("logit choice requires `beta`".into()))
            }
            (Some("min"), _) => Some(ChoiceModel::DeterministicMin),
            (Some(other), _) => {
                return Err(Error::InvalidInput(format!(
                    "unknown choice model `{other}`"
                )))
            }
        };
        Ok((net, choice))
    }

    pub fn from_network(net: &Network, choice: Option<&ChoiceModel>) -> Self {
        let nodes = net.node_ids().iter().cloned().map(Id::Str).collect();
        let node = |i: usize| Id::Str(net.node_ids()[i].clone());
        let arcs = net
            .arcs()
            .iter()
            .map(|a| {
                let (model, slope) = match a.latency {
                    LatencyModel::Mm1 { .. } => ("mm1", None),
                    LatencyModel::AffineCapped { slope, .. } => ("affine", Some(slope)),
                };
                ArcEntry {
                    id: Id::Str(a.id.clone()),
                    tail: node(a.tail),
                    head: node(a.head),
                    model: model.into(),
                    capacity: a.latency.capacity(),
                    lambda0: a.latency.free_flow(),
                    slope,
                }
            })
            .collect();
        let sources = net
            .sources()
            .iter()
            .map(|s| {
                let mut entry = SourceEntry {
                    id: Id::Str(s.id.clone()),
                    origin: node(s.origin),
                    destination: node(s.destination),
                    rate: String::new(),
                    alpha: None,
                    d: None,
                    scale: None,
                    exponent: None,
                    demand: s.demand,
                    route: s
                        .route
                        .as_ref()
                        .map(|r| r.iter().map(|&a| Id::Str(net.arc(a).id.clone())).collect()),
                };
                match s.rate {
                    RateModel::Vegas { alpha, d } => {
                        entry.rate = "vegas".into();
                        entry.alpha = Some(alpha);
                        entry.d = Some(d);
                    }
                    RateModel::PowerLaw { scale, exponent } => {
                        entry.rate = "power".into();
                        entry.scale = Some(scale);
                        entry.exponent = Some(exponent);
                    }
                }
                entry
            })
            .collect();
        let (choice, beta) = match choice {
            Some(ChoiceModel::Logit { beta }) => (Some("logit".to_string()), Some(*beta)),
            Some(ChoiceModel::DeterministicMin) => (Some("min".to_string()), None),
            None => (None, None),
        };
        NetworkFile {
            nodes,
            arcs,
            sources,
            choice,
            beta,
        }
    }
}

pub fn parse_network(text: &str) -> Result<(Network, Option<ChoiceModel>)> {
    NetworkFile::parse(text)?.to_network()
}

pub fn load_network(path: impl AsRef<Path>) -> Result<(Network, Option<ChoiceModel>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    parse_network(&text)
}
