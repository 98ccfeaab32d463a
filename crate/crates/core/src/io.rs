//! JSON schemas for graphs, marginal tables, message sets and model specs.
//!
//! Numbers are written through serde_json's shortest-roundtrip float
//! formatting, so save/load round-trips are lossless at full double
//! precision.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bp::MessageSet;
use crate::error::{Error, Result};
use crate::exact::MarginalTable;
use crate::graph::{Constraint, FactorGraph, SpinAlphabet, VarId, WeightFunction};
use crate::models::ModelSpec;

#[derive(Debug, Serialize, Deserialize)]
struct WeightSchema {
    arity: usize,
    table: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConstraintSchema {
    neighbors: Vec<usize>,
    weight: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphSchema {
    n: usize,
    spins: Vec<String>,
    weights: Vec<WeightSchema>,
    constraints: Vec<ConstraintSchema>,
}

pub fn graph_to_json(g: &FactorGraph<f64>) -> String {
    let schema = GraphSchema {
        n: g.num_vars(),
        spins: g.spins().labels().to_vec(),
        weights: g
            .weight_pool()
            .iter()
            .map(|w| WeightSchema {
                arity: w.arity(),
                table: w.table().to_vec(),
            })
            .collect(),
        constraints: g
            .constraints()
            .iter()
            .map(|c| ConstraintSchema {
                neighbors: c.neighbors.iter().map(|v| v.0).collect(),
                weight: c.weight,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&schema).expect("graph schema serializes")
}

pub fn graph_from_json(text: &str) -> Result<FactorGraph<f64>> {
    let schema: GraphSchema = serde_json::from_str(text)?;
    let spins = SpinAlphabet::new(schema.spins)?;
    let weights = schema
        .weights
        .into_iter()
        .map(|w| WeightFunction::new(w.arity, w.table))
        .collect::<Result<Vec<_>>>()?;
    let constraints = schema
        .constraints
        .into_iter()
        .map(|c| Constraint::new(c.neighbors.into_iter().map(VarId).collect(), c.weight))
        .collect();
    FactorGraph::new(schema.n, spins, weights, constraints)
}

pub fn save_graph(g: &FactorGraph<f64>, path: &Path) -> Result<()> {
    std::fs::write(path, graph_to_json(g))?;
    Ok(())
}

pub fn load_graph(path: &Path) -> Result<FactorGraph<f64>> {
    graph_from_json(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct MarginalSchema {
    vars: Vec<usize>,
    probs: Vec<f64>,
}

pub fn marginal_to_json(t: &MarginalTable<f64>) -> String {
    let schema = MarginalSchema {
        vars: t.vars().iter().map(|v| v.0).collect(),
        probs: t.probs().to_vec(),
    };
    serde_json::to_string(&schema).expect("marginal schema serializes")
}

pub fn marginal_from_json(text: &str) -> Result<MarginalTable<f64>> {
    let schema: MarginalSchema = serde_json::from_str(text)?;
    let l = schema.vars.len();
    if l == 0 {
        return Err(Error::EmptyVariableSet);
    }
    // recover q from |probs| = q^l
    let mut q = 1usize;
    loop {
        q += 1;
        let size = q.checked_pow(l as u32).unwrap_or(usize::MAX);
        if size >= schema.probs.len() {
            if size != schema.probs.len() {
                return Err(Error::LengthMismatch {
                    left: schema.probs.len(),
                    right: size,
                });
            }
            break;
        }
    }
    MarginalTable::new(
        schema.vars.into_iter().map(VarId).collect(),
        q,
        schema.probs,
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct MessagePairSchema {
    var_to_con: Vec<f64>,
    con_to_var: Vec<f64>,
}

/// Messages keyed `"x:a"` by variable and constraint id.
pub fn messages_to_json(g: &FactorGraph<f64>, m: &MessageSet<f64>) -> String {
    let mut map = BTreeMap::new();
    for (inc_id, inc) in g.incidences().iter().enumerate() {
        map.insert(
            format!("{}:{}", inc.var.0, inc.con.0),
            MessagePairSchema {
                var_to_con: m.var_to_con(inc_id).to_vec(),
                con_to_var: m.con_to_var(inc_id).to_vec(),
            },
        );
    }
    serde_json::to_string_pretty(&map).expect("message schema serializes")
}

pub fn messages_from_json(g: &FactorGraph<f64>, text: &str) -> Result<MessageSet<f64>> {
    let map: BTreeMap<String, MessagePairSchema> = serde_json::from_str(text)?;
    let mut m = MessageSet::uniform(g);
    if map.len() != g.incidences().len() {
        return Err(Error::LengthMismatch {
            left: map.len(),
            right: g.incidences().len(),
        });
    }
    for (inc_id, inc) in g.incidences().iter().enumerate() {
        let key = format!("{}:{}", inc.var.0, inc.con.0);
        let pair = map
            .get(&key)
            .ok_or_else(|| Error::InvalidParameter(format!("missing message key {key}")))?;
        m.set_var_to_con(inc_id, pair.var_to_con.clone());
        m.set_con_to_var(inc_id, pair.con_to_var.clone());
    }
    m.validate(g)?;
    Ok(m)
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelSchema {
    spins: Vec<String>,
    k: usize,
    family: Vec<WeightSchema>,
    rho: Vec<f64>,
}

/// Preset form of a model: `{"preset": "ksat"|"potts"|"ising", ...}` with
/// `k`/`q`/`beta` parameters as applicable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelPreset {
    pub preset: String,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub q: Option<usize>,
    #[serde(default)]
    pub beta: Option<f64>,
}

impl ModelPreset {
    pub fn build(&self) -> Result<ModelSpec<f64>> {
        let beta = self.beta.unwrap_or(1.0);
        match self.preset.as_str() {
            "ksat" => ModelSpec::ksat(self.k.unwrap_or(3), beta),
            "potts" => ModelSpec::potts(self.q.unwrap_or(2), beta),
            "ising" => ModelSpec::ising(beta),
            other => Err(Error::InvalidParameter(format!(
                "unknown model preset {other:?} (expected ksat, potts or ising)"
            ))),
        }
    }
}

/// Accepts either the preset form or the explicit
/// `{"spins", "k", "family", "rho"}` form.
pub fn model_spec_from_json(text: &str) -> Result<ModelSpec<f64>> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    model_spec_from_value(&value)
}

pub fn model_spec_from_value(value: &serde_json::Value) -> Result<ModelSpec<f64>> {
    if value.get("preset").is_some() {
        let preset: ModelPreset = serde_json::from_value(value.clone())?;
        return preset.build();
    }
    let schema: ModelSchema = serde_json::from_value(value.clone())?;
    let spins = SpinAlphabet::new(schema.spins)?;
    let family = schema
        .family
        .into_iter()
        .map(|w| WeightFunction::new(w.arity, w.table))
        .collect::<Result<Vec<_>>>()?;
    ModelSpec::new(spins, schema.k, family, schema.rho)
}

pub fn model_spec_to_json(spec: &ModelSpec<f64>) -> String {
    let schema = ModelSchema {
        spins: spec.spins.labels().to_vec(),
        k: spec.k,
        family: spec
            .weight_family
            .iter()
            .map(|w| WeightSchema {
                arity: w.arity(),
                table: w.table().to_vec(),
            })
            .collect(),
        rho: spec.rho.clone(),
    };
    serde_json::to_string_pretty(&schema).expect("model schema serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{exact_messages, EnumBudget};
    use crate::graph::ConId;

    fn sample_graph() -> FactorGraph<f64> {
        // deliberately awkward doubles to exercise lossless round-trips
        let w = WeightFunction::new(2, vec![0.1, 1.0 / 3.0, 2.0_f64.sqrt(), 1.0]).unwrap();
        FactorGraph::new(
            3,
            SpinAlphabet::numeric(2),
            vec![w],
            vec![
                Constraint::new(vec![VarId(0), VarId(1)], 0),
                Constraint::new(vec![VarId(1), VarId(2)], 0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn graph_round_trip_is_lossless() {
        let g = sample_graph();
        let text = graph_to_json(&g);
        let g2 = graph_from_json(&text).unwrap();
        assert_eq!(g.num_vars(), g2.num_vars());
        assert_eq!(g.constraints(), g2.constraints());
        for (a, b) in g.weight_pool().iter().zip(g2.weight_pool()) {
            assert_eq!(a.table(), b.table(), "tables must round-trip bit-exactly");
        }
        // and the re-serialization is byte-identical
        assert_eq!(text, graph_to_json(&g2));
    }

    #[test]
    fn marginal_round_trip() {
        let g = sample_graph();
        let t =
            crate::exact::joint_marginal(&g, &[VarId(0), VarId(2)], EnumBudget::default()).unwrap();
        let text = marginal_to_json(&t);
        let t2 = marginal_from_json(&text).unwrap();
        assert_eq!(t.vars(), t2.vars());
        assert_eq!(t.probs(), t2.probs());
        assert_eq!(t2.q(), 2);
    }

    #[test]
    fn message_round_trip() {
        let g = sample_graph();
        let m = exact_messages(&g, EnumBudget::default()).unwrap();
        let text = messages_to_json(&g, &m);
        let m2 = messages_from_json(&g, &text).unwrap();
        for i in 0..m.len() {
            assert_eq!(m.var_to_con(i), m2.var_to_con(i));
            assert_eq!(m.con_to_var(i), m2.con_to_var(i));
        }
        // keys follow the "x:a" convention
        assert!(text.contains("\"1:0\""));
        let _ = g.constraint(ConId(0));
    }

    #[test]
    fn model_presets_expand() {
        let spec = model_spec_from_json(r#"{"preset":"ksat","k":3,"beta":0.5}"#).unwrap();
        assert_eq!(spec.k, 3);
        assert_eq!(spec.weight_family.len(), 8);

        let potts = model_spec_from_json(r#"{"preset":"potts","q":3,"beta":1.0}"#).unwrap();
        assert_eq!(potts.q(), 3);

        let ising = model_spec_from_json(r#"{"preset":"ising","beta":0.3}"#).unwrap();
        assert_eq!(ising.q(), 2);

        assert!(model_spec_from_json(r#"{"preset":"sherrington"}"#).is_err());
    }

    #[test]
    fn explicit_model_round_trip() {
        let spec: ModelSpec<f64> = ModelSpec::potts(3, 0.7).unwrap();
        let text = model_spec_to_json(&spec);
        let spec2 = model_spec_from_json(&text).unwrap();
        assert_eq!(spec.k, spec2.k);
        assert_eq!(spec.rho, spec2.rho);
        for (a, b) in spec.weight_family.iter().zip(&spec2.weight_family) {
            assert_eq!(a.table(), b.table());
        }
    }
}
