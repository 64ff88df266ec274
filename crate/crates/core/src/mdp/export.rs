use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, Mdp, MdpError, State, StateKind};

/// On-disk JSON form of an [`Mdp`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpFile {
    pub gamma: f64,
    pub alphabet_hash: String,
    pub kmeans_ref: String,
    pub agent_actions: BTreeSet<String>,
    pub states: Vec<State>,
    pub edges: Vec<Edge>,
    /// Number of training traces ending in each state.
    pub terminations: BTreeMap<State, u64>,
}

impl From<&Mdp> for MdpFile {
    fn from(m: &Mdp) -> Self {
        MdpFile {
            gamma: m.gamma,
            alphabet_hash: m.alphabet_hash.clone(),
            kmeans_ref: m.kmeans_ref.clone(),
            agent_actions: m.agent_actions.clone(),
            states: m.states.clone(),
            edges: m.edges.clone(),
            terminations: m.terminations.clone(),
        }
    }
}

impl TryFrom<MdpFile> for Mdp {
    type Error = MdpError;

    fn try_from(f: MdpFile) -> Result<Self, MdpError> {
        if !f.states.windows(2).all(|w| w[0] < w[1]) {
            return Err(MdpError::Format("states must be sorted and unique".into()));
        }
        let sorted = f
            .edges
            .windows(2)
            .all(|w| (&w[0].source, &w[0].action, &w[0].target) < (&w[1].source, &w[1].action, &w[1].target));
        if !sorted {
            return Err(MdpError::Format(
                "edges must be sorted by (source, action, target)".into(),
            ));
        }
        for e in &f.edges {
            for s in [&e.source, &e.target] {
                if f.states.binary_search(s).is_err() {
                    return Err(MdpError::Format(format!("edge refers to unknown state {s}")));
                }
            }
        }
        Ok(Mdp::assemble(
            f.states,
            f.edges,
            f.terminations,
            f.agent_actions,
            f.gamma,
            f.alphabet_hash,
            f.kmeans_ref,
        ))
    }
}

pub fn write_json(mdp: &Mdp, path: &Path) -> Result<(), MdpError> {
    let text = serde_json::to_string_pretty(&MdpFile::from(mdp)).map_err(|e| MdpError::Format(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json(path: &Path) -> Result<Mdp, MdpError> {
    let text = std::fs::read_to_string(path)?;
    let file: MdpFile = serde_json::from_str(&text).map_err(|e| MdpError::Format(e.to_string()))?;
    Mdp::try_from(file)
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz rendering: decision states are boxes, chance states ellipses,
/// terminals double circles; agent edges are solid, environment edges dashed.
pub fn to_dot(mdp: &Mdp) -> String {
    let mut out = String::from("digraph mdp {\n  rankdir=LR;\n");
    for s in mdp.states() {
        let shape = match mdp.kind(s) {
            StateKind::Decision => "box",
            StateKind::Mixed => "octagon",
            StateKind::Chance => "ellipse",
            StateKind::Terminal => "doublecircle",
        };
        let ends = mdp.termination_count(s);
        let label = if ends > 0 { format!("{s}\\nend {ends}") } else { s.key() };
        let _ = writeln!(out, "  {} [shape={shape}, label={}];", quote(&s.key()), quote(&label));
    }
    for e in mdp.edges() {
        let style = if mdp.is_agent(&e.action) { "solid" } else { "dashed" };
        let label = format!("{} n={} p={:.3} r={:.2}", e.action, e.count, e.probability, e.reward);
        let _ = writeln!(
            out,
            "  {} -> {} [style={style}, label={}];",
            quote(&e.source.key()),
            quote(&e.target.key()),
            quote(&label)
        );
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::super::{ClusterTag, MdpBuilder};
    use super::*;

    fn sample() -> Mdp {
        let a = State::node("a", ClusterTag::Start);
        let b = State::node("b \"q\"", ClusterTag::Id(1));
        let mut mb = MdpBuilder::new();
        mb.edge(&State::Start, "a", &a, 3, 0.5)
            .edge(&a, "b \"q\"", &b, 2, -1.25)
            .terminate(&a, 1)
            .terminate(&b, 2);
        mb.finish(["a"], 0.9)
    }

    #[test]
    fn json_round_trip() {
        let m = sample();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mdp.json");
        write_json(&m, &p).unwrap();
        assert_eq!(read_json(&p).unwrap(), m);
    }

    #[test]
    fn unsorted_file_is_rejected() {
        let mut f = MdpFile::from(&sample());
        f.edges.reverse();
        assert!(matches!(Mdp::try_from(f), Err(MdpError::Format(_))));
    }

    #[test]
    fn dot_mentions_every_edge() {
        let dot = to_dot(&sample());
        assert!(dot.starts_with("digraph"));
        assert_eq!(dot.matches("->").count(), 2);
        assert!(dot.contains("\\\"q\\\""));
    }
}
