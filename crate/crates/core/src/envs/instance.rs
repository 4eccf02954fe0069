use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::FiniteMdp;

/// Cardinalities given either once for all times or per time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cards {
    Constant(usize),
    PerTime(Vec<usize>),
}

/// On-disk instance document. `transition` and `stage_cost` are nested
/// arrays, either one slice (`[x][u][x']`, `[x][u]`) reused at every time or
/// one slice per time (`[t][x][u][x']`, `[t][x][u]`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub horizon: usize,
    pub states: Cards,
    pub actions: Cards,
    pub transition: Value,
    pub stage_cost: Value,
    pub terminal_cost: Vec<f64>,
    pub initial: Vec<f64>,
}

/// Reads and validates an instance file.
pub fn load_instance(path: impl AsRef<Path>) -> Result<FiniteMdp> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_instance(&text)
}

/// Parses and validates an instance document.
pub fn parse_instance(text: &str) -> Result<FiniteMdp> {
    let file: InstanceFile = serde_json::from_str(text)?;
    file.into_mdp()
}

/// Writes `mdp` as JSON, using the stationary shorthand when every slice
/// is the same.
pub fn save_instance(mdp: &FiniteMdp, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, instance_to_json(mdp)?)?;
    Ok(())
}

pub fn instance_to_json(mdp: &FiniteMdp) -> Result<String> {
    Ok(serde_json::to_string_pretty(&InstanceFile::from_mdp(mdp))?)
}

impl InstanceFile {
    pub fn from_mdp(mdp: &FiniteMdp) -> Self {
        let horizon = mdp.horizon();
        let tensor = |t: usize| {
            let (nx, nu, nxn) = (mdp.n_states(t), mdp.n_actions(t), mdp.n_states(t + 1));
            nest(mdp.transition(t), &[nx, nu, nxn])
        };
        let costs = |t: usize| nest(mdp.stage_cost(t), &[mdp.n_states(t), mdp.n_actions(t)]);
        if mdp.is_stationary() {
            InstanceFile {
                horizon,
                states: Cards::Constant(mdp.n_states(0)),
                actions: Cards::Constant(mdp.n_actions(0)),
                transition: tensor(0),
                stage_cost: costs(0),
                terminal_cost: mdp.terminal_cost().to_vec(),
                initial: mdp.initial().to_vec(),
            }
        } else {
            InstanceFile {
                horizon,
                states: Cards::PerTime(mdp.state_cards().to_vec()),
                actions: Cards::PerTime(mdp.action_cards().to_vec()),
                transition: Value::Array((0..horizon).map(tensor).collect()),
                stage_cost: Value::Array((0..horizon).map(costs).collect()),
                terminal_cost: mdp.terminal_cost().to_vec(),
                initial: mdp.initial().to_vec(),
            }
        }
    }

    pub fn into_mdp(self) -> Result<FiniteMdp> {
        let horizon = self.horizon;
        if horizon == 0 {
            return Err(Error::instance("horizon must be positive"));
        }
        let states = expand_cards(self.states, horizon + 1, "states")?;
        let actions = expand_cards(self.actions, horizon, "actions")?;

        let transition = if depth(&self.transition) == 4 {
            expect_len(&self.transition, horizon, "transition")?;
            (0..horizon)
                .map(|t| {
                    flatten(
                        &self.transition[t],
                        &[states[t], actions[t], states[t + 1]],
                        &format!("transition[t={t}]"),
                        &["x", "u", "x'"],
                    )
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            uniform_cards(&states, &actions, "transition")?;
            let slice =
                flatten(&self.transition, &[states[0], actions[0], states[0]], "transition", &["x", "u", "x'"])?;
            vec![slice; horizon]
        };

        let stage_cost = if depth(&self.stage_cost) == 3 {
            expect_len(&self.stage_cost, horizon, "stage_cost")?;
            (0..horizon)
                .map(|t| {
                    flatten(&self.stage_cost[t], &[states[t], actions[t]], &format!("stage_cost[t={t}]"), &["x", "u"])
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            uniform_cards(&states, &actions, "stage_cost")?;
            let slice = flatten(&self.stage_cost, &[states[0], actions[0]], "stage_cost", &["x", "u"])?;
            vec![slice; horizon]
        };

        FiniteMdp::new(horizon, states, actions, transition, stage_cost, self.terminal_cost, self.initial)
    }
}

fn expand_cards(cards: Cards, len: usize, what: &str) -> Result<Vec<usize>> {
    match cards {
        Cards::Constant(n) => Ok(vec![n; len]),
        Cards::PerTime(v) if v.len() == len => Ok(v),
        Cards::PerTime(v) => {
            Err(Error::instance(format!("{what}: expected {len} per-time cardinalities, got {}", v.len())))
        }
    }
}

fn uniform_cards(states: &[usize], actions: &[usize], what: &str) -> Result<()> {
    if states.windows(2).all(|w| w[0] == w[1]) && actions.windows(2).all(|w| w[0] == w[1]) {
        Ok(())
    } else {
        Err(Error::instance(format!("{what}: a single slice needs constant cardinalities; give one slice per time")))
    }
}

/// Nesting depth of the first element chain.
fn depth(v: &Value) -> usize {
    match v {
        Value::Array(a) => 1 + a.first().map_or(0, depth),
        _ => 0,
    }
}

fn expect_len(v: &Value, len: usize, path: &str) -> Result<()> {
    match v {
        Value::Array(a) if a.len() == len => Ok(()),
        Value::Array(a) => Err(Error::instance(format!("{path}: expected {len} entries, got {}", a.len()))),
        _ => Err(Error::instance(format!("{path}: expected an array"))),
    }
}

/// Flattens a nested array of the given shape in row-major order, naming the
/// offending indices on mismatch.
fn flatten(v: &Value, shape: &[usize], path: &str, labels: &[&str]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(shape.iter().product());
    flatten_into(v, shape, path, labels, &mut out)?;
    Ok(out)
}

fn flatten_into(v: &Value, shape: &[usize], path: &str, labels: &[&str], out: &mut Vec<f64>) -> Result<()> {
    let Some((&len, rest)) = shape.split_first() else {
        return match v.as_f64() {
            Some(x) => {
                out.push(x);
                Ok(())
            }
            None => Err(Error::instance(format!("{path}: expected a number, got {v}"))),
        };
    };
    expect_len(v, len, path)?;
    for (i, item) in v.as_array().into_iter().flatten().enumerate() {
        flatten_into(item, rest, &format!("{path}[{}={i}]", labels[0]), &labels[1..], out)?;
    }
    Ok(())
}

fn nest(flat: &[f64], shape: &[usize]) -> Value {
    match shape {
        [] => unreachable!("empty shape"),
        [_] => Value::Array(flat.iter().map(|&x| Value::from(x)).collect()),
        [_, rest @ ..] => {
            let stride: usize = rest.iter().product();
            Value::Array(flat.chunks_exact(stride).map(|c| nest(c, rest)).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::build_nonconvex_toy;

    #[test]
    fn toy_round_trips() {
        let toy = build_nonconvex_toy();
        let text = instance_to_json(&toy).unwrap();
        assert!(text.contains("\"states\": 2"));
        assert_eq!(parse_instance(&text).unwrap(), toy);
    }

    #[test]
    fn per_time_round_trips() {
        let mdp = FiniteMdp::new(
            2,
            vec![1, 2, 3],
            vec![2, 1],
            vec![vec![1.0, 0.0, 0.25, 0.75], vec![0.2, 0.3, 0.5, 0.0, 0.0, 1.0]],
            vec![vec![1.0, -2.0], vec![0.5, 0.25]],
            vec![0.0, 1.0, 2.0],
            vec![1.0],
        )
        .unwrap();
        let text = instance_to_json(&mdp).unwrap();
        assert_eq!(parse_instance(&text).unwrap(), mdp);
    }

    #[test]
    fn bad_row_names_indices() {
        let text = r#"{"horizon": 1, "states": 2, "actions": 1,
            "transition": [[[1.0, 0.0]], [[0.5, 0.49]]],
            "stage_cost": [[0.0], [0.0]], "terminal_cost": [0, 0], "initial": [1, 0]}"#;
        let err = parse_instance(text).unwrap_err().to_string();
        assert!(err.contains("t=0") && err.contains("x=1") && err.contains("u=0"), "{err}");
    }

    #[test]
    fn ragged_array_names_path() {
        let text = r#"{"horizon": 1, "states": 2, "actions": 1,
            "transition": [[[1.0, 0.0]], [[1.0]]],
            "stage_cost": [[0.0], [0.0]], "terminal_cost": [0, 0], "initial": [1, 0]}"#;
        let err = parse_instance(text).unwrap_err().to_string();
        assert!(err.contains("transition[x=1][u=0]"), "{err}");
    }

    #[test]
    fn syntax_error_is_a_parse_error() {
        let err = parse_instance("{\"horizon\": 1,,}").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("line 1"));
    }
}
