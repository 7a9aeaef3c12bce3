//! Trajectory tables: one row per step with the action taken, the belief
//! held, its goal divergence, the cost, and elapsed simulated time.
//!
//! CSV header: `step,action_0..,mean_0..,cov_0..,divergence,cost,ms` with
//! the covariance flattened row-major. Missing values are empty cells.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mpc::{Plan, Problem, TrajectoryLog};

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub action: Option<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Row-major `n × n`.
    pub covariance: Vec<f64>,
    pub divergence: f64,
    pub cost: Option<f64>,
    pub ms: f64,
}

impl TrajectoryRow {
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let n = self.mean.len();
        DMatrix::from_row_slice(n, n, &self.covariance)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryTable {
    pub action_dim: usize,
    pub state_dim: usize,
    pub rows: Vec<TrajectoryRow>,
}

fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

impl TrajectoryTable {
    pub fn header(action_dim: usize, state_dim: usize) -> Vec<String> {
        let mut h = vec!["step".to_string()];
        h.extend((0..action_dim).map(|i| format!("action_{i}")));
        h.extend((0..state_dim).map(|i| format!("mean_{i}")));
        h.extend((0..state_dim * state_dim).map(|i| format!("cov_{i}")));
        h.extend(["divergence", "cost", "ms"].map(String::from));
        h
    }

    /// Executed MPC steps.
    pub fn from_log(problem: &Problem, log: &TrajectoryLog) -> Self {
        Self {
            action_dim: problem.env.action_dim(),
            state_dim: problem.env.state_dim(),
            rows: log
                .records
                .iter()
                .map(|r| TrajectoryRow {
                    step: r.step,
                    action: r.action.as_ref().map(vec_of),
                    mean: vec_of(&r.mean),
                    covariance: flat(&r.covariance),
                    divergence: r.divergence,
                    cost: r.action.as_ref().map(|_| r.cost),
                    ms: r.sim_ms,
                })
                .collect(),
        }
    }

    /// A single plan: the start belief and the H predicted beliefs, with the
    /// cost column accumulating the per-step contributions.
    pub fn from_plan(problem: &Problem, start_divergence: f64, plan_actions: &DVector<f64>, rollout: &crate::mpc::Rollout) -> Self {
        let a = problem.env.action_dim();
        let h = rollout.beliefs.len();
        let mut rows = Vec::with_capacity(h + 1);
        let mut cost = 0.0;
        let mut ms = 0.0;
        for t in 0..=h {
            let (mean, cov, divergence) = if t == 0 {
                (vec_of(problem.start.mean()), flat(problem.start.covariance()), start_divergence)
            } else {
                let b = &rollout.beliefs[t - 1];
                (vec_of(b.mean()), flat(b.covariance()), rollout.divergences[t - 1])
            };
            if t > 0 {
                cost += rollout.step_costs[t - 1];
            }
            let action = (t < h).then(|| vec_of(&problem.step_action(plan_actions, t)));
            rows.push(TrajectoryRow {
                step: t,
                action,
                mean,
                covariance: cov,
                divergence,
                cost: Some(cost),
                ms,
            });
            if t < h {
                ms += problem.env.step_duration(&problem.step_action(plan_actions, t)) * 1e3;
            }
        }
        Self {
            action_dim: a,
            state_dim: problem.env.state_dim(),
            rows,
        }
    }

    pub fn from_plan_result(problem: &Problem, plan: &Plan, start_divergence: f64) -> Self {
        Self::from_plan(problem, start_divergence, &plan.actions, &plan.rollout)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(Self::header(self.action_dim, self.state_dim)).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![r.step.to_string()];
            match &r.action {
                Some(a) => rec.extend(a.iter().map(|v| v.to_string())),
                None => rec.extend(std::iter::repeat_n(String::new(), self.action_dim)),
            }
            rec.extend(r.mean.iter().map(|v| v.to_string()));
            rec.extend(r.covariance.iter().map(|v| v.to_string()));
            rec.push(r.divergence.to_string());
            rec.push(r.cost.map(|c| c.to_string()).unwrap_or_default());
            rec.push(r.ms.to_string());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    /// Mean path projected to workspace positions via `position`.
    pub fn means(&self) -> Vec<DVector<f64>> {
        self.rows.iter().map(|r| DVector::from_row_slice(&r.mean)).collect()
    }
}

fn bad(message: impl Into<String>) -> Error {
    Error::Parse {
        what: "trajectory csv".into(),
        message: message.into(),
    }
}

fn count_prefixed(header: &csv::StringRecord, prefix: &str) -> usize {
    header.iter().filter(|h| h.starts_with(prefix)).count()
}

pub fn parse_trajectory_csv(text: &str) -> Result<TrajectoryTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let a = count_prefixed(&header, "action_");
    let n = count_prefixed(&header, "mean_");
    if n == 0 {
        return Err(bad("no mean columns"));
    }
    let expected = TrajectoryTable::header(a, n);
    if header.len() != expected.len() || header.iter().zip(&expected).any(|(h, e)| h != e) {
        return Err(bad(format!("unexpected header; expected {}", expected.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| bad(format!("line {line}: {e}")))?;
        if rec.len() != expected.len() {
            return Err(bad(format!("line {line}: {} fields, expected {}", rec.len(), expected.len())));
        }
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("line {line}: column `{}` is not a number", expected[k])))
        };
        let step = rec[0]
            .trim()
            .parse::<usize>()
            .map_err(|_| bad(format!("line {line}: step is not an index")))?;
        if rows.last().is_some_and(|r: &TrajectoryRow| r.step >= step) {
            return Err(bad(format!("line {line}: step indices must increase")));
        }
        let action = if (1..=a).all(|k| rec[k].trim().is_empty()) && a > 0 {
            None
        } else {
            Some((1..=a).map(num).collect::<Result<Vec<_>>>()?)
        };
        let mean = (1 + a..1 + a + n).map(num).collect::<Result<Vec<_>>>()?;
        let cov_start = 1 + a + n;
        let covariance = (cov_start..cov_start + n * n).map(num).collect::<Result<Vec<_>>>()?;
        let tail = cov_start + n * n;
        let cost = if rec[tail + 1].trim().is_empty() { None } else { Some(num(tail + 1)?) };
        rows.push(TrajectoryRow {
            step,
            action,
            mean,
            covariance,
            divergence: num(tail)?,
            cost,
            ms: num(tail + 2)?,
        });
    }
    Ok(TrajectoryTable {
        action_dim: a,
        state_dim: n,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table() -> TrajectoryTable {
        TrajectoryTable {
            action_dim: 2,
            state_dim: 2,
            rows: vec![
                TrajectoryRow {
                    step: 0,
                    action: Some(vec![0.1, -0.25]),
                    mean: vec![0.0, 1.0],
                    covariance: vec![0.01, 0.0, 0.0, 0.01],
                    divergence: 3.5,
                    cost: Some(12.0),
                    ms: 0.0,
                },
                TrajectoryRow {
                    step: 1,
                    action: None,
                    mean: vec![0.1, 0.75],
                    covariance: vec![0.01, 0.001, 0.001, 0.01],
                    divergence: 0.05,
                    cost: None,
                    ms: 100.0,
                },
            ],
        }
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            TrajectoryTable::header(1, 2).join(","),
            "step,action_0,mean_0,mean_1,cov_0,cov_1,cov_2,cov_3,divergence,cost,ms"
        );
    }

    #[test]
    fn csv_round_trip() {
        let t = table();
        let text = t.to_csv();
        assert!(text.starts_with("step,action_0,action_1,mean_0"));
        assert!(text.contains("\n1,,,0.1,0.75,"));
        assert_eq!(parse_trajectory_csv(&text).unwrap(), t);
    }

    #[test]
    fn malformed_tables_rejected() {
        assert!(parse_trajectory_csv("").is_err());
        assert!(parse_trajectory_csv("step,action_0,divergence,cost,ms\n").is_err());
        let text = table().to_csv();
        assert!(parse_trajectory_csv(&text.replace("3.5", "abc")).is_err());
        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(1, 2);
        assert!(parse_trajectory_csv(&lines.join("\n")).is_err());
        assert!(parse_trajectory_csv(&text.replace(",100\n", "\n")).is_err());
    }

    proptest! {
        #[test]
        fn any_finite_table_round_trips(values in proptest::collection::vec(-1e6f64..1e6, 11), div in 0.0f64..1e3) {
            let t = TrajectoryTable {
                action_dim: 1,
                state_dim: 2,
                rows: vec![TrajectoryRow {
                    step: 7,
                    action: Some(vec![values[0]]),
                    mean: values[1..3].to_vec(),
                    covariance: values[3..7].to_vec(),
                    divergence: div,
                    cost: Some(values[7]),
                    ms: values[8],
                }],
            };
            prop_assert_eq!(parse_trajectory_csv(&t.to_csv()).unwrap(), t);
        }
    }
}
