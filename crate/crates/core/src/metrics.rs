//! Metrics CSV rows and the aligned text table rendered from them.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::planners::TaskRun;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub task_id: String,
    pub planner: String,
    pub reward_backend: String,
    pub seed: u64,
    pub reward: f64,
    pub success: bool,
    pub actions: usize,
    pub price: Option<f64>,
    pub trajectories_used: usize,
}

impl From<&TaskRun> for MetricRow {
    fn from(r: &TaskRun) -> Self {
        Self {
            task_id: r.task_id.clone(),
            planner: r.planner.clone(),
            reward_backend: r.reward_backend.clone(),
            seed: r.seed,
            reward: r.reward,
            success: r.success,
            actions: r.actions,
            price: r.price,
            trajectories_used: r.trajectories_used,
        }
    }
}

pub fn write_csv<W: Write>(w: W, rows: &[MetricRow]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<MetricRow>, csv::Error> {
    csv::Reader::from_reader(r).deserialize().collect()
}

/// Means over a group of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub runs: usize,
    pub reward: f64,
    pub success_rate: f64,
    pub actions: f64,
    /// Mean over rows that have a price.
    pub price: Option<f64>,
    pub trajectories_used: f64,
}

impl Aggregate {
    pub fn of<'a>(rows: impl IntoIterator<Item = &'a MetricRow>) -> Self {
        let rows: Vec<&MetricRow> = rows.into_iter().collect();
        let n = rows.len().max(1) as f64;
        let prices: Vec<f64> = rows.iter().filter_map(|r| r.price).collect();
        Self {
            runs: rows.len(),
            reward: rows.iter().map(|r| r.reward).sum::<f64>() / n,
            success_rate: rows.iter().filter(|r| r.success).count() as f64 / n,
            actions: rows.iter().map(|r| r.actions as f64).sum::<f64>() / n,
            price: (!prices.is_empty()).then(|| prices.iter().sum::<f64>() / prices.len() as f64),
            trajectories_used: rows.iter().map(|r| r.trajectories_used as f64).sum::<f64>() / n,
        }
    }
}

/// Metrics grouped by (planner, reward backend), keeping first-seen order.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<MetricRow>,
}

type GroupKey = (String, String);

impl MetricsTable {
    pub fn new(rows: Vec<MetricRow>) -> Self {
        Self { rows }
    }

    fn groups(&self) -> Vec<(GroupKey, Vec<&MetricRow>)> {
        let mut order: Vec<GroupKey> = Vec::new();
        let mut map: BTreeMap<GroupKey, Vec<&MetricRow>> = BTreeMap::new();
        for r in &self.rows {
            let key = (r.planner.clone(), r.reward_backend.clone());
            if !map.contains_key(&key) {
                order.push(key.clone());
            }
            map.entry(key).or_default().push(r);
        }
        order
            .into_iter()
            .map(|k| {
                let rows = map.remove(&k).unwrap_or_default();
                (k, rows)
            })
            .collect()
    }

    pub fn summary(&self) -> Vec<(String, String, Aggregate)> {
        self.groups()
            .into_iter()
            .map(|((p, b), rows)| (p, b, Aggregate::of(rows)))
            .collect()
    }

    /// Means per (task, planner, backend) over seeds.
    pub fn per_task(&self) -> Vec<(String, String, String, Aggregate)> {
        let mut out = Vec::new();
        for ((p, b), rows) in self.groups() {
            let mut tasks: Vec<&str> = Vec::new();
            for r in &rows {
                if !tasks.contains(&r.task_id.as_str()) {
                    tasks.push(&r.task_id);
                }
            }
            for t in tasks {
                let agg = Aggregate::of(rows.iter().copied().filter(|r| r.task_id == t));
                out.push((t.to_string(), p.clone(), b.clone(), agg));
            }
        }
        out
    }

    /// Aligned text table: one summary line per (planner, backend), then the
    /// per-task breakdown.
    pub fn render(&self) -> String {
        let header = ["planner", "reward", "runs", "Reward↑", "Success↑", "Action↓", "Price↓", "Trajectories"];
        let fmt_price = |p: Option<f64>| p.map_or("-".to_string(), |p| format!("{p:.2}"));
        let mut lines: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for (p, b, a) in self.summary() {
            lines.push(vec![
                p,
                b,
                a.runs.to_string(),
                format!("{:.4}", a.reward),
                format!("{:.4}", a.success_rate),
                format!("{:.2}", a.actions),
                fmt_price(a.price),
                format!("{:.2}", a.trajectories_used),
            ]);
        }
        let mut out = align(&lines);
        out.push('\n');
        let mut task_lines: Vec<Vec<String>> = vec![["task", "planner", "reward", "runs", "Reward↑", "Success↑", "Action↓", "Price↓"]
            .iter()
            .map(|s| s.to_string())
            .collect()];
        for (t, p, b, a) in self.per_task() {
            task_lines.push(vec![
                t,
                p,
                b,
                a.runs.to_string(),
                format!("{:.4}", a.reward),
                format!("{:.4}", a.success_rate),
                format!("{:.2}", a.actions),
                fmt_price(a.price),
            ]);
        }
        out.push_str(&align(&task_lines));
        out
    }
}

fn align(lines: &[Vec<String>]) -> String {
    let cols = lines.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| lines.iter().filter_map(|l| l.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, line) in lines.iter().enumerate() {
        let cells: Vec<String> = line
            .iter()
            .enumerate()
            .map(|(c, s)| {
                let pad = widths[c] - s.chars().count();
                if c < 2 || (c < 3 && i == 0) {
                    format!("{s}{}", " ".repeat(pad))
                } else {
                    format!("{}{s}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: usize = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
            out.push_str(&"-".repeat(rule));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(task: &str, planner: &str, seed: u64, success: bool, actions: usize, price: Option<f64>) -> MetricRow {
        MetricRow {
            task_id: task.into(),
            planner: planner.into(),
            reward_backend: "oracle".into(),
            seed,
            reward: if success { 1.0 } else { 0.25 },
            success,
            actions,
            price,
            trajectories_used: 3,
        }
    }

    #[test]
    fn csv_round_trip_and_header() {
        let rows = vec![row("t1", "bon(10)", 0, true, 3, None), row("t1", "bon(10)", 1, false, 4, Some(28.36))];
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("task_id,planner,reward_backend,seed,reward,success,actions,price,trajectories_used\n"));
        assert_eq!(read_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn aggregates_and_render() {
        let t = MetricsTable::new(vec![
            row("t1", "sampling", 0, false, 4, Some(10.0)),
            row("t1", "sampling", 1, true, 2, Some(20.0)),
            row("t2", "sampling", 0, true, 3, None),
            row("t1", "mcts(100)", 0, true, 3, None),
        ]);
        let s = t.summary();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].0, "sampling");
        assert!((s[0].2.success_rate - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s[0].2.actions, 3.0);
        assert_eq!(s[0].2.price, Some(15.0));
        assert_eq!(t.per_task().len(), 3);
        let text = t.render();
        assert_eq!(text, t.render());
        assert!(text.contains("Action↓"));
        assert!(text.lines().nth(2).unwrap().starts_with("sampling"));
    }
}
