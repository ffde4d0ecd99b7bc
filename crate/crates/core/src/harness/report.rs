use std::fmt::Write as _;

use super::RunSummary;
use crate::simworld::ScenarioId;

/// Row labels of the task column, by scenario.
pub const TASK_LABELS: [(ScenarioId, &str); 3] =
    [(ScenarioId::Port, "Port"), (ScenarioId::Warehouse, "Warehousing"), (ScenarioId::Deck, "Deck")];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    /// Task, Method, Total Time, Avg Time, Success Rate.
    Time,
    /// Adds perception and decision time.
    Latency,
}

/// Rounds to `places` decimals, halves away from zero. A relative
/// tolerance absorbs binary noise so that 1.005 rounds to 1.01.
pub fn round_half_up(x: f64, places: u32) -> f64 {
    let scale = 10f64.powi(places as i32);
    let scaled = x.abs() * scale;
    let r = (scaled + 0.5 + scaled * 1e-12).floor() / scale;
    r.copysign(x)
}

pub fn format_time(x: f64) -> String {
    format!("{:.2}", round_half_up(x, 2))
}

pub fn format_rate(rate: f64) -> String {
    format!("{:.2}%", round_half_up(rate * 100.0, 2))
}

fn task(s: ScenarioId) -> &'static str {
    TASK_LABELS.iter().find(|(id, _)| *id == s).map(|(_, l)| *l).unwrap_or("?")
}

fn header(kind: Table) -> Vec<&'static str> {
    match kind {
        Table::Time => vec!["Task", "Method", "Total Time (s)", "Avg Time (s)", "Success Rate"],
        Table::Latency => vec![
            "Task",
            "Method",
            "Perception Time (s)",
            "Decision Time (s)",
            "Total Time (s)",
            "Avg Time (s)",
            "Success Rate",
        ],
    }
}

fn row(s: &RunSummary, kind: Table) -> Vec<String> {
    let mut r = vec![task(s.scenario).to_owned(), s.method.clone()];
    if kind == Table::Latency {
        r.push(format_time(s.perception_time));
        r.push(format_time(s.decision_time));
    }
    r.push(format_time(s.total_time));
    r.push(format_time(s.avg_time));
    r.push(format_rate(s.success_rate));
    r
}

fn csv_field(f: &str) -> String {
    if f.contains([',', '"', '\n']) {
        format!("\"{}\"", f.replace('"', "\"\""))
    } else {
        f.to_owned()
    }
}

pub fn table_csv(rows: &[&RunSummary], kind: Table) -> String {
    let mut out = header(kind).join(",") + "\n";
    for s in rows {
        let cells: Vec<String> = row(s, kind).iter().map(|c| csv_field(c)).collect();
        out += &(cells.join(",") + "\n");
    }
    out
}

/// Fixed-width text table.
pub fn table_text(rows: &[&RunSummary], kind: Table) -> String {
    let head: Vec<String> = header(kind).into_iter().map(str::to_owned).collect();
    let body: Vec<Vec<String>> = rows.iter().map(|s| row(s, kind)).collect();
    let widths: Vec<usize> =
        (0..head.len()).map(|i| body.iter().map(|r| r[i].len()).chain([head[i].len()]).max().unwrap_or(0)).collect();
    let line = |cells: &[String]| {
        let mut l = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                l.push_str("  ");
            }
            if i < 2 {
                let _ = write!(l, "{c:<w$}", w = widths[i]);
            } else {
                let _ = write!(l, "{c:>w$}", w = widths[i]);
            }
        }
        l.trim_end().to_owned() + "\n"
    };
    let mut out = line(&head);
    out += &(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  ") + "\n");
    for r in &body {
        out += &line(r);
    }
    out
}
