//! Plots for the CSV tables an output directory contains.

use std::path::Path;

use neurofield::table::Table;
use neurofield::Result;

use crate::plot::{Plot, Series};
use crate::Status;

struct Layout {
    /// File stem; a leading or trailing `*` matches by suffix or prefix.
    stem: &'static str,
    title: &'static str,
    log_x: bool,
    log_y: bool,
    /// Columns to draw against the first; all when empty.
    columns: &'static [&'static str],
}

const LAYOUTS: &[Layout] = &[
    Layout { stem: "lln", title: "LLN: E sup ||X - x|| vs N", log_x: true, log_y: true, columns: &["error"] },
    Layout {
        stem: "continuum",
        title: "Continuum limit vs m",
        log_x: true,
        log_y: true,
        columns: &["E", "deterministic", "condition_ii"],
    },
    Layout { stem: "budget", title: "Error budget vs m", log_x: true, log_y: true, columns: &[] },
    Layout { stem: "noise", title: "Condition (i) vs m", log_x: true, log_y: true, columns: &["condition_i", "bound"] },
    Layout { stem: "dispersion", title: "Lipschitz and condition (ii)", log_x: true, log_y: true, columns: &[] },
    Layout { stem: "histogram", title: "sqrt(N) M(T)", log_x: false, log_y: false, columns: &[] },
    Layout { stem: "errors", title: "||u^m - u|| over time", log_x: false, log_y: true, columns: &[] },
    Layout { stem: "sde", title: "Voltage vs F^-1(activity)", log_x: false, log_y: false, columns: &["voltage", "inverse_activity"] },
    Layout { stem: "path_N*", title: "Jump-chain path", log_x: false, log_y: false, columns: &[] },
    Layout { stem: "meanfield", title: "Mean-field path", log_x: false, log_y: false, columns: &[] },
    Layout { stem: "*profile", title: "Wave profile", log_x: false, log_y: false, columns: &["u_hat"] },
    Layout { stem: "snapshot_*", title: "Field snapshot", log_x: false, log_y: false, columns: &["u"] },
];

fn layout_for(stem: &str) -> Option<&'static Layout> {
    LAYOUTS.iter().find(|l| match (l.stem.strip_suffix('*'), l.stem.strip_prefix('*')) {
        (Some(prefix), _) => stem.starts_with(prefix),
        (_, Some(suffix)) => stem.ends_with(suffix),
        _ => stem == l.stem,
    })
}

fn plot_table(table: &Table, layout: &Layout) -> Plot {
    let wanted: Vec<usize> = (1..table.header.len())
        .filter(|&i| layout.columns.is_empty() || layout.columns.contains(&table.header[i].as_str()))
        .collect();
    let series = wanted
        .into_iter()
        .map(|i| Series { name: table.header[i].clone(), points: table.rows.iter().map(|r| (r[0], r[i])).collect() })
        .collect();
    Plot {
        title: layout.title.to_string(),
        x_label: table.header[0].clone(),
        y_label: String::new(),
        log_x: layout.log_x,
        log_y: layout.log_y,
        series,
    }
}

/// Writes `<stem>.svg` next to every recognised `<stem>.csv`; returns how many.
pub fn render_dir(dir: &Path) -> Result<usize> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.filter_map(|e| e.ok()).map(|e| e.path()).collect();
    entries.sort();
    let mut count = 0;
    for path in entries {
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let Some(layout) = layout_for(&stem) else { continue };
        let table = Table::load(&path)?;
        if table.header.len() < 2 || table.rows.is_empty() {
            continue;
        }
        std::fs::write(path.with_extension("svg"), plot_table(&table, layout).render())?;
        count += 1;
    }
    Ok(count)
}

/// Renders the plots of `dir`, prints its summary and returns the recorded verdict.
pub fn report(dir: &Path) -> Result<Status> {
    let plots = render_dir(dir)?;
    let summary = dir.join("summary.txt");
    if summary.exists() {
        print!("{}", std::fs::read_to_string(&summary)?);
    }
    println!("{plots} plot(s) written to {}", dir.display());
    let rules = dir.join("rules.csv");
    if !rules.exists() {
        return Ok(Status::Done);
    }
    let text = std::fs::read_to_string(&rules)?;
    let failed = text.lines().skip(1).any(|l| l.split(',').nth(1) == Some("false"));
    let inconclusive = summary.exists() && std::fs::read_to_string(&summary)?.contains("status: INCONCLUSIVE");
    Ok(if failed {
        Status::Fail
    } else if inconclusive {
        Status::Inconclusive
    } else {
        Status::Pass
    })
}
