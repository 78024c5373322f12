use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::runner::{Experiment, HarnessError, TrialReport};

/// Writes one row per trial. Audit counters become trailing columns, in
/// name order.
pub fn write_trials_csv<W: Write>(reports: &[TrialReport], out: W) -> Result<(), HarnessError> {
    let audits: BTreeSet<&str> = reports.iter().flat_map(|r| r.audits.keys().map(String::as_str)).collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["seed", "outcome", "honest_multicasts", "rounds", "iterations", "corrupted", "retractions", "outputs"];
    header.extend(audits.iter().copied());
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![
            r.seed.to_string(),
            r.outcome.to_string(),
            r.honest_multicasts.to_string(),
            r.rounds.to_string(),
            r.iterations.to_string(),
            r.corrupted.to_string(),
            r.retractions.to_string(),
            r.outputs.clone(),
        ];
        row.extend(audits.iter().map(|k| r.audits.get(*k).copied().unwrap_or(0).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `trials.csv` and `summary.json` into `dir`.
pub fn write_experiment(exp: &Experiment, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    write_trials_csv(&exp.reports, BufWriter::new(File::create(dir.join("trials.csv"))?))?;
    let summary = serde_json::json!({
        "config": exp.config,
        "f": exp.config.f(),
        "summary": exp.summary,
    });
    let mut out = BufWriter::new(File::create(dir.join("summary.json"))?);
    serde_json::to_writer_pretty(&mut out, &summary)?;
    writeln!(out)?;
    Ok(())
}
