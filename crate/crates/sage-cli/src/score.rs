//! The `score` and `filter` commands, plus the score-file reader `eval`
//! shares.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sage_core::artifact::read_companion;
use sage_core::pipeline::Scorer;

use crate::config::RunConfig;
use crate::data::{default_tags, input_err, load_split, pipeline_err, tagged_blocks, write_output};
use crate::CliError;

pub const SCORE_HEADER: &str =
    "id,tag,m_knn,m_recon,m_task,p_knn,p_recon,p_task,sage_score";

/// One parsed score-file row.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub id: usize,
    pub tag: String,
    pub m: [f64; 3],
    pub p: [f64; 3],
    pub score: f64,
}

/// Loads the trained companion artifact as a ready scorer.
pub fn load_scorer(cfg: &RunConfig) -> Result<Scorer, CliError> {
    let path = cfg.companion_path();
    if !path.exists() {
        return Err(CliError::Input(format!(
            "companion artifact {} not found (run `sage train` first)",
            path.display()
        )));
    }
    let bytes = fs::read(&path).map_err(input_err)?;
    let (model, reference) = read_companion(&mut bytes.as_slice()).map_err(input_err)?;
    Scorer::new(model, reference).map_err(pipeline_err)
}

/// Scores the requested tags and writes one CSV row per sample.
pub fn cmd_score(cfg: &RunConfig, tags: Option<&str>) -> Result<(), CliError> {
    let scorer = load_scorer(cfg)?;
    let (train, test, _val) = load_split(cfg)?;
    let tags: Vec<String> = match tags {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
        None => default_tags(cfg),
    };
    let blocks = tagged_blocks(cfg, &train, &test, &tags)?;

    let mut csv = String::from(SCORE_HEADER);
    csv.push('\n');
    let mut rows = 0usize;
    println!("tag            n     mean_score");
    for block in &blocks {
        let (measures, scores) = scorer.score_raw(&block.features).map_err(pipeline_err)?;
        for (i, s) in scores.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{i},{},{},{},{},{},{},{},{}",
                block.tag,
                measures.m_knn[i],
                measures.m_recon[i],
                measures.m_task[i],
                s.p_knn,
                s.p_recon,
                s.p_task,
                s.score
            );
        }
        rows += scores.len();
        let mean = scores.iter().map(|s| s.score).sum::<f64>() / scores.len().max(1) as f64;
        println!("{:<12} {:>5}     {mean:.4}", block.tag, scores.len());
    }
    write_output(&cfg.scores_path(), csv.as_bytes())?;
    println!("wrote {} ({rows} rows)", cfg.scores_path().display());
    Ok(())
}

/// Parses a score CSV produced by `cmd_score`.
pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>, CliError> {
    if !path.exists() {
        return Err(CliError::Input(format!(
            "score file {} not found (run `sage score` first)",
            path.display()
        )));
    }
    let text = fs::read_to_string(path).map_err(input_err)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == SCORE_HEADER => {}
        other => {
            return Err(CliError::Input(format!(
                "{}: unexpected score header {other:?}",
                path.display()
            )))
        }
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(CliError::Input(format!(
                "{} line {}: expected 9 fields, got {}",
                path.display(),
                lineno + 2,
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64, CliError> {
            fields[i].parse().map_err(|_| {
                CliError::Input(format!(
                    "{} line {}: bad number {:?}",
                    path.display(),
                    lineno + 2,
                    fields[i]
                ))
            })
        };
        rows.push(ScoreRow {
            id: fields[0]
                .parse()
                .map_err(|_| CliError::Input(format!("bad id {:?}", fields[0])))?,
            tag: fields[1].to_string(),
            m: [num(2)?, num(3)?, num(4)?],
            p: [num(5)?, num(6)?, num(7)?],
            score: num(8)?,
        });
    }
    Ok(rows)
}

/// Groups score rows by tag, preserving first-appearance order.
pub fn group_by_tag(rows: &[ScoreRow]) -> Vec<(String, Vec<&ScoreRow>)> {
    let mut groups: Vec<(String, Vec<&ScoreRow>)> = Vec::new();
    for row in rows {
        match groups.iter_mut().find(|(tag, _)| *tag == row.tag) {
            Some((_, members)) => members.push(row),
            None => groups.push((row.tag.clone(), vec![row])),
        }
    }
    groups
}

/// Keeps score rows at or above the threshold and writes them back out as
/// `id,tag,sage_score`.
pub fn cmd_filter(cfg: &RunConfig, threshold: f64, tag: Option<&str>) -> Result<(), CliError> {
    if !threshold.is_finite() {
        return Err(CliError::Config(format!("threshold must be finite, got {threshold}")));
    }
    let rows = read_scores(&cfg.scores_path())?;
    let selected: Vec<&ScoreRow> = rows
        .iter()
        .filter(|r| tag.is_none_or(|t| r.tag == t))
        .collect();
    if selected.is_empty() {
        return Err(CliError::Input(match tag {
            Some(t) => format!("no rows with tag {t:?} in {}", cfg.scores_path().display()),
            None => format!("{} is empty", cfg.scores_path().display()),
        }));
    }
    let mut csv = String::from("id,tag,sage_score\n");
    let mut kept = 0usize;
    for row in &selected {
        if row.score >= threshold {
            let _ = writeln!(csv, "{},{},{}", row.id, row.tag, row.score);
            kept += 1;
        }
    }
    write_output(&cfg.filtered_path(), csv.as_bytes())?;
    println!(
        "kept {kept}/{} rows at threshold {threshold} -> {}",
        selected.len(),
        cfg.filtered_path().display()
    );
    Ok(())
}
