use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::{read_records, ExperimentError, RunRecord};
use crate::baselines::SchemeId;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scheme: SchemeId,
    pub n_d: usize,
    pub n_b: usize,
    pub count: usize,
    pub r_min_mean: f64,
    /// Sample standard deviation; 0 for a single row.
    pub r_min_std: f64,
    pub wall_ms_mean: Option<f64>,
    pub generations_mean: Option<f64>,
    /// Mean of `gmga - this scheme` over rows with a matching GA row.
    pub gmga_delta_mean: Option<f64>,
    pub paired: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub malformed: usize,
    pub failed: usize,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v).unwrap();
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Groups successful rows by (scheme, n_d, n_b). Failed rows are counted
/// and left out.
pub fn summarize(records: &[RunRecord]) -> Summary {
    let ok: Vec<&RunRecord> = records.iter().filter(|r| !r.failed() && r.r_min.is_some()).collect();
    let ga: HashMap<(usize, usize, usize, usize), f64> = ok
        .iter()
        .filter(|r| r.scheme == SchemeId::Gmga)
        .map(|r| ((r.n_d, r.n_b, r.rep, r.frame), r.r_min.unwrap()))
        .collect();
    let mut groups: BTreeMap<(SchemeId, usize, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in &ok {
        groups.entry((r.scheme, r.n_d, r.n_b)).or_default().push(r);
    }
    let rows = groups
        .into_iter()
        .map(|((scheme, n_d, n_b), rs)| {
            let r: Vec<f64> = rs.iter().map(|x| x.r_min.unwrap()).collect();
            let wall: Vec<f64> = rs.iter().filter_map(|x| x.wall_ms).collect();
            let gens: Vec<f64> = rs.iter().filter_map(|x| x.generations.map(|g| g as f64)).collect();
            let deltas: Vec<f64> = if scheme == SchemeId::Gmga {
                Vec::new()
            } else {
                rs.iter().filter_map(|x| ga.get(&(x.n_d, x.n_b, x.rep, x.frame)).map(|g| g - x.r_min.unwrap())).collect()
            };
            SummaryRow {
                scheme,
                n_d,
                n_b,
                count: r.len(),
                r_min_mean: mean(&r).unwrap(),
                r_min_std: std_dev(&r),
                wall_ms_mean: mean(&wall),
                generations_mean: mean(&gens),
                gmga_delta_mean: mean(&deltas),
                paired: deltas.len(),
            }
        })
        .collect();
    Summary { rows, malformed: 0, failed: records.len() - ok.len() }
}

/// Summarizes the CSV at `input` and writes the result to `output`.
pub fn summarize_file(input: &Path, output: &Path) -> Result<Summary, ExperimentError> {
    let (records, malformed) = read_records(input)?;
    let summary = Summary { malformed, ..summarize(&records) };
    if records.is_empty() {
        log::warn!("{} holds no runs; writing an empty summary", input.display());
    }
    let mut file = std::fs::File::create(output)?;
    writeln!(
        file,
        "# summary of {}\n# rows = {}\n# malformed = {}\n# failed = {}",
        input.display(),
        records.len(),
        summary.malformed,
        summary.failed
    )?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record([
        "scheme",
        "n_d",
        "n_b",
        "count",
        "r_min_mean",
        "r_min_std",
        "wall_ms_mean",
        "generations_mean",
        "gmga_delta_mean",
        "paired",
    ])?;
    for row in &summary.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(scheme: SchemeId, rep: usize, r: f64) -> RunRecord {
        RunRecord {
            scheme,
            n_d: 5,
            n_b: 1,
            rep,
            seed: rep as u64,
            instance_hash: format!("{rep:016x}"),
            frame: 0,
            r_min: Some(r),
            wall_ms: Some(2.0),
            generations: (scheme == SchemeId::Gmga).then_some(10 + rep),
            evals: Some(1),
            converged: Some(true),
            error: String::new(),
        }
    }

    #[test]
    fn single_row_summary() {
        let s = summarize(&[rec(SchemeId::Direct, 0, 0.25)]);
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.rows[0].r_min_mean, 0.25);
        assert_eq!(s.rows[0].r_min_std, 0.0);
        assert_eq!(s.rows[0].gmga_delta_mean, None);
    }

    #[test]
    fn three_row_fixture() {
        let rows = [
            rec(SchemeId::Direct, 0, 1.0),
            rec(SchemeId::Direct, 1, 2.0),
            rec(SchemeId::Direct, 2, 4.0),
            rec(SchemeId::Gmga, 0, 2.0),
            rec(SchemeId::Gmga, 1, 2.5),
        ];
        let s = summarize(&rows);
        let d = &s.rows[0];
        assert_eq!(d.scheme, SchemeId::Direct);
        assert!((d.r_min_mean - 7.0 / 3.0).abs() < 1e-15);
        // sample variance of 1, 2, 4 is 7/3
        assert!((d.r_min_std - (7.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(d.paired, 2);
        assert!((d.gmga_delta_mean.unwrap() - 0.75).abs() < 1e-15);
        let g = &s.rows[1];
        assert_eq!(g.generations_mean, Some(10.5));
    }

    #[test]
    fn failed_rows_are_counted_not_averaged() {
        let mut bad = rec(SchemeId::Direct, 1, 0.0);
        bad.r_min = None;
        bad.error = "boom".into();
        let s = summarize(&[rec(SchemeId::Direct, 0, 0.5), bad]);
        assert_eq!(s.failed, 1);
        assert_eq!(s.rows[0].count, 1);
    }

    #[test]
    fn empty_input_gives_empty_summary() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.csv");
        std::fs::write(&input, "# nothing\n").unwrap();
        let out = dir.path().join("sum.csv");
        let s = summarize_file(&input, &out).unwrap();
        assert!(s.rows.is_empty());
        let text = std::fs::read_to_string(out).unwrap();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1);
    }

    #[test]
    fn malformed_rows_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.csv");
        let header = "scheme,n_d,n_b,rep,seed,instance_hash,frame,r_min,wall_ms,generations,evals,converged,error";
        let body = "direct,5,1,0,0,00,0,0.5,1.0,,1,true,\nvae,5,1,1,1,01,0,0.5,1.0,,1,true,\ndirect,5,1,2,2,02,0,oops,1.0,,1,true,\n";
        std::fs::write(&input, format!("{header}\n{body}")).unwrap();
        let s = summarize_file(&input, &dir.path().join("sum.csv")).unwrap();
        assert_eq!(s.malformed, 2);
        assert_eq!(s.rows[0].count, 1);
    }
}
