use std::path::{Path, PathBuf};

use serde::Serialize;
use vasq_core::stats::{cohort_report, CohortReport, Grouping, SubjectRecord};

use crate::error::{CliError, CliResult};
use crate::manifest::{beside, Manifest};
use crate::util::{create_dir, require_file, write_json};
use crate::CohortStatsArgs;

fn read_records(path: &Path) -> CliResult<Vec<SubjectRecord>> {
    require_file(path)?;
    let mut r =
        csv::Reader::from_path(path).map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (row, rec) in r.deserialize::<SubjectRecord>().enumerate() {
        let rec = rec.map_err(|e| CliError::invalid(format!("{} row {}: {e}", path.display(), row + 1)))?;
        rec.validate()?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(CliError::invalid(format!("{} has no rows", path.display())));
    }
    Ok(out)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w =
        csv::Writer::from_path(path).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(CliError::runtime)?;
    }
    w.flush().map_err(CliError::runtime)
}

#[derive(Serialize)]
struct SexRow {
    index: &'static str,
    sex: u8,
    n: usize,
    mean: f64,
    std: f64,
}

#[derive(Serialize)]
struct AgeRow {
    index: &'static str,
    sex: u8,
    age_from: f64,
    age_to: f64,
    n: usize,
    mean: f64,
    sem: f64,
}

#[derive(Serialize)]
struct CoefficientRow {
    index: &'static str,
    model: &'static str,
    term: String,
    estimate: f64,
    std_error: f64,
    t: f64,
    p_value: f64,
}

#[derive(Serialize)]
struct TestRow {
    index: &'static str,
    test: &'static str,
    statistic: f64,
    p_value: f64,
    stars: String,
}

/// Long-format tables for plotting; returns the files written.
fn write_plots(dir: &Path, records: &[SubjectRecord], report: &CohortReport) -> CliResult<Vec<PathBuf>> {
    create_dir(dir)?;
    let (mut sex, mut age, mut coef, mut tests) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for r in &report.indices {
        let index = r.index.name();
        for s in &r.by_sex {
            sex.push(SexRow { index, sex: s.sex, n: s.n, mean: s.mean, std: s.std });
        }
        for a in &r.by_age {
            age.push(AgeRow {
                index,
                sex: a.sex,
                age_from: a.age_from,
                age_to: a.age_to,
                n: a.n,
                mean: a.mean,
                sem: a.sem,
            });
        }
        let models = [("joint", &r.joint), ("female", &r.per_sex[0]), ("male", &r.per_sex[1])];
        for (model, fit) in models {
            for c in fit.iter().flat_map(|f| &f.coefficients) {
                coef.push(CoefficientRow {
                    index,
                    model,
                    term: c.name.clone(),
                    estimate: c.estimate,
                    std_error: c.std_error,
                    t: c.t,
                    p_value: c.p_value,
                });
            }
        }
        if let Some(t) = &r.sex_test {
            let stars = r.sex_stars.clone().unwrap_or_default();
            tests.push(TestRow { index, test: "rank_sum_sex", statistic: t.statistic, p_value: t.p_value, stars });
        }
        if let Some(c) = &r.chi_square {
            let stars = vasq_core::stats::stars(c.p_value).to_string();
            tests.push(TestRow {
                index,
                test: "chi_square_median_split",
                statistic: c.statistic,
                p_value: c.p_value,
                stars,
            });
        }
    }
    let files = [
        dir.join("subjects.csv"),
        dir.join("by_sex.csv"),
        dir.join("by_age.csv"),
        dir.join("coefficients.csv"),
        dir.join("tests.csv"),
    ];
    write_csv(&files[0], records)?;
    write_csv(&files[1], &sex)?;
    write_csv(&files[2], &age)?;
    write_csv(&files[3], &coef)?;
    write_csv(&files[4], &tests)?;
    Ok(files.to_vec())
}

pub fn run(args: CohortStatsArgs) -> CliResult<()> {
    let grouping = Grouping { age_bin: args.age_bin };
    let records = read_records(&args.input)?;
    let report = cohort_report(&records, grouping)?;
    write_json(&args.out, &report)?;
    let mut outputs = vec![args.out.clone()];
    if let Some(dir) = &args.plots {
        outputs.extend(write_plots(dir, &records, &report)?);
    }

    let mut m = Manifest::new("cohort-stats", serde_json::json!({ "grouping": grouping }))?
        .conventions(report.conventions.iter().cloned());
    m.input(&args.input)?;
    for p in &outputs {
        m.output(p)?;
    }
    m.write(&beside(&args.out))
}
