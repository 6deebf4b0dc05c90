use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{ols, wilcoxon_rank_sum, AbundanceIndex, RegressionResult, SubjectRecord, TestResult};
use crate::error::{Error, Result};

/// Significance stars: `*` p < 0.05 up to `****` p < 0.0001.
pub fn stars(p: f64) -> &'static str {
    if p < 1e-4 {
        "****"
    } else if p < 1e-3 {
        "***"
    } else if p < 1e-2 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        "ns"
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grouping {
    /// Width of the age bins in years.
    pub age_bin: f64,
}

impl Default for Grouping {
    fn default() -> Self {
        Grouping { age_bin: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SexSummary {
    pub sex: u8,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgeBinSummary {
    pub sex: u8,
    pub age_from: f64,
    pub age_to: f64,
    pub n: usize,
    pub mean: f64,
    pub sem: f64,
}

/// Sex × above/below-median contingency test with Yates correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    /// Rows female/male, columns at-or-below/above the pooled median.
    pub table: [[u64; 2]; 2],
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub index: AbundanceIndex,
    pub by_sex: Vec<SexSummary>,
    pub by_age: Vec<AgeBinSummary>,
    /// Intercept, lung volume, sex and age fitted jointly.
    pub joint: Option<RegressionResult>,
    /// Intercept, lung volume and age fitted within each sex (female, male).
    pub per_sex: [Option<RegressionResult>; 2],
    pub sex_test: Option<TestResult>,
    pub sex_stars: Option<String>,
    pub chi_square: Option<ChiSquareResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub n: usize,
    pub grouping: Grouping,
    pub indices: Vec<IndexReport>,
    pub conventions: Vec<String>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

pub fn chi_square_median_split(records: &[SubjectRecord], idx: AbundanceIndex) -> Result<ChiSquareResult> {
    if records.is_empty() {
        return Err(Error::invalid("empty cohort"));
    }
    let mut vals: Vec<f64> = records.iter().map(|r| r.get(idx)).collect();
    vals.sort_by(f64::total_cmp);
    let m = vals.len();
    let median = if m % 2 == 1 { vals[m / 2] } else { 0.5 * (vals[m / 2 - 1] + vals[m / 2]) };
    let mut table = [[0u64; 2]; 2];
    for r in records {
        table[usize::from(r.sex.min(1))][usize::from(r.get(idx) > median)] += 1;
    }
    let n = m as f64;
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    if rows.contains(&0) || cols.contains(&0) {
        return Err(Error::Undefined("contingency table has an empty margin".into()));
    }
    let mut stat = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let e = rows[i] as f64 * cols[j] as f64 / n;
            let d = ((table[i][j] as f64 - e).abs() - 0.5).max(0.0);
            stat += d * d / e;
        }
    }
    let chi = ChiSquared::new(1.0).map_err(|e| Error::Undefined(e.to_string()))?;
    Ok(ChiSquareResult { table, statistic: stat, p_value: chi.sf(stat).min(1.0) })
}

/// Per-index summaries, regressions and sex comparisons.
pub fn cohort_report(records: &[SubjectRecord], grouping: Grouping) -> Result<CohortReport> {
    if !(grouping.age_bin > 0.0) {
        return Err(Error::invalid("age_bin must be positive"));
    }
    for r in records {
        r.validate()?;
    }
    let col =
        |rs: &[&SubjectRecord], f: &dyn Fn(&SubjectRecord) -> f64| -> Vec<f64> { rs.iter().map(|r| f(r)).collect() };
    let all: Vec<&SubjectRecord> = records.iter().collect();
    let by_sex_rows: [Vec<&SubjectRecord>; 2] = [0u8, 1].map(|s| records.iter().filter(|r| r.sex == s).collect());

    let indices = AbundanceIndex::ALL
        .iter()
        .map(|&idx| {
            let by_sex = (0..2)
                .map(|s| {
                    let v = col(&by_sex_rows[s], &|r| r.get(idx));
                    let (mean, std) = mean_std(&v);
                    SexSummary { sex: s as u8, n: v.len(), mean, std }
                })
                .collect();

            let mut by_age = Vec::new();
            for s in 0..2 {
                let mut bins: std::collections::BTreeMap<i64, Vec<f64>> = Default::default();
                for r in &by_sex_rows[s] {
                    bins.entry((r.age / grouping.age_bin).floor() as i64).or_default().push(r.get(idx));
                }
                for (b, v) in bins {
                    let (mean, std) = mean_std(&v);
                    by_age.push(AgeBinSummary {
                        sex: s as u8,
                        age_from: b as f64 * grouping.age_bin,
                        age_to: (b + 1) as f64 * grouping.age_bin,
                        n: v.len(),
                        mean,
                        sem: std / (v.len() as f64).sqrt(),
                    });
                }
            }

            let y = col(&all, &|r| r.get(idx));
            let joint = ols(
                &[
                    vec![1.0; all.len()],
                    col(&all, &|r| r.lung_volume),
                    col(&all, &|r| f64::from(r.sex)),
                    col(&all, &|r| r.age),
                ],
                &["intercept", "lung_volume", "sex", "age"],
                &y,
            )
            .ok();
            let per_sex = [0, 1].map(|s| {
                let rs = &by_sex_rows[s];
                ols(
                    &[vec![1.0; rs.len()], col(rs, &|r| r.lung_volume), col(rs, &|r| r.age)],
                    &["intercept", "lung_volume", "age"],
                    &col(rs, &|r| r.get(idx)),
                )
                .ok()
            });
            let sex_test =
                wilcoxon_rank_sum(&col(&by_sex_rows[1], &|r| r.get(idx)), &col(&by_sex_rows[0], &|r| r.get(idx))).ok();
            let sex_stars = sex_test.as_ref().map(|t| stars(t.p_value).to_string());
            IndexReport {
                index: idx,
                by_sex,
                by_age,
                joint,
                per_sex,
                sex_test,
                sex_stars,
                chi_square: chi_square_median_split(records, idx).ok(),
            }
        })
        .collect();

    Ok(CohortReport {
        n: records.len(),
        grouping,
        indices,
        conventions: vec![
            "sex coded male = 1, female = 0".into(),
            "std is the sample standard deviation (n - 1); SEM = std / sqrt(n)".into(),
            "joint model: index ~ 1 + lung_volume + sex + age; per-sex model: index ~ 1 + lung_volume + age".into(),
            "sex_test: rank-sum of male vs female values, exact for n <= 12".into(),
            "chi_square: sex x (index > pooled median), Yates-corrected, df = 1".into(),
            "stars: * p<0.05, ** p<0.01, *** p<0.001, **** p<0.0001".into(),
            "regressions or tests that are undefined for the data are omitted (null)".into(),
        ],
    })
}
