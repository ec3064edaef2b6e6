//! Monte-Carlo harness for the type 1 error and power tables.
//!
//! Each cell simulates `replicates` data sets and counts rejections at level
//! `alpha` for a fixed list of test columns. Replicate `r` of cell `c` draws
//! from `substream(seed, (c << 32) | r)`, so results do not depend on thread
//! count or scheduling.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::scaletest::{gs_test, levene_classic, tw_test, SampleData, Stage1, TestError};
use crate::simgen::{
    gen_model1_with, gen_model2_with, substream, DesignView, Margin, Model1Config, Model2Config,
    SimError, SimulatedSample,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchTable {
    /// Model 1, small samples.
    T1,
    /// Model 1, 2000 pairs per group.
    T1Large,
    /// Model 2 without group uncertainty.
    T2,
    /// Model 2 with 30% group uncertainty.
    T3,
    /// Model 2 power with 30% group uncertainty.
    T4,
    /// Power ratio of probability versus best-guess designs over the uncertainty grid.
    RelativeEfficiency,
}

impl FromStr for BenchTable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "T1" => Ok(Self::T1),
            "T1L" | "T1-LARGE" => Ok(Self::T1Large),
            "T2" => Ok(Self::T2),
            "T3" => Ok(Self::T3),
            "T4" => Ok(Self::T4),
            "RE" | "RELATIVE-EFFICIENCY" | "F1" => Ok(Self::RelativeEfficiency),
            _ => Err(format!(
                "unknown table `{s}` (expected T1, T1L, T2, T3, T4 or RE)"
            )),
        }
    }
}

impl fmt::Display for BenchTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::T1 => "T1",
            Self::T1Large => "T1L",
            Self::T2 => "T2",
            Self::T3 => "T3",
            Self::T4 => "T4",
            Self::RelativeEfficiency => "RE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Levene(Stage1),
    Gs(Stage1),
    Tw(Stage1),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestColumn {
    pub name: String,
    pub statistic: Statistic,
    pub view: DesignView,
}

impl TestColumn {
    pub fn new(statistic: Statistic, view: DesignView) -> Self {
        let (base, s) = match statistic {
            Statistic::Levene(s) => ("Lev", s),
            Statistic::Gs(s) => ("gS", s),
            Statistic::Tw(s) => ("TW", s),
        };
        let bg = if view == DesignView::BestGuess { "_BG" } else { "" };
        Self {
            name: format!("{base}_{}{bg}", s.suffix()),
            statistic,
            view,
        }
    }

    /// p-value on one simulated sample.
    pub fn p_value(&self, sample: &SimulatedSample) -> Result<f64, TestError> {
        let data = sample.sample_data(self.view, true)?;
        self.p_value_on(&data)
    }

    pub fn p_value_on(&self, data: &SampleData) -> Result<f64, TestError> {
        let r = match self.statistic {
            Statistic::Levene(s) => levene_classic(&data.without_clusters(), s)?,
            Statistic::Gs(s) => gs_test(data, s)?,
            Statistic::Tw(s) => tw_test(data, s)?,
        };
        Ok(r.p_value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Model1(Model1Config),
    Model2(Model2Config),
}

impl Generator {
    pub fn generate(&self, seed: u64, stream: u64) -> Result<SimulatedSample, SimError> {
        let mut rng = substream(seed, stream);
        match self {
            Generator::Model1(c) => gen_model1_with(c, &mut rng),
            Generator::Model2(c) => gen_model2_with(c, &mut rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Named scenario parameters, in output column order.
    pub params: Vec<(&'static str, String)>,
    pub generator: Generator,
    pub columns: Vec<TestColumn>,
}

/// Rejections among replicates on which the test could be computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub rejections: usize,
    pub valid: usize,
}

impl Tally {
    pub fn rate(&self) -> f64 {
        if self.valid == 0 {
            f64::NAN
        } else {
            self.rejections as f64 / self.valid as f64
        }
    }

    /// Binomial Monte-Carlo standard error of [`Tally::rate`].
    pub fn std_error(&self) -> f64 {
        let p = self.rate();
        (p * (1.0 - p) / self.valid as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub scenario: Scenario,
    pub replicates: usize,
    pub tallies: Vec<Tally>,
}

impl CellResult {
    pub fn tally(&self, column: &str) -> Option<Tally> {
        self.scenario
            .columns
            .iter()
            .position(|c| c.name == column)
            .map(|i| self.tallies[i])
    }
}

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Runs one cell. `cell` selects the block of substreams.
pub fn run_cell(
    scenario: &Scenario,
    replicates: usize,
    seed: u64,
    cell: u32,
    alpha: f64,
) -> Result<CellResult, SimError> {
    let ncol = scenario.columns.len();
    let outcomes: Vec<Vec<Option<bool>>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let sample = scenario
                .generator
                .generate(seed, (u64::from(cell) << 32) | r as u64)?;
            Ok(scenario
                .columns
                .iter()
                .map(|c| c.p_value(&sample).ok().map(|p| p <= alpha))
                .collect())
        })
        .collect::<Result<_, SimError>>()?;
    let mut tallies = vec![Tally::default(); ncol];
    for row in &outcomes {
        for (t, o) in tallies.iter_mut().zip(row) {
            if let Some(reject) = o {
                t.valid += 1;
                t.rejections += usize::from(*reject);
            }
        }
    }
    Ok(CellResult {
        scenario: scenario.clone(),
        replicates,
        tallies,
    })
}

fn model1(n1: usize, n2: usize, margin: Margin) -> Scenario {
    let mut cfg = Model1Config::new(n1, n2);
    cfg.margin = margin;
    let mut columns = Vec::new();
    for s in [Stage1::Ols, Stage1::Lad] {
        columns.push(TestColumn::new(Statistic::Levene(s), DesignView::Truth));
    }
    for s in [Stage1::Ols, Stage1::Lad] {
        columns.push(TestColumn::new(Statistic::Tw(s), DesignView::Truth));
    }
    for s in [Stage1::Ols, Stage1::Lad] {
        columns.push(TestColumn::new(Statistic::Gs(s), DesignView::Truth));
    }
    Scenario {
        params: vec![
            ("margin", margin.to_string()),
            ("n1", n1.to_string()),
            ("n2", n2.to_string()),
        ],
        generator: Generator::Model1(cfg),
        columns,
    }
}

/// Model 2 scenario with the given variances (not scales) per true genotype.
pub fn model2_scenario(
    n_pairs: usize,
    maf: f64,
    margin: Margin,
    a: f64,
    variances: [f64; 3],
    columns: Vec<TestColumn>,
) -> Scenario {
    let mut cfg = Model2Config::new(n_pairs, maf);
    cfg.margin = margin;
    cfg.a = a;
    cfg.sigma = variances.map(f64::sqrt);
    Scenario {
        params: vec![
            ("margin", margin.to_string()),
            ("maf", fmt_g(maf)),
            ("n_pairs", n_pairs.to_string()),
            ("a", fmt_g(a)),
            (
                "variances",
                variances.iter().map(|v| fmt_g(*v)).collect::<Vec<_>>().join(","),
            ),
        ],
        generator: Generator::Model2(cfg),
        columns,
    }
}

const PAIR_GRID: [usize; 5] = [20, 50, 100, 500, 1000];

fn lad(stat: fn(Stage1) -> Statistic, view: DesignView) -> TestColumn {
    TestColumn::new(stat(Stage1::Lad), view)
}

/// The scenario grid of a table.
pub fn scenarios(table: BenchTable) -> Vec<Scenario> {
    let mut out = Vec::new();
    match table {
        BenchTable::T1 => {
            for m in Margin::ALL {
                for (n1, n2) in [(20, 20), (5, 5), (10, 20), (5, 10)] {
                    out.push(model1(n1, n2, m));
                }
            }
        }
        BenchTable::T1Large => {
            for m in Margin::ALL {
                out.push(model1(2000, 2000, m));
            }
        }
        BenchTable::T2 => {
            for maf in [0.1, 0.2] {
                for n in PAIR_GRID {
                    for m in Margin::ALL {
                        let cols = vec![
                            lad(Statistic::Tw, DesignView::Probability),
                            lad(Statistic::Gs, DesignView::Probability),
                        ];
                        out.push(model2_scenario(n, maf, m, 1.0, [1.0; 3], cols));
                    }
                }
            }
        }
        BenchTable::T3 => {
            for maf in [0.1, 0.2] {
                for n in PAIR_GRID {
                    for m in Margin::ALL {
                        let cols = vec![
                            lad(Statistic::Tw, DesignView::BestGuess),
                            lad(Statistic::Tw, DesignView::Probability),
                            lad(Statistic::Gs, DesignView::BestGuess),
                            lad(Statistic::Gs, DesignView::Probability),
                        ];
                        out.push(model2_scenario(n, maf, m, 0.7, [1.0; 3], cols));
                    }
                }
            }
        }
        BenchTable::T4 => {
            for maf in [0.1, 0.2] {
                for n in PAIR_GRID {
                    for m in Margin::ALL {
                        out.push(model2_scenario(n, maf, m, 0.7, [1.0, 1.5, 2.0], power_columns()));
                    }
                }
            }
        }
        BenchTable::RelativeEfficiency => {
            for (maf, v) in [
                (0.1, [1.0, 1.5, 2.0]),
                (0.1, [2.0, 1.5, 1.0]),
                (0.2, [1.0, 1.5, 2.0]),
                (0.2, [2.0, 1.5, 1.0]),
            ] {
                for a in [1.0, 0.9, 0.8, 0.7, 0.6, 0.5] {
                    out.push(model2_scenario(500, maf, Margin::Gaussian, a, v, power_columns()));
                }
            }
        }
    }
    out
}

/// Best-guess and probability gS_LAD, in that order.
pub fn power_columns() -> Vec<TestColumn> {
    vec![
        lad(Statistic::Gs, DesignView::BestGuess),
        lad(Statistic::Gs, DesignView::Probability),
    ]
}

/// Power of the probability design over the best-guess design.
pub fn relative_efficiency(cell: &CellResult) -> f64 {
    cell.tallies[1].rate() / cell.tallies[0].rate()
}

pub fn run_table(
    table: BenchTable,
    replicates: usize,
    seed: u64,
) -> Result<Vec<CellResult>, SimError> {
    scenarios(table)
        .iter()
        .enumerate()
        .map(|(i, s)| run_cell(s, replicates, seed, i as u32, DEFAULT_ALPHA))
        .collect()
}

/// Tab-separated table: scenario parameters, then rate, standard error and
/// valid-replicate count per test column.
pub fn write_tsv<W: Write>(
    table: BenchTable,
    cells: &[CellResult],
    mut out: W,
) -> io::Result<()> {
    let Some(first) = cells.first() else {
        return Ok(());
    };
    let mut header: Vec<String> = vec!["table".into()];
    header.extend(first.scenario.params.iter().map(|(k, _)| k.to_string()));
    header.push("replicates".into());
    for c in &first.scenario.columns {
        header.push(c.name.clone());
        header.push(format!("{}_se", c.name));
        header.push(format!("{}_n", c.name));
    }
    if table == BenchTable::RelativeEfficiency {
        header.push("relative_efficiency".into());
    }
    writeln!(out, "{}", header.join("\t"))?;
    for cell in cells {
        let mut row: Vec<String> = vec![table.to_string()];
        row.extend(cell.scenario.params.iter().map(|(_, v)| v.clone()));
        row.push(cell.replicates.to_string());
        for t in &cell.tallies {
            row.push(fmt_g(t.rate()));
            row.push(fmt_g(t.std_error()));
            row.push(t.valid.to_string());
        }
        if table == BenchTable::RelativeEfficiency {
            row.push(fmt_g(relative_efficiency(cell)));
        }
        writeln!(out, "{}", row.join("\t"))?;
    }
    Ok(())
}

/// C-style `%.6g`, independent of locale.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if !(-4..6).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_format_matches_printf() {
        let cases = [
            (0.05, "0.05"),
            (0.1234567, "0.123457"),
            (123456.0, "123456"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (1.0, "1"),
            (-2.5, "-2.5"),
            (999999.5, "1e+06"),
            (0.0, "0"),
            (1e300, "1e+300"),
        ];
        for (x, s) in cases {
            assert_eq!(fmt_g(x), s, "{x}");
        }
    }

    #[test]
    fn grids_have_expected_shape() {
        assert_eq!(scenarios(BenchTable::T1).len(), 12);
        assert_eq!(scenarios(BenchTable::T2).len(), 30);
        assert_eq!(scenarios(BenchTable::RelativeEfficiency).len(), 24);
        let names: Vec<String> = scenarios(BenchTable::T3)[0]
            .columns
            .iter()
            .map(|c| c.name.clone())
            .collect();
        assert_eq!(names, ["TW_LAD_BG", "TW_LAD", "gS_LAD_BG", "gS_LAD"]);
        assert_eq!("t1l".parse::<BenchTable>().unwrap(), BenchTable::T1Large);
    }

    #[test]
    fn cell_is_deterministic_and_thread_independent() {
        let s = &scenarios(BenchTable::T1)[1];
        let a = run_cell(s, 40, 5, 1, DEFAULT_ALPHA).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| run_cell(s, 40, 5, 1, DEFAULT_ALPHA).unwrap());
        assert_eq!(a, b);
        assert!(a.tallies.iter().all(|t| t.valid == 40));
        let mut buf = Vec::new();
        write_tsv(BenchTable::T1, &[a], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0].split('\t').count(),
            lines[1].split('\t').count()
        );
        assert!(lines[0].starts_with("table\tmargin\tn1\tn2\treplicates\tLev_OLS\tLev_OLS_se"));
    }
}
