//! Per-variant association scan.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use gscale_core::bench::fmt_g;
use gscale_core::loctest::{gjls_test, gl_test, JointResult};
use gscale_core::regress::Clusters;
use gscale_core::scaletest::{
    gs_test, levene_classic, tw_test, SampleData, Stage1, TestError, TestResult,
};
use gscale_core::simgen::substream;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::CliError;
use crate::io::{self, ClusterKey, GenoFormat, Joined};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Indicator,
    Probability,
    /// Argmax of the probabilities as a hard call.
    BestGuess,
}

impl FromStr for Mode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "indicator" => Ok(Mode::Indicator),
            "prob" | "probability" => Ok(Mode::Probability),
            "best-guess" | "dosage-as-best-guess" => Ok(Mode::BestGuess),
            _ => Err(CliError::Config(format!(
                "unknown mode `{s}` (expected indicator, prob or best-guess)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestName {
    GL,
    GsOls,
    GsLad,
    TwOls,
    TwLad,
    Gjls,
    LevOls,
    LevLad,
}

impl TestName {
    pub const ALL: [TestName; 8] = [
        TestName::GL,
        TestName::GsOls,
        TestName::GsLad,
        TestName::TwOls,
        TestName::TwLad,
        TestName::Gjls,
        TestName::LevOls,
        TestName::LevLad,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            TestName::GL => "gL",
            TestName::GsOls => "gS_OLS",
            TestName::GsLad => "gS_LAD",
            TestName::TwOls => "TW_OLS",
            TestName::TwLad => "TW_LAD",
            TestName::Gjls => "gJLS",
            TestName::LevOls => "Lev_OLS",
            TestName::LevLad => "Lev_LAD",
        }
    }

    fn columns(&self) -> Vec<String> {
        let l = self.label();
        match self {
            TestName::Gjls => vec![format!("{l}_W"), format!("{l}_p"), format!("{l}_boundary")],
            _ => ["stat", "df1", "df2", "rho", "p"]
                .iter()
                .map(|c| format!("{l}_{c}"))
                .collect(),
        }
    }
}

impl fmt::Display for TestName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TestName {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(t) = TestName::ALL.iter().find(|t| t.label().eq_ignore_ascii_case(s)) {
            return Ok(*t);
        }
        match s.to_ascii_lowercase().as_str() {
            "gs" => Ok(TestName::GsLad),
            "tw" => Ok(TestName::TwLad),
            "levene" | "lev" => Ok(TestName::LevOls),
            _ => Err(CliError::Config(format!("unknown test `{s}`"))),
        }
    }
}

pub fn parse_tests(list: &str) -> Result<Vec<TestName>, CliError> {
    let mut out = Vec::new();
    for part in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let t: TestName = part.parse()?;
        if !out.contains(&t) {
            out.push(t);
        }
    }
    if out.is_empty() {
        return Err(CliError::Config("no tests requested".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub pheno: PathBuf,
    pub geno: PathBuf,
    pub mode: Mode,
    pub tests: Vec<TestName>,
    pub cluster: Option<String>,
    pub out: PathBuf,
    pub seed: u64,
    /// Permutation replicates per variant; 0 disables permutation p-values.
    pub permutations: usize,
}

impl ScanConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let tw = self.tests.iter().any(|t| matches!(t, TestName::TwOls | TestName::TwLad));
        if tw && self.cluster.is_none() {
            return Err(CliError::Config("TW needs a cluster column (--cluster)".into()));
        }
        let lev = self.tests.iter().any(|t| matches!(t, TestName::LevOls | TestName::LevLad));
        if lev && self.mode == Mode::Probability {
            return Err(CliError::Config(
                "Levene needs hard groups; use --mode indicator or best-guess".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of one test on one data set.
#[derive(Debug, Clone, PartialEq)]
pub enum Evaluated {
    Single(TestResult),
    Joint(JointResult),
}

impl Evaluated {
    pub fn p_value(&self) -> f64 {
        match self {
            Evaluated::Single(r) => r.p_value,
            Evaluated::Joint(j) => j.p_joint,
        }
    }
}

fn correlated(data: &SampleData) -> SampleData {
    match data.clusters() {
        Some(c) if !c.has_correlation() => data.without_clusters(),
        _ => data.clone(),
    }
}

/// Runs one test. Cluster-free samples and all-singleton clusters are
/// analysed as independent data by the generalized tests; Levene always
/// ignores clusters; TW needs them.
pub fn evaluate(test: TestName, data: &SampleData) -> Result<Evaluated, TestError> {
    use Evaluated::Single;
    Ok(match test {
        TestName::GL => Single(gl_test(&correlated(data))?),
        TestName::GsOls => Single(gs_test(&correlated(data), Stage1::Ols)?),
        TestName::GsLad => Single(gs_test(&correlated(data), Stage1::Lad)?),
        TestName::TwOls => Single(tw_test(data, Stage1::Ols)?),
        TestName::TwLad => Single(tw_test(data, Stage1::Lad)?),
        TestName::Gjls => Evaluated::Joint(gjls_test(&correlated(data), Stage1::Lad)?),
        TestName::LevOls => Single(levene_classic(&data.without_clusters(), Stage1::Ols)?),
        TestName::LevLad => Single(levene_classic(&data.without_clusters(), Stage1::Lad)?),
    })
}

/// Shuffles outcomes among exchangeable units: clusters are moved as blocks
/// among clusters of the same size, and members are shuffled within each
/// block. Without clusters every observation is exchangeable.
pub fn permute_within_strata<R: Rng + ?Sized>(
    y: &[f64],
    clusters: Option<&Clusters>,
    rng: &mut R,
) -> Vec<f64> {
    let Some(c) = clusters else {
        let mut out = y.to_vec();
        out.shuffle(rng);
        return out;
    };
    let mut out = vec![0.0; y.len()];
    let blocks = c.blocks();
    let mut sizes: Vec<usize> = blocks.iter().map(Vec::len).collect();
    sizes.sort_unstable();
    sizes.dedup();
    for m in sizes {
        let same: Vec<&Vec<usize>> = blocks.iter().filter(|b| b.len() == m).collect();
        let mut order: Vec<usize> = (0..same.len()).collect();
        order.shuffle(rng);
        for (dst, &src) in same.iter().zip(&order) {
            let mut vals: Vec<f64> = same[src].iter().map(|&i| y[i]).collect();
            vals.shuffle(rng);
            for (&i, v) in dst.iter().zip(vals) {
                out[i] = v;
            }
        }
    }
    out
}

/// p-values of each test over `n` within-strata permutations of the outcome.
/// Permutation `r` draws from `substream(seed, stream | r)`. A failed test
/// yields NaN for that permutation.
pub fn permutation_pvalues(
    data: &SampleData,
    tests: &[TestName],
    n: usize,
    seed: u64,
    stream: u64,
) -> Vec<Vec<f64>> {
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, stream | r as u64);
            let y = permute_within_strata(data.y(), data.clusters(), &mut rng);
            let perm = data.with_outcome(y).expect("same layout");
            tests
                .iter()
                .map(|&t| evaluate(t, &perm).map_or(f64::NAN, |e| e.p_value()))
                .collect()
        })
        .collect();
    (0..tests.len())
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum VariantStatus {
    Ok,
    Monomorphic,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantReport {
    pub variant: String,
    pub maf: f64,
    pub n_used: usize,
    pub n_missing: usize,
    pub n_pheno_only: usize,
    pub n_geno_only: usize,
    pub k: usize,
    pub n_clusters: Option<usize>,
    pub status: VariantStatus,
    pub results: Vec<Option<Evaluated>>,
    pub errors: Vec<(TestName, TestError)>,
    pub permutation_p: Vec<Option<f64>>,
}

fn best_guess(p: &[f64; 3]) -> [f64; 3] {
    let mut b = 0;
    for j in 1..3 {
        if p[j] > p[b] {
            b = j;
        }
    }
    let mut out = [0.0; 3];
    out[b] = 1.0;
    out
}

/// Minor allele frequency from expected allele counts.
pub fn minor_allele_frequency(rows: &[[f64; 3]]) -> f64 {
    if rows.is_empty() {
        return f64::NAN;
    }
    let f = rows.iter().map(|p| p[1] + 2.0 * p[2]).sum::<f64>() / (2.0 * rows.len() as f64);
    f.min(1.0 - f)
}

pub fn sample_from_joined(joined: &Joined, mode: Mode) -> Result<SampleData, TestError> {
    let rows: Vec<Vec<f64>> = joined
        .probabilities
        .iter()
        .map(|p| match mode {
            Mode::BestGuess => best_guess(p).to_vec(),
            _ => p.to_vec(),
        })
        .collect();
    let labels: Vec<String> = ["0", "1", "2"].iter().map(|s| s.to_string()).collect();
    let clusters = joined.clusters.as_ref().map(|c| Clusters::from_labels::<ClusterKey>(c));
    SampleData::from_probabilities(joined.y.clone(), &rows, &labels, clusters)
}

pub fn analyze(
    joined: &Joined,
    cfg: &ScanConfig,
    variant_index: usize,
) -> VariantReport {
    let ntest = cfg.tests.len();
    let mut report = VariantReport {
        variant: joined.variant.clone(),
        maf: minor_allele_frequency(&joined.probabilities),
        n_used: joined.y.len(),
        n_missing: joined.n_missing,
        n_pheno_only: joined.n_pheno_only,
        n_geno_only: joined.n_geno_only,
        k: 0,
        n_clusters: None,
        status: VariantStatus::Ok,
        results: vec![None; ntest],
        errors: Vec::new(),
        permutation_p: vec![None; ntest],
    };
    let data = match sample_from_joined(joined, cfg.mode) {
        Ok(d) => d,
        Err(TestError::Monomorphic { observed }) => {
            report.k = observed;
            report.status = VariantStatus::Monomorphic;
            return report;
        }
        Err(e) => {
            report.status = VariantStatus::Failed(e.to_string());
            return report;
        }
    };
    report.k = data.k();
    report.n_clusters = data.clusters().map(Clusters::n_clusters);
    for (j, &t) in cfg.tests.iter().enumerate() {
        match evaluate(t, &data) {
            Ok(r) => report.results[j] = Some(r),
            Err(e) => report.errors.push((t, e)),
        }
    }
    if cfg.permutations > 0 {
        let perms = permutation_pvalues(
            &data,
            &cfg.tests,
            cfg.permutations,
            cfg.seed,
            (variant_index as u64) << 32,
        );
        for (j, ps) in perms.iter().enumerate() {
            if let Some(obs) = report.results[j].as_ref().map(Evaluated::p_value) {
                let hits = ps.iter().filter(|&&p| p <= obs).count();
                report.permutation_p[j] = Some((1 + hits) as f64 / (1 + ps.len()) as f64);
            }
        }
    }
    report
}

pub fn header(cfg: &ScanConfig) -> Vec<String> {
    let mut h: Vec<String> = [
        "variant", "status", "maf", "n_used", "n_missing", "n_pheno_only", "n_geno_only", "k",
        "n_clusters",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for t in &cfg.tests {
        h.extend(t.columns());
        if cfg.permutations > 0 {
            h.push(format!("{}_perm_p", t.label()));
        }
    }
    h
}

const NA: &str = "NA";

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| NA.to_string(), fmt_g)
}

pub fn row(report: &VariantReport, cfg: &ScanConfig) -> Vec<String> {
    let status = match &report.status {
        VariantStatus::Ok if report.errors.is_empty() => "ok".to_string(),
        VariantStatus::Ok => {
            let failed: Vec<&str> = report.errors.iter().map(|(t, _)| t.label()).collect();
            format!("failed:{}", failed.join(","))
        }
        VariantStatus::Monomorphic => "skipped:monomorphic".to_string(),
        VariantStatus::Failed(_) => "failed:data".to_string(),
    };
    let mut r = vec![
        report.variant.clone(),
        status,
        fmt_g(report.maf),
        report.n_used.to_string(),
        report.n_missing.to_string(),
        report.n_pheno_only.to_string(),
        report.n_geno_only.to_string(),
        report.k.to_string(),
        report.n_clusters.map_or_else(|| NA.to_string(), |c| c.to_string()),
    ];
    for (j, t) in cfg.tests.iter().enumerate() {
        match &report.results[j] {
            Some(Evaluated::Single(res)) => {
                r.push(fmt_g(res.statistic));
                r.push(fmt_g(res.df1));
                r.push(opt(res.df2));
                r.push(opt(res.rho_hat));
                r.push(fmt_g(res.p_value));
            }
            Some(Evaluated::Joint(jr)) => {
                r.push(fmt_g(jr.w_f));
                r.push(fmt_g(jr.p_joint));
                r.push(u8::from(jr.boundary).to_string());
            }
            None => r.extend(std::iter::repeat(NA.to_string()).take(t.columns().len())),
        }
        if cfg.permutations > 0 {
            r.push(opt(report.permutation_p[j]));
        }
    }
    r
}

/// Summary of a finished scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanSummary {
    pub variants: usize,
    pub skipped: usize,
    pub failed_tests: usize,
    pub n_pheno: usize,
    pub first_failure: Option<String>,
}

pub fn run_scan(cfg: &ScanConfig) -> Result<ScanSummary, CliError> {
    cfg.validate()?;
    let pheno = io::read_phenotypes(&cfg.pheno, cfg.cluster.as_deref())?;
    let geno = io::read_genotypes(&cfg.geno)?;
    if geno.format == GenoFormat::Probability && cfg.mode == Mode::Indicator {
        return Err(CliError::Config(
            "genotype file holds probabilities; use --mode prob or best-guess".into(),
        ));
    }
    let reports: Vec<VariantReport> = geno
        .variants
        .par_iter()
        .enumerate()
        .map(|(i, v)| analyze(&io::join(&pheno, v), cfg, i))
        .collect();
    let file = std::fs::File::create(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e| CliError::io(&cfg.out, e);
    writeln!(w, "{}", header(cfg).join("\t")).map_err(io_err)?;
    for r in &reports {
        writeln!(w, "{}", row(r, cfg).join("\t")).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(ScanSummary {
        variants: reports.len(),
        skipped: reports
            .iter()
            .filter(|r| r.status != VariantStatus::Ok)
            .count(),
        failed_tests: reports.iter().map(|r| r.errors.len()).sum(),
        n_pheno: pheno.len(),
        first_failure: first_failure(&reports),
    })
}

/// First per-test numerical failure, if any, as a reportable error.
pub fn first_failure(reports: &[VariantReport]) -> Option<String> {
    reports.iter().find_map(|r| {
        r.errors
            .first()
            .map(|(t, e)| format!("variant {} test {}: {e}", r.variant, t.label()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_names_and_aliases() {
        let t = parse_tests("gL, gS_LAD,gJLS,TW,levene,gS_LAD").unwrap();
        assert_eq!(
            t,
            [TestName::GL, TestName::GsLad, TestName::Gjls, TestName::TwLad, TestName::LevOls]
        );
        assert!(parse_tests("gX").is_err());
        assert!(parse_tests(" , ").is_err());
    }

    #[test]
    fn permutation_preserves_strata() {
        let labels = [0, 0, 1, 2, 2, 3, 4, 4, 5];
        let c = Clusters::from_labels(&labels);
        let y: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let mut rng = substream(1, 0);
        for _ in 0..50 {
            let p = permute_within_strata(&y, Some(&c), &mut rng);
            let mut sorted = p.clone();
            sorted.sort_by(f64::total_cmp);
            assert_eq!(sorted, y);
            // singletons 2, 5, 8 only receive singleton values
            for i in [2, 5, 8] {
                assert!([2.0, 5.0, 8.0].contains(&p[i]));
            }
            // pair members stay together
            for b in c.blocks().iter().filter(|b| b.len() == 2) {
                let (a, b) = (p[b[0]], p[b[1]]);
                let lo = a.min(b);
                assert!([0.0, 3.0, 6.0].contains(&lo) && (a - b).abs() == 1.0);
            }
        }
    }

    #[test]
    fn maf_from_rows() {
        let rows = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]];
        assert!((minor_allele_frequency(&rows) - 3.0 / 8.0).abs() < 1e-15);
        let flipped: Vec<[f64; 3]> = rows.iter().map(|r| [r[2], r[1], r[0]]).collect();
        assert!((minor_allele_frequency(&flipped) - 3.0 / 8.0).abs() < 1e-15);
    }
}
