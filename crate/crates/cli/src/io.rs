//! Phenotype and genotype TSV readers.
//!
//! Phenotypes: header with `id` and `y`, optionally a cluster column; other
//! columns are ignored. A blank cluster makes the row its own cluster.
//!
//! Genotypes, one row per (id, variant): `id variant p0 p1 p2` or
//! `id variant g` with `g` in {0, 1, 2}. `NA` marks a missing value.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim};

use crate::error::CliError;

pub const MISSING: &str = "NA";

/// Cluster membership; blank labels never share a cluster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ClusterKey {
    Named(String),
    Singleton(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phenotypes {
    pub ids: Vec<String>,
    pub y: Vec<Option<f64>>,
    pub clusters: Option<Vec<ClusterKey>>,
}

impl Phenotypes {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GenoValue {
    Probabilities([f64; 3]),
    Call(u8),
}

impl GenoValue {
    /// Membership probabilities; calls become one-hot rows.
    pub fn probabilities(&self) -> [f64; 3] {
        match *self {
            GenoValue::Probabilities(p) => p,
            GenoValue::Call(g) => {
                let mut p = [0.0; 3];
                p[g as usize] = 1.0;
                p
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenoFormat {
    Probability,
    Indicator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub values: HashMap<String, Option<GenoValue>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Genotypes {
    pub format: GenoFormat,
    /// In order of first appearance.
    pub variants: Vec<Variant>,
}

fn open(path: &Path) -> Result<csv::Reader<File>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(ReaderBuilder::new()
        .delimiter(b'\t')
        .trim(Trim::All)
        .comment(Some(b'#'))
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => CliError::parse(
            path,
            line,
            format!("expected {expected_len} fields, found {len}"),
        ),
        csv::ErrorKind::Utf8 { err, .. } => CliError::parse(path, line, err.to_string()),
        other => CliError::parse(path, line, format!("{other:?}")),
    }
}

fn headers(path: &Path, rdr: &mut csv::Reader<File>) -> Result<StringRecord, CliError> {
    let h = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if h.is_empty() || (h.len() == 1 && h[0].is_empty()) {
        return Err(CliError::parse(path, Some(1), "missing header"));
    }
    Ok(h)
}

fn column(path: &Path, h: &StringRecord, name: &str) -> Result<usize, CliError> {
    h.iter()
        .position(|c| c == name)
        .ok_or_else(|| CliError::parse(path, Some(1), format!("no `{name}` column in header")))
}

fn line_of(rec: &StringRecord) -> Option<u64> {
    rec.position().map(|p| p.line())
}

fn parse_real(path: &Path, rec: &StringRecord, idx: usize, what: &str) -> Result<Option<f64>, CliError> {
    let raw = &rec[idx];
    if raw == MISSING {
        return Ok(None);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(CliError::parse(
            path,
            line_of(rec),
            format!("{what} `{raw}` is not a finite number or {MISSING}"),
        )),
    }
}

pub fn read_phenotypes(path: &Path, cluster_column: Option<&str>) -> Result<Phenotypes, CliError> {
    let mut rdr = open(path)?;
    let h = headers(path, &mut rdr)?;
    let id_col = column(path, &h, "id")?;
    let y_col = column(path, &h, "y")?;
    let cl_col = cluster_column.map(|c| column(path, &h, c)).transpose()?;
    let mut out = Phenotypes {
        ids: Vec::new(),
        y: Vec::new(),
        clusters: cl_col.map(|_| Vec::new()),
    };
    let mut seen = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let id = rec[id_col].to_string();
        if id.is_empty() {
            return Err(CliError::parse(path, line_of(&rec), "empty id"));
        }
        if let Some(prev) = seen.insert(id.clone(), line_of(&rec)) {
            return Err(CliError::parse(
                path,
                line_of(&rec),
                format!("duplicate id `{id}` (first on line {})", prev.unwrap_or(0)),
            ));
        }
        out.y.push(parse_real(path, &rec, y_col, "y")?);
        if let (Some(c), Some(list)) = (cl_col, out.clusters.as_mut()) {
            let label = &rec[c];
            list.push(if label.is_empty() || label == MISSING {
                ClusterKey::Singleton(out.ids.len())
            } else {
                ClusterKey::Named(label.to_string())
            });
        }
        out.ids.push(id);
    }
    Ok(out)
}

pub fn read_genotypes(path: &Path) -> Result<Genotypes, CliError> {
    let mut rdr = open(path)?;
    let h = headers(path, &mut rdr)?;
    let id_col = column(path, &h, "id")?;
    let var_col = column(path, &h, "variant")?;
    let has = |n: &str| h.iter().any(|c| c == n);
    let format = match (has("p0") && has("p1") && has("p2"), has("g")) {
        (true, false) => GenoFormat::Probability,
        (false, true) => GenoFormat::Indicator,
        (true, true) => {
            return Err(CliError::parse(path, Some(1), "header has both `g` and p0/p1/p2 columns"))
        }
        (false, false) => {
            return Err(CliError::parse(path, Some(1), "header needs `g` or p0, p1, p2 columns"))
        }
    };
    let value_cols: Vec<usize> = match format {
        GenoFormat::Probability => ["p0", "p1", "p2"]
            .iter()
            .map(|c| column(path, &h, c))
            .collect::<Result<_, _>>()?,
        GenoFormat::Indicator => vec![column(path, &h, "g")?],
    };
    let mut variants: Vec<Variant> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = line_of(&rec);
        let id = rec[id_col].to_string();
        let name = rec[var_col].to_string();
        if id.is_empty() || name.is_empty() {
            return Err(CliError::parse(path, line, "empty id or variant"));
        }
        let value = match format {
            GenoFormat::Indicator => match &rec[value_cols[0]] {
                MISSING => None,
                "0" => Some(GenoValue::Call(0)),
                "1" => Some(GenoValue::Call(1)),
                "2" => Some(GenoValue::Call(2)),
                other => {
                    return Err(CliError::parse(
                        path,
                        line,
                        format!("genotype `{other}` is not 0, 1, 2 or {MISSING}"),
                    ))
                }
            },
            GenoFormat::Probability => {
                let vals: Vec<Option<f64>> = value_cols
                    .iter()
                    .map(|&c| parse_real(path, &rec, c, "probability"))
                    .collect::<Result<_, _>>()?;
                match (vals[0], vals[1], vals[2]) {
                    (Some(a), Some(b), Some(c)) => {
                        let p = [a, b, c];
                        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                            return Err(CliError::parse(path, line, "probability outside [0, 1]"));
                        }
                        if (a + b + c - 1.0).abs() > 1e-6 {
                            return Err(CliError::parse(
                                path,
                                line,
                                format!("probabilities sum to {}", a + b + c),
                            ));
                        }
                        Some(GenoValue::Probabilities(p))
                    }
                    (None, None, None) => None,
                    _ => {
                        return Err(CliError::parse(
                            path,
                            line,
                            format!("partially missing probabilities; use {MISSING} in all three"),
                        ))
                    }
                }
            }
        };
        let v = *index.entry(name.clone()).or_insert_with(|| {
            variants.push(Variant {
                name: name.clone(),
                values: HashMap::new(),
            });
            variants.len() - 1
        });
        if variants[v].values.insert(id.clone(), value).is_some() {
            return Err(CliError::parse(
                path,
                line,
                format!("duplicate genotype for id `{id}` at variant `{name}`"),
            ));
        }
    }
    Ok(Genotypes { format, variants })
}

/// One variant joined to the phenotypes, in phenotype file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Joined {
    pub variant: String,
    pub y: Vec<f64>,
    pub probabilities: Vec<[f64; 3]>,
    pub clusters: Option<Vec<ClusterKey>>,
    /// Matched ids dropped for a missing outcome or genotype.
    pub n_missing: usize,
    /// Phenotype ids without a genotype row for this variant.
    pub n_pheno_only: usize,
    /// Genotyped ids absent from the phenotype file.
    pub n_geno_only: usize,
}

/// Inner join on id.
pub fn join(pheno: &Phenotypes, variant: &Variant) -> Joined {
    let mut out = Joined {
        variant: variant.name.clone(),
        y: Vec::new(),
        probabilities: Vec::new(),
        clusters: pheno.clusters.as_ref().map(|_| Vec::new()),
        n_missing: 0,
        n_pheno_only: 0,
        n_geno_only: 0,
    };
    let mut matched = 0;
    for (i, id) in pheno.ids.iter().enumerate() {
        let Some(g) = variant.values.get(id) else {
            out.n_pheno_only += 1;
            continue;
        };
        matched += 1;
        match (pheno.y[i], g) {
            (Some(y), Some(g)) => {
                out.y.push(y);
                out.probabilities.push(g.probabilities());
                if let (Some(dst), Some(src)) = (out.clusters.as_mut(), pheno.clusters.as_ref()) {
                    dst.push(src[i].clone());
                }
            }
            _ => out.n_missing += 1,
        }
    }
    out.n_geno_only = variant.values.len() - matched;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn phenotypes_with_blank_clusters_and_na() {
        let f = file("id\ty\tfam\n a\t1.5\tf1\nb\tNA\t\nc\t-2\tf1\n");
        let p = read_phenotypes(f.path(), Some("fam")).unwrap();
        assert_eq!(p.ids, ["a", "b", "c"]);
        assert_eq!(p.y, [Some(1.5), None, Some(-2.0)]);
        let c = p.clusters.unwrap();
        assert_eq!(c[0], c[2]);
        assert_eq!(c[1], ClusterKey::Singleton(1));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let f = file("id\ty\na\t1\nb\tabc\n");
        match read_phenotypes(f.path(), None) {
            Err(CliError::Parse { line: Some(3), .. }) => {}
            other => panic!("{other:?}"),
        }
        let f = file("id\tvariant\tg\na\ts1\t0\nb\ts1\t3\n");
        match read_genotypes(f.path()) {
            Err(CliError::Parse { line: Some(3), msg, .. }) => assert!(msg.contains('3')),
            other => panic!("{other:?}"),
        }
        let f = file("id\ty\na\t1\t7\n");
        assert!(matches!(read_phenotypes(f.path(), None), Err(CliError::Parse { line: Some(2), .. })));
        let f = file("id\ty\n");
        assert!(matches!(read_phenotypes(f.path(), Some("fam")), Err(CliError::Parse { .. })));
    }

    #[test]
    fn join_counts_everything() {
        let p = file("id\ty\na\t1\nb\t2\nc\tNA\nd\t4\n");
        let g = file("id\tvariant\tp0\tp1\tp2\na\tv\t1\t0\t0\nc\tv\t0.2\t0.5\t0.3\nd\tv\tNA\tNA\tNA\nz\tv\t0\t0\t1\n");
        let pheno = read_phenotypes(p.path(), None).unwrap();
        let geno = read_genotypes(g.path()).unwrap();
        assert_eq!(geno.format, GenoFormat::Probability);
        let j = join(&pheno, &geno.variants[0]);
        assert_eq!(j.y, [1.0]);
        assert_eq!((j.n_missing, j.n_pheno_only, j.n_geno_only), (2, 1, 1));
    }

    #[test]
    fn rejects_bad_probabilities() {
        let g = file("id\tvariant\tp0\tp1\tp2\na\tv\t0.5\t0.4\t0.3\n");
        assert!(read_genotypes(g.path()).is_err());
        let g = file("id\tvariant\tp0\tp1\tp2\na\tv\t0.5\tNA\t0.5\n");
        assert!(read_genotypes(g.path()).is_err());
    }
}
