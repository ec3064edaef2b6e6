//! `key = value` simulation configs and data set writers.
//!
//! Model 1 keys: `n1`, `n2`, `rho1`, `rho2`, `sigma` (two comma-separated
//! scales), `margin`, `seed`.
//! Model 2 keys: `n_pairs`, `maf`, `rho`, `sigma` (three scales), `margin`,
//! `a`, `seed`.
//! Blank lines and `#` comments are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gscale_core::simgen::{
    gen_model1, gen_model2, Model1Config, Model2Config, SimulatedSample,
};

use crate::error::CliError;

/// Parsed `key = value` pairs with their line numbers.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    path: PathBuf,
    entries: BTreeMap<String, (u64, String)>,
}

impl KeyValues {
    pub fn parse(path: &Path, text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = (i + 1) as u64;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(CliError::parse(path, Some(line), "expected `key = value`"));
            };
            let key = k.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(CliError::parse(path, Some(line), "empty key"));
            }
            if entries.insert(key.clone(), (line, v.trim().to_string())).is_some() {
                return Err(CliError::parse(path, Some(line), format!("duplicate key `{key}`")));
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(path, &text)
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<(), CliError> {
        for (k, (line, _)) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(CliError::parse(
                    &self.path,
                    Some(*line),
                    format!("unknown key `{k}` (allowed: {})", allowed.join(", ")),
                ));
            }
        }
        Ok(())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        let Some((line, v)) = self.entries.get(key) else {
            return Ok(None);
        };
        v.parse().map(Some).map_err(|_| {
            CliError::parse(&self.path, Some(*line), format!("bad value `{v}` for `{key}`"))
        })
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.get(key)?
            .ok_or_else(|| CliError::parse(&self.path, None, format!("missing key `{key}`")))
    }

    fn list<const N: usize>(&self, key: &str) -> Result<Option<[f64; N]>, CliError> {
        let Some((line, v)) = self.entries.get(key) else {
            return Ok(None);
        };
        let err = || {
            CliError::parse(
                &self.path,
                Some(*line),
                format!("`{key}` needs {N} comma-separated numbers"),
            )
        };
        let vals: Vec<f64> = v
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| err())?;
        vals.try_into().map(Some).map_err(|_| err())
    }
}

pub fn model1_config(kv: &KeyValues) -> Result<Model1Config, CliError> {
    kv.check_keys(&["n1", "n2", "rho1", "rho2", "sigma", "margin", "seed"])?;
    let mut c = Model1Config::new(kv.require("n1")?, kv.require("n2")?);
    if let Some(v) = kv.get("rho1")? {
        c.rho1 = v;
    }
    if let Some(v) = kv.get("rho2")? {
        c.rho2 = v;
    }
    if let Some(v) = kv.list::<2>("sigma")? {
        c.sigma = v;
    }
    if let Some(m) = kv.get::<String>("margin")? {
        c.margin = m.parse().map_err(|e: gscale_core::simgen::SimError| CliError::Config(e.0))?;
    }
    if let Some(s) = kv.get("seed")? {
        c.seed = s;
    }
    c.validate().map_err(|e| CliError::Config(e.0))?;
    Ok(c)
}

pub fn model2_config(kv: &KeyValues) -> Result<Model2Config, CliError> {
    kv.check_keys(&["n_pairs", "maf", "rho", "sigma", "margin", "a", "seed"])?;
    let mut c = Model2Config::new(kv.require("n_pairs")?, kv.require("maf")?);
    if let Some(v) = kv.get("rho")? {
        c.rho = v;
    }
    if let Some(v) = kv.list::<3>("sigma")? {
        c.sigma = v;
    }
    if let Some(m) = kv.get::<String>("margin")? {
        c.margin = m.parse().map_err(|e: gscale_core::simgen::SimError| CliError::Config(e.0))?;
    }
    if let Some(a) = kv.get("a")? {
        c.a = a;
    }
    if let Some(s) = kv.get("seed")? {
        c.seed = s;
    }
    c.validate().map_err(|e| CliError::Config(e.0))?;
    Ok(c)
}

/// Files written by [`write_sample`].
#[derive(Debug, Clone, PartialEq)]
pub struct Written {
    pub pheno: PathBuf,
    pub geno: PathBuf,
    /// True genotypes, when the design is masked.
    pub truth: Option<PathBuf>,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes `<prefix>.pheno.tsv` and `<prefix>.geno.tsv`. With `probabilities`
/// the genotype file has p0, p1, p2 columns and `<prefix>.truth.tsv` holds the
/// generating groups; otherwise it has a `g` column.
pub fn write_sample(
    sample: &SimulatedSample,
    prefix: &Path,
    variant: &str,
    probabilities: bool,
) -> Result<Written, CliError> {
    let id = |i: usize| format!("s{i}");
    let mut pheno = String::from("id\ty\tcluster\n");
    for (i, y) in sample.y.iter().enumerate() {
        let _ = writeln!(pheno, "{}\t{y}\tp{}", id(i), sample.pair_ids[i]);
    }
    let calls = |groups: &[usize]| {
        let mut s = String::from("id\tvariant\tg\n");
        for (i, g) in groups.iter().enumerate() {
            let _ = writeln!(s, "{}\t{variant}\t{g}", id(i));
        }
        s
    };
    let out = Written {
        pheno: with_suffix(prefix, ".pheno.tsv"),
        geno: with_suffix(prefix, ".geno.tsv"),
        truth: probabilities.then(|| with_suffix(prefix, ".truth.tsv")),
    };
    write(&out.pheno, &pheno)?;
    if let Some(t) = &out.truth {
        let mut geno = String::from("id\tvariant\tp0\tp1\tp2\n");
        for (i, p) in sample.probabilities.iter().enumerate() {
            let _ = writeln!(geno, "{}\t{variant}\t{}\t{}\t{}", id(i), p[0], p[1], p[2]);
        }
        write(&out.geno, &geno)?;
        write(t, &calls(&sample.truth))?;
    } else {
        write(&out.geno, &calls(&sample.truth))?;
    }
    Ok(out)
}

pub fn run_simulate(model: u8, config: &Path, prefix: &Path) -> Result<Written, CliError> {
    let kv = KeyValues::read(config)?;
    let sim_err = |e: gscale_core::simgen::SimError| CliError::Config(e.0);
    match model {
        1 => {
            let s = gen_model1(&model1_config(&kv)?).map_err(sim_err)?;
            write_sample(&s, prefix, "zygosity", false)
        }
        2 => {
            let s = gen_model2(&model2_config(&kv)?).map_err(sim_err)?;
            write_sample(&s, prefix, "snp1", true)
        }
        m => Err(CliError::Config(format!("unknown model {m} (expected 1 or 2)"))),
    }
}
