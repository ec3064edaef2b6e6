use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gscale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gscale"))
        .args(args)
        .output()
        .expect("run gscale")
}

fn gscale_env(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gscale"))
        .args(args)
        .env("GSCALE_THREADS", threads)
        .output()
        .expect("run gscale")
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn table(path: &str) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

fn col(rows: &[Vec<String>], name: &str) -> usize {
    rows[0].iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn simulate(dir: &Path, model: &str, cfg: &str, prefix: &str) -> PathBuf {
    let c = write(dir, &format!("{prefix}.cfg"), cfg);
    let out = dir.join(prefix);
    let o = gscale(&["simulate", "--model", model, "--config", &c, "--out-prefix", &out.display().to_string()]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "n1 = 30\nn2 = 25\nmargin = chisq4\nseed = 17\n";
    let a = simulate(dir.path(), "1", cfg, "a");
    let b = simulate(dir.path(), "1", cfg, "b");
    for suffix in [".pheno.tsv", ".geno.tsv"] {
        let x = fs::read(format!("{}{suffix}", a.display())).unwrap();
        let y = fs::read(format!("{}{suffix}", b.display())).unwrap();
        assert_eq!(x, y, "{suffix}");
    }
    let rows = table(&format!("{}.pheno.tsv", a.display()));
    assert_eq!(rows[0], ["id", "y", "cluster"]);
    assert_eq!(rows.len(), 1 + 110);
}

#[test]
fn model2_unmasked_is_one_hot_and_maf_matches() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), "2", "n_pairs = 5000\nmaf = 0.2\na = 1\nseed = 3\n", "m2");
    let rows = table(&format!("{}.geno.tsv", out.display()));
    assert_eq!(rows[0], ["id", "variant", "p0", "p1", "p2"]);
    let mut alleles = 0.0;
    for r in &rows[1..] {
        let v: Vec<f64> = r[2..].iter().map(|s| s.parse().unwrap()).collect();
        assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 1);
        assert_eq!(v.iter().filter(|&&x| x == 0.0).count(), 2);
        alleles += v[1] + 2.0 * v[2];
    }
    let maf = alleles / (2.0 * (rows.len() - 1) as f64);
    assert!((maf - 0.2).abs() < 0.01, "{maf}");
}

#[test]
fn one_hot_probabilities_match_indicator_calls() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), "2", "n_pairs = 120\nmaf = 0.3\nseed = 8\n", "s");
    let pre = out.display().to_string();
    let tests = "gL,gS_OLS,gS_LAD,TW_LAD,gJLS";
    let run = |geno: String, mode: &str, name: &str| {
        let dst = p(dir.path(), name);
        let o = gscale(&[
            "test", "--pheno", &format!("{pre}.pheno.tsv"), "--geno", &geno, "--mode", mode,
            "--tests", tests, "--cluster", "cluster", "--out", &dst,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read_to_string(dst).unwrap()
    };
    let prob = run(format!("{pre}.geno.tsv"), "prob", "prob.tsv");
    let ind = run(format!("{pre}.truth.tsv"), "indicator", "ind.tsv");
    assert_eq!(prob, ind);
    let rows: Vec<&str> = prob.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("snp1\tok\t"));
}

#[test]
fn levene_columns_equal_gs_without_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let mut pheno = String::from("id\ty\n");
    let mut geno = String::from("id\tvariant\tg\n");
    for i in 0..60 {
        let y = ((i * 37 % 23) as f64 - 11.0) * (1.0 + (i % 3) as f64 * 0.4);
        pheno.push_str(&format!("i{i}\t{y}\n"));
        geno.push_str(&format!("i{i}\tv1\t{}\n", i % 3));
        geno.push_str(&format!("i{i}\tv2\t{}\n", (i / 7) % 3));
    }
    let ph = write(dir.path(), "p.tsv", &pheno);
    let ge = write(dir.path(), "g.tsv", &geno);
    let out = p(dir.path(), "o.tsv");
    let o = gscale(&[
        "test", "--pheno", &ph, "--geno", &ge, "--tests", "gS_OLS,gS_LAD,Lev_OLS,Lev_LAD",
        "--out", &out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = table(&out);
    assert_eq!(rows.len(), 3);
    for r in &rows[1..] {
        for (gs, lev) in [("gS_OLS", "Lev_OLS"), ("gS_LAD", "Lev_LAD")] {
            for field in ["stat", "p", "df1", "df2"] {
                let a: f64 = r[col(&rows, &format!("{gs}_{field}"))].parse().unwrap();
                let b: f64 = r[col(&rows, &format!("{lev}_{field}"))].parse().unwrap();
                assert!((a - b).abs() <= 1e-5 * a.abs().max(1e-300), "{gs} {field}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn monomorphic_variant_is_skipped_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let ph = write(dir.path(), "p.tsv", "id\ty\na\t1\nb\t2\nc\t3\nd\t5\ne\tNA\n");
    let ge = write(
        dir.path(),
        "g.tsv",
        "id\tvariant\tg\na\tmono\t1\nb\tmono\t1\nc\tmono\t1\nd\tmono\t1\na\tpoly\t0\nb\tpoly\t0\nc\tpoly\t2\nd\tpoly\t2\ne\tpoly\t2\nz\tpoly\t0\n",
    );
    let out = p(dir.path(), "o.tsv");
    let o = gscale(&["test", "--pheno", &ph, "--geno", &ge, "--tests", "gS_LAD,gL", "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = table(&out);
    assert_eq!(rows[1][0], "mono");
    assert_eq!(rows[1][1], "skipped:monomorphic");
    assert_eq!(rows[1][col(&rows, "gS_LAD_p")], "NA");
    assert_eq!(rows[2][1], "ok");
    // e has NA outcome, z is not phenotyped
    assert_eq!(rows[2][col(&rows, "n_used")], "4");
    assert_eq!(rows[2][col(&rows, "n_missing")], "1");
    assert_eq!(rows[2][col(&rows, "n_geno_only")], "1");
    assert_eq!(rows[1][col(&rows, "n_pheno_only")], "1");
}

#[test]
fn errors_are_single_line_records_with_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ph = write(dir.path(), "p.tsv", "id\ty\tfam\na\t1\tf\nb\tx2\tf\n");
    let ge = write(dir.path(), "g.tsv", "id\tvariant\tg\na\tv\t0\nb\tv\t1\n");
    let out = p(dir.path(), "o.tsv");
    let o = gscale(&["test", "--pheno", &ph, "--geno", &ge, "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert_eq!(e.lines().count(), 1, "{e}");
    assert!(e.contains("kind=parse") && e.contains("line=3"), "{e}");

    let o = gscale(&["test", "--pheno", &ph, "--geno", &ge, "--tests", "TW", "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kind=config"));

    let o = gscale(&["bench", "--table", "T1", "--replicates", "10", "--out", &out]);
    assert_eq!(o.status.code(), Some(2));

    let o = gscale(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).lines().count(), 1);

    // one cluster for two groups: the sandwich has no rank
    let ph = write(dir.path(), "p2.tsv", "id\ty\tfam\na\t1\tf\nb\t2\tf\nc\t4\tf\nd\t3\tf\n");
    let ge = write(dir.path(), "g2.tsv", "id\tvariant\tg\na\tv\t0\nb\tv\t0\nc\tv\t1\nd\tv\t1\n");
    let o = gscale(&[
        "test", "--pheno", &ph, "--geno", &ge, "--tests", "TW_LAD", "--cluster", "fam", "--out", &out,
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("kind=numerical"));
    assert!(fs::read_to_string(&out).unwrap().contains("failed:TW_LAD"));
}

#[test]
fn bench_and_permutations_are_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = p(dir.path(), "a.tsv");
    let b = p(dir.path(), "b.tsv");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = gscale_env(
            &["bench", "--table", "T1", "--replicates", "100", "--seed", "4", "--out", out],
            threads,
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(table(&a).len(), 13);

    let sim = simulate(dir.path(), "2", "n_pairs = 60\nmaf = 0.3\na = 0.8\nseed = 2\n", "s");
    let pre = sim.display().to_string();
    let mut outs = Vec::new();
    for threads in ["1", "2"] {
        let out = p(dir.path(), &format!("perm{threads}.tsv"));
        let o = gscale_env(
            &[
                "test", "--pheno", &format!("{pre}.pheno.tsv"), "--geno", &format!("{pre}.geno.tsv"),
                "--mode", "prob", "--tests", "gS_LAD,gL", "--cluster", "cluster", "--out", &out,
                "--seed", "5", "--permutations", "200",
            ],
            threads,
        );
        assert!(o.status.success(), "{}", stderr(&o));
        outs.push(fs::read_to_string(&out).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
    let rows: Vec<Vec<String>> = outs[0]
        .lines()
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect();
    let pp: f64 = rows[1][col(&rows, "gS_LAD_perm_p")].parse().unwrap();
    assert!(pp > 0.0 && pp <= 1.0);
}
