//! Simulation models.
//!
//! Model 1: MZ and DZ twin pairs, bivariate normal within pair, transformed to
//! a Gaussian, t_4 or chi^2_4 margin and scaled by the zygosity group.
//!
//! Model 2: sib pairs with IBD-based genotypes, the same outcome construction
//! scaled by each sib's true genotype, and genotypes observed through a
//! Dirichlet uncertainty mask.
//!
//! All randomness comes from ChaCha8 streams; see [`substream`].

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use thiserror::Error;

use crate::dist::{self, DistSpec};
use crate::regress::Clusters;
use crate::scaletest::{SampleData, TestError};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid simulation config: {0}")]
pub struct SimError(pub String);

/// Independent generator for `(seed, stream)`: the ChaCha8 key comes from
/// `seed` and `stream` selects the 64-bit stream id, so streams never overlap.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Margin {
    Gaussian,
    T4,
    ChiSq4,
}

impl Margin {
    pub const ALL: [Margin; 3] = [Margin::Gaussian, Margin::T4, Margin::ChiSq4];

    /// Maps a standard normal draw to this margin through its quantile function.
    pub fn transform(&self, w: f64) -> f64 {
        let spec = match self {
            Margin::Gaussian => return w,
            Margin::T4 => DistSpec::StudentT(4.0),
            Margin::ChiSq4 => DistSpec::ChiSquare(4.0),
        };
        // work on the smaller tail so large |w| keep their precision
        let r = if w <= 0.0 {
            dist::quantile(spec, normal_cdf(w))
        } else {
            dist::quantile_upper(spec, normal_cdf(-w))
        };
        r.expect("margin quantile")
    }
}

fn normal_cdf(w: f64) -> f64 {
    dist::cdf(DistSpec::Normal, w).expect("normal cdf")
}

impl fmt::Display for Margin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Margin::Gaussian => "gaussian",
            Margin::T4 => "t4",
            Margin::ChiSq4 => "chisq4",
        })
    }
}

impl FromStr for Margin {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Margin::Gaussian),
            "t4" => Ok(Margin::T4),
            "chisq4" | "chi2_4" | "chisq" => Ok(Margin::ChiSq4),
            other => Err(SimError(format!("unknown margin `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model1Config {
    /// MZ pairs (group 0).
    pub n1: usize,
    /// DZ pairs (group 1).
    pub n2: usize,
    pub rho1: f64,
    pub rho2: f64,
    pub sigma: [f64; 2],
    pub margin: Margin,
    pub seed: u64,
}

impl Model1Config {
    pub fn new(n1: usize, n2: usize) -> Self {
        Self {
            n1,
            n2,
            rho1: 0.75,
            rho2: 0.5,
            sigma: [1.0, 1.0],
            margin: Margin::Gaussian,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n1 + self.n2 == 0 {
            return Err(SimError("need at least one pair".into()));
        }
        check_sigma(&self.sigma)?;
        check_rho(self.rho1)?;
        check_rho(self.rho2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model2Config {
    pub n_pairs: usize,
    /// Minor allele frequency.
    pub maf: f64,
    pub rho: f64,
    /// Outcome scale for true genotypes 0, 1, 2.
    pub sigma: [f64; 3],
    pub margin: Margin,
    /// Dirichlet concentration on the true genotype; 1 means no uncertainty.
    pub a: f64,
    pub seed: u64,
}

impl Model2Config {
    pub fn new(n_pairs: usize, maf: f64) -> Self {
        Self {
            n_pairs,
            maf,
            rho: 0.5,
            sigma: [1.0; 3],
            margin: Margin::Gaussian,
            a: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_pairs == 0 {
            return Err(SimError("need at least one pair".into()));
        }
        if !(self.maf > 0.0 && self.maf <= 0.5) {
            return Err(SimError(format!("maf {} outside (0, 0.5]", self.maf)));
        }
        if !(0.5..=1.0).contains(&self.a) {
            return Err(SimError(format!("a = {} outside [0.5, 1]", self.a)));
        }
        check_sigma(&self.sigma)?;
        check_rho(self.rho)
    }
}

fn check_sigma(sigma: &[f64]) -> Result<(), SimError> {
    match sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        Some(s) => Err(SimError(format!("sigma {s} must be positive"))),
        None => Ok(()),
    }
}

fn check_rho(rho: f64) -> Result<(), SimError> {
    if rho > -1.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(SimError(format!("rho {rho} outside (-1, 1)")))
    }
}

/// Which group assignment to expose as the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignView {
    /// Masked membership probabilities.
    Probability,
    /// Argmax of the masked probabilities.
    BestGuess,
    /// The generating groups.
    Truth,
}

/// Generated data set. Observation `2p` and `2p + 1` form pair `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSample {
    pub y: Vec<f64>,
    pub pair_ids: Vec<usize>,
    /// Generating group (zygosity or genotype).
    pub truth: Vec<usize>,
    /// Membership probabilities over `k` groups; one-hot when unmasked.
    pub probabilities: Vec<Vec<f64>>,
    pub best_guess: Vec<usize>,
    pub k: usize,
}

impl SimulatedSample {
    pub fn clusters(&self) -> Clusters {
        Clusters::from_labels(&self.pair_ids)
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.k).map(|j| j.to_string()).collect()
    }

    /// Analysis data; unobserved groups are dropped, which fails only when
    /// fewer than two groups remain.
    pub fn sample_data(&self, view: DesignView, clustered: bool) -> Result<SampleData, TestError> {
        let clusters = clustered.then(|| self.clusters());
        let y = self.y.clone();
        match view {
            DesignView::Probability => {
                SampleData::from_probabilities(y, &self.probabilities, &self.labels(), clusters)
            }
            DesignView::BestGuess => SampleData::from_groups(y, &self.best_guess, self.k, clusters),
            DesignView::Truth => SampleData::from_groups(y, &self.truth, self.k, clusters),
        }
    }
}

fn bvn_pair<R: Rng + ?Sized>(rng: &mut R, rho: f64) -> (f64, f64) {
    let z1: f64 = StandardNormal.sample(rng);
    let z2: f64 = StandardNormal.sample(rng);
    (z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2)
}

pub fn gen_model1(cfg: &Model1Config) -> Result<SimulatedSample, SimError> {
    gen_model1_with(cfg, &mut substream(cfg.seed, 0))
}

/// Model 1 drawing from a caller-supplied generator (`cfg.seed` is ignored).
pub fn gen_model1_with<R: Rng + ?Sized>(
    cfg: &Model1Config,
    rng: &mut R,
) -> Result<SimulatedSample, SimError> {
    cfg.validate()?;
    let pairs = cfg.n1 + cfg.n2;
    let mut s = SimulatedSample {
        y: Vec::with_capacity(2 * pairs),
        pair_ids: Vec::with_capacity(2 * pairs),
        truth: Vec::with_capacity(2 * pairs),
        probabilities: Vec::with_capacity(2 * pairs),
        best_guess: Vec::with_capacity(2 * pairs),
        k: 2,
    };
    for p in 0..pairs {
        let g = usize::from(p >= cfg.n1);
        let rho = [cfg.rho1, cfg.rho2][g];
        let (wa, wb) = bvn_pair(rng, rho);
        for w in [wa, wb] {
            s.y.push(cfg.sigma[g] * cfg.margin.transform(w));
            s.pair_ids.push(p);
            s.truth.push(g);
            s.best_guess.push(g);
            s.probabilities.push(one_hot(g, 2));
        }
    }
    Ok(s)
}

fn one_hot(g: usize, k: usize) -> Vec<f64> {
    (0..k).map(|j| if j == g { 1.0 } else { 0.0 }).collect()
}

pub fn gen_sib_genotypes(n_pairs: usize, q: f64, seed: u64) -> Vec<(u8, u8)> {
    sib_genotypes_with(n_pairs, q, &mut substream(seed, 0))
}

/// Sib-pair minor-allele counts. Each pair draws its IBD count D from
/// (0.25, 0.5, 0.25); shared alleles are drawn once, the rest independently.
pub fn sib_genotypes_with<R: Rng + ?Sized>(n_pairs: usize, q: f64, rng: &mut R) -> Vec<(u8, u8)> {
    let allele = |rng: &mut R| u8::from(rng.gen_bool(q));
    (0..n_pairs)
        .map(|_| {
            let u: f64 = rng.gen();
            if u < 0.25 {
                let g1 = allele(rng) + allele(rng);
                let g2 = allele(rng) + allele(rng);
                (g1, g2)
            } else if u < 0.75 {
                let shared = allele(rng);
                (shared + allele(rng), shared + allele(rng))
            } else {
                let g = allele(rng) + allele(rng);
                (g, g)
            }
        })
        .collect()
}

/// Masked genotype probabilities and best guesses.
#[derive(Debug, Clone, PartialEq)]
pub struct Masked {
    pub probabilities: Vec<[f64; 3]>,
    pub best_guess: Vec<u8>,
}

pub fn mask_genotypes(truth: &[u8], a: f64, seed: u64) -> Result<Masked, SimError> {
    mask_genotypes_with(truth, a, &mut substream(seed, 0))
}

/// Replaces each true genotype by a Dirichlet draw with concentration `a` on
/// the truth and `(1 - a) / 2` on each other genotype. Best guess is the
/// argmax, ties going to the lower genotype.
pub fn mask_genotypes_with<R: Rng + ?Sized>(
    truth: &[u8],
    a: f64,
    rng: &mut R,
) -> Result<Masked, SimError> {
    if !(0.5..=1.0).contains(&a) {
        return Err(SimError(format!("a = {a} outside [0.5, 1]")));
    }
    if let Some(g) = truth.iter().find(|&&g| g > 2) {
        return Err(SimError(format!("genotype {g} outside 0..=2")));
    }
    if a == 1.0 {
        return Ok(Masked {
            probabilities: truth
                .iter()
                .map(|&g| {
                    let mut p = [0.0; 3];
                    p[g as usize] = 1.0;
                    p
                })
                .collect(),
            best_guess: truth.to_vec(),
        });
    }
    let on = Gamma::new(a, 1.0).map_err(|e| SimError(e.to_string()))?;
    let off = Gamma::new((1.0 - a) / 2.0, 1.0).map_err(|e| SimError(e.to_string()))?;
    let mut probabilities = Vec::with_capacity(truth.len());
    let mut best_guess = Vec::with_capacity(truth.len());
    for &g in truth {
        let p = loop {
            let mut x = [0.0; 3];
            for (j, v) in x.iter_mut().enumerate() {
                *v = if j == g as usize { on.sample(rng) } else { off.sample(rng) };
            }
            let total: f64 = x.iter().sum();
            if total > 0.0 && total.is_finite() {
                break x.map(|v| v / total);
            }
        };
        let mut best = 0;
        for j in 1..3 {
            if p[j] > p[best] {
                best = j;
            }
        }
        probabilities.push(p);
        best_guess.push(best as u8);
    }
    Ok(Masked {
        probabilities,
        best_guess,
    })
}

pub fn gen_model2(cfg: &Model2Config) -> Result<SimulatedSample, SimError> {
    gen_model2_with(cfg, &mut substream(cfg.seed, 0))
}

/// Model 2 drawing from a caller-supplied generator (`cfg.seed` is ignored).
pub fn gen_model2_with<R: Rng + ?Sized>(
    cfg: &Model2Config,
    rng: &mut R,
) -> Result<SimulatedSample, SimError> {
    cfg.validate()?;
    let pairs = sib_genotypes_with(cfg.n_pairs, cfg.maf, rng);
    let truth: Vec<u8> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    let mut y = Vec::with_capacity(truth.len());
    for (i, _) in pairs.iter().enumerate() {
        let (wa, wb) = bvn_pair(rng, cfg.rho);
        for (j, w) in [wa, wb].into_iter().enumerate() {
            let g = truth[2 * i + j] as usize;
            y.push(cfg.sigma[g] * cfg.margin.transform(w));
        }
    }
    let masked = mask_genotypes_with(&truth, cfg.a, rng)?;
    Ok(SimulatedSample {
        y,
        pair_ids: (0..truth.len()).map(|i| i / 2).collect(),
        truth: truth.iter().map(|&g| g as usize).collect(),
        probabilities: masked.probabilities.iter().map(|p| p.to_vec()).collect(),
        best_guess: masked.best_guess.iter().map(|&g| g as usize).collect(),
        k: 3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gof;

    fn variance(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    }

    #[test]
    fn model1_gaussian_moments_and_pair_correlation() {
        let mut cfg = Model1Config::new(2000, 2000);
        cfg.seed = 11;
        let s = gen_model1(&cfg).unwrap();
        assert_eq!(s.y.len(), 8000);
        let (g0, g1): (Vec<f64>, Vec<f64>) = (s.y[..4000].to_vec(), s.y[4000..].to_vec());
        for v in [&g0, &g1] {
            let var = variance(v);
            assert!((0.9..=1.1).contains(&var), "{var}");
        }
        let a: Vec<f64> = g0.iter().step_by(2).copied().collect();
        let b: Vec<f64> = g0.iter().skip(1).step_by(2).copied().collect();
        let r = gof::pearson(&a, &b);
        assert!((r - 0.75).abs() < 0.03, "{r}");
    }

    #[test]
    fn model1_chisq_skewness() {
        let mut cfg = Model1Config::new(2000, 2000);
        cfg.margin = Margin::ChiSq4;
        cfg.seed = 5;
        let s = gen_model1(&cfg).unwrap();
        let n = s.y.len() as f64;
        let m = s.y.iter().sum::<f64>() / n;
        let m2 = s.y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        let m3 = s.y.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
        let skew = m3 / m2.powf(1.5);
        assert!((skew - 2f64.sqrt()).abs() < 0.2, "{skew}");
    }

    #[test]
    fn variance_ratio_follows_sigma() {
        let mut cfg = Model1Config::new(2000, 2000);
        cfg.sigma = [1.0, 2f64.sqrt()];
        cfg.seed = 3;
        let s = gen_model1(&cfg).unwrap();
        let ratio = variance(&s.y[4000..]) / variance(&s.y[..4000]);
        assert!((ratio / 2.0 - 1.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn margin_transform_tails() {
        let t = Margin::T4.transform(0.0);
        assert!(t.abs() < 1e-12);
        // symmetric margin stays symmetric in the far tail
        let hi = Margin::T4.transform(7.5);
        let lo = Margin::T4.transform(-7.5);
        assert!((hi + lo).abs() < 1e-8 * hi);
        // chi^2_4 median
        assert!((Margin::ChiSq4.transform(0.0) - 3.356694).abs() < 1e-5);
        assert_eq!("T4".parse::<Margin>().unwrap(), Margin::T4);
        assert!("cauchy".parse::<Margin>().is_err());
    }

    #[test]
    fn sib_genotypes_hwe_and_sharing() {
        let pairs = gen_sib_genotypes(5000, 0.2, 2);
        let mut counts = [0usize; 3];
        for &(a, b) in &pairs {
            counts[a as usize] += 1;
            counts[b as usize] += 1;
        }
        let n = 10_000.0;
        for (c, e) in counts.iter().zip([0.64, 0.32, 0.04]) {
            assert!((*c as f64 / n - e).abs() < 0.02);
        }
        let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        assert!((gof::pearson(&a, &b) - 0.5).abs() < 0.05);
        let rare = gen_sib_genotypes(5000, 0.01, 4);
        let hom = rare.iter().filter(|p| p.0 == 2).count() + rare.iter().filter(|p| p.1 == 2).count();
        assert!(hom <= 10);
    }

    #[test]
    fn mask_degenerate_and_mean() {
        let truth: Vec<u8> = (0..5000).map(|i| (i % 3) as u8).collect();
        let m = mask_genotypes(&truth, 1.0, 9).unwrap();
        assert_eq!(m.best_guess, truth);
        assert!(m.probabilities.iter().zip(&truth).all(|(p, &g)| p[g as usize] == 1.0));

        let m = mask_genotypes(&truth, 0.7, 9).unwrap();
        let mean: f64 = m.probabilities.iter().zip(&truth).map(|(p, &g)| p[g as usize]).sum::<f64>()
            / truth.len() as f64;
        assert!((mean - 0.7).abs() < 0.02, "{mean}");
        for p in &m.probabilities {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        let m = mask_genotypes(&truth, 0.5, 10).unwrap();
        let acc = m.best_guess.iter().zip(&truth).filter(|(a, b)| a == b).count() as f64 / 5000.0;
        assert!((acc - 0.5).abs() < 0.05, "{acc}");
    }

    #[test]
    fn model2_determinism_and_layout() {
        let mut cfg = Model2Config::new(300, 0.3);
        cfg.a = 0.8;
        cfg.seed = 77;
        let a = gen_model2(&cfg).unwrap();
        let b = gen_model2(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.y.len(), 600);
        assert_eq!(a.clusters().n_clusters(), 300);
        cfg.seed = 78;
        assert_ne!(gen_model2(&cfg).unwrap().y, a.y);
        let data = a.sample_data(DesignView::Probability, true).unwrap();
        assert_eq!(data.k(), 3);
    }

    #[test]
    fn config_validation() {
        let mut c = Model2Config::new(10, 0.6);
        assert!(c.validate().is_err());
        c.maf = 0.2;
        c.a = 0.4;
        assert!(c.validate().is_err());
        let mut m = Model1Config::new(0, 0);
        assert!(m.validate().is_err());
        m.n1 = 3;
        m.sigma = [1.0, 0.0];
        assert!(m.validate().is_err());
    }

    #[test]
    fn substreams_differ() {
        let a: u64 = substream(1, 0).gen();
        let b: u64 = substream(1, 1).gen();
        let c: u64 = substream(1, 0).gen();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
