//! Monte Carlo estimators: direct killed-path sampling, importance sampling
//! under the Cramér tilt, and the conditioned chain `Z`.
//!
//! Worker `w` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `w` and
//! handles a contiguous share of the samples; partial results are merged in
//! worker order, so an estimate is a pure function of
//! `(seed, n_samples, workers)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cramer::CramerData;
use crate::error::{LabError, Result};
use crate::harmonic::HarmonicTables;
use crate::lattice::{Target, Transitions};
use crate::model::{ConeSpec, StepLaw};

/// Sample size, seed and worker count of one estimator run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct McConfig {
    pub n_samples: u64,
    pub seed: u64,
    pub workers: usize,
}

impl McConfig {
    pub fn new(n_samples: u64, seed: u64, workers: usize) -> Self {
        Self {
            n_samples,
            seed,
            workers: workers.max(1),
        }
    }

    fn share(&self, worker: usize) -> u64 {
        let w = self.workers as u64;
        self.n_samples / w + u64::from((worker as u64) < self.n_samples % w)
    }

    fn rng(&self, worker: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(worker as u64);
        rng
    }
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan's pairwise combination.
    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let (na, nb) = (self.n as f64, other.n as f64);
        Moments {
            n,
            mean: self.mean + d * nb / n as f64,
            m2: self.m2 + other.m2 + d * d * na * nb / n as f64,
        }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// A Monte Carlo estimate, serialized as one JSON record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimator: String,
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub workers: usize,
    /// Samples with a nonzero contribution.
    pub hits: u64,
}

impl McEstimate {
    pub fn relative_std_error(&self) -> f64 {
        self.std_error / self.value.abs()
    }
}

/// Inverse-CDF sampler over the support of a step law.
#[derive(Debug, Clone)]
struct StepSampler {
    steps: Vec<Vec<i64>>,
    cdf: Vec<f64>,
}

impl StepSampler {
    fn new(law: &StepLaw) -> Self {
        let mut acc = 0.0;
        let cdf = law
            .probs()
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Self {
            steps: law.support().to_vec(),
            cdf,
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> &[i64] {
        let u = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        let k = self.cdf.partition_point(|&c| c <= u).min(self.steps.len() - 1);
        &self.steps[k]
    }
}

/// Runs `f(rng, count)` on every worker in parallel and merges in worker order.
fn fan_out<F>(cfg: &McConfig, f: F) -> (Moments, u64)
where
    F: Fn(&mut ChaCha8Rng, u64) -> (Moments, u64) + Sync,
{
    let parts: Vec<(Moments, u64)> = (0..cfg.workers)
        .into_par_iter()
        .map(|w| f(&mut cfg.rng(w), cfg.share(w)))
        .collect();
    parts
        .iter()
        .fold((Moments::default(), 0), |(m, h), (pm, ph)| (m.merge(pm), h + ph))
}

/// Walks `n` steps from `x0`; returns the displacement if the path stayed in `K`.
fn killed_path<R: Rng>(
    sampler: &StepSampler,
    cone: &ConeSpec,
    x0: &[i64],
    n: usize,
    rng: &mut R,
    pos: &mut [i64],
) -> bool {
    pos.copy_from_slice(x0);
    for _ in 0..n {
        let z = sampler.draw(rng);
        pos.iter_mut().zip(z).for_each(|(a, b)| *a += b);
        if !cone.contains_lattice(pos) {
            return false;
        }
    }
    true
}

fn check_start(cone: &ConeSpec, x0: &[i64], law: &StepLaw) -> Result<()> {
    if x0.len() != law.dim() {
        return Err(LabError::Dimension {
            expected: law.dim(),
            got: x0.len(),
        });
    }
    if !cone.contains_lattice(x0) {
        return Err(LabError::Domain(format!("start {x0:?} is not inside the cone")));
    }
    Ok(())
}

/// Direct estimate of `P(τ_{x0} > n)` from killed sample paths.
pub fn mc_survival(
    law: &StepLaw,
    cone: &ConeSpec,
    x0: &[i64],
    n: usize,
    cfg: &McConfig,
) -> Result<McEstimate> {
    check_start(cone, x0, law)?;
    let sampler = StepSampler::new(law);
    let (m, hits) = fan_out(cfg, |rng, count| {
        let mut acc = Moments::default();
        let mut hits = 0;
        let mut pos = vec![0; x0.len()];
        for _ in 0..count {
            let alive = killed_path(&sampler, cone, x0, n, rng, &mut pos);
            hits += u64::from(alive);
            acc.push(if alive { 1.0 } else { 0.0 });
        }
        (acc, hits)
    });
    Ok(McEstimate {
        estimator: "direct".into(),
        value: m.mean,
        std_error: m.std_error(),
        n_samples: cfg.n_samples,
        seed: cfg.seed,
        workers: cfg.workers,
        hits,
    })
}

/// Importance-sampling estimate `cⁿ E[e^{-h·S̃(n)}; τ̃ > n]` from the tilted walk.
pub fn is_survival(
    cramer: &CramerData,
    cone: &ConeSpec,
    x0: &[i64],
    n: usize,
    cfg: &McConfig,
) -> Result<McEstimate> {
    check_start(cone, x0, &cramer.tilted)?;
    let sampler = StepSampler::new(&cramer.tilted);
    let h = &cramer.h;
    let (m, hits) = fan_out(cfg, |rng, count| {
        let mut acc = Moments::default();
        let mut hits = 0;
        let mut pos = vec![0; x0.len()];
        for _ in 0..count {
            let w = if killed_path(&sampler, cone, x0, n, rng, &mut pos) {
                hits += 1;
                let hs: f64 = pos
                    .iter()
                    .zip(x0)
                    .zip(h)
                    .map(|((p, x), hi)| (p - x) as f64 * hi)
                    .sum();
                (-hs).exp()
            } else {
                0.0
            };
            acc.push(w);
        }
        (acc, hits)
    });
    // cⁿ in log space keeps long horizons representable
    let scale = (n as f64 * cramer.c.ln()).exp();
    Ok(McEstimate {
        estimator: "importance".into(),
        value: scale * m.mean,
        std_error: scale * m.std_error(),
        n_samples: cfg.n_samples,
        seed: cfg.seed,
        workers: cfg.workers,
        hits,
    })
}

/// One sampled path of `Z` with its row-sum diagnostics.
#[derive(Debug, Clone)]
pub struct ZPath {
    pub path: Vec<Vec<i64>>,
    /// Raw row sums `Σ_y P(x + X = y) U(y)/(c U(x))` at interior states.
    pub row_sums: Vec<f64>,
    /// The path tried to leave the table window and was stopped.
    pub truncated: bool,
}

/// Transition sampler for `p(x, y) = P(x + X = y) U(y)/(c U(x))`, each row
/// normalized explicitly.
pub struct ZChain<'a> {
    tables: &'a HarmonicTables,
    tr: Transitions,
    c: f64,
}

impl<'a> ZChain<'a> {
    pub fn new(
        law: &StepLaw,
        cramer: &CramerData,
        cone: &ConeSpec,
        tables: &'a HarmonicTables,
    ) -> Result<Self> {
        if tables.u.is_empty() {
            return Err(LabError::MissingInput("U tables not built".into()));
        }
        let tr = Transitions::new(law, cone, tables.window.clone())?;
        Ok(Self {
            tables,
            tr,
            c: cramer.c,
        })
    }

    /// Raw row sum at a window cell, `None` if some successor is beyond the window.
    pub fn row_sum(&self, cell: usize) -> Option<f64> {
        let mut acc = 0.0;
        for k in 0..self.tr.n_steps() {
            match self.tr.target(cell, k) {
                Target::Cell(j) => acc += self.tr.probs[k] * self.tables.u[j],
                Target::Killed => {}
                Target::Truncated => return None,
            }
        }
        Some(acc / (self.c * self.tables.u[cell]))
    }

    pub fn sample<R: Rng>(&self, x0: &[i64], n_steps: usize, rng: &mut R) -> Result<ZPath> {
        let w = &self.tr.window;
        let mut cell = w
            .cell(x0)
            .ok_or_else(|| LabError::Domain(format!("start {x0:?} is outside the table window")))?;
        let mut path = vec![x0.to_vec()];
        let mut row_sums = Vec::with_capacity(n_steps);
        let mut weights = vec![0.0; self.tr.n_steps()];
        for _ in 0..n_steps {
            let Some(raw) = self.row_sum(cell) else {
                return Ok(ZPath {
                    path,
                    row_sums,
                    truncated: true,
                });
            };
            row_sums.push(raw);
            let mut total = 0.0;
            for (k, wk) in weights.iter_mut().enumerate() {
                *wk = match self.tr.target(cell, k) {
                    Target::Cell(j) => self.tr.probs[k] * self.tables.u[j],
                    _ => 0.0,
                };
                total += *wk;
            }
            let mut u = rng.random::<f64>() * total;
            let mut pick = None;
            for (k, wk) in weights.iter().enumerate() {
                if *wk > 0.0 {
                    pick = Some(k);
                    if u < *wk {
                        break;
                    }
                    u -= wk;
                }
            }
            let k = pick.ok_or_else(|| LabError::Inconsistent("Z row has no mass".into()))?;
            let Target::Cell(next) = self.tr.target(cell, k) else {
                unreachable!("positive weight only on window cells")
            };
            cell = next;
            path.push(w.point(cell));
        }
        Ok(ZPath {
            path,
            row_sums,
            truncated: false,
        })
    }
}

/// Aggregate of many independent `Z` paths.
#[derive(Debug, Clone, Serialize)]
pub struct ZChainSummary {
    pub n_paths: u64,
    pub n_steps: usize,
    pub truncated_paths: u64,
    /// Largest `|row sum − 1|` over all interior states visited.
    pub max_row_deviation: f64,
    /// Every visited state was inside the cone.
    pub stayed_in_cone: bool,
    /// Mean Euclidean norm of `Z_k` over untruncated paths, `k = 0..=n_steps`.
    pub mean_norm: Vec<f64>,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, Default)]
struct ZPart {
    norms: Vec<Moments>,
    truncated: u64,
    max_dev: f64,
    in_cone: bool,
    /// `|Z_late| − |Z_early|` per path.
    gain: Moments,
}

/// Transience statistic: mean and standard error of `|Z_late| − |Z_early|`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Transience {
    pub early: usize,
    pub late: usize,
    pub mean_gain: f64,
    pub std_error: f64,
}

impl Transience {
    /// One-sided test `mean − 3σ > 0`.
    pub fn drifts_outward(&self) -> bool {
        self.mean_gain - 3.0 * self.std_error > 0.0
    }
}

/// Samples `cfg.n_samples` paths of `Z` from `x0`.
pub fn z_chain_replicas(
    chain: &ZChain<'_>,
    cone: &ConeSpec,
    x0: &[i64],
    n_steps: usize,
    early: usize,
    cfg: &McConfig,
) -> Result<(ZChainSummary, Transience)> {
    if early > n_steps {
        return Err(LabError::Config(format!("early step {early} exceeds {n_steps}")));
    }
    let parts: Vec<Result<ZPart>> = (0..cfg.workers)
        .into_par_iter()
        .map(|w| {
            let mut rng = cfg.rng(w);
            let mut part = ZPart {
                norms: vec![Moments::default(); n_steps + 1],
                in_cone: true,
                ..Default::default()
            };
            for _ in 0..cfg.share(w) {
                let zp = chain.sample(x0, n_steps, &mut rng)?;
                part.max_dev = zp
                    .row_sums
                    .iter()
                    .fold(part.max_dev, |m, r| m.max((r - 1.0).abs()));
                part.in_cone &= zp.path.iter().all(|y| cone.contains_lattice(y));
                if zp.truncated {
                    part.truncated += 1;
                    continue;
                }
                let norms: Vec<f64> = zp
                    .path
                    .iter()
                    .map(|y| y.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt())
                    .collect();
                for (m, v) in part.norms.iter_mut().zip(&norms) {
                    m.push(*v);
                }
                part.gain.push(norms[n_steps] - norms[early]);
            }
            Ok(part)
        })
        .collect();
    let mut total = ZPart {
        norms: vec![Moments::default(); n_steps + 1],
        in_cone: true,
        ..Default::default()
    };
    for p in parts {
        let p = p?;
        for (a, b) in total.norms.iter_mut().zip(&p.norms) {
            *a = a.merge(b);
        }
        total.truncated += p.truncated;
        total.max_dev = total.max_dev.max(p.max_dev);
        total.in_cone &= p.in_cone;
        total.gain = total.gain.merge(&p.gain);
    }
    let summary = ZChainSummary {
        n_paths: cfg.n_samples,
        n_steps,
        truncated_paths: total.truncated,
        max_row_deviation: total.max_dev,
        stayed_in_cone: total.in_cone,
        mean_norm: total.norms.iter().map(|m| m.mean).collect(),
        seed: cfg.seed,
        workers: cfg.workers,
    };
    let transience = Transience {
        early,
        late: n_steps,
        mean_gain: total.gain.mean,
        std_error: total.gain.std_error(),
    };
    Ok((summary, transience))
}
