//! Synthetic classification sets and CSV input/output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use adasamp_core::{Dataset, Example};
use anyhow::{bail, ensure, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::numfmt::fmt_f64;

/// Gaussian class clusters, optionally imbalanced, with a hard subset of
/// boundary examples whose labels are flipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub dim: usize,
    pub classes: usize,
    /// Every class after the first is drawn with relative frequency
    /// `1 - imbalance` against the first; `0` is balanced.
    pub imbalance: f64,
    /// Fraction of examples, those nearest a class boundary, whose label
    /// is flipped to the nearest other class.
    pub noise: f64,
    /// Distance of each class mean from the origin.
    pub separation: f64,
    /// Per-coordinate standard deviation around the class mean.
    pub spread: f64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.classes >= 2, "classes must be >= 2");
        ensure!(self.n >= self.classes, "n must be >= classes");
        ensure!(self.dim >= 1, "dim must be >= 1");
        ensure!(
            (0.0..1.0).contains(&self.imbalance),
            "imbalance must lie in [0, 1)"
        );
        ensure!((0.0..=1.0).contains(&self.noise), "noise must lie in [0, 1]");
        ensure!(
            self.separation >= 0.0 && self.separation.is_finite(),
            "separation must be finite and >= 0"
        );
        ensure!(
            self.spread >= 0.0 && self.spread.is_finite(),
            "spread must be finite and >= 0"
        );
        Ok(())
    }

    /// Number of examples that get a flipped label.
    pub fn flipped_count(&self) -> usize {
        (self.noise * self.n as f64).round() as usize
    }

    /// Class means `+-separation * e_k`: classes `2k` and `2k + 1` sit on
    /// opposite sides of axis `k mod dim`, so the clusters are linearly
    /// separable without a bias term.
    pub fn class_mean(&self, c: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        let sign = if c.is_multiple_of(2) { 1.0 } else { -1.0 };
        m[(c / 2) % self.dim] = sign * self.separation;
        m
    }

    /// Class sizes by largest remainder, at least one each.
    pub fn class_counts(&self) -> Vec<usize> {
        let rel: Vec<f64> = (0..self.classes)
            .map(|c| if c == 0 { 1.0 } else { 1.0 - self.imbalance })
            .collect();
        let total: f64 = rel.iter().sum();
        let exact: Vec<f64> = rel.iter().map(|r| r / total * self.n as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| (e.floor() as usize).max(1)).collect();
        let mut order: Vec<usize> = (0..self.classes).collect();
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        // minimum-one bumps can overshoot; take the excess from the largest class
        while counts.iter().sum::<usize>() > self.n {
            let big = (0..self.classes).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap();
            counts[big] -= 1;
        }
        let mut left = self.n - counts.iter().sum::<usize>();
        for &c in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[c] += 1;
            left -= 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub data: Dataset,
    /// Positions whose label was flipped, ascending.
    pub flipped: Vec<usize>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Draw a synthetic set. Deterministic in `seed`.
pub fn synth_data(spec: &SynthSpec, seed: u64) -> Result<SyntheticSet> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = spec
        .class_counts()
        .iter()
        .enumerate()
        .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
        .collect();
    labels.shuffle(&mut rng);

    let means: Vec<Vec<f64>> = (0..spec.classes).map(|c| spec.class_mean(c)).collect();
    let features: Vec<Vec<f64>> = labels
        .iter()
        .map(|&y| {
            means[y]
                .iter()
                .map(|m| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    m + spec.spread * g
                })
                .collect()
        })
        .collect();

    // Distance-like gap of the nearest-mean rule; the smallest sit on a boundary.
    let mut margins: Vec<(f64, usize, usize)> = features
        .iter()
        .zip(&labels)
        .enumerate()
        .map(|(i, (x, &y))| {
            let own = sq_dist(x, &means[y]);
            let (other, d) = (0..spec.classes)
                .filter(|&c| c != y)
                .map(|c| (c, sq_dist(x, &means[c])))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .expect("at least two classes");
            ((d - own).abs(), i, other)
        })
        .collect();
    margins.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut flipped: Vec<usize> = Vec::with_capacity(spec.flipped_count());
    for &(_, i, other) in margins.iter().take(spec.flipped_count()) {
        labels[i] = other;
        flipped.push(i);
    }
    flipped.sort_unstable();

    let examples = features
        .into_iter()
        .zip(labels)
        .map(|(x, y)| Example::new(x, y))
        .collect();
    Ok(SyntheticSet {
        data: Dataset::with_classes(examples, spec.classes)?,
        flipped,
    })
}

/// Read `label,f1,...,fd` rows. Errors cite the 1-based data row.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let header = reader
        .headers()
        .with_context(|| format!("{}: cannot read header", path.display()))?
        .clone();
    ensure!(
        header.get(0) == Some("label"),
        "{}: header must start with `label`",
        path.display()
    );
    let dim = header.len() - 1;
    ensure!(dim >= 1, "{}: header names no feature columns", path.display());

    let mut examples = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let row = k + 1;
        let rec = rec.with_context(|| format!("{}: row {row}: malformed", path.display()))?;
        if rec.len() != dim + 1 {
            bail!(
                "{}: row {row}: expected {} fields, found {}",
                path.display(),
                dim + 1,
                rec.len()
            );
        }
        let label: usize = rec[0]
            .parse()
            .with_context(|| format!("{}: row {row}: label `{}` is not a class index", path.display(), &rec[0]))?;
        let features = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, s)| {
                let v: f64 = s.parse().with_context(|| {
                    format!("{}: row {row}: feature f{} `{s}` is not a number", path.display(), j + 1)
                })?;
                ensure!(v.is_finite(), "{}: row {row}: feature f{} is not finite", path.display(), j + 1);
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;
        examples.push(Example::new(features, label));
    }
    ensure!(!examples.is_empty(), "{}: no data rows", path.display());
    Ok(Dataset::new(examples)?)
}

/// Write `label,f1,...,fd` with 17 significant digits per feature.
pub fn write_csv(path: &Path, ds: &Dataset) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    write!(w, "label")?;
    for j in 1..=ds.feature_dim() {
        write!(w, ",f{j}")?;
    }
    writeln!(w)?;
    for z in ds.examples() {
        write!(w, "{}", z.label)?;
        for v in &z.features {
            write!(w, ",{}", fmt_f64(*v))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SynthSpec {
        SynthSpec {
            n: 1000,
            dim: 4,
            classes: 2,
            imbalance: 0.0,
            noise: 0.1,
            separation: 2.0,
            spread: 1.0,
        }
    }

    #[test]
    fn exact_flip_count() {
        let s = synth_data(&spec(), 1).unwrap();
        assert_eq!(s.flipped.len(), 100);
        assert_eq!(s.data.len(), 1000);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_data(&spec(), 5).unwrap();
        let b = synth_data(&spec(), 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.data, synth_data(&spec(), 6).unwrap().data);
    }

    #[test]
    fn imbalance_shrinks_minority() {
        let s = SynthSpec { imbalance: 0.75, noise: 0.0, ..spec() };
        let counts = s.class_counts();
        assert_eq!(counts.iter().sum::<usize>(), 1000);
        assert_eq!(counts, vec![800, 200]);
        let three = SynthSpec { classes: 3, n: 10, imbalance: 0.99, ..spec() };
        let c = three.class_counts();
        assert_eq!(c.iter().sum::<usize>(), 10);
        assert!(c.iter().all(|&k| k >= 1));
    }

    #[test]
    fn flipped_examples_are_the_boundary_ones() {
        let clean = synth_data(&SynthSpec { noise: 0.0, ..spec() }, 3).unwrap();
        let noisy = synth_data(&spec(), 3).unwrap();
        let changed: Vec<usize> = (0..1000)
            .filter(|&i| clean.data.examples()[i].label != noisy.data.examples()[i].label)
            .collect();
        assert_eq!(changed, noisy.flipped);
        // along the separating axis, flipped points lie closer to the boundary
        let dist = |i: usize| clean.data.examples()[i].features[0].abs();
        let max_flipped = noisy.flipped.iter().map(|&i| dist(i)).fold(0.0, f64::max);
        let median_all = {
            let mut d: Vec<f64> = (0..1000).map(dist).collect();
            d.sort_by(f64::total_cmp);
            d[500]
        };
        assert!(max_flipped < median_all);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(synth_data(&SynthSpec { noise: 1.5, ..spec() }, 0).is_err());
        assert!(synth_data(&SynthSpec { imbalance: 1.0, ..spec() }, 0).is_err());
        assert!(synth_data(&SynthSpec { n: 1, ..spec() }, 0).is_err());
    }
}
