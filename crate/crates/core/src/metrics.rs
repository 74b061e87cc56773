//! Histograms and distances between binned distributions.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::integrate;

/// Model probabilities below this are floored inside the KL divergence.
pub const KL_FLOOR: f64 = 1e-12;

/// Default number of bins over `[0, z_max]`.
pub const DEFAULT_BINS: usize = 100;

/// Probability masses over contiguous bins.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedDistribution {
    edges: Vec<f64>,
    mass: Vec<f64>,
}

/// `bins` equal-width bins spanning `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
    if bins == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidEdges);
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
    edges.push(hi);
    Ok(edges)
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 || edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidEdges);
    }
    Ok(())
}

impl BinnedDistribution {
    pub fn new(edges: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        check_edges(&edges)?;
        if mass.len() + 1 != edges.len() {
            return Err(crate::error::invalid("mass", "needs exactly one entry per bin"));
        }
        if mass.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(crate::error::invalid("mass", "entries must be finite and non-negative"));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(crate::error::invalid("mass", format!("must sum to 1, got {total}")));
        }
        Ok(Self { edges, mass })
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(edges: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(crate::error::invalid("mass", "weights must have positive total"));
        }
        Self::new(edges, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Two-column CSV (`bin_center,mass`) preceded by a `# edges:` comment.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("# edges:");
        for (i, e) in self.edges.iter().enumerate() {
            let sep = if i == 0 { " " } else { "," };
            write!(out, "{sep}{e}").unwrap();
        }
        out.push_str("\nbin_center,mass\n");
        for (c, m) in self.centers().iter().zip(&self.mass) {
            writeln!(out, "{c},{m}").unwrap();
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse { line, message };
        let mut lines = text.lines();
        let first = lines.next().ok_or_else(|| parse_err(1, "empty file".into()))?;
        let edges = first
            .strip_prefix("# edges:")
            .ok_or_else(|| parse_err(1, "expected `# edges:` comment".into()))?
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| parse_err(1, e.to_string())))
            .collect::<Result<Vec<f64>>>()?;
        let body: String = lines.collect::<Vec<_>>().join("\n");
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let mut mass = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let value = record
                .get(1)
                .ok_or_else(|| parse_err(i + 3, "missing mass column".into()))?
                .trim()
                .parse::<f64>()
                .map_err(|e| parse_err(i + 3, e.to_string()))?;
            mass.push(value);
        }
        Self::new(edges, mass)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }
}

fn bin_index(edges: &[f64], x: f64) -> usize {
    let bins = edges.len() - 1;
    // index of the first edge strictly greater than x, minus one
    edges.partition_point(|&e| e <= x).saturating_sub(1).min(bins - 1)
}

/// Normalized histogram. Samples outside the edges are clipped to the
/// outer bins; the final bin is closed on the right.
pub fn build_histogram(samples: &[f64], edges: &[f64]) -> Result<BinnedDistribution> {
    check_edges(edges)?;
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut counts = vec![0u64; edges.len() - 1];
    for &s in samples {
        counts[bin_index(edges, s)] += 1;
    }
    let n = samples.len() as f64;
    BinnedDistribution::new(edges.to_vec(), counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Center of the most populated bin.
pub fn most_probable_bin(samples: &[f64], edges: &[f64]) -> Result<f64> {
    let hist = build_histogram(samples, edges)?;
    let mut best = 0;
    for (i, &m) in hist.mass.iter().enumerate() {
        if m > hist.mass[best] {
            best = i;
        }
    }
    Ok(0.5 * (edges[best] + edges[best + 1]))
}

/// Raw per-bin mass of a density plus an optional point mass, before any
/// normalization.
pub fn bin_masses<F: Fn(f64) -> f64>(density: F, edges: &[f64], atom: Option<(f64, f64)>) -> Result<Vec<f64>> {
    check_edges(edges)?;
    let mut mass: Vec<f64> = edges
        .windows(2)
        .map(|w| integrate(&density, w[0], w[1]).value.max(0.0))
        .collect();
    if let Some((location, weight)) = atom {
        let last = *edges.last().unwrap();
        if (edges[0]..=last).contains(&location) {
            mass[bin_index(edges, location)] += weight;
        }
    }
    Ok(mass)
}

/// Discretizes a density on the given bins and renormalizes to unit mass.
pub fn discretize_density<F: Fn(f64) -> f64>(
    density: F,
    edges: &[f64],
    atom: Option<(f64, f64)>,
) -> Result<BinnedDistribution> {
    let mass = bin_masses(density, edges, atom)?;
    BinnedDistribution::from_weights(edges.to_vec(), mass)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlDivergence {
    pub value: f64,
    /// Set when some model bin had to be floored to keep the value finite.
    pub floored: bool,
}

pub fn kl_divergence(h: &BinnedDistribution, p: &BinnedDistribution) -> Result<KlDivergence> {
    if h.edges != p.edges {
        return Err(Error::EdgeMismatch);
    }
    let mut value = 0.0;
    let mut floored = false;
    for (&hf, &pf) in h.mass.iter().zip(&p.mass) {
        if hf > 0.0 {
            let q = if pf < KL_FLOOR {
                floored = true;
                KL_FLOOR
            } else {
                pf
            };
            value += hf * (hf / q).ln();
        }
    }
    Ok(KlDivergence {
        value: value.max(0.0),
        floored,
    })
}

/// Square-root form of the Hellinger distance, in `[0, sqrt 2]`.
pub fn hellinger_distance(h: &BinnedDistribution, p: &BinnedDistribution) -> Result<f64> {
    if h.edges != p.edges {
        return Err(Error::EdgeMismatch);
    }
    let sum: f64 = h
        .mass
        .iter()
        .zip(&p.mass)
        .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
        .sum();
    Ok(sum.sqrt())
}
