use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Image;
use crate::error::{Error, Result};

/// One byte per pixel channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectGenome {
    width: usize,
    height: usize,
    channels: usize,
    genes: Vec<u8>,
}

/// Per-gene mutation probability that halves on a fixed period, plus the
/// polynomial-mutation distribution index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MutationSchedule {
    pub initial_rate: f64,
    pub halving_period: u64,
    pub eta: f64,
}

impl Default for MutationSchedule {
    fn default() -> Self {
        MutationSchedule { initial_rate: 0.1, halving_period: 1000, eta: 15.0 }
    }
}

impl MutationSchedule {
    /// `initial_rate · 2^(−⌊generation / halving_period⌋)`
    pub fn rate(&self, generation: u64) -> f64 {
        let halvings = (generation / self.halving_period.max(1)).min(1074);
        self.initial_rate * 0.5f64.powi(halvings as i32)
    }
}

pub fn mutation_rate(generation: u64, sched: &MutationSchedule) -> f64 {
    sched.rate(generation)
}

/// Perturbation of the bounded polynomial distribution with index `eta`
/// for a uniform draw `u ∈ [0, 1)`. Lies in (−1, 1) and is 0 at u = 0.5.
pub fn polynomial_delta(u: f64, eta: f64) -> f64 {
    let e = 1.0 / (eta + 1.0);
    if u < 0.5 {
        (2.0 * u).powf(e) - 1.0
    } else {
        1.0 - (2.0 * (1.0 - u)).powf(e)
    }
}

/// Apply a polynomial perturbation `delta` to a gene on the [0, 255] scale.
#[inline]
pub fn perturb_gene(gene: u8, delta: f64) -> u8 {
    (f64::from(gene) + delta * 255.0).round().clamp(0.0, 255.0) as u8
}

impl DirectGenome {
    pub fn new(width: usize, height: usize, channels: usize, genes: Vec<u8>) -> Result<Self> {
        // Image::new performs the same dimension checks
        Image::new(width, height, channels, genes.clone())?;
        Ok(DirectGenome { width, height, channels, genes })
    }

    pub fn genes(&self) -> &[u8] {
        &self.genes
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn render(&self) -> Image {
        Image::new(self.width, self.height, self.channels, self.genes.clone()).expect("genome dims are valid")
    }
}

/// Uniform random genes on [0, 255].
pub fn direct_init<R: Rng + ?Sized>(width: usize, height: usize, channels: usize, rng: &mut R) -> Result<DirectGenome> {
    let genes = (0..width * height * channels).map(|_| rng.random::<u8>()).collect();
    DirectGenome::new(width, height, channels, genes)
}

/// Each gene is picked with probability `sched.rate(generation)` and moved
/// by a polynomial perturbation scaled to the gene range.
pub fn direct_mutate<R: Rng + ?Sized>(
    g: &DirectGenome,
    generation: u64,
    sched: &MutationSchedule,
    rng: &mut R,
) -> DirectGenome {
    let mut out = g.clone();
    mutate_genes(&mut out.genes, sched.rate(generation), sched.eta, rng);
    out
}

/// In-place mutation; returns how many genes were selected. A selected gene
/// can stay unchanged when its perturbation rounds to zero or it is clamped.
pub(crate) fn mutate_genes<R: Rng + ?Sized>(genes: &mut [u8], rate: f64, eta: f64, rng: &mut R) -> usize {
    let mut selected = 0;
    for gene in genes {
        if rng.random::<f64>() < rate {
            let u: f64 = rng.random();
            *gene = perturb_gene(*gene, polynomial_delta(u, eta));
            selected += 1;
        }
    }
    selected
}

#[derive(Serialize, Deserialize)]
struct DirectFile {
    width: usize,
    height: usize,
    channels: usize,
    genes: String,
}

impl Serialize for DirectGenome {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DirectFile {
            width: self.width,
            height: self.height,
            channels: self.channels,
            genes: STANDARD.encode(&self.genes),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DirectGenome {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = DirectFile::deserialize(d)?;
        let genes = STANDARD.decode(f.genes.as_bytes()).map_err(serde::de::Error::custom)?;
        DirectGenome::new(f.width, f.height, f.channels, genes).map_err(serde::de::Error::custom)
    }
}

impl DirectGenome {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }
}
