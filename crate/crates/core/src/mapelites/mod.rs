//! MAP-Elites over classifier classes: every class keeps its best image so
//! far, and children of random champions replace any champion they beat.

mod archive;
mod fitness;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use archive::{archive_load, archive_save, Elite, EliteArchive};
pub(crate) use archive::median;
pub use fitness::{evaluate, ten_crops, Evaluator, Fitness, FitnessVector};

use crate::encodings::{EncodingConfig, Genome};
use crate::error::{Error, Result};
use crate::par;
use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    /// Generations to run in this call.
    pub generations: u64,
    /// Mutate-evaluate steps per generation.
    pub batch_per_generation: usize,
    pub encoding: EncodingConfig,
}

impl EvolveConfig {
    pub fn new(encoding: EncodingConfig, generations: u64) -> Self {
        EvolveConfig { generations, batch_per_generation: 50, encoding }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStat {
    pub generation: u64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    /// Class slots replaced during this generation.
    pub replacements: usize,
}

#[derive(Clone, Debug)]
pub struct EvolveOutcome {
    pub trace: Vec<GenerationStat>,
    /// Archive right after generation 0, when this call started from it.
    pub first_generation: Option<EliteArchive>,
}

/// RNG for one generation. Each generation gets its own stream of the
/// archive seed, so a resumed run draws exactly what a straight run would.
fn generation_rng(seed: u64, generation: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(generation);
    rng
}

pub fn evolve(archive: &mut EliteArchive, fitness: &dyn Fitness, cfg: &EvolveConfig) -> Result<EvolveOutcome> {
    evolve_with(archive, fitness, cfg, &mut |_, _| {})
}

/// [`evolve`] with a callback after every generation.
pub fn evolve_with(
    archive: &mut EliteArchive,
    fitness: &dyn Fitness,
    cfg: &EvolveConfig,
    on_generation: &mut dyn FnMut(&GenerationStat, &EliteArchive),
) -> Result<EvolveOutcome> {
    if cfg.generations == 0 || cfg.batch_per_generation == 0 {
        return Err(Error::Precondition("generations and batch size must be at least 1".into()));
    }
    cfg.encoding.validate()?;
    archive.check_against(fitness)?;
    let enc = &cfg.encoding;
    if archive.encoding() != enc.encoding || archive.dims() != (enc.width, enc.height, enc.channels) {
        return Err(Error::shape(format!(
            "archive holds {} genomes of {:?}, config asks for {} at {:?}",
            archive.encoding(),
            archive.dims(),
            enc.encoding,
            (enc.width, enc.height, enc.channels)
        )));
    }

    let start = archive.generation();
    let mut trace = Vec::with_capacity(cfg.generations as usize);
    let mut first_generation = None;
    for generation in start..start + cfg.generations {
        let mut rng = generation_rng(archive.seed(), generation);
        let filled = archive.filled();
        let children: Vec<Genome> = (0..cfg.batch_per_generation)
            .map(|_| match filled.choose(&mut rng) {
                None => enc.init(&mut rng),
                Some(&c) => {
                    let parent = &archive.elite(c).expect("filled class").genome;
                    Ok(enc.mutate(parent, generation, &mut rng))
                }
            })
            .collect::<Result<_>>()?;
        let images = par::map_slice(&children, |g| enc.render(g));
        let scores = fitness.score_batch(&images)?;
        let mut replacements = 0;
        for ((g, img), s) in children.iter().zip(&images).zip(&scores) {
            if s.len() != archive.num_classes() {
                return Err(Error::shape("fitness returned the wrong number of classes"));
            }
            replacements += archive.offer(g, img, s.values(), generation).len();
        }
        archive.set_generation(generation + 1);

        let conf: Vec<f64> = archive.targets().iter().map(|&c| archive.confidence(c).unwrap_or(0.0)).collect();
        let stat = GenerationStat {
            generation,
            median: median(&conf),
            min: conf.iter().copied().fold(f64::INFINITY, f64::min),
            max: conf.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            replacements,
        };
        on_generation(&stat, archive);
        trace.push(stat);
        if generation == 0 {
            first_generation = Some(archive.clone());
        }
    }
    Ok(EvolveOutcome { trace, first_generation })
}

/// `runs` independent archives evolved from scratch against `fitness`,
/// run `r` seeded with `derive_seed(seed, [r])`.
pub fn evolve_runs(
    fitness: &dyn Fitness,
    cfg: &EvolveConfig,
    targets: &[usize],
    runs: usize,
    seed: u64,
) -> Result<Vec<EliteArchive>> {
    let enc = &cfg.encoding;
    let dims = (enc.width, enc.height, enc.channels);
    let out = par::map_indexed(runs, |r| {
        let mut archive =
            EliteArchive::new(enc.encoding, dims, fitness.num_classes(), targets.to_vec(), derive_seed(seed, &[r as u64]))?;
        evolve(&mut archive, fitness, cfg)?;
        Ok(archive)
    });
    out.into_iter().collect()
}

/// Write the trace as CSV (generation, median, min, max, replacements).
pub fn trace_csv(trace: &[GenerationStat]) -> String {
    let mut s = String::from("generation,median,min,max,replacements\n");
    for t in trace {
        s.push_str(&format!("{},{},{},{},{}\n", t.generation, t.median, t.min, t.max, t.replacements));
    }
    s
}
