use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fitness::Fitness;
use crate::dataset::Image;
use crate::encodings::{Encoding, Genome};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Elite {
    pub genome: Genome,
    pub image: Image,
    pub confidence: f64,
    /// Generation (0-based) in which this champion was installed.
    pub generation: u64,
}

/// Best genome found so far for each target class.
#[derive(Clone, Debug, PartialEq)]
pub struct EliteArchive {
    encoding: Encoding,
    dims: (usize, usize, usize),
    seed: u64,
    generation: u64,
    targets: Vec<usize>,
    elites: Vec<Option<Elite>>,
}

impl EliteArchive {
    /// Empty archive with one slot per class; only `targets` are evolved.
    pub fn new(
        encoding: Encoding,
        dims: (usize, usize, usize),
        num_classes: usize,
        targets: Vec<usize>,
        seed: u64,
    ) -> Result<Self> {
        if num_classes == 0 || targets.is_empty() {
            return Err(Error::Precondition("archive needs at least one class and one target".into()));
        }
        let mut sorted = targets.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != targets.len() || sorted.last().is_some_and(|&t| t >= num_classes) {
            return Err(Error::Range(format!("targets {targets:?} must be distinct classes below {num_classes}")));
        }
        Ok(EliteArchive { encoding, dims, seed, generation: 0, targets: sorted, elites: vec![None; num_classes] })
    }

    /// Archive targeting every class of `fitness`.
    pub fn for_fitness(encoding: Encoding, fitness: &dyn Fitness, seed: u64) -> Result<Self> {
        let k = fitness.num_classes();
        EliteArchive::new(encoding, fitness.image_dims(), k, (0..k).collect(), seed)
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of completed generations.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub(crate) fn set_generation(&mut self, g: u64) {
        self.generation = g;
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn num_classes(&self) -> usize {
        self.elites.len()
    }

    pub fn elite(&self, class: usize) -> Option<&Elite> {
        self.elites.get(class).and_then(|e| e.as_ref())
    }

    pub fn confidence(&self, class: usize) -> Option<f64> {
        self.elite(class).map(|e| e.confidence)
    }

    /// Filled target entries, in class order.
    pub fn champions(&self) -> impl Iterator<Item = (usize, &Elite)> + '_ {
        self.targets.iter().filter_map(|&c| self.elite(c).map(|e| (c, e)))
    }

    pub fn filled(&self) -> Vec<usize> {
        self.champions().map(|(c, _)| c).collect()
    }

    /// Median confidence over target classes; empty slots count as 0.
    pub fn median_confidence(&self) -> f64 {
        let v: Vec<f64> = self.targets.iter().map(|&c| self.confidence(c).unwrap_or(0.0)).collect();
        median(&v)
    }

    /// Install the candidate for every target class it strictly beats.
    /// Returns the classes replaced.
    pub fn offer(&mut self, genome: &Genome, image: &Image, scores: &[f64], generation: u64) -> Vec<usize> {
        let mut replaced = Vec::new();
        for &c in &self.targets {
            let s = scores[c];
            let better = match &self.elites[c] {
                None => true,
                Some(e) => s > e.confidence,
            };
            if better {
                self.elites[c] = Some(Elite { genome: genome.clone(), image: image.clone(), confidence: s, generation });
                replaced.push(c);
            }
        }
        replaced
    }

    /// Shape error unless `fitness` accepts this archive's images and classes.
    pub fn check_against(&self, fitness: &dyn Fitness) -> Result<()> {
        if fitness.image_dims() != self.dims {
            return Err(Error::shape(format!(
                "archive images are {:?} but the model expects {:?}",
                self.dims,
                fitness.image_dims()
            )));
        }
        if fitness.num_classes() != self.num_classes() {
            return Err(Error::shape(format!(
                "archive has {} classes but the model has {}",
                self.num_classes(),
                fitness.num_classes()
            )));
        }
        Ok(())
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

const MANIFEST: &str = "manifest.json";
const ARCHIVE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    encoding: Encoding,
    width: usize,
    height: usize,
    channels: usize,
    num_classes: usize,
    targets: Vec<usize>,
    seed: u64,
    generation: u64,
    elites: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    class: usize,
    confidence: f64,
    generation: u64,
    genome: String,
    image: String,
}

/// Write `manifest.json`, one genome JSON and one PGM/PPM per champion.
pub fn archive_save(archive: &EliteArchive, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ext = if archive.dims.2 == 3 { "ppm" } else { "pgm" };
    let mut entries = Vec::new();
    for (c, e) in archive.elites.iter().enumerate() {
        let Some(e) = e else { continue };
        let genome = format!("class_{c:03}.json");
        let image = format!("class_{c:03}.{ext}");
        let gp = dir.join(&genome);
        fs::write(&gp, e.genome.to_json()).map_err(|err| Error::io(&gp, err))?;
        e.image.write_pnm(dir.join(&image))?;
        entries.push(ManifestEntry { class: c, confidence: e.confidence, generation: e.generation, genome, image });
    }
    let m = Manifest {
        version: ARCHIVE_VERSION,
        encoding: archive.encoding,
        width: archive.dims.0,
        height: archive.dims.1,
        channels: archive.dims.2,
        num_classes: archive.num_classes(),
        targets: archive.targets.clone(),
        seed: archive.seed,
        generation: archive.generation,
        elites: entries,
    };
    let mp = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&m)?;
    fs::write(&mp, text).map_err(|e| Error::io(&mp, e))
}

pub fn archive_load(dir: impl AsRef<Path>) -> Result<EliteArchive> {
    let dir = dir.as_ref();
    let mp = dir.join(MANIFEST);
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.version != ARCHIVE_VERSION {
        return Err(Error::Format(format!("unsupported archive version {}", m.version)));
    }
    let dims = (m.width, m.height, m.channels);
    let mut archive = EliteArchive::new(m.encoding, dims, m.num_classes, m.targets, m.seed)?;
    archive.generation = m.generation;
    for e in m.elites {
        if e.class >= m.num_classes || archive.elites[e.class].is_some() {
            return Err(Error::Format(format!("bad or duplicate archive entry for class {}", e.class)));
        }
        if !(0.0..=1.0).contains(&e.confidence) {
            return Err(Error::Range(format!("confidence {} outside [0, 1]", e.confidence)));
        }
        let gp = dir.join(&e.genome);
        let genome = Genome::from_json(&fs::read_to_string(&gp).map_err(|err| Error::io(&gp, err))?)?;
        if genome.encoding() != m.encoding {
            return Err(Error::Format(format!("class {} genome is not {}", e.class, m.encoding)));
        }
        let image = Image::read_pnm(dir.join(&e.image))?;
        if image.dims() != dims {
            return Err(Error::shape(format!("class {} image is {:?}, archive is {:?}", e.class, image.dims(), dims)));
        }
        archive.elites[e.class] =
            Some(Elite { genome, image, confidence: e.confidence, generation: e.generation });
    }
    Ok(archive)
}
