//! Retraining with an extra "fooling" class: harvest evolved images, train a
//! fresh model with them as class n, evolve against it again, repeat.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{append_fooling_class, Image, LabeledDataset, MnistSplits};
use crate::encodings::{Encoding, EncodingConfig};
use crate::error::{Error, Result};
use crate::mapelites::{evolve, median, EliteArchive, Evaluator, EvolveConfig};
use crate::nnet::{evaluate_error, lenet_specs, train, ConvNet, LayerSpec, Shape3, TrainConfig};
use crate::par;
use crate::seed::derive_seed;

/// Fooling images added before each iteration's training. Iteration 1
/// trains on the base data only, iteration 2 adds the first batch, and every
/// later iteration adds the smaller follow-up batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrainSchedule {
    pub first_train: usize,
    pub first_val: usize,
    pub later_train: usize,
    pub later_val: usize,
}

impl RetrainSchedule {
    /// 6000/1000 images first, then 1000/100 per iteration.
    pub const FULL: RetrainSchedule =
        RetrainSchedule { first_train: 6000, first_val: 1000, later_train: 1000, later_val: 100 };

    /// The full schedule scaled down tenfold.
    pub const DESK: RetrainSchedule =
        RetrainSchedule { first_train: 600, first_val: 100, later_train: 100, later_val: 10 };

    /// (train, val) images added before training model `iteration` (1-based).
    pub fn additions(&self, iteration: usize) -> (usize, usize) {
        match iteration {
            0 | 1 => (0, 0),
            2 => (self.first_train, self.first_val),
            _ => (self.later_train, self.later_val),
        }
    }

    /// Cumulative (train, val) fooling-pool size for model `iteration`.
    pub fn pool_size(&self, iteration: usize) -> (usize, usize) {
        (1..=iteration).map(|i| self.additions(i)).fold((0, 0), |(a, b), (t, v)| (a + t, b + v))
    }
}

impl Default for RetrainSchedule {
    fn default() -> Self {
        RetrainSchedule::DESK
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrainConfig {
    pub iterations: usize,
    pub schedule: RetrainSchedule,
    /// Evolution runs per re-attack, raised when more images are needed.
    pub min_runs: usize,
    /// Images harvested per run, half from the first and half from the
    /// final generation.
    pub images_per_run: usize,
    pub evolve: EvolveConfig,
    pub train: TrainConfig,
    /// Layers before the final classifier; None means the LeNet stack.
    pub body: Option<Vec<LayerSpec>>,
    pub seed: u64,
}

impl RetrainConfig {
    pub fn mnist(iterations: usize, seed: u64) -> Self {
        RetrainConfig {
            iterations,
            schedule: RetrainSchedule::DESK,
            min_runs: 30,
            images_per_run: 20,
            evolve: EvolveConfig::new(EncodingConfig::mnist(Encoding::Cppn), 200),
            train: TrainConfig::default(),
            body: None,
            seed,
        }
    }

    /// Evolution runs for the re-attack in `iteration`.
    pub fn runs_for(&self, iteration: usize) -> usize {
        let needed = if iteration < self.iterations {
            let (t, v) = self.schedule.additions(iteration + 1);
            t + v
        } else {
            0
        };
        self.min_runs.max(needed.div_ceil(self.images_per_run.max(1)))
    }

    fn specs(&self, classes: usize) -> Vec<LayerSpec> {
        match &self.body {
            Some(body) => {
                let mut s = body.clone();
                s.push(LayerSpec::Dense { width: classes });
                s
            }
            None => lenet_specs(classes),
        }
    }
}

/// Table row with the columns i, Error, MNIST Error, Train, Val, Score.
/// Errors and score are fractions in [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: usize,
    /// Error on the validation set including fooling images.
    pub error: f64,
    /// Error on the original validation set.
    pub mnist_error: f64,
    pub train: usize,
    pub val: usize,
    /// Median champion confidence of the re-attack.
    pub score: Option<f64>,
}

/// CSV with percentages, matching the retraining table layout.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from("i,Error,MNIST Error,Train,Val,Score\n");
    for r in rows {
        let score = r.score.map(|v| format!("{:.4}", v * 100.0)).unwrap_or_default();
        s.push_str(&format!(
            "{},{:.4},{:.4},{},{},{}\n",
            r.iteration,
            r.error * 100.0,
            r.mnist_error * 100.0,
            r.train,
            r.val,
            score
        ));
    }
    s
}

/// One evolution run's first-generation and final archives.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub first_generation: Option<EliteArchive>,
    pub last: EliteArchive,
}

/// Per run, `per_run / 2` champion images drawn without replacement from
/// the first generation and as many from the final archive.
pub fn harvest_fooling_images(runs: &[RunRecord], per_run: usize, seed: u64) -> Result<Vec<Image>> {
    let half = per_run / 2;
    let mut out = Vec::with_capacity(runs.len() * 2 * half);
    if half == 0 {
        return Ok(out);
    }
    for (r, run) in runs.iter().enumerate() {
        let Some(first) = &run.first_generation else {
            return Err(Error::Data(format!("run {r} has no recorded first generation")));
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[r as u64]));
        for archive in [first, &run.last] {
            let images: Vec<&Image> = archive.champions().map(|(_, e)| &e.image).collect();
            if images.len() < half {
                return Err(Error::Data(format!(
                    "run {r} has {} champions, {half} needed per generation",
                    images.len()
                )));
            }
            out.extend(images.choose_multiple(&mut rng, half).map(|&i| i.clone()));
        }
    }
    Ok(out)
}

/// Fooling images accumulated so far; it only ever grows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FoolingPool {
    pub train: Vec<Image>,
    pub val: Vec<Image>,
}

/// Train model `iteration` from scratch: on the base data for iteration 1,
/// otherwise on base + pool with the pool as the extra class.
pub fn retrain_iteration(
    base: &MnistSplits,
    pool: &FoolingPool,
    cfg: &RetrainConfig,
    iteration: usize,
) -> Result<(ConvNet<f32>, MetricsRow)> {
    let (train_ds, val_ds) = datasets(base, pool, iteration)?;
    let classes = train_ds.num_classes();
    let (w, h, c) = train_ds.dims().ok_or_else(|| Error::Data("empty training set".into()))?;
    let seed = derive_seed(cfg.seed, &[iteration as u64, 0]);
    let model = ConvNet::<f32>::new(Shape3::new(c, h, w), &cfg.specs(classes), seed)?;
    let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
    let (model, _) = train(model, &train_ds, &train_cfg, None)?;
    let row = measure(&model, base, &train_ds, &val_ds, iteration)?;
    Ok((model, row))
}

fn datasets(base: &MnistSplits, pool: &FoolingPool, iteration: usize) -> Result<(LabeledDataset, LabeledDataset)> {
    if iteration <= 1 {
        Ok((base.train.clone(), base.validation.clone()))
    } else {
        Ok((append_fooling_class(&base.train, &pool.train)?, append_fooling_class(&base.validation, &pool.val)?))
    }
}

fn measure(
    model: &ConvNet<f32>,
    base: &MnistSplits,
    train_ds: &LabeledDataset,
    val_ds: &LabeledDataset,
    iteration: usize,
) -> Result<MetricsRow> {
    let error = evaluate_error(model, val_ds)?;
    let mnist_error = if val_ds.len() == base.validation.len() { error } else { evaluate_error(model, &base.validation)? };
    Ok(MetricsRow { iteration, error, mnist_error, train: train_ds.len(), val: val_ds.len(), score: None })
}

/// Evolve against `model` over the original `classes` only; returns the
/// runs and the median final champion confidence across them.
pub fn reattack(
    model: &ConvNet<f32>,
    classes: usize,
    cfg: &RetrainConfig,
    iteration: usize,
) -> Result<(Vec<RunRecord>, f64)> {
    if classes > model.num_classes() {
        return Err(Error::Range(format!("{classes} targets for a {}-class model", model.num_classes())));
    }
    let ev = Evaluator::single(model);
    let runs = cfg.runs_for(iteration);
    let records: Vec<Result<RunRecord>> = par::map_indexed(runs, |r| {
        let seed = derive_seed(cfg.seed, &[iteration as u64, 1, r as u64]);
        let enc = &cfg.evolve.encoding;
        let dims = (enc.width, enc.height, enc.channels);
        let mut archive = EliteArchive::new(enc.encoding, dims, model.num_classes(), (0..classes).collect(), seed)?;
        let out = evolve(&mut archive, &ev, &cfg.evolve)?;
        Ok(RunRecord { first_generation: out.first_generation, last: archive })
    });
    let records: Vec<RunRecord> = records.into_iter().collect::<Result<_>>()?;
    let confidences: Vec<f64> =
        records.iter().flat_map(|r| r.last.champions().map(|(_, e)| e.confidence).collect::<Vec<_>>()).collect();
    Ok((records, median(&confidences)))
}

/// Everything produced by one iteration.
#[derive(Clone, Debug)]
pub struct IterationOutcome {
    pub row: MetricsRow,
    pub model: ConvNet<f32>,
    pub runs: Vec<RunRecord>,
    /// Pool the model was trained with.
    pub pool: FoolingPool,
}

/// Run `cfg.iterations` rounds of train → re-attack → harvest. `initial`
/// stands in for the iteration-1 model when given.
pub fn retrain_loop(
    base: &MnistSplits,
    cfg: &RetrainConfig,
    initial: Option<ConvNet<f32>>,
    on_iteration: &mut dyn FnMut(&IterationOutcome) -> Result<()>,
) -> Result<Vec<MetricsRow>> {
    if cfg.iterations == 0 {
        return Err(Error::Precondition("at least one iteration is required".into()));
    }
    if base.train.fooling_class().is_some() {
        return Err(Error::Precondition("base data already has a fooling class".into()));
    }
    let classes = base.train.num_classes();
    let mut pool = FoolingPool::default();
    let mut initial = initial;
    let mut rows = Vec::with_capacity(cfg.iterations);
    for iteration in 1..=cfg.iterations {
        let (model, mut row) = match initial.take().filter(|_| iteration == 1) {
            Some(m) => {
                if m.num_classes() != classes {
                    return Err(Error::shape(format!("initial model has {} classes, data {classes}", m.num_classes())));
                }
                let (t, v) = datasets(base, &pool, 1)?;
                let row = measure(&m, base, &t, &v, 1)?;
                (m, row)
            }
            None => retrain_iteration(base, &pool, cfg, iteration)?,
        };
        let (runs, score) = reattack(&model, classes, cfg, iteration)?;
        row.score = Some(score);
        let outcome = IterationOutcome { row: row.clone(), model, runs, pool: pool.clone() };
        on_iteration(&outcome)?;
        rows.push(row);

        if iteration < cfg.iterations {
            let (add_train, add_val) = cfg.schedule.additions(iteration + 1);
            let mut harvested =
                harvest_fooling_images(&outcome.runs, cfg.images_per_run, derive_seed(cfg.seed, &[iteration as u64, 2]))?;
            if harvested.len() < add_train + add_val {
                return Err(Error::Data(format!(
                    "harvested {} images, iteration {} needs {}",
                    harvested.len(),
                    iteration + 1,
                    add_train + add_val
                )));
            }
            harvested.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[iteration as u64, 3])));
            let mut it = harvested.into_iter();
            pool.train.extend(it.by_ref().take(add_train));
            pool.val.extend(it.take(add_val));
        }
    }
    Ok(rows)
}
