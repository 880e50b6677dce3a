//! Acceptance gate. Needs the four MNIST IDX files in `FOOLING_MNIST_DIR`
//! (default `<workspace>/data/mnist`). Prints one PASS/FAIL line per
//! criterion to stderr and to `<target tmp>/acceptance/summary.txt`, then
//! fails if any criterion failed.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use fooling::analysis::{classes_at_least, confidence_stats, cross_test};
use fooling::dataset::{
    mean_image, parse_idx_images, parse_idx_labels, serialize_idx_images, serialize_idx_labels, Image, MnistSplits,
};
use fooling::encodings::{
    cppn_init, cppn_mutate, cppn_render, polynomial_delta, CppnConfig, CppnGenome, DirectGenome, Encoding,
    EncodingConfig, Genome, MutationSchedule,
};
use fooling::gradascent::{
    ascend, ascend_variants, gaussian_blur, gaussian_kernel, percentile_zero, AscentConfig, Variant,
};
use fooling::mapelites::{
    archive_load, archive_save, evolve, evolve_runs, evolve_with, EliteArchive, Evaluator, EvolveConfig, Fitness,
    FitnessVector, GenerationStat,
};
use fooling::nnet::{
    evaluate_error, load_model, save_model, train_lenet, ConvNet, LayerSpec, Shape3, Tensor, TrainConfig, MNIST_INPUT,
};
use fooling::par;
use fooling::retrain::{metrics_csv, retrain_loop, RetrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Gate {
    results: Vec<(String, bool)>,
    log: String,
}

impl Gate {
    fn record(&mut self, id: &str, pass: bool, detail: impl AsRef<str>) {
        let line = format!("{} {id}: {}", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
        let _ = writeln!(std::io::stderr(), "{line}");
        self.log.push_str(&line);
        self.log.push('\n');
        self.results.push((id.to_string(), pass));
    }

    fn note(&mut self, text: &str) {
        let _ = writeln!(std::io::stderr(), "{text}");
        self.log.push_str(text);
        self.log.push('\n');
    }
}

fn out_dir() -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn mnist_dir() -> PathBuf {
    std::env::var_os("FOOLING_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn trained(splits: &MnistSplits, seed: u64) -> (ConvNet<f32>, f64, f64) {
    let t = Instant::now();
    let cfg = TrainConfig { seed, ..TrainConfig::default() };
    let (model, _) = par::with_workers(1, || train_lenet(&splits.train, &cfg, None)).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let err = evaluate_error(&model, &splits.validation).unwrap();
    (model, err, secs)
}

fn mnist_cfg(encoding: Encoding, generations: u64) -> EvolveConfig {
    EvolveConfig::new(EncodingConfig::mnist(encoding), generations)
}

fn champion_images(archives: &[EliteArchive]) -> Vec<Image> {
    archives.iter().flat_map(|a| a.champions().map(|(_, e)| e.image.clone()).collect::<Vec<_>>()).collect()
}

#[test]
fn acceptance_criteria() {
    let mut gate = Gate { results: Vec::new(), log: String::new() };
    properties(&mut gate);

    let dir = mnist_dir();
    match fooling::dataset::load_mnist(&dir, None) {
        Ok(splits) => mnist_criteria(&mut gate, &splits),
        Err(e) => gate.record("mnist", false, format!("cannot load MNIST from {}: {e}", dir.display())),
    }

    std::fs::write(out_dir().join("summary.txt"), &gate.log).unwrap();
    let failed: Vec<&str> = gate.results.iter().filter(|r| !r.1).map(|r| r.0.as_str()).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

fn mnist_criteria(gate: &mut Gate, splits: &MnistSplits) {
    // 1. training fidelity
    let (model_a, err_a, secs_a) = trained(splits, 1);
    let subset = MnistSplits { train: splits.train.truncated(10_000), validation: splits.validation.clone() };
    let (_, err_sub, secs_sub) = trained(&subset, 1);
    gate.record(
        "1 training fidelity",
        err_a <= 0.02 && err_sub <= 0.04 && secs_a <= 1800.0,
        format!(
            "full-MNIST validation error {:.2}% (≤ 2.0%) in {secs_a:.0}s single-threaded (≤ 1800s); \
             10k-subset error {:.2}% (≤ 4%) in {secs_sub:.0}s",
            err_a * 100.0,
            err_sub * 100.0
        ),
    );

    // 9. confidence baseline direction
    let st = confidence_stats(&model_a, &splits.validation).unwrap();
    let pass = matches!((st.median_correct, st.median_misclassified), (Some(c), Some(m)) if c > m);
    gate.record(
        "9 confidence baseline",
        pass,
        format!(
            "median confidence all {:.4}, correct {:?} > misclassified {:?} ({} of {} correct)",
            st.median_all, st.median_correct, st.median_misclassified, st.correct, st.count
        ),
    );

    // 2 and 3. evolutionary fooling
    let ev = Evaluator::single(&model_a);
    for (id, encoding) in [("2 direct-encoding fooling", Encoding::Direct), ("3 CPPN fooling", Encoding::Cppn)] {
        let t = Instant::now();
        let mut archive = EliteArchive::for_fitness(encoding, &ev, 1).unwrap();
        let out = evolve(&mut archive, &ev, &mnist_cfg(encoding, 200)).unwrap();
        let secs = t.elapsed().as_secs_f64();
        let median = archive.median_confidence();
        let first = out.trace.iter().find(|s| s.max >= 0.99).map(|s| s.generation);
        let early = first.is_some_and(|g| g < 50);
        gate.record(
            id,
            median >= 0.99 && early && secs <= 600.0,
            format!(
                "median champion confidence {median:.6} after 200 generations (≥ 0.99); first class ≥ 0.99 at \
                 generation {first:?} (< 50); {secs:.1}s (≤ 600s)"
            ),
        );
        archive_save(&archive, out_dir().join(format!("archive_{encoding}"))).unwrap();
    }

    // 4. gradient ascent
    let mean = mean_image(&splits.train).unwrap();
    let t = Instant::now();
    let mut plain_ok = 0;
    let mut ordered = 0;
    let mut worst_steps = 0;
    let mut detail = String::new();
    for class in 0..10 {
        let runs = ascend_variants(&model_a, &mean, class, 1).unwrap();
        let plain = &runs.iter().find(|(v, _)| *v == Variant::Plain).unwrap().1;
        let steps = plain.trace.iter().filter(|s| s.lr > 0.0).count();
        worst_steps = worst_steps.max(steps);
        if plain.confidence >= 0.9999 && steps <= 2000 {
            plain_ok += 1;
        }
        let regs: Vec<f64> = runs.iter().filter(|(v, _)| *v != Variant::Plain).map(|(_, r)| r.confidence).collect();
        if regs.iter().all(|&c| c <= plain.confidence) {
            ordered += 1;
        }
        let _ = write!(detail, " {class}:{:.5}/{}", plain.confidence, regs.iter().map(|c| format!("{c:.4}")).collect::<Vec<_>>().join("/"));
    }
    let secs = t.elapsed().as_secs_f64();
    gate.record(
        "4 gradient ascent",
        plain_ok == 10 && ordered == 10 && secs <= 300.0,
        format!(
            "plain reached 0.9999 for {plain_ok}/10 classes (max {worst_steps} accepted steps); regularized ≤ plain for \
             {ordered}/10; {secs:.1}s (≤ 300s); plain/l2/blur-l1:{detail}"
        ),
    );

    // 6. cross-network transfer
    let (model_b, err_b, _) = trained(splits, 2);
    gate.note(&format!("model B (seed 2) validation error {:.2}%", err_b * 100.0));
    let cfg = mnist_cfg(Encoding::Cppn, 200);
    let all: Vec<usize> = (0..10).collect();
    let runs_a = evolve_runs(&Evaluator::single(&model_a), &cfg, &all, 10, 61).unwrap();
    let runs_b = evolve_runs(&Evaluator::single(&model_b), &cfg, &all, 10, 62).unwrap();
    let (ia, ib) = (champion_images(&runs_a), champion_images(&runs_b));
    let report = cross_test(&ia, &ib, &model_a, &model_b).unwrap();
    let swapped = cross_test(&ib, &ia, &model_b, &model_a).unwrap();
    let exchange = swapped.a_on_b_images == report.b_on_a_images
        && swapped.b_on_a_images == report.a_on_b_images
        && swapped.average_match_rate == report.average_match_rate;
    let csv = report.to_csv();
    std::fs::write(out_dir().join("transfer.csv"), &csv).unwrap();
    gate.note(csv.trim_end());
    gate.record(
        "6 cross-network transfer",
        ia.len() == 100 && ib.len() == 100 && report.average_match_rate >= 0.20 && exchange,
        format!(
            "{} + {} images; average top-1 match rate {:.3} (≥ 0.20); exchange-consistent: {exchange}",
            ia.len(),
            ib.len(),
            report.average_match_rate
        ),
    );

    // 7. ensemble attack
    let (model_c, err_c, _) = trained(splits, 3);
    gate.note(&format!("model C (seed 3) validation error {:.2}%", err_c * 100.0));
    let ensemble = Evaluator::new(&[&model_a, &model_b, &model_c]).unwrap();
    let mut archive = EliteArchive::for_fitness(Encoding::Cppn, &ensemble, 7).unwrap();
    evolve(&mut archive, &ensemble, &mnist_cfg(Encoding::Cppn, 1000)).unwrap();
    let hits = classes_at_least(&archive, 0.90);
    gate.record(
        "7 ensemble attack",
        hits >= 3,
        format!("{hits}/10 classes ≥ 0.90 against the 3-model mean after 1000 generations (≥ 3)"),
    );

    // 5. retraining loop
    let t = Instant::now();
    let cfg = RetrainConfig::mnist(3, 5);
    let rows = retrain_loop(splits, &cfg, Some(model_a), &mut |_| Ok(())).unwrap();
    let secs = t.elapsed().as_secs_f64();
    gate.note(metrics_csv(&rows).trim_end());
    let base = rows[0].mnist_error;
    let drift = rows.iter().map(|r| (r.mnist_error - base).abs()).fold(0.0, f64::max);
    let strong = rows.iter().filter(|r| r.score.is_some_and(|s| s >= 0.90)).count();
    gate.record(
        "5 retraining loop",
        rows.len() == 3 && drift <= 0.005 && strong >= 2 && secs <= 7200.0,
        format!(
            "max MNIST-error drift {:.2} pp (≤ 0.5); re-attack score ≥ 0.90 in {strong}/3 iterations (≥ 2); {secs:.0}s \
             (≤ 7200s)",
            drift * 100.0
        ),
    );
}

// ---- 8. property suites ------------------------------------------------------

type Check = fn() -> Result<String, String>;

fn properties(gate: &mut Gate) {
    let checks: [(&str, Check); 10] = [
        ("8a finite-difference gradients", fd_gradients),
        ("8b softmax normalization", softmax_normalization),
        ("8c polynomial mutation", polynomial_mutation),
        ("8d mutation-rate schedule", rate_schedule),
        ("8e archive monotonicity and class locality", archive_properties),
        ("8f CPPN determinism and acyclicity", cppn_properties),
        ("8g blur", blur_properties),
        ("8h percentile zeroing", percentile_counts),
        ("8i round trips", round_trips),
        ("8j seed determinism", seed_determinism),
    ];
    let mut all = true;
    for (id, check) in checks {
        let r = check();
        all &= r.is_ok();
        match r {
            Ok(d) => gate.record(id, true, d),
            Err(d) => gate.record(id, false, d),
        }
    }
    gate.record("8 property suites", all, "all sub-suites above");
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn tiny_net(seed: u64) -> ConvNet<f64> {
    let specs = [
        LayerSpec::Conv { kernel: 3, stride: 1, out_channels: 2 },
        LayerSpec::MaxPool { window: 2, stride: 2 },
        LayerSpec::Dense { width: 5 },
        LayerSpec::Relu,
        LayerSpec::Dense { width: 3 },
    ];
    let mut net = ConvNet::<f64>::new(Shape3::new(1, 6, 6), &specs, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
    for p in net.parameters_mut() {
        for v in p.values_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    net
}

fn batch(rng: &mut ChaCha8Rng, b: usize, s: Shape3) -> Tensor<f64> {
    Tensor::new(vec![b, s.channels, s.height, s.width], (0..b * s.size()).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn ce_loss(net: &ConvNet<f64>, x: &Tensor<f64>, labels: &[usize]) -> f64 {
    let p = net.forward(x).unwrap();
    labels.iter().enumerate().map(|(i, &y)| -p.row(i)[y].ln()).sum::<f64>() / labels.len() as f64
}

fn fd_gradients() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst, mut one_sided, mut total) = (0.0f64, 0, 0);
    for seed in 0..100 {
        let net = tiny_net(seed);
        let x = batch(&mut rng, 2, net.input_shape());
        let labels: Vec<usize> = (0..2).map(|_| rng.random_range(0..3)).collect();
        let (grads, _) = net.backward(&x, &labels).unwrap();
        let pattern = net.activation_pattern(&x).unwrap();
        let mut probe = net.clone();
        for (ti, g) in grads.iter().enumerate() {
            for j in 0..g.len() {
                let orig = probe.parameters()[ti].values()[j];
                let mut at = |v: f64| {
                    probe.parameters_mut()[ti].values_mut()[j] = v;
                    let out = (ce_loss(&probe, &x, &labels), probe.activation_pattern(&x).unwrap() == pattern);
                    probe.parameters_mut()[ti].values_mut()[j] = orig;
                    out
                };
                let h = 1e-4;
                let ((up, up_ok), (down, down_ok)) = (at(orig + h), at(orig - h));
                let fd = if up_ok && down_ok {
                    (up - down) / (2.0 * h)
                } else {
                    one_sided += 1;
                    let s = 1e-7;
                    let here = at(orig).0;
                    if up_ok {
                        (at(orig + s).0 - here) / s
                    } else {
                        (here - at(orig - s).0) / s
                    }
                };
                let a = g.values()[j];
                let scale = a.abs().max(fd.abs());
                let rel = if scale < 1e-7 { (a - fd).abs() / 1e-7 } else { (a - fd).abs() / scale };
                worst = worst.max(rel);
                total += 1;
            }
        }
    }
    ensure(worst < 1e-4 && one_sided * 100 < total, || {
        format!("worst relative error {worst:.2e}; {one_sided} of {total} coordinates one-sided")
    })?;
    Ok(format!("100 tiny models, {total} coordinates, worst relative error {worst:.2e} (< 1e-4)"))
}

fn softmax_normalization() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let net = tiny_net(seed);
        let p = net.forward(&batch(&mut rng, 4, net.input_shape())).unwrap();
        for i in 0..4 {
            let row = p.row(i);
            ensure(row.iter().all(|v| (0.0..=1.0).contains(v)), || format!("entry outside [0, 1]: {row:?}"))?;
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    let lenet = ConvNet::<f32>::lenet(MNIST_INPUT, 10, 4).unwrap();
    let imgs: Vec<Image> =
        (0..8).map(|_| Image::new(28, 28, 1, (0..784).map(|_| rng.random()).collect()).unwrap()).collect();
    let mut worst32 = 0.0f64;
    for row in lenet.predict(&imgs).unwrap() {
        worst32 = worst32.max((row.iter().sum::<f64>() - 1.0).abs());
    }
    ensure(worst < 1e-12 && worst32 < 1e-5, || format!("row sums off by {worst:.1e} (f64), {worst32:.1e} (f32)"))?;
    Ok(format!("max |Σp − 1| = {worst:.1e} (f64), {worst32:.1e} (f32 LeNet)"))
}

fn polynomial_mutation() -> Result<String, String> {
    ensure(polynomial_delta(0.5, 15.0) == 0.0, || "δ(0.5) ≠ 0".into())?;
    for k in 0..=1000 {
        let u = k as f64 / 1000.0;
        let (a, b) = (polynomial_delta(u, 15.0), polynomial_delta(1.0 - u, 15.0));
        ensure((a + b).abs() < 1e-12, || format!("δ({u}) = {a} but δ(1−u) = {b}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 200_000;
    let mut draws: Vec<f64> = (0..n).map(|_| polynomial_delta(rng.random(), 15.0)).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let positive = draws.iter().filter(|&&d| d > 0.0).count() as f64 / n as f64;
    draws.sort_by(f64::total_cmp);
    let median = 0.5 * (draws[n / 2 - 1] + draws[n / 2]);
    ensure(mean.abs() < 4.0 * sd / (n as f64).sqrt() && (positive - 0.5).abs() < 0.01 && median.abs() < 1e-3, || {
        format!("empirical mean {mean:.2e}, median {median:.2e}, positive share {positive:.4}")
    })?;
    Ok(format!("δ(0.5) = 0, δ(u) = −δ(1−u); {n} draws: mean {mean:.1e}, median {median:.1e}, P(δ>0) {positive:.4}"))
}

fn rate_schedule() -> Result<String, String> {
    let s = MutationSchedule::default();
    let got = [s.rate(0), s.rate(1000), s.rate(2000)];
    ensure(got == [0.1, 0.05, 0.025], || format!("rates {got:?}"))?;
    Ok(format!("rates at 0/1000/2000 = {got:?}"))
}

struct RandomFitness;

impl Fitness for RandomFitness {
    fn num_classes(&self) -> usize {
        6
    }
    fn image_dims(&self) -> (usize, usize, usize) {
        (10, 10, 1)
    }
    fn score_batch(&self, images: &[Image]) -> fooling::Result<Vec<FitnessVector>> {
        Ok(images
            .iter()
            .map(|img| {
                let seed = img.data().iter().fold(0u64, |h, &b| h.wrapping_mul(1_000_003).wrapping_add(b as u64));
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                let raw: Vec<f64> = (0..6).map(|_| r.random::<f64>().powi(3)).collect();
                let s: f64 = raw.iter().sum();
                FitnessVector(raw.iter().map(|v| v / s).collect())
            })
            .collect())
    }
}

fn archive_properties() -> Result<String, String> {
    let mut replaced = 0;
    for encoding in [Encoding::Direct, Encoding::Cppn] {
        let f = RandomFitness;
        let mut archive = EliteArchive::for_fitness(encoding, &f, 11).unwrap();
        let cfg = EvolveConfig { generations: 60, batch_per_generation: 10, encoding: EncodingConfig::new(encoding, 10, 10, 1) };
        let mut prev: Vec<Option<(f64, Genome)>> = vec![None; 6];
        let mut bad = None;
        let mut watch = |s: &GenerationStat, a: &EliteArchive| {
            replaced += s.replacements;
            for (c, p) in prev.iter_mut().enumerate() {
                let now = a.elite(c).map(|e| (e.confidence, e.genome.clone()));
                if let (Some(old), Some(new)) = (p.as_ref(), now.as_ref()) {
                    if new.0 < old.0 || (new.1 != old.1 && new.0 <= old.0) {
                        bad = Some(format!("class {c} went from {} to {} at generation {}", old.0, new.0, s.generation));
                    }
                }
                *p = now;
            }
        };
        evolve_with(&mut archive, &f, &cfg, &mut watch).unwrap();
        if let Some(b) = bad {
            return Err(b);
        }
        // a candidate that beats exactly one class changes only that class
        let before = archive.clone();
        let target = 2;
        let mut scores: Vec<f64> = (0..6).map(|c| before.confidence(c).unwrap() - 1e-9).collect();
        scores[target] = before.confidence(target).unwrap() + 1e-9;
        let e = before.elite(0).unwrap();
        let changed = archive.offer(&e.genome, &e.image, &scores, 99);
        ensure(changed == vec![target], || format!("offer replaced {changed:?}"))?;
        for c in (0..6).filter(|&c| c != target) {
            ensure(archive.elite(c) == before.elite(c), || format!("class {c} touched"))?;
        }
    }
    Ok(format!("direct and CPPN, 60 generations each, {replaced} replacements, all strictly improving and class-local"))
}

fn acyclic(g: &CppnGenome) -> bool {
    // repeated removal of nodes with no incoming edge
    let ids: Vec<u32> = g.nodes().iter().map(|n| n.id).collect();
    let mut edges: Vec<(u32, u32)> = g.connections().iter().map(|c| (c.source, c.target)).collect();
    let mut left = ids.clone();
    while !left.is_empty() {
        let free: Vec<u32> = left.iter().copied().filter(|n| !edges.iter().any(|e| e.1 == *n)).collect();
        if free.is_empty() {
            return false;
        }
        left.retain(|n| !free.contains(n));
        edges.retain(|e| !free.contains(&e.0));
    }
    true
}

fn cppn_properties() -> Result<String, String> {
    let cfg = CppnConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut g = cppn_init(1, &cfg, &mut rng).unwrap();
    for i in 0..1000 {
        g = cppn_mutate(&g, &cfg, &mut rng);
        ensure(acyclic(&g), || format!("cycle after mutation {i}"))?;
        if i % 50 == 0 {
            let a = cppn_render(&g, 28, 28);
            ensure(a == cppn_render(&g, 28, 28), || format!("render differs at mutation {i}"))?;
            let back = CppnGenome::from_json(&serde_json::to_string(&g).unwrap()).map_err(|e| e.to_string())?;
            ensure(cppn_render(&back, 28, 28) == a, || "render changed through JSON".into())?;
        }
    }
    Ok(format!(
        "1000 mutations acyclic; final genome {} hidden nodes, {} connections; renders repeatable",
        g.hidden_count(),
        g.connections().len()
    ))
}

fn blur_properties() -> Result<String, String> {
    for r in [0.3, 0.5, 1.0, 2.0] {
        let k = gaussian_kernel(r);
        let s: f64 = k.iter().sum();
        ensure((s - 1.0).abs() < 1e-12, || format!("kernel({r}) sums to {s}"))?;
        for (w, h) in [(28, 28), (3, 5), (1, 1)] {
            let c = vec![0.37; 2 * w * h];
            let b = gaussian_blur(&c, 2, w, h, r).map_err(|e| e.to_string())?;
            ensure(b.iter().all(|v| (v - 0.37).abs() < 1e-12), || format!("constant {w}x{h} image moved under radius {r}"))?;
        }
    }
    Ok("kernels sum to 1 and constant images are fixed points for radii 0.3/0.5/1/2".into())
}

fn percentile_counts() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (channels, plane) in [(1usize, 784usize), (3, 100), (1, 7)] {
        for f in [0.0, 0.2, 0.5, 0.99] {
            let mut v: Vec<f64> = (0..channels * plane).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norms: Vec<f64> =
                (0..plane).map(|p| (0..channels).map(|c| v[c * plane + p].powi(2)).sum::<f64>().sqrt()).collect();
            let zeroed = percentile_zero(&mut v, channels, f).map_err(|e| e.to_string())?;
            let want = (f * plane as f64).floor() as usize;
            ensure(zeroed.len() == want, || format!("{} zeroed for fraction {f} of {plane}, expected {want}", zeroed.len()))?;
            let max_zeroed = zeroed.iter().map(|&p| norms[p]).fold(0.0, f64::max);
            let kept_min = (0..plane).filter(|p| !zeroed.contains(p)).map(|p| norms[p]).fold(f64::INFINITY, f64::min);
            ensure(max_zeroed <= kept_min, || "a kept pixel has a smaller norm than a zeroed one".into())?;
            ensure(zeroed.iter().all(|&p| (0..channels).all(|c| v[c * plane + p] == 0.0)), || "pixel not zeroed".into())?;
        }
    }
    Ok("zeroed count = ⌊fraction·pixels⌋ and only the smallest-norm pixels are zeroed".into())
}

fn round_trips() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let imgs: Vec<Image> = (0..5).map(|_| Image::new(28, 28, 1, (0..784).map(|_| rng.random()).collect()).unwrap()).collect();
    let labels = vec![3, 1, 4, 1, 5];
    let back = parse_idx_images(&serialize_idx_images(&imgs, 28, 28).unwrap()).map_err(|e| e.to_string())?;
    ensure(back == imgs, || "IDX images changed".into())?;
    ensure(parse_idx_labels(&serialize_idx_labels(&labels).unwrap()).map_err(|e| e.to_string())? == labels, || "IDX labels changed".into())?;

    for encoding in [Encoding::Direct, Encoding::Cppn] {
        let enc = EncodingConfig::mnist(encoding);
        let mut g = enc.init(&mut rng).unwrap();
        for i in 0..20 {
            g = enc.mutate(&g, i, &mut rng);
        }
        let back = Genome::from_json(&g.to_json()).map_err(|e| e.to_string())?;
        ensure(back == g && enc.render(&back) == enc.render(&g), || format!("{encoding} genome changed"))?;
    }
    let d = DirectGenome::new(2, 2, 1, vec![0, 255, 7, 9]).unwrap();
    ensure(DirectGenome::from_json(&serde_json::to_string(&d).unwrap()).unwrap() == d, || "direct genome changed".into())?;

    let net = ConvNet::<f32>::lenet(MNIST_INPUT, 10, 9).unwrap();
    let back: ConvNet<f32> = load_model(&save_model(&net)).map_err(|e| e.to_string())?;
    ensure(back == net, || "model changed".into())?;

    let ev = Evaluator::single(&net);
    let mut archive = EliteArchive::for_fitness(Encoding::Cppn, &ev, 4).unwrap();
    evolve(&mut archive, &ev, &EvolveConfig { generations: 3, batch_per_generation: 6, encoding: EncodingConfig::mnist(Encoding::Cppn) })
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    archive_save(&archive, dir.path()).map_err(|e| e.to_string())?;
    ensure(archive_load(dir.path()).map_err(|e| e.to_string())? == archive, || "archive changed".into())?;
    Ok("IDX images/labels, direct and CPPN genomes, model weights, archive all round-trip exactly".into())
}

fn seed_determinism() -> Result<String, String> {
    let net = ConvNet::<f32>::lenet(MNIST_INPUT, 10, 5).unwrap();
    let ev = Evaluator::single(&net);
    let run = |seed: u64, workers: usize| {
        par::with_workers(workers, || {
            let mut a = EliteArchive::for_fitness(Encoding::Direct, &ev, seed).unwrap();
            evolve(&mut a, &ev, &mnist_cfg(Encoding::Direct, 5)).unwrap();
            a
        })
    };
    let a = run(3, 1);
    ensure(a == run(3, 2), || "evolve differs across worker counts".into())?;
    ensure(a != run(4, 1), || "evolve ignores its seed".into())?;

    let mean = fooling::dataset::MeanImage { width: 28, height: 28, channels: 1, values: vec![33.0; 784] };
    let cfg = AscentConfig { max_steps: 20, ..AscentConfig::variant(Variant::BlurL1, 2, 8) };
    let x = ascend(&net, &mean, &cfg).unwrap();
    let y = ascend(&net, &mean, &cfg).unwrap();
    ensure(x.pixels == y.pixels && x.trace == y.trace, || "ascend not repeatable".into())?;
    let z = ascend(&net, &mean, &AscentConfig { seed: 9, ..cfg }).unwrap();
    ensure(z.pixels != x.pixels, || "ascend ignores its seed".into())?;
    Ok("evolve identical across worker counts for a seed; ascend repeatable; different seeds differ".into())
}
