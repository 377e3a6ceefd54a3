//! Adversarial training: wires a generator (classical MLP or simulated
//! quantum circuit) against the shared discriminator and runs the
//! alternating BCE loop with per-epoch evaluation.
//!
//! Label convention: real = 1, fake = 0. The generator objective is the
//! non-saturating form, BCE of the discriminator's verdict on fakes against
//! the real label. Renormalization to sum one sits inside the
//! differentiation path, so the trained objective matches the evaluated
//! output.

use std::io::{self, BufRead, Read, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, GraphSample};
use crate::eval::{pooled_weight_std, triangle_valid, EvalError};
use crate::nn::{
    bce_loss, build_classical_generator, build_discriminator, AdamState, ForwardCache, MlpModel,
    NnError,
};
use crate::sim::{AnsatzSpec, SimError};

/// Latent noise dimension; fixed at six across all paper configurations.
pub const LATENT_DIM: usize = 6;
/// Quantum parameters start uniform in [-QUANTUM_INIT_RANGE, +QUANTUM_INIT_RANGE].
/// Half-angle coverage keeps the initial marginals close to their mean so
/// the first generated graphs are near-uniform, while staying far from the
/// zero-gradient symmetry at all-zero angles.
pub const QUANTUM_INIT_RANGE: f64 = std::f64::consts::FRAC_PI_2;

#[derive(Debug, Error)]
pub enum GanError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("quantum generator needs a 6-qubit circuit, got {0} qubits")]
    WrongQubitCount(usize),
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("metrics file is malformed: {0}")]
    BadMetrics(String),
}

/// Which generator architecture to train.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GeneratorKind {
    Classical,
    Quantum(AnsatzSpec),
}

/// Generator selection plus the (fixed) postprocessing contract: outputs are
/// renormalized to sum one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
}

impl GeneratorConfig {
    pub fn new(kind: GeneratorKind) -> Result<Self, GanError> {
        if let GeneratorKind::Quantum(spec) = kind {
            if spec.n_qubits != LATENT_DIM {
                return Err(GanError::WrongQubitCount(spec.n_qubits));
            }
        }
        Ok(Self { kind })
    }
}

/// How quantum parameter gradients are computed. Both are exact for this
/// gate set and agree to roundoff; adjoint costs O(gates) per sample instead
/// of O(params * gates).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Differentiator {
    ParameterShift,
    Adjoint,
}

/// A generator with its trainable parameters.
#[derive(Debug, Clone)]
pub enum Generator {
    Classical(MlpModel),
    Quantum { spec: AnsatzSpec, params: Vec<f64> },
}

/// Everything one generator forward pass produces; retained for backprop.
pub struct GeneratorForward {
    raw: [f64; 6],
    sum: f64,
    sample: GraphSample,
    /// Raw output summed to (numerically) zero and the uniform fallback was
    /// substituted; gradients vanish for such samples.
    pub fallback: bool,
    cache: Option<ForwardCache>,
}

impl Generator {
    /// Initialize from the run's seeded stream: the classical generator uses
    /// the MLP init scheme, quantum parameters are uniform in
    /// [-QUANTUM_INIT_RANGE, +QUANTUM_INIT_RANGE].
    pub fn init<R: Rng + ?Sized>(config: &GeneratorConfig, rng: &mut R) -> Self {
        match config.kind {
            GeneratorKind::Classical => Generator::Classical(build_classical_generator(rng)),
            GeneratorKind::Quantum(spec) => {
                let params = (0..spec.param_count())
                    .map(|_| rng.random_range(-QUANTUM_INIT_RANGE..=QUANTUM_INIT_RANGE))
                    .collect();
                Generator::Quantum { spec, params }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Generator::Classical(model) => model.param_count(),
            Generator::Quantum { params, .. } => params.len(),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Generator::Classical(model) => model.params(),
            Generator::Quantum { params, .. } => params,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Generator::Classical(model) => model.params_mut(),
            Generator::Quantum { params, .. } => params,
        }
    }

    /// Forward pass retaining what `backward` needs.
    pub fn forward(&self, z: &[f64]) -> Result<GeneratorForward, GanError> {
        let (raw, cache) = match self {
            Generator::Classical(model) => {
                let (out, cache) = model.forward(z)?;
                let raw: [f64; 6] = out
                    .try_into()
                    .expect("classical generator emits 6 weights");
                (raw, Some(cache))
            }
            Generator::Quantum { spec, params } => {
                let marginals = spec.run(params, z)?;
                let raw: [f64; 6] = marginals
                    .probs()
                    .try_into()
                    .expect("6-qubit circuit emits 6 marginals");
                (raw, None)
            }
        };
        let sum: f64 = raw.iter().sum();
        // A ReLU output can be exactly zero on every edge; fall back to the
        // uniform graph and flag it.
        let fallback = sum <= crate::data::DEGENERATE_SUM_EPS;
        let sample = if fallback {
            GraphSample::from_raw([1.0; 6]).expect("uniform graph normalizes")
        } else {
            GraphSample::from_raw(raw)?
        };
        Ok(GeneratorForward {
            raw,
            sum,
            sample,
            fallback,
            cache,
        })
    }

    /// Generate one graph; the flag marks the uniform fallback.
    pub fn generate(&self, z: &[f64]) -> Result<(GraphSample, bool), GanError> {
        let fwd = self.forward(z)?;
        Ok((fwd.sample, fwd.fallback))
    }

    /// Pull a gradient with respect to the normalized weights back onto the
    /// flat parameter vector, chaining through the renormalization Jacobian
    /// and then through MLP backprop or the circuit differentiator.
    pub fn backward(
        &self,
        z: &[f64],
        fwd: &GeneratorForward,
        upstream: &[f64; 6],
        differentiator: Differentiator,
    ) -> Result<Vec<f64>, GanError> {
        if fwd.fallback {
            return Ok(vec![0.0; self.param_count()]);
        }
        let up_raw = renormalize_vjp(upstream, &fwd.raw, fwd.sum);
        match self {
            Generator::Classical(model) => {
                let cache = fwd.cache.as_ref().expect("classical forward keeps a cache");
                Ok(model.backward(cache, &up_raw)?.param_grads)
            }
            Generator::Quantum { spec, params } => match differentiator {
                Differentiator::Adjoint => Ok(spec.adjoint_gradient(params, z, &up_raw)?),
                Differentiator::ParameterShift => {
                    Ok(spec.parameter_shift_jacobian(params, z)?.vjp(&up_raw)?)
                }
            },
        }
    }
}

/// Vector-Jacobian product of w -> w / sum(w):
/// d(w_i/S)/dw_j = delta_ij / S - w_i / S^2, so the pullback of `upstream`
/// is (upstream_j - <upstream, w/S>) / S.
pub fn renormalize_vjp(upstream: &[f64; 6], raw: &[f64; 6], sum: f64) -> [f64; 6] {
    let inner: f64 = upstream
        .iter()
        .zip(raw.iter())
        .map(|(u, w)| u * w / sum)
        .sum();
    std::array::from_fn(|j| (upstream[j] - inner) / sum)
}

/// Draw a batch of i.i.d. standard-normal latent vectors from the stream.
pub fn sample_latent<R: Rng + ?Sized>(rng: &mut R, batch: usize) -> Vec<[f64; LATENT_DIM]> {
    (0..batch)
        .map(|_| std::array::from_fn(|_| StandardNormal.sample(rng)))
        .collect()
}

/// Hyperparameters of one training experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_disc: f64,
    pub lr_gen: f64,
    pub seeds: Vec<u64>,
    pub eval_samples: usize,
    pub eval_every: usize,
    pub differentiator: Differentiator,
}

impl TrainConfig {
    /// The configuration reported in the source experiments: 1000 epochs,
    /// batch 32, learning rates 0.3 (discriminator) and 0.001 (generator),
    /// five seeds, 1000 evaluation samples every epoch.
    pub fn paper_scale() -> Self {
        Self {
            epochs: 1000,
            batch_size: 32,
            lr_disc: 0.3,
            lr_gen: 0.001,
            seeds: vec![0, 1, 2, 3, 4],
            eval_samples: 1000,
            eval_every: 1,
            differentiator: Differentiator::Adjoint,
        }
    }

    /// Scaled-down preset for laptop-budget runs: 200 epochs, three seeds,
    /// evaluation every 10 epochs.
    pub fn desk_scale() -> Self {
        Self {
            epochs: 200,
            seeds: vec![0, 1, 2],
            eval_every: 10,
            ..Self::paper_scale()
        }
    }

    pub fn validate(&self) -> Result<(), GanError> {
        if self.batch_size == 0 || self.eval_samples == 0 || self.eval_every == 0 {
            return Err(GanError::BadConfig(
                "batch_size, eval_samples and eval_every must be at least 1".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(GanError::BadConfig("need at least one seed".into()));
        }
        if !(self.lr_disc > 0.0) || !(self.lr_gen > 0.0) {
            return Err(GanError::BadConfig("learning rates must be positive".into()));
        }
        Ok(())
    }
}

/// One evaluation row. For epoch 0 the losses are evaluation-mode (no
/// updates have happened); for epoch e > 0 they are the mean training losses
/// over epoch e's batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub seed: u64,
    pub epoch: usize,
    pub valid_count: usize,
    pub weight_std: f64,
    pub gen_loss: f64,
    pub disc_loss: f64,
}

/// Outcome of one seed's training run.
pub struct SeedRunResult {
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub discriminator: MlpModel,
    pub generator: Generator,
    /// Graphs generated at the final evaluation, for density reporting.
    pub final_samples: Vec<GraphSample>,
    /// Number of uniform-fallback substitutions across the whole run.
    pub fallback_count: u64,
}

/// One discriminator update: mean BCE over the real batch (label 1) plus an
/// equally sized generated batch (label 0), one Adam step.
fn update_discriminator(
    disc: &mut MlpModel,
    adam: &mut AdamState,
    real: &[GraphSample],
    fake: &[GraphSample],
) -> Result<f64, GanError> {
    let mut grads = vec![0.0; disc.param_count()];
    let mut loss_sum = 0.0;
    for (samples, label) in [(real, 1.0), (fake, 0.0)] {
        for s in samples {
            let (out, cache) = disc.forward(s.weights())?;
            let (loss, dloss) = bce_loss(out[0], label);
            loss_sum += loss;
            let tape = disc.backward(&cache, &[dloss])?;
            for (g, t) in grads.iter_mut().zip(tape.param_grads.iter()) {
                *g += t;
            }
        }
    }
    let scale = 1.0 / (real.len() + fake.len()) as f64;
    for g in &mut grads {
        *g *= scale;
    }
    adam.step(disc.params_mut(), &grads)?;
    Ok(loss_sum * scale)
}

/// One generator update on a fresh latent batch: loss is mean
/// BCE(D(G(z)), 1), chained through renormalization into the generator.
/// Returns the loss and the number of fallback samples in the batch.
fn update_generator(
    disc: &MlpModel,
    gen: &mut Generator,
    adam: &mut AdamState,
    latents: &[[f64; LATENT_DIM]],
    differentiator: Differentiator,
) -> Result<(f64, u64), GanError> {
    // Per-sample terms are independent; the reduction below stays in index
    // order so results do not depend on thread scheduling.
    let per_sample: Vec<(f64, Vec<f64>, bool)> = latents
        .par_iter()
        .map(|z| -> Result<(f64, Vec<f64>, bool), GanError> {
            let fwd = gen.forward(z)?;
            let (out, dcache) = disc.forward(fwd.sample.weights())?;
            let (loss, dloss) = bce_loss(out[0], 1.0);
            let tape = disc.backward(&dcache, &[dloss])?;
            let upstream: [f64; 6] = tape
                .input_grad
                .as_slice()
                .try_into()
                .expect("discriminator input is 6-dimensional");
            let grad = gen.backward(z, &fwd, &upstream, differentiator)?;
            Ok((loss, grad, fwd.fallback))
        })
        .collect::<Result<_, _>>()?;

    let scale = 1.0 / latents.len() as f64;
    let mut grads = vec![0.0; gen.param_count()];
    let mut loss_sum = 0.0;
    let mut fallbacks = 0;
    for (loss, grad, fallback) in &per_sample {
        loss_sum += loss;
        fallbacks += u64::from(*fallback);
        for (g, t) in grads.iter_mut().zip(grad.iter()) {
            *g += t * scale;
        }
    }
    adam.step(gen.params_mut(), &grads)?;
    Ok((loss_sum * scale, fallbacks))
}

/// One adversarial step: a discriminator update on the real batch against
/// freshly generated fakes, then a generator update on a fresh latent batch.
#[allow(clippy::too_many_arguments)]
pub fn train_step<R: Rng + ?Sized>(
    disc: &mut MlpModel,
    disc_adam: &mut AdamState,
    gen: &mut Generator,
    gen_adam: &mut AdamState,
    real_batch: &[GraphSample],
    rng: &mut R,
    differentiator: Differentiator,
) -> Result<(f64, f64), GanError> {
    let latents = sample_latent(rng, real_batch.len());
    let fakes: Vec<GraphSample> = latents
        .iter()
        .map(|z| gen.generate(z).map(|(g, _)| g))
        .collect::<Result<_, _>>()?;
    let disc_loss = update_discriminator(disc, disc_adam, real_batch, &fakes)?;

    let latents = sample_latent(rng, real_batch.len());
    let (gen_loss, _) = update_generator(disc, gen, gen_adam, &latents, differentiator)?;
    Ok((disc_loss, gen_loss))
}

struct Evaluation {
    samples: Vec<GraphSample>,
    valid_count: usize,
    weight_std: f64,
    fallbacks: u64,
}

fn evaluate_generator<R: Rng + ?Sized>(
    gen: &Generator,
    rng: &mut R,
    n: usize,
) -> Result<Evaluation, GanError> {
    let latents = sample_latent(rng, n);
    let generated: Vec<(GraphSample, bool)> = latents
        .par_iter()
        .map(|z| gen.generate(z))
        .collect::<Result<_, _>>()?;
    let fallbacks = generated.iter().filter(|(_, f)| *f).count() as u64;
    let samples: Vec<GraphSample> = generated.into_iter().map(|(g, _)| g).collect();
    let valid_count = samples.iter().filter(|s| triangle_valid(s).valid).count();
    let weight_std = pooled_weight_std(&samples)?;
    Ok(Evaluation {
        samples,
        valid_count,
        weight_std,
        fallbacks,
    })
}

/// Evaluation-mode losses before any update: the discriminator's mean BCE
/// over all real samples (label 1) and the generated set (label 0), and the
/// generator's mean BCE against the real label on the generated set.
fn evaluation_losses(
    disc: &MlpModel,
    dataset: &Dataset,
    generated: &[GraphSample],
) -> Result<(f64, f64), GanError> {
    let mut disc_sum = 0.0;
    for s in &dataset.samples {
        let (out, _) = disc.forward(s.weights())?;
        disc_sum += bce_loss(out[0], 1.0).0;
    }
    let mut gen_sum = 0.0;
    for g in generated {
        let (out, _) = disc.forward(g.weights())?;
        disc_sum += bce_loss(out[0], 0.0).0;
        gen_sum += bce_loss(out[0], 1.0).0;
    }
    let disc_loss = disc_sum / (dataset.samples.len() + generated.len()) as f64;
    let gen_loss = gen_sum / generated.len() as f64;
    Ok((disc_loss, gen_loss))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Train one seed end to end. Three independent ChaCha streams derive from
/// the seed: 0 for model initialization, 1 for the training loop (shuffles
/// and latent draws), 2 for evaluation draws, so the evaluation cadence
/// never perturbs the training trajectory.
pub fn run_seed(
    seed: u64,
    config: &TrainConfig,
    gen_config: &GeneratorConfig,
    dataset: &Dataset,
) -> Result<SeedRunResult, GanError> {
    config.validate()?;
    if dataset.samples.is_empty() {
        return Err(GanError::BadConfig("dataset is empty".into()));
    }

    let mut rng_init = stream_rng(seed, 0);
    let mut rng_train = stream_rng(seed, 1);
    let mut rng_eval = stream_rng(seed, 2);

    let mut disc = build_discriminator(&mut rng_init);
    let mut gen = Generator::init(gen_config, &mut rng_init);
    let mut disc_adam = AdamState::new(disc.param_count(), config.lr_disc);
    let mut gen_adam = AdamState::new(gen.param_count(), config.lr_gen);

    let mut fallback_count = 0;
    let mut records = Vec::new();

    // Epoch-0 row: the untouched models.
    let eval = evaluate_generator(&gen, &mut rng_eval, config.eval_samples)?;
    fallback_count += eval.fallbacks;
    let (disc_loss, gen_loss) = evaluation_losses(&disc, dataset, &eval.samples)?;
    records.push(MetricsRecord {
        seed,
        epoch: 0,
        valid_count: eval.valid_count,
        weight_std: eval.weight_std,
        gen_loss,
        disc_loss,
    });
    let mut final_samples = eval.samples;

    let mut indices: Vec<usize> = (0..dataset.samples.len()).collect();
    for epoch in 1..=config.epochs {
        // Fisher-Yates shuffle from the training stream.
        for i in (1..indices.len()).rev() {
            let j = rng_train.random_range(0..=i);
            indices.swap(i, j);
        }
        let mut disc_loss_sum = 0.0;
        let mut gen_loss_sum = 0.0;
        let mut batches = 0;
        for chunk in indices.chunks_exact(config.batch_size) {
            let real: Vec<GraphSample> = chunk.iter().map(|&i| dataset.samples[i]).collect();

            let latents = sample_latent(&mut rng_train, config.batch_size);
            let fakes: Vec<GraphSample> = latents
                .par_iter()
                .map(|z| gen.generate(z).map(|(g, _)| g))
                .collect::<Result<_, _>>()?;
            disc_loss_sum += update_discriminator(&mut disc, &mut disc_adam, &real, &fakes)?;

            let latents = sample_latent(&mut rng_train, config.batch_size);
            let (gen_loss, fallbacks) = update_generator(
                &disc,
                &mut gen,
                &mut gen_adam,
                &latents,
                config.differentiator,
            )?;
            gen_loss_sum += gen_loss;
            fallback_count += fallbacks;
            batches += 1;
        }
        if batches == 0 {
            return Err(GanError::BadConfig(format!(
                "dataset of {} samples yields no full batch of {}",
                dataset.samples.len(),
                config.batch_size
            )));
        }

        if epoch % config.eval_every == 0 || epoch == config.epochs {
            let eval = evaluate_generator(&gen, &mut rng_eval, config.eval_samples)?;
            fallback_count += eval.fallbacks;
            records.push(MetricsRecord {
                seed,
                epoch,
                valid_count: eval.valid_count,
                weight_std: eval.weight_std,
                gen_loss: gen_loss_sum / batches as f64,
                disc_loss: disc_loss_sum / batches as f64,
            });
            final_samples = eval.samples;
        }
    }

    Ok(SeedRunResult {
        seed,
        records,
        discriminator: disc,
        generator: gen,
        final_samples,
        fallback_count,
    })
}

/// Train every configured seed; seeds are independent and run concurrently.
pub fn train(
    config: &TrainConfig,
    gen_config: &GeneratorConfig,
    dataset: &Dataset,
) -> Result<Vec<SeedRunResult>, GanError> {
    config.validate()?;
    config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(seed, config, gen_config, dataset))
        .collect()
}

/// Seed-averaged evaluation row.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanMetricsRecord {
    pub epoch: usize,
    pub valid_count: f64,
    pub weight_std: f64,
    pub gen_loss: f64,
    pub disc_loss: f64,
}

/// Arithmetic mean of per-seed metrics at each epoch. All runs share the
/// evaluation schedule, so rows align by position.
pub fn mean_metrics(per_seed: &[Vec<MetricsRecord>]) -> Result<Vec<MeanMetricsRecord>, GanError> {
    let first = per_seed
        .first()
        .ok_or_else(|| GanError::BadMetrics("no runs to average".into()))?;
    for run in per_seed {
        if run.len() != first.len()
            || run.iter().zip(first.iter()).any(|(a, b)| a.epoch != b.epoch)
        {
            return Err(GanError::BadMetrics(
                "runs disagree on the evaluation schedule".into(),
            ));
        }
    }
    let n = per_seed.len() as f64;
    Ok((0..first.len())
        .map(|row| MeanMetricsRecord {
            epoch: first[row].epoch,
            valid_count: per_seed.iter().map(|r| r[row].valid_count as f64).sum::<f64>() / n,
            weight_std: per_seed.iter().map(|r| r[row].weight_std).sum::<f64>() / n,
            gen_loss: per_seed.iter().map(|r| r[row].gen_loss).sum::<f64>() / n,
            disc_loss: per_seed.iter().map(|r| r[row].disc_loss).sum::<f64>() / n,
        })
        .collect())
}

pub const METRICS_HEADER: &str = "seed,epoch,valid_count,weight_std,gen_loss,disc_loss";

/// Write the metrics CSV; any comment lines go first, prefixed with '#'.
pub fn write_metrics_csv<W: Write>(
    records: &[MetricsRecord],
    comments: &[String],
    mut w: W,
) -> io::Result<()> {
    for line in comments {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "{METRICS_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{:.16e},{:.16e},{:.16e}",
            r.seed, r.epoch, r.valid_count, r.weight_std, r.gen_loss, r.disc_loss
        )?;
    }
    Ok(())
}

/// Read a metrics CSV back, skipping comment lines.
pub fn read_metrics_csv<R: Read>(r: R) -> Result<Vec<MetricsRecord>, GanError> {
    let reader = io::BufReader::new(r);
    let mut records = Vec::new();
    let mut saw_header = false;
    for line in reader.lines() {
        let line = line.map_err(|e| GanError::BadMetrics(e.to_string()))?;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != METRICS_HEADER {
                return Err(GanError::BadMetrics(format!("unexpected header {line:?}")));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(GanError::BadMetrics(format!(
                "expected 6 fields, got {}",
                fields.len()
            )));
        }
        let parse_err = |e: std::num::ParseFloatError| GanError::BadMetrics(e.to_string());
        records.push(MetricsRecord {
            seed: fields[0]
                .parse()
                .map_err(|e| GanError::BadMetrics(format!("{e}")))?,
            epoch: fields[1]
                .parse()
                .map_err(|e| GanError::BadMetrics(format!("{e}")))?,
            valid_count: fields[2]
                .parse()
                .map_err(|e| GanError::BadMetrics(format!("{e}")))?,
            weight_std: fields[3].parse().map_err(parse_err)?,
            gen_loss: fields[4].parse().map_err(parse_err)?,
            disc_loss: fields[5].parse().map_err(parse_err)?,
        });
    }
    if !saw_header {
        return Err(GanError::BadMetrics("missing header".into()));
    }
    Ok(records)
}

/// Write a flat parameter vector: u64 length then little-endian f64 values.
pub fn write_param_vector<W: Write>(params: &[f64], mut w: W) -> io::Result<()> {
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for &p in params {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_param_vector<R: Read>(mut r: R) -> Result<Vec<f64>, GanError> {
    let read_err = |e: io::Error| GanError::BadMetrics(format!("bad parameter file: {e}"));
    let mut u64_buf = [0u8; 8];
    r.read_exact(&mut u64_buf).map_err(read_err)?;
    let len = u64::from_le_bytes(u64_buf) as usize;
    if len > 1_000_000 {
        return Err(GanError::BadMetrics(format!(
            "implausible parameter count {len}"
        )));
    }
    let mut params = Vec::with_capacity(len);
    let mut f64_buf = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut f64_buf).map_err(read_err)?;
        params.push(f64::from_le_bytes(f64_buf));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::AnsatzFamily;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn quantum_config(family: AnsatzFamily, layers: usize) -> GeneratorConfig {
        GeneratorConfig::new(GeneratorKind::Quantum(
            AnsatzSpec::new(family, layers, 6).unwrap(),
        ))
        .unwrap()
    }

    fn tiny_dataset() -> Dataset {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/ports.csv");
        let ports = crate::data::load_ports(&path).unwrap();
        crate::data::build_dataset(64, 5, &ports, 100.0).unwrap()
    }

    #[test]
    fn latent_batches_are_reproducible_and_standard_normal() {
        let mut rng = stream_rng(1, 1);
        assert!(sample_latent(&mut rng, 0).is_empty());

        let a = sample_latent(&mut stream_rng(2, 1), 4);
        let b = sample_latent(&mut stream_rng(2, 1), 4);
        assert_eq!(a, b);

        // CLT bound: per-coordinate mean of 1e5 draws within +-0.02.
        let mut rng = stream_rng(3, 1);
        let batch = sample_latent(&mut rng, 100_000);
        for c in 0..LATENT_DIM {
            let mean: f64 = batch.iter().map(|z| z[c]).sum::<f64>() / batch.len() as f64;
            assert!(mean.abs() < 0.02, "coordinate {c} mean {mean}");
        }
    }

    #[test]
    fn equal_marginals_normalize_to_uniform() {
        // With all-zero parameters the RxRy circuit reduces to the
        // embedding; z = pi/2 puts every qubit on the equator (all
        // marginals 1/2), and the CNOT ring fixes that state.
        let config = quantum_config(AnsatzFamily::RxRy, 5);
        let gen = match Generator::init(&config, &mut stream_rng(0, 0)) {
            Generator::Quantum { spec, .. } => Generator::Quantum {
                spec,
                params: vec![0.0; 72],
            },
            _ => unreachable!(),
        };
        let z = [std::f64::consts::FRAC_PI_2; 6];
        let (sample, fallback) = gen.generate(&z).unwrap();
        assert!(!fallback);
        for w in sample.weights() {
            assert_abs_diff_eq!(*w, 1.0 / 6.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn classical_all_zero_output_falls_back_to_uniform() {
        let mut gen = Generator::init(
            &GeneratorConfig::new(GeneratorKind::Classical).unwrap(),
            &mut stream_rng(0, 0),
        );
        gen.params_mut().fill(0.0);
        let (sample, fallback) = gen.generate(&[0.3; 6]).unwrap();
        assert!(fallback);
        for w in sample.weights() {
            assert_abs_diff_eq!(*w, 1.0 / 6.0, epsilon = 1e-15);
        }
        // Fallback gradients vanish.
        let fwd = gen.forward(&[0.3; 6]).unwrap();
        let grad = gen
            .backward(&[0.3; 6], &fwd, &[1.0; 6], Differentiator::Adjoint)
            .unwrap();
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn generated_samples_always_sum_to_one() {
        for config in [
            GeneratorConfig::new(GeneratorKind::Classical).unwrap(),
            quantum_config(AnsatzFamily::RxFixedY, 5),
        ] {
            let gen = Generator::init(&config, &mut stream_rng(7, 0));
            let mut rng = stream_rng(7, 1);
            for z in sample_latent(&mut rng, 50) {
                let (sample, _) = gen.generate(&z).unwrap();
                assert_abs_diff_eq!(sample.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-9);
                assert!(sample.weights().iter().all(|&w| w >= 0.0));
            }
        }
    }

    #[test]
    fn quantum_generator_rejects_wrong_qubit_count() {
        let spec = AnsatzSpec::new(AnsatzFamily::RxRy, 2, 3).unwrap();
        assert!(matches!(
            GeneratorConfig::new(GeneratorKind::Quantum(spec)),
            Err(GanError::WrongQubitCount(3))
        ));
    }

    #[test]
    fn renormalization_vjp_zero_upstream_and_euler_identity() {
        let raw = [0.4, 0.1, 0.25, 0.05, 0.15, 0.35];
        let sum: f64 = raw.iter().sum();
        assert_eq!(renormalize_vjp(&[0.0; 6], &raw, sum), [0.0; 6]);

        // Row i of the renormalization Jacobian dotted with the raw weights
        // vanishes: normalized outputs are invariant under scaling.
        for i in 0..6 {
            let mut basis = [0.0; 6];
            basis[i] = 1.0;
            let row = renormalize_vjp(&basis, &raw, sum);
            let contraction: f64 = row.iter().zip(raw.iter()).map(|(r, w)| r * w).sum();
            assert_abs_diff_eq!(contraction, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn generator_gradient_matches_loss_finite_differences() {
        // Full chain: circuit -> renormalize -> discriminator -> BCE.
        let config = quantum_config(AnsatzFamily::RxFixedY, 1);
        let mut gen = Generator::init(&config, &mut stream_rng(11, 0));
        let disc = build_discriminator(&mut stream_rng(12, 0));
        let z: [f64; 6] = sample_latent(&mut stream_rng(13, 1), 1)[0];

        let loss_of = |g: &Generator| -> f64 {
            let (sample, _) = g.generate(&z).unwrap();
            let (out, _) = disc.forward(sample.weights()).unwrap();
            bce_loss(out[0], 1.0).0
        };

        let fwd = gen.forward(&z).unwrap();
        let (out, dcache) = disc.forward(fwd.sample.weights()).unwrap();
        let (_, dloss) = bce_loss(out[0], 1.0);
        let tape = disc.backward(&dcache, &[dloss]).unwrap();
        let upstream: [f64; 6] = tape.input_grad.as_slice().try_into().unwrap();

        for diff in [Differentiator::Adjoint, Differentiator::ParameterShift] {
            let grad = gen.backward(&z, &fwd, &upstream, diff).unwrap();
            let h = 1e-4;
            for j in 0..gen.param_count() {
                let orig = gen.params()[j];
                gen.params_mut()[j] = orig + h;
                let plus = loss_of(&gen);
                gen.params_mut()[j] = orig - h;
                let minus = loss_of(&gen);
                gen.params_mut()[j] = orig;
                let fd = (plus - minus) / (2.0 * h);
                assert_relative_eq!(grad[j], fd, max_relative = 1e-4, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn untrained_flat_discriminator_gives_ln2_losses() {
        let dataset = tiny_dataset();
        let mut disc = build_discriminator(&mut stream_rng(1, 0));
        disc.params_mut().fill(0.0); // sigmoid(0) = 0.5 everywhere
        let mut gen = Generator::init(&quantum_config(AnsatzFamily::RxFixedY, 5), &mut stream_rng(1, 0));
        // Zero learning rates cannot move the parameters, so losses stay at
        // ln 2 for the first step.
        let mut disc_adam = AdamState::new(disc.param_count(), 1e-300);
        let mut gen_adam = AdamState::new(gen.param_count(), 1e-300);
        let disc_params_before = disc.params().to_vec();
        let gen_params_before = gen.params().to_vec();
        let (disc_loss, gen_loss) = train_step(
            &mut disc,
            &mut disc_adam,
            &mut gen,
            &mut gen_adam,
            &dataset.samples[..32],
            &mut stream_rng(1, 1),
            Differentiator::Adjoint,
        )
        .unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert_abs_diff_eq!(disc_loss, ln2, epsilon = 1e-12);
        assert_abs_diff_eq!(gen_loss, ln2, epsilon = 1e-12);
        for (a, b) in disc.params().iter().zip(&disc_params_before) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-250);
        }
        for (a, b) in gen.params().iter().zip(&gen_params_before) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-250);
        }
    }

    #[test]
    fn discriminator_alone_learns_separable_data() {
        // Freeze the generator: train D on fixed separable real/fake batches
        // and require a strict loss decrease over 50 steps.
        let real: Vec<GraphSample> = (0..8)
            .map(|i| {
                let mut w = [1.0; 6];
                w[i % 6] += 0.2;
                GraphSample::from_raw(w).unwrap()
            })
            .collect();
        let fake: Vec<GraphSample> = (0..8)
            .map(|i| {
                let mut w = [0.05; 6];
                w[i % 6] = 1.0;
                GraphSample::from_raw(w).unwrap()
            })
            .collect();
        let mut disc = build_discriminator(&mut stream_rng(2, 0));
        let mut adam = AdamState::new(disc.param_count(), 0.01);
        let mut last = f64::INFINITY;
        for step in 0..50 {
            let loss = update_discriminator(&mut disc, &mut adam, &real, &fake).unwrap();
            assert!(loss < last, "loss rose at step {step}: {loss} >= {last}");
            last = loss;
        }
    }

    #[test]
    fn zero_epochs_yield_only_the_initial_record() {
        let dataset = tiny_dataset();
        let config = TrainConfig {
            epochs: 0,
            eval_samples: 100,
            seeds: vec![3],
            ..TrainConfig::desk_scale()
        };
        let result = run_seed(3, &config, &quantum_config(AnsatzFamily::RxRy, 5), &dataset).unwrap();
        assert_eq!(result.records.len(), 1);
        assert_eq!(result.records[0].epoch, 0);
        assert_eq!(result.final_samples.len(), 100);
    }

    #[test]
    fn identical_seeds_give_identical_metrics() {
        let dataset = tiny_dataset();
        let config = TrainConfig {
            epochs: 2,
            eval_every: 1,
            eval_samples: 50,
            seeds: vec![9],
            ..TrainConfig::desk_scale()
        };
        let gen_config = quantum_config(AnsatzFamily::RxFixedY, 5);
        let a = run_seed(9, &config, &gen_config, &dataset).unwrap();
        let b = run_seed(9, &config, &gen_config, &dataset).unwrap();
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_metrics_csv(&a.records, &[], &mut buf_a).unwrap();
        write_metrics_csv(&b.records, &[], &mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
    }

    #[test]
    fn metrics_csv_round_trip() {
        let records = vec![
            MetricsRecord {
                seed: 1,
                epoch: 0,
                valid_count: 987,
                weight_std: 0.0123456789,
                gen_loss: 0.7,
                disc_loss: std::f64::consts::LN_2,
            },
            MetricsRecord {
                seed: 1,
                epoch: 10,
                valid_count: 640,
                weight_std: 0.05,
                gen_loss: 1.2,
                disc_loss: 0.4,
            },
        ];
        let mut buf = Vec::new();
        write_metrics_csv(&records, &["config_hash=abc".into()], &mut buf).unwrap();
        let loaded = read_metrics_csv(buf.as_slice()).unwrap();
        assert_eq!(records, loaded);

        assert!(read_metrics_csv(&b"bogus\n1,2,3"[..]).is_err());
    }

    #[test]
    fn mean_metrics_averages_rows() {
        let run = |seed: u64, base: usize| {
            vec![
                MetricsRecord {
                    seed,
                    epoch: 0,
                    valid_count: base,
                    weight_std: 0.01,
                    gen_loss: 1.0,
                    disc_loss: 0.5,
                },
                MetricsRecord {
                    seed,
                    epoch: 10,
                    valid_count: base + 100,
                    weight_std: 0.03,
                    gen_loss: 2.0,
                    disc_loss: 0.7,
                },
            ]
        };
        let mean = mean_metrics(&[run(0, 900), run(1, 1000)]).unwrap();
        assert_eq!(mean.len(), 2);
        assert_abs_diff_eq!(mean[0].valid_count, 950.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mean[1].valid_count, 1050.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mean[1].gen_loss, 2.0, epsilon = 1e-12);
        assert_eq!(mean[1].epoch, 10);

        let mismatched = vec![run(0, 900), run(1, 900)[..1].to_vec()];
        assert!(mean_metrics(&mismatched).is_err());
    }

    #[test]
    fn param_vector_round_trip() {
        let params: Vec<f64> = (0..36).map(|i| (i as f64).sin()).collect();
        let mut buf = Vec::new();
        write_param_vector(&params, &mut buf).unwrap();
        assert_eq!(read_param_vector(buf.as_slice()).unwrap(), params);
        assert!(read_param_vector(&buf[..10]).is_err());
    }
}
