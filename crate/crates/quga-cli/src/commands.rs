//! The four subcommands: gen-data, train, baseline, report.
//!
//! Config validation and input loading happen before any output directory
//! is touched, so an invalid invocation never leaves partial output behind.

use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use quga_core::data::{
    build_dataset, dataset_to_csv, load_dataset, load_ports, save_dataset, Dataset, GraphSample,
};
use quga_core::eval::{valid_fraction, DensityHistogram, KdeModel};
use quga_core::gan::{
    self, mean_metrics, read_metrics_csv, train, Generator, GeneratorConfig, MeanMetricsRecord,
    MetricsRecord, QUANTUM_INIT_RANGE,
};
use quga_core::nn::{CLAMP_EPS, GENERATOR_OUTPUT_BIAS_INIT, LEAKY_RELU_SLOPE};

use crate::config::{expected_param_count, generator_config, Config};
use crate::CliError;

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| runtime(format!("writing {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| runtime(format!("creating {}: {e}", path.display())))
}

/// Build and persist the training dataset, printing a summary.
pub fn cmd_gen_data(config: &Config, hash: &str, out: Option<&Path>) -> Result<(), CliError> {
    let ports = load_ports(Path::new(&config.data.ports_path)).map_err(runtime)?;
    let mut dataset = build_dataset(
        config.data.n_graphs,
        config.data.seed,
        &ports,
        config.data.threshold_nm,
    )
    .map_err(runtime)?;
    if let Some(p) = dataset.provenance.as_mut() {
        p.config_hash = Some(hash.to_string());
    }

    let validity = valid_fraction(&dataset.samples).map_err(runtime)?;
    let pooled_std = dataset.pooled_weight_std();

    let dataset_path = match out {
        Some(dir) => {
            create_dir(dir)?;
            dir.join(
                Path::new(&config.data.dataset_path)
                    .file_name()
                    .unwrap_or_else(|| "dataset.csv".as_ref()),
            )
        }
        None => PathBuf::from(&config.data.dataset_path),
    };
    if let Some(parent) = dataset_path.parent() {
        if !parent.as_os_str().is_empty() {
            create_dir(parent)?;
        }
    }
    save_dataset(&dataset_path, &dataset).map_err(runtime)?;

    println!(
        "wrote {} samples to {} (pooled weight std {:.6}, triangle-valid {:.1}%)",
        dataset.samples.len(),
        dataset_path.display(),
        pooled_std,
        validity * 100.0
    );
    Ok(())
}

/// Everything about a training run that the report and the paper trail need.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunMetadata {
    pub command: String,
    pub model: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub eval_samples: usize,
    pub dataset_path: String,
    pub generator: GeneratorConfig,
    pub train: quga_core::gan::TrainConfig,
    pub fallback_counts: Vec<u64>,
    pub design_decisions: serde_json::Value,
}

fn design_decisions(config: &Config) -> serde_json::Value {
    serde_json::json!({
        "embedding_axis": "ry",
        "rotation_block_order": "rx ladder first, then y/ry ladder",
        "final_rotation_block": true,
        "bit_order": "qubit 0 is the least significant basis-index bit",
        "label_convention": "real=1, fake=0",
        "update_schedule": "one discriminator step, then one generator step per batch",
        "weight_init": "uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)), biases zero",
        "generator_output_bias_init": GENERATOR_OUTPUT_BIAS_INIT,
        "quantum_init_range": QUANTUM_INIT_RANGE,
        "leaky_relu_slope": LEAKY_RELU_SLOPE,
        "sigmoid_clamp_eps": CLAMP_EPS,
        "adam": {"beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8},
        "renormalization_in_gradient_path": true,
        "differentiator": config.train.differentiator,
        "eval_every": config.train.eval_every,
        "eval_samples": config.eval.eval_samples,
    })
}

const MEAN_METRICS_HEADER: &str = "epoch,valid_count,weight_std,gen_loss,disc_loss";

fn render_mean_metrics(rows: &[MeanMetricsRecord], comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str(&format!("# {c}\n"));
    }
    out.push_str(MEAN_METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.epoch, r.valid_count, r.weight_std, r.gen_loss, r.disc_loss
        ));
    }
    out
}

/// Train the selected model across all configured seeds and persist metrics,
/// checkpoints, and the final generated samples.
pub fn cmd_train(config: &Config, hash: &str, out: &Path) -> Result<(), CliError> {
    let model_name = config.model.name.clone();
    let gen_config = generator_config(&model_name)?;
    let dataset = load_dataset(Path::new(&config.data.dataset_path)).map_err(runtime)?;
    if dataset.provenance.is_none() {
        eprintln!(
            "warning: {} has no provenance sidecar",
            config.data.dataset_path
        );
    }
    let train_config = config.train_config();

    // The published parameter counts are part of the contract.
    let probe = Generator::init(&gen_config, &mut ChaCha8Rng::seed_from_u64(0));
    assert_eq!(
        probe.param_count(),
        expected_param_count(&model_name),
        "model {model_name} must expose its published parameter count"
    );
    println!(
        "training {model_name} ({} generator parameters, discriminator 129) on {} samples, {} seeds",
        probe.param_count(),
        dataset.samples.len(),
        train_config.seeds.len()
    );

    let results = train(&train_config, &gen_config, &dataset).map_err(runtime)?;

    let run_dir = out.join(&model_name);
    create_dir(&run_dir)?;
    let comments = vec![
        format!("config_hash={hash}"),
        format!(
            "seeds={}",
            train_config
                .seeds
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(",")
        ),
    ];

    for result in &results {
        let seed = result.seed;
        let mut buf = Vec::new();
        gan::write_metrics_csv(&result.records, &comments, &mut buf).map_err(runtime)?;
        write_file(&run_dir.join(format!("metrics_seed{seed}.csv")), &buf)?;

        let samples_dataset = Dataset {
            samples: result.final_samples.clone(),
            provenance: None,
        };
        write_file(
            &run_dir.join(format!("final_samples_seed{seed}.csv")),
            dataset_to_csv(&samples_dataset).as_bytes(),
        )?;

        let mut disc_buf = Vec::new();
        result
            .discriminator
            .write_checkpoint(&mut disc_buf)
            .map_err(runtime)?;
        write_file(&run_dir.join(format!("disc_seed{seed}.ckpt")), &disc_buf)?;

        match &result.generator {
            Generator::Classical(model) => {
                let mut gen_buf = Vec::new();
                model.write_checkpoint(&mut gen_buf).map_err(runtime)?;
                write_file(&run_dir.join(format!("gen_seed{seed}.ckpt")), &gen_buf)?;
            }
            Generator::Quantum { params, .. } => {
                let mut gen_buf = Vec::new();
                gan::write_param_vector(params, &mut gen_buf).map_err(runtime)?;
                write_file(&run_dir.join(format!("gen_params_seed{seed}.bin")), &gen_buf)?;
            }
        }

        let last = result.records.last().expect("at least the epoch-0 record");
        println!(
            "  seed {seed}: final epoch {} valid {}/{} (std {:.4}), {} fallback draws",
            last.epoch,
            last.valid_count,
            train_config.eval_samples,
            last.weight_std,
            result.fallback_count
        );
    }

    let per_seed: Vec<Vec<MetricsRecord>> =
        results.iter().map(|r| r.records.clone()).collect();
    let mean = mean_metrics(&per_seed).map_err(runtime)?;
    write_file(
        &run_dir.join("metrics_mean.csv"),
        render_mean_metrics(&mean, &comments).as_bytes(),
    )?;

    let metadata = RunMetadata {
        command: "train".into(),
        model: model_name,
        config_hash: hash.to_string(),
        seeds: train_config.seeds.clone(),
        eval_samples: train_config.eval_samples,
        dataset_path: config.data.dataset_path.clone(),
        generator: gen_config,
        train: train_config,
        fallback_counts: results.iter().map(|r| r.fallback_count).collect(),
        design_decisions: design_decisions(config),
    };
    write_file(
        &run_dir.join("run_metadata.json"),
        serde_json::to_string_pretty(&metadata)
            .map_err(runtime)?
            .as_bytes(),
    )?;
    println!("run artifacts in {}", run_dir.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub n_samples: usize,
    pub valid_fraction: f64,
    pub bandwidth: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Fit the KDE over the training weights, draw random graphs edge by edge,
/// and record how often blind sampling satisfies the triangle inequality.
pub fn cmd_baseline(config: &Config, hash: &str, out: &Path) -> Result<(), CliError> {
    let dataset = load_dataset(Path::new(&config.data.dataset_path)).map_err(runtime)?;
    let kde = KdeModel::fit(&dataset.samples).map_err(runtime)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.baseline.seed);

    let mut samples = Vec::with_capacity(config.baseline.n_samples);
    let mut rows = Vec::with_capacity(config.baseline.n_samples);
    for _ in 0..config.baseline.n_samples {
        if config.baseline.renormalize {
            let g = kde.sample_graph(&mut rng);
            rows.push(*g.weights());
            samples.push(g);
        } else {
            // Raw clamped draws are persisted as-is; validity is judged on
            // the normalized graph, which has the same verdict.
            let raw = kde.sample_raw(&mut rng);
            rows.push(raw);
            samples.push(GraphSample::from_raw(raw).map_err(runtime)?);
        }
    }
    let fraction = valid_fraction(&samples).map_err(runtime)?;

    let dir = out.join("baseline");
    create_dir(&dir)?;
    let summary = BaselineSummary {
        n_samples: config.baseline.n_samples,
        valid_fraction: fraction,
        bandwidth: kde.bandwidth(),
        seed: config.baseline.seed,
        config_hash: Some(hash.to_string()),
    };
    write_file(
        &dir.join("baseline_summary.json"),
        serde_json::to_string_pretty(&summary).map_err(runtime)?.as_bytes(),
    )?;

    let mut csv = String::from("graph_id,w01,w02,w03,w12,w13,w23\n");
    for (i, row) in rows.iter().enumerate() {
        csv.push_str(&i.to_string());
        for w in row {
            csv.push_str(&format!(",{w:.16e}"));
        }
        csv.push('\n');
    }
    write_file(&dir.join("baseline_samples.csv"), csv.as_bytes())?;

    println!(
        "baseline: {} draws, bandwidth {:.6}, valid fraction {:.3}",
        summary.n_samples, summary.bandwidth, summary.valid_fraction
    );
    println!("baseline artifacts in {}", dir.display());
    Ok(())
}

struct LoadedRun {
    model: String,
    eval_samples: usize,
    mean: Vec<MeanMetricsRecord>,
    pooled_final_weights: Vec<f64>,
}

fn load_run(dir: &Path) -> Result<LoadedRun, CliError> {
    let meta_path = dir.join("run_metadata.json");
    let meta: RunMetadata = serde_json::from_str(
        &fs::read_to_string(&meta_path)
            .map_err(|e| runtime(format!("run {}: {e}", meta_path.display())))?,
    )
    .map_err(|e| runtime(format!("run {}: {e}", meta_path.display())))?;

    let mut per_seed = Vec::new();
    let mut pooled = Vec::new();
    for &seed in &meta.seeds {
        let metrics_path = dir.join(format!("metrics_seed{seed}.csv"));
        let file = fs::File::open(&metrics_path)
            .map_err(|e| runtime(format!("run {}: {e}", metrics_path.display())))?;
        per_seed.push(read_metrics_csv(file).map_err(runtime)?);

        let samples_path = dir.join(format!("final_samples_seed{seed}.csv"));
        let samples = load_dataset(&samples_path)
            .map_err(|e| runtime(format!("run {}: {e}", samples_path.display())))?;
        pooled.extend(quga_core::eval::pool_weights(&samples.samples));
    }
    Ok(LoadedRun {
        model: meta.model,
        eval_samples: meta.eval_samples,
        mean: mean_metrics(&per_seed).map_err(runtime)?,
        pooled_final_weights: pooled,
    })
}

fn epoch_table(
    runs: &[LoadedRun],
    value: impl Fn(&MeanMetricsRecord) -> f64,
    baseline: Option<f64>,
) -> Result<String, CliError> {
    let epochs: Vec<usize> = runs[0].mean.iter().map(|r| r.epoch).collect();
    for run in runs {
        let this: Vec<usize> = run.mean.iter().map(|r| r.epoch).collect();
        if this != epochs {
            return Err(runtime(format!(
                "run {} disagrees on the evaluation schedule",
                run.model
            )));
        }
    }
    let mut header = String::from("epoch");
    for run in runs {
        header.push(',');
        header.push_str(&run.model);
    }
    if baseline.is_some() {
        header.push_str(",baseline");
    }
    let mut out = header;
    out.push('\n');
    for (i, epoch) in epochs.iter().enumerate() {
        out.push_str(&epoch.to_string());
        for run in runs {
            out.push_str(&format!(",{:.16e}", value(&run.mean[i])));
        }
        if let Some(b) = baseline {
            out.push_str(&format!(",{b:.16e}"));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Assemble the four figure-data CSVs from completed run directories.
pub fn cmd_report(
    run_dirs: &[PathBuf],
    baseline_dir: &Path,
    dataset_path: &Path,
    out: &Path,
    bins: usize,
) -> Result<(), CliError> {
    if run_dirs.is_empty() {
        return Err(CliError::Usage("report needs at least one run directory".into()));
    }
    if bins < 2 {
        return Err(CliError::Usage("need at least 2 histogram bins".into()));
    }
    let runs: Vec<LoadedRun> = run_dirs.iter().map(|d| load_run(d)).collect::<Result<_, _>>()?;
    let dataset = load_dataset(dataset_path).map_err(runtime)?;

    let summary_path = baseline_dir.join("baseline_summary.json");
    let summary: BaselineSummary = serde_json::from_str(
        &fs::read_to_string(&summary_path)
            .map_err(|e| runtime(format!("{}: {e}", summary_path.display())))?,
    )
    .map_err(|e| runtime(format!("{}: {e}", summary_path.display())))?;
    let baseline_samples = load_dataset(&baseline_dir.join("baseline_samples.csv"))
        .map_err(|e| runtime(format!("baseline samples: {e}")))?;
    let baseline_std =
        quga_core::eval::pooled_weight_std(&baseline_samples.samples).map_err(runtime)?;

    create_dir(out)?;

    // Panel (a): valid graphs per evaluation, with the epoch-independent
    // baseline count as a horizontal reference.
    let eval_samples = runs[0].eval_samples;
    let valid = epoch_table(
        &runs,
        |r| r.valid_count,
        Some(summary.valid_fraction * eval_samples as f64),
    )?;
    write_file(&out.join("valid_graphs.csv"), valid.as_bytes())?;

    // Panel (b): pooled weight standard deviation.
    let std_table = epoch_table(&runs, |r| r.weight_std, Some(baseline_std))?;
    write_file(&out.join("weight_std.csv"), std_table.as_bytes())?;

    // Panel (d): generator loss curves.
    let loss_table = epoch_table(&runs, |r| r.gen_loss, None)?;
    write_file(&out.join("gen_loss.csv"), loss_table.as_bytes())?;

    // Panel (c): edge-weight densities over a shared grid, training data
    // first, one column per model.
    let training_weights = quga_core::eval::pool_weights(&dataset.samples);
    let mut hi = training_weights.iter().copied().fold(0.0f64, f64::max);
    for run in &runs {
        hi = run.pooled_final_weights.iter().copied().fold(hi, f64::max);
    }
    let grid = |values: &[f64]| DensityHistogram::from_values(values, bins, 0.0, hi);
    let training_hist = grid(&training_weights).map_err(runtime)?;
    let model_hists: Vec<DensityHistogram> = runs
        .iter()
        .map(|r| grid(&r.pooled_final_weights).map_err(runtime))
        .collect::<Result<_, _>>()?;

    let mut density = String::from("bin_left,bin_right,training");
    for run in &runs {
        density.push(',');
        density.push_str(&run.model);
    }
    density.push('\n');
    for i in 0..bins {
        density.push_str(&format!(
            "{:.16e},{:.16e},{:.16e}",
            training_hist.bin_edges[i],
            training_hist.bin_edges[i + 1],
            training_hist.densities[i]
        ));
        for hist in &model_hists {
            density.push_str(&format!(",{:.16e}", hist.densities[i]));
        }
        density.push('\n');
    }
    write_file(&out.join("densities.csv"), density.as_bytes())?;

    println!(
        "report over {} runs written to {} (valid_graphs, weight_std, densities, gen_loss)",
        runs.len(),
        out.display()
    );
    Ok(())
}
