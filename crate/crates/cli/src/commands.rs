use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsgg_core::baseline::{pci_infer, PCI_LABEL};
use tsgg_core::data::{
    dream3, load_dataset, make_dataset, read_graph_document, save_dataset, BaConfig, DatasetSpec, MultivariateSeries,
    WeightedDigraph,
};
use tsgg_core::fcm::fcm_simulate;
use tsgg_core::metrics::{evaluate_batch, MetricConfig};
use tsgg_core::training::{
    infer_with, load_checkpoint, loss_log_csv, train as run_training, TrainOptions, ZMode, LOSS_LOG_HEADER,
};

use crate::config::RunConfig;
use crate::formats::{read_series, write_graphs, write_series_csv, SeriesFormat};
use crate::{BaselineArgs, CliError, EvalArgs, GenDataArgs, InferArgs, SeriesInput, SimulateArgs, TrainArgs};

const METRIC_NAMES: [&str; 4] = ["him", "qjsd", "hamming", "im"];

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn set_path(cfg: &mut RunConfig, key: &str, flag: Option<PathBuf>) {
    if let Some(p) = flag {
        cfg.paths.insert(key.to_string(), p);
    }
}

fn output(cfg: &mut RunConfig, flag: Option<PathBuf>, default: &str) -> PathBuf {
    let out = flag
        .or_else(|| cfg.paths.get("out").cloned())
        .unwrap_or_else(|| PathBuf::from(default));
    cfg.paths.insert("out".into(), out.clone());
    out
}

fn finish(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let written = cfg.write_beside(out)?;
    info!("wrote {} (config {})", out.display(), written.display());
    Ok(())
}

pub fn gen_data(mut cfg: RunConfig, a: GenDataArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    cfg.command = "gen-data".into();
    set(&mut cfg.data.n, a.nodes);
    set(&mut cfg.data.pairs, a.pairs);
    set(&mut cfg.data.t_len, a.t_len);
    set(&mut cfg.data.p_edge, a.p_edge);
    let out = output(&mut cfg, out, "dataset.json");
    if cfg.data.n < 2 {
        return Err(CliError::usage(format!("--nodes must be at least 2, got {}", cfg.data.n)));
    }
    let spec = DatasetSpec {
        ba: BaConfig {
            p_edge: cfg.data.p_edge,
            ..BaConfig::default()
        },
        ..DatasetSpec::new(cfg.data.n, cfg.data.pairs, cfg.data.t_len)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples = make_dataset(&spec, &mut rng)?;
    save_dataset(&samples, &out)?;
    finish(&cfg, &out)
}

fn existing_log_prefix(path: &Path, before_epoch: usize) -> Result<Vec<String>, CliError> {
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(Vec::new());
    };
    let mut lines = text.lines();
    if lines.next() != Some(LOSS_LOG_HEADER) {
        return Err(CliError::usage(format!("{}: not a loss log", path.display())));
    }
    Ok(lines
        .filter(|l| {
            l.split(',')
                .next()
                .and_then(|e| e.parse::<usize>().ok())
                .is_some_and(|e| e < before_epoch)
        })
        .map(str::to_string)
        .collect())
}

pub fn train(mut cfg: RunConfig, a: TrainArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    cfg.command = "train".into();
    set_path(&mut cfg, "data", a.data);
    set_path(&mut cfg, "resume", a.resume);
    if a.split.is_some() {
        cfg.split = a.split;
    }
    let h = &mut cfg.hyper;
    set(&mut h.epochs, a.epochs);
    set(&mut h.alpha, a.alpha);
    set(&mut h.beta, a.beta);
    set(&mut h.omega, a.omega);
    set(&mut h.lr_g, a.lr_g);
    set(&mut h.lr_d, a.lr_d);
    set(&mut h.checkpoint_every, a.checkpoint_every);
    let out = output(&mut cfg, out, "checkpoint.json");
    let log_path = a.log.or_else(|| cfg.paths.get("log").cloned()).unwrap_or_else(|| {
        let mut name = out.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
        name.push(".loss.csv");
        out.with_file_name(name)
    });
    cfg.paths.insert("log".into(), log_path.clone());

    let mut data = load_dataset(cfg.path("data")?)?;
    if let Some(k) = cfg.split {
        if k == 0 || k > data.len() {
            return Err(CliError::usage(format!(
                "--split {k} outside 1..={} pairs",
                data.len()
            )));
        }
        data.truncate(k);
    }
    let resume = match cfg.paths.get("resume") {
        Some(p) => Some(load_checkpoint(p)?),
        None => None,
    };
    let prefix = match &resume {
        Some(ck) => existing_log_prefix(&log_path, ck.epoch)?,
        None => Vec::new(),
    };
    let opts = TrainOptions {
        hyper: cfg.hyper.clone(),
        seed: cfg.seed,
        arch: None,
        checkpoint_path: Some(out.clone()),
        resume,
    };
    let report = run_training(&data, &opts)?;
    let mut text = loss_log_csv(&report.log);
    if !prefix.is_empty() {
        let body = text.split_once('\n').map_or("", |(_, rest)| rest).to_string();
        text = format!("{LOSS_LOG_HEADER}\n{}\n{body}", prefix.join("\n"));
    }
    fs::write(&log_path, text).map_err(|e| CliError::runtime(format!("{}: {e}", log_path.display())))?;
    info!(
        "trained {} epochs: {} discriminator and {} generator updates",
        report.checkpoint.epoch, report.d_updates, report.g_updates
    );
    finish(&cfg, &out)
}

fn load_inputs(cfg: &mut RunConfig, input: SeriesInput) -> Result<Vec<MultivariateSeries>, CliError> {
    set_path(cfg, "ts", input.ts);
    let path = cfg.path("ts")?.to_path_buf();
    let format = input.format.unwrap_or_else(|| SeriesFormat::guess(&path));
    let mut series = read_series(&path, format)?;
    let skip = input.skip.unwrap_or(0);
    if skip >= series.len() {
        return Err(CliError::usage(format!(
            "--skip {skip} leaves nothing of the {} series in {}",
            series.len(),
            path.display()
        )));
    }
    series.drain(..skip);
    Ok(series)
}

fn parse_z_mode(s: &str) -> Result<ZMode, CliError> {
    match s {
        "zeros" => Ok(ZMode::Zeros),
        "sample" => Ok(ZMode::Sample),
        other => Err(CliError::usage(format!("--z-mode must be zeros or sample, got {other:?}"))),
    }
}

pub fn infer(mut cfg: RunConfig, a: InferArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    cfg.command = "infer".into();
    set_path(&mut cfg, "ckpt", a.ckpt);
    if let Some(z) = &a.z_mode {
        cfg.z_mode = parse_z_mode(z)?;
    }
    let out = output(&mut cfg, out, "predictions.json");
    let ckpt = load_checkpoint(cfg.path("ckpt")?)?;
    let series = load_inputs(&mut cfg, a.input)?;
    for s in &series {
        ckpt.expect_n(s.n())?;
    }
    let g = ckpt.generator()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let graphs = series
        .iter()
        .map(|s| infer_with(&g, s, cfg.z_mode, &mut rng))
        .collect::<tsgg_core::Result<Vec<_>>>()?;
    write_graphs(&out, "tsgg-gan", &graphs)?;
    finish(&cfg, &out)
}

fn initial_state(spec: &str, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, CliError> {
    match spec {
        "uniform" => Ok((0..n).map(|_| rng.random::<f64>()).collect()),
        "half" => Ok(vec![0.5; n]),
        list => list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::usage(format!("--init: {v:?} is not a number")))
            })
            .collect(),
    }
}

pub fn simulate(mut cfg: RunConfig, a: SimulateArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    cfg.command = "simulate".into();
    set_path(&mut cfg, "graph", a.graph);
    set(&mut cfg.data.t_len, a.steps);
    let out = output(&mut cfg, out, "series.csv");
    let graphs = read_graph_document(cfg.path("graph")?)?;
    let g = graphs.get(a.index).ok_or_else(|| {
        CliError::usage(format!("--index {} but the document holds {} graphs", a.index, graphs.len()))
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = initial_state(&a.init, g.n(), &mut rng)?;
    let series = fcm_simulate(g, &init, cfg.data.t_len)?;
    write_series_csv(&out, &series)?;
    finish(&cfg, &out)
}

fn read_truth(path: &Path, format: &str, n: usize) -> Result<Vec<WeightedDigraph>, CliError> {
    match format {
        "graph" => Ok(read_graph_document(path)?),
        "dream3" => Ok(vec![dream3::parse_dream3_gold(path, n)?]),
        other => Err(CliError::usage(format!("--truth-format must be graph or dream3, got {other:?}"))),
    }
}

pub fn eval(mut cfg: RunConfig, a: EvalArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    cfg.command = "eval".into();
    set_path(&mut cfg, "pred", a.pred);
    set_path(&mut cfg, "truth", a.truth);
    set(&mut cfg.metrics.xi, a.xi);
    cfg.metrics.absolute |= a.abs;
    if let Some(m) = a.metrics {
        cfg.metrics.metrics = m.split(',').map(|s| s.trim().to_lowercase()).collect();
    }
    if let Some(bad) = cfg.metrics.metrics.iter().find(|m| !METRIC_NAMES.contains(&m.as_str())) {
        return Err(CliError::usage(format!("unknown metric {bad:?}; choose from {METRIC_NAMES:?}")));
    }
    let mut preds = read_graph_document(cfg.path("pred")?)?;
    let n = preds.first().map_or(0, WeightedDigraph::n);
    let mut truths = read_truth(cfg.path("truth")?, &a.truth_format, n)?;
    truths.drain(..a.skip.unwrap_or(0).min(truths.len()));
    if truths.len() == 1 && preds.len() > 1 {
        truths = vec![truths[0].clone(); preds.len()];
    }
    if cfg.metrics.absolute {
        preds = preds.iter().map(WeightedDigraph::abs).collect();
    }
    let metric_cfg = MetricConfig {
        xi: cfg.metrics.xi,
        grid_step: cfg.metrics.grid_step,
        ..MetricConfig::calibrated(n)?
    };
    let report = evaluate_batch(&preds, &truths, &metric_cfg)?;
    for m in &cfg.metrics.metrics {
        let v = match m.as_str() {
            "him" => report.mean_him,
            "qjsd" => report.mean_qjsd,
            "hamming" => report.mean_hamming,
            _ => report.mean_im,
        };
        println!("mean_{m} {v:.6}");
    }
    if let Some(out) = out.or_else(|| cfg.paths.get("out").cloned()) {
        cfg.paths.insert("out".into(), out.clone());
        let text = if out.extension().is_some_and(|e| e == "json") {
            serde_json::to_string_pretty(&report).expect("report serializes")
        } else {
            report.to_table()
        };
        fs::write(&out, text).map_err(|e| CliError::runtime(format!("{}: {e}", out.display())))?;
        finish(&cfg, &out)?;
    }
    Ok(())
}

pub fn baseline(mut cfg: RunConfig, a: BaselineArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    cfg.command = "baseline".into();
    set(&mut cfg.ridge, a.ridge);
    let out = output(&mut cfg, out, "pci.json");
    let series = load_inputs(&mut cfg, a.input)?;
    let graphs = series
        .iter()
        .map(|s| pci_infer(s, cfg.ridge))
        .collect::<tsgg_core::Result<Vec<_>>>()?;
    write_graphs(&out, PCI_LABEL, &graphs)?;
    finish(&cfg, &out)
}
