use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use ppgema_core::activity::{
    evaluate_leave_k_out, read_labeled_csv, train_forest, write_labeled_csv, ForestParams, LabeledSample,
};
use ppgema_core::config::Config;
use ppgema_core::dataset::{DatasetHeader, DatasetReader, DatasetWriter};
use ppgema_core::simulator::{activity_corpus, dataset_records, SubjectSimulator};
use ppgema_gateway::activity_model::load_or_train;
use ppgema_gateway::reports::{write_report, ReportKind, ReportOptions};
use ppgema_gateway::{replay, replay_file, ReplayOptions, Service};
use serde_json::json;

use crate::remote::HttpTarget;
use crate::{Cli, Command, CorpusArgs, ForestArgs, ReportArg};

fn resolve_config(cli: &Cli) -> Result<Config> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.data_dir {
        cfg.data_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The resolved configuration as TOML comments, so any output can be
/// reproduced from the run's log.
fn print_header(command: &str, cfg: &Config) {
    eprintln!("# ppgema {} {command}", env!("CARGO_PKG_VERSION"));
    eprintln!("# seed = {}", cfg.seed);
    for line in cfg.to_toml().lines() {
        eprintln!("# {line}");
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Serve { .. } => "serve",
        Command::Simulate { .. } => "simulate",
        Command::Replay { .. } => "replay",
        Command::TrainActivity { .. } => "train-activity",
        Command::EvalActivity { .. } => "eval-activity",
        Command::Report { .. } => "report",
        Command::Checkpoint => "checkpoint",
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    print_header(command_name(&cli.command), &cfg);
    match &cli.command {
        Command::Serve { bind } => serve(cfg, bind.clone()),
        Command::Simulate {
            subjects,
            days,
            output,
            decimals,
        } => {
            let out = output.clone().unwrap_or_else(|| cli.out_dir.join("sim.ds"));
            simulate(&cfg, *subjects, *days, &out, *decimals)
        }
        Command::Replay {
            input,
            speed,
            sort,
            no_responses,
            url,
        } => {
            if !(speed.is_finite() && *speed >= 0.0) {
                bail!("--speed must be a non-negative number, got {speed}");
            }
            let opts = ReplayOptions {
                speed: *speed,
                sort: *sort,
                responses: !no_responses,
            };
            replay_cmd(cfg, input, opts, url.as_deref())
        }
        Command::TrainActivity {
            corpus,
            forest,
            output,
            export_corpus,
        } => {
            let out = output.clone().unwrap_or_else(|| cli.out_dir.join("activity_model.json"));
            train(&cfg, corpus, forest, &out, export_corpus.as_deref())
        }
        Command::EvalActivity { corpus, forest, k } => {
            let samples = load_corpus(corpus, cfg.seed)?;
            let report = evaluate_leave_k_out(&samples, *k, &forest_params(forest), cfg.seed)?;
            print_json(&report)
        }
        Command::Report {
            kind,
            subject,
            d,
            horizon_min,
            min_count,
        } => {
            let opts = ReportOptions {
                d: d.unwrap_or(cfg.d),
                horizon_min: *horizon_min,
                min_count: *min_count,
            };
            report(cfg, *kind, subject.as_deref(), &opts, &cli.out_dir)
        }
        Command::Checkpoint => {
            let service = Service::open_read_only(cfg)?;
            let n = service.checkpoint_all()?;
            print_json(&json!({ "subjects": n }))
        }
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn serve(cfg: Config, bind: Option<String>) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let bind = bind.unwrap_or_else(|| cfg.bind.clone());
    let model = load_or_train(cfg.activity_model.as_deref(), cfg.seed)?;
    let service = Arc::new(Service::open(cfg, model)?);
    let info = service.recovery();
    tracing::info!(
        subjects = info.subjects,
        samples = info.samples,
        replayed = info.replayed_events,
        torn_lines = info.torn_lines,
        "data directory loaded"
    );
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .with_context(|| format!("binding {bind}"))?;
        // Tests and scripts read the bound address from this line.
        eprintln!("listening on http://{}", listener.local_addr()?);
        ppgema_gateway::http::serve(service, listener, shutdown_signal()).await?;
        Ok(())
    })
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
    tracing::info!("shutting down");
}

fn simulate(cfg: &Config, subjects: Option<usize>, days: Option<f64>, out: &Path, decimals: i32) -> Result<()> {
    let mut sim_cfg = cfg.simulator.clone();
    if let Some(n) = subjects {
        sim_cfg.subjects = n;
    }
    if let Some(d) = days {
        sim_cfg.days = d;
    }
    if sim_cfg.subjects == 0 || !(sim_cfg.days > 0.0) {
        bail!("need at least one subject and a positive number of days");
    }
    let sims = sim_cfg
        .profiles(cfg.seed)
        .into_iter()
        .map(|p| SubjectSimulator::new(p).map_err(anyhow::Error::msg))
        .collect::<Result<Vec<_>>>()?;
    ensure_parent(out)?;
    let ids = sims.iter().map(|s| s.profile().subject_id.clone()).collect();
    let header = DatasetHeader::new(Some(cfg.seed), ids);
    let mut writer = DatasetWriter::create(out, &header, Some(decimals))?;
    let mut n = 0usize;
    for record in dataset_records(&sims) {
        writer
            .write(&record)
            .with_context(|| format!("writing {}", out.display()))?;
        n += 1;
    }
    writer.finish().with_context(|| format!("writing {}", out.display()))?;
    print_json(&json!({
        "path": out,
        "subjects": header.subjects,
        "records": n,
    }))
}

fn replay_cmd(cfg: Config, input: &Path, opts: ReplayOptions, url: Option<&str>) -> Result<()> {
    let report = match url {
        Some(url) => {
            let reader = DatasetReader::open(input)?;
            let mut target = HttpTarget::new(url);
            replay(&mut target, reader, &opts)?
        }
        None => {
            // Fail on a missing input before paying for model training.
            if !input.exists() {
                bail!("{}: no such file", input.display());
            }
            let model = load_or_train(cfg.activity_model.as_deref(), cfg.seed)?;
            let service = Service::open(cfg, model)?;
            let report = replay_file(&service, input, &opts)?;
            service.checkpoint_all()?;
            report
        }
    };
    print_json(&report)
}

fn forest_params(f: &ForestArgs) -> ForestParams {
    ForestParams {
        n_trees: f.trees,
        max_depth: f.max_depth,
        ..ForestParams::default()
    }
}

fn load_corpus(args: &CorpusArgs, seed: u64) -> Result<Vec<LabeledSample>> {
    match &args.input {
        Some(path) => {
            let f = File::open(path).with_context(|| format!("{}", path.display()))?;
            read_labeled_csv(f).with_context(|| format!("{}", path.display()))
        }
        None => Ok(activity_corpus(args.corpus_subjects, args.corpus_windows, seed)),
    }
}

fn train(cfg: &Config, corpus: &CorpusArgs, forest: &ForestArgs, out: &Path, export: Option<&Path>) -> Result<()> {
    let samples = load_corpus(corpus, cfg.seed)?;
    if let Some(path) = export {
        ensure_parent(path)?;
        let f = File::create(path).with_context(|| format!("{}", path.display()))?;
        write_labeled_csv(BufWriter::new(f), &samples)?;
    }
    let model = train_forest(&samples, &forest_params(forest), cfg.seed)?;
    ensure_parent(out)?;
    model.save(out)?;
    print_json(&json!({
        "path": out,
        "rows": samples.len(),
        "digest": model.digest(),
    }))
}

fn report(cfg: Config, kind: ReportArg, subject: Option<&str>, opts: &ReportOptions, out_dir: &Path) -> Result<()> {
    let kind = match kind {
        ReportArg::Coverage => ReportKind::Coverage,
        ReportArg::Temporal => ReportKind::Temporal,
        ReportArg::Quality => ReportKind::Quality,
        ReportArg::Response => ReportKind::Response,
    };
    // Reading never repairs or appends, so this is safe next to a running
    // service.
    let service = Service::open_read_only(cfg)?;
    if let Some(s) = subject {
        if service.snapshot(s).is_none() && !service.subject_ids().is_empty() {
            bail!("unknown subject {s}");
        }
    }
    let snaps = service.snapshots(subject);
    let written: Vec<PathBuf> = write_report(kind, &snaps, opts, out_dir)?;
    print_json(&json!({ "files": written }))
}
