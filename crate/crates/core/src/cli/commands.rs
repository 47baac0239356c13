use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::adf::{chunked_adf, Component};
use crate::autograd::Tensor;
use crate::cli::config::{RunConfig, SEED_ENV};
use crate::cli::{AdfArgs, Cli, Command, DataArgs, DecomposeArgs, EvalArgs, ForecastArgs, PlotArgs, TrainArgs};
use crate::datasets::{load_csv, split, windows, Order, Preset, RawDataset, Scaler, SeriesView, SplitSpec};
use crate::decompose::{ema_recursive, sma};
use crate::error::{Error, Result};
use crate::model::checkpoint::{self, sha256_hex};
use crate::model::XPatch;
use crate::report::plot::{prediction_chart, svg_chart, write_svg, Series};
use crate::report::{evaluate, forecast, lookback_rows, EvalReport, Forecaster, Scale};
use crate::train::{fit, Artifacts};

const EVAL_BATCH: usize = 128;

pub(crate) fn dispatch(cli: &Cli) -> Result<()> {
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match &cli.command {
        Command::Decompose(a) => decompose(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Forecast(a) => forecast_cmd(a),
        Command::Adf(a) => adf(a),
        Command::Plot(a) => plot(a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn provenance_lines(pairs: &[(String, String)]) -> String {
    pairs.iter().fold(String::new(), |mut s, (k, v)| {
        let _ = writeln!(s, "# {k}={v}");
        s
    })
}

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn column_index(ds: &RawDataset, name: Option<&str>) -> Result<usize> {
    match name {
        None => Ok(ds.n_cols - 1),
        Some(n) => ds.column_names.iter().position(|c| c == n).ok_or_else(|| {
            Error::Parameter(format!(
                "column '{n}' not found (available: {})",
                ds.column_names.join(", ")
            ))
        }),
    }
}

fn decompose(a: &DecomposeArgs) -> Result<()> {
    let ds = load_csv(&a.input, None)?;
    let c = column_index(&ds, a.column.as_deref())?;
    let x = ds.column(c);
    let (pair, setting) = match a.method.to_ascii_lowercase().as_str() {
        "ema" => (ema_recursive(&x, a.alpha)?, kv("alpha", a.alpha)),
        "sma" => (sma(&x, a.kernel)?, kv("kernel", a.kernel)),
        other => return Err(Error::Parameter(format!("unknown method '{other}' (expected ema or sma)"))),
    };
    let mut text = provenance_lines(&[
        kv("command", "decompose"),
        kv("column", &ds.column_names[c]),
        kv("method", a.method.to_ascii_lowercase()),
        setting,
    ]);
    text.push_str("input,trend,seasonal\n");
    for i in 0..x.len() {
        let _ = writeln!(text, "{},{},{}", x[i], pair.trend[i], pair.seasonal[i]);
    }
    emit(a.out.as_deref(), &text)?;
    if let Some(p) = &a.plot {
        let svg = svg_chart(
            &format!("{} decomposition ({})", ds.column_names[c], a.method),
            &[
                Series { label: "input", values: &x },
                Series { label: "trend", values: &pair.trend },
                Series { label: "seasonal", values: &pair.seasonal },
            ],
            None,
        )?;
        write_svg(p, &svg)?;
    }
    Ok(())
}

fn data_config(d: &DataArgs) -> Result<RunConfig> {
    let mut rc = RunConfig::new();
    if let Some(v) = &d.dataset {
        rc.set("dataset", v)?;
    }
    if let Some(v) = &d.data {
        rc.set("data", v.display().to_string())?;
    }
    if let Some(v) = &d.data_dir {
        rc.set("data_dir", v.display().to_string())?;
    }
    Ok(rc)
}

/// Standardized chronological splits plus the scaler that produced them.
struct Prepared {
    ds: RawDataset,
    train: SeriesView,
    val: SeriesView,
    test: SeriesView,
    scaler: Scaler,
}

fn prepare(path: &Path, preset: Option<&Preset>, lookback: usize, scaler: Option<Scaler>) -> Result<Prepared> {
    let ds = load_csv(path, None)?;
    let spec = preset.map_or_else(|| SplitSpec::ratio(ds.n_rows()), |p| p.split_for(ds.n_rows()));
    let s = split(&ds, spec, lookback)?;
    let scaler = match scaler {
        Some(sc) if sc.mean.len() == ds.n_cols => sc,
        Some(sc) => {
            return Err(Error::Dimension(format!(
                "checkpoint scaler covers {} variables, dataset has {}",
                sc.mean.len(),
                ds.n_cols
            )))
        }
        None => Scaler::fit(&s.train, &ds.column_names)?,
    };
    Ok(Prepared {
        train: scaler.transform(&s.train),
        val: scaler.transform(&s.val),
        test: scaler.transform(&s.test),
        scaler,
        ds,
    })
}

fn file_sha(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

fn train(a: &TrainArgs) -> Result<()> {
    let mut rc = match &a.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::new(),
    };
    rc.apply_env(std::env::var(SEED_ENV).ok())?;
    let d = &a.data;
    let flags: Vec<(&str, Option<String>)> = vec![
        ("dataset", d.dataset.clone()),
        ("data", d.data.as_ref().map(|p| p.display().to_string())),
        ("data_dir", d.data_dir.as_ref().map(|p| p.display().to_string())),
        ("lookback", a.lookback.map(|v| v.to_string())),
        ("horizon", a.horizon.map(|v| v.to_string())),
        ("alpha", a.alpha.map(|v| v.to_string())),
        ("patch_len", a.patch_len.map(|v| v.to_string())),
        ("stride", a.stride.map(|v| v.to_string())),
        ("routing", a.routing.clone()),
        ("batch_size", a.batch_size.map(|v| v.to_string())),
        ("epochs", a.epochs.map(|v| v.to_string())),
        ("patience", a.patience.map(|v| v.to_string())),
        ("max_steps", a.max_steps.map(|v| v.to_string())),
        ("loss", a.loss.clone()),
        ("arctan_m", a.arctan_m.map(|v| v.to_string())),
        ("lr", a.lr.map(|v| v.to_string())),
        ("schedule", a.schedule.clone()),
        ("lr_k", a.lr_k.map(|v| v.to_string())),
        ("lr_s", a.lr_s.map(|v| v.to_string())),
        ("lr_w", a.lr_w.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
        ("out_dir", a.out_dir.as_ref().map(|p| p.display().to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            rc.set(k, v)?;
        }
    }
    let r = rc.resolve()?;
    let cfg = &r.train;
    let prep = prepare(&r.data_path, r.preset, cfg.lookback, None)?;
    fs::create_dir_all(&r.out_dir).map_err(|e| Error::io(&r.out_dir, e))?;
    let config_path = r.out_dir.join("config.ini");
    checkpoint::write_atomic(&config_path, r.to_ini().as_bytes())?;
    let config_hash = r.config_hash();

    let model = XPatch::new(cfg.model_config(prep.ds.n_cols), cfg.seed)?;
    let stem = r.out_dir.join("checkpoint");
    let mut metadata = BTreeMap::new();
    metadata.insert("dataset".to_string(), r.dataset.clone());
    metadata.insert("config_sha256".to_string(), config_hash.clone());
    metadata.insert("seed".to_string(), cfg.seed.to_string());
    let artifacts = Artifacts {
        checkpoint: Some(stem.clone()),
        history: Some(r.out_dir.join("history.csv")),
        scaler: Some(&prep.scaler),
        metadata,
    };
    log::info!(
        "training on {} ({} rows, {} variables), L={} T={}",
        r.dataset,
        prep.ds.n_rows(),
        prep.ds.n_cols,
        cfg.lookback,
        cfg.horizon
    );
    let outcome = fit(model, &prep.train, &prep.val, cfg, &artifacts)?;
    let batches = windows(&prep.test, cfg.lookback, cfg.horizon, EVAL_BATCH, Order::Chronological)?;
    let report = EvalReport {
        dataset: r.dataset.clone(),
        lookback: cfg.lookback,
        horizon: cfg.horizon,
        seed: cfg.seed,
        metrics: evaluate(&outcome.model, &batches, Scale::Normalized)?,
    };
    let prov = vec![
        kv("config_sha256", &config_hash),
        kv("checkpoint_sha256", file_sha(&checkpoint::paths(&stem).0)?),
        kv("split", "test"),
        kv("scale", "normalized"),
        kv("best_epoch", outcome.best_epoch),
    ];
    let csv = report.to_csv(&prov);
    checkpoint::write_atomic(&r.out_dir.join("report.csv"), csv.as_bytes())?;
    println!("{}\n{}", EvalReport::CSV_HEADER, report.csv_row());
    Ok(())
}

fn load_for_data(ckpt: &Path, data: &DataArgs) -> Result<(checkpoint::Checkpoint, String, Prepared)> {
    let ck = checkpoint::load(ckpt)?;
    let rc = data_config(data)?;
    let (name, path, preset) = rc.data_source()?;
    let prep = prepare(&path, preset, ck.model.config.lookback, ck.scaler.clone())?;
    if prep.ds.n_cols != ck.model.config.channels {
        return Err(Error::Dimension(format!(
            "checkpoint expects {} variables, dataset has {}",
            ck.model.config.channels, prep.ds.n_cols
        )));
    }
    Ok((ck, name, prep))
}

fn checkpoint_provenance(ck: &checkpoint::Checkpoint) -> Vec<(String, String)> {
    vec![
        kv("config_sha256", ck.metadata.get("config_sha256").map_or("unknown", String::as_str)),
        kv("checkpoint_sha256", &ck.sha256),
    ]
}

fn eval(a: &EvalArgs) -> Result<()> {
    let (ck, name, prep) = load_for_data(&a.checkpoint, &a.data)?;
    let cfg = &ck.model.config;
    let batches = windows(&prep.test, cfg.lookback, cfg.horizon, EVAL_BATCH, Order::Chronological)?;
    let scale = if a.raw_scale { Scale::Raw(&prep.scaler) } else { Scale::Normalized };
    let report = EvalReport {
        dataset: name,
        lookback: cfg.lookback,
        horizon: cfg.horizon,
        seed: ck.metadata.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0),
        metrics: evaluate(&ck.model, &batches, scale)?,
    };
    let mut prov = checkpoint_provenance(&ck);
    prov.push(kv("split", "test"));
    prov.push(kv("scale", if a.raw_scale { "raw" } else { "normalized" }));
    emit(a.out.as_deref(), &report.to_csv(&prov))?;
    if let Some(p) = &a.per_horizon {
        fs::write(p, report.per_horizon_csv()).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn forecast_cmd(a: &ForecastArgs) -> Result<()> {
    let ck = checkpoint::load(&a.checkpoint)?;
    let scaler = ck.scaler.clone().ok_or_else(|| {
        Error::Data(format!(
            "checkpoint {} carries no scaler; forecasts need the training statistics",
            a.checkpoint.display()
        ))
    })?;
    let ds = load_csv(&a.input, None)?;
    if ds.n_cols != ck.model.config.channels {
        return Err(Error::Dimension(format!(
            "checkpoint expects {} variables, input has {}",
            ck.model.config.channels, ds.n_cols
        )));
    }
    let f = forecast(&ck.model, &scaler, &ds.view(), ck.model.config.lookback)?;
    emit(a.out.as_deref(), &f.to_csv(&ds.column_names, &checkpoint_provenance(&ck)))
}

fn adf(a: &AdfArgs) -> Result<()> {
    let ds = load_csv(&a.input, None)?;
    let c = column_index(&ds, a.column.as_deref())?;
    let table = chunked_adf(&ds.column(c), a.chunk_len, a.alpha, a.max_lags)?;
    let mut text = provenance_lines(&[
        kv("command", "adf"),
        kv("column", &ds.column_names[c]),
        kv("chunk_len", a.chunk_len),
        kv("alpha", a.alpha),
        kv("max_lags", a.max_lags.map_or_else(|| "schwert".to_string(), |l| l.to_string())),
    ]);
    text.push_str(&table.to_csv());
    emit(a.out.as_deref(), &text)?;
    for comp in Component::ALL {
        let s = table.summary(comp);
        eprintln!(
            "{:<8} mean p = {:.4e}, stationary chunks = {}/{}",
            comp.name(),
            s.mean_p,
            s.stationary,
            s.chunks
        );
    }
    Ok(())
}

fn plot(a: &PlotArgs) -> Result<()> {
    let (ck, name, prep) = load_for_data(&a.checkpoint, &a.data)?;
    let (l, t) = (ck.model.config.lookback, ck.model.config.horizon);
    let c = column_index(&prep.ds, a.channel.as_deref())?;
    let test = &prep.test;
    let count = test.window_count(l, t);
    if a.window >= count {
        return Err(Error::Parameter(format!(
            "window {} is out of range; the test split has {count} windows",
            a.window
        )));
    }
    let m = test.n_cols;
    let sub = SeriesView {
        values: test.values[a.window * m..(a.window + l) * m].to_vec(),
        n_cols: m,
        first_row: test.first_row + a.window,
    };
    let x: Tensor = lookback_rows(&sub, l)?;
    let pred = ck.model.forecast_rows(&x)?;
    let raw = |v: f64| prep.scaler.inverse_value(c, v);
    let history: Vec<f64> = (0..l).map(|k| raw(test.row(a.window + k)[c])).collect();
    let truth: Vec<f64> = (0..t).map(|k| raw(test.row(a.window + l + k)[c])).collect();
    let prediction: Vec<f64> = pred.data()[c * t..(c + 1) * t].iter().map(|v| raw(*v)).collect();
    let title = format!("{name} {} test window {} (L={l}, T={t})", prep.ds.column_names[c], a.window);
    write_svg(&a.out, &prediction_chart(&title, &history, &truth, &prediction)?)
}
