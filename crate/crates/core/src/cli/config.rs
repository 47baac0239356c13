//! Flat `key = value` run configuration.
//!
//! Values are layered: built-in defaults, then the config file, then the
//! `XPATCH_SEED` environment variable, then command-line flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::datasets::Preset;
use crate::error::{Error, Result};
use crate::model::{PatchConfig, Routing};
use crate::train::{LossSpec, ScheduleKind, SchedulerSpec, TrainConfig};

pub const SEED_ENV: &str = "XPATCH_SEED";
pub const DATA_DIR_ENV: &str = "XPATCH_DATA_DIR";

/// Every key a config file may set, in echo order. Each has a matching
/// `train` flag:
///
/// ```
/// use clap::CommandFactory;
/// let cli = xpatch::cli::Cli::command();
/// let train = cli.find_subcommand("train").unwrap();
/// for key in xpatch::cli::KEYS {
///     let flag = key.replace('_', "-");
///     assert!(train.get_arguments().any(|a| a.get_long() == Some(flag.as_str())), "{flag}");
/// }
/// ```
pub const KEYS: &[&str] = &[
    "dataset",
    "data",
    "data_dir",
    "lookback",
    "horizon",
    "alpha",
    "patch_len",
    "stride",
    "routing",
    "batch_size",
    "epochs",
    "patience",
    "max_steps",
    "loss",
    "arctan_m",
    "lr",
    "schedule",
    "lr_k",
    "lr_s",
    "lr_w",
    "seed",
    "out_dir",
];

fn normalize_key(k: &str) -> String {
    k.trim().to_ascii_lowercase().replace('-', "_")
}

/// Parses `key = value` lines; `#` and `;` start comments and `[section]`
/// headers are ignored.
pub fn parse_ini(text: &str, origin: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("{origin}:{}: expected 'key = value', got '{line}'", i + 1))
        })?;
        let key = normalize_key(k);
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("{origin}:{}: unknown key '{key}'", i + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

/// Layered key-value settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

/// A fully resolved training or evaluation setup.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub dataset: String,
    pub data_path: PathBuf,
    pub preset: Option<&'static Preset>,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Parameter(format!("'{v}' is not a valid value for {key}")))
}

impl RunConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            values: parse_ini(&text, &path.display().to_string())?,
        })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let key = normalize_key(key);
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("unknown configuration key '{key}'")));
        }
        self.values.insert(key, value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Applies the seed environment override when present.
    pub fn apply_env(&mut self, seed: Option<String>) -> Result<()> {
        match seed {
            Some(s) if !s.trim().is_empty() => self.set("seed", s.trim()),
            _ => Ok(()),
        }
    }

    fn typed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key).map(|v| parse(key, v)).transpose()
    }

    /// Dataset name, file path and preset (if the name matches one).
    pub fn data_source(&self) -> Result<(String, PathBuf, Option<&'static Preset>)> {
        let named = self.get("dataset");
        if let Some(path) = self.get("data") {
            let path = PathBuf::from(path);
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let name = named.map_or(stem, str::to_string);
            let preset = Preset::by_name(&name);
            return Ok((name, path, preset));
        }
        let name = named.ok_or_else(|| {
            Error::Usage("no dataset given: pass --dataset <preset> or --data <file.csv>".into())
        })?;
        let preset = Preset::by_name(name).ok_or_else(|| {
            let known: Vec<&str> = crate::datasets::PRESETS.iter().map(|p| p.name).collect();
            Error::Parameter(format!("unknown dataset preset '{name}' (known: {})", known.join(", ")))
        })?;
        let dir = self
            .get("data_dir")
            .map(PathBuf::from)
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"));
        Ok((preset.name.to_string(), dir.join(preset.file_name()), Some(preset)))
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let (dataset, data_path, preset) = self.data_source()?;
        let lookback = self.typed("lookback")?.or(preset.map(|p| p.lookback)).unwrap_or(96);
        let horizon = self.typed("horizon")?.or(preset.map(|p| p.horizons[0])).unwrap_or(96);
        let mut t = TrainConfig::new(lookback, horizon);
        if let Some(a) = self.typed("alpha")? {
            t.alpha = a;
        }
        t.patch = PatchConfig {
            patch_len: self.typed("patch_len")?.unwrap_or(t.patch.patch_len),
            stride: self.typed("stride")?.unwrap_or(t.patch.stride),
        };
        if let Some(r) = self.get("routing") {
            t.routing = r.parse::<Routing>()?;
        }
        t.batch_size = self.typed("batch_size")?.unwrap_or(t.batch_size);
        t.epochs = self.typed("epochs")?.unwrap_or(t.epochs);
        t.patience = self.typed("patience")?.unwrap_or(t.patience);
        t.max_steps = self.typed("max_steps")?;
        let m: f64 = self.typed("arctan_m")?.unwrap_or(1.0);
        t.loss = LossSpec::parse(self.get("loss").unwrap_or("arctan"), m)?;
        let d = SchedulerSpec::default();
        t.scheduler = SchedulerSpec {
            kind: self.get("schedule").map_or(Ok(d.kind), str::parse::<ScheduleKind>)?,
            alpha0: self.typed("lr")?.unwrap_or(d.alpha0),
            k: self.typed("lr_k")?.unwrap_or(d.k),
            s: self.typed("lr_s")?.unwrap_or(d.s),
            w: self.typed("lr_w")?.unwrap_or(d.w),
            total_epochs: t.epochs,
        };
        t.seed = self.typed("seed")?.unwrap_or(0);
        t.validate()?;
        let out_dir = self
            .get("out_dir")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(format!("xpatch-{dataset}-{lookback}-{horizon}")));
        Ok(Resolved {
            dataset,
            data_path,
            preset,
            train: t,
            out_dir,
        })
    }
}

impl Resolved {
    /// Every key with its effective value.
    pub fn entries(&self) -> Vec<(String, String)> {
        let t = &self.train;
        let arctan_m = match t.loss {
            LossSpec::Arctan { m } => m,
            _ => 1.0,
        };
        let routing = match t.routing {
            Routing::Original => "original",
            Routing::Reversed => "reversed",
            Routing::LinearOnly => "linear_only",
            Routing::NonlinearOnly => "nonlinear_only",
        };
        let data_dir = self.data_path.parent().map(|p| p.display().to_string()).unwrap_or_default();
        let values: Vec<String> = vec![
            self.dataset.clone(),
            self.data_path.display().to_string(),
            data_dir,
            t.lookback.to_string(),
            t.horizon.to_string(),
            t.alpha.to_string(),
            t.patch.patch_len.to_string(),
            t.patch.stride.to_string(),
            routing.to_string(),
            t.batch_size.to_string(),
            t.epochs.to_string(),
            t.patience.to_string(),
            t.max_steps.map_or_else(|| "none".into(), |s| s.to_string()),
            t.loss.name().to_string(),
            arctan_m.to_string(),
            t.scheduler.alpha0.to_string(),
            t.scheduler.kind.name().to_string(),
            t.scheduler.k.to_string(),
            t.scheduler.s.to_string(),
            t.scheduler.w.to_string(),
            t.seed.to_string(),
            self.out_dir.display().to_string(),
        ];
        KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }

    /// The resolved configuration as a config file. `max_steps = none` is
    /// written as a comment so the file parses back.
    pub fn to_ini(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            if v == "none" {
                let _ = writeln!(out, "# {k} = none");
            } else {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }

    pub fn config_hash(&self) -> String {
        crate::model::checkpoint::sha256_hex(self.to_ini().as_bytes())
    }
}
