//! Multivariate CSV ingestion, chronological splits, standardization and
//! sliding-window batching with channel-independent flattening.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::Tensor;
use crate::error::{Error, Result};

/// A loaded multivariate series, stored row-major (`n_rows x n_cols`).
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub name: String,
    pub values: Vec<f64>,
    pub n_cols: usize,
    pub column_names: Vec<String>,
    /// Date stamps of each row when the file carried a `date` column.
    pub dates: Option<Vec<String>>,
    pub frequency: String,
}

impl RawDataset {
    pub fn new(name: impl Into<String>, values: Vec<f64>, column_names: Vec<String>) -> Result<Self> {
        let n_cols = column_names.len();
        if n_cols == 0 || values.is_empty() || !values.len().is_multiple_of(n_cols) {
            return Err(Error::Data(format!(
                "{} values cannot be arranged into {n_cols} columns",
                values.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            values,
            n_cols,
            column_names,
            dates: None,
            frequency: String::from("unknown"),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.n_cols).copied().collect()
    }

    pub fn view(&self) -> SeriesView {
        SeriesView {
            values: self.values.clone(),
            n_cols: self.n_cols,
            first_row: 0,
        }
    }
}

/// Reads a CSV with a header row. When `date_column_present` is `None` the
/// first column is treated as a date column iff its header is `date`.
pub fn load_csv(path: impl AsRef<Path>, date_column_present: Option<bool>) -> Result<RawDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: unreadable header: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let has_date = date_column_present
        .unwrap_or_else(|| headers.first().is_some_and(|h| h.eq_ignore_ascii_case("date")));
    let skip = usize::from(has_date);
    if headers.len() <= skip {
        return Err(Error::Data(format!("{}: no numeric columns", path.display())));
    }
    let column_names = headers[skip..].to_vec();
    let mut values = Vec::new();
    let mut dates = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        // 1-based data row, header excluded
        let row_no = row_idx + 1;
        let record = record.map_err(|e| Error::Data(format!("{}: row {row_no}: {e}", path.display())))?;
        if record.len() != headers.len() {
            return Err(Error::Data(format!(
                "{}: row {row_no} has {} cells, header has {}",
                path.display(),
                record.len(),
                headers.len()
            )));
        }
        if has_date {
            dates.push(record[0].to_string());
        }
        for (c, cell) in record.iter().enumerate().skip(skip) {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "{}: row {row_no}, column '{}': cannot parse '{cell}' as a number",
                    path.display(),
                    headers[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "{}: row {row_no}, column '{}': non-finite value",
                    path.display(),
                    headers[c]
                )));
            }
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(Error::Data(format!("{}: file holds no data rows", path.display())));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut ds = RawDataset::new(name.clone(), values, column_names)?;
    ds.dates = has_date.then_some(dates);
    if let Some(p) = Preset::by_name(&name) {
        ds.frequency = p.frequency.to_string();
    }
    Ok(ds)
}

/// Contiguous block of rows from a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesView {
    pub values: Vec<f64>,
    pub n_cols: usize,
    /// Index of the view's first row in the source dataset.
    pub first_row: usize,
}

impl SeriesView {
    pub fn n_rows(&self) -> usize {
        self.values.len() / self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    /// Number of `(lookback, horizon)` windows the view supports.
    pub fn window_count(&self, lookback: usize, horizon: usize) -> usize {
        (self.n_rows() + 1).saturating_sub(lookback + horizon)
    }
}

/// Row counts of the chronological train / validation / test blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_len: usize,
    pub val_len: usize,
    pub test_len: usize,
}

impl SplitSpec {
    /// 70 % train, 20 % test, the remainder validation.
    pub fn ratio(n_rows: usize) -> Self {
        let train_len = n_rows * 7 / 10;
        let test_len = n_rows * 2 / 10;
        Self {
            train_len,
            val_len: n_rows - train_len - test_len,
            test_len,
        }
    }

    /// Sample counts per split when val/test views carry `lookback` context rows.
    ///
    /// With `horizon = 0` this counts the rows at which a full lookback window ends.
    pub fn sample_counts(&self, lookback: usize, horizon: usize) -> (usize, usize, usize) {
        let count = |len: usize| (len + 1).saturating_sub(lookback + horizon);
        (
            count(self.train_len),
            count(self.val_len + lookback),
            count(self.test_len + lookback),
        )
    }
}

/// Built-in dataset description: split rule and forecasting protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub split: PresetSplit,
    pub lookback: usize,
    pub horizons: [usize; 4],
    pub frequency: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PresetSplit {
    Fixed(SplitSpec),
    Ratio,
}

const LONG_HORIZONS: [usize; 4] = [96, 192, 336, 720];

const ETTH: SplitSpec = SplitSpec {
    train_len: 12 * 30 * 24,
    val_len: 4 * 30 * 24,
    test_len: 4 * 30 * 24,
};
const ETTM: SplitSpec = SplitSpec {
    train_len: 12 * 30 * 24 * 4,
    val_len: 4 * 30 * 24 * 4,
    test_len: 4 * 30 * 24 * 4,
};

pub const PRESETS: [Preset; 10] = [
    Preset { name: "etth1", split: PresetSplit::Fixed(ETTH), lookback: 96, horizons: LONG_HORIZONS, frequency: "hourly" },
    Preset { name: "etth2", split: PresetSplit::Fixed(ETTH), lookback: 96, horizons: LONG_HORIZONS, frequency: "hourly" },
    Preset { name: "ettm1", split: PresetSplit::Fixed(ETTM), lookback: 96, horizons: LONG_HORIZONS, frequency: "15min" },
    Preset { name: "ettm2", split: PresetSplit::Fixed(ETTM), lookback: 96, horizons: LONG_HORIZONS, frequency: "15min" },
    Preset { name: "weather", split: PresetSplit::Ratio, lookback: 96, horizons: LONG_HORIZONS, frequency: "10min" },
    Preset { name: "traffic", split: PresetSplit::Ratio, lookback: 96, horizons: LONG_HORIZONS, frequency: "hourly" },
    Preset { name: "electricity", split: PresetSplit::Ratio, lookback: 96, horizons: LONG_HORIZONS, frequency: "hourly" },
    Preset { name: "exchange", split: PresetSplit::Ratio, lookback: 96, horizons: LONG_HORIZONS, frequency: "daily" },
    Preset { name: "solar", split: PresetSplit::Ratio, lookback: 96, horizons: LONG_HORIZONS, frequency: "10min" },
    Preset { name: "ili", split: PresetSplit::Ratio, lookback: 36, horizons: [24, 36, 48, 60], frequency: "weekly" },
];

impl Preset {
    /// Case-insensitive lookup; common file stems (`ETTh1`, `national_illness`,
    /// `exchange_rate`) resolve too.
    pub fn by_name(name: &str) -> Option<&'static Preset> {
        let key = name.to_ascii_lowercase();
        let key = match key.as_str() {
            "national_illness" | "illness" => "ili",
            "exchange_rate" => "exchange",
            "solar_al" | "solar-energy" => "solar",
            "ecl" => "electricity",
            k => k,
        };
        PRESETS.iter().find(|p| p.name == key)
    }

    /// Conventional file name of the public release.
    pub fn file_name(&self) -> &'static str {
        match self.name {
            "etth1" => "ETTh1.csv",
            "etth2" => "ETTh2.csv",
            "ettm1" => "ETTm1.csv",
            "ettm2" => "ETTm2.csv",
            "weather" => "weather.csv",
            "traffic" => "traffic.csv",
            "electricity" => "electricity.csv",
            "exchange" => "exchange_rate.csv",
            "solar" => "solar_AL.csv",
            _ => "national_illness.csv",
        }
    }

    pub fn split_for(&self, n_rows: usize) -> SplitSpec {
        match self.split {
            PresetSplit::Fixed(s) => s,
            PresetSplit::Ratio => SplitSpec::ratio(n_rows),
        }
    }
}

/// The three chronological views; val and test start with `lookback` rows of context.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: SeriesView,
    pub val: SeriesView,
    pub test: SeriesView,
}

pub fn split(ds: &RawDataset, spec: SplitSpec, lookback: usize) -> Result<Splits> {
    let n = ds.n_rows();
    let used = spec.train_len + spec.val_len + spec.test_len;
    if used > n {
        return Err(Error::Data(format!(
            "split ({}, {}, {}) needs {used} rows but '{}' has {n}",
            spec.train_len, spec.val_len, spec.test_len, ds.name
        )));
    }
    if lookback > spec.train_len || spec.val_len == 0 || spec.test_len == 0 {
        return Err(Error::Data(format!(
            "split ({}, {}, {}) cannot host lookback {lookback}",
            spec.train_len, spec.val_len, spec.test_len
        )));
    }
    let m = ds.n_cols;
    let rows = |start: usize, end: usize| SeriesView {
        values: ds.values[start * m..end * m].to_vec(),
        n_cols: m,
        first_row: start,
    };
    let val_end = spec.train_len + spec.val_len;
    Ok(Splits {
        train: rows(0, spec.train_len),
        val: rows(spec.train_len - lookback, val_end),
        test: rows(val_end - lookback, val_end + spec.test_len),
    })
}

/// Per-column z-score statistics fit on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Population mean and standard deviation of each column.
    pub fn fit(view: &SeriesView, column_names: &[String]) -> Result<Self> {
        let n = view.n_rows();
        if n == 0 {
            return Err(Error::Data("cannot fit a scaler on an empty view".into()));
        }
        let m = view.n_cols;
        let mut mean = vec![0.0; m];
        for r in 0..n {
            mean.iter_mut().zip(view.row(r)).for_each(|(a, v)| *a += v);
        }
        mean.iter_mut().for_each(|v| *v /= n as f64);
        let mut var = vec![0.0; m];
        for r in 0..n {
            for (c, v) in view.row(r).iter().enumerate() {
                var[c] += (v - mean[c]).powi(2);
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt()).collect();
        if let Some(c) = std.iter().position(|&s| s <= 0.0 || !s.is_finite()) {
            let name = column_names.get(c).map_or_else(|| format!("#{c}"), Clone::clone);
            return Err(Error::Data(format!(
                "column '{name}' is constant on the training split; cannot standardize"
            )));
        }
        Ok(Self { mean, std })
    }

    pub fn transform(&self, view: &SeriesView) -> SeriesView {
        let mut out = view.clone();
        for row in out.values.chunks_exact_mut(view.n_cols) {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / self.std[c];
            }
        }
        out
    }

    pub fn inverse_value(&self, channel: usize, v: f64) -> f64 {
        v * self.std[channel] + self.mean[channel]
    }

    pub fn inverse(&self, view: &SeriesView) -> SeriesView {
        let mut out = view.clone();
        for row in out.values.chunks_exact_mut(view.n_cols) {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.inverse_value(c, *v);
            }
        }
        out
    }
}

/// A batch of windows flattened to one univariate row per (window, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    /// `[B·M, L]`; row `b·M + m` is channel `m` of window `b`.
    pub inputs: Tensor,
    /// `[B·M, T]`.
    pub targets: Tensor,
    pub channels: usize,
    /// Start row of each window within its view.
    pub starts: Vec<usize>,
}

impl WindowBatch {
    pub fn n_windows(&self) -> usize {
        self.starts.len()
    }
}

/// `[B, len, M]` time-major blocks to `[B·M, len]` channel rows.
pub fn flatten_channels(block: &[f64], windows: usize, len: usize, channels: usize) -> Vec<f64> {
    let mut out = vec![0.0; block.len()];
    for b in 0..windows {
        for t in 0..len {
            for m in 0..channels {
                out[(b * channels + m) * len + t] = block[(b * len + t) * channels + m];
            }
        }
    }
    out
}

/// Inverse of [`flatten_channels`].
pub fn unflatten_channels(rows: &[f64], windows: usize, len: usize, channels: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows.len()];
    for b in 0..windows {
        for t in 0..len {
            for m in 0..channels {
                out[(b * len + t) * channels + m] = rows[(b * channels + m) * len + t];
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Chronological,
    Shuffled { seed: u64 },
}

/// Builds batches over every valid window start of `view`.
///
/// Shuffled streams drop a trailing partial batch; chronological streams keep it.
pub fn windows(
    view: &SeriesView,
    lookback: usize,
    horizon: usize,
    batch_size: usize,
    order: Order,
) -> Result<Vec<WindowBatch>> {
    if lookback == 0 || horizon == 0 || batch_size == 0 {
        return Err(Error::Config("lookback, horizon and batch size must be positive".into()));
    }
    let count = view.window_count(lookback, horizon);
    if count == 0 {
        return Err(Error::Data(format!(
            "view of {} rows is too short: windows need at least {} rows (lookback {lookback} + horizon {horizon})",
            view.n_rows(),
            lookback + horizon
        )));
    }
    let mut starts: Vec<usize> = (0..count).collect();
    let drop_last = match order {
        Order::Chronological => false,
        Order::Shuffled { seed } => {
            starts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            true
        }
    };
    let m = view.n_cols;
    let mut out = Vec::new();
    for chunk in starts.chunks(batch_size) {
        if drop_last && chunk.len() < batch_size && count >= batch_size {
            break;
        }
        let b = chunk.len();
        let mut inputs = vec![0.0; b * m * lookback];
        let mut targets = vec![0.0; b * m * horizon];
        for (bi, &s) in chunk.iter().enumerate() {
            for t in 0..lookback {
                for (c, v) in view.row(s + t).iter().enumerate() {
                    inputs[(bi * m + c) * lookback + t] = *v;
                }
            }
            for t in 0..horizon {
                for (c, v) in view.row(s + lookback + t).iter().enumerate() {
                    targets[(bi * m + c) * horizon + t] = *v;
                }
            }
        }
        out.push(WindowBatch {
            inputs: Tensor::new(vec![b * m, lookback], inputs)?,
            targets: Tensor::new(vec![b * m, horizon], targets)?,
            channels: m,
            starts: chunk.to_vec(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn toy(n: usize, m: usize) -> RawDataset {
        let values = (0..n * m).map(|i| i as f64).collect();
        RawDataset::new("toy", values, (0..m).map(|c| format!("c{c}")).collect()).unwrap()
    }

    #[test]
    fn loads_small_csv_with_date() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "date,a,b\n2020-01-01,1,2\n2020-01-02,3,4\n2020-01-03,5,6.5").unwrap();
        let ds = load_csv(f.path(), None).unwrap();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.n_cols, 2);
        assert_eq!(ds.row(2), &[5.0, 6.5]);
        assert_eq!(ds.dates.as_ref().unwrap()[1], "2020-01-02");
    }

    #[test]
    fn header_only_is_empty_data_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "date,a,b").unwrap();
        assert!(matches!(load_csv(f.path(), None), Err(Error::Data(_))));
    }

    #[test]
    fn parse_failure_names_row_and_column() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a,b\n1,2\n3,oops").unwrap();
        let msg = load_csv(f.path(), None).unwrap_err().to_string();
        assert!(msg.contains("row 2") && msg.contains("'b'"), "{msg}");
    }

    #[test]
    fn toy_split_index_arithmetic() {
        let ds = toy(10, 1);
        let spec = SplitSpec {
            train_len: 6,
            val_len: 2,
            test_len: 2,
        };
        let s = split(&ds, spec, 2).unwrap();
        assert_eq!(s.val.first_row, 4);
        assert_eq!(s.val.values, vec![4.0, 5.0, 6.0, 7.0]);
        assert_eq!(s.test.values, vec![6.0, 7.0, 8.0, 9.0]);
        let too_big = SplitSpec {
            train_len: 8,
            val_len: 2,
            test_len: 2,
        };
        assert!(split(&ds, too_big, 2).is_err());
    }

    #[test]
    fn scaler_population_stats() {
        let ds = RawDataset::new("x", vec![0.0, 2.0], vec!["a".into()]).unwrap();
        let sc = Scaler::fit(&ds.view(), &ds.column_names).unwrap();
        assert_eq!(sc.mean, vec![1.0]);
        assert_eq!(sc.std, vec![1.0]);
        assert_eq!(sc.transform(&ds.view()).values, vec![-1.0, 1.0]);
    }

    #[test]
    fn scaler_rejects_constant_column() {
        let ds = RawDataset::new("x", vec![1.0, 0.0, 1.0, 5.0], vec!["flat".into(), "ok".into()]).unwrap();
        let msg = Scaler::fit(&ds.view(), &ds.column_names).unwrap_err().to_string();
        assert!(msg.contains("flat"), "{msg}");
    }

    #[test]
    fn window_counts_and_flattening() {
        let ds = toy(5, 1);
        let b = windows(&ds.view(), 2, 1, 10, Order::Chronological).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].n_windows(), 3);

        let ds = toy(40, 7);
        let b = windows(&ds.view(), 4, 2, 32, Order::Chronological).unwrap();
        assert_eq!(b[0].inputs.shape(), &[224, 4]);
        // channel 3 of window 1: rows 1..5, column 3
        let row = &b[0].inputs.data()[(7 + 3) * 4..(7 + 4) * 4];
        assert_eq!(row, &[10.0, 17.0, 24.0, 31.0]);
        // the last input element precedes the first target element
        let tgt = &b[0].targets.data()[(7 + 3) * 2..(7 + 4) * 2];
        assert_eq!(tgt[0], 38.0);
    }

    #[test]
    fn too_short_view_reports_minimum() {
        let ds = toy(3, 1);
        let msg = windows(&ds.view(), 3, 2, 4, Order::Chronological).unwrap_err().to_string();
        assert!(msg.contains("at least 5"), "{msg}");
    }

    #[test]
    fn shuffle_is_seeded() {
        let ds = toy(100, 2);
        let a = windows(&ds.view(), 8, 4, 16, Order::Shuffled { seed: 3 }).unwrap();
        let b = windows(&ds.view(), 8, 4, 16, Order::Shuffled { seed: 3 }).unwrap();
        let c = windows(&ds.view(), 8, 4, 16, Order::Shuffled { seed: 4 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].starts, c[0].starts);
        // 89 windows, 16 per batch: the 9-window remainder is dropped
        assert_eq!(a.len(), 5);
        assert!(a.iter().all(|w| w.n_windows() == 16));
    }

    #[test]
    fn preset_lookup() {
        assert_eq!(Preset::by_name("ETTh1").unwrap().name, "etth1");
        assert_eq!(Preset::by_name("national_illness").unwrap().lookback, 36);
        assert!(Preset::by_name("nope").is_none());
    }
}
