//! From stop-line crossing events to aligned regression tasks.
//!
//! Events are binned into fixed-width intervals to give one traffic-volume
//! series per `<intersection><direction>` name, normalised to `[0, 1]` with
//! statistics from the training prefix, and multiplexed with forward-shifted
//! copies of every series.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::trafficnet::CrossingLog;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time_s: f64,
    pub series: String,
    pub count: f64,
}

/// Crossing events sorted by time, ties by (intersection, direction, count).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub records: Vec<EventRecord>,
}

/// Splits `"12e"` into `("12", 'e')`.
pub fn split_series_name(name: &str) -> Option<(&str, char)> {
    let letter = name.chars().last()?;
    let node = &name[..name.len() - letter.len_utf8()];
    let valid = !node.is_empty()
        && node.bytes().all(|b| b.is_ascii_digit())
        && matches!(letter, 'n' | 's' | 'e' | 'w');
    valid.then_some((node, letter))
}

/// Natural ordering of series names: intersection number, then direction letter.
pub fn series_order(a: &str, b: &str) -> Ordering {
    match (split_series_name(a), split_series_name(b)) {
        (Some((na, la)), Some((nb, lb))) => na
            .len()
            .cmp(&nb.len())
            .then_with(|| na.cmp(nb))
            .then(la.cmp(&lb)),
        _ => a.cmp(b),
    }
}

fn record_order(a: &EventRecord, b: &EventRecord) -> Ordering {
    let key = |r: &EventRecord| split_series_name(&r.series).map(|(n, l)| (n.to_owned(), l));
    a.time_s
        .total_cmp(&b.time_s)
        .then_with(|| key(a).cmp(&key(b)))
        .then_with(|| a.count.total_cmp(&b.count))
}

impl EventLog {
    pub fn new(mut records: Vec<EventRecord>) -> Self {
        records.sort_by(record_order);
        Self { records }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct series names in natural order.
    pub fn series_names(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.series.as_str()).collect();
        let mut names: Vec<String> = set.into_iter().map(str::to_owned).collect();
        names.sort_by(|a, b| series_order(a, b));
        names
    }

    pub fn total_count(&self) -> f64 {
        self.records.iter().map(|r| r.count).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_s", "series", "count"])?;
        for r in &self.records {
            w.write_record([r.time_s.to_string(), r.series.clone(), r.count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

impl From<&CrossingLog> for EventLog {
    fn from(log: &CrossingLog) -> Self {
        EventLog::new(
            log.records
                .iter()
                .map(|r| EventRecord {
                    time_s: r.time_s,
                    series: r.series(),
                    count: r.count,
                })
                .collect(),
        )
    }
}

/// Parses the event CSV (`time_s,series[,count]`).
pub fn parse_events<R: Read>(input: R) -> Result<EventLog> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let header: Vec<&str> = headers.iter().collect();
    let has_count = match header.as_slice() {
        ["time_s", "series"] => false,
        ["time_s", "series", "count"] => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "expected header \"time_s,series,count\", got \"{}\"",
                    header.join(",")
                ),
            })
        }
    };

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let fail = |message: String| Error::Parse { line, message };
        let expected = if has_count { 2..=3 } else { 2..=2 };
        if !expected.contains(&row.len()) {
            return Err(fail(format!("expected {} fields, got {}", header.len(), row.len())));
        }
        let time_s: f64 = row[0]
            .parse()
            .map_err(|_| fail(format!("time {:?} is not a number", &row[0])))?;
        if !time_s.is_finite() || time_s < 0.0 {
            return Err(fail(format!("time must be finite and non-negative, got {time_s}")));
        }
        let series = row[1].to_string();
        if split_series_name(&series).is_none() {
            return Err(fail(format!(
                "series {series:?} must be an intersection number followed by n, s, e or w"
            )));
        }
        let count = match row.get(2) {
            None | Some("") => 1.0,
            Some(text) => {
                let c: f64 = text
                    .parse()
                    .map_err(|_| fail(format!("count {text:?} is not a number")))?;
                if !c.is_finite() || c < 0.0 {
                    return Err(fail(format!("count must be finite and non-negative, got {c}")));
                }
                c
            }
        };
        records.push(EventRecord {
            time_s,
            series,
            count,
        });
    }
    Ok(EventLog::new(records))
}

pub fn parse_events_str(text: &str) -> Result<EventLog> {
    parse_events(text.as_bytes())
}

/// Named, binned series. `values[t][j]` is series `names[j]` in bin `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub interval_s: f64,
    pub t0_s: f64,
}

impl SeriesMatrix {
    pub fn new(names: Vec<String>, values: Vec<Vec<f64>>, interval_s: f64, t0_s: f64) -> Result<Self> {
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::Data("series names must be unique".into()));
        }
        if values.is_empty() {
            return Err(Error::Data("series matrix needs at least one time step".into()));
        }
        if let Some(row) = values.iter().find(|r| r.len() != names.len()) {
            return Err(Error::Dimension(format!(
                "row has {} values for {} series",
                row.len(),
                names.len()
            )));
        }
        Ok(Self {
            names,
            values,
            interval_s,
            t0_s,
        })
    }

    pub fn n_times(&self) -> usize {
        self.values.len()
    }

    pub fn n_series(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[j]).collect()
    }

    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        self.index_of(name).map(|j| self.column(j))
    }

    /// Writes the series CSV: a `t` column with the bin index, then one column per series.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (t, row) in self.values.iter().enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, interval_s: f64, t0_s: f64) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let headers = reader.headers()?.clone();
        if headers.get(0) != Some("t") {
            return Err(Error::Parse {
                line: 1,
                message: "series CSV must start with a \"t\" column".into(),
            });
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
        let mut values = Vec::new();
        for row in reader.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let parsed: std::result::Result<Vec<f64>, _> =
                row.iter().skip(1).map(str::parse::<f64>).collect();
            values.push(parsed.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?);
        }
        Self::new(names, values, interval_s, t0_s)
    }
}

/// Optional controls for [`bin_counts`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BinOptions {
    /// Columns to produce, in this order. Defaults to every series in the log.
    pub names: Option<Vec<String>>,
    /// Left edge of bin 0. Defaults to the earliest event.
    pub t0_s: Option<f64>,
    /// Exclusive end of the binned window. Defaults to just past the last event's bin.
    pub t_end_s: Option<f64>,
}

/// Counts events per series in left-closed, right-open bins of width `interval_s`.
pub fn bin_counts(log: &EventLog, interval_s: f64, opts: &BinOptions) -> Result<SeriesMatrix> {
    if !(interval_s.is_finite() && interval_s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "interval must be positive, got {interval_s}"
        )));
    }
    let t0 = match (opts.t0_s, log.records.first()) {
        (Some(t0), _) => t0,
        (None, Some(first)) => first.time_s,
        (None, None) => return Err(Error::Data("cannot bin an empty log without a start time".into())),
    };

    let bin_of = |t: f64| -> i64 {
        let mut b = ((t - t0) / interval_s).floor() as i64;
        // keep the computed edges authoritative: t0 + b·interval ≤ t < t0 + (b+1)·interval
        if t0 + (b + 1) as f64 * interval_s <= t {
            b += 1;
        } else if t0 + b as f64 * interval_s > t {
            b -= 1;
        }
        b
    };

    let n_bins = match opts.t_end_s {
        Some(end) => {
            let span = end - t0;
            if !(span > 0.0) {
                return Err(Error::Data(format!("binning window has no span ({t0} to {end})")));
            }
            (span / interval_s).ceil() as usize
        }
        None => match log.records.last() {
            Some(last) if last.time_s >= t0 => bin_of(last.time_s) as usize + 1,
            _ => return Err(Error::Data("no events at or after the start time (no span)".into())),
        },
    };

    let present: BTreeSet<&str> = log.records.iter().map(|r| r.series.as_str()).collect();
    let names = match &opts.names {
        Some(names) => {
            let missing: Vec<String> = names
                .iter()
                .filter(|n| !present.contains(n.as_str()))
                .cloned()
                .collect();
            if !missing.is_empty() {
                return Err(Error::MissingSeries(missing));
            }
            names.clone()
        }
        None => log.series_names(),
    };
    let column: BTreeMap<&str, usize> = names.iter().enumerate().map(|(j, n)| (n.as_str(), j)).collect();

    let mut values = vec![vec![0.0; names.len()]; n_bins];
    for r in &log.records {
        let Some(&j) = column.get(r.series.as_str()) else {
            continue;
        };
        if r.time_s < t0 {
            continue;
        }
        let b = bin_of(r.time_s);
        if b >= 0 && (b as usize) < n_bins {
            values[b as usize][j] += r.count;
        }
    }
    SeriesMatrix::new(names, values, interval_s, t0)
}

/// Per-series min/max of the segment the model was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    /// Statistics over the first `rows` time steps of `m`.
    pub fn fit_prefix(m: &SeriesMatrix, rows: usize) -> Result<Self> {
        if rows == 0 || rows > m.n_times() {
            return Err(Error::InvalidParameter(format!(
                "normalisation segment of {rows} rows for {} time steps",
                m.n_times()
            )));
        }
        let mut min = vec![f64::INFINITY; m.n_series()];
        let mut max = vec![f64::NEG_INFINITY; m.n_series()];
        for row in &m.values[..rows] {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Self {
            names: m.names.clone(),
            min,
            max,
        })
    }

    pub fn fit(m: &SeriesMatrix) -> Self {
        Self::fit_prefix(m, m.n_times()).expect("series matrix is non-empty")
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn scale(&self, j: usize, v: f64) -> f64 {
        let range = self.max[j] - self.min[j];
        if range > 0.0 {
            (v - self.min[j]) / range
        } else {
            0.0
        }
    }
}

/// Maps each series through `x → (x − min)/(max − min)`; constant series map to 0.
///
/// Without `stats` the statistics are computed from `m` itself.
pub fn normalize(m: &SeriesMatrix, stats: Option<&NormStats>) -> Result<(SeriesMatrix, NormStats)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => NormStats::fit(m),
    };
    let mut map = Vec::with_capacity(m.n_series());
    let mut missing = Vec::new();
    for name in &m.names {
        match stats.index_of(name) {
            Some(k) => map.push(k),
            None => missing.push(name.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingSeries(missing));
    }
    let values = m
        .values
        .iter()
        .map(|row| row.iter().zip(&map).map(|(&v, &k)| stats.scale(k, v)).collect())
        .collect();
    Ok((
        SeriesMatrix {
            values,
            ..m.clone()
        },
        stats,
    ))
}

/// Column label of a multiplexed feature.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureLabel {
    pub series: String,
    pub lag: usize,
}

impl std::fmt::Display for FeatureLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}_lag_{}", self.series, self.lag)
    }
}

/// Series plus their forward-shifted copies.
///
/// Row `t` holds `source[t + lag]` in column `(series, lag)`; only rows for which
/// every lag is defined are kept, so there are `T − p` of them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub labels: Vec<FeatureLabel>,
    pub values: Vec<Vec<f64>>,
    pub p: usize,
    /// Time index (in `source`) of row 0.
    pub alignment: usize,
    pub source: SeriesMatrix,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.len()
    }
}

pub fn multiplex(m: &SeriesMatrix, p: usize) -> Result<FeatureMatrix> {
    let t = m.n_times();
    if p >= t {
        return Err(Error::InvalidParameter(format!(
            "maximum shift p = {p} needs more than {t} time steps"
        )));
    }
    let labels: Vec<FeatureLabel> = m
        .names
        .iter()
        .flat_map(|s| {
            (0..=p).map(move |lag| FeatureLabel {
                series: s.clone(),
                lag,
            })
        })
        .collect();
    let values = (0..t - p)
        .map(|row| {
            (0..m.n_series())
                .flat_map(|j| (0..=p).map(move |lag| (j, lag)))
                .map(|(j, lag)| m.values[row + lag][j])
                .collect()
        })
        .collect();
    Ok(FeatureMatrix {
        labels,
        values,
        p,
        alignment: 0,
        source: m.clone(),
    })
}

/// Supervised rows predicting `target` at `t + tau` from features at `t..=t+p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub feature_labels: Vec<FeatureLabel>,
    /// All usable rows; the first `n_train` are the training set.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub n_train: usize,
    pub tau: usize,
    pub target_name: String,
}

impl Task {
    pub fn x_train(&self) -> &[Vec<f64>] {
        &self.x[..self.n_train]
    }
    pub fn y_train(&self) -> &[f64] {
        &self.y[..self.n_train]
    }
    pub fn x_test(&self) -> &[Vec<f64>] {
        &self.x[self.n_train..]
    }
    pub fn y_test(&self) -> &[f64] {
        &self.y[self.n_train..]
    }
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }
    /// Source time index of the target value in row `i`.
    pub fn target_time(&self, i: usize) -> usize {
        i + self.tau
    }
}

pub fn check_causality(tau: usize, p: usize) -> Result<()> {
    if tau == 0 {
        return Err(Error::InvalidParameter("forecasting horizon tau must be at least 1".into()));
    }
    if tau <= p {
        return Err(Error::Causality { tau, p });
    }
    Ok(())
}

pub fn check_ratio(name: &str, r: f64) -> Result<()> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {r}")));
    }
    Ok(())
}

/// Builds the regression task.
///
/// The target series and every series in `exclude` are dropped from the
/// feature side; unknown names in `exclude` are ignored. The split is a
/// contiguous prefix of `floor(r · rows)` training rows.
pub fn make_task(
    features: &FeatureMatrix,
    target_name: &str,
    tau: usize,
    exclude: &[String],
    r: f64,
) -> Result<Task> {
    check_causality(tau, features.p)?;
    check_ratio("train ratio r", r)?;
    let target = features
        .source
        .index_of(target_name)
        .ok_or_else(|| Error::MissingSeries(vec![target_name.to_string()]))?;

    let keep: Vec<usize> = features
        .labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.series != target_name && !exclude.contains(&l.series))
        .map(|(k, _)| k)
        .collect();
    if keep.is_empty() {
        return Err(Error::Data("no feature series left after exclusions".into()));
    }
    let total = features.source.n_times();
    if total <= tau {
        return Err(Error::Data(format!(
            "{total} time steps leave no rows for horizon {tau}"
        )));
    }
    let n_rows = total - tau;
    let x: Vec<Vec<f64>> = (0..n_rows)
        .map(|t| keep.iter().map(|&k| features.values[t][k]).collect())
        .collect();
    let y: Vec<f64> = (0..n_rows)
        .map(|t| features.source.values[t + tau][target])
        .collect();
    let n_train = (r * n_rows as f64).floor() as usize;
    if n_train == 0 || n_train == n_rows {
        return Err(Error::Data(format!(
            "split ratio {r} on {n_rows} rows leaves an empty training or test set"
        )));
    }
    Ok(Task {
        feature_labels: keep.iter().map(|&k| features.labels[k].clone()).collect(),
        x,
        y,
        n_train,
        tau,
        target_name: target_name.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trafficnet::{build_lattice, SignalTemplate, TrafficState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parse_empty_and_single() {
        assert!(parse_events_str("time_s,series,count\n").unwrap().is_empty());
        let log = parse_events_str("time_s,series,count\n12.5,5e,1\n").unwrap();
        assert_eq!(
            log.records,
            vec![EventRecord {
                time_s: 12.5,
                series: "5e".into(),
                count: 1.0
            }]
        );
    }

    #[test]
    fn count_defaults_to_one() {
        let log = parse_events_str("time_s,series\n3,1n\n1,2s\n").unwrap();
        assert_eq!(log.records[0].time_s, 1.0);
        assert!(log.records.iter().all(|r| r.count == 1.0));
        let log = parse_events_str("time_s,series,count\n3,1n,\n").unwrap();
        assert_eq!(log.records[0].count, 1.0);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let cases = [
            ("time_s,series,count\n1,5e,1\n2,5x,1\n", 3),
            ("time_s,series,count\n-1,5e,1\n", 2),
            ("time_s,series,count\n1,5e,1\n1,5e,1\n1,5e,lots\n", 4),
            ("time_s,series,count\n1,e,1\n", 2),
        ];
        for (text, line) in cases {
            match parse_events_str(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
        assert!(matches!(
            parse_events_str("when,where\n1,5e\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn shuffled_file_parses_to_the_sorted_log() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dirs = ['n', 's', 'e', 'w'];
        let mut rows: Vec<(f64, String, f64)> = (0..1000)
            .map(|_| {
                (
                    (rng.gen_range(0..500) as f64) * 0.5,
                    format!("{}{}", rng.gen_range(1..12), dirs[rng.gen_range(0..4)]),
                    rng.gen_range(1..4) as f64,
                )
            })
            .collect();
        let render = |rows: &[(f64, String, f64)]| {
            let mut s = String::from("time_s,series,count\n");
            for (t, n, c) in rows {
                s.push_str(&format!("{t},{n},{c}\n"));
            }
            s
        };
        let shuffled = parse_events_str(&render(&rows)).unwrap();
        // oracle: sort the raw rows with the documented key, then parse
        rows.sort_by(|a, b| {
            let ka = split_series_name(&a.1).unwrap();
            let kb = split_series_name(&b.1).unwrap();
            a.0.total_cmp(&b.0)
                .then(ka.cmp(&kb))
                .then(a.2.total_cmp(&b.2))
        });
        let sorted = parse_events_str(&render(&rows)).unwrap();
        assert_eq!(shuffled, sorted);
    }

    #[test]
    fn bin_boundaries_are_left_closed() {
        let log = parse_events_str("time_s,series\n0,5e\n17.9,5e\n18.0,5e\n").unwrap();
        let m = bin_counts(&log, 18.0, &BinOptions::default()).unwrap();
        assert_eq!(m.values, vec![vec![2.0], vec![1.0]]);
    }

    #[test]
    fn bin_with_no_span_fails() {
        let opts = BinOptions {
            names: Some(names(&["5e"])),
            t0_s: Some(0.0),
            t_end_s: Some(0.0),
        };
        assert!(matches!(
            bin_counts(&EventLog::default(), 18.0, &opts),
            Err(Error::Data(_))
        ));
        assert!(bin_counts(&EventLog::default(), 18.0, &BinOptions::default()).is_err());
    }

    #[test]
    fn bin_reports_missing_names() {
        let log = parse_events_str("time_s,series\n0,5e\n").unwrap();
        let opts = BinOptions {
            names: Some(names(&["5e", "9w", "8n"])),
            ..Default::default()
        };
        match bin_counts(&log, 1.0, &opts) {
            Err(Error::MissingSeries(m)) => assert_eq!(m, names(&["9w", "8n"])),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bin_window_and_ordering() {
        let log = parse_events_str("time_s,series,count\n1,10e,2\n2,2n,1\n9,1s,1\n").unwrap();
        let opts = BinOptions {
            names: None,
            t0_s: Some(0.0),
            t_end_s: Some(5.0),
        };
        let m = bin_counts(&log, 2.0, &opts).unwrap();
        assert_eq!(m.names, names(&["1s", "2n", "10e"]));
        assert_eq!(m.n_times(), 3);
        assert_eq!(m.values[0], vec![0.0, 0.0, 2.0]);
        assert_eq!(m.values[1], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn simulator_log_round_trips_through_binning() {
        let net = build_lattice(3, 3, &SignalTemplate::default(), 9).unwrap();
        let steps = 500;
        let sim = net
            .simulate(&TrafficState::uniform(&net, 5.0), steps, 1.5)
            .unwrap();
        let csv = sim.log.to_csv_string().unwrap();
        let log = parse_events_str(&csv).unwrap();
        assert_eq!(log.to_csv_string().unwrap(), csv);
        let opts = BinOptions {
            names: None,
            t0_s: Some(0.0),
            t_end_s: Some(steps as f64 * 1.5),
        };
        let m = bin_counts(&log, 1.5, &opts).unwrap();
        assert_eq!(m.n_times(), steps);
        for link in 0..net.n_links() {
            let j = m.index_of(&net.series_name(link)).unwrap();
            for (k, released) in sim.released.iter().enumerate() {
                assert_eq!(m.values[k][j], released[link], "link {link} step {k}");
            }
        }
    }

    #[test]
    fn normalize_examples() {
        let m = SeriesMatrix::new(
            names(&["1e", "2e"]),
            vec![vec![2.0, 3.0], vec![4.0, 3.0], vec![6.0, 3.0]],
            1.0,
            0.0,
        )
        .unwrap();
        let (n, stats) = normalize(&m, None).unwrap();
        assert_eq!(n.column(0), vec![0.0, 0.5, 1.0]);
        assert_eq!(n.column(1), vec![0.0, 0.0, 0.0]);
        assert_eq!(stats.min, vec![2.0, 3.0]);

        let test = SeriesMatrix::new(names(&["1e", "2e"]), vec![vec![10.0, 1.0], vec![0.0, 3.0]], 1.0, 0.0)
            .unwrap();
        let (nt, _) = normalize(&test, Some(&stats)).unwrap();
        // affine oracle (x - 2) / 4
        assert_eq!(nt.column(0), vec![2.0, -0.5]);
        assert_eq!(nt.column(1), vec![0.0, 0.0]);

        let other = SeriesMatrix::new(names(&["7w"]), vec![vec![1.0]], 1.0, 0.0).unwrap();
        assert!(matches!(normalize(&other, Some(&stats)), Err(Error::MissingSeries(_))));
    }

    #[test]
    fn multiplex_identity_and_counts() {
        let m = SeriesMatrix::new(
            names(&["1e", "2e"]),
            (0..10).map(|t| vec![t as f64, 10.0 * t as f64]).collect(),
            1.0,
            0.0,
        )
        .unwrap();
        let f0 = multiplex(&m, 0).unwrap();
        assert_eq!(f0.values, m.values);
        let f2 = multiplex(&m, 2).unwrap();
        assert_eq!(f2.labels.len(), 6);
        assert_eq!(f2.n_rows(), 8);
        assert!(multiplex(&m, 10).is_err());
    }

    #[test]
    fn multiplex_columns_match_shifted_source_exhaustively() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = SeriesMatrix::new(
            names(&["1n", "1s", "2e"]),
            (0..5).map(|_| (0..3).map(|_| rng.gen()).collect()).collect(),
            1.0,
            0.0,
        )
        .unwrap();
        for p in 0..5 {
            let f = multiplex(&m, p).unwrap();
            for (k, label) in f.labels.iter().enumerate() {
                let j = m.index_of(&label.series).unwrap();
                for t in 0..f.n_rows() {
                    assert_eq!(f.values[t][k], m.values[t + label.lag][j]);
                }
            }
        }
    }

    fn synthetic_matrix(t: usize) -> SeriesMatrix {
        let all = names(&["5e", "5n", "5s", "5w", "6e", "9w"]);
        SeriesMatrix::new(
            all.clone(),
            (0..t)
                .map(|i| (0..all.len()).map(|j| (i * 7 + j * 3) as f64 % 5.0).collect())
                .collect(),
            18.0,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn task_at_the_reference_operating_point() {
        let f = multiplex(&synthetic_matrix(60), 6).unwrap();
        let exclude = names(&["5n", "5s", "5w"]);
        let task = make_task(&f, "5e", 7, &exclude, 0.8).unwrap();
        assert!(task
            .feature_labels
            .iter()
            .all(|l| !["5e", "5n", "5s", "5w"].contains(&l.series.as_str())));
        assert_eq!(task.feature_labels.len(), 2 * 7);
        // leakage: every feature time t + lag is strictly before the target time
        for i in 0..task.n_rows() {
            for (k, l) in task.feature_labels.iter().enumerate() {
                assert!(i + l.lag < task.target_time(i));
                let j = f.source.index_of(&l.series).unwrap();
                assert_eq!(task.x[i][k], f.source.values[i + l.lag][j]);
            }
            assert_eq!(task.y[i], f.source.values[i + 7][0]);
        }
    }

    #[test]
    fn task_causality_and_split() {
        let f = multiplex(&synthetic_matrix(60), 7).unwrap();
        assert!(matches!(
            make_task(&f, "5e", 7, &[], 0.8),
            Err(Error::Causality { tau: 7, p: 7 })
        ));
        let f = multiplex(&synthetic_matrix(101), 0).unwrap();
        let task = make_task(&f, "5e", 1, &[], 0.8).unwrap();
        assert_eq!(task.n_rows(), 100);
        assert_eq!((task.x_train().len(), task.x_test().len()), (80, 20));
        assert!(matches!(
            make_task(&f, "3e", 1, &[], 0.8),
            Err(Error::MissingSeries(_))
        ));
        assert!(make_task(&f, "5e", 1, &[], 1.0).is_err());
    }
}
