//! Dataset schema, CSV ingestion, period splits and feature standardization.
//!
//! Every record couples one station and one verification date with the
//! ensemble-summary predictors, the station descriptors and the observed
//! 2-meter temperature. Raw t2m members are optional; when present they allow
//! scoring the unprocessed ensemble.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ensemble variables, in the order used for predictor columns.
pub const ENSEMBLE_VARIABLES: [&str; 18] = [
    "t2m", "cape", "sp", "tcc", "sshf", "slhf", "u10", "v10", "d2m", "ssr", "str", "sm",
    "v_pl500", "u_pl500", "u_pl850", "v_pl850", "gh_pl500", "q_pl850",
];

/// Station descriptors, placed before the ensemble summaries.
pub const STATION_FEATURES: [&str; 4] = ["station_alt", "orog", "station_lat", "station_lon"];

pub const T2M_MEAN: &str = "t2m_mean";
pub const T2M_STD: &str = "t2m_std";

const KEY_COLUMNS: [&str; 3] = ["station_id", "valid_time", "obs"];
const MEMBER_PREFIX: &str = "t2m_m";
const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("cannot parse `{value}` at row {row}, column `{column}`")]
    ParseError { row: usize, column: String, value: String },
    #[error("dataset has no valid rows")]
    EmptyDataset,
    #[error("training and validation periods overlap")]
    OverlappingRanges,
    #[error("invalid synthetic configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid feature specification: {0}")]
    InvalidFeatureSpec(String),
    #[error("sample references unknown station {0}")]
    UnknownStation(u32),
    #[error("sample has {found} predictors, expected {expected}")]
    PredictorLength { expected: usize, found: usize },
    #[error("sample has a non-finite observation or predictor")]
    NonFinite,
    #[error("feature specifications differ")]
    FeatureMismatch,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered, duplicate-free list of predictor names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    names: Vec<String>,
}

impl FeatureSpec {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, DataError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(DataError::InvalidFeatureSpec("no features".into()));
        }
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(DataError::InvalidFeatureSpec("duplicate feature names".into()));
        }
        Ok(Self { names })
    }

    /// Station descriptors followed by mean and std of every ensemble variable.
    pub fn full() -> Self {
        let mut names: Vec<String> = STATION_FEATURES.iter().map(|s| s.to_string()).collect();
        for var in ENSEMBLE_VARIABLES {
            names.push(format!("{var}_mean"));
            names.push(format!("{var}_std"));
        }
        Self { names }
    }

    pub fn t2m_only() -> Self {
        Self {
            names: vec![T2M_MEAN.to_string(), T2M_STD.to_string()],
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Resolves the column indices of `other`'s names within this spec.
    pub fn indices_of(&self, other: &FeatureSpec) -> Result<Vec<usize>, DataError> {
        other
            .names
            .iter()
            .map(|n| self.index_of(n).ok_or_else(|| DataError::MissingColumn(n.clone())))
            .collect()
    }

    pub fn is_station_feature(name: &str) -> bool {
        STATION_FEATURES.contains(&name)
    }

    /// Indices of all features that are not station descriptors.
    pub fn non_station_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| !Self::is_station_feature(&self.names[i]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: u32,
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub station_id: u32,
    pub valid_time: NaiveDate,
    pub predictors: Vec<f64>,
    pub observation: f64,
    /// Raw t2m ensemble members; empty when the archive carries only summaries.
    pub members: Vec<f64>,
}

/// Inclusive calendar-date interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    /// Whole calendar years `first..=last`.
    pub fn years(first: i32, last: i32) -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(first, 1, 1).expect("valid year"),
            end: NaiveDate::from_ymd_opt(last, 12, 31).expect("valid year"),
        }
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        d >= self.start && d <= self.end
    }

    pub fn overlaps(&self, other: &DateRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// Aligned table of (station, date) records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastDataset {
    feature_spec: FeatureSpec,
    stations: Vec<Station>,
    samples: Vec<Sample>,
}

impl ForecastDataset {
    pub fn new(
        feature_spec: FeatureSpec,
        stations: Vec<Station>,
        samples: Vec<Sample>,
    ) -> Result<Self, DataError> {
        let known: BTreeSet<u32> = stations.iter().map(|s| s.id).collect();
        let p = feature_spec.len();
        let member_count = samples.first().map_or(0, |s| s.members.len());
        for s in &samples {
            if !known.contains(&s.station_id) {
                return Err(DataError::UnknownStation(s.station_id));
            }
            if s.predictors.len() != p {
                return Err(DataError::PredictorLength {
                    expected: p,
                    found: s.predictors.len(),
                });
            }
            if s.members.len() != member_count {
                return Err(DataError::InvalidFeatureSpec("ragged member columns".into()));
            }
            let finite = s.observation.is_finite()
                && s.predictors.iter().all(|v| v.is_finite())
                && s.members.iter().all(|v| v.is_finite());
            if !finite {
                return Err(DataError::NonFinite);
            }
        }
        Ok(Self {
            feature_spec,
            stations,
            samples,
        })
    }

    pub fn feature_spec(&self) -> &FeatureSpec {
        &self.feature_spec
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of raw ensemble members carried per sample (0 when absent).
    pub fn member_count(&self) -> usize {
        self.samples.first().map_or(0, |s| s.members.len())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.predictors[j]).collect()
    }

    pub fn observations(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.observation).collect()
    }

    /// Sample indices grouped by station, in station-list order.
    pub fn indices_by_station(&self) -> Vec<(u32, Vec<usize>)> {
        let mut groups: HashMap<u32, Vec<usize>> = HashMap::new();
        for (i, s) in self.samples.iter().enumerate() {
            groups.entry(s.station_id).or_default().push(i);
        }
        self.stations
            .iter()
            .map(|st| (st.id, groups.remove(&st.id).unwrap_or_default()))
            .collect()
    }

    /// Same stations and spec, restricted to the given sample indices.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            feature_spec: self.feature_spec.clone(),
            stations: self.stations.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Copy with the samples replaced; the caller keeps predictor lengths intact.
    pub fn with_samples(&self, samples: Vec<Sample>) -> Self {
        Self {
            feature_spec: self.feature_spec.clone(),
            stations: self.stations.clone(),
            samples,
        }
    }

    pub fn date_range(&self) -> Option<DateRange> {
        let first = self.samples.iter().map(|s| s.valid_time).min()?;
        let last = self.samples.iter().map(|s| s.valid_time).max()?;
        Some(DateRange::new(first, last))
    }
}

/// Result of CSV ingestion.
#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub dataset: ForecastDataset,
    /// Rows skipped because the observation or a predictor was missing.
    pub dropped: usize,
}

pub fn load_csv(path: impl AsRef<Path>, feature_spec: &FeatureSpec) -> Result<LoadOutcome, DataError> {
    let file = std::fs::File::open(path)?;
    read_csv(file, feature_spec)
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

pub fn read_csv<R: Read>(reader: R, feature_spec: &FeatureSpec) -> Result<LoadOutcome, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let id_col = position(KEY_COLUMNS[0])?;
    let time_col = position(KEY_COLUMNS[1])?;
    let obs_col = position(KEY_COLUMNS[2])?;
    let feature_cols: Vec<usize> = feature_spec
        .names()
        .iter()
        .map(|n| position(n))
        .collect::<Result<_, _>>()?;
    let mut member_cols: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            h.trim()
                .strip_prefix(MEMBER_PREFIX)
                .and_then(|k| k.parse::<usize>().ok())
                .map(|k| (k, i))
        })
        .collect();
    member_cols.sort_unstable();
    let descriptor_cols: Vec<Option<usize>> = ["station_lat", "station_lon", "station_alt"]
        .iter()
        .map(|n| position(n).ok())
        .collect();

    let mut stations: Vec<Station> = Vec::new();
    let mut seen: HashMap<u32, usize> = HashMap::new();
    let mut samples = Vec::new();
    let mut dropped = 0;

    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        // 1-based line number including the header
        let row = row_idx + 2;
        let cell = |c: usize| record.get(c).unwrap_or("");
        let parse_f64 = |c: usize| -> Result<Option<f64>, DataError> {
            let raw = cell(c);
            if is_missing(raw) {
                return Ok(None);
            }
            raw.trim()
                .parse::<f64>()
                .map(Some)
                .map_err(|_| DataError::ParseError {
                    row,
                    column: headers[c].to_string(),
                    value: raw.to_string(),
                })
        };

        let station_id: u32 = cell(id_col).trim().parse().map_err(|_| DataError::ParseError {
            row,
            column: headers[id_col].to_string(),
            value: cell(id_col).to_string(),
        })?;
        let valid_time = NaiveDate::parse_from_str(cell(time_col).trim(), DATE_FORMAT).map_err(|_| {
            DataError::ParseError {
                row,
                column: headers[time_col].to_string(),
                value: cell(time_col).to_string(),
            }
        })?;
        let observation = parse_f64(obs_col)?;
        let mut predictors = Vec::with_capacity(feature_cols.len());
        let mut complete = observation.is_some();
        for &c in &feature_cols {
            match parse_f64(c)? {
                Some(v) => predictors.push(v),
                None => complete = false,
            }
        }
        let mut members = Vec::with_capacity(member_cols.len());
        for &(_, c) in &member_cols {
            match parse_f64(c)? {
                Some(v) => members.push(v),
                None => complete = false,
            }
        }
        if !complete {
            dropped += 1;
            continue;
        }

        if !seen.contains_key(&station_id) {
            let descriptor = |k: usize| -> Result<f64, DataError> {
                match descriptor_cols[k] {
                    Some(c) => Ok(parse_f64(c)?.unwrap_or(f64::NAN)),
                    None => Ok(f64::NAN),
                }
            };
            seen.insert(station_id, stations.len());
            stations.push(Station {
                id: station_id,
                latitude: descriptor(0)?,
                longitude: descriptor(1)?,
                altitude: descriptor(2)?,
            });
        }
        samples.push(Sample {
            station_id,
            valid_time,
            predictors,
            observation: observation.expect("checked complete"),
            members,
        });
    }

    if samples.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let dataset = ForecastDataset::new(feature_spec.clone(), stations, samples)?;
    Ok(LoadOutcome { dataset, dropped })
}

/// Writes the dataset in the ingestion layout. Station descriptor columns are
/// taken from the station list when the feature spec does not carry them.
pub fn write_csv<W: Write>(ds: &ForecastDataset, writer: W) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let spec = ds.feature_spec();
    let extra: Vec<&str> = ["station_alt", "station_lat", "station_lon"]
        .into_iter()
        .filter(|n| spec.index_of(n).is_none())
        .collect();
    let m = ds.member_count();

    let mut header: Vec<String> = KEY_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(extra.iter().map(|s| s.to_string()));
    header.extend(spec.names().iter().cloned());
    header.extend((1..=m).map(|k| format!("{MEMBER_PREFIX}{k:02}")));
    wtr.write_record(&header)?;

    let by_id: HashMap<u32, &Station> = ds.stations().iter().map(|s| (s.id, s)).collect();
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for s in ds.samples() {
        row.clear();
        row.push(s.station_id.to_string());
        row.push(s.valid_time.format(DATE_FORMAT).to_string());
        row.push(s.observation.to_string());
        let st = by_id[&s.station_id];
        for name in &extra {
            let v = match *name {
                "station_alt" => st.altitude,
                "station_lat" => st.latitude,
                _ => st.longitude,
            };
            row.push(v.to_string());
        }
        row.extend(s.predictors.iter().map(|v| v.to_string()));
        row.extend(s.members.iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_csv(ds: &ForecastDataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let tmp = path.with_extension("csv.tmp");
    {
        let file = std::fs::File::create(&tmp)?;
        write_csv(ds, std::io::BufWriter::new(file))?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Splits by verification date. Samples outside both ranges are discarded.
pub fn split_by_period(
    ds: &ForecastDataset,
    train_range: DateRange,
    valid_range: DateRange,
) -> Result<(ForecastDataset, ForecastDataset), DataError> {
    if train_range.overlaps(&valid_range) {
        return Err(DataError::OverlappingRanges);
    }
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for s in ds.samples() {
        if train_range.contains(s.valid_time) {
            train.push(s.clone());
        } else if valid_range.contains(s.valid_time) {
            valid.push(s.clone());
        }
    }
    Ok((ds.with_samples(train), ds.with_samples(valid)))
}

/// Restricts a dataset to one date range.
pub fn filter_period(ds: &ForecastDataset, range: DateRange) -> ForecastDataset {
    let kept = ds
        .samples()
        .iter()
        .filter(|s| range.contains(s.valid_time))
        .cloned()
        .collect();
    ds.with_samples(kept)
}

/// Minimum stored standard deviation; smaller spreads are treated as constant.
pub const MIN_SCALE: f64 = 1e-8;

/// Per-feature location and scale estimated on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub exempt: Vec<usize>,
}

impl StandardizationStats {
    pub fn fit(rows: &[&[f64]], exempt: &[usize]) -> Result<Self, DataError> {
        let first = rows.first().ok_or(DataError::EmptyDataset)?;
        let p = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; p];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for r in rows {
            for j in 0..p {
                var[j] += (r[j] - mean[j]).powi(2);
            }
        }
        let mut sd: Vec<f64> = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s < MIN_SCALE {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        for &j in exempt {
            mean[j] = 0.0;
            sd[j] = 1.0;
        }
        Ok(Self {
            mean,
            sd,
            exempt: exempt.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply_into(&self, row: &[f64], out: &mut [f64]) {
        for ((o, v), (m, s)) in out.iter_mut().zip(row).zip(self.mean.iter().zip(&self.sd)) {
            *o = (v - m) / s;
        }
    }

    pub fn invert_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// Population statistics of every predictor column of `ds`.
pub fn fit_standardization(ds: &ForecastDataset) -> Result<StandardizationStats, DataError> {
    let rows: Vec<&[f64]> = ds.samples().iter().map(|s| s.predictors.as_slice()).collect();
    StandardizationStats::fit(&rows, &[])
}

pub fn apply_standardization(
    ds: &ForecastDataset,
    stats: &StandardizationStats,
) -> Result<ForecastDataset, DataError> {
    if stats.len() != ds.feature_spec().len() {
        return Err(DataError::FeatureMismatch);
    }
    let samples = ds
        .samples()
        .iter()
        .map(|s| Sample {
            predictors: stats.apply_row(&s.predictors),
            ..s.clone()
        })
        .collect();
    Ok(ds.with_samples(samples))
}

pub fn invert_standardization(
    ds: &ForecastDataset,
    stats: &StandardizationStats,
) -> Result<ForecastDataset, DataError> {
    if stats.len() != ds.feature_spec().len() {
        return Err(DataError::FeatureMismatch);
    }
    let samples = ds
        .samples()
        .iter()
        .map(|s| Sample {
            predictors: stats.invert_row(&s.predictors),
            ..s.clone()
        })
        .collect();
    Ok(ds.with_samples(samples))
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_for(spec: &FeatureSpec) -> String {
        let mut cols = vec!["station_id".to_string(), "valid_time".into(), "obs".into()];
        cols.extend(spec.names().iter().cloned());
        cols.join(",")
    }

    #[test]
    fn full_spec_layout() {
        let spec = FeatureSpec::full();
        assert_eq!(spec.len(), 40);
        assert_eq!(&spec.names()[..4], &STATION_FEATURES.map(String::from));
        assert_eq!(spec.index_of(T2M_MEAN), Some(4));
        assert_eq!(spec.index_of(T2M_STD), Some(5));
        assert_eq!(spec.non_station_indices().len(), 36);
        assert_eq!(FeatureSpec::t2m_only().names(), &["t2m_mean", "t2m_std"]);
        assert!(FeatureSpec::new(["a", "a"]).is_err());
    }

    #[test]
    fn drops_rows_with_missing_observation() {
        let spec = FeatureSpec::t2m_only();
        let csv = format!(
            "{}\n1,2016-01-01,3.5,2.0,1.0\n1,2016-01-02,,2.5,1.0\n1,2016-01-03,4.0,NA,1.1\n2,2016-01-01,1.0,0.5,0.7\n",
            header_for(&spec)
        );
        let out = read_csv(csv.as_bytes(), &spec).unwrap();
        assert_eq!(out.dataset.len(), 2);
        assert_eq!(out.dropped, 2);
        assert_eq!(out.dataset.stations().len(), 2);
    }

    #[test]
    fn missing_column_is_reported() {
        let spec = FeatureSpec::t2m_only();
        let csv = "station_id,valid_time,obs,t2m_std\n1,2016-01-01,3.5,1.0\n";
        match read_csv(csv.as_bytes(), &spec) {
            Err(DataError::MissingColumn(c)) => assert_eq!(c, "t2m_mean"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_error_has_location() {
        let spec = FeatureSpec::t2m_only();
        let csv = format!("{}\n1,2016-01-01,3.5,abc,1.0\n", header_for(&spec));
        match read_csv(csv.as_bytes(), &spec) {
            Err(DataError::ParseError { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "t2m_mean");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_dataset() {
        let spec = FeatureSpec::t2m_only();
        let csv = format!("{}\n1,2016-01-01,,1.0,1.0\n", header_for(&spec));
        assert!(matches!(read_csv(csv.as_bytes(), &spec), Err(DataError::EmptyDataset)));
    }

    #[test]
    fn counts_stations_and_samples() {
        let spec = FeatureSpec::t2m_only();
        let mut csv = header_for(&spec);
        for st in [10, 20] {
            for d in 1..=10 {
                csv.push_str(&format!("\n{st},2016-01-{d:02},1.0,2.0,0.5"));
            }
        }
        let out = read_csv(csv.as_bytes(), &spec).unwrap();
        assert_eq!(out.dataset.stations().len(), 2);
        assert_eq!(out.dataset.len(), 20);
    }

    fn two_year_dataset(first: i32, last: i32) -> ForecastDataset {
        let spec = FeatureSpec::t2m_only();
        let mut samples = Vec::new();
        let stations: Vec<Station> = (1..=2)
            .map(|id| Station { id, latitude: 50.0, longitude: 10.0, altitude: 100.0 })
            .collect();
        let mut d = NaiveDate::from_ymd_opt(first, 1, 1).unwrap();
        let end = NaiveDate::from_ymd_opt(last, 12, 31).unwrap();
        while d <= end {
            for id in 1..=2 {
                samples.push(Sample {
                    station_id: id,
                    valid_time: d,
                    predictors: vec![1.0, 1.0],
                    observation: 0.0,
                    members: vec![],
                });
            }
            d = d.succ_opt().unwrap();
        }
        ForecastDataset::new(spec, stations, samples).unwrap()
    }

    #[test]
    fn split_partitions_when_ranges_cover_archive() {
        let ds = two_year_dataset(2015, 2016);
        let (train, valid) = split_by_period(&ds, DateRange::years(2015, 2015), DateRange::years(2016, 2016)).unwrap();
        assert_eq!(train.len() + valid.len(), ds.len());
        assert_eq!(train.len(), 2 * 365);
        assert_eq!(valid.len(), 2 * 366);
        assert_eq!(train.stations(), ds.stations());
        assert_eq!(valid.stations(), ds.stations());
    }

    #[test]
    fn split_long_training_period() {
        let ds = two_year_dataset(2007, 2016);
        let (train, valid) = split_by_period(&ds, DateRange::years(2007, 2015), DateRange::years(2016, 2016)).unwrap();
        let train_days = train.len() / 2;
        let valid_days = valid.len() / 2;
        assert_eq!(train_days, 9 * 365 + 2);
        assert_eq!(valid_days, 366);
        let ratio = train_days as f64 / valid_days as f64;
        assert!((ratio - 9.0).abs() < 0.09);
    }

    #[test]
    fn split_rejects_overlap() {
        let ds = two_year_dataset(2015, 2016);
        let r = split_by_period(&ds, DateRange::years(2015, 2016), DateRange::years(2016, 2016));
        assert!(matches!(r, Err(DataError::OverlappingRanges)));
    }

    #[test]
    fn split_discards_outside_samples() {
        let ds = two_year_dataset(2015, 2016);
        let train = DateRange::new(
            NaiveDate::from_ymd_opt(2015, 3, 1).unwrap(),
            NaiveDate::from_ymd_opt(2015, 3, 31).unwrap(),
        );
        let valid = DateRange::new(
            NaiveDate::from_ymd_opt(2016, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2016, 1, 10).unwrap(),
        );
        let (a, b) = split_by_period(&ds, train, valid).unwrap();
        assert_eq!(a.len(), 62);
        assert_eq!(b.len(), 20);
    }

    #[test]
    fn standardization_hand_example() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let stats = StandardizationStats::fit(&refs, &[]).unwrap();
        assert_eq!(stats.mean, vec![2.0, 5.0]);
        assert_eq!(stats.sd[1], 1.0);
        let z: Vec<f64> = rows.iter().map(|r| stats.apply_row(r)[0]).collect();
        let expected = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in z.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        for r in &rows {
            assert_eq!(stats.apply_row(r)[1], 0.0);
            let back = stats.invert_row(&stats.apply_row(r));
            for (a, b) in back.iter().zip(r) {
                assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn exempt_features_pass_through() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 10.0], vec![3.0, 20.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let stats = StandardizationStats::fit(&refs, &[1]).unwrap();
        assert_eq!(stats.apply_row(&rows[1]), vec![1.0, 20.0]);
    }

    #[test]
    fn standardization_of_empty_dataset_fails() {
        let ds = ForecastDataset::new(FeatureSpec::t2m_only(), vec![], vec![]).unwrap();
        assert!(matches!(fit_standardization(&ds), Err(DataError::EmptyDataset)));
    }
}
