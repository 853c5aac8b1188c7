//! At-home health check of collected vital signs against per-user ranges.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pkg::Timestamp;

pub const HEALTH_HEADER: &str = "# mobikg-health v1";

#[derive(Debug, Error)]
pub enum HealthError {
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error("no reading for parameter {0}")]
    MissingReading(Parameter),
    #[error("reading for {0}, which the profile does not cover")]
    UnknownParameter(Parameter),
    #[error("non-finite reading for {0}")]
    NonFinite(Parameter),
    #[error("no profile for user {user:?} in context {bucket:?}")]
    NoProfile { user: String, bucket: String },
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    /// Degrees Fahrenheit.
    BodyTemperature,
    /// mmHg.
    Systolic,
    /// mmHg.
    Diastolic,
    /// Beats per minute.
    Pulse,
    /// Percent oxygen saturation.
    Spo2,
}

impl Parameter {
    pub const ALL: [Parameter; 5] =
        [Parameter::BodyTemperature, Parameter::Systolic, Parameter::Diastolic, Parameter::Pulse, Parameter::Spo2];

    pub fn as_str(self) -> &'static str {
        match self {
            Parameter::BodyTemperature => "body_temperature",
            Parameter::Systolic => "systolic",
            Parameter::Diastolic => "diastolic",
            Parameter::Pulse => "pulse",
            Parameter::Spo2 => "spo2",
        }
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Parameter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Parameter::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| format!("unknown parameter {s:?}"))
    }
}

/// Inclusive normal range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub low: f64,
    pub up: f64,
}

impl Range {
    pub fn contains(&self, v: f64) -> bool {
        self.up >= v && v >= self.low
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealthProfile {
    pub ranges: BTreeMap<Parameter, Range>,
}

impl HealthProfile {
    pub fn new(ranges: impl IntoIterator<Item = (Parameter, Range)>) -> Result<Self, HealthError> {
        let p = Self { ranges: ranges.into_iter().collect() };
        p.validate()?;
        Ok(p)
    }

    /// Typical adult ranges.
    pub fn adult_default() -> Self {
        let r = |low, up| Range { low, up };
        Self::new([
            (Parameter::BodyTemperature, r(97.0, 99.0)),
            (Parameter::Systolic, r(90.0, 120.0)),
            (Parameter::Diastolic, r(60.0, 80.0)),
            (Parameter::Pulse, r(60.0, 100.0)),
            (Parameter::Spo2, r(94.0, 100.0)),
        ])
        .expect("default ranges are valid")
    }

    pub fn validate(&self) -> Result<(), HealthError> {
        if self.ranges.is_empty() {
            return Err(HealthError::Profile("no parameters".into()));
        }
        for (p, r) in &self.ranges {
            if !(r.low.is_finite() && r.up.is_finite()) || r.low > r.up {
                return Err(HealthError::Profile(format!("{p}: bad range [{}, {}]", r.low, r.up)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReadingContext {
    pub location: Option<String>,
    pub env_temperature_c: Option<f64>,
    pub humidity_pct: Option<f64>,
}

/// Profile bucket for a context: `hot` at 30 C and above, `cold` at 10 C and
/// below, otherwise (or without a temperature) `mild`.
pub fn context_bucket(ctx: &ReadingContext) -> &'static str {
    match ctx.env_temperature_c {
        Some(t) if t >= 30.0 => "hot",
        Some(t) if t <= 10.0 => "cold",
        _ => "mild",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub user: String,
    pub parameter: Parameter,
    pub value: f64,
    pub timestamp: Timestamp,
    #[serde(default)]
    pub context: ReadingContext,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Normal,
    Abnormal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub status: Status,
    /// Out-of-range parameters, each listed once, in [`Parameter::ALL`] order.
    pub violations: Vec<Parameter>,
}

pub fn check_status(readings: &[Reading], profile: &HealthProfile) -> Result<Assessment, HealthError> {
    profile.validate()?;
    let mut seen = BTreeSet::new();
    let mut bad = BTreeSet::new();
    for r in readings {
        let range = profile.ranges.get(&r.parameter).ok_or(HealthError::UnknownParameter(r.parameter))?;
        if !r.value.is_finite() {
            return Err(HealthError::NonFinite(r.parameter));
        }
        seen.insert(r.parameter);
        if !range.contains(r.value) {
            bad.insert(r.parameter);
        }
    }
    if let Some(p) = profile.ranges.keys().find(|p| !seen.contains(p)) {
        return Err(HealthError::MissingReading(*p));
    }
    let violations: Vec<Parameter> = bad.into_iter().collect();
    let status = if violations.is_empty() { Status::Normal } else { Status::Abnormal };
    Ok(Assessment { status, violations })
}

/// Forwardable alert for one out-of-range reading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub user: String,
    pub parameter: Parameter,
    pub value: f64,
    pub range: [f64; 2],
    pub timestamp: Timestamp,
}

pub fn alerts(readings: &[Reading], profile: &HealthProfile) -> Vec<Alert> {
    readings
        .iter()
        .filter_map(|r| {
            let range = profile.ranges.get(&r.parameter)?;
            (!range.contains(r.value)).then(|| Alert {
                user: r.user.clone(),
                parameter: r.parameter,
                value: r.value,
                range: [range.low, range.up],
                timestamp: r.timestamp,
            })
        })
        .collect()
}

/// Profiles keyed by user and context bucket; bucket `default` is the
/// fallback when no bucket-specific profile exists.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProfileBook {
    pub profiles: BTreeMap<(String, String), HealthProfile>,
}

impl ProfileBook {
    pub fn select(&self, user: &str, ctx: &ReadingContext) -> Result<&HealthProfile, HealthError> {
        let bucket = context_bucket(ctx);
        self.profiles
            .get(&(user.to_string(), bucket.to_string()))
            .or_else(|| self.profiles.get(&(user.to_string(), "default".to_string())))
            .ok_or_else(|| HealthError::NoProfile { user: user.into(), bucket: bucket.into() })
    }

    /// CSV `user,bucket,parameter,low,up` after the header comment line.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, HealthError> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let mut grouped: BTreeMap<(String, String), Vec<(Parameter, Range)>> = BTreeMap::new();
        #[derive(Deserialize)]
        struct Row {
            user: String,
            bucket: String,
            parameter: String,
            low: f64,
            up: f64,
        }
        let headers = rd.headers()?.clone();
        for rec in rd.records() {
            let rec = rec.map_err(|e| parse_err(&e))?;
            let line = rec.position().map_or(0, |p| p.line());
            let row: Row = rec.deserialize(Some(&headers)).map_err(|e| HealthError::Parse { line, msg: e.to_string() })?;
            let p = row.parameter.parse().map_err(|msg| HealthError::Parse { line, msg })?;
            let ranges = grouped.entry((row.user, row.bucket)).or_default();
            if ranges.iter().any(|(q, _)| *q == p) {
                return Err(HealthError::Parse { line, msg: format!("duplicate range for {p}") });
            }
            ranges.push((p, Range { low: row.low, up: row.up }));
        }
        let mut book = Self::default();
        for (key, ranges) in grouped {
            book.profiles.insert(key, HealthProfile::new(ranges)?);
        }
        Ok(book)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), HealthError> {
        writeln!(w, "{HEALTH_HEADER}").map_err(csv::Error::from)?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["user", "bucket", "parameter", "low", "up"])?;
        for ((user, bucket), p) in &self.profiles {
            for (param, r) in &p.ranges {
                wr.write_record([user.as_str(), bucket, param.as_str(), &r.low.to_string(), &r.up.to_string()])?;
            }
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn parse_err(e: &csv::Error) -> HealthError {
    let line = e.position().map_or(0, |p| p.line());
    HealthError::Parse { line, msg: e.to_string() }
}

/// CSV `user,parameter,value,timestamp,location,env_temperature_c,humidity_pct`
/// after the header comment line; the last three columns may be empty.
pub fn read_readings_csv<R: Read>(r: R) -> Result<Vec<Reading>, HealthError> {
    #[derive(Deserialize)]
    struct Row {
        user: String,
        parameter: String,
        value: f64,
        timestamp: Timestamp,
        location: Option<String>,
        env_temperature_c: Option<f64>,
        humidity_pct: Option<f64>,
    }
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let mut out = Vec::new();
    let headers = rd.headers()?.clone();
    for rec in rd.records() {
        let rec = rec.map_err(|e| parse_err(&e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: Row = rec.deserialize(Some(&headers)).map_err(|e| HealthError::Parse { line, msg: e.to_string() })?;
        let parameter = row.parameter.parse().map_err(|msg| HealthError::Parse { line, msg })?;
        out.push(Reading {
            user: row.user,
            parameter,
            value: row.value,
            timestamp: row.timestamp,
            context: ReadingContext {
                location: row.location.filter(|s| !s.is_empty()),
                env_temperature_c: row.env_temperature_c,
                humidity_pct: row.humidity_pct,
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reading(p: Parameter, v: f64) -> Reading {
        Reading { user: "u".into(), parameter: p, value: v, timestamp: 0, context: ReadingContext::default() }
    }

    fn in_range_readings() -> Vec<Reading> {
        vec![
            reading(Parameter::BodyTemperature, 98.6),
            reading(Parameter::Systolic, 110.0),
            reading(Parameter::Diastolic, 70.0),
            reading(Parameter::Pulse, 72.0),
            reading(Parameter::Spo2, 98.0),
        ]
    }

    #[test]
    fn interior_point_is_normal() {
        let a = check_status(&in_range_readings(), &HealthProfile::adult_default()).unwrap();
        assert_eq!(a, Assessment { status: Status::Normal, violations: vec![] });
    }

    #[test]
    fn bounds_are_inclusive() {
        let mut rs = in_range_readings();
        rs[0].value = 99.0;
        rs[4].value = 94.0;
        assert_eq!(check_status(&rs, &HealthProfile::adult_default()).unwrap().status, Status::Normal);
    }

    #[test]
    fn low_spo2_is_abnormal() {
        let mut rs = in_range_readings();
        rs[4].value = 91.0;
        let a = check_status(&rs, &HealthProfile::adult_default()).unwrap();
        assert_eq!(a, Assessment { status: Status::Abnormal, violations: vec![Parameter::Spo2] });
        let al = alerts(&rs, &HealthProfile::adult_default());
        assert_eq!(al.len(), 1);
        let json = serde_json::to_value(&al[0]).unwrap();
        assert_eq!(json["parameter"], "spo2");
        assert_eq!(json["range"], serde_json::json!([94.0, 100.0]));
    }

    #[test]
    fn missing_or_unknown_parameters_are_errors() {
        let rs = &in_range_readings()[..4];
        assert!(matches!(check_status(rs, &HealthProfile::adult_default()), Err(HealthError::MissingReading(Parameter::Spo2))));
        let p = HealthProfile::new([(Parameter::Pulse, Range { low: 60.0, up: 100.0 })]).unwrap();
        assert!(matches!(check_status(&in_range_readings(), &p), Err(HealthError::UnknownParameter(_))));
        assert!(HealthProfile::new([(Parameter::Pulse, Range { low: 2.0, up: 1.0 })]).is_err());
        assert!(HealthProfile::new([]).is_err());
    }

    #[test]
    fn profile_selection_by_context() {
        let mut book = ProfileBook::default();
        book.profiles.insert(("u".into(), "default".into()), HealthProfile::adult_default());
        let mut hot = HealthProfile::adult_default();
        hot.ranges.insert(Parameter::BodyTemperature, Range { low: 97.0, up: 99.5 });
        book.profiles.insert(("u".into(), "hot".into()), hot.clone());
        let ctx = |t| ReadingContext { env_temperature_c: Some(t), ..Default::default() };
        assert_eq!(book.select("u", &ctx(35.0)).unwrap(), &hot);
        assert_eq!(book.select("u", &ctx(20.0)).unwrap(), &HealthProfile::adult_default());
        assert!(matches!(book.select("v", &ctx(20.0)), Err(HealthError::NoProfile { .. })));

        let mut buf = Vec::new();
        book.write_csv(&mut buf).unwrap();
        assert_eq!(ProfileBook::read_csv(buf.as_slice()).unwrap(), book);
    }

    #[test]
    fn readings_csv_reports_bad_lines() {
        let text = format!(
            "{HEALTH_HEADER}\nuser,parameter,value,timestamp,location,env_temperature_c,humidity_pct\n\
             u,pulse,72,10,home,31.5,\nu,spo2,high,11,,,\n"
        );
        match read_readings_csv(text.as_bytes()) {
            Err(HealthError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let ok = text.replace("high", "97");
        let rs = read_readings_csv(ok.as_bytes()).unwrap();
        assert_eq!(rs[0].context.env_temperature_c, Some(31.5));
        assert_eq!(rs[1].context.location, None);
    }

    fn arb_case() -> impl Strategy<Value = (HealthProfile, Vec<Reading>)> {
        let ranges = prop::collection::vec((0.0..200.0f64, 0.0..50.0f64), 5);
        let vals = prop::collection::vec(prop::collection::vec(-10.0..260.0f64, 1..3), 5);
        (ranges, vals).prop_map(|(ranges, vals)| {
            let prof = HealthProfile::new(
                Parameter::ALL.iter().zip(&ranges).map(|(p, (lo, w))| (*p, Range { low: *lo, up: lo + w })),
            )
            .unwrap();
            let rs = Parameter::ALL
                .iter()
                .zip(vals)
                .flat_map(|(p, vs)| vs.into_iter().map(move |v| reading(*p, v)))
                .collect();
            (prof, rs)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn violations_match_naive_scan((prof, rs) in arb_case()) {
            let a = check_status(&rs, &prof).unwrap();
            let naive: Vec<Parameter> = Parameter::ALL
                .into_iter()
                .filter(|p| rs.iter().any(|r| r.parameter == *p && (r.value < prof.ranges[p].low || r.value > prof.ranges[p].up)))
                .collect();
            prop_assert_eq!(&a.violations, &naive);
            prop_assert_eq!(a.status == Status::Normal, naive.is_empty());
        }
    }
}
