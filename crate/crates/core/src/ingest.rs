//! Reading raw AVL rows into per-vehicle traces.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};

/// One raw measurement as it appears in the input stream.
#[derive(Debug, Clone, PartialEq)]
pub struct AvlRecord {
    pub vehicle_id: String,
    pub x: f64,
    pub y: f64,
    pub t: i64,
}

/// A measurement once it has been filed under its vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fix {
    pub x: f64,
    pub y: f64,
    pub t: i64,
}

impl Fix {
    pub fn new(x: f64, y: f64, t: i64) -> Self {
        Fix { x, y, t }
    }

    pub fn dist(&self, other: &Fix) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Per-vehicle traces, each strictly increasing in time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceSet {
    pub vehicles: BTreeMap<String, Vec<Fix>>,
}

impl TraceSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a trace set from loose records, sorting and deduplicating.
    /// For a repeated (vehicle, t) the record that comes later wins.
    pub fn from_records<I: IntoIterator<Item = AvlRecord>>(records: I) -> (Self, usize) {
        let mut vehicles: BTreeMap<String, Vec<(usize, Fix)>> = BTreeMap::new();
        for (seq, r) in records.into_iter().enumerate() {
            vehicles
                .entry(r.vehicle_id)
                .or_default()
                .push((seq, Fix::new(r.x, r.y, r.t)));
        }
        let mut dropped = 0;
        let vehicles = vehicles
            .into_iter()
            .map(|(id, mut v)| {
                v.sort_by_key(|(seq, f)| (f.t, *seq));
                let mut out: Vec<Fix> = Vec::with_capacity(v.len());
                for (_, f) in v {
                    match out.last_mut() {
                        Some(last) if last.t == f.t => {
                            *last = f;
                            dropped += 1;
                        }
                        _ => out.push(f),
                    }
                }
                (id, out)
            })
            .collect();
        (TraceSet { vehicles }, dropped)
    }

    pub fn len(&self) -> usize {
        self.vehicles.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fixes(&self) -> impl Iterator<Item = &Fix> {
        self.vehicles.values().flatten()
    }

    pub fn records(&self) -> impl Iterator<Item = AvlRecord> + '_ {
        self.vehicles.iter().flat_map(|(id, v)| {
            v.iter().map(move |f| AvlRecord {
                vehicle_id: id.clone(),
                x: f.x,
                y: f.y,
                t: f.t,
            })
        })
    }

    pub fn map_coords(&self, f: impl Fn(f64, f64) -> (f64, f64)) -> TraceSet {
        let vehicles = self
            .vehicles
            .iter()
            .map(|(id, v)| {
                let v = v
                    .iter()
                    .map(|p| {
                        let (x, y) = f(p.x, p.y);
                        Fix::new(x, y, p.t)
                    })
                    .collect();
                (id.clone(), v)
            })
            .collect();
        TraceSet { vehicles }
    }
}

/// Which column, by position or by header name.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for Column {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => Column::Index(i),
            Err(_) => Column::Name(s.to_string()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeFormat {
    #[default]
    UnixSeconds,
    Iso8601,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub delimiter: u8,
    pub has_header: bool,
    pub vehicle: Column,
    pub x: Column,
    pub y: Column,
    pub t: Column,
    /// Optional `(column, wanted value)`; rows with any other value are skipped.
    pub route: Option<(Column, String)>,
    pub time_format: TimeFormat,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            delimiter: b',',
            has_header: false,
            vehicle: Column::Index(0),
            x: Column::Index(1),
            y: Column::Index(2),
            t: Column::Index(3),
            route: None,
            time_format: TimeFormat::UnixSeconds,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub rows: usize,
    pub accepted: usize,
    pub malformed: usize,
    pub duplicates: usize,
    pub other_route: usize,
}

struct Resolved {
    vehicle: usize,
    x: usize,
    y: usize,
    t: usize,
    route: Option<(usize, String)>,
}

fn resolve(col: &Column, header: Option<&csv::StringRecord>) -> Result<usize> {
    match col {
        Column::Index(i) => Ok(*i),
        Column::Name(name) => {
            let header = header.ok_or_else(|| {
                Error::Config(format!("column `{name}` named but the input has no header"))
            })?;
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Config(format!("no column named `{name}`")))
        }
    }
}

pub fn parse_time(s: &str, fmt: TimeFormat) -> Option<i64> {
    let s = s.trim();
    match fmt {
        TimeFormat::UnixSeconds => s.parse::<i64>().ok().or_else(|| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(|v| v as i64)
        }),
        TimeFormat::Iso8601 => chrono::DateTime::parse_from_rfc3339(s)
            .map(|d| d.timestamp())
            .ok()
            .or_else(|| {
                chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
                    .or_else(|_| chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
                    .ok()
                    .map(|d| d.and_utc().timestamp())
            }),
    }
    .filter(|&t| t >= 0)
}

/// Parses delimited text. Malformed rows are counted, never coerced.
pub fn parse_records<R: Read>(input: R, schema: &Schema) -> Result<(TraceSet, ParseReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(schema.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let header = if schema.has_header {
        Some(
            reader
                .headers()
                .map_err(|e| Error::Config(e.to_string()))?
                .clone(),
        )
    } else {
        None
    };
    let cols = Resolved {
        vehicle: resolve(&schema.vehicle, header.as_ref())?,
        x: resolve(&schema.x, header.as_ref())?,
        y: resolve(&schema.y, header.as_ref())?,
        t: resolve(&schema.t, header.as_ref())?,
        route: match &schema.route {
            Some((c, want)) => Some((resolve(c, header.as_ref())?, want.clone())),
            None => None,
        },
    };

    let mut report = ParseReport::default();
    let mut records = Vec::new();
    for row in reader.records() {
        report.rows += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(Error::Io(e.into_kind().into_io())),
            Err(_) => {
                report.malformed += 1;
                continue;
            }
        };
        if let Some((rc, want)) = &cols.route {
            if row.get(*rc) != Some(want.as_str()) {
                report.other_route += 1;
                continue;
            }
        }
        let parsed = (|| {
            let id = row.get(cols.vehicle)?.to_string();
            let x: f64 = row.get(cols.x)?.parse().ok()?;
            let y: f64 = row.get(cols.y)?.parse().ok()?;
            let t = parse_time(row.get(cols.t)?, schema.time_format)?;
            (!id.is_empty() && x.is_finite() && y.is_finite()).then_some(AvlRecord {
                vehicle_id: id,
                x,
                y,
                t,
            })
        })();
        match parsed {
            Some(r) => records.push(r),
            None => report.malformed += 1,
        }
    }
    let (ts, dup) = TraceSet::from_records(records);
    report.duplicates = dup;
    report.accepted = ts.len();
    Ok((ts, report))
}

trait IntoIo {
    fn into_io(self) -> std::io::Error;
}

impl IntoIo for csv::ErrorKind {
    fn into_io(self) -> std::io::Error {
        match self {
            csv::ErrorKind::Io(e) => e,
            other => std::io::Error::other(format!("{other:?}")),
        }
    }
}

/// Writes records in the default schema; `parse_records` reads this back exactly.
pub fn write_records<W: Write>(ts: &TraceSet, out: &mut W) -> std::io::Result<()> {
    for (id, v) in &ts.vehicles {
        for f in v {
            writeln!(out, "{id},{},{},{}", f.x, f.y, f.t)?;
        }
    }
    Ok(())
}

/// Days of the week as a bit set, Monday = bit 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Weekdays(pub u8);

impl Weekdays {
    pub const ALL: Weekdays = Weekdays(0x7f);
    const NAMES: [&'static str; 7] = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"];

    pub fn contains(&self, day: u32) -> bool {
        self.0 & (1 << day) != 0
    }
}

impl std::str::FromStr for Weekdays {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut bits = 0u8;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let lower = part.to_ascii_lowercase();
            if lower == "all" {
                bits = 0x7f;
                continue;
            }
            let day = Self::NAMES
                .iter()
                .position(|n| lower.starts_with(n))
                .ok_or_else(|| Error::Config(format!("unknown weekday `{part}`")))?;
            bits |= 1 << day;
        }
        Ok(Weekdays(bits))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow {
    pub daily_start: u32,
    pub daily_end: u32,
    pub weekdays: Weekdays,
}

impl TimeWindow {
    pub fn new(daily_start: u32, daily_end: u32, weekdays: Weekdays) -> Result<Self> {
        if daily_start >= daily_end || daily_end > 86_400 {
            return Err(Error::invalid(format!(
                "time window [{daily_start}, {daily_end}) is not within one day"
            )));
        }
        Ok(TimeWindow {
            daily_start,
            daily_end,
            weekdays,
        })
    }

    pub fn all_day() -> Self {
        TimeWindow {
            daily_start: 0,
            daily_end: 86_400,
            weekdays: Weekdays::ALL,
        }
    }

    pub fn contains(&self, t: i64, tz_offset: i64) -> bool {
        let local = t + tz_offset;
        let sod = local.rem_euclid(86_400) as u32;
        // 1970-01-01 was a Thursday.
        let weekday = (local.div_euclid(86_400) + 3).rem_euclid(7) as u32;
        sod >= self.daily_start && sod < self.daily_end && self.weekdays.contains(weekday)
    }
}

pub fn filter_window(ts: &TraceSet, w: &TimeWindow, tz_offset: i64) -> TraceSet {
    let vehicles = ts
        .vehicles
        .iter()
        .filter_map(|(id, v)| {
            let kept: Vec<Fix> = v
                .iter()
                .copied()
                .filter(|f| w.contains(f.t, tz_offset))
                .collect();
            (!kept.is_empty()).then(|| (id.clone(), kept))
        })
        .collect();
    TraceSet { vehicles }
}

/// `world = normalized * scale + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub scale: f64,
    pub offset_x: f64,
    pub offset_y: f64,
}

impl AffineTransform {
    pub fn identity() -> Self {
        AffineTransform {
            scale: 1.0,
            offset_x: 0.0,
            offset_y: 0.0,
        }
    }

    pub fn to_world(&self, x: f64, y: f64) -> (f64, f64) {
        (
            x * self.scale + self.offset_x,
            y * self.scale + self.offset_y,
        )
    }

    pub fn to_normalized(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.offset_x) / self.scale,
            (y - self.offset_y) / self.scale,
        )
    }
}

/// Maps coordinates into the unit square, keeping the aspect ratio: the
/// lower-left corner of the bounding box goes to the origin and the longer
/// side to length 1.
pub fn normalize_coordinates(ts: &TraceSet) -> Result<(TraceSet, AffineTransform)> {
    let mut it = ts.fixes();
    let first = it.next().ok_or_else(|| Error::Empty("trace set".into()))?;
    let (mut x0, mut x1, mut y0, mut y1) = (first.x, first.x, first.y, first.y);
    for f in it {
        x0 = x0.min(f.x);
        x1 = x1.max(f.x);
        y0 = y0.min(f.y);
        y1 = y1.max(f.y);
    }
    let extent = (x1 - x0).max(y1 - y0);
    if !(extent > 0.0) {
        return Err(Error::DegenerateExtent);
    }
    let tf = AffineTransform {
        scale: extent,
        offset_x: x0,
        offset_y: y0,
    };
    Ok((ts.map_coords(|x, y| tf.to_normalized(x, y)), tf))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> (TraceSet, ParseReport) {
        parse_records(text.as_bytes(), &Schema::default()).unwrap()
    }

    #[test]
    fn default_schema_row() {
        let (ts, rep) = parse("23,321456.7,673212.1,1390908674\n");
        assert_eq!(rep.accepted, 1);
        let r: Vec<_> = ts.records().collect();
        assert_eq!(
            r[0],
            AvlRecord {
                vehicle_id: "23".into(),
                x: 321456.7,
                y: 673212.1,
                t: 1390908674
            }
        );
    }

    #[test]
    fn interleaved_vehicles_sorted() {
        let (ts, _) = parse("a,0,0,30\nb,1,1,5\na,1,0,10\nb,2,2,1\na,2,0,20\n");
        for v in ts.vehicles.values() {
            assert!(v.windows(2).all(|w| w[0].t < w[1].t));
        }
        assert_eq!(
            ts.vehicles["a"].iter().map(|f| f.t).collect::<Vec<_>>(),
            [10, 20, 30]
        );
    }

    #[test]
    fn duplicate_timestamp_keeps_later_row() {
        let (ts, rep) = parse("a,1,0,10\na,2,0,10\n");
        assert_eq!(rep.duplicates, 1);
        assert_eq!(ts.vehicles["a"], vec![Fix::new(2.0, 0.0, 10)]);
    }

    #[test]
    fn malformed_rows_counted() {
        let (ts, rep) = parse("a,1,0,10\na,abc,0,11\na,1,0\na,1,NaN,12\n");
        assert_eq!(ts.len(), 1);
        assert_eq!(rep.malformed, 3);
    }

    #[test]
    fn named_columns_and_route_filter() {
        let schema = Schema {
            has_header: true,
            vehicle: Column::Name("bus".into()),
            x: Column::Name("x".into()),
            y: Column::Name("y".into()),
            t: Column::Name("time".into()),
            route: Some((Column::Name("route".into()), "550".into())),
            ..Schema::default()
        };
        let text = "time,route,bus,x,y\n5,550,7,1,2\n6,545,7,1,2\n";
        let (ts, rep) = parse_records(text.as_bytes(), &schema).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(rep.other_route, 1);

        let bad = Schema {
            x: Column::Name("easting".into()),
            ..schema
        };
        assert!(matches!(
            parse_records(text.as_bytes(), &bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn iso_time() {
        assert_eq!(
            parse_time("2014-01-28T11:31:14Z", TimeFormat::Iso8601),
            Some(1390908674)
        );
    }

    #[test]
    fn window_boundaries() {
        let w = TimeWindow::new(36_000, 54_000, Weekdays::ALL).unwrap();
        let day = 86_400 * 10;
        assert!(!w.contains(day + 36_000 - 1, 0));
        assert!(w.contains(day + 36_000, 0));
        assert!(!w.contains(day + 54_000, 0));
        // A one-hour offset shifts local time forward.
        assert!(w.contains(day + 36_000 - 3600, 3600));
    }

    #[test]
    fn weekday_filter() {
        // 2014-01-28 was a Tuesday.
        let tue: Weekdays = "Tue,Wed,Thu".parse().unwrap();
        let w = TimeWindow::new(0, 86_400, tue).unwrap();
        assert!(w.contains(1390908674, 0));
        assert!(!w.contains(1390908674 - 86_400, 0));
    }

    #[test]
    fn normalize_fixed_point() {
        let (ts, _) = parse("a,0,0,1\na,1,0.5,2\na,0.25,1,3\n");
        let (n, tf) = normalize_coordinates(&ts).unwrap();
        assert_eq!(n, ts);
        assert_eq!(tf, AffineTransform::identity());
    }

    #[test]
    fn normalize_degenerate() {
        let (ts, _) = parse("a,3,3,1\nb,3,3,2\n");
        assert!(matches!(
            normalize_coordinates(&ts),
            Err(Error::DegenerateExtent)
        ));
    }
}
