//! CSV ingestion and emission.
//!
//! Schemas (headers mandatory, UTF-8, '.' decimal, ISO-8601 dates):
//!
//! * `stations.csv`: `id,name,lon,lat,elev_m`
//! * `obs.csv`: `station_id,date,tmax_c` (empty `tmax_c` = missing)
//! * `thresholds.csv`: `station_id,q_c,n_baseline_days` (empty `q_c` = no
//!   baseline data)
//!
//! Numbers are written in shortest round-trip form and observations sorted
//! by station (in station-file order) then date, so parsing a written file
//! and writing it again reproduces it byte for byte.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use ehe_core::events::Threshold;
use ehe_core::series::{Station, StationSeries};

pub const STATIONS_HEADER: [&str; 5] = ["id", "name", "lon", "lat", "elev_m"];
pub const OBS_HEADER: [&str; 3] = ["station_id", "date", "tmax_c"];
pub const THRESHOLDS_HEADER: [&str; 3] = ["station_id", "q_c", "n_baseline_days"];

/// Plausible range of daily maximum temperature, °C.
pub const TMAX_RANGE: (f64, f64) = (-60.0, 60.0);

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub station_id: String,
    pub date: NaiveDate,
    pub tmax: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub stations: Vec<Station>,
    /// Sorted by station order, then date.
    pub observations: Vec<Observation>,
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::None).from_reader(input)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str], what: &str) -> Result<()> {
    let header = rdr.headers().with_context(|| format!("{what}: cannot read header"))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        bail!("{what}: line 1: header must be `{}`, found `{}`", expected.join(","), got.join(","));
    }
    Ok(())
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn parse_f64(field: &str, name: &str) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| anyhow!("{name} `{field}` is not a number"))?;
    if !v.is_finite() {
        bail!("{name} `{field}` is not finite");
    }
    Ok(v)
}

pub fn parse_stations<R: Read>(input: R) -> Result<Vec<Station>> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &STATIONS_HEADER, "stations")?;
    let mut stations: Vec<Station> = Vec::new();
    for record in rdr.records() {
        let record = record.context("stations: malformed CSV")?;
        let line = line_of(&record);
        let row = || -> Result<Station> {
            if record.len() != 5 {
                bail!("expected 5 fields, found {}", record.len());
            }
            let station = Station::new(
                &record[0],
                &record[1],
                parse_f64(&record[2], "lon")?,
                parse_f64(&record[3], "lat")?,
                parse_f64(&record[4], "elev_m")?,
            )?;
            if stations.iter().any(|s| s.id == station.id) {
                bail!("duplicate station id `{}`", station.id);
            }
            Ok(station)
        };
        stations.push(row().with_context(|| format!("stations: line {line}"))?);
    }
    if stations.is_empty() {
        bail!("stations: no rows");
    }
    Ok(stations)
}

pub fn parse_observations<R: Read>(input: R, stations: &[Station]) -> Result<Vec<Observation>> {
    let order: HashMap<&str, usize> = stations.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    let mut rdr = reader(input);
    check_header(&mut rdr, &OBS_HEADER, "observations")?;
    let mut rows = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for record in rdr.records() {
        let record = record.context("observations: malformed CSV")?;
        let line = line_of(&record);
        let mut row = || -> Result<Observation> {
            if record.len() != 3 {
                bail!("expected 3 fields, found {}", record.len());
            }
            let id = &record[0];
            if !order.contains_key(id) {
                bail!("unknown station `{id}`");
            }
            let date = NaiveDate::parse_from_str(&record[1], "%Y-%m-%d")
                .map_err(|_| anyhow!("invalid date `{}`", &record[1]))?;
            let tmax = match &record[2] {
                "" => None,
                s => {
                    let v = parse_f64(s, "tmax_c")?;
                    if !(TMAX_RANGE.0..=TMAX_RANGE.1).contains(&v) {
                        bail!("tmax_c {v} outside [{}, {}]", TMAX_RANGE.0, TMAX_RANGE.1);
                    }
                    Some(v)
                }
            };
            if !seen.insert((id.to_string(), date)) {
                bail!("duplicate observation for `{id}` on {date}");
            }
            Ok(Observation {
                station_id: id.to_string(),
                date,
                tmax,
            })
        };
        rows.push(row().with_context(|| format!("observations: line {line}"))?);
    }
    rows.sort_by(|a, b| (order[a.station_id.as_str()], a.date).cmp(&(order[b.station_id.as_str()], b.date)));
    Ok(rows)
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

impl Dataset {
    pub fn read(stations: &Path, observations: &Path) -> Result<Self> {
        let st = parse_stations(open(stations)?).with_context(|| stations.display().to_string())?;
        let obs = parse_observations(open(observations)?, &st).with_context(|| observations.display().to_string())?;
        Ok(Dataset {
            stations: st,
            observations: obs,
        })
    }

    /// One gap-filled series per station, in station order. Stations
    /// without observations are left out.
    pub fn series(&self) -> Result<Vec<StationSeries>> {
        self.stations
            .iter()
            .filter_map(|st| {
                let obs: Vec<(NaiveDate, Option<f64>)> = self
                    .observations
                    .iter()
                    .filter(|o| o.station_id == st.id)
                    .map(|o| (o.date, o.tmax))
                    .collect();
                (!obs.is_empty()).then(|| StationSeries::from_observations(st.clone(), &obs).map_err(Into::into))
            })
            .collect()
    }

    /// Every day of every series becomes a row (missing days as empty).
    pub fn from_series(series: &[StationSeries]) -> Self {
        Dataset {
            stations: series.iter().map(|s| s.station.clone()).collect(),
            observations: series
                .iter()
                .flat_map(|s| {
                    (0..s.len()).map(move |i| Observation {
                        station_id: s.station.id.clone(),
                        date: s.date(i),
                        tmax: s.values[i],
                    })
                })
                .collect(),
        }
    }

    pub fn write_stations<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(STATIONS_HEADER)?;
        for s in &self.stations {
            w.write_record([
                s.id.clone(),
                s.name.clone(),
                s.longitude.to_string(),
                s.latitude.to_string(),
                s.elevation.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_observations<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(OBS_HEADER)?;
        for o in &self.observations {
            w.write_record([
                o.station_id.clone(),
                o.date.format("%Y-%m-%d").to_string(),
                o.tmax.map_or(String::new(), |v| v.to_string()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A threshold row; `q` is `None` for a station without baseline data.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRow {
    pub station_id: String,
    pub q: Option<f64>,
    pub n_baseline_days: usize,
}

impl ThresholdRow {
    pub fn threshold(&self) -> Option<Threshold> {
        self.q.map(|q| Threshold {
            n_baseline_days: self.n_baseline_days,
            ..Threshold::fixed(self.station_id.clone(), q)
        })
    }
}

pub fn parse_thresholds<R: Read>(input: R) -> Result<Vec<ThresholdRow>> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &THRESHOLDS_HEADER, "thresholds")?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.context("thresholds: malformed CSV")?;
        let line = line_of(&record);
        let row = || -> Result<ThresholdRow> {
            if record.len() != 3 {
                bail!("expected 3 fields, found {}", record.len());
            }
            let q = match &record[1] {
                "" => None,
                s => Some(parse_f64(s, "q_c")?),
            };
            let n = record[2]
                .parse()
                .map_err(|_| anyhow!("n_baseline_days `{}` is not a count", &record[2]))?;
            Ok(ThresholdRow {
                station_id: record[0].to_string(),
                q,
                n_baseline_days: n,
            })
        };
        rows.push(row().with_context(|| format!("thresholds: line {line}"))?);
    }
    Ok(rows)
}

pub fn read_thresholds(path: &Path) -> Result<Vec<ThresholdRow>> {
    parse_thresholds(open(path)?).with_context(|| path.display().to_string())
}

pub fn write_thresholds<W: Write>(rows: &[ThresholdRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(THRESHOLDS_HEADER)?;
    for r in rows {
        w.write_record([
            r.station_id.clone(),
            r.q.map_or(String::new(), |q| q.to_string()),
            r.n_baseline_days.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes rows of string cells under `header` to `path`.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Empty for NaN, which marks flagged-empty summary cells.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const STATIONS: &str = "id,name,lon,lat,elev_m\nA,Alpha,-3.5,40.25,650\nB,\"Beta, North\",-2,41,12.5\n";

    fn stations() -> Vec<Station> {
        parse_stations(STATIONS.as_bytes()).unwrap()
    }

    fn to_string(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let obs = "station_id,date,tmax_c\nB,2001-07-02,31.25\nA,2001-07-02,\nA,2001-07-01,29.50\nB,2001-07-01,-0.5\n";
        let ds = Dataset {
            stations: stations(),
            observations: parse_observations(obs.as_bytes(), &stations()).unwrap(),
        };
        let st_text = to_string(|b| ds.write_stations(b));
        let obs_text = to_string(|b| ds.write_observations(b));
        assert_eq!(obs_text, "station_id,date,tmax_c\nA,2001-07-01,29.5\nA,2001-07-02,\nB,2001-07-01,-0.5\nB,2001-07-02,31.25\n");
        let again = Dataset {
            stations: parse_stations(st_text.as_bytes()).unwrap(),
            observations: parse_observations(obs_text.as_bytes(), &stations()).unwrap(),
        };
        assert_eq!(again, ds);
        assert_eq!(to_string(|b| again.write_stations(b)), st_text);
        assert_eq!(to_string(|b| again.write_observations(b)), obs_text);
    }

    #[test]
    fn errors_name_the_line() {
        let cases = [
            ("station_id,date,tmax_c\nA,2001-07-01,20\nC,2001-07-02,21\n", "line 3"),
            ("station_id,date,tmax_c\nA,2001-02-30,20\n", "line 2"),
            ("station_id,date,tmax_c\nA,2001-07-01,20\nA,2001-07-02,61\n", "line 3"),
            ("station_id,date,tmax_c\nA,2001-07-01,abc\n", "line 2"),
            ("station_id,date,tmax_c\nA,2001-07-01,20\nA,2001-07-01,21\n", "line 3"),
        ];
        for (text, line) in cases {
            let err = format!("{:#}", parse_observations(text.as_bytes(), &stations()).unwrap_err());
            assert!(err.contains(line), "{err}");
        }
        let err = format!("{:#}", parse_observations("station,date,tmax\n".as_bytes(), &stations()).unwrap_err());
        assert!(err.contains("line 1"), "{err}");
        let err = format!("{:#}", parse_stations("id,name,lon,lat,elev_m\nA,a,0,95,0\n".as_bytes()).unwrap_err());
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn series_fill_gaps() {
        let obs = "station_id,date,tmax_c\nA,2001-07-01,20\nA,2001-07-04,22\n";
        let ds = Dataset {
            stations: stations(),
            observations: parse_observations(obs.as_bytes(), &stations()).unwrap(),
        };
        let series = ds.series().unwrap();
        assert_eq!(series.len(), 1);
        assert_eq!(series[0].values, vec![Some(20.0), None, None, Some(22.0)]);
    }

    #[test]
    fn thresholds_round_trip() {
        let text = "station_id,q_c,n_baseline_days\nA,33.4,920\nB,,0\n";
        let rows = parse_thresholds(text.as_bytes()).unwrap();
        assert_eq!(rows[1].q, None);
        assert!(rows[1].threshold().is_none());
        assert_eq!(rows[0].threshold().unwrap().q, 33.4);
        assert_eq!(to_string(|b| write_thresholds(&rows, b)), text);
    }
}
