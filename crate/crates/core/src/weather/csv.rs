use std::io::{Read, Write};

use chrono::{DateTime, FixedOffset, NaiveDateTime, SecondsFormat, Utc};
use log::info;
use serde::{Deserialize, Serialize};

use super::{solar_position, Site, WeatherRecord, DEFAULT_ALBEDO, DEFAULT_AMBIENT_TEMP, DEFAULT_WIND_SPEED};
use crate::error::{Error, Result};

/// Maps record fields to CSV header names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnSchema {
    pub timestamp: String,
    pub dni: String,
    pub dhi: String,
    pub ghi: String,
    pub ambient_temp: String,
    pub wind_speed: String,
    pub albedo: String,
    pub sun_zenith: String,
    pub sun_azimuth: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        ColumnSchema {
            timestamp: "timestamp".into(),
            dni: "dni".into(),
            dhi: "dhi".into(),
            ghi: "ghi".into(),
            ambient_temp: "ambient_temp".into(),
            wind_speed: "wind_speed".into(),
            albedo: "albedo".into(),
            sun_zenith: "sun_zenith".into(),
            sun_azimuth: "sun_azimuth".into(),
        }
    }
}

/// Parses an ISO-8601 timestamp, accepting only UTC (`Z` or a zero offset).
/// Seconds are optional.
pub(crate) fn parse_utc(text: &str) -> std::result::Result<DateTime<Utc>, String> {
    let text = text.trim();
    let parsed: DateTime<FixedOffset> = DateTime::parse_from_rfc3339(text)
        .or_else(|_| DateTime::parse_from_str(text, "%Y-%m-%dT%H:%M%#z"))
        .or_else(|_| {
            let bare = text
                .strip_suffix('Z')
                .ok_or_else(|| "timestamp has no UTC designator".to_string())?;
            NaiveDateTime::parse_from_str(bare, "%Y-%m-%dT%H:%M")
                .map(|n| n.and_utc().fixed_offset())
                .map_err(|e| e.to_string())
        })
        .map_err(|e| format!("not an ISO-8601 UTC timestamp ({e})"))?;
    if parsed.offset().local_minus_utc() != 0 {
        return Err("timestamp is not UTC".into());
    }
    Ok(parsed.with_timezone(&Utc))
}

pub(crate) fn format_utc(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

struct Columns {
    timestamp: usize,
    dni: usize,
    dhi: usize,
    ghi: usize,
    ambient_temp: Option<usize>,
    wind_speed: Option<usize>,
    albedo: Option<usize>,
    sun: Option<(usize, usize)>,
}

/// Reads hourly weather records from CSV, one record per row in file order.
///
/// Required columns are `timestamp`, `dni`, `dhi` and `ghi` (names from
/// `schema`). Absent optional columns fall back to albedo 0.2, 20 °C and
/// 1 m/s. Without sun-position columns, `site` must be given and the
/// position is computed per row.
pub fn parse_weather_csv<R: Read>(
    source: R,
    schema: &ColumnSchema,
    site: Option<Site>,
) -> Result<Vec<WeatherRecord>> {
    let mut reader = ::csv::ReaderBuilder::new()
        .trim(::csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.to_string()));

    let cols = Columns {
        timestamp: require(&schema.timestamp)?,
        dni: require(&schema.dni)?,
        dhi: require(&schema.dhi)?,
        ghi: require(&schema.ghi)?,
        ambient_temp: find(&schema.ambient_temp),
        wind_speed: find(&schema.wind_speed),
        albedo: find(&schema.albedo),
        sun: find(&schema.sun_zenith).zip(find(&schema.sun_azimuth)),
    };
    if cols.albedo.is_none() {
        info!("weather: no `{}` column, using albedo {DEFAULT_ALBEDO}", schema.albedo);
    }
    if cols.ambient_temp.is_none() {
        info!("weather: no `{}` column, using {DEFAULT_AMBIENT_TEMP} °C", schema.ambient_temp);
    }
    if cols.wind_speed.is_none() {
        info!("weather: no `{}` column, using {DEFAULT_WIND_SPEED} m/s", schema.wind_speed);
    }
    let site = match (cols.sun, site) {
        (Some(_), _) => None,
        (None, Some(site)) => {
            info!("weather: sun position columns absent, computing from site coordinates");
            Some(site)
        }
        (None, None) => {
            return Err(Error::Config(
                "weather file has no sun position columns and no site coordinates were given".into(),
            ))
        }
    };

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(records.len() + 2);
        let malformed = |column: &str, message: String| Error::MalformedRow {
            row: line,
            column: column.to_string(),
            message,
        };
        let cell = |idx: usize, name: &str| -> Result<f64> {
            let text = row.get(idx).ok_or_else(|| malformed(name, "missing field".into()))?;
            let v: f64 = text
                .parse()
                .map_err(|_| malformed(name, format!("`{text}` is not a number")))?;
            if !v.is_finite() {
                return Err(malformed(name, format!("`{text}` is not finite")));
            }
            Ok(v)
        };
        let irradiance = |idx: usize, name: &str| -> Result<f64> {
            let v = cell(idx, name)?;
            if v < 0.0 {
                return Err(malformed(name, format!("negative irradiance {v}")));
            }
            Ok(v)
        };

        let ts_text = row
            .get(cols.timestamp)
            .ok_or_else(|| malformed(&schema.timestamp, "missing field".into()))?;
        let timestamp = parse_utc(ts_text).map_err(|m| malformed(&schema.timestamp, m))?;
        let dni = irradiance(cols.dni, &schema.dni)?;
        let dhi = irradiance(cols.dhi, &schema.dhi)?;
        let ghi = irradiance(cols.ghi, &schema.ghi)?;
        let ambient_temp = match cols.ambient_temp {
            Some(i) => cell(i, &schema.ambient_temp)?,
            None => DEFAULT_AMBIENT_TEMP,
        };
        let wind_speed = match cols.wind_speed {
            Some(i) => cell(i, &schema.wind_speed)?,
            None => DEFAULT_WIND_SPEED,
        };
        let albedo = match cols.albedo {
            Some(i) => {
                let v = cell(i, &schema.albedo)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(malformed(&schema.albedo, format!("albedo {v} outside [0, 1]")));
                }
                v
            }
            None => DEFAULT_ALBEDO,
        };
        let (sun_zenith, sun_azimuth) = match (cols.sun, site) {
            (Some((zi, ai)), _) => {
                let z = cell(zi, &schema.sun_zenith)?;
                let a = cell(ai, &schema.sun_azimuth)?;
                if !(0.0..=180.0).contains(&z) {
                    return Err(malformed(&schema.sun_zenith, format!("zenith {z} outside [0, 180]")));
                }
                (z, a.rem_euclid(360.0))
            }
            (None, Some(s)) => solar_position(s.latitude, s.longitude, timestamp),
            (None, None) => unreachable!(),
        };
        records.push(WeatherRecord {
            timestamp,
            dni,
            dhi,
            ghi,
            ambient_temp,
            wind_speed,
            albedo,
            sun_zenith,
            sun_azimuth,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(records)
}

/// Writes records with the default column names.
pub fn write_weather_csv<W: Write>(sink: W, records: &[WeatherRecord]) -> Result<()> {
    let mut w = ::csv::Writer::from_writer(sink);
    let s = ColumnSchema::default();
    w.write_record([
        &s.timestamp, &s.dni, &s.dhi, &s.ghi, &s.ambient_temp, &s.wind_speed, &s.albedo, &s.sun_zenith,
        &s.sun_azimuth,
    ])?;
    for r in records {
        w.write_record([
            format_utc(&r.timestamp),
            r.dni.to_string(),
            r.dhi.to_string(),
            r.ghi.to_string(),
            r.ambient_temp.to_string(),
            r.wind_speed.to_string(),
            r.albedo.to_string(),
            r.sun_zenith.to_string(),
            r.sun_azimuth.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<weather csv>", e))?;
    Ok(())
}
