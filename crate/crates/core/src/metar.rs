//! METAR decoding.
//!
//! Only the groups needed for the weather feature vector are retained:
//! wind, visibility, temperature/dew point and pressure. Weather, cloud,
//! runway visual range groups and everything after the pressure group
//! (remarks, trends, runway state) are accepted and discarded.

use std::fmt;
use std::sync::LazyLock;

use chrono::{NaiveDate, NaiveDateTime};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Magnus coefficients (Alduchov & Eskridge 1996).
const MAGNUS_A: f64 = 17.625;
const MAGNUS_B: f64 = 243.04;

// Same factor as common public decoders, so decoded values agree with them.
const HPA_PER_INHG: f64 = 33.863_98;
const KT_PER_MPS: f64 = 1.943_844;
const KMH_PER_KT: f64 = 1.852;
const METERS_PER_SM: f64 = 1609.344;

/// Visibility reported as "9999" or CAVOK: 10 km or more.
pub const VISIBILITY_UNLIMITED_M: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    Station,
    Time,
    Wind,
    Visibility,
    Temperature,
    Pressure,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Group::Station => "station",
            Group::Time => "time",
            Group::Wind => "wind",
            Group::Visibility => "visibility",
            Group::Temperature => "temperature",
            Group::Pressure => "pressure",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetarError {
    #[error("malformed report: unexpected token `{token}` at byte {offset}")]
    MalformedReport { token: String, offset: usize },
    #[error("missing {group} group, found `{token}` at byte {offset}")]
    MissingGroup {
        group: Group,
        token: String,
        offset: usize,
    },
    #[error("value out of range in `{token}` at byte {offset}")]
    OutOfRange { token: String, offset: usize },
}

impl MetarError {
    pub fn offset(&self) -> usize {
        match self {
            MetarError::MalformedReport { offset, .. }
            | MetarError::MissingGroup { offset, .. }
            | MetarError::OutOfRange { offset, .. } => *offset,
        }
    }

    pub fn token(&self) -> &str {
        match self {
            MetarError::MalformedReport { token, .. }
            | MetarError::MissingGroup { token, .. }
            | MetarError::OutOfRange { token, .. } => token,
        }
    }
}

/// Day-of-month and time of day as carried by the report itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObsTime {
    pub day: u8,
    pub hour: u8,
    pub minute: u8,
}

impl ObsTime {
    /// Resolves to epoch seconds given the year and month supplied by the
    /// ingestion context. `None` when the day does not exist in that month.
    pub fn resolve(&self, year: i32, month: u32) -> Option<i64> {
        let date = NaiveDate::from_ymd_opt(year, month, u32::from(self.day))?;
        let dt: NaiveDateTime =
            date.and_hms_opt(u32::from(self.hour), u32::from(self.minute), 0)?;
        Some(dt.and_utc().timestamp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindDirection {
    Degrees(u16),
    Variable,
}

/// Pressure in the unit of the original group so that re-encoding is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pressure {
    Hpa(u16),
    /// Altimeter setting in hundredths of inches of mercury.
    InHg(u16),
}

impl Pressure {
    pub fn hpa(&self) -> f64 {
        match *self {
            Pressure::Hpa(v) => f64::from(v),
            Pressure::InHg(h) => f64::from(h) / 100.0 * HPA_PER_INHG,
        }
    }
}

/// A decoded METAR report.
///
/// Equality compares decoded fields only; `raw` is provenance and is
/// ignored, so a canonical re-encoding compares equal to its source.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeatherObservation {
    pub station: String,
    pub time: ObsTime,
    pub wind_dir: WindDirection,
    pub wind_speed_kt: u16,
    pub gust_kt: Option<u16>,
    pub visibility_m: u32,
    pub temp_c: i16,
    pub dewpoint_c: i16,
    pub pressure: Pressure,
    pub humidity_pct: f64,
    pub raw: String,
}

impl PartialEq for WeatherObservation {
    fn eq(&self, other: &Self) -> bool {
        self.station == other.station
            && self.time == other.time
            && self.wind_dir == other.wind_dir
            && self.wind_speed_kt == other.wind_speed_kt
            && self.gust_kt == other.gust_kt
            && self.visibility_m == other.visibility_m
            && self.temp_c == other.temp_c
            && self.dewpoint_c == other.dewpoint_c
            && self.pressure == other.pressure
            && self.humidity_pct.to_bits() == other.humidity_pct.to_bits()
    }
}

impl WeatherObservation {
    pub fn pressure_hpa(&self) -> f64 {
        self.pressure.hpa()
    }

    pub fn is_variable_wind(&self) -> bool {
        self.wind_dir == WindDirection::Variable
    }

    /// Wind direction in degrees; 0 when variable.
    pub fn wind_dir_deg(&self) -> u16 {
        match self.wind_dir {
            WindDirection::Degrees(d) => d,
            WindDirection::Variable => 0,
        }
    }

    /// True when the direction carries information (not variable, not calm).
    pub fn wind_dir_valid(&self) -> bool {
        !self.is_variable_wind() && self.wind_speed_kt > 0
    }
}

/// Relative humidity (%) from temperature and dew point via the Magnus formula.
pub fn relative_humidity(temp_c: f64, dewpoint_c: f64) -> Result<f64, MetarError> {
    let in_domain = |v: f64| (-60.0..=60.0).contains(&v);
    if !in_domain(temp_c) || !in_domain(dewpoint_c) || dewpoint_c > temp_c + 0.5 {
        return Err(MetarError::OutOfRange {
            token: format!("{temp_c}/{dewpoint_c}"),
            offset: 0,
        });
    }
    if dewpoint_c == temp_c {
        return Ok(100.0);
    }
    let saturation = |t: f64| (MAGNUS_A * t / (MAGNUS_B + t)).exp();
    let rh = 100.0 * saturation(dewpoint_c) / saturation(temp_c);
    Ok(rh.clamp(f64::MIN_POSITIVE, 100.0))
}

static STATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-Z][A-Z0-9]{3}$").unwrap());
static TIME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d{2})(\d{2})(\d{2})Z$").unwrap());
static WIND: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\d{3}|VRB)(\d{2,3})(?:G(\d{2,3}))?(KT|MPS|KMH)$").unwrap()
});
static WIND_VARIATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\d{3}V\d{3}$").unwrap());
static VIS_METERS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d{4})(?:NDV)?$").unwrap());
static VIS_DIRECTIONAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\d{4}(?:N|NE|E|SE|S|SW|W|NW)$").unwrap());
static VIS_SM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([MP])?(?:(\d{1,2})|(\d)/(\d{1,2}))SM$").unwrap());
static WHOLE_NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d$").unwrap());
static RVR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^R\d{2}[LCR]?/\S+$").unwrap());
static PHENOMENA: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^(?:[+-]|VC|RE)?(?:MI|PR|BC|DR|BL|SH|TS|FZ)?(?:DZ|RA|SN|SG|IC|PL|GR|GS|UP|BR|FG|FU|VA|DU|SA|HZ|PY|PO|SQ|FC|SS|DS)*$",
    )
    .unwrap()
});
static CLOUD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:(?:FEW|SCT|BKN|OVC)(?:\d{3}|///)(?:CB|TCU|///)?|VV(?:\d{3}|///)|NSC|SKC|CLR|NCD|NSW|//////)$")
        .unwrap()
});
static TEMPERATURE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(M?\d{2})/(M?\d{2})$").unwrap());
static PRESSURE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^([QA])(\d{4})$").unwrap());

#[derive(Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    offset: usize,
}

fn tokenize(raw: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in raw.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token { text: &raw[s..i], offset: s });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(Token { text: &raw[s..], offset: s });
    }
    tokens
}

struct Cursor<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    end: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<Token<'a>> {
        self.tokens.get(self.pos).copied()
    }

    fn advance(&mut self) {
        self.pos += 1;
    }

    fn missing(&self, group: Group) -> MetarError {
        match self.peek() {
            Some(t) => MetarError::MissingGroup {
                group,
                token: t.text.to_string(),
                offset: t.offset,
            },
            None => MetarError::MissingGroup {
                group,
                token: String::new(),
                offset: self.end,
            },
        }
    }
}

fn malformed(t: Token<'_>) -> MetarError {
    MetarError::MalformedReport {
        token: t.text.to_string(),
        offset: t.offset,
    }
}

fn out_of_range(t: Token<'_>) -> MetarError {
    MetarError::OutOfRange {
        token: t.text.to_string(),
        offset: t.offset,
    }
}

fn signed_temp(s: &str) -> i16 {
    match s.strip_prefix('M') {
        Some(rest) => -rest.parse::<i16>().unwrap_or(0),
        None => s.parse().unwrap_or(0),
    }
}

/// Parses a single METAR body.
pub fn parse_metar(raw: &str) -> Result<WeatherObservation, MetarError> {
    parse_with_default_station(raw, None)
}

/// Parses raw bytes; invalid UTF-8 is reported as a malformed report.
pub fn parse_metar_bytes(raw: &[u8]) -> Result<WeatherObservation, MetarError> {
    match std::str::from_utf8(raw) {
        Ok(s) => parse_metar(s),
        Err(e) => Err(MetarError::MalformedReport {
            token: String::from_utf8_lossy(&raw[e.valid_up_to()..]).chars().take(16).collect(),
            offset: e.valid_up_to(),
        }),
    }
}

/// Like [`parse_metar`], but a report that omits its station identifier
/// takes `default_station` instead.
pub fn parse_with_default_station(
    raw: &str,
    default_station: Option<&str>,
) -> Result<WeatherObservation, MetarError> {
    let mut cur = Cursor {
        tokens: tokenize(raw),
        pos: 0,
        end: raw.len(),
    };

    if matches!(cur.peek(), Some(t) if t.text == "METAR" || t.text == "SPECI") {
        cur.advance();
    }

    let station = match cur.peek() {
        Some(t) if STATION.is_match(t.text) => {
            cur.advance();
            t.text.to_string()
        }
        Some(t) if TIME.is_match(t.text) && default_station.is_some() => {
            default_station.unwrap_or_default().to_string()
        }
        Some(t) => return Err(malformed(t)),
        None => return Err(cur.missing(Group::Station)),
    };

    let time = match cur.peek() {
        Some(t) => match TIME.captures(t.text) {
            Some(c) => {
                let day: u8 = c[1].parse().unwrap_or(0);
                let hour: u8 = c[2].parse().unwrap_or(99);
                let minute: u8 = c[3].parse().unwrap_or(99);
                if !(1..=31).contains(&day) || hour > 23 || minute > 59 {
                    return Err(out_of_range(t));
                }
                cur.advance();
                ObsTime { day, hour, minute }
            }
            None => return Err(cur.missing(Group::Time)),
        },
        None => return Err(cur.missing(Group::Time)),
    };

    while matches!(cur.peek(), Some(t) if t.text == "AUTO" || t.text == "COR") {
        cur.advance();
    }

    let (wind_dir, wind_speed_kt, gust_kt) = match cur.peek() {
        Some(t) => match WIND.captures(t.text) {
            Some(c) => {
                let to_kt = |v: u32| -> u16 {
                    let kt = match &c[4] {
                        "MPS" => (f64::from(v) * KT_PER_MPS).round(),
                        "KMH" => (f64::from(v) / KMH_PER_KT).round(),
                        _ => f64::from(v),
                    };
                    kt as u16
                };
                let speed = to_kt(c[2].parse().unwrap_or(0));
                let gust = c.get(3).map(|g| to_kt(g.as_str().parse().unwrap_or(0)));
                let dir = if &c[1] == "VRB" {
                    WindDirection::Variable
                } else {
                    let deg: u16 = c[1].parse().unwrap_or(0);
                    if deg > 360 {
                        return Err(out_of_range(t));
                    }
                    if speed == 0 {
                        WindDirection::Degrees(0)
                    } else {
                        WindDirection::Degrees(deg % 360)
                    }
                };
                if matches!(gust, Some(g) if g < speed) {
                    return Err(out_of_range(t));
                }
                cur.advance();
                (dir, speed, gust)
            }
            None => return Err(cur.missing(Group::Wind)),
        },
        None => return Err(cur.missing(Group::Wind)),
    };

    if matches!(cur.peek(), Some(t) if WIND_VARIATION.is_match(t.text)) {
        cur.advance();
    }

    let visibility_m = parse_visibility(&mut cur)?;

    if matches!(cur.peek(), Some(t) if VIS_DIRECTIONAL.is_match(t.text)) {
        cur.advance();
    }

    // Runway visual range, present weather and cloud groups are skipped.
    let (temp_c, dewpoint_c, temp_token) = loop {
        let Some(t) = cur.peek() else {
            return Err(cur.missing(Group::Temperature));
        };
        if let Some(c) = TEMPERATURE.captures(t.text) {
            cur.advance();
            break (signed_temp(&c[1]), signed_temp(&c[2]), t);
        }
        if PRESSURE.is_match(t.text) {
            return Err(cur.missing(Group::Temperature));
        }
        let skippable = RVR.is_match(t.text)
            || CLOUD.is_match(t.text)
            || (t.text.len() >= 2 && PHENOMENA.is_match(t.text));
        if !skippable {
            return Err(malformed(t));
        }
        cur.advance();
    };

    let humidity_pct = relative_humidity(f64::from(temp_c), f64::from(dewpoint_c))
        .map_err(|_| out_of_range(temp_token))?;

    let pressure = match cur.peek() {
        Some(t) => match PRESSURE.captures(t.text) {
            Some(c) => {
                let v: u16 = c[2].parse().unwrap_or(0);
                let p = if &c[1] == "Q" {
                    Pressure::Hpa(v)
                } else {
                    Pressure::InHg(v)
                };
                if !(800.0..=1100.0).contains(&p.hpa()) {
                    return Err(out_of_range(t));
                }
                cur.advance();
                p
            }
            None => return Err(cur.missing(Group::Pressure)),
        },
        None => return Err(cur.missing(Group::Pressure)),
    };

    Ok(WeatherObservation {
        station,
        time,
        wind_dir,
        wind_speed_kt,
        gust_kt,
        visibility_m,
        temp_c,
        dewpoint_c,
        pressure,
        humidity_pct,
        raw: raw.trim().to_string(),
    })
}

fn parse_visibility(cur: &mut Cursor<'_>) -> Result<u32, MetarError> {
    let Some(t) = cur.peek() else {
        return Err(cur.missing(Group::Visibility));
    };
    if t.text == "CAVOK" {
        cur.advance();
        return Ok(VISIBILITY_UNLIMITED_M);
    }
    if let Some(c) = VIS_METERS.captures(t.text) {
        cur.advance();
        let v: u32 = c[1].parse().unwrap_or(0);
        return Ok(if v >= 9999 { VISIBILITY_UNLIMITED_M } else { v });
    }
    // "2 1/2SM": whole miles in a separate token.
    let mut whole = 0.0;
    let mut sm_token = t;
    if WHOLE_NUMBER.is_match(t.text) {
        if let Some(next) = cur.tokens.get(cur.pos + 1).copied() {
            if VIS_SM.is_match(next.text) && next.text.contains('/') {
                whole = t.text.parse::<f64>().unwrap_or(0.0);
                cur.advance();
                sm_token = next;
            }
        }
    }
    if let Some(c) = VIS_SM.captures(sm_token.text) {
        let miles = if let Some(w) = c.get(2) {
            w.as_str().parse::<f64>().unwrap_or(0.0)
        } else {
            let num: f64 = c[3].parse().unwrap_or(0.0);
            let den: f64 = c[4].parse().unwrap_or(0.0);
            if den == 0.0 {
                return Err(out_of_range(sm_token));
            }
            num / den
        };
        cur.advance();
        let meters = ((whole + miles) * METERS_PER_SM).round();
        return Ok((meters as u32).min(VISIBILITY_UNLIMITED_M));
    }
    Err(cur.missing(Group::Visibility))
}

/// Canonical METAR body for an observation.
///
/// Wind is always in knots, pressure keeps its original unit, visibility of
/// 10 km or more is written as "9999".
pub fn emit_canonical(obs: &WeatherObservation) -> String {
    let wind_dir = match obs.wind_dir {
        WindDirection::Variable => "VRB".to_string(),
        WindDirection::Degrees(d) => format!("{d:03}"),
    };
    let gust = obs.gust_kt.map(|g| format!("G{g:02}")).unwrap_or_default();
    let vis = if obs.visibility_m >= VISIBILITY_UNLIMITED_M {
        "9999".to_string()
    } else {
        format!("{:04}", obs.visibility_m)
    };
    let temp = |v: i16| {
        if v < 0 {
            format!("M{:02}", -v)
        } else {
            format!("{v:02}")
        }
    };
    let pressure = match obs.pressure {
        Pressure::Hpa(v) => format!("Q{v:04}"),
        Pressure::InHg(v) => format!("A{v:04}"),
    };
    format!(
        "{} {:02}{:02}{:02}Z {}{:02}{}KT {} {}/{} {}",
        obs.station,
        obs.time.day,
        obs.time.hour,
        obs.time.minute,
        wind_dir,
        obs.wind_speed_kt,
        gust,
        vis,
        temp(obs.temp_c),
        temp(obs.dewpoint_c),
        pressure
    )
}

/// Year/month (and optional default station) supplied by a `#CONTEXT` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetarContext {
    pub year: i32,
    pub month: u32,
    pub station_default: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetarFileError {
    #[error("line {line}: bad context header: {reason}")]
    BadContext { line: usize, reason: String },
    #[error("line {line}: no #CONTEXT header before first report")]
    NoContext { line: usize },
    #[error("line {line}: {source}")]
    Report { line: usize, source: MetarError },
    #[error("line {line}: day {day} does not exist in {year}-{month:02}")]
    BadDate {
        line: usize,
        year: i32,
        month: u32,
        day: u8,
    },
}

/// A decoded observation with its resolved UTC timestamp (epoch seconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedObservation {
    pub ts: i64,
    pub obs: WeatherObservation,
}

pub fn parse_context_line(line: &str, line_no: usize) -> Result<MetarContext, MetarFileError> {
    let bad = |reason: &str| MetarFileError::BadContext {
        line: line_no,
        reason: reason.to_string(),
    };
    let body = line
        .trim()
        .strip_prefix("#CONTEXT")
        .ok_or_else(|| bad("missing #CONTEXT prefix"))?;
    let (mut year, mut month, mut station_default) = (None, None, None);
    for kv in body.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad("expected key=value"))?;
        match k {
            "year" => year = Some(v.parse::<i32>().map_err(|_| bad("year"))?),
            "month" => {
                let m = v.parse::<u32>().map_err(|_| bad("month"))?;
                if !(1..=12).contains(&m) {
                    return Err(bad("month out of range"));
                }
                month = Some(m);
            }
            "station_default" => station_default = Some(v.to_string()),
            _ => return Err(bad("unknown key")),
        }
    }
    Ok(MetarContext {
        year: year.ok_or_else(|| bad("year missing"))?,
        month: month.ok_or_else(|| bad("month missing"))?,
        station_default,
    })
}

/// Parses a METAR file: one report per line, `#CONTEXT` headers setting
/// year/month for the reports that follow. Blank lines are skipped.
/// Returns one result per report line so a bad report does not abort the file.
pub fn parse_metar_file(text: &str) -> Vec<Result<TimedObservation, MetarFileError>> {
    let mut out = Vec::new();
    let mut ctx: Option<MetarContext> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with("#CONTEXT") {
            match parse_context_line(trimmed, line_no) {
                Ok(c) => ctx = Some(c),
                Err(e) => out.push(Err(e)),
            }
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        let Some(c) = &ctx else {
            out.push(Err(MetarFileError::NoContext { line: line_no }));
            continue;
        };
        let parsed = parse_with_default_station(trimmed, c.station_default.as_deref())
            .map_err(|source| MetarFileError::Report {
                line: line_no,
                source,
            })
            .and_then(|obs| match obs.time.resolve(c.year, c.month) {
                Some(ts) => Ok(TimedObservation { ts, obs }),
                None => Err(MetarFileError::BadDate {
                    line: line_no,
                    year: c.year,
                    month: c.month,
                    day: obs.time.day,
                }),
            });
        out.push(parsed);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_reference_report() {
        let obs = parse_metar("EDDF 121150Z 24012KT 9999 FEW030 18/09 Q1015").unwrap();
        assert_eq!(obs.station, "EDDF");
        assert_eq!(obs.time, ObsTime { day: 12, hour: 11, minute: 50 });
        assert_eq!(obs.wind_dir, WindDirection::Degrees(240));
        assert_eq!(obs.wind_speed_kt, 12);
        assert_eq!(obs.visibility_m, 10_000);
        assert_eq!((obs.temp_c, obs.dewpoint_c), (18, 9));
        assert_eq!(obs.pressure_hpa(), 1015.0);
        assert!((obs.humidity_pct - 55.66).abs() <= 0.05);
    }

    #[test]
    fn calm_cavok_saturated() {
        let obs = parse_metar("KXYZ 010000Z 00000KT CAVOK 15/15 Q1013").unwrap();
        assert_eq!(obs.wind_speed_kt, 0);
        assert_eq!(obs.wind_dir, WindDirection::Degrees(0));
        assert!(!obs.wind_dir_valid());
        assert_eq!(obs.visibility_m, 10_000);
        assert_eq!(obs.humidity_pct, 100.0);
    }

    #[test]
    fn missing_temperature_group() {
        let err = parse_metar("EDDF 121150Z 24012KT").unwrap_err();
        assert!(matches!(err, MetarError::MissingGroup { .. }), "{err:?}");
        assert_eq!(err.offset(), "EDDF 121150Z 24012KT".len());

        let err = parse_metar("EDDF 121150Z 24012KT 9999 FEW030 Q1015").unwrap_err();
        assert!(matches!(
            err,
            MetarError::MissingGroup { group: Group::Temperature, .. }
        ));
        assert_eq!(err.token(), "Q1015");
    }

    #[test]
    fn missing_pressure_group() {
        let err = parse_metar("EDDF 121150Z 24012KT 9999 18/09 NOSIG").unwrap_err();
        assert!(matches!(
            err,
            MetarError::MissingGroup { group: Group::Pressure, offset: 32, .. }
        ));
    }

    #[test]
    fn wind_direction_out_of_range() {
        let err = parse_metar("EDDF 121150Z 37012KT 9999 18/09 Q1015").unwrap_err();
        assert_eq!(
            err,
            MetarError::OutOfRange {
                token: "37012KT".into(),
                offset: 13
            }
        );
    }

    #[test]
    fn unrecognized_token_is_malformed() {
        let err = parse_metar("EDDF 121150Z 24012KT 9999 BANANA 18/09 Q1015").unwrap_err();
        assert_eq!(
            err,
            MetarError::MalformedReport {
                token: "BANANA".into(),
                offset: 26
            }
        );
    }

    #[test]
    fn variable_wind_round_trip() {
        let obs = parse_metar("EGLL 221320Z VRB03KT 9999 SCT040 21/12 Q1021 NOSIG").unwrap();
        assert!(obs.is_variable_wind());
        assert_eq!(obs.wind_dir_deg(), 0);
        let text = emit_canonical(&obs);
        assert!(text.contains("VRB03KT"), "{text}");
        assert_eq!(parse_metar(&text).unwrap(), obs);
    }

    #[test]
    fn unlimited_visibility_emits_9999() {
        let obs = parse_metar("LEMD 161600Z 20010KT CAVOK 34/02 Q1014 NOSIG").unwrap();
        assert!(emit_canonical(&obs).contains(" 9999 "));
    }

    #[test]
    fn statute_mile_forms() {
        let vis = |s: &str| parse_metar(s).unwrap().visibility_m;
        assert_eq!(vis("KORD 020253Z 21006KT 1/2SM FZFG OVC002 M01/M01 A3001"), 805);
        assert_eq!(vis("KBOS 102254Z 04012KT M1/4SM +SN VV003 M03/M04 A2965"), 402);
        assert_eq!(vis("EDDB 040120Z 11004KT 2 1/2SM BR OVC004 02/01 Q1020"), 4023);
        assert_eq!(vis("KJFK 051651Z 31015KT 10SM FEW045 M02/M14 A3012"), 10_000);
    }

    #[test]
    fn humidity_examples() {
        assert_eq!(relative_humidity(15.0, 15.0).unwrap(), 100.0);
        assert!((relative_humidity(18.0, 9.0).unwrap() - 55.66).abs() <= 0.05);
        assert!(matches!(
            relative_humidity(20.0, -100.0),
            Err(MetarError::OutOfRange { .. })
        ));
        assert!(relative_humidity(10.0, 11.0).is_err());
        assert!(relative_humidity(10.0, 10.4).unwrap() <= 100.0);
    }

    #[test]
    fn context_header_resolves_dates() {
        let text = "#CONTEXT year=2024 month=03 station_default=EDDF\n\
                    EDDF 121150Z 24012KT 9999 FEW030 18/09 Q1015\n\
                    \n\
                    121220Z 25010KT 9999 18/08 Q1015\n\
                    EDDF 311220Z 25010KT 9999 18/08 Q1015\n";
        let out = parse_metar_file(text);
        assert_eq!(out.len(), 3);
        let first = out[0].as_ref().unwrap();
        assert_eq!(first.ts, 1_710_244_200);
        let second = out[1].as_ref().unwrap();
        assert_eq!(second.obs.station, "EDDF");
        assert!(out[2].is_ok());

        let out = parse_metar_file("EDDF 121150Z 24012KT 9999 18/09 Q1015\n");
        assert!(matches!(out[0], Err(MetarFileError::NoContext { line: 1 })));

        let out = parse_metar_file("#CONTEXT year=2023 month=2\nEDDF 301150Z 24012KT 9999 18/09 Q1015\n");
        assert!(matches!(out[0], Err(MetarFileError::BadDate { line: 2, .. })));
    }

    #[test]
    fn invalid_utf8_is_malformed() {
        let err = parse_metar_bytes(b"EDDF \xff\xfe").unwrap_err();
        assert!(matches!(err, MetarError::MalformedReport { offset: 5, .. }));
    }
}
