use std::io::Read;

use chrono::NaiveDateTime;

use crate::error::{OdpError, Result};

/// One trip request: submission time (UTC) plus origin and destination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Request {
    pub time: NaiveDateTime,
    pub origin_lat: f64,
    pub origin_lng: f64,
    pub dest_lat: f64,
    pub dest_lng: f64,
}

impl Request {
    pub fn coordinates_valid(&self) -> bool {
        let lat_ok = |v: f64| (-90.0..=90.0).contains(&v);
        let lng_ok = |v: f64| (-180.0..=180.0).contains(&v);
        lat_ok(self.origin_lat) && lat_ok(self.dest_lat) && lng_ok(self.origin_lng) && lng_ok(self.dest_lng)
    }
}

/// Column mapping and dialect of a delimited trip file.
#[derive(Debug, Clone, PartialEq)]
pub struct TripFormat {
    pub delimiter: u8,
    pub pickup_time_col: String,
    pub o_lat_col: String,
    pub o_lng_col: String,
    pub d_lat_col: String,
    pub d_lng_col: String,
    pub time_format: String,
}

impl Default for TripFormat {
    /// NYC yellow-taxi 2016 column names.
    fn default() -> Self {
        TripFormat {
            delimiter: b',',
            pickup_time_col: "tpep_pickup_datetime".into(),
            o_lat_col: "pickup_latitude".into(),
            o_lng_col: "pickup_longitude".into(),
            d_lat_col: "dropoff_latitude".into(),
            d_lng_col: "dropoff_longitude".into(),
            time_format: "%Y-%m-%d %H:%M:%S".into(),
        }
    }
}

#[derive(Debug, Default)]
pub struct ParsedTrips {
    pub requests: Vec<Request>,
    /// Rows that were malformed or had out-of-range coordinates.
    pub skipped: usize,
}

/// Parse a delimited trip file with a header row.
///
/// Malformed rows are skipped and counted; a header that lacks one of the
/// mapped columns is a configuration error.
pub fn parse_trips<R: Read>(reader: R, format: &TripFormat, source: &str) -> Result<ParsedTrips> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(csv_error(e, source)),
    };
    if headers.is_empty() {
        return Ok(ParsedTrips::default());
    }
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            OdpError::config(format!("column '{name}' not found in header of {source}"))
        })
    };
    let cols = [
        find(&format.pickup_time_col)?,
        find(&format.o_lat_col)?,
        find(&format.o_lng_col)?,
        find(&format.d_lat_col)?,
        find(&format.d_lng_col)?,
    ];

    let mut out = ParsedTrips::default();
    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(csv_error(e, source)),
            Err(_) => {
                out.skipped += 1;
                continue;
            }
        };
        match parse_row(&record, &cols, &format.time_format) {
            Some(req) if req.coordinates_valid() => out.requests.push(req),
            _ => out.skipped += 1,
        }
    }
    Ok(out)
}

fn parse_row(record: &csv::StringRecord, cols: &[usize; 5], time_format: &str) -> Option<Request> {
    let num = |k: usize| -> Option<f64> {
        record
            .get(cols[k])?
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
    };
    let time = NaiveDateTime::parse_from_str(record.get(cols[0])?, time_format).ok()?;
    Some(Request {
        time,
        origin_lat: num(1)?,
        origin_lng: num(2)?,
        dest_lat: num(3)?,
        dest_lng: num(4)?,
    })
}

fn csv_error(e: csv::Error, source: &str) -> OdpError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => OdpError::io(source, io),
        other => OdpError::input(source, format!("{other:?}")),
    }
}

/// Write requests in the default column layout.
pub fn write_trips<W: std::io::Write>(writer: W, requests: &[Request], format: &TripFormat) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(format.delimiter)
        .from_writer(writer);
    let io = |e: csv::Error| OdpError::input("<trip writer>", e.to_string());
    w.write_record([
        &format.pickup_time_col,
        &format.o_lng_col,
        &format.o_lat_col,
        &format.d_lng_col,
        &format.d_lat_col,
    ])
    .map_err(io)?;
    for r in requests {
        w.write_record([
            r.time.format(&format.time_format).to_string(),
            format!("{:.6}", r.origin_lng),
            format!("{:.6}", r.origin_lat),
            format!("{:.6}", r.dest_lng),
            format!("{:.6}", r.dest_lat),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| OdpError::io("<trip writer>", e))?;
    Ok(())
}
