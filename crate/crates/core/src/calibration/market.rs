//! Market quotes for calibration and their file formats.

use std::collections::HashSet;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ACT/365 year fraction from `from` to `to` (negative if `to` is earlier).
pub fn year_fraction(from: NaiveDate, to: NaiveDate) -> f64 {
    (to - from).num_days() as f64 / 365.0
}

pub fn third_friday(year: i32, month: u32) -> NaiveDate {
    NaiveDate::from_weekday_of_month_opt(year, month, Weekday::Fri, 3).expect("every month has a third Friday")
}

/// Window of the `k`-th annual dividend future (`k >= 1`) listed on
/// `valuation`: from the December expiry on or before the valuation date
/// shifted by `k - 1` years, to the next December expiry.
pub fn december_window(valuation: NaiveDate, k: u32) -> (NaiveDate, NaiveDate) {
    let roll = if third_friday(valuation.year(), 12) <= valuation { valuation.year() } else { valuation.year() - 1 };
    let start = roll + k as i32 - 1;
    (third_friday(start, 12), third_friday(start + 1, 12))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuturesQuote {
    pub id: String,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    /// Year fractions from the valuation date.
    pub t0: f64,
    pub t1: f64,
    /// Index points.
    pub quote: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockVolQuote {
    pub id: String,
    pub expiry: NaiveDate,
    pub t: f64,
    pub iv: f64,
}

/// ATM vol of the option on one of the listed futures, expiring at the end
/// of its window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DividendVolQuote {
    pub id: String,
    pub future_id: String,
    pub iv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketData {
    pub valuation_date: NaiveDate,
    /// Index level that converts the model's normalized prices (`X_0 = 1`).
    pub spot: f64,
    pub futures: Vec<FuturesQuote>,
    pub stock_iv: Option<StockVolQuote>,
    pub dividend_iv: Option<DividendVolQuote>,
}

/// Valuation date and spot, kept next to the quote file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketMeta {
    pub valuation_date: NaiveDate,
    pub spot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RowType {
    DividendFuture,
    StockIv,
    DividendIv,
}

#[derive(Debug, Deserialize)]
struct Row {
    instrument: String,
    #[serde(rename = "type")]
    kind: RowType,
    window_start: Option<NaiveDate>,
    window_end: Option<NaiveDate>,
    expiry: Option<NaiveDate>,
    quote: f64,
}

impl MarketData {
    /// Parses the quote table (`instrument,type,window_start,window_end,expiry,quote`).
    /// A `dividend_iv` row names its underlying future by repeating that
    /// future's window.
    pub fn from_csv_str(text: &str, meta: &MarketMeta) -> Result<Self> {
        if !(meta.spot > 0.0) {
            return Err(Error::Data(format!("spot must be positive, got {}", meta.spot)));
        }
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let expected = ["instrument", "type", "window_start", "window_end", "expiry", "quote"];
        let headers = reader.headers().map_err(|e| Error::Data(format!("line 1: {e}")))?.clone();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Data(format!("line 1: expected header {}", expected.join(","))));
        }
        let mut market = MarketData {
            valuation_date: meta.valuation_date,
            spot: meta.spot,
            futures: vec![],
            stock_iv: None,
            dividend_iv: None,
        };
        let mut seen = HashSet::new();
        let mut pending_div_iv: Option<(u64, Row)> = None;
        for record in reader.records() {
            let record = record.map_err(|e| Error::Data(format!("malformed row: {e}")))?;
            let line = record.position().map_or(0, |p| p.line());
            let row: Row = record
                .deserialize(Some(&headers))
                .map_err(|e| Error::Data(format!("line {line}: {e}")))?;
            if !seen.insert(row.instrument.clone()) {
                return Err(Error::Data(format!("line {line}: duplicate instrument {}", row.instrument)));
            }
            if !(row.quote > 0.0) || !row.quote.is_finite() {
                return Err(Error::Data(format!("line {line}: quote must be positive, got {}", row.quote)));
            }
            match row.kind {
                RowType::DividendFuture => {
                    let (Some(s), Some(e)) = (row.window_start, row.window_end) else {
                        return Err(Error::Data(format!("line {line}: dividend future needs window_start and window_end")));
                    };
                    if e <= s {
                        return Err(Error::Data(format!("line {line}: window end {e} is not after start {s}")));
                    }
                    if e <= meta.valuation_date {
                        return Err(Error::Data(format!("line {line}: window ended before the valuation date")));
                    }
                    market.futures.push(FuturesQuote {
                        id: row.instrument,
                        window_start: s,
                        window_end: e,
                        t0: year_fraction(meta.valuation_date, s),
                        t1: year_fraction(meta.valuation_date, e),
                        quote: row.quote,
                    });
                }
                RowType::StockIv => {
                    let Some(expiry) = row.expiry else {
                        return Err(Error::Data(format!("line {line}: stock_iv needs an expiry")));
                    };
                    check_vol(line, row.quote)?;
                    if market.stock_iv.is_some() {
                        return Err(Error::Data(format!("line {line}: more than one stock_iv row")));
                    }
                    if expiry <= meta.valuation_date {
                        return Err(Error::Data(format!("line {line}: expiry {expiry} is not after the valuation date")));
                    }
                    market.stock_iv = Some(StockVolQuote {
                        id: row.instrument,
                        expiry,
                        t: year_fraction(meta.valuation_date, expiry),
                        iv: row.quote,
                    });
                }
                RowType::DividendIv => {
                    check_vol(line, row.quote)?;
                    if pending_div_iv.is_some() {
                        return Err(Error::Data(format!("line {line}: more than one dividend_iv row")));
                    }
                    pending_div_iv = Some((line, row));
                }
            }
        }
        if seen.is_empty() {
            return Err(Error::Data("market file has no quotes".into()));
        }
        if let Some((line, row)) = pending_div_iv {
            let future = market
                .futures
                .iter()
                .find(|f| Some(f.window_start) == row.window_start && Some(f.window_end) == row.window_end)
                .ok_or_else(|| Error::Data(format!("line {line}: dividend_iv window matches no listed future")))?;
            market.dividend_iv = Some(DividendVolQuote { id: row.instrument, future_id: future.id.clone(), iv: row.quote });
        }
        market.futures.sort_by(|a, b| a.t0.total_cmp(&b.t0).then(a.id.cmp(&b.id)));
        Ok(market)
    }

    /// Reads the quote table and its meta JSON.
    pub fn from_files(csv_path: &Path, meta_path: &Path) -> Result<Self> {
        let meta_text = std::fs::read_to_string(meta_path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", meta_path.display())))?;
        let meta: MarketMeta = serde_json::from_str(&meta_text)
            .map_err(|e| Error::Data(format!("{}: {e}", meta_path.display())))?;
        let text = std::fs::read_to_string(csv_path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", csv_path.display())))?;
        Self::from_csv_str(&text, &meta).map_err(|e| match e {
            Error::Data(m) => Error::Data(format!("{}: {m}", csv_path.display())),
            other => other,
        })
    }

    pub fn future(&self, id: &str) -> Option<&FuturesQuote> {
        self.futures.iter().find(|f| f.id == id)
    }

    pub fn n_instruments(&self) -> usize {
        self.futures.len() + usize::from(self.stock_iv.is_some()) + usize::from(self.dividend_iv.is_some())
    }

    /// Least-squares index level mapping normalized model futures to quotes.
    pub fn fitted_spot(&self, model_futures: &[f64]) -> f64 {
        let num: f64 = self.futures.iter().zip(model_futures).map(|(q, m)| q.quote * m).sum();
        let den: f64 = model_futures.iter().map(|m| m * m).sum();
        num / den
    }
}

fn check_vol(line: u64, v: f64) -> Result<()> {
    if v > 0.0 && v < 2.0 {
        Ok(())
    } else {
        Err(Error::Data(format!("line {line}: implied vol must lie in (0, 2), got {v}")))
    }
}
