//! Daily OHLC price series: CSV ingestion and a synthetic generator with
//! shared latent trend factors.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rand::SeedableRng;

use crate::error::{Error, Result};

/// Prices per (period, instrument), validated on construction.
#[derive(Debug, Clone)]
pub struct PriceSeries {
    pub symbols: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// period-major matrices, `close[n][i]`
    pub close: Vec<Vec<f64>>,
    pub high: Vec<Vec<f64>>,
    pub low: Vec<Vec<f64>>,
}

impl PriceSeries {
    pub fn new(
        symbols: Vec<String>,
        dates: Vec<NaiveDate>,
        close: Vec<Vec<f64>>,
        high: Vec<Vec<f64>>,
        low: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let p = dates.len();
        let m = symbols.len();
        if p == 0 || m == 0 {
            return Err(Error::Ingestion("price series is empty".into()));
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Ingestion(format!(
                    "dates not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        for (name, mat) in [("close", &close), ("high", &high), ("low", &low)] {
            if mat.len() != p || mat.iter().any(|r| r.len() != m) {
                return Err(Error::Ingestion(format!("{name} matrix shape mismatch")));
            }
        }
        for n in 0..p {
            for i in 0..m {
                let (c, h, l) = (close[n][i], high[n][i], low[n][i]);
                if !(c > 0.0 && h > 0.0 && l > 0.0) || !c.is_finite() {
                    return Err(Error::Ingestion(format!(
                        "non-positive price for {} on {}",
                        symbols[i], dates[n]
                    )));
                }
                if l > c || c > h {
                    return Err(Error::Ingestion(format!(
                        "low <= close <= high violated for {} on {}",
                        symbols[i], dates[n]
                    )));
                }
            }
        }
        Ok(PriceSeries {
            symbols,
            dates,
            close,
            high,
            low,
        })
    }

    pub fn periods(&self) -> usize {
        self.dates.len()
    }

    pub fn instrument_count(&self) -> usize {
        self.symbols.len()
    }

    /// Close-price ratio `v_{i,n} / v_{i,n-1}` for every instrument.
    pub fn close_ratios(&self, n: usize) -> Vec<f64> {
        (0..self.instrument_count())
            .map(|i| self.close[n][i] / self.close[n - 1][i])
            .collect()
    }

    /// Restriction to a subset of instruments, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<PriceSeries> {
        let pick = |mat: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            mat.iter()
                .map(|row| indices.iter().map(|&i| row[i]).collect())
                .collect()
        };
        PriceSeries::new(
            indices.iter().map(|&i| self.symbols[i].clone()).collect(),
            self.dates.clone(),
            pick(&self.close),
            pick(&self.high),
            pick(&self.low),
        )
    }

    /// Restriction to a period range `[start, end)`.
    pub fn slice_periods(&self, start: usize, end: usize) -> Result<PriceSeries> {
        if start >= end || end > self.periods() {
            return Err(Error::Domain(format!(
                "invalid period slice [{start}, {end}) of {}",
                self.periods()
            )));
        }
        PriceSeries::new(
            self.symbols.clone(),
            self.dates[start..end].to_vec(),
            self.close[start..end].to_vec(),
            self.high[start..end].to_vec(),
            self.low[start..end].to_vec(),
        )
    }
}

/// Loads `date,symbol,close,high,low` CSV into pivoted matrices.
///
/// Instruments missing any date in the overall range are rejected.
pub fn load_prices(path: &Path) -> Result<PriceSeries> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Ingestion(format!("cannot open {}: {e}", path.display())))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::Ingestion(format!("cannot read header: {e}")))?;
        let expected = ["date", "symbol", "close", "high", "low"];
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(Error::Ingestion(format!(
                "expected header {expected:?}, got {got:?}"
            )));
        }
    }

    let mut cells: BTreeMap<(NaiveDate, String), (f64, f64, f64)> = BTreeMap::new();
    let mut dates: std::collections::BTreeSet<NaiveDate> = Default::default();
    let mut symbols: std::collections::BTreeSet<String> = Default::default();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Ingestion(format!("row {}: {e}", line + 2)))?;
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|e| {
            Error::Ingestion(format!("row {}: bad date '{}': {e}", line + 2, &record[0]))
        })?;
        let symbol = record[1].to_string();
        let parse = |field: usize, name: &str| -> Result<f64> {
            record[field].parse::<f64>().map_err(|e| {
                Error::Ingestion(format!(
                    "row {}: bad {name} '{}' for {symbol} on {date}: {e}",
                    line + 2,
                    &record[field]
                ))
            })
        };
        let close = parse(2, "close")?;
        let high = parse(3, "high")?;
        let low = parse(4, "low")?;
        if cells
            .insert((date, symbol.clone()), (close, high, low))
            .is_some()
        {
            return Err(Error::Ingestion(format!(
                "duplicate row for {symbol} on {date}"
            )));
        }
        dates.insert(date);
        symbols.insert(symbol);
    }

    let dates: Vec<NaiveDate> = dates.into_iter().collect();
    let symbols: Vec<String> = symbols.into_iter().collect();
    let mut close = vec![vec![0.0; symbols.len()]; dates.len()];
    let mut high = close.clone();
    let mut low = close.clone();
    for (n, date) in dates.iter().enumerate() {
        for (i, symbol) in symbols.iter().enumerate() {
            match cells.get(&(*date, symbol.clone())) {
                Some(&(c, h, l)) => {
                    close[n][i] = c;
                    high[n][i] = h;
                    low[n][i] = l;
                }
                None => {
                    return Err(Error::Ingestion(format!(
                        "incomplete coverage: {symbol} missing on {date}"
                    )))
                }
            }
        }
    }
    PriceSeries::new(symbols, dates, close, high, low)
}

/// Writes the `date,symbol,close,high,low` CSV. Floats use shortest
/// round-trip decimals, so a generate/write/load cycle is bit-compatible.
pub fn write_prices(series: &PriceSeries, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Ingestion(format!("cannot write {}: {e}", path.display())))?;
    writer
        .write_record(["date", "symbol", "close", "high", "low"])
        .map_err(|e| Error::Ingestion(e.to_string()))?;
    for (n, date) in series.dates.iter().enumerate() {
        for (i, symbol) in series.symbols.iter().enumerate() {
            writer
                .write_record([
                    date.format("%Y-%m-%d").to_string(),
                    symbol.clone(),
                    format!("{}", series.close[n][i]),
                    format!("{}", series.high[n][i]),
                    format!("{}", series.low[n][i]),
                ])
                .map_err(|e| Error::Ingestion(e.to_string()))?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Parameters of the geometric-random-walk generator.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceGenConfig {
    pub instruments: usize,
    pub periods: usize,
    pub seed: u64,
    /// Mean and spread of the per-instrument daily drift.
    pub drift_mean: f64,
    pub drift_spread: f64,
    /// Mean and spread of the per-instrument daily volatility.
    pub vol_mean: f64,
    pub vol_spread: f64,
    /// Number of shared latent trend factors.
    pub factors: usize,
    /// AR(1) persistence of the factors.
    pub factor_persistence: f64,
    /// Innovation scale of the factors.
    pub factor_scale: f64,
    /// Intraday half-range scale for high/low.
    pub intraday_spread: f64,
}

impl Default for PriceGenConfig {
    fn default() -> Self {
        PriceGenConfig {
            instruments: 68,
            periods: 2000,
            seed: 0,
            drift_mean: 0.0002,
            drift_spread: 0.0003,
            vol_mean: 0.015,
            vol_spread: 0.005,
            factors: 3,
            factor_persistence: 0.97,
            factor_scale: 0.004,
            intraday_spread: 0.006,
        }
    }
}

/// Geometric random walks with per-instrument drift/volatility drawn from
/// shared hyper-distributions, plus persistent latent trend factors common
/// to all instruments. Deterministic given the seed.
pub fn generate_synthetic_prices(cfg: &PriceGenConfig) -> Result<PriceSeries> {
    if cfg.instruments == 0 || cfg.periods < 2 {
        return Err(Error::Domain("generator needs instruments >= 1 and periods >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = cfg.instruments;
    let normal = Normal::new(0.0, 1.0).unwrap();

    let drifts: Vec<f64> = (0..m)
        .map(|_| cfg.drift_mean + cfg.drift_spread * normal.sample(&mut rng))
        .collect();
    let vols: Vec<f64> = (0..m)
        .map(|_| (cfg.vol_mean + cfg.vol_spread * normal.sample(&mut rng)).max(0.0))
        .collect();
    // Nonnegative loadings keep tasks structurally close: every instrument
    // rides the same trends with its own exposure.
    let loadings: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..cfg.factors).map(|_| rng.gen::<f64>()).collect())
        .collect();

    let mut factors = vec![0.0; cfg.factors];
    let mut log_prices: Vec<f64> = (0..m).map(|_| (50.0 + 50.0 * rng.gen::<f64>()).ln()).collect();

    let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    let mut dates = Vec::with_capacity(cfg.periods);
    let mut close = Vec::with_capacity(cfg.periods);
    let mut high = Vec::with_capacity(cfg.periods);
    let mut low = Vec::with_capacity(cfg.periods);

    for n in 0..cfg.periods {
        dates.push(start + chrono::Days::new(n as u64));
        for f in factors.iter_mut() {
            *f = cfg.factor_persistence * *f + cfg.factor_scale * normal.sample(&mut rng);
        }
        let mut c_row = Vec::with_capacity(m);
        let mut h_row = Vec::with_capacity(m);
        let mut l_row = Vec::with_capacity(m);
        for i in 0..m {
            if n > 0 {
                let factor_term: f64 = loadings[i]
                    .iter()
                    .zip(&factors)
                    .map(|(l, f)| l * f)
                    .sum();
                log_prices[i] += drifts[i] + factor_term + vols[i] * normal.sample(&mut rng);
            }
            let c = log_prices[i].exp();
            let delta = (cfg.intraday_spread * normal.sample(&mut rng)).abs();
            c_row.push(c);
            h_row.push(c * (1.0 + delta));
            l_row.push(c * (1.0 - delta));
        }
        close.push(c_row);
        high.push(h_row);
        low.push(l_row);
    }
    PriceSeries::new(
        (0..m).map(|i| format!("SYN{i:03}")).collect(),
        dates,
        close,
        high,
        low,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_config() -> PriceGenConfig {
        PriceGenConfig {
            instruments: 3,
            periods: 50,
            seed: 9,
            drift_mean: 0.0,
            drift_spread: 0.0,
            vol_mean: 0.0,
            vol_spread: 0.0,
            factor_scale: 0.0,
            intraday_spread: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn zero_volatility_gives_constant_prices() {
        let series = generate_synthetic_prices(&quiet_config()).unwrap();
        for n in 1..series.periods() {
            for i in 0..3 {
                assert_eq!(series.close[n][i], series.close[0][i]);
            }
        }
    }

    #[test]
    fn generated_prices_always_positive() {
        let series = generate_synthetic_prices(&PriceGenConfig {
            instruments: 10,
            periods: 300,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        for n in 0..series.periods() {
            for i in 0..10 {
                assert!(series.low[n][i] > 0.0);
                assert!(series.low[n][i] <= series.close[n][i]);
                assert!(series.close[n][i] <= series.high[n][i]);
            }
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let cfg = PriceGenConfig {
            instruments: 4,
            periods: 100,
            seed: 31,
            ..Default::default()
        };
        let a = generate_synthetic_prices(&cfg).unwrap();
        let b = generate_synthetic_prices(&cfg).unwrap();
        assert_eq!(a.close, b.close);
        assert_eq!(a.high, b.high);
    }

    #[test]
    fn csv_round_trip_is_bit_compatible() {
        let series = generate_synthetic_prices(&PriceGenConfig {
            instruments: 2,
            periods: 30,
            seed: 13,
            ..Default::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prices.csv");
        write_prices(&series, &path).unwrap();
        let loaded = load_prices(&path).unwrap();
        assert_eq!(loaded.symbols, series.symbols);
        assert_eq!(loaded.dates, series.dates);
        for n in 0..series.periods() {
            for i in 0..2 {
                assert_eq!(loaded.close[n][i].to_bits(), series.close[n][i].to_bits());
                assert_eq!(loaded.high[n][i].to_bits(), series.high[n][i].to_bits());
                assert_eq!(loaded.low[n][i].to_bits(), series.low[n][i].to_bits());
            }
        }
    }

    #[test]
    fn small_complete_csv_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(
            &path,
            "date,symbol,close,high,low\n\
             2020-01-01,A,10,11,9\n\
             2020-01-01,B,20,21,19\n\
             2020-01-02,A,10.5,11.5,9.5\n\
             2020-01-02,B,19.5,20.5,18.5\n\
             2020-01-03,A,10.7,11.7,9.7\n\
             2020-01-03,B,19.7,20.7,18.7\n",
        )
        .unwrap();
        let series = load_prices(&path).unwrap();
        assert_eq!(series.periods(), 3);
        assert_eq!(series.instrument_count(), 2);
        assert_eq!(series.close[1][0], 10.5);
    }

    #[test]
    fn missing_cell_names_symbol_and_date() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(
            &path,
            "date,symbol,close,high,low\n\
             2020-01-01,A,10,11,9\n\
             2020-01-01,B,20,21,19\n\
             2020-01-02,A,10.5,11.5,9.5\n",
        )
        .unwrap();
        let err = load_prices(&path).unwrap_err().to_string();
        assert!(err.contains("B"), "{err}");
        assert!(err.contains("2020-01-02"), "{err}");
    }

    #[test]
    fn low_above_close_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(
            &path,
            "date,symbol,close,high,low\n2020-01-01,A,10,11,10.5\n",
        )
        .unwrap();
        assert!(load_prices(&path).is_err());
    }

    #[test]
    fn duplicate_row_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(
            &path,
            "date,symbol,close,high,low\n\
             2020-01-01,A,10,11,9\n\
             2020-01-01,A,10,11,9\n",
        )
        .unwrap();
        assert!(load_prices(&path).is_err());
    }
}
