use std::io::{Read, Write};

use nalgebra::DVector;

use crate::error::{LfmError, Result};

/// Measurements at strictly increasing times, with optional controls held
/// constant on `[t_k, t_{k+1})`.
///
/// A `None` observation marks a sample time without a measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesData {
    pub times: Vec<f64>,
    pub observations: Vec<Option<DVector<f64>>>,
    pub controls: Option<Vec<DVector<f64>>>,
}

impl TimeSeriesData {
    pub fn new(
        times: Vec<f64>,
        observations: Vec<Option<DVector<f64>>>,
        controls: Option<Vec<DVector<f64>>>,
    ) -> Result<Self> {
        if times.len() != observations.len() {
            return Err(LfmError::Data(format!(
                "{} times but {} observations",
                times.len(),
                observations.len()
            )));
        }
        if let Some(c) = &controls {
            if c.len() != times.len() {
                return Err(LfmError::Data(format!("{} times but {} controls", times.len(), c.len())));
            }
            if let Some(first) = c.first() {
                if c.iter().any(|v| v.len() != first.len()) {
                    return Err(LfmError::Data("controls have inconsistent lengths".into()));
                }
            }
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(LfmError::Data("sample times must be finite".into()));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(LfmError::Data(format!("times are not strictly increasing at {} -> {}", w[0], w[1])));
        }
        let mut dims = observations.iter().flatten().map(|y| y.len());
        if let Some(d) = dims.next() {
            if dims.any(|x| x != d) {
                return Err(LfmError::Data("observations have inconsistent lengths".into()));
            }
        }
        Ok(Self { times, observations, controls })
    }

    /// Fully observed scalar series.
    pub fn scalar(times: Vec<f64>, values: &[f64]) -> Result<Self> {
        let obs = values.iter().map(|&v| Some(DVector::from_element(1, v))).collect();
        Self::new(times, obs, None)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn control(&self, k: usize) -> Option<&DVector<f64>> {
        self.controls.as_ref().map(|c| &c[k])
    }

    pub fn output_dim(&self) -> usize {
        self.observations.iter().flatten().map(|y| y.len()).next().unwrap_or(0)
    }

    pub fn control_dim(&self) -> usize {
        self.controls.as_ref().and_then(|c| c.first()).map_or(0, |c| c.len())
    }

    pub fn span(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Standard deviation of all observed values pooled together.
    pub fn observed_std(&self) -> f64 {
        let vals: Vec<f64> = self.observations.iter().flatten().flat_map(|y| y.iter().copied()).collect();
        if vals.len() < 2 {
            return 0.0;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
    }

    /// Samples with `t` in `[from, to)`.
    pub fn window(&self, from: f64, to: f64) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&k| self.times[k] >= from && self.times[k] < to).collect();
        Self {
            times: idx.iter().map(|&k| self.times[k]).collect(),
            observations: idx.iter().map(|&k| self.observations[k].clone()).collect(),
            controls: self.controls.as_ref().map(|c| idx.iter().map(|&k| c[k].clone()).collect()),
        }
    }

    /// Writes `t, y_1..y_d, c_1..c_m` with empty cells for missing values.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let d = self.output_dim();
        let m = self.control_dim();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("y_{i}")));
        header.extend((1..=m).map(|i| format!("c_{i}")));
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![self.times[k].to_string()];
            match &self.observations[k] {
                Some(y) => row.extend(y.iter().map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), d)),
            }
            if let Some(c) = self.control(k) {
                row.extend(c.iter().map(|v| v.to_string()));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.get(0) != Some("t") {
            return Err(LfmError::Data("first CSV column must be `t`".into()));
        }
        let d = header.iter().filter(|h| h.starts_with("y_")).count();
        let m = header.iter().filter(|h| h.starts_with("c_")).count();
        if header.len() != 1 + d + m {
            return Err(LfmError::Data(format!("unexpected CSV columns: {header:?}")));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| LfmError::Data(format!("bad number `{s}`: {e}")))
        };
        let mut times = Vec::new();
        let mut obs = Vec::new();
        let mut controls = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            times.push(parse(&rec[0])?);
            let cells: Vec<&str> = (1..=d).map(|i| &rec[i]).collect();
            if cells.iter().all(|c| c.trim().is_empty()) {
                obs.push(None);
            } else {
                let vals = cells.iter().map(|c| parse(c)).collect::<Result<Vec<_>>>()?;
                obs.push(Some(DVector::from_vec(vals)));
            }
            if m > 0 {
                let vals = (1 + d..1 + d + m).map(|i| parse(&rec[i])).collect::<Result<Vec<_>>>()?;
                controls.push(DVector::from_vec(vals));
            }
        }
        Self::new(times, obs, if m > 0 { Some(controls) } else { None })
    }
}
