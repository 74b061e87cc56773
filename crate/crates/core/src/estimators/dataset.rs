use std::collections::BTreeMap;
use std::path::Path;

use crate::bayes_net::Cause;
use crate::error::{invalid, Error, Result};
use crate::geometry::{ray_cast, Pose, SegmentMap};

/// Paired beam observations `(z, z*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    z: Vec<f64>,
    z_star: Vec<f64>,
    cause: Option<Vec<Cause>>,
}

impl Dataset {
    pub fn new(z: Vec<f64>, z_star: Vec<f64>) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if z.len() != z_star.len() {
            return Err(invalid("z_star", "needs one expected range per measurement"));
        }
        if z.iter().chain(&z_star).any(|v| !v.is_finite()) {
            return Err(invalid("z", "measurements and expected ranges must be finite"));
        }
        Ok(Self { z, z_star, cause: None })
    }

    /// Dataset that also carries the simulated cause of every reading.
    pub fn with_causes(z: Vec<f64>, z_star: Vec<f64>, cause: Vec<Cause>) -> Result<Self> {
        if cause.len() != z.len() {
            return Err(invalid("cause", "needs one cause per measurement"));
        }
        let mut data = Self::new(z, z_star)?;
        data.cause = Some(cause);
        Ok(data)
    }

    /// Clips measurements and expected ranges into `[0, z_max]`.
    pub fn clipped(mut self, z_max: f64) -> Self {
        for v in self.z.iter_mut().chain(self.z_star.iter_mut()) {
            *v = v.clamp(0.0, z_max);
        }
        self
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn z_star(&self) -> &[f64] {
        &self.z_star
    }

    pub fn causes(&self) -> Option<&[Cause]> {
        self.cause.as_deref()
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.z.iter().copied().zip(self.z_star.iter().copied())
    }

    /// Rows at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let z = indices.iter().map(|&i| self.z[i]).collect();
        let z_star = indices.iter().map(|&i| self.z_star[i]).collect();
        match &self.cause {
            Some(c) => Self::with_causes(z, z_star, indices.iter().map(|&i| c[i]).collect()),
            None => Self::new(z, z_star),
        }
    }

    /// Groups rows whose expected ranges round to the same multiple of
    /// `width`. Buckets come back in increasing order of expected range,
    /// each labeled with its mean expected range.
    pub fn buckets(&self, width: f64) -> Result<Vec<(f64, Dataset)>> {
        if !(width > 0.0) {
            return Err(invalid("bucket width", format!("must be positive, got {width}")));
        }
        let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, &s) in self.z_star.iter().enumerate() {
            groups.entry((s / width).round() as i64).or_default().push(i);
        }
        groups
            .into_values()
            .map(|idx| {
                let part = self.select(&idx)?;
                let mean = part.z_star.iter().sum::<f64>() / part.len() as f64;
                Ok((mean, part))
            })
            .collect()
    }

    /// CSV with header `z,z_star` and, when known, a `cause` column.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        match &self.cause {
            Some(causes) => {
                writer.write_record(["z", "z_star", "cause"])?;
                for ((z, s), c) in self.rows().zip(causes) {
                    writer.write_record([z.to_string(), s.to_string(), c.as_str().to_string()])?;
                }
            }
            None => {
                writer.write_record(["z", "z_star"])?;
                for (z, s) in self.rows() {
                    writer.write_record([z.to_string(), s.to_string()])?;
                }
            }
        }
        let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }

    /// Reads the `z,z_star[,cause]` format and clips to `[0, z_max]`.
    pub fn from_csv_str(text: &str, z_max: f64) -> Result<Self> {
        let table = Table::parse(text, &["z", "z_star"])?;
        let cause_col = table.column("cause");
        let mut z = Vec::new();
        let mut z_star = Vec::new();
        let mut cause = Vec::new();
        for row in &table.rows {
            z.push(row.number(table.column("z").unwrap())?);
            z_star.push(row.number(table.column("z_star").unwrap())?);
            if let Some(c) = cause_col {
                cause.push(row.text(c)?.parse::<Cause>().map_err(|m| row.error(m))?);
            }
        }
        if z.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let data = match cause_col {
            Some(_) => Self::with_causes(z, z_star, cause)?,
            None => Self::new(z, z_star)?,
        };
        Ok(data.clipped(z_max))
    }

    pub fn load(path: impl AsRef<Path>, z_max: f64) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?, z_max)
    }

    /// Reads `z,x,y,heading` rows, where `heading` is the absolute beam
    /// direction, and computes each expected range by ray casting.
    pub fn from_pose_csv_str(text: &str, map: &SegmentMap) -> Result<Self> {
        let table = Table::parse(text, &["z", "x", "y", "heading"])?;
        let col = |name| table.column(name).unwrap();
        let mut z = Vec::new();
        let mut z_star = Vec::new();
        for row in &table.rows {
            let pose = Pose::new(
                row.number(col("x"))?,
                row.number(col("y"))?,
                row.number(col("heading"))?,
            );
            z.push(row.number(col("z"))?);
            z_star.push(ray_cast(map, &pose, 0.0));
        }
        if z.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self::new(z, z_star)?.clipped(map.z_max()))
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Row>,
}

struct Row {
    line: usize,
    fields: Vec<String>,
}

impl Row {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn text(&self, col: usize) -> Result<&str> {
        self.fields
            .get(col)
            .map(|s| s.trim())
            .ok_or_else(|| self.error(format!("missing column {}", col + 1)))
    }

    fn number(&self, col: usize) -> Result<f64> {
        let s = self.text(col)?;
        let v: f64 = s.parse().map_err(|_| self.error(format!("`{s}` is not a number")))?;
        if !v.is_finite() {
            return Err(self.error(format!("`{s}` is not finite")));
        }
        Ok(v)
    }
}

impl Table {
    fn parse(text: &str, required: &[&str]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        for name in required {
            if !header.iter().any(|h| h == name) {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("missing `{name}` column"),
                });
            }
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            rows.push(Row {
                line,
                fields: record.iter().map(str::to_string).collect(),
            });
        }
        Ok(Self { header, rows })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}
