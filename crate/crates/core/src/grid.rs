//! Functions sampled on a uniform time grid, plus the shared CSV format.
//!
//! The CSV layout is: a block of `# key: value` metadata lines, a header row
//! (`t,value` for scalar data, `t,x1,...,xd` otherwise) and one row per grid
//! node. Floats are written in Rust's shortest round-trip representation, so
//! a write/read cycle is lossless.

use std::io::{BufRead, Write};

use crate::error::{invalid, Error, Result};

/// Relative tolerance used when locating a time on the grid.
const NODE_TOL: f64 = 1e-9;

/// An `R^dim`-valued function sampled at `n_steps + 1` equally spaced nodes
/// of `[t0, t_end]`. Values are stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    t0: f64,
    t_end: f64,
    n_steps: usize,
    dim: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(t0: f64, t_end: f64, dim: usize, values: Vec<f64>) -> Result<Self> {
        if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
            return Err(invalid("grid", format!("need t0 < t_end, got [{t0}, {t_end}]")));
        }
        if dim == 0 {
            return Err(invalid("grid", "dimension must be positive"));
        }
        if !values.len().is_multiple_of(dim) || values.len() / dim < 2 {
            return Err(invalid(
                "grid",
                format!("{} values do not form at least two nodes of dimension {dim}", values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("grid node {}, component {}", i / dim, i % dim),
            });
        }
        let n_steps = values.len() / dim - 1;
        Ok(Self {
            t0,
            t_end,
            n_steps,
            dim,
            values,
        })
    }

    pub fn from_scalar(t0: f64, t_end: f64, values: Vec<f64>) -> Result<Self> {
        Self::new(t0, t_end, 1, values)
    }

    /// Samples `f` at every node.
    pub fn sample(t0: f64, t_end: f64, n_steps: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(invalid("grid", "n_steps must be positive"));
        }
        let h = (t_end - t0) / n_steps as f64;
        let values = (0..=n_steps).map(|i| f(t0 + i as f64 * h)).collect();
        Self::from_scalar(t0, t_end, values)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.step()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values of one component at every node.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.dim).copied().collect()
    }

    /// Index of the node at time `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = (t - self.t0) / self.step();
        let i = x.round();
        if !(x - i).abs().le(&(NODE_TOL * x.abs().max(1.0))) || i < 0.0 || i > self.n_steps as f64 {
            return Err(Error::OffGrid { time: t });
        }
        Ok(i as usize)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    /// Keeps every `factor`-th node.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n_steps.is_multiple_of(factor) {
            return Err(invalid(
                "coarsening factor",
                format!("{factor} does not divide {} steps", self.n_steps),
            ));
        }
        let values = (0..=self.n_steps / factor)
            .flat_map(|k| self.node(k * factor).to_vec())
            .collect();
        Self::new(self.t0, self.t_end, self.dim, values)
    }

    /// Restriction to the nodes between `from` and `to` (inclusive indices).
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.n_steps {
            return Err(invalid("slice", format!("bad node range {from}..={to}")));
        }
        Self::new(
            self.time(from),
            self.time(to),
            self.dim,
            self.values[from * self.dim..(to + 1) * self.dim].to_vec(),
        )
    }

    /// Writes the CSV representation with the given metadata lines.
    pub fn write_csv<W: Write>(&self, mut w: W, metadata: &[(String, String)]) -> Result<()> {
        for (k, v) in metadata {
            writeln!(w, "# {k}: {v}")?;
        }
        if self.dim == 1 {
            writeln!(w, "t,value")?;
        } else {
            let names: Vec<String> = (1..=self.dim).map(|i| format!("x{i}")).collect();
            writeln!(w, "t,{}", names.join(","))?;
        }
        for i in 0..=self.n_steps {
            write!(w, "{}", self.time(i))?;
            for v in self.node(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads the CSV format, returning the function and its metadata block.
    pub fn read_csv<R: BufRead>(r: R) -> Result<(Self, Vec<(String, String)>)> {
        let mut metadata = Vec::new();
        let mut header: Option<usize> = None;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.split_once(':') {
                    metadata.push((k.trim().to_string(), v.trim().to_string()));
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            match header {
                None => {
                    if fields.len() < 2 || fields[0] != "t" {
                        return Err(Error::Csv(format!("line {}: expected header starting with `t`", lineno + 1)));
                    }
                    header = Some(fields.len() - 1);
                }
                Some(dim) => {
                    if fields.len() != dim + 1 {
                        return Err(Error::Csv(format!(
                            "line {}: expected {} fields, found {}",
                            lineno + 1,
                            dim + 1,
                            fields.len()
                        )));
                    }
                    let mut parsed = fields.iter().map(|f| {
                        f.parse::<f64>()
                            .map_err(|e| Error::Csv(format!("line {}: {e}", lineno + 1)))
                    });
                    times.push(parsed.next().unwrap()?);
                    for v in parsed {
                        values.push(v?);
                    }
                }
            }
        }
        let dim = header.ok_or_else(|| Error::Csv("missing header".into()))?;
        if times.len() < 2 {
            return Err(Error::Csv("need at least two rows".into()));
        }
        let (t0, t_end) = (times[0], *times.last().unwrap());
        let f = Self::new(t0, t_end, dim, values)?;
        let h = f.step();
        for (i, &t) in times.iter().enumerate() {
            if (t - f.time(i)).abs() > 1e-6 * h.max(1e-300) + 1e-12 * t.abs() {
                return Err(Error::Csv(format!("row {i}: grid is not uniform")));
            }
        }
        Ok((f, metadata))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_values() {
        let err = GridFunction::from_scalar(0.0, 1.0, vec![0.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn index_of_finds_nodes_only() {
        let f = GridFunction::sample(0.0, 1.0, 4, |t| t).unwrap();
        assert_eq!(f.index_of(0.5).unwrap(), 2);
        assert_eq!(f.index_of(1.0).unwrap(), 4);
        assert!(f.index_of(0.3).is_err());
        assert!(f.index_of(1.5).is_err());
    }

    #[test]
    fn csv_round_trip_keeps_values_and_metadata() {
        let f = GridFunction::new(0.0, 2.0, 2, vec![0.0, 1.0, 0.1, -3.5, 1e-17, 7.25]).unwrap();
        let meta = vec![("seed".to_string(), "7".to_string())];
        let mut buf = Vec::new();
        f.write_csv(&mut buf, &meta).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# seed: 7\nt,x1,x2\n"));
        let (g, m) = GridFunction::read_csv(buf.as_slice()).unwrap();
        assert_eq!(f, g);
        assert_eq!(m, meta);
    }

    #[test]
    fn coarsen_requires_divisor() {
        let f = GridFunction::sample(0.0, 1.0, 8, |t| t * t).unwrap();
        let c = f.coarsen(4).unwrap();
        assert_eq!(c.n_steps(), 2);
        assert_eq!(c.node(1), &[0.25]);
        assert!(f.coarsen(3).is_err());
    }
}
