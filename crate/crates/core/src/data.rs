//! Two-sample datasets: experimental rows carry a treatment, observational
//! rows carry the long-term outcome.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sample {
    #[serde(rename = "E")]
    Experimental,
    #[serde(rename = "O")]
    Observational,
}

impl Sample {
    pub fn tag(self) -> &'static str {
        match self {
            Sample::Experimental => "E",
            Sample::Observational => "O",
        }
    }

    fn parse(field: &str) -> Option<Self> {
        match field {
            "E" => Some(Sample::Experimental),
            "O" => Some(Sample::Observational),
            _ => None,
        }
    }
}

/// Rows of `(sample, w, y, s, x)` stored column-wise; `s` and `x` are
/// row-major blocks of width `k` and `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedDataset {
    sample: Vec<Sample>,
    w: Vec<Option<bool>>,
    y: Vec<Option<f64>>,
    s: Vec<f64>,
    x: Vec<f64>,
    k: usize,
    m: usize,
}

/// One row, borrowed.
#[derive(Debug, Clone, Copy)]
pub struct RowRef<'a> {
    pub sample: Sample,
    pub w: Option<bool>,
    pub y: Option<f64>,
    pub s: &'a [f64],
    pub x: &'a [f64],
}

/// Which missingness pattern rows must follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pattern {
    /// E-rows have `w` and no `y`; O-rows the reverse.
    Combined,
    /// Every row has both `w` and `y`; the sample column is ignored.
    Complete,
}

impl CombinedDataset {
    pub fn new(k: usize, m: usize) -> Result<Self> {
        if k == 0 || m == 0 {
            return Err(Error::InvalidConfig(format!(
                "need at least one surrogate and one covariate (k = {k}, m = {m})"
            )));
        }
        Ok(CombinedDataset {
            sample: Vec::new(),
            w: Vec::new(),
            y: Vec::new(),
            s: Vec::new(),
            x: Vec::new(),
            k,
            m,
        })
    }

    pub fn push_experimental(&mut self, w: bool, s: &[f64], x: &[f64]) {
        self.push(Sample::Experimental, Some(w), None, s, x);
    }

    pub fn push_observational(&mut self, y: f64, s: &[f64], x: &[f64]) {
        self.push(Sample::Observational, None, Some(y), s, x);
    }

    fn push(&mut self, sample: Sample, w: Option<bool>, y: Option<f64>, s: &[f64], x: &[f64]) {
        assert_eq!(s.len(), self.k, "surrogate width");
        assert_eq!(x.len(), self.m, "covariate width");
        self.sample.push(sample);
        self.w.push(w);
        self.y.push(y);
        self.s.extend_from_slice(s);
        self.x.extend_from_slice(x);
    }

    pub fn len(&self) -> usize {
        self.sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample.is_empty()
    }

    pub fn surrogate_dim(&self) -> usize {
        self.k
    }

    pub fn covariate_dim(&self) -> usize {
        self.m
    }

    pub fn sample(&self, i: usize) -> Sample {
        self.sample[i]
    }

    pub fn w(&self, i: usize) -> Option<bool> {
        self.w[i]
    }

    pub fn y(&self, i: usize) -> Option<f64> {
        self.y[i]
    }

    pub fn s(&self, i: usize) -> &[f64] {
        &self.s[i * self.k..(i + 1) * self.k]
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.m..(i + 1) * self.m]
    }

    pub fn row(&self, i: usize) -> RowRef<'_> {
        RowRef {
            sample: self.sample[i],
            w: self.w[i],
            y: self.y[i],
            s: self.s(i),
            x: self.x(i),
        }
    }

    /// `[s, x]` concatenated.
    pub fn sx(&self, i: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.k + self.m);
        v.extend_from_slice(self.s(i));
        v.extend_from_slice(self.x(i));
        v
    }

    pub fn is_experimental(&self, i: usize) -> bool {
        self.sample[i] == Sample::Experimental
    }

    pub fn experimental_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_experimental(i)).collect()
    }

    pub fn observational_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_experimental(i)).collect()
    }

    /// True when every observed outcome is 0 or 1.
    pub fn has_binary_outcome(&self) -> bool {
        let mut any = false;
        for y in self.y.iter().flatten() {
            any = true;
            if *y != 0.0 && *y != 1.0 {
                return false;
            }
        }
        any
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["sample".to_string(), "w".to_string(), "y".to_string()];
        h.extend((1..=self.k).map(|j| format!("s{j}")));
        h.extend((1..=self.m).map(|j| format!("x{j}")));
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(self.header())?;
        let mut rec = Vec::with_capacity(3 + self.k + self.m);
        for i in 0..self.len() {
            rec.clear();
            rec.push(self.sample[i].tag().to_string());
            rec.push(self.w[i].map(|w| if w { "1" } else { "0" }.to_string()).unwrap_or_default());
            rec.push(self.y[i].map(|y| y.to_string()).unwrap_or_default());
            rec.extend(self.s(i).iter().map(|v| v.to_string()));
            rec.extend(self.x(i).iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        parse(input, Pattern::Combined)
    }

    /// Reads a file whose rows all carry both `w` and `y`; pair with
    /// [`CombinedDataset::split_evenly`].
    pub fn read_complete_csv<R: Read>(input: R) -> Result<Self> {
        parse(input, Pattern::Complete)
    }

    /// Randomly assigns half the rows to the experimental sample (dropping
    /// `y`) and the rest to the observational sample (dropping `w`).
    pub fn split_evenly(&self, seed: u64) -> Result<Self> {
        for i in 0..self.len() {
            if self.w[i].is_none() || self.y[i].is_none() {
                return Err(Error::Schema {
                    row: i + 1,
                    message: "splitting needs both w and y on every row".into(),
                });
            }
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut is_e = vec![false; self.len()];
        for &i in &order[..self.len().div_ceil(2)] {
            is_e[i] = true;
        }
        let mut out = CombinedDataset::new(self.k, self.m)?;
        for (i, &e) in is_e.iter().enumerate() {
            if e {
                out.push_experimental(self.w[i].unwrap(), self.s(i), self.x(i));
            } else {
                out.push_observational(self.y[i].unwrap(), self.s(i), self.x(i));
            }
        }
        Ok(out)
    }
}

pub fn load_dataset(path: &Path) -> Result<CombinedDataset> {
    CombinedDataset::read_csv(std::fs::File::open(path)?)
}

fn parse<R: Read>(input: R, pattern: Pattern) -> Result<CombinedDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.len() < 5 || names[..3] != ["sample", "w", "y"] {
        return Err(Error::Schema {
            row: 0,
            message: format!("header must start with sample,w,y; got {}", names.join(",")),
        });
    }
    let k = names[3..].iter().take_while(|n| n.starts_with('s')).count();
    let m = names.len() - 3 - k;
    for (j, name) in names[3..3 + k].iter().enumerate() {
        if *name != format!("s{}", j + 1) {
            return Err(Error::Schema { row: 0, message: format!("expected column s{}, found {name}", j + 1) });
        }
    }
    for (j, name) in names[3 + k..].iter().enumerate() {
        if *name != format!("x{}", j + 1) {
            return Err(Error::Schema { row: 0, message: format!("expected column x{}, found {name}", j + 1) });
        }
    }
    let mut data = CombinedDataset::new(k, m).map_err(|_| Error::Schema {
        row: 0,
        message: "need at least one s column and one x column".into(),
    })?;
    let mut s = vec![0.0; k];
    let mut x = vec![0.0; m];
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec?;
        let bad = |message: String| Error::Schema { row, message };
        if rec.len() != names.len() {
            return Err(bad(format!("expected {} fields, found {}", names.len(), rec.len())));
        }
        let field = |j: usize| rec[j].trim();
        let number = |j: usize| -> Result<f64> {
            let v: f64 = field(j)
                .parse()
                .map_err(|_| bad(format!("column {}: `{}` is not a number", names[j], field(j))))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("column {}: non-finite value", names[j])))
            }
        };
        let w = match field(1) {
            "" => None,
            "0" => Some(false),
            "1" => Some(true),
            other => return Err(bad(format!("column w: `{other}` is not binary"))),
        };
        let y = if field(2).is_empty() { None } else { Some(number(2)?) };
        for j in 0..k {
            s[j] = number(3 + j)?;
        }
        for j in 0..m {
            x[j] = number(3 + k + j)?;
        }
        match pattern {
            Pattern::Combined => {
                let sample = Sample::parse(field(0))
                    .ok_or_else(|| bad(format!("column sample: `{}` is not E or O", field(0))))?;
                match (sample, w, y) {
                    (Sample::Experimental, Some(w), None) => data.push_experimental(w, &s, &x),
                    (Sample::Observational, None, Some(y)) => data.push_observational(y, &s, &x),
                    (Sample::Experimental, _, Some(_)) => return Err(bad("E-row has y present".into())),
                    (Sample::Experimental, None, _) => return Err(bad("E-row is missing w".into())),
                    (Sample::Observational, Some(_), _) => return Err(bad("O-row has w present".into())),
                    (Sample::Observational, None, None) => return Err(bad("O-row is missing y".into())),
                }
            }
            Pattern::Complete => match (w, y) {
                (Some(w), Some(y)) => data.push(Sample::Experimental, Some(w), Some(y), &s, &x),
                _ => return Err(bad("row needs both w and y".into())),
            },
        }
    }
    Ok(data)
}
