use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::coord::GeoCoord;
use super::encoder::LocationEncoder;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Static embeddings keyed by coordinate (quantized to 1e-5 degree).
///
/// Stored as CSV with header `lat,lon,e_0,...,e_{d-1}`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<(i64, i64), (GeoCoord, Vec<f64>)>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            entries: BTreeMap::new(),
        }
    }

    /// Embeds every coordinate with `enc`.
    pub fn from_encoder<F: Scalar>(enc: &LocationEncoder<F>, coords: &[GeoCoord]) -> Result<Self> {
        let mut t = EmbeddingTable::new(enc.embedding_dim());
        for c in coords {
            let e = enc.encode(c)?.into_iter().map(|v| v.f64()).collect();
            t.insert(*c, e)?;
        }
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, coord: GeoCoord, embedding: Vec<f64>) -> Result<()> {
        coord.validate()?;
        if embedding.len() != self.dim {
            return Err(Error::dim("EmbeddingTable::insert", self.dim, embedding.len()));
        }
        self.entries.insert(coord.quantized(), (coord, embedding));
        Ok(())
    }

    /// `None` when the coordinate is not stored; callers fall back to
    /// encoding it directly.
    pub fn get(&self, coord: &GeoCoord) -> Option<&[f64]> {
        self.entries.get(&coord.quantized()).map(|(_, e)| e.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GeoCoord, &[f64])> {
        self.entries.values().map(|(c, e)| (c, e.as_slice()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let io = |e| Error::io(path, e);
        write!(w, "lat,lon").map_err(io)?;
        for k in 0..self.dim {
            write!(w, ",e_{k}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
        for (c, e) in self.entries.values() {
            write!(w, "{},{}", c.lat, c.lon).map_err(io)?;
            for v in e {
                write!(w, ",{v}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::parse(&name, 1, "missing header"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 3 || cols[0] != "lat" || cols[1] != "lon" {
            return Err(Error::parse(&name, 1, "header must be lat,lon,e_0,..."));
        }
        for (k, c) in cols[2..].iter().enumerate() {
            if *c != format!("e_{k}") {
                return Err(Error::parse(&name, 1, format!("expected column e_{k}, found {c}")));
            }
        }
        let dim = cols.len() - 2;
        let mut table = EmbeddingTable::new(dim);
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != dim + 2 {
                return Err(Error::parse(
                    &name,
                    lineno,
                    format!("expected {} fields, found {}", dim + 2, fields.len()),
                ));
            }
            let nums: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            let nums = nums.map_err(|e| Error::parse(&name, lineno, e))?;
            let coord = GeoCoord::new(nums[0], nums[1]).map_err(|e| Error::parse(&name, lineno, e))?;
            table.insert(coord, nums[2..].to_vec())?;
        }
        Ok(table)
    }
}
