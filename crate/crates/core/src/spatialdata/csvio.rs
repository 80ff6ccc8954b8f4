//! Station/record CSV: `station_id,lat,lon,day,f_0,...,f_{m-1},target`.
//! Empty cells are missing values.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::types::{DailyRecord, Dataset, Station};
use crate::error::{Error, Result};
use crate::geoenc::GeoCoord;

pub fn load_station_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::parse(&name, 1, "missing header"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 5 || cols[..4] != ["station_id", "lat", "lon", "day"] || cols[cols.len() - 1] != "target" {
        return Err(Error::parse(&name, 1, "header must be station_id,lat,lon,day,f_0,...,target"));
    }
    let m = cols.len() - 5;
    for (k, c) in cols[4..4 + m].iter().enumerate() {
        if *c != format!("f_{k}") {
            return Err(Error::parse(&name, 1, format!("expected column f_{k}, found {c}")));
        }
    }

    let mut stations: Vec<Station> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    let mut seen: HashMap<(usize, u32), usize> = HashMap::new();
    let mut records = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::parse(&name, lineno, msg);
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(err(format!("expected {} fields, found {}", cols.len(), fields.len())));
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(err("empty station_id".into()));
        }
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|e| err(format!("{what}: {e}")));
        let coord = GeoCoord::new(num(fields[1], "lat")?, num(fields[2], "lon")?).map_err(|e| err(e.to_string()))?;
        let day: u32 = fields[3].parse().map_err(|e| err(format!("day: {e}")))?;
        let station = match by_id.get(id) {
            Some(&s) => {
                if stations[s].coord != coord {
                    return Err(err(format!("station '{id}' listed with two different coordinates")));
                }
                s
            }
            None => {
                stations.push(Station {
                    id: id.to_string(),
                    coord,
                });
                by_id.insert(id.to_string(), stations.len() - 1);
                stations.len() - 1
            }
        };
        if let Some(first) = seen.insert((station, day), lineno) {
            return Err(err(format!("duplicate record for station '{id}' day {day} (first on line {first})")));
        }
        let opt = |s: &str, what: String| -> Result<Option<f64>> {
            if s.is_empty() {
                return Ok(None);
            }
            let v = s.parse::<f64>().map_err(|e| err(format!("{what}: {e}")))?;
            if !v.is_finite() {
                return Err(err(format!("{what}: non-finite value")));
            }
            Ok(Some(v))
        };
        let features = (0..m)
            .map(|k| opt(fields[4 + k], format!("f_{k}")))
            .collect::<Result<Vec<_>>>()?;
        let target = opt(fields[4 + m], "target".into())?;
        records.push(DailyRecord {
            station,
            day,
            features,
            target,
        });
    }
    Dataset::new(stations, records, m)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_station_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| Error::io(path, e);
    write!(w, "station_id,lat,lon,day").map_err(io)?;
    for k in 0..ds.n_features {
        write!(w, ",f_{k}").map_err(io)?;
    }
    writeln!(w, ",target").map_err(io)?;
    for r in &ds.records {
        let s = &ds.stations[r.station];
        write!(w, "{},{},{},{}", s.id, s.coord.lat, s.coord.lon, r.day).map_err(io)?;
        for v in &r.features {
            write!(w, ",{}", cell(*v)).map_err(io)?;
        }
        writeln!(w, ",{}", cell(r.target)).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, text).unwrap();
        (dir, p)
    }

    #[test]
    fn minimal_file() {
        let (_d, p) = write("station_id,lat,lon,day,f_0,target\nA,40,-105,0,1.5,12\n");
        let ds = load_station_csv(&p).unwrap();
        assert_eq!(ds.records.len(), 1);
        assert_eq!(ds.n_features, 1);
        assert_eq!(ds.records[0].target, Some(12.0));
    }

    #[test]
    fn empty_cells_are_missing() {
        let (_d, p) = write("station_id,lat,lon,day,f_0,f_1,target\nA,40,-105,0,,2,\n");
        let ds = load_station_csv(&p).unwrap();
        assert_eq!(ds.records[0].features, vec![None, Some(2.0)]);
        assert_eq!(ds.records[0].target, None);
        assert!(ds.samples().is_empty());
    }

    #[test]
    fn duplicate_station_day_is_an_error() {
        let (_d, p) = write("station_id,lat,lon,day,f_0,target\nA,40,-105,0,1,1\nA,40,-105,0,2,2\n");
        match load_station_csv(&p) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("duplicate"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_and_invalid_rows() {
        let (_d, p) = write("station_id,lat,lon,day,f_0,target\nA,40,-105,0,1\n");
        assert!(matches!(load_station_csv(&p), Err(Error::Parse { line: 2, .. })));
        let (_d, p) = write("station_id,lat,lon,day,f_0,target\nA,40,-105,0,1,1\nB,99,-105,0,1,1\n");
        assert!(matches!(load_station_csv(&p), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn write_then_load_is_identity() {
        let text = "station_id,lat,lon,day,f_0,f_1,target\nA,40.25,-105.5,0,1.5,,3\nA,40.25,-105.5,1,0.1,2,\nB,33,-90,0,,,7.125\n";
        let (dir, p) = write(text);
        let ds = load_station_csv(&p).unwrap();
        let q = dir.path().join("e.csv");
        write_station_csv(&ds, &q).unwrap();
        assert_eq!(load_station_csv(&q).unwrap(), ds);
        assert_eq!(fs::read_to_string(&q).unwrap(), text);
    }
}
