//! Plain-text formats.
//!
//! Points: one point per line, comma-separated decimals, optionally preceded
//! by a header line (any first line that does not parse as numbers).
//! Labels: one integer per line, `-1` for an outlier.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::scalar::Real;

fn io_err(e: std::io::Error) -> Error {
    Error::Format(e.to_string())
}

fn parse_row<T: Real>(line: &str) -> Option<Vec<T>> {
    line.split(',')
        .map(|f| f.trim().parse::<f64>().ok().map(T::cast))
        .collect()
}

pub fn read_points<T: Real, R: BufRead>(reader: R) -> Result<PointCloud<T>> {
    let mut data = Vec::new();
    let mut dim = None;
    let mut first = true;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = match parse_row::<T>(line) {
            Some(r) => r,
            None if first => {
                first = false;
                continue;
            }
            None => return Err(Error::Format(format!("line {}: not a row of numbers", lineno + 1))),
        };
        first = false;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Error::Format(format!(
                    "line {}: expected {d} coordinates, found {}",
                    lineno + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        data.extend(row);
    }
    PointCloud::new(data, dim.ok_or(Error::EmptyInput)?)
}

pub fn write_points<T: Real, W: Write>(mut writer: W, cloud: &PointCloud<T>, header: bool) -> Result<()> {
    if header {
        let names: Vec<String> = (1..=cloud.dim()).map(|i| format!("x{i}")).collect();
        writeln!(writer, "{}", names.join(",")).map_err(io_err)?;
    }
    for p in cloud.points() {
        let fields: Vec<String> = p.iter().map(|v| format!("{}", v.to_f64())).collect();
        writeln!(writer, "{}", fields.join(",")).map_err(io_err)?;
    }
    Ok(())
}

pub fn read_labels<R: BufRead>(reader: R) -> Result<Vec<i64>> {
    let mut labels = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: i64 = line
            .parse()
            .map_err(|_| Error::Format(format!("line {}: '{line}' is not an integer label", lineno + 1)))?;
        if v < -1 {
            return Err(Error::Format(format!("line {}: label {v} is below -1", lineno + 1)));
        }
        labels.push(v);
    }
    Ok(labels)
}

pub fn write_labels<W: Write, I: IntoIterator<Item = i64>>(mut writer: W, labels: I) -> Result<()> {
    for l in labels {
        writeln!(writer, "{l}").map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_round_trip_with_header() {
        let pc = PointCloud::from_rows(&[[1.5, -2.0], [0.1, 3.25]]).unwrap();
        let mut buf = Vec::new();
        write_points(&mut buf, &pc, true).unwrap();
        assert!(buf.starts_with(b"x1,x2\n"));
        let back: PointCloud<f64> = read_points(buf.as_slice()).unwrap();
        assert_eq!(back, pc);
    }

    #[test]
    fn headerless_and_errors() {
        let pc: PointCloud<f64> = read_points("1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!((pc.len(), pc.dim()), (2, 2));
        assert!(read_points::<f64, _>("1,2\n3\n".as_bytes()).is_err());
        assert!(read_points::<f64, _>("1,2\nx,y\n".as_bytes()).is_err());
        assert!(read_points::<f64, _>("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn labels_round_trip() {
        let mut buf = Vec::new();
        write_labels(&mut buf, [0, 1, -1]).unwrap();
        assert_eq!(read_labels(buf.as_slice()).unwrap(), vec![0, 1, -1]);
        assert!(read_labels("0\n-2\n".as_bytes()).is_err());
        assert!(read_labels("zero\n".as_bytes()).is_err());
    }
}
