//! Parameter grids written as `name=start:stop:count,...`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

/// Evenly spaced inclusive values; `count = 1` gives `start`.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count).map(|k| start + (stop - start) * k as f64 / (count - 1) as f64).collect(),
    }
}

pub fn parse_grid(spec: &str) -> Result<Vec<Axis>> {
    let mut axes: Vec<Axis> = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, range) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("grid axis `{part}` is not name=start:stop:count")))?;
        let name = name.trim();
        let bits: Vec<&str> = range.split(':').map(str::trim).collect();
        let bad = || Error::Config(format!("grid axis `{part}` is not name=start:stop:count"));
        let values = match bits.as_slice() {
            [v] => vec![v.parse().map_err(|_| bad())?],
            [a, b, n] => {
                let n: usize = n.parse().map_err(|_| bad())?;
                if n == 0 {
                    return Err(Error::Config(format!("grid axis `{name}` has zero points")));
                }
                linspace(a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?, n)
            }
            _ => return Err(bad()),
        };
        if axes.iter().any(|a| a.name == name) {
            return Err(Error::Config(format!("grid axis `{name}` given twice")));
        }
        axes.push(Axis { name: name.to_string(), values });
    }
    if axes.is_empty() {
        return Err(Error::Config("empty grid".into()));
    }
    Ok(axes)
}

/// Cartesian product in row-major order (first axis slowest).
pub fn grid_points(axes: &[Axis]) -> Vec<Vec<(String, f64)>> {
    let mut out: Vec<Vec<(String, f64)>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.values.len());
        for prefix in &out {
            for v in &axis.values {
                let mut p = prefix.clone();
                p.push((axis.name.clone(), *v));
                next.push(p);
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_orders() {
        let axes = parse_grid("alpha=0:3:4, T=0.5").unwrap();
        assert_eq!(axes[0].values, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(axes[1].values, vec![0.5]);
        let pts = grid_points(&parse_grid("a=0:1:2,b=5:6:2").unwrap());
        let flat: Vec<(f64, f64)> = pts.iter().map(|p| (p[0].1, p[1].1)).collect();
        assert_eq!(flat, vec![(0.0, 5.0), (0.0, 6.0), (1.0, 5.0), (1.0, 6.0)]);
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_grid("alpha").is_err());
        assert!(parse_grid("alpha=0:1").is_err());
        assert!(parse_grid("alpha=0:1:x").is_err());
        assert!(parse_grid("a=0:1:0").is_err());
        assert!(parse_grid("a=1,a=2").is_err());
        assert!(parse_grid("").is_err());
    }
}
