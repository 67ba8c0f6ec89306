//! Text band files.
//!
//! Radial mode: a `radial` header, then rows `r,eps` (an optional third
//! column carries the angular deviation). Angular mode: a header
//! `angular nr=<Nr> quad=gauss10`, then per radius a block of 100 rows
//! `r,mu_node,phi_node,eps` ordered mu-major over the fixed Gauss nodes.
//! Lines starting with `#` and blank lines are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::average::{gauss10_angular_nodes, BandTable, GridSampler};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum BandFile {
    Radial(BandTable),
    Angular(GridSampler),
}

pub fn load_band_file(path: &Path) -> Result<BandFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_band_text(&text, &path.display().to_string())
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_row(path: &str, line: usize, s: &str, min: usize, max: usize) -> Result<Vec<f64>> {
    let vals = s
        .split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .map_err(|_| parse_err(path, line, format!("cannot parse `{t}` as a number")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if vals.len() < min || vals.len() > max {
        return Err(parse_err(
            path,
            line,
            format!("expected {min}..={max} columns, found {}", vals.len()),
        ));
    }
    if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
        return Err(parse_err(path, line, format!("non-finite value {v}")));
    }
    Ok(vals)
}

pub(crate) fn parse_band_text(text: &str, path: &str) -> Result<BandFile> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 0, "empty band file"))?;
    let mut words = header.split_whitespace();
    match words.next() {
        Some("radial") => {
            let mut r = Vec::new();
            let mut eps = Vec::new();
            let mut dev = Vec::new();
            for (ln, l) in lines {
                let v = parse_row(path, ln, l, 2, 3)?;
                if let Some(&prev) = r.last() {
                    if v[0] <= prev {
                        return Err(parse_err(
                            path,
                            ln,
                            format!("r = {} does not increase (previous {prev})", v[0]),
                        ));
                    }
                }
                if v[1] < 0.0 {
                    return Err(parse_err(path, ln, "negative energy"));
                }
                r.push(v[0]);
                eps.push(v[1]);
                dev.push(v.get(2).copied().unwrap_or(0.0));
            }
            if r.is_empty() {
                return Err(parse_err(path, hline, "radial table has no rows"));
            }
            Ok(BandFile::Radial(BandTable::new(r, eps, dev)?))
        }
        Some("angular") => {
            let mut nr = None;
            for w in words {
                match w.split_once('=') {
                    Some(("nr", v)) => {
                        nr = Some(v.parse::<usize>().map_err(|_| {
                            parse_err(path, hline, format!("bad nr value `{v}`"))
                        })?)
                    }
                    Some(("quad", "gauss10")) => {}
                    Some(("quad", q)) => {
                        return Err(parse_err(path, hline, format!("unsupported quadrature `{q}`")))
                    }
                    _ => return Err(parse_err(path, hline, format!("unknown header field `{w}`"))),
                }
            }
            let nr = nr.ok_or_else(|| parse_err(path, hline, "missing nr=<count>"))?;
            let nodes = gauss10_angular_nodes();
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);

            let mut r_values = Vec::with_capacity(nr);
            let mut values = Vec::with_capacity(nr);
            let mut last_line = hline;
            for k in 0..nr {
                let mut block = [[0.0; 10]; 10];
                let mut r_block = None;
                for m in 0..10 {
                    for n in 0..10 {
                        let (ln, l) = lines.next().ok_or_else(|| {
                            parse_err(
                                path,
                                last_line,
                                format!("file ends inside block {k} (expected {nr} blocks)"),
                            )
                        })?;
                        last_line = ln;
                        let v = parse_row(path, ln, l, 4, 4)?;
                        match r_block {
                            None => {
                                if let Some(&prev) = r_values.last() {
                                    if v[0] <= prev {
                                        return Err(parse_err(
                                            path,
                                            ln,
                                            format!("r = {} does not increase (previous {prev})", v[0]),
                                        ));
                                    }
                                }
                                r_block = Some(v[0]);
                            }
                            Some(rb) if v[0] != rb => {
                                return Err(parse_err(path, ln, "r changes inside a block"))
                            }
                            _ => {}
                        }
                        if !close(v[1], nodes.mu[m]) || !close(v[2], nodes.phi[n]) {
                            return Err(parse_err(
                                path,
                                ln,
                                format!("angular node ({}, {}) is not gauss10 node ({m}, {n})", v[1], v[2]),
                            ));
                        }
                        block[m][n] = v[3];
                    }
                }
                r_values.push(r_block.unwrap());
                values.push(block);
            }
            if let Some((ln, _)) = lines.next() {
                return Err(parse_err(path, ln, format!("extra rows after {nr} blocks")));
            }
            Ok(BandFile::Angular(GridSampler { r_values, values }))
        }
        _ => Err(parse_err(
            path,
            hline,
            format!("unknown header `{header}` (expected `radial` or `angular`)"),
        )),
    }
}

pub fn write_radial_file(path: &Path, table: &BandTable) -> Result<()> {
    let mut s = String::from("# r,eps,deviation\nradial\n");
    for i in 0..table.len() {
        let _ = writeln!(
            s,
            "{:.16e},{:.16e},{:.16e}",
            table.r_nodes[i], table.eps_values[i], table.deviation[i]
        );
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn write_angular_file(path: &Path, grid: &GridSampler) -> Result<()> {
    let nodes = gauss10_angular_nodes();
    let mut s = format!("# r,mu_node,phi_node,eps\nangular nr={} quad=gauss10\n", grid.r_values.len());
    for (r, block) in grid.r_values.iter().zip(&grid.values) {
        for m in 0..10 {
            for n in 0..10 {
                let _ = writeln!(
                    s,
                    "{:.16e},{:.16e},{:.16e},{:.16e}",
                    r, nodes.mu[m], nodes.phi[n], block[m][n]
                );
            }
        }
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::{spherical_average, FullBandSampler, SyntheticBand};

    #[test]
    fn radial_three_rows() {
        let f = parse_band_text("# demo\nradial\n0.5,0.5\n1.5,1.4\n2.5,2.3\n", "t").unwrap();
        match f {
            BandFile::Radial(t) => assert_eq!(t.len(), 3),
            _ => panic!("expected radial"),
        }
    }

    #[test]
    fn decreasing_r_names_line() {
        let err = parse_band_text("radial\n0.5,0.5\n1.5,1.4\n1.0,2.3\n", "t").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn nan_rejected_with_line() {
        let err = parse_band_text("radial\n0.5,NaN\n", "t").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn malformed_row_rejected() {
        let err = parse_band_text("radial\n0.5;0.5\n", "t").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn angular_round_trip_reproduces_kane() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kane.band");
        let s = SyntheticBand::Kane { alpha: 0.012925 };
        let r: Vec<f64> = (0..8).map(|i| 0.225 + 0.45 * i as f64).collect();
        let grid = GridSampler::from_sampler(&s, &r).unwrap();
        write_angular_file(&path, &grid).unwrap();
        let BandFile::Angular(back) = load_band_file(&path).unwrap() else {
            panic!("expected angular")
        };
        for &rk in &r {
            let avg = spherical_average(&back, rk).unwrap();
            let exact = s.eps(rk, 0.3, 0.3).unwrap();
            assert!(((avg - exact) / exact).abs() <= 1e-12);
        }
    }

    #[test]
    fn angular_truncated_block() {
        let text = "angular nr=1 quad=gauss10\n0.5,0.1,0.1,1.0\n";
        assert!(matches!(
            parse_band_text(text, "t"),
            Err(Error::Parse { .. })
        ));
    }
}
