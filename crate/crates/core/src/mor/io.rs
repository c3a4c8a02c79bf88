//! Plain-text container for reduced models.
//!
//! ```text
//! wqmor-reduced v1
//! method SBPOD
//! dt 20
//! m 240            (or "-")
//! energy 0.9999
//! stabilized_by priori
//! rho 0.97
//! augmented false
//! matrix A 28 28
//! <28 lines of 28 values>
//! matrix B 28 1
//! ...
//! end
//! ```
//!
//! Matrices appear in the order A, B, C, D, T, S and optionally DeltaA.
//! Values are written with round-trip precision.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use super::{Method, ReducedModel, Stabilization};
use crate::error::{Error, Result};

pub const MAGIC: &str = "wqmor-reduced v1";

fn write_matrix<W: Write>(w: &mut W, name: &str, m: &DMatrix<f64>) -> std::io::Result<()> {
    writeln!(w, "matrix {name} {} {}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

pub fn write_reduced<W: Write>(rm: &ReducedModel, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "method {}", rm.method)?;
    writeln!(w, "dt {:?}", rm.dt)?;
    match rm.m {
        Some(m) => writeln!(w, "m {m}")?,
        None => writeln!(w, "m -")?,
    }
    writeln!(w, "energy {:?}", rm.energy)?;
    let stab = match rm.stabilized_by {
        Stabilization::None => "none",
        Stabilization::Posterior => "posterior",
        Stabilization::Priori => "priori",
    };
    writeln!(w, "stabilized_by {stab}")?;
    writeln!(w, "rho {:?}", rm.rho)?;
    writeln!(w, "augmented {}", rm.augmented)?;
    for (name, m) in [("A", &rm.a), ("B", &rm.b), ("C", &rm.c), ("D", &rm.d), ("T", &rm.t), ("S", &rm.s)] {
        write_matrix(&mut w, name, m)?;
    }
    if let Some(da) = &rm.delta_a {
        write_matrix(&mut w, "DeltaA", da)?;
    }
    writeln!(w, "end")
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String> {
        loop {
            self.line += 1;
            match self.inner.next() {
                Some(Ok(l)) if l.trim().is_empty() => continue,
                Some(Ok(l)) => return Ok(l),
                Some(Err(e)) => return Err(e.into()),
                None => return Err(self.err("unexpected end of file")),
            }
        }
    }
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Syntax {
            line: self.line,
            column: 1,
            message: msg.into(),
        }
    }
    fn field(&mut self, key: &str) -> Result<String> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim().to_string()),
            _ => Err(self.err(format!("expected '{key} <value>', found '{l}'"))),
        }
    }
    fn num(&mut self, key: &str) -> Result<f64> {
        let v = self.field(key)?;
        v.parse().map_err(|_| self.err(format!("'{v}' is not a number")))
    }
}

pub fn read_reduced<R: BufRead>(r: R) -> Result<ReducedModel> {
    let mut ls = Lines { inner: r.lines(), line: 0 };
    let magic = ls.next()?;
    if magic.trim() != MAGIC {
        return Err(ls.err(format!("expected '{MAGIC}' header")));
    }
    let method: Method = ls.field("method")?.parse()?;
    let dt = ls.num("dt")?;
    let m = match ls.field("m")?.as_str() {
        "-" => None,
        s => Some(s.parse().map_err(|_| ls.err(format!("bad snapshot length '{s}'")))?),
    };
    let energy = ls.num("energy")?;
    let stabilized_by = match ls.field("stabilized_by")?.as_str() {
        "none" => Stabilization::None,
        "posterior" => Stabilization::Posterior,
        "priori" => Stabilization::Priori,
        s => return Err(ls.err(format!("unknown stabilization '{s}'"))),
    };
    let rho = ls.num("rho")?;
    let augmented = match ls.field("augmented")?.as_str() {
        "true" => true,
        "false" => false,
        s => return Err(ls.err(format!("expected true or false, found '{s}'"))),
    };
    let mut mats: Vec<(String, DMatrix<f64>)> = Vec::new();
    loop {
        let l = ls.next()?;
        if l.trim() == "end" {
            break;
        }
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "matrix" {
            return Err(ls.err(format!("expected 'matrix <name> <rows> <cols>', found '{l}'")));
        }
        let rows: usize = parts[2].parse().map_err(|_| ls.err("bad row count"))?;
        let cols: usize = parts[3].parse().map_err(|_| ls.err("bad column count"))?;
        let mut mtx = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            let row = ls.next()?;
            let vals: Vec<f64> = row
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| ls.err("malformed matrix row"))?;
            if vals.len() != cols {
                return Err(ls.err(format!("row has {} values, expected {cols}", vals.len())));
            }
            for (j, v) in vals.into_iter().enumerate() {
                mtx[(i, j)] = v;
            }
        }
        mats.push((parts[1].to_string(), mtx));
    }
    let mut take = |name: &str| -> Option<DMatrix<f64>> {
        let pos = mats.iter().position(|(n, _)| n == name)?;
        Some(mats.swap_remove(pos).1)
    };
    let missing = |name: &str| Error::Config(format!("reduced-model file lacks matrix {name}"));
    let rm = ReducedModel {
        a: take("A").ok_or_else(|| missing("A"))?,
        b: take("B").ok_or_else(|| missing("B"))?,
        c: take("C").ok_or_else(|| missing("C"))?,
        d: take("D").ok_or_else(|| missing("D"))?,
        t: take("T").ok_or_else(|| missing("T"))?,
        s: take("S").ok_or_else(|| missing("S"))?,
        delta_a: take("DeltaA"),
        dt,
        method,
        m,
        energy,
        stabilized_by,
        rho,
        augmented,
    };
    let n_r = rm.a.nrows();
    let ok = rm.a.ncols() == n_r
        && rm.b.nrows() == n_r
        && rm.c.ncols() == n_r
        && rm.d.shape() == (rm.c.nrows(), rm.b.ncols())
        && rm.t.ncols() == n_r
        && rm.s.nrows() == n_r
        && rm.s.ncols() == rm.t.nrows()
        && rm.delta_a.as_ref().is_none_or(|d| d.shape() == (n_r, n_r));
    if !ok {
        return Err(Error::Dimension("reduced-model matrices have inconsistent shapes".into()));
    }
    Ok(rm)
}
