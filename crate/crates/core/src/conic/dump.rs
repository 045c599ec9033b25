//! Plain-text dump of a [`LinearSdp`] for debugging.
//!
//! ```text
//! cachecast-sdp 1
//! blocks <M>
//! dims <n_1> ... <n_M>
//! constant <c>
//! objective <m>            (once per block, followed by n_m matrix rows)
//! constraints <J>
//! constraint <j> <>=|<=> <rhs> terms <T>
//! block <m>                (T times, each followed by n_m matrix rows)
//! end
//! ```
//!
//! A matrix row holds `n` complex entries written as `re im` pairs separated
//! by single spaces. Numbers use the shortest round-trip representation.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{Constraint, LinearSdp, Sense};
use crate::error::{Error, Result};

fn write_matrix(out: &mut String, a: &DMatrix<Complex64>) {
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols())
            .map(|j| format!("{:e} {:e}", a[(i, j)].re, a[(i, j)].im))
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

pub fn write_dump(p: &LinearSdp) -> String {
    let mut s = String::from("cachecast-sdp 1\n");
    let dims: Vec<String> = p.block_dims.iter().map(usize::to_string).collect();
    let _ = writeln!(s, "blocks {}", p.block_dims.len());
    let _ = writeln!(s, "dims {}", dims.join(" "));
    let _ = writeln!(s, "constant {:e}", p.constant);
    for (m, a) in p.objective.iter().enumerate() {
        let _ = writeln!(s, "objective {m}");
        write_matrix(&mut s, a);
    }
    let _ = writeln!(s, "constraints {}", p.constraints.len());
    for (j, c) in p.constraints.iter().enumerate() {
        let sense = match c.sense {
            Sense::Geq => ">=",
            Sense::Leq => "<=",
        };
        let _ = writeln!(s, "constraint {j} {sense} {:e} terms {}", c.rhs, c.coeffs.len());
        for (m, b) in &c.coeffs {
            let _ = writeln!(s, "block {m}");
            write_matrix(&mut s, b);
        }
    }
    s.push_str("end\n");
    s
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        self.it
            .next()
            .map(|(i, l)| (i + 1, l.trim()))
            .ok_or_else(|| Error::Parse("unexpected end of dump".into()))
    }

    fn keyword(&mut self, kw: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, line) = self.next()?;
        let mut toks = line.split_whitespace();
        if toks.next() != Some(kw) {
            return Err(Error::Parse(format!("line {n}: expected `{kw}`")));
        }
        Ok((n, toks.collect()))
    }

    fn matrix(&mut self, order: usize) -> Result<DMatrix<Complex64>> {
        let mut a = DMatrix::from_element(order, order, Complex64::new(0.0, 0.0));
        for i in 0..order {
            let (n, line) = self.next()?;
            let v: Vec<f64> = line.split_whitespace().map(|t| num(n, t)).collect::<Result<_>>()?;
            if v.len() != 2 * order {
                return Err(Error::Parse(format!("line {n}: expected {} numbers", 2 * order)));
            }
            for j in 0..order {
                a[(i, j)] = Complex64::new(v[2 * j], v[2 * j + 1]);
            }
        }
        Ok(a)
    }
}

fn num<T: std::str::FromStr>(line: usize, t: &str) -> Result<T> {
    t.parse().map_err(|_| Error::Parse(format!("line {line}: bad number `{t}`")))
}

fn one<'a>(n: usize, toks: &[&'a str]) -> Result<&'a str> {
    match toks {
        [t] => Ok(t),
        _ => Err(Error::Parse(format!("line {n}: expected one value"))),
    }
}

pub fn parse_dump(text: &str) -> Result<LinearSdp> {
    let mut l = Lines {
        it: text.lines().enumerate(),
    };
    let (n, v) = l.keyword("cachecast-sdp")?;
    if one(n, &v)? != "1" {
        return Err(Error::Parse("unsupported dump version".into()));
    }
    let (n, v) = l.keyword("blocks")?;
    let nb: usize = num(n, one(n, &v)?)?;
    let (n, v) = l.keyword("dims")?;
    let block_dims: Vec<usize> = v.iter().map(|t| num(n, t)).collect::<Result<_>>()?;
    if block_dims.len() != nb {
        return Err(Error::Parse(format!("line {n}: expected {nb} dims")));
    }
    let (n, v) = l.keyword("constant")?;
    let constant = num(n, one(n, &v)?)?;
    let mut objective = Vec::with_capacity(nb);
    for (m, &order) in block_dims.iter().enumerate() {
        let (n, v) = l.keyword("objective")?;
        if num::<usize>(n, one(n, &v)?)? != m {
            return Err(Error::Parse(format!("line {n}: objective blocks out of order")));
        }
        objective.push(l.matrix(order)?);
    }
    let (n, v) = l.keyword("constraints")?;
    let nc: usize = num(n, one(n, &v)?)?;
    let mut constraints = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (n, v) = l.keyword("constraint")?;
        let [_, sense, rhs, "terms", terms] = v[..] else {
            return Err(Error::Parse(format!("line {n}: malformed constraint header")));
        };
        let sense = match sense {
            ">=" => Sense::Geq,
            "<=" => Sense::Leq,
            s => return Err(Error::Parse(format!("line {n}: unknown sense `{s}`"))),
        };
        let rhs = num(n, rhs)?;
        let mut coeffs = Vec::new();
        for _ in 0..num::<usize>(n, terms)? {
            let (n, v) = l.keyword("block")?;
            let m: usize = num(n, one(n, &v)?)?;
            let order = *block_dims
                .get(m)
                .ok_or_else(|| Error::Parse(format!("line {n}: block {m} out of range")))?;
            coeffs.push((m, l.matrix(order)?));
        }
        constraints.push(Constraint { coeffs, sense, rhs });
    }
    l.keyword("end")?;
    Ok(LinearSdp {
        block_dims,
        objective,
        constant,
        constraints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.1, -1e-13),
                Complex64::new(0.1, 1e-13),
                Complex64::new(2.5, 0.0),
            ],
        );
        let p = LinearSdp {
            block_dims: vec![2, 1],
            objective: vec![a.clone(), DMatrix::from_element(1, 1, Complex64::new(3.0, 0.0))],
            constant: 0.25,
            constraints: vec![Constraint {
                coeffs: vec![(0, a), (1, DMatrix::from_element(1, 1, Complex64::new(-1.0, 0.0)))],
                sense: Sense::Leq,
                rhs: 6.3e-14,
            }],
        };
        let text = write_dump(&p);
        assert!(text.starts_with("cachecast-sdp 1\nblocks 2\ndims 2 1\n"));
        assert_eq!(parse_dump(&text).unwrap(), p);
    }

    #[test]
    fn truncated_dump_fails() {
        assert!(parse_dump("cachecast-sdp 1\nblocks 1\n").is_err());
        assert!(parse_dump("hello").is_err());
    }
}
