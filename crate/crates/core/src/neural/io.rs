//! Plain-text weight format.
//!
//! ```text
//! 2 50 50 2          layer sizes
//! clamp 0.4 1.4      or `clamp none`
//!
//! w w w ...          layer 0: one line per output row (row-major weights)
//! b b ...            layer 0 biases
//!
//! ...                further layers, one block each
//! ```

use std::fmt::Write as _;

use super::Mlp;
use crate::error::{Error, Result};

pub fn write_weights(net: &Mlp) -> String {
    let mut s = String::new();
    let sizes: Vec<String> = net.sizes().iter().map(|n| n.to_string()).collect();
    writeln!(s, "{}", sizes.join(" ")).unwrap();
    match net.clamp() {
        Some((lo, hi)) => writeln!(s, "clamp {lo} {hi}").unwrap(),
        None => writeln!(s, "clamp none").unwrap(),
    }
    for k in 0..net.n_layers() {
        let (wr, br) = net.layer_ranges(k);
        let nin = net.sizes()[k];
        s.push('\n');
        for row in net.params()[wr].chunks(nin) {
            writeln!(s, "{}", join(row)).unwrap();
        }
        writeln!(s, "{}", join(&net.params()[br])).unwrap();
    }
    s
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn read_weights(text: &str) -> Result<Mlp> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty weight file".into()))?;
    let sizes = header
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|e| Error::Parse(format!("layer size {t:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let clamp_line = lines
        .next()
        .ok_or_else(|| Error::Parse("missing clamp line".into()))?;
    let toks: Vec<&str> = clamp_line.split_whitespace().collect();
    let clamp = match toks.as_slice() {
        ["clamp", "none"] => None,
        ["clamp", lo, hi] => Some((parse(lo)?, parse(hi)?)),
        _ => return Err(Error::Parse(format!("bad clamp line {clamp_line:?}"))),
    };
    let mut params = Vec::new();
    let mut expected = 0;
    for w in sizes.windows(2) {
        let (nin, nout) = (w[0], w[1]);
        for _ in 0..nout + 1 {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated weight block".into()))?;
            let row = line
                .split_whitespace()
                .map(parse)
                .collect::<Result<Vec<_>>>()?;
            params.extend(row);
        }
        expected += nin * nout + nout;
        if params.len() != expected {
            return Err(Error::Parse(format!(
                "layer {nin}->{nout} has the wrong number of values"
            )));
        }
    }
    Mlp::from_parts(&sizes, params, clamp)
}

fn parse(t: &str) -> Result<f64> {
    t.parse::<f64>()
        .map_err(|e| Error::Parse(format!("number {t:?}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let net = Mlp::random(&[2, 5, 3, 2], 4).unwrap().with_clamp(0.4, 1.4);
        let back = read_weights(&write_weights(&net)).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn truncated_file_is_an_error() {
        let net = Mlp::random(&[2, 3, 1], 1).unwrap();
        let text = write_weights(&net);
        let cut: String = text.lines().take(4).collect::<Vec<_>>().join("\n");
        assert!(read_weights(&cut).is_err());
    }
}
