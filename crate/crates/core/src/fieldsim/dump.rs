//! `GKFLAB-FIELD v1` dumps: one header line, then each component as a block of
//! node values in row-major order. The text form writes one grid row (last
//! axis) per line with 6 decimals; the binary form writes little-endian `f64`s.

use std::io::{BufRead, Write};

use super::field::{FieldSample, Support};
use super::grid::GridSpec;
use crate::error::{GkfError, Result};

pub const FIELD_MAGIC: &str = "GKFLAB-FIELD v1";

fn io_err(e: std::io::Error) -> GkfError {
    GkfError::Parse(e.to_string())
}

pub fn field_header(grid: &GridSpec, k: usize, seed: u64) -> String {
    let dims: Vec<String> = grid.dims.iter().map(|d| d.to_string()).collect();
    format!(
        "{FIELD_MAGIC} dims={} spacing={} k={k} seed={seed}",
        dims.join(","),
        grid.spacing
    )
}

pub fn write_field<W: Write>(sample: &FieldSample, out: &mut W, binary: bool) -> Result<()> {
    write_field_with_ell(sample, None, out, binary)
}

/// As [`write_field`], appending `ell=<ℓ>` to the header when given.
pub fn write_field_with_ell<W: Write>(
    sample: &FieldSample,
    ell: Option<f64>,
    out: &mut W,
    binary: bool,
) -> Result<()> {
    let Support::Grid(grid) = &sample.support else {
        return Err(GkfError::Unsupported(
            "field dumps are defined for grid samples only".into(),
        ));
    };
    let mut header = field_header(grid, sample.k, sample.seed);
    if let Some(ell) = ell {
        header.push_str(&format!(" ell={ell}"));
    }
    writeln!(out, "{header}").map_err(io_err)?;
    let row = *grid.shape().last().unwrap();
    for layer in &sample.values {
        if binary {
            for v in layer {
                out.write_all(&v.to_le_bytes()).map_err(io_err)?;
            }
        } else {
            for chunk in layer.chunks(row) {
                let line: Vec<String> = chunk.iter().map(|v| format!("{v:.6}")).collect();
                writeln!(out, "{}", line.join(" ")).map_err(io_err)?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldHeader {
    pub grid: GridSpec,
    pub k: usize,
    pub seed: u64,
    /// Kernel length scale, present when the writer recorded it.
    pub ell: Option<f64>,
}

pub fn parse_field_header(line: &str) -> Result<FieldHeader> {
    let rest = line
        .trim_end()
        .strip_prefix(FIELD_MAGIC)
        .ok_or_else(|| GkfError::Parse(format!("missing '{FIELD_MAGIC}' header")))?;
    let (mut dims, mut spacing, mut k, mut seed, mut ell) = (None, None, None, None, None);
    for token in rest.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| GkfError::Parse(format!("malformed header token '{token}'")))?;
        let bad = |_| GkfError::Parse(format!("bad value for {key}: '{value}'"));
        match key {
            "dims" => {
                dims = Some(
                    value
                        .split(',')
                        .map(|d| d.parse::<usize>().map_err(bad))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "spacing" => {
                spacing = Some(
                    value
                        .parse::<f64>()
                        .map_err(|_| GkfError::Parse(format!("bad spacing '{value}'")))?,
                )
            }
            "k" => k = Some(value.parse::<usize>().map_err(bad)?),
            "seed" => seed = Some(value.parse::<u64>().map_err(bad)?),
            "ell" => {
                ell = Some(
                    value
                        .parse::<f64>()
                        .map_err(|_| GkfError::Parse(format!("bad ell '{value}'")))?,
                )
            }
            _ => return Err(GkfError::Parse(format!("unknown header key '{key}'"))),
        }
    }
    let missing = |name: &str| GkfError::Parse(format!("header lacks {name}"));
    Ok(FieldHeader {
        grid: GridSpec::new(
            dims.ok_or_else(|| missing("dims"))?,
            spacing.ok_or_else(|| missing("spacing"))?,
        )?,
        k: k.ok_or_else(|| missing("k"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
        ell,
    })
}

/// Reads a dump written by [`write_field`].
pub fn read_field<R: BufRead>(input: &mut R, binary: bool) -> Result<FieldSample> {
    let mut line = String::new();
    input.read_line(&mut line).map_err(io_err)?;
    let header = parse_field_header(&line)?;
    let n = header.grid.node_count();
    let values = if binary {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes).map_err(io_err)?;
        if bytes.len() != 8 * n * header.k {
            return Err(GkfError::Parse(format!(
                "expected {} bytes of values, found {}",
                8 * n * header.k,
                bytes.len()
            )));
        }
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect::<Vec<_>>()
            .chunks(n)
            .map(|c| c.to_vec())
            .collect()
    } else {
        let mut text = String::new();
        input.read_to_string(&mut text).map_err(io_err)?;
        let flat = text
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| GkfError::Parse(format!("bad value '{t}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        if flat.len() != n * header.k {
            return Err(GkfError::Parse(format!(
                "expected {} values, found {}",
                n * header.k,
                flat.len()
            )));
        }
        flat.chunks(n).map(|c| c.to_vec()).collect()
    };
    Ok(FieldSample {
        support: Support::Grid(header.grid),
        k: header.k,
        values,
        seed: header.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldsim::simulate_field;

    #[test]
    fn header_format() {
        let g = GridSpec::new(vec![50, 40], 0.2).unwrap();
        assert_eq!(
            field_header(&g, 2, 17),
            "GKFLAB-FIELD v1 dims=50,40 spacing=0.2 k=2 seed=17"
        );
        let h = parse_field_header(&field_header(&g, 2, 17)).unwrap();
        assert_eq!(
            h,
            FieldHeader {
                grid: g.clone(),
                k: 2,
                seed: 17,
                ell: None
            }
        );
        let h = parse_field_header(&(field_header(&g, 2, 17) + " ell=0.75")).unwrap();
        assert_eq!(h.ell, Some(0.75));
        assert!(parse_field_header("GKFLAB-MASK v1").is_err());
    }

    #[test]
    fn binary_roundtrip_is_exact_and_text_is_six_decimals() {
        let g = GridSpec::new(vec![6, 5], 0.2).unwrap();
        let s = simulate_field(&g, 0.6, 2, 3).unwrap();
        let mut bin = Vec::new();
        write_field(&s, &mut bin, true).unwrap();
        assert_eq!(read_field(&mut bin.as_slice(), true).unwrap(), s);
        let mut txt = Vec::new();
        write_field(&s, &mut txt, false).unwrap();
        let back = read_field(&mut txt.as_slice(), false).unwrap();
        for (a, b) in back.values.iter().flatten().zip(s.values.iter().flatten()) {
            assert!((a - b).abs() <= 5e-7);
        }
        let text = String::from_utf8(txt).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 7);
    }
}
