use std::io::{Read, Write};
use std::path::Path;

use super::{CausalDataset, ColumnKind, DataError, PotentialOutcomes};
use crate::Tensor;

/// Column-kind overrides for [`load_csv`]. When `binary` is `None`, a
/// covariate is binary iff every value is 0 or 1.
#[derive(Clone, Debug, Default)]
pub struct CsvSchema {
    pub binary: Option<Vec<usize>>,
}

fn fmt_float(v: f64) -> String {
    // 17 significant digits round-trip every f64
    format!("{v:.16e}")
}

/// Writes `t,y[,mu0,mu1][,e],x0,...,x{m-1}`.
pub fn write_csv<W: Write>(ds: &CausalDataset, out: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "y".to_string()];
    if ds.truth.is_some() {
        header.extend(["mu0".into(), "mu1".into()]);
    }
    if ds.rct.is_some() {
        header.push("e".into());
    }
    header.extend((0..ds.m()).map(|j| format!("x{j}")));
    w.write_record(&header)?;

    for i in 0..ds.n() {
        let mut rec = vec![format!("{}", ds.t[i] as u8), fmt_float(ds.y[i])];
        if let Some(po) = &ds.truth {
            rec.push(fmt_float(po.mu0[i]));
            rec.push(fmt_float(po.mu1[i]));
        }
        if let Some(r) = &ds.rct {
            rec.push(if r[i] { "1".into() } else { "0".into() });
        }
        for (j, kind) in ds.kinds.iter().enumerate() {
            let v = ds.x.get(i, j);
            rec.push(match kind {
                ColumnKind::Binary => format!("{}", v as u8),
                ColumnKind::Continuous => fmt_float(v),
            });
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<CausalDataset, DataError> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(input: R, schema: &CsvSchema) -> Result<CausalDataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);

    let t_col = find("t").ok_or_else(|| DataError::MissingColumn("t".into()))?;
    let y_col = find("y").ok_or_else(|| DataError::MissingColumn("y".into()))?;
    let mu_cols = match (find("mu0"), find("mu1")) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        (Some(_), None) => return Err(DataError::MissingColumn("mu1".into())),
        (None, Some(_)) => return Err(DataError::MissingColumn("mu0".into())),
    };
    let e_col = find("e");

    let mut x_cols: Vec<(usize, usize)> = Vec::new();
    for (pos, h) in headers.iter().enumerate() {
        if let Some(idx) = h.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
            x_cols.push((idx, pos));
        } else if !matches!(h, "t" | "y" | "mu0" | "mu1" | "e") {
            log::warn!("ignoring unrecognized column `{h}`");
        }
    }
    x_cols.sort_unstable();
    for (expect, &(idx, _)) in x_cols.iter().enumerate() {
        if idx != expect {
            return Err(DataError::MissingColumn(format!("x{expect}")));
        }
    }
    if x_cols.is_empty() {
        return Err(DataError::MissingColumn("x0".into()));
    }
    let m = x_cols.len();

    let (mut t, mut y, mut x) = (Vec::new(), Vec::new(), Vec::new());
    let (mut mu0, mut mu1, mut rct) = (Vec::new(), Vec::new(), Vec::new());
    for (r, rec) in rdr.records().enumerate() {
        // 1-based data rows after the header
        let row = r + 2;
        let rec = rec?;
        let cell = |pos: usize, name: &str| -> Result<f64, DataError> {
            let s = rec.get(pos).ok_or_else(|| DataError::Parse {
                row,
                message: format!("missing cell for `{name}`"),
            })?;
            s.parse::<f64>().map_err(|_| DataError::Parse {
                row,
                message: format!("`{name}` = {s:?} is not numeric"),
            })
        };
        let ti = cell(t_col, "t")?;
        if ti != 0.0 && ti != 1.0 {
            return Err(DataError::Parse {
                row,
                message: format!("treatment {ti} is not binary"),
            });
        }
        t.push(ti);
        y.push(cell(y_col, "y")?);
        if let Some((a, b)) = mu_cols {
            mu0.push(cell(a, "mu0")?);
            mu1.push(cell(b, "mu1")?);
        }
        if let Some(e) = e_col {
            let v = cell(e, "e")?;
            if v != 0.0 && v != 1.0 {
                return Err(DataError::Parse {
                    row,
                    message: format!("rct flag {v} is not binary"),
                });
            }
            rct.push(v == 1.0);
        }
        for &(idx, pos) in &x_cols {
            x.push(cell(pos, &format!("x{idx}"))?);
        }
    }
    let n = t.len();
    let x = Tensor::new(vec![n, m], x).map_err(|e| DataError::Invalid(e.to_string()))?;

    let is_binary_col = |j: usize| (0..n).all(|i| matches!(x.get(i, j), v if v == 0.0 || v == 1.0));
    let kinds: Vec<ColumnKind> = match &schema.binary {
        Some(bin) => {
            if let Some(&bad) = bin.iter().find(|&&j| j >= m) {
                return Err(DataError::Config(format!("schema names binary column x{bad} but only {m} exist")));
            }
            (0..m)
                .map(|j| {
                    if bin.contains(&j) {
                        ColumnKind::Binary
                    } else {
                        ColumnKind::Continuous
                    }
                })
                .collect()
        }
        None => (0..m)
            .map(|j| {
                if n > 0 && is_binary_col(j) {
                    ColumnKind::Binary
                } else {
                    ColumnKind::Continuous
                }
            })
            .collect(),
    };

    let ds = CausalDataset {
        x,
        kinds,
        t,
        y,
        truth: mu_cols.map(|_| PotentialOutcomes { mu0, mu1 }),
        rct: e_col.map(|_| rct),
        latents: None,
    };
    ds.validate()?;
    Ok(ds)
}
