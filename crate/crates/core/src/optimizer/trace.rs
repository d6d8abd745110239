use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::constrained_regret;
use crate::problem::Problem;

use super::RunTrace;

impl RunTrace {
    /// `t, x0.., f, g0.., regret, violation0.., cr, discrepancy_bound,
    /// beta_<function>_<node>..`
    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((0..self.input_dim).map(|i| format!("x{i}")));
        h.push("f".into());
        h.extend((0..self.constraint_count).map(|k| format!("g{k}")));
        h.push("regret".into());
        h.extend((0..self.constraint_count).map(|k| format!("violation{k}")));
        h.push("cr".into());
        h.push("discrepancy_bound".into());
        h.extend(
            self.black_nodes
                .iter()
                .map(|(f, i)| format!("beta_{}_{i}", Problem::function_label(*f))),
        );
        h
    }

    /// Constrained regret after every step.
    pub fn constrained_regret(&self) -> Vec<f64> {
        let regret: Vec<f64> = self.records.iter().map(|r| r.regret).collect();
        let violations: Vec<Vec<f64>> = self.records.iter().map(|r| r.violations.clone()).collect();
        constrained_regret(&regret, &violations)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.csv_header())?;
        let cr = self.constrained_regret();
        for (r, cr) in self.records.iter().zip(cr) {
            let mut row = vec![r.t.to_string()];
            row.extend(r.x.iter().map(f64::to_string));
            row.push(r.f.to_string());
            row.extend(r.g.iter().map(f64::to_string));
            row.push(r.regret.to_string());
            row.extend(r.violations.iter().map(f64::to_string));
            row.push(cr.to_string());
            row.push(r.discrepancy_bound[0].to_string());
            for &(f, i) in &self.black_nodes {
                let beta = r
                    .nodes
                    .iter()
                    .find(|s| s.function == f && s.node == i)
                    .map_or(f64::NAN, |s| s.beta);
                row.push(beta.to_string());
            }
            out.write_record(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Column view of an exported trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceTable {
    pub t: Vec<usize>,
    pub x: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    /// Constraint values per step.
    pub g: Vec<Vec<f64>>,
    pub regret: Vec<f64>,
    pub violations: Vec<Vec<f64>>,
    pub cr: Vec<f64>,
    pub discrepancy_bound: Vec<f64>,
    /// `(column name, values)` for every width-multiplier column.
    pub beta: Vec<(String, Vec<f64>)>,
}

impl TraceTable {
    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        TraceTable::read(file).map_err(|e| match e {
            Error::ConfigParse { location, message } => Error::ConfigParse {
                location: format!("{}: {location}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::config("header", format!("missing column `{name}`")))
        };
        let prefixed = |prefix: &str| -> Vec<usize> {
            let mut cols: Vec<(usize, usize)> = header
                .iter()
                .enumerate()
                .filter_map(|(c, h)| {
                    h.strip_prefix(prefix)
                        .and_then(|rest| rest.parse().ok())
                        .map(|k: usize| (k, c))
                })
                .collect();
            cols.sort();
            cols.into_iter().map(|(_, c)| c).collect()
        };
        let t_col = find("t")?;
        let f_col = find("f")?;
        let regret_col = find("regret")?;
        let cr_col = find("cr")?;
        let disc_col = find("discrepancy_bound")?;
        let x_cols = prefixed("x");
        let g_cols = prefixed("g");
        let v_cols = prefixed("violation");
        let beta_cols: Vec<usize> = (0..header.len()).filter(|&c| header[c].starts_with("beta_")).collect();

        let mut table = TraceTable {
            t: Vec::new(),
            x: Vec::new(),
            f: Vec::new(),
            g: Vec::new(),
            regret: Vec::new(),
            violations: Vec::new(),
            cr: Vec::new(),
            discrepancy_bound: Vec::new(),
            beta: beta_cols.iter().map(|&c| (header[c].clone(), Vec::new())).collect(),
        };
        for (line, row) in rdr.records().enumerate() {
            let row = row?;
            let num = |c: usize| -> Result<f64> {
                let cell = row.get(c).unwrap_or("");
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::config(
                        format!("row {}, column `{}`", line + 2, header[c]),
                        format!("`{cell}` is not a number"),
                    )
                })
            };
            let t = row
                .get(t_col)
                .and_then(|v| v.trim().parse::<usize>().ok())
                .ok_or_else(|| {
                    Error::config(format!("row {}, column `t`", line + 2), "step index is not an integer")
                })?;
            table.t.push(t);
            table.x.push(x_cols.iter().map(|&c| num(c)).collect::<Result<_>>()?);
            table.f.push(num(f_col)?);
            table.g.push(g_cols.iter().map(|&c| num(c)).collect::<Result<_>>()?);
            table.regret.push(num(regret_col)?);
            table
                .violations
                .push(v_cols.iter().map(|&c| num(c)).collect::<Result<_>>()?);
            table.cr.push(num(cr_col)?);
            table.discrepancy_bound.push(num(disc_col)?);
            for (k, &c) in beta_cols.iter().enumerate() {
                table.beta[k].1.push(num(c)?);
            }
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Objective value of the optimum, recovered from `f - regret`.
    pub fn optimum_value(&self) -> Option<f64> {
        self.f
            .iter()
            .zip(&self.regret)
            .map(|(f, r)| f - r)
            .find(|v| v.is_finite())
    }
}
