use std::io::Write;

use crate::error::Result;
use crate::solvers::fmt_num;

use super::runs::{LimitRow, SweepRow};

/// Columns of every sweep table after the independent variable.
pub const SWEEP_COLUMNS: [&str; 10] = [
    "Nv",
    "NyT",
    "Inf_eps(F_eps)",
    "big_M",
    "free_norm",
    "avg_diff",
    "NyT_unweighted",
    "N",
    "M",
    "status",
];

pub const LIMIT_COLUMNS: [&str; 5] = ["tau", "limit_diff", "N", "M", "status"];

fn opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// Writes a sweep table. `x_name` is `dx` for mesh sweeps and `tau` for
/// tau sweeps.
pub fn write_sweep_csv<W: Write>(out: W, x_name: &str, rows: &[SweepRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec![x_name];
    header.extend(SWEEP_COLUMNS);
    wtr.write_record(&header)?;
    for r in rows {
        wtr.write_record([
            fmt_num(r.x),
            opt(r.nv),
            opt(r.nyt),
            opt(r.inf_f),
            opt(r.big_m),
            opt(r.free_norm),
            opt(r.avg_diff),
            opt(r.nyt_unweighted),
            r.n.to_string(),
            r.m.to_string(),
            r.status.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_limit_csv<W: Write>(out: W, rows: &[LimitRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(LIMIT_COLUMNS)?;
    for r in rows {
        wtr.write_record([
            fmt_num(r.tau),
            fmt_num(r.discrepancy),
            r.n.to_string(),
            r.m.to_string(),
            "ok".to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::RowStatus;

    #[test]
    fn blank_cells_for_unused_columns() {
        let row = SweepRow {
            x: 0.5,
            nv: None,
            nyt: None,
            inf_f: None,
            big_m: None,
            free_norm: None,
            avg_diff: Some(0.25),
            nyt_unweighted: None,
            n: 10,
            m: 20,
            status: RowStatus::Ok,
        };
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, "tau", &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "tau,Nv,NyT,Inf_eps(F_eps),big_M,free_norm,avg_diff,NyT_unweighted,N,M,status"
        );
        assert_eq!(lines[1], "0.5,,,,,,0.25,,10,20,ok");
    }
}
