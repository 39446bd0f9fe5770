//! CSV output: long form `t,series,name,value` or one column per series.

use pss_core::hjb::HjbSolution;
use pss_core::model::PssInstance;
use pss_core::qcp::{QcpTrace, ScaledSeries};
use pss_core::wcp::SamplePath1D;

use crate::CliError;

fn csv_err(e: impl std::fmt::Display) -> CliError {
    CliError::Solver(format!("csv output: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, CliError> {
    w.into_inner().map_err(csv_err)
}

pub fn hjb_grid(sol: &HjbSolution) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["z", "u", "du", "d2u", "mode"]).map_err(csv_err)?;
    for i in 0..sol.grid.len() {
        w.write_record([
            sol.grid[i].to_string(),
            sol.u[i].to_string(),
            sol.du[i].to_string(),
            sol.d2u[i].to_string(),
            (sol.mode_at[i] + 1).to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub fn wcp_path(path: &SamplePath1D) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "series", "name", "value"]).map_err(csv_err)?;
    for k in 0..path.times.len() {
        let t = path.times[k].to_string();
        w.write_record([&t, "Z", "", &path.values[k].to_string()]).map_err(csv_err)?;
        w.write_record([&t, "L", "", &path.local_time[k].to_string()]).map_err(csv_err)?;
        if let Some(m) = path.mode_trace.get(k) {
            w.write_record([&t, "mode", "", &(m + 1).to_string()]).map_err(csv_err)?;
        }
    }
    finish(w)
}

/// Named columns of one trace row.
struct Column {
    series: &'static str,
    name: String,
}

fn columns(inst: &PssInstance) -> Vec<Column> {
    let classes: Vec<String> = (1..=inst.num_classes()).map(|i| i.to_string()).collect();
    let servers: Vec<String> = (1..=inst.num_servers()).map(|k| k.to_string()).collect();
    let acts: Vec<String> = inst.activities().iter().map(|a| a.to_string()).collect();
    let mut cols = Vec::new();
    let mut add = |series: &'static str, names: &[String]| {
        cols.extend(names.iter().map(|n| Column {
            series,
            name: n.clone(),
        }))
    };
    add("X", &classes);
    add("A", &classes);
    add("D", &acts);
    add("T", &acts);
    add("I", &servers);
    add("Xhat", &classes);
    add("Ahat", &classes);
    add("ShatT", &acts);
    add("Ihat", &servers);
    let none = [String::new()];
    for s in ["What", "Fhat", "Lhat", "LhatAN", "Hhat", "Gamma1Fhat"] {
        add(s, &none);
    }
    cols
}

fn row_values(trace: &QcpTrace, s: &ScaledSeries, r: usize) -> Vec<String> {
    let mut v: Vec<String> = Vec::new();
    v.extend(trace.queue[r].iter().map(|x| x.to_string()));
    v.extend(trace.arrivals[r].iter().map(|x| x.to_string()));
    v.extend(trace.departures[r].iter().map(|x| x.to_string()));
    v.extend(trace.busy[r].iter().map(|x| x.to_string()));
    v.extend(trace.idle[r].iter().map(|x| x.to_string()));
    v.extend(s.x_hat[r].iter().map(|x| x.to_string()));
    v.extend(s.a_hat[r].iter().map(|x| x.to_string()));
    v.extend(s.s_hat[r].iter().map(|x| x.to_string()));
    v.extend(s.i_hat[r].iter().map(|x| x.to_string()));
    for x in [s.w_hat[r], s.f_hat[r], s.l_hat[r], s.l_an[r], s.h_hat[r], s.reflected_f[r]] {
        v.push(x.to_string());
    }
    v
}

pub fn qcp_trace(inst: &PssInstance, trace: &QcpTrace, series: &ScaledSeries, wide: bool) -> Result<Vec<u8>, CliError> {
    let cols = columns(inst);
    let mut w = csv::Writer::from_writer(Vec::new());
    if wide {
        let mut header = vec!["t".to_string()];
        header.extend(cols.iter().map(|c| {
            if c.name.is_empty() {
                c.series.to_string()
            } else {
                format!("{}_{}", c.series, c.name)
            }
        }));
        w.write_record(&header).map_err(csv_err)?;
        for r in 0..trace.len() {
            let mut rec = vec![trace.times[r].to_string()];
            rec.extend(row_values(trace, series, r));
            w.write_record(&rec).map_err(csv_err)?;
        }
    } else {
        w.write_record(["t", "series", "name", "value"]).map_err(csv_err)?;
        for r in 0..trace.len() {
            let t = trace.times[r].to_string();
            for (c, v) in cols.iter().zip(row_values(trace, series, r)) {
                w.write_record([t.as_str(), c.series, c.name.as_str(), v.as_str()])
                    .map_err(csv_err)?;
            }
        }
    }
    finish(w)
}
