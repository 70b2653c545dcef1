//! CSV result tables, plan files and the plot script.

use std::io::Write;
use std::path::Path;

use edpower::{Error, Result};

use crate::experiment::{ExperimentPlan, Row};

/// Column order of the result table.
pub const HEADER: [&str; 19] = [
    "scheme",
    "theta",
    "rho",
    "p_max_dbw",
    "run",
    "scenario_seed",
    "status",
    "sufficient_ok",
    "qos_relaxed",
    "iterations",
    "c_sum",
    "c_min",
    "energy_cost",
    "delay_cost",
    "c_k_min",
    "c_k_max",
    "mean_power_w",
    "reference_c_sum",
    "powers_w",
];

fn csv_err(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
        _ => Error::Parse(e.to_string()),
    }
}

/// Writes `rows` as CSV. An empty table still gets the header line.
pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HEADER).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

pub fn csv_string(rows: &[Row]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
}

pub fn emit_csv(rows: &[Row], path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path.as_ref()).map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    write_csv(rows, std::io::BufWriter::new(f))
}

/// Parses a result table, rejecting any header other than [`HEADER`].
pub fn parse_csv(text: &str) -> Result<Vec<Row>> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err)?;
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Parse(format!(
            "unexpected header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    r.deserialize().map(|x| x.map_err(csv_err)).collect()
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<Row>> {
    let text =
        std::fs::read_to_string(path.as_ref()).map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_csv(&text)
}

pub fn parse_plan(text: &str) -> Result<ExperimentPlan> {
    let plan: ExperimentPlan = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    plan.validate()?;
    Ok(plan)
}

pub fn plan_to_toml(plan: &ExperimentPlan) -> Result<String> {
    toml::to_string(plan).map_err(|e| Error::Parse(e.to_string()))
}

pub fn load_plan(path: impl AsRef<Path>) -> Result<ExperimentPlan> {
    let text =
        std::fs::read_to_string(path.as_ref()).map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_plan(&text)
}

const PLOT_TEMPLATE: &str = r#"#!/usr/bin/env python3
# Charts from an edpower sweep table. Usage: python3 plot.py [table.csv]
import csv
import math
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

PATH = sys.argv[1] if len(sys.argv) > 1 else "@CSV@"

rows = []
with open(PATH, newline="") as f:
    for r in csv.DictReader(f):
        if r["status"] in ("converged", "max-iters"):
            rows.append(r)


def label(r):
    t = float(r["theta"])
    return r["scheme"] if math.isnan(t) else f"{r['scheme']} theta={t:g}"


def mean_by(rows, key, value):
    acc = defaultdict(list)
    for r in rows:
        v = value(r)
        if not math.isnan(v):
            acc[(label(r), float(r["p_max_dbw"]))].append(v)
    curves = defaultdict(list)
    for (name, p), vs in sorted(acc.items()):
        curves[name].append((p, sum(vs) / len(vs)))
    return curves


def chart(name, ylabel, value, subset=lambda r: True, log=True):
    curves = mean_by([r for r in rows if subset(r)], "p_max_dbw", value)
    if not curves:
        return
    fig, ax = plt.subplots()
    for curve, pts in curves.items():
        xs, ys = zip(*pts)
        ax.plot(xs, ys, marker="o", label=curve)
    ax.set_xlabel("P_max [dBW]")
    ax.set_ylabel(ylabel)
    if log:
        ax.set_yscale("log")
    ax.legend(fontsize="small")
    fig.savefig(f"{name}.png", dpi=120, bbox_inches="tight")
    plt.close(fig)


solvers = lambda r: r["scheme"] != "brd-perturbed"
chart("cost_sum_rho1", "c_sum [J/bit]", lambda r: float(r["c_sum"]), lambda r: solvers(r) and float(r["rho"]) == 1.0)
chart("cost_sum_rho10", "c_sum [J/bit]", lambda r: float(r["c_sum"]), lambda r: solvers(r) and float(r["rho"]) == 10.0)
chart("cost_per_user_min", "min_k c_k [J/bit]", lambda r: float(r["c_k_min"]), solvers)
chart("cost_per_user_max", "max_k c_k [J/bit]", lambda r: float(r["c_k_max"]), solvers)
chart("mean_power", "mean transmit power [W]", lambda r: float(r["mean_power_w"]), solvers)
chart("cost_min", "c_min [J/bit]", lambda r: float(r["c_min"]), solvers)
chart("iterations", "iterations", lambda r: float(r["iterations"]), lambda r: r["scheme"].startswith("brd"), log=False)
chart(
    "perturbation_gap",
    "relative cost gap",
    lambda r: (float(r["c_sum"]) - float(r["reference_c_sum"])) / float(r["reference_c_sum"]),
    lambda r: r["scheme"] == "brd-perturbed",
    log=False,
)
"#;

/// Python/matplotlib script charting the table at `csv_path` against the budget.
pub fn plot_script(csv_path: &str) -> String {
    PLOT_TEMPLATE.replace("@CSV@", &csv_path.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn emit_plot_script(csv_path: &str, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), plot_script(csv_path))
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{RunStatus, Scheme};
    use proptest::prelude::*;

    fn row(c: f64, powers: &[f64]) -> Row {
        Row {
            scheme: Scheme::MbiMin,
            theta: f64::NAN,
            rho: 10.0,
            p_max_dbw: -20.0,
            run: 3,
            scenario_seed: 42,
            status: RunStatus::MaxIters,
            sufficient_ok: true,
            qos_relaxed: false,
            iterations: 17,
            c_sum: c,
            c_min: c * 1.5,
            energy_cost: 1e-7,
            delay_cost: 2e-6,
            c_k_min: 1e-8,
            c_k_max: 3e-5,
            mean_power_w: 0.01,
            reference_c_sum: f64::INFINITY,
            powers_w: crate::experiment::format_powers(powers),
        }
    }

    // NaN != NaN, so compare through the serialized form
    fn same(a: &[Row], b: &[Row]) -> bool {
        csv_string(a).unwrap() == csv_string(b).unwrap()
    }

    #[test]
    fn empty_table_is_header_only() {
        let s = csv_string(&[]).unwrap();
        assert_eq!(s, format!("{}\n", HEADER.join(",")));
        assert!(parse_csv(&s).unwrap().is_empty());
    }

    #[test]
    fn header_is_stable() {
        let a = csv_string(&[row(1.0, &[0.1])]).unwrap();
        let b = csv_string(&[row(2.0, &[0.2, 0.3])]).unwrap();
        assert_eq!(a.lines().next(), b.lines().next());
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(matches!(parse_csv("a,b\n1,2\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn plot_script_names_the_table() {
        let s = plot_script("out/sweep.csv");
        assert!(s.contains("\"out/sweep.csv\""));
        assert!(s.starts_with("#!/usr/bin/env python3"));
    }

    #[test]
    fn default_plan_round_trips() {
        let plan = ExperimentPlan::default();
        assert_eq!(parse_plan(&plan_to_toml(&plan).unwrap()).unwrap(), plan);
    }

    #[test]
    fn plan_rejects_unknown_fields() {
        assert!(parse_plan("bogus = 1\n").is_err());
        assert!(parse_plan("schemes = [\"brd\"]\n").is_err());
    }

    proptest! {
        #[test]
        fn table_round_trips(
            c in prop::num::f64::NORMAL | prop::num::f64::POSITIVE,
            powers in prop::collection::vec(0.0f64..1.0, 0..6),
        ) {
            let rows = vec![row(c, &powers), row(c * 0.5, &powers)];
            let back = parse_csv(&csv_string(&rows).unwrap()).unwrap();
            prop_assert!(same(&rows, &back));
            prop_assert_eq!(back[0].powers().unwrap(), powers);
        }

        #[test]
        fn parser_never_panics(s in ".{0,200}") {
            let _ = parse_csv(&s);
            let _ = parse_plan(&s);
        }
    }
}
