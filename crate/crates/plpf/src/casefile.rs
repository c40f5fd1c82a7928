//! MATPOWER-style case file ingestion.
//!
//! Only the subset the models need is interpreted: `baseMVA`, the `bus` and
//! `branch` matrices, and the slack voltage setpoint from `gen` when
//! present. Any other assignment (`gencost`, `bus_name`, ...) is skipped and
//! recorded in [`RawCase::skipped`].
//!
//! Branch impedances are taken as given (MATPOWER files carry per-unit
//! values); loads convert via `S_pu = (Pd + jQd) / baseMVA` and enter the
//! base scenario injection-positive, i.e. negated.

use crate::error::{Error, Result};
use crate::net::{Branch, Network, Scenario};

const CASE33: &str = include_str!("cases/case33bw.m");
const CASE69: &str = include_str!("cases/case69.m");
const CASE2: &str = include_str!("cases/case2_test.m");

const BUS_COLS: usize = 13;
const BRANCH_COLS: usize = 13;

#[derive(Debug, Clone, PartialEq)]
pub struct BusRow {
    pub id: i64,
    pub bus_type: u8,
    pub pd_mw: f64,
    pub qd_mvar: f64,
    pub base_kv: f64,
    pub vm: f64,
    pub va: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchRow {
    pub from: i64,
    pub to: i64,
    pub r: f64,
    pub x: f64,
    pub in_service: bool,
}

/// Parsed case tables before network construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCase {
    pub base_mva: f64,
    pub buses: Vec<BusRow>,
    pub branches: Vec<BranchRow>,
    /// (bus id, voltage setpoint) per in-service generator row
    pub gen_voltages: Vec<(i64, f64)>,
    /// sections present in the file but not interpreted
    pub skipped: Vec<String>,
}

struct Matrix {
    rows: Vec<Vec<f64>>,
}

/// Splits a case body into `name = value;` assignments and `name = [...];`
/// matrices, tolerating `%` comments and arbitrary whitespace.
pub fn parse_matpower(text: &str) -> Result<RawCase> {
    let mut base_mva: Option<f64> = None;
    let mut bus: Option<Matrix> = None;
    let mut branch: Option<Matrix> = None;
    let mut gen: Option<Matrix> = None;
    let mut skipped = Vec::new();

    let mut lines = text.lines().enumerate().peekable();
    while let Some((lineno, raw)) = lines.next() {
        let line = strip_comment(raw).trim();
        if line.is_empty() || line.starts_with("function") {
            continue;
        }
        let Some(eq) = line.find('=') else { continue };
        let name = line[..eq].trim().trim_start_matches("mpc.").to_string();
        let rest = line[eq + 1..].trim();

        if rest.starts_with('[') {
            let mut body = rest[1..].to_string();
            let mut end_line = lineno;
            if !body.contains(']') {
                loop {
                    let Some((ln, nxt)) = lines.next() else {
                        return Err(Error::Syntax {
                            line: end_line + 1,
                            col: 1,
                            msg: format!("matrix `{name}` not terminated with `];`"),
                        });
                    };
                    end_line = ln;
                    let stripped = strip_comment(nxt);
                    body.push('\n');
                    body.push_str(&stripped);
                    if stripped.contains(']') {
                        break;
                    }
                }
            }
            let body = &body[..body.find(']').unwrap()];
            let matrix = parse_matrix(body)?;
            match name.as_str() {
                "bus" => bus = Some(matrix),
                "branch" => branch = Some(matrix),
                "gen" => gen = Some(matrix),
                other => skipped.push(other.to_string()),
            }
        } else if name == "baseMVA" {
            let tok = rest.trim_end_matches(';').trim();
            base_mva = Some(tok.parse().map_err(|_| Error::Syntax {
                line: lineno + 1,
                col: eq + 2,
                msg: format!("baseMVA is not a number: `{tok}`"),
            })?);
        } else {
            skipped.push(name);
        }
    }

    let base_mva = base_mva.ok_or_else(|| Error::MissingSection("baseMVA".into()))?;
    let bus = bus.ok_or_else(|| Error::MissingSection("bus".into()))?;
    let branch = branch.ok_or_else(|| Error::MissingSection("branch".into()))?;

    let mut buses = Vec::with_capacity(bus.rows.len());
    for row in &bus.rows {
        buses.push(BusRow {
            id: row[0] as i64,
            bus_type: row[1] as u8,
            pd_mw: row[2],
            qd_mvar: row[3],
            base_kv: row[9],
            vm: row[7],
            va: row[8],
        });
    }
    let mut branches = Vec::with_capacity(branch.rows.len());
    for row in &branch.rows {
        branches.push(BranchRow {
            from: row[0] as i64,
            to: row[1] as i64,
            r: row[2],
            x: row[3],
            in_service: row[10] != 0.0,
        });
    }
    let gen_voltages = gen
        .map(|g| {
            g.rows
                .iter()
                .filter(|row| row.len() > 7 && row[7] != 0.0)
                .map(|row| (row[0] as i64, row[5]))
                .collect()
        })
        .unwrap_or_default();

    Ok(RawCase {
        base_mva,
        buses,
        branches,
        gen_voltages,
        skipped,
    })
}

fn strip_comment(line: &str) -> String {
    match line.find('%') {
        Some(i) => line[..i].to_string(),
        None => line.to_string(),
    }
}

fn parse_matrix(body: &str) -> Result<Matrix> {
    let mut rows = Vec::new();
    let mut width = None;
    for chunk in body.split(';') {
        let chunk = chunk.trim();
        if chunk.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, tok) in chunk.split_whitespace().enumerate() {
            let v: f64 = tok.parse().map_err(|_| Error::NonNumericField {
                row: rows.len() + 1,
                col: col + 1,
            })?;
            row.push(v);
        }
        if let Some(w) = width {
            if row.len() != w {
                return Err(Error::Syntax {
                    line: rows.len() + 1,
                    col: 1,
                    msg: format!("row has {} fields, expected {w}", row.len()),
                });
            }
        } else {
            let w = row.len();
            if w < BUS_COLS.min(BRANCH_COLS) {
                // both interpreted tables need 13 columns; other matrices
                // are never inspected so any consistent width passes
            }
            width = Some(w);
        }
        rows.push(row);
    }
    Ok(Matrix { rows })
}

/// Serializes a [`RawCase`] back to case text. Round-trips numerically
/// through [`parse_matpower`].
pub fn to_case_text(case: &RawCase) -> String {
    let mut out = String::new();
    out.push_str("function mpc = case\n");
    out.push_str(&format!("mpc.baseMVA = {};\n", fmt(case.base_mva)));
    out.push_str("mpc.bus = [\n");
    for b in &case.buses {
        out.push_str(&format!(
            "\t{}\t{}\t{}\t{}\t0\t0\t1\t{}\t{}\t{}\t1\t1.1\t0.9;\n",
            b.id,
            b.bus_type,
            fmt(b.pd_mw),
            fmt(b.qd_mvar),
            fmt(b.vm),
            fmt(b.va),
            fmt(b.base_kv),
        ));
    }
    out.push_str("];\n");
    if !case.gen_voltages.is_empty() {
        out.push_str("mpc.gen = [\n");
        for (bus, vg) in &case.gen_voltages {
            out.push_str(&format!(
                "\t{bus}\t0\t0\t10\t-10\t{}\t{}\t1\t10\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;\n",
                fmt(*vg),
                fmt(case.base_mva),
            ));
        }
        out.push_str("];\n");
    }
    out.push_str("mpc.branch = [\n");
    for b in &case.branches {
        out.push_str(&format!(
            "\t{}\t{}\t{}\t{}\t0\t0\t0\t0\t0\t0\t{}\t-360\t360;\n",
            b.from,
            b.to,
            fmt(b.r),
            fmt(b.x),
            if b.in_service { 1 } else { 0 },
        ));
    }
    out.push_str("];\n");
    out
}

fn fmt(v: f64) -> String {
    // shortest round-trip form keeps the golden files exact
    format!("{v}")
}

/// Builds the immutable [`Network`] and the base [`Scenario`] from parsed
/// tables. Bus indices are normalized to 0..=n with the slack at 0; branch
/// orientation is rediscovered from the root outward.
pub fn to_network(case: &RawCase) -> Result<(Network, Scenario)> {
    let slack: Vec<&BusRow> = case.buses.iter().filter(|b| b.bus_type == 3).collect();
    if slack.len() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "expected exactly one slack bus, found {}",
            slack.len()
        )));
    }
    let slack_id = slack[0].id;

    let mut ids: Vec<i64> = case.buses.iter().map(|b| b.id).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != case.buses.len() {
        return Err(Error::ShapeMismatch("duplicate bus ids".into()));
    }
    let n = ids.len() - 1;

    // slack -> 0, other buses in ascending id order -> 1..=n
    let mut labels = vec![slack_id];
    labels.extend(ids.iter().copied().filter(|&id| id != slack_id));
    let index_of = |id: i64| -> Result<usize> {
        labels
            .iter()
            .position(|&l| l == id)
            .ok_or(Error::ShapeMismatch(format!("branch references unknown bus {id}")))
    };

    // orient in-service branches away from the root
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n + 1]; // (neighbor, branch row)
    let mut rows = Vec::new();
    for row in case.branches.iter().filter(|b| b.in_service) {
        let a = index_of(row.from)?;
        let b = index_of(row.to)?;
        let ri = rows.len();
        adj[a].push((b, ri));
        adj[b].push((a, ri));
        rows.push(row);
    }
    let mut seen = vec![false; n + 1];
    let mut used = vec![false; rows.len()];
    let mut branches = Vec::with_capacity(rows.len());
    let mut queue = std::collections::VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(bus) = queue.pop_front() {
        for &(nb, ri) in &adj[bus] {
            if used[ri] {
                continue;
            }
            if seen[nb] {
                return Err(Error::CycleDetected { bus: nb });
            }
            used[ri] = true;
            seen[nb] = true;
            branches.push(Branch {
                from: bus,
                to: nb,
                r: rows[ri].r,
                x: rows[ri].x,
            });
            queue.push_back(nb);
        }
    }
    if let Some(bus) = (1..=n).find(|&b| !seen[b]) {
        return Err(Error::DisconnectedBus { bus });
    }

    let vm_slack = case
        .gen_voltages
        .iter()
        .find(|(id, _)| *id == slack_id)
        .map(|(_, vg)| *vg)
        .unwrap_or(slack[0].vm);

    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for bus in &case.buses {
        if bus.id == slack_id {
            continue;
        }
        let i = index_of(bus.id)? - 1;
        p[i] = -bus.pd_mw / case.base_mva;
        q[i] = -bus.qd_mvar / case.base_mva;
    }

    let net = Network::with_labels(n, vm_slack * vm_slack, case.base_mva, branches, labels)?;
    Ok((net, Scenario { p, q }))
}

/// Parses case text end to end.
pub fn from_text(text: &str) -> Result<(Network, Scenario)> {
    to_network(&parse_matpower(text)?)
}

/// Embedded reference feeders: `case33`, `case69`, `case2_test`.
pub fn builtin(name: &str) -> Result<(Network, Scenario)> {
    let text = match name {
        "case33" | "case33bw" => CASE33,
        "case69" => CASE69,
        "case2_test" => CASE2,
        other => return Err(Error::UnknownCase(other.to_string())),
    };
    from_text(text)
}

pub fn builtin_names() -> &'static [&'static str] {
    &["case33", "case69", "case2_test"]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const MINI: &str = "\
function mpc = mini
% two-bus fixture
mpc.version = '2';
mpc.baseMVA = 10;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t12.66\t1\t1.1\t0.9;
\t2\t1\t0.1\t0.06\t0\t0\t1\t1\t0\t12.66\t1\t1.1\t0.9;
];
mpc.branch = [
\t1\t2\t0.05\t0.05\t0\t0\t0\t0\t0\t0\t1\t-360\t360;
];
";

    #[test]
    fn parses_minimal_two_bus_case() {
        let case = parse_matpower(MINI).unwrap();
        assert_eq!(case.base_mva, 10.0);
        assert_eq!(case.buses.len(), 2);
        assert_eq!(case.branches.len(), 1);
        assert_eq!(case.skipped, vec!["version".to_string()]);
    }

    #[test]
    fn embedded_case33_tables() {
        let case = parse_matpower(super::CASE33).unwrap();
        assert_eq!(case.base_mva, 10.0);
        assert_eq!(case.buses.len(), 33);
        assert_eq!(case.branches.len(), 32);
    }

    #[test]
    fn missing_branch_section() {
        let text = MINI.replace("mpc.branch", "mpc.other");
        let err = parse_matpower(&text).unwrap_err();
        assert!(matches!(err, Error::MissingSection(name) if name == "branch"));
    }

    #[test]
    fn non_numeric_field_reports_position() {
        let text = MINI.replace("0.05\t0.05", "0.05\tbogus");
        let err = parse_matpower(&text).unwrap_err();
        assert!(matches!(err, Error::NonNumericField { row: 1, col: 4 }));
    }

    #[test]
    fn unterminated_matrix_is_syntax_error() {
        let text = &MINI[..MINI.rfind("];").unwrap()];
        let err = parse_matpower(text).unwrap_err();
        assert!(matches!(err, Error::Syntax { .. }));
    }

    #[test]
    fn unit_conversion_two_bus() {
        // 100 kW on a 10 MVA base -> p = -0.01 p.u.
        let (net, base) = builtin("case2_test").unwrap();
        assert_eq!(net.n(), 1);
        assert_abs_diff_eq!(base.p[0], -0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(base.q[0], -0.006, epsilon = 1e-15);
        assert_abs_diff_eq!(net.root_voltage_sq(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn case33_total_load_and_radiality() {
        let (net, base) = builtin("case33").unwrap();
        assert_eq!(net.n(), 32);
        let total: f64 = base.p.iter().map(|p| -p).sum();
        assert_abs_diff_eq!(total, 0.3715, epsilon = 1e-12);
        net.validate_radial().unwrap();
    }

    #[test]
    fn case69_shape() {
        let (net, base) = builtin("case69").unwrap();
        assert_eq!(net.n(), 68);
        let total: f64 = base.p.iter().map(|p| -p).sum();
        assert_abs_diff_eq!(total, 0.380189, epsilon = 1e-12);
        net.validate_radial().unwrap();
    }

    #[test]
    fn unknown_case_rejected() {
        assert!(matches!(builtin("case7x"), Err(Error::UnknownCase(_))));
    }

    #[test]
    fn serialize_round_trip_golden() {
        for name in ["case33", "case69", "case2_test"] {
            let text = match name {
                "case33" => super::CASE33,
                "case69" => super::CASE69,
                _ => super::CASE2,
            };
            let parsed = parse_matpower(text).unwrap();
            let round = parse_matpower(&to_case_text(&parsed)).unwrap();
            assert_eq!(parsed.base_mva, round.base_mva);
            assert_eq!(parsed.buses, round.buses);
            assert_eq!(parsed.branches, round.branches);
            assert_eq!(parsed.gen_voltages, round.gen_voltages);
        }
    }

    #[test]
    fn out_of_service_branch_dropped() {
        // duplicate the single branch but flag it out of service
        let text = MINI.replace(
            "\t1\t2\t0.05\t0.05\t0\t0\t0\t0\t0\t0\t1\t-360\t360;",
            "\t1\t2\t0.05\t0.05\t0\t0\t0\t0\t0\t0\t1\t-360\t360;\n\t1\t2\t0.9\t0.9\t0\t0\t0\t0\t0\t0\t0\t-360\t360;",
        );
        let (net, _) = from_text(&text).unwrap();
        assert_eq!(net.n(), 1);
        assert_eq!(net.branches()[0].r, 0.05);
    }

    #[test]
    fn labels_survive_normalization() {
        let (net, _) = builtin("case33").unwrap();
        assert_eq!(net.label(0), 1); // slack keeps original id 1
        assert_eq!(net.label(32), 33);
    }
}
