use std::fmt::Write as _;
use std::path::Path;

use crate::error::{param, Result};
use crate::objective::check_lambda;
use crate::stream::StreamPrefix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    /// Continuous, `≥ 0`.
    NonNegative,
    /// Continuous in `[0, 1]`.
    Unit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Eq,
    Ge,
    Le,
}

impl RowSense {
    fn symbol(self) -> &'static str {
        match self {
            RowSense::Eq => "=",
            RowSense::Ge => ">=",
            RowSense::Le => "<=",
        }
    }
}

/// One linear constraint over variable indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

/// The linearized hashing-scheme model: assignments `z`, per-element errors
/// `e`, products `θ = e·z` and pair indicators `δ = z·z`.
#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub n: usize,
    pub b: usize,
    pub lambda: f64,
    pub big_m: f64,
    pub variables: Vec<Variable>,
    /// Sparse minimization objective.
    pub objective: Vec<(usize, f64)>,
    pub rows: Vec<Row>,
}

struct Layout {
    n: usize,
    b: usize,
}

impl Layout {
    fn z(&self, i: usize, j: usize) -> usize {
        i * self.b + j
    }
    fn e(&self, i: usize, j: usize) -> usize {
        self.n * self.b + i * self.b + j
    }
    fn theta(&self, i: usize, k: usize, j: usize) -> usize {
        2 * self.n * self.b + (i * self.n + k) * self.b + j
    }
    fn delta(&self, i: usize, k: usize, j: usize) -> usize {
        2 * self.n * self.b + self.n * self.n * self.b + (i * self.n + k) * self.b + j
    }
}

/// Sums coefficients of repeated variables and drops zeros, keeping first-seen order.
fn combine(terms: impl IntoIterator<Item = (usize, f64)>) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (v, c) in terms {
        match out.iter_mut().find(|(u, _)| *u == v) {
            Some(t) => t.1 += c,
            None => out.push((v, c)),
        }
    }
    out.retain(|&(_, c)| c != 0.0);
    out
}

/// Builds the exact mixed-integer linear model for `b` buckets over the
/// prefix. `big_m` defaults to the largest observed frequency and may not be
/// smaller.
pub fn export_milp(prefix: &StreamPrefix, b: usize, lambda: f64, big_m: Option<f64>) -> Result<MilpModel> {
    check_lambda(lambda)?;
    if b == 0 {
        return Err(param("bucket count must be at least 1"));
    }
    let f = prefix.freqs_f64();
    let n = f.len();
    let f_max = f.iter().copied().fold(0.0, f64::max);
    let m = big_m.unwrap_or(f_max);
    if !(m >= f_max) || !m.is_finite() {
        return Err(param(format!("big-M {m} is below the largest frequency {f_max}")));
    }
    let at = Layout { n, b };

    let mut variables = Vec::with_capacity(2 * n * b + 2 * n * n * b);
    for i in 0..n {
        for j in 0..b {
            variables.push(Variable { name: format!("z_{i}_{j}"), kind: VarKind::Binary });
        }
    }
    for i in 0..n {
        for j in 0..b {
            variables.push(Variable { name: format!("e_{i}_{j}"), kind: VarKind::NonNegative });
        }
    }
    for (prefix_name, kind) in [("t", VarKind::NonNegative), ("d", VarKind::Unit)] {
        for i in 0..n {
            for k in 0..n {
                for j in 0..b {
                    variables.push(Variable { name: format!("{prefix_name}_{i}_{k}_{j}"), kind });
                }
            }
        }
    }

    let mut objective = Vec::new();
    for i in 0..n {
        for j in 0..b {
            objective.push((at.theta(i, i, j), lambda));
            for k in 0..n {
                let d2: f64 = prefix
                    .features(i)
                    .iter()
                    .zip(prefix.features(k))
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum();
                objective.push((at.delta(i, k, j), (1.0 - lambda) * d2));
            }
        }
    }
    let objective = combine(objective);

    let mut rows = Vec::with_capacity(n + 2 * n * b + 6 * n * n * b);
    for i in 0..n {
        rows.push(Row {
            name: format!("assign_{i}"),
            terms: (0..b).map(|j| (at.z(i, j), 1.0)).collect(),
            sense: RowSense::Eq,
            rhs: 1.0,
        });
    }
    for i in 0..n {
        for j in 0..b {
            for (tag, sign) in [("lo", 1.0), ("hi", -1.0)] {
                let thetas = (0..n).map(|k| (at.theta(i, k, j), 1.0));
                let zs = (0..n).map(|k| (at.z(k, j), sign * (f[k] - f[i])));
                rows.push(Row {
                    name: format!("err_{tag}_{i}_{j}"),
                    terms: combine(thetas.chain(zs)),
                    sense: RowSense::Ge,
                    rhs: 0.0,
                });
            }
        }
    }
    for i in 0..n {
        for k in 0..n {
            for j in 0..b {
                let (t, e, z) = (at.theta(i, k, j), at.e(i, j), at.z(k, j));
                rows.push(Row {
                    name: format!("tlo_{i}_{k}_{j}"),
                    terms: combine([(t, 1.0), (e, -1.0), (z, -m)]),
                    sense: RowSense::Ge,
                    rhs: -m,
                });
                rows.push(Row {
                    name: format!("tle_{i}_{k}_{j}"),
                    terms: combine([(t, 1.0), (e, -1.0)]),
                    sense: RowSense::Le,
                    rhs: 0.0,
                });
                rows.push(Row {
                    name: format!("tlz_{i}_{k}_{j}"),
                    terms: combine([(t, 1.0), (z, -m)]),
                    sense: RowSense::Le,
                    rhs: 0.0,
                });
            }
        }
    }
    for i in 0..n {
        for k in 0..n {
            for j in 0..b {
                let (d, zi, zk) = (at.delta(i, k, j), at.z(i, j), at.z(k, j));
                rows.push(Row {
                    name: format!("dlo_{i}_{k}_{j}"),
                    terms: combine([(d, 1.0), (zi, -1.0), (zk, -1.0)]),
                    sense: RowSense::Ge,
                    rhs: -1.0,
                });
                rows.push(Row {
                    name: format!("dli_{i}_{k}_{j}"),
                    terms: combine([(d, 1.0), (zi, -1.0)]),
                    sense: RowSense::Le,
                    rhs: 0.0,
                });
                rows.push(Row {
                    name: format!("dlk_{i}_{k}_{j}"),
                    terms: combine([(d, 1.0), (zk, -1.0)]),
                    sense: RowSense::Le,
                    rhs: 0.0,
                });
            }
        }
    }

    Ok(MilpModel { n, b, lambda, big_m: m, variables, objective, rows })
}

const LINE_WIDTH: usize = 200;

impl MilpModel {
    pub fn variable_count(&self) -> usize {
        self.variables.len()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    fn write_expr(&self, out: &mut String, head: &str, terms: &[(usize, f64)]) {
        let mut line = format!(" {head}:");
        let mut first = true;
        for &(v, c) in terms {
            let sign = if c < 0.0 { "-" } else if first { "" } else { "+" };
            let piece = if sign.is_empty() {
                format!(" {} {}", c.abs(), self.variables[v].name)
            } else {
                format!(" {sign} {} {}", c.abs(), self.variables[v].name)
            };
            if line.len() + piece.len() > LINE_WIDTH {
                out.push_str(&line);
                out.push('\n');
                line = String::from("   ");
            }
            line.push_str(&piece);
            first = false;
        }
        out.push_str(&line);
    }

    /// Renders the model in the CPLEX LP text format.
    pub fn to_lp_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "\\ hashing scheme model: n = {}, b = {}, lambda = {}, M = {}", self.n, self.b, self.lambda, self.big_m);
        out.push_str("Minimize\n");
        if self.objective.is_empty() {
            // z_0_0 always exists; a zero objective still needs one term.
            self.write_expr(&mut out, "obj", &[(0, 0.0)]);
        } else {
            self.write_expr(&mut out, "obj", &self.objective);
        }
        out.push_str("\nSubject To\n");
        for row in &self.rows {
            self.write_expr(&mut out, &row.name, &row.terms);
            let _ = writeln!(out, " {} {}", row.sense.symbol(), row.rhs);
        }
        out.push_str("Bounds\n");
        for v in self.variables.iter().filter(|v| v.kind == VarKind::Unit) {
            let _ = writeln!(out, " 0 <= {} <= 1", v.name);
        }
        out.push_str("Binaries\n");
        let bins: Vec<&str> = self.variables.iter().filter(|v| v.kind == VarKind::Binary).map(|v| v.name.as_str()).collect();
        for chunk in bins.chunks(16) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
        out.push_str("End\n");
        out
    }

    pub fn write_lp(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_lp_string())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::ingest_prefix;
    use lp_parser_rs::problem::LpProblem;

    fn prefix(freqs: &[u64], feats: &[Vec<f64>]) -> StreamPrefix {
        let mut ev = Vec::new();
        for (i, &f) in freqs.iter().enumerate() {
            for _ in 0..f {
                ev.push((i as u64, feats[i].clone()));
            }
        }
        ingest_prefix(ev).unwrap()
    }

    fn instance(n: usize) -> StreamPrefix {
        let freqs: Vec<u64> = (0..n as u64).map(|i| (i * 7 % 5) + 1).collect();
        let feats: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 * 0.5, 1.0 - i as f64]).collect();
        prefix(&freqs, &feats)
    }

    #[test]
    fn n3_b2_counts() {
        let m = export_milp(&instance(3), 2, 0.5, None).unwrap();
        assert_eq!(m.variable_count(), 48);
        assert_eq!(m.row_count(), 123);
    }

    #[test]
    fn counts_and_parse_for_small_sizes() {
        for n in 1..=5 {
            for b in 1..=3 {
                for lambda in [0.0, 0.5, 1.0] {
                    let m = export_milp(&instance(n), b, lambda, None).unwrap();
                    assert_eq!(m.variable_count(), 2 * n * b + 2 * n * n * b);
                    assert_eq!(m.row_count(), n + 2 * n * b + 6 * n * n * b);
                    let text = m.to_lp_string();
                    let lp = LpProblem::parse(&text).unwrap_or_else(|e| panic!("n={n} b={b}: {e}\n{text}"));
                    assert_eq!(lp.constraint_count(), m.row_count(), "n={n} b={b}");
                    assert_eq!(lp.variable_count(), m.variable_count(), "n={n} b={b}");
                }
            }
        }
    }

    #[test]
    fn big_m_below_max_rejected() {
        let p = prefix(&[1, 2, 10], &vec![vec![0.0]; 3]);
        assert!(export_milp(&p, 2, 1.0, Some(9.5)).is_err());
        assert!(export_milp(&p, 2, 1.0, Some(10.0)).is_ok());
        assert!(export_milp(&p, 0, 1.0, None).is_err());
    }

    fn solve(model: &MilpModel) -> f64 {
        use microlp::{ComparisonOp, OptimizationDirection, Problem};
        let mut obj = vec![0.0; model.variable_count()];
        for &(v, c) in &model.objective {
            obj[v] = c;
        }
        let mut p = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<_> = model
            .variables
            .iter()
            .zip(&obj)
            .map(|(v, &c)| match v.kind {
                VarKind::Binary => p.add_binary_var(c),
                VarKind::NonNegative => p.add_var(c, (0.0, f64::INFINITY)),
                VarKind::Unit => p.add_var(c, (0.0, 1.0)),
            })
            .collect();
        for row in &model.rows {
            let expr: Vec<_> = row.terms.iter().map(|&(v, c)| (vars[v], c)).collect();
            let op = match row.sense {
                RowSense::Eq => ComparisonOp::Eq,
                RowSense::Ge => ComparisonOp::Ge,
                RowSense::Le => ComparisonOp::Le,
            };
            p.add_constraint(expr, op, row.rhs);
        }
        p.solve().unwrap().into_solution().unwrap().objective()
    }

    #[test]
    fn solved_model_matches_partition_optimum() {
        let p = prefix(&[1, 2, 10], &[vec![0.0], vec![1.0], vec![5.0]]);
        let m = export_milp(&p, 2, 1.0, None).unwrap();
        assert!((solve(&m) - 1.0).abs() < 1e-6);
        let single = export_milp(&prefix(&[4], &[vec![2.0]]), 1, 0.3, None).unwrap();
        assert!(solve(&single).abs() < 1e-9);
    }

    #[test]
    fn solved_model_matches_brute_force_with_similarity() {
        let p = prefix(&[3, 1, 4, 1], &[vec![0.0], vec![0.2], vec![3.0], vec![3.1]]);
        let (_, oracle) = crate::solvers::brute_force(&p, 2, 0.5).unwrap();
        let m = export_milp(&p, 2, 0.5, None).unwrap();
        assert!((solve(&m) - oracle.overall).abs() < 1e-6, "{} vs {}", solve(&m), oracle.overall);
    }
}
