//! Plain-text file formats.
//!
//! All formats are line oriented. Blank lines and anything after `#` are
//! ignored. Numbers use Rust's `f64` syntax.
//!
//! **MDP** (`.mdp`):
//! ```text
//! states 2
//! actions 1
//! gamma 0.9
//! # s a s' prob reward
//! 0 0 0 0.9 1.0
//! 0 0 1 0.1 0.0
//! 1 0 1 1.0 0.0
//! ```
//! The three header keys must appear before the first transition, in any
//! order. Omitted triples have probability zero; every `(s, a)` row must sum
//! to one.
//!
//! **Dense matrix** (features and policies):
//! ```text
//! rows 3 cols 2
//! 1.0 0.0
//! 0.0 1.0
//! 0.5 0.5
//! ```
//!
//! **Graph**: a header `N directed` or `N undirected`, then one `u v` edge per line.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::consensus::Graph;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mdp::{Mdp, Policy};

fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("");
        let toks: Vec<&str> = line.split_whitespace().collect();
        (!toks.is_empty()).then_some((i + 1, toks))
    })
}

fn num<T: std::str::FromStr>(line: usize, tok: &str, what: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::parse(line, format!("cannot parse {what} from '{tok}'")))
}

pub fn parse_mdp(text: &str) -> Result<Mdp> {
    let (mut n, mut m, mut gamma) = (None, None, None);
    let mut p: Vec<f64> = Vec::new();
    let mut r: Vec<f64> = Vec::new();
    let mut seen: Vec<bool> = Vec::new();
    let mut last_line = 0;
    for (line, toks) in content_lines(text) {
        last_line = line;
        match toks[0] {
            "states" | "actions" | "gamma" => {
                if !p.is_empty() {
                    return Err(Error::parse(line, "header keys must precede transitions"));
                }
                if toks.len() != 2 {
                    return Err(Error::parse(line, format!("expected '{} <value>'", toks[0])));
                }
                match toks[0] {
                    "states" => n = Some(num::<usize>(line, toks[1], "state count")?),
                    "actions" => m = Some(num::<usize>(line, toks[1], "action count")?),
                    _ => gamma = Some(num::<f64>(line, toks[1], "gamma")?),
                }
            }
            _ => {
                let (Some(n), Some(m), Some(_)) = (n, m, gamma) else {
                    return Err(Error::parse(line, "transition before 'states', 'actions' and 'gamma' are all set"));
                };
                if p.is_empty() {
                    p = vec![0.0; n * m * n];
                    r = vec![0.0; n * m * n];
                    seen = vec![false; n * m * n];
                }
                if toks.len() != 5 {
                    return Err(Error::parse(line, "expected 's a s_next prob reward'"));
                }
                let s: usize = num(line, toks[0], "state")?;
                let a: usize = num(line, toks[1], "action")?;
                let s2: usize = num(line, toks[2], "next state")?;
                if s >= n || a >= m || s2 >= n {
                    return Err(Error::parse(line, format!("index out of range ({s}, {a}, {s2})")));
                }
                let idx = (s * m + a) * n + s2;
                if seen[idx] {
                    return Err(Error::parse(line, format!("duplicate transition ({s}, {a}, {s2})")));
                }
                seen[idx] = true;
                p[idx] = num(line, toks[3], "probability")?;
                r[idx] = num(line, toks[4], "reward")?;
            }
        }
    }
    let (Some(n), Some(m), Some(gamma)) = (n, m, gamma) else {
        return Err(Error::parse(last_line, "missing 'states', 'actions' or 'gamma'"));
    };
    if p.is_empty() {
        return Err(Error::parse(last_line, "no transitions"));
    }
    Mdp::new(n, m, p, r, gamma)
}

pub fn write_mdp(mdp: &Mdp) -> String {
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let mut out = format!("states {n}\nactions {m}\ngamma {}\n# s a s' prob reward\n", mdp.gamma());
    for s in 0..n {
        for a in 0..m {
            for s2 in 0..n {
                let p = mdp.prob(s, a, s2);
                if p > 0.0 {
                    let _ = writeln!(out, "{s} {a} {s2} {p:?} {:?}", mdp.reward(s, a, s2));
                }
            }
        }
    }
    out
}

pub fn parse_dense_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = content_lines(text);
    let Some((hline, header)) = lines.next() else {
        return Err(Error::parse(1, "empty matrix file"));
    };
    if header.len() != 4 || header[0] != "rows" || header[2] != "cols" {
        return Err(Error::parse(hline, "expected header 'rows <n> cols <k>'"));
    }
    let rows: usize = num(hline, header[1], "row count")?;
    let cols: usize = num(hline, header[3], "column count")?;
    let mut data = Vec::with_capacity(rows * cols);
    let mut count = 0;
    let mut last = hline;
    for (line, toks) in lines {
        last = line;
        if count == rows {
            return Err(Error::parse(line, format!("more than {rows} rows")));
        }
        if toks.len() != cols {
            return Err(Error::parse(line, format!("expected {cols} values, found {}", toks.len())));
        }
        for t in toks {
            data.push(num::<f64>(line, t, "matrix entry")?);
        }
        count += 1;
    }
    if count != rows {
        return Err(Error::parse(last, format!("expected {rows} rows, found {count}")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_dense_matrix(mat: &DMatrix<f64>) -> String {
    let mut out = format!("rows {} cols {}\n", mat.nrows(), mat.ncols());
    for row in mat.row_iter() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_features(text: &str) -> Result<FeatureMap> {
    FeatureMap::new(parse_dense_matrix(text)?)
}

pub fn parse_policy(text: &str) -> Result<Policy> {
    let mat = parse_dense_matrix(text)?;
    let probs = mat.transpose().as_slice().to_vec();
    Policy::new(mat.nrows(), mat.ncols(), probs)
}

pub fn parse_graph(text: &str) -> Result<Graph> {
    let mut lines = content_lines(text);
    let Some((hline, header)) = lines.next() else {
        return Err(Error::parse(1, "empty graph file"));
    };
    if header.len() != 2 {
        return Err(Error::parse(hline, "expected header '<N> directed|undirected'"));
    }
    let n: usize = num(hline, header[0], "node count")?;
    let directed = match header[1] {
        "directed" => true,
        "undirected" => false,
        other => return Err(Error::parse(hline, format!("unknown graph kind '{other}'"))),
    };
    let mut edges = Vec::new();
    for (line, toks) in lines {
        if toks.len() != 2 {
            return Err(Error::parse(line, "expected 'u v'"));
        }
        let u: usize = num(line, toks[0], "node")?;
        let v: usize = num(line, toks[1], "node")?;
        if u >= n || v >= n {
            return Err(Error::parse(line, format!("edge ({u}, {v}) out of range")));
        }
        edges.push((u, v));
    }
    Graph::new(n, directed, &edges)
}

pub fn write_graph(g: &Graph) -> String {
    let kind = if g.is_directed() { "directed" } else { "undirected" };
    let mut out = format!("{} {kind}\n", g.n_nodes());
    for (u, v) in g.edges() {
        let _ = writeln!(out, "{u} {v}");
    }
    out
}
