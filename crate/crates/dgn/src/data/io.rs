//! Plain-text storage for populations and square matrices.
//!
//! A population lives in a directory as one matrix file per (subject, view)
//! plus a manifest. The manifest is line oriented:
//!
//! ```text
//! # anything after '#' is a comment
//! nodes 35
//! views 4
//! view_names t1 t2 t3 t4
//! subject s001 s001_v0.txt s001_v1.txt s001_v2.txt s001_v3.txt
//! subject s002 s002_v0.txt ...
//! ```
//!
//! `view_names` is optional. Matrix paths are resolved relative to the
//! manifest's directory unless absolute. A matrix file holds n_r lines of
//! n_r whitespace-separated numbers; values are written with the shortest
//! representation that parses back to the identical f64, so a save/load
//! round trip is bit-exact.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::{Population, SubjectTensor};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reads a square matrix from a whitespace-separated text file.
pub fn read_square_matrix(path: &Path) -> Result<Tensor> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = strip_comment(line);
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::InvalidData {
                path: path.to_path_buf(),
                detail: format!("line {}: bad number {tok:?}", lineno + 1),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidData {
            path: path.to_path_buf(),
            detail: "no rows".into(),
        });
    }
    let mut vals = Vec::with_capacity(n * n);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidData {
                path: path.to_path_buf(),
                detail: format!("row {} has {} entries, expected {n} (square matrix)", i + 1, row.len()),
            });
        }
        vals.extend_from_slice(row);
    }
    Tensor::new(vec![n, n], vals)
}

/// Writes a rank-2 tensor as one line per row. Round trips bit-exactly.
pub fn write_matrix(path: &Path, m: &Tensor) -> Result<()> {
    let &[rows, cols] = m.shape() else {
        return Err(Error::shape("write_matrix wants rank 2", &[2], &[m.rank()]));
    };
    let mut out = String::new();
    for i in 0..rows {
        for j in 0..cols {
            if j > 0 {
                out.push(' ');
            }
            // f64 Display prints the shortest string that parses back to
            // the same bits.
            let _ = write!(out, "{}", m.values()[i * cols + j]);
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

struct Manifest {
    n_r: usize,
    n_v: usize,
    view_names: Option<Vec<String>>,
    subjects: Vec<(String, Vec<PathBuf>)>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let bad = |lineno: usize, detail: String| Error::InvalidData {
        path: path.to_path_buf(),
        detail: format!("line {}: {detail}", lineno + 1),
    };
    let mut n_r = None;
    let mut n_v = None;
    let mut view_names = None;
    let mut subjects: Vec<(String, Vec<PathBuf>)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let key = toks.next().expect("non-empty line has a first token");
        match key {
            "nodes" | "views" => {
                let val: usize = toks
                    .next()
                    .ok_or_else(|| bad(lineno, format!("{key} needs a value")))?
                    .parse()
                    .map_err(|_| bad(lineno, format!("{key} wants a positive integer")))?;
                if toks.next().is_some() {
                    return Err(bad(lineno, format!("extra tokens after {key}")));
                }
                if key == "nodes" {
                    n_r = Some(val);
                } else {
                    n_v = Some(val);
                }
            }
            "view_names" => {
                view_names = Some(toks.map(String::from).collect::<Vec<_>>());
            }
            "subject" => {
                let id = toks
                    .next()
                    .ok_or_else(|| bad(lineno, "subject needs an id".into()))?
                    .to_string();
                let files: Vec<PathBuf> = toks.map(PathBuf::from).collect();
                if files.is_empty() {
                    return Err(bad(lineno, format!("subject {id} lists no matrix files")));
                }
                subjects.push((id, files));
            }
            other => {
                return Err(bad(lineno, format!("unknown directive {other:?}")));
            }
        }
    }
    let n_r = n_r.ok_or_else(|| Error::InvalidData {
        path: path.to_path_buf(),
        detail: "missing 'nodes' line".into(),
    })?;
    let n_v = n_v.ok_or_else(|| Error::InvalidData {
        path: path.to_path_buf(),
        detail: "missing 'views' line".into(),
    })?;
    if subjects.is_empty() {
        return Err(Error::InvalidData {
            path: path.to_path_buf(),
            detail: "no subject lines".into(),
        });
    }
    Ok(Manifest {
        n_r,
        n_v,
        view_names,
        subjects,
    })
}

/// Loads a population from a manifest file. Matrices are validated against
/// the declared shape and the subject invariants (symmetry within tolerance,
/// non-negative, finite); small asymmetries are repaired by averaging.
pub fn load_population(manifest_path: &Path) -> Result<Population> {
    let manifest = parse_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut subjects = Vec::with_capacity(manifest.subjects.len());
    for (id, files) in &manifest.subjects {
        if files.len() != manifest.n_v {
            return Err(Error::InvalidData {
                path: manifest_path.to_path_buf(),
                detail: format!(
                    "subject {id} lists {} matrices, manifest declares {} views",
                    files.len(),
                    manifest.n_v
                ),
            });
        }
        let mut views = Vec::with_capacity(files.len());
        for rel in files {
            let path = if rel.is_absolute() {
                rel.clone()
            } else {
                base.join(rel)
            };
            let m = read_square_matrix(&path)?;
            if m.shape() != [manifest.n_r, manifest.n_r] {
                return Err(Error::InvalidData {
                    path,
                    detail: format!(
                        "matrix is {}x{}, manifest declares {} nodes",
                        m.shape()[0],
                        m.shape()[1],
                        manifest.n_r
                    ),
                });
            }
            views.push(m);
        }
        subjects.push(SubjectTensor::from_views(id.clone(), &views)?);
    }
    Population::new(subjects, manifest.view_names)
}

/// Writes a population into `dir` (created if needed) as per-view matrix
/// files plus `manifest.txt`. Returns the manifest path. Loading it back
/// reproduces every value bit-exactly.
pub fn save_population(pop: &Population, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut manifest = String::new();
    let _ = writeln!(manifest, "nodes {}", pop.n_r());
    let _ = writeln!(manifest, "views {}", pop.n_v());
    let _ = writeln!(manifest, "view_names {}", pop.view_names().join(" "));
    for s in pop.subjects() {
        let mut line = format!("subject {}", s.subject_id());
        for v in 0..pop.n_v() {
            let fname = format!("{}_v{v}.txt", s.subject_id());
            write_matrix(&dir.join(&fname), &s.view_matrix(v)?)?;
            line.push(' ');
            line.push_str(&fname);
        }
        manifest.push_str(&line);
        manifest.push('\n');
    }
    let manifest_path = dir.join("manifest.txt");
    std::fs::write(&manifest_path, manifest)
        .map_err(|e| Error::io(format!("writing {}", manifest_path.display()), e))?;
    Ok(manifest_path)
}
