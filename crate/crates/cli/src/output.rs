//! Table writers for solver results.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use minsoftmax::columnar::{fmt_num, Table};
use minsoftmax::lq::{InfiniteHorizonSolution, LqSolution};
use minsoftmax::{AdversaryTable, Error, FiniteSystem, Result, SolveResult};

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })
}

fn matrix_header(prefix: &str, m: &DMatrix<f64>) -> Vec<String> {
    (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| format!("{prefix}_{i}_{j}"))).collect()
}

/// Row-major entries.
fn row_major(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| m[(i, j)]))
}

fn stage_matrix_table(prefix: &str, mats: &[&DMatrix<f64>], stage_labels: &[String]) -> Table {
    let mut header = vec!["stage".to_string()];
    header.extend(matrix_header(prefix, mats[0]));
    let mut t = Table::new(&header);
    for (label, m) in stage_labels.iter().zip(mats) {
        let cells: Vec<String> = std::iter::once(label.clone()).chain(row_major(m).map(fmt_num)).collect();
        t.push_cells(&cells);
    }
    t
}

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|k| k.to_string()).collect()
}

/// `value.csv`, `policy.csv` and `adversary.csv`.
pub fn write_finite(sys: &FiniteSystem, res: &SolveResult, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let n = sys.n_states();
    let mut value = Table::new(&["stage", "x", "value"]);
    for k in 0..=res.horizon() {
        for x in 0..n {
            value.push_row(&[k, x], &[res.value(k, x)]);
        }
    }
    value.write(&dir.join("value.csv"))?;

    let mut policy = Table::new(&["stage", "x", "u"]);
    for k in 0..res.horizon() {
        for x in 0..n {
            policy.push_row(&[k, x, res.policy(k, x)], &[]);
        }
    }
    policy.write(&dir.join("policy.csv"))?;

    let adversary = match res.adversary() {
        AdversaryTable::Distribution(p) => {
            let nw = sys.n_dist();
            let header: Vec<String> =
                ["stage".to_string(), "x".to_string()].into_iter().chain((0..nw).map(|w| format!("w_{w}"))).collect();
            let mut t = Table::new(&header);
            for (row, probs) in p.chunks(nw).enumerate() {
                t.push_row(&[row / n, row % n], probs);
            }
            t
        }
        AdversaryTable::WorstCase(idx) => {
            let mut t = Table::new(&["stage", "x", "w"]);
            for (row, &w) in idx.iter().enumerate() {
                t.push_row(&[row / n, row % n, w as usize], &[]);
            }
            t
        }
    };
    adversary.write(&dir.join("adversary.csv"))
}

/// `p.csv`, `zeta.csv`, `gain.csv` and `adversary.csv`, one row per stage.
pub fn write_lq_finite(sol: &LqSolution, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let h = sol.horizon();
    let p: Vec<&DMatrix<f64>> = sol.p_mats.iter().collect();
    stage_matrix_table("p", &p, &labels(h + 1)).write(&dir.join("p.csv"))?;

    let mut zeta = Table::new(&["stage", "zeta"]);
    for (k, z) in sol.zetas.iter().enumerate() {
        zeta.push_row(&[k], &[*z]);
    }
    zeta.write(&dir.join("zeta.csv"))?;

    let g: Vec<&DMatrix<f64>> = sol.gains.iter().collect();
    stage_matrix_table("g", &g, &labels(h)).write(&dir.join("gain.csv"))?;
    adversary_table(&sol.adversary_mean_maps.iter().collect::<Vec<_>>(), &sol.adversary_covs.iter().collect::<Vec<_>>(), &labels(h))
        .write(&dir.join("adversary.csv"))
}

/// Same files as the finite-horizon case with a single `inf` row.
pub fn write_lq_infinite(sol: &InfiniteHorizonSolution, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let inf = vec!["inf".to_string()];
    stage_matrix_table("p", &[&sol.p_bar], &inf).write(&dir.join("p.csv"))?;
    stage_matrix_table("g", &[&sol.gain], &inf).write(&dir.join("gain.csv"))?;
    adversary_table(&[&sol.adversary_mean_map], &[&sol.adversary_cov], &inf).write(&dir.join("adversary.csv"))
}

/// Adversary mean map (`mean = map x`) and covariance per stage.
fn adversary_table(means: &[&DMatrix<f64>], covs: &[&DMatrix<f64>], stage_labels: &[String]) -> Table {
    let mut header = vec!["stage".to_string()];
    header.extend(matrix_header("mean", means[0]));
    header.extend(matrix_header("cov", covs[0]));
    let mut t = Table::new(&header);
    for ((label, m), c) in stage_labels.iter().zip(means).zip(covs) {
        let cells: Vec<String> =
            std::iter::once(label.clone()).chain(row_major(m).map(fmt_num)).chain(row_major(c).map(fmt_num)).collect();
        t.push_cells(&cells);
    }
    t
}

fn hex16(digest: &[u8]) -> String {
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// First 16 hex digits of the SHA-256 of the policy indices (little-endian u32).
pub fn finite_policy_hash(res: &SolveResult) -> String {
    let mut h = Sha256::new();
    for &u in res.policy_table() {
        h.update(u.to_le_bytes());
    }
    hex16(&h.finalize())
}

/// Hash of the gains as printed, so equal printed tables hash equally.
pub fn gain_hash(gains: &[&DMatrix<f64>]) -> String {
    let mut h = Sha256::new();
    for g in gains {
        for v in row_major(g) {
            h.update(fmt_num(v).as_bytes());
            h.update(b",");
        }
        h.update(b"\n");
    }
    hex16(&h.finalize())
}

/// Printed gain entries, for Hamming distances between LQ policies.
pub fn gain_cells(gains: &[&DMatrix<f64>]) -> Vec<String> {
    gains.iter().flat_map(|g| row_major(g).map(fmt_num).collect::<Vec<_>>()).collect()
}
