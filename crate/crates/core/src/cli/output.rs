//! CSV trajectory export and import, plus staged directory writes.

use std::fs;
use std::path::{Path, PathBuf};

use crate::dynamics::{ControlTrajectory, StateTrajectory, TimeGrid};
use crate::error::{Error, Result};
use crate::gamecore::CostateTrajectory;
use crate::netgraph::Network;

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

fn to_csv(header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let path = Path::new("<memory>");
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.into_inner()
        .map_err(|e| Error::Config(format!("csv buffer: {e}")))
}

/// `t,x_0,…,x_{N−1}`.
pub fn state_csv(x: &StateTrajectory) -> Result<Vec<u8>> {
    let grid = x.grid();
    let header = std::iter::once("t".to_string())
        .chain((0..x.node_count()).map(|i| format!("x_{i}")))
        .collect();
    to_csv(
        header,
        (0..grid.len()).map(|k| {
            std::iter::once(grid.time(k).to_string())
                .chain(x.at(k).iter().map(f64::to_string))
                .collect()
        }),
    )
}

/// `t,u_i_j,…` in edge order.
pub fn control_csv(net: &Network, u: &ControlTrajectory) -> Result<Vec<u8>> {
    let grid = u.grid();
    let header = std::iter::once("t".to_string())
        .chain(net.edges().iter().map(|e| format!("u_{}_{}", e.from, e.to)))
        .collect();
    to_csv(
        header,
        (0..grid.len()).map(|k| {
            std::iter::once(grid.time(k).to_string())
                .chain(u.at(k).iter().map(f64::to_string))
                .collect()
        }),
    )
}

/// `t,p_0_0,…,p_{N−1}_{N−1}`. Entries that were not kept are left out;
/// a shared (central) costate is written as `lambda_j`.
pub fn costate_csv(p: &CostateTrajectory) -> Result<Vec<u8>> {
    let n = p.node_count();
    let grid = p.grid();
    let shared = p.rows() == 1;
    let diagonal = p.rows() == 0;
    let header = std::iter::once("t".to_string())
        .chain((0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter_map(|(i, j)| {
            if shared {
                (i == 0).then(|| format!("lambda_{j}"))
            } else if diagonal {
                (i == j).then(|| format!("p_{i}_{j}"))
            } else {
                Some(format!("p_{i}_{j}"))
            }
        }))
        .collect();
    to_csv(
        header,
        (0..grid.len()).map(|k| {
            let mut row = vec![grid.time(k).to_string()];
            for i in 0..n {
                if shared {
                    if i == 0 {
                        row.extend(p.row(k, 0).expect("shared row").iter().map(f64::to_string));
                    }
                } else if diagonal {
                    row.push(p.own(k, i).to_string());
                } else {
                    row.extend(p.row(k, i).expect("full rows").iter().map(f64::to_string));
                }
            }
            row
        }),
    )
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (idx, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    line: idx + 2,
                    message: format!("{f:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if header.first().map(String::as_str) != Some("t") || rows.len() < 3 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: "expected a `t` column and at least three rows".into(),
        });
    }
    Ok((header, rows))
}

fn grid_of(path: &Path, rows: &[Vec<f64>]) -> Result<TimeGrid> {
    let grid = TimeGrid::new(rows[rows.len() - 1][0], rows.len() - 1)?;
    for (k, row) in rows.iter().enumerate() {
        if row[0] != grid.time(k) {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: k + 2,
                message: format!("time {} is not on a uniform grid", row[0]),
            });
        }
    }
    Ok(grid)
}

/// Read a file written by [`state_csv`].
pub fn read_state_csv(path: &Path) -> Result<StateTrajectory> {
    let (header, rows) = read_table(path)?;
    let grid = grid_of(path, &rows)?;
    let n = header.len() - 1;
    let values = rows.iter().flat_map(|r| r[1..].iter().copied()).collect();
    StateTrajectory::from_rows(grid, n, values)
}

/// Read a file written by [`control_csv`], matching columns to `net`'s
/// edges by name.
pub fn read_control_csv(path: &Path, net: &Network) -> Result<ControlTrajectory> {
    let (header, rows) = read_table(path)?;
    let grid = grid_of(path, &rows)?;
    let mut column_edge = Vec::with_capacity(header.len() - 1);
    for name in &header[1..] {
        let edge = name
            .strip_prefix("u_")
            .and_then(|rest| rest.split_once('_'))
            .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
            .and_then(|(a, b)| net.edge_index(a, b))
            .ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: 1,
                message: format!("column {name:?} names no edge of the network"),
            })?;
        column_edge.push(edge);
    }
    if column_edge.len() != net.edge_count() {
        return Err(Error::dim("control columns", net.edge_count(), column_edge.len()));
    }
    let m = net.edge_count();
    let mut values = vec![0.0; rows.len() * m];
    for (k, row) in rows.iter().enumerate() {
        for (c, &e) in column_edge.iter().enumerate() {
            values[k * m + e] = row[c + 1];
        }
    }
    ControlTrajectory::from_rows(grid, m, values)
}

/// Files are rendered in memory first, then written to a hidden staging
/// directory next to the target and renamed into place. A failure before
/// [`StagedDir::commit`] leaves the target untouched.
pub struct StagedDir {
    target: PathBuf,
    staging: PathBuf,
    files: Vec<String>,
}

impl StagedDir {
    pub fn new(target: &Path) -> Result<StagedDir> {
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
        let name = target
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into());
        let staging = parent.join(format!(".{name}.staging-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        }
        fs::create_dir(&staging).map_err(|e| Error::io(&staging, e))?;
        Ok(StagedDir {
            target: target.to_path_buf(),
            staging,
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.staging.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn commit(mut self) -> Result<PathBuf> {
        fs::create_dir_all(&self.target).map_err(|e| Error::io(&self.target, e))?;
        for name in std::mem::take(&mut self.files) {
            let (from, to) = (self.staging.join(&name), self.target.join(&name));
            fs::rename(&from, &to).map_err(|e| Error::io(&to, e))?;
        }
        Ok(self.target.clone())
    }
}

impl Drop for StagedDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.staging);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::integrate_forward;

    #[test]
    fn state_and_control_round_trip() {
        let net = Network::uniform(3, [(0, 1, 1.0), (2, 0, 0.5), (1, 2, 0.7)], 0.3, 0.1).unwrap();
        let grid = TimeGrid::new(3.0, 30).unwrap();
        let u = ControlTrajectory::constant(grid, &[0.3, 0.123456789, 0.5]);
        let x = integrate_forward(&net, &grid, &[0.1, 0.2, 0.3], &u).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (sp, cp) = (dir.path().join("s.csv"), dir.path().join("c.csv"));
        fs::write(&sp, state_csv(&x).unwrap()).unwrap();
        fs::write(&cp, control_csv(&net, &u).unwrap()).unwrap();
        assert_eq!(read_state_csv(&sp).unwrap(), x);
        assert_eq!(read_control_csv(&cp, &net).unwrap(), u);
        let header = fs::read_to_string(&cp).unwrap();
        assert!(header.starts_with("t,u_0_1,u_1_2,u_2_0\n"));
    }

    #[test]
    fn staged_dir_is_all_or_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("out");
        {
            let mut s = StagedDir::new(&target).unwrap();
            s.write("a.txt", b"a").unwrap();
        }
        assert!(!target.exists());
        let mut s = StagedDir::new(&target).unwrap();
        s.write("a.txt", b"a").unwrap();
        s.commit().unwrap();
        assert_eq!(fs::read_to_string(target.join("a.txt")).unwrap(), "a");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
