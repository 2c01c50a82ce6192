//! Plain-text output formats.
//!
//! Fields are written as `x y value` rows grouped by x-scanline with a blank
//! line between scanlines, which contour plotters read directly. Inactive
//! cells are written as `NaN`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::sde::Trajectory;
use crate::spatial::{Field, Mesh};

/// Scanline dump of `value(i, j)` at `(xs[i], ys[j])`.
pub fn scanlines(xs: &[f64], ys: &[f64], value: impl Fn(usize, usize) -> f64) -> String {
    let mut s = String::new();
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        for (j, y) in ys.iter().enumerate() {
            writeln!(s, "{x} {y} {}", value(i, j)).expect("writing to a String cannot fail");
        }
    }
    s
}

/// Rows `(x, y, value)` of a scanline dump, in file order.
pub fn parse_scanlines(text: &str) -> Result<Vec<[f64; 3]>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected 3 columns, got {}",
                    n + 1,
                    cols.len()
                )));
            }
            let mut row = [0.0; 3];
            for (dst, col) in row.iter_mut().zip(&cols) {
                *dst = col.parse().map_err(|_| {
                    Error::Parse(format!("line {}: `{col}` is not a number", n + 1))
                })?;
            }
            Ok(row)
        })
        .collect()
}

/// Component `c` of a nodal control field.
pub fn grid_field_dump(field: &GridField, c: usize) -> String {
    let g = field.grid;
    let coords: Vec<f64> = (0..g.n).map(|i| g.coord(i)).collect();
    scanlines(&coords, &coords, |i, j| field.values[c][g.idx(i, j)])
}

/// A spatial field on its mesh; land cells are `NaN`.
pub fn spatial_field_dump(mesh: &Mesh, field: &Field) -> String {
    let xs: Vec<f64> = (0..mesh.nx).map(|i| (i as f64 + 0.5) * mesh.h).collect();
    let ys: Vec<f64> = (0..mesh.ny).map(|j| (j as f64 + 0.5) * mesh.h).collect();
    scanlines(&xs, &ys, |i, j| {
        let k = mesh.idx(i, j);
        if mesh.sea[k] {
            field.values[k]
        } else {
            f64::NAN
        }
    })
}

/// Trajectory CSV `t,B1..Bd,u1..ud`. The control at the final time repeats
/// the last applied value.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let d = traj.states.first().map_or(0, |s| s.b.len());
    let mut s = String::from("t");
    for i in 1..=d {
        write!(s, ",B{i}").expect("infallible");
    }
    for i in 1..=d {
        write!(s, ",u{i}").expect("infallible");
    }
    s.push('\n');
    for (k, state) in traj.states.iter().enumerate() {
        let u = traj.controls.get(k).or(traj.controls.last());
        write!(s, "{}", state.t).expect("infallible");
        for b in &state.b {
            write!(s, ",{b}").expect("infallible");
        }
        for i in 0..d {
            write!(s, ",{}", u.map_or(f64::NAN, |u| u[i])).expect("infallible");
        }
        s.push('\n');
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
