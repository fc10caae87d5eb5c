use std::io::{Read, Write};

use nalgebra::DVector;

use super::{DynamicsError, Grid, Trajectory};

fn csv_err(e: impl std::fmt::Display) -> DynamicsError {
    DynamicsError::Csv(e.to_string())
}

/// Writes `t, x0.., V0.., eta0..`, one row per node. The last row carries
/// zero velocity and multipliers.
pub fn write_csv<W: Write>(traj: &Trajectory, out: W) -> Result<(), DynamicsError> {
    let n = traj.states[0].len();
    let s = traj.cone_multipliers.first().map_or(0, |e| e.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|c| format!("x{c}")));
    header.extend((0..n).map(|c| format!("V{c}")));
    header.extend((0..s).map(|c| format!("eta{c}")));
    w.write_record(&header).map_err(csv_err)?;
    let zeros_v = DVector::zeros(n);
    let zeros_e = DVector::zeros(s);
    for (i, (t, x)) in traj.grid.nodes().iter().zip(&traj.states).enumerate() {
        let v = traj.velocities.get(i).unwrap_or(&zeros_v);
        let e = traj.cone_multipliers.get(i).unwrap_or(&zeros_e);
        let row: Vec<String> = std::iter::once(*t)
            .chain(x.iter().copied())
            .chain(v.iter().copied())
            .chain(e.iter().copied())
            .map(|f| f.to_string())
            .collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

/// Reads a file produced by [`write_csv`].
pub fn read_csv<R: Read>(input: R) -> Result<Trajectory, DynamicsError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    let n = header.iter().filter(|h| h.starts_with('x')).count();
    let s = header.iter().filter(|h| h.starts_with("eta")).count();
    if header.len() != 1 + 2 * n + s || header.get(0) != Some("t") {
        return Err(DynamicsError::Csv("unexpected header".into()));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut velocities = Vec::new();
    let mut etas = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let vals = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(csv_err))
            .collect::<Result<Vec<_>, _>>()?;
        if vals.len() != header.len() {
            return Err(DynamicsError::Csv("ragged row".into()));
        }
        times.push(vals[0]);
        states.push(DVector::from_row_slice(&vals[1..1 + n]));
        velocities.push(DVector::from_row_slice(&vals[1 + n..1 + 2 * n]));
        etas.push(DVector::from_row_slice(&vals[1 + 2 * n..]));
    }
    if times.len() < 2 {
        return Err(DynamicsError::Csv("need at least two rows".into()));
    }
    velocities.pop();
    etas.pop();
    let grid = Grid::from_steps(times.windows(2).map(|w| w[1] - w[0]).collect())?;
    Ok(Trajectory {
        grid,
        states,
        velocities,
        cone_multipliers: etas,
    })
}
