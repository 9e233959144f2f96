//! CSV and JSON encodings. Indices in files are one-based.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ModelError, QueueState, SystemSpec, TailMeasure};

#[derive(Debug, Serialize, Deserialize)]
struct TailRow {
    i: usize,
    j: usize,
    x: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct QueueRow {
    j: usize,
    k: usize,
    q: u32,
}

/// Writes `(i, j, x)` rows, level-major within each pool.
pub fn write_tail_csv<W: Write>(x: &TailMeasure, out: W) -> Result<(), ModelError> {
    let mut w = csv::Writer::from_writer(out);
    for j in 0..x.num_pools() {
        for i in 1..=x.depth() {
            w.serialize(TailRow { i, j: j + 1, x: x.get(i, j) })?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads `(i, j, x)` rows. Missing entries are zero; the depth is the largest
/// level present.
pub fn read_tail_csv<R: Read>(input: R) -> Result<TailMeasure, ModelError> {
    let mut rows = Vec::new();
    for row in csv::Reader::from_reader(input).deserialize() {
        let row: TailRow = row?;
        if row.i == 0 || row.j == 0 {
            return Err(ModelError::Format(format!("indices start at 1, got ({}, {})", row.i, row.j)));
        }
        rows.push(row);
    }
    let pools = rows.iter().map(|r| r.j).max().unwrap_or(0);
    let depth = rows.iter().map(|r| r.i).max().unwrap_or(0);
    let mut columns = vec![vec![0.0; depth]; pools];
    for r in rows {
        columns[r.j - 1][r.i - 1] = r.x;
    }
    TailMeasure::new(depth, columns)
}

pub fn tail_to_json(x: &TailMeasure) -> Result<String, ModelError> {
    Ok(serde_json::to_string_pretty(x)?)
}

pub fn tail_from_json(text: &str) -> Result<TailMeasure, ModelError> {
    Ok(serde_json::from_str(text)?)
}

/// Writes `(j, k, q)` rows.
pub fn write_queue_csv<W: Write>(q: &QueueState, out: W) -> Result<(), ModelError> {
    let mut w = csv::Writer::from_writer(out);
    for (j, pool) in q.pools().iter().enumerate() {
        for (k, &len) in pool.iter().enumerate() {
            w.serialize(QueueRow { j: j + 1, k: k + 1, q: len })?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads `(j, k, q)` rows; every server of `spec` must appear exactly once.
pub fn read_queue_csv<R: Read>(spec: &SystemSpec, input: R) -> Result<QueueState, ModelError> {
    let mut queues: Vec<Vec<Option<u32>>> = spec.pool_sizes().iter().map(|&n| vec![None; n]).collect();
    for row in csv::Reader::from_reader(input).deserialize() {
        let row: QueueRow = row?;
        let slot = row
            .j
            .checked_sub(1)
            .and_then(|j| queues.get_mut(j))
            .and_then(|p| row.k.checked_sub(1).and_then(|k| p.get_mut(k)))
            .ok_or_else(|| ModelError::Format(format!("no server ({}, {}) in this system", row.j, row.k)))?;
        if slot.replace(row.q).is_some() {
            return Err(ModelError::Format(format!("server ({}, {}) listed twice", row.j, row.k)));
        }
    }
    let queues = queues
        .into_iter()
        .enumerate()
        .map(|(j, p)| {
            p.into_iter()
                .enumerate()
                .map(|(k, v)| v.ok_or_else(|| ModelError::Format(format!("server ({}, {}) missing", j + 1, k + 1))))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    QueueState::new(spec, queues)
}

/// Writes `(t, i, j, x)` rows for every sampled measure.
pub fn write_trajectory_csv<W: Write>(traj: &[(f64, TailMeasure)], out: W) -> Result<(), ModelError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "i", "j", "x"])?;
    for (t, x) in traj {
        for j in 0..x.num_pools() {
            for i in 1..=x.depth() {
                w.write_record([t.to_string(), i.to_string(), (j + 1).to_string(), x.get(i, j).to_string()])?;
            }
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_csv_round_trip() {
        let x = TailMeasure::new(3, vec![vec![1.0, 0.5], vec![0.25]]).unwrap();
        let mut buf = Vec::new();
        write_tail_csv(&x, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i,j,x\n1,1,1.0\n"));
        assert_eq!(read_tail_csv(&buf[..]).unwrap(), x);
    }

    #[test]
    fn tail_json_round_trip_and_validation() {
        let x = TailMeasure::new(2, vec![vec![0.75, 0.5]]).unwrap();
        assert_eq!(tail_from_json(&tail_to_json(&x).unwrap()).unwrap(), x);
        assert!(tail_from_json(r#"{"depth":2,"pools":[[0.2,0.7]]}"#).is_err());
    }

    #[test]
    fn queue_csv_round_trip() {
        let spec = SystemSpec::two_speed_reference(10, 0.5).unwrap();
        let q = QueueState::new(&spec, vec![vec![3, 0], vec![1, 2, 0, 0, 4, 0, 0, 1]]).unwrap();
        let mut buf = Vec::new();
        write_queue_csv(&q, &mut buf).unwrap();
        assert_eq!(read_queue_csv(&spec, &buf[..]).unwrap(), q);
        let truncated = String::from_utf8(buf).unwrap().lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(read_queue_csv(&spec, truncated.as_bytes()).is_err());
    }
}
