use std::path::Path;

use super::{DataError, Dims, Trajectory};

fn header_for(dims: Option<Dims>) -> Vec<String> {
    let mut h = vec!["traj_id".to_string(), "t_sec".to_string()];
    if let Some(d) = dims {
        h.extend((0..d.n_x).map(|i| format!("x_{i}")));
        h.extend((0..d.n_u).map(|i| format!("u_{i}")));
        h.extend((0..d.n_d).map(|i| format!("d_{i}")));
    }
    h
}

/// Writes all trajectories into one CSV. Values use the shortest exact decimal form.
pub fn save_trajectories(path: impl AsRef<Path>, trajs: &[Trajectory]) -> Result<(), DataError> {
    let path = path.as_ref();
    let dims = trajs.iter().find_map(Trajectory::dims);
    for tr in trajs {
        tr.validate().map_err(DataError::Invalid)?;
        if tr.dims().is_some() && tr.dims() != dims {
            return Err(DataError::Invalid(format!(
                "trajectory {} has different channel counts",
                tr.id
            )));
        }
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| DataError::io(path, e))?;
    w.write_record(header_for(dims)).map_err(|e| DataError::io(path, e))?;
    let mut row = Vec::new();
    for tr in trajs {
        for k in 0..tr.len() {
            row.clear();
            row.push(tr.id.to_string());
            row.push(tr.t[k].to_string());
            row.extend(tr.x[k].iter().chain(&tr.u[k]).chain(&tr.d[k]).map(f64::to_string));
            w.write_record(&row).map_err(|e| DataError::io(path, e))?;
        }
    }
    w.flush().map_err(|e| DataError::io(path, e))?;
    Ok(())
}

/// Counts a contiguous `prefix_0, prefix_1, ..` run starting at `from`.
fn count_group(header: &[String], from: usize, prefix: &str) -> usize {
    header[from..]
        .iter()
        .enumerate()
        .take_while(|(i, name)| **name == format!("{prefix}_{i}"))
        .count()
}

fn parse_header(header: &[String]) -> Result<Option<Dims>, DataError> {
    let bad = |m: String| DataError::Parse { line: 1, message: m };
    if header.len() < 2 || header[0] != "traj_id" || header[1] != "t_sec" {
        return Err(bad("header must start with traj_id,t_sec".into()));
    }
    if header.len() == 2 {
        return Ok(None);
    }
    let n_x = count_group(header, 2, "x");
    let n_u = count_group(header, 2 + n_x, "u");
    let n_d = count_group(header, 2 + n_x + n_u, "d");
    if 2 + n_x + n_u + n_d != header.len() {
        let at = 2 + n_x + n_u + n_d;
        return Err(bad(format!(
            "unexpected column {:?} at position {at}; expected x_i, u_i, d_i numbered from 0",
            header[at]
        )));
    }
    if n_x == 0 || n_u == 0 || n_d == 0 {
        return Err(bad(format!(
            "missing column group: found {n_x} x, {n_u} u and {n_d} d columns"
        )));
    }
    Ok(Some(Dims { n_x, n_u, n_d }))
}

pub fn load_trajectories(path: impl AsRef<Path>) -> Result<Vec<Trajectory>, DataError> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| DataError::io(path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| DataError::Parse { line: 1, message: e.to_string() })?
        .iter()
        .map(str::to_owned)
        .collect();
    let dims = parse_header(&header)?;
    let mut out: Vec<Trajectory> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let perr = |message: String| DataError::Parse { line, message };
        let rec = rec.map_err(|e| perr(e.to_string()))?;
        let Some(d) = dims else {
            return Err(perr("data row in a file without channel columns".into()));
        };
        if rec.len() != header.len() {
            return Err(perr(format!("expected {} fields, got {}", header.len(), rec.len())));
        }
        let id: usize = rec[0]
            .trim()
            .parse()
            .map_err(|e| perr(format!("traj_id {:?}: {e}", &rec[0])))?;
        let mut vals = Vec::with_capacity(rec.len() - 1);
        for (k, f) in rec.iter().enumerate().skip(1) {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|e| perr(format!("column {}: {f:?}: {e}", header[k])))?;
            vals.push(v);
        }
        if out.last().map_or(true, |t| t.id != id) {
            if out.iter().any(|t| t.id == id) {
                return Err(perr(format!("rows of trajectory {id} are not contiguous")));
            }
            out.push(Trajectory { id, ..Default::default() });
        }
        let tr = out.last_mut().expect("pushed above");
        let t = vals[0];
        if tr.t.last().is_some_and(|&p| !(t > p)) {
            return Err(perr(format!("t_sec {t} does not increase")));
        }
        let x = vals[1..1 + d.n_x].to_vec();
        let u = vals[1 + d.n_x..1 + d.n_x + d.n_u].to_vec();
        let dd = vals[1 + d.n_x + d.n_u..].to_vec();
        tr.push(x, u, dd, t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: usize, len: usize) -> Trajectory {
        let mut tr = Trajectory { id, ..Default::default() };
        for k in 0..len {
            let v = (k as f64 + 0.1) / 3.0;
            tr.push(vec![v, 1e-17 * v, 1e300 / (v + 1.0)], vec![-v], vec![v.sqrt(), v.exp()], 900.0 * k as f64);
        }
        tr
    }

    #[test]
    fn five_step_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let trs = vec![sample(0, 5), sample(3, 4)];
        save_trajectories(&p, &trs).unwrap();
        let back = load_trajectories(&p).unwrap();
        assert_eq!(back, trs);
    }

    #[test]
    fn empty_list_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        save_trajectories(&p, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().trim(), "traj_id,t_sec");
        assert!(load_trajectories(&p).unwrap().is_empty());
    }

    #[test]
    fn missing_column_fails_on_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "traj_id,t_sec,x_0,x_2,u_0,d_0\n0,0,1,2,3,4\n").unwrap();
        match load_trajectories(&p) {
            Err(DataError::Parse { line: 1, .. }) => {}
            other => panic!("expected header error, got {other:?}"),
        }
        std::fs::write(&p, "traj_id,x_0,u_0,d_0\n0,1,3,4\n").unwrap();
        assert!(matches!(load_trajectories(&p), Err(DataError::Parse { line: 1, .. })));
    }

    #[test]
    fn bad_row_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        std::fs::write(&p, "traj_id,t_sec,x_0,u_0,d_0\n0,0,1,2,3\n0,900,1,oops,3\n").unwrap();
        assert!(matches!(load_trajectories(&p), Err(DataError::Parse { line: 3, .. })));
        std::fs::write(&p, "traj_id,t_sec,x_0,u_0,d_0\n0,0,1,2,3\n0,900,1,2\n").unwrap();
        let e = load_trajectories(&p).unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
    }
}
