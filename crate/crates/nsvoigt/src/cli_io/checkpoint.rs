//! Checkpoint persistence: a plain-text header (grid, physics scalars, time,
//! step index, field directory) followed by the raw little-endian f64 field
//! arrays in axis-major storage order. Round trips are bit-exact; floats in
//! the header are written in Rust's shortest round-trip form.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::domain::{AxisBc, Grid};
use crate::field::{Buf, Layout, VectorField};
use crate::tke::KField;
use crate::voigt_core::State;
use crate::{Error, Result};

const MAGIC: &str = "nsvoigt-checkpoint v1";

fn bc_name(bc: AxisBc) -> &'static str {
    match bc {
        AxisBc::Periodic => "periodic",
        AxisBc::Wall => "wall",
    }
}

fn parse_bc(s: &str) -> Result<AxisBc> {
    match s {
        "periodic" => Ok(AxisBc::Periodic),
        "wall" => Ok(AxisBc::Wall),
        other => Err(Error::Checkpoint(format!("unknown bc tag {other}"))),
    }
}

/// Writes a checkpoint; `k` is included for coupled runs, `physics` carries
/// informational key/value pairs echoed into the header.
pub fn write_checkpoint_with_meta(
    path: &Path,
    grid: &Grid,
    state: &State,
    k: Option<&KField>,
    physics: &[(&str, String)],
) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(std::fs::File::create(&tmp)?);
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "time {}", state.t)?;
        writeln!(w, "step {}", state.step_index)?;
        for (key, value) in physics {
            writeln!(w, "physics.{key} {value}")?;
        }
        writeln!(w, "grid.dim {}", grid.dim)?;
        write!(w, "grid.cells")?;
        for a in 0..grid.dim {
            write!(w, " {}", grid.cells[a])?;
        }
        writeln!(w)?;
        write!(w, "grid.extents")?;
        for a in 0..grid.dim {
            write!(w, " {}", grid.spec.extents[a])?;
        }
        writeln!(w)?;
        write!(w, "grid.bc")?;
        for a in 0..grid.dim {
            write!(w, " {}", bc_name(grid.bc[a]))?;
        }
        writeln!(w)?;
        let mut fields: Vec<(String, &Buf)> = Vec::new();
        for (c, comp) in state.v.comp.iter().enumerate() {
            fields.push((format!("v{c}"), comp));
        }
        fields.push(("p".into(), &state.p));
        if let Some(kf) = k {
            fields.push(("k".into(), &kf.k));
        }
        for (name, buf) in &fields {
            writeln!(w, "field {name} {}", buf.data.len())?;
        }
        writeln!(w, "data")?;
        for (_, buf) in &fields {
            for v in &buf.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes a checkpoint without physics metadata.
pub fn write_checkpoint(path: &Path, grid: &Grid, state: &State, k: Option<&KField>) -> Result<()> {
    write_checkpoint_with_meta(path, grid, state, k, &[])
}

/// Loads a checkpoint written for `grid`; returns the state and the TKE
/// field when present.
pub fn load_checkpoint(path: &Path, grid: &Grid) -> Result<(State, Option<KField>)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(Error::Checkpoint(format!(
            "version mismatch: expected '{MAGIC}', found '{}'",
            line.trim_end()
        )));
    }
    let mut time = 0.0f64;
    let mut step = 0u64;
    let mut field_names: Vec<(String, usize)> = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Checkpoint("missing data section".into()));
        }
        let l = line.trim_end();
        if l == "data" {
            break;
        }
        let mut parts = l.split_whitespace();
        let key = parts.next().unwrap_or("");
        match key {
            "time" => {
                time = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Checkpoint("bad time".into()))?;
            }
            "step" => {
                step = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Checkpoint("bad step".into()))?;
            }
            "grid.dim" => {
                let dim: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Checkpoint("bad grid.dim".into()))?;
                if dim != grid.dim {
                    return Err(Error::Checkpoint(format!(
                        "grid dim mismatch: checkpoint {dim}, grid {}",
                        grid.dim
                    )));
                }
            }
            "grid.cells" => {
                for a in 0..grid.dim {
                    let n: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::Checkpoint("bad grid.cells".into()))?;
                    if n != grid.cells[a] {
                        return Err(Error::Checkpoint("grid cells mismatch".into()));
                    }
                }
            }
            "grid.extents" => {
                for a in 0..grid.dim {
                    let e: f64 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::Checkpoint("bad grid.extents".into()))?;
                    if e != grid.spec.extents[a] {
                        return Err(Error::Checkpoint("grid extents mismatch".into()));
                    }
                }
            }
            "grid.bc" => {
                for a in 0..grid.dim {
                    let bc = parse_bc(
                        parts.next().ok_or_else(|| Error::Checkpoint("bad grid.bc".into()))?,
                    )?;
                    if bc != grid.bc[a] {
                        return Err(Error::Checkpoint("grid bc mismatch".into()));
                    }
                }
            }
            "field" => {
                let name = parts
                    .next()
                    .ok_or_else(|| Error::Checkpoint("unnamed field".into()))?
                    .to_string();
                let len: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Checkpoint("bad field length".into()))?;
                field_names.push((name, len));
            }
            other if other.starts_with("physics.") => {} // informational
            other => return Err(Error::Checkpoint(format!("unknown header key {other}"))),
        }
    }

    let mut state = State {
        t: time,
        step_index: step,
        v: VectorField::zeros(grid),
        p: Buf::zeros(Layout::cell(grid.cells)),
    };
    let mut k: Option<KField> = None;
    for (name, len) in &field_names {
        let mut bytes = vec![0u8; len * 8];
        r.read_exact(&mut bytes)?;
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(cstr) = name.strip_prefix('v') {
            let c: usize = cstr
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad field name {name}")))?;
            if c >= grid.dim || state.v.comp[c].data.len() != *len {
                return Err(Error::Checkpoint(format!("field {name} has wrong shape")));
            }
            state.v.comp[c].data = data;
        } else if name == "p" {
            if state.p.data.len() != *len {
                return Err(Error::Checkpoint("pressure field has wrong shape".into()));
            }
            state.p.data = data;
        } else if name == "k" {
            let mut kf = KField::zeros(grid);
            if kf.k.data.len() != *len {
                return Err(Error::Checkpoint("tke field has wrong shape".into()));
            }
            kf.k.data = data;
            k = Some(kf);
        } else {
            return Err(Error::Checkpoint(format!("unknown field {name}")));
        }
    }
    state.v.solenoidal = true;
    Ok((state, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, GridSpec};
    use crate::rng::SplitMix64;

    #[test]
    fn round_trip_is_bit_exact() {
        let grid = build_grid(GridSpec::channel_2d(1.0, 1.0, 8, 6).unwrap()).unwrap();
        let mut rng = SplitMix64::new(12);
        let mut state = State {
            t: 0.1234567890123456789,
            step_index: 42,
            v: VectorField::from_fn(&grid, |_, _| rng.next_sym()),
            p: Buf::from_fn(Layout::cell(grid.cells), |_| rng.next_sym()),
        };
        state.v.solenoidal = true;
        let k = KField::from_fn(&grid, |_| rng.next_f64());
        let dir = std::env::temp_dir().join("nsvoigt_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("state.ckpt");
        write_checkpoint(&path, &grid, &state, Some(&k)).unwrap();
        let (loaded, kl) = load_checkpoint(&path, &grid).unwrap();
        assert_eq!(loaded.t.to_bits(), state.t.to_bits());
        assert_eq!(loaded.step_index, 42);
        for c in 0..grid.dim {
            assert_eq!(loaded.v.comp[c].data, state.v.comp[c].data);
        }
        assert_eq!(loaded.p.data, state.p.data);
        assert_eq!(kl.unwrap().k.data, k.k.data);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn version_and_grid_mismatch_detected() {
        let grid = build_grid(GridSpec::channel_2d(1.0, 1.0, 8, 6).unwrap()).unwrap();
        let state = State {
            t: 0.0,
            step_index: 0,
            v: VectorField::zeros(&grid),
            p: Buf::zeros(Layout::cell(grid.cells)),
        };
        let dir = std::env::temp_dir().join("nsvoigt_ckpt_test2");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("s.ckpt");
        write_checkpoint(&path, &grid, &state, None).unwrap();
        let other = build_grid(GridSpec::channel_2d(1.0, 1.0, 8, 8).unwrap()).unwrap();
        assert!(load_checkpoint(&path, &other).is_err());

        std::fs::write(&path, b"nsvoigt-checkpoint v999\ndata\n").unwrap();
        assert!(matches!(load_checkpoint(&path, &grid), Err(Error::Checkpoint(_))));
        std::fs::remove_file(&path).unwrap();
    }
}
