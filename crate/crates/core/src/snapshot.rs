//! Binary field snapshots.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `HRFSNAP\0` |
//! | 4 | format version (`u32`, currently 1) |
//! | 4 | `n` (`u32`) |
//! | 4 | `N` (`u32`) |
//! | 1 | boundary: 0 periodic, 1 frozen |
//! | 4 | shell width (`u32`, 0 when periodic) |
//! | 32 | lattice origin, 4 × `i64` (unused axes 0) |
//! | 32 | shape, 4 × `u64` (unused axes 1) |
//! | 4 | rank `r` (`u32`) |
//! | r | slot codes, one ASCII byte each: `l` lower, `b` lower-barred, `u` upper, `v` upper-barred |
//! | 8 | time (`f64`) |
//! | 16·ncomp·npts | samples as `(re, im)` `f64` pairs |
//!
//! Samples are component-major: component `c` (row-major over the slot
//! indices) occupies a contiguous block of `npts` points, and within a block
//! points are row-major over the real axes `(x₁, y₁, x₂, y₂)`, last fastest.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{HrfError, Result};
use crate::grid::{Boundary, GridSpec, Slot, TensorField, C64};
use crate::metric::{MetricField, METRIC_SLOTS};

pub const MAGIC: &[u8; 8] = b"HRFSNAP\0";
pub const VERSION: u32 = 1;

pub fn write_field<W: Write>(mut w: W, field: &TensorField, time: f64) -> Result<()> {
    let grid = field.grid();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(grid.n() as u32).to_le_bytes())?;
    w.write_all(&(grid.res() as u32).to_le_bytes())?;
    let (mode, shell) = match grid.boundary() {
        Boundary::Periodic => (0u8, 0u32),
        Boundary::Frozen { shell } => (1u8, shell as u32),
    };
    w.write_all(&[mode])?;
    w.write_all(&shell.to_le_bytes())?;
    for a in 0..4 {
        let o = grid.origin().get(a).copied().unwrap_or(0);
        w.write_all(&o.to_le_bytes())?;
    }
    for a in 0..4 {
        let s = grid.shape().get(a).copied().unwrap_or(1) as u64;
        w.write_all(&s.to_le_bytes())?;
    }
    w.write_all(&(field.rank() as u32).to_le_bytes())?;
    let codes: Vec<u8> = field.slots().iter().map(|s| s.code()).collect();
    w.write_all(&codes)?;
    w.write_all(&time.to_le_bytes())?;
    let mut buf = Vec::with_capacity(16 * field.data().len());
    for v in field.data() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

fn read_array<const K: usize, R: Read>(r: &mut R) -> Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b).map_err(|e| HrfError::Format(format!("truncated header: {e}")))?;
    Ok(b)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array::<4, _>(r)?))
}

pub fn read_field<R: Read>(mut r: R) -> Result<(TensorField, f64)> {
    if &read_array::<8, _>(&mut r)? != MAGIC {
        return Err(HrfError::Format("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(HrfError::Format(format!("unsupported version {version}")));
    }
    let n = read_u32(&mut r)? as usize;
    let res = read_u32(&mut r)? as usize;
    let mode = read_array::<1, _>(&mut r)?[0];
    let shell = read_u32(&mut r)? as usize;
    let boundary = match mode {
        0 => Boundary::Periodic,
        1 => Boundary::Frozen { shell },
        m => return Err(HrfError::Format(format!("unknown boundary mode {m}"))),
    };
    let mut origin = [0i64; 4];
    for o in origin.iter_mut() {
        *o = i64::from_le_bytes(read_array::<8, _>(&mut r)?);
    }
    let mut shape = [0usize; 4];
    for s in shape.iter_mut() {
        *s = u64::from_le_bytes(read_array::<8, _>(&mut r)?) as usize;
    }
    if !(1..=2).contains(&n) {
        return Err(HrfError::Format(format!("complex dimension {n} out of range")));
    }
    let grid = GridSpec::from_parts(n, res, boundary, &origin[..2 * n], &shape[..2 * n])
        .map_err(|e| HrfError::Format(e.to_string()))?;
    let rank = read_u32(&mut r)? as usize;
    if rank > 8 {
        return Err(HrfError::Format(format!("rank {rank} too large")));
    }
    let mut codes = vec![0u8; rank];
    r.read_exact(&mut codes).map_err(|e| HrfError::Format(format!("truncated slots: {e}")))?;
    let slots = codes
        .iter()
        .map(|&c| Slot::from_code(c).ok_or_else(|| HrfError::Format(format!("unknown slot code {c}"))))
        .collect::<Result<Vec<_>>>()?;
    let time = f64::from_le_bytes(read_array::<8, _>(&mut r)?);
    let count = n.pow(rank as u32) * grid.npts();
    let mut raw = vec![0u8; 16 * count];
    r.read_exact(&mut raw).map_err(|e| HrfError::Format(format!("truncated samples: {e}")))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(HrfError::Format("trailing bytes after samples".into()));
    }
    let data = raw
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect();
    Ok((TensorField::from_data(grid, &slots, data)?, time))
}

pub fn save_field(path: &Path, field: &TensorField, time: f64) -> Result<()> {
    write_field(BufWriter::new(File::create(path)?), field, time)
}

pub fn load_field(path: &Path) -> Result<(TensorField, f64)> {
    read_field(BufReader::new(File::open(path)?))
}

pub fn save_metric(path: &Path, g: &MetricField, time: f64) -> Result<()> {
    save_field(path, g.field(), time)
}

/// Loads a metric snapshot and validates it.
pub fn load_metric(path: &Path) -> Result<(MetricField, f64)> {
    let (f, t) = load_field(path)?;
    if f.slots() != METRIC_SLOTS {
        return Err(HrfError::Format(format!("expected metric slots, found {:?}", f.slots())));
    }
    Ok((MetricField::new(f)?, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn metric_roundtrip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.snap");
        let g = crate::models::MetricModel::NonKahlerPerturbed { eps: 0.1 }
            .sample(GridSpec::periodic(2, 8).unwrap())
            .unwrap();
        save_metric(&path, &g, 0.25).unwrap();
        let (h, t) = load_metric(&path).unwrap();
        assert_eq!(t, 0.25);
        assert_eq!(h.field(), g.field());
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let g = TensorField::zeros(GridSpec::periodic(1, 8).unwrap(), &[Slot::Lo]);
        let mut buf = Vec::new();
        write_field(&mut buf, &g, 0.0).unwrap();
        assert!(matches!(read_field(&buf[..buf.len() - 1]), Err(HrfError::Format(_))));
        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(read_field(&extra[..]), Err(HrfError::Format(_))));
        buf[0] = b'X';
        assert!(matches!(read_field(&buf[..]), Err(HrfError::Format(_))));
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(
            n in 1usize..=2,
            slots in proptest::collection::vec(0u8..4, 0..3),
            seed in any::<u64>(),
            t in -1e3f64..1e3,
            window in any::<bool>(),
        ) {
            let slots: Vec<Slot> = slots.iter().map(|&c| Slot::from_code(b"lbuv"[c as usize]).unwrap()).collect();
            let grid = if window {
                GridSpec::window(n, 16, &[-3, 5, 2, 9], &[5, 6, 7, 5]).unwrap()
            } else {
                GridSpec::frozen(n, 8, 2).unwrap()
            };
            let cell = std::cell::Cell::new(seed | 1);
            let f = TensorField::from_fn(grid, &slots, |x, out| {
                for o in out.iter_mut() {
                    let mut state = cell.get();
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    cell.set(state);
                    *o = C64::new(x[0] + (state % 1000) as f64 * 1e-3, f64::from_bits(state >> 12 | 0x3ff0_0000_0000_0000));
                }
            });
            let mut buf = Vec::new();
            write_field(&mut buf, &f, t).unwrap();
            let (g, t2) = read_field(&buf[..]).unwrap();
            prop_assert_eq!(t2.to_bits(), t.to_bits());
            prop_assert_eq!(g, f);
        }
    }
}
