//! Compact binary cache for solved value grids, keyed by spec hash and grid
//! parameters. Little-endian, versioned; a mismatched key or truncated file
//! loads as `None` rather than an error so callers can fall back to solving.

use std::io::{self, Read, Write};
use std::path::Path;

use crate::dp::{Grid1D, Grid2D, TwoRxStage, ValueGrid1, ValueGrid2};
use crate::model::ValidatedSpec;

const MAGIC: &[u8; 4] = b"UFDC";
const VERSION: u32 = 1;

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u32(&mut self, v: u32) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64s(&mut self, vs: &[f64]) -> io::Result<()> {
        for v in vs {
            self.f64(*v)?;
        }
        Ok(())
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn u32(&mut self) -> io::Result<u32> {
        let mut b = [0u8; 4];
        self.0.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn u64(&mut self) -> io::Result<u64> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn f64(&mut self) -> io::Result<f64> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    fn f64s(&mut self, n: usize) -> io::Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f64()?);
        }
        Ok(out)
    }
}

fn grid_matches(step: f64, nodes: u64, grid: &Grid1D) -> bool {
    step.to_bits() == grid.step().to_bits() && nodes as usize == grid.num_nodes()
}

/// Writes a solved single-receiver grid.
pub fn save_1rx(path: &Path, spec_hash: u64, vg: &ValueGrid1) -> io::Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = Writer(io::BufWriter::new(f));
    w.0.write_all(MAGIC)?;
    w.u32(VERSION)?;
    w.u32(1)?;
    w.u64(spec_hash)?;
    w.f64(vg.grid().step())?;
    w.u64(vg.grid().num_nodes() as u64)?;
    w.u64(vg.horizon() as u64)?;
    w.u64(vg.num_states() as u64)?;
    for n in 0..=vg.horizon() {
        for s in 0..vg.num_states() {
            w.f64s(&vg.v[n][s])?;
        }
    }
    for n in 1..=vg.horizon() {
        for s in 0..vg.num_states() {
            w.f64s(&vg.zstar[n - 1][s])?;
        }
    }
    Ok(())
}

/// Loads a single-receiver grid if the key matches; `None` on any mismatch.
pub fn load_1rx(path: &Path, spec_hash: u64, grid: &Grid1D) -> Option<ValueGrid1> {
    let f = std::fs::File::open(path).ok()?;
    let mut r = Reader(io::BufReader::new(f));
    let mut magic = [0u8; 4];
    r.0.read_exact(&mut magic).ok()?;
    if &magic != MAGIC || r.u32().ok()? != VERSION || r.u32().ok()? != 1 {
        return None;
    }
    if r.u64().ok()? != spec_hash {
        return None;
    }
    let step = r.f64().ok()?;
    let nodes = r.u64().ok()?;
    if !grid_matches(step, nodes, grid) {
        return None;
    }
    let horizon = r.u64().ok()? as usize;
    let n_states = r.u64().ok()? as usize;
    let mut v = Vec::with_capacity(horizon + 1);
    for _ in 0..=horizon {
        let mut per_state = Vec::with_capacity(n_states);
        for _ in 0..n_states {
            per_state.push(r.f64s(nodes as usize).ok()?);
        }
        v.push(per_state);
    }
    let mut zstar = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut per_state = Vec::with_capacity(n_states);
        for _ in 0..n_states {
            per_state.push(r.f64s(nodes as usize).ok()?);
        }
        zstar.push(per_state);
    }
    Some(ValueGrid1::from_parts(grid.clone(), horizon, v, zstar))
}

/// Writes a solved two-receiver grid.
pub fn save_2rx(path: &Path, spec_hash: u64, vg: &ValueGrid2) -> io::Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = Writer(io::BufWriter::new(f));
    w.0.write_all(MAGIC)?;
    w.u32(VERSION)?;
    w.u32(2)?;
    w.u64(spec_hash)?;
    w.f64(vg.grid().axis1.step())?;
    w.u64(vg.grid().axis1.num_nodes() as u64)?;
    w.f64(vg.grid().axis2.step())?;
    w.u64(vg.grid().axis2.num_nodes() as u64)?;
    w.u64(vg.horizon() as u64)?;
    let js_count = vg.num_joint_states();
    w.u64(js_count as u64)?;
    for n in 0..=vg.horizon() {
        for js in 0..js_count {
            w.f64s(&vg.v[n][js])?;
        }
    }
    for n in 0..vg.horizon() {
        for js in 0..js_count {
            w.f64s(&vg.g[n][js])?;
        }
    }
    for n in 0..vg.horizon() {
        for js in 0..js_count {
            for &(y1, y2) in &vg.ystar[n][js] {
                w.f64(y1)?;
                w.f64(y2)?;
            }
        }
    }
    for n in 0..vg.horizon() {
        for js in 0..js_count {
            let (b1, b2) = vg.b_grid[n][js];
            w.f64(b1)?;
            w.f64(b2)?;
        }
    }
    Ok(())
}

/// Loads a two-receiver grid if the key matches. The spec rebuilds the
/// channel metadata; only the tables come from disk.
pub fn load_2rx(
    path: &Path,
    spec_hash: u64,
    spec: &ValidatedSpec,
    grid: &Grid2D,
) -> Option<ValueGrid2> {
    let stage = TwoRxStage::from_spec(spec).ok()?;
    let f = std::fs::File::open(path).ok()?;
    let mut r = Reader(io::BufReader::new(f));
    let mut magic = [0u8; 4];
    r.0.read_exact(&mut magic).ok()?;
    if &magic != MAGIC || r.u32().ok()? != VERSION || r.u32().ok()? != 2 {
        return None;
    }
    if r.u64().ok()? != spec_hash {
        return None;
    }
    let step1 = r.f64().ok()?;
    let nodes1 = r.u64().ok()?;
    let step2 = r.f64().ok()?;
    let nodes2 = r.u64().ok()?;
    if !grid_matches(step1, nodes1, &grid.axis1) || !grid_matches(step2, nodes2, &grid.axis2) {
        return None;
    }
    let horizon = r.u64().ok()? as usize;
    let js_count = r.u64().ok()? as usize;
    let nodes = (nodes1 * nodes2) as usize;
    if js_count != stage.costs.len() {
        return None;
    }
    let mut v = Vec::with_capacity(horizon + 1);
    for _ in 0..=horizon {
        let mut per = Vec::with_capacity(js_count);
        for _ in 0..js_count {
            per.push(r.f64s(nodes).ok()?);
        }
        v.push(per);
    }
    let mut g = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut per = Vec::with_capacity(js_count);
        for _ in 0..js_count {
            per.push(r.f64s(nodes).ok()?);
        }
        g.push(per);
    }
    let mut ystar = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut per = Vec::with_capacity(js_count);
        for _ in 0..js_count {
            let mut row = Vec::with_capacity(nodes);
            for _ in 0..nodes {
                let y1 = r.f64().ok()?;
                let y2 = r.f64().ok()?;
                row.push((y1, y2));
            }
            per.push(row);
        }
        ystar.push(per);
    }
    let mut b_grid = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut per = Vec::with_capacity(js_count);
        for _ in 0..js_count {
            let b1 = r.f64().ok()?;
            let b2 = r.f64().ok()?;
            per.push((b1, b2));
        }
        b_grid.push(per);
    }
    Some(ValueGrid2::from_parts(
        grid.clone(),
        horizon,
        &stage,
        v,
        g,
        ystar,
        b_grid,
    ))
}
