//! On-disk formats.
//!
//! CSV tables go through the `csv` crate.  Models, observer populations,
//! voxel grids and meshes use small whitespace-separated text formats with a
//! keyword at the start of every header line, so files stay diffable and can
//! be written by hand.  Floats that must survive a round trip are written
//! with 17 significant digits.

use std::io::{Read, Write};

use bitvec::vec::BitVec;
use haptolab_core::contact::VoxelGrid;
use haptolab_core::dynamics::{TaskId, Trajectory};
use haptolab_core::fem::{Element, Mesh};
use haptolab_core::harness::{Group, TrialRecord};
use haptolab_core::koopman::{Dictionary, KoopmanModel};
use haptolab_core::percept::{ObserverParams, PsychometricTable};
use haptolab_core::render::{Condition, ForceSample};
use nalgebra::{DMatrix, DVector};

use crate::error::{format_err, Error, Result};

/// Column order of the records table; matches the field order of
/// [`TrialRecord`].
pub const RECORD_COLUMNS: [&str; 12] = [
    "task",
    "group",
    "condition",
    "trial_index",
    "user",
    "seed",
    "eps_f",
    "latency",
    "percept_accuracy",
    "task_error",
    "smoothness_raw",
    "smoothness_norm",
];

fn g17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_records<W: Write>(w: W, records: &[TrialRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RECORD_COLUMNS)?;
    for r in records {
        out.write_record([
            r.task.to_string(),
            r.group.to_string(),
            r.condition.to_string(),
            r.trial_index.to_string(),
            r.user.to_string(),
            r.seed.to_string(),
            g17(r.eps_f),
            g17(r.latency),
            g17(r.percept_accuracy),
            g17(r.task_error),
            g17(r.smoothness_raw),
            g17(r.smoothness_norm),
        ])?;
    }
    out.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<TrialRecord>> {
    const WHAT: &str = "records";
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != RECORD_COLUMNS {
        return Err(format_err(WHAT, 1, format!("expected columns {}", RECORD_COLUMNS.join(","))));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let field = |k: usize| row.get(k).ok_or_else(|| format_err(WHAT, line, "missing field"));
        let float = |k: usize| -> Result<f64> {
            field(k)?.parse().map_err(|_| format_err(WHAT, line, format!("bad number in `{}`", RECORD_COLUMNS[k])))
        };
        let int = |k: usize| -> Result<u64> {
            field(k)?.parse().map_err(|_| format_err(WHAT, line, format!("bad integer in `{}`", RECORD_COLUMNS[k])))
        };
        out.push(TrialRecord {
            task: field(0)?.parse::<TaskId>().map_err(|e| format_err(WHAT, line, e.to_string()))?,
            group: field(1)?.parse::<Group>().map_err(|e| format_err(WHAT, line, e.to_string()))?,
            condition: field(2)?.parse::<Condition>().map_err(|e| format_err(WHAT, line, e.to_string()))?,
            trial_index: int(3)? as usize,
            user: int(4)? as usize,
            seed: int(5)?,
            eps_f: float(6)?,
            latency: float(7)?,
            percept_accuracy: float(8)?,
            task_error: float(9)?,
            smoothness_raw: float(10)?,
            smoothness_norm: float(11)?,
        });
    }
    Ok(out)
}

/// Per-tick force log.
pub fn write_ticks<W: Write>(w: W, ticks: &[ForceSample], ideal: &[f64]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["tick", "f_raw", "f_adj", "f_filt", "f_delayed", "f_ideal", "compute_time"])?;
    for (t, fi) in ticks.iter().zip(ideal) {
        out.write_record([
            t.tick_index.to_string(),
            g17(t.f_raw),
            g17(t.f_adj),
            g17(t.f_filt),
            g17(t.f_delayed),
            g17(*fi),
            format!("{:.3e}", t.compute_time),
        ])?;
    }
    out.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Trajectory with 9 significant digits: `t, x, v, d, u, y_x, y_v, y_d`.
pub fn write_trajectory<W: Write>(w: W, traj: &Trajectory) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "x", "v", "d", "u", "y_x", "y_v", "y_d"])?;
    let g9 = |v: f64| format!("{v:.8e}");
    for k in 0..traj.states.len() {
        let (x, y) = (traj.states[k], traj.outputs[k]);
        let u = traj.inputs.get(k).copied().unwrap_or(f64::NAN);
        out.write_record([
            g9(traj.times[k]),
            g9(x.position),
            g9(x.velocity),
            g9(x.deformation),
            g9(u),
            g9(y.position),
            g9(y.velocity),
            g9(y.deformation),
        ])?;
    }
    out.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn write_psychometric<W: Write>(w: W, table: &PsychometricTable) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["delta", "n", "n_correct", "p_hat"])?;
    for r in &table.rows {
        out.write_record([g17(r.delta), r.n.to_string(), r.n_correct.to_string(), g17(r.p_hat)])?;
    }
    out.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

// ------------------------------------------------------------ text formats

/// Line-oriented tokenizer that skips blank lines and `#` comments.
struct Lines<'a> {
    what: &'static str,
    it: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(what: &'static str, text: &'a str) -> Self {
        Self { what, it: text.lines().enumerate().peekable(), line: 0 }
    }

    fn next_tokens(&mut self) -> Result<Vec<&'a str>> {
        for (i, l) in self.it.by_ref() {
            let l = l.split('#').next().unwrap_or("").trim();
            if !l.is_empty() {
                self.line = i + 1;
                return Ok(l.split_whitespace().collect());
            }
        }
        Err(format_err(self.what, self.line + 1, "unexpected end of file"))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        format_err(self.what, self.line, msg)
    }

    /// A header line `keyword v1 v2 …` with exactly `n` values.
    fn keyword(&mut self, key: &str, n: usize) -> Result<Vec<&'a str>> {
        let t = self.next_tokens()?;
        if t.first() != Some(&key) || t.len() != n + 1 {
            return Err(self.err(format!("expected `{key}` followed by {n} value(s)")));
        }
        Ok(t[1..].to_vec())
    }

    /// A header line `keyword value`.
    fn value<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.keyword(key, 1)?[0];
        self.parse(v)
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("cannot parse `{s}`")))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let t = self.next_tokens()?;
        if t.len() != n {
            return Err(self.err(format!("expected {n} numbers, found {}", t.len())));
        }
        t.iter().map(|s| self.parse(s)).collect()
    }

    fn finish(&mut self) -> Result<()> {
        match self.next_tokens() {
            Ok(_) => Err(self.err("trailing content")),
            Err(_) => Ok(()),
        }
    }
}

fn write_matrix(s: &mut String, name: &str, m: &DMatrix<f64>) {
    s.push_str(&format!("{name} {} {}\n", m.nrows(), m.ncols()));
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| g17(m[(i, j)])).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
}

fn read_matrix(l: &mut Lines<'_>, name: &str) -> Result<DMatrix<f64>> {
    let h = l.keyword(name, 2)?;
    let (r, c): (usize, usize) = (l.parse(h[0])?, l.parse(h[1])?);
    let mut data = Vec::with_capacity(r * c);
    for _ in 0..r {
        data.extend(l.floats(c)?);
    }
    Ok(DMatrix::from_row_slice(r, c, &data))
}

pub fn koopman_to_text(m: &KoopmanModel) -> String {
    let mut s = String::from("koopman-model 1\n");
    s.push_str(&format!("dt {}\nridge {}\nresidual {}\n", g17(m.dt), g17(m.ridge_lambda), g17(m.fit_residual)));
    let d = &m.dictionary;
    s.push_str(&format!("dictionary {} {}\n", d.n_state(), d.len()));
    for e in d.exponents() {
        let row: Vec<String> = e.iter().map(u32::to_string).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    write_matrix(&mut s, "K", &m.k);
    write_matrix(&mut s, "B", &m.b);
    s
}

pub fn koopman_from_text(text: &str) -> Result<KoopmanModel> {
    let mut l = Lines::new("koopman model", text);
    let v = l.keyword("koopman-model", 1)?;
    if v[0] != "1" {
        return Err(l.err("unsupported version"));
    }
    let dt = l.value("dt")?;
    let ridge_lambda = l.value("ridge")?;
    let fit_residual = l.value("residual")?;
    let h = l.keyword("dictionary", 2)?;
    let (n_state, n_obs): (usize, usize) = (l.parse(h[0])?, l.parse(h[1])?);
    let mut exps = Vec::with_capacity(n_obs);
    for _ in 0..n_obs {
        let t = l.next_tokens()?;
        if t.len() != n_state {
            return Err(l.err("exponent row has the wrong length"));
        }
        exps.push(t.iter().map(|s| l.parse(s)).collect::<Result<Vec<u32>>>()?);
    }
    let dictionary = Dictionary::from_exponents(n_state, exps)?;
    let k = read_matrix(&mut l, "K")?;
    let b = read_matrix(&mut l, "B")?;
    if k.nrows() != n_obs || k.ncols() != n_obs || b.nrows() != n_obs {
        return Err(l.err("matrix shape does not match the dictionary"));
    }
    l.finish()?;
    Ok(KoopmanModel { k, b, dictionary, ridge_lambda, fit_residual, dt })
}

pub fn observers_to_text(pop: &[ObserverParams]) -> String {
    let mut s = format!("observers {}\n# stevens_alpha stevens_beta sensory_var weber_fraction\n", pop.len());
    for o in pop {
        s.push_str(&format!(
            "{} {} {} {}\n",
            g17(o.stevens_alpha),
            g17(o.stevens_beta),
            g17(o.sensory_var),
            g17(o.weber_fraction)
        ));
    }
    s
}

pub fn observers_from_text(text: &str) -> Result<Vec<ObserverParams>> {
    let mut l = Lines::new("observers", text);
    let n: usize = l.value("observers")?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let v = l.floats(4)?;
        out.push(ObserverParams { stevens_alpha: v[0], stevens_beta: v[1], sensory_var: v[2], weber_fraction: v[3] });
    }
    l.finish()?;
    Ok(out)
}

/// Occupancy as alternating run lengths, starting with a (possibly empty)
/// run of free voxels, in linear (i-fastest) order.
pub fn voxels_to_text(grid: &VoxelGrid) -> String {
    let d = grid.dims();
    let o = grid.origin();
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0usize;
    for bit in grid.occupancy().iter().by_vals() {
        if bit == current {
            len += 1;
        } else {
            runs.push(len);
            current = bit;
            len = 1;
        }
    }
    runs.push(len);
    let mut s = format!(
        "voxels 1\ndims {} {} {}\norigin {} {} {}\nspacing {}\nruns {}\n",
        d[0],
        d[1],
        d[2],
        g17(o[0]),
        g17(o[1]),
        g17(o[2]),
        g17(grid.spacing()),
        runs.len()
    );
    for chunk in runs.chunks(16) {
        let row: Vec<String> = chunk.iter().map(usize::to_string).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn voxels_from_text(text: &str) -> Result<VoxelGrid> {
    let mut l = Lines::new("voxel grid", text);
    l.keyword("voxels", 1)?;
    let d = l.keyword("dims", 3)?;
    let dims = [l.parse(d[0])?, l.parse(d[1])?, l.parse(d[2])?];
    let o = l.keyword("origin", 3)?;
    let origin = [l.parse(o[0])?, l.parse(o[1])?, l.parse(o[2])?];
    let spacing = l.value("spacing")?;
    let n_runs: usize = l.value("runs")?;
    let mut runs = Vec::with_capacity(n_runs);
    while runs.len() < n_runs {
        for t in l.next_tokens()? {
            runs.push(l.parse::<usize>(t)?);
        }
    }
    if runs.len() != n_runs {
        return Err(l.err("run count mismatch"));
    }
    l.finish()?;
    let total: usize = dims.iter().product();
    let mut bits = BitVec::with_capacity(total);
    for (i, &r) in runs.iter().enumerate() {
        if bits.len() + r > total {
            return Err(l.err("runs exceed the grid size"));
        }
        bits.extend(std::iter::repeat_n(i % 2 == 1, r));
    }
    if bits.len() != total {
        return Err(l.err(format!("runs cover {} of {total} voxels", bits.len())));
    }
    Ok(VoxelGrid::from_occupancy(origin, spacing, dims, bits)?)
}

/// A mesh with its boundary conditions and one load case.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshCase {
    pub mesh: Mesh,
    pub fixed: Vec<usize>,
    pub loads: DVector<f64>,
}

pub fn mesh_to_text(case: &MeshCase) -> String {
    let mut s = format!("mesh 1\nnodes {}\n", case.mesh.nodes.len());
    for n in &case.mesh.nodes {
        s.push_str(&format!("{} {}\n", g17(n[0]), g17(n[1])));
    }
    s.push_str(&format!("elements {}\n", case.mesh.elements.len()));
    for e in &case.mesh.elements {
        match e {
            Element::Bar { nodes, area } => s.push_str(&format!("bar {} {} {}\n", nodes[0], nodes[1], g17(*area))),
            Element::Tri { nodes, thickness } => {
                s.push_str(&format!("tri {} {} {} {}\n", nodes[0], nodes[1], nodes[2], g17(*thickness)))
            }
        }
    }
    let fixed: Vec<String> = case.fixed.iter().map(usize::to_string).collect();
    s.push_str(&format!("fixed {}\n{}\n", fixed.len(), fixed.join(" ")));
    let loads: Vec<(usize, f64)> = case.loads.iter().copied().enumerate().filter(|(_, f)| *f != 0.0).collect();
    s.push_str(&format!("loads {}\n", loads.len()));
    for (dof, f) in loads {
        s.push_str(&format!("{dof} {}\n", g17(f)));
    }
    s
}

pub fn mesh_from_text(text: &str) -> Result<MeshCase> {
    let mut l = Lines::new("mesh", text);
    l.keyword("mesh", 1)?;
    let n: usize = l.value("nodes")?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let v = l.floats(2)?;
        nodes.push([v[0], v[1]]);
    }
    let m: usize = l.value("elements")?;
    let mut elements = Vec::with_capacity(m);
    for _ in 0..m {
        let t = l.next_tokens()?;
        let e = match (t.first().copied(), t.len()) {
            (Some("bar"), 4) => Element::Bar { nodes: [l.parse(t[1])?, l.parse(t[2])?], area: l.parse(t[3])? },
            (Some("tri"), 5) => Element::Tri {
                nodes: [l.parse(t[1])?, l.parse(t[2])?, l.parse(t[3])?],
                thickness: l.parse(t[4])?,
            },
            _ => return Err(l.err("expected `bar i j area` or `tri i j k thickness`")),
        };
        elements.push(e);
    }
    let nf: usize = l.value("fixed")?;
    let mut fixed = Vec::with_capacity(nf);
    while fixed.len() < nf {
        for t in l.next_tokens()? {
            fixed.push(l.parse::<usize>(t)?);
        }
    }
    let mut loads = DVector::zeros(2 * n);
    let nl: usize = l.value("loads")?;
    for _ in 0..nl {
        let t = l.next_tokens()?;
        if t.len() != 2 {
            return Err(l.err("expected `dof value`"));
        }
        let dof: usize = l.parse(t[0])?;
        if dof >= 2 * n {
            return Err(l.err(format!("load on dof {dof} outside the mesh")));
        }
        loads[dof] += l.parse::<f64>(t[1])?;
    }
    let dangling = elements.iter().any(|e| match e {
        Element::Bar { nodes, .. } => nodes.iter().any(|&i| i >= n),
        Element::Tri { nodes, .. } => nodes.iter().any(|&i| i >= n),
    });
    if dangling {
        return Err(l.err("element refers to a node outside the mesh"));
    }
    if fixed.iter().any(|&d| d >= 2 * n) {
        return Err(l.err("fixed dof outside the mesh"));
    }
    l.finish()?;
    Ok(MeshCase { mesh: Mesh { nodes, elements }, fixed, loads })
}

pub fn write_displacements<W: Write>(w: W, u: &DVector<f64>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["node", "ux", "uy"])?;
    for i in 0..u.len() / 2 {
        out.write_record([i.to_string(), g17(u[2 * i]), g17(u[2 * i + 1])])?;
    }
    out.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}
