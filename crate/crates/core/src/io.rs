//! File formats. Every context, action, state, stage and episode id is
//! written 1-based and converted back to 0-based on load.
//!
//! * Model JSON: `{S, A, n, H, f, p, q, mu, pi}` with `f[x]` the state of
//!   context `x`, `p[a][s][s']`, `q[s][x]`, `mu[x]` and `pi[x][a]`. `pi` may
//!   be omitted, which reads as the uniform policy.
//! * Estimated model JSON: the same fields without `H` and `pi`, plus
//!   `flags {p_zero_rows: [[s, a]], q_zero_rows: [s]}` and an optional
//!   `source_split {decoder: [first, last], model: [first, last]}` of
//!   inclusive episode ranges.
//! * Reward JSON: `{H, n, A, r}` with `r[h][x][a]`.
//! * Episodes CSV `episode,step,context,action`; the terminal row of each
//!   episode leaves `action` empty.
//! * Assignment CSV `context,label`; policy CSV `stage,context,action`;
//!   rate profile CSV `c,I`.
//! * Matrix dump: three little-endian `u64` (rows, cols, blocks) followed by
//!   `rows * cols` little-endian `f64` in row-major order.

use std::io::{Read, Write};
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmedians::ClusterAssignment;
use crate::model::{BehaviorPolicy, BlockMdp, LatentModel};
use crate::planning::{PlanPolicy, RewardFunction};
use crate::refine::{EstimatedModel, EstimationFlags, SourceSplit};
use crate::sim::{Episode, EpisodeBatch};

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch(format!("{what} must be {nrows}x{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn to_zero_based(ids: &[usize], bound: usize, what: &str) -> Result<Vec<usize>> {
    ids.iter()
        .map(|&v| {
            if v == 0 || v > bound {
                Err(Error::OutOfRange(format!("{what} id {v} not in 1..={bound}")))
            } else {
                Ok(v - 1)
            }
        })
        .collect()
}

fn one_based(ids: &[usize]) -> Vec<usize> {
    ids.iter().map(|v| v + 1).collect()
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct ModelFile {
    S: usize,
    A: usize,
    n: usize,
    H: usize,
    f: Vec<usize>,
    p: Vec<Vec<Vec<f64>>>,
    q: Vec<Vec<f64>>,
    mu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pi: Option<Vec<Vec<f64>>>,
}

fn latent_rows(kernels: &[DMatrix<f64>]) -> Vec<Vec<Vec<f64>>> {
    kernels.iter().map(rows_of).collect()
}

fn latent_from(p: &[Vec<Vec<f64>>], s: usize, a: usize) -> Result<Vec<DMatrix<f64>>> {
    if p.len() != a {
        return Err(Error::DimensionMismatch(format!("p has {} action blocks, expected {a}", p.len())));
    }
    p.iter().map(|k| matrix_of(k, s, s, "p[a]")).collect()
}

pub fn write_model<W: Write>(w: W, m: &BlockMdp, pi: Option<&BehaviorPolicy>) -> Result<()> {
    let file = ModelFile {
        S: m.n_states(),
        A: m.n_actions(),
        n: m.n_contexts(),
        H: m.horizon(),
        f: one_based(m.decoder()),
        p: latent_rows(m.latent().kernels()),
        q: rows_of(m.emission()),
        mu: m.initial().to_vec(),
        pi: pi.map(|p| rows_of(p.matrix())),
    };
    serde_json::to_writer_pretty(w, &file)?;
    Ok(())
}

/// Reads and validates a model; a missing `pi` gives the uniform policy.
pub fn read_model<R: Read>(r: R) -> Result<(BlockMdp, BehaviorPolicy)> {
    let file: ModelFile = serde_json::from_reader(r)?;
    if file.f.len() != file.n {
        return Err(Error::DimensionMismatch(format!("f has {} entries, n = {}", file.f.len(), file.n)));
    }
    let latent = LatentModel::new(latent_from(&file.p, file.S, file.A)?)?;
    let decoder = to_zero_based(&file.f, file.S, "state")?;
    let q = matrix_of(&file.q, file.S, file.n, "q")?;
    let m = BlockMdp::new(latent, decoder, q, file.mu, file.H)?;
    let pi = match file.pi {
        Some(rows) => BehaviorPolicy::new(matrix_of(&rows, file.n, file.A, "pi")?)?,
        None => BehaviorPolicy::uniform(file.n, file.A),
    };
    Ok((m, pi))
}

#[derive(Serialize, Deserialize)]
struct FlagsFile {
    p_zero_rows: Vec<[usize; 2]>,
    q_zero_rows: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    decoder: [usize; 2],
    model: [usize; 2],
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct EstimatedFile {
    S: usize,
    A: usize,
    n: usize,
    f: Vec<usize>,
    p: Vec<Vec<Vec<f64>>>,
    q: Vec<Vec<f64>>,
    mu: Vec<f64>,
    flags: FlagsFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_split: Option<SplitFile>,
}

fn range_file(r: &Range<usize>) -> [usize; 2] {
    [r.start + 1, r.end]
}

fn range_of(r: [usize; 2]) -> Result<Range<usize>> {
    if r[0] == 0 || r[0] > r[1] + 1 {
        return Err(Error::Parse(format!("bad episode range {r:?}")));
    }
    Ok(r[0] - 1..r[1])
}

pub fn write_estimated<W: Write>(w: W, est: &EstimatedModel) -> Result<()> {
    let file = EstimatedFile {
        S: est.n_states(),
        A: est.n_actions(),
        n: est.n_contexts(),
        f: one_based(&est.decoder.labels),
        p: latent_rows(&est.p_hat),
        q: rows_of(&est.q_hat),
        mu: est.mu_hat.clone(),
        flags: FlagsFile {
            p_zero_rows: est.flags.p_zero_rows.iter().map(|&(s, a)| [s + 1, a + 1]).collect(),
            q_zero_rows: one_based(&est.flags.q_zero_rows),
        },
        source_split: est
            .source_split
            .as_ref()
            .map(|s| SplitFile { decoder: range_file(&s.decoder), model: range_file(&s.model) }),
    };
    serde_json::to_writer_pretty(w, &file)?;
    Ok(())
}

pub fn read_estimated<R: Read>(r: R) -> Result<EstimatedModel> {
    let file: EstimatedFile = serde_json::from_reader(r)?;
    if file.f.len() != file.n || file.mu.len() != file.n {
        return Err(Error::DimensionMismatch(format!("f and mu must have n = {} entries", file.n)));
    }
    let decoder = ClusterAssignment::new(to_zero_based(&file.f, file.S, "state")?, file.S)?;
    let mut p_zero_rows = Vec::with_capacity(file.flags.p_zero_rows.len());
    for [s, a] in file.flags.p_zero_rows {
        let s = to_zero_based(&[s], file.S, "state")?[0];
        let a = to_zero_based(&[a], file.A, "action")?[0];
        p_zero_rows.push((s, a));
    }
    let source_split = match file.source_split {
        Some(sp) => Some(SourceSplit { decoder: range_of(sp.decoder)?, model: range_of(sp.model)? }),
        None => None,
    };
    Ok(EstimatedModel {
        decoder,
        p_hat: latent_from(&file.p, file.S, file.A)?,
        q_hat: matrix_of(&file.q, file.S, file.n, "q")?,
        mu_hat: file.mu,
        flags: EstimationFlags { p_zero_rows, q_zero_rows: to_zero_based(&file.flags.q_zero_rows, file.S, "state")? },
        source_split,
    })
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct RewardFile {
    H: usize,
    n: usize,
    A: usize,
    r: Vec<Vec<Vec<f64>>>,
}

pub fn write_reward<W: Write>(w: W, r: &RewardFunction) -> Result<()> {
    let file =
        RewardFile { H: r.horizon(), n: r.n_contexts(), A: r.n_actions(), r: r.stages().iter().map(rows_of).collect() };
    serde_json::to_writer_pretty(w, &file)?;
    Ok(())
}

pub fn read_reward<R: Read>(r: R) -> Result<RewardFunction> {
    let file: RewardFile = serde_json::from_reader(r)?;
    if file.r.len() != file.H {
        return Err(Error::DimensionMismatch(format!("r has {} stages, H = {}", file.r.len(), file.H)));
    }
    RewardFunction::new(file.r.iter().map(|st| matrix_of(st, file.n, file.A, "r[h]")).collect::<Result<_>>()?)
}

fn parse_id(field: Option<&str>, what: &str) -> Result<usize> {
    let s = field.ok_or_else(|| Error::Parse(format!("missing {what}")))?.trim();
    let v: usize = s.parse().map_err(|_| Error::Parse(format!("{what} '{s}' is not a positive integer")))?;
    if v == 0 {
        return Err(Error::Parse(format!("{what} ids start at 1")));
    }
    Ok(v - 1)
}

pub fn write_episodes<W: Write>(w: W, batch: &EpisodeBatch) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["episode", "step", "context", "action"])?;
    for (t, ep) in batch.episodes().iter().enumerate() {
        for (h, &x) in ep.contexts.iter().enumerate() {
            let action = ep.actions.get(h).map(|a| (a + 1).to_string()).unwrap_or_default();
            wr.write_record([(t + 1).to_string(), (h + 1).to_string(), (x + 1).to_string(), action])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Reads an episodes CSV; rows must be grouped by episode in step order.
pub fn read_episodes<R: Read>(r: R, n_contexts: usize, n_actions: usize) -> Result<EpisodeBatch> {
    let mut rd = csv::Reader::from_reader(r);
    let mut episodes: Vec<Episode> = Vec::new();
    let mut current: Option<(usize, Episode)> = None;
    for rec in rd.records() {
        let rec = rec?;
        let t = parse_id(rec.get(0), "episode")?;
        let h = parse_id(rec.get(1), "step")?;
        let x = parse_id(rec.get(2), "context")?;
        let action = rec.get(3).map(str::trim).unwrap_or("");
        if current.as_ref().is_none_or(|(id, _)| *id != t) {
            if let Some((_, ep)) = current.take() {
                episodes.push(ep);
            }
            current = Some((t, Episode { contexts: Vec::new(), actions: Vec::new() }));
        }
        let (_, ep) = current.as_mut().expect("episode started above");
        if h != ep.contexts.len() {
            return Err(Error::Parse(format!("episode {} has step {} out of order", t + 1, h + 1)));
        }
        if ep.actions.len() != ep.contexts.len() {
            return Err(Error::Parse(format!("episode {} continues after its terminal row", t + 1)));
        }
        ep.contexts.push(x);
        if !action.is_empty() {
            ep.actions.push(parse_id(Some(action), "action")?);
        }
    }
    episodes.extend(current.map(|(_, ep)| ep));
    let horizon = episodes.first().map(|e| e.contexts.len()).ok_or_else(|| Error::NoData("episodes file is empty".into()))?;
    EpisodeBatch::new(n_contexts, n_actions, horizon, episodes)
}

pub fn write_assignment<W: Write>(w: W, a: &ClusterAssignment) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["context", "label"])?;
    for (x, &l) in a.labels.iter().enumerate() {
        wr.write_record([(x + 1).to_string(), (l + 1).to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads an assignment CSV with contexts listed as `1..=n` in order.
pub fn read_assignment<R: Read>(r: R, n_states: usize) -> Result<ClusterAssignment> {
    let mut rd = csv::Reader::from_reader(r);
    let mut labels = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let x = parse_id(rec.get(0), "context")?;
        if x != labels.len() {
            return Err(Error::Parse(format!("expected context {}, found {}", labels.len() + 1, x + 1)));
        }
        labels.push(parse_id(rec.get(1), "label")?);
    }
    ClusterAssignment::new(labels, n_states)
}

pub fn write_policy<W: Write>(w: W, p: &PlanPolicy) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["stage", "context", "action"])?;
    for (h, row) in p.table().iter().enumerate() {
        for (x, &a) in row.iter().enumerate() {
            wr.write_record([(h + 1).to_string(), (x + 1).to_string(), (a + 1).to_string()])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Reads a policy CSV listing every `(stage, context)` pair.
pub fn read_policy<R: Read>(r: R, n_actions: usize) -> Result<PlanPolicy> {
    let mut rd = csv::Reader::from_reader(r);
    let mut entries = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        entries.push((parse_id(rec.get(0), "stage")?, parse_id(rec.get(1), "context")?, parse_id(rec.get(2), "action")?));
    }
    let h_len = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
    let n = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
    let mut table = vec![vec![None; n]; h_len];
    for (h, x, a) in entries {
        if table[h][x].replace(a).is_some() {
            return Err(Error::Parse(format!("duplicate entry for stage {} context {}", h + 1, x + 1)));
        }
    }
    let table = table
        .into_iter()
        .enumerate()
        .map(|(h, row)| {
            row.into_iter()
                .enumerate()
                .map(|(x, a)| a.ok_or_else(|| Error::Parse(format!("missing stage {} context {}", h + 1, x + 1))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    PlanPolicy::new(table, n_actions)
}

pub fn write_rate_profile<W: Write>(w: W, profile: &[(f64, f64)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["c", "I"])?;
    for &(c, v) in profile {
        wr.write_record([format!("{c:.12e}"), format!("{v:.12e}")])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_matrix_dump<W: Write>(mut w: W, m: &DMatrix<f64>, blocks: usize) -> Result<()> {
    for v in [m.nrows(), m.ncols(), blocks] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for row in m.row_iter() {
        for v in row.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Returns the matrix and the `blocks` header field.
pub fn read_matrix_dump<R: Read>(mut r: R) -> Result<(DMatrix<f64>, usize)> {
    let mut word = [0u8; 8];
    let mut header = [0usize; 3];
    for h in header.iter_mut() {
        r.read_exact(&mut word)?;
        *h = usize::try_from(u64::from_le_bytes(word)).map_err(|_| Error::Parse("header field overflows".into()))?;
    }
    let [rows, cols, blocks] = header;
    let len = rows.checked_mul(cols).ok_or_else(|| Error::Parse("matrix size overflows".into()))?;
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        r.read_exact(&mut word)?;
        data.push(f64::from_le_bytes(word));
    }
    Ok((DMatrix::from_row_slice(rows, cols, &data), blocks))
}
