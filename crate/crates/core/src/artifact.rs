//! Persistence for intermediate products: media, phase planes, fits, traces.
//!
//! Artifacts are JSON files with a fixed envelope: `schema_version`, a `kind`
//! tag naming the payload type, and the payload itself. Complex matrices are
//! stored as separate real and imaginary arrays in row-major order. Floats
//! survive the text round-trip exactly (shortest-representation printing),
//! so a reloaded artifact is bit-identical to what was saved.

use crate::circuit::PhasePlanes;
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::medium::MediumModel;
use crate::tmchar::TmFit;
use crate::wfm::WfmTrace;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    schema_version: u32,
    kind: String,
    payload: T,
}

/// Version/kind pre-check that skips the payload.
#[derive(Deserialize)]
struct EnvelopeHead {
    schema_version: u32,
    kind: String,
}

/// Row-major complex matrix as paired real/imag arrays.
#[derive(Serialize, Deserialize)]
struct MatDto {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

fn mat_to_dto(m: &CMat) -> MatDto {
    let (rows, cols) = m.shape();
    let mut re = Vec::with_capacity(rows * cols);
    let mut im = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            re.push(m[(r, c)].re);
            im.push(m[(r, c)].im);
        }
    }
    MatDto { rows, cols, re, im }
}

fn dto_to_mat(d: &MatDto) -> Result<CMat> {
    if d.re.len() != d.rows * d.cols || d.im.len() != d.rows * d.cols {
        return Err(Error::Shape(format!(
            "matrix payload claims {}×{} but holds {}/{} entries",
            d.rows,
            d.cols,
            d.re.len(),
            d.im.len()
        )));
    }
    Ok(CMat::from_fn(d.rows, d.cols, |r, c| {
        let i = r * d.cols + c;
        C64::new(d.re[i], d.im[i])
    }))
}

/// Convert a serde_json position (1-based line/column) to a 0-based byte
/// offset into `text`.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0usize;
    for (i, l) in text.split('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(text.len());
        }
        offset += l.len() + 1;
    }
    text.len()
}

fn parse_error(text: &str, err: &serde_json::Error) -> Error {
    Error::Parse {
        line: err.line(),
        column: err.column(),
        offset: byte_offset(text, err.line(), err.column()),
    }
}

/// Write any serializable payload under the envelope. The generic entry
/// point used by the typed wrappers below and by CLI result/manifest
/// records.
pub fn save_record<T: Serialize>(path: &Path, kind: &str, payload: &T) -> Result<()> {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        kind: kind.to_string(),
        payload,
    };
    let text = serde_json::to_string_pretty(&env)
        .map_err(|e| Error::Numerical(format!("serialization failed: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

/// Read a payload saved by `save_record`, checking version and kind first.
pub fn load_record<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let text = fs::read_to_string(path)?;
    let head: EnvelopeHead =
        serde_json::from_str(&text).map_err(|e| parse_error(&text, &e))?;
    if head.schema_version != SCHEMA_VERSION {
        return Err(Error::VersionMismatch {
            found: head.schema_version,
            current: SCHEMA_VERSION,
        });
    }
    if head.kind != kind {
        return Err(Error::TypeTag {
            expected: kind.to_string(),
            found: head.kind,
        });
    }
    let env: Envelope<T> =
        serde_json::from_str(&text).map_err(|e| parse_error(&text, &e))?;
    Ok(env.payload)
}

#[derive(Serialize, Deserialize)]
struct MediumDto {
    n_fibre: usize,
    n_pixels: usize,
    u1: MatDto,
    c_in: [MatDto; 2],
    f_in: MatDto,
    e_out: [MatDto; 2],
    g_out: MatDto,
    inter_pol_phase: f64,
    seed: u64,
}

pub fn save_medium(path: &Path, m: &MediumModel) -> Result<()> {
    let dto = MediumDto {
        n_fibre: m.n_fibre,
        n_pixels: m.n_pixels,
        u1: mat_to_dto(&m.u1),
        c_in: [mat_to_dto(&m.c_in[0]), mat_to_dto(&m.c_in[1])],
        f_in: mat_to_dto(&m.f_in),
        e_out: [mat_to_dto(&m.e_out[0]), mat_to_dto(&m.e_out[1])],
        g_out: mat_to_dto(&m.g_out),
        inter_pol_phase: m.inter_pol_phase,
        seed: m.seed,
    };
    save_record(path, "medium", &dto)
}

pub fn load_medium(path: &Path) -> Result<MediumModel> {
    let d: MediumDto = load_record(path, "medium")?;
    Ok(MediumModel {
        n_fibre: d.n_fibre,
        n_pixels: d.n_pixels,
        u1: dto_to_mat(&d.u1)?,
        c_in: [dto_to_mat(&d.c_in[0])?, dto_to_mat(&d.c_in[1])?],
        f_in: dto_to_mat(&d.f_in)?,
        e_out: [dto_to_mat(&d.e_out[0])?, dto_to_mat(&d.e_out[1])?],
        g_out: dto_to_mat(&d.g_out)?,
        inter_pol_phase: d.inter_pol_phase,
        seed: d.seed,
    })
}

pub fn save_planes(path: &Path, planes: &PhasePlanes) -> Result<()> {
    save_record(path, "phase-planes", planes)
}

pub fn load_planes(path: &Path) -> Result<PhasePlanes> {
    load_record(path, "phase-planes")
}

#[derive(Serialize, Deserialize)]
struct TmFitDto {
    blocks: [MatDto; 2],
    loss_trace: [Vec<f64>; 2],
    similarity: Option<[f64; 2]>,
}

pub fn save_tm_fit(path: &Path, fit: &TmFit) -> Result<()> {
    let dto = TmFitDto {
        blocks: [mat_to_dto(&fit.blocks[0]), mat_to_dto(&fit.blocks[1])],
        loss_trace: fit.loss_trace.clone(),
        similarity: fit.similarity,
    };
    save_record(path, "tm-fit", &dto)
}

pub fn load_tm_fit(path: &Path) -> Result<TmFit> {
    let d: TmFitDto = load_record(path, "tm-fit")?;
    Ok(TmFit {
        blocks: [dto_to_mat(&d.blocks[0])?, dto_to_mat(&d.blocks[1])?],
        loss_trace: d.loss_trace,
        similarity: d.similarity,
    })
}

#[derive(Serialize, Deserialize)]
struct WfmTraceDto {
    planes: PhasePlanes,
    fidelity_trace: Vec<f64>,
    eta_trace: Vec<f64>,
    final_fidelity: f64,
    final_eta: f64,
    iterations: usize,
}

pub fn save_wfm_trace(path: &Path, trace: &WfmTrace) -> Result<()> {
    let dto = WfmTraceDto {
        planes: trace.planes.clone(),
        fidelity_trace: trace.fidelity_trace.clone(),
        eta_trace: trace.eta_trace.clone(),
        final_fidelity: trace.final_fidelity,
        final_eta: trace.final_eta,
        iterations: trace.iterations,
    };
    save_record(path, "wfm-trace", &dto)
}

pub fn load_wfm_trace(path: &Path) -> Result<WfmTrace> {
    let d: WfmTraceDto = load_record(path, "wfm-trace")?;
    Ok(WfmTrace {
        planes: d.planes,
        fidelity_trace: d.fidelity_trace,
        eta_trace: d.eta_trace,
        final_fidelity: d.final_fidelity,
        final_eta: d.final_eta,
        iterations: d.iterations,
    })
}

/// Complex matrix as CSV for inspection: row, col, re, im.
pub fn matrix_csv(m: &CMat) -> String {
    let mut out = String::from("row,col,re,im\n");
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            out.push_str(&format!("{r},{c},{},{}\n", z.re, z.im));
        }
    }
    out
}

/// Convergence trace as CSV: iteration, fidelity, eta. Iteration 0 is the
/// starting point before any update.
pub fn wfm_trace_csv(trace: &WfmTrace) -> String {
    let mut out = String::from("iteration,fidelity,eta\n");
    for (i, (f, eta)) in trace
        .fidelity_trace
        .iter()
        .zip(&trace.eta_trace)
        .enumerate()
    {
        out.push_str(&format!("{i},{f},{eta}\n"));
    }
    out
}
