//! File formats for masks, trap fields, plans, transients and run records.
//!
//! Mask binary layout: 4-byte magic `HSMK`, format version byte (1), byte-order
//! byte (0 little endian, 1 big endian), two zero bytes, `grid_x` and `grid_y`
//! as u64, then `grid_x * grid_y` f64 phases in radians, index `ix * grid_y + iy`.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::OpticalConfig;
use crate::metrics::{Histogram, MetricsReport};
use crate::planner::TransportPlan;
use crate::propagation::{PhaseMask, TrapField};
use crate::sequence::{FrameRecord, SequenceOptions, SolverKind, TimingRow, TransitionRecord};
use crate::transient::intensity_model;

pub const MASK_MAGIC: [u8; 4] = *b"HSMK";
pub const MASK_VERSION: u8 = 1;
const HEADER_LEN: usize = 24;

pub fn write_mask<W: Write>(mut w: W, mask: &PhaseMask) -> Result<()> {
    let (gx, gy) = mask.dims();
    let mut header = [0u8; HEADER_LEN];
    header[..4].copy_from_slice(&MASK_MAGIC);
    header[4] = MASK_VERSION;
    header[8..16].copy_from_slice(&(gx as u64).to_le_bytes());
    header[16..24].copy_from_slice(&(gy as u64).to_le_bytes());
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(gx * gy * 8);
    for v in mask.phases().iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_mask<R: Read>(mut r: R) -> Result<PhaseMask> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if header[..4] != MASK_MAGIC {
        return Err(Error::Invalid("not a mask file (bad magic)".into()));
    }
    if header[4] != MASK_VERSION {
        return Err(Error::Invalid(format!("unsupported mask version {}", header[4])));
    }
    let big = match header[5] {
        0 => false,
        1 => true,
        b => return Err(Error::Invalid(format!("bad byte-order flag {b}"))),
    };
    let word = |bytes: &[u8]| -> [u8; 8] { bytes.try_into().expect("8-byte slice") };
    let dim = |bytes: &[u8]| {
        let b = word(bytes);
        if big {
            u64::from_be_bytes(b)
        } else {
            u64::from_le_bytes(b)
        }
    };
    let (gx, gy) = (dim(&header[8..16]) as usize, dim(&header[16..24]) as usize);
    let count = gx
        .checked_mul(gy)
        .ok_or_else(|| Error::Invalid("mask dimensions overflow".into()))?;
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if data.len() != count * 8 {
        return Err(Error::dims(format!("{} bytes of phase data", count * 8), data.len()));
    }
    let values = data
        .chunks_exact(8)
        .map(|c| {
            if big {
                f64::from_be_bytes(word(c))
            } else {
                f64::from_le_bytes(word(c))
            }
        })
        .collect();
    let phases = Array2::from_shape_vec((gx, gy), values).map_err(|e| Error::Invalid(e.to_string()))?;
    PhaseMask::new(phases)
}

pub fn save_mask(path: &Path, mask: &PhaseMask) -> Result<()> {
    write_mask(BufWriter::new(File::create(path)?), mask)
}

pub fn load_mask(path: &Path) -> Result<PhaseMask> {
    read_mask(std::io::BufReader::new(File::open(path)?))
}

/// Phase wrapped to [0, 2π) and quantized to 256 levels.
pub fn quantize(phase: f64) -> u8 {
    let t = phase.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU;
    ((t * 256.0).round() as u32 % 256) as u8
}

/// Binary 8-bit PGM: image columns follow x, rows follow y (top row first).
pub fn write_pgm<W: Write>(mut w: W, mask: &PhaseMask) -> Result<()> {
    let (gx, gy) = mask.dims();
    write!(w, "P5\n{gx} {gy}\n255\n")?;
    let p = mask.phases();
    let mut buf = Vec::with_capacity(gx * gy);
    for iy in 0..gy {
        for ix in 0..gx {
            buf.push(quantize(p[[ix, iy]]));
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRow {
    pub frame: usize,
    pub trap_id: usize,
    pub re: f64,
    pub im: f64,
    pub intensity: f64,
    pub phase: f64,
}

pub fn field_rows(frame: usize, field: &TrapField) -> Vec<FieldRow> {
    field
        .amplitudes
        .iter()
        .enumerate()
        .map(|(n, e)| FieldRow {
            frame,
            trap_id: n,
            re: e.re,
            im: e.im,
            intensity: e.norm_sqr(),
            phase: e.arg(),
        })
        .collect()
}

pub fn field_from_rows(rows: &[FieldRow]) -> TrapField {
    TrapField::new(rows.iter().map(|r| num_complex::Complex64::new(r.re, r.im)).collect())
}

pub fn write_field_json<W: Write>(w: W, field: &TrapField) -> Result<()> {
    serde_json::to_writer_pretty(w, &field_rows(0, field))?;
    Ok(())
}

pub fn write_field_csv<W: Write>(w: W, frame: usize, field: &TrapField) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for row in field_rows(frame, field) {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_field_csv<R: Read>(r: R) -> Result<Vec<FieldRow>> {
    let mut csv = csv::Reader::from_reader(r);
    csv.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientRow {
    pub frame: usize,
    pub trap_id: usize,
    pub a: f64,
    pub i_over_i0: f64,
    pub dphi: f64,
}

/// One row per (sample, trap); `frame` is the frame the refresh ends in.
pub fn transient_rows(record: &TransitionRecord) -> Vec<TransientRow> {
    let mut rows = Vec::with_capacity(record.a.len() * record.dphi.len());
    for (a, ratio) in record.a.iter().zip(&record.ratio) {
        for (n, (&r, &d)) in ratio.iter().zip(&record.dphi).enumerate() {
            rows.push(TransientRow {
                frame: record.frame,
                trap_id: n,
                a: *a,
                i_over_i0: r,
                dphi: d,
            });
        }
    }
    rows
}

pub fn write_transients_csv<W: Write>(w: W, records: &[TransitionRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for rec in records {
        for row in transient_rows(rec) {
            csv.serialize(row)?;
        }
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeRow {
    pub a: f64,
    pub dphi: f64,
    pub intensity: f64,
}

/// `intensity_model` on an `a_steps × dphi_steps` grid: a over [0, 1], Δφ over [0, π].
pub fn landscape(a_steps: usize, dphi_steps: usize) -> Result<Vec<LandscapeRow>> {
    if a_steps < 2 || dphi_steps < 2 {
        return Err(Error::Config("landscape needs at least 2 steps per axis".into()));
    }
    let mut rows = Vec::with_capacity(a_steps * dphi_steps);
    for i in 0..a_steps {
        let a = i as f64 / (a_steps - 1) as f64;
        for j in 0..dphi_steps {
            let dphi = std::f64::consts::PI * j as f64 / (dphi_steps - 1) as f64;
            rows.push(LandscapeRow {
                a,
                dphi,
                intensity: intensity_model(a, dphi),
            });
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub bin_left: f64,
    pub bin_right: f64,
    pub percent: f64,
}

pub fn histogram_rows(h: &Histogram) -> Vec<HistogramRow> {
    h.rows()
        .into_iter()
        .map(|(bin_left, bin_right, percent)| HistogramRow {
            bin_left,
            bin_right,
            percent,
        })
        .collect()
}

pub fn write_histogram_csv<W: Write>(w: W, h: &Histogram) -> Result<()> {
    write_csv(w, &histogram_rows(h))
}

pub fn write_json<W: Write, T: Serialize>(w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(w, value)?;
    Ok(())
}

pub fn save_plan(path: &Path, plan: &TransportPlan) -> Result<()> {
    write_json(BufWriter::new(File::create(path)?), plan)
}

pub fn load_plan(path: &Path) -> Result<TransportPlan> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

pub fn write_timing_csv<W: Write>(w: W, rows: &[TimingRow]) -> Result<()> {
    write_csv(w, rows)
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSettings {
    pub solver: SolverKind,
    pub optical: OpticalConfig,
    pub options: SequenceOptions,
}

#[derive(Serialize)]
struct FrameTiming {
    frame: usize,
    solve_ms: f64,
    iterations: usize,
    dark_pixels: usize,
}

#[derive(Serialize)]
struct ObjectiveRow {
    frame: usize,
    iteration: usize,
    objective: f64,
}

/// Streams a run into a directory as frames complete.
///
/// Layout: `settings.toml`, `plan.json`, `masks/frame_NNNNN.bin` (and `.pgm`
/// when enabled), `fields.csv`, `transients.csv`, `objective.csv`,
/// `frame_timing.csv`, then `metrics.json`, `phase_histogram.csv` and
/// `ratio_histogram.csv` on [`RecordWriter::finish`].
pub struct RecordWriter {
    dir: PathBuf,
    pgm: bool,
    fields: csv::Writer<BufWriter<File>>,
    transients: csv::Writer<BufWriter<File>>,
    objective: csv::Writer<BufWriter<File>>,
    timing: csv::Writer<BufWriter<File>>,
}

impl RecordWriter {
    pub fn create(dir: &Path, settings: &RecordSettings, plan: &TransportPlan, pgm: bool) -> Result<Self> {
        fs::create_dir_all(dir.join("masks"))?;
        fs::write(dir.join("settings.toml"), toml::to_string(settings)?)?;
        save_plan(&dir.join("plan.json"), plan)?;
        let open = |name: &str| -> Result<csv::Writer<BufWriter<File>>> {
            Ok(csv::Writer::from_writer(BufWriter::new(File::create(dir.join(name))?)))
        };
        Ok(RecordWriter {
            dir: dir.to_path_buf(),
            pgm,
            fields: open("fields.csv")?,
            transients: open("transients.csv")?,
            objective: open("objective.csv")?,
            timing: open("frame_timing.csv")?,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn mask_path(&self, frame: usize) -> PathBuf {
        self.dir.join("masks").join(format!("frame_{frame:05}.bin"))
    }

    pub fn frame(&mut self, frame: &FrameRecord, mask: &PhaseMask, transition: Option<&TransitionRecord>) -> Result<()> {
        save_mask(&self.mask_path(frame.frame), mask)?;
        if self.pgm {
            let path = self.mask_path(frame.frame).with_extension("pgm");
            write_pgm(BufWriter::new(File::create(path)?), mask)?;
        }
        for row in field_rows(frame.frame, &frame.field) {
            self.fields.serialize(row)?;
        }
        for (k, j) in frame.objective.iter().enumerate() {
            self.objective.serialize(ObjectiveRow {
                frame: frame.frame,
                iteration: k,
                objective: *j,
            })?;
        }
        self.timing.serialize(FrameTiming {
            frame: frame.frame,
            solve_ms: frame.solve_time * 1e3,
            iterations: frame.iterations,
            dark_pixels: frame.dark_pixels,
        })?;
        if let Some(tr) = transition {
            for row in transient_rows(tr) {
                self.transients.serialize(row)?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self, metrics: &MetricsReport) -> Result<()> {
        self.fields.flush()?;
        self.transients.flush()?;
        self.objective.flush()?;
        self.timing.flush()?;
        write_json(BufWriter::new(File::create(self.dir.join("metrics.json"))?), metrics)?;
        write_histogram_csv(
            File::create(self.dir.join("phase_histogram.csv"))?,
            &metrics.phase.histogram,
        )?;
        write_histogram_csv(
            File::create(self.dir.join("ratio_histogram.csv"))?,
            &metrics.transition.histogram,
        )?;
        Ok(())
    }
}
