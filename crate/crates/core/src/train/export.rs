use std::path::Path;

use super::{Batch, EVAL_BATCH};
use crate::dataset::WindowPair;
use crate::embeddings::{trend_label, EmbeddingFile, EmbeddingRecord};
use crate::error::{Error, Result};
use crate::models::{StudentForecaster, TeacherHandle};
use crate::tensor::Tape;

/// `H_f` for every window, one row per window.
pub fn student_embeddings(student: &StudentForecaster, windows: &[WindowPair]) -> Result<Vec<Vec<f64>>> {
    Ok(encode_all(student, None, windows)?.into_iter().map(|(h_f, _)| h_f).collect())
}

fn encode_all(student: &StudentForecaster, teacher: Option<&TeacherHandle>, windows: &[WindowPair]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let d_f = student.d_f();
    let d_g = teacher.map_or(0, TeacherHandle::d_g);
    let mut rows = Vec::with_capacity(windows.len());
    let indices: Vec<usize> = (0..windows.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let batch = Batch::from_windows(windows, chunk)?;
        let mut tape = Tape::new();
        let vars = student.bind_frozen(&mut tape);
        let x = tape.constant(&batch.x);
        let h_f = student.encode(&mut tape, &vars, x)?;
        let h_g = match teacher {
            Some(t) => Some(t.encode(&mut tape, x, &batch.ids)?.embedding),
            None => None,
        };
        let f = tape.value(h_f);
        let g = h_g.map(|v| tape.value(v));
        for r in 0..chunk.len() {
            let gr = g.map_or_else(Vec::new, |g| g[r * d_g..(r + 1) * d_g].to_vec());
            rows.push((f[r * d_f..(r + 1) * d_f].to_vec(), gr));
        }
    }
    Ok(rows)
}

/// Student and (optionally) teacher embeddings with trend labels.
pub fn embedding_file(student: &StudentForecaster, teacher: Option<&TeacherHandle>, windows: &[WindowPair]) -> Result<EmbeddingFile> {
    if windows.is_empty() {
        return Err(Error::contract("no windows to export"));
    }
    let d_g = teacher.map_or(0, TeacherHandle::d_g);
    let mut file = EmbeddingFile::new(student.d_f(), d_g);
    for (w, (h_f, h_g)) in windows.iter().zip(encode_all(student, teacher, windows)?) {
        file.push(EmbeddingRecord {
            origin: w.origin as u64,
            label: trend_label(w),
            h_f,
            h_g,
        })?;
    }
    Ok(file)
}

/// Writes an RGE1 file and returns the number of records.
pub fn export_embeddings(
    student: &StudentForecaster,
    teacher: Option<&TeacherHandle>,
    windows: &[WindowPair],
    path: impl AsRef<Path>,
) -> Result<usize> {
    let file = embedding_file(student, teacher, windows)?;
    file.save(path)?;
    Ok(file.records.len())
}
