//! Dataset file I/O: the AU+POSE CSV contract, transcripts, per-sample
//! metadata, normalization stats, and the sample directory layout.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{
    AuPose, AuPoseSequence, ConversationSample, NormStats, Split, AU_NAMES, FRAME_DIM, NUM_AU,
};

pub const DEFAULT_FPS: f64 = 25.0;

fn expected_header() -> String {
    let mut cols = vec!["frame".to_string()];
    cols.extend(AU_NAMES.iter().map(|n| format!("{n}_r")));
    cols.extend(["pose_Rx", "pose_Ry", "pose_Rz"].map(String::from));
    cols.join(",")
}

fn column_name(i: usize) -> String {
    if i == 0 {
        "frame".into()
    } else if i <= NUM_AU {
        format!("{}_r", AU_NAMES[i - 1])
    } else {
        ["pose_Rx", "pose_Ry", "pose_Rz"][i - 1 - NUM_AU].into()
    }
}

/// Reads one AU+POSE CSV. The fps comes from a `meta.txt` sidecar in the
/// same directory when present, otherwise 25.
pub fn ingest_csv(path: &Path) -> Result<AuPoseSequence> {
    let fps = match path.parent() {
        Some(dir) if dir.join("meta.txt").exists() => read_meta(&dir.join("meta.txt"))?.0,
        _ => DEFAULT_FPS,
    };
    ingest_csv_with_fps(path, fps)
}

pub fn ingest_csv_with_fps(path: &Path, fps: f64) -> Result<AuPoseSequence> {
    let text = fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        path: display.clone(),
        row: 0,
        column: "frame".into(),
        message: "empty file".into(),
    })?;
    if header != expected_header() {
        return Err(Error::Parse {
            path: display,
            row: 0,
            column: "frame".into(),
            message: format!("bad header: expected {:?}", expected_header()),
        });
    }

    let mut frames = Vec::new();
    for (row_idx, line) in lines.enumerate() {
        let row = row_idx + 1;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != FRAME_DIM + 1 {
            return Err(Error::Parse {
                path: display,
                row,
                column: column_name(cells.len().min(FRAME_DIM)),
                message: format!("expected {} columns, got {}", FRAME_DIM + 1, cells.len()),
            });
        }
        let parse_cell = |i: usize, cell: &str| -> Result<f64> {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                path: display.clone(),
                row,
                column: column_name(i),
                message: format!("non-numeric cell {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: display.clone(),
                    row,
                    column: column_name(i),
                    message: format!("non-finite cell {cell:?}"),
                });
            }
            Ok(v)
        };
        let frame_idx = parse_cell(0, cells[0])?;
        if frame_idx != row_idx as f64 {
            return Err(Error::Parse {
                path: display,
                row,
                column: "frame".into(),
                message: format!("expected frame index {}, got {}", row_idx, cells[0]),
            });
        }
        let mut v = [0.0; FRAME_DIM];
        for i in 0..FRAME_DIM {
            v[i] = parse_cell(i + 1, cells[i + 1])?;
        }
        frames.push(AuPose::from_vec20(&v)?);
    }
    if frames.is_empty() {
        return Err(Error::Parse {
            path: display,
            row: 1,
            column: "frame".into(),
            message: "no data rows".into(),
        });
    }
    AuPoseSequence::new(frames, fps)
}

/// Writes the CSV with shortest-roundtrip decimal formatting, so
/// `ingest_csv(write_csv(s))` reproduces the values exactly.
pub fn write_csv(seq: &AuPoseSequence, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&expected_header());
    out.push('\n');
    for (i, frame) in seq.frames().iter().enumerate() {
        out.push_str(&i.to_string());
        for v in frame.to_vec20() {
            out.push(',');
            out.push_str(&format_f64(v));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Shortest decimal that round-trips through f64 parsing.
pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

pub fn read_transcript(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(|line| line.split_whitespace().map(str::to_string).collect())
        .collect())
}

pub fn write_transcript(sentences: &[Vec<String>], path: &Path) -> Result<()> {
    let mut out = String::new();
    for sentence in sentences {
        out.push_str(&sentence.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// meta.txt: `fps=<f64>` and `split=<train|val|test>` lines.
pub fn read_meta(path: &Path) -> Result<(f64, Split)> {
    let text = fs::read_to_string(path)?;
    let mut fps = DEFAULT_FPS;
    let mut split = Split::Train;
    for line in text.lines() {
        let Some((key, value)) = line.split_once('=') else { continue };
        match key.trim() {
            "fps" => {
                fps = value.trim().parse().map_err(|_| {
                    Error::Data(format!("{}: bad fps {value:?}", path.display()))
                })?;
            }
            "split" => split = Split::parse(value.trim())?,
            other => {
                return Err(Error::Data(format!(
                    "{}: unknown meta key {other:?}",
                    path.display()
                )))
            }
        }
    }
    Ok((fps, split))
}

pub fn write_meta(fps: f64, split: Split, path: &Path) -> Result<()> {
    fs::write(path, format!("fps={}\nsplit={}\n", format_f64(fps), split.as_str()))?;
    Ok(())
}

/// stats.txt: `min=<20 comma-separated>` and `max=<...>` lines.
pub fn write_stats(stats: &NormStats, path: &Path) -> Result<()> {
    let join = |v: &[f64; FRAME_DIM]| {
        v.iter().map(|x| format_f64(*x)).collect::<Vec<_>>().join(",")
    };
    fs::write(path, format!("min={}\nmax={}\n", join(&stats.min), join(&stats.max)))?;
    Ok(())
}

pub fn read_stats(path: &Path) -> Result<NormStats> {
    let text = fs::read_to_string(path)?;
    let mut min = None;
    let mut max = None;
    for line in text.lines() {
        let Some((key, value)) = line.split_once('=') else { continue };
        let parsed: Vec<f64> = value
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if parsed.len() != FRAME_DIM {
            return Err(Error::Data(format!(
                "{}: expected {FRAME_DIM} values for {key}",
                path.display()
            )));
        }
        let mut arr = [0.0; FRAME_DIM];
        arr.copy_from_slice(&parsed);
        match key.trim() {
            "min" => min = Some(arr),
            "max" => max = Some(arr),
            other => return Err(Error::Data(format!("unknown stats key {other:?}"))),
        }
    }
    match (min, max) {
        (Some(min), Some(max)) => NormStats::new(min, max),
        _ => Err(Error::Data(format!("{}: missing min or max", path.display()))),
    }
}

/// Writes one sample directory: speaker.csv, listener.csv, transcript.txt,
/// meta.txt.
pub fn write_sample_dir(sample: &ConversationSample, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(&sample.speaker_track, &dir.join("speaker.csv"))?;
    write_csv(&sample.listener_track, &dir.join("listener.csv"))?;
    write_transcript(std::slice::from_ref(&sample.transcript), &dir.join("transcript.txt"))?;
    write_meta(sample.speaker_track.fps(), sample.split, &dir.join("meta.txt"))?;
    Ok(())
}

pub fn read_sample_dir(dir: &Path) -> Result<ConversationSample> {
    let (fps, split) = read_meta(&dir.join("meta.txt"))?;
    let speaker = ingest_csv_with_fps(&dir.join("speaker.csv"), fps)?;
    let listener = ingest_csv_with_fps(&dir.join("listener.csv"), fps)?;
    let sentences = read_transcript(&dir.join("transcript.txt"))?;
    let transcript = sentences.into_iter().next().unwrap_or_default();
    ConversationSample::new(speaker, listener, transcript, split)
}

/// Loads every `sample_*` directory of a dataset, sorted by name.
pub fn read_dataset_dir(dir: &Path) -> Result<Vec<ConversationSample>> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("sample_"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::Data(format!(
            "no sample_* directories under {}",
            dir.display()
        )));
    }
    names
        .iter()
        .map(|n| read_sample_dir(&dir.join(n)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::synth_data::synth_conversation;

    #[test]
    fn three_row_file_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let mut body = expected_header();
        for i in 0..3 {
            body.push('\n');
            body.push_str(&i.to_string());
            for _ in 0..FRAME_DIM {
                body.push_str(",0.5");
            }
        }
        body.push('\n');
        fs::write(&path, body).unwrap();
        let seq = ingest_csv(&path).unwrap();
        assert_eq!(seq.len(), 3);
        assert_eq!(seq.fps(), DEFAULT_FPS);
    }

    #[test]
    fn nan_cell_cites_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let mut body = expected_header();
        body.push('\n');
        body.push('0');
        for _ in 0..FRAME_DIM {
            body.push_str(",0.5");
        }
        body.push('\n');
        body.push('1');
        for i in 0..FRAME_DIM {
            // AU04_r is the third AU column
            body.push_str(if i == 2 { ",NaN" } else { ",0.5" });
        }
        body.push('\n');
        fs::write(&path, body).unwrap();
        let err = ingest_csv(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2"), "{msg}");
        assert!(msg.contains("AU04_r"), "{msg}");
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        fs::write(&path, "").unwrap();
        assert!(ingest_csv(&path).is_err());
        fs::write(&path, format!("{}\n", expected_header())).unwrap();
        assert!(ingest_csv(&path).is_err());
    }

    #[test]
    fn csv_roundtrip_preserves_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let sample = synth_conversation(11, 40, 25.0).unwrap();
        write_csv(&sample.speaker_track, &path).unwrap();
        let back = ingest_csv_with_fps(&path, 25.0).unwrap();
        assert_eq!(back.len(), sample.speaker_track.len());
        for (a, b) in back.frames().iter().zip(sample.speaker_track.frames()) {
            for (x, y) in a.to_vec20().iter().zip(b.to_vec20()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sample_dir_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let sample = synth_conversation(3, 30, 25.0).unwrap();
        write_sample_dir(&sample, &dir.path().join("sample_0000")).unwrap();
        let back = read_sample_dir(&dir.path().join("sample_0000")).unwrap();
        assert_eq!(back.transcript, sample.transcript);
        assert_eq!(back.split, sample.split);
        assert_eq!(back.speaker_track.len(), sample.speaker_track.len());
    }

    #[test]
    fn stats_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.txt");
        let stats = NormStats::native_ranges();
        write_stats(&stats, &path).unwrap();
        let back = read_stats(&path).unwrap();
        assert_eq!(back, stats);
    }
}
