//! 32-bit float multichannel WAV, channel order = mic order.

use std::io::{Read, Seek, Write};
use std::path::Path;

use super::{Recording, RecordingMeta};
use crate::error::{Error, Result};

pub fn write_wav_to<W: Write + Seek>(writer: W, rec: &Recording) -> Result<()> {
    let fs = rec.sample_rate();
    if fs.fract() != 0.0 || fs > u32::MAX as f64 {
        return Err(Error::InvalidConfig(format!(
            "WAV needs an integer sample rate, got {fs}"
        )));
    }
    let channels = u16::try_from(rec.num_channels()).map_err(|_| {
        Error::InvalidConfig(format!("too many channels for WAV: {}", rec.num_channels()))
    })?;
    let spec = hound::WavSpec {
        channels,
        sample_rate: fs as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::new(writer, spec)?;
    for t in 0..rec.len() {
        for c in rec.channels() {
            w.write_sample(c[t] as f32)?;
        }
    }
    w.finalize()?;
    Ok(())
}

pub fn write_wav(path: &Path, rec: &Recording) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_wav_to(file, rec)
}

/// Reads float or integer PCM; integer samples are scaled to [-1, 1).
pub fn read_wav_from<R: Read>(reader: R) -> Result<Recording> {
    let mut r = hound::WavReader::new(reader)?;
    let spec = r.spec();
    let m = spec.channels as usize;
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => r
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    if m == 0 {
        return Err(Error::InvalidConfig("WAV has no channels".into()));
    }
    let len = samples.len() / m;
    let mut channels = vec![Vec::with_capacity(len); m];
    for frame in samples.chunks_exact(m) {
        for (c, v) in channels.iter_mut().zip(frame) {
            c.push(*v);
        }
    }
    let meta = RecordingMeta {
        source: "wav".into(),
        ..Default::default()
    };
    Recording::new(spec.sample_rate as f64, channels, meta)
}

pub fn read_wav(path: &Path) -> Result<Recording> {
    let rec = read_wav_from(std::io::BufReader::new(std::fs::File::open(path)?))?;
    let mut meta = rec.meta.clone();
    meta.source = path.display().to_string();
    Ok(Recording { meta, ..rec })
}
