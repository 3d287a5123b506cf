//! WAV reading and writing.

use std::fs;
use std::io::{BufReader, Read, Seek};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::AudioSignal;

/// Encoding used by [`save_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavFormat {
    #[default]
    Pcm16,
    Float32,
}

impl std::str::FromStr for WavFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm16" => Ok(Self::Pcm16),
            "float32" => Ok(Self::Float32),
            other => Err(Error::Parameter(format!(
                "unknown wav format {other:?}; expected pcm16 or float32"
            ))),
        }
    }
}

fn chunk_of(message: &str) -> &'static str {
    if message.contains("RIFF") || message.contains("WAVE") {
        "RIFF"
    } else if message.contains("data") {
        "data"
    } else {
        "fmt "
    }
}

fn format_error(err: hound::Error, path: &Path) -> Error {
    match err {
        hound::Error::IoError(source) if source.kind() == std::io::ErrorKind::UnexpectedEof => Error::Format {
            chunk: "data",
            message: "file is truncated".into(),
        },
        hound::Error::IoError(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        hound::Error::FormatError(msg) => Error::Format {
            chunk: chunk_of(msg),
            message: msg.into(),
        },
        hound::Error::Unsupported => Error::Format {
            chunk: "fmt ",
            message: "unsupported codec".into(),
        },
        other => Error::Format {
            chunk: "data",
            message: other.to_string(),
        },
    }
}

/// Loads a WAV file as mono. Integer samples are scaled by 1/2^(bits−1);
/// channels are averaged.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioSignal> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_wav(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Decodes WAV data from any seekable reader.
pub fn read_wav<R: Read + Seek>(reader: R) -> Result<AudioSignal> {
    let placeholder = Path::new("<stream>");
    let reader = WavReader::new(reader).map_err(|e| format_error(e, placeholder))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16 | 24) => {
            let scale = 1.0 / (1u32 << (spec.bits_per_sample - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(|e| format_error(e, placeholder))?
        }
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| format_error(e, placeholder))?,
        (fmt, bits) => {
            return Err(Error::Format {
                chunk: "fmt ",
                message: format!("unsupported sample format {fmt:?} with {bits} bits"),
            })
        }
    };
    if !interleaved.len().is_multiple_of(channels) {
        return Err(Error::Format {
            chunk: "data",
            message: "sample count is not a multiple of the channel count".into(),
        });
    }
    let mono: Vec<f64> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    if mono.is_empty() {
        return Err(Error::Format {
            chunk: "data",
            message: "no samples".into(),
        });
    }
    AudioSignal::new(mono, spec.sample_rate)
}

/// 16-bit code for `v`: clamp to [−1, 1), scale, round half away from zero.
pub fn pcm16_code(v: f64) -> i16 {
    let scaled = (v.clamp(-1.0, 1.0) * 32768.0).round();
    scaled.clamp(-32768.0, 32767.0) as i16
}

/// Writes a mono WAV file.
pub fn save_wav(signal: &AudioSignal, path: impl AsRef<Path>, format: WavFormat) -> Result<()> {
    save_samples(signal.samples(), signal.sample_rate(), path, format)
}

/// Writes raw samples; nothing is created when `samples` is empty or
/// contains non-finite values.
pub fn save_samples(samples: &[f64], sample_rate: u32, path: impl AsRef<Path>, format: WavFormat) -> Result<()> {
    let path = path.as_ref();
    if samples.is_empty() {
        return Err(Error::InvalidSignal("refusing to write an empty signal".into()));
    }
    if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
        return Err(Error::InvalidSignal(format!("non-finite sample at index {i}")));
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => SampleFormat::Int,
            WavFormat::Float32 => SampleFormat::Float,
        },
    };
    let io_err = |e| format_error(e, path);
    let write = || -> Result<()> {
        let mut writer = WavWriter::create(path, spec).map_err(io_err)?;
        match format {
            WavFormat::Pcm16 => {
                for &s in samples {
                    writer.write_sample(pcm16_code(s)).map_err(io_err)?;
                }
            }
            WavFormat::Float32 => {
                for &s in samples {
                    writer.write_sample(s as f32).map_err(io_err)?;
                }
            }
        }
        writer.finalize().map_err(io_err)
    };
    write().inspect_err(|_| {
        let _ = fs::remove_file(path);
    })
}
