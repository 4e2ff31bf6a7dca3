use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Mono audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("sample {i} is not finite")));
        }
        if let Some(i) = samples.iter().position(|s| s.abs() > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "sample {i} exceeds unit amplitude ({})",
                samples[i]
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Concatenates buffers sharing one sample rate.
    pub fn concat(parts: &[AudioBuffer]) -> Result<AudioBuffer> {
        let first = parts
            .first()
            .ok_or(Error::TooFew { what: "audio parts", need: 1, got: 0 })?;
        let mut samples = Vec::with_capacity(parts.iter().map(|p| p.samples.len()).sum());
        for p in parts {
            if p.sample_rate != first.sample_rate {
                return Err(Error::UnsupportedAudio {
                    property: "sample rate",
                    detail: format!("{} Hz mixed with {} Hz", p.sample_rate, first.sample_rate),
                });
            }
            samples.extend_from_slice(&p.samples);
        }
        Ok(AudioBuffer { samples, sample_rate: first.sample_rate })
    }

    /// Writes 16-bit PCM mono. Samples are rounded to the nearest code and
    /// clipped to `[-32768, 32767]`.
    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let data_len = (self.samples.len() * 2) as u32;
        let mut out = Vec::with_capacity(44 + data_len as usize);
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_len).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&self.sample_rate.to_le_bytes());
        out.extend_from_slice(&(self.sample_rate * 2).to_le_bytes());
        out.extend_from_slice(&2u16.to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&data_len.to_le_bytes());
        for &s in &self.samples {
            let code = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            out.extend_from_slice(&code.to_le_bytes());
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }
}

const FORMAT_PCM: u16 = 1;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

fn format_name(tag: u16) -> &'static str {
    match tag {
        1 => "PCM",
        3 => "IEEE float",
        6 => "A-law",
        7 => "mu-law",
        0x11 => "IMA ADPCM",
        _ => "unknown",
    }
}

/// Reads a RIFF/WAVE file holding 16-bit PCM mono audio.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_wav(&bytes)
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub(crate) fn parse_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::malformed("wav", "missing RIFF/WAVE header"));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                Error::malformed("wav", format!("chunk {:?} overruns file", String::from_utf8_lossy(id)))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::malformed("wav", "fmt chunk shorter than 16 bytes"));
                }
                let mut tag = u16_at(body, 0);
                if tag == FORMAT_EXTENSIBLE && body.len() >= 26 {
                    tag = u16_at(body, 24);
                }
                fmt = Some((tag, u16_at(body, 2), u32_at(body, 4), u16_at(body, 14)));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (len & 1);
    }
    let (tag, channels, sample_rate, bits) =
        fmt.ok_or_else(|| Error::malformed("wav", "no fmt chunk"))?;
    if tag != FORMAT_PCM {
        return Err(Error::UnsupportedAudio {
            property: "encoding",
            detail: format!("format tag {tag} ({}), expected PCM", format_name(tag)),
        });
    }
    if channels != 1 {
        return Err(Error::UnsupportedAudio {
            property: "channels",
            detail: format!("{channels} channels, expected mono"),
        });
    }
    if bits != 16 {
        return Err(Error::UnsupportedAudio {
            property: "bit depth",
            detail: format!("{bits}-bit samples, expected 16-bit"),
        });
    }
    let data = data.ok_or_else(|| Error::malformed("wav", "no data chunk"))?;
    let samples = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    AudioBuffer::new(samples, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(tag: u16, channels: u16, rate: u32, bits: u16, data: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(b"RIFF");
        v.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        v.extend_from_slice(b"WAVEfmt ");
        v.extend_from_slice(&16u32.to_le_bytes());
        v.extend_from_slice(&tag.to_le_bytes());
        v.extend_from_slice(&channels.to_le_bytes());
        v.extend_from_slice(&rate.to_le_bytes());
        let block = channels * bits / 8;
        v.extend_from_slice(&(rate * block as u32).to_le_bytes());
        v.extend_from_slice(&block.to_le_bytes());
        v.extend_from_slice(&bits.to_le_bytes());
        v.extend_from_slice(b"data");
        v.extend_from_slice(&(data.len() as u32).to_le_bytes());
        v.extend_from_slice(data);
        v
    }

    #[test]
    fn silence_second() {
        let bytes = header(1, 1, 16000, 16, &vec![0u8; 32000]);
        let a = parse_wav(&bytes).unwrap();
        assert_eq!(a.sample_rate(), 16000);
        assert_eq!(a.samples().len(), 16000);
        assert!(a.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn square_wave_codes() {
        // 0x7FFF then 0x8001 little-endian: +32767 and -32767
        let data: Vec<u8> = (0..8).flat_map(|i| if i % 2 == 0 { [0xFF, 0x7F] } else { [0x01, 0x80] }).collect();
        let a = parse_wav(&header(1, 1, 8000, 16, &data)).unwrap();
        for (i, &s) in a.samples().iter().enumerate() {
            let expected = if i % 2 == 0 { 32767.0 / 32768.0 } else { -32767.0 / 32768.0 };
            assert_eq!(s, expected);
        }
    }

    #[test]
    fn mulaw_rejected() {
        let err = parse_wav(&header(7, 1, 8000, 8, &[0u8; 100])).unwrap_err();
        assert!(matches!(err, Error::UnsupportedAudio { property: "encoding", .. }), "{err}");
        assert!(err.to_string().contains("mu-law"));
    }

    #[test]
    fn stereo_rejected() {
        let err = parse_wav(&header(1, 2, 8000, 16, &[0u8; 100])).unwrap_err();
        assert!(matches!(err, Error::UnsupportedAudio { property: "channels", .. }));
    }

    #[test]
    fn truncated_rejected() {
        let mut bytes = header(1, 1, 8000, 16, &[0u8; 100]);
        bytes.truncate(60);
        assert!(matches!(parse_wav(&bytes), Err(Error::Malformed { .. })));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(load_wav("/nonexistent/x.wav"), Err(Error::Io { .. })));
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let a = AudioBuffer::new(vec![0.0, 0.5, -0.5, 32767.0 / 32768.0], 16000).unwrap();
        a.write_wav(&p).unwrap();
        assert_eq!(load_wav(&p).unwrap(), a);
    }
}
