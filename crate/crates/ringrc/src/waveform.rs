//! Uniformly sampled optical traces, either complex field amplitude or
//! detected power, plus the text dump format shared by all tools.

use num_complex::Complex64;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WaveformError {
    #[error("sample rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("waveform must contain at least one sample")]
    Empty,
    #[error("power waveform has a negative sample at index {0}")]
    NegativePower(usize),
    #[error("expected a {expected}-valued waveform, got {got}")]
    KindMismatch {
        expected: &'static str,
        got: &'static str,
    },
    #[error("waveform dump: {0}")]
    Parse(String),
    #[error("waveform i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// What the samples of a trace mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveformKind {
    /// Complex field amplitude; |sample|^2 is instantaneous power in W.
    Field,
    /// Real detected power (W, or normalized units after the receiver chain).
    Power,
}

impl WaveformKind {
    fn name(self) -> &'static str {
        match self {
            WaveformKind::Field => "field",
            WaveformKind::Power => "power",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Field(Vec<Complex64>),
    Power(Vec<f64>),
}

/// Uniformly sampled trace with an absolute start time.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalWaveform {
    pub samples: Samples,
    /// Samples per second.
    pub sample_rate: f64,
    /// Start time of sample 0 (s).
    pub t0: f64,
}

impl OpticalWaveform {
    pub fn field(
        samples: Vec<Complex64>,
        sample_rate: f64,
        t0: f64,
    ) -> Result<Self, WaveformError> {
        Self::check_common(samples.len(), sample_rate)?;
        Ok(Self {
            samples: Samples::Field(samples),
            sample_rate,
            t0,
        })
    }

    pub fn power(samples: Vec<f64>, sample_rate: f64, t0: f64) -> Result<Self, WaveformError> {
        Self::check_common(samples.len(), sample_rate)?;
        if let Some(i) = samples.iter().position(|&p| p < 0.0) {
            return Err(WaveformError::NegativePower(i));
        }
        Ok(Self {
            samples: Samples::Power(samples),
            sample_rate,
            t0,
        })
    }

    fn check_common(len: usize, sample_rate: f64) -> Result<(), WaveformError> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(WaveformError::NonPositiveRate(sample_rate));
        }
        if len == 0 {
            return Err(WaveformError::Empty);
        }
        Ok(())
    }

    pub fn kind(&self) -> WaveformKind {
        match self.samples {
            Samples::Field(_) => WaveformKind::Field,
            Samples::Power(_) => WaveformKind::Power,
        }
    }

    pub fn len(&self) -> usize {
        match &self.samples {
            Samples::Field(v) => v.len(),
            Samples::Power(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trace duration in seconds (len / sample_rate).
    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub fn as_field(&self) -> Result<&[Complex64], WaveformError> {
        match &self.samples {
            Samples::Field(v) => Ok(v),
            Samples::Power(_) => Err(WaveformError::KindMismatch {
                expected: "field",
                got: "power",
            }),
        }
    }

    pub fn as_power(&self) -> Result<&[f64], WaveformError> {
        match &self.samples {
            Samples::Power(v) => Ok(v),
            Samples::Field(_) => Err(WaveformError::KindMismatch {
                expected: "power",
                got: "field",
            }),
        }
    }

    /// Instantaneous power samples regardless of kind.
    pub fn power_samples(&self) -> Vec<f64> {
        match &self.samples {
            Samples::Field(v) => v.iter().map(|c| c.norm_sqr()).collect(),
            Samples::Power(v) => v.clone(),
        }
    }

    /// Time-averaged power of the trace.
    pub fn mean_power(&self) -> f64 {
        let (sum, n) = match &self.samples {
            Samples::Field(v) => (v.iter().map(|c| c.norm_sqr()).sum::<f64>(), v.len()),
            Samples::Power(v) => (v.iter().sum::<f64>(), v.len()),
        };
        sum / n as f64
    }

    /// Serialize to the text dump format: three `key=value` header lines
    /// (`sample_rate_hz`, `kind`, `t0_s`) followed by one sample per line,
    /// `re,im` for field traces and a single `p` for power traces.
    pub fn to_dump(&self) -> String {
        let mut out = String::with_capacity(self.len() * 24 + 64);
        let _ = writeln!(out, "sample_rate_hz={}", self.sample_rate);
        let _ = writeln!(out, "kind={}", self.kind().name());
        let _ = writeln!(out, "t0_s={}", self.t0);
        match &self.samples {
            Samples::Field(v) => {
                for c in v {
                    let _ = writeln!(out, "{},{}", c.re, c.im);
                }
            }
            Samples::Power(v) => {
                for p in v {
                    let _ = writeln!(out, "{p}");
                }
            }
        }
        out
    }

    /// Parse the dump format produced by [`OpticalWaveform::to_dump`].
    pub fn from_dump(text: &str) -> Result<Self, WaveformError> {
        let mut lines = text.lines();
        let rate = parse_header(lines.next(), "sample_rate_hz")?;
        let kind_line = lines
            .next()
            .ok_or_else(|| WaveformError::Parse("missing kind header".into()))?;
        let kind = match kind_line.strip_prefix("kind=") {
            Some("field") => WaveformKind::Field,
            Some("power") => WaveformKind::Power,
            Some(other) => {
                return Err(WaveformError::Parse(format!("unknown kind '{other}'")));
            }
            None => return Err(WaveformError::Parse("malformed kind header".into())),
        };
        let t0 = parse_header(lines.next(), "t0_s")?;
        if !rate.is_finite() || !t0.is_finite() {
            return Err(WaveformError::Parse("non-finite header value".into()));
        }
        match kind {
            WaveformKind::Field => {
                let mut samples = Vec::new();
                for (i, line) in lines.enumerate() {
                    if line.is_empty() {
                        continue;
                    }
                    let (re, im) = line.split_once(',').ok_or_else(|| {
                        WaveformError::Parse(format!("sample {i}: expected re,im"))
                    })?;
                    samples.push(Complex64::new(parse_float(re, i)?, parse_float(im, i)?));
                }
                Self::field(samples, rate, t0)
            }
            WaveformKind::Power => {
                let mut samples = Vec::new();
                for (i, line) in lines.enumerate() {
                    if line.is_empty() {
                        continue;
                    }
                    samples.push(parse_float(line, i)?);
                }
                Self::power(samples, rate, t0)
            }
        }
    }

    pub fn write_dump_file(&self, path: &std::path::Path) -> Result<(), WaveformError> {
        std::fs::write(path, self.to_dump()).map_err(|source| WaveformError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read_dump_file(path: &std::path::Path) -> Result<Self, WaveformError> {
        let text = std::fs::read_to_string(path).map_err(|source| WaveformError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_dump(&text)
    }
}

fn parse_header(line: Option<&str>, key: &str) -> Result<f64, WaveformError> {
    let line = line.ok_or_else(|| WaveformError::Parse(format!("missing {key} header")))?;
    let value = line
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| WaveformError::Parse(format!("malformed {key} header")))?;
    value
        .trim()
        .parse::<f64>()
        .map_err(|e| WaveformError::Parse(format!("{key}: {e}")))
}

fn parse_float(s: &str, line: usize) -> Result<f64, WaveformError> {
    let v = s
        .trim()
        .parse::<f64>()
        .map_err(|e| WaveformError::Parse(format!("sample {line}: {e}")))?;
    if v.is_nan() {
        return Err(WaveformError::Parse(format!("sample {line}: NaN")));
    }
    Ok(v)
}
