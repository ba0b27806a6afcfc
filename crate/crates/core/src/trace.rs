//! Channel sources and the binary channel-trace format.
//!
//! A trace file is little-endian throughout:
//!
//! ```text
//! magic     8 bytes  "WNVTRACE"
//! version   u32      1
//! rows      u32      K
//! cols      u32      N
//! seed      u64
//! alpha_h   f64
//! gain_scale f64     factor already applied to the large-scale gains
//! then per slot: t u64, followed by rows*cols (re f64, im f64) pairs in row-major order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;

use crate::channel::{ChannelState, FadingProcess, LargeScale, Layout};
use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;

pub const TRACE_MAGIC: &[u8; 8] = b"WNVTRACE";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceHeader {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub alpha_h: f64,
    pub gain_scale: f64,
}

pub struct TraceWriter<W: Write> {
    out: W,
    header: TraceHeader,
}

impl TraceWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: TraceHeader) -> Result<Self> {
        TraceWriter::new(BufWriter::new(File::create(path)?), header)
    }
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, header: TraceHeader) -> Result<Self> {
        out.write_all(TRACE_MAGIC)?;
        out.write_all(&TRACE_VERSION.to_le_bytes())?;
        out.write_all(&(header.rows as u32).to_le_bytes())?;
        out.write_all(&(header.cols as u32).to_le_bytes())?;
        out.write_all(&header.seed.to_le_bytes())?;
        out.write_all(&header.alpha_h.to_le_bytes())?;
        out.write_all(&header.gain_scale.to_le_bytes())?;
        Ok(Self { out, header })
    }

    pub fn write_slot(&mut self, state: &ChannelState) -> Result<()> {
        if state.h.shape() != (self.header.rows, self.header.cols) {
            return Err(Error::dim("TraceWriter", "slot shape differs from header"));
        }
        self.out.write_all(&(state.t as u64).to_le_bytes())?;
        for z in state.h.as_slice() {
            self.out.write_all(&z.re.to_le_bytes())?;
            self.out.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::Trace("truncated file".into()),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

pub struct TraceReader<R: Read> {
    input: R,
    header: TraceHeader,
}

impl TraceReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        TraceReader::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> TraceReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        if &read_array::<8>(&mut input)? != TRACE_MAGIC {
            return Err(Error::Trace("bad magic".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut input)?);
        if version != TRACE_VERSION {
            return Err(Error::Trace(format!("unsupported version {version}")));
        }
        let rows = u32::from_le_bytes(read_array(&mut input)?) as usize;
        let cols = u32::from_le_bytes(read_array(&mut input)?) as usize;
        let seed = u64::from_le_bytes(read_array(&mut input)?);
        let alpha_h = f64::from_le_bytes(read_array(&mut input)?);
        let gain_scale = f64::from_le_bytes(read_array(&mut input)?);
        Ok(Self {
            input,
            header: TraceHeader {
                rows,
                cols,
                seed,
                alpha_h,
                gain_scale,
            },
        })
    }

    pub fn header(&self) -> TraceHeader {
        self.header
    }

    /// Next slot, or `None` at a clean end of file.
    pub fn next_slot(&mut self, layout: &Arc<Layout>) -> Result<Option<ChannelState>> {
        let mut first = [0u8; 8];
        match self.input.read(&mut first)? {
            0 => return Ok(None),
            8 => {}
            n => self
                .input
                .read_exact(&mut first[n..])
                .map_err(|_| Error::Trace("truncated slot index".into()))?,
        }
        let t = u64::from_le_bytes(first) as usize;
        let mut data = Vec::with_capacity(self.header.rows * self.header.cols);
        for _ in 0..self.header.rows * self.header.cols {
            let re = f64::from_le_bytes(read_array(&mut self.input)?);
            let im = f64::from_le_bytes(read_array(&mut self.input)?);
            data.push(Complex64::new(re, im));
        }
        let h = ComplexMatrix::from_vec(self.header.rows, self.header.cols, data)
            .map_err(|_| Error::Trace(format!("non-finite entry in slot {t}")))?;
        ChannelState::new(t, h, layout.clone())
            .map(Some)
            .map_err(|e| Error::Trace(e.to_string()))
    }
}

/// Sequential supplier of `H_1, H_2, …`.
pub trait ChannelSource {
    fn next_channel(&mut self) -> Result<ChannelState>;
}

/// Fading process driven from its seed.
pub struct GeneratedSource {
    process: FadingProcess,
    last: Option<ChannelState>,
}

impl GeneratedSource {
    pub fn new(process: FadingProcess) -> Self {
        Self {
            process,
            last: None,
        }
    }
}

impl ChannelSource for GeneratedSource {
    fn next_channel(&mut self) -> Result<ChannelState> {
        let next = match &self.last {
            None => self.process.init_channel(),
            Some(prev) => self.process.step_channel(prev),
        };
        self.last = Some(next.clone());
        Ok(next)
    }
}

/// Replays a recorded trace. Slots must be numbered `1, 2, …`.
pub struct ReplaySource {
    reader: TraceReader<BufReader<File>>,
    layout: Arc<Layout>,
    expected: usize,
}

impl ReplaySource {
    pub fn open(path: &Path, layout: Arc<Layout>) -> Result<Self> {
        let reader = TraceReader::open(path)?;
        let h = reader.header();
        if (h.rows, h.cols) != (layout.total_users(), layout.total_antennas()) {
            return Err(Error::Trace(format!(
                "trace is {}x{} but the scenario needs {}x{}",
                h.rows,
                h.cols,
                layout.total_users(),
                layout.total_antennas()
            )));
        }
        Ok(Self {
            reader,
            layout,
            expected: 1,
        })
    }

    pub fn header(&self) -> TraceHeader {
        self.reader.header()
    }
}

impl ChannelSource for ReplaySource {
    fn next_channel(&mut self) -> Result<ChannelState> {
        let state = self
            .reader
            .next_slot(&self.layout)?
            .ok_or_else(|| Error::Trace(format!("trace ends before slot {}", self.expected)))?;
        if state.t != self.expected {
            return Err(Error::Trace(format!(
                "expected slot {}, found {}",
                self.expected, state.t
            )));
        }
        self.expected += 1;
        Ok(state)
    }
}

/// Recipe for a channel source that can be opened more than once.
#[derive(Debug, Clone)]
pub enum ChannelSpec {
    Generated {
        layout: Arc<Layout>,
        large_scale: LargeScale,
        alpha_h: f64,
        seed: u64,
        parallel: bool,
    },
    Replay {
        path: PathBuf,
        layout: Arc<Layout>,
    },
}

impl ChannelSpec {
    pub fn open(&self) -> Result<Box<dyn ChannelSource>> {
        match self {
            ChannelSpec::Generated {
                layout,
                large_scale,
                alpha_h,
                seed,
                parallel,
            } => {
                let process = FadingProcess::new(layout.clone(), large_scale, *alpha_h, *seed)?
                    .with_parallel(*parallel);
                Ok(Box::new(GeneratedSource::new(process)))
            }
            ChannelSpec::Replay { path, layout } => {
                Ok(Box::new(ReplaySource::open(path, layout.clone())?))
            }
        }
    }
}
