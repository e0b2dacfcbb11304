//! Snapshot stream files.
//!
//! | bytes | content                       |
//! |-------|-------------------------------|
//! | 4     | magic `SWSY`                  |
//! | 4     | version, u32 LE               |
//! | 8     | state dimension `S`, u64 LE   |
//! | 8     | sampling interval, f64 LE     |
//! | 8·S   | one frame, repeated to EOF    |

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{argument, Error, Result};

pub const STREAM_MAGIC: &[u8; 4] = b"SWSY";
pub const STREAM_VERSION: u32 = 1;
pub const STREAM_HEADER_BYTES: u64 = 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamHeader {
    pub state_dim: usize,
    pub dt: f64,
}

pub struct StreamWriter<W: Write> {
    inner: W,
    header: StreamHeader,
    frames: usize,
    buf: Vec<u8>,
}

impl<W: Write> StreamWriter<W> {
    pub fn new(mut inner: W, state_dim: usize, dt: f64) -> Result<Self> {
        if state_dim == 0 {
            return Err(argument("stream state dimension must be positive"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(argument("stream dt must be positive"));
        }
        inner.write_all(STREAM_MAGIC)?;
        inner.write_all(&STREAM_VERSION.to_le_bytes())?;
        inner.write_all(&(state_dim as u64).to_le_bytes())?;
        inner.write_all(&dt.to_le_bytes())?;
        Ok(Self {
            inner,
            header: StreamHeader { state_dim, dt },
            frames: 0,
            buf: Vec::with_capacity(8 * state_dim),
        })
    }

    pub fn header(&self) -> StreamHeader {
        self.header
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn write_frame(&mut self, frame: &DVector<f64>) -> Result<()> {
        if frame.len() != self.header.state_dim {
            return Err(argument(format!(
                "frame has {} entries, stream has {}",
                frame.len(),
                self.header.state_dim
            )));
        }
        self.buf.clear();
        for x in frame.iter() {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
        self.inner.write_all(&self.buf)?;
        self.frames += 1;
        Ok(())
    }

    /// Flushes and returns the underlying writer.
    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Frame iterator over a stream file. A truncated final frame yields a
/// [`Error::Corrupt`] carrying the byte offset of the frame.
pub struct StreamReader<R: Read> {
    inner: R,
    header: StreamHeader,
    offset: u64,
    buf: Vec<u8>,
    done: bool,
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

impl<R: Read> StreamReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut head = [0u8; STREAM_HEADER_BYTES as usize];
        let got = read_exact_or_eof(&mut inner, &mut head)?;
        if got < head.len() {
            return Err(Error::Format(format!(
                "stream header is {got} bytes, expected {STREAM_HEADER_BYTES}"
            )));
        }
        if &head[0..4] != STREAM_MAGIC {
            return Err(Error::Format("not a snapshot stream (bad magic)".into()));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes"));
        if version != STREAM_VERSION {
            return Err(Error::Format(format!(
                "unsupported stream version {version}"
            )));
        }
        let state_dim = u64::from_le_bytes(head[8..16].try_into().expect("8 bytes"));
        let dt = f64::from_le_bytes(head[16..24].try_into().expect("8 bytes"));
        if state_dim == 0 || state_dim > (usize::MAX / 8) as u64 {
            return Err(Error::Format(format!(
                "invalid state dimension {state_dim}"
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Format(format!("invalid sampling interval {dt}")));
        }
        let state_dim = state_dim as usize;
        Ok(Self {
            inner,
            header: StreamHeader { state_dim, dt },
            offset: STREAM_HEADER_BYTES,
            buf: vec![0; 8 * state_dim],
            done: false,
        })
    }

    pub fn header(&self) -> StreamHeader {
        self.header
    }

    fn read_frame(&mut self) -> Result<Option<DVector<f64>>> {
        let got = read_exact_or_eof(&mut self.inner, &mut self.buf)?;
        if got == 0 {
            return Ok(None);
        }
        if got < self.buf.len() {
            return Err(Error::Corrupt {
                offset: self.offset,
                message: format!("truncated frame: {got} of {} bytes present", self.buf.len()),
            });
        }
        let frame = DVector::from_iterator(
            self.header.state_dim,
            self.buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))),
        );
        self.offset += self.buf.len() as u64;
        Ok(Some(frame))
    }
}

impl<R: Read> Iterator for StreamReader<R> {
    type Item = Result<DVector<f64>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_frame() {
            Ok(Some(f)) => Some(Ok(f)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

pub fn open_stream(path: &Path) -> Result<StreamReader<BufReader<File>>> {
    StreamReader::new(BufReader::new(File::open(path)?))
}

pub fn create_stream(
    path: &Path,
    state_dim: usize,
    dt: f64,
) -> Result<StreamWriter<BufWriter<File>>> {
    StreamWriter::new(BufWriter::new(File::create(path)?), state_dim, dt)
}

/// Writes every frame of `frames` to `path`; returns the frame count.
pub fn write_stream<I>(path: &Path, state_dim: usize, dt: f64, frames: I) -> Result<usize>
where
    I: IntoIterator<Item = Result<DVector<f64>>>,
{
    let mut w = create_stream(path, state_dim, dt)?;
    for f in frames {
        w.write_frame(&f?)?;
    }
    let n = w.frames();
    w.finish()?;
    Ok(n)
}
