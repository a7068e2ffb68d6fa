//! RMNS stack files and per-frame CSV export.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "RMNS"            4 bytes
//! version           u16
//! pane width        u32
//! pane height       u32
//! frame count       u32
//! pixel pitch       f64 (m)
//! f3                f64 (m)
//! seed              u64
//! config checksum   u64
//! frames            count × (Stokes pane, anti-Stokes pane), row-major f32
//! ```

use std::io::{self, Read, Write};

use super::render::{ClipRecord, Frame, Pane};
use super::stack::{FrameStack, StackHeader};
use super::ScatterError;

pub const MAGIC: &[u8; 4] = b"RMNS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 50;

pub fn write_header<W: Write>(w: &mut W, h: &StackHeader) -> io::Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&h.width.to_le_bytes());
    buf.extend_from_slice(&h.height.to_le_bytes());
    buf.extend_from_slice(&h.count.to_le_bytes());
    buf.extend_from_slice(&h.pixel_pitch.to_le_bytes());
    buf.extend_from_slice(&h.f3.to_le_bytes());
    buf.extend_from_slice(&h.seed.to_le_bytes());
    buf.extend_from_slice(&h.config_checksum.to_le_bytes());
    w.write_all(&buf)
}

pub fn read_header<R: Read>(r: &mut R) -> Result<StackHeader, ScatterError> {
    let mut buf = [0u8; HEADER_LEN];
    r.read_exact(&mut buf)?;
    if &buf[0..4] != MAGIC {
        return Err(ScatterError::Format("bad magic, not an RMNS stack".into()));
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != VERSION {
        return Err(ScatterError::Format(format!(
            "unsupported RMNS version {version}"
        )));
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    let header = StackHeader {
        width: u32_at(6),
        height: u32_at(10),
        count: u32_at(14),
        pixel_pitch: f64::from_bits(u64_at(18)),
        f3: f64::from_bits(u64_at(26)),
        seed: u64_at(34),
        config_checksum: u64_at(42),
    };
    if header.width == 0 || header.height == 0 {
        return Err(ScatterError::Format("zero pane dimension".into()));
    }
    Ok(header)
}

/// Streams frames into a stack file; the frame count is fixed by the header.
pub struct StackWriter<W: Write> {
    inner: W,
    header: StackHeader,
    written: u32,
    buf: Vec<u8>,
}

impl<W: Write> StackWriter<W> {
    pub fn new(mut inner: W, header: StackHeader) -> Result<Self, ScatterError> {
        write_header(&mut inner, &header)?;
        Ok(Self {
            inner,
            header,
            written: 0,
            buf: Vec::new(),
        })
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<(), ScatterError> {
        if frame.width != self.header.width as usize || frame.height != self.header.height as usize
        {
            return Err(ScatterError::ShapeMismatch {
                expected: (self.header.width as usize, self.header.height as usize),
                found: (frame.width, frame.height),
            });
        }
        if self.written >= self.header.count {
            return Err(ScatterError::Format(
                "more frames than declared in header".into(),
            ));
        }
        self.buf.clear();
        for v in frame.stokes.iter().chain(&frame.anti_stokes) {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self.inner.write_all(&self.buf)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, ScatterError> {
        if self.written != self.header.count {
            return Err(ScatterError::Format(format!(
                "header declares {} frames, {} written",
                self.header.count, self.written
            )));
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Reads frames one at a time.
pub struct StackReader<R: Read> {
    inner: R,
    header: StackHeader,
    read: u32,
    buf: Vec<u8>,
}

impl<R: Read> StackReader<R> {
    pub fn new(mut inner: R) -> Result<Self, ScatterError> {
        let header = read_header(&mut inner)?;
        Ok(Self {
            inner,
            header,
            read: 0,
            buf: Vec::new(),
        })
    }

    pub fn header(&self) -> &StackHeader {
        &self.header
    }

    pub fn next_frame(&mut self) -> Result<Option<Frame>, ScatterError> {
        if self.read >= self.header.count {
            return Ok(None);
        }
        let (w, h) = (self.header.width as usize, self.header.height as usize);
        let n = w * h;
        self.buf.resize(8 * n, 0);
        self.inner.read_exact(&mut self.buf)?;
        let mut vals = self
            .buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        let stokes: Vec<f32> = vals.by_ref().take(n).collect();
        let anti_stokes: Vec<f32> = vals.collect();
        let frame = Frame {
            width: w,
            height: h,
            stokes,
            anti_stokes,
            shot_index: self.read as u64,
            readout_angle: None,
            clip: ClipRecord::default(),
        };
        self.read += 1;
        Ok(Some(frame))
    }
}

impl<R: Read> Iterator for StackReader<R> {
    type Item = Result<Frame, ScatterError>;
    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

pub fn write_stack<W: Write>(w: W, stack: &FrameStack) -> Result<W, ScatterError> {
    let mut header = stack.header;
    header.count = stack.frames.len() as u32;
    let mut writer = StackWriter::new(w, header)?;
    for f in &stack.frames {
        writer.write_frame(f)?;
    }
    writer.finish()
}

pub fn read_stack<R: Read>(r: R) -> Result<FrameStack, ScatterError> {
    let mut reader = StackReader::new(r)?;
    let header = *reader.header();
    let mut frames = Vec::with_capacity(header.count as usize);
    while let Some(f) = reader.next_frame()? {
        frames.push(f);
    }
    Ok(FrameStack { header, frames })
}

/// One frame as CSV: `pane,theta_x_urad,theta_y_urad,counts`, one row per pixel.
pub fn write_frame_csv<W: Write>(mut w: W, frame: &Frame, header: &StackHeader) -> io::Result<()> {
    let cam = header.camera();
    writeln!(
        w,
        "# rmns frame {} config_checksum={:016x} seed={}",
        frame.shot_index, header.config_checksum, header.seed
    )?;
    writeln!(w, "pane,theta_x_urad,theta_y_urad,counts")?;
    for pane in [Pane::Stokes, Pane::AntiStokes] {
        for row in 0..frame.height {
            for col in 0..frame.width {
                let a = cam.pixel_centre(col, row);
                writeln!(
                    w,
                    "{},{},{},{}",
                    pane.name(),
                    a.theta_x,
                    a.theta_y,
                    frame.pixel(pane, col, row)
                )?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_stack() -> FrameStack {
        let header = StackHeader {
            width: 3,
            height: 2,
            count: 2,
            pixel_pitch: 9e-6,
            f3: 0.5,
            seed: 42,
            config_checksum: 0xabcdef,
        };
        let frames = (0..2)
            .map(|k| {
                let mut f = Frame::zeros(3, 2, k);
                for (i, v) in f.stokes.iter_mut().enumerate() {
                    *v = (i as f32) + k as f32;
                }
                f.anti_stokes[4] = 7.5;
                f
            })
            .collect();
        FrameStack { header, frames }
    }

    #[test]
    fn header_is_bit_exact() {
        let bytes = write_stack(Vec::new(), &tiny_stack()).unwrap();
        assert_eq!(&bytes[0..4], b"RMNS");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &3u32.to_le_bytes());
        assert_eq!(&bytes[10..14], &2u32.to_le_bytes());
        assert_eq!(&bytes[14..18], &2u32.to_le_bytes());
        assert_eq!(&bytes[18..26], &9e-6f64.to_le_bytes());
        assert_eq!(&bytes[34..42], &42u64.to_le_bytes());
        assert_eq!(bytes.len(), HEADER_LEN + 2 * 2 * 6 * 4);
        // first Stokes value of frame 1 follows frame 0's two panes
        let off = HEADER_LEN + 2 * 6 * 4;
        assert_eq!(&bytes[off..off + 4], &1f32.to_le_bytes());
    }

    #[test]
    fn round_trip() {
        let stack = tiny_stack();
        let bytes = write_stack(Vec::new(), &stack).unwrap();
        let back = read_stack(&bytes[..]).unwrap();
        assert_eq!(back.header, stack.header);
        for (a, b) in back.frames.iter().zip(&stack.frames) {
            assert_eq!(a.stokes, b.stokes);
            assert_eq!(a.anti_stokes, b.anti_stokes);
        }
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        assert!(matches!(
            read_stack(&b"NOPE0000000000000000000000000000000000000000000000000"[..]),
            Err(ScatterError::Format(_))
        ));
        let bytes = write_stack(Vec::new(), &tiny_stack()).unwrap();
        assert!(read_stack(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn writer_enforces_count_and_shape() {
        let stack = tiny_stack();
        let mut w = StackWriter::new(Vec::new(), stack.header).unwrap();
        w.write_frame(&stack.frames[0]).unwrap();
        assert!(w.write_frame(&Frame::zeros(4, 2, 0)).is_err());
        assert!(w.finish().is_err());
    }
}
