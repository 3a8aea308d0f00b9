use std::fs::File;
use std::io::{BufReader, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use crate::data::{decode_ppm, write_ppm, Image};
use crate::error::{Error, Result};

pub const RAW_MAGIC: &[u8; 4] = b"RVID";

/// Where frames come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FrameSource {
    /// Files named `frame_000001.ppm`, `frame_000002.ppm`, ...
    Directory(PathBuf),
    /// `RVID` header (u32 LE width, height, frame count; count 0 means
    /// read until end of input) followed by packed RGB24 frames.
    Raw(PathBuf),
}

impl std::fmt::Display for FrameSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FrameSource::Directory(p) => write!(f, "frames:{}", p.display()),
            FrameSource::Raw(p) => write!(f, "raw:{}", p.display()),
        }
    }
}

pub fn frame_file_name(index: u64) -> String {
    format!("frame_{index:06}.ppm")
}

fn frame_number(name: &str) -> Option<u64> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".ppm")?;
    (digits.len() >= 6 && digits.bytes().all(|b| b.is_ascii_digit()))
        .then(|| digits.parse().ok())
        .flatten()
}

/// Frames in order, each tagged with its 1-based index.
pub type Frames = Box<dyn Iterator<Item = Result<(u64, Image)>> + Send>;

impl FrameSource {
    pub fn frames(&self) -> Result<Frames> {
        match self {
            FrameSource::Directory(dir) => directory_frames(dir),
            FrameSource::Raw(path) => {
                let file = File::open(path).map_err(|e| Error::from(e).in_file(path))?;
                Ok(Box::new(RawFrames::new(BufReader::new(file))?))
            }
        }
    }
}

fn directory_frames(dir: &Path) -> Result<Frames> {
    let mut entries: Vec<(u64, PathBuf)> = std::fs::read_dir(dir)
        .map_err(|e| Error::from(e).in_file(dir))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let n = frame_number(e.file_name().to_str()?)?;
            Some((n, e.path()))
        })
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(Error::Stream(format!("{}: no frame_NNNNNN.ppm files", dir.display())));
    }
    let mut size = None;
    Ok(Box::new(entries.into_iter().map(move |(index, path)| {
        let bytes = std::fs::read(&path).map_err(|e| Error::from(e).in_file(&path))?;
        let image = decode_ppm(&bytes).map_err(|e| Error::Stream(format!("frame {index} ({}): {e}", path.display())))?;
        check_size(&mut size, index, &image)?;
        Ok((index, image))
    })))
}

fn check_size(size: &mut Option<(usize, usize)>, index: u64, image: &Image) -> Result<()> {
    let this = (image.width(), image.height());
    match *size {
        None => *size = Some(this),
        Some(first) if first != this => {
            return Err(Error::Stream(format!(
                "frame {index} is {}x{}, stream is {}x{}",
                this.0, this.1, first.0, first.1
            )))
        }
        Some(_) => {}
    }
    Ok(())
}

/// Decoder for the `RVID` raw stream over any reader.
pub struct RawFrames<R> {
    reader: R,
    width: usize,
    height: usize,
    count: u32,
    next: u64,
    done: bool,
}

impl<R: Read> RawFrames<R> {
    pub fn new(mut reader: R) -> Result<Self> {
        let mut header = [0u8; 16];
        reader
            .read_exact(&mut header)
            .map_err(|_| Error::Stream("raw stream: header shorter than 16 bytes".into()))?;
        if &header[..4] != RAW_MAGIC {
            return Err(Error::Stream(format!("raw stream: bad magic {:?}", &header[..4])));
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes"));
        let (width, height) = (word(4) as usize, word(8) as usize);
        if width == 0 || height == 0 {
            return Err(Error::Stream(format!("raw stream: empty frame size {width}x{height}")));
        }
        Ok(Self {
            reader,
            width,
            height,
            count: word(12),
            next: 1,
            done: false,
        })
    }

    pub fn frame_size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn read_frame(&mut self) -> Result<Option<Image>> {
        let len = 3 * self.width * self.height;
        let mut buf = vec![0u8; len];
        let mut filled = 0;
        while filled < len {
            match self.reader.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(Error::Stream(format!("frame {}: {e}", self.next))),
            }
        }
        let bounded = self.count > 0;
        if filled == 0 && !bounded {
            return Ok(None);
        }
        if filled < len {
            let offset = 16 + (self.next - 1) * len as u64 + filled as u64;
            return Err(Error::Stream(format!(
                "frame {}: truncated at byte offset {offset} ({filled} of {len} bytes)",
                self.next
            )));
        }
        Ok(Some(Image::new(self.width, self.height, buf)?))
    }
}

impl<R: Read> Iterator for RawFrames<R> {
    type Item = Result<(u64, Image)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done || (self.count > 0 && self.next > self.count as u64) {
            return None;
        }
        match self.read_frame() {
            Ok(Some(image)) => {
                let index = self.next;
                self.next += 1;
                Some(Ok((index, image)))
            }
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

/// Writes frames as an `RVID` stream with an explicit count.
pub fn write_raw<W: Write>(mut out: W, frames: &[Image]) -> Result<()> {
    let (w, h) = frames.first().map_or((1, 1), |f| (f.width(), f.height()));
    out.write_all(RAW_MAGIC)?;
    for v in [w as u32, h as u32, frames.len() as u32] {
        out.write_all(&v.to_le_bytes())?;
    }
    for (i, f) in frames.iter().enumerate() {
        if (f.width(), f.height()) != (w, h) {
            return Err(Error::Stream(format!("frame {} is {}x{}, stream is {w}x{h}", i + 1, f.width(), f.height())));
        }
        out.write_all(f.pixels())?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `frames` as `frame_000001.ppm`, ... into `dir`, creating it.
pub fn write_frame_dir(dir: &Path, frames: &[Image]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    for (i, f) in frames.iter().enumerate() {
        write_ppm(&dir.join(frame_file_name(i as u64 + 1)), f)?;
    }
    Ok(())
}
