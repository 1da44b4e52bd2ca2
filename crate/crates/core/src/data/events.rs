//! Event-camera streams and their integration into frames.
//!
//! Text format, one event per line after a sensor header:
//!
//! ```text
//! # comment lines start with '#'
//! width=34,height=34
//! t,x,y,p
//! 0,3,4,1
//! 12,3,5,0
//! ```
//!
//! The `t,x,y,p` column line is optional. Timestamps are unsigned integers
//! and must not decrease; polarity is 0 or 1.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Event {
    pub t: u64,
    pub x: u32,
    pub y: u32,
    pub p: u8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventStream {
    pub width: u32,
    pub height: u32,
    pub events: Vec<Event>,
}

/// Per-slice, per-polarity event counts, `[T, 2, height, width]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameTensor {
    pub slices: usize,
    pub height: usize,
    pub width: usize,
    pub counts: Vec<u32>,
}

impl FrameTensor {
    pub fn get(&self, slice: usize, polarity: usize, y: usize, x: usize) -> u32 {
        self.counts[((slice * 2 + polarity) * self.height + y) * self.width + x]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// Counts as `f32` frames `[T, 2, height, width]` for a network input.
    pub fn to_tensor(&self) -> crate::Tensor<f32> {
        crate::Tensor::new(
            vec![self.slices, 2, self.height, self.width],
            self.counts.iter().map(|&c| c as f32).collect(),
        )
        .expect("frame shape")
    }
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        format: "event text",
        offset: line as u64,
        message: message.into(),
    }
}

impl EventStream {
    /// Checks ordering, bounds and polarity.
    pub fn new(width: u32, height: u32, events: Vec<Event>) -> Result<Self> {
        let stream = Self {
            width,
            height,
            events,
        };
        stream.validate()?;
        Ok(stream)
    }

    pub fn validate(&self) -> Result<()> {
        let mut last = 0;
        for (index, e) in self.events.iter().enumerate() {
            self.check_bounds(index, e)?;
            if e.p > 1 {
                return Err(Error::InvalidParameter(format!(
                    "event {index} has polarity {}, expected 0 or 1",
                    e.p
                )));
            }
            if e.t < last {
                return Err(Error::InvalidParameter(format!(
                    "event {index} timestamp {} precedes {last}",
                    e.t
                )));
            }
            last = e.t;
        }
        Ok(())
    }

    fn check_bounds(&self, index: usize, e: &Event) -> Result<()> {
        if e.x >= self.width || e.y >= self.height {
            return Err(Error::EventOutOfBounds {
                index,
                x: e.x,
                y: e.y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Parses the text format. Errors report the 1-based line number as the
    /// offset.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines
            .next()
            .ok_or_else(|| parse_error(0, "missing sensor header"))?;
        let mut width = None;
        let mut height = None;
        for field in header.split(',') {
            match field.trim().split_once('=') {
                Some(("width", v)) => width = v.trim().parse().ok(),
                Some(("height", v)) => height = v.trim().parse().ok(),
                _ => return Err(parse_error(hline, format!("bad sensor header `{header}`"))),
            }
        }
        let (Some(width), Some(height)) = (width, height) else {
            return Err(parse_error(hline, "sensor header needs width and height"));
        };
        let mut events = Vec::new();
        for (ln, line) in lines {
            if line.replace(' ', "") == "t,x,y,p" {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [t, x, y, p] = fields[..] else {
                return Err(parse_error(ln, format!("expected 4 fields, got {}", fields.len())));
            };
            let num = |s: &str, what: &str| {
                s.parse::<u64>()
                    .map_err(|_| parse_error(ln, format!("bad {what} `{s}`")))
            };
            let (x, y, p) = (num(x, "x")?, num(y, "y")?, num(p, "polarity")?);
            if x > u64::from(u32::MAX) || y > u64::from(u32::MAX) || p > 1 {
                return Err(parse_error(ln, "field out of range"));
            }
            events.push(Event {
                t: num(t, "timestamp")?,
                x: x as u32,
                y: y as u32,
                p: p as u8,
            });
        }
        Self::new(width, height, events)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("width={},height={}\nt,x,y,p\n", self.width, self.height);
        for e in &self.events {
            out.push_str(&format!("{},{},{},{}\n", e.t, e.x, e.y, e.p));
        }
        out
    }
}

/// Decoders for native event formats plug in here; the text format is the
/// only one provided.
pub trait EventReader {
    fn read(&self, path: &Path) -> Result<EventStream>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TextEventReader;

impl EventReader for TextEventReader {
    fn read(&self, path: &Path) -> Result<EventStream> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        EventStream::parse(&text)
    }
}

/// Index range `[lo, hi)` of slice `j` out of `slices` for `n` events: every
/// slice spans `floor(n / slices)` events and the last one takes the rest.
pub fn slice_bounds(n: usize, slices: usize, j: usize) -> (usize, usize) {
    let width = n / slices;
    let lo = width * j;
    let hi = if j + 1 == slices { n } else { width * (j + 1) };
    (lo, hi)
}

/// Accumulates events into `slices` frames split by event index.
pub fn events_to_frames(stream: &EventStream, slices: usize) -> Result<FrameTensor> {
    if slices == 0 {
        return Err(Error::InvalidParameter("slice count must be at least 1".into()));
    }
    let (h, w) = (stream.height as usize, stream.width as usize);
    let mut counts = vec![0u32; slices * 2 * h * w];
    for j in 0..slices {
        let (lo, hi) = slice_bounds(stream.len(), slices, j);
        for (index, e) in stream.events[lo..hi].iter().enumerate() {
            stream.check_bounds(lo + index, e)?;
            let p = usize::from(e.p.min(1));
            counts[((j * 2 + p) * h + e.y as usize) * w + e.x as usize] += 1;
        }
    }
    Ok(FrameTensor {
        slices,
        height: h,
        width: w,
        counts,
    })
}
