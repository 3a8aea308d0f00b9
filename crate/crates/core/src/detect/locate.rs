use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::data::Image;
use crate::detect::BBox;
use crate::error::{Error, Result};

/// How face boxes are found in a frame.
#[derive(Clone, Debug, PartialEq)]
pub enum LocatorSpec {
    WholeFrame,
    /// One centered square with side `f · min(W, H)`.
    CenterFraction(f64),
    /// Boxes listed per frame in a text file.
    Sidecar(PathBuf),
}

impl std::str::FromStr for LocatorSpec {
    type Err = Error;

    /// `whole`, `center:F` or `sidecar:PATH`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "whole" {
            return Ok(LocatorSpec::WholeFrame);
        }
        if let Some(f) = s.strip_prefix("center:") {
            let f: f64 = f
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("locator {s:?}: bad fraction")))?;
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidArgument(format!("locator {s:?}: fraction must lie in (0, 1]")));
            }
            return Ok(LocatorSpec::CenterFraction(f));
        }
        if let Some(path) = s.strip_prefix("sidecar:") {
            return Ok(LocatorSpec::Sidecar(path.into()));
        }
        Err(Error::InvalidArgument(format!(
            "locator {s:?}: expected whole, center:F or sidecar:PATH"
        )))
    }
}

impl std::fmt::Display for LocatorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LocatorSpec::WholeFrame => write!(f, "whole"),
            LocatorSpec::CenterFraction(v) => write!(f, "center:{v}"),
            LocatorSpec::Sidecar(p) => write!(f, "sidecar:{}", p.display()),
        }
    }
}

/// A box as written in a sidecar file, before clamping.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RawBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl RawBox {
    /// Intersection with a `width`×`height` frame; `None` if empty.
    pub fn clamp(&self, width: usize, height: usize) -> Option<BBox> {
        let x0 = self.x.max(0);
        let y0 = self.y.max(0);
        let x1 = (self.x + self.w).min(width as i64);
        let y1 = (self.y + self.h).min(height as i64);
        (x1 > x0 && y1 > y0).then(|| BBox::new(x0 as usize, y0 as usize, (x1 - x0) as usize, (y1 - y0) as usize))
    }
}

/// Per-frame box lists parsed from lines of `frame x y w h`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sidecar {
    pub boxes: BTreeMap<u64, Vec<RawBox>>,
}

impl Sidecar {
    pub fn parse(text: &str) -> Result<Self> {
        let mut boxes: BTreeMap<u64, Vec<RawBox>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| Error::Sidecar { line: i + 1, message };
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(err(format!("expected 5 fields (frame x y w h), found {}", fields.len())));
            }
            let frame: u64 = fields[0]
                .parse()
                .map_err(|_| err(format!("bad frame index {:?}", fields[0])))?;
            let mut v = [0i64; 4];
            for (slot, field) in v.iter_mut().zip(&fields[1..]) {
                *slot = field.parse().map_err(|_| err(format!("bad number {field:?}")))?;
            }
            if v[2] < 1 || v[3] < 1 {
                return Err(err("box width and height must be >= 1".into()));
            }
            boxes.entry(frame).or_default().push(RawBox {
                x: v[0],
                y: v[1],
                w: v[2],
                h: v[3],
            });
        }
        Ok(Self { boxes })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        Self::parse(&text).map_err(|e| e.in_file(path))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# frame x y w h\n");
        for (frame, boxes) in &self.boxes {
            for b in boxes {
                s.push_str(&format!("{frame} {} {} {} {}\n", b.x, b.y, b.w, b.h));
            }
        }
        s
    }
}

/// A locator ready to use, with any sidecar file already read.
#[derive(Clone, Debug, PartialEq)]
pub enum Locator {
    WholeFrame,
    CenterFraction(f64),
    Sidecar(Sidecar),
}

impl Locator {
    pub fn from_spec(spec: &LocatorSpec) -> Result<Self> {
        Ok(match spec {
            LocatorSpec::WholeFrame => Locator::WholeFrame,
            LocatorSpec::CenterFraction(f) => Locator::CenterFraction(*f),
            LocatorSpec::Sidecar(path) => Locator::Sidecar(Sidecar::load(path)?),
        })
    }

    pub fn locate(&self, frame: &Image, frame_index: u64) -> Vec<BBox> {
        let (w, h) = (frame.width(), frame.height());
        match self {
            Locator::WholeFrame => vec![BBox::new(0, 0, w, h)],
            Locator::CenterFraction(f) => {
                let side = ((f * w.min(h) as f64).floor() as usize).max(1);
                vec![BBox::new((w - side) / 2, (h - side) / 2, side, side)]
            }
            Locator::Sidecar(s) => s
                .boxes
                .get(&frame_index)
                .map(|bs| bs.iter().filter_map(|b| b.clamp(w, h)).collect())
                .unwrap_or_default(),
        }
    }
}

/// Face boxes for one frame.
pub fn locate_faces(frame: &Image, locator: &Locator, frame_index: u64) -> Vec<BBox> {
    locator.locate(frame, frame_index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whole_and_center() {
        let f = Image::filled(640, 480, [0; 3]);
        assert_eq!(locate_faces(&f, &Locator::WholeFrame, 1), [BBox::new(0, 0, 640, 480)]);
        let sq = Image::filled(100, 100, [0; 3]);
        assert_eq!(locate_faces(&sq, &Locator::CenterFraction(0.5), 1), [BBox::new(25, 25, 50, 50)]);
        assert_eq!(locate_faces(&f, &Locator::CenterFraction(1.0), 1), [BBox::new(80, 0, 480, 480)]);
    }

    #[test]
    fn sidecar_lookup_and_clamping() {
        let s = Sidecar::parse("# header\n3 0 0 10 10\n3 95 -5 10 10  # straddles\n5 200 200 4 4\n").unwrap();
        let loc = Locator::Sidecar(s);
        let f = Image::filled(100, 100, [0; 3]);
        assert_eq!(locate_faces(&f, &loc, 3), [BBox::new(0, 0, 10, 10), BBox::new(95, 0, 5, 5)]);
        assert!(locate_faces(&f, &loc, 4).is_empty());
        // Entirely outside the frame.
        assert!(locate_faces(&f, &loc, 5).is_empty());
    }

    #[test]
    fn sidecar_errors_name_the_line() {
        for (text, line) in [("1 0 0 4 4\n\n2 0 0 4\n", 3), ("x 0 0 4 4", 1), ("1 0 0 0 4", 1), ("1 0 0 4 q", 1)] {
            match Sidecar::parse(text) {
                Err(Error::Sidecar { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn sidecar_text_round_trip() {
        let s = Sidecar::parse("1 2 3 4 5\n1 6 7 8 9\n10 0 0 1 1\n").unwrap();
        assert_eq!(Sidecar::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("whole".parse::<LocatorSpec>().unwrap(), LocatorSpec::WholeFrame);
        assert_eq!("center:0.5".parse::<LocatorSpec>().unwrap(), LocatorSpec::CenterFraction(0.5));
        assert_eq!(
            "sidecar:boxes.txt".parse::<LocatorSpec>().unwrap(),
            LocatorSpec::Sidecar("boxes.txt".into())
        );
        for bad in ["center:0", "center:1.5", "center:x", "haar"] {
            assert!(bad.parse::<LocatorSpec>().is_err(), "{bad}");
        }
    }
}
