//! Frame-stream pipeline: locate faces, classify each crop, annotate frames
//! and emit one record per frame.

mod locate;
mod source;

use std::path::PathBuf;
use std::sync::mpsc::sync_channel;

use crate::data::{normalize, resize_bilinear, write_ppm, Image, Label, Rgb};
use crate::error::{Error, Result};
use crate::model::{argmax, Model};
use crate::monitor::{Clock, DetectionRecord, RecordSink};

pub use locate::{locate_faces, Locator, LocatorSpec, RawBox, Sidecar};
pub use source::{frame_file_name, write_frame_dir, write_raw, FrameSource, Frames, RawFrames, RAW_MAGIC};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BBox {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.w >= 1 && self.h >= 1 && self.x + self.w <= width && self.y + self.h <= height
    }

    /// True if (`px`, `py`) lies on the box outline of the given thickness.
    pub fn on_outline(&self, px: usize, py: usize, thickness: usize) -> bool {
        let inside = px >= self.x && px < self.x + self.w && py >= self.y && py < self.y + self.h;
        inside
            && (px - self.x < thickness
                || self.x + self.w - 1 - px < thickness
                || py - self.y < thickness
                || self.y + self.h - 1 - py < thickness)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub label: Label,
    /// Softmax probability of `label`.
    pub confidence: f32,
}

pub const GREEN: Rgb = [0, 255, 0];
pub const RED: Rgb = [255, 0, 0];
pub const OUTLINE_THICKNESS: usize = 2;

pub fn label_color(label: Label) -> Rgb {
    match label {
        Label::WithMask => GREEN,
        Label::WithoutMask => RED,
    }
}

/// Crops `bbox`, resizes it to the model input, and takes the argmax class.
pub fn classify_crop(model: &Model, frame: &Image, bbox: BBox) -> Result<Detection> {
    if model.config.num_classes != 2 {
        return Err(Error::InvalidArgument(format!(
            "detection needs a 2-class model, got {} classes",
            model.config.num_classes
        )));
    }
    let crop = frame.crop(bbox.x, bbox.y, bbox.w, bbox.h)?;
    let r = model.config.input_resolution;
    let probs = model.infer(&normalize(&resize_bilinear(&crop, r, r)))?;
    let (class, confidence) = argmax(probs.item(0));
    Ok(Detection {
        bbox,
        label: Label::from_index(class).expect("two classes"),
        confidence,
    })
}

/// Draws each box outline `thickness` pixels wide, inward from the box edge.
/// All other pixels are left as they were.
pub fn annotate(frame: &Image, detections: &[Detection], thickness: usize) -> Image {
    let mut out = frame.clone();
    for d in detections {
        let b = d.bbox;
        let color = label_color(d.label);
        for y in b.y..b.y + b.h {
            for x in b.x..b.x + b.w {
                if b.on_outline(x, y, thickness) {
                    out.put(x, y, color);
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct StreamOptions {
    pub source_id: String,
    pub clock: Clock,
    /// Directory for annotated frames, named like the input frames.
    pub annotate_out: Option<PathBuf>,
    /// Frames classified concurrently; 1 runs everything on the caller's thread.
    pub jobs: usize,
}

impl Default for StreamOptions {
    fn default() -> Self {
        Self {
            source_id: "cam0".into(),
            clock: Clock::System,
            annotate_out: None,
            jobs: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StreamSummary {
    pub frames: usize,
    pub detections: usize,
}

fn detect_frame(model: &Model, locator: &Locator, index: u64, frame: &Image) -> Result<Vec<Detection>> {
    locate_faces(frame, locator, index)
        .into_iter()
        .map(|b| classify_crop(model, frame, b))
        .collect()
}

/// Runs every frame of `frames` through locate, classify and annotate, and
/// hands one record per frame, in frame order, to every sink. The first
/// malformed frame or sink error stops the stream.
pub fn process_frames(
    frames: Frames,
    model: &Model,
    locator: &Locator,
    options: &StreamOptions,
    sinks: &mut [&mut dyn RecordSink],
) -> Result<StreamSummary> {
    if let Some(dir) = &options.annotate_out {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    }
    let mut summary = StreamSummary::default();
    let mut emit = |index: u64, frame: &Image, detections: Vec<Detection>| -> Result<usize> {
        if let Some(dir) = &options.annotate_out {
            write_ppm(
                &dir.join(frame_file_name(index)),
                &annotate(frame, &detections, OUTLINE_THICKNESS),
            )?;
        }
        let record = DetectionRecord {
            timestamp: options.clock.now(),
            frame_index: index,
            source_id: options.source_id.clone(),
            detections,
        };
        for sink in sinks.iter_mut() {
            sink.accept(&record)?;
        }
        Ok(record.detections.len())
    };
    if options.jobs <= 1 {
        for item in frames {
            let (index, frame) = item?;
            let detections = detect_frame(model, locator, index, &frame)?;
            summary.detections += emit(index, &frame, detections)?;
            summary.frames += 1;
        }
        return Ok(summary);
    }

    // Decoding runs ahead on its own thread; frames are classified in chunks
    // of `jobs` and emitted in order.
    let jobs = options.jobs;
    let (tx, rx) = sync_channel::<Result<(u64, Image)>>(2 * jobs);
    std::thread::scope(|scope| {
        scope.spawn(move || {
            for item in frames {
                let stop = item.is_err();
                if tx.send(item).is_err() || stop {
                    break;
                }
            }
        });
        let mut rx = rx.into_iter();
        loop {
            let mut chunk = Vec::with_capacity(jobs);
            let mut pending_error = None;
            for item in rx.by_ref().take(jobs) {
                match item {
                    Ok(f) => chunk.push(f),
                    Err(e) => {
                        pending_error = Some(e);
                        break;
                    }
                }
            }
            if chunk.is_empty() && pending_error.is_none() {
                return Ok(summary);
            }
            let results: Vec<Result<Vec<Detection>>> = std::thread::scope(|inner| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|(index, frame)| inner.spawn(move || detect_frame(model, locator, *index, frame)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("classification worker panicked"))
                    .collect()
            });
            for ((index, frame), detections) in chunk.iter().zip(results) {
                summary.detections += emit(*index, frame, detections?)?;
                summary.frames += 1;
            }
            if let Some(e) = pending_error {
                return Err(e);
            }
        }
    })
}

/// [`process_frames`] over a [`FrameSource`] and [`LocatorSpec`].
pub fn process_stream(
    source: &FrameSource,
    model: &Model,
    locator: &LocatorSpec,
    options: &StreamOptions,
    sinks: &mut [&mut dyn RecordSink],
) -> Result<StreamSummary> {
    let locator = Locator::from_spec(locator)?;
    process_frames(source.frames()?, model, &locator, options, sinks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use chrono::{TimeZone, Utc};

    fn stub(probs: [f32; 2]) -> Model {
        let config = ModelConfig {
            input_resolution: 32,
            width_multiplier: 0.25,
            num_classes: 2,
            dropout_rate: 0.2,
        };
        Model::new(config, 3).unwrap().with_constant_output(&probs).unwrap()
    }

    fn noise(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = crate::data::Rng::new(seed);
        Image::new(w, h, (0..3 * w * h).map(|_| rng.below(256) as u8).collect()).unwrap()
    }

    fn options() -> StreamOptions {
        StreamOptions {
            clock: Clock::Fixed(Utc.timestamp_millis_opt(0).unwrap()),
            ..StreamOptions::default()
        }
    }

    #[test]
    fn stub_model_confidence() {
        let f = noise(40, 30, 1);
        let d = classify_crop(&stub([0.9, 0.1]), &f, BBox::new(5, 5, 20, 20)).unwrap();
        assert_eq!(d.label, Label::WithMask);
        assert!((d.confidence - 0.9).abs() < 1e-6);
        let d = classify_crop(&stub([0.2, 0.8]), &f, BBox::new(5, 5, 20, 20)).unwrap();
        assert_eq!(d.label, Label::WithoutMask);
    }

    #[test]
    fn equal_logits_tie_to_with_mask() {
        let d = classify_crop(&stub([0.5, 0.5]), &noise(16, 16, 2), BBox::new(0, 0, 16, 16)).unwrap();
        assert_eq!(d.label, Label::WithMask);
        assert_eq!(d.confidence, 0.5);
    }

    #[test]
    fn classification_is_repeatable() {
        let m = Model::new(ModelConfig::reduced(), 4).unwrap();
        let f = noise(80, 60, 3);
        let b = BBox::new(10, 7, 33, 41);
        assert_eq!(classify_crop(&m, &f, b).unwrap(), classify_crop(&m, &f, b).unwrap());
    }

    #[test]
    fn outlines_are_exact_and_local() {
        let f = noise(30, 20, 5);
        let dets = [
            Detection {
                bbox: BBox::new(2, 3, 10, 8),
                label: Label::WithMask,
                confidence: 0.9,
            },
            Detection {
                bbox: BBox::new(15, 1, 12, 15),
                label: Label::WithoutMask,
                confidence: 0.7,
            },
        ];
        let out = annotate(&f, &dets, 2);
        for y in 0..20 {
            for x in 0..30 {
                let expected = dets
                    .iter()
                    .rev()
                    .find(|d| d.bbox.on_outline(x, y, 2))
                    .map_or(f.get(x, y), |d| label_color(d.label));
                assert_eq!(out.get(x, y), expected, "({x},{y})");
            }
        }
        assert_eq!(out.get(2, 3), GREEN);
        assert_eq!(out.get(3, 4), GREEN);
        assert_eq!(out.get(4, 5), f.get(4, 5));
        assert_eq!(out.get(26, 15), RED);
        assert_eq!(annotate(&f, &[], 2), f);
    }

    #[test]
    fn one_record_per_frame_with_sidecar_counts() {
        let frames: Vec<Image> = (0..10).map(|i| noise(48, 36, i)).collect();
        let mut sidecar = String::new();
        let counts = [2, 0, 1, 3, 0, 1, 1, 0, 2, 1];
        for (i, &c) in counts.iter().enumerate() {
            for k in 0..c {
                sidecar += &format!("{} {} 4 12 16\n", i + 1, 2 + 14 * k);
            }
        }
        let locator = Locator::Sidecar(Sidecar::parse(&sidecar).unwrap());
        let model = stub([0.3, 0.7]);
        let run = |jobs: usize| {
            let mut records: Vec<DetectionRecord> = Vec::new();
            let it: Frames = Box::new(frames.clone().into_iter().enumerate().map(|(i, f)| Ok((i as u64 + 1, f))));
            let opts = StreamOptions { jobs, ..options() };
            let s = process_frames(it, &model, &locator, &opts, &mut [&mut records]).unwrap();
            assert_eq!(s.frames, 10);
            records
        };
        let records = run(1);
        assert_eq!(records.len(), 10);
        for (r, &c) in records.iter().zip(&counts) {
            assert_eq!(r.detections.len(), c);
        }
        assert_eq!(run(3), records);
    }

    #[test]
    fn empty_locator_leaves_frames_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let (input, output) = (dir.path().join("in"), dir.path().join("out"));
        let frames: Vec<Image> = (0..10).map(|i| noise(20, 20, i)).collect();
        write_frame_dir(&input, &frames).unwrap();
        let opts = StreamOptions {
            annotate_out: Some(output.clone()),
            ..options()
        };
        let mut records: Vec<DetectionRecord> = Vec::new();
        let sidecar = dir.path().join("none.txt");
        std::fs::write(&sidecar, "# nothing\n").unwrap();
        process_stream(
            &FrameSource::Directory(input.clone()),
            &stub([0.9, 0.1]),
            &LocatorSpec::Sidecar(sidecar),
            &opts,
            &mut [&mut records],
        )
        .unwrap();
        assert_eq!(records.len(), 10);
        assert!(records.iter().all(|r| r.detections.is_empty()));
        for i in 1..=10 {
            let name = frame_file_name(i);
            assert_eq!(std::fs::read(input.join(&name)).unwrap(), std::fs::read(output.join(&name)).unwrap());
        }
    }

    #[test]
    fn malformed_frame_aborts_after_earlier_records() {
        let mut bytes = Vec::new();
        let frames: Vec<Image> = (0..4).map(|i| noise(16, 16, i)).collect();
        write_raw(&mut bytes, &frames).unwrap();
        bytes.truncate(bytes.len() - 1);
        for jobs in [1, 2] {
            let it: Frames = Box::new(RawFrames::new(std::io::Cursor::new(bytes.clone())).unwrap());
            let mut records: Vec<DetectionRecord> = Vec::new();
            let opts = StreamOptions { jobs, ..options() };
            let err = process_frames(it, &stub([0.9, 0.1]), &Locator::WholeFrame, &opts, &mut [&mut records]).unwrap_err();
            assert!(err.to_string().contains("frame 4"), "{err}");
            assert_eq!(records.len(), 3);
        }
    }
}
