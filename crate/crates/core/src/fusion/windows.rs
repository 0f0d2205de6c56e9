use serde::{Deserialize, Serialize};

use crate::dataio::CLIP_FRAMES;
use crate::error::{Error, Result};

/// One 32-frame clip: frames `[start, end)` and seconds `[start/fps, end/fps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipWindow {
    pub clip_index: usize,
    pub frame_start: usize,
    pub frame_end: usize,
    pub time_start: f64,
    pub time_end: f64,
}

impl ClipWindow {
    /// Half-open containment test on the time range.
    pub fn contains_time(&self, t: f64) -> bool {
        t >= self.time_start && t < self.time_end
    }
}

/// Windows for every complete clip of a video; a trailing partial clip is dropped.
pub fn clip_windows(frame_count: usize, fps: f64) -> Result<Vec<ClipWindow>> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::config(format!("fps must be positive, got {fps}")));
    }
    Ok((0..frame_count / CLIP_FRAMES)
        .map(|i| {
            let frame_start = i * CLIP_FRAMES;
            let frame_end = frame_start + CLIP_FRAMES;
            ClipWindow {
                clip_index: i,
                frame_start,
                frame_end,
                time_start: frame_start as f64 / fps,
                time_end: frame_end as f64 / fps,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixty_four_frames_at_fifteen_fps() {
        let w = clip_windows(64, 15.0).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!((w[0].frame_start, w[0].frame_end), (0, 32));
        assert_eq!((w[1].frame_start, w[1].frame_end), (32, 64));
        assert_eq!(w[0].time_start, 0.0);
        assert!((w[0].time_end - 2.1333333333333333).abs() < 1e-15);
        assert!((w[1].time_start - 32.0 / 15.0).abs() < 1e-15);
        assert!((w[1].time_end - 4.266666666666667).abs() < 1e-15);
    }

    #[test]
    fn partial_and_empty() {
        assert!(clip_windows(31, 15.0).unwrap().is_empty());
        assert!(clip_windows(0, 15.0).unwrap().is_empty());
        assert!(clip_windows(64, 0.0).is_err());
    }
}
