use serde::{Deserialize, Serialize};

use crate::event::{Frame, Hand};

/// Per-frame hand evidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandFrameState {
    pub t: Frame,
    /// `[x, y, w, h]` in pixels.
    pub bbox: [f64; 4],
    pub center: [f64; 2],
    pub area: f64,
    /// Smoothed motion response, non-negative.
    pub motion: f64,
    /// Probability that this detection belongs to the declared hand.
    pub handedness: f64,
}

impl HandFrameState {
    /// A frame with a unit box around the origin; handy for synthetic traces.
    pub fn synthetic(t: Frame, motion: f64, handedness: f64) -> Self {
        HandFrameState {
            t,
            bbox: [0.0, 0.0, 10.0, 10.0],
            center: [5.0, 5.0],
            area: 100.0,
            motion,
            handedness,
        }
    }

    pub(crate) fn invariant_error(&self) -> Option<String> {
        let [x, y, w, h] = self.bbox;
        if !(self.area >= 0.0) {
            return Some(format!("frame {}: negative area {}", self.t, self.area));
        }
        if !(self.motion >= 0.0) {
            return Some(format!("frame {}: negative motion {}", self.t, self.motion));
        }
        if !(0.0..=1.0).contains(&self.handedness) {
            return Some(format!(
                "frame {}: handedness {} outside [0,1]",
                self.t, self.handedness
            ));
        }
        if !(w >= 0.0 && h >= 0.0) {
            return Some(format!("frame {}: negative box extent", self.t));
        }
        let [cx, cy] = self.center;
        if cx < x || cx > x + w || cy < y || cy > y + h {
            return Some(format!("frame {}: center outside box", self.t));
        }
        None
    }
}

/// Ordered per-frame states of one hand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandTrack {
    pub hand: Hand,
    frames: Vec<HandFrameState>,
}

impl HandTrack {
    /// Builds a track; frame indices must be strictly increasing.
    pub fn new(hand: Hand, frames: Vec<HandFrameState>) -> Result<Self, String> {
        for pair in frames.windows(2) {
            if pair[1].t <= pair[0].t {
                return Err(format!(
                    "{hand} track: frame {} follows frame {}",
                    pair[1].t, pair[0].t
                ));
            }
        }
        if let Some(msg) = frames.iter().find_map(HandFrameState::invariant_error) {
            return Err(format!("{hand} track: {msg}"));
        }
        Ok(HandTrack { hand, frames })
    }

    /// Synthetic track from a motion trace starting at `start`.
    pub fn from_motion(hand: Hand, start: Frame, motion: &[f64], handedness: f64) -> Self {
        let frames = motion
            .iter()
            .enumerate()
            .map(|(i, &m)| HandFrameState::synthetic(start + i as Frame, m, handedness))
            .collect();
        HandTrack::new(hand, frames).expect("synthetic track")
    }

    pub fn frames(&self) -> &[HandFrameState] {
        &self.frames
    }

    /// States whose frame lies in `[t_s, t_e]`.
    pub fn in_window(&self, t_s: Frame, t_e: Frame) -> &[HandFrameState] {
        let lo = self.frames.partition_point(|f| f.t < t_s);
        let hi = self.frames.partition_point(|f| f.t <= t_e);
        &self.frames[lo..hi.max(lo)]
    }

    pub fn get(&self, t: Frame) -> Option<&HandFrameState> {
        self.frames
            .binary_search_by_key(&t, |f| f.t)
            .ok()
            .map(|i| &self.frames[i])
    }

    /// Fraction of window frames that carry a state.
    pub fn coverage(&self, t_s: Frame, t_e: Frame) -> f64 {
        if t_e < t_s {
            return 0.0;
        }
        let len = (t_e - t_s) as f64 + 1.0;
        self.in_window(t_s, t_e).len() as f64 / len
    }

    /// Mean handedness over window frames, 0 without data.
    pub fn handedness_purity(&self, t_s: Frame, t_e: Frame) -> f64 {
        let frames = self.in_window(t_s, t_e);
        if frames.is_empty() {
            return 0.0;
        }
        frames.iter().map(|f| f.handedness).sum::<f64>() / frames.len() as f64
    }

    pub fn mean_motion(&self, t_s: Frame, t_e: Frame) -> f64 {
        let frames = self.in_window(t_s, t_e);
        if frames.is_empty() {
            return 0.0;
        }
        frames.iter().map(|f| f.motion).sum::<f64>() / frames.len() as f64
    }

    /// Same track with every frame index moved by `delta`.
    pub fn shifted(&self, delta: Frame) -> HandTrack {
        let frames = self
            .frames
            .iter()
            .map(|f| HandFrameState { t: f.t + delta, ..f.clone() })
            .collect();
        HandTrack { hand: self.hand, frames }
    }

    /// Same track with every motion response multiplied by `scale`.
    pub fn scaled_motion(&self, scale: f64) -> HandTrack {
        let frames = self
            .frames
            .iter()
            .map(|f| HandFrameState { motion: f.motion * scale, ..f.clone() })
            .collect();
        HandTrack { hand: self.hand, frames }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_track_has_zero_coverage() {
        let track = HandTrack::new(Hand::Left, vec![]).unwrap();
        assert_eq!(track.coverage(0, 100), 0.0);
        assert_eq!(track.handedness_purity(0, 100), 0.0);
    }

    #[test]
    fn coverage_counts_window_frames() {
        let track = HandTrack::from_motion(Hand::Left, 5, &[1.0; 10], 0.9);
        assert_eq!(track.in_window(0, 9).len(), 5);
        assert!((track.coverage(0, 9) - 0.5).abs() < 1e-12);
        assert_eq!(track.coverage(5, 14), 1.0);
    }

    #[test]
    fn unordered_frames_rejected() {
        let frames = vec![
            HandFrameState::synthetic(3, 0.0, 1.0),
            HandFrameState::synthetic(3, 0.0, 1.0),
        ];
        assert!(HandTrack::new(Hand::Right, frames).is_err());
    }
}
