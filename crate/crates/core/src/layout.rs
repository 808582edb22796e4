use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Head / transition / tail partition of a generated sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentLayout {
    pub head_frames: usize,
    pub transition_frames: usize,
    pub tail_frames: usize,
}

impl Default for SegmentLayout {
    fn default() -> Self {
        Self {
            head_frames: 60,
            transition_frames: 30,
            tail_frames: 60,
        }
    }
}

impl SegmentLayout {
    pub fn new(head_frames: usize, transition_frames: usize, tail_frames: usize) -> Result<Self> {
        let layout = Self {
            head_frames,
            transition_frames,
            tail_frames,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.transition_frames;
        if l == 0 {
            return Err(CoreError::Layout("transition length must be positive".into()));
        }
        if l > self.head_frames || l > self.tail_frames {
            return Err(CoreError::Layout(format!(
                "transition length {l} exceeds head {} or tail {}",
                self.head_frames, self.tail_frames
            )));
        }
        Ok(())
    }

    /// Total frame count `N`.
    pub fn total(&self) -> usize {
        self.head_frames + self.transition_frames + self.tail_frames
    }

    pub fn duration_secs(&self, fps: f64) -> f64 {
        self.total() as f64 / fps
    }

    pub fn head(&self) -> Range<usize> {
        0..self.head_frames
    }

    pub fn transition(&self) -> Range<usize> {
        self.head_frames..self.head_frames + self.transition_frames
    }

    pub fn tail(&self) -> Range<usize> {
        self.head_frames + self.transition_frames..self.total()
    }

    /// `(head, transition, tail)` index ranges covering `0..total()` in order.
    pub fn segment_slices(&self) -> (Range<usize>, Range<usize>, Range<usize>) {
        (self.head(), self.transition(), self.tail())
    }

    /// Last `L` frames of the head and first `L` frames of the tail.
    pub fn chunk_ranges(&self) -> (Range<usize>, Range<usize>) {
        let l = self.transition_frames;
        let tail = self.tail();
        (self.head_frames - l..self.head_frames, tail.start..tail.start + l)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn default_layout_slices() {
        let l = SegmentLayout::default();
        assert_eq!(l.total(), 150);
        assert_eq!(l.segment_slices(), (0..60, 60..90, 90..150));
        assert_eq!(l.chunk_ranges(), (30..60, 90..120));
    }

    #[test]
    fn minimal_and_square_layouts() {
        let l = SegmentLayout::new(1, 1, 1).unwrap();
        assert_eq!(l.segment_slices(), (0..1, 1..2, 2..3));
        let l = SegmentLayout::new(30, 30, 30).unwrap();
        assert_eq!(l.segment_slices(), (0..30, 30..60, 60..90));
        assert_eq!(l.chunk_ranges(), (l.head(), l.tail()));
        let l = SegmentLayout::new(40, 10, 40).unwrap();
        // Tail is 50..90, so its first ten frames are 50..60.
        assert_eq!(l.chunk_ranges(), (30..40, 50..60));
    }

    #[test]
    fn rejects_oversized_transition() {
        assert!(SegmentLayout::new(10, 11, 20).is_err());
        assert!(SegmentLayout::new(20, 11, 10).is_err());
        assert!(SegmentLayout::new(5, 0, 5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]
        #[test]
        fn slices_partition_and_chunks_nest(head in 1usize..200, l in 1usize..100, tail in 1usize..200) {
            prop_assume!(l <= head && l <= tail);
            let layout = SegmentLayout::new(head, l, tail).unwrap();
            let (h, t, e) = layout.segment_slices();
            prop_assert_eq!(h.start, 0);
            prop_assert_eq!(h.end, t.start);
            prop_assert_eq!(t.end, e.start);
            prop_assert_eq!(e.end, layout.total());
            let (hc, tc) = layout.chunk_ranges();
            prop_assert!(hc.start >= h.start && hc.end <= h.end && hc.len() == l);
            prop_assert!(tc.start >= e.start && tc.end <= e.end && tc.len() == l);
        }
    }
}
