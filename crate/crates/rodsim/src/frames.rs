//! Director-frame storage as nine contiguous component planes.
//!
//! Each element's frame is a row-major 3x3 matrix; plane `p` holds entry `p`
//! of every element's matrix, back to back. Elementwise frame kernels (the
//! rotation sweep in `kinematics`) then stream nine long `f64` arrays that
//! the compiler can vectorize across elements — an interleaved array of
//! matrices cannot be processed that way without shuffles. Stencil and
//! one-off consumers gather a [`Mat3`] with `get`; gathering returns the
//! stored bits unchanged, so the storage shape never alters arithmetic.

use crate::math::Mat3;
use std::ops::Range;

/// Owned frame storage; all nine planes always have equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    planes: [Vec<f64>; 9],
}

impl Frames {
    /// Builds `n` frames from a generator.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize) -> Mat3) -> Self {
        let mut planes: [Vec<f64>; 9] = std::array::from_fn(|_| Vec::with_capacity(n));
        for k in 0..n {
            let m = f(k);
            for (p, plane) in planes.iter_mut().enumerate() {
                plane.push(m[p]);
            }
        }
        Self { planes }
    }

    /// `n` copies of one frame.
    pub fn filled(n: usize, m: Mat3) -> Self {
        Self {
            planes: std::array::from_fn(|p| vec![m[p]; n]),
        }
    }

    pub fn from_mats(mats: &[Mat3]) -> Self {
        Self::from_fn(mats.len(), |k| mats[k])
    }

    /// Adopts pre-split planes; they must all have the same length.
    pub fn from_plane_vecs(planes: [Vec<f64>; 9]) -> Self {
        let n = planes[0].len();
        assert!(planes.iter().all(|p| p.len() == n), "plane lengths differ");
        Self { planes }
    }

    pub fn len(&self) -> usize {
        self.planes[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Gathers frame `k` (exactly the stored bits).
    pub fn get(&self, k: usize) -> Mat3 {
        std::array::from_fn(|p| self.planes[p][k])
    }

    /// Scatters `m` into frame `k`.
    pub fn set(&mut self, k: usize, m: Mat3) {
        for (p, plane) in self.planes.iter_mut().enumerate() {
            plane[k] = m[p];
        }
    }

    /// Component plane `p` across all frames.
    pub fn plane(&self, p: usize) -> &[f64] {
        &self.planes[p]
    }

    pub fn as_ref(&self) -> FramesRef<'_> {
        FramesRef {
            planes: std::array::from_fn(|p| self.planes[p].as_slice()),
        }
    }

    pub fn as_mut(&mut self) -> FramesMut<'_> {
        FramesMut {
            planes: self.planes.each_mut().map(|p| p.as_mut_slice()),
        }
    }
}

/// Borrowed read-only frames.
#[derive(Debug, Clone, Copy)]
pub struct FramesRef<'a> {
    planes: [&'a [f64]; 9],
}

impl<'a> FramesRef<'a> {
    /// Wraps borrowed planes; they must all have the same length.
    pub fn from_planes(planes: [&'a [f64]; 9]) -> Self {
        let n = planes[0].len();
        assert!(planes.iter().all(|p| p.len() == n), "plane lengths differ");
        Self { planes }
    }

    pub fn len(&self) -> usize {
        self.planes[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Gathers frame `k` (exactly the stored bits).
    pub fn get(&self, k: usize) -> Mat3 {
        std::array::from_fn(|p| self.planes[p][k])
    }

    /// Component plane `p` across all frames.
    pub fn plane(&self, p: usize) -> &'a [f64] {
        self.planes[p]
    }

    /// The same view restricted to `range` (indices relative to it thereafter).
    pub fn slice(&self, range: Range<usize>) -> FramesRef<'a> {
        FramesRef {
            planes: std::array::from_fn(|p| &self.planes[p][range.clone()]),
        }
    }
}

/// Borrowed mutable frames.
#[derive(Debug)]
pub struct FramesMut<'a> {
    planes: [&'a mut [f64]; 9],
}

impl<'a> FramesMut<'a> {
    /// Wraps borrowed planes; they must all have the same length.
    pub fn from_planes(planes: [&'a mut [f64]; 9]) -> Self {
        let n = planes[0].len();
        assert!(planes.iter().all(|p| p.len() == n), "plane lengths differ");
        Self { planes }
    }

    pub fn len(&self) -> usize {
        self.planes[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Gathers frame `k` (exactly the stored bits).
    pub fn get(&self, k: usize) -> Mat3 {
        std::array::from_fn(|p| self.planes[p][k])
    }

    /// Scatters `m` into frame `k`.
    pub fn set(&mut self, k: usize, m: Mat3) {
        for (p, plane) in self.planes.iter_mut().enumerate() {
            plane[k] = m[p];
        }
    }

    pub fn as_ref(&self) -> FramesRef<'_> {
        FramesRef {
            planes: std::array::from_fn(|p| &*self.planes[p]),
        }
    }

    pub fn reborrow(&mut self) -> FramesMut<'_> {
        FramesMut {
            planes: self.planes.each_mut().map(|p| &mut **p),
        }
    }

    /// The same view restricted to `range` (indices relative to it thereafter).
    pub fn slice_mut(&mut self, range: Range<usize>) -> FramesMut<'_> {
        FramesMut {
            planes: self.planes.each_mut().map(|p| &mut p[range.clone()]),
        }
    }

    /// All nine planes at once, for vectorizable elementwise sweeps.
    pub fn planes_mut(&mut self) -> [&mut [f64]; 9] {
        self.planes.each_mut().map(|p| &mut **p)
    }
}
