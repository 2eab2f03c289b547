//! Field-major aggregation of many rods into contiguous buffers.
//!
//! Every physical field (positions, velocities, directors, ...) lives in one
//! contiguous 64-byte-aligned buffer holding all member rods back to back,
//! with one padding ("ghost") slot between rods on element- and region-rank
//! fields. Per-rod kernels receive exact sub-slices, so the same dynamics
//! code runs on a standalone rod and on a block member; ghosts exist to keep
//! rods cleanly separated (and are poisoned with NaN in debug builds so any
//! stencil leak is caught immediately).

use crate::dynamics::{verlet_step_parts, MidStep, ScratchView, StepError};
use crate::frames::{Frames, FramesMut, FramesRef};
use crate::math::Vec3;
use crate::rod::{MaterialProperties, MaterialScalars, MaterialView, Rod, RodState};
use std::marker::PhantomData;
use std::ops::Range;

/// Default parallel grain: tasks cover at least this many elements.
pub const DEFAULT_GRAIN_ELEMENTS: usize = 4096;

/// One 64-byte-aligned allocation unit.
#[derive(Clone, Copy)]
#[repr(C, align(64))]
struct CacheLine([f64; 8]);

/// Marker for plain `f64`-array scalars that may live in aligned buffers.
///
/// # Safety
/// Implementors must be exactly `F64S` consecutive `f64`s with no padding and
/// alignment no stricter than `f64`.
pub unsafe trait FieldScalar: Copy + Send + Sync + 'static {
    const F64S: usize;
}

unsafe impl FieldScalar for f64 {
    const F64S: usize = 1;
}
unsafe impl FieldScalar for Vec3 {
    const F64S: usize = 3;
}

/// A typed, 64-byte-aligned, heap-allocated field buffer.
pub struct AlignedField<T: FieldScalar> {
    raw: Vec<CacheLine>,
    len: usize,
    _t: PhantomData<T>,
}

impl<T: FieldScalar> AlignedField<T> {
    /// Allocates `len` slots; every slot starts poisoned with NaN in debug
    /// builds (zero in release) so unwritten ghosts are tripwires.
    pub fn new(len: usize) -> Self {
        let fill = if cfg!(debug_assertions) { f64::NAN } else { 0.0 };
        let lines = (len * T::F64S).div_ceil(8);
        Self {
            raw: vec![CacheLine([fill; 8]); lines],
            len,
            _t: PhantomData,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_slice(&self) -> &[T] {
        // SAFETY: the allocation holds >= len * F64S consecutive f64s at
        // 64-byte alignment; T is a plain f64 array (FieldScalar contract),
        // so `len` Ts are in bounds and properly aligned.
        unsafe { std::slice::from_raw_parts(self.raw.as_ptr() as *const T, self.len) }
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        // SAFETY: as in `as_slice`, plus exclusive access through &mut self.
        unsafe { std::slice::from_raw_parts_mut(self.raw.as_mut_ptr() as *mut T, self.len) }
    }

    /// Bytes actually allocated (including alignment round-up).
    pub fn allocated_bytes(&self) -> usize {
        self.raw.len() * std::mem::size_of::<CacheLine>()
    }
}

/// Where one rod's data lives inside each rank's buffers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RodSpan {
    pub node_start: usize,
    pub elem_start: usize,
    pub vor_start: usize,
    pub n_elements: usize,
}

impl RodSpan {
    pub fn n_nodes(&self) -> usize {
        self.n_elements + 1
    }

    pub fn n_regions(&self) -> usize {
        self.n_elements.saturating_sub(1)
    }

    pub fn node_range(&self) -> Range<usize> {
        self.node_start..self.node_start + self.n_nodes()
    }

    pub fn elem_range(&self) -> Range<usize> {
        self.elem_start..self.elem_start + self.n_elements
    }

    pub fn vor_range(&self) -> Range<usize> {
        self.vor_start..self.vor_start + self.n_regions()
    }
}

/// Why an ensemble could not be blocked.
#[derive(Debug, thiserror::Error)]
pub enum BlockError {
    #[error("cannot build a block from zero rods")]
    Empty,
    #[error("rod {index} has inconsistent field lengths")]
    Inconsistent { index: usize },
}

/// A `StepError` attributed to the rod it occurred in.
#[derive(Debug, thiserror::Error)]
#[error("rod {rod_index}: {source}")]
pub struct EnsembleStepError {
    pub rod_index: usize,
    #[source]
    pub source: StepError,
}

/// All member rods' state and material, one contiguous buffer per field.
pub struct RodBlock {
    pub(crate) spans: Vec<RodSpan>,
    pub(crate) scalars: Vec<MaterialScalars>,
    // Dynamic state. Director frames are stored as nine component planes
    // (plane p holds entry p of every element's row-major matrix), so
    // elementwise frame sweeps stream unit-stride f64 lanes.
    pub(crate) positions: AlignedField<Vec3>,
    pub(crate) velocities: AlignedField<Vec3>,
    pub(crate) directors: [AlignedField<f64>; 9],
    pub(crate) angular_velocities: AlignedField<Vec3>,
    // Material, element rank.
    pub(crate) radius: AlignedField<f64>,
    pub(crate) rest_length: AlignedField<f64>,
    pub(crate) shear_diag: AlignedField<Vec3>,
    pub(crate) inertia_diag: AlignedField<Vec3>,
    pub(crate) inv_inertia_diag: AlignedField<Vec3>,
    // Material, node rank.
    pub(crate) nodal_mass: AlignedField<f64>,
    // Material, region rank.
    pub(crate) bend_diag: AlignedField<Vec3>,
    pub(crate) voronoi_rest_length: AlignedField<f64>,
    pub(crate) rest_kappa: AlignedField<Vec3>,
}

/// Pooled work buffers matching a block's layout.
pub struct BlockScratch {
    pub(crate) spans: Vec<RodSpan>,
    pub(crate) tangents: AlignedField<Vec3>,
    pub(crate) dilatations: AlignedField<f64>,
    pub(crate) dilatation_rates: AlignedField<f64>,
    pub(crate) voronoi_dilatations: AlignedField<f64>,
    pub(crate) sigma: AlignedField<Vec3>,
    pub(crate) kappa: AlignedField<Vec3>,
    pub(crate) node_force: AlignedField<Vec3>,
    pub(crate) elem_couple: AlignedField<Vec3>,
}

/// One rod carved out of a block: exclusive state + scratch, shared material.
pub struct RodMut<'a> {
    pub rod_index: usize,
    pub span: RodSpan,
    pub positions: &'a mut [Vec3],
    pub velocities: &'a mut [Vec3],
    pub directors: FramesMut<'a>,
    pub angular_velocities: &'a mut [Vec3],
    pub material: MaterialView<'a>,
    pub scratch: ScratchView<'a>,
}

fn rank_totals(spans: &[RodSpan]) -> (usize, usize, usize) {
    match spans.last() {
        None => (0, 0, 0),
        Some(s) => (
            s.node_start + s.n_nodes(),
            s.elem_start + s.n_elements + 1,
            s.vor_start + s.n_regions() + 1,
        ),
    }
}

fn build_spans(rods: &[Rod]) -> Vec<RodSpan> {
    let mut spans = Vec::with_capacity(rods.len());
    let (mut node, mut elem, mut vor) = (0, 0, 0);
    for rod in rods {
        let n = rod.state.n_elements();
        spans.push(RodSpan {
            node_start: node,
            elem_start: elem,
            vor_start: vor,
            n_elements: n,
        });
        node += n + 1; // node rank is packed tight
        elem += n + 1; // one ghost after each rod
        vor += n; // (n - 1) regions + one ghost
    }
    spans
}

impl RodBlock {
    /// Scatters the rods into field-major buffers. Iteration order matches
    /// the input order.
    pub fn build(rods: &[Rod]) -> Result<Self, BlockError> {
        if rods.is_empty() {
            return Err(BlockError::Empty);
        }
        for (index, rod) in rods.iter().enumerate() {
            let n = rod.state.n_elements();
            let m = &rod.material;
            let consistent = n >= 1
                && rod.state.positions.len() == n + 1
                && rod.state.velocities.len() == n + 1
                && rod.state.angular_velocities.len() == n
                && m.n_elements() == n
                && m.nodal_mass.len() == n + 1
                && m.rest_kappa.len() == n - 1;
            if !consistent {
                return Err(BlockError::Inconsistent { index });
            }
        }

        let spans = build_spans(rods);
        let (nodes, elems, vors) = rank_totals(&spans);
        let mut block = Self {
            scalars: rods.iter().map(|r| r.material.scalars).collect(),
            positions: AlignedField::new(nodes),
            velocities: AlignedField::new(nodes),
            directors: std::array::from_fn(|_| AlignedField::new(elems)),
            angular_velocities: AlignedField::new(elems),
            radius: AlignedField::new(elems),
            rest_length: AlignedField::new(elems),
            shear_diag: AlignedField::new(elems),
            inertia_diag: AlignedField::new(elems),
            inv_inertia_diag: AlignedField::new(elems),
            nodal_mass: AlignedField::new(nodes),
            bend_diag: AlignedField::new(vors),
            voronoi_rest_length: AlignedField::new(vors),
            rest_kappa: AlignedField::new(vors),
            spans,
        };

        for (k, rod) in rods.iter().enumerate() {
            let span = block.spans[k];
            let (nr, er, vr) = (span.node_range(), span.elem_range(), span.vor_range());
            block.positions.as_mut_slice()[nr.clone()].copy_from_slice(&rod.state.positions);
            block.velocities.as_mut_slice()[nr.clone()].copy_from_slice(&rod.state.velocities);
            for p in 0..9 {
                block.directors[p].as_mut_slice()[er.clone()]
                    .copy_from_slice(rod.state.directors.plane(p));
            }
            block.angular_velocities.as_mut_slice()[er.clone()]
                .copy_from_slice(&rod.state.angular_velocities);
            let m = &rod.material;
            block.radius.as_mut_slice()[er.clone()].copy_from_slice(&m.radius);
            block.rest_length.as_mut_slice()[er.clone()].copy_from_slice(&m.rest_length);
            block.shear_diag.as_mut_slice()[er.clone()].copy_from_slice(&m.shear_diag);
            block.inertia_diag.as_mut_slice()[er.clone()].copy_from_slice(&m.inertia_diag);
            block.inv_inertia_diag.as_mut_slice()[er].copy_from_slice(&m.inv_inertia_diag);
            block.nodal_mass.as_mut_slice()[nr].copy_from_slice(&m.nodal_mass);
            block.bend_diag.as_mut_slice()[vr.clone()].copy_from_slice(&m.bend_diag);
            block.voronoi_rest_length.as_mut_slice()[vr.clone()]
                .copy_from_slice(&m.voronoi_rest_length);
            block.rest_kappa.as_mut_slice()[vr].copy_from_slice(&m.rest_kappa);
        }
        Ok(block)
    }

    pub fn n_rods(&self) -> usize {
        self.spans.len()
    }

    pub fn total_elements(&self) -> usize {
        self.spans.iter().map(|s| s.n_elements).sum()
    }

    pub fn spans(&self) -> &[RodSpan] {
        &self.spans
    }

    pub fn scalars(&self, rod: usize) -> MaterialScalars {
        self.scalars[rod]
    }

    /// All node positions (ghost-free rank), for broad-phase and diagnostics.
    pub fn positions_all(&self) -> &[Vec3] {
        self.positions.as_slice()
    }

    pub fn velocities_all(&self) -> &[Vec3] {
        self.velocities.as_slice()
    }

    /// All director frames as component planes (element rank, ghosts included).
    pub fn frames_all(&self) -> FramesRef<'_> {
        FramesRef::from_planes(std::array::from_fn(|p| self.directors[p].as_slice()))
    }

    pub fn angular_velocities_all(&self) -> &[Vec3] {
        self.angular_velocities.as_slice()
    }

    pub fn radius_all(&self) -> &[f64] {
        self.radius.as_slice()
    }

    pub fn rest_length_all(&self) -> &[f64] {
        self.rest_length.as_slice()
    }

    pub fn nodal_mass_all(&self) -> &[f64] {
        self.nodal_mass.as_slice()
    }

    /// Material view for one rod, carved from the pooled buffers.
    pub fn material_view(&self, rod: usize) -> MaterialView<'_> {
        let s = self.spans[rod];
        let (nr, er, vr) = (s.node_range(), s.elem_range(), s.vor_range());
        MaterialView {
            scalars: self.scalars[rod],
            radius: &self.radius.as_slice()[er.clone()],
            rest_length: &self.rest_length.as_slice()[er.clone()],
            nodal_mass: &self.nodal_mass.as_slice()[nr],
            shear_diag: &self.shear_diag.as_slice()[er.clone()],
            inertia_diag: &self.inertia_diag.as_slice()[er.clone()],
            inv_inertia_diag: &self.inv_inertia_diag.as_slice()[er],
            bend_diag: &self.bend_diag.as_slice()[vr.clone()],
            voronoi_rest_length: &self.voronoi_rest_length.as_slice()[vr.clone()],
            rest_kappa: &self.rest_kappa.as_slice()[vr],
        }
    }

    /// Reconstructs one rod: state copied bitwise, material rebuilt from its
    /// defining inputs (scalars, radius, rest length, intrinsic curvature).
    pub fn gather_rod(&self, rod: usize) -> Rod {
        let s = self.spans[rod];
        let (nr, er, vr) = (s.node_range(), s.elem_range(), s.vor_range());
        let state = RodState {
            positions: self.positions.as_slice()[nr.clone()].to_vec(),
            velocities: self.velocities.as_slice()[nr].to_vec(),
            directors: Frames::from_plane_vecs(std::array::from_fn(|p| {
                self.directors[p].as_slice()[er.clone()].to_vec()
            })),
            angular_velocities: self.angular_velocities.as_slice()[er.clone()].to_vec(),
        };
        let mut material = MaterialProperties::new(
            self.scalars[rod],
            self.radius.as_slice()[er.clone()].to_vec(),
            self.rest_length.as_slice()[er].to_vec(),
        );
        material
            .rest_kappa
            .copy_from_slice(&self.rest_kappa.as_slice()[vr]);
        Rod { state, material }
    }

    /// Bytes held by this block, alignment round-up included.
    pub fn allocated_bytes(&self) -> usize {
        self.positions.allocated_bytes()
            + self.velocities.allocated_bytes()
            + self.directors.iter().map(AlignedField::allocated_bytes).sum::<usize>()
            + self.angular_velocities.allocated_bytes()
            + self.radius.allocated_bytes()
            + self.rest_length.allocated_bytes()
            + self.shear_diag.allocated_bytes()
            + self.inertia_diag.allocated_bytes()
            + self.inv_inertia_diag.allocated_bytes()
            + self.nodal_mass.allocated_bytes()
            + self.bend_diag.allocated_bytes()
            + self.voronoi_rest_length.allocated_bytes()
            + self.rest_kappa.allocated_bytes()
            + self.spans.len() * std::mem::size_of::<RodSpan>()
            + self.scalars.len() * std::mem::size_of::<MaterialScalars>()
    }

    /// Whole-block director planes with matching angular velocities, for
    /// element-local sweeps. The sweep may process ghost slots: their results
    /// never reach live data (debug builds keep them NaN).
    pub fn frames_sweep_mut(&mut self) -> (FramesMut<'_>, &[Vec3]) {
        (
            FramesMut::from_planes(self.directors.each_mut().map(|f| f.as_mut_slice())),
            self.angular_velocities.as_slice(),
        )
    }

    /// Serial per-rod sweep with no task scheduling, for single-threaded
    /// drivers and benchmarks that must isolate memory layout from scheduling.
    pub fn for_each_rod_serial<F>(&mut self, scratch: &mut BlockScratch, mut kernel: F)
    where
        F: FnMut(&mut RodMut<'_>),
    {
        assert_eq!(
            self.spans, scratch.spans,
            "scratch was built for a different block layout"
        );
        let spans = &self.spans;
        let scalars = &self.scalars;
        let radius = self.radius.as_slice();
        let rest_length = self.rest_length.as_slice();
        let shear_diag = self.shear_diag.as_slice();
        let inertia_diag = self.inertia_diag.as_slice();
        let inv_inertia_diag = self.inv_inertia_diag.as_slice();
        let nodal_mass = self.nodal_mass.as_slice();
        let bend_diag = self.bend_diag.as_slice();
        let voronoi_rest_length = self.voronoi_rest_length.as_slice();
        let rest_kappa = self.rest_kappa.as_slice();
        let positions = self.positions.as_mut_slice();
        let velocities = self.velocities.as_mut_slice();
        let mut directors = FramesMut::from_planes(self.directors.each_mut().map(|f| f.as_mut_slice()));
        let angular_velocities = self.angular_velocities.as_mut_slice();
        let tangents = scratch.tangents.as_mut_slice();
        let dilatations = scratch.dilatations.as_mut_slice();
        let dilatation_rates = scratch.dilatation_rates.as_mut_slice();
        let voronoi_dilatations = scratch.voronoi_dilatations.as_mut_slice();
        let sigma = scratch.sigma.as_mut_slice();
        let kappa = scratch.kappa.as_mut_slice();
        let node_force = scratch.node_force.as_mut_slice();
        let elem_couple = scratch.elem_couple.as_mut_slice();

        for (rod_index, &span) in spans.iter().enumerate() {
            let (nr, er, vr) = (span.node_range(), span.elem_range(), span.vor_range());
            let material = MaterialView {
                scalars: scalars[rod_index],
                radius: &radius[er.clone()],
                rest_length: &rest_length[er.clone()],
                nodal_mass: &nodal_mass[nr.clone()],
                shear_diag: &shear_diag[er.clone()],
                inertia_diag: &inertia_diag[er.clone()],
                inv_inertia_diag: &inv_inertia_diag[er.clone()],
                bend_diag: &bend_diag[vr.clone()],
                voronoi_rest_length: &voronoi_rest_length[vr.clone()],
                rest_kappa: &rest_kappa[vr.clone()],
            };
            let scratch_view = ScratchView {
                tangents: &mut tangents[er.clone()],
                dilatations: &mut dilatations[er.clone()],
                dilatation_rates: &mut dilatation_rates[er.clone()],
                voronoi_dilatations: &mut voronoi_dilatations[vr.clone()],
                sigma: &mut sigma[er.clone()],
                kappa: &mut kappa[vr.clone()],
                node_force: &mut node_force[nr.clone()],
                elem_couple: &mut elem_couple[er.clone()],
            };
            let mut rod = RodMut {
                rod_index,
                span,
                positions: &mut positions[nr.clone()],
                velocities: &mut velocities[nr],
                directors: directors.slice_mut(er.clone()),
                angular_velocities: &mut angular_velocities[er],
                material,
                scratch: scratch_view,
            };
            kernel(&mut rod);
        }
    }

    /// Runs `kernel` over every rod, splitting work across the current rayon
    /// pool in chunks of at least `grain_elements` elements. Rods never alias,
    /// so results are identical for every thread count; on failure the error
    /// from the lowest rod index is reported.
    pub fn try_for_each_rod<E, F>(
        &mut self,
        scratch: &mut BlockScratch,
        grain_elements: usize,
        kernel: &F,
    ) -> Result<(), E>
    where
        F: Fn(&mut RodMut<'_>) -> Result<(), E> + Sync,
        E: Send,
    {
        assert_eq!(
            self.spans, scratch.spans,
            "scratch was built for a different block layout"
        );
        let chunks = chunk_rods(&self.spans, grain_elements.max(1));
        let spans = &self.spans;
        let scalars = &self.scalars;

        // Shared (read-only) material buffers.
        let radius = self.radius.as_slice();
        let rest_length = self.rest_length.as_slice();
        let shear_diag = self.shear_diag.as_slice();
        let inertia_diag = self.inertia_diag.as_slice();
        let inv_inertia_diag = self.inv_inertia_diag.as_slice();
        let nodal_mass = self.nodal_mass.as_slice();
        let bend_diag = self.bend_diag.as_slice();
        let voronoi_rest_length = self.voronoi_rest_length.as_slice();
        let rest_kappa = self.rest_kappa.as_slice();

        // Exclusive state + scratch buffers, carved per chunk.
        let mut positions = Carver::new(self.positions.as_mut_slice());
        let mut velocities = Carver::new(self.velocities.as_mut_slice());
        let mut directors: [Carver<'_, f64>; 9] =
            self.directors.each_mut().map(|f| Carver::new(f.as_mut_slice()));
        let mut angular_velocities = Carver::new(self.angular_velocities.as_mut_slice());
        let mut tangents = Carver::new(scratch.tangents.as_mut_slice());
        let mut dilatations = Carver::new(scratch.dilatations.as_mut_slice());
        let mut dilatation_rates = Carver::new(scratch.dilatation_rates.as_mut_slice());
        let mut voronoi_dilatations = Carver::new(scratch.voronoi_dilatations.as_mut_slice());
        let mut sigma = Carver::new(scratch.sigma.as_mut_slice());
        let mut kappa = Carver::new(scratch.kappa.as_mut_slice());
        let mut node_force = Carver::new(scratch.node_force.as_mut_slice());
        let mut elem_couple = Carver::new(scratch.elem_couple.as_mut_slice());

        let mut failures: Vec<Option<(usize, E)>> = Vec::new();
        failures.resize_with(chunks.len(), || None);

        rayon::scope(|sc| {
            for (rods, slot) in chunks.into_iter().zip(failures.iter_mut()) {
                // Chunk-local base offsets and exclusive ends (ghosts included
                // so the next chunk starts at its own rod's offset).
                let first = spans[rods.start];
                let last = spans[rods.end - 1];
                let node_base = first.node_start;
                let elem_base = first.elem_start;
                let vor_base = first.vor_start;
                let node_end = last.node_start + last.n_nodes();
                let elem_end = last.elem_start + last.n_elements + 1;
                let vor_end = last.vor_start + last.n_regions() + 1;

                let c_positions = positions.take_to(node_end);
                let c_velocities = velocities.take_to(node_end);
                let c_directors = FramesMut::from_planes({
                    let mut planes = directors.iter_mut();
                    std::array::from_fn(|_| planes.next().unwrap().take_to(elem_end))
                });
                let c_angular = angular_velocities.take_to(elem_end);
                let c_tangents = tangents.take_to(elem_end);
                let c_dilatations = dilatations.take_to(elem_end);
                let c_dilatation_rates = dilatation_rates.take_to(elem_end);
                let c_voronoi_dilatations = voronoi_dilatations.take_to(vor_end);
                let c_sigma = sigma.take_to(elem_end);
                let c_kappa = kappa.take_to(vor_end);
                let c_node_force = node_force.take_to(node_end);
                let c_elem_couple = elem_couple.take_to(elem_end);

                sc.spawn(move |_| {
                    let mut c_directors = c_directors;
                    for rod_index in rods {
                        let span = spans[rod_index];
                        let nr = span.node_start - node_base
                            ..span.node_start - node_base + span.n_nodes();
                        let er = span.elem_start - elem_base
                            ..span.elem_start - elem_base + span.n_elements;
                        let vr = span.vor_start - vor_base
                            ..span.vor_start - vor_base + span.n_regions();
                        let material = MaterialView {
                            scalars: scalars[rod_index],
                            radius: &radius[span.elem_range()],
                            rest_length: &rest_length[span.elem_range()],
                            nodal_mass: &nodal_mass[span.node_range()],
                            shear_diag: &shear_diag[span.elem_range()],
                            inertia_diag: &inertia_diag[span.elem_range()],
                            inv_inertia_diag: &inv_inertia_diag[span.elem_range()],
                            bend_diag: &bend_diag[span.vor_range()],
                            voronoi_rest_length: &voronoi_rest_length[span.vor_range()],
                            rest_kappa: &rest_kappa[span.vor_range()],
                        };
                        let scratch_view = ScratchView {
                            tangents: &mut c_tangents[er.clone()],
                            dilatations: &mut c_dilatations[er.clone()],
                            dilatation_rates: &mut c_dilatation_rates[er.clone()],
                            voronoi_dilatations: &mut c_voronoi_dilatations[vr.clone()],
                            sigma: &mut c_sigma[er.clone()],
                            kappa: &mut c_kappa[vr.clone()],
                            node_force: &mut c_node_force[nr.clone()],
                            elem_couple: &mut c_elem_couple[er.clone()],
                        };
                        let mut rod = RodMut {
                            rod_index,
                            span,
                            positions: &mut c_positions[nr.clone()],
                            velocities: &mut c_velocities[nr.clone()],
                            directors: c_directors.slice_mut(er.clone()),
                            angular_velocities: &mut c_angular[er],
                            material,
                            scratch: scratch_view,
                        };
                        if let Err(e) = kernel(&mut rod) {
                            *slot = Some((rod_index, e));
                            return;
                        }
                    }
                });
            }
        });

        match failures
            .into_iter()
            .flatten()
            .min_by_key(|(rod_index, _)| *rod_index)
        {
            Some((_, e)) => Err(e),
            None => Ok(()),
        }
    }

    /// Infallible variant of `try_for_each_rod`.
    pub fn for_each_rod<F>(&mut self, scratch: &mut BlockScratch, grain_elements: usize, kernel: &F)
    where
        F: Fn(&mut RodMut<'_>) + Sync,
    {
        let result: Result<(), std::convert::Infallible> = self
            .try_for_each_rod(scratch, grain_elements, &|rod: &mut RodMut<'_>| {
                kernel(rod);
                Ok(())
            });
        match result {
            Ok(()) => {}
            Err(never) => match never {},
        }
    }

    /// One full Verlet step for every rod (the asynchronous, one-barrier
    /// protocol). `forcing` adds external loads at the mid-step
    /// configuration, keyed by rod index.
    pub fn step_all<F>(
        &mut self,
        scratch: &mut BlockScratch,
        grain_elements: usize,
        dt: f64,
        step: u64,
        forcing: &F,
    ) -> Result<(), EnsembleStepError>
    where
        F: Fn(usize, &mut MidStep<'_>) + Sync,
    {
        self.try_for_each_rod(scratch, grain_elements, &|rod: &mut RodMut<'_>| {
            let rod_index = rod.rod_index;
            verlet_step_parts(
                rod.positions,
                rod.velocities,
                rod.directors.reborrow(),
                rod.angular_velocities,
                &rod.material,
                &mut rod.scratch,
                dt,
                step,
                |mid| forcing(rod_index, mid),
            )
            .map_err(|source| EnsembleStepError { rod_index, source })
        })
    }
}

impl BlockScratch {
    /// Allocates work buffers shaped for `block`.
    pub fn for_block(block: &RodBlock) -> Self {
        let (nodes, elems, vors) = rank_totals(&block.spans);
        Self {
            spans: block.spans.clone(),
            tangents: AlignedField::new(elems),
            dilatations: AlignedField::new(elems),
            dilatation_rates: AlignedField::new(elems),
            voronoi_dilatations: AlignedField::new(vors),
            sigma: AlignedField::new(elems),
            kappa: AlignedField::new(vors),
            node_force: AlignedField::new(nodes),
            elem_couple: AlignedField::new(elems),
        }
    }

    /// Nodal force accumulators for the whole ensemble (ghost-free rank),
    /// where interaction forces are deposited between stages.
    pub fn node_force_all(&mut self) -> &mut [Vec3] {
        self.node_force.as_mut_slice()
    }

    /// Bytes held by this scratch pool, alignment round-up included.
    pub fn allocated_bytes(&self) -> usize {
        self.tangents.allocated_bytes()
            + self.dilatations.allocated_bytes()
            + self.dilatation_rates.allocated_bytes()
            + self.voronoi_dilatations.allocated_bytes()
            + self.sigma.allocated_bytes()
            + self.kappa.allocated_bytes()
            + self.node_force.allocated_bytes()
            + self.elem_couple.allocated_bytes()
            + self.spans.len() * std::mem::size_of::<RodSpan>()
    }
}

/// Splits `[0, spans.len())` into runs of consecutive rods covering at least
/// `grain_elements` elements each (the last run takes the remainder).
fn chunk_rods(spans: &[RodSpan], grain_elements: usize) -> Vec<Range<usize>> {
    let mut chunks = Vec::new();
    let mut start = 0;
    let mut elems = 0;
    for (k, span) in spans.iter().enumerate() {
        elems += span.n_elements;
        if elems >= grain_elements {
            chunks.push(start..k + 1);
            start = k + 1;
            elems = 0;
        }
    }
    if start < spans.len() {
        chunks.push(start..spans.len());
    }
    chunks
}

/// Hands out disjoint prefix slices of one buffer in ascending offset order.
struct Carver<'a, T> {
    rest: &'a mut [T],
    consumed: usize,
}

impl<'a, T> Carver<'a, T> {
    fn new(buffer: &'a mut [T]) -> Self {
        Self {
            rest: buffer,
            consumed: 0,
        }
    }

    /// Takes the slice from the current cursor to absolute offset `end`.
    fn take_to(&mut self, end: usize) -> &'a mut [T] {
        let (head, tail) = std::mem::take(&mut self.rest).split_at_mut(end - self.consumed);
        self.rest = tail;
        self.consumed = end;
        head
    }
}
