use std::collections::HashMap;

use rayon::prelude::*;

use super::modes::{sample_shot, ModeSet, RetrievalModel};
use super::render::{render_frame, Frame, PaneLayout};
use super::ScatterError;
use crate::geometry::{Angle2D, BeamGeometry, Camera};
use crate::rng::{stream, Domain};

/// Readout angle per shot.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Constant(Angle2D),
    PerShot(Vec<Angle2D>),
}

impl Schedule {
    pub fn angle(&self, shot: usize) -> Option<Angle2D> {
        match self {
            Schedule::Constant(a) => Some(*a),
            Schedule::PerShot(v) => v.get(shot).copied(),
        }
    }
}

const CHUNK: usize = 256;

/// Immutable scene: geometry, modes, retrieval and camera, with the Stokes
/// footprints precomputed.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub geom: BeamGeometry,
    pub modes: ModeSet,
    pub retrieval: RetrievalModel,
    pub camera: Camera,
    stokes_layout: PaneLayout,
}

fn angle_key(a: Angle2D) -> (u64, u64) {
    (a.theta_x.to_bits(), a.theta_y.to_bits())
}

impl Simulator {
    pub fn new(
        geom: BeamGeometry,
        modes: ModeSet,
        retrieval: RetrievalModel,
        camera: Camera,
    ) -> Result<Self, ScatterError> {
        geom.validate()?;
        retrieval.validate()?;
        camera.validate()?;
        let stokes_layout = PaneLayout::stokes(&modes, &camera);
        Ok(Self {
            geom,
            modes,
            retrieval,
            camera,
            stokes_layout,
        })
    }

    pub fn anti_stokes_layout(&self, theta_read: Angle2D) -> PaneLayout {
        PaneLayout::anti_stokes(&self.modes, &self.geom, theta_read, &self.camera)
    }

    fn shot_with(
        &self,
        seed: u64,
        shot_index: u64,
        theta_read: Angle2D,
        anti: &PaneLayout,
    ) -> Frame {
        let mut rng = stream(seed, Domain::Frames, shot_index);
        let shot = sample_shot(
            &self.modes,
            &self.retrieval,
            &self.geom,
            theta_read,
            &mut rng,
        );
        render_frame(
            &shot,
            &self.stokes_layout,
            anti,
            theta_read,
            &self.camera,
            self.retrieval.noise_floor,
            shot_index,
            &mut rng,
        )
    }

    /// Frame `shot_index` of the run with `seed`, independent of any other shot.
    pub fn frame(
        &self,
        seed: u64,
        shot_index: u64,
        theta_read: Angle2D,
    ) -> Result<Frame, ScatterError> {
        theta_read.validate()?;
        Ok(self.shot_with(
            seed,
            shot_index,
            theta_read,
            &self.anti_stokes_layout(theta_read),
        ))
    }

    /// Generates `n_frames` shots in parallel chunks and hands them to `sink`
    /// in shot order.
    pub fn run<E, F>(
        &self,
        n_frames: usize,
        schedule: &Schedule,
        seed: u64,
        mut sink: F,
    ) -> Result<(), E>
    where
        E: From<ScatterError>,
        F: FnMut(Frame) -> Result<(), E>,
    {
        if n_frames == 0 {
            return Err(ScatterError::InvalidConfig("n_frames must be >= 1".into()).into());
        }
        let mut layouts: HashMap<(u64, u64), PaneLayout> = HashMap::new();
        let mut angles = Vec::with_capacity(n_frames.min(CHUNK));
        for shot in 0..n_frames {
            let a = schedule.angle(shot).ok_or_else(|| {
                ScatterError::InvalidConfig(format!(
                    "schedule has no readout angle for shot {shot}"
                ))
            })?;
            a.validate().map_err(ScatterError::from)?;
            layouts
                .entry(angle_key(a))
                .or_insert_with(|| self.anti_stokes_layout(a));
        }
        let mut start = 0;
        while start < n_frames {
            let end = (start + CHUNK).min(n_frames);
            angles.clear();
            angles.extend((start..end).map(|s| schedule.angle(s).unwrap()));
            let frames: Vec<Frame> = (start..end)
                .into_par_iter()
                .zip(angles.par_iter())
                .map(|(shot, &a)| self.shot_with(seed, shot as u64, a, &layouts[&angle_key(a)]))
                .collect();
            for f in frames {
                sink(f)?;
            }
            start = end;
        }
        Ok(())
    }
}

/// Fixed-size header shared by in-memory stacks and stack files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StackHeader {
    pub width: u32,
    pub height: u32,
    pub count: u32,
    pub pixel_pitch: f64,
    pub f3: f64,
    pub seed: u64,
    pub config_checksum: u64,
}

impl StackHeader {
    pub fn for_camera(camera: &Camera, count: usize, seed: u64, config_checksum: u64) -> Self {
        Self {
            width: camera.width as u32,
            height: camera.height as u32,
            count: count as u32,
            pixel_pitch: camera.pixel_pitch,
            f3: camera.f3,
            seed,
            config_checksum,
        }
    }

    pub fn camera(&self) -> Camera {
        Camera {
            width: self.width as usize,
            height: self.height as usize,
            pixel_pitch: self.pixel_pitch,
            f3: self.f3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    pub header: StackHeader,
    pub frames: Vec<Frame>,
}

impl FrameStack {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Simulates a whole stack in memory. Same inputs give a bit-identical stack.
pub fn simulate_stack(
    sim: &Simulator,
    n_frames: usize,
    schedule: &Schedule,
    seed: u64,
    config_checksum: u64,
) -> Result<FrameStack, ScatterError> {
    let mut frames = Vec::with_capacity(n_frames);
    sim.run::<ScatterError, _>(n_frames, schedule, seed, |f| {
        frames.push(f);
        Ok(())
    })?;
    Ok(FrameStack {
        header: StackHeader::for_camera(&sim.camera, n_frames, seed, config_checksum),
        frames,
    })
}
