//! JSON pose documents written by `init-pnp` and `refine-mi`.
//!
//! Angles are in radians. `translation` maps world points into the camera
//! frame; `center` is the camera position in the world.

use std::path::Path;

use infraloc_core::{CameraPose, MiEvaluation, Theta, Vec3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats;
use crate::manifest::Manifest;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseDocument {
    pub quaternion_wxyz: [f64; 4],
    pub euler_rpy: [f64; 3],
    pub translation: [f64; 3],
    pub center: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inliers: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    /// Overlay points projected inside the image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_points: Option<usize>,
    /// Distinct overlay pixels drawn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlay_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mi: Option<MiDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<Manifest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiDocument {
    /// `[x, y, z, psi]`: camera center and yaw.
    pub theta: [f64; 4],
    pub n_points: usize,
    #[serde(rename = "H_X")]
    pub h_x: f64,
    #[serde(rename = "H_Y")]
    pub h_y: f64,
    #[serde(rename = "H_XY")]
    pub h_xy: f64,
    #[serde(rename = "MI")]
    pub mi: f64,
    #[serde(rename = "initial_MI")]
    pub initial_mi: f64,
    pub initial_theta: [f64; 4],
    pub roll_pitch: [f64; 2],
    pub points_used: usize,
    pub evaluations: usize,
}

impl MiDocument {
    pub fn new(
        best: &MiEvaluation,
        initial: &MiEvaluation,
        roll_pitch: [f64; 2],
        points_used: usize,
        evaluations: usize,
    ) -> Self {
        Self {
            theta: best.theta.to_array(),
            n_points: best.n_points,
            h_x: best.h_x,
            h_y: best.h_y,
            h_xy: best.h_xy,
            mi: best.mi,
            initial_mi: initial.mi,
            initial_theta: initial.theta.to_array(),
            roll_pitch,
            points_used,
            evaluations,
        }
    }

    pub fn theta(&self) -> Theta {
        Theta::from_array(self.theta)
    }
}

impl PoseDocument {
    pub fn from_pose(pose: &CameraPose) -> Self {
        let t = pose.translation();
        let c = pose.center();
        Self {
            quaternion_wxyz: pose.quaternion_wxyz(),
            euler_rpy: pose.euler(),
            translation: [t.x, t.y, t.z],
            center: [c.x, c.y, c.z],
            inliers: None,
            mean_error: None,
            iterations: None,
            n_points: None,
            overlay_points: None,
            mi: None,
            manifest: None,
        }
    }

    /// Pose from the quaternion and translation; the other fields are derived.
    pub fn pose(&self) -> Result<CameraPose> {
        let t = self.translation;
        Ok(CameraPose::from_quaternion_wxyz(
            self.quaternion_wxyz,
            Vec3::new(t[0], t[1], t[2]),
        )?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("pose document serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        formats::write_bytes(path, self.to_json().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = formats::read_text(path)?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }
}

/// Pose of a document on disk.
pub fn read_pose(path: &Path) -> Result<CameraPose> {
    PoseDocument::read(path)?
        .pose()
        .map_err(|e| Error::parse(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_survives_json() {
        let pose = CameraPose::from_euler_center(0.01, -0.02, 2.5, Vec3::new(3.0, -4.0, 6.0));
        let doc = PoseDocument::from_pose(&pose);
        let back: PoseDocument = serde_json::from_str(&doc.to_json()).unwrap();
        assert_eq!(back, doc);
        let p = back.pose().unwrap();
        assert!((p.center() - pose.center()).norm() < 1e-12);
        assert!((p.rotation() - pose.rotation()).norm() < 1e-12);
        assert!(!doc.to_json().contains("inliers"));
    }
}
