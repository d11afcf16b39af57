//! Pinhole camera without lens distortion.

use std::fmt::Write as _;

use crate::error::{Result, VtmError};
use crate::kinematics::{Rotation, Vec3};

/// Minimum depth accepted by [`project`].
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub name: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World to camera.
    pub rotation: Rotation,
    /// World to camera, meters.
    pub translation: Vec3,
}

impl Camera {
    pub fn new(
        name: impl Into<String>,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Rotation,
        translation: Vec3,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(VtmError::Format(format!(
                "focal lengths must be positive (fx = {fx}, fy = {fy})"
            )));
        }
        Ok(Camera {
            name: name.into(),
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Camera::new(
            "identity",
            1.0,
            1.0,
            0.0,
            0.0,
            Rotation::identity(),
            Vec3::zeros(),
        )
        .expect("valid")
    }

    /// A 1920x1080 view looking down the world -Z axis from `distance`
    /// meters, lens at `height` meters, image Y pointing down.
    pub fn looking_at_origin(name: &str, distance: f64, height: f64) -> Self {
        let flip = Rotation::from_wxyz(0.0, 1.0, 0.0, 0.0).expect("valid");
        let center = Vec3::new(0.0, height, distance);
        let translation = -flip.rotate(&center);
        Camera::new(name, 1000.0, 1000.0, 960.0, 540.0, flip, translation).expect("valid")
    }

    pub fn point_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn point_to_world(&self, p: &Vec3) -> Vec3 {
        self.rotation.inverse().rotate(&(p - self.translation))
    }

    /// Normalizes pixel coordinates to roughly [-1, 1] using the principal
    /// point as the image half-extent.
    pub fn normalize_pixel(&self, uv: [f64; 2]) -> [f64; 2] {
        [
            (uv[0] - self.cx) / self.cx.abs().max(1.0),
            (uv[1] - self.cy) / self.cy.abs().max(1.0),
        ]
    }

    pub fn pixel_scale(&self) -> [f64; 2] {
        [self.cx.abs().max(1.0), self.cy.abs().max(1.0)]
    }

    /// Key-value text form: `name`, `fx`, `fy`, `cx`, `cy`,
    /// `rotation` (w x y z) and `translation` (x y z).
    pub fn to_text(&self) -> String {
        let q = self.rotation.wxyz();
        let t = self.translation;
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "fx = {}", self.fx);
        let _ = writeln!(s, "fy = {}", self.fy);
        let _ = writeln!(s, "cx = {}", self.cx);
        let _ = writeln!(s, "cy = {}", self.cy);
        let _ = writeln!(s, "rotation = {} {} {} {}", q[0], q[1], q[2], q[3]);
        let _ = writeln!(s, "translation = {} {} {}", t.x, t.y, t.z);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut name = None;
        let mut scalars = [None; 4];
        let mut rotation = None;
        let mut translation = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |m: String| VtmError::Syntax {
                line: i + 1,
                message: m,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax("expected key = value".into()))?;
            let key = key.trim();
            let value = value.trim();
            let numbers = || -> Result<Vec<f64>> {
                value
                    .split_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|_| syntax(format!("bad number '{v}'"))))
                    .collect()
            };
            let single = || -> Result<f64> {
                let v = numbers()?;
                if v.len() == 1 {
                    Ok(v[0])
                } else {
                    Err(syntax(format!("{key} takes one value")))
                }
            };
            match key {
                "name" => name = Some(value.to_string()),
                "fx" => scalars[0] = Some(single()?),
                "fy" => scalars[1] = Some(single()?),
                "cx" => scalars[2] = Some(single()?),
                "cy" => scalars[3] = Some(single()?),
                "rotation" => {
                    let v = numbers()?;
                    if v.len() != 4 {
                        return Err(syntax("rotation takes w x y z".into()));
                    }
                    rotation = Some(Rotation::from_wxyz(v[0], v[1], v[2], v[3])?);
                }
                "translation" => {
                    let v = numbers()?;
                    if v.len() != 3 {
                        return Err(syntax("translation takes x y z".into()));
                    }
                    translation = Some(Vec3::new(v[0], v[1], v[2]));
                }
                other => return Err(syntax(format!("unknown key '{other}'"))),
            }
        }
        let missing = |k: &str| VtmError::Format(format!("camera file is missing '{k}'"));
        Camera::new(
            name.ok_or_else(|| missing("name"))?,
            scalars[0].ok_or_else(|| missing("fx"))?,
            scalars[1].ok_or_else(|| missing("fy"))?,
            scalars[2].ok_or_else(|| missing("cx"))?,
            scalars[3].ok_or_else(|| missing("cy"))?,
            rotation.ok_or_else(|| missing("rotation"))?,
            translation.ok_or_else(|| missing("translation"))?,
        )
    }
}

pub fn to_camera_space(points: &[Vec3], cam: &Camera) -> Vec<Vec3> {
    points.iter().map(|p| cam.point_to_camera(p)).collect()
}

pub fn project_point(p: &Vec3, cam: &Camera) -> Result<[f64; 2]> {
    if !(p.z > MIN_DEPTH) {
        return Err(VtmError::BehindCamera { index: 0, z: p.z });
    }
    Ok([cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy])
}

pub fn project(points: &[Vec3], cam: &Camera) -> Result<Vec<[f64; 2]>> {
    points
        .iter()
        .enumerate()
        .map(|(index, p)| project_point(p, cam).map_err(|_| VtmError::BehindCamera { index, z: p.z }))
        .collect()
}

/// Back-projects a pixel at a known camera-space depth.
pub fn recover_root_translation(root_uv: [f64; 2], root_z: f64, cam: &Camera) -> Result<Vec3> {
    if !(root_z > 0.0) {
        return Err(VtmError::NonPositiveDepth(root_z));
    }
    Ok(Vec3::new(
        (root_uv[0] - cam.cx) * root_z / cam.fx,
        (root_uv[1] - cam.cy) * root_z / cam.fy,
        root_z,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_camera() -> Camera {
        Camera::new(
            "c",
            1000.0,
            1000.0,
            500.0,
            500.0,
            Rotation::identity(),
            Vec3::zeros(),
        )
        .unwrap()
    }

    #[test]
    fn identity_and_translation() {
        let pts = vec![Vec3::new(1.0, 2.0, 3.0), Vec3::zeros()];
        assert_eq!(to_camera_space(&pts, &Camera::identity()), pts);
        let mut cam = Camera::identity();
        cam.translation = Vec3::new(0.0, 0.0, 5.0);
        assert_eq!(cam.point_to_camera(&Vec3::zeros()), Vec3::new(0.0, 0.0, 5.0));
    }

    #[test]
    fn closed_form_projection() {
        let cam = test_camera();
        let uv = project(&[Vec3::new(0.1, 0.2, 2.0)], &cam).unwrap();
        assert!((uv[0][0] - 550.0).abs() < 1e-12);
        assert!((uv[0][1] - 600.0).abs() < 1e-12);
        let principal = project_point(&Vec3::new(0.0, 0.0, 7.0), &cam).unwrap();
        assert_eq!(principal, [500.0, 500.0]);
    }

    #[test]
    fn behind_camera() {
        let cam = test_camera();
        let err = project(&[Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, -1.0)], &cam);
        assert!(matches!(err, Err(VtmError::BehindCamera { index: 1, .. })));
        assert!(project(&[Vec3::new(0.0, 0.0, 1e-7)], &cam).is_err());
    }

    #[test]
    fn recovery() {
        let cam = test_camera();
        assert_eq!(
            recover_root_translation([500.0, 500.0], 3.0, &cam).unwrap(),
            Vec3::new(0.0, 0.0, 3.0)
        );
        assert!(matches!(
            recover_root_translation([1.0, 1.0], 0.0, &cam),
            Err(VtmError::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn text_round_trip() {
        let cam = Camera::looking_at_origin("cam1", 5.0, 1.0);
        let parsed = Camera::from_text(&cam.to_text()).unwrap();
        assert_eq!(parsed, cam);
        assert!(Camera::from_text("name = x\nfx = 1").is_err());
        assert!(
            Camera::from_text("fx = -1\nfy=1\ncx=0\ncy=0\nname=a\nrotation=1 0 0 0\ntranslation=0 0 0")
                .is_err()
        );
    }

    #[test]
    fn default_view_sees_a_standing_figure() {
        let cam = Camera::looking_at_origin("cam1", 5.0, 1.0);
        let pelvis = cam.point_to_camera(&Vec3::new(0.0, 0.9, 0.0));
        assert!((pelvis.z - 5.0).abs() < 1e-12);
        // Image Y points down, the pelvis is below the lens.
        assert!(pelvis.y > 0.0);
        let back = cam.point_to_world(&pelvis);
        assert!((back - Vec3::new(0.0, 0.9, 0.0)).norm() < 1e-12);
    }
}
