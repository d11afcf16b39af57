//! BVH motion-capture reading and writing.
//!
//! Documents hold offsets and root positions in meters and rotations in
//! degrees. File offsets and position channels are scaled on the way in and
//! out (centimeters by default).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, VtmError};
use crate::kinematics::{Axis, Pose, Rotation, Vec3};
use crate::skeleton::{layout, Skeleton};

/// Meters per file unit for OFFSET and position channels.
pub const DEFAULT_UNIT_SCALE: f64 = 0.01;
pub const MAX_FILE_BYTES: u64 = 512 * 1024 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channel {
    Xposition,
    Yposition,
    Zposition,
    Xrotation,
    Yrotation,
    Zrotation,
}

impl Channel {
    fn parse(token: &str) -> Option<Channel> {
        Some(match token {
            "Xposition" => Channel::Xposition,
            "Yposition" => Channel::Yposition,
            "Zposition" => Channel::Zposition,
            "Xrotation" => Channel::Xrotation,
            "Yrotation" => Channel::Yrotation,
            "Zrotation" => Channel::Zrotation,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Channel::Xposition => "Xposition",
            Channel::Yposition => "Yposition",
            Channel::Zposition => "Zposition",
            Channel::Xrotation => "Xrotation",
            Channel::Yrotation => "Yrotation",
            Channel::Zrotation => "Zrotation",
        }
    }

    pub fn is_position(&self) -> bool {
        matches!(self, Channel::Xposition | Channel::Yposition | Channel::Zposition)
    }

    pub fn axis(&self) -> Axis {
        match self {
            Channel::Xposition | Channel::Xrotation => Axis::X,
            Channel::Yposition | Channel::Yrotation => Axis::Y,
            Channel::Zposition | Channel::Zrotation => Axis::Z,
        }
    }
}

pub const ROOT_CHANNELS: [Channel; 6] = [
    Channel::Xposition,
    Channel::Yposition,
    Channel::Zposition,
    Channel::Zrotation,
    Channel::Xrotation,
    Channel::Yrotation,
];
pub const JOINT_CHANNELS: [Channel; 3] = [Channel::Zrotation, Channel::Xrotation, Channel::Yrotation];

#[derive(Clone, Debug, PartialEq)]
pub struct BvhJoint {
    pub name: String,
    pub parent: Option<usize>,
    /// Meters.
    pub offset: Vec3,
    pub channels: Vec<Channel>,
    pub is_end_site: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BvhDocument {
    joints: Vec<BvhJoint>,
    frame_time: f64,
    num_channels: usize,
    frames: Vec<f64>,
}

impl BvhDocument {
    /// `frames` is row-major, one row of channel values per frame, with
    /// positions in meters and rotations in degrees. Joints must be listed in
    /// depth-first hierarchy order.
    pub fn new(joints: Vec<BvhJoint>, frame_time: f64, frames: Vec<f64>) -> Result<Self> {
        validate_joints(&joints)?;
        if !(frame_time > 0.0) || !frame_time.is_finite() {
            return Err(VtmError::Format(format!(
                "frame time must be positive, got {frame_time}"
            )));
        }
        let num_channels: usize = joints.iter().map(|j| j.channels.len()).sum();
        if frames.is_empty() || !frames.len().is_multiple_of(num_channels) {
            return Err(VtmError::Mismatch(format!(
                "{} values do not form whole rows of {} channels",
                frames.len(),
                num_channels
            )));
        }
        Ok(BvhDocument {
            joints,
            frame_time,
            num_channels,
            frames,
        })
    }

    pub fn joints(&self) -> &[BvhJoint] {
        &self.joints
    }

    pub fn frame_time(&self) -> f64 {
        self.frame_time
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len() / self.num_channels
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t * self.num_channels..(t + 1) * self.num_channels]
    }

    pub fn frames(&self) -> &[f64] {
        &self.frames
    }

    /// Column offset of each joint's first channel.
    pub fn channel_starts(&self) -> Vec<usize> {
        let mut starts = Vec::with_capacity(self.joints.len());
        let mut acc = 0;
        for j in &self.joints {
            starts.push(acc);
            acc += j.channels.len();
        }
        starts
    }

    /// Structural equality with channel values, offsets and frame time
    /// compared within `tol`.
    pub fn approx_eq(&self, other: &BvhDocument, tol: f64) -> bool {
        self.joints.len() == other.joints.len()
            && self.joints.iter().zip(&other.joints).all(|(a, b)| {
                a.name == b.name
                    && a.parent == b.parent
                    && a.channels == b.channels
                    && a.is_end_site == b.is_end_site
                    && (a.offset - b.offset).amax() <= tol
            })
            && (self.frame_time - other.frame_time).abs() <= tol
            && self.frames.len() == other.frames.len()
            && self
                .frames
                .iter()
                .zip(&other.frames)
                .all(|(a, b)| (a - b).abs() <= tol)
    }
}

fn validate_joints(joints: &[BvhJoint]) -> Result<()> {
    let bad = |m: String| Err(VtmError::Format(m));
    if joints.is_empty() {
        return bad("document has no joints".into());
    }
    let root = &joints[0];
    if root.parent.is_some() || root.is_end_site {
        return bad("first joint must be the root".into());
    }
    if root.channels.len() != 6 || root.channels.iter().filter(|c| c.is_position()).count() != 3 {
        return bad("root must have three position and three rotation channels".into());
    }
    // Depth-first order: each parent is on the stack of open ancestors.
    let mut stack: Vec<usize> = vec![0];
    for (i, j) in joints.iter().enumerate().skip(1) {
        let Some(p) = j.parent else {
            return bad(format!("joint {i} ('{}') has no parent", j.name));
        };
        while let Some(&top) = stack.last() {
            if top == p {
                break;
            }
            stack.pop();
        }
        if stack.is_empty() {
            return bad(format!("joint {i} ('{}') is not in depth-first order", j.name));
        }
        if joints[p].is_end_site {
            return bad(format!("joint {i} is attached to an end site"));
        }
        if j.is_end_site {
            if !j.channels.is_empty() {
                return bad(format!("end site {i} has channels"));
            }
        } else if j.channels.len() != 3 || j.channels.iter().any(|c| c.is_position()) {
            return bad(format!(
                "joint '{}' must have exactly three rotation channels",
                j.name
            ));
        }
        stack.push(i);
    }
    Ok(())
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        let tok = self.items.get(self.pos).copied().ok_or(VtmError::Syntax {
            line: self.last_line,
            message: "unexpected end of file".into(),
        })?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, want: &str) -> Result<usize> {
        let (line, tok) = self.next()?;
        if tok != want {
            return Err(VtmError::Syntax {
                line,
                message: format!("expected '{want}', found '{tok}'"),
            });
        }
        Ok(line)
    }

    fn number(&mut self) -> Result<f64> {
        let (line, tok) = self.next()?;
        parse_number(tok, line)
    }
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| VtmError::Syntax {
            line,
            message: format!("expected a number, found '{tok}'"),
        })
}

pub fn parse_bvh(text: &str) -> Result<BvhDocument> {
    parse_bvh_with_scale(text, DEFAULT_UNIT_SCALE)
}

/// Parses with `unit_scale` meters per file unit.
pub fn parse_bvh_with_scale(text: &str, unit_scale: f64) -> Result<BvhDocument> {
    if text.len() as u64 > MAX_FILE_BYTES {
        return Err(VtmError::Format("BVH input exceeds 512 MB".into()));
    }
    let lines: Vec<&str> = text.lines().collect();
    // Locate the MOTION keyword to split the hierarchy from the data rows.
    let motion_line = lines
        .iter()
        .position(|l| l.trim().eq_ignore_ascii_case("MOTION"))
        .ok_or(VtmError::Syntax {
            line: lines.len().max(1),
            message: "missing MOTION section".into(),
        })?;

    let mut toks = Tokens {
        items: lines[..motion_line]
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)))
            .collect(),
        pos: 0,
        last_line: motion_line,
    };
    toks.expect("HIERARCHY")?;
    toks.expect("ROOT")?;
    let mut joints = Vec::new();
    parse_joint(&mut toks, &mut joints, None, false, unit_scale)?;
    if let Some(&(line, tok)) = toks.items.get(toks.pos) {
        return Err(VtmError::Syntax {
            line,
            message: format!("unexpected '{tok}' after the hierarchy"),
        });
    }

    // MOTION header: "Frames: n" and "Frame Time: t".
    let mut rest = lines[motion_line + 1..]
        .iter()
        .enumerate()
        .map(|(i, l)| (motion_line + 2 + i, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (line, frames_line) = rest.next().ok_or(VtmError::Syntax {
        line: motion_line + 1,
        message: "missing 'Frames:'".into(),
    })?;
    let declared = frames_line
        .strip_prefix("Frames:")
        .and_then(|v| v.trim().parse::<usize>().ok())
        .ok_or_else(|| VtmError::Syntax {
            line,
            message: "expected 'Frames: <count>'".into(),
        })?;
    let (line, time_line) = rest.next().ok_or(VtmError::Syntax {
        line: line + 1,
        message: "missing 'Frame Time:'".into(),
    })?;
    let frame_time = time_line
        .strip_prefix("Frame Time:")
        .ok_or_else(|| VtmError::Syntax {
            line,
            message: "expected 'Frame Time: <seconds>'".into(),
        })
        .and_then(|v| parse_number(v.trim(), line))?;

    let channel_count: usize = joints.iter().map(|j: &BvhJoint| j.channels.len()).sum();
    let position_columns: Vec<bool> = joints
        .iter()
        .flat_map(|j| j.channels.iter().map(|c| c.is_position()))
        .collect();
    let mut frames = Vec::with_capacity(declared * channel_count);
    let mut rows = 0;
    for (line, row) in rest {
        let start = frames.len();
        for tok in row.split_whitespace() {
            frames.push(parse_number(tok, line)?);
        }
        let got = frames.len() - start;
        if got != channel_count {
            return Err(VtmError::Mismatch(format!(
                "line {line}: frame row has {got} values, hierarchy declares {channel_count} channels"
            )));
        }
        for (v, is_pos) in frames[start..].iter_mut().zip(&position_columns) {
            if *is_pos {
                *v *= unit_scale;
            }
        }
        rows += 1;
    }
    if rows != declared {
        return Err(VtmError::Mismatch(format!(
            "'Frames: {declared}' but {rows} data rows"
        )));
    }
    if declared == 0 {
        return Err(VtmError::Mismatch("document has no frames".into()));
    }
    BvhDocument::new(joints, frame_time, frames)
}

fn parse_joint(
    toks: &mut Tokens,
    joints: &mut Vec<BvhJoint>,
    parent: Option<usize>,
    is_end_site: bool,
    unit_scale: f64,
) -> Result<()> {
    let name = if is_end_site {
        toks.expect("Site")?;
        "End Site".to_string()
    } else {
        toks.next()?.1.to_string()
    };
    toks.expect("{")?;
    let offset_line = toks.expect("OFFSET")?;
    let offset = Vec3::new(toks.number()?, toks.number()?, toks.number()?) * unit_scale;
    let index = joints.len();
    joints.push(BvhJoint {
        name,
        parent,
        offset,
        channels: Vec::new(),
        is_end_site,
    });
    let _ = offset_line;
    loop {
        let (line, tok) = toks.next()?;
        match tok {
            "CHANNELS" if !is_end_site => {
                let (nline, ntok) = toks.next()?;
                let n: usize = ntok.parse().map_err(|_| VtmError::Syntax {
                    line: nline,
                    message: format!("bad channel count '{ntok}'"),
                })?;
                for _ in 0..n {
                    let (cline, ctok) = toks.next()?;
                    let c = Channel::parse(ctok).ok_or_else(|| VtmError::Syntax {
                        line: cline,
                        message: format!("unknown channel '{ctok}'"),
                    })?;
                    joints[index].channels.push(c);
                }
            }
            "JOINT" if !is_end_site => parse_joint(toks, joints, Some(index), false, unit_scale)?,
            "End" if !is_end_site => parse_joint(toks, joints, Some(index), true, unit_scale)?,
            "}" => return Ok(()),
            other => {
                return Err(VtmError::Syntax {
                    line,
                    message: format!("unexpected '{other}'"),
                })
            }
        }
    }
}

pub fn load_bvh(path: &Path, unit_scale: f64) -> Result<BvhDocument> {
    let len = std::fs::metadata(path)
        .map_err(|e| VtmError::io_at(path, e))?
        .len();
    if len > MAX_FILE_BYTES {
        return Err(VtmError::Format(format!("{} exceeds 512 MB", path.display())));
    }
    let text = std::fs::read_to_string(path).map_err(|e| VtmError::io_at(path, e))?;
    parse_bvh_with_scale(&text, unit_scale)
}

pub fn write_bvh(doc: &BvhDocument) -> String {
    write_bvh_with_scale(doc, DEFAULT_UNIT_SCALE)
}

/// Canonical formatting: two-space indentation, six decimal places.
pub fn write_bvh_with_scale(doc: &BvhDocument, unit_scale: f64) -> String {
    let mut out = String::from("HIERARCHY\n");
    write_joint(doc, 0, 0, unit_scale, &mut out);
    let _ = writeln!(out, "MOTION");
    let _ = writeln!(out, "Frames: {}", doc.num_frames());
    let _ = writeln!(out, "Frame Time: {:.6}", doc.frame_time);
    let position_columns: Vec<bool> = doc
        .joints
        .iter()
        .flat_map(|j| j.channels.iter().map(|c| c.is_position()))
        .collect();
    for t in 0..doc.num_frames() {
        let row = doc.frame(t);
        for (k, (v, is_pos)) in row.iter().zip(&position_columns).enumerate() {
            if k > 0 {
                out.push(' ');
            }
            let v = if *is_pos { v / unit_scale } else { *v };
            let _ = write!(out, "{}", fmt6(v));
        }
        out.push('\n');
    }
    out
}

fn fmt6(v: f64) -> String {
    let s = format!("{v:.6}");
    // Avoid "-0.000000" so equal values always print identically.
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn write_joint(doc: &BvhDocument, index: usize, depth: usize, unit_scale: f64, out: &mut String) {
    let pad = "  ".repeat(depth);
    let j = &doc.joints[index];
    if j.is_end_site {
        let _ = writeln!(out, "{pad}End Site");
    } else if j.parent.is_none() {
        let _ = writeln!(out, "{pad}ROOT {}", j.name);
    } else {
        let _ = writeln!(out, "{pad}JOINT {}", j.name);
    }
    let _ = writeln!(out, "{pad}{{");
    let o = j.offset / unit_scale;
    let _ = writeln!(out, "{pad}  OFFSET {} {} {}", fmt6(o.x), fmt6(o.y), fmt6(o.z));
    if !j.is_end_site {
        let names: Vec<&str> = j.channels.iter().map(|c| c.name()).collect();
        let _ = writeln!(out, "{pad}  CHANNELS {} {}", names.len(), names.join(" "));
    }
    for (child, cj) in doc.joints.iter().enumerate() {
        if cj.parent == Some(index) {
            write_joint(doc, child, depth + 1, unit_scale, out);
        }
    }
    let _ = writeln!(out, "{pad}}}");
}

/// Converts a document on the canonical joint set into a skeleton and
/// per-frame poses. End sites are ignored; joints may appear in any
/// depth-first order as long as names and parents match the canonical layout.
pub fn to_motion(doc: &BvhDocument) -> Result<(Skeleton, Vec<Pose>)> {
    let mut by_name: HashMap<&str, usize> = HashMap::new();
    for (i, j) in doc.joints.iter().enumerate() {
        if !j.is_end_site {
            by_name.insert(j.name.as_str(), i);
        }
    }
    let non_end = doc.joints.iter().filter(|j| !j.is_end_site).count();
    if non_end != layout::NUM_JOINTS {
        return Err(VtmError::TopologyMismatch(format!(
            "expected {} joints, found {non_end}",
            layout::NUM_JOINTS
        )));
    }
    let mut doc_index = [0usize; layout::NUM_JOINTS];
    for (c, name) in layout::JOINT_NAMES.iter().enumerate() {
        let i = *by_name
            .get(name)
            .ok_or_else(|| VtmError::TopologyMismatch(format!("missing joint '{name}'")))?;
        doc_index[c] = i;
    }
    for c in 0..layout::NUM_JOINTS {
        let doc_parent = doc.joints[doc_index[c]].parent;
        let want = layout::PARENTS[c].map(|p| doc_index[p]);
        if doc_parent != want {
            return Err(VtmError::TopologyMismatch(format!(
                "joint '{}' has an unexpected parent",
                layout::JOINT_NAMES[c]
            )));
        }
    }
    let skeleton = Skeleton::canonical(doc_index.iter().map(|&i| doc.joints[i].offset).collect())?;
    let starts = doc.channel_starts();
    let poses = (0..doc.num_frames())
        .map(|t| {
            let row = doc.frame(t);
            let mut pose = Pose::rest(layout::NUM_JOINTS);
            for c in 0..layout::NUM_JOINTS {
                let j = &doc.joints[doc_index[c]];
                let vals = &row[starts[doc_index[c]]..starts[doc_index[c]] + j.channels.len()];
                let mut axes = Vec::with_capacity(3);
                let mut angles = Vec::with_capacity(3);
                for (ch, v) in j.channels.iter().zip(vals) {
                    if ch.is_position() {
                        match ch.axis() {
                            Axis::X => pose.root.x = *v,
                            Axis::Y => pose.root.y = *v,
                            Axis::Z => pose.root.z = *v,
                        }
                    } else {
                        axes.push(ch.axis());
                        angles.push(*v);
                    }
                }
                pose.rotations[c] = Rotation::from_euler_degrees(&axes, &angles);
            }
            pose
        })
        .collect();
    Ok((skeleton, poses))
}

/// Builds a document in canonical channel order (Z, X, Y rotations) from
/// canonical-layout motion. Leaf joints receive a short end site.
pub fn from_motion(skeleton: &Skeleton, poses: &[Pose], frame_time: f64) -> Result<BvhDocument> {
    if !skeleton.is_canonical() {
        return Err(VtmError::TopologyMismatch(
            "skeleton is not on the canonical layout".into(),
        ));
    }
    if poses.is_empty() {
        return Err(VtmError::Mismatch("no frames".into()));
    }
    let n = skeleton.num_joints();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 1..n {
        children[skeleton.parents()[j].expect("non-root")].push(j);
    }
    // Depth-first emission order; `None` marks an end site under the given joint.
    let mut order: Vec<(usize, bool)> = Vec::new();
    fn visit(j: usize, children: &[Vec<usize>], order: &mut Vec<(usize, bool)>) {
        order.push((j, false));
        if children[j].is_empty() {
            order.push((j, true));
        }
        for &c in &children[j] {
            visit(c, children, order);
        }
    }
    visit(0, &children, &mut order);

    let mut joints = Vec::with_capacity(order.len());
    let mut doc_of: Vec<usize> = vec![0; n];
    for &(j, end) in &order {
        if end {
            let own = skeleton.offsets()[j];
            let dir = if own.norm() > 0.0 {
                own.normalize()
            } else {
                Vec3::y()
            };
            joints.push(BvhJoint {
                name: "End Site".into(),
                parent: Some(doc_of[j]),
                offset: dir * 0.05,
                channels: Vec::new(),
                is_end_site: true,
            });
        } else {
            doc_of[j] = joints.len();
            joints.push(BvhJoint {
                name: skeleton.joint_names()[j].clone(),
                parent: skeleton.parents()[j].map(|p| doc_of[p]),
                offset: skeleton.offsets()[j],
                channels: if j == 0 {
                    ROOT_CHANNELS.to_vec()
                } else {
                    JOINT_CHANNELS.to_vec()
                },
                is_end_site: false,
            });
        }
    }
    let mut frames = Vec::with_capacity(poses.len() * (n * 3 + 3));
    for pose in poses {
        for &(j, end) in &order {
            if end {
                continue;
            }
            if j == 0 {
                frames.extend([pose.root.x, pose.root.y, pose.root.z]);
            }
            frames.extend(pose.rotations[j].to_euler_zxy_degrees());
        }
    }
    BvhDocument::new(joints, frame_time, frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "HIERARCHY
ROOT Hips
{
  OFFSET 0 0 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
}
MOTION
Frames: 1
Frame Time: 0.033333
1 2 3 10 20 30
";

    #[test]
    fn minimal_document() {
        let doc = parse_bvh(MINIMAL).unwrap();
        assert_eq!(doc.joints().len(), 1);
        assert_eq!(doc.num_channels(), 6);
        assert_eq!(doc.num_frames(), 1);
        assert!((doc.frame_time() - 0.033333).abs() < 1e-12);
        // Positions are converted from centimeters.
        assert!((doc.frame(0)[0] - 0.01).abs() < 1e-15);
        assert_eq!(doc.frame(0)[5], 30.0);
    }

    #[test]
    fn crlf_is_accepted() {
        let doc = parse_bvh(&MINIMAL.replace('\n', "\r\n")).unwrap();
        assert_eq!(doc, parse_bvh(MINIMAL).unwrap());
    }

    #[test]
    fn declared_frames_must_match_rows() {
        let text = MINIMAL.replace("Frames: 1", "Frames: 2");
        assert!(matches!(parse_bvh(&text), Err(VtmError::Mismatch(_))));
    }

    #[test]
    fn short_row_is_a_mismatch() {
        let text = MINIMAL.replace("1 2 3 10 20 30", "1 2 3 10 20");
        assert!(matches!(parse_bvh(&text), Err(VtmError::Mismatch(_))));
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let text = MINIMAL.replace("OFFSET 0 0 0", "OFFSET 0 zero 0");
        match parse_bvh(&text) {
            Err(VtmError::Syntax { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("Yrotation\n", "Wrotation\n");
        assert!(matches!(parse_bvh(&text), Err(VtmError::Syntax { line: 5, .. })));
        assert!(matches!(
            parse_bvh("HIERARCHY\nROOT a\n{"),
            Err(VtmError::Syntax { .. })
        ));
    }

    #[test]
    fn single_motion_section_and_determinism() {
        let doc = parse_bvh(MINIMAL).unwrap();
        let a = write_bvh(&doc);
        assert_eq!(a.matches("MOTION").count(), 1);
        assert_eq!(a, write_bvh(&doc));
        assert!(parse_bvh(&a).unwrap().approx_eq(&doc, 1e-9));
    }

    #[test]
    fn declared_rotation_order_is_honoured() {
        let text = MINIMAL.replace("Zrotation Xrotation Yrotation", "Xrotation Yrotation Zrotation");
        let doc = parse_bvh(&text).unwrap();
        assert_eq!(
            doc.joints()[0].channels[3..],
            [Channel::Xrotation, Channel::Yrotation, Channel::Zrotation]
        );
    }

    #[test]
    fn motion_round_trip_through_text() {
        let skel = Skeleton::template();
        let poses: Vec<Pose> = (0..3)
            .map(|t| Pose {
                rotations: (0..24)
                    .map(|j| Rotation::from_scaled_axis(Vec3::new(0.1 * t as f64, 0.02 * j as f64, -0.3)))
                    .collect(),
                root: Vec3::new(0.1, 0.9, t as f64 * 0.05),
            })
            .collect();
        let doc = from_motion(&skel, &poses, 1.0 / 30.0).unwrap();
        let parsed = parse_bvh(&write_bvh(&doc)).unwrap();
        let (s2, p2) = to_motion(&parsed).unwrap();
        for (a, b) in s2.offsets().iter().zip(skel.offsets()) {
            assert!((a - b).norm() < 1e-7);
        }
        for (a, b) in p2.iter().zip(&poses) {
            assert!((a.root - b.root).norm() < 1e-7);
            for (ra, rb) in a.rotations.iter().zip(&b.rotations) {
                assert!(ra.angle_to(rb) < 1e-7);
            }
        }
    }

    #[test]
    fn non_canonical_hierarchy_is_rejected() {
        let doc = parse_bvh(MINIMAL).unwrap();
        assert!(matches!(to_motion(&doc), Err(VtmError::TopologyMismatch(_))));
    }
}
