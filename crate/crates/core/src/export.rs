//! Wavefront OBJ and SVG stick-figure writers for joint positions.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::geometry::{JointPositions, Skeleton};

fn check(joints: &JointPositions, skel: &Skeleton) -> Result<()> {
    if joints.len() != skel.len() {
        return Err(Error::InvalidArgument(format!(
            "{} joints for a {}-joint skeleton",
            joints.len(),
            skel.len()
        )));
    }
    Ok(())
}

/// One vertex per joint and one line element per bone (1-based indices).
pub fn to_obj(joints: &JointPositions, skel: &Skeleton) -> Result<String> {
    check(joints, skel)?;
    let mut s = String::new();
    for (j, p) in joints.positions.iter().enumerate() {
        writeln!(s, "# {}", skel.name(j)).unwrap();
        writeln!(s, "v {} {} {}", p.x, p.y, p.z).unwrap();
    }
    for (a, b) in skel.bones() {
        writeln!(s, "l {} {}", a + 1, b + 1).unwrap();
    }
    Ok(s)
}

/// Orthographic x-y projection, y up, scaled to fit a `size`-pixel square.
pub fn to_svg(joints: &JointPositions, skel: &Skeleton, size: f64) -> Result<String> {
    check(joints, skel)?;
    if !joints
        .positions
        .iter()
        .all(|p| p.x.is_finite() && p.y.is_finite())
    {
        return Err(Error::InvalidArgument(
            "cannot draw non-finite joints".into(),
        ));
    }
    let xs = joints.positions.iter().map(|p| p.x);
    let ys = joints.positions.iter().map(|p| p.y);
    let (x0, x1) = xs.fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(v), b.max(v)));
    let (y0, y1) = ys.fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(v), b.max(v)));
    let span = (x1 - x0).max(y1 - y0).max(1e-6);
    let margin = 0.1 * size;
    let k = (size - 2.0 * margin) / span;
    let cx = (x0 + x1) / 2.0;
    let cy = (y0 + y1) / 2.0;
    let px = |x: f64| size / 2.0 + (x - cx) * k;
    let py = |y: f64| size / 2.0 - (y - cy) * k;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    for (a, b) in skel.bones() {
        let (p, q) = (joints[a], joints[b]);
        writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="3" stroke-linecap="round"/>"#,
            px(p.x),
            py(p.y),
            px(q.x),
            py(q.y)
        )
        .unwrap();
    }
    for p in &joints.positions {
        writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="crimson"/>"#,
            px(p.x),
            py(p.y)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}
