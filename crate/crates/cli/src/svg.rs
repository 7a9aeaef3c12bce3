//! Deterministic SVG 1.1 rendering of an environment, its goal, and
//! trajectory tables.

use std::fmt::Write;

use klplan::distributions::GoalSpec;
use klplan::envs::Environment;
use klplan::mpc::Problem;
use klplan::trajectory::TrajectoryTable;
use nalgebra::{DVector, Matrix2, SymmetricEigen};

const WIDTH: f64 = 800.0;
const PATH_COLOR: &str = "#1f5fbf";
const COMPONENT_COLOR: &str = "#4c9be8";
const GOAL_COLOR: &str = "#e0a400";

/// World-to-pixel mapping with the y axis pointing up.
struct Frame {
    xmin: f64,
    ymax: f64,
    scale: f64,
    height: f64,
}

impl Frame {
    fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        let scale = WIDTH / (xmax - xmin);
        Self {
            xmin,
            ymax,
            scale,
            height: (ymax - ymin) * scale,
        }
    }

    fn x(&self, x: f64) -> f64 {
        (x - self.xmin) * self.scale
    }

    fn y(&self, y: f64) -> f64 {
        (self.ymax - y) * self.scale
    }
}

fn rect(out: &mut String, f: &Frame, r: [f64; 4], class: &str, style: &str) {
    let _ = writeln!(
        out,
        r#"<rect class="{class}" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" {style}/>"#,
        f.x(r[0]),
        f.y(r[3]),
        (r[2] - r[0]) * f.scale,
        (r[3] - r[1]) * f.scale
    );
}

/// Ellipse of `k` standard deviations of a planar covariance.
fn ellipse(out: &mut String, f: &Frame, center: (f64, f64), cov: Matrix2<f64>, k: f64, class: &str, style: &str) {
    let eig = SymmetricEigen::new(cov);
    let (major, minor) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let axis = eig.eigenvectors.column(major);
    // the y flip mirrors angles
    let angle = -axis[1].atan2(axis[0]).to_degrees();
    let rx = k * eig.eigenvalues[major].max(0.0).sqrt() * f.scale;
    let ry = k * eig.eigenvalues[minor].max(0.0).sqrt() * f.scale;
    let (cx, cy) = (f.x(center.0), f.y(center.1));
    let _ = writeln!(
        out,
        r#"<ellipse class="{class}" cx="{cx:.3}" cy="{cy:.3}" rx="{rx:.3}" ry="{ry:.3}" transform="rotate({:.3} {cx:.3} {cy:.3})" {style}/>"#,
        normalize_degrees(angle)
    );
}

fn normalize_degrees(a: f64) -> f64 {
    // keep the printed angle stable: an ellipse is symmetric under 180°
    let mut a = a % 180.0;
    if a < 0.0 {
        a += 180.0;
    }
    if a >= 179.9995 {
        0.0
    } else {
        a + 0.0
    }
}

fn polyline(out: &mut String, f: &Frame, pts: &[(f64, f64)], class: &str, style: &str) {
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{:.3},{:.3}", f.x(*x), f.y(*y))).collect();
    let _ = writeln!(
        out,
        r#"<polyline class="{class}" points="{}" fill="none" {style}/>"#,
        coords.join(" ")
    );
}

fn planar(cov: &[f64], n: usize) -> Matrix2<f64> {
    Matrix2::new(cov[0], cov[1], cov[n], cov[n + 1])
}

fn goal_layer(out: &mut String, f: &Frame, goal: &GoalSpec) {
    let gaussian = |out: &mut String, mean: &DVector<f64>, cov: &nalgebra::DMatrix<f64>, opacity: f64| {
        let c = Matrix2::new(cov[(0, 0)], cov[(0, 1)], cov[(1, 0)], cov[(1, 1)]);
        let style = format!(r#"fill="{GOAL_COLOR}" fill-opacity="{:.3}" stroke="{GOAL_COLOR}""#, 0.35 * opacity);
        ellipse(out, f, (mean[0], mean[1]), c, 1.0, "goal-1sigma", &style);
        ellipse(out, f, (mean[0], mean[1]), c, 2.0, "goal-2sigma", &style);
    };
    match goal {
        GoalSpec::Gaussian(g) => gaussian(out, g.mean(), g.covariance(), 1.0),
        GoalSpec::Gmm(m) => {
            let wmax = m.weights().iter().copied().fold(0.0, f64::max);
            for (w, c) in m.weights().iter().zip(m.components()) {
                gaussian(out, c.mean(), c.covariance(), w / wmax);
            }
        }
        GoalSpec::Dirac(d) => {
            let p = d.point();
            let _ = writeln!(
                out,
                r#"<circle class="goal-point" cx="{:.3}" cy="{:.3}" r="5" fill="{GOAL_COLOR}"/>"#,
                f.x(p[0]),
                f.y(p[1])
            );
        }
        GoalSpec::Uniform(b) => rect(
            out,
            f,
            [b.lower()[0], b.lower()[1], b.upper()[0], b.upper()[1]],
            "goal-box",
            &format!(r#"fill="{GOAL_COLOR}" fill-opacity="0.3" stroke="{GOAL_COLOR}""#),
        ),
    }
}

fn header(out: &mut String, f: &Frame) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH:.0}" height="{:.0}" viewBox="0 0 {WIDTH:.3} {:.3}">"#,
        f.height.ceil(),
        f.height
    );
}

/// Renders the environment, goal, main path with per-step 1σ/2σ ellipses
/// (every row after the first), and any component paths.
pub fn render(problem: &Problem, main: Option<&TrajectoryTable>, components: &[TrajectoryTable]) -> String {
    let mut out = String::new();
    match &problem.env {
        Environment::Dubins(env) => {
            let w = env.world;
            let f = Frame::new(w.xmin, w.ymin, w.xmax, w.ymax);
            header(&mut out, &f);
            rect(&mut out, &f, w.to_array(), "world", r##"fill="#ffffff" stroke="#000000""##);
            for o in &env.obstacles {
                rect(&mut out, &f, o.to_array(), "obstacle", r##"fill="#6b6b6b""##);
            }
            goal_layer(&mut out, &f, &problem.goal);
            for c in components {
                let pts: Vec<(f64, f64)> = c.rows.iter().map(|r| (r.mean[0], r.mean[1])).collect();
                polyline(&mut out, &f, &pts, "component-path", &format!(r#"stroke="{COMPONENT_COLOR}" stroke-width="2""#));
            }
            if let Some(t) = main.filter(|t| !t.rows.is_empty()) {
                let n = t.state_dim;
                let pts: Vec<(f64, f64)> = t.rows.iter().map(|r| (r.mean[0], r.mean[1])).collect();
                for r in t.rows.iter().skip(1) {
                    let c = planar(&r.covariance, n);
                    let style = format!(r#"fill="none" stroke="{PATH_COLOR}" stroke-opacity="0.6""#);
                    ellipse(&mut out, &f, (r.mean[0], r.mean[1]), c, 1.0, "belief-1sigma", &style);
                    ellipse(&mut out, &f, (r.mean[0], r.mean[1]), c, 2.0, "belief-2sigma", &style);
                }
                polyline(&mut out, &f, &pts, "path", &format!(r#"stroke="{PATH_COLOR}" stroke-width="2.5""#));
                let _ = writeln!(
                    out,
                    r#"<circle class="start" cx="{:.3}" cy="{:.3}" r="4" fill="{PATH_COLOR}"/>"#,
                    f.x(pts[0].0),
                    f.y(pts[0].1)
                );
            }
        }
        Environment::Arm(arm) => {
            // top view of the workspace
            let r = arm.reach() + 0.1;
            let f = Frame::new(-r, -r, r, r);
            header(&mut out, &f);
            rect(&mut out, &f, [-r, -r, r, r], "world", r##"fill="#ffffff" stroke="#000000""##);
            for s in &arm.obstacles {
                let _ = writeln!(
                    out,
                    r##"<circle class="obstacle" cx="{:.3}" cy="{:.3}" r="{:.3}" fill="#6b6b6b" fill-opacity="0.5"/>"##,
                    f.x(s.center.x),
                    f.y(s.center.y),
                    s.radius * f.scale
                );
            }
            let _ = writeln!(
                out,
                r#"<circle class="goal-point" cx="{:.3}" cy="{:.3}" r="5" fill="{GOAL_COLOR}"/>"#,
                f.x(arm.target.x),
                f.y(arm.target.y)
            );
            let ee = |t: &TrajectoryTable| -> Vec<(f64, f64)> {
                t.rows
                    .iter()
                    .filter_map(|row| arm.fk(&row.mean).ok())
                    .map(|p| (p.end_effector.x, p.end_effector.y))
                    .collect()
            };
            for c in components {
                polyline(&mut out, &f, &ee(c), "component-path", &format!(r#"stroke="{COMPONENT_COLOR}" stroke-width="2""#));
            }
            if let Some(t) = main.filter(|t| !t.rows.is_empty()) {
                polyline(&mut out, &f, &ee(t), "path", &format!(r#"stroke="{PATH_COLOR}" stroke-width="2.5""#));
                if let Ok(pose) = arm.fk(&t.rows.last().expect("nonempty").mean) {
                    let mut chain = vec![(0.0, 0.0)];
                    chain.extend(pose.proxies.iter().map(|p| (p.x, p.y)));
                    chain.push((pose.end_effector.x, pose.end_effector.y));
                    polyline(&mut out, &f, &chain, "arm", r##"stroke="#c0392b" stroke-width="1.5""##);
                }
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles_are_canonical() {
        assert_eq!(normalize_degrees(-90.0), 90.0);
        assert_eq!(normalize_degrees(180.0), 0.0);
        assert_eq!(normalize_degrees(-0.0), 0.0);
        assert_eq!(normalize_degrees(359.9999), 0.0);
    }
}
