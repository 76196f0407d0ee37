//! Deterministic SVG rendering of the simplex with foci, decision points,
//! trajectory chords and simulated switch points.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::node::{Node, Side};

/// Triangle vertices `e_1, e_2, e_3` in drawing units.
const VERTEX: [(f64, f64); 3] = [(0.0, 433.0), (500.0, 433.0), (250.0, 0.0)];
/// Foci farther than this many triangle widths from the centroid are omitted.
const FOCUS_RANGE: f64 = 2.0;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlotData {
    /// Polylines through side points; closed ones are drawn as polygons.
    pub paths: Vec<(Vec<(Side, f64)>, bool)>,
    /// Scattered side points (for example switch-epoch projections).
    pub scatter: Vec<(Side, f64)>,
    pub decision_points: Option<[f64; 3]>,
    pub foci: Option<[[f64; 3]; 3]>,
    pub title: Option<String>,
}

fn simplex(side: Side, x: f64) -> [f64; 3] {
    let mut z = [0.0; 3];
    z[side.next().index()] = 1.0 - x;
    z[side.prev().index()] = x;
    z
}

fn to_xy(z: &[f64; 3]) -> (f64, f64) {
    let mut p = (0.0, 0.0);
    for i in 0..3 {
        p.0 += z[i] * VERTEX[i].0;
        p.1 += z[i] * VERTEX[i].1;
    }
    p
}

fn side_xy(side: Side, x: f64) -> (f64, f64) {
    to_xy(&simplex(side, x))
}

fn fmt(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// Renders `data` as an SVG document. Output depends only on `data`.
pub fn render_svg(data: &PlotData) -> String {
    let (cx, cy) = (250.0, 433.0 * 2.0 / 3.0);
    let foci: Vec<(usize, (f64, f64))> = data
        .foci
        .iter()
        .flat_map(|f| f.iter().enumerate().map(|(j, z)| (j, to_xy(z))))
        .filter(|(_, (x, y))| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() <= FOCUS_RANGE * 500.0)
        .collect();
    let (mut x0, mut y0, mut x1, mut y1) = (0.0f64, 0.0f64, 500.0f64, 433.0f64);
    for (_, (x, y)) in &foci {
        x0 = x0.min(*x);
        y0 = y0.min(*y);
        x1 = x1.max(*x);
        y1 = y1.max(*y);
    }
    let m = 30.0;
    let (vx, vy, vw, vh) = (x0 - m, y0 - m, x1 - x0 + 2.0 * m, y1 - y0 + 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\" width=\"{}\" height=\"{}\">",
        fmt(vx),
        fmt(vy),
        fmt(vw),
        fmt(vh),
        fmt(640.0),
        fmt(640.0 * vh / vw)
    );
    if let Some(t) = &data.title {
        let _ = writeln!(s, "<title>{}</title>", escape(t));
    }
    let _ = writeln!(s, "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"white\"/>", fmt(vx), fmt(vy), fmt(vw), fmt(vh));
    let _ = writeln!(
        s,
        "<polygon points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>",
        VERTEX.iter().map(|(x, y)| format!("{},{}", fmt(*x), fmt(*y))).collect::<Vec<_>>().join(" ")
    );
    for (i, (x, y)) in VERTEX.iter().enumerate() {
        let dy = if *y > 200.0 { 18.0 } else { -8.0 };
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\">e{}</text>", fmt(*x), fmt(y + dy), i + 1);
    }
    for (j, (x, y)) in &foci {
        let _ = writeln!(s, "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"steelblue\"/>", fmt(*x), fmt(*y));
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"12\">v{}</text>", fmt(x + 6.0), fmt(y - 6.0), j + 1);
    }
    if let Some(d) = data.decision_points {
        for side in Node::ALL {
            let (x, y) = side_xy(side, d[side.index()]);
            let _ = writeln!(s, "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"none\" stroke=\"firebrick\" stroke-width=\"1.5\"/>", fmt(x), fmt(y));
        }
    }
    for (pts, closed) in &data.paths {
        if pts.is_empty() {
            continue;
        }
        let list = pts.iter().map(|(sd, x)| {
            let (a, b) = side_xy(*sd, *x);
            format!("{},{}", fmt(a), fmt(b))
        });
        let tag = if *closed { "polygon" } else { "polyline" };
        let _ = writeln!(
            s,
            "<{tag} points=\"{}\" fill=\"none\" stroke=\"darkorange\" stroke-width=\"1\"/>",
            list.collect::<Vec<_>>().join(" ")
        );
    }
    for (sd, x) in &data.scatter {
        let (a, b) = side_xy(*sd, *x);
        let _ = writeln!(s, "<circle cx=\"{}\" cy=\"{}\" r=\"1.5\" fill=\"seagreen\" fill-opacity=\"0.6\"/>", fmt(a), fmt(b));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("line {line}: {msg}"))
}

fn parse_side(line: usize, s: &str) -> Result<Side> {
    s.trim().parse::<u8>().ok().and_then(Node::from_label).ok_or_else(|| parse_err(line, format!("bad side {s:?}")))
}

fn parse_x(line: usize, s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| parse_err(line, format!("bad coordinate {s:?}")))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(parse_err(line, format!("coordinate {v} outside [0, 1]")));
    }
    Ok(v)
}

/// Recognized inputs: trajectory CSV (`step,side,x_decimal,...`), run CSV
/// (`replica,n,tau,...`) and orbit CSV (`orbit,period,index,side,...`).
pub fn parse_plot_input(text: &str) -> Result<PlotData> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Ok(PlotData::default());
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let idx = |name: &str| cols.iter().position(|c| *c == name);
    let mut data = PlotData::default();
    if let (Some(si), Some(xi)) = (idx("side"), idx("x_decimal")) {
        let mut path = Vec::new();
        for (ln, l) in lines {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != cols.len() {
                return Err(parse_err(ln, format!("expected {} fields, found {}", cols.len(), f.len())));
            }
            path.push((parse_side(ln, f[si])?, parse_x(ln, f[xi])?));
        }
        data.paths.push((path, false));
    } else if let (Some(si), Some(xi)) = (idx("zeta_side"), idx("zeta_x")) {
        for (ln, l) in lines {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != cols.len() {
                return Err(parse_err(ln, format!("expected {} fields, found {}", cols.len(), f.len())));
            }
            data.scatter.push((parse_side(ln, f[si])?, parse_x(ln, f[xi])?));
        }
    } else if let (Some(oi), Some(si), Some(ci)) = (idx("orbit"), idx("side"), idx("center")) {
        let mut current: Option<String> = None;
        let mut path = Vec::new();
        for (ln, l) in lines {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != cols.len() {
                return Err(parse_err(ln, format!("expected {} fields, found {}", cols.len(), f.len())));
            }
            if current.as_deref() != Some(f[oi]) {
                if !path.is_empty() {
                    data.paths.push((std::mem::take(&mut path), true));
                }
                current = Some(f[oi].to_string());
            }
            path.push((parse_side(ln, f[si])?, parse_x(ln, f[ci])?));
        }
        if !path.is_empty() {
            data.paths.push((path, true));
        }
    } else {
        return Err(parse_err(1, "unrecognized header"));
    }
    Ok(data)
}
