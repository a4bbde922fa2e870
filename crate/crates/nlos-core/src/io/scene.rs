//! Scene description files: a line-oriented key/value format.
//!
//! ```text
//! # cards-on-a-ladder analogue
//! name: two_points
//! point: pos=[-0.33, 0.0, 0.5] albedo=1.0 falloff=4
//! point: pos=[0.33, 0.0, 2.0] albedo=0.5 falloff=4
//! letter: text=NL z=1.0 albedo=1.0 falloff=4 pitch=0.05 height=0.6 center=[0.0, 0.0]
//! ```
//!
//! Every line is `key: value`; `point` adds one scattering point, `letter`
//! expands a 5x7 bitmap-font string into a plane of points at load time.
//! Unknown keys and attributes are rejected with their line number.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::transient::{Scene, ScenePoint};

/// 5x7 glyphs, one byte per row, bit 4 = leftmost column.
fn glyph(c: char) -> Option<[u8; 7]> {
    let rows: [u8; 7] = match c {
        'A' => [0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001],
        'B' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110],
        'C' => [0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110],
        'D' => [0b11110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11110],
        'E' => [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111],
        'F' => [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000],
        'G' => [0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111],
        'H' => [0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001],
        'I' => [0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
        'J' => [0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100],
        'K' => [0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001],
        'L' => [0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111],
        'M' => [0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001],
        'N' => [0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001, 0b10001],
        'O' => [0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110],
        'P' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000],
        'Q' => [0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101],
        'R' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001],
        'S' => [0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110],
        'T' => [0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100],
        'U' => [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110],
        'V' => [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100],
        'W' => [0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b11011, 0b10001],
        'X' => [0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001],
        'Y' => [0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100, 0b00100],
        'Z' => [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111],
        '0' => [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
        '1' => [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
        '2' => [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
        '3' => [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
        '4' => [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
        '5' => [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
        '6' => [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
        '7' => [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
        '8' => [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
        '9' => [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
        ' ' => [0; 7],
        _ => return None,
    };
    Some(rows)
}

struct LineCtx<'a> {
    path: &'a str,
    line: usize,
}

impl LineCtx<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::SceneParse {
            path: self.path.to_string(),
            line: self.line,
            message: message.into(),
        }
    }
}

/// Splits `a=1 b=[2, 3]` into (name, value) pairs; brackets may contain
/// whitespace and commas.
fn split_attrs<'a>(rest: &'a str, ctx: &LineCtx) -> Result<Vec<(&'a str, &'a str)>> {
    let bytes = rest.as_bytes();
    let mut out = Vec::new();
    let mut i = 0usize;
    while i < bytes.len() {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i >= bytes.len() {
            break;
        }
        let start = i;
        let mut depth = 0i32;
        while i < bytes.len() && (depth > 0 || !bytes[i].is_ascii_whitespace()) {
            match bytes[i] {
                b'[' => depth += 1,
                b']' => depth -= 1,
                _ => {}
            }
            i += 1;
        }
        if depth != 0 {
            return Err(ctx.err("unbalanced brackets"));
        }
        let token = &rest[start..i];
        let eq = token
            .find('=')
            .ok_or_else(|| ctx.err(format!("expected name=value, got '{token}'")))?;
        out.push((&token[..eq], token[eq + 1..].trim()));
    }
    Ok(out)
}

fn parse_f64(value: &str, name: &str, ctx: &LineCtx) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| ctx.err(format!("attribute '{name}' is not a number: '{value}'")))
}

fn parse_array<const N: usize>(value: &str, name: &str, ctx: &LineCtx) -> Result<[f64; N]> {
    let inner = value
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .ok_or_else(|| ctx.err(format!("attribute '{name}' must be a [..] array")))?;
    let parts: Vec<&str> = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if parts.len() != N {
        return Err(ctx.err(format!(
            "attribute '{name}' must have {N} components, got {}",
            parts.len()
        )));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_f64(p, name, ctx)?;
    }
    Ok(out)
}

struct AttrSet<'a> {
    attrs: Vec<(&'a str, &'a str)>,
    used: Vec<bool>,
}

impl<'a> AttrSet<'a> {
    fn new(attrs: Vec<(&'a str, &'a str)>) -> Self {
        let used = vec![false; attrs.len()];
        Self { attrs, used }
    }

    fn take(&mut self, name: &str, ctx: &LineCtx) -> Result<&'a str> {
        let mut found = None;
        for (i, (n, v)) in self.attrs.iter().enumerate() {
            if *n == name {
                if found.is_some() {
                    return Err(ctx.err(format!("duplicate attribute '{name}'")));
                }
                found = Some((i, *v));
            }
        }
        match found {
            Some((i, v)) => {
                self.used[i] = true;
                Ok(v)
            }
            None => Err(ctx.err(format!("missing attribute '{name}'"))),
        }
    }

    fn finish(self, ctx: &LineCtx) -> Result<()> {
        for (i, used) in self.used.iter().enumerate() {
            if !used {
                return Err(ctx.err(format!("unknown attribute '{}'", self.attrs[i].0)));
            }
        }
        Ok(())
    }
}

fn expand_letters(
    text: &str,
    z: f64,
    albedo: f64,
    falloff: f64,
    pitch: f64,
    height: f64,
    center: [f64; 2],
    ctx: &LineCtx,
) -> Result<Vec<ScenePoint>> {
    if !(pitch > 0.0) || !(height > 0.0) {
        return Err(ctx.err("letter pitch and height must be positive"));
    }
    let text: String = text.to_ascii_uppercase();
    let glyphs: Vec<[u8; 7]> = text
        .chars()
        .map(|c| glyph(c).ok_or_else(|| ctx.err(format!("unsupported glyph '{c}'"))))
        .collect::<Result<_>>()?;
    let px = height / 7.0;
    let advance = 6.0 * px; // 5 columns + 1 gap
    let total_w = glyphs.len() as f64 * advance - px;
    let left = center[0] - total_w / 2.0;
    let top = center[1] + height / 2.0;
    // Sub-sampling within each lit cell at roughly the requested pitch.
    let sub = (px / pitch).ceil().max(1.0) as usize;
    let step = px / sub as f64;

    let mut points = Vec::new();
    for (gi, rows) in glyphs.iter().enumerate() {
        let gx = left + gi as f64 * advance;
        for (r, bits) in rows.iter().enumerate() {
            for c in 0..5 {
                if bits & (1 << (4 - c)) != 0 {
                    let cell_x = gx + c as f64 * px;
                    let cell_y = top - (r + 1) as f64 * px;
                    for sx in 0..sub {
                        for sy in 0..sub {
                            let x = cell_x + (sx as f64 + 0.5) * step;
                            let y = cell_y + (sy as f64 + 0.5) * step;
                            points.push(
                                ScenePoint::new([x, y, z], albedo, falloff)
                                    .map_err(|e| ctx.err(e.to_string()))?,
                            );
                        }
                    }
                }
            }
        }
    }
    Ok(points)
}

/// Parses a scene document. `path` is used only for diagnostics.
pub fn parse_scene(text: &str, path: &str) -> Result<Scene> {
    let mut name: Option<String> = None;
    let mut points = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let ctx = LineCtx {
            path,
            line: idx + 1,
        };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, rest) = line
            .split_once(':')
            .ok_or_else(|| ctx.err("expected 'key: value'"))?;
        let rest = rest.trim();
        match key.trim() {
            "name" => {
                if name.is_some() {
                    return Err(ctx.err("duplicate 'name'"));
                }
                if rest.is_empty() {
                    return Err(ctx.err("empty scene name"));
                }
                name = Some(rest.to_string());
            }
            "point" => {
                let mut attrs = AttrSet::new(split_attrs(rest, &ctx)?);
                let pos = parse_array::<3>(attrs.take("pos", &ctx)?, "pos", &ctx)?;
                let albedo = parse_f64(attrs.take("albedo", &ctx)?, "albedo", &ctx)?;
                let falloff = parse_f64(attrs.take("falloff", &ctx)?, "falloff", &ctx)?;
                attrs.finish(&ctx)?;
                points.push(
                    ScenePoint::new(pos, albedo, falloff).map_err(|e| ctx.err(e.to_string()))?,
                );
            }
            "letter" => {
                let mut attrs = AttrSet::new(split_attrs(rest, &ctx)?);
                let text_attr = attrs.take("text", &ctx)?;
                let z = parse_f64(attrs.take("z", &ctx)?, "z", &ctx)?;
                let albedo = parse_f64(attrs.take("albedo", &ctx)?, "albedo", &ctx)?;
                let falloff = parse_f64(attrs.take("falloff", &ctx)?, "falloff", &ctx)?;
                let pitch = parse_f64(attrs.take("pitch", &ctx)?, "pitch", &ctx)?;
                let height = parse_f64(attrs.take("height", &ctx)?, "height", &ctx)?;
                let center = parse_array::<2>(attrs.take("center", &ctx)?, "center", &ctx)?;
                attrs.finish(&ctx)?;
                points.extend(expand_letters(
                    text_attr, z, albedo, falloff, pitch, height, center, &ctx,
                )?);
            }
            other => {
                return Err(ctx.err(format!("unknown key '{other}'")));
            }
        }
    }

    let name = name.ok_or_else(|| Error::SceneParse {
        path: path.to_string(),
        line: 0,
        message: "scene has no 'name' line".into(),
    })?;
    if points.is_empty() {
        return Err(Error::SceneParse {
            path: path.to_string(),
            line: 0,
            message: "scene has no points".into(),
        });
    }
    Ok(Scene::new(name, points))
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    let text = fs::read_to_string(path)?;
    parse_scene(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_points_and_name() {
        let text = "\
# comment
name: pair

point: pos=[-0.3, 0.0, 0.5] albedo=1.0 falloff=4
point: pos=[0.3, 0.1, 2.0] albedo=0.5 falloff=2
";
        let scene = parse_scene(text, "mem").unwrap();
        assert_eq!(scene.name, "pair");
        assert_eq!(scene.points.len(), 2);
        assert_eq!(scene.points[0].position_m, [-0.3, 0.0, 0.5]);
        assert_eq!(scene.points[1].albedo, 0.5);
    }

    #[test]
    fn unknown_key_reports_line_number() {
        let text = "name: x\npoint: pos=[0,0,1] albedo=1 falloff=2\nwidget: 3\n";
        match parse_scene(text, "mem") {
            Err(Error::SceneParse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("widget"));
            }
            other => panic!("expected SceneParse, got {other:?}"),
        }
    }

    #[test]
    fn unknown_attribute_reports_line_number() {
        let text = "name: x\npoint: pos=[0,0,1] albedo=1 falloff=2 shiny=1\n";
        match parse_scene(text, "mem") {
            Err(Error::SceneParse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("shiny"));
            }
            other => panic!("expected SceneParse, got {other:?}"),
        }
    }

    #[test]
    fn letter_generator_expands_to_plane_points() {
        let text =
            "name: t\nletter: text=T z=1.0 albedo=1.0 falloff=4 pitch=0.1 height=0.35 center=[0.0, 0.0]\n";
        let scene = parse_scene(text, "mem").unwrap();
        // T has 5 + 6 = 11 lit cells; pitch >= cell size means one point each.
        assert_eq!(scene.points.len(), 11);
        assert!(scene.points.iter().all(|p| p.position_m[2] == 1.0));
        // Horizontal bar of the T sits at the top.
        let y_max = scene
            .points
            .iter()
            .map(|p| p.position_m[1])
            .fold(f64::NEG_INFINITY, f64::max);
        let bar: Vec<_> = scene
            .points
            .iter()
            .filter(|p| (p.position_m[1] - y_max).abs() < 1e-12)
            .collect();
        assert_eq!(bar.len(), 5);
    }

    #[test]
    fn letter_subdivides_at_fine_pitch() {
        let coarse = parse_scene(
            "name: a\nletter: text=I z=1.0 albedo=1 falloff=2 pitch=1.0 height=0.7 center=[0,0]\n",
            "mem",
        )
        .unwrap();
        let fine = parse_scene(
            "name: a\nletter: text=I z=1.0 albedo=1 falloff=2 pitch=0.04 height=0.7 center=[0,0]\n",
            "mem",
        )
        .unwrap();
        assert!(fine.points.len() > coarse.points.len());
    }

    #[test]
    fn rejects_unsupported_glyphs_and_missing_name() {
        assert!(parse_scene(
            "name: a\nletter: text=? z=1 albedo=1 falloff=2 pitch=0.1 height=0.7 center=[0,0]\n",
            "mem"
        )
        .is_err());
        assert!(parse_scene("point: pos=[0,0,1] albedo=1 falloff=2\n", "mem").is_err());
    }
}
