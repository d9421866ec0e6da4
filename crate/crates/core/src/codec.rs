//! Quantized coordinate grid and the `<loc>` / `<gap>` interaction-token grammar.
//!
//! Metric coordinates map per axis onto integers in `[0, 255]` with
//! round-half-up followed by clamping. Extents use the same per-axis scale
//! without the offset. The surface forms are byte-exact ASCII:
//!
//! ```text
//! <loc>cx, cy, cz, w, h, l</loc>
//! <gap>v</gap>
//! ```
//!
//! Integers are written without sign or leading zeros, and the parser accepts
//! only that canonical form, so parse and emit are exact inverses.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Box3, Point3};
use crate::math;
use crate::scene::{SceneBounds, SceneRecord};

pub const GRID_MAX: u8 = 255;
const GRID_SPAN: f64 = 255.0;

pub const LOC_OPEN: &str = "<loc>";
pub const LOC_CLOSE: &str = "</loc>";
pub const GAP_OPEN: &str = "<gap>";
pub const GAP_CLOSE: &str = "</gap>";

/// Per-axis affine map from metric scene coordinates onto the `[0, 255]` grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantTransform {
    min: [f64; 3],
    max: [f64; 3],
}

impl QuantTransform {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        for a in 0..3 {
            if !min[a].is_finite() || !max[a].is_finite() {
                return Err(Error::invalid(format!("axis {a} bounds must be finite")));
            }
            if !(max[a] > min[a]) {
                return Err(Error::invalid(format!(
                    "degenerate axis {a}: max {} <= min {}",
                    max[a], min[a]
                )));
            }
        }
        Ok(QuantTransform { min, max })
    }

    pub fn from_bounds(b: &SceneBounds) -> Result<Self> {
        QuantTransform::new(b.min, b.max)
    }

    pub fn min(&self) -> [f64; 3] {
        self.min
    }

    pub fn max(&self) -> [f64; 3] {
        self.max
    }

    /// Metric width of one grid unit on `axis`.
    pub fn bin_width(&self, axis: usize) -> f64 {
        (self.max[axis] - self.min[axis]) / GRID_SPAN
    }

    pub fn quantize_coord(&self, axis: usize, x: f64) -> u8 {
        round_to_grid(GRID_SPAN * (x - self.min[axis]) / (self.max[axis] - self.min[axis]))
    }

    pub fn dequantize_coord(&self, axis: usize, u: u8) -> f64 {
        self.min[axis] + f64::from(u) * self.bin_width(axis)
    }

    pub fn quantize_extent(&self, axis: usize, w: f64) -> u8 {
        round_to_grid(GRID_SPAN * w / (self.max[axis] - self.min[axis]))
    }

    pub fn dequantize_extent(&self, axis: usize, u: u8) -> f64 {
        f64::from(u) * self.bin_width(axis)
    }

    pub fn quantize_point(&self, p: Point3) -> [u8; 3] {
        let p = p.to_array();
        [
            self.quantize_coord(0, p[0]),
            self.quantize_coord(1, p[1]),
            self.quantize_coord(2, p[2]),
        ]
    }

    pub fn dequantize_point(&self, u: [u8; 3]) -> Point3 {
        Point3::new(
            self.dequantize_coord(0, u[0]),
            self.dequantize_coord(1, u[1]),
            self.dequantize_coord(2, u[2]),
        )
    }

    pub fn quantize_box(&self, b: &Box3) -> QuantBox {
        QuantBox {
            center: self.quantize_point(b.center),
            extent: [
                self.quantize_extent(0, b.extent[0]),
                self.quantize_extent(1, b.extent[1]),
                self.quantize_extent(2, b.extent[2]),
            ],
        }
    }

    pub fn dequantize_box(&self, q: &QuantBox) -> Box3 {
        Box3 {
            center: self.dequantize_point(q.center),
            extent: [
                self.dequantize_extent(0, q.extent[0]),
                self.dequantize_extent(1, q.extent[1]),
                self.dequantize_extent(2, q.extent[2]),
            ],
        }
    }
}

fn round_to_grid(v: f64) -> u8 {
    let r = math::floor(v + 0.5);
    if r.is_nan() || r <= 0.0 {
        0
    } else if r >= GRID_SPAN {
        GRID_MAX
    } else {
        r as u8
    }
}

/// Grid transform for a scene: explicit bounds, or the padded union of its boxes.
pub fn fit_transform(scene: &SceneRecord) -> Result<QuantTransform> {
    QuantTransform::from_bounds(&scene.bounds()?)
}

/// Box on the quantized grid. `extent` is (w, h, l) along (x, y, z).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QuantBox {
    pub center: [u8; 3],
    pub extent: [u8; 3],
}

impl QuantBox {
    pub const fn new(center: [u8; 3], extent: [u8; 3]) -> Self {
        QuantBox { center, extent }
    }

    /// True when `center ± extent/2` stays inside the grid up to one unit of rounding slack.
    pub fn within_grid(&self) -> bool {
        (0..3).all(|a| {
            let (c, e) = (i32::from(self.center[a]), i32::from(self.extent[a]));
            2 * c - e >= -2 && 2 * c + e <= 2 * i32::from(GRID_MAX) + 2
        })
    }

    /// The same box in grid units as a metric-free [`Box3`].
    pub fn to_grid_box(&self) -> Box3 {
        Box3 {
            center: Point3::new(
                f64::from(self.center[0]),
                f64::from(self.center[1]),
                f64::from(self.center[2]),
            ),
            extent: [
                f64::from(self.extent[0]),
                f64::from(self.extent[1]),
                f64::from(self.extent[2]),
            ],
        }
    }
}

pub fn emit_loc(b: &QuantBox) -> String {
    format!(
        "{LOC_OPEN}{}, {}, {}, {}, {}, {}{LOC_CLOSE}",
        b.center[0], b.center[1], b.center[2], b.extent[0], b.extent[1], b.extent[2]
    )
}

pub fn emit_gap(v: u8) -> String {
    format!("{GAP_OPEN}{v}{GAP_CLOSE}")
}

/// Bare center triple, as used by placement answers.
pub fn emit_center(c: [u8; 3]) -> String {
    format!("{}, {}, {}", c[0], c[1], c[2])
}

/// Parses exactly one `<loc>` token spanning the whole input.
pub fn parse_loc(s: &str) -> Result<QuantBox> {
    parse_loc_at(s, 0)
}

/// Parses exactly one `<gap>` token spanning the whole input.
pub fn parse_gap(s: &str) -> Result<u8> {
    parse_gap_at(s, 0)
}

fn parse_loc_at(s: &str, base: usize) -> Result<QuantBox> {
    let body = strip_token(s, LOC_OPEN, LOC_CLOSE, base)?;
    let v = parse_int_list(body, base + LOC_OPEN.len())?;
    if v.len() != 6 {
        return Err(Error::parse(
            base + LOC_OPEN.len(),
            format!("loc token needs 6 integers, found {}", v.len()),
        ));
    }
    Ok(QuantBox::new([v[0], v[1], v[2]], [v[3], v[4], v[5]]))
}

fn parse_gap_at(s: &str, base: usize) -> Result<u8> {
    let body = strip_token(s, GAP_OPEN, GAP_CLOSE, base)?;
    let v = parse_int_list(body, base + GAP_OPEN.len())?;
    if v.len() != 1 {
        return Err(Error::parse(
            base + GAP_OPEN.len(),
            format!("gap token needs 1 integer, found {}", v.len()),
        ));
    }
    Ok(v[0])
}

fn strip_token<'a>(s: &'a str, open: &str, close: &str, base: usize) -> Result<&'a str> {
    let Some(rest) = s.strip_prefix(open) else {
        return Err(Error::parse(base, format!("expected {open}")));
    };
    let Some(body) = rest.strip_suffix(close) else {
        return Err(Error::parse(base + s.len(), format!("expected {close}")));
    };
    Ok(body)
}

/// Parses `n(, n)*` where each `n` is a canonical decimal in `[0, 255]`.
fn parse_int_list(s: &str, base: usize) -> Result<Vec<u8>> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    loop {
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i == start {
            return Err(Error::parse(
                base + start,
                "expected an integer in [0, 255]",
            ));
        }
        if i - start > 1 && bytes[start] == b'0' {
            return Err(Error::parse(base + start, "leading zeros are not allowed"));
        }
        if i - start > 3 {
            return Err(Error::parse(base + start, "integer out of range [0, 255]"));
        }
        // ASCII digits, at most three of them.
        let v: u32 = s[start..i].parse().expect("ascii digits");
        if v > u32::from(GRID_MAX) {
            return Err(Error::parse(base + start, "integer out of range [0, 255]"));
        }
        out.push(v as u8);
        if i == bytes.len() {
            return Ok(out);
        }
        if !bytes[i..].starts_with(b", ") {
            return Err(Error::parse(base + i, "expected \", \" separator"));
        }
        i += 2;
    }
}

/// One recognized item in an answer, in source order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnswerItem {
    Loc { bbox: QuantBox },
    Gap { value: u8 },
    Center { center: [u8; 3] },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnswerPayload {
    pub items: Vec<AnswerItem>,
    /// Text outside every recognized item.
    pub residual: String,
}

impl AnswerPayload {
    pub fn locs(&self) -> impl Iterator<Item = QuantBox> + '_ {
        self.items.iter().filter_map(|i| match i {
            AnswerItem::Loc { bbox } => Some(*bbox),
            _ => None,
        })
    }

    pub fn gaps(&self) -> impl Iterator<Item = u8> + '_ {
        self.items.iter().filter_map(|i| match i {
            AnswerItem::Gap { value } => Some(*value),
            _ => None,
        })
    }

    pub fn centers(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.items.iter().filter_map(|i| match i {
            AnswerItem::Center { center } => Some(*center),
            _ => None,
        })
    }
}

/// Extracts loc boxes, gaps and bare center triples from free answer text.
///
/// Tokens must be well formed and closed before the next one opens. A bare
/// triple is recognized only when it forms a whole clause of the text outside
/// tokens (clauses end at `.`, `;`, `:`, `?`, `!` followed by whitespace or the
/// end of text, or at a newline).
pub fn parse_answer(text: &str) -> Result<AnswerPayload> {
    let mut payload = AnswerPayload::default();
    let mut pos = 0;
    while pos < text.len() {
        let rest = &text[pos..];
        let next = rest.find('<').map(|i| pos + i);
        let Some(open) = next else {
            scan_plain(text, pos, text.len(), &mut payload);
            break;
        };
        let tail = &text[open..];
        let (open_tag, close_tag, is_loc) = if tail.starts_with(LOC_OPEN) {
            (LOC_OPEN, LOC_CLOSE, true)
        } else if tail.starts_with(GAP_OPEN) {
            (GAP_OPEN, GAP_CLOSE, false)
        } else if tail.starts_with(LOC_CLOSE) || tail.starts_with(GAP_CLOSE) {
            return Err(Error::parse(open, "closing tag without an opening tag"));
        } else {
            // A '<' that starts no token is ordinary text.
            scan_plain(text, pos, open + 1, &mut payload);
            pos = open + 1;
            continue;
        };
        scan_plain(text, pos, open, &mut payload);
        let body_start = open + open_tag.len();
        let Some(close_rel) = text[body_start..].find(close_tag) else {
            return Err(Error::parse(open, format!("unclosed {open_tag} token")));
        };
        let close = body_start + close_rel;
        if let Some(inner) = text[body_start..close].find('<') {
            return Err(Error::parse(
                body_start + inner,
                format!("overlapping token inside {open_tag}"),
            ));
        }
        let end = close + close_tag.len();
        let token = &text[open..end];
        let item = if is_loc {
            AnswerItem::Loc {
                bbox: parse_loc_at(token, open)?,
            }
        } else {
            AnswerItem::Gap {
                value: parse_gap_at(token, open)?,
            }
        };
        payload.items.push(item);
        pos = end;
    }
    Ok(payload)
}

/// Splits `text[from..to]` into clauses, recording bare triples and residual text.
fn scan_plain(text: &str, from: usize, to: usize, payload: &mut AnswerPayload) {
    let segment = &text[from..to];
    let bytes = segment.as_bytes();
    let mut clause_start = 0;
    let mut i = 0;
    while i <= bytes.len() {
        let at_end = i == bytes.len();
        let boundary = at_end || is_clause_break(bytes, i, from + i == text.len() - 1);
        if boundary {
            let clause = &segment[clause_start..i];
            match parse_triple(clause.trim()) {
                Some(center) => payload.items.push(AnswerItem::Center { center }),
                None => payload.residual.push_str(clause),
            }
            if !at_end {
                payload.residual.push(bytes[i] as char);
            }
            clause_start = i + 1;
        }
        i += 1;
    }
}

fn is_clause_break(bytes: &[u8], i: usize, last_of_text: bool) -> bool {
    match bytes[i] {
        b'\n' => true,
        b'.' | b';' | b':' | b'?' | b'!' => {
            last_of_text || bytes.get(i + 1).is_some_and(|b| b.is_ascii_whitespace())
        }
        _ => false,
    }
}

fn parse_triple(s: &str) -> Option<[u8; 3]> {
    let v = parse_int_list(s, 0).ok()?;
    (v.len() == 3).then(|| [v[0], v[1], v[2]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    const A1_ANSWER: &str = "Object A is a kitchen_cabinets located at <loc>198, 171, 47, 7, 96, 81</loc>. Object B is a chair located at <loc>141, 110, 58, 21, 16, 96</loc>. The spatial distance from Object A to Object B on the x-axis is <gap>57</gap> units, on the y-axis is <gap>61</gap> units, and on the z-axis is <gap>11</gap> units.";

    #[test]
    fn endpoints_and_midpoint() {
        let t = QuantTransform::new([0.0, -1.0, 2.0], [4.0, 1.0, 3.0]).unwrap();
        assert_eq!(t.quantize_coord(0, 0.0), 0);
        assert_eq!(t.quantize_coord(0, 4.0), 255);
        assert_eq!(t.quantize_coord(1, 0.0), 128);
        assert_eq!(t.quantize_coord(2, 2.5), 128);
        assert_eq!(t.quantize_coord(0, -3.0), 0);
        assert_eq!(t.quantize_coord(0, 9.0), 255);
    }

    #[test]
    fn degenerate_axis_rejected() {
        assert!(QuantTransform::new([0.0, 0.0, 0.0], [1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn emit_loc_matches_worked_example() {
        let b = QuantBox::new([198, 171, 47], [7, 96, 81]);
        assert_eq!(emit_loc(&b), "<loc>198, 171, 47, 7, 96, 81</loc>");
        assert_eq!(parse_loc("<loc>198, 171, 47, 7, 96, 81</loc>").unwrap(), b);
    }

    #[test]
    fn loc_arity_and_range_errors() {
        assert!(matches!(
            parse_loc("<loc>1, 2, 3</loc>"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_loc("<loc>1, 2, 3, 4, 5, 256</loc>"),
            Err(Error::Parse { pos: 20, .. })
        ));
        assert!(parse_loc("<loc>1,2, 3, 4, 5, 6</loc>").is_err());
        assert!(parse_loc("<loc>01, 2, 3, 4, 5, 6</loc>").is_err());
        assert!(parse_loc("<loc>1, 2, 3, 4, 5, 6").is_err());
        assert!(parse_loc(" <loc>1, 2, 3, 4, 5, 6</loc>").is_err());
    }

    #[test]
    fn gap_forms() {
        assert_eq!(emit_gap(57), "<gap>57</gap>");
        assert_eq!(emit_gap(0), "<gap>0</gap>");
        assert_eq!(parse_gap("<gap>57</gap>").unwrap(), 57);
        assert!(matches!(
            parse_gap("<gap>-3</gap>"),
            Err(Error::Parse { pos: 5, .. })
        ));
        assert!(parse_gap("<gap>300</gap>").is_err());
        assert!(parse_gap("<gap></gap>").is_err());
        assert!(parse_gap("<gap>1, 2</gap>").is_err());
    }

    #[test]
    fn parse_worked_distance_answer() {
        let p = parse_answer(A1_ANSWER).unwrap();
        assert_eq!(
            p.items,
            vec![
                AnswerItem::Loc {
                    bbox: QuantBox::new([198, 171, 47], [7, 96, 81])
                },
                AnswerItem::Loc {
                    bbox: QuantBox::new([141, 110, 58], [21, 16, 96])
                },
                AnswerItem::Gap { value: 57 },
                AnswerItem::Gap { value: 61 },
                AnswerItem::Gap { value: 11 },
            ]
        );
        assert!(p
            .residual
            .starts_with("Object A is a kitchen_cabinets located at . Object B"));
    }

    #[test]
    fn parse_bare_placement_triple() {
        let p = parse_answer("133, 80, 57").unwrap();
        assert_eq!(
            p.items,
            vec![AnswerItem::Center {
                center: [133, 80, 57]
            }]
        );
        let p = parse_answer("The center is: 133, 80, 57.").unwrap();
        assert_eq!(
            p.items,
            vec![AnswerItem::Center {
                center: [133, 80, 57]
            }]
        );
    }

    #[test]
    fn prose_numbers_are_not_triples() {
        assert!(parse_answer("no objects here").unwrap().items.is_empty());
        assert!(parse_answer("move 1, 2, 3 units").unwrap().items.is_empty());
        assert!(parse_answer("3.5, 2, 1").unwrap().items.is_empty());
        assert!(parse_answer("1, 2, 3, 4").unwrap().items.is_empty());
    }

    #[test]
    fn token_structure_errors() {
        assert!(parse_answer("at <loc>1, 2, 3, 4, 5, 6").is_err());
        assert!(parse_answer("<loc>1, 2, <gap>3</gap>, 4, 5, 6</loc>").is_err());
        assert!(matches!(
            parse_answer("x </gap>"),
            Err(Error::Parse { pos: 2, .. })
        ));
        assert!(parse_answer("a <b> c").unwrap().items.is_empty());
    }

    fn arb_qbox() -> impl Strategy<Value = QuantBox> {
        (any::<[u8; 3]>(), any::<[u8; 3]>()).prop_map(|(c, e)| QuantBox::new(c, e))
    }

    proptest! {
        #[test]
        fn loc_and_gap_round_trip(b in arb_qbox(), g in any::<u8>()) {
            prop_assert_eq!(parse_loc(&emit_loc(&b)).unwrap(), b);
            prop_assert_eq!(parse_gap(&emit_gap(g)).unwrap(), g);
        }

        #[test]
        fn conformant_strings_re_emit_identically(v in prop::collection::vec(any::<u8>(), 6)) {
            let s = format!("<loc>{}, {}, {}, {}, {}, {}</loc>", v[0], v[1], v[2], v[3], v[4], v[5]);
            prop_assert_eq!(emit_loc(&parse_loc(&s).unwrap()), s);
        }

        #[test]
        fn quantization_error_within_half_bin(
            lo in prop::array::uniform3(-10.0f64..10.0),
            span in prop::array::uniform3(0.1f64..20.0),
            frac in prop::array::uniform3(0.0f64..=1.0),
        ) {
            let hi = [lo[0] + span[0], lo[1] + span[1], lo[2] + span[2]];
            let t = QuantTransform::new(lo, hi).unwrap();
            for a in 0..3 {
                let x = lo[a] + frac[a] * span[a];
                let back = t.dequantize_coord(a, t.quantize_coord(a, x));
                prop_assert!((back - x).abs() <= t.bin_width(a) / 2.0 + 1e-9 * span[a]);
            }
        }

        #[test]
        fn parse_answer_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
            let s = String::from_utf8_lossy(&bytes);
            let _ = parse_answer(&s);
        }

        #[test]
        fn parse_answer_never_panics_on_token_soup(parts in prop::collection::vec(
            prop::sample::select(vec!["<loc>", "</loc>", "<gap>", "</gap>", "1", "255", ", ", ". ", "x", "<", "é", "\n", "300"]), 0..30)) {
            let s: String = parts.concat();
            if let Err(Error::Parse { pos, .. }) = parse_answer(&s) {
                prop_assert!(pos <= s.len());
            }
        }
    }
}
