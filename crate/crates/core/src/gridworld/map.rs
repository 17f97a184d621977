//! movingai `.map` reader and writer.
//!
//! ```text
//! type octile
//! height H
//! width W
//! map
//! <H rows of exactly W glyphs>
//! ```

use thiserror::Error;

use super::{GridMap, Terrain};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("illegal cell glyph {glyph:?} at row {row}, column {col}")]
    IllegalCharacter { glyph: char, row: usize, col: usize },

    #[error("grid body does not match header: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("map has no passable cell")]
    NoPassableCell,
}

fn glyph_terrain(glyph: char) -> Option<Terrain> {
    match glyph {
        '.' | 'G' => Some(Terrain::Passable),
        '@' | 'T' | 'O' => Some(Terrain::Blocked),
        'S' | 'W' => {
            log::warn!("treating movingai glyph {glyph:?} as blocked");
            Some(Terrain::Blocked)
        }
        _ => None,
    }
}

fn header_value(line: Option<&str>, key: &str) -> Result<usize, MapError> {
    let line = line.ok_or_else(|| MapError::MalformedHeader(format!("missing `{key}` line")))?;
    let mut parts = line.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some(k), Some(v), None) if k == key => v
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| MapError::MalformedHeader(format!("bad {key} value {v:?}"))),
        _ => Err(MapError::MalformedHeader(format!("expected `{key} N`, got {line:?}"))),
    }
}

pub fn parse_map(text: &str) -> Result<GridMap, MapError> {
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));

    match lines.next().map(str::trim) {
        Some(l) if l.starts_with("type ") => {}
        other => return Err(MapError::MalformedHeader(format!("expected `type ...`, got {other:?}"))),
    }
    let height = header_value(lines.next(), "height")?;
    let width = header_value(lines.next(), "width")?;
    match lines.next().map(str::trim) {
        Some("map") => {}
        other => return Err(MapError::MalformedHeader(format!("expected `map`, got {other:?}"))),
    }

    let rows: Vec<&str> = lines.map(str::trim_end).filter(|l| !l.is_empty()).collect();
    if rows.len() != height {
        return Err(MapError::DimensionMismatch { expected: height, found: rows.len() });
    }

    let mut cells = Vec::with_capacity(width * height);
    for (row, line) in rows.iter().enumerate() {
        let count = line.chars().count();
        if count != width {
            return Err(MapError::DimensionMismatch { expected: width, found: count });
        }
        for (col, glyph) in line.chars().enumerate() {
            let t = glyph_terrain(glyph).ok_or(MapError::IllegalCharacter { glyph, row, col })?;
            cells.push(t);
        }
    }
    GridMap::new(width, height, cells)
}

/// Writes `map` in movingai form using `.` and `@`.
pub fn render_map(map: &GridMap) -> String {
    let mut out = format!("type octile\nheight {}\nwidth {}\nmap\n", map.height(), map.width());
    for row in map.cells().chunks(map.width()) {
        out.extend(row.iter().map(|t| match t {
            Terrain::Passable => '.',
            Terrain::Blocked => '@',
        }));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::Cell;
    use proptest::prelude::*;

    fn wrap(h: usize, w: usize, body: &str) -> String {
        format!("type octile\nheight {h}\nwidth {w}\nmap\n{body}")
    }

    #[test]
    fn all_passable() {
        let m = parse_map(&wrap(3, 3, "...\n...\n...\n")).unwrap();
        assert_eq!(m.passable_count(), 9);
    }

    #[test]
    fn single_blocked_glyph() {
        let m = parse_map(&wrap(1, 2, ".@\n")).unwrap();
        assert_eq!(m.terrain(Cell::new(0, 0)), Some(Terrain::Passable));
        assert_eq!(m.terrain(Cell::new(1, 0)), Some(Terrain::Blocked));
    }

    #[test]
    fn glyph_table() {
        let m = parse_map(&wrap(1, 7, ".GTO@SW\n")).unwrap();
        let kinds: Vec<_> = m.cells().to_vec();
        use Terrain::*;
        assert_eq!(kinds, vec![Passable, Passable, Blocked, Blocked, Blocked, Blocked, Blocked]);
    }

    #[test]
    fn too_many_rows() {
        let err = parse_map(&wrap(2, 3, "...\n...\n...\n")).unwrap_err();
        assert!(matches!(err, MapError::DimensionMismatch { .. }));
    }

    #[test]
    fn short_row() {
        let err = parse_map(&wrap(2, 3, "...\n..\n")).unwrap_err();
        assert!(matches!(err, MapError::DimensionMismatch { expected: 3, found: 2 }));
    }

    #[test]
    fn bad_header_and_glyph() {
        assert!(matches!(parse_map("type octile\nwidth 3\nheight 3\nmap\n"), Err(MapError::MalformedHeader(_))));
        assert!(matches!(parse_map("height 1\nwidth 1\nmap\n.\n"), Err(MapError::MalformedHeader(_))));
        assert!(matches!(parse_map(&wrap(0, 1, "")), Err(MapError::MalformedHeader(_))));
        assert!(matches!(
            parse_map(&wrap(1, 2, ".x\n")),
            Err(MapError::IllegalCharacter { glyph: 'x', row: 0, col: 1 })
        ));
        assert_eq!(parse_map(&wrap(1, 2, "@@\n")), Err(MapError::NoPassableCell));
    }

    #[test]
    fn crlf_tolerated() {
        let m = parse_map("type octile\r\nheight 1\r\nwidth 2\r\nmap\r\n..\r\n").unwrap();
        assert_eq!(m.width(), 2);
    }

    proptest! {
        #[test]
        fn render_parse_roundtrip(w in 1usize..12, h in 1usize..12, bits in prop::collection::vec(any::<bool>(), 144)) {
            let mut cells: Vec<Terrain> = bits[..w * h].iter().map(|b| if *b { Terrain::Passable } else { Terrain::Blocked }).collect();
            cells[0] = Terrain::Passable;
            let m = GridMap::new(w, h, cells).unwrap();
            prop_assert_eq!(parse_map(&render_map(&m)).unwrap(), m);
        }
    }
}
