//! Tiny 5x7 bitmap font for plot labels. Lowercase input is rendered with the
//! uppercase glyphs; unknown characters fall back to a filled box.

pub const GLYPH_W: usize = 5;
pub const GLYPH_H: usize = 7;
/// Horizontal advance including spacing.
pub const ADVANCE: usize = GLYPH_W + 1;

type Glyph = [&'static str; 7];

fn glyph(c: char) -> Glyph {
    match c.to_ascii_uppercase() {
        ' ' => ["00000", "00000", "00000", "00000", "00000", "00000", "00000"],
        '0' => ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
        '1' => ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
        '2' => ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
        '3' => ["01110", "10001", "00001", "00110", "00001", "10001", "01110"],
        '4' => ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
        '5' => ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
        '6' => ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
        '7' => ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
        '8' => ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
        '9' => ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
        'A' => ["01110", "10001", "10001", "11111", "10001", "10001", "10001"],
        'B' => ["11110", "10001", "10001", "11110", "10001", "10001", "11110"],
        'C' => ["01110", "10001", "10000", "10000", "10000", "10001", "01110"],
        'D' => ["11110", "10001", "10001", "10001", "10001", "10001", "11110"],
        'E' => ["11111", "10000", "10000", "11110", "10000", "10000", "11111"],
        'F' => ["11111", "10000", "10000", "11110", "10000", "10000", "10000"],
        'G' => ["01110", "10001", "10000", "10111", "10001", "10001", "01111"],
        'H' => ["10001", "10001", "10001", "11111", "10001", "10001", "10001"],
        'I' => ["01110", "00100", "00100", "00100", "00100", "00100", "01110"],
        'J' => ["00111", "00010", "00010", "00010", "00010", "10010", "01100"],
        'K' => ["10001", "10010", "10100", "11000", "10100", "10010", "10001"],
        'L' => ["10000", "10000", "10000", "10000", "10000", "10000", "11111"],
        'M' => ["10001", "11011", "10101", "10101", "10001", "10001", "10001"],
        'N' => ["10001", "11001", "10101", "10011", "10001", "10001", "10001"],
        'O' => ["01110", "10001", "10001", "10001", "10001", "10001", "01110"],
        'P' => ["11110", "10001", "10001", "11110", "10000", "10000", "10000"],
        'Q' => ["01110", "10001", "10001", "10001", "10101", "10010", "01101"],
        'R' => ["11110", "10001", "10001", "11110", "10100", "10010", "10001"],
        'S' => ["01111", "10000", "10000", "01110", "00001", "00001", "11110"],
        'T' => ["11111", "00100", "00100", "00100", "00100", "00100", "00100"],
        'U' => ["10001", "10001", "10001", "10001", "10001", "10001", "01110"],
        'V' => ["10001", "10001", "10001", "10001", "10001", "01010", "00100"],
        'W' => ["10001", "10001", "10001", "10101", "10101", "10101", "01010"],
        'X' => ["10001", "10001", "01010", "00100", "01010", "10001", "10001"],
        'Y' => ["10001", "10001", "01010", "00100", "00100", "00100", "00100"],
        'Z' => ["11111", "00001", "00010", "00100", "01000", "10000", "11111"],
        '.' => ["00000", "00000", "00000", "00000", "00000", "01100", "01100"],
        ',' => ["00000", "00000", "00000", "00000", "00110", "00100", "01000"],
        '-' => ["00000", "00000", "00000", "01110", "00000", "00000", "00000"],
        '_' => ["00000", "00000", "00000", "00000", "00000", "00000", "11111"],
        '+' => ["00000", "00100", "00100", "11111", "00100", "00100", "00000"],
        '=' => ["00000", "00000", "11111", "00000", "11111", "00000", "00000"],
        ':' => ["00000", "01100", "01100", "00000", "01100", "01100", "00000"],
        '/' => ["00001", "00010", "00010", "00100", "01000", "01000", "10000"],
        '%' => ["11001", "11010", "00010", "00100", "01000", "01011", "10011"],
        '(' => ["00010", "00100", "01000", "01000", "01000", "00100", "00010"],
        ')' => ["01000", "00100", "00010", "00010", "00010", "00100", "01000"],
        _ => ["11111", "11111", "11111", "11111", "11111", "11111", "11111"],
    }
}

/// Render `text` with its top-left corner at `(x, y)` by calling `set(px, py)`
/// for every lit pixel.
pub fn draw_text(text: &str, x: i64, y: i64, mut set: impl FnMut(i64, i64)) {
    for (i, c) in text.chars().enumerate() {
        let g = glyph(c);
        let gx = x + (i * ADVANCE) as i64;
        for (row, bits) in g.iter().enumerate() {
            for (col, b) in bits.bytes().enumerate() {
                if b == b'1' {
                    set(gx + col as i64, y + row as i64);
                }
            }
        }
    }
}

/// Pixel width of rendered text.
pub fn text_width(text: &str) -> usize {
    text.chars().count() * ADVANCE
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_glyph_is_five_by_seven() {
        let chars = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ .,-_+=:/%()";
        for c in chars.chars() {
            let g = glyph(c);
            for row in g {
                assert_eq!(row.len(), 5, "{c}");
                assert!(row.bytes().all(|b| b == b'0' || b == b'1'), "{c}");
            }
        }
    }

    #[test]
    fn draw_text_stays_in_bounds_and_lights_pixels() {
        let mut pixels = Vec::new();
        draw_text("FID 1.5", 10, 20, |x, y| pixels.push((x, y)));
        assert!(!pixels.is_empty());
        let w = text_width("FID 1.5") as i64;
        for (x, y) in pixels {
            assert!(x >= 10 && x < 10 + w);
            assert!((20..27).contains(&y));
        }
    }

    #[test]
    fn lowercase_maps_to_uppercase() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        draw_text("fid", 0, 0, |x, y| a.push((x, y)));
        draw_text("FID", 0, 0, |x, y| b.push((x, y)));
        assert_eq!(a, b);
    }
}
