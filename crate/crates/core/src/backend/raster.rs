use super::types::{Image, Rect};

pub const WINDOW_BACKGROUND: [u8; 3] = [236, 236, 236];
pub const FRAME_COLOR: [u8; 3] = [64, 64, 72];
pub const FRAME_MARGIN: u32 = 8;

/// Flat fill for a control, keyed by a stable hash of its id.
///
/// Channels stay within 40..=215 so fills never coincide with the window
/// background or with pure red highlights.
pub fn control_fill(control_id: &str) -> [u8; 3] {
    // FNV-1a, 64 bit
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in control_id.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let b = h.to_le_bytes();
    [40 + b[0] % 176, 40 + b[3] % 176, 40 + b[6] % 176]
}

/// Window raster: frame band, background, then one fill per control in order.
pub(crate) fn render_window(width: u32, height: u32, fills: &[(Rect, [u8; 3])]) -> Image {
    let mut img = Image::filled(width, height, FRAME_COLOR);
    if width > 2 * FRAME_MARGIN && height > 2 * FRAME_MARGIN {
        img.fill_rect(
            Rect::new(FRAME_MARGIN, FRAME_MARGIN, width - 2 * FRAME_MARGIN, height - 2 * FRAME_MARGIN),
            WINDOW_BACKGROUND,
        );
    }
    for (rect, rgb) in fills {
        img.fill_rect(*rect, *rgb);
    }
    img
}

/// Copies `src` onto `dst` at `(left, top)`, clipped.
pub(crate) fn blit(dst: &mut Image, src: &Image, left: u32, top: u32) {
    for y in 0..src.height() {
        for x in 0..src.width() {
            let (dx, dy) = (left as u64 + x as u64, top as u64 + y as u64);
            if dx < dst.width() as u64 && dy < dst.height() as u64 {
                dst.put(dx as u32, dy as u32, src.rgb(x, y));
            }
        }
    }
}
