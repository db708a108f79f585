//! Set-of-marks annotation: numbered, type-colored tags over a screenshot,
//! and the red highlight marking the previously operated control.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{ControlInfo, ControlType, Image, Rect};

pub const BORDER_WIDTH: u32 = 2;
pub const HIGHLIGHT_WIDTH: u32 = 3;
pub const HIGHLIGHT_COLOR: [u8; 3] = [255, 0, 0];
/// Tag cell per digit.
pub const TAG_DIGIT_WIDTH: u32 = 14;
pub const TAG_HEIGHT: u32 = 10;
/// Color for controls of unknown type, which normally never reach annotation.
pub const RAW_COLOR: [u8; 3] = [200, 200, 200];

const GLYPH_OFFSET_X: u32 = (TAG_DIGIT_WIDTH - 5) / 2;
const GLYPH_OFFSET_Y: u32 = (TAG_HEIGHT - 7) / 2;

/// 5×7 digit glyphs, one byte per row, bit 4 is the leftmost column.
const DIGITS: [[u8; 7]; 10] = [
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
    [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
    [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
    [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnnotateError {
    #[error("BBOX_OUT_OF_BOUNDS: control {control_id} at {bbox:?} outside {width}x{height}")]
    BboxOutOfBounds { control_id: String, bbox: Rect, width: u32, height: u32 },
    #[error("palette colors must be pairwise distinct")]
    PaletteNotDistinct,
}

/// Color per control type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    colors: [[u8; 3]; 10],
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            colors: [
                [230, 57, 70],   // Button
                [29, 53, 87],    // Edit
                [69, 123, 157],  // TabItem
                [42, 157, 143],  // Document
                [233, 196, 106], // ListItem
                [244, 162, 97],  // MenuItem
                [38, 70, 83],    // TreeItem
                [106, 76, 147],  // ComboBox
                [0, 119, 182],   // Hyperlink
                [120, 120, 120], // ScrollBar
            ],
        }
    }
}

impl Palette {
    /// Builds a palette from colors listed in [`ControlType::ALL`] order.
    pub fn new(colors: [[u8; 3]; 10]) -> Result<Self, AnnotateError> {
        let distinct: BTreeSet<_> = colors.iter().collect();
        if distinct.len() != colors.len() {
            return Err(AnnotateError::PaletteNotDistinct);
        }
        Ok(Palette { colors })
    }

    pub fn color(&self, ty: ControlType) -> [u8; 3] {
        let idx = ControlType::ALL.iter().position(|t| *t == ty).expect("ALL lists every type");
        self.colors[idx]
    }

    fn color_for(&self, control: &ControlInfo) -> [u8; 3] {
        control.kind.known().map(|t| self.color(t)).unwrap_or(RAW_COLOR)
    }
}

/// Label ("1"-based, consecutive) → control id, in annotation order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub entries: Vec<(String, String)>,
    pub step_index: u64,
}

impl LabelMap {
    pub fn for_controls(controls: &[ControlInfo], step_index: u64) -> Self {
        LabelMap {
            entries: controls
                .iter()
                .enumerate()
                .map(|(i, c)| ((i + 1).to_string(), c.control_id.clone()))
                .collect(),
            step_index,
        }
    }

    pub fn get(&self, label: &str) -> Option<&str> {
        self.entries.iter().find(|(l, _)| l == label).map(|(_, id)| id.as_str())
    }

    /// Position of `label` in the map.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.entries.iter().position(|(l, _)| l == label)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(l, _)| l.as_str())
    }
}

fn check_bounds(image: &Image, control: &ControlInfo) -> Result<(), AnnotateError> {
    if control.bbox.fits_within(image.width(), image.height()) {
        Ok(())
    } else {
        Err(AnnotateError::BboxOutOfBounds {
            control_id: control.control_id.clone(),
            bbox: control.bbox,
            width: image.width(),
            height: image.height(),
        })
    }
}

fn text_color(bg: [u8; 3]) -> [u8; 3] {
    let luma = 299 * bg[0] as u32 + 587 * bg[1] as u32 + 114 * bg[2] as u32;
    if luma >= 140_000 {
        [0, 0, 0]
    } else {
        [255, 255, 255]
    }
}

fn draw_tag(img: &mut Image, left: u32, top: u32, label: &str, bg: [u8; 3]) {
    let width = TAG_DIGIT_WIDTH * label.len() as u32;
    img.fill_rect(Rect::new(left, top, width, TAG_HEIGHT), bg);
    let fg = text_color(bg);
    for (i, ch) in label.bytes().enumerate() {
        let glyph = &DIGITS[(ch - b'0') as usize];
        let x0 = left + i as u32 * TAG_DIGIT_WIDTH + GLYPH_OFFSET_X;
        let y0 = top + GLYPH_OFFSET_Y;
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..5 {
                if bits & (0b10000 >> col) != 0 {
                    img.put(x0 + col, y0 + row as u32, fg);
                }
            }
        }
    }
}

/// Draws a border and a numbered tag for each control, in input order.
pub fn annotate(image: &Image, controls: &[ControlInfo], palette: &Palette) -> Result<(Image, LabelMap), AnnotateError> {
    for c in controls {
        check_bounds(image, c)?;
    }
    let mut out = image.clone();
    for (i, c) in controls.iter().enumerate() {
        let color = palette.color_for(c);
        out.stroke_rect(c.bbox, BORDER_WIDTH, color);
        draw_tag(&mut out, c.bbox.left, c.bbox.top, &(i + 1).to_string(), color);
    }
    Ok((out, LabelMap::for_controls(controls, 0)))
}

/// Marks the previously operated control with a pure red border.
pub fn highlight_previous(image: &Image, control: &ControlInfo) -> Result<Image, AnnotateError> {
    check_bounds(image, control)?;
    let mut out = image.clone();
    out.stroke_rect(control.bbox, HIGHLIGHT_WIDTH, HIGHLIGHT_COLOR);
    Ok(out)
}
