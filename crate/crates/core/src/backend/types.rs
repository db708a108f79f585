use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// The ten control types an agent is allowed to act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ControlType {
    Button,
    Edit,
    TabItem,
    Document,
    ListItem,
    MenuItem,
    TreeItem,
    ComboBox,
    Hyperlink,
    ScrollBar,
}

impl ControlType {
    pub const ALL: [ControlType; 10] = [
        ControlType::Button,
        ControlType::Edit,
        ControlType::TabItem,
        ControlType::Document,
        ControlType::ListItem,
        ControlType::MenuItem,
        ControlType::TreeItem,
        ControlType::ComboBox,
        ControlType::Hyperlink,
        ControlType::ScrollBar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControlType::Button => "Button",
            ControlType::Edit => "Edit",
            ControlType::TabItem => "TabItem",
            ControlType::Document => "Document",
            ControlType::ListItem => "ListItem",
            ControlType::MenuItem => "MenuItem",
            ControlType::TreeItem => "TreeItem",
            ControlType::ComboBox => "ComboBox",
            ControlType::Hyperlink => "Hyperlink",
            ControlType::ScrollBar => "ScrollBar",
        }
    }

    /// Case-sensitive lookup by name.
    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|t| t.name() == name)
    }

    /// Types that accept free text input.
    pub fn is_text_input(self) -> bool {
        matches!(self, ControlType::Edit | ControlType::Document | ControlType::ComboBox)
    }
}

impl fmt::Display for ControlType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A control's type as reported by the backend: either one of the known
/// types or a foreign type name that the hard filter drops.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ControlKind {
    Known(ControlType),
    Raw(String),
}

impl ControlKind {
    pub fn parse(name: &str) -> Self {
        match ControlType::from_name(name) {
            Some(t) => ControlKind::Known(t),
            None => ControlKind::Raw(name.to_string()),
        }
    }

    pub fn known(&self) -> Option<ControlType> {
        match self {
            ControlKind::Known(t) => Some(*t),
            ControlKind::Raw(_) => None,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            ControlKind::Known(t) => t.name(),
            ControlKind::Raw(s) => s,
        }
    }
}

impl fmt::Display for ControlKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for ControlKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ControlKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(ControlKind::parse(&s))
    }
}

/// Pixel rectangle, `(left, top, width, height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct Rect {
    pub left: u32,
    pub top: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub const fn new(left: u32, top: u32, width: u32, height: u32) -> Self {
        Rect { left, top, width, height }
    }

    pub fn right(&self) -> u64 {
        self.left as u64 + self.width as u64
    }

    pub fn bottom(&self) -> u64 {
        self.top as u64 + self.height as u64
    }

    /// True when the rectangle is non-empty and lies inside a `width × height` area.
    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.width > 0 && self.height > 0 && self.right() <= width as u64 && self.bottom() <= height as u64
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.left && (x as u64) < self.right() && y >= self.top && (y as u64) < self.bottom()
    }
}

impl From<[u32; 4]> for Rect {
    fn from(v: [u32; 4]) -> Self {
        Rect::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Rect> for [u32; 4] {
    fn from(r: Rect) -> Self {
        [r.left, r.top, r.width, r.height]
    }
}

/// One actionable UI element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlInfo {
    pub control_id: String,
    #[serde(rename = "type")]
    pub kind: ControlKind,
    pub title: String,
    pub bbox: Rect,
    pub enabled: bool,
    #[serde(default)]
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppInfo {
    pub app_id: String,
    pub name: String,
    pub kind: String,
    pub focused: bool,
}

/// Row-major RGBA raster.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl fmt::Debug for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Image")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Image {
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 4);
        for _ in 0..(width as usize * height as usize) {
            pixels.extend_from_slice(&[rgb[0], rgb[1], rgb[2], 255]);
        }
        Image { width, height, pixels }
    }

    /// Returns `None` unless `pixels.len() == width * height * 4`.
    pub fn from_rgba(width: u32, height: u32, pixels: Vec<u8>) -> Option<Self> {
        (pixels.len() == width as usize * height as usize * 4).then_some(Image { width, height, pixels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = (y as usize * self.width as usize + x as usize) * 4;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2], self.pixels[i + 3]]
    }

    pub fn rgb(&self, x: u32, y: u32) -> [u8; 3] {
        let p = self.pixel(x, y);
        [p[0], p[1], p[2]]
    }

    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        if x < self.width && y < self.height {
            let i = (y as usize * self.width as usize + x as usize) * 4;
            self.pixels[i..i + 4].copy_from_slice(&[rgb[0], rgb[1], rgb[2], 255]);
        }
    }

    /// Fills `rect`, clipped to the image.
    pub fn fill_rect(&mut self, rect: Rect, rgb: [u8; 3]) {
        let x1 = (rect.right()).min(self.width as u64) as u32;
        let y1 = (rect.bottom()).min(self.height as u64) as u32;
        for y in rect.top.min(self.height)..y1 {
            for x in rect.left.min(self.width)..x1 {
                self.put(x, y, rgb);
            }
        }
    }

    /// Draws a band of `thickness` pixels just inside the edge of `rect`.
    pub fn stroke_rect(&mut self, rect: Rect, thickness: u32, rgb: [u8; 3]) {
        let t = thickness;
        let top = Rect::new(rect.left, rect.top, rect.width, t.min(rect.height));
        let bottom_h = t.min(rect.height);
        let bottom = Rect::new(rect.left, rect.top + rect.height - bottom_h, rect.width, bottom_h);
        let left = Rect::new(rect.left, rect.top, t.min(rect.width), rect.height);
        let right_w = t.min(rect.width);
        let right = Rect::new(rect.left + rect.width - right_w, rect.top, right_w, rect.height);
        for r in [top, bottom, left, right] {
            self.fill_rect(r, rgb);
        }
    }

    /// SHA-256 of dimensions and pixel bytes, hex encoded.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.width.to_le_bytes());
        h.update(self.height.to_le_bytes());
        h.update(&self.pixels);
        hex::encode(h.finalize())
    }

    pub fn to_png(&self) -> Vec<u8> {
        use image::ImageEncoder;
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(&mut out)
            .write_image(&self.pixels, self.width, self.height, image::ExtendedColorType::Rgba8)
            .expect("in-memory PNG encoding of a valid RGBA buffer");
        out
    }
}

/// A function invocation chosen by the action agent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionCall {
    pub name: String,
    #[serde(default)]
    pub args: BTreeMap<String, String>,
}

impl FunctionCall {
    pub fn new(name: impl Into<String>) -> Self {
        FunctionCall { name: name.into(), args: BTreeMap::new() }
    }

    pub fn with_arg(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.args.insert(key.into(), value.into());
        self
    }

    pub fn arg(&self, key: &str) -> Option<&str> {
        self.args.get(key).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub ok: bool,
    pub payload: String,
    pub state_changed: bool,
}

impl ExecutionResult {
    pub fn unchanged(payload: impl Into<String>) -> Self {
        ExecutionResult { ok: true, payload: payload.into(), state_changed: false }
    }

    pub fn changed(payload: impl Into<String>) -> Self {
        ExecutionResult { ok: true, payload: payload.into(), state_changed: true }
    }

    pub fn denied() -> Self {
        ExecutionResult { ok: false, payload: "denied by user".to_string(), state_changed: false }
    }
}
