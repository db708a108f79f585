//! Synthetic fixtures shared by the benchmarks.

use deskpilot_core::backend::{ControlInfo, ControlKind, ControlType, Image, Rect, Scenario};
use deskpilot_core::bridge::PolicyTable;

/// `n` controls of cycling types laid out on a grid, one in seven disabled.
pub fn grid_controls(n: usize) -> Vec<ControlInfo> {
    (0..n)
        .map(|i| ControlInfo {
            control_id: format!("c{i}"),
            kind: ControlKind::parse(ControlType::ALL[i % 10].name()),
            title: format!("Control {i}"),
            bbox: Rect::new(8 + (i as u32 % 20) * 60, 8 + (i as u32 / 20) * 36, 54, 30),
            enabled: i % 7 != 3,
            text: String::new(),
        })
        .collect()
}

pub fn gradient(width: u32, height: u32) -> Image {
    let mut pixels = Vec::with_capacity((width * height * 4) as usize);
    for y in 0..height {
        for x in 0..width {
            pixels.extend_from_slice(&[(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8, 255]);
        }
    }
    Image::from_rgba(width, height, pixels).expect("dimensions match")
}

/// One window of `buttons` buttons; clicking the last one sets the status text.
pub fn button_scenario(buttons: usize) -> Scenario {
    let controls: Vec<String> = (1..=buttons)
        .map(|i| {
            format!(
                r#"{{"id": "b{i}", "type": "Button", "title": "Button {i}", "bbox": [{}, {}, 56, 28]}}"#,
                8 + ((i - 1) % 16) * 62,
                8 + ((i - 1) / 16) * 34
            )
        })
        .collect();
    let doc = format!(
        r#"{{"applications": [{{"id": "app", "name": "Panel", "kind": "panel", "focused": true, "window": [0, 0, 1024, 600],
            "controls": [{}, {{"id": "status", "type": "StatusBar", "title": "Status", "bbox": [8, 560, 400, 24]}}],
            "transitions": [{{"control": "b{buttons}", "function": "Click",
                "effects": [{{"set_text": {{"control": "status", "text": "done"}}}}]}}]}}],
            "success_hooks": {{"done": [{{"control_text": {{"app": "app", "control": "status", "contains": "done"}}}}]}}}}"#,
        controls.join(",")
    );
    Scenario::from_json(&doc).expect("valid scenario")
}

/// Selects the panel, clicks the last button, then finishes.
pub fn button_policy(buttons: usize) -> PolicyTable {
    let doc = format!(
        r#"{{"rules": [
            {{"agent": "app", "respond": {{"status": "CONTINUE", "select": "Panel"}}}},
            {{"agent": "act", "when": {{"memory_contains": ["Click: Button {buttons}"]}}, "respond": {{"status": "FINISH"}}}},
            {{"agent": "act", "respond": {{"status": "CONTINUE", "select": "Button {buttons}", "function": "Click"}}}}
        ]}}"#
    );
    PolicyTable::from_json(&doc).expect("valid policy")
}
