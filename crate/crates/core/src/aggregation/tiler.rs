use std::collections::VecDeque;

use super::LightColor;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start_s: f64,
    pub end_s: f64,
    pub light: LightColor,
}

/// Cuts one lane's timeline into nominal-length windows, closing the running
/// window early whenever the light changes colour.
#[derive(Debug, Clone)]
pub struct WindowTiler {
    window_len_s: f64,
    anchor_s: f64,
    k: u64,
    light: LightColor,
    closed: VecDeque<Window>,
}

impl WindowTiler {
    pub fn new(start_s: f64, light: LightColor, window_len_s: f64) -> Self {
        WindowTiler { window_len_s, anchor_s: start_s, k: 0, light, closed: VecDeque::new() }
    }

    fn start(&self) -> f64 {
        self.anchor_s + self.k as f64 * self.window_len_s
    }

    pub fn light(&self) -> LightColor {
        self.light
    }

    /// Closes every nominal window that ends at or before `now`.
    pub fn roll(&mut self, now: f64) {
        loop {
            let end = self.anchor_s + (self.k + 1) as f64 * self.window_len_s;
            if end > now + EPS {
                break;
            }
            self.closed.push_back(Window { start_s: self.start(), end_s: end, light: self.light });
            self.k += 1;
        }
    }

    pub fn change(&mut self, t: f64, light: LightColor) {
        self.roll(t);
        if light == self.light {
            return;
        }
        let start = self.start();
        if t > start + EPS {
            self.closed.push_back(Window { start_s: start, end_s: t, light: self.light });
        }
        self.anchor_s = t;
        self.k = 0;
        self.light = light;
    }

    pub fn pop_ready(&mut self, watermark: f64) -> Option<Window> {
        if self.closed.front().is_some_and(|w| w.end_s <= watermark + EPS) {
            self.closed.pop_front()
        } else {
            None
        }
    }

    pub fn drain(&mut self) -> impl Iterator<Item = Window> + '_ {
        self.closed.drain(..)
    }
}
