//! Deterministic SVG heatmaps of the sweep maps: best BER, best power,
//! and the RB ratio over bitrate x detuning.

use crate::sweep::{BestCell, MapGrid};
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("map grid has no cells")]
    EmptyMap,
    #[error("unknown channel '{0}'; expected ber_out, power, or rb")]
    UnknownChannel(String),
}

/// Which per-cell quantity to color.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapChannel {
    /// log10 of the best output BER.
    BerOut,
    /// Power (dBm) at which the best BER is reached.
    Power,
    /// log10 RB, best input BER over best output BER.
    Rb,
}

impl MapChannel {
    pub fn name(self) -> &'static str {
        match self {
            MapChannel::BerOut => "ber_out",
            MapChannel::Power => "power",
            MapChannel::Rb => "rb",
        }
    }
}

impl FromStr for MapChannel {
    type Err = PlotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ber_out" => Ok(MapChannel::BerOut),
            "power" => Ok(MapChannel::Power),
            "rb" => Ok(MapChannel::Rb),
            other => Err(PlotError::UnknownChannel(other.to_string())),
        }
    }
}

const CELL_W: f64 = 46.0;
const CELL_H: f64 = 34.0;
const MARGIN_LEFT: f64 = 86.0;
const MARGIN_TOP: f64 = 46.0;
const MARGIN_BOTTOM: f64 = 64.0;
const LEGEND_W: f64 = 96.0;

/// Render one channel of a map grid as a standalone SVG document.
///
/// Bitrate runs along x (the paper grid is geometric, so equal cells with
/// value labels form a log axis), detuning along y. Cells at the
/// statistical floor carry markers: filled dots for the output branch,
/// hollow circled crosses for the input branch (on the RB channel).
/// Failed cells are hatched. Output bytes are deterministic.
pub fn render_heatmap_svg(map: &MapGrid, channel: MapChannel) -> Result<String, PlotError> {
    if map.cells.is_empty() || map.bitrates_mbps.is_empty() || map.detunings_ghz.is_empty() {
        return Err(PlotError::EmptyMap);
    }

    let nx = map.bitrates_mbps.len();
    let ny = map.detunings_ghz.len();
    let grid_w = nx as f64 * CELL_W;
    let grid_h = ny as f64 * CELL_H;
    let width = MARGIN_LEFT + grid_w + LEGEND_W + 20.0;
    let height = MARGIN_TOP + grid_h + MARGIN_BOTTOM;

    let value = |cell: &BestCell| -> f64 {
        match channel {
            MapChannel::BerOut => cell.ber_out.log10(),
            MapChannel::Power => cell.power_dbm,
            MapChannel::Rb => cell.rb_log10(),
        }
    };
    let values: Vec<f64> = map
        .cells
        .iter()
        .filter_map(|c| c.as_ref().map(value))
        .filter(|v| v.is_finite())
        .collect();
    let (lo, hi) = if values.is_empty() {
        (0.0, 1.0)
    } else {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if (hi - lo).abs() < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(
        svg,
        r##"<defs><pattern id="hatch" width="6" height="6" patternTransform="rotate(45)" patternUnits="userSpaceOnUse"><rect width="6" height="6" fill="#d8d8d8"/><line x1="0" y1="0" x2="0" y2="6" stroke="#888888" stroke-width="2"/></pattern></defs>"##
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let title = format!(
        "{} / N_v = {} / channel = {}",
        map.task,
        map.n_v,
        channel.name()
    );
    let _ = writeln!(
        svg,
        r##"<text x="{:.1}" y="24" font-family="sans-serif" font-size="15" fill="#222222">{}</text>"##,
        MARGIN_LEFT,
        xml_escape(&title)
    );

    // Cells. Detuning increases upward: row 0 (top) is the largest value.
    for (bi, _) in map.bitrates_mbps.iter().enumerate() {
        for di in 0..ny {
            let x = MARGIN_LEFT + bi as f64 * CELL_W;
            let y = MARGIN_TOP + (ny - 1 - di) as f64 * CELL_H;
            match map.cell(bi, di) {
                Some(cell) => {
                    let v = value(cell);
                    let fill = if v.is_finite() {
                        color_for(channel, v, lo, hi)
                    } else {
                        "url(#hatch)".to_string()
                    };
                    let _ = writeln!(
                        svg,
                        r##"<rect x="{x:.1}" y="{y:.1}" width="{CELL_W:.1}" height="{CELL_H:.1}" fill="{fill}" stroke="#ffffff" stroke-width="1"/>"##
                    );
                    let cx = x + CELL_W / 2.0;
                    let cy = y + CELL_H / 2.0;
                    let draw_out =
                        cell.floor_out && matches!(channel, MapChannel::BerOut | MapChannel::Rb);
                    if draw_out {
                        let _ = writeln!(
                            svg,
                            r##"<circle cx="{cx:.1}" cy="{cy:.1}" r="4.5" fill="#d62020"/>"##
                        );
                    }
                    if cell.floor_in && matches!(channel, MapChannel::Rb) {
                        let _ = writeln!(
                            svg,
                            r##"<circle cx="{cx:.1}" cy="{cy:.1}" r="8" fill="none" stroke="#d62020" stroke-width="1.6"/>"##
                        );
                        let _ = writeln!(
                            svg,
                            r##"<path d="M {x0:.1} {y0:.1} L {x1:.1} {y1:.1} M {x0:.1} {y1:.1} L {x1:.1} {y0:.1}" stroke="#d62020" stroke-width="1.6"/>"##,
                            x0 = cx - 5.0,
                            y0 = cy - 5.0,
                            x1 = cx + 5.0,
                            y1 = cy + 5.0,
                        );
                    }
                }
                None => {
                    let _ = writeln!(
                        svg,
                        r##"<rect x="{x:.1}" y="{y:.1}" width="{CELL_W:.1}" height="{CELL_H:.1}" fill="url(#hatch)" stroke="#ffffff" stroke-width="1"/>"##
                    );
                }
            }
        }
    }

    // Axis labels.
    for (bi, b) in map.bitrates_mbps.iter().enumerate() {
        let x = MARGIN_LEFT + (bi as f64 + 0.5) * CELL_W;
        let y = MARGIN_TOP + grid_h + 16.0;
        let _ = writeln!(
            svg,
            r##"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="11" fill="#222222" text-anchor="middle">{}</text>"##,
            trim_float(*b)
        );
    }
    let _ = writeln!(
        svg,
        r##"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="12" fill="#222222" text-anchor="middle">bitrate (Mbps, log grid)</text>"##,
        x = MARGIN_LEFT + grid_w / 2.0,
        y = MARGIN_TOP + grid_h + 40.0,
    );
    for (di, d) in map.detunings_ghz.iter().enumerate() {
        let x = MARGIN_LEFT - 8.0;
        let y = MARGIN_TOP + (ny - 1 - di) as f64 * CELL_H + CELL_H / 2.0 + 4.0;
        let _ = writeln!(
            svg,
            r##"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="11" fill="#222222" text-anchor="end">{}</text>"##,
            trim_float(*d)
        );
    }
    let _ = writeln!(
        svg,
        r##"<text x="18" y="{y:.1}" font-family="sans-serif" font-size="12" fill="#222222" text-anchor="middle" transform="rotate(-90 18 {y:.1})">detuning (GHz)</text>"##,
        y = MARGIN_TOP + grid_h / 2.0,
    );

    // Color legend: vertical bar with 5 ticks.
    let lx = MARGIN_LEFT + grid_w + 24.0;
    let steps = 48usize;
    for i in 0..steps {
        let f = i as f64 / (steps - 1) as f64;
        let v = hi - f * (hi - lo);
        let y = MARGIN_TOP + f * grid_h;
        let _ = writeln!(
            svg,
            r#"<rect x="{lx:.1}" y="{y:.1}" width="16" height="{h:.2}" fill="{c}"/>"#,
            h = grid_h / steps as f64 + 0.5,
            c = color_for(channel, v, lo, hi)
        );
    }
    for i in 0..5 {
        let f = i as f64 / 4.0;
        let v = hi - f * (hi - lo);
        let y = MARGIN_TOP + f * grid_h + 4.0;
        let _ = writeln!(
            svg,
            r##"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="11" fill="#222222">{v:.2}</text>"##,
            x = lx + 22.0,
        );
    }
    let legend_name = match channel {
        MapChannel::BerOut => "log10 BER_out",
        MapChannel::Power => "power (dBm)",
        MapChannel::Rb => "log10 RB",
    };
    let _ = writeln!(
        svg,
        r##"<text x="{lx:.1}" y="{y:.1}" font-family="sans-serif" font-size="12" fill="#222222">{legend_name}</text>"##,
        y = MARGIN_TOP - 10.0,
    );

    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Map a value to a fill color. The RB channel uses the dual ramp of the
/// reference maps: blue-to-yellow where the ring improves matters (RB > 0),
/// a black-to-white gray scale where it is neutral or harmful.
fn color_for(channel: MapChannel, v: f64, lo: f64, hi: f64) -> String {
    match channel {
        MapChannel::Rb => {
            if v > 0.0 {
                let f = if hi > 0.0 {
                    (v / hi).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                lerp_ramp(&BLUE_YELLOW, f)
            } else {
                // 0 -> black, most negative -> white.
                let f = if lo < 0.0 {
                    (v / lo).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let g = (f * 235.0).round() as u8;
                format!("#{g:02x}{g:02x}{g:02x}")
            }
        }
        _ => {
            let f = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            lerp_ramp(&VIRIDIS, f)
        }
    }
}

const VIRIDIS: [(u8, u8, u8); 7] = [
    (68, 1, 84),
    (70, 50, 127),
    (54, 92, 141),
    (39, 127, 142),
    (31, 161, 135),
    (114, 208, 85),
    (253, 231, 37),
];

const BLUE_YELLOW: [(u8, u8, u8); 5] = [
    (20, 30, 140),
    (40, 90, 200),
    (60, 160, 180),
    (150, 200, 90),
    (250, 230, 40),
];

fn lerp_ramp<const N: usize>(ramp: &[(u8, u8, u8); N], f: f64) -> String {
    let pos = f * (N - 1) as f64;
    let i = (pos.floor() as usize).min(N - 2);
    let t = pos - i as f64;
    let (r0, g0, b0) = ramp[i];
    let (r1, g1, b1) = ramp[i + 1];
    let lerp = |a: u8, b: u8| -> u8 { (a as f64 + t * (b as f64 - a as f64)).round() as u8 };
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(r0, r1),
        lerp(g0, g1),
        lerp(b0, b1)
    )
}

fn trim_float(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e9 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
