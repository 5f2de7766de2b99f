// In-process renderer for a miniature chart language.
//
// One directive per line, `#` starts a comment:
//
//   chart bar|line|scatter    chart kind (default bar)
//   data 3 5 2.5 7            values to plot
//   color red|#1f77b4         series colour (default blue)
//   style solid|dashed        line style
//   title / xlabel / ylabel   free text, accepted but not drawn
//   save | show               emit the current figure (the last one wins)
//   fail <message>            raise a runtime error
//   loop                      never terminate
//   alloc <bytes>             allocate memory
//
// The whole script is parsed before anything runs, so a bad directive is a
// compile error even after a `save`.

use std::time::Duration;

use image::{DynamicImage, Rgb, RgbImage};

use super::{ExecutionLimits, RenderOutcome, RenderStatus, Renderer, SandboxError};
use crate::image_io::encode_png;

/// Canvas size in pixels.
pub const TOY_CANVAS: (u32, u32) = (160, 120);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Bar,
    Line,
    Scatter,
}

#[derive(Debug, Clone, PartialEq)]
enum Op {
    Chart(Kind),
    Data(Vec<f64>),
    Color([u8; 3]),
    Dashed(bool),
    Save,
    Fail(String),
    Loop,
    Alloc(u64),
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ToyRenderer;

impl ToyRenderer {
    pub fn new() -> Self {
        ToyRenderer
    }
}

fn parse_color(word: &str) -> Option<[u8; 3]> {
    let named = match word {
        "red" => Some([214, 39, 40]),
        "green" => Some([44, 160, 44]),
        "blue" => Some([31, 119, 180]),
        "orange" => Some([255, 127, 14]),
        "purple" => Some([148, 103, 189]),
        "black" => Some([0, 0, 0]),
        "gray" | "grey" => Some([127, 127, 127]),
        _ => None,
    };
    if named.is_some() {
        return named;
    }
    let hex = word.strip_prefix('#')?;
    if hex.len() != 6 {
        return None;
    }
    let bytes = hex::decode(hex).ok()?;
    Some([bytes[0], bytes[1], bytes[2]])
}

fn parse(code: &str) -> Result<Vec<Op>, String> {
    let mut ops = Vec::new();
    for (idx, raw) in code.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        let err = |m: &str| format!("SyntaxError: line {}: {m}: {raw:?}", idx + 1);
        let op = match head {
            "chart" => Op::Chart(match rest {
                "bar" => Kind::Bar,
                "line" => Kind::Line,
                "scatter" => Kind::Scatter,
                _ => return Err(err("unknown chart kind")),
            }),
            "data" => {
                let values: Result<Vec<f64>, _> =
                    rest.split_whitespace().map(str::parse::<f64>).collect();
                match values {
                    Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Op::Data(v),
                    Ok(_) => return Err(err("data needs at least one finite value")),
                    Err(_) => return Err(err("invalid number")),
                }
            }
            "color" => Op::Color(parse_color(rest).ok_or_else(|| err("unknown colour"))?),
            "style" => Op::Dashed(match rest {
                "solid" => false,
                "dashed" => true,
                _ => return Err(err("unknown style")),
            }),
            "title" | "xlabel" | "ylabel" => continue,
            "save" | "show" if rest.is_empty() => Op::Save,
            "fail" => Op::Fail(rest.to_string()),
            "loop" if rest.is_empty() => Op::Loop,
            "alloc" => Op::Alloc(rest.parse().map_err(|_| err("invalid byte count"))?),
            _ => return Err(err("invalid directive")),
        };
        ops.push(op);
    }
    Ok(ops)
}

struct Figure {
    kind: Kind,
    data: Option<Vec<f64>>,
    color: [u8; 3],
    dashed: bool,
}

fn draw(fig: &Figure, data: &[f64]) -> RgbImage {
    let (w, h) = TOY_CANVAS;
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let (left, right, top, bottom) = (16i64, w as i64 - 8, 8i64, h as i64 - 16);
    let axis = Rgb([60, 60, 60]);
    for x in left..=right {
        img.put_pixel(x as u32, bottom as u32, axis);
    }
    for y in top..=bottom {
        img.put_pixel(left as u32, y as u32, axis);
    }

    let lo = data.iter().cloned().fold(0.0f64, f64::min);
    let hi = data.iter().cloned().fold(0.0f64, f64::max);
    let span = if hi - lo > 0.0 { hi - lo } else { 1.0 };
    let y_of = |v: f64| bottom - 1 - (((v - lo) / span) * (bottom - 1 - top) as f64).round() as i64;
    let n = data.len() as i64;
    let slot = (right - left - 1) as f64 / n as f64;
    let x_of = |i: i64| left + 1 + ((i as f64 + 0.5) * slot).round() as i64;
    let color = Rgb(fig.color);
    let put = |img: &mut RgbImage, x: i64, y: i64| {
        if x > left && x <= right && y >= top && y < bottom {
            img.put_pixel(x as u32, y as u32, color);
        }
    };

    match fig.kind {
        Kind::Bar => {
            let half = ((slot * 0.35).floor() as i64).max(1);
            let zero = y_of(0.0);
            for (i, &v) in data.iter().enumerate() {
                let cx = x_of(i as i64);
                let (y0, y1) = {
                    let y = y_of(v);
                    (y.min(zero), y.max(zero))
                };
                for x in cx - half..=cx + half {
                    for y in y0..=y1 {
                        put(&mut img, x, y);
                    }
                }
            }
        }
        Kind::Line => {
            let mut run = 0i64;
            for i in 0..n.saturating_sub(1).max(0) {
                let (x0, y0) = (x_of(i), y_of(data[i as usize]));
                let (x1, y1) = (x_of(i + 1), y_of(data[i as usize + 1]));
                let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
                for s in 0..=steps {
                    run += 1;
                    if fig.dashed && run % 10 >= 6 {
                        continue;
                    }
                    let x = x0 + ((x1 - x0) * s) / steps;
                    let y = y0 + ((y1 - y0) * s) / steps;
                    for dy in 0..2 {
                        put(&mut img, x, y + dy);
                    }
                }
            }
            if n == 1 {
                put(&mut img, x_of(0), y_of(data[0]));
            }
        }
        Kind::Scatter => {
            for (i, &v) in data.iter().enumerate() {
                let (cx, cy) = (x_of(i as i64), y_of(v));
                for dx in -2..=2 {
                    for dy in -2..=2 {
                        put(&mut img, cx + dx, cy + dy);
                    }
                }
            }
        }
    }
    img
}

impl Renderer for ToyRenderer {
    fn execute(&self, code: &str, limits: &ExecutionLimits) -> Result<RenderOutcome, SandboxError> {
        let ops = match parse(code) {
            Ok(ops) => ops,
            Err(msg) => {
                return Ok(RenderOutcome::failure(
                    RenderStatus::CompileError,
                    msg,
                    Duration::ZERO,
                ))
            }
        };
        let mut fig = Figure {
            kind: Kind::Bar,
            data: None,
            color: [31, 119, 180],
            dashed: false,
        };
        let mut saved: Option<RgbImage> = None;
        for op in ops {
            match op {
                Op::Chart(k) => fig.kind = k,
                Op::Data(d) => fig.data = Some(d),
                Op::Color(c) => fig.color = c,
                Op::Dashed(d) => fig.dashed = d,
                Op::Save => match &fig.data {
                    Some(data) => saved = Some(draw(&fig, data)),
                    None => {
                        return Ok(RenderOutcome::failure(
                            RenderStatus::RuntimeError,
                            "RuntimeError: save called before any data was plotted",
                            Duration::ZERO,
                        ))
                    }
                },
                Op::Fail(msg) => {
                    return Ok(RenderOutcome::failure(
                        RenderStatus::RuntimeError,
                        format!("RuntimeError: {msg}"),
                        Duration::ZERO,
                    ))
                }
                Op::Loop => {
                    return Ok(RenderOutcome::failure(
                        RenderStatus::Timeout,
                        format!(
                            "killed after exceeding wall-clock limit of {:.1}s",
                            limits.wall_clock_secs
                        ),
                        limits.wall_clock(),
                    ))
                }
                Op::Alloc(bytes) if bytes > limits.memory_bytes => {
                    return Ok(RenderOutcome::failure(
                        RenderStatus::ResourceKill,
                        format!(
                            "killed: allocation of {bytes} bytes exceeds memory cap {}",
                            limits.memory_bytes
                        ),
                        Duration::ZERO,
                    ))
                }
                Op::Alloc(_) => {}
            }
        }
        let Some(img) = saved else {
            return Ok(RenderOutcome::failure(
                RenderStatus::NoImage,
                "script finished without saving a figure",
                Duration::ZERO,
            ));
        };
        let png = encode_png(&DynamicImage::ImageRgb8(img))
            .map_err(|e| SandboxError::Unavailable(e.to_string()))?;
        if png.len() as u64 > limits.output_image_max_bytes {
            return Ok(RenderOutcome::failure(
                RenderStatus::ResourceKill,
                format!("output image of {} bytes exceeds cap", png.len()),
                Duration::ZERO,
            ));
        }
        Ok(RenderOutcome::success(png, Duration::ZERO))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_io::decode;
    use crate::sandbox::batch_execute;

    fn run(code: &str) -> RenderOutcome {
        ToyRenderer
            .execute(code, &ExecutionLimits::default())
            .unwrap()
    }

    #[test]
    fn valid_script_renders_png() {
        let out = run("chart line\ndata 1 3 2 5\ncolor red\nsave");
        assert!(out.is_success(), "{}", out.diagnostic);
        let img = decode(out.image.as_ref().unwrap()).unwrap();
        assert_eq!((img.width(), img.height()), TOY_CANVAS);
    }

    #[test]
    fn render_is_deterministic() {
        let code = "chart bar\ndata 4 -2 7\nsave";
        assert_eq!(run(code).image, run(code).image);
    }

    #[test]
    fn failure_classes() {
        assert_eq!(run("chart pie\nsave").status, RenderStatus::CompileError);
        assert_eq!(run("data 1 x 2").status, RenderStatus::CompileError);
        assert_eq!(
            run("data 1 2\nsave\nbogus").status,
            RenderStatus::CompileError
        );
        assert_eq!(
            run("data 1 2\nfail boom\nsave").status,
            RenderStatus::RuntimeError
        );
        assert_eq!(run("save").status, RenderStatus::RuntimeError);
        assert_eq!(run("data 1 2 3").status, RenderStatus::NoImage);
        let timeout = ToyRenderer
            .execute("loop", &ExecutionLimits::default().with_wall_clock(2.0))
            .unwrap();
        assert_eq!(timeout.status, RenderStatus::Timeout);
        assert!(timeout.duration >= Duration::from_secs(2));
        assert_eq!(
            run("alloc 99999999999999\ndata 1\nsave").status,
            RenderStatus::ResourceKill
        );
    }

    #[test]
    fn last_save_wins() {
        let two = run("data 1 2\nsave\ncolor red\nsave");
        let red = run("data 1 2\ncolor red\nsave");
        assert_eq!(two.image, red.image);
    }

    #[test]
    fn style_changes_pixels() {
        let solid = run("chart line\ndata 1 5 2\nsave");
        let dashed = run("chart line\ndata 1 5 2\nstyle dashed\nsave");
        let green = run("chart line\ndata 1 5 2\ncolor green\nsave");
        assert_ne!(solid.image, dashed.image);
        assert_ne!(solid.image, green.image);
    }

    #[test]
    fn batch_preserves_order() {
        let codes = ["data 1\nsave", "chart ???", "data 2\nsave"];
        let out = batch_execute(&ToyRenderer, &codes, &ExecutionLimits::default(), 2).unwrap();
        let statuses: Vec<_> = out.iter().map(|o| o.status).collect();
        assert_eq!(
            statuses,
            [
                RenderStatus::Success,
                RenderStatus::CompileError,
                RenderStatus::Success
            ]
        );
        assert!(
            batch_execute::<&str>(&ToyRenderer, &[], &ExecutionLimits::default(), 1)
                .unwrap()
                .is_empty()
        );
    }
}
