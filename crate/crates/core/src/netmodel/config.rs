//! Line-oriented network files.
//!
//! ```text
//! # comment
//! network, mobilenet-v1
//! input, 224, 224, 3
//! # name, kind, H, W, C, K, C', stride, pad[, se=<width>]
//! conv1, standard, 224, 224, 3, 3, 32, 2, 1
//! dws1, dwsep, 112, 112, 32, 3, 64, 1, 1
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{LayerKind, LayerSpec, NetError, NetworkSpec};
use crate::ops::ConvGeometry;

pub fn load_network(path: &Path) -> Result<NetworkSpec, NetError> {
    let text = std::fs::read_to_string(path).map_err(|source| NetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let fallback = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "network".into());
    parse_network(&text, &fallback)
}

fn number(line: usize, field: &str, what: &str) -> Result<usize, NetError> {
    field.parse().map_err(|_| NetError::Parse {
        line,
        msg: format!("{what} `{field}` is not a non-negative integer"),
    })
}

/// Parses a network file; `default_name` is used when no `network` line is present.
pub fn parse_network(text: &str, default_name: &str) -> Result<NetworkSpec, NetError> {
    let mut name = default_name.to_string();
    let mut input = None;
    let mut layers = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split(',').map(str::trim).collect();
        match fields[0] {
            "network" => {
                if fields.len() != 2 || fields[1].is_empty() {
                    return Err(NetError::Parse {
                        line,
                        msg: "expected `network, <name>`".into(),
                    });
                }
                name = fields[1].to_string();
            }
            "input" => {
                if fields.len() != 4 {
                    return Err(NetError::Parse {
                        line,
                        msg: "expected `input, H, W, C`".into(),
                    });
                }
                input = Some([
                    number(line, fields[1], "H")?,
                    number(line, fields[2], "W")?,
                    number(line, fields[3], "C")?,
                ]);
            }
            _ => layers.push(parse_layer(line, &fields)?),
        }
    }
    let input = match (input, layers.first()) {
        (Some(i), _) => i,
        (None, Some(first)) => first.input_shape(),
        (None, None) => {
            return Err(NetError::Parse {
                line: 0,
                msg: "network file declares no layers".into(),
            })
        }
    };
    NetworkSpec::new(name, input, layers)
}

fn parse_layer(line: usize, fields: &[&str]) -> Result<LayerSpec, NetError> {
    if fields.len() < 9 || fields.len() > 10 {
        return Err(NetError::Parse {
            line,
            msg: format!(
                "expected `name, kind, H, W, C, K, C', stride, pad[, se=N]`, got {} fields",
                fields.len()
            ),
        });
    }
    let kind: LayerKind = fields[1].parse().map_err(|kind| NetError::UnknownKind { line, kind })?;
    let labels = ["H", "W", "C", "K", "C'", "stride", "pad"];
    let mut v = [0usize; 7];
    for (slot, (field, label)) in v.iter_mut().zip(fields[2..9].iter().zip(labels)) {
        *slot = number(line, field, label)?;
    }
    let geometry = ConvGeometry::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6]);
    let mut layer = LayerSpec::new(fields[0], kind, geometry);
    if let Some(extra) = fields.get(9) {
        let width = extra.strip_prefix("se=").ok_or_else(|| NetError::Parse {
            line,
            msg: format!("unknown layer option `{extra}`"),
        })?;
        layer.se_width = Some(number(line, width, "squeeze width")?);
    }
    layer.validate().map_err(|e| NetError::Parse {
        line,
        msg: e.to_string(),
    })?;
    Ok(layer)
}

/// Renders a network in the format [`parse_network`] reads.
pub fn write_network(net: &NetworkSpec) -> String {
    let mut out = String::new();
    let [h, w, c] = net.input;
    let _ = writeln!(out, "network, {}", net.name);
    let _ = writeln!(out, "input, {h}, {w}, {c}");
    let _ = writeln!(out, "# name, kind, H, W, C, K, C', stride, pad[, se=N]");
    for l in &net.layers {
        let g = &l.geometry;
        let _ = write!(
            out,
            "{}, {}, {}, {}, {}, {}, {}, {}, {}",
            l.name,
            l.kind,
            g.input_h,
            g.input_w,
            g.channels_in,
            g.kernel,
            g.channels_out,
            g.stride,
            g.padding
        );
        if let Some(s) = l.se_width {
            let _ = write!(out, ", se={s}");
        }
        out.push('\n');
    }
    out
}
