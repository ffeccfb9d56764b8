//! Sweep grid expressions: `beta=50:90:5,delta=[0.6,0.8]`.
//!
//! Each axis is `key=start:stop:step` (inclusive of `stop`) or
//! `key=[v1,v2,...]`. A key is either a dotted path into the expanded run
//! config (`loss.beta`) or a leaf name that occurs exactly once in it.

use serde_json::Value;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<f64>,
}

/// Most points a single axis may expand to.
const MAX_AXIS_POINTS: usize = 10_000;

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(format!("grid: {}", msg.into()))
}

/// Splits on commas outside brackets.
fn split_top_level(expr: &str) -> Result<Vec<&str>, CliError> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in expr.char_indices() {
        match ch {
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth < 0 {
                    return Err(bad("unbalanced `]`"));
                }
            }
            ',' if depth == 0 => {
                parts.push(&expr[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(bad("unbalanced `[`"));
    }
    parts.push(&expr[start..]);
    Ok(parts)
}

fn number(s: &str, axis: &str) -> Result<f64, CliError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| bad(format!("`{s}` in `{axis}` is not a number")))?;
    if !v.is_finite() {
        return Err(bad(format!("`{s}` in `{axis}` is not finite")));
    }
    Ok(v)
}

/// Rounds away float noise from `start + i·step`.
fn tidy(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

pub fn parse_grid(expr: &str) -> Result<Vec<Axis>, CliError> {
    if expr.trim().is_empty() {
        return Err(bad("empty grid"));
    }
    let mut axes: Vec<Axis> = Vec::new();
    for part in split_top_level(expr)? {
        let (key, spec) = part
            .split_once('=')
            .ok_or_else(|| bad(format!("`{part}` is not `key=values`")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(bad(format!("`{part}` has an empty key")));
        }
        if axes.iter().any(|a| a.key == key) {
            return Err(bad(format!("key `{key}` appears twice")));
        }
        let spec = spec.trim();
        let values = if let Some(list) = spec.strip_prefix('[') {
            let list = list
                .strip_suffix(']')
                .ok_or_else(|| bad(format!("`{part}`: list must end with `]`")))?;
            if list.trim().is_empty() {
                return Err(bad(format!("`{part}`: empty list")));
            }
            list.split(',')
                .map(|s| number(s, part))
                .collect::<Result<Vec<_>, _>>()?
        } else {
            let fields: Vec<&str> = spec.split(':').collect();
            let [start, stop, step] = fields[..] else {
                return Err(bad(format!(
                    "`{part}` is neither `start:stop:step` nor `[v1,...]`"
                )));
            };
            let (start, stop, step) = (
                number(start, part)?,
                number(stop, part)?,
                number(step, part)?,
            );
            if step <= 0.0 || stop < start {
                return Err(bad(format!("`{part}` needs step > 0 and stop >= start")));
            }
            let count = ((stop - start) / step + 1e-9).floor() + 1.0;
            if count > MAX_AXIS_POINTS as f64 {
                return Err(bad(format!(
                    "`{part}` expands to more than {MAX_AXIS_POINTS} points"
                )));
            }
            (0..count as usize)
                .map(|i| tidy(start + i as f64 * step))
                .collect()
        };
        axes.push(Axis {
            key: key.to_string(),
            values,
        });
    }
    Ok(axes)
}

/// Cartesian product of the axes, first axis slowest.
pub fn grid_points(axes: &[Axis]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

fn leaf_paths(value: &Value, prefix: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    if let Value::Object(map) = value {
        for (k, v) in map {
            prefix.push(k.clone());
            if v.is_object() {
                leaf_paths(v, prefix, out);
            } else {
                out.push(prefix.clone());
            }
            prefix.pop();
        }
    }
}

/// Resolves a grid key to a path of object keys inside `config`.
pub fn resolve_key(config: &Value, key: &str) -> Result<Vec<String>, CliError> {
    let mut leaves = Vec::new();
    leaf_paths(config, &mut Vec::new(), &mut leaves);
    let matches: Vec<&Vec<String>> = if key.contains('.') {
        let want: Vec<&str> = key.split('.').collect();
        leaves
            .iter()
            .filter(|p| p.iter().map(String::as_str).eq(want.iter().copied()))
            .collect()
    } else {
        leaves
            .iter()
            .filter(|p| p.last().is_some_and(|l| l == key))
            .collect()
    };
    match matches[..] {
        [path] => Ok(path.clone()),
        [] => Err(bad(format!("`{key}` is not a field of this config"))),
        _ => Err(bad(format!(
            "`{key}` is ambiguous: {}",
            matches
                .iter()
                .map(|p| p.join("."))
                .collect::<Vec<_>>()
                .join(", ")
        ))),
    }
}

/// Writes `v` at `path`, keeping integer fields integral.
pub fn set_number(config: &mut Value, path: &[String], v: f64) -> Result<(), CliError> {
    let mut slot = &mut *config;
    for k in path {
        slot = slot.get_mut(k).ok_or_else(|| {
            bad(format!(
                "`{}` is not a field of this config",
                path.join(".")
            ))
        })?;
    }
    *slot = if slot.is_u64() || slot.is_i64() {
        if v.fract() != 0.0 || v < 0.0 {
            return Err(bad(format!(
                "`{}` needs a non-negative integer, got {v}",
                path.join(".")
            )));
        }
        Value::from(v as u64)
    } else if slot.is_f64() {
        Value::from(v)
    } else {
        return Err(bad(format!("`{}` is not a numeric field", path.join("."))));
    };
    Ok(())
}
