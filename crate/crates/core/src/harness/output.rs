use std::fmt::Write as _;
use std::path::Path;

use super::ResultRow;
use crate::error::{Error, Result};
use crate::problems::Provenance;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn header(k: usize) -> String {
    let mut cols = vec!["d".to_string(), "n".to_string()];
    cols.extend((1..=k).map(|i| format!("value_{i}")));
    cols.extend((1..=k).map(|i| format!("reference_{i}")));
    cols.extend(
        ["provenance", "rel_l2_error", "gaussian_scalars", "uniforms", "runtime_seconds"]
            .map(String::from),
    );
    cols.join(",")
}

/// CSV text for `rows`. Floats use the shortest representation that
/// round-trips; `runtime_seconds` is empty when timing was disabled.
pub fn write_csv(rows: &[ResultRow]) -> Result<String> {
    let k = rows
        .first()
        .map(|r| r.value.len())
        .ok_or_else(|| Error::InvalidSpec("no rows to write".into()))?;
    let mut out = header(k);
    out.push('\n');
    for r in rows {
        if r.value.len() != k || r.reference.len() != k {
            return Err(Error::InvalidSpec("rows disagree on the system dimension".into()));
        }
        let mut fields = vec![r.d.to_string(), r.n.to_string()];
        fields.extend(r.value.iter().map(f64::to_string));
        fields.extend(r.reference.iter().map(f64::to_string));
        fields.push(r.provenance.to_string());
        fields.push(r.rel_l2_error.to_string());
        fields.push(r.gaussian_scalars.to_string());
        fields.push(r.uniforms.to_string());
        fields.push(r.runtime_seconds.map(|s| s.to_string()).unwrap_or_default());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    std::fs::write(path, write_csv(rows)?).map_err(io_err(path))
}

/// Inverse of [`write_csv`]. `realizations` are not stored and come back
/// empty.
pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines().enumerate();
    let (_, head) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty CSV".into(),
    })?;
    let ncols = head.split(',').count();
    if ncols < 9 || (ncols - 7) % 2 != 0 {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected column count {ncols}"),
        });
    }
    let k = (ncols - 7) / 2;
    if head != header(k) {
        return Err(Error::Parse {
            line: 1,
            msg: "unexpected header".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse { line: i + 1, msg };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != ncols {
            return Err(bad(format!("expected {ncols} fields, got {}", f.len())));
        }
        let float = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("bad number `{s}`: {e}")));
        let int = |s: &str| s.parse::<u64>().map_err(|e| bad(format!("bad integer `{s}`: {e}")));
        let value = f[2..2 + k].iter().map(|s| float(s)).collect::<Result<Vec<_>>>()?;
        let reference = f[2 + k..2 + 2 * k].iter().map(|s| float(s)).collect::<Result<Vec<_>>>()?;
        let rest = &f[2 + 2 * k..];
        let provenance: Provenance = rest[0].parse().map_err(|e: Error| bad(e.to_string()))?;
        rows.push(ResultRow {
            d: int(f[0])? as usize,
            n: u32::try_from(int(f[1])?).map_err(|e| bad(e.to_string()))?,
            value,
            reference,
            provenance,
            rel_l2_error: float(rest[1])?,
            gaussian_scalars: int(rest[2])?,
            uniforms: int(rest[3])?,
            runtime_seconds: if rest[4].is_empty() { None } else { Some(float(rest[4])?) },
            realizations: Vec::new(),
        });
    }
    Ok(rows)
}

fn fmt_vec(v: &[f64]) -> String {
    match v {
        [x] => format!("{x:.5}"),
        _ => format!(
            "({})",
            v.iter().map(|x| format!("{x:.5}")).collect::<Vec<_>>().join(", ")
        ),
    }
}

/// Human-readable table in the layout of the published results.
pub fn render_table(rows: &[ResultRow]) -> String {
    let cells: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.d.to_string(),
                r.n.to_string(),
                fmt_vec(&r.value),
                format!("{}: {}", r.provenance, fmt_vec(&r.reference)),
                format!("{:.6}", r.rel_l2_error),
                r.gaussian_scalars.to_string(),
                r.uniforms.to_string(),
                r.runtime_seconds.map_or_else(|| "-".into(), |s| format!("{s:.5}")),
            ]
        })
        .collect();
    let head = ["d", "n", "result", "reference", "rel. L2 error", "gaussians", "uniforms", "runtime [s]"];
    let mut widths: Vec<usize> = head.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cols: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (i, c) in cols.enumerate() {
            if i > 0 {
                s.push_str(" | ");
            }
            let _ = write!(s, "{c:>w$}", w = widths[i]);
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(&mut head.iter().copied());
    out.push_str(&"-".repeat(out.len().saturating_sub(1)));
    out.push('\n');
    for row in &cells {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
    }
    out
}

/// `(d, [(gaussian_scalars, rel_l2_error)])`, one series per dimension in
/// order of first appearance, points sorted by cost.
fn series(rows: &[ResultRow]) -> Vec<(usize, Vec<(u64, f64)>)> {
    let mut out: Vec<(usize, Vec<(u64, f64)>)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(d, _)| *d == r.d) {
            Some((_, pts)) => pts.push((r.gaussian_scalars, r.rel_l2_error)),
            None => out.push((r.d, vec![(r.gaussian_scalars, r.rel_l2_error)])),
        }
    }
    for (_, pts) in &mut out {
        pts.sort_by_key(|p| p.0);
    }
    out
}

/// Plain-text plot data: one whitespace-separated block per dimension,
/// blocks separated by two blank lines.
pub fn plot_data(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    for (i, (d, pts)) in series(rows).iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        let _ = writeln!(out, "# d={d}");
        out.push_str("# gaussian_scalars rel_l2_error\n");
        for (x, y) in pts {
            let _ = writeln!(out, "{x} {y}");
        }
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Self-contained log-log SVG of relative error against Gaussian draws.
pub fn plot_svg(rows: &[ResultRow]) -> String {
    let (w, h) = (640.0, 440.0);
    let (left, right, top, bottom) = (80.0, 130.0, 30.0, 60.0);
    let data = series(rows);
    let pts: Vec<(f64, f64)> = data
        .iter()
        .flat_map(|(_, p)| p.iter())
        .filter(|(x, y)| *x > 0 && *y > 0.0)
        .map(|&(x, y)| ((x as f64).log10(), y.log10()))
        .collect();
    let bounds = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if lo.is_finite() {
            let (lo, hi) = (lo.floor(), hi.ceil());
            (lo, if hi > lo { hi } else { lo + 1.0 })
        } else {
            (0.0, 1.0)
        }
    };
    let (x0, x1) = bounds(&mut pts.iter().map(|p| p.0));
    let (y0, y1) = bounds(&mut pts.iter().map(|p| p.1));
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |lx: f64| left + (lx - x0) / (x1 - x0) * pw;
    let sy = |ly: f64| top + (y1 - ly) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for e in (x0 as i32)..=(x1 as i32) {
        let x = sx(f64::from(e));
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{top}" x2="{x:.1}" y2="{}" stroke="#ddd"/><text x="{x:.1}" y="{}" text-anchor="middle">10<tspan dy="-6" font-size="9">{e}</tspan></text>"##,
            top + ph,
            top + ph + 18.0
        );
    }
    for e in (y0 as i32)..=(y1 as i32) {
        let y = sy(f64::from(e));
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">10<tspan dy="-6" font-size="9">{e}</tspan></text>"##,
            left + pw,
            left - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">number of scalar Gaussian draws</text>"#,
        left + pw / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(20,{}) rotate(-90)" text-anchor="middle">relative L2 error</text>"#,
        top + ph / 2.0
    );
    for (i, (d, p)) in data.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<(f64, f64)> = p
            .iter()
            .filter(|(x, y)| *x > 0 && *y > 0.0)
            .map(|&(x, y)| (sx((x as f64).log10()), sy(y.log10())))
            .collect();
        let poly: Vec<String> = coords.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            poly.join(" ")
        );
        for (x, y) in &coords {
            let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="{color}"/>"#);
        }
        let ly = top + 20.0 + 20.0 * i as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">d = {d}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes the SVG chart to `path` and the plot data next to it with a
/// `.dat` extension.
pub fn emit_plot(rows: &[ResultRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidSpec("no rows to plot".into()));
    }
    std::fs::write(path, plot_svg(rows)).map_err(io_err(path))?;
    let data_path = path.with_extension("dat");
    std::fs::write(&data_path, plot_data(rows)).map_err(io_err(&data_path))
}
