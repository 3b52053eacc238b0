//! CSV files of the pipeline. Floats are written in shortest round-trip form,
//! so every file parses back to the exact values written. Writes go to a
//! temporary file that is renamed into place.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::design::DesignSet;
use crate::error::{Error, Result};
use crate::kernel::CorrelationLengths;
use crate::likelihood::AlphaProfile;
use crate::pod::PodCurve;

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn to_csv(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_owned).collect());
    }
    Ok((header, rows))
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Parse(format!("{what}: cannot parse {s:?} as a number")))
}

fn parse_opt(s: &str, what: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(s, what).map(Some)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn expect_header(path: &Path, got: &[String], want: &[String]) -> Result<()> {
    if got != want {
        return Err(Error::Parse(format!(
            "{}: expected header {}, found {}",
            path.display(),
            want.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

/// `a, x1, ..., x_{r-1}`
pub fn coordinate_header(r: usize) -> Vec<String> {
    std::iter::once("a".to_string())
        .chain((1..r).map(|k| format!("x{k}")))
        .collect()
}

fn point_rows(path: &Path, rows: &[Vec<String>], r: usize) -> Result<Vec<Vec<f64>>> {
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            row[..r]
                .iter()
                .map(|c| parse_f64(c, &format!("{} row {}", path.display(), i + 1)))
                .collect()
        })
        .collect()
}

pub fn write_design(path: &Path, design: &DesignSet) -> Result<()> {
    let rows = design
        .points()
        .map(|p| p.iter().map(|v| v.to_string()).collect());
    write_atomic(path, &to_csv(&coordinate_header(design.r()), rows)?)
}

pub fn read_design(path: &Path) -> Result<DesignSet> {
    let (header, rows) = read_table(path)?;
    let r = header.len();
    if r == 0 {
        return Err(Error::Parse(format!("{}: empty header", path.display())));
    }
    expect_header(path, &header, &coordinate_header(r))?;
    DesignSet::new(point_rows(path, &rows, r)?)
}

/// Observations: unit-cube coordinates followed by the raw output `z`.
pub fn write_observations(path: &Path, design: &DesignSet, z: &[f64]) -> Result<()> {
    if z.len() != design.n() {
        return Err(Error::DimensionMismatch {
            expected: design.n(),
            got: z.len(),
        });
    }
    let mut header = coordinate_header(design.r());
    header.push("z".into());
    let rows = design.points().zip(z).map(|(p, zi)| {
        p.iter()
            .chain(std::iter::once(zi))
            .map(|v| v.to_string())
            .collect()
    });
    write_atomic(path, &to_csv(&header, rows)?)
}

pub fn read_observations(path: &Path) -> Result<(DesignSet, Vec<f64>)> {
    let (header, rows) = read_table(path)?;
    if header.len() < 2 {
        return Err(Error::Parse(format!(
            "{}: need columns a, ..., z",
            path.display()
        )));
    }
    let r = header.len() - 1;
    let mut want = coordinate_header(r);
    want.push("z".into());
    expect_header(path, &header, &want)?;
    let points = point_rows(path, &rows, r)?;
    let z = rows
        .iter()
        .enumerate()
        .map(|(i, row)| parse_f64(&row[r], &format!("{} row {}", path.display(), i + 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok((DesignSet::new(points)?, z))
}

/// Raw rows in physical units with the same layout as observations.
pub fn read_physical_observations(path: &Path) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let (header, rows) = read_table(path)?;
    if header.len() < 2 {
        return Err(Error::Parse(format!(
            "{}: need columns a, ..., z",
            path.display()
        )));
    }
    let r = header.len() - 1;
    let mut want = coordinate_header(r);
    want.push("z".into());
    expect_header(path, &header, &want)?;
    let points = point_rows(path, &rows, r)?;
    let z = rows
        .iter()
        .map(|row| parse_f64(&row[r], "z"))
        .collect::<Result<_>>()?;
    Ok((points, z))
}

pub fn write_alpha_profile(path: &Path, profile: &AlphaProfile) -> Result<()> {
    let header = ["alpha", "log_l_log", "log_l_map"].map(String::from);
    let rows = (0..profile.len()).map(|i| {
        vec![
            profile.alphas[i].to_string(),
            fmt_opt(profile.log_l_log[i]),
            fmt_opt(profile.log_l_map[i]),
        ]
    });
    write_atomic(path, &to_csv(&header, rows)?)
}

/// The scalar columns of an alpha profile; draws and MAP points are not
/// part of this file.
pub fn read_alpha_profile(path: &Path) -> Result<AlphaProfile> {
    let (header, rows) = read_table(path)?;
    expect_header(
        path,
        &header,
        &["alpha", "log_l_log", "log_l_map"].map(String::from),
    )?;
    let mut p = AlphaProfile {
        alphas: Vec::new(),
        log_l_log: Vec::new(),
        log_l_map: Vec::new(),
        map_theta: Vec::new(),
        draws: Vec::new(),
    };
    for row in rows {
        p.alphas.push(parse_f64(&row[0], "alpha")?);
        p.log_l_log.push(parse_opt(&row[1], "log_l_log")?);
        p.log_l_map.push(parse_opt(&row[2], "log_l_map")?);
        p.map_theta.push(None);
        p.draws.push(None);
    }
    Ok(p)
}

/// `theta_draws_<alpha>.csv`, with `alpha` in shortest form.
pub fn theta_draws_file_name(alpha: f64) -> String {
    format!("theta_draws_{alpha}.csv")
}

pub fn write_theta_draws(path: &Path, draws: &[CorrelationLengths]) -> Result<()> {
    let r = draws.first().map_or(0, |d| d.len());
    let header: Vec<String> = (1..=r).map(|k| format!("theta{k}")).collect();
    let rows = draws
        .iter()
        .map(|d| d.as_slice().iter().map(|v| v.to_string()).collect());
    write_atomic(path, &to_csv(&header, rows)?)
}

pub fn read_theta_draws(path: &Path) -> Result<Vec<CorrelationLengths>> {
    let (header, rows) = read_table(path)?;
    let want: Vec<String> = (1..=header.len()).map(|k| format!("theta{k}")).collect();
    expect_header(path, &header, &want)?;
    rows.iter()
        .map(|row| {
            CorrelationLengths::new(
                row.iter()
                    .map(|c| parse_f64(c, "theta"))
                    .collect::<Result<_>>()?,
            )
        })
        .collect()
}

/// One row of `predictions.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub x: Vec<f64>,
    pub location_transformed: f64,
    pub scale_transformed: f64,
    pub safe_prob: f64,
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    let r = rows.first().map_or(1, |p| p.x.len());
    let mut header = coordinate_header(r);
    header.extend(["location_transformed", "scale_transformed", "safe_prob"].map(String::from));
    let out = rows.iter().map(|p| {
        p.x.iter()
            .chain([p.location_transformed, p.scale_transformed, p.safe_prob].iter())
            .map(|v| v.to_string())
            .collect()
    });
    write_atomic(path, &to_csv(&header, out)?)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let (header, rows) = read_table(path)?;
    if header.len() < 4 {
        return Err(Error::Parse(format!("{}: too few columns", path.display())));
    }
    let r = header.len() - 3;
    let mut want = coordinate_header(r);
    want.extend(["location_transformed", "scale_transformed", "safe_prob"].map(String::from));
    expect_header(path, &header, &want)?;
    rows.iter()
        .map(|row| {
            let v = row
                .iter()
                .map(|c| parse_f64(c, "prediction"))
                .collect::<Result<Vec<_>>>()?;
            Ok(PredictionRow {
                x: v[..r].to_vec(),
                location_transformed: v[r],
                scale_transformed: v[r + 1],
                safe_prob: v[r + 2],
            })
        })
        .collect()
}

/// Column name of a safety level: `pod_95` for 0.95, `pod_99.5` for 0.995.
pub fn gamma_column(gamma: f64) -> String {
    let pct = (gamma * 100.0 * 1e9).round() / 1e9;
    format!("pod_{pct}")
}

fn gamma_from_column(name: &str) -> Result<f64> {
    let pct = name
        .strip_prefix("pod_")
        .ok_or_else(|| Error::Parse(format!("unexpected column {name:?}")))?;
    Ok(parse_f64(pct, "safety level")? / 100.0)
}

pub fn write_pod_curve(path: &Path, curve: &PodCurve) -> Result<()> {
    let mut header = vec!["a".to_string(), "pod_mean".to_string()];
    header.extend(curve.pod_gamma.iter().map(|(g, _)| gamma_column(*g)));
    let rows = (0..curve.a_grid.len()).map(|k| {
        [curve.a_grid[k], curve.pod_mean[k]]
            .into_iter()
            .chain(curve.pod_gamma.iter().map(|(_, v)| v[k]))
            .map(|v| v.to_string())
            .collect()
    });
    write_atomic(path, &to_csv(&header, rows)?)
}

/// Curve values; `n_mc` and `seed` are not stored in the file and read back
/// as zero.
pub fn read_pod_curve(path: &Path) -> Result<PodCurve> {
    let (header, rows) = read_table(path)?;
    if header.len() < 2 || header[0] != "a" || header[1] != "pod_mean" {
        return Err(Error::Parse(format!(
            "{}: expected columns a, pod_mean, ...",
            path.display()
        )));
    }
    let gammas = header[2..]
        .iter()
        .map(|h| gamma_from_column(h))
        .collect::<Result<Vec<_>>>()?;
    let mut curve = PodCurve {
        a_grid: Vec::new(),
        pod_mean: Vec::new(),
        pod_gamma: gammas.iter().map(|g| (*g, Vec::new())).collect(),
        n_mc: 0,
        seed: 0,
    };
    for row in rows {
        let v = row
            .iter()
            .map(|c| parse_f64(c, "pod"))
            .collect::<Result<Vec<_>>>()?;
        curve.a_grid.push(v[0]);
        curve.pod_mean.push(v[1]);
        for (j, (_, col)) in curve.pod_gamma.iter_mut().enumerate() {
            col.push(v[2 + j]);
        }
    }
    Ok(curve)
}
