//! Plain-text import and export of shapes, meshes, fields, data and
//! derivative reports.
//!
//! Shape files hold one `key = value` entry per line (`r0`, `a[k]`,
//! `b[k]`), with `#` comments; values are written with 17 significant
//! digits and read back exactly. Tables are comma-separated with a header
//! row; metadata lines start with `#`.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::fourier::{grid_angle, BoundaryField};
use crate::functionals::{CauchyData, DataProvenance};
use crate::geometry::RadialShape;
use crate::meshing::AnnularMesh;
use crate::pde::NodalField;
use crate::shape_calculus::{FdReport, GradientReport, HessianSpectrum};

/// Name of coefficient `c` in the ordering `(r0, a_1..a_K, b_1..b_K)`.
pub fn coefficient_label(c: usize, k: usize) -> String {
    if c == 0 {
        "r0".to_string()
    } else if c <= k {
        format!("a[{c}]")
    } else {
        format!("b[{}]", c - k)
    }
}

pub fn write_shape(shape: &RadialShape, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "r0 = {:.16e}", shape.r0())?;
    for (k, a) in shape.cos_coeffs().iter().enumerate() {
        writeln!(out, "a[{}] = {a:.16e}", k + 1)?;
    }
    for (k, b) in shape.sin_coeffs().iter().enumerate() {
        writeln!(out, "b[{}] = {b:.16e}", k + 1)?;
    }
    Ok(())
}

pub fn shape_to_string(shape: &RadialShape) -> String {
    let mut buf = Vec::new();
    write_shape(shape, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// Parses the key-value shape format; missing modes below the highest
/// given index are zero.
pub fn parse_shape(text: &str) -> Result<RadialShape> {
    let mut r0 = None;
    let mut cos = BTreeMap::new();
    let mut sin = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("invalid number `{}`", value.trim())))?;
        if key == "r0" {
            if r0.replace(value).is_some() {
                return Err(parse_err("duplicate r0".into()));
            }
            continue;
        }
        let (table, index) = match (key.strip_prefix("a["), key.strip_prefix("b[")) {
            (Some(rest), _) => (&mut cos, rest),
            (_, Some(rest)) => (&mut sin, rest),
            _ => return Err(parse_err(format!("unknown key `{key}`"))),
        };
        let k: usize = index
            .strip_suffix(']')
            .and_then(|s| s.trim().parse().ok())
            .filter(|&k| k >= 1)
            .ok_or_else(|| parse_err(format!("invalid mode index in `{key}`")))?;
        if table.insert(k, value).is_some() {
            return Err(parse_err(format!("duplicate `{key}`")));
        }
    }
    let r0 = r0.ok_or(Error::Parse {
        line: 0,
        message: "missing r0".into(),
    })?;
    let k_max = cos.keys().chain(sin.keys()).copied().max().unwrap_or(0);
    let dense = |m: &BTreeMap<usize, f64>| (1..=k_max).map(|k| m.get(&k).copied().unwrap_or(0.0)).collect();
    RadialShape::new(r0, dense(&cos), dense(&sin))
}

/// Sections `nodes` (`index,x,y`), `triangles` (`index,n0,n1,n2`, counter-
/// clockwise), `inner_boundary` and `outer_boundary` (`position,node`),
/// each introduced by a `# section` line.
pub fn write_mesh(mesh: &AnnularMesh, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "# nodes")?;
    writeln!(out, "index,x,y")?;
    for (i, p) in mesh.nodes().iter().enumerate() {
        writeln!(out, "{i},{:.16e},{:.16e}", p[0], p[1])?;
    }
    writeln!(out, "# triangles")?;
    writeln!(out, "index,n0,n1,n2")?;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        writeln!(out, "{t},{},{},{}", tri[0], tri[1], tri[2])?;
    }
    for (name, nodes) in [
        ("inner_boundary", mesh.inner_boundary()),
        ("outer_boundary", mesh.outer_boundary()),
    ] {
        writeln!(out, "# {name}")?;
        writeln!(out, "position,node")?;
        for (j, n) in nodes.iter().enumerate() {
            writeln!(out, "{j},{n}")?;
        }
    }
    Ok(())
}

/// `index,x,y,value` rows in mesh node order.
pub fn write_nodal_field(field: &NodalField, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "index,x,y,value")?;
    for (i, (p, v)) in field.mesh().nodes().iter().zip(field.values()).enumerate() {
        writeln!(out, "{i},{:.16e},{:.16e},{v:.16e}", p[0], p[1])?;
    }
    Ok(())
}

fn write_metadata(out: &mut impl Write, metadata: &[(&str, String)]) -> std::io::Result<()> {
    for (key, value) in metadata {
        writeln!(out, "# {key} = {value}")?;
    }
    Ok(())
}

/// `j,theta,value` rows on the field's uniform grid, after `# key = value`
/// metadata lines.
pub fn write_boundary_field(
    field: &BoundaryField,
    metadata: &[(&str, String)],
    mut out: impl Write,
) -> std::io::Result<()> {
    write_metadata(&mut out, metadata)?;
    writeln!(out, "j,theta,value")?;
    for (j, v) in field.samples().iter().enumerate() {
        writeln!(out, "{j},{:.16e},{v:.16e}", field.angle(j))?;
    }
    Ok(())
}

/// Several boundary fields sampled on one grid, as named columns.
pub fn write_boundary_table(
    columns: &[(&str, &BoundaryField)],
    metadata: &[(&str, String)],
    mut out: impl Write,
) -> std::io::Result<()> {
    let n = columns.first().map_or(0, |(_, f)| f.len());
    write_metadata(&mut out, metadata)?;
    write!(out, "j,theta")?;
    for (name, _) in columns {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for j in 0..n {
        write!(out, "{j},{:.16e}", grid_angle(j, n))?;
        for (_, field) in columns {
            write!(out, ",{:.16e}", field.samples()[j])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Cauchy data as `j,theta,g_n,g_d` with seed, noise level and fine factor
/// as metadata.
pub fn write_cauchy_data(data: &CauchyData, mut out: impl Write) -> std::io::Result<()> {
    let n = data.g_d.len();
    let g_n = if data.g_n.len() == n {
        data.g_n.clone()
    } else {
        data.g_n.resample(n).map_err(std::io::Error::other)?
    };
    let p = data.provenance;
    write_boundary_table(
        &[("g_n", &g_n), ("g_d", &data.g_d)],
        &[
            ("seed", p.seed.to_string()),
            ("noise_level", format!("{:.16e}", p.noise_level)),
            ("fine_factor", p.fine_factor.to_string()),
        ],
        &mut out,
    )
}

pub fn parse_cauchy_data(text: &str) -> Result<CauchyData> {
    let mut provenance = DataProvenance::default();
    let mut g_n = Vec::new();
    let mut g_d = Vec::new();
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let Some((key, value)) = meta.split_once('=') else {
                continue;
            };
            let value = value.trim();
            let bad = |_| err(format!("invalid value `{value}`"));
            match key.trim() {
                "seed" => provenance.seed = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "noise_level" => {
                    provenance.noise_level = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?
                }
                "fine_factor" => {
                    provenance.fine_factor = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
                }
                _ => {}
            }
            continue;
        }
        if !header_seen {
            if line != "j,theta,g_n,g_d" {
                return Err(err(format!("unexpected header `{line}`")));
            }
            header_seen = true;
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(err(format!("expected 4 columns, got {}", cols.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| err(format!("invalid number `{s}`")));
        g_n.push(num(cols[2])?);
        g_d.push(num(cols[3])?);
    }
    CauchyData::new(
        BoundaryField::from_samples(g_n)?,
        BoundaryField::from_samples(g_d)?,
        provenance,
    )
}

/// The Hessian over the radial Fourier basis as a labeled matrix.
pub fn write_hessian_matrix(spectrum: &HessianSpectrum, mut out: impl Write) -> std::io::Result<()> {
    let k = spectrum.k_basis;
    let labels: Vec<String> = (0..spectrum.basis_size).map(|c| coefficient_label(c, k)).collect();
    writeln!(out, "# symmetry_defect = {:.3e}", spectrum.symmetry_defect)?;
    writeln!(out, "row,{}", labels.join(","))?;
    for (i, label) in labels.iter().enumerate() {
        write!(out, "{label}")?;
        for j in 0..spectrum.basis_size {
            write!(out, ",{:.16e}", spectrum.matrix[(i, j)])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Sorted eigenvalues, then the per-mode eigenvalues.
pub fn write_eigenvalues(spectrum: &HessianSpectrum, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "# norm_exponent = {}", spectrum.norm_exponent.value())?;
    writeln!(out, "# rayleigh_lower_bound = {:.16e}", spectrum.rayleigh_lower_bound)?;
    writeln!(out, "index,eigenvalue,ratio_to_first")?;
    let first = spectrum.eigenvalues[0];
    for (i, l) in spectrum.eigenvalues.iter().enumerate() {
        writeln!(out, "{},{l:.16e},{:.16e}", i + 1, l / first)?;
    }
    Ok(())
}

pub fn write_mode_eigenvalues(spectrum: &HessianSpectrum, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "mode,eigenvalue")?;
    for (k, l) in spectrum.mode_eigenvalues.iter().enumerate() {
        writeln!(out, "{k},{l:.16e}")?;
    }
    Ok(())
}

pub fn write_gradient(report: &GradientReport, mut out: impl Write) -> std::io::Result<()> {
    let k = (report.coeff_gradient.len() - 1) / 2;
    if let Some(e) = report.fd_relative_error {
        writeln!(out, "# fd_relative_error = {e:.6e}")?;
    }
    writeln!(out, "coefficient,gradient")?;
    for (c, g) in report.coeff_gradient.iter().enumerate() {
        writeln!(out, "{},{g:.16e}", coefficient_label(c, k))?;
    }
    Ok(())
}

/// Adjoint against finite-difference gradients, one column per step.
pub fn write_fd_report(report: &FdReport, mut out: impl Write) -> std::io::Result<()> {
    let k = (report.adjoint.coeff_gradient.len() - 1) / 2;
    writeln!(out, "# best_relative_error = {:.6e}", report.best_error)?;
    writeln!(out, "# best_step = {:e}", report.best_step)?;
    writeln!(out, "# regime = {:?}", report.regime)?;
    write!(out, "coefficient,adjoint")?;
    for s in &report.steps {
        write!(out, ",fd_{:e}", s.step)?;
    }
    writeln!(out)?;
    for (i, &c) in report.components.iter().enumerate() {
        write!(
            out,
            "{},{:.16e}",
            coefficient_label(c, k),
            report.adjoint.coeff_gradient[c]
        )?;
        for s in &report.steps {
            write!(out, ",{:.16e}", s.fd_gradient[i])?;
        }
        writeln!(out)?;
    }
    writeln!(out, "step,relative_error")?;
    for s in &report.steps {
        writeln!(out, "{:e},{:.6e}", s.step, s.relative_error)?;
    }
    Ok(())
}
