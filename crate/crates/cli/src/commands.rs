//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use lmcorr_core::matrix::format_sig9;
use lmcorr_core::search::{subsample_indices, SweepPoint};
use lmcorr_core::shape::NORMALIZATION_NAME;
use lmcorr_core::{
    affinity_matrix, affinity_std, ame, block_summary, compare_format, export_matrix, import_matrix, load_dataset, nme,
    normalize_dataset, presets, search, sweep, AffinityMatrix, BlockStats, EyeConvention, FormatDescriptor,
    InputFormat, MatrixLayout, Method, SearchProblem, SquareMatrix, SweepConfig,
};
use serde::Serialize;

use crate::output::{twin_path, write_atomic};
use crate::render::{self, ColorMap, HeatmapLabels};
use crate::{
    AffinityArgs, AmeArgs, Cli, CliError, Command, FigureArgs, IngestArgs, NmeArgs, Outcome, RenderArgs, SchemeArgs,
    SearchArgs, SolverArgs, StdArgs, SweepArgs,
};

type CmdResult = Result<Outcome, CliError>;

pub fn run(cli: &Cli) -> CmdResult {
    if !(cli.ridge >= 0.0 && cli.ridge.is_finite()) {
        return Err(CliError::Usage(format!(
            "--ridge must be finite and >= 0, got {}",
            cli.ridge
        )));
    }
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Affinity(a) => affinity(cli, a),
        Command::Ame(a) => ame_cmd(cli, a),
        Command::Std(a) => std_cmd(cli, a),
        Command::Nme(a) => nme_cmd(a),
        Command::Search(a) => search_cmd(cli, a),
        Command::Sweep(a) => sweep_cmd(cli, a),
        Command::Render(a) => render_cmd(a),
    }
}

fn scheme_for(args: &SchemeArgs, m_size: usize) -> Result<FormatDescriptor, CliError> {
    if args.scheme.eq_ignore_ascii_case("auto") {
        Ok(FormatDescriptor::infer(m_size, args.eyes))
    } else {
        Ok(FormatDescriptor::by_name(&args.scheme, m_size, args.eyes)?)
    }
}

fn matrix_bytes(m: &SquareMatrix, layout: MatrixLayout) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    export_matrix(m, &mut buf, layout)?;
    Ok(buf)
}

fn write_matrix(path: &Path, m: &SquareMatrix) -> Result<(), CliError> {
    write_atomic(path, &matrix_bytes(m, MatrixLayout::from_path(path))?)
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_matrix(path: &Path) -> Result<SquareMatrix, CliError> {
    let m = import_matrix(&read_text(path)?, MatrixLayout::from_path(path))?;
    m.check_finite()?;
    Ok(m)
}

/// Writes an SVG and its CSV twin.
fn write_figure(svg_path: &Path, svg: &str, twin: &[u8]) -> Result<(), CliError> {
    write_atomic(svg_path, svg.as_bytes())?;
    write_atomic(&twin_path(svg_path), twin)
}

fn write_heatmap(fig: &FigureArgs, m: &SquareMatrix, map: ColorMap, title: &str) -> Result<(), CliError> {
    if let Some(path) = &fig.svg {
        let svg = render::heatmap(
            m,
            map,
            &HeatmapLabels {
                title,
                one_based: fig.one_based_labels,
            },
        );
        write_figure(path, &svg, &matrix_bytes(m, MatrixLayout::Csv)?)?;
    }
    Ok(())
}

fn blocks_csv(stats: &[BlockStats]) -> String {
    let mut out = String::from("block_a,block_b,count,mean,min,max\n");
    for s in stats {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.block_a,
            s.block_b,
            s.count,
            format_sig9(s.mean),
            format_sig9(s.min),
            format_sig9(s.max)
        );
    }
    out
}

fn write_blocks(path: Option<&Path>, scheme: &SchemeArgs, m: &SquareMatrix) -> Result<(), CliError> {
    let Some(path) = path else { return Ok(()) };
    let fmt = scheme_for(scheme, m.m_size())?;
    if fmt.component_blocks.is_empty() {
        return Err(CliError::Usage(format!(
            "scheme '{}' defines no component blocks; pass --scheme 300w or wflw",
            fmt.name
        )));
    }
    let stats = block_summary(m, &fmt.component_blocks)?;
    write_atomic(path, blocks_csv(&stats).as_bytes())
}

fn ingest(a: &IngestArgs) -> CmdResult {
    let d = load_dataset(&a.input.input, a.input.format)?;
    let mut json = d.to_json_string()?;
    json.push('\n');
    write_atomic(&a.out, json.as_bytes())?;
    println!("M = {}", d.m_size());
    println!("N = {}", d.len());
    println!("format = {}", d.format_name());
    Ok(Outcome::Done)
}

fn affinity(cli: &Cli, a: &AffinityArgs) -> CmdResult {
    let d = load_dataset(&a.input.input, a.input.format)?;
    let norm = normalize_dataset(&d)?;
    let aff = affinity_matrix(norm.dataset(), cli.ridge)?;
    if let Some(out) = &a.out {
        write_matrix(out, &aff)?;
    }
    write_heatmap(
        &a.figure,
        &aff,
        ColorMap::Sequential { lo: 0.0, hi: 1.0 },
        "CCA affinity matrix",
    )?;
    write_blocks(a.blocks.as_deref(), &a.scheme, &aff)?;
    println!("M = {}", d.m_size());
    println!("N = {}", d.len());
    println!("normalization = {NORMALIZATION_NAME}");
    println!("mean off-diagonal affinity = {}", format_sig9(aff.mean_off_diagonal()));
    Ok(Outcome::Done)
}

fn ame_cmd(cli: &Cli, a: &AmeArgs) -> CmdResult {
    let pred = load_dataset(&a.pred, a.format)?;
    let gt = load_dataset(&a.gt, a.format)?;
    let e = ame(&pred, &gt, cli.ridge)?;
    if let Some(out) = &a.out {
        write_matrix(out, &e)?;
    }
    let limit = e.max_abs();
    write_heatmap(
        &a.figure,
        &e,
        ColorMap::Diverging { limit },
        "Affinity matrix error (prediction - ground truth)",
    )?;
    write_blocks(a.blocks.as_deref(), &a.scheme, &e)?;
    println!("M = {}", gt.m_size());
    println!("N = {}", gt.len());
    println!("normalization = {NORMALIZATION_NAME}");
    println!("mean off-diagonal AME = {}", format_sig9(e.mean_off_diagonal()));
    println!("max |AME| = {}", format_sig9(limit));
    Ok(Outcome::Done)
}

fn std_input(path: &Path, format: InputFormat, ridge: f64) -> Result<SquareMatrix, CliError> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let as_matrix = match ext.as_deref() {
        Some("csv") => true,
        Some("json") => import_matrix(&read_text(path)?, MatrixLayout::Json).is_ok(),
        _ => false,
    };
    if as_matrix && format == InputFormat::Auto {
        return read_matrix(path);
    }
    let d = load_dataset(path, format)?;
    Ok(affinity_matrix(normalize_dataset(&d)?.dataset(), ridge)?.into_inner())
}

fn std_cmd(cli: &Cli, a: &StdArgs) -> CmdResult {
    let stack = a
        .inputs
        .iter()
        .map(|p| std_input(p, a.format, cli.ridge))
        .collect::<Result<Vec<_>, _>>()?;
    let s = affinity_std(&stack)?;
    if let Some(out) = &a.out {
        write_matrix(out, &s)?;
    }
    let max = s.max_abs();
    write_heatmap(
        &a.figure,
        &s,
        ColorMap::Sequential { lo: 0.0, hi: max },
        "Std of affinity matrices",
    )?;
    println!("matrices = {}", stack.len());
    println!("M = {}", s.m_size());
    println!("mean off-diagonal std = {}", format_sig9(s.mean_off_diagonal()));
    println!("max std = {}", format_sig9(max));
    Ok(Outcome::Done)
}

#[derive(Serialize)]
struct NmeReport<'a> {
    nme_percent: f64,
    n: usize,
    m_size: usize,
    scheme: &'a str,
    eyes: &'a str,
}

fn nme_cmd(a: &NmeArgs) -> CmdResult {
    let pred = load_dataset(&a.pred, a.format)?;
    let gt = load_dataset(&a.gt, a.format)?;
    let fmt = scheme_for(&a.scheme, gt.m_size())?;
    let value = nme(&pred, &gt, &fmt)?;
    let eyes = match a.scheme.eyes {
        EyeConvention::OuterCorners => "outer-corners",
        EyeConvention::Centroids => "centroids",
    };
    if let Some(out) = &a.out {
        let report = NmeReport {
            nme_percent: value,
            n: gt.len(),
            m_size: gt.m_size(),
            scheme: &fmt.name,
            eyes,
        };
        let mut json = serde_json::to_string_pretty(&report).map_err(lmcorr_core::Error::from)?;
        json.push('\n');
        write_atomic(out, json.as_bytes())?;
    }
    println!("N = {}", gt.len());
    println!("scheme = {} ({eyes})", fmt.name);
    println!("NME = {}%", format_sig9(value));
    Ok(Outcome::Done)
}

fn time_limit(s: &SolverArgs) -> Result<Option<Duration>, CliError> {
    match s.time_limit {
        None => Ok(None),
        Some(t) if t.is_finite() && t >= 0.0 => Ok(Some(Duration::from_secs_f64(t))),
        Some(t) => Err(CliError::Usage(format!(
            "--time-limit must be a nonnegative number of seconds, got {t}"
        ))),
    }
}

fn check_ratio(ratio: f64) -> Result<(), CliError> {
    if ratio > 0.0 && ratio <= 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--ratio must be in (0, 1], got {ratio}")))
    }
}

fn parse_subset(spec: &str, m_size: usize) -> Result<Vec<usize>, CliError> {
    if let Some(p) = presets::by_name(spec) {
        let expected = if p.scheme == "wflw" { 98 } else { 68 };
        if m_size != expected {
            return Err(CliError::Usage(format!(
                "preset '{}' is defined on the {} scheme ({expected} landmarks), data has {m_size}",
                p.name, p.scheme
            )));
        }
        return Ok(p.indices.to_vec());
    }
    spec.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("--compare: '{t}' is neither a preset nor an index")))
        })
        .collect()
}

fn search_cmd(cli: &Cli, a: &SearchArgs) -> CmdResult {
    check_ratio(a.ratio)?;
    let limit = time_limit(&a.solver)?;
    let (aff, shape) = if a.matrix {
        if a.ratio != 1.0 {
            return Err(CliError::Usage("--ratio needs landmark data, not a matrix".into()));
        }
        (AffinityMatrix::try_from_matrix(read_matrix(&a.input)?)?, None)
    } else {
        let mut d = load_dataset(&a.input, a.format)?;
        if a.ratio < 1.0 {
            d = d.subset(&subsample_indices(d.len(), a.ratio, cli.seed, 0))?;
        }
        let norm = normalize_dataset(&d)?;
        let aff = affinity_matrix(norm.dataset(), cli.ridge)?;
        (aff, Some(norm.dataset().mean_shape()))
    };
    let problem = SearchProblem::new(&aff, a.m)?;
    let f = search(&problem, a.solver.method, limit);
    let exact_used = match a.solver.method {
        Method::Exact => true,
        Method::Greedy => false,
        Method::Auto => aff.m_size() <= lmcorr_core::search::AUTO_EXACT_MAX_M,
    };

    if let Some(out) = &a.out {
        let mut json = f.to_json(Some(cli.seed), Some(a.ratio))?;
        json.push('\n');
        write_atomic(out, json.as_bytes())?;
    }
    if let Some(svg_path) = &a.figure.svg {
        let Some(shape) = &shape else {
            return Err(CliError::Usage(
                "the landmark overlay needs landmark data, not a matrix".into(),
            ));
        };
        let title = format!("m = {}, c = {}", f.budget_m, format_sig9(f.c_hat));
        let svg = render::overlay(shape, &f.selected, &f.assignment, &title, a.figure.one_based_labels);
        write_figure(
            svg_path,
            &svg,
            overlay_csv(shape, &f.selected, &f.assignment).as_bytes(),
        )?;
    }

    println!("M = {}", aff.m_size());
    println!("m = {}", f.budget_m);
    println!("selected = {:?}", f.selected);
    println!("c_hat = {}", format_sig9(f.c_hat));
    println!("optimal = {}", f.optimal);
    println!("gap = {}", format_sig9(f.gap));
    if let Some(spec) = &a.compare {
        let existing = parse_subset(spec, aff.m_size())?;
        let cmp = compare_format(&aff, &existing, &f)?;
        println!("c_existing = {}", format_sig9(cmp.c_existing));
        println!("delta = {}", format_sig9(cmp.delta));
    }
    if exact_used && !f.optimal {
        eprintln!(
            "time limit reached; best selection written (gap {})",
            format_sig9(f.gap)
        );
        return Ok(Outcome::TimeLimit);
    }
    Ok(Outcome::Done)
}

fn overlay_csv(shape: &[lmcorr_core::Point], selected: &[usize], assignment: &[usize]) -> String {
    let mut out = String::from("landmark,x,y,selected,proxy\n");
    for (j, p) in shape.iter().enumerate() {
        let _ = writeln!(
            out,
            "{j},{},{},{},{}",
            format_sig9(p[0]),
            format_sig9(p[1]),
            u8::from(selected.binary_search(&j).is_ok()),
            assignment[j]
        );
    }
    out
}

fn parse_range(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Usage(format!("--m-range must look like lo:hi, got '{s}'"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo == 0 || lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn curve_twin(points: &[SweepPoint]) -> String {
    let mut out = String::from("m,mean,lower,upper\n");
    for p in points {
        let sd = p.c_hat_var.max(0.0).sqrt();
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.m,
            format_sig9(p.c_hat_mean),
            format_sig9(p.c_hat_mean - sd),
            format_sig9(p.c_hat_mean + sd)
        );
    }
    out
}

fn sweep_cmd(cli: &Cli, a: &SweepArgs) -> CmdResult {
    check_ratio(a.ratio)?;
    let (lo, hi) = parse_range(&a.m_range)?;
    let d = load_dataset(&a.input.input, a.input.format)?;
    if hi > d.m_size() {
        return Err(CliError::Usage(format!(
            "--m-range upper end {hi} exceeds M = {}",
            d.m_size()
        )));
    }
    if a.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let cfg = SweepConfig {
        ratio: a.ratio,
        runs: a.runs,
        seed: cli.seed,
        method: a.solver.method,
        time_limit: time_limit(&a.solver)?,
        ridge: cli.ridge,
    };
    let curve = sweep(&d, lo..=hi, &cfg)?;
    let csv = curve.to_csv();
    if let Some(out) = &a.out {
        write_atomic(out, csv.as_bytes())?;
    }
    if let Some(svg_path) = &a.svg {
        let title = format!("coverage vs m (ratio {}, {} runs)", a.ratio, a.runs);
        write_figure(
            svg_path,
            &render::curve(&curve.points, &title),
            curve_twin(&curve.points).as_bytes(),
        )?;
    }
    print!("{csv}");
    Ok(Outcome::Done)
}

fn parse_curve_csv(text: &str, path: &Path) -> Result<Vec<SweepPoint>, CliError> {
    let name = path.display().to_string();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| lmcorr_core::Error::parse(&name, 1, "empty curve file"))?;
    let header: Vec<&str> = header.split(',').map(str::trim).collect();
    let twin = header == ["m", "mean", "lower", "upper"];
    if header != ["m", "mean", "var"] && !twin {
        return Err(lmcorr_core::Error::parse(&name, 1, "expected header m,mean,var or m,mean,lower,upper").into());
    }
    lines
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            let num = |k: usize| -> Result<f64, CliError> {
                cells
                    .get(k)
                    .and_then(|c| c.parse::<f64>().ok())
                    .ok_or_else(|| lmcorr_core::Error::parse(&name, i + 1, format!("bad cell {k}")).into())
            };
            let m = cells
                .first()
                .and_then(|c| c.parse::<usize>().ok())
                .ok_or_else(|| CliError::from(lmcorr_core::Error::parse(&name, i + 1, "bad budget")))?;
            let mean = num(1)?;
            let var = if twin {
                let half = (num(3)? - num(2)?) / 2.0;
                half * half
            } else {
                num(2)?
            };
            Ok(SweepPoint {
                m,
                c_hat_mean: mean,
                c_hat_var: var,
                runs: 0,
            })
        })
        .collect()
}

type OverlayRows = (Vec<lmcorr_core::Point>, Vec<usize>, Vec<usize>);

fn parse_overlay_csv(text: &str, path: &Path) -> Result<OverlayRows, CliError> {
    let name = path.display().to_string();
    let (mut shape, mut selected, mut assignment) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || {
            CliError::from(lmcorr_core::Error::parse(
                &name,
                i + 1,
                "expected landmark,x,y,selected,proxy",
            ))
        };
        if cells.len() != 5 {
            return Err(bad());
        }
        let x: f64 = cells[1].parse().map_err(|_| bad())?;
        let y: f64 = cells[2].parse().map_err(|_| bad())?;
        let proxy: usize = cells[4].parse().map_err(|_| bad())?;
        if cells[3] == "1" {
            selected.push(shape.len());
        }
        shape.push([x, y]);
        assignment.push(proxy);
    }
    if assignment.iter().any(|&p| p >= shape.len()) {
        return Err(lmcorr_core::Error::parse(&name, 1, "proxy index out of range").into());
    }
    Ok((shape, selected, assignment))
}

fn render_cmd(a: &RenderArgs) -> CmdResult {
    let text = read_text(&a.input)?;
    let kind = a.kind.to_ascii_lowercase();
    let (svg, twin) = match kind.as_str() {
        "affinity" | "ame" | "std" => {
            let m = read_matrix(&a.input)?;
            let (map, default_title) = match kind.as_str() {
                "affinity" => (ColorMap::Sequential { lo: 0.0, hi: 1.0 }, "CCA affinity matrix"),
                "ame" => (
                    ColorMap::Diverging { limit: m.max_abs() },
                    "Affinity matrix error (prediction - ground truth)",
                ),
                _ => (
                    ColorMap::Sequential {
                        lo: 0.0,
                        hi: m.max_abs(),
                    },
                    "Std of affinity matrices",
                ),
            };
            let labels = HeatmapLabels {
                title: a.title.as_deref().unwrap_or(default_title),
                one_based: a.one_based_labels,
            };
            (render::heatmap(&m, map, &labels), matrix_bytes(&m, MatrixLayout::Csv)?)
        }
        "curve" => {
            let points = parse_curve_csv(&text, &a.input)?;
            let title = a.title.as_deref().unwrap_or("coverage vs m");
            (render::curve(&points, title), curve_twin(&points).into_bytes())
        }
        "overlay" => {
            let (shape, selected, assignment) = parse_overlay_csv(&text, &a.input)?;
            let title = a.title.as_deref().unwrap_or("selected landmarks");
            (
                render::overlay(&shape, &selected, &assignment, title, a.one_based_labels),
                overlay_csv(&shape, &selected, &assignment).into_bytes(),
            )
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown figure kind '{other}' (affinity, ame, std, curve, overlay)"
            )))
        }
    };
    write_atomic(&a.out, svg.as_bytes())?;
    let twin_file = twin_path(&a.out);
    let same_as_input =
        fs::canonicalize(&twin_file).ok() == fs::canonicalize(&a.input).ok() && fs::canonicalize(&a.input).is_ok();
    if !same_as_input {
        write_atomic(&twin_file, &twin)?;
    }
    Ok(Outcome::Done)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("3:20").unwrap(), (3, 20));
        assert!(parse_range("0:3").is_err());
        assert!(parse_range("5:3").is_err());
        assert!(parse_range("5").is_err());
    }

    #[test]
    fn curve_csv_round_trip() {
        let pts = vec![
            SweepPoint {
                m: 3,
                c_hat_mean: 0.5,
                c_hat_var: 0.01,
                runs: 2,
            },
            SweepPoint {
                m: 4,
                c_hat_mean: 0.75,
                c_hat_var: 0.0,
                runs: 2,
            },
        ];
        let back = parse_curve_csv(&curve_twin(&pts), Path::new("t.csv")).unwrap();
        assert_eq!(back.len(), 2);
        assert!((back[0].c_hat_var - 0.01).abs() < 1e-12);
        assert_eq!(curve_twin(&back), curve_twin(&pts));
    }

    #[test]
    fn subset_specs() {
        assert_eq!(parse_subset("1, 4,2", 10).unwrap(), vec![1, 4, 2]);
        assert_eq!(parse_subset("mafl", 68).unwrap(), vec![36, 45, 30, 48, 54]);
        assert!(parse_subset("cofw", 68).is_err());
        assert!(parse_subset("x", 68).is_err());
    }
}
