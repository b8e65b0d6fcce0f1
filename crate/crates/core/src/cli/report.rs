use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::run::{RunManifest, FAILURE_MARKER, MANIFEST_FILE};
use crate::eval::{seed_utilities, threshold_grid, Aggregate, TrainingHistory, UtilityReport, DEFAULT_CI_LEVEL};

const REPORT_SEED: u64 = 0;

/// One configuration's seeds within one task family.
#[derive(Debug, Clone)]
pub struct ConfigGroup {
    pub cmdp: String,
    pub configuration: String,
    pub report: UtilityReport,
}

#[derive(Debug, Clone, Default)]
pub struct ReportData {
    pub groups: Vec<ConfigGroup>,
    pub skipped: Vec<String>,
}

/// Formats with six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Seed directories under `dir`: itself, its children or grandchildren.
fn seed_dirs(dir: &Path) -> Vec<PathBuf> {
    fn children(d: &Path) -> Vec<PathBuf> {
        let mut out: Vec<PathBuf> = std::fs::read_dir(d)
            .into_iter()
            .flatten()
            .flatten()
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        out.sort();
        out
    }
    let is_seed = |d: &Path| d.join(MANIFEST_FILE).is_file() || d.join(FAILURE_MARKER).is_file();
    if is_seed(dir) {
        return vec![dir.to_path_buf()];
    }
    let mut out = Vec::new();
    for c in children(dir) {
        if is_seed(&c) {
            out.push(c);
        } else {
            out.extend(children(&c).into_iter().filter(|g| is_seed(g)));
        }
    }
    out
}

fn load_history(dir: &Path, manifest: &RunManifest, key: &str) -> Result<TrainingHistory, String> {
    let file = manifest
        .artifacts
        .get(key)
        .ok_or_else(|| format!("{}: manifest lists no {key}", dir.display()))?;
    let path = dir.join(file);
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    TrainingHistory::from_csv(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Loads every seed under `dirs` and aggregates per (family, configuration).
pub fn collect(dirs: &[PathBuf]) -> Result<ReportData, String> {
    let mut grouped: BTreeMap<(String, String), (usize, usize, Vec<_>)> = BTreeMap::new();
    let mut data = ReportData::default();
    let mut seen = std::collections::HashSet::new();
    for dir in dirs {
        if !dir.is_dir() {
            return Err(format!("{}: not a directory", dir.display()));
        }
        for seed_dir in seed_dirs(dir) {
            let canonical = seed_dir.canonicalize().unwrap_or_else(|_| seed_dir.clone());
            if !seen.insert(canonical) {
                continue;
            }
            if seed_dir.join(FAILURE_MARKER).is_file() || !seed_dir.join(MANIFEST_FILE).is_file() {
                data.skipped.push(seed_dir.display().to_string());
                continue;
            }
            let manifest = RunManifest::load(&seed_dir.join(MANIFEST_FILE))?;
            let transferred = load_history(&seed_dir, &manifest, "history_transferred")?;
            let target = load_history(&seed_dir, &manifest, "history_target")?;
            let points = manifest.config.threshold_points;
            let thresholds = threshold_grid(points);
            let utilities = seed_utilities(manifest.seed, &transferred, &target, &thresholds)
                .map_err(|e| format!("{}: {e}", seed_dir.display()))?;
            let key = (manifest.cmdp.clone(), manifest.representation.to_string());
            let resamples = manifest.config.bootstrap_resamples;
            let entry = grouped.entry(key).or_insert((points, resamples, Vec::new()));
            if entry.0 != points {
                return Err(format!(
                    "{}: threshold grid of {points} points differs from the group's {}",
                    seed_dir.display(),
                    entry.0
                ));
            }
            if let Some(first) = entry.2.first().map(|(h, _): &(TrainingHistory, _)| h.clone()) {
                if !first.same_grid(&transferred) {
                    return Err(format!("{}: evaluation grid differs from its group", seed_dir.display()));
                }
            }
            entry.2.push((transferred, utilities));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(REPORT_SEED);
    for ((cmdp, configuration), (points, resamples, seeds)) in grouped {
        let utilities = seeds.into_iter().map(|(_, u)| u).collect();
        let report = UtilityReport::build(utilities, &threshold_grid(points), resamples, DEFAULT_CI_LEVEL, &mut rng)
            .map_err(|e| e.to_string())?;
        data.groups.push(ConfigGroup {
            cmdp,
            configuration,
            report,
        });
    }
    Ok(data)
}

fn cell(a: Option<&Aggregate>, infinite: bool) -> String {
    match a {
        Some(a) => format!(
            "{} ± {} [{}, {}]{}",
            sig6(a.iqm),
            sig6(a.std),
            sig6(a.ci_low),
            sig6(a.ci_high),
            if infinite { " (+inf seeds)" } else { "" }
        ),
        None if infinite => "inf".into(),
        None => "-".into(),
    }
}

const UTILITIES: [&str; 3] = ["TTT_AUC", "JS", "TR"];

fn utility<'a>(g: &'a ConfigGroup, name: &str) -> (Option<&'a Aggregate>, bool) {
    match name {
        "TTT_AUC" => (Some(&g.report.ttt_auc), false),
        "JS" => (Some(&g.report.js), false),
        _ => (g.report.tr.as_ref(), g.report.tr_infinite_seeds > 0),
    }
}

/// Rows are utility x family, columns are configurations.
pub fn text_table(data: &ReportData) -> String {
    let configs: Vec<&str> = {
        let mut c: Vec<&str> = data.groups.iter().map(|g| g.configuration.as_str()).collect();
        c.sort();
        c.dedup();
        c
    };
    let families: Vec<&str> = {
        let mut f: Vec<&str> = data.groups.iter().map(|g| g.cmdp.as_str()).collect();
        f.sort();
        f.dedup();
        f
    };
    let mut rows = vec![{
        let mut h = vec!["utility".to_string(), "cmdp".to_string()];
        h.extend(configs.iter().map(|c| c.to_string()));
        h
    }];
    for u in UTILITIES {
        for f in &families {
            let mut row = vec![u.to_string(), f.to_string()];
            for c in &configs {
                let g = data.groups.iter().find(|g| g.cmdp == *f && g.configuration == *c);
                row.push(g.map_or("".into(), |g| {
                    let (a, inf) = utility(g, u);
                    cell(a, inf)
                }));
            }
            rows.push(row);
        }
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

pub fn csv_table(data: &ReportData) -> String {
    let mut out = String::from("utility,cmdp,configuration,iqm,std,ci_low,ci_high,n,infinite_seeds\n");
    for u in UTILITIES {
        for g in &data.groups {
            let (a, _) = utility(g, u);
            let inf = if u == "TR" { g.report.tr_infinite_seeds } else { 0 };
            match a {
                Some(a) => {
                    let _ = writeln!(
                        out,
                        "{u},{},{},{},{},{},{},{},{inf}",
                        g.cmdp, g.configuration, a.iqm, a.std, a.ci_low, a.ci_high, a.n
                    );
                }
                None => {
                    let _ = writeln!(out, "{u},{},{},,,,,0,{inf}", g.cmdp, g.configuration);
                }
            }
        }
    }
    out
}

fn file_stem(g: &ConfigGroup) -> String {
    format!("{}_{}", g.cmdp, g.configuration).replace(['+', '/', ' '], "-")
}

/// TTT-versus-threshold lines, one per configuration of a family.
pub fn svg_plot(family: &str, groups: &[&ConfigGroup]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    const COLORS: [&str; 8] = [
        "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
    ];
    let x = |t: f64| M + t * (W - 2.0 * M);
    let y = |v: f64| H - M - v / 100.0 * (H - 2.0 * M);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(out, "<text x=\"{M}\" y=\"20\">{family}: time to threshold</text>");
    let _ = writeln!(
        out,
        "<path d=\"M{} {} L{} {} L{} {}\" fill=\"none\" stroke=\"black\"/>",
        x(0.0),
        y(100.0),
        x(0.0),
        y(0.0),
        x(1.0),
        y(0.0)
    );
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{t}</text>", x(t), y(0.0) + 16.0);
    }
    for v in [0.0, 50.0, 100.0] {
        let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{v}</text>", x(0.0) - 6.0, y(v) + 4.0);
    }
    for (i, g) in groups.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = g
            .report
            .threshold_curve
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.theta), y(p.ttt_iqm)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>",
            W - M - 120.0,
            M + 16.0 * i as f64,
            g.configuration
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Writes the tables, per-configuration utility JSON and threshold curves.
pub fn write_report(data: &ReportData, out: &Path, svg: bool) -> Result<Vec<PathBuf>, String> {
    std::fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
    let mut written = Vec::new();
    let mut put = |name: String, contents: String| -> Result<(), String> {
        let path = out.join(name);
        std::fs::write(&path, contents).map_err(|e| format!("{}: {e}", path.display()))?;
        written.push(path);
        Ok(())
    };
    put("report.txt".into(), text_table(data))?;
    put("report.csv".into(), csv_table(data))?;
    for g in &data.groups {
        let stem = file_stem(g);
        put(
            format!("utilities_{stem}.json"),
            serde_json::to_string_pretty(&g.report).map_err(|e| e.to_string())? + "\n",
        )?;
        put(format!("ttt_curve_{stem}.csv"), g.report.threshold_csv())?;
    }
    if svg {
        let mut families: Vec<&str> = data.groups.iter().map(|g| g.cmdp.as_str()).collect();
        families.dedup();
        for f in families {
            let groups: Vec<&ConfigGroup> = data.groups.iter().filter(|g| g.cmdp == f).collect();
            put(format!("ttt_curve_{}.svg", f.replace('+', "-")), svg_plot(f, &groups))?;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(98.039_215_686), "98.0392");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(0.75), "0.75");
        assert_eq!(sig6(-0.123_456_789), "-0.123457");
        assert_eq!(sig6(1_234_567.0), "1234567");
        assert_eq!(sig6(1e-7), "0.0000001");
    }
}
