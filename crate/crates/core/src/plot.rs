//! Self-contained SVG figures for run directories. Each file carries its
//! plotted data as CSV inside a leading comment.

use crate::curriculum::EpochLog;
use crate::error::{Error, Result};
use crate::experiment::{read_log, transition_points, DiagnosticsFile, EtaFile};
use crate::files;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 30.0, 50.0); // left, right, top, bottom
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Style {
    Line,
    Points,
}

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

struct Figure {
    title: String,
    x_label: String,
    y_label: String,
    log_y: bool,
    style: Style,
    series: Vec<Series>,
    /// Vertical markers at these x positions.
    markers: Vec<f64>,
}

impl Figure {
    fn new(title: &str, x_label: &str, y_label: &str, style: Style) -> Self {
        Figure {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_y: true,
            style,
            series: Vec::new(),
            markers: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, points: Vec<(f64, f64)>) {
        self.series.push(Series { name: name.into(), points });
    }

    fn point_count(&self) -> usize {
        self.series.iter().map(|s| s.points.len()).sum()
    }

    fn render(&self) -> String {
        let ty = |y: f64| if self.log_y { y.log10() } else { y };
        let usable = |&(x, y): &(f64, f64)| x.is_finite() && y.is_finite() && (!self.log_y || y > 0.0);
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(usable)
            .map(|(x, y)| (x, ty(y)))
            .collect();
        let range = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = range(&mut pts.iter().map(|p| p.0).chain(self.markers.iter().copied()));
        let (y0, y1) = range(&mut pts.iter().map(|p| p.1));
        let (ml, mr, mt, mb) = MARGIN;
        let px = |x: f64| ml + (x - x0) / (x1 - x0) * (W - ml - mr);
        let py = |y: f64| H - mb - (y - y0) / (y1 - y0) * (H - mt - mb);

        let mut s = String::new();
        writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#).unwrap();
        s.push_str("<!-- data\nseries,x,y\n");
        for ser in &self.series {
            for (x, y) in &ser.points {
                writeln!(s, "{},{:e},{:e}", ser.name, x, y).unwrap();
            }
        }
        for m in &self.markers {
            writeln!(s, "marker,{m:e},").unwrap();
        }
        s.push_str("-->\n");
        writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            escape(&self.title)
        )
        .unwrap();
        writeln!(
            s,
            r#"<rect x="{ml}" y="{mt}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - ml - mr,
            H - mt - mb
        )
        .unwrap();
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let ylab = if self.log_y { format!("{:.1e}", 10f64.powf(yv)) } else { format!("{yv:.3}") };
            writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
                px(xv),
                H - mb + 14.0,
                trim_num(xv)
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{ylab}</text>"#,
                ml - 4.0,
                py(yv) + 3.0
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            W / 2.0,
            H - 12.0,
            escape(&self.x_label)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="14" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(&self.y_label)
        )
        .unwrap();
        for m in &self.markers {
            writeln!(
                s,
                r#"<line class="stage-marker" x1="{x:.1}" y1="{mt}" x2="{x:.1}" y2="{}" stroke="gray" stroke-dasharray="4 3"/>"#,
                H - mb,
                x = px(*m)
            )
            .unwrap();
        }
        for (i, ser) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let p: Vec<(f64, f64)> = ser.points.iter().copied().filter(usable).map(|(x, y)| (px(x), py(ty(y)))).collect();
            match self.style {
                Style::Line => {
                    let d: Vec<String> = p.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    writeln!(s, r#"<polyline fill="none" stroke="{color}" points="{}"/>"#, d.join(" ")).unwrap();
                }
                Style::Points => {
                    for (x, y) in p {
                        writeln!(s, r#"<circle class="point" cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#).unwrap();
                    }
                }
            }
            writeln!(
                s,
                r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
                ml + 8.0,
                mt + 14.0 + 13.0 * i as f64,
                escape(&ser.name)
            )
            .unwrap();
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn trim_num(x: f64) -> String {
    if x.fract().abs() < 1e-9 {
        format!("{x:.0}")
    } else {
        format!("{x:.2}")
    }
}

/// First epoch of every stage after the first.
fn stage_starts(log: &[EpochLog]) -> Vec<f64> {
    log.windows(2)
        .filter(|w| w[1].stage != w[0].stage)
        .map(|w| w[1].epoch as f64)
        .collect()
}

fn curve(log: &[EpochLog], f: impl Fn(&EpochLog) -> f64) -> Vec<(f64, f64)> {
    log.iter().map(|r| (r.epoch as f64, f(r))).collect()
}

/// Figures written for one directory holding `log.csv`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rendered {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    /// Points in the R scatter.
    pub ratio_points: usize,
}

/// Renders the figures of one run directory into `<dir>/plots/`. Missing
/// or empty diagnostics leave out the diagnostic figures.
pub fn plot_run(dir: &Path) -> Result<Rendered> {
    let log_path = dir.join("log.csv");
    if !log_path.is_file() {
        return Err(Error::Config(format!("{} has no log.csv", dir.display())));
    }
    let log = read_log(&log_path)?;
    let mode = mode_label(dir);
    let out = dir.join("plots");
    files::create_dir(&out)?;
    let mut rendered = Rendered {
        dir: dir.to_path_buf(),
        ..Default::default()
    };
    let mut emit = |name: &str, fig: &Figure| -> Result<()> {
        let path = out.join(name);
        files::write_atomic(&path, fig.render().as_bytes())?;
        rendered.files.push(path);
        Ok(())
    };
    let markers = stage_starts(&log);

    let mut loss = Figure::new(&format!("loss ({mode})"), "epoch", "loss", Style::Line);
    loss.add("train", curve(&log, |r| r.loss_train));
    loss.add("test", curve(&log, |r| r.loss_test));
    loss.markers = markers.clone();
    emit("loss.svg", &loss)?;

    let mut comp = Figure::new(&format!("loss components ({mode})"), "epoch", "loss", Style::Line);
    comp.add("boundary", curve(&log, |r| r.loss_bd));
    comp.add("residual", curve(&log, |r| r.loss_res));
    comp.markers = markers.clone();
    emit("components.svg", &comp)?;

    let diag_path = dir.join("diagnostics.json");
    if diag_path.is_file() {
        let diag: DiagnosticsFile = files::read_json(&diag_path)?;
        let pts = transition_points(&diag);
        if !pts.is_empty() {
            let layer_index = |name: &str| diag.layer_names.iter().position(|n| n == name).unwrap_or(0) as f64;
            let mut dom = Figure::new("gradient / variance dominance", "layer", "dominance", Style::Points);
            let mut ratio = Figure::new("update amplification R", "layer", "R", Style::Points);
            for t in &diag.transitions {
                let label = format!("stage {}", t.stage);
                dom.add(&label, t.layers.iter().map(|l| (layer_index(&l.layer), l.dominance)).collect());
                ratio.add(&label, t.layers.iter().map(|l| (layer_index(&l.layer), l.ratio)).collect());
            }
            rendered.ratio_points = ratio.point_count();
            emit("dominance.svg", &dom)?;
            emit("ratio.svg", &ratio)?;
        }
    }

    let eta_path = dir.join("eta_eff.json");
    if eta_path.is_file() {
        let eta: EtaFile = files::read_json(&eta_path)?;
        if !eta.records.is_empty() {
            let mut fig = Figure::new(&format!("effective learning rate ({mode})"), "epoch", "mean eta_eff", Style::Line);
            fig.add("mean", eta.records.iter().map(|r| (r.epoch as f64, r.mean)).collect());
            fig.markers = markers;
            emit("eta_eff.svg", &fig)?;
        }
    }
    Ok(rendered)
}

fn mode_label(dir: &Path) -> String {
    let cfg = dir.join("config.json");
    let parent_cfg = dir.parent().map(|p| p.join("config.json"));
    for p in std::iter::once(cfg).chain(parent_cfg) {
        if let Ok(v) = crate::experiment::read_json_value(&p) {
            if let Some(m) = v.get("mode").and_then(|m| m.as_str()) {
                return m.to_string();
            }
        }
    }
    dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Overlays the test curves of every run under `root` (one per mode or
/// ablation arm) into `<root>/plots/compare.svg`.
fn plot_comparison(root: &Path, runs: &[PathBuf]) -> Result<Option<PathBuf>> {
    if runs.len() < 2 {
        return Ok(None);
    }
    let mut fig = Figure::new("test loss", "epoch", "test loss", Style::Line);
    for r in runs {
        let log = read_log(&r.join("log.csv"))?;
        let name = r.strip_prefix(root).unwrap_or(r).to_string_lossy().replace('\\', "/");
        fig.add(&name, curve(&log, |x| x.loss_test));
    }
    let out = root.join("plots");
    files::create_dir(&out)?;
    let path = out.join("compare.svg");
    files::write_atomic(&path, fig.render().as_bytes())?;
    Ok(Some(path))
}

fn find_runs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if dir.join("log.csv").is_file() {
        out.push(dir.to_path_buf());
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n != "plots" && n != "checkpoint"))
        .collect();
    entries.sort();
    for e in entries {
        find_runs(&e, out)?;
    }
    Ok(())
}

/// Renders every run below `root`; fails when none has a log.
pub fn plot_tree(root: &Path) -> Result<Vec<Rendered>> {
    if !root.is_dir() {
        return Err(Error::Config(format!("{} is not a directory", root.display())));
    }
    let mut runs = Vec::new();
    find_runs(root, &mut runs)?;
    if runs.is_empty() {
        return Err(Error::Config(format!("no log.csv under {}", root.display())));
    }
    let mut out = runs.iter().map(|r| plot_run(r)).collect::<Result<Vec<_>>>()?;
    if let Some(p) = plot_comparison(root, &runs)? {
        out.push(Rendered {
            dir: root.to_path_buf(),
            files: vec![p],
            ratio_points: 0,
        });
    }
    Ok(out)
}
