//! Text and SVG renderings of a reduction.

use std::fmt::Write as _;

use crate::characterizer::{ColumnRegistry, LoopFeatures};
use crate::pipeline::{Artifacts, ReportFormat};
use crate::reducer::{EliminationTrace, FeatureMatrix, Reduction, SimilarityMatrix, SubsetRank};
use crate::toyvm::CacheConfig;

/// Every available feature column, one row per loop.
pub fn features_tsv(features: &[LoopFeatures], caches: &[CacheConfig]) -> String {
    let reg = ColumnRegistry::new(caches);
    let names: Vec<String> = reg.available().into_iter().filter(|n| n != "cache-miss-ratio").collect();
    let columns = reg.resolve_all(&names).expect("available columns resolve");
    FeatureMatrix::from_features(features, &columns).to_tsv()
}

/// Patterns, model label and unavailable features of every loop.
pub fn characterization_report(features: &[LoopFeatures], caches: &[CacheConfig]) -> String {
    let reg = ColumnRegistry::new(caches);
    let names: Vec<String> = reg.available().into_iter().filter(|n| n != "cache-miss-ratio").collect();
    let columns = reg.resolve_all(&names).expect("available columns resolve");
    let mut out = String::new();
    for f in features {
        let model = f.model.map(|m| m.to_string()).unwrap_or_else(|| "-".into());
        let _ = writeln!(out, "loop {}\tmodel {model}", f.key());
        for p in f.load_patterns.iter().chain(&f.store_patterns) {
            let _ = writeln!(
                out,
                "  pattern {:?}\t{:?}\tx{}\tfrom {}\tcoverage {:.4}",
                p.kind, p.pattern, p.occurrences, p.start, p.coverage
            );
        }
        let missing: Vec<String> = columns
            .iter()
            .filter(|c| c.extract(f).is_none())
            .map(|c| c.name())
            .collect();
        if !missing.is_empty() {
            let _ = writeln!(out, "  unavailable {}", missing.join(" "));
        }
    }
    out
}

/// Projected rows with their cluster label.
pub fn matrix_tsv(r: &Reduction) -> String {
    let mut out = String::from("workload\tloop");
    for c in &r.projected.columns {
        out.push('\t');
        out.push_str(c);
    }
    out.push_str("\tcluster\n");
    for (i, row) in r.projected.rows.iter().enumerate() {
        let _ = write!(out, "{}\t{}", row.workload, row.loop_id);
        for v in &r.projected.values[i] {
            let _ = write!(out, "\t{v:.6}");
        }
        let _ = writeln!(out, "\t{}", r.clusters.assignments[i]);
    }
    out
}

pub fn em_selection_tsv(r: &Reduction) -> String {
    let mut out = String::from("k\tscore\tstd_error\tchosen\n");
    for s in &r.clusters.selection {
        let _ = writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{}",
            s.k,
            s.score,
            s.std_error,
            u8::from(s.k == r.clusters.k)
        );
    }
    out
}

pub fn summary_text(r: &Reduction) -> String {
    let (k, n, x, y) = r.shape();
    let mut out = String::new();
    let _ = writeln!(out, "loops\t{k}");
    let _ = writeln!(out, "features\t{n}");
    let _ = writeln!(out, "rows removed\t{x}");
    let _ = writeln!(out, "dimensions dropped\t{y}");
    let _ = writeln!(out, "retained variance\t{:.6}", r.pca.retained_variance());
    let _ = writeln!(out, "clusters\t{}", r.clusters.k);
    let _ = writeln!(out, "workloads\t{}", r.fvs.len());
    let _ = writeln!(out, "final workloads\t{}", r.trace.final_set.len());
    let _ = writeln!(out, "stop\t{}", r.trace.stop.name());
    for w in &r.warnings {
        let _ = writeln!(out, "warning\t{w}");
    }
    out
}

pub fn subset_rank_text(rank: &SubsetRank) -> String {
    format!(
        "heuristic distance\t{:.6}\nrandom subsets\t{}\nfraction better\t{:.6}\n",
        rank.heuristic_distance,
        rank.random_distances.len(),
        rank.fraction_better
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Grayscale heatmap; darker cells are more similar.
pub fn similarity_svg(sim: &SimilarityMatrix) -> String {
    let n = sim.len();
    let (cell, margin) = (18usize, 110usize);
    let size = margin + cell * n + 10;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="monospace" font-size="10">"#
    );
    for (i, w) in sim.workloads.iter().enumerate() {
        let y = margin + i * cell + cell * 3 / 4;
        let _ = writeln!(out, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, margin - 4, escape(w));
        let x = margin + i * cell + cell * 3 / 4;
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" transform="rotate(-90 {x} {})">{}</text>"#,
            margin - 4,
            margin - 4,
            escape(w)
        );
    }
    for i in 0..n {
        for j in 0..n {
            let v = sim.get(i, j).clamp(0.0, 1.0);
            let g = (255.0 * (1.0 - v)).round() as u8;
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="rgb({g},{g},{g})"><title>{} {} {v:.3}</title></rect>"#,
                margin + j * cell,
                margin + i * cell,
                escape(&sim.workloads[i]),
                escape(&sim.workloads[j])
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// One line per cluster across elimination iterations, with the floor dashed.
pub fn cluster_sizes_svg(trace: &EliminationTrace) -> String {
    let mut series: Vec<Vec<usize>> = vec![trace.initial_counts.clone()];
    series.extend(trace.iterations.iter().map(|it| it.cluster_counts.clone()));
    let steps = series.len();
    let k = trace.initial_counts.len();
    let max = trace.initial_counts.iter().copied().max().unwrap_or(1).max(1);
    let (w, h, pad) = (480.0, 240.0, 30.0);
    let x = |s: usize| pad + (w - 2.0 * pad) * s as f64 / (steps.max(2) - 1) as f64;
    let y = |c: usize| h - pad - (h - 2.0 * pad) * c as f64 / max as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="monospace" font-size="10">"#
    );
    let _ = writeln!(
        out,
        r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        h - pad,
        w - pad,
        h - pad
    );
    let _ = writeln!(out, r#"<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="black"/>"#, h - pad);
    for c in 0..k {
        let hue = 360.0 * c as f64 / k.max(1) as f64;
        let pts: Vec<String> = series
            .iter()
            .enumerate()
            .map(|(s, counts)| format!("{:.1},{:.1}", x(s), y(counts[c])))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="hsl({hue:.0},70%,40%)" points="{}"><title>cluster {c}</title></polyline>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<line x1="{pad}" y1="{:.1}" x2="{}" y2="{:.1}" stroke="hsl({hue:.0},70%,40%)" stroke-dasharray="3,3"/>"#,
            y(trace.floor[c]),
            w - pad,
            y(trace.floor[c])
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Adds every reduction artifact to `a`.
pub fn reduction_artifacts(a: &mut Artifacts, r: &Reduction, formats: &[ReportFormat]) {
    a.add("reduce_input.tsv", r.raw.to_tsv());
    a.add("matrix.tsv", matrix_tsv(r));
    a.add("similarity.tsv", r.similarity.to_tsv());
    a.add("elimination.log", r.trace.log());
    a.add("cluster_sizes.tsv", r.trace.cluster_size_table());
    a.add("final_set.txt", r.trace.final_set.join("\n") + "\n");
    a.add("em_selection.tsv", em_selection_tsv(r));
    a.add("summary.txt", summary_text(r));
    a.add_json("reduction.json", r);
    if formats.contains(&ReportFormat::Svg) {
        a.add("similarity.svg", similarity_svg(&r.similarity));
        a.add("cluster_sizes.svg", cluster_sizes_svg(&r.trace));
    }
}
