use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use inqmad::bench::{bench_scoring, scaling_sweep, BenchReport};
use inqmad::checkpoint::{load_detector, save_detector};
use inqmad::data::{self, normalize_minmax, StreamRecord};
use inqmad::detector::{fit_with_feature_map, Label};
use inqmad::eval::{evaluate_stream, grid_search_with, GridPoint, GridRow, GridSpec};
use inqmad::stats::{drop_incomplete_rows, friedman_q, nemenyi, significant_pairs};
use inqmad::trainer::train_aff_logged;
use inqmad::{sample_rff, DetectorParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_list, Settings};

/// Floats in CSV output carry 17 significant digits.
pub fn f17(v: f64) -> String {
    format!("{v:.16e}")
}

fn out_dir(s: &mut Settings) -> Result<PathBuf> {
    let dir = PathBuf::from(s.raw("out").unwrap_or("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    s.resolve("out", dir.display());
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

/// The configured stream: a CSV file, or the synthetic two-sine stream for `data=synth`.
pub fn load_stream(s: &mut Settings) -> Result<Vec<StreamRecord>> {
    let source = s
        .raw("data")
        .ok_or_else(|| anyhow!("no dataset: pass --data <csv path> or --data synth"))?
        .to_string();
    if source == "synth" {
        let n = s.get("synth_n")?.unwrap_or(10_000);
        let rate = s.get("synth_rate")?.unwrap_or(0.1);
        s.resolve("synth_n", n);
        s.resolve("synth_rate", rate);
        return Ok(data::generate_synthetic(n, rate, s.seed()?)?);
    }
    let header = s.get("header")?.unwrap_or(true);
    s.resolve("header", header);
    let label = s.raw("label_column").map(str::to_string);
    Ok(data::load_csv(&source, label.as_deref(), header)?)
}

fn labels_of(records: &[StreamRecord]) -> Option<Vec<Label>> {
    records.iter().map(|r| r.label).collect()
}

pub fn fit(mut s: Settings) -> Result<()> {
    let params = s.detector_params()?;
    let records = load_stream(&mut s)?;
    ensure!(
        params.n_init <= records.len(),
        "n_init = {} exceeds the {} rows of the dataset",
        params.n_init,
        records.len()
    );
    let dir = out_dir(&mut s)?;
    s.echo(&dir)?;

    let (scaled, transform) = normalize_minmax(&records, 0..params.n_init)?;
    let window: Vec<Vec<f64>> = scaled[..params.n_init].iter().map(|r| r.features.clone()).collect();
    let labels = labels_of(&records[..params.n_init]);
    let feature_map = if params.adaptive {
        let report = train_aff_logged(&window, params.sigma, params.embedding_dim, &params.train)?;
        report.write_loss_log(create(&dir, "train_loss.csv")?)?;
        report.feature_map
    } else {
        sample_rff(window[0].len(), params.embedding_dim, params.sigma, params.train.seed)?
    };
    let outcome = fit_with_feature_map(&window, labels.as_deref(), &params, feature_map)?;
    save_detector(&outcome.state, dir.join("detector.ckpt"))?;

    let mut t = create(&dir, "transform.csv")?;
    writeln!(t, "feature,min,span")?;
    for (i, (m, sp)) in transform.min.iter().zip(&transform.span).enumerate() {
        writeln!(t, "{i},{},{}", f17(*m), f17(*sp))?;
    }
    t.flush()?;

    let summary = init_summary(&outcome.init_scores, outcome.state.tau());
    fs::write(dir.join("fit_summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn init_summary(scores: &[f64], tau: f64) -> String {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let below = scores.iter().filter(|v| **v < tau).count();
    format!(
        "n_init={n}\ntau={}\nscore_min={}\nscore_median={}\nscore_mean={}\nscore_max={}\nbelow_tau={below}\n",
        f17(tau),
        f17(sorted[0]),
        f17(median),
        f17(mean),
        f17(sorted[n - 1]),
    )
}

pub fn eval(mut s: Settings) -> Result<()> {
    let params = s.detector_params()?;
    let records = load_stream(&mut s)?;
    let dir = out_dir(&mut s)?;
    s.echo(&dir)?;
    let report = evaluate_stream(&records, &params)?;

    let mut w = create(&dir, "scores.csv")?;
    writeln!(w, "index,score,pred_label,true_label")?;
    for r in &report.per_record_scores {
        writeln!(w, "{},{},{},{}", r.index, f17(r.score), r.predicted.as_u8(), r.truth.as_u8())?;
    }
    w.flush()?;

    let mut w = create(&dir, "roc.csv")?;
    writeln!(w, "fpr,tpr")?;
    for (fpr, tpr) in report.roc()? {
        writeln!(w, "{},{}", f17(fpr), f17(tpr))?;
    }
    w.flush()?;

    let summary = format!(
        "auc={}\nauc_scope=post_init\nn_scored={}\nn_flagged={}\ntau={}\nthroughput={}\n",
        f17(report.auc),
        report.n_scored,
        report.n_flagged,
        f17(report.tau),
        f17(report.throughput),
    );
    fs::write(dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

const GRID_HEADER: &str = "n,lr_base,sigma,alpha,auc";

/// Reads a grid file: `n_init=`, `lr_base=`, `sigma=`, `alpha=` lines holding
/// comma-separated values. Absent `n_init` and `lr_base` use the standard sets;
/// absent `sigma` and `alpha` use the run's single values.
pub fn read_grid(path: &Path, base: &DetectorParams) -> Result<GridSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading grid {}", path.display()))?;
    let mut grid = GridSpec::standard(vec![base.sigma], vec![base.alpha]);
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("grid line {}: expected key=list", n + 1))?;
        match k.trim() {
            "n_init" | "n" => grid.n_init = parse_list(v)?,
            "lr_base" => grid.lr_base = parse_list(v)?,
            "sigma" => grid.sigma = parse_list(v)?,
            "alpha" => grid.alpha = parse_list(v)?,
            other => bail!("grid line {}: unknown key {other:?}", n + 1),
        }
    }
    Ok(grid)
}

fn read_grid_results(path: &Path) -> Result<Vec<GridRow>> {
    let file = File::open(path)?;
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if n == 0 {
            ensure!(line == GRID_HEADER, "{} has an unexpected header", path.display());
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        ensure!(f.len() == 5, "{} line {}: expected 5 fields", path.display(), n + 1);
        let bad = |e: &dyn std::fmt::Display| anyhow!("{} line {}: {e}", path.display(), n + 1);
        rows.push(GridRow {
            point: GridPoint {
                n_init: f[0].parse().map_err(|e| bad(&e))?,
                lr_base: f[1].parse().map_err(|e| bad(&e))?,
                sigma: f[2].parse().map_err(|e| bad(&e))?,
                alpha: f[3].parse().map_err(|e| bad(&e))?,
            },
            auc: f[4].parse().map_err(|e| bad(&e))?,
        });
    }
    Ok(rows)
}

fn grid_line(r: &GridRow) -> String {
    let p = &r.point;
    format!("{},{},{},{},{}", p.n_init, f17(p.lr_base), f17(p.sigma), f17(p.alpha), f17(r.auc))
}

pub fn grid(mut s: Settings, grid_file: &Path) -> Result<()> {
    let base = s.detector_params()?;
    let grid = read_grid(grid_file, &base)?;
    let records = load_stream(&mut s)?;
    let dir = out_dir(&mut s)?;
    s.echo(&dir)?;
    fs::copy(grid_file, dir.join("grid.txt")).context("copying grid file")?;

    let results = dir.join("grid_results.csv");
    let completed = if results.exists() {
        read_grid_results(&results)?
    } else {
        fs::write(&results, format!("{GRID_HEADER}\n"))?;
        Vec::new()
    };
    let mut out = OpenOptions::new().append(true).open(&results)?;
    let outcome = grid_search_with(&records, &grid, &base, &completed, |row| {
        writeln!(out, "{}", grid_line(row))?;
        out.flush()?;
        Ok(())
    })?;

    let b = &outcome.best;
    let best = format!(
        "n_init={}\nlr_base={}\nsigma={}\nalpha={}\nauc={}\nrows={}\n",
        b.point.n_init,
        f17(b.point.lr_base),
        f17(b.point.sigma),
        f17(b.point.alpha),
        f17(b.auc),
        outcome.rows.len()
    );
    fs::write(dir.join("best_params.txt"), &best)?;
    print!("{best}");
    Ok(())
}

pub fn synth(mut s: Settings) -> Result<()> {
    s.set("data", Some("synth"));
    let records = load_stream(&mut s)?;
    let dir = out_dir(&mut s)?;
    s.echo(&dir)?;
    data::write_csv(&records, create(&dir, "synth.csv")?)?;
    let anomalies = records.iter().filter(|r| r.label == Some(Label::Anomaly)).count();
    println!("records={}\nanomalies={anomalies}", records.len());
    Ok(())
}

/// A method-comparison table: header `dataset,<method>,...`, one row per
/// dataset, empty or `-` cells for missing results.
pub fn read_auc_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<Option<f64>>>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading table {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| anyhow!("{} is empty", path.display()))?;
    let methods: Vec<String> = header.split(',').skip(1).map(|m| m.trim().to_string()).collect();
    ensure!(methods.len() >= 2, "the table needs at least two method columns");
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        ensure!(
            cells.len() == methods.len() + 1,
            "table row {} has {} cells, expected {}",
            n + 2,
            cells.len(),
            methods.len() + 1
        );
        let row = cells[1..]
            .iter()
            .map(|c| match *c {
                "" | "-" | "NA" => Ok(None),
                v => v
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|e| anyhow!("table row {}: cell {v:?}: {e}", n + 2)),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((methods, rows))
}

pub fn stats(table: &Path, out: Option<PathBuf>, level: f64) -> Result<()> {
    let (methods, rows) = read_auc_table(table)?;
    let complete = drop_incomplete_rows(&rows);
    ensure!(
        complete.len() >= 2,
        "only {} complete rows remain after dropping rows with missing cells; need at least 2",
        complete.len()
    );
    let mut s = Settings::default();
    s.set("out", out.map(|p| p.display().to_string()));
    let dir = out_dir(&mut s)?;

    let fr = friedman_q(&complete)?;
    let p = nemenyi(&complete)?;
    let summary = format!(
        "q={}\np_value={}\nrows_used={}\nrows_dropped={}\nmethods={}\n",
        f17(fr.q),
        f17(fr.p_value),
        complete.len(),
        rows.len() - complete.len(),
        methods.len()
    );
    fs::write(dir.join("friedman.txt"), &summary)?;

    let header = format!("method,{}", methods.join(","));
    let mut w = create(&dir, "nemenyi.csv")?;
    writeln!(w, "{header}")?;
    for (m, row) in methods.iter().zip(&p) {
        let cells: Vec<String> = row.iter().map(|v| f17(*v)).collect();
        writeln!(w, "{m},{}", cells.join(","))?;
    }
    w.flush()?;

    let mut w = create(&dir, "significance.csv")?;
    writeln!(w, "{header}")?;
    for (m, row) in methods.iter().zip(significant_pairs(&p, level)) {
        let cells: Vec<&str> = row.iter().map(|b| if *b { "true" } else { "false" }).collect();
        writeln!(w, "{m},{}", cells.join(","))?;
    }
    w.flush()?;
    print!("{summary}");
    Ok(())
}

pub struct BenchArgs {
    pub checkpoint: Option<PathBuf>,
    pub dims: Vec<usize>,
    pub input_dim: usize,
    pub batch_len: usize,
    pub repetitions: usize,
}

pub fn bench(mut s: Settings, args: &BenchArgs) -> Result<()> {
    let seed = s.seed()?;
    let dir = out_dir(&mut s)?;
    s.echo(&dir)?;
    let reports: Vec<(usize, BenchReport)> = match &args.checkpoint {
        Some(path) => {
            let state = load_detector(path)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batch: Vec<Vec<f64>> = (0..args.batch_len)
                .map(|_| (0..state.input_dim()).map(|_| rng.gen::<f64>()).collect())
                .collect();
            let dim = state.feature_map().output_dim();
            vec![(dim, bench_scoring(&state, &batch, args.repetitions)?)]
        }
        None => scaling_sweep(&args.dims, args.input_dim, args.batch_len, args.repetitions, seed)?,
    };
    let mut w = create(&dir, "bench.csv")?;
    writeln!(w, "dim,median_ns,p90_ns,p99_ns,throughput")?;
    for (dim, r) in &reports {
        let line = format!("{dim},{},{},{},{}", f17(r.median_ns), f17(r.p90_ns), f17(r.p99_ns), f17(r.throughput));
        writeln!(w, "{line}")?;
        println!("dim={dim} median_ns={:.0} p90_ns={:.0} p99_ns={:.0}", r.median_ns, r.p90_ns, r.p99_ns);
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(f17(0.1), "1.0000000000000001e-1");
        assert_eq!(f17(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn summary_lines() {
        let s = init_summary(&[3.0, 1.0, 2.0, 4.0], 1.5);
        assert!(s.contains("score_median=2.5"));
        assert!(s.contains("below_tau=1\n"));
    }

    #[test]
    fn grid_file_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        fs::write(&path, "n_init=64\nsigma=0.1,0.2\n").unwrap();
        let g = read_grid(&path, &DetectorParams::default()).unwrap();
        assert_eq!(g.n_init, vec![64]);
        assert_eq!(g.lr_base.len(), 3);
        assert_eq!(g.sigma, vec![0.1, 0.2]);
        assert_eq!(g.alpha, vec![0.04]);
        fs::write(&path, "depth=3\n").unwrap();
        assert!(read_grid(&path, &DetectorParams::default()).is_err());
    }
}
