//! CSV and JSON files for a finished run.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rwsre_core::heavytail::Column;
use rwsre_core::stats::EcdfSummary;

use crate::result::{EcdfPair, RunResult};

/// Order statistics kept per sample in an ECDF pair file.
pub const PAIR_POINTS: usize = 2048;

fn writer(path: &Path) -> io::Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(io::Error::other)
}

fn row<I, S>(w: &mut csv::Writer<fs::File>, fields: I) -> io::Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(fields).map_err(io::Error::other)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Evenly spaced order statistics of a sorted sample, finite values only.
fn thin(sorted: &[f64], points: usize) -> Vec<f64> {
    let finite: Vec<f64> = sorted.iter().copied().filter(|x| x.is_finite()).collect();
    if finite.len() <= points {
        return finite;
    }
    (0..points)
        .map(|i| finite[i * (finite.len() - 1) / (points - 1)])
        .collect()
}

/// `(x, F_empirical(x), F_reference(x))` on thinned jump points of both samples.
pub fn pair_rows(pair: &EcdfPair) -> Vec<(f64, f64, f64)> {
    let a = EcdfSummary::new(pair.empirical.clone());
    let b = EcdfSummary::new(pair.reference.clone());
    let mut xs = thin(a.sorted(), PAIR_POINTS);
    xs.extend(thin(b.sorted(), PAIR_POINTS));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs.into_iter().map(|x| (x, a.eval(x), b.eval(x))).collect()
}

/// Writes every file of `result` under `dir/<scenario>` and returns the paths.
pub fn emit(result: &RunResult, dir: &Path) -> io::Result<Vec<PathBuf>> {
    let v = &result.verdict;
    let base = dir.join(&v.scenario);
    fs::create_dir_all(&base)?;
    let mut written = Vec::new();

    let path = base.join("runs.csv");
    let mut w = writer(&path)?;
    row(&mut w, ["scenario", "engine", "n", "replica", result.raw_column, "capped", "normalized"])?;
    for r in &result.runs {
        row(
            &mut w,
            [
                v.scenario.clone(),
                r.engine.to_string(),
                r.n.to_string(),
                r.replica.to_string(),
                r.raw.map_or_else(String::new, |x| x.to_string()),
                u8::from(r.capped).to_string(),
                r.normalized.to_string(),
            ],
        )?;
    }
    w.flush()?;
    written.push(path);

    for pair in &result.pairs {
        let path = base.join(format!("ecdf_{}.csv", pair.label));
        let mut w = writer(&path)?;
        row(&mut w, ["x", "F_empirical", "F_limit"])?;
        for (x, fa, fb) in pair_rows(pair) {
            row(&mut w, [x.to_string(), fa.to_string(), fb.to_string()])?;
        }
        w.flush()?;
        written.push(path);
    }

    let mut per_n = v.per_n.clone();
    per_n.sort_by_key(|p| p.n);
    let path = base.join("ks_vs_n.csv");
    let mut w = writer(&path)?;
    row(&mut w, ["n", "ks", "cauchy"])?;
    for p in per_n.iter().filter(|p| p.ks.is_some()) {
        row(&mut w, [p.n.to_string(), opt(p.ks), opt(p.get("cauchy"))])?;
    }
    w.flush()?;
    written.push(path);

    let path = base.join("hill_vs_n.csv");
    let mut w = writer(&path)?;
    row(&mut w, ["n", "hill", "ci_low", "ci_high"])?;
    for p in per_n.iter().filter(|p| p.hill.is_some()) {
        let ci = p.ci.unwrap_or([f64::NAN; 2]);
        row(&mut w, [p.n.to_string(), opt(p.hill), ci[0].to_string(), ci[1].to_string()])?;
    }
    w.flush()?;
    written.push(path);

    let path = base.join("limit.csv");
    let mut w = writer(&path)?;
    row(&mut w, ["law", "replica", "value"])?;
    if let Some(lim) = &result.limit {
        for (i, x) in lim.values.iter().enumerate() {
            row(&mut w, [lim.law.to_string(), i.to_string(), x.to_string()])?;
        }
    }
    w.flush()?;
    written.push(path);

    let path = base.join("blocks.csv");
    let mut w = writer(&path)?;
    row(&mut w, ["replica", "k", "tau_inc", "s_inc", "w_bar", "w0", "w_down", "z_sum"])?;
    for b in &result.blocks {
        let r = &b.record;
        row(
            &mut w,
            [
                b.replica.to_string(),
                b.k.to_string(),
                r.tau_increment.to_string(),
                r.s_increment.to_string(),
                r.w_bar.to_string(),
                r.w0.to_string(),
                r.w_down.to_string(),
                r.z_sum.to_string(),
            ],
        )?;
    }
    w.flush()?;
    written.push(path);

    let path = base.join("env.csv");
    let mut w = writer(&path)?;
    row(&mut w, ["k", "xi", "lambda", "s"])?;
    for (k, xi, lambda, s) in &result.env_rows {
        row(&mut w, [k.to_string(), xi.to_string(), lambda.to_string(), s.to_string()])?;
    }
    w.flush()?;
    written.push(path);

    let path = base.join("normalizers.csv");
    let mut w = writer(&path)?;
    let mut header = vec!["t"];
    header.extend(Column::ALL.iter().map(|c| c.name()));
    row(&mut w, &header)?;
    if let Some(tab) = &result.normalizers {
        for r in &tab.rows {
            let mut fields = vec![r.t.to_string()];
            fields.extend(Column::ALL.iter().map(|&c| opt(r.get(c))));
            row(&mut w, &fields)?;
        }
    }
    w.flush()?;
    written.push(path);

    let path = base.join("verdict.json");
    let mut text = serde_json::to_string_pretty(v).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(&path, text)?;
    written.push(path);

    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_run_gives_header_only_files() {
        let dir = tempfile::tempdir().unwrap();
        let res = RunResult::new("theorem1", "t_n");
        let files = emit(&res, dir.path()).unwrap();
        assert_eq!(files.len(), 8);
        for f in files.iter().filter(|f| f.extension().unwrap() == "csv") {
            let text = fs::read_to_string(f).unwrap();
            assert_eq!(text.lines().count(), 1, "{}", f.display());
        }
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("theorem1/verdict.json")).unwrap())
                .unwrap();
        assert_eq!(json["pass"], false);
        assert!(json["per_n"].as_array().unwrap().is_empty());
    }

    #[test]
    fn ks_rows_sorted_and_pair_files_per_label() {
        let dir = tempfile::tempdir().unwrap();
        let mut res = RunResult::new("theorem1", "t_n");
        for n in [4096, 1024] {
            let mut p = crate::result::PerN::new(n);
            p.ks = Some(n as f64 / 1e4);
            res.verdict.per_n.push(p);
            res.pairs.push(EcdfPair {
                label: format!("n{n}"),
                empirical: vec![1.0, 2.0, f64::INFINITY],
                reference: vec![1.5],
            });
        }
        emit(&res, dir.path()).unwrap();
        let ks = fs::read_to_string(dir.path().join("theorem1/ks_vs_n.csv")).unwrap();
        let ns: Vec<&str> = ks.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(ns, ["1024", "4096"]);
        let pair = fs::read_to_string(dir.path().join("theorem1/ecdf_n1024.csv")).unwrap();
        let lines: Vec<&str> = pair.lines().collect();
        assert_eq!(lines[0], "x,F_empirical,F_limit");
        assert_eq!(lines[1..], ["1,0.3333333333333333,0", "1.5,0.3333333333333333,1", "2,0.6666666666666666,1"]);
    }

    #[test]
    fn thinning_keeps_extremes() {
        let xs: Vec<f64> = (0..10_000).map(f64::from).collect();
        let t = thin(&xs, 100);
        assert_eq!(t.len(), 100);
        assert_eq!(t[0], 0.0);
        assert_eq!(*t.last().unwrap(), 9999.0);
    }
}
