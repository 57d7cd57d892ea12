//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Every reference value comes from an oracle written
//! here, independent of the library code under test.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use mediagap_core::ca::{ca_embed, OutletPoint};
use mediagap_core::config::RunConfig;
use mediagap_core::corpus::{build_headlines, Headline, OutletSet, Preprocessor};
use mediagap_core::lexicon::{load_lexicon, mine_frequent_bigrams, select_relevant, select_relevant_indices, CountingMode, MultiTopic, Topic};
use mediagap_core::linalg::{svd, Matrix};
use mediagap_core::metrics::{build_series, centroid_distance, cluster_mad, find_clusters, ClusterThreshold, MadOptions, SeriesKind, YearLayouts};
use mediagap_core::pipeline::{self, UnitStatus};
use mediagap_core::synth::{bundled_lexicon_tsv, planted_discrepancy, synth_corpus, to_jsonl, SynthSpec};
use mediagap_core::tabulate::{build_table, ContingencyTable, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- oracles

/// Pearson χ² by the textbook formula Σ (O − E)² / E.
fn chi2_oracle(t: &[Vec<u64>]) -> f64 {
    let n: f64 = t.iter().flatten().map(|&x| x as f64).sum();
    let rows: Vec<f64> = t.iter().map(|r| r.iter().map(|&x| x as f64).sum()).collect();
    let cols: Vec<f64> = (0..t[0].len()).map(|j| t.iter().map(|r| r[j] as f64).sum()).collect();
    let mut chi2 = 0.0;
    for (i, r) in t.iter().enumerate() {
        for (j, &o) in r.iter().enumerate() {
            let e = rows[i] * cols[j] / n;
            chi2 += (o as f64 - e).powi(2) / e;
        }
    }
    chi2
}

/// Chi-square distance between column profiles j and l.
fn profile_distance_oracle(t: &[Vec<u64>], j: usize, l: usize) -> f64 {
    let n: f64 = t.iter().flatten().map(|&x| x as f64).sum();
    let cj: f64 = t.iter().map(|r| r[j] as f64).sum::<f64>() / n;
    let cl: f64 = t.iter().map(|r| r[l] as f64).sum::<f64>() / n;
    t.iter()
        .map(|r| {
            let ri = r.iter().map(|&x| x as f64).sum::<f64>() / n;
            (r[j] as f64 / n / cj - r[l] as f64 / n / cl).powi(2) / ri
        })
        .sum::<f64>()
        .sqrt()
}

fn to_table(t: &[Vec<u64>]) -> ContingencyTable {
    let cols = t[0].len();
    ContingencyTable::from_counts(
        Unit { topic: Topic::DomesticPolitics, year: 2020 },
        (0..cols).map(|j| format!("o{j}")).collect(),
        (0..t.len()).map(|i| format!("g r{i}").parse().unwrap()).collect(),
        t.concat(),
    )
    .unwrap()
}

fn random_table(rng: &mut ChaCha8Rng, max_rows: usize, max_cols: usize) -> Vec<Vec<u64>> {
    let rows = rng.gen_range(2..=max_rows);
    let cols = rng.gen_range(3..=max_cols);
    let sparsity = rng.gen_range(0.0..0.6);
    let mut t: Vec<Vec<u64>> =
        (0..rows).map(|_| (0..cols).map(|_| if rng.gen_bool(sparsity) { 0 } else { rng.gen_range(0..=500) }).collect()).collect();
    for i in 0..rows {
        if t[i].iter().all(|&x| x == 0) {
            let j = rng.gen_range(0..cols);
            t[i][j] = rng.gen_range(1..=500);
        }
    }
    for j in 0..cols {
        if t.iter().all(|r| r[j] == 0) {
            let i = rng.gen_range(0..rows);
            t[i][j] = rng.gen_range(1..=500);
        }
    }
    t
}

// --------------------------------------------------------------- criteria

fn c1_inertia_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let t = random_table(&mut rng, 200, 9);
        let emb = ca_embed(&to_table(&t)).map_err(|e| e.to_string())?;
        let chi2 = chi2_oracle(&t);
        let n: f64 = t.iter().flatten().map(|&x| x as f64).sum();
        let rel = (emb.total_inertia * n - chi2).abs() / chi2.max(1.0);
        worst = worst.max(rel);
        ensure(rel <= 1e-10, || format!("residual {rel:e} on a {}x{} table", t.len(), t[0].len()))?;
    }
    Ok(format!("200 tables, worst |inertia*n - chi2|/max(1,chi2) = {worst:.2e} (tol 1e-10)"))
}

fn c2_distance_preservation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let t = random_table(&mut rng, 200, 9);
        let emb = ca_embed(&to_table(&t)).map_err(|e| e.to_string())?;
        let g = &emb.principal;
        for j in 0..t[0].len() {
            for l in j + 1..t[0].len() {
                let d = (0..g.cols()).map(|k| (g[(j, k)] - g[(l, k)]).powi(2)).sum::<f64>().sqrt();
                let err = (d - profile_distance_oracle(&t, j, l)).abs();
                worst = worst.max(err);
                ensure(err <= 1e-9, || format!("pair ({j},{l}) off by {err:e}"))?;
            }
        }
    }
    Ok(format!("50 tables, worst distance error {worst:.2e} (tol 1e-9)"))
}

fn c3_svd() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut rec, mut orth, mut eig) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..500 {
        let m = rng.gen_range(1..=300);
        let k = rng.gen_range(1..=9);
        let mut data: Vec<f64> = (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if case % 5 == 0 && k > 1 {
            // rank-deficient: last column repeats the first
            for i in 0..m {
                data[i * k + k - 1] = data[i * k];
            }
        }
        let a = Matrix::from_row_major(m, k, data);
        let s = svd(&a).map_err(|e| e.to_string())?;
        ensure(s == svd(&a).unwrap(), || format!("case {case}: repeated runs differ"))?;

        let p = m.min(k);
        let mut r = 0.0f64;
        for i in 0..m {
            for j in 0..k {
                let v: f64 = (0..p).map(|q| s.u[(i, q)] * s.singular_values[q] * s.v[(j, q)]).sum();
                r = r.max((v - a[(i, j)]).abs());
            }
        }
        rec = rec.max(r);
        for (q_mat, rows) in [(&s.u, m), (&s.v, k)] {
            for x in 0..p {
                for y in 0..p {
                    let dot: f64 = (0..rows).map(|i| q_mat[(i, x)] * q_mat[(i, y)]).sum();
                    orth = orth.max((dot - if x == y { 1.0 } else { 0.0 }).abs());
                }
            }
        }
        for q in 0..p {
            let col: Vec<f64> = (0..k).map(|j| s.v[(j, q)]).collect();
            let big = col.iter().fold(0.0f64, |b, x| b.max(x.abs()));
            let first = col.iter().position(|x| x.abs() == big).unwrap();
            ensure(s.singular_values[q] == 0.0 || col[first] > 0.0, || format!("case {case}: sign rule broken in column {q}"))?;
        }

        let na = nalgebra::DMatrix::from_row_slice(m, k, &a_data(&a));
        let mut lambda: Vec<f64> = (na.transpose() * &na).symmetric_eigen().eigenvalues.iter().copied().collect();
        lambda.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for q in 0..p {
            eig = eig.max((s.singular_values[q].powi(2) - lambda[q].max(0.0)).abs());
        }
        ensure(rec <= 1e-10 && orth <= 1e-10 && eig <= 1e-8, || format!("case {case} ({m}x{k}): rec {rec:e} orth {orth:e} eig {eig:e}"))?;
    }
    Ok(format!("500 matrices, reconstruction {rec:.2e}, orthonormality {orth:.2e} (tol 1e-10), sigma^2 vs Gram eigenvalues {eig:.2e} (tol 1e-8), deterministic"))
}

fn a_data(a: &Matrix) -> Vec<f64> {
    (0..a.rows()).flat_map(|i| (0..a.cols()).map(move |j| (i, j))).map(|ij| a[ij]).collect()
}

fn c4_identical_profiles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut inertia, mut radius) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let rows = rng.gen_range(2..=50);
        let cols = rng.gen_range(3..=9);
        let base: Vec<u64> = (0..rows).map(|_| rng.gen_range(1..=100)).collect();
        let scale: Vec<u64> = (0..cols).map(|_| rng.gen_range(1..=5)).collect();
        let t: Vec<Vec<u64>> = base.iter().map(|b| scale.iter().map(|s| b * s).collect()).collect();
        let emb = ca_embed(&to_table(&t)).map_err(|e| e.to_string())?;
        inertia = inertia.max(emb.total_inertia);
        for p in &emb.outlet_points {
            radius = radius.max(p.coords[0].abs()).max(p.coords[1].abs());
        }
        ensure(inertia <= 1e-12 && radius <= 1e-12, || format!("inertia {inertia:e}, radius {radius:e}"))?;
    }
    Ok(format!("50 proportional tables, inertia <= {inertia:.1e}, coordinates <= {radius:.1e} (tol 1e-12)"))
}

fn c5_mining_and_selection() -> Verdict {
    let outlets = OutletSet::default_nine();
    let spec = SynthSpec { years: 2014..=2018, per_cell: 50, noise: 1000, seed: 5, ..Default::default() };
    let records = synth_corpus(&spec, &outlets);
    ensure(records.len() == 10_000, || format!("corpus has {} headlines", records.len()))?;
    let pre = Preprocessor::english();
    let headlines = build_headlines(&records, &outlets, &pre).map_err(|e| e.to_string())?.headlines;

    let mut naive: HashMap<(i32, String), u64> = HashMap::new();
    for h in &headlines {
        for i in 1..h.tokens.len() {
            *naive.entry((h.year, format!("{} {}", h.tokens[i - 1], h.tokens[i]))).or_insert(0) += 1;
        }
    }
    let mut checked = 0;
    for threshold in [1, 20, 100] {
        let report = mine_frequent_bigrams(&headlines, threshold);
        let mut expected: BTreeMap<String, BTreeMap<i32, u64>> = BTreeMap::new();
        for ((y, g), n) in &naive {
            expected.entry(g.clone()).or_default().insert(*y, *n);
        }
        expected.retain(|_, ys| ys.values().any(|&n| n >= threshold));
        let got: BTreeMap<String, BTreeMap<i32, u64>> = report.candidates.iter().map(|(g, ys)| (g.to_string(), ys.clone())).collect();
        ensure(got == expected, || format!("threshold {threshold}: mined counts differ from recount"))?;
        checked += got.len();
    }

    let lexicon = load_lexicon(bundled_lexicon_tsv().as_bytes(), &pre).map_err(|e| e.to_string())?;
    let oracle_lex: HashMap<String, Topic> = bundled_lexicon_tsv()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let (g, t) = l.split_once('\t').unwrap();
            (g.to_string(), t.parse().unwrap())
        })
        .collect();
    let topics_of = |h: &Headline| -> Vec<Topic> {
        let mut v = Vec::new();
        for w in h.tokens.windows(2) {
            if let Some(t) = oracle_lex.get(&format!("{} {}", w[0], w[1])) {
                if !v.contains(t) {
                    v.push(*t);
                }
            }
        }
        v
    };
    for mode in [MultiTopic::All, MultiTopic::First] {
        let buckets = select_relevant_indices(&headlines, &lexicon, mode);
        for t in Topic::ALL {
            let members: BTreeSet<usize> = buckets.get(&t).map(|v| v.iter().copied().collect()).unwrap_or_default();
            for (i, h) in headlines.iter().enumerate() {
                let found = topics_of(h);
                let should = match mode {
                    MultiTopic::All => found.contains(&t),
                    MultiTopic::First => found.first() == Some(&t),
                };
                ensure(should == members.contains(&i), || format!("{mode:?}: headline {i} {:?} misassigned for {t}", h.tokens))?;
            }
        }
    }
    let relevant: usize = select_relevant(&headlines, &lexicon, MultiTopic::All).values().map(Vec::len).sum();
    Ok(format!("10000 headlines, {checked} mined bigrams match the recount at thresholds 1/20/100, {relevant} selections checked both ways"))
}

fn c6_threshold_semantics() -> Verdict {
    let mut hs = Vec::new();
    let mut put = |outlet: &str, text: &str, n: usize| hs.extend(vec![Headline::new(outlet, 2020, text.split(' ')); n]);
    put("a", "oil price", 50);
    put("a", "gas price", 51);
    put("b", "oil price", 20);
    put("b", "gas price", 20);
    put("c", "gas price", 5);
    let refs: Vec<&Headline> = hs.iter().collect();
    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let tab = build_table(Unit { topic: Topic::EconomicIssue, year: 2020 }, &refs, &names, 50, CountingMode::Occurrences);
    let rows: Vec<String> = tab.table.rows().iter().map(|g| g.to_string()).collect();
    ensure(rows == ["gas price"], || format!("retained rows {rows:?}"))?;
    ensure(tab.table.row(0) == [51, 20, 5], || format!("counts {:?}", tab.table.row(0)))?;
    Ok("count 51 retained, count 50 dropped at inclusion threshold 50".into())
}

fn c7_planted_discrepancy() -> Verdict {
    let outlets = OutletSet::default_nine();
    let pre = Preprocessor::english();
    let mut min_factor = f64::INFINITY;
    for seed in 0..20 {
        let planted = planted_discrepancy(seed, &outlets, 600);
        let headlines = build_headlines(&planted.records, &outlets, &pre).map_err(|e| e.to_string())?.headlines;
        let lexicon = load_lexicon(planted.lexicon_tsv.as_bytes(), &pre).map_err(|e| e.to_string())?;
        let buckets = select_relevant(&headlines, &lexicon, MultiTopic::All);
        let bucket: Vec<&Headline> = buckets[&Topic::DomesticPolitics].iter().copied().filter(|h| h.year == planted.year).collect();
        let unit = Unit { topic: Topic::DomesticPolitics, year: planted.year };
        let tab = build_table(unit, &bucket, &outlets.names(), 50, CountingMode::Occurrences);
        let emb = ca_embed(&tab.table).map_err(|e| format!("seed {seed}: {e}"))?;
        let pts = &emb.outlet_points;
        let clusters = find_clusters(pts, ClusterThreshold::Auto);
        let oi = pts.iter().position(|p| p.outlet == planted.outlier).ok_or("outlier missing from embedding")?;
        ensure(!clusters.major_members().contains(&oi), || format!("seed {seed}: {} sits in the major cluster", planted.outlier))?;
        let d_out = centroid_distance(pts, &planted.outlier, &clusters).map_err(|e| format!("{e:?}"))?;
        let d_rest = pts
            .iter()
            .filter(|p| p.outlet != planted.outlier)
            .map(|p| centroid_distance(pts, &p.outlet, &clusters).unwrap_or(0.0))
            .fold(0.0f64, f64::max);
        let factor = d_out / d_rest;
        min_factor = min_factor.min(factor);
        ensure(factor >= 3.0, || format!("seed {seed}: factor {factor:.2}"))?;
    }
    Ok(format!("20 seeds, outlier never in the major cluster, smallest distance factor {min_factor:.1} (need >= 3)"))
}

fn c8_mad_behaviour() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let base: Vec<[f64; 2]> = (0..9).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let mut layouts = YearLayouts::new();
    for (k, year) in (2014..=2022).enumerate() {
        let s = 1.0 - 0.1 * k as f64;
        let shift = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let pts = base.iter().enumerate().map(|(i, p)| OutletPoint::new(format!("o{i}"), s * p[0] + shift[0], s * p[1] + shift[1])).collect();
        layouts.insert(year, Some(pts));
    }
    let series = build_series(Topic::SocialIssue, &layouts, SeriesKind::ClusterMad, ClusterThreshold::Auto, MadOptions::default());
    let vals: Vec<f64> = series.values.values().map(|v| v.unwrap()).collect();
    ensure(vals.windows(2).all(|w| w[1] < w[0]), || format!("series not strictly decreasing: {vals:?}"))?;

    let mut worst = 0.0f64;
    let mut over = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let turn = rng.gen_range(0.0..std::f64::consts::TAU);
        let centre = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let tight: Vec<OutletPoint> = (0..8)
            .map(|k| {
                let a = turn + k as f64 * std::f64::consts::FRAC_PI_4;
                let r = 0.1 * rng.gen_range(0.98..1.02);
                OutletPoint::new(format!("o{k}"), centre[0] + r * a.cos(), centre[1] + r * a.sin())
            })
            .collect();
        let mut with_outlier = tight.clone();
        with_outlier.push(OutletPoint::new("far", centre[0] + 40.0, centre[1] - 25.0));
        let before = cluster_mad(&tight, &find_clusters(&tight, ClusterThreshold::Auto), MadOptions::default());
        let after = cluster_mad(&with_outlier, &find_clusters(&with_outlier, ClusterThreshold::Auto), MadOptions::default());
        let change = (after - before).abs() / before;
        worst = worst.max(change);
        if change >= 0.10 {
            over += 1;
        }
    }
    ensure(over == 0, || format!("one extreme outlier moved MAD by 10% or more in {over}/20 tight clusters (worst {:.1}%)", 100.0 * worst))?;
    Ok(format!("shrinking layouts give a strictly decreasing series; one extreme outlier moves MAD by at most {:.2}% (limit 10%)", 100.0 * worst))
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn synthetic_workspace(dir: &Path) -> RunConfig {
    let records = synth_corpus(&SynthSpec::default(), &OutletSet::default_nine());
    fs::write(dir.join("corpus.jsonl"), to_jsonl(&records)).unwrap();
    fs::write(dir.join("lexicon.tsv"), bundled_lexicon_tsv()).unwrap();
    let mut cfg = RunConfig::default();
    cfg.inputs.corpus = Some(dir.join("corpus.jsonl"));
    cfg.inputs.lexicon = Some(dir.join("lexicon.tsv"));
    cfg
}

fn c9_determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = synthetic_workspace(dir.path());
    let mut trees = Vec::new();
    for (run, jobs) in [1usize, 8, 8].into_iter().enumerate() {
        cfg.output.dir = dir.path().join(format!("out{run}"));
        cfg.output.jobs = jobs;
        let m = pipeline::analyze(&cfg).map_err(|e| e.to_string())?;
        ensure(m.units.len() == 36, || format!("{} units", m.units.len()))?;
        trees.push(files_under(&cfg.output.dir));
    }
    let n = trees[0].len();
    ensure(trees.iter().all(|t| *t == trees[0]), || "output trees differ between runs".into())?;
    Ok(format!("3 analyze runs (jobs 1, 8, 8) on {} headlines, {n} files byte-identical", SynthSpec::default().total(9)))
}

fn c10_reproduction_path() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = synthetic_workspace(dir.path());
    cfg.output.dir = dir.path().join("out");
    ensure(cfg.thresholds.mining == 100 && cfg.thresholds.inclusion == 50 && cfg.scope.years.range() == (2014..=2022), || "defaults drifted".into())?;
    let mined = pipeline::mine(&cfg).map_err(|e| e.to_string())?;
    let m = pipeline::analyze(&cfg).map_err(|e| e.to_string())?;
    ensure(mined.candidates > 0, || "no mined bigrams".into())?;
    ensure(m.units.len() == 4 * 9, || format!("{} units", m.units.len()))?;
    for u in m.units.iter().filter(|u| u.status == UnitStatus::Ok) {
        let text = fs::read_to_string(cfg.output.dir.join(pipeline::unit_dir(u.unit())).join("embedding.csv")).unwrap();
        let pts = pipeline::read_embedding_csv(&text)?;
        ensure(pts.len() == u.columns, || format!("{}/{}: {} points", u.topic, u.year, pts.len()))?;
    }
    let ok = m.units.iter().filter(|u| u.status == UnitStatus::Ok).count();
    Ok(format!(
        "shape only: {} candidate bigrams, {} relevant headlines, {ok}/36 per-topic per-year embeddings (paper figures not asserted)",
        mined.candidates, m.selection.relevant
    ))
}

fn main() {
    type Criterion = (u8, &'static str, Option<u64>, fn() -> Verdict);
    let criteria: [Criterion; 10] = [
        (1, "CA oracle equivalence", Some(10), c1_inertia_identity),
        (2, "chi-square distance preservation", Some(10), c2_distance_preservation),
        (3, "SVD correctness", Some(30), c3_svd),
        (4, "identical-profile degeneracy", None, c4_identical_profiles),
        (5, "mining/selection soundness", Some(5), c5_mining_and_selection),
        (6, "threshold semantics", None, c6_threshold_semantics),
        (7, "planted-discrepancy detection", Some(20), c7_planted_discrepancy),
        (8, "MAD behaviour", None, c8_mad_behaviour),
        (9, "end-to-end determinism", Some(60), c9_determinism),
        (10, "reproduction path", None, c10_reproduction_path),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let took = start.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(l)) if took > Duration::from_secs(l) => Err(format!("took {:.1}s, limit {l}s", took.as_secs_f64())),
            (r, _) => r,
        };
        let timing = match limit {
            Some(l) => format!("{:.2}s / {l}s", took.as_secs_f64()),
            None => format!("{:.2}s", took.as_secs_f64()),
        };
        match result {
            Ok(detail) => println!("PASS [{id:>2}] {name}: {detail} ({timing})"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{id:>2}] {name}: {detail} ({timing})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
