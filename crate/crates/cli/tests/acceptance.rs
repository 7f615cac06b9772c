//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ddt_core::augment::{export_voc, read_voc_annotation};
use ddt_core::bbox::BoundingBox;
use ddt_core::evaluate::{corloc, iou, noise_roc, RocCurve};
use ddt_core::heatmap::read_pgm;
use ddt_core::io::{
    load_manifest, read_descriptor_file, write_descriptor_file, DescriptorTensor, ImageRecord, ImageSetManifest,
    Layer, LayerPaths,
};
use ddt_core::localize::{
    ddt_localize, ddt_plus_image, ddt_plus_localize, largest_connected_component, read_results, BinaryMap,
    LayerModel, Method,
};
use ddt_core::stats::CovarianceAccumulator;
use ddt_core::synth::{generate, SynthSpec};
use ddt_core::transform::{project, IndicatorMap};
use ddt_core::LocalizationResult;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- planted

fn planted_recovery() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SynthSpec::planted(2024, 20, 16, 16, 64, 8.0, 2);
    let start = Instant::now();
    let manifest = generate(&spec, dir.path()).map_err(|e| e.to_string())?;
    let results = ddt_localize(&manifest, 2).map_err(|e| e.to_string())?;
    let report = corloc(&results, &manifest).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    check(report.evaluated == 18, || format!("evaluated {} images, expected 18", report.evaluated))?;
    check(report.corloc == 100.0, || format!("CorLoc {}", report.corloc))?;
    let noisy_ids = &spec.noisy_image_ids;
    let rate = |noisy: bool| results.iter().filter(move |r| noisy_ids.contains(&r.image_id) == noisy).map(|r| r.noise_rate);
    let noisy_max = rate(true).fold(f64::NEG_INFINITY, f64::max);
    let planted_min = rate(false).fold(f64::INFINITY, f64::min);
    check(rate(true).count() == 2, || "expected 2 noisy images".into())?;
    check(noisy_max < planted_min, || format!("noisy rate {noisy_max} not below planted {planted_min}"))?;
    check(elapsed < Duration::from_secs(5), || format!("runtime {elapsed:?}"))?;
    Ok(format!("CorLoc 100.0 over 18, noisy max rate {noisy_max:.4} < planted min {planted_min:.4}, {elapsed:.2?}"))
}

// ---------------------------------------------------------------- eigen

fn correlated_set(rng: &mut ChaCha8Rng, d: usize) -> Vec<DescriptorTensor> {
    let n_latent = d.min(3);
    let latent: Vec<Vec<f64>> = (0..n_latent).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let scales = [6.0, 2.5, 1.0];
    let offset: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    (0..rng.random_range(2..=12))
        .map(|_| {
            let (h, w) = (rng.random_range(2..=6), rng.random_range(2..=6));
            let mut data = Vec::with_capacity(h * w * d);
            for _ in 0..h * w {
                let coefs: Vec<f64> = scales[..n_latent].iter().map(|s| s * rng.random_range(-1.0..1.0)).collect();
                for c in 0..d {
                    let v: f64 = latent.iter().zip(&coefs).map(|(l, k)| l[c] * k).sum::<f64>()
                        + 0.2 * rng.random_range(-1.0..1.0)
                        + offset[c];
                    data.push(v as f32);
                }
            }
            DescriptorTensor::new(h, w, d, data).unwrap()
        })
        .collect()
}

fn dense_reference(set: &[DescriptorTensor], d: usize) -> (Vec<f64>, Vec<Vec<f64>>, usize) {
    let xs: Vec<Vec<f64>> = set.iter().flat_map(|t| t.cells().map(|c| c.iter().map(|&v| f64::from(v)).collect())).collect();
    let k = xs.len();
    let mut mean = vec![0.0; d];
    for x in &xs {
        for c in 0..d {
            mean[c] += x[c];
        }
    }
    mean.iter_mut().for_each(|m| *m /= k as f64);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for x in &xs {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (x[i] - mean[i]) * (x[j] - mean[j]);
            }
        }
    }
    cov /= k as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order.iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
    (values, vectors, k)
}

fn eigen_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let sets = 60;
    let (mut worst_val, mut worst_cos, mut worst_var) = (0.0f64, 1.0f64, 0.0f64);
    for s in 0..sets {
        let d = rng.random_range(1..=8);
        let set = correlated_set(&mut rng, d);
        let mut acc = CovarianceAccumulator::new(d);
        for t in &set {
            acc.accumulate(t).map_err(|e| e.to_string())?;
        }
        let top_k = d.min(2);
        let stats = acc.finalize(top_k).map_err(|e| format!("set {s}: {e}"))?;
        let (values, vectors, k) = dense_reference(&set, d);
        let lambda1 = values[0];

        for (i, (a, b)) in stats.eigenvalues().iter().zip(&values).enumerate() {
            let rel = (a - b).abs() / b.abs().max(1e-9 * lambda1);
            worst_val = worst_val.max(rel);
            check(rel <= 1e-6, || format!("set {s} d={d}: eigenvalue {i} {a} vs {b}"))?;
        }
        for c in 1..=top_k {
            let xi = stats.component(c).ok_or("missing component")?;
            let cos: f64 = xi.iter().zip(&vectors[c - 1]).map(|(a, b)| a * b).sum::<f64>().abs();
            worst_cos = worst_cos.min(cos);
            check(cos >= 1.0 - 1e-8, || format!("set {s} d={d}: component {c} |cos| {cos}"))?;
        }

        let maps: Vec<IndicatorMap> =
            set.iter().map(|t| project("x", t, &stats, 1)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        let sum: f64 = maps.iter().flat_map(|m| m.values.iter()).sum();
        let sq: f64 = maps.iter().flat_map(|m| m.values.iter()).map(|p| p * p).sum();
        let var_rel = (sq / k as f64 - lambda1).abs() / lambda1;
        worst_var = worst_var.max(var_rel);
        check(var_rel <= 1e-5, || format!("set {s}: (1/K)sum p^2 off by {var_rel:e} relative"))?;
        let bound = 1e-4 * (k as f64).sqrt() * lambda1.sqrt();
        check(sum.abs() <= bound, || format!("set {s}: projection sum {sum} exceeds {bound}"))?;
    }
    Ok(format!(
        "{sets} sets, worst eigenvalue rel err {worst_val:.1e}, min |cos| 1-{:.1e}, worst variance rel err {worst_var:.1e}",
        1.0 - worst_cos
    ))
}

// ---------------------------------------------------------------- components

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn union_find_largest(b: &BinaryMap) -> Option<Vec<(u32, u32)>> {
    let (h, w) = (b.height, b.width);
    let mut uf = UnionFind((0..h * w).collect());
    for r in 0..h {
        for c in 0..w {
            if !b.get(r, c) {
                continue;
            }
            for (dr, dc) in [(0i64, 1i64), (1, -1), (1, 0), (1, 1)] {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr < h as i64 && nc >= 0 && nc < w as i64 && b.get(nr as usize, nc as usize) {
                    uf.union(r * w + c, nr as usize * w + nc as usize);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for idx in (0..h * w).filter(|&i| b.bits[i]) {
        let root = uf.find(idx);
        groups.entry(root).or_default().push(idx);
    }
    // ties: smallest row-major anchor, i.e. the first group met in index order
    let mut best: Option<&Vec<usize>> = None;
    for g in groups.values() {
        if best.is_none_or(|cur| g.len() > cur.len() || (g.len() == cur.len() && g[0] < cur[0])) {
            best = Some(g);
        }
    }
    best.map(|g| g.iter().map(|&i| ((i / w) as u32, (i % w) as u32)).collect())
}

fn component_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let maps = 1200;
    let mut ties = 0;
    for n in 0..maps {
        let (h, w) = (rng.random_range(1..=32), rng.random_range(1..=32));
        let density = rng.random_range(0.05..0.75);
        let mut b = BinaryMap::new(h, w);
        for r in 0..h {
            for c in 0..w {
                if rng.random_bool(density) {
                    b.set(r, c, true);
                }
            }
        }
        let expected = union_find_largest(&b);
        let got = largest_connected_component(&b);
        match (&got, &expected) {
            (None, None) => {}
            (Some(cc), Some(px)) => {
                check(cc.pixels() == px.as_slice(), || format!("map {n} ({h}x{w}): pixel sets differ"))?;
                check(cc.anchor() == px[0], || format!("map {n}: anchor {:?} vs {:?}", cc.anchor(), px[0]))?;
                let mut sizes: Vec<usize> = Vec::new();
                let mut probe = b.clone();
                while let Some(c) = largest_connected_component(&probe) {
                    sizes.push(c.size());
                    for &(r, c) in c.pixels() {
                        probe.set(r as usize, c as usize, false);
                    }
                }
                if sizes.len() > 1 && sizes[0] == sizes[1] {
                    ties += 1;
                }
            }
            _ => return Err(format!("map {n}: presence differs ({} vs {})", got.is_some(), expected.is_some())),
        }
    }
    Ok(format!("{maps} maps agree, {ties} with tied largest components"))
}

// ---------------------------------------------------------------- metrics

fn bx(x0: u32, y0: u32, x1: u32, y1: u32) -> BoundingBox {
    BoundingBox::new(x0, y0, x1, y1).unwrap()
}

fn record(id: &str, gt: Option<Vec<BoundingBox>>) -> ImageRecord {
    ImageRecord {
        id: id.into(),
        width: 100,
        height: 100,
        layers: LayerPaths { last: "unused".into(), prev: None },
        gt_boxes: gt,
        noisy: None,
    }
}

fn result(id: &str, b: Option<BoundingBox>, rate: f64) -> LocalizationResult {
    LocalizationResult {
        image_id: id.into(),
        bbox: b,
        noisy: b.is_none(),
        noise_rate: rate,
        component_size: b.map_or(0, |b| b.area()),
        method: Method::Ddt,
    }
}

fn metric_exactness() -> Outcome {
    let a = bx(0, 0, 9, 9);
    check((iou(&a, &a) - 1.0).abs() <= 1e-12, || "identical boxes".into())?;
    check(iou(&a, &bx(20, 20, 29, 29)).abs() <= 1e-12, || "disjoint boxes".into())?;
    check(iou(&a, &bx(10, 0, 19, 9)).abs() <= 1e-12, || "edge-adjacent boxes".into())?;
    let v = iou(&a, &bx(5, 5, 14, 14));
    check((v - 25.0 / 175.0).abs() <= 1e-12, || format!("overlap case {v}"))?;

    // half box: IoU exactly 0.5, must not count
    let half = bx(0, 0, 9, 4);
    check(iou(&a, &half) == 0.5, || "half-box IoU is not exactly 0.5".into())?;
    let manifest = ImageSetManifest {
        set_name: "metric".into(),
        images: vec![
            record("exact", Some(vec![a])),
            record("half", Some(vec![a])),
            record("second_gt", Some(vec![bx(50, 50, 59, 59), a])),
            record("miss", Some(vec![a])),
            record("noisy_pred", Some(vec![a])),
            record("no_gt", None),
        ],
    };
    let results = vec![
        result("exact", Some(a), 0.2),
        result("half", Some(half), 0.2),
        result("second_gt", Some(bx(0, 0, 9, 8)), 0.2),
        result("miss", Some(bx(60, 60, 99, 99)), 0.2),
        result("noisy_pred", None, 0.0),
        result("no_gt", Some(a), 0.2),
    ];
    let report = corloc(&results, &manifest).map_err(|e| e.to_string())?;
    check(report.evaluated == 5, || format!("evaluated {}", report.evaluated))?;
    check(report.correct == 2, || format!("correct {}", report.correct))?;
    check(report.corloc == 40.0, || format!("CorLoc {}", report.corloc))?;
    let verdicts: Vec<(&str, bool)> = report.per_image.iter().map(|p| (p.id.as_str(), p.correct)).collect();
    let want = [("exact", true), ("half", false), ("second_gt", true), ("miss", false), ("noisy_pred", false)];
    check(verdicts == want, || format!("per-image verdicts {verdicts:?}"))?;
    Ok("IoU unit cases within 1e-12, CorLoc 2/5 = 40.0, IoU 0.5 counted incorrect".into())
}

// ---------------------------------------------------------------- roc

fn pairwise_auc(scored: &[(f64, bool)]) -> f64 {
    // detector fires on low scores, so a noisy image should score lower
    let (mut num, mut pairs) = (0.0, 0.0);
    for &(sn, ln) in scored {
        for &(sc, lc) in scored {
            if ln && !lc {
                pairs += 1.0;
                num += if sn < sc {
                    1.0
                } else if sn == sc {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / pairs
}

fn roc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cases = 400;
    for n in 0..cases {
        let len = rng.random_range(2..=40);
        let levels = rng.random_range(2..=12);
        let mut scored: Vec<(f64, bool)> =
            (0..len).map(|_| (f64::from(rng.random_range(0..levels)) / levels as f64, rng.random_bool(0.4))).collect();
        scored[0].1 = true;
        scored[1].1 = false;
        let curve = RocCurve::from_scores(&scored).map_err(|e| e.to_string())?;
        let want = pairwise_auc(&scored);
        check((curve.auc - want).abs() <= 1e-12, || format!("case {n}: AUC {} vs {want}", curve.auc))?;
    }

    let mut aucs = Vec::new();
    for seed in [11, 12, 13] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let spec = SynthSpec::planted(seed, 20, 16, 16, 64, 8.0, 2);
        let manifest = generate(&spec, dir.path()).map_err(|e| e.to_string())?;
        let results = ddt_localize(&manifest, 2).map_err(|e| e.to_string())?;
        let auc = noise_roc(&results, &manifest).map_err(|e| e.to_string())?.auc;
        check(auc >= 0.95, || format!("seed {seed}: AUC {auc}"))?;
        aucs.push(auc);
    }
    Ok(format!("{cases} random cases match pairwise AUC within 1e-12, synthetic AUCs {aucs:?}"))
}

// ---------------------------------------------------------------- ddt+

fn ddt_plus_containment() -> Outcome {
    let mut checked = 0;
    for seed in [21, 22] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut spec = SynthSpec::planted(seed, 20, 16, 16, 64, 8.0, 2);
        spec.two_layer = true;
        let manifest = generate(&spec, dir.path()).map_err(|e| e.to_string())?;
        let last = LayerModel::fit(&manifest, Layer::Last, 1).map_err(|e| e.to_string())?;
        let prev = LayerModel::fit(&manifest, Layer::Prev, 1).map_err(|e| e.to_string())?;
        let ddt = last.ddt_images(&manifest).map_err(|e| e.to_string())?;
        for (rec, state) in manifest.images.iter().zip(&ddt) {
            let tensor = rec.load_layer(Layer::Prev).map_err(|e| e.to_string())?;
            let prev_map = project(&rec.id, &tensor, &prev.stats, 1).map_err(|e| e.to_string())?;
            let (mask, plus) = ddt_plus_image(state, &prev_map);
            match (state.component_mask(), &mask) {
                (Some(full), Some(m)) => check(m.is_subset_of(&full), || format!("{}: mask escapes DDT mask", rec.id))?,
                (None, m) => check(m.is_none() && plus.noisy, || format!("{}: mask without DDT component", rec.id))?,
                (Some(_), None) => check(plus.noisy, || format!("{}: empty mask not noisy", rec.id))?,
            }
            let all_true = IndicatorMap { values: vec![1.0; prev_map.values.len()], ..prev_map };
            let (same_mask, same) = ddt_plus_image(state, &all_true);
            check(same_mask == state.component_mask(), || format!("{}: identity mask differs", rec.id))?;
            check(same.bbox == state.result().bbox, || format!("{}: identity box differs", rec.id))?;
            checked += 1;
        }
        let results = ddt_plus_localize(&manifest, 1).map_err(|e| e.to_string())?;
        check(results.len() == manifest.len(), || "ddt_plus result count".into())?;
    }
    Ok(format!("{checked} images: DDT+ mask within DDT mask, all-true prev layer reproduces DDT"))
}

// ---------------------------------------------------------------- formats

fn ddt(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ddt")).args(args).current_dir(cwd).output().map_err(|e| e.to_string())?;
    check(out.status.success(), || format!("ddt {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn tree_bytes(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| e.to_string())? {
            let p = entry.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, read(&p)?);
            }
        }
    }
    Ok(out)
}

/// Runs every subcommand into `work` with the given thread count.
fn cli_pipeline(work: &Path, threads: &str) -> Result<(), String> {
    let t = ["--threads", threads];
    ddt(&[&t[..], &["synth", "--seed", "5", "--two-layer", "--out-dir", "set"]].concat(), work)?;
    for method in ["ddt", "ddt-plus", "scda"] {
        let out = format!("{method}.json");
        ddt(&[&t[..], &["localize", "--manifest", "set/manifest.json", "--method", method, "--out", &out]].concat(), work)?;
    }
    ddt(&[&t[..], &["eval", "--manifest", "set/manifest.json", "--results", "ddt.json", "--out", "report.json"]].concat(), work)?;
    ddt(&[&t[..], &["noise-roc", "--manifest", "set/manifest.json", "--results", "ddt.json", "--out", "roc.csv"]].concat(), work)?;
    ddt(&[&t[..], &["filter", "--manifest", "set/manifest.json", "--results", "ddt.json", "--threshold", "0.1", "--out", "clean.json"]].concat(), work)?;
    ddt(&[&t[..], &["export-voc", "--manifest", "clean.json", "--results", "ddt.json", "--category", "obj", "--out-dir", "voc"]].concat(), work)?;
    ddt(&[&t[..], &["heatmap", "--manifest", "set/manifest.json", "--id", "img_003", "--out", "heat.pgm"]].concat(), work)?;
    ddt(&[&t[..], &["heatmap", "--manifest", "set/manifest.json", "--id", "img_003", "--layer", "prev", "--component", "2", "--out", "heat_prev.pgm"]].concat(), work)?;
    Ok(())
}

fn validate_cli_outputs(work: &Path) -> Result<(), String> {
    let manifest = load_manifest(work.join("set/manifest.json")).map_err(|e| e.to_string())?;
    for (file, method) in [("ddt.json", Method::Ddt), ("ddt-plus.json", Method::DdtPlus), ("scda.json", Method::Scda)] {
        let r = read_results(work.join(file)).map_err(|e| format!("{file}: {e}"))?;
        check(r.method == method, || format!("{file}: method {:?}", r.method))?;
        check(r.results.len() == manifest.len(), || format!("{file}: {} entries", r.results.len()))?;
        let ids: Vec<&str> = r.results.iter().map(|x| x.image_id.as_str()).collect();
        let want: Vec<&str> = manifest.images.iter().map(|x| x.id.as_str()).collect();
        check(ids == want, || format!("{file}: order differs from manifest"))?;
    }

    let report: serde_json::Value =
        serde_json::from_slice(&read(&work.join("report.json"))?).map_err(|e| format!("report.json: {e}"))?;
    check(report["corloc"].is_f64() && report["evaluated"].is_u64() && report["correct"].is_u64(), || "report fields".into())?;
    let per_image = report["per_image"].as_array().ok_or("report per_image")?;
    check(
        per_image.iter().all(|p| p["id"].is_string() && p["correct"].is_boolean() && (p["iou"].is_f64() || p["iou"].is_null())),
        || "report per_image entries".into(),
    )?;

    let csv = String::from_utf8(read(&work.join("roc.csv"))?).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = csv.lines().collect();
    check(lines.first() == Some(&"threshold,fpr,tpr"), || "roc header".into())?;
    check(lines.get(1) == Some(&"-inf,0,0"), || "roc sentinel row".into())?;
    let footer = lines.last().and_then(|l| l.strip_prefix("# AUC: ")).ok_or("roc footer")?;
    footer.parse::<f64>().map_err(|e| format!("roc AUC: {e}"))?;
    for row in &lines[2..lines.len() - 1] {
        let cols: Vec<f64> = row.split(',').map(str::parse).collect::<Result<_, _>>().map_err(|e| format!("roc row {row}: {e}"))?;
        check(cols.len() == 3 && (0.0..=1.0).contains(&cols[1]) && (0.0..=1.0).contains(&cols[2]), || format!("roc row {row}"))?;
    }

    let cleaned = load_manifest(work.join("clean.json")).map_err(|e| format!("clean.json: {e}"))?;
    check(cleaned.len() == 18, || format!("cleaned manifest has {} images", cleaned.len()))?;
    for rec in &cleaned.images {
        let ann = read_voc_annotation(work.join("voc").join(format!("{}.xml", rec.id))).map_err(|e| e.to_string())?;
        check(ann.width == rec.width && ann.height == rec.height && ann.objects.len() == 1, || format!("{}.xml", rec.id))?;
    }
    for (file, size) in [("heat.pgm", (256, 256)), ("heat_prev.pgm", (256, 256))] {
        let img = read_pgm(work.join(file)).map_err(|e| format!("{file}: {e}"))?;
        check((img.width, img.height) == size, || format!("{file}: {}x{}", img.width, img.height))?;
    }
    Ok(())
}

fn format_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let tensors = 200;
    for n in 0..tensors {
        let (h, w, d) = (rng.random_range(1..=9), rng.random_range(1..=9), rng.random_range(1..=16));
        let data: Vec<f32> = (0..h * w * d)
            .map(|_| match rng.random_range(0..4) {
                0 => f32::from_bits(rng.random::<u32>() & 0x807f_ffff), // subnormals and signed zero
                1 => rng.random_range(-1e30f32..1e30),
                _ => rng.random_range(-4.0f32..4.0),
            })
            .collect();
        let t = DescriptorTensor::new(h, w, d, data).map_err(|e| e.to_string())?;
        let p = dir.path().join(format!("t{n}.ddt1"));
        write_descriptor_file(&t, &p).map_err(|e| e.to_string())?;
        let back = read_descriptor_file(&p).map_err(|e| e.to_string())?;
        let same = (back.h(), back.w(), back.d()) == (h, w, d)
            && back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        check(same, || format!("tensor {n} not bit-exact"))?;
    }

    let voc_dir = dir.path().join("voc");
    let images: Vec<ImageRecord> = (0..100)
        .map(|i| ImageRecord { width: 640, height: 480, ..record(&format!("v{i}"), None) })
        .collect();
    let manifest = ImageSetManifest { set_name: "voc".into(), images };
    let results: Vec<LocalizationResult> = (0..100)
        .map(|i| {
            let (x0, y0) = (rng.random_range(0..640), rng.random_range(0..480));
            let b = bx(x0, y0, rng.random_range(x0..640), rng.random_range(y0..480));
            result(&format!("v{i}"), Some(b), 0.4)
        })
        .collect();
    export_voc(&results, &manifest, "a & <b>", &voc_dir).map_err(|e| e.to_string())?;
    for r in &results {
        let ann = read_voc_annotation(voc_dir.join(format!("{}.xml", r.image_id))).map_err(|e| e.to_string())?;
        check(Some(ann.objects[0].bbox) == r.bbox && ann.objects[0].name == "a & <b>", || format!("{} VOC mismatch", r.image_id))?;
    }

    let runs: Vec<(&str, tempfile::TempDir)> = ["1", "8", "8"]
        .into_iter()
        .map(|t| tempfile::tempdir().map(|d| (t, d)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    for (threads, work) in &runs {
        cli_pipeline(work.path(), threads)?;
    }
    validate_cli_outputs(runs[0].1.path())?;
    let reference = tree_bytes(runs[0].1.path())?;
    for (threads, work) in &runs[1..] {
        let other = tree_bytes(work.path())?;
        check(reference.keys().eq(other.keys()), || format!("--threads {threads}: file sets differ"))?;
        for (name, bytes) in &reference {
            check(&other[name] == bytes, || format!("--threads {threads}: {name} differs"))?;
        }
    }
    Ok(format!(
        "{tensors} DDT1 files bit-exact, 100 VOC boxes exact, {} CLI outputs schema-valid and identical across --threads 1/8 and reruns",
        reference.len()
    ))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("planted-signal recovery", planted_recovery),
        ("eigen oracle", eigen_oracle),
        ("connected-component oracle", component_oracle),
        ("metric exactness", metric_exactness),
        ("noise-ROC oracle", roc_oracle),
        ("DDT+ containment", ddt_plus_containment),
        ("format round-trip and determinism", format_round_trips),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
