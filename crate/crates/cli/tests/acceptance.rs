//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test -p srss-cli --test acceptance`.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};
use srss_cli::{cmd_metrics, cmd_pd_plane, read_report_column, MetricsArgs, PdPlaneArgs};
use srss_core::ensemble::{ensemble_pipeline, format_percent, rank_by_votes};
use srss_core::io::{load_planar_f32, load_png, save_png};
use srss_core::manifest::write_sample_set;
use srss_core::resample::bicubic_resize;
use srss_core::{
    degrade, label_consensus, lr_consistency, mse, parse_ballot_log, psnr, ssim, tally, Ballot,
    Image, PsnrMode, ResampleSpec, SampleSet, ScaleFactor, SetShape, StudyConfig, PSNR_CAP_DB,
};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures");

fn fixture(name: &str) -> PathBuf {
    Path::new(FIXTURES).join(name)
}

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Option<Duration>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_image(rng: &mut StdRng, w: usize, h: usize, c: usize) -> Image {
    Image::from_fn(w, h, c, |_, _, _| rng.gen::<f64>()).unwrap()
}

fn label_consensus_fixture() -> Check {
    let text =
        std::fs::read_to_string(fixture("digit_ballots.jsonl")).map_err(|e| e.to_string())?;
    let ballots: Vec<Ballot> = parse_ballot_log(&text)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|r| r.ballot)
        .collect();
    ensure(ballots.len() == 30, || {
        format!("{} ballots in fixture", ballots.len())
    })?;
    let shape = SetShape {
        set_id: "digit-5or6".into(),
        candidates: 324,
        label_question: Some("Which digit is this?".into()),
    };
    let t = tally(&ballots, &shape, 2).map_err(|e| e.to_string())?;
    let c = label_consensus(&t).map_err(|e| e.to_string())?;
    let (five, six) = (format_percent(c["5"]), format_percent(c["6"]));
    ensure(five == "73.3%" && six == "26.7%", || {
        format!("got {five} / {six}")
    })?;
    Ok(format!(
        "\"5\" {} ({five}), \"6\" {} ({six})",
        t.label_counts["5"], t.label_counts["6"]
    ))
}

fn ensemble_optimality() -> Check {
    let mut rng = StdRng::seed_from_u64(20240501);
    let mut comparisons = 0usize;
    for trial in 0..20 {
        let n = rng.gen_range(2..=8);
        let (w, h) = (rng.gen_range(1..=16), rng.gen_range(1..=16));
        let c = if rng.gen_bool(0.5) { 1 } else { 3 };
        let cands: Vec<Image> = (0..n).map(|_| random_image(&mut rng, w, h, c)).collect();
        let lr = Image::filled(w, h, c, 0.5).unwrap();
        let set = SampleSet::new("r", lr, cands.clone(), ScaleFactor::new(1).unwrap(), None)
            .map_err(|e| e.to_string())?;
        let max_select = rng.gen_range(1..=n);
        let voters = rng.gen_range(1..=10);
        let ballots: Vec<Ballot> = (0..voters)
            .map(|v| {
                let mut idx: Vec<usize> = (0..n).collect();
                let take = rng.gen_range(1..=max_select);
                for i in 0..take {
                    let j = rng.gen_range(i..n);
                    idx.swap(i, j);
                }
                Ballot {
                    voter_id: format!("v{v}"),
                    set_id: "r".into(),
                    selections: idx[..take].to_vec(),
                    label: None,
                }
            })
            .collect();
        let k = rng.gen_range(1..=n);
        let res = ensemble_pipeline(&set, &ballots, k, max_select).map_err(|e| e.to_string())?;
        let subset: Vec<&Image> = res.selected_indices.iter().map(|&i| &cands[i]).collect();
        let cost = |x: &Image| -> f64 {
            subset
                .iter()
                .map(|s| {
                    x.data()
                        .iter()
                        .zip(s.data())
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                })
                .sum()
        };
        let avg_cost = cost(&res.image);
        for (i, cand) in cands.iter().enumerate() {
            comparisons += 1;
            let cc = cost(cand);
            ensure(avg_cost <= cc + 1e-9 * (1.0 + cc), || {
                format!("trial {trial}: average costs {avg_cost}, candidate {i} costs {cc}")
            })?;
        }
    }
    Ok(format!("20 sets, {comparisons} comparisons, 0 violations"))
}

fn tie_break() -> Check {
    // every non-empty subset of {0,1,2} is a possible ballot
    let options: Vec<Vec<usize>> = (1u8..8)
        .map(|m| (0..3).filter(|i| m & (1 << i) != 0).collect())
        .collect();
    let shape = SetShape {
        set_id: "t".into(),
        candidates: 3,
        label_question: None,
    };
    let mut multisets = 0usize;
    // non-decreasing option sequences enumerate multisets exactly once
    fn walk(
        start: usize,
        left: usize,
        chosen: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]) -> Result<(), String>,
    ) -> Result<(), String> {
        f(chosen)?;
        if left == 0 {
            return Ok(());
        }
        for o in start..7 {
            chosen.push(o);
            walk(o, left - 1, chosen, f)?;
            chosen.pop();
        }
        Ok(())
    }
    let mut check = |combo: &[usize]| -> Result<(), String> {
        multisets += 1;
        let ballots: Vec<Ballot> = combo
            .iter()
            .enumerate()
            .map(|(v, &o)| Ballot {
                voter_id: format!("v{v}"),
                set_id: "t".into(),
                selections: options[o].clone(),
                label: None,
            })
            .collect();
        let t = tally(&ballots, &shape, 3).map_err(|e| e.to_string())?;
        let mut votes = [0usize; 3];
        for &o in combo {
            for &i in &options[o] {
                votes[i] += 1;
            }
        }
        ensure(t.votes == votes, || {
            format!("{combo:?}: votes {:?} vs {votes:?}", t.votes)
        })?;
        let mut seen = [false; 3];
        for &r in &t.ranking {
            seen[r] = true;
        }
        ensure(t.ranking.len() == 3 && seen.iter().all(|&s| s), || {
            format!("{combo:?}: ranking {:?} is not a permutation", t.ranking)
        })?;
        for pair in t.ranking.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let ordered = votes[a] > votes[b] || (votes[a] == votes[b] && a < b);
            ensure(ordered, || {
                format!("{combo:?}: ranking {:?} with votes {votes:?}", t.ranking)
            })?;
        }
        ensure(rank_by_votes(&votes) == t.ranking, || {
            format!("{combo:?}: unstable ranking")
        })
    };
    walk(0, 4, &mut Vec::new(), &mut check)?;
    Ok(format!("{multisets} ballot multisets, 0 violations"))
}

fn bicubic_golden() -> Check {
    let hr = load_png(fixture("digit_28.png")).map_err(|e| e.to_string())?;
    let lr = degrade(&hr, ScaleFactor::X4).map_err(|e| e.to_string())?;
    let golden = load_planar_f32(fixture("digit_28_to_7_golden.f32")).map_err(|e| e.to_string())?;
    ensure(lr.same_shape(&golden), || "golden shape differs".into())?;
    let worst = lr
        .data()
        .iter()
        .zip(golden.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 1.0 / 255.0, || format!("golden max error {worst}"))?;

    let mut rng = StdRng::seed_from_u64(7);
    let mut worst_inv = 0.0f64;
    for _ in 0..20 {
        let (w, h) = (rng.gen_range(1..=24), rng.gen_range(1..=24));
        let v = rng.gen::<f64>();
        let konst = Image::filled(w, h, 3, v).unwrap();
        for aa in [false, true] {
            let spec = ResampleSpec::new(rng.gen_range(1..=40), rng.gen_range(1..=40), aa);
            let out = bicubic_resize(&konst, spec).map_err(|e| e.to_string())?;
            for s in out.data() {
                worst_inv = worst_inv.max((s - v).abs());
            }
        }
        let img = random_image(&mut rng, w, h, 3);
        let same =
            bicubic_resize(&img, ResampleSpec::new(w, h, true)).map_err(|e| e.to_string())?;
        for (a, b) in same.data().iter().zip(img.data()) {
            worst_inv = worst_inv.max((a - b).abs());
        }
    }
    ensure(worst_inv <= 1e-9, || format!("invariant error {worst_inv}"))?;
    Ok(format!(
        "golden max err {worst:.2e}, invariants max err {worst_inv:.2e}"
    ))
}

fn mirrored(img: &Image, horizontal: bool) -> Image {
    let (w, h) = (img.width(), img.height());
    Image::from_fn(w, h, img.channels(), |x, y, c| {
        if horizontal {
            img.get(w - 1 - x, y, c)
        } else {
            img.get(x, h - 1 - y, c)
        }
    })
    .unwrap()
}

fn metric_sanity() -> Check {
    let mut rng = StdRng::seed_from_u64(99);
    let mut worst_sym = 0.0f64;
    for i in 0..50 {
        let (w, h) = (rng.gen_range(11..=40), rng.gen_range(11..=40));
        let c = if i % 2 == 0 { 3 } else { 1 };
        let a = random_image(&mut rng, w, h, c);
        let b = random_image(&mut rng, w, h, c);
        let e = |r: Result<f64, srss_core::MetricError>| r.map_err(|e| e.to_string());
        ensure(e(psnr(&a, &a))? == PSNR_CAP_DB, || {
            "psnr(a,a) is not the cap".into()
        })?;
        let self_ssim = e(ssim(&a, &a))?;
        ensure((self_ssim - 1.0).abs() <= 1e-9, || {
            format!("ssim(a,a) = {self_ssim}")
        })?;
        worst_sym = worst_sym
            .max((e(psnr(&a, &b))? - e(psnr(&b, &a))?).abs())
            .max((e(mse(&a, &b))? - e(mse(&b, &a))?).abs())
            .max((e(ssim(&a, &b))? - e(ssim(&b, &a))?).abs());
    }
    ensure(worst_sym <= 1e-9, || format!("asymmetry {worst_sym}"))?;

    // skimage structural_similarity, gaussian_weights, sigma 1.5, data_range 1,
    // on luma; see core/tests/fixtures/gen_fixtures.py
    let digit = load_png(fixture("digit_28.png")).map_err(|e| e.to_string())?;
    let natural = load_png(fixture("natural_128.png")).map_err(|e| e.to_string())?;
    let refs = [
        (
            "digit",
            ssim(&digit, &mirrored(&digit, true)),
            0.36319583573061787,
        ),
        (
            "natural",
            ssim(&natural, &mirrored(&natural, false)),
            0.7903392183231537,
        ),
    ];
    let mut worst_ref = 0.0f64;
    for (name, got, want) in refs {
        let got = got.map_err(|e| e.to_string())?;
        worst_ref = worst_ref.max((got - want).abs());
        ensure((got - want).abs() < 1e-4, || {
            format!("{name}: ssim {got} vs reference {want}")
        })?;
    }
    Ok(format!(
        "50 pairs, asymmetry {worst_sym:.1e}; fixture ssim err {worst_ref:.1e}"
    ))
}

fn lr_self_consistency() -> Check {
    let mut rng = StdRng::seed_from_u64(3);
    for i in 0..10 {
        let f = [2u32, 3, 4][i % 3];
        let (w, h) = (
            f as usize * rng.gen_range(2..=12),
            f as usize * rng.gen_range(2..=12),
        );
        let img = random_image(&mut rng, w, h, 3);
        let factor = ScaleFactor::new(f).unwrap();
        let lr = degrade(&img, factor).map_err(|e| e.to_string())?;
        let v = lr_consistency(&img, &lr, factor).map_err(|e| e.to_string())?;
        ensure(v == PSNR_CAP_DB, || {
            format!("image {i} ({w}x{h}, x{f}): {v} dB")
        })?;
    }
    Ok("10 images at the cap".into())
}

/// Plain loops, no shared code with the library: PSNR over all samples,
/// SSIM on luma with an explicit 2-D Gaussian window at every valid position.
fn scalar_psnr(a: &Image, b: &Image) -> f64 {
    let n = a.data().len() as f64;
    let mut sum = 0.0;
    for i in 0..a.data().len() {
        let d = a.data()[i] - b.data()[i];
        sum += d * d;
    }
    let mse = sum / n;
    if mse < 1e-10 {
        100.0
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

fn scalar_ssim(a: &Image, b: &Image) -> f64 {
    let luma = |img: &Image, x: usize, y: usize| -> f64 {
        if img.channels() == 1 {
            img.get(x, y, 0)
        } else {
            0.299 * img.get(x, y, 0) + 0.587 * img.get(x, y, 1) + 0.114 * img.get(x, y, 2)
        }
    };
    let mut win = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (j, row) in win.iter_mut().enumerate() {
        for (i, w) in row.iter_mut().enumerate() {
            let (dx, dy) = (i as f64 - 5.0, j as f64 - 5.0);
            *w = (-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5)).exp();
            total += *w;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (w, h) = (a.width(), a.height());
    let mut acc = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - 11 {
        for x0 in 0..=w - 11 {
            let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (j, row) in win.iter().enumerate() {
                for (i, wt) in row.iter().enumerate() {
                    let g = wt / total;
                    let p = luma(a, x0 + i, y0 + j);
                    let q = luma(b, x0 + i, y0 + j);
                    mx += g * p;
                    my += g * q;
                    xx += g * p * p;
                    yy += g * q * q;
                    xy += g * p * q;
                }
            }
            let (vx, vy, cxy) = (xx - mx * mx, yy - my * my, xy - mx * my);
            acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    acc / count as f64
}

fn metrics_vs_scalar() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (sr, hr, lr) = (
        dir.path().join("sr"),
        dir.path().join("hr"),
        dir.path().join("lr"),
    );
    for d in [&sr, &hr, &lr] {
        std::fs::create_dir_all(d).map_err(|e| e.to_string())?;
    }
    let mut rng = StdRng::seed_from_u64(11);
    let natural = load_png(fixture("natural_128.png")).map_err(|e| e.to_string())?;
    let mut stems = Vec::new();
    for i in 0..6 {
        let stem = format!("img{i:02}");
        let (w, h) = (4 * rng.gen_range(4..=12), 4 * rng.gen_range(4..=12));
        let (ox, oy) = (rng.gen_range(0..=128 - w), rng.gen_range(0..=128 - h));
        let hr_img = Image::from_fn(w, h, 3, |x, y, c| natural.get(ox + x, oy + y, c)).unwrap();
        let amp = rng.gen_range(0.0..0.2);
        let sr_img = Image::from_fn(w, h, 3, |x, y, c| {
            (hr_img.get(x, y, c) + amp * (rng.gen::<f64>() - 0.5)).clamp(0.0, 1.0)
        })
        .unwrap();
        let lr_img = degrade(&hr_img, ScaleFactor::X4).map_err(|e| e.to_string())?;
        let save = |img: &Image, d: &Path| save_png(img, d.join(format!("{stem}.png")));
        save(&hr_img, &hr).map_err(|e| e.to_string())?;
        save(&sr_img, &sr).map_err(|e| e.to_string())?;
        save(&lr_img, &lr).map_err(|e| e.to_string())?;
        stems.push(stem);
    }
    let ext = dir.path().join("ext.csv");
    std::fs::write(&ext, "image_id,score_name,value\nimg00,DISTS,0.193\n")
        .map_err(|e| e.to_string())?;
    let out = dir.path().join("ldm.csv");
    let summary = cmd_metrics(&MetricsArgs {
        sr_dir: &sr,
        hr_dir: &hr,
        lr_dir: &lr,
        factor: ScaleFactor::X4,
        external_scores: Some(&ext),
        psnr_mode: PsnrMode::Rgb,
        out: &out,
    })
    .map_err(|e| format!("{e:#}"))?;
    ensure(summary.ok(), || format!("{:?}", summary.failures))?;

    let col = |c: &str| read_report_column(&out, c).map_err(|e| format!("{e:#}"));
    let (psnr_col, ssim_col) = (col("psnr_db")?, col("ssim")?);
    let (mut dp, mut ds) = (0.0f64, 0.0f64);
    for stem in &stems {
        // re-read from disk: the scalar path sees exactly what the command saw
        let a = load_png(sr.join(format!("{stem}.png"))).map_err(|e| e.to_string())?;
        let b = load_png(hr.join(format!("{stem}.png"))).map_err(|e| e.to_string())?;
        let p: f64 = psnr_col[stem]
            .parse()
            .map_err(|_| "bad psnr cell".to_string())?;
        let s: f64 = ssim_col[stem]
            .parse()
            .map_err(|_| "bad ssim cell".to_string())?;
        dp = dp.max((p - scalar_psnr(&a, &b)).abs());
        ds = ds.max((s - scalar_ssim(&a, &b)).abs());
    }
    ensure(dp <= 0.01 && ds <= 1e-4, || {
        format!("psnr diff {dp}, ssim diff {ds}")
    })?;

    // an ingested PSNR/DISTS pair must come out of the PD-plane export verbatim
    let figure = dir.path().join("figure.csv");
    std::fs::write(&figure, "image_id,psnr_db,DISTS\nbaboon,26.69,0.193\n")
        .map_err(|e| e.to_string())?;
    let pd = dir.path().join("pd.csv");
    let s = cmd_pd_plane(&PdPlaneArgs {
        reports: &[figure],
        fidelity: "psnr_db",
        perception: "DISTS",
        out: &pd,
    })
    .map_err(|e| format!("{e:#}"))?;
    ensure(s.ok(), || format!("{:?}", s.failures))?;
    let text = std::fs::read_to_string(&pd).map_err(|e| e.to_string())?;
    ensure(
        text.lines().nth(1) == Some("figure,baboon,26.69,0.193"),
        || format!("pd-plane output:\n{text}"),
    )?;
    Ok(format!(
        "{} triples, max |dPSNR| {dp:.1e} dB, max |dSSIM| {ds:.1e}; 26.69/0.193 passed through",
        stems.len()
    ))
}

struct ServerProc {
    child: Child,
    base: String,
}

impl Drop for ServerProc {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn spawn_server(root: &Path) -> Result<ServerProc, String> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_srss"))
        .args(["serve", "--bind", "127.0.0.1:0", "--root"])
        .arg(root)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let stdout = child.stdout.take().unwrap();
    let mut line = String::new();
    BufReader::new(stdout)
        .read_line(&mut line)
        .map_err(|e| e.to_string())?;
    let base = line
        .trim()
        .strip_prefix("listening on ")
        .ok_or_else(|| format!("unexpected server output {line:?}"))?
        .to_string();
    Ok(ServerProc { child, base })
}

fn durability() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sets = dir.path().join("sets");
    let mut shapes = Vec::new();
    for id in ["div2k-0801", "div2k-0802"] {
        let lr = Image::filled(8, 8, 3, 0.5).unwrap();
        let cands = (0..15)
            .map(|i| Image::filled(32, 32, 3, i as f64 / 15.0).unwrap())
            .collect();
        let set =
            SampleSet::new(id, lr, cands, ScaleFactor::X4, None).map_err(|e| e.to_string())?;
        write_sample_set(&sets, &set, None).map_err(|e| e.to_string())?;
        shapes.push(set.shape());
    }
    let config = StudyConfig::task2("durability", &shapes).map_err(|e| e.to_string())?;
    std::fs::write(
        dir.path().join("study.json"),
        serde_json::to_string_pretty(&config).unwrap(),
    )
    .map_err(|e| e.to_string())?;

    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let client = reqwest::Client::builder()
        .timeout(Duration::from_secs(10))
        .build()
        .map_err(|e| e.to_string())?;

    let mut server = spawn_server(dir.path())?;
    // 12 raters finish round 0, 8 of them round 1: 20 acknowledged ballots,
    // 4 sessions left mid-study
    let sessions = rt.block_on(async {
        let mut sessions = Vec::new();
        for i in 0..12 {
            let r: Value = client
                .post(format!("{}/api/v1/sessions", server.base))
                .json(&json!({ "voter_id": format!("rater-{i:02}") }))
                .send()
                .await
                .map_err(|e| e.to_string())?
                .json()
                .await
                .map_err(|e| e.to_string())?;
            sessions.push(r["session_id"].as_str().unwrap_or_default().to_string());
        }
        let mut acked = 0;
        for (round, count) in [(0, 12), (1, 8)] {
            for (i, sid) in sessions.iter().take(count).enumerate() {
                let r = client
                    .post(format!("{}/api/v1/sessions/{sid}/ballot", server.base))
                    .json(&json!({ "selections": [(i + round) % 15, (i + 5) % 15] }))
                    .send()
                    .await
                    .map_err(|e| e.to_string())?;
                if r.status() != 200 {
                    return Err(format!(
                        "ballot rejected: {}",
                        r.text().await.unwrap_or_default()
                    ));
                }
                acked += 1;
            }
        }
        ensure(acked == 20, || format!("{acked} acknowledged"))?;
        Ok::<_, String>(sessions)
    })?;

    // no graceful shutdown: SIGKILL
    server.child.kill().map_err(|e| e.to_string())?;
    server.child.wait().map_err(|e| e.to_string())?;
    drop(server);

    let server = spawn_server(dir.path())?;
    let (total, resumed) = rt.block_on(async {
        let mut total = 0;
        for id in ["div2k-0801", "div2k-0802"] {
            let t: Value = client
                .get(format!("{}/api/v1/sets/{id}/tally", server.base))
                .send()
                .await
                .map_err(|e| e.to_string())?
                .json()
                .await
                .map_err(|e| e.to_string())?;
            total += t["total_ballots"].as_u64().unwrap_or(0);
        }
        let v: Value = client
            .get(format!(
                "{}/api/v1/sessions/{}/round",
                server.base, sessions[11]
            ))
            .send()
            .await
            .map_err(|e| e.to_string())?
            .json()
            .await
            .map_err(|e| e.to_string())?;
        Ok::<_, String>((total, v["round"].as_u64()))
    })?;
    ensure(total == 20, || {
        format!("tally total after restart = {total}")
    })?;
    ensure(resumed == Some(1), || {
        format!("mid-study session resumed at {resumed:?}")
    })?;
    Ok("20 acknowledged, SIGKILL, restart: tally total 20, sessions resume".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        (
            "Label consensus on the 30-rater fixture (73.3% / 26.7%)",
            label_consensus_fixture,
            Some(Duration::from_secs(1)),
        ),
        (
            "Ensemble optimality on 20 random sets",
            ensemble_optimality,
            Some(Duration::from_secs(5)),
        ),
        (
            "Tie-break determinism, N=3, <=4 voters",
            tie_break,
            Some(Duration::from_secs(10)),
        ),
        (
            "Bicubic golden fixture and invariants",
            bicubic_golden,
            Some(Duration::from_secs(1)),
        ),
        (
            "Metric sanity suite",
            metric_sanity,
            Some(Duration::from_secs(10)),
        ),
        ("LR-consistency self-consistency", lr_self_consistency, None),
        (
            "Metrics report vs scalar recomputation; PD pass-through",
            metrics_vs_scalar,
            None,
        ),
        ("Durability across kill and restart", durability, None),
    ];
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(_), Some(b)) if took > b => Err(format!("took {took:.2?}, budget {b:.0?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{took:.2?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{took:.2?}]");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
