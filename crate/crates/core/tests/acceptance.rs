//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the lines come out
//! in order and unbuffered.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use layoutforge::ablation::{AblationProtocol, Arm};
use layoutforge::cli::{self, RunConfig};
use layoutforge::degen::{
    apply_jitter, augment_sample, degenerate, degenerate_mask, hflip, photometric_jitter, AugmentConfig, RetainMask,
};
use layoutforge::imageio::{palette, render_mask};
use layoutforge::layout::{
    build_dag, rasterize, surfaces_of, validate_layout, CornerKind, FrameCorner, Grid, LayoutMask, PolyLayout,
    RoomTaxonomy, Surface, SurfacePolygon, SurfaceSet, VertexRef,
};
use layoutforge::losses::{
    bce_mask_loss, ce_loss, combine, contrastive_loss, dice_loss, edge_loss, geo_loss, gradcheck, gt_edge_map,
    one_hot, smoothness_loss, total_loss, CheckConfig, ContrastiveConfig, EdgeLossConfig, LossBundle, LossWeights,
    CLAMP_EPS, DICE_EPS,
};
use layoutforge::metrics::{corner_error, evaluate_samples, extract_corners, pixel_error};
use layoutforge::model::{
    assign_labels, class_maps, infer, train, ModelConfig, Prediction, ToyModel, TrainSetup,
};
use layoutforge::synth::{
    gen_dataset, generate_sample, generate_samples, sample_layout, render_image, DatasetManifest, SynthConfig,
};
use layoutforge::verify::{gradcheck_suite, SuiteConfig};

type Outcome = Result<String, String>;

fn run(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = t0.elapsed().as_secs_f64();
    let (tag, detail) = match &res {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {n} [{tag}] {name} ({secs:.1}s): {detail}");
    res.is_ok()
}

/// Collects named boolean checks and fails with the names that did not hold.
#[derive(Default)]
struct Checks {
    total: usize,
    failed: Vec<String>,
}

impl Checks {
    fn check(&mut self, name: &str, ok: bool) {
        self.total += 1;
        if !ok {
            self.failed.push(name.to_string());
        }
    }

    fn finish(self, what: &str) -> Outcome {
        if self.failed.is_empty() {
            Ok(format!("{} {what} hold", self.total))
        } else {
            Err(format!("{}/{} {what} failed: {}", self.failed.len(), self.total, self.failed.join("; ")))
        }
    }
}

fn c1_gradients() -> Outcome {
    let t0 = Instant::now();
    let checks = gradcheck_suite(&SuiteConfig::default(), None);
    let secs = t0.elapsed().as_secs_f64();
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} max_rel_error {:.2e} > {:.0e}", c.name, c.max_rel_error, c.tolerance))
        .collect();
    let points = checks.iter().map(|c| c.points).min().unwrap_or(0);
    let summary = format!("{} kernels, {} points each, {:.1}s", checks.len(), points, secs);
    if failed.is_empty() && secs < 60.0 && points >= 100 {
        Ok(summary)
    } else {
        Err(format!("{summary}; {}", failed.join(", ")))
    }
}

fn uniform_stack(w: usize, h: usize) -> Vec<Grid> {
    (0..6).map(|_| Grid::filled(w, h, 1.0 / 6.0)).collect()
}

fn c2_identities() -> Outcome {
    let mut k = Checks::default();
    let tax = RoomTaxonomy::default_lsun();
    let dag = build_dag(&tax).map_err(|e| e.to_string())?;
    let cc = ContrastiveConfig::default();
    let ec = EdgeLossConfig::default();
    let mut rng = common::stream(2);

    // headline identities
    let one = contrastive_loss(&[0.3, -1.2, 2.0], &[1.0, 0.5, -0.7], 3, &cc).unwrap();
    k.check("contrastive B=1 is 0", one.value == 0.0);
    let rows: Vec<f64> = [0.4, 0.1, -0.3].iter().copied().cycle().take(12).collect();
    let four = contrastive_loss(&rows, &rows, 3, &cc).unwrap().value;
    k.check("contrastive identical rows B=4 is 2 ln 4", (four - 2.0 * 4f64.ln()).abs() < 1e-9);
    let labels = common::random_mask(&mut rng, 7, 5, 6);
    let ce_u = ce_loss(&uniform_stack(7, 5), &labels).unwrap().value;
    k.check("uniform CE is ln 6", (ce_u - 6f64.ln()).abs() < 1e-9);
    let gt = Grid::from_fn(6, 6, |r, c| ((r * 7 + c * 3) % 4 == 0) as u8 as f64);
    let s = gt.sum();
    let dice_same = dice_loss(&gt, &gt, DICE_EPS).unwrap().value;
    k.check("dice identical", dice_same <= DICE_EPS / (2.0 * s + DICE_EPS) + 1e-12);

    // losses
    let oh = one_hot(&labels, 6);
    let ce_oh = ce_loss(&oh, &labels).unwrap().value;
    k.check("CE of one-hot", ce_oh <= -(1.0 - CLAMP_EPS).ln() + 1e-15);
    let dis = Grid::from_fn(6, 6, |r, c| 1.0 - gt.get(r, c));
    k.check("dice disjoint is 1", (dice_loss(&dis, &gt, DICE_EPS).unwrap().value - 1.0).abs() < 1e-12);
    let bce_same = bce_mask_loss(&gt, &gt).unwrap().value;
    k.check("BCE pred=gt", (bce_same - (-(1.0 - CLAMP_EPS).ln())).abs() < 1e-12);
    let half = Grid::filled(6, 6, 0.5);
    k.check("BCE at 0.5 is ln 2", (bce_mask_loss(&half, &gt).unwrap().value - 2f64.ln()).abs() < 1e-12);
    let b = |v: f64| LossBundle::new(v, vec![vec![0.0]]);
    let w = LossWeights::default();
    let surf = combine(&[(w.lambda1, &b(0.1)), (w.lambda2, &b(0.2)), (w.lambda3, &b(0.3))]).unwrap().value;
    k.check("weights (2,5,5) on (0.1,0.2,0.3) is 2.7", (surf - 2.7).abs() < 1e-12);
    let zero = combine(&[(w.lambda1, &b(0.0)), (w.lambda2, &b(0.0)), (w.lambda3, &b(0.0))]).unwrap().value;
    k.check("zero components give 0", zero == 0.0);
    k.check("constant mask has no edges", gt_edge_map(&LayoutMask::filled(8, 6, 2), &ec).sum() == 0.0);
    let split = LayoutMask::from_fn(8, 4, |_, c| if c < 5 { 3 } else { 5 });
    let e = gt_edge_map(&split, &ec);
    let cols_ok = (0..4).all(|r| (0..8).all(|c| (e.get(r, c) == 1.0) == (c == 4 || c == 5)));
    k.check("vertical split gives edge columns c-1, c", cols_ok);
    let constant: Vec<Grid> = (0..6).map(|i| Grid::filled(6, 6, (i + 1) as f64 / 21.0)).collect();
    let e0 = edge_loss(&constant, &Grid::zeros(6, 6), &ec).unwrap().value;
    k.check("edge loss constant pred vs no edges", (e0 - (-(1.0 - CLAMP_EPS).ln())).abs() < 1e-12);
    let e1 = edge_loss(&constant, &Grid::filled(6, 6, 1.0), &ec).unwrap().value;
    k.check("edge loss constant pred vs all edges", (e1 - (-CLAMP_EPS.ln())).abs() < 1e-9);
    k.check("smoothness pred=gt is 0", smoothness_loss(&oh, &oh).unwrap().value == 0.0);
    let shifted: Vec<Grid> = oh.iter().map(|g| Grid::from_fn(7, 5, |r, c| g.get(r, c) + 0.25)).collect();
    k.check("smoothness constant offset", (smoothness_loss(&shifted, &oh).unwrap().value - 0.25).abs() < 1e-12);
    let geo_w = LossWeights { lambda4: 1.0, lambda5: 1.0, ..w };
    k.check("geo of zeros", geo_loss(&b(0.0), &b(0.0), &geo_w).unwrap().value == 0.0);
    k.check("geo (0.2, 0.3) is 0.5", (geo_loss(&b(0.2), &b(0.3), &geo_w).unwrap().value - 0.5).abs() < 1e-12);
    k.check("total of zeros", total_loss(&b(0.0), &b(0.0), &b(0.0)).value == 0.0);
    k.check("total (1,2,3) is 6", total_loss(&b(1.0), &b(2.0), &b(3.0)).value == 6.0);
    let coef: Vec<f64> = (0..40).map(|i| (i % 7) as f64 / 8.0 - 0.4).collect();
    let lin = |x: &[f64]| (x.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>(), coef.clone());
    let rep = gradcheck(lin, &vec![0.0; 40], &CheckConfig::default());
    k.check("gradcheck linear", rep.passed && rep.max_rel_error < 1e-12);
    let bad = |x: &[f64]| (x.iter().map(|v| v * v).sum::<f64>(), x.iter().map(|v| 4.0 * v).collect());
    k.check("gradcheck negative control", !gradcheck(bad, &vec![0.5; 40], &CheckConfig::default()).passed);

    // layout and synthesis
    let five = tax.types().iter().find(|t| t.surfaces.len() == 5).expect("5-surface type").id;
    let s5 = &common::samples_of_type(&tax, five, 1, 3)[0];
    let rep5 = validate_layout(&s5.mask, &tax);
    let matched5 = rep5.matched_type.and_then(|t| tax.get(t)).map(|t| t.surfaces.len());
    k.check("5-surface raster validates", rep5.is_valid() && matched5 == Some(5));
    let mut bad_mask = s5.mask.clone();
    bad_mask.set(0, 0, 7);
    let rb = validate_layout(&bad_mask, &tax);
    k.check("label 7 is out of range", !rb.is_valid() && !rb.out_of_range.is_empty());
    let full = SurfaceSet::all();
    let no_ceiling = tax.type_for(full.without(Surface::Ceiling)).map(|t| t.id);
    k.check(
        "5-surface type has the ceiling-removal edge",
        no_ceiling.is_none_or(|c| dag.children(five).any(|e| e.child == c)),
    );
    let front: SurfaceSet = [Surface::FrontWall].into_iter().collect();
    if let Some(t) = tax.type_for(front) {
        k.check("front-wall-only type has no children", dag.children(t.id).count() == 0);
    }
    k.check("all-floor surfaces", surfaces_of(&LayoutMask::filled(5, 5, 2)) == [Surface::Floor].into_iter().collect());
    k.check("background surfaces", surfaces_of(&LayoutMask::filled(5, 5, 0)).is_empty());
    k.check("5-surface raster has all labels", surfaces_of(&s5.mask) == full);
    let cfg64 = SynthConfig { width: 64, height: 64, seed: 9, ..Default::default() }.resolved(&tax).unwrap();
    k.check("same seed same layout", sample_layout(&cfg64, &tax, 4).unwrap() == sample_layout(&cfg64, &tax, 4).unwrap());
    let interior = s5.poly.corners.iter().filter(|c| c.kind == CornerKind::Interior).count();
    k.check("5-surface layout has 4 interior corners", interior == 4);
    let floor_poly = PolyLayout {
        width: 9,
        height: 7,
        corners: vec![],
        surfaces: vec![SurfacePolygon {
            surface: Surface::Floor,
            vertices: [FrameCorner::TopLeft, FrameCorner::TopRight, FrameCorner::BottomRight, FrameCorner::BottomLeft]
                .into_iter()
                .map(VertexRef::Frame)
                .collect(),
        }],
        room_type: tax.type_for([Surface::Floor].into_iter().collect()).map(|t| t.id).unwrap_or(0),
    };
    let fm = rasterize(&floor_poly).map_err(|e| e.to_string())?;
    k.check("full-frame floor polygon", fm.labels().iter().all(|&l| l == 2));
    let counts: usize = (0..6).map(|l| s5.mask.count(l)).sum();
    k.check("label counts partition the frame", counts == 64 * 64);
    let flat = SynthConfig { noise_std: 0.0, shading_strength: 0.0, ..cfg64.clone() };
    let flat_img = render_image(&s5.poly, &flat, 0).unwrap();
    let mut colors: std::collections::BTreeMap<u8, [u64; 3]> = Default::default();
    let mut piecewise = true;
    for r in 0..64 {
        for c in 0..64 {
            let px = flat_img.get(r, c).map(f64::to_bits);
            let e = colors.entry(s5.mask.get(r, c)).or_insert(px);
            piecewise &= *e == px;
        }
    }
    k.check("noise-free render is one color per surface", piecewise);
    k.check("same seed same image", render_image(&s5.poly, &cfg64, 2).unwrap() == render_image(&s5.poly, &cfg64, 2).unwrap());
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let m0 = gen_dataset(&cfg64, &tax, 0, &dir.path().join("n0")).map_err(|e| e.to_string())?;
    let files0 = common::tree_digest(&dir.path().join("n0"));
    k.check("n=0 dataset is empty", m0.records.is_empty() && files0.len() == 1);
    let m10 = gen_dataset(&cfg64, &tax, 10, &dir.path().join("a")).map_err(|e| e.to_string())?;
    let reloaded = DatasetManifest::load(&dir.path().join("a")).map_err(|e| e.to_string())?;
    let all_valid = reloaded.records.len() == 10
        && reloaded
            .records
            .iter()
            .all(|r| reloaded.load_sample(r).is_ok_and(|s| validate_layout(&s.mask, &tax).is_valid()));
    k.check("n=10 dataset loads and validates", m10.records.len() == 10 && all_valid);
    gen_dataset(&cfg64, &tax, 10, &dir.path().join("b")).map_err(|e| e.to_string())?;
    k.check(
        "regenerated dataset has identical checksums",
        common::tree_digest(&dir.path().join("a")) == common::tree_digest(&dir.path().join("b")),
    );

    // degeneration and augmentation
    let id = degenerate(&s5.poly, layoutforge::layout::DagEdge::identity(five), &dag).unwrap();
    k.check("identity edge rasterizes bit-identically", rasterize(&id).unwrap() == s5.mask);
    if let Some(c) = no_ceiling {
        let out = degenerate(&s5.poly, layoutforge::layout::DagEdge { parent: five, child: c }, &dag).unwrap();
        let m = rasterize(&out).unwrap();
        k.check(
            "ceiling removal",
            surfaces_of(&m) == full.without(Surface::Ceiling) && m.count(Surface::Ceiling.id()) == 0,
        );
    }
    let present = RetainMask::new(surfaces_of(&s5.mask)).unwrap();
    k.check("retain all present is identity", degenerate_mask(&s5.mask, &present).unwrap() == s5.mask);
    let two = LayoutMask::from_fn(6, 4, |r, _| if r < 2 { 1 } else { 2 });
    let keep_floor = RetainMask::new([Surface::Floor].into_iter().collect()).unwrap();
    k.check("two-label mask collapses", degenerate_mask(&two, &keep_floor).unwrap() == LayoutMask::filled(6, 4, 2));
    let (fi, fp) = hflip(&s5.image, &s5.poly, &tax).unwrap();
    let (bi, bp) = hflip(&fi, &fp, &tax).unwrap();
    k.check("hflip involution", bi == s5.image && bp == s5.poly);
    let fmask = rasterize(&fp).unwrap();
    k.check("left count becomes right count", s5.mask.count(3) == fmask.count(4) && s5.mask.count(4) == fmask.count(3));
    let mirrored_ok = s5.poly.corners.iter().zip(&fp.corners).all(|(a, b)| b.x == 63.0 - a.x && b.y == a.y);
    k.check("corner (x, y) maps to (W-1-x, y)", mirrored_ok);
    let zero_aug = AugmentConfig { brightness: 0.0, contrast: 0.0, hflip_prob: 0.0, degen_prob: 0.0, seed: 1 };
    let (ji, _, _) = photometric_jitter(&s5.image, &zero_aug, &mut rng);
    k.check("zero jitter is identity", ji == s5.image);
    let wild = apply_jitter(&s5.image, 0.9, 3.0);
    k.check("jitter output in [0, 1]", wild.data().iter().all(|v| (0.0..=1.0).contains(v)));
    let (same, _) = augment_sample(s5, &dag, &tax, &zero_aug, &cfg64, &mut rng).unwrap();
    k.check("zero augmentation is identity", same.image == s5.image && same.mask == s5.mask && same.poly == s5.poly);
    let always = AugmentConfig { degen_prob: 1.0, ..zero_aug };
    let (deg, log) = augment_sample(s5, &dag, &tax, &always, &cfg64, &mut rng).unwrap();
    k.check(
        "degen_prob=1 yields a DAG child",
        log.degenerated.is_some_and(|e| dag.contains(e) && e.child == deg.poly.room_type),
    );

    // model
    let small = ModelConfig { width: 16, height: 16, ..Default::default() };
    let model = ToyModel::new(small.clone()).unwrap();
    let params = model.init_params(4, 0.07);
    let t1 = model.embed_task(&params, "the task is semantic").unwrap();
    let t2 = model.embed_task(&params, "the task is semantic").unwrap();
    k.check("same text same embedding", t1 == t2);
    k.check("task embedding shape", t1.embedding.len() == small.dim && t1.embedding.iter().all(|v| v.is_finite()));
    let q = model.init_queries(&params, &t1);
    k.check("queries N×d with task last", q.q.len() == 6 * small.dim && q.q[5 * small.dim..] == t1.embedding[..]);
    let mut no_off = params.clone();
    no_off[model.layout().get("offsets").unwrap()].iter_mut().for_each(|v| *v = 0.0);
    let q0 = model.init_queries(&no_off, &t1);
    k.check("zero offsets give equal rows", q0.q.chunks(small.dim).all(|r| r == &t1.embedding[..]));
    let model64 = ToyModel::new(ModelConfig::default()).unwrap();
    let img64 = &s5.image;
    let p64 = model64.init_params(1, 0.07);
    let fp64 = model64.encode(&p64, img64).unwrap();
    k.check("pyramid shapes", fp64.quarter == (16, 16) && fp64.eighth == (8, 8) && fp64.channels == 32);
    let mut zeros = p64.clone();
    for name in ["enc.w1", "enc.b1", "enc.w2", "enc.b2"] {
        zeros[model64.layout().get(name).unwrap()].iter_mut().for_each(|v| *v = 0.0);
    }
    let fz = model64.encode(&zeros, img64).unwrap();
    k.check("zero encoder gives zero features", fz.f4.iter().chain(&fz.f8).all(|&v| v == 0.0));
    let pred = model64.predict(&p64, img64).unwrap();
    k.check("N mask maps", pred.mask_logits.len() == 6 * 64 * 64);
    let attn = model64.attention_maps(&p64, img64).unwrap();
    let sums_ok = attn.iter().all(|a| {
        let per_query = a.len() / 6;
        a.chunks(per_query).all(|row| (row.iter().sum::<f64>() - 1.0).abs() < 1e-9)
    });
    k.check("attention rows sum to 1", sums_ok && !attn.is_empty());
    let mut cl = vec![-30.0; 6];
    cl[2] = 30.0;
    let ml: Vec<f64> = (0..16).map(|_| rng.range(-3.0, 3.0)).collect();
    let single = Prediction {
        queries: 1,
        dim: 1,
        width: 4,
        height: 4,
        query_embed: vec![0.0],
        class_logits: cl,
        mask_logits: ml.clone(),
    };
    let floor_map = &class_maps(&single)[2];
    let mirrors = floor_map.data().iter().zip(&ml).all(|(a, m)| (a - 1.0 / (1.0 + (-m).exp())).abs() < 1e-15);
    k.check("single floor query map is its sigmoid", mirrors);
    let probs = layoutforge::model::predict_masks(&pred);
    let sums = (0..64 * 64).all(|i| (probs.iter().map(|g| g.data()[i]).sum::<f64>() - 1.0).abs() < 1e-6);
    k.check("class distribution sums to 1", sums);
    k.check("one-hot stack round trips", assign_labels(&one_hot(&s5.mask, 6)) == s5.mask);
    k.check("uniform stack gives label 0", assign_labels(&uniform_stack(5, 5)).labels().iter().all(|&l| l == 0));
    let mut frozen = TrainSetup { model: small.clone(), ..Default::default() };
    frozen.train.epochs = 1;
    frozen.train.monitor = 0;
    frozen.optimizer.lr = 0.0;
    frozen.optimizer.weight_decay = 0.0;
    let cfg16 = SynthConfig { width: 16, height: 16, seed: 5, ..Default::default() }.resolved(&tax).unwrap();
    let tiny = generate_samples(&cfg16, &tax, 0..4).map_err(|e| e.to_string())?;
    let out = train(&frozen, &tiny, &tax, &cfg16, Some(&[]), None).map_err(|e| e.to_string())?;
    k.check("lr=0 keeps parameters", out.params == model.init_params(frozen.train.seed, frozen.contrastive.tau));
    let a = infer(&model64, &p64, img64).unwrap();
    k.check("infer is deterministic", a == infer(&model64, &p64, img64).unwrap());
    k.check("inferred labels in range", a.labels().iter().all(|&l| l < 6));

    // metrics
    let mine = s5.mask.clone();
    k.check("PE of identical masks", pixel_error(&mine, &mine).unwrap() == 0.0);
    let flipped = LayoutMask::from_fn(64, 64, |r, c| 5 - mine.get(r, c));
    k.check("PE of total mismatch", pixel_error(&flipped, &mine).unwrap() == 100.0);
    k.check("constant mask has no corners", extract_corners(&LayoutMask::filled(9, 9, 4)).is_empty());
    let pts = common::random_points(&mut rng, 4, 64, 64);
    k.check("corner error of identical sets", corner_error(&pts, &pts, 64, 64).unwrap() == 0.0);
    let gt_rep = evaluate_samples(std::slice::from_ref(s5), |s| Ok::<_, String>(s.mask.clone()));
    k.check("GT masks against themselves: PA 100, PE 0", gt_rep.aggregate.pa == 100.0 && gt_rep.aggregate.pe == 0.0);
    let own = extract_corners(&s5.mask);
    k.check("GT mask corners against themselves: e_cor 0", corner_error(&own, &own, 64, 64).unwrap() == 0.0);
    let one_rep = evaluate_samples(std::slice::from_ref(s5), |s| infer(&model64, &p64, &s.image));
    let r0 = &one_rep.per_sample[0];
    k.check(
        "single-sample aggregate",
        Some(one_rep.aggregate.pe) == r0.pe && Some(one_rep.aggregate.e_cor) == r0.e_cor,
    );

    // command line
    let d = dir.path();
    let ok_synth = cli::run(["lf", "synth", "--n", "5", "--out", &d.join("c5").to_string_lossy()]);
    k.check("cli synth exits 0", ok_synth == 0);
    k.check("cli synth n=5", DatasetManifest::load(&d.join("c5")).is_ok_and(|m| m.records.len() == 5));
    std::fs::write(d.join("bad.toml"), "[synth]\nwidth = \"x\"\n").unwrap();
    let cfg_path = d.join("bad.toml").to_string_lossy().into_owned();
    k.check("malformed config exits 2", cli::run(["lf", "--config", &cfg_path, "synth", "--n", "1"]) == 2);
    let line_diag = RunConfig::from_toml("[synth]\nwidth = \"x\"\n").err().is_some_and(|e| e.to_string().contains("line 2"));
    k.check("config error names the line", line_diag);
    std::fs::write(d.join("e0.toml"), "[train]\nepochs = 0\n[data]\ntrain_samples = 4\n").unwrap();
    let e0 = d.join("e0.toml").to_string_lossy().into_owned();
    let run_dir = d.join("run0").to_string_lossy().into_owned();
    k.check("cli train exits 0", cli::run(["lf", "--config", &e0, "train", "--out", &run_dir]) == 0);
    let ck = layoutforge::model::load_checkpoint(&d.join("run0/checkpoint.lfck")).map_err(|e| e.to_string())?;
    let init = ToyModel::new(ModelConfig::default()).unwrap().init_params(0, ContrastiveConfig::default().tau);
    k.check("epochs=0 checkpoint is the initialization", ck.params == init);
    let c5 = d.join("c5").to_string_lossy().into_owned();
    let ev = d.join("ev").to_string_lossy().into_owned();
    k.check("cli eval --gt exits 0", cli::run(["lf", "eval", "--data", &c5, "--gt", "--out", &ev]) == 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("ev/report.json")).unwrap_or_default()).unwrap_or_default();
    k.check("GT-vs-GT report PA is 100", report["aggregate"]["pa"].as_f64() == Some(100.0));
    let missing = d.join("nope.lfck").to_string_lossy().into_owned();
    k.check("missing checkpoint exits 3", cli::run(["lf", "eval", "--data", &c5, "--checkpoint", &missing]) == 3);
    let bug = cli::run(["lf", "gradcheck", "--points", "2", "--inject-bug", "dice"]);
    k.check("injected gradient bug exits 5", bug == 5);
    let mpath = d.join("m.png");
    layoutforge::imageio::save_mask(&s5.mask, &mpath).unwrap();
    let m = mpath.to_string_lossy().into_owned();
    let (r1, r2) = (d.join("r1.png").to_string_lossy().into_owned(), d.join("r2.png").to_string_lossy().into_owned());
    cli::run(["lf", "render", &m, "--edges", "--out", &r1]);
    cli::run(["lf", "render", &m, "--edges", "--out", &r2]);
    k.check("render is byte-stable", std::fs::read(&r1).ok().is_some() && std::fs::read(&r1).ok() == std::fs::read(&r2).ok());
    let floor_rgb = render_mask(&LayoutMask::filled(1, 1, 2), None).get_pixel(0, 0).0;
    let expected = palette(2).map(|v| (v * 255.0).round() as u8);
    k.check("label 2 renders in the floor color", floor_rgb == expected);
    let edges = gt_edge_map(&s5.mask, &EdgeLossConfig::default());
    let rendered = image::open(&r1).map_err(|e| e.to_string())?.to_rgb8();
    let plain = render_mask(&s5.mask, None);
    let overlay_ok = (0..64u32).all(|y| {
        (0..64u32).all(|x| {
            let is_edge = edges.get(y as usize, x as usize) > 0.5;
            let drawn = rendered.get_pixel(x, y) != plain.get_pixel(x, y);
            is_edge == drawn
        })
    });
    k.check("edge overlay matches the edge map", overlay_ok);
    let mut gen_cfg = RunConfig::default();
    gen_cfg.set_seed(3);
    let sample0 = generate_sample(&gen_cfg.synth.resolved(&tax).unwrap(), &tax, 0).unwrap();
    let rt = sample0.poly.room_type;
    let dp = d.join("dp").to_string_lossy().into_owned();
    let ident = format!("{rt}->{rt}");
    k.check(
        "identity preview exits 0",
        cli::run(["lf", "--seed", "3", "degen-preview", "--sample", "0", "--edge", &ident, "--out", &dp]) == 0,
    );
    k.check(
        "identity preview images match",
        std::fs::read(d.join("dp/before.png")).ok() == std::fs::read(d.join("dp/after.png")).ok(),
    );
    if let Some(edge) = dag.children(sample0.poly.room_type).find(|e| dag.removed_surface(*e) == Some(Surface::Ceiling)) {
        let dp2 = d.join("dp2").to_string_lossy().into_owned();
        let spec = format!("{}->{}", edge.parent, edge.child);
        cli::run(["lf", "--seed", "3", "degen-preview", "--sample", "0", "--edge", &spec, "--out", &dp2]);
        let after = image::open(d.join("dp2/after.png")).map_err(|e| e.to_string())?.to_rgb8();
        let ceiling_rgb = palette(1).map(|v| (v * 255.0).round() as u8);
        k.check("ceiling removal leaves no ceiling color", after.pixels().all(|p| p.0 != ceiling_rgb));
        let poly = PolyLayout::load(&d.join("dp2/after.json")).unwrap();
        let vr = validate_layout(&rasterize(&poly).unwrap(), &tax);
        k.check("preview output validates as the child", vr.is_valid() && vr.matched_type == Some(edge.child));
    }
    let wrong = (0..11u32).find(|&p| p != sample0.poly.room_type && dag.children(p).next().is_some()).unwrap();
    let wrong_edge = {
        let e = dag.children(wrong).next().unwrap();
        format!("{}->{}", e.parent, e.child)
    };
    let dp3 = d.join("dp3").to_string_lossy().into_owned();
    k.check(
        "inapplicable edge exits 2",
        cli::run(["lf", "--seed", "3", "degen-preview", "--sample", "0", "--edge", &wrong_edge, "--out", &dp3]) == 2,
    );
    k.finish("identities")
}

fn c3_degeneration() -> Outcome {
    let tax = RoomTaxonomy::default_lsun();
    let dag = build_dag(&tax).map_err(|e| e.to_string())?;
    let mut bad = Vec::new();
    let mut total = 0;
    for (i, &edge) in dag.edges().iter().enumerate() {
        for s in common::samples_of_type(&tax, edge.parent, 50, 100 + i as u64) {
            total += 1;
            let ok = degenerate(&s.poly, edge, &dag).ok().and_then(|p| {
                let m = rasterize(&p).ok()?;
                let r = validate_layout(&m, &tax);
                Some(r.is_valid() && r.matched_type == Some(edge.child) && p.room_type == edge.child)
            });
            if ok != Some(true) {
                bad.push(format!("{}->{} sample {}", edge.parent, edge.child, s.id));
            }
        }
    }
    let mut rng = common::stream(3);
    let samples = common::uniform_samples(50, 4);
    let retain_all = samples
        .iter()
        .all(|s| degenerate_mask(&s.mask, &RetainMask::all()).is_ok_and(|m| m == s.mask));
    let mut oracle_mismatch = 0;
    for _ in 0..200 {
        let m = common::random_mask(&mut rng, 8, 8, 6);
        let keep: Vec<u8> = loop {
            let k: Vec<u8> = (1..=5u8).filter(|_| rng.bernoulli(0.5)).collect();
            if !k.is_empty() {
                break k;
            }
        };
        let retain = RetainMask::new(keep.iter().map(|&l| Surface::from_id(l).unwrap()).collect()).unwrap();
        let got = degenerate_mask(&m, &retain).ok();
        if got != common::bfs_fill_oracle(&m, &keep) {
            oracle_mismatch += 1;
        }
    }
    let detail = format!(
        "{} edges x 50: {}/{} valid; retain-all identity: {}; BFS oracle mismatches: {}/200",
        dag.edges().len(),
        total - bad.len(),
        total,
        retain_all,
        oracle_mismatch
    );
    if bad.is_empty() && retain_all && oracle_mismatch == 0 {
        Ok(detail)
    } else {
        Err(format!("{detail}; first failures: {:?}", &bad[..bad.len().min(3)]))
    }
}

fn c4_augmentation() -> Outcome {
    let tax = RoomTaxonomy::default_lsun();
    let samples = common::uniform_samples(100, 6);
    let mut failures = Vec::new();
    for s in &samples {
        let (fi, fp) = hflip(&s.image, &s.poly, &tax).map_err(|e| e.to_string())?;
        let (bi, bp) = hflip(&fi, &fp, &tax).map_err(|e| e.to_string())?;
        if bi != s.image || bp != s.poly {
            failures.push(format!("involution {}", s.id));
        }
        let fm = rasterize(&fp).map_err(|e| e.to_string())?;
        let swapped = s.mask.count(3) == fm.count(4)
            && s.mask.count(4) == fm.count(3)
            && [0u8, 1, 2, 5].iter().all(|&l| s.mask.count(l) == fm.count(l));
        if !swapped {
            failures.push(format!("label counts {}", s.id));
        }
        if apply_jitter(&s.image, 0.0, 1.0) != s.image {
            failures.push(format!("zero jitter {}", s.id));
        }
    }
    if failures.is_empty() {
        Ok("100 samples: hflip involution, wall-count swap and zero jitter hold".into())
    } else {
        Err(failures.join(", "))
    }
}

fn c5_metrics() -> Outcome {
    let mut rng = common::stream(5);
    let mut pe_bad = 0;
    for _ in 0..500 {
        let a = common::random_mask(&mut rng, 8, 8, 6);
        let b = common::random_mask(&mut rng, 8, 8, 6);
        if pixel_error(&a, &b).map_err(|e| e.to_string())? != common::brute_pixel_error(&a, &b) {
            pe_bad += 1;
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let np = rng.below(6) as usize;
        let ng = rng.below(6) as usize;
        let (w, h) = (16 + rng.below(100) as usize, 16 + rng.below(100) as usize);
        let p = common::random_points(&mut rng, np, w, h);
        let g = common::random_points(&mut rng, ng, w, h);
        let got = corner_error(&p, &g, w, h).map_err(|e| e.to_string())?;
        worst = worst.max((got - common::brute_corner_error(&p, &g, w, h)).abs());
    }
    let offset = corner_error(&[(103.0, 84.0)], &[(100.0, 80.0)], 256, 256).map_err(|e| e.to_string())?;
    let detail = format!("PE mismatches {pe_bad}/500; corner max |diff| {worst:.1e}; (3,4) offset {offset:.4}%");
    if pe_bad == 0 && worst <= 1e-12 && (offset - 1.3811).abs() < 1e-4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c6_learning() -> Outcome {
    let tax = RoomTaxonomy::default_lsun();
    let cfg = RunConfig::default();
    let render = cfg.synth.resolved(&tax).map_err(|e| e.to_string())?;
    let train_set = generate_samples(&render, &tax, 0..500).map_err(|e| e.to_string())?;
    let held_out = generate_samples(&render, &tax, 1 << 32..(1 << 32) + 100).map_err(|e| e.to_string())?;
    let setup = cfg.setup();
    let t0 = Instant::now();
    let out = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| train(&setup, &train_set, &tax, &render, Some(&[]), None))
        .map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    let rep = evaluate_samples(&held_out, |s| infer(&out.model, &out.params, &s.image));
    let a = &rep.aggregate;
    let losses: Vec<f64> = out.log.iter().map(|e| e.loss).collect();
    let smooth: Vec<f64> = losses.windows(3).map(|w| w.iter().sum::<f64>() / 3.0).collect();
    let monotone = smooth.windows(2).all(|w| w[1] <= w[0]);
    let rise = smooth.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let detail = format!(
        "{} epochs, 500 samples: held-out PE {:.2}%, e_cor {:.2}%, {} failed, {:.0}s single-threaded; smoothed loss monotone: {} (largest rise {:.3}, final {:.3})",
        setup.train.epochs, a.pe, a.e_cor, a.failed, secs, monotone, rise, smooth.last().copied().unwrap_or(f64::NAN)
    );
    if a.pe < 12.0 && a.e_cor < 8.0 && secs < 1800.0 && a.failed == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c7_ablation() -> Outcome {
    let tax = RoomTaxonomy::default_lsun();
    let protocol = AblationProtocol::default();
    let rep = protocol.run(&tax).map_err(|e| e.to_string())?;
    let detail = format!(
        "mean PE over seeds {:?}: base {:.3}%, base+geo {:.3}%, base+geo+degen {:.3}%",
        protocol.seeds,
        rep.mean_pe(Arm::Base),
        rep.mean_pe(Arm::Geo),
        rep.mean_pe(Arm::GeoDegen)
    );
    if rep.strictly_ordered() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cli_pipeline(dir: &Path, cfg: &str) -> i32 {
    let s = |p: &str| dir.join(p).to_string_lossy().into_owned();
    let mut code = cli::run(["lf", "--config", cfg, "--threads", "1", "synth", "--n", "24", "--out", &s("data")]);
    code = code.max(cli::run(["lf", "--config", cfg, "--threads", "1", "train", "--data", &s("data"), "--out", &s("run")]));
    code.max(cli::run([
        "lf",
        "--threads",
        "1",
        "eval",
        "--data",
        &s("data"),
        "--checkpoint",
        &s("run/checkpoint.lfck"),
        "--out",
        &s("eval"),
    ]))
}

fn c8_determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = root.path().join("run.toml");
    std::fs::write(&cfg, "[train]\nepochs = 2\nseed = 7\n[synth]\nseed = 7\n[augment]\nseed = 7\ndegen_prob = 0.5\n")
        .map_err(|e| e.to_string())?;
    let cfg = cfg.to_string_lossy().into_owned();
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    let codes = (cli_pipeline(&a, &cfg), cli_pipeline(&b, &cfg));
    if codes != (0, 0) {
        return Err(format!("pipeline exit codes {codes:?}"));
    }
    let mut diffs = Vec::new();
    for part in ["data", "run", "eval"] {
        let (da, db) = (common::tree_digest(&a.join(part)), common::tree_digest(&b.join(part)));
        if da != db || da.is_empty() {
            diffs.push(part);
        }
    }
    if diffs.is_empty() {
        Ok("two single-threaded synth/train/eval runs produced byte-identical datasets, checkpoints and reports".into())
    } else {
        Err(format!("outputs differ in {diffs:?}"))
    }
}

fn main() {
    let t0 = Instant::now();
    let results = [
        run(1, "gradient fidelity", c1_gradients),
        run(2, "analytic identities", c2_identities),
        run(3, "degeneration soundness", c3_degeneration),
        run(4, "augmentation algebra", c4_augmentation),
        run(5, "metric oracles", c5_metrics),
        run(6, "end-to-end learning", c6_learning),
        run(7, "ablation ordering", c7_ablation),
        run(8, "determinism", c8_determinism),
    ];
    let passed = results.iter().filter(|r| **r).count();
    println!("acceptance: {passed}/{} criteria passed in {:.0}s", results.len(), t0.elapsed().as_secs_f64());
    if passed != results.len() {
        std::process::exit(1);
    }
}
