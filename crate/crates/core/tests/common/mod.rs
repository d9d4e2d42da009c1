//! Fixtures shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use dclm::data::LabeledImage;
use dclm::game::{grad_lambda, grad_w, joint_objective, GameParams, LogicMove};
use dclm::logic::{solve, Grounding, LogicNetwork, LogicProblem, SolveConfig, TNorm, Thresholds};
use dclm::perception::{Architecture, ConvBlock, PerceptionParams, FEATURE_CHANNELS};
use dclm::rng::SeededRng;
use dclm::Tensor;

/// 10x10 input, 3 classes: small enough to difference every parameter.
pub fn tiny_arch() -> Architecture {
    Architecture::new(
        [1, 10, 10],
        vec![ConvBlock::new(3, 3, true), ConvBlock::new(FEATURE_CHANNELS, 3, false)],
        3,
    )
    .unwrap()
}

pub fn random_image(rng: &mut SeededRng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(vec![1, rows, cols], (0..rows * cols).map(|_| rng.uniform()).collect()).unwrap()
}

pub fn synthetic_set(n: usize, rows: usize, cols: usize, classes: usize, seed: u64) -> Vec<LabeledImage> {
    let mut rng = SeededRng::new(seed);
    (0..n)
        .map(|i| LabeledImage::new(random_image(&mut rng, rows, cols), rng.below(classes), i).unwrap())
        .collect()
}

pub fn idx_header(magic: u32, dims: &[u32]) -> Vec<u8> {
    let mut v = magic.to_be_bytes().to_vec();
    for d in dims {
        v.extend_from_slice(&d.to_be_bytes());
    }
    v
}

/// Two 2x3 images and their labels, written out byte by byte.
pub fn idx_fixture() -> (Vec<u8>, Vec<u8>) {
    let mut images = idx_header(0x0803, &[2, 2, 3]);
    images.extend_from_slice(&[0, 51, 102, 153, 204, 255]);
    images.extend_from_slice(&[255, 0, 255, 0, 255, 0]);
    let mut labels = idx_header(0x0801, &[2]);
    labels.extend_from_slice(&[7, 2]);
    (images, labels)
}

/// A random batch with a solved logic side: one predicate (so three
/// clauses), random priors and group weights.
pub struct GradInstance {
    pub gp: GameParams,
    pub batch: Vec<LabeledImage>,
    pub moves: Vec<LogicMove>,
}

pub fn grad_instance(seed: u64) -> GradInstance {
    let mut rng = SeededRng::new(1000 + seed);
    let arch = tiny_arch();
    let classes = arch.classes;
    let mut gp = GameParams::new(PerceptionParams::init(arch, seed).unwrap(), 0.0);
    gp.alpha = rng.uniform_in(0.0, 0.1);
    gp.beta = rng.uniform_in(0.0, 0.1);
    gp.lambda = (0..classes).map(|_| rng.uniform_in(0.0, 2.0)).collect();
    let batch = synthetic_set(3, 10, 10, classes, 2000 + seed);

    let mut net = LogicNetwork::new(classes, TNorm::Lukasiewicz, Thresholds::default()).unwrap();
    let records: Vec<_> = batch.iter().map(|s| gp.weights.infer(&s.pixels).unwrap()).collect();
    if let Some(map) = records[0].features.iter().find(|m| !m.is_empty()) {
        net.add_predicate(map.clone()).unwrap();
    }
    let mut gamma = net.gamma().to_vec();
    let moves = records
        .iter()
        .map(|rec| {
            let problem = LogicProblem::new(&net, &net.ground(&rec.features).unwrap());
            let sol = solve(&problem, &mut gamma, &gp.lambda, &rec.output, &SolveConfig::default()).unwrap();
            let phi = problem.group_eigenvalues(&sol.y, &gamma).unwrap();
            LogicMove { y_m: sol.y, phi }
        })
        .collect();
    GradInstance { gp, batch, moves }
}

#[derive(Debug, Default)]
pub struct FdReport {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_w: f64,
    pub max_abs_lambda: f64,
    pub max_rel_lambda: f64,
}

fn pattern(gp: &GameParams, batch: &[&LabeledImage]) -> Vec<dclm::perception::ActivationPattern> {
    batch
        .iter()
        .map(|s| gp.weights.forward(&s.pixels).unwrap().activation_pattern().unwrap())
        .collect()
}

/// Central differences of the joint objective against the analytic
/// gradients, for every weight and every group weight. A weight whose
/// perturbation flips a ReLU or a pooling choice is retried with a step of
/// 1e-6 and skipped only if that flips too, i.e. when it sits within 1e-6
/// of a kink.
pub fn fd_check(inst: &GradInstance) -> FdReport {
    let batch: Vec<&LabeledImage> = inst.batch.iter().collect();
    let moves = Some(inst.moves.as_slice());
    let analytic = grad_w(&inst.gp, &batch, moves).unwrap();
    let base_pattern = pattern(&inst.gp, &batch);
    let mut report = FdReport::default();
    let mut gp = inst.gp.clone();
    let central = |gp: &mut GameParams, t: usize, k: usize, h: f64| -> Option<f64> {
        let orig = gp.weights.tensors()[t].data()[k];
        let eval = |gp: &mut GameParams, v: f64| {
            gp.weights.tensors_mut()[t].data_mut()[k] = v;
            let same = pattern(gp, &batch) == base_pattern;
            (same, joint_objective(gp, &batch, moves).unwrap().objective)
        };
        let (same_up, up) = eval(gp, orig + h);
        let (same_dn, dn) = eval(gp, orig - h);
        gp.weights.tensors_mut()[t].data_mut()[k] = orig;
        (same_up && same_dn).then(|| (up - dn) / (2.0 * h))
    };
    for (t, grad) in analytic.tensors.iter().enumerate() {
        for k in 0..grad.len() {
            let Some(numeric) = central(&mut gp, t, k, 1e-5).or_else(|| central(&mut gp, t, k, 1e-6)) else {
                report.skipped_kinks += 1;
                continue;
            };
            report.max_rel_w = report.max_rel_w.max(relative(grad.data()[k], numeric));
            report.checked += 1;
        }
    }

    let h = 1e-5;
    let m = inst.moves.len() as f64;
    let mean_phi: Vec<f64> = (0..gp.lambda.len())
        .map(|c| inst.moves.iter().map(|mv| mv.phi[c]).sum::<f64>() / m)
        .collect();
    let gl = grad_lambda(&gp, &mean_phi).unwrap();
    for c in 0..gp.lambda.len() {
        let orig = gp.lambda[c];
        gp.lambda[c] = orig + h;
        let up = joint_objective(&gp, &batch, moves).unwrap().objective;
        gp.lambda[c] = orig - h;
        let dn = joint_objective(&gp, &batch, moves).unwrap().objective;
        gp.lambda[c] = orig;
        let numeric = (up - dn) / (2.0 * h);
        report.max_abs_lambda = report.max_abs_lambda.max((gl[c] - numeric).abs());
        report.max_rel_lambda = report.max_rel_lambda.max(relative(gl[c], numeric));
    }
    report
}

fn relative(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// A random network with 2-5 classes, random multi-literal clauses and
/// degrees, a random grounding, and random outputs and group weights.
pub struct LogicInstance {
    pub net: LogicNetwork,
    pub grounding: Grounding,
    pub f: Vec<f64>,
    pub lambda: Vec<f64>,
}

pub fn logic_instance(seed: u64) -> LogicInstance {
    let mut rng = SeededRng::new(seed);
    let classes = 2 + rng.below(4);
    let mut net = LogicNetwork::new(classes, TNorm::Lukasiewicz, Thresholds::default()).unwrap();
    let n_pred = 1 + rng.below(5);
    for c in 0..n_pred {
        // one-hot 2x2 templates never match each other
        let mut v = vec![0.0; 4];
        v[c % 4] = 1.0 + c as f64;
        net.add_bare_predicate(dclm::perception::FeatureMap::new(c, 2, 2, v).unwrap()).unwrap();
    }
    for _ in 0..1 + rng.below(6) {
        let lits: Vec<(usize, f64)> = (0..1 + rng.below(3))
            .map(|_| (rng.below(n_pred), rng.uniform_in(-1.0, 1.0)))
            .collect();
        net.add_clause(&lits, rng.below(classes), rng.uniform_in(-1.0, 1.0)).unwrap();
    }
    let mut grounding = Grounding::default();
    for p in 0..n_pred {
        for _ in 0..rng.below(4) {
            grounding.add(p, if rng.uniform() < 0.5 { 0.0 } else { 1.0 });
        }
    }
    LogicInstance {
        net,
        grounding,
        f: (0..classes).map(|_| rng.uniform_in(-0.5, 1.5)).collect(),
        lambda: (0..classes).map(|_| rng.uniform_in(0.0, 3.0)).collect(),
    }
}
