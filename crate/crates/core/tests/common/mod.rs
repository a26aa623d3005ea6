//! Random small networks and the checks shared by the integration tests and
//! the acceptance run. Every check returns `Err` with a description instead
//! of panicking so the acceptance run can report it.
#![allow(dead_code)]

use netsurgery::math::{KernelSpec, Matrix, Shape3};
use netsurgery::network::{backward, forward, init_network, Architecture, LayerKind, LayerSpec, Network};
use netsurgery::surgery::{compute_thresholds, MaskedParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-6;
/// Denominator floor for the relative error, so that entries whose true
/// gradient is zero are compared absolutely.
pub const FD_FLOOR: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn conv(c: usize, oc: usize, k: usize) -> KernelSpec {
    KernelSpec {
        in_channels: c,
        out_channels: oc,
        kernel_h: k,
        kernel_w: k,
        stride: 1,
        pad: 0,
    }
}

/// One of several layouts, each with at most 50 parameters.
pub fn random_architecture(rng: &mut impl Rng) -> Architecture {
    let act = |rng: &mut dyn rand::RngCore, name: &str| {
        if rng.gen_bool(0.5) {
            LayerSpec::sigmoid(name)
        } else {
            LayerSpec::relu(name)
        }
    };
    match rng.gen_range(0..4) {
        0 => {
            let (i, h) = (rng.gen_range(2..5), rng.gen_range(2..5));
            Architecture::new(
                Shape3::flat(i),
                vec![
                    LayerSpec::fully_connected("fc1", h),
                    act(rng, "act1"),
                    LayerSpec::fully_connected("fc2", 3),
                    LayerSpec::softmax_xent("loss"),
                ],
            )
        }
        1 => {
            let h = rng.gen_range(2..6);
            Architecture::new(
                Shape3::flat(2),
                vec![
                    LayerSpec::fully_connected("fc1", h),
                    act(rng, "act1"),
                    LayerSpec::fully_connected("fc2", 1),
                    LayerSpec::sigmoid_xent("loss"),
                ],
            )
        }
        2 => Architecture::new(
            Shape3::flat(3),
            vec![
                LayerSpec::fully_connected("fc1", 3),
                act(rng, "act1"),
                // Without a bias a fully pruned row sits exactly on a ReLU kink.
                LayerSpec::fully_connected("fc2", 3).without_bias(),
                LayerSpec::sigmoid("act2"),
                LayerSpec::fully_connected("fc3", 2),
                LayerSpec::softmax_xent("loss"),
            ],
        ),
        _ => Architecture::new(
            Shape3::new(1, 4, 4),
            vec![
                LayerSpec::convolution("conv1", conv(1, 2, 2)),
                act(rng, "act1"),
                LayerSpec::max_pool("pool1", 2, 1),
                LayerSpec::fully_connected("fc1", 3),
                LayerSpec::softmax_xent("loss"),
            ],
        ),
    }
    .unwrap()
}

/// Random weights in [-1, 1), random biases and masks with roughly a third
/// of the entries pruned.
pub fn random_network(rng: &mut impl Rng) -> Network {
    let arch = random_architecture(rng);
    let mut net = init_network(arch, rng.gen());
    let kinds = net.learnable_kinds();
    for (p, kind) in net.params.iter_mut().zip(kinds) {
        p.w = random_matrix(rng, p.w.rows(), p.w.cols(), 1.0);
        for t in p.t.as_mut_slice() {
            *t = if rng.gen_bool(0.3) { 0.0 } else { 1.0 };
        }
        // A fully pruned filter yields a constant map, and max pooling over
        // exact ties is not differentiable.
        if matches!(kind, LayerKind::Convolution(_)) {
            for r in 0..p.t.rows() {
                if p.t.row(r).iter().all(|&t| t == 0.0) {
                    p.t.set(r, 0, 1.0);
                }
            }
        }
    }
    for b in &mut net.biases {
        for v in b.iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    net
}

pub fn random_batch(rng: &mut impl Rng, net: &Network, n: usize) -> (Matrix, Vec<usize>) {
    let arch = net.architecture();
    let x = random_matrix(rng, n, arch.input().len(), 1.0);
    let labels = (0..n).map(|_| rng.gen_range(0..arch.n_classes())).collect();
    (x, labels)
}

pub fn parameter_count(net: &Network) -> usize {
    net.weight_count() + net.biases.iter().map(Vec::len).sum::<usize>()
}

/// The same function with `W ⊙ T` folded into the weights and full masks.
pub fn folded(net: &Network) -> Network {
    let mut out = net.clone();
    for p in &mut out.params {
        *p = MaskedParams::new(p.masked());
    }
    out
}

fn loss(net: &Network, x: &Matrix, labels: &[usize]) -> f64 {
    forward(net, x, labels).unwrap().loss
}

/// Largest relative deviation between the analytic gradient of `net` (taken
/// with respect to `W ⊙ T`) and central differences on the folded weights.
pub fn max_gradient_error(net: &Network, x: &Matrix, labels: &[usize]) -> f64 {
    let acts = forward(net, x, labels).unwrap();
    let grads = backward(net, &acts, labels).unwrap();
    let base = folded(net);
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR);
    let mut worst: f64 = 0.0;
    for slot in 0..base.params.len() {
        for k in 0..base.params[slot].w.len() {
            let mut probe = base.clone();
            probe.params[slot].w.as_mut_slice()[k] += FD_STEP;
            let up = loss(&probe, x, labels);
            probe.params[slot].w.as_mut_slice()[k] -= 2.0 * FD_STEP;
            let down = loss(&probe, x, labels);
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel(grads.weights[slot].as_slice()[k], numeric));
        }
        for k in 0..base.biases[slot].len() {
            let mut probe = base.clone();
            probe.biases[slot][k] += FD_STEP;
            let up = loss(&probe, x, labels);
            probe.biases[slot][k] -= 2.0 * FD_STEP;
            let down = loss(&probe, x, labels);
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel(grads.biases[slot][k], numeric));
        }
    }
    worst
}

/// Distance a ReLU input or the runner-up of a pooling window must keep
/// from the kink for finite differences to be meaningful.
pub const KINK_MARGIN: f64 = 1e-3;

/// Whether any ReLU input or max-pool window in the forward pass lies within
/// `KINK_MARGIN` of a non-differentiable point.
pub fn near_kink(net: &Network, x: &Matrix, y: &[usize]) -> bool {
    let acts = forward(net, x, y).unwrap();
    let arch = net.architecture();
    for (i, layer) in arch.layers().iter().enumerate() {
        let input = if i == 0 { x } else { &acts.outputs[i - 1] };
        match layer.kind {
            LayerKind::Relu => {
                if input.as_slice().iter().any(|v| v.abs() < KINK_MARGIN) {
                    return true;
                }
            }
            LayerKind::MaxPool { size, stride } => {
                let s = arch.input_shape(i);
                let out = arch.output_shape(i);
                for row in 0..input.rows() {
                    let v = input.row(row);
                    for c in 0..s.channels {
                        for oy in 0..out.height {
                            for ox in 0..out.width {
                                let mut window: Vec<f64> = (0..size * size)
                                    .map(|k| v[(c * s.height + oy * stride + k / size) * s.width + ox * stride + k % size])
                                    .collect();
                                window.sort_by(|a, b| b.total_cmp(a));
                                if window.len() > 1 && window[0] - window[1] < KINK_MARGIN {
                                    return true;
                                }
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    false
}

pub fn check_gradients(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let mut case = 0;
    while case < cases {
        let net = random_network(&mut rng);
        let n = parameter_count(&net);
        if n > 50 {
            return Err(format!("case {case}: generator produced {n} parameters"));
        }
        let (x, y) = random_batch(&mut rng, &net, 4);
        if near_kink(&net, &x, &y) {
            continue;
        }
        case += 1;
        let err = max_gradient_error(&net, &x, &y);
        if !(err < FD_TOLERANCE) {
            return Err(format!("case {case}: relative error {err:e} with {n} parameters"));
        }
    }
    Ok(())
}

fn outputs_bits(net: &Network, x: &Matrix, y: &[usize]) -> Vec<Vec<u64>> {
    let acts = forward(net, x, y).unwrap();
    let mut out: Vec<Vec<u64>> = acts.outputs.iter().map(|m| m.as_slice().iter().map(|v| v.to_bits()).collect()).collect();
    out.push(vec![acts.loss.to_bits()]);
    out
}

fn outputs_values(net: &Network, x: &Matrix, y: &[usize]) -> (Vec<Matrix>, f64) {
    let acts = forward(net, x, y).unwrap();
    (acts.outputs, acts.loss)
}

/// Folding the mask into the weights gives bitwise identical activations,
/// and perturbing pruned weights changes nothing.
pub fn check_masking(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    for case in 0..cases {
        let net = random_network(&mut rng);
        let (x, y) = random_batch(&mut rng, &net, 5);
        if outputs_bits(&net, &x, &y) != outputs_bits(&folded(&net), &x, &y) {
            return Err(format!("case {case}: folded network differs"));
        }
        let mut perturbed = net.clone();
        for p in &mut perturbed.params {
            let t = p.t.clone();
            for (w, &m) in p.w.as_mut_slice().iter_mut().zip(t.as_slice()) {
                if m == 0.0 {
                    *w += rng.gen_range(-10.0..10.0);
                }
            }
        }
        if outputs_values(&net, &x, &y) != outputs_values(&perturbed, &x, &y) {
            return Err(format!("case {case}: a pruned weight changed the output"));
        }
    }
    Ok(())
}

/// Post-conditions, idempotence and hysteresis of the mask update.
pub fn check_mask_update(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    for case in 0..cases {
        let (r, c) = (rng.gen_range(1..8), rng.gen_range(1..8));
        let w = random_matrix(&mut rng, r, c, 2.0);
        let mut t = Matrix::zeros(r, c);
        for v in t.as_mut_slice() {
            *v = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        }
        let before = t.clone();
        let mut p = MaskedParams::with_mask(w, t).unwrap();
        p.thresholds = compute_thresholds(&p.w, rng.gen_range(-1.0..2.0), 0.9, 1.1).unwrap();
        let (a, b) = (p.thresholds.a, p.thresholds.b);
        p.update_mask().unwrap();
        let once = p.t.clone();
        for k in 0..p.len() {
            let (w, t, t0) = (p.w.as_slice()[k].abs(), once.as_slice()[k], before.as_slice()[k]);
            let ok = if w < a {
                t == 0.0
            } else if w >= b {
                t == 1.0
            } else {
                t == t0
            };
            if !ok {
                return Err(format!("case {case}: |w|={w} a={a} b={b} mask {t0} -> {t}"));
            }
        }
        for _ in 0..3 {
            p.update_mask().unwrap();
        }
        if p.t != once {
            return Err(format!("case {case}: repeated updates changed the mask"));
        }
    }
    Ok(())
}

/// A pruned single weight regrows past `b` under a steady gradient, is
/// spliced back on the next mask update and then reaches the output.
pub fn check_splice_recovery() -> Result<(), String> {
    let arch = Architecture::new(
        Shape3::flat(1),
        vec![
            LayerSpec::fully_connected("fc1", 1).without_bias(),
            LayerSpec::sigmoid_xent("loss"),
        ],
    )
    .unwrap();
    let mut net = init_network(arch, 0);
    net.params[0] = MaskedParams::with_mask(Matrix::from_vec(1, 1, vec![0.05]).unwrap(), Matrix::zeros(1, 1)).unwrap();
    net.params[0].thresholds = netsurgery::surgery::ThresholdSpec::fixed(0.5, 1.0);
    let x = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
    let y = [1];
    let silent = forward(&net, &x, &y).unwrap().outputs[0].get(0, 0);
    if silent != 0.0 {
        return Err(format!("pruned weight leaks into the output: {silent}"));
    }
    let mut steps = 0;
    while net.params[0].w.get(0, 0) < 1.0 {
        let acts = forward(&net, &x, &y).unwrap();
        let grads = backward(&net, &acts, &y).unwrap();
        net.params[0].apply_update(&grads.weights[0], 0.5).unwrap();
        net.params[0].update_mask().unwrap();
        steps += 1;
        if steps > 1000 {
            return Err("weight never regrew past b".to_string());
        }
        let w = net.params[0].w.get(0, 0);
        let t = net.params[0].t.get(0, 0);
        if w < 1.0 && t != 0.0 {
            return Err(format!("spliced early at w={w}"));
        }
    }
    if net.params[0].t.get(0, 0) != 1.0 {
        return Err("mask stayed at 0 after the weight crossed b".to_string());
    }
    let live = forward(&net, &x, &y).unwrap().outputs[0].get(0, 0);
    if live != net.params[0].w.get(0, 0) {
        return Err(format!("spliced weight does not reach the output: {live}"));
    }
    Ok(())
}

pub fn check_trigger_schedules(cases: usize, seed: u64) -> Result<(), String> {
    use netsurgery::surgery::{trigger_probability, TriggerSchedule};
    let mut rng = rng(seed);
    for case in 0..cases {
        let s = TriggerSchedule::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..3.0), rng.gen_range(1..5000)).unwrap();
        if trigger_probability(&s, 0) != 1.0 {
            return Err(format!("case {case}: sigma(0) != 1 for {s:?}"));
        }
        let mut prev = 1.0;
        for iter in (0..6000).step_by(7) {
            let p = trigger_probability(&s, iter);
            if p > prev || !(0.0..=1.0).contains(&p) {
                return Err(format!("case {case}: sigma({iter}) = {p} after {prev}"));
            }
            if iter >= s.stop_iter && p != 0.0 {
                return Err(format!("case {case}: sigma({iter}) = {p} past stop_iter"));
            }
            prev = p;
        }
    }
    Ok(())
}

/// Surgery with a schedule that never fires against a hand-written SGD loop
/// over the same batch sequence, compared bitwise.
pub fn check_quiet_surgery_is_sgd() -> Result<(), String> {
    use netsurgery::data::{gen_xor, BatchStream};
    use netsurgery::presets::Arch;
    use netsurgery::surgery::{run_surgery, LrPolicy, SurgeryConfig, TriggerSchedule};

    let data = gen_xor(200, 0.1, 3).unwrap();
    let reference = init_network(Arch::Xor251.architecture(), 8);
    let cfg = SurgeryConfig {
        base_lr: 0.7,
        lr_policy: LrPolicy::Inv { gamma: 0.01, power: 0.75 },
        max_iter: 250,
        batch_size: 10,
        trigger: TriggerSchedule::never(),
        c: 1.0,
        seed: 4,
        ..SurgeryConfig::default()
    };
    let mut net = reference.clone();
    let mut stream = BatchStream::new(&data, cfg.batch_size, cfg.seed).unwrap();
    for iter in 0..cfg.max_iter {
        let lr = cfg.lr_policy.rate(cfg.base_lr, iter);
        let (x, y) = stream.next_batch();
        let acts = forward(&net, &x, &y).unwrap();
        let grads = backward(&net, &acts, &y).unwrap();
        for (slot, g) in grads.weights.iter().enumerate() {
            for (w, &gv) in net.params[slot].w.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *w -= lr * gv;
            }
            for (b, &gv) in net.biases[slot].iter_mut().zip(&grads.biases[slot]) {
                *b -= lr * gv;
            }
        }
    }
    let surgery = run_surgery(&reference, &data, &cfg).map_err(|e| e.to_string())?.network;
    let bits = |n: &Network| -> Vec<u64> {
        n.params
            .iter()
            .flat_map(|p| p.w.as_slice().iter().chain(p.t.as_slice()))
            .chain(n.biases.iter().flatten())
            .map(|v| v.to_bits())
            .collect()
    };
    if bits(&net) != bits(&surgery) {
        return Err("trajectories diverge".to_string());
    }
    Ok(())
}

/// Dense files round-trip bitwise, sparse files rebuild `W ⊙ T` exactly and
/// the report counts match the masks.
pub fn check_serialization(cases: usize, seed: u64) -> Result<(), String> {
    use netsurgery::model_io::{compression_report, export_sparse, load_dense, save_dense, SparseModel};
    let mut rng = rng(seed);
    for case in 0..cases {
        let net = random_network(&mut rng);
        let dense = save_dense(&net);
        let back = load_dense(&dense).map_err(|e| e.to_string())?;
        if back != net || save_dense(&back) != dense {
            return Err(format!("case {case}: dense round trip differs"));
        }
        let sparse = SparseModel::from_bytes(&export_sparse(&net).to_bytes())
            .and_then(|m| m.to_network())
            .map_err(|e| e.to_string())?;
        for (a, b) in sparse.params.iter().zip(&net.params) {
            if a.masked() != b.masked() {
                return Err(format!("case {case}: sparse rebuild differs from W*T"));
            }
        }
        let r = compression_report(&net);
        let biases: usize = net.biases.iter().map(Vec::len).sum();
        let kept: usize = net.params.iter().map(|p| p.t.as_slice().iter().filter(|&&t| t == 1.0).count()).sum();
        if r.total() != parameter_count(&net)
            || r.kept() != kept + biases
            || r.compression_rate() != r.total() as f64 / r.kept() as f64
        {
            return Err(format!("case {case}: report arithmetic"));
        }
    }
    Ok(())
}

/// Lowered convolution against a direct six-deep loop.
pub fn check_conv_lowering(cases: usize, seed: u64) -> Result<(), String> {
    use netsurgery::math::{im2col, matmul};
    let mut rng = rng(seed);
    for case in 0..cases {
        let spec = KernelSpec {
            in_channels: rng.gen_range(1..4),
            out_channels: rng.gen_range(1..4),
            kernel_h: rng.gen_range(1..4),
            kernel_w: rng.gen_range(1..4),
            stride: rng.gen_range(1..3),
            pad: rng.gen_range(0..2),
        };
        let shape = Shape3::new(spec.in_channels, rng.gen_range(3..8), rng.gen_range(3..8));
        let input: Vec<f64> = (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = random_matrix(&mut rng, spec.out_channels, spec.patch_len(), 1.0);
        let out = matmul(&w, &im2col(&input, shape, &spec).unwrap()).unwrap();
        let o = spec.output_shape(shape).unwrap();
        for oc in 0..spec.out_channels {
            for oy in 0..o.height {
                for ox in 0..o.width {
                    let mut acc = 0.0;
                    for c in 0..spec.in_channels {
                        for ky in 0..spec.kernel_h {
                            for kx in 0..spec.kernel_w {
                                let y = (oy * spec.stride + ky) as isize - spec.pad as isize;
                                let x = (ox * spec.stride + kx) as isize - spec.pad as isize;
                                if y < 0 || x < 0 || y >= shape.height as isize || x >= shape.width as isize {
                                    continue;
                                }
                                let v = input[(c * shape.height + y as usize) * shape.width + x as usize];
                                acc += w.get(oc, (c * spec.kernel_h + ky) * spec.kernel_w + kx) * v;
                            }
                        }
                    }
                    let got = out.get(oc, oy * o.width + ox);
                    let rel = (got - acc).abs() / acc.abs().max(1e-300);
                    if acc != got && rel >= 1e-12 {
                        return Err(format!("case {case}: {got} vs {acc}"));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Two 28x28 images with pixel bytes `i % 256` and labels 7 and 3.
pub fn check_idx_fixture() -> Result<(), String> {
    use netsurgery::data::{parse_idx_images, parse_idx_labels};
    let mut images = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28];
    images.extend((0..2 * 784).map(|i| (i % 256) as u8));
    let labels = [0, 0, 8, 1, 0, 0, 0, 2, 7, 3];
    let m = parse_idx_images(&images).map_err(|e| e.to_string())?;
    if m.shape() != (2, 784) {
        return Err(format!("shape {:?}", m.shape()));
    }
    for (i, &v) in m.as_slice().iter().enumerate() {
        if v != (i % 256) as f64 / 255.0 {
            return Err(format!("pixel {i} = {v}"));
        }
    }
    if parse_idx_labels(&labels).map_err(|e| e.to_string())? != vec![7, 3] {
        return Err("labels".to_string());
    }
    let mut bad = images.clone();
    bad[3] = 1;
    if parse_idx_images(&bad).is_ok() || parse_idx_labels(&images[..10]).is_ok() {
        return Err("wrong magic accepted".to_string());
    }
    Ok(())
}
