//! Training loops: plain SGD for reference models and the surgery loop that
//! alternates mask updates with weight updates.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{BatchStream, Dataset};
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::model_io::{compression_report, CompressionReport};
use crate::network::{backward, forward, Gradients, Network};
use crate::surgery::config::{SurgeryConfig, SurgeryPlan};
use crate::surgery::schedule::trigger_probability;

const LOSS_WINDOW: usize = 100;
/// RNG stream used for trigger draws; batches use stream 0.
const TRIGGER_STREAM: u64 = 1;

/// Mutable state of a training run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub iter: usize,
    /// Current learning rate β.
    pub lr: f64,
    rng: ChaCha8Rng,
    losses: VecDeque<f64>,
}

impl TrainState {
    pub fn new(base_lr: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(TRIGGER_STREAM);
        TrainState {
            iter: 0,
            lr: base_lr,
            rng,
            losses: VecDeque::with_capacity(LOSS_WINDOW),
        }
    }

    fn record_loss(&mut self, loss: f64) {
        if self.losses.len() == LOSS_WINDOW {
            self.losses.pop_front();
        }
        self.losses.push_back(loss);
    }

    /// Mean minibatch loss over the last (up to) 100 iterations.
    pub fn recent_loss(&self) -> f64 {
        if self.losses.is_empty() {
            return f64::NAN;
        }
        self.losses.iter().sum::<f64>() / self.losses.len() as f64
    }
}

/// What happened during one surgery iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub loss: f64,
    /// Per learnable slot: whether its mask was re-evaluated.
    pub triggered: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub iter: usize,
    pub loss: f64,
    pub lr: f64,
    /// Kept fraction of all parameters (biases always count as kept).
    pub kept_fraction: f64,
}

fn apply_gradients(net: &mut Network, grads: &Gradients, lr: f64) -> Result<()> {
    for (p, g) in net.params.iter_mut().zip(&grads.weights) {
        p.apply_update(g, lr)?;
    }
    for (b, g) in net.biases.iter_mut().zip(&grads.biases) {
        for (bv, &gv) in b.iter_mut().zip(g) {
            *bv -= lr * gv;
        }
    }
    Ok(())
}

/// One plain SGD iteration with masks held fixed.
pub fn sgd_step(
    net: &mut Network,
    lr_at: impl Fn(usize) -> f64,
    state: &mut TrainState,
    batch: &Matrix,
    labels: &[usize],
) -> Result<f64> {
    let acts = forward(net, batch, labels)?;
    let grads = backward(net, &acts, labels)?;
    apply_gradients(net, &grads, state.lr)?;
    state.iter += 1;
    state.lr = lr_at(state.iter);
    state.record_loss(acts.loss);
    Ok(acts.loss)
}

/// One surgery iteration: forward and backward through `W ⊙ T`, then for
/// each learnable layer a stochastic mask update (only layers active in the
/// current phase) followed by the weight update.
pub fn surgery_step(
    net: &mut Network,
    plan: &SurgeryPlan,
    state: &mut TrainState,
    batch: &Matrix,
    labels: &[usize],
) -> Result<StepReport> {
    let (phase, offset) = plan.phase_at(state.iter).ok_or_else(|| {
        Error::Precondition(format!(
            "iteration {} is past max_iter {}",
            state.iter, plan.max_iter
        ))
    })?;
    if plan.c.len() != net.params.len() {
        return Err(Error::State("surgery plan was built for another network".to_string()));
    }
    let acts = forward(net, batch, labels)?;
    let grads = backward(net, &acts, labels)?;

    let p = trigger_probability(&plan.trigger, offset);
    let active = &plan.phases[phase].active;
    let mut triggered = vec![false; net.params.len()];
    for slot in 0..net.params.len() {
        if active[slot] {
            let u: f64 = state.rng.gen();
            if u < p {
                let params = &mut net.params[slot];
                params.freeze_thresholds(plan.c[slot], plan.band_lo, plan.band_hi)?;
                params.update_mask()?;
                triggered[slot] = true;
            }
        }
        net.params[slot].apply_update(&grads.weights[slot], state.lr)?;
        for (bv, &gv) in net.biases[slot].iter_mut().zip(&grads.biases[slot]) {
            *bv -= state.lr * gv;
        }
    }
    state.iter += 1;
    state.lr = plan.lr_at(state.iter);
    state.record_loss(acts.loss);
    Ok(StepReport {
        loss: acts.loss,
        triggered,
    })
}

fn check_data(net: &Network, data: &Dataset) -> Result<()> {
    let arch = net.architecture();
    if data.n_features() != arch.input().len() {
        return Err(Error::config(format!(
            "data has {} features, network input is {}",
            data.n_features(),
            arch.input()
        )));
    }
    if data.n_classes > arch.n_classes() {
        return Err(Error::config(format!(
            "data has {} classes, network distinguishes {}",
            data.n_classes,
            arch.n_classes()
        )));
    }
    if data.is_empty() {
        return Err(Error::config("training data is empty"));
    }
    Ok(())
}

fn kept_fraction(net: &Network) -> f64 {
    let bias: usize = net.biases.iter().map(Vec::len).sum();
    (net.kept_weight_count() + bias) as f64 / (net.weight_count() + bias) as f64
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub log: Vec<LogRecord>,
}

/// Trains `initial` with plain SGD; masks are left as they are.
pub fn train_reference(initial: &Network, data: &Dataset, cfg: &SurgeryConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_data(initial, data)?;
    let mut net = initial.clone();
    let mut state = TrainState::new(cfg.base_lr, cfg.seed);
    let mut stream = BatchStream::new(data, cfg.batch_size, cfg.seed)?;
    let lr_at = |iter| cfg.lr_policy.rate(cfg.base_lr, iter);
    let mut log = Vec::new();
    for _ in 0..cfg.max_iter {
        let (x, y) = stream.next_batch();
        sgd_step(&mut net, lr_at, &mut state, &x, &y)?;
        if state.iter % cfg.log_every == 0 {
            log.push(LogRecord {
                iter: state.iter,
                loss: state.recent_loss(),
                lr: state.lr,
                kept_fraction: kept_fraction(&net),
            });
        }
    }
    Ok(TrainOutcome { network: net, log })
}

#[derive(Debug, Clone)]
pub struct SurgeryOutcome {
    pub network: Network,
    pub report: CompressionReport,
    pub log: Vec<LogRecord>,
}

/// Runs the full surgery loop starting from `reference`: weights are copied,
/// masks reset to ones and thresholds unfrozen, β starts at the base rate.
pub fn run_surgery(reference: &Network, data: &Dataset, cfg: &SurgeryConfig) -> Result<SurgeryOutcome> {
    let mut net = reference.clone();
    net.reset_masks();
    let plan = cfg.plan(&net)?;
    check_data(&net, data)?;
    let mut state = TrainState::new(plan.lr_at(0), cfg.seed);
    let mut stream = BatchStream::new(data, cfg.batch_size, cfg.seed)?;
    let mut log = Vec::new();
    while state.iter < plan.max_iter {
        let (x, y) = stream.next_batch();
        surgery_step(&mut net, &plan, &mut state, &x, &y)?;
        if state.iter % cfg.log_every == 0 {
            log.push(LogRecord {
                iter: state.iter,
                loss: state.recent_loss(),
                lr: state.lr,
                kept_fraction: kept_fraction(&net),
            });
        }
    }
    let report = compression_report(&net);
    Ok(SurgeryOutcome {
        network: net,
        report,
        log,
    })
}
