//! Policy and value models over stack-machine states.
//!
//! A state is featurized as: one-hot of the last [`CONTEXT_WINDOW`] tokens
//! (zero-padded at the front), the first [`TEST_SLOTS`] unit tests scaled by
//! [`VALUE_CAP`], and the current position as a fraction of the length cap.
//! The policy maps a state to next-token logits; decoding is temperature
//! plus nucleus (top-p) sampling, with temperatures below [`GREEDY_EPS`]
//! meaning deterministic argmax.

use crate::minilang::{Program, Token, MAX_PROGRAM_LEN, VOCAB_SIZE};
use crate::net::{AdamConfig, AdamState, DenseNet, Gradients, NetError};
use crate::rng::Stream;
use crate::taskgen::Task;
use std::path::Path;

pub const CONTEXT_WINDOW: usize = 8;
pub const TEST_SLOTS: usize = 3;
pub const VALUE_CAP: f64 = 100.0;
pub const FEATURE_DIM: usize = CONTEXT_WINDOW * VOCAB_SIZE + 3 * TEST_SLOTS + 1;
/// Temperatures below this are treated as greedy decoding.
pub const GREEDY_EPS: f64 = 1e-6;

/// Hidden widths shared by the policy, value, and reward-model networks.
pub const HIDDEN_DIMS: [usize; 2] = [64, 64];

pub fn policy_dims() -> Vec<usize> {
    vec![FEATURE_DIM, HIDDEN_DIMS[0], HIDDEN_DIMS[1], VOCAB_SIZE]
}

pub fn scalar_dims() -> Vec<usize> {
    vec![FEATURE_DIM, HIDDEN_DIMS[0], HIDDEN_DIMS[1], 1]
}

/// Encodes the decoding state after `prefix` has been emitted for `task`.
pub fn featurize(task: &Task, prefix: &[Token]) -> Vec<f64> {
    let mut f = vec![0.0; FEATURE_DIM];
    let len = prefix.len();
    // Slot w holds the token at distance CONTEXT_WINDOW - w from the end;
    // the most recent token lands in the last slot.
    for w in 0..CONTEXT_WINDOW {
        if len + w >= CONTEXT_WINDOW {
            let t = prefix[len + w - CONTEXT_WINDOW];
            f[w * VOCAB_SIZE + t.id()] = 1.0;
        }
    }
    let base = CONTEXT_WINDOW * VOCAB_SIZE;
    for (e, ut) in task.tests.iter().take(TEST_SLOTS).enumerate() {
        f[base + 3 * e] = ut.inputs.first().copied().unwrap_or(0) as f64 / VALUE_CAP;
        f[base + 3 * e + 1] = ut.inputs.get(1).copied().unwrap_or(0) as f64 / VALUE_CAP;
        f[base + 3 * e + 2] = ut.expected as f64 / VALUE_CAP;
    }
    f[FEATURE_DIM - 1] = len as f64 / MAX_PROGRAM_LEN as f64;
    f
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    log_softmax(xs).into_iter().map(f64::exp).collect()
}

pub fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    xs.iter().map(|x| x - lse).collect()
}

/// Draws one token id from `logits` under temperature and nucleus
/// truncation, returning the id and its log-probability under the realized
/// sampling distribution.
///
/// Greedy (`temperature < GREEDY_EPS`) takes the argmax (lowest id on ties)
/// and reports log-prob 0, a point mass. With `top_p >= 1` the draw comes
/// from the full softmax, so the reported log-prob equals the
/// teacher-forced one exactly. Otherwise the support is the smallest
/// probability-sorted prefix (ties by ascending id) with cumulative mass
/// >= top_p, renormalized.
pub fn sample_token(logits: &[f64], temperature: f64, top_p: f64, stream: &mut Stream) -> (usize, f64) {
    assert!(!logits.is_empty());
    if temperature < GREEDY_EPS {
        let mut best = 0;
        for (i, &x) in logits.iter().enumerate() {
            if x > logits[best] {
                best = i;
            }
        }
        return (best, 0.0);
    }
    let scaled: Vec<f64> = logits.iter().map(|x| x / temperature).collect();
    let logp = log_softmax(&scaled);
    if top_p >= 1.0 {
        let u = stream.next_f64();
        let mut acc = 0.0;
        for (i, lp) in logp.iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                return (i, *lp);
            }
        }
        return (logp.len() - 1, logp[logp.len() - 1]);
    }
    let mut order: Vec<usize> = (0..logp.len()).collect();
    order.sort_by(|&a, &b| logp[b].partial_cmp(&logp[a]).unwrap().then(a.cmp(&b)));
    let mut support_len = order.len();
    let mut cum = 0.0;
    for (k, &i) in order.iter().enumerate() {
        cum += logp[i].exp();
        if cum >= top_p {
            support_len = k + 1;
            break;
        }
    }
    let support = &order[..support_len];
    let mass: f64 = support.iter().map(|&i| logp[i].exp()).sum();
    let log_mass = mass.ln();
    let u = stream.next_f64() * mass;
    let mut acc = 0.0;
    for &i in support {
        acc += logp[i].exp();
        if u < acc {
            return (i, logp[i] - log_mass);
        }
    }
    let last = *support.last().unwrap();
    (last, logp[last] - log_mass)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    net: DenseNet,
}

impl PolicyModel {
    pub fn new(stream: &mut Stream) -> PolicyModel {
        PolicyModel { net: DenseNet::new(&policy_dims(), stream) }
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    pub fn logits(&self, task: &Task, prefix: &[Token]) -> Vec<f64> {
        self.net.output(&featurize(task, prefix)).expect("feature width is fixed")
    }

    /// Samples a full response: tokens until END or the length cap.
    /// Returns the program and the per-token log-probs of the draw.
    pub fn sample_response(
        &self,
        task: &Task,
        temperature: f64,
        top_p: f64,
        stream: &mut Stream,
    ) -> (Program, Vec<f64>) {
        self.sample_continuation(task, &[], temperature, top_p, stream)
    }

    /// Extends `prefix` by sampling until END or the length cap. Returns
    /// the whole program (prefix included) and log-probs for the sampled
    /// suffix only. A prefix that is already terminal comes back unchanged.
    pub fn sample_continuation(
        &self,
        task: &Task,
        prefix: &[Token],
        temperature: f64,
        top_p: f64,
        stream: &mut Stream,
    ) -> (Program, Vec<f64>) {
        let mut tokens = prefix.to_vec();
        let mut logps = Vec::new();
        while tokens.len() < MAX_PROGRAM_LEN && tokens.last() != Some(&Token::End) {
            let logits = self.logits(task, &tokens);
            let (id, lp) = sample_token(&logits, temperature, top_p, stream);
            tokens.push(Token::from_id(id).expect("logits are vocab-sized"));
            logps.push(lp);
        }
        (Program::new(tokens).expect("END only sampled as terminal"), logps)
    }

    /// Deterministic greedy decode.
    pub fn greedy(&self, task: &Task) -> Program {
        let mut unused = Stream::from_seed(0);
        self.sample_continuation(task, &[], 0.0, 1.0, &mut unused).0
    }

    /// Teacher-forced log-probs of each token given its prefix, at
    /// temperature 1 over the full vocabulary.
    pub fn logprobs(&self, task: &Task, program: &Program) -> Vec<f64> {
        let tokens = program.tokens();
        (0..tokens.len())
            .map(|t| {
                let lp = log_softmax(&self.logits(task, &tokens[..t]));
                lp[tokens[t].id()]
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        self.net.save(path, "policy")
    }

    pub fn load(path: &Path) -> Result<PolicyModel, NetError> {
        Ok(PolicyModel { net: DenseNet::load_expecting(path, "policy")? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueModel {
    net: DenseNet,
}

impl ValueModel {
    pub fn new(stream: &mut Stream) -> ValueModel {
        ValueModel { net: DenseNet::new(&scalar_dims(), stream) }
    }

    pub fn from_net(net: DenseNet) -> ValueModel {
        assert_eq!(net.dims(), &scalar_dims()[..], "value net has scalar head dims");
        ValueModel { net }
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    pub fn value(&self, task: &Task, prefix: &[Token]) -> f64 {
        self.net.output(&featurize(task, prefix)).expect("feature width is fixed")[0]
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        self.net.save(path, "value")
    }

    pub fn load(path: &Path) -> Result<ValueModel, NetError> {
        Ok(ValueModel { net: DenseNet::load_expecting(path, "value")? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SftConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for SftConfig {
    fn default() -> SftConfig {
        SftConfig { epochs: 40, batch_size: 32, adam: AdamConfig::with_lr(3e-3), seed: 0 }
    }
}

/// Supervised next-token training on (task, target program) pairs.
/// Returns the mean per-token negative log-likelihood for each epoch.
pub fn sft_train(policy: &mut PolicyModel, pairs: &[(Task, Program)], cfg: &SftConfig) -> Vec<f64> {
    assert!(cfg.batch_size > 0);
    let mut adam = AdamState::new(&policy.net, cfg.adam);
    let mut acc = Gradients::zeros_like(&policy.net);
    let stream = Stream::from_seed(cfg.seed).derive_str("sft");
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        stream.derive(epoch as u64).shuffle(&mut order);
        let mut epoch_nll = 0.0;
        let mut epoch_tokens = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            acc.clear();
            let mut batch_tokens = 0usize;
            for &pi in batch {
                let (task, target) = &pairs[pi];
                let tokens = target.tokens();
                for t in 0..tokens.len() {
                    let x = featurize(task, &tokens[..t]);
                    let cache = policy.net.forward(&x).expect("feature width is fixed");
                    let mut grad = softmax(cache.output());
                    epoch_nll -= grad[tokens[t].id()].ln();
                    grad[tokens[t].id()] -= 1.0;
                    policy
                        .net
                        .backward_accumulate(&cache, &grad, &mut acc)
                        .expect("grad width is fixed");
                    batch_tokens += 1;
                }
            }
            if batch_tokens == 0 {
                continue;
            }
            acc.scale(1.0 / batch_tokens as f64);
            adam.apply(&mut policy.net, &acc);
            epoch_tokens += batch_tokens;
        }
        history.push(if epoch_tokens == 0 { 0.0 } else { epoch_nll / epoch_tokens as f64 });
    }
    history
}
