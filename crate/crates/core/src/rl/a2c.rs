//! Synchronous advantage actor-critic over a [`PolicyValueNet`].

use serde::{Deserialize, Serialize};

use super::dist::{entropy, log_softmax};
use super::net::PolicyValueNet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct A2cConfig {
    pub n_steps: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    /// RMSprop smoothing constant and denominator offset.
    pub rms_alpha: f64,
    pub rms_eps: f64,
    pub normalize_advantage: bool,
}

impl Default for A2cConfig {
    fn default() -> Self {
        Self {
            n_steps: 5,
            gamma: 0.99,
            learning_rate: 7e-4,
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            rms_alpha: 0.99,
            rms_eps: 1e-5,
            normalize_advantage: false,
        }
    }
}

impl A2cConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Config("rl.n_steps must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "rl.gamma must lie in (0, 1] (got {})",
                self.gamma
            )));
        }
        let weights = [
            ("rl.learning_rate", self.learning_rate),
            ("rl.value_coef", self.value_coef),
            ("rl.entropy_coef", self.entropy_coef),
            ("rl.max_grad_norm", self.max_grad_norm),
        ];
        for (name, w) in weights {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Config(format!(
                    "{name} must be finite and non-negative (got {w})"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.rms_alpha) || !(self.rms_eps > 0.0) {
            return Err(Error::Config(
                "rl.rms_alpha must lie in [0, 1) and rl.rms_eps be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: Vec<f64>,
    /// One category per policy head.
    pub actions: Vec<usize>,
    /// Joint log-probability: the sum over heads.
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    /// Whether the episode ended after this step.
    pub done: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.reward)
    }
}

/// Discounted n-step returns and advantages of a rollout.
///
/// `R_t = r_t + gamma R_{t+1}`, cut at steps marked done, with `bootstrap`
/// standing in for the return after the last step.
pub fn n_step_returns(steps: &[Step], bootstrap: f64, gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let mut returns = vec![0.0; steps.len()];
    let mut next = bootstrap;
    for (t, s) in steps.iter().enumerate().rev() {
        if s.done {
            next = 0.0;
        }
        next = s.reward + gamma * next;
        returns[t] = next;
    }
    let adv = returns
        .iter()
        .zip(steps)
        .map(|(r, s)| r - s.value)
        .collect();
    (returns, adv)
}

/// One training sample: the advantage and return are treated as constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: Vec<f64>,
    pub actions: Vec<usize>,
    pub advantage: f64,
    pub ret: f64,
}

pub fn samples(steps: &[Step], bootstrap: f64, cfg: &A2cConfig) -> Vec<Sample> {
    let (returns, mut adv) = n_step_returns(steps, bootstrap, cfg.gamma);
    if cfg.normalize_advantage && adv.len() > 1 {
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let sd = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        adv.iter_mut().for_each(|a| *a = (*a - mean) / (sd + 1e-8));
    }
    steps
        .iter()
        .zip(returns.into_iter().zip(adv))
        .map(|(s, (ret, advantage))| Sample {
            state: s.state.clone(),
            actions: s.actions.clone(),
            advantage,
            ret,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

/// Loss and its gradient with respect to every parameter:
/// `-mean(A log pi(a|s)) + c_v mean((R - V)^2) - c_e mean(H)`.
pub fn loss_and_grad(
    net: &PolicyValueNet,
    batch: &[Sample],
    cfg: &A2cConfig,
) -> Result<(Losses, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::State("empty training batch".into()));
    }
    let n = batch.len() as f64;
    let mut grad = vec![0.0; net.params.len()];
    let mut l = Losses::default();
    for s in batch {
        let fwd = net.forward(&s.state)?;
        let mut dlogits = Vec::with_capacity(fwd.logits.len());
        for (z, &a) in fwd.logits.iter().zip(&s.actions) {
            let lp = log_softmax(z);
            let h = entropy(z);
            l.policy -= s.advantage * lp[a] / n;
            l.entropy += h / n;
            let dz = lp
                .iter()
                .enumerate()
                .map(|(k, &lpk)| {
                    let p = lpk.exp();
                    let onehot = if k == a { 1.0 } else { 0.0 };
                    (-s.advantage * (onehot - p) + cfg.entropy_coef * p * (lpk + h)) / n
                })
                .collect();
            dlogits.push(dz);
        }
        let err = s.ret - fwd.value;
        l.value += err * err / n;
        net.backward(&fwd, &dlogits, -2.0 * cfg.value_coef * err / n, &mut grad);
    }
    l.total = l.policy + cfg.value_coef * l.value - cfg.entropy_coef * l.entropy;
    l.grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    Ok((l, grad))
}

/// Rescales `grad` in place so its global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= k);
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub square_avg: Vec<f64>,
}

impl RmsProp {
    pub fn new(num_params: usize) -> Self {
        Self {
            square_avg: vec![0.0; num_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &A2cConfig) {
        for ((p, g), v) in params.iter_mut().zip(grad).zip(&mut self.square_avg) {
            *v = cfg.rms_alpha * *v + (1.0 - cfg.rms_alpha) * g * g;
            *p -= cfg.learning_rate * g / (v.sqrt() + cfg.rms_eps);
        }
    }
}

/// Network, optimizer state and the count of consecutive skipped updates.
#[derive(Debug, Clone)]
pub struct A2c {
    pub net: PolicyValueNet,
    pub cfg: A2cConfig,
    opt: RmsProp,
    non_finite_streak: usize,
    pub updates: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateOutcome {
    Applied(Losses),
    /// The loss was not finite; parameters are unchanged.
    Skipped,
}

impl A2c {
    pub fn new(net: PolicyValueNet, cfg: A2cConfig) -> Self {
        let opt = RmsProp::new(net.params.len());
        Self {
            net,
            cfg,
            opt,
            non_finite_streak: 0,
            updates: 0,
        }
    }

    /// One clipped gradient step on `batch`. Two non-finite losses in a row
    /// abort with a divergence error.
    pub fn update(&mut self, batch: &[Sample]) -> Result<UpdateOutcome> {
        let (losses, mut grad) = loss_and_grad(&self.net, batch, &self.cfg)?;
        if !losses.total.is_finite() || !losses.grad_norm.is_finite() {
            self.non_finite_streak += 1;
            log::warn!("non-finite loss {losses:?}; update skipped");
            if self.non_finite_streak >= 2 {
                return Err(Error::Divergence(format!(
                    "non-finite loss in {} consecutive updates (last {losses:?})",
                    self.non_finite_streak
                )));
            }
            return Ok(UpdateOutcome::Skipped);
        }
        self.non_finite_streak = 0;
        clip_grad_norm(&mut grad, self.cfg.max_grad_norm);
        self.opt.step(&mut self.net.params, &grad, &self.cfg);
        self.updates += 1;
        Ok(UpdateOutcome::Applied(losses))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(reward: f64, value: f64, done: bool) -> Step {
        Step {
            state: vec![],
            actions: vec![],
            log_prob: 0.0,
            reward,
            value,
            done,
        }
    }

    #[test]
    fn single_terminal_step() {
        let (r, a) = n_step_returns(&[step(1.0, 0.3, true)], 5.0, 0.99);
        assert_eq!(r, [1.0]);
        assert_eq!(a, [1.0 - 0.3]);
    }

    #[test]
    fn geometric_five_step_return() {
        let steps: Vec<Step> = (0..5).map(|_| step(1.0, 0.0, false)).collect();
        let (r, _) = n_step_returns(&steps, 0.0, 0.99);
        assert!((r[0] - 4.90099501).abs() < 1e-12);
    }

    #[test]
    fn zero_rewards_give_negative_values_as_advantages() {
        let steps: Vec<Step> = [0.5, -0.2, 1.5]
            .iter()
            .map(|&v| step(0.0, v, false))
            .collect();
        let (_, a) = n_step_returns(&steps, 0.0, 0.9);
        assert_eq!(a, [-0.5, 0.2, -1.5]);
    }

    #[test]
    fn clipping_rescales_to_max_norm() {
        let mut g = vec![6.0, 8.0];
        assert_eq!(clip_grad_norm(&mut g, 0.5), 10.0);
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 0.5).abs() < 1e-15);
        let mut small = vec![0.1, 0.1];
        clip_grad_norm(&mut small, 0.5);
        assert_eq!(small, [0.1, 0.1]);
    }

    #[test]
    fn config_validation() {
        assert!(A2cConfig::default().validate().is_ok());
        let bad = A2cConfig {
            gamma: 0.0,
            ..A2cConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
