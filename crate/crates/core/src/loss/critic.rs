/// Score clamp used when evaluating the logarithms.
pub const SCORE_EPS: f64 = 1e-7;

/// Critic and regressor objectives of one real/fake score pair, with
/// gradients w.r.t. the critic's pre-sigmoid logits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfCriticLosses {
    /// `-[log s_real + log(1 - s_fake)]`, minimized by the critic.
    pub critic_loss: f64,
    /// `-log s_fake`, minimized by the regressor.
    pub regressor_loss: f64,
    pub critic_grad_real_logit: f64,
    pub critic_grad_fake_logit: f64,
    pub regressor_grad_fake_logit: f64,
}

#[inline]
fn clamp_score(s: f64) -> f64 {
    s.clamp(SCORE_EPS, 1.0 - SCORE_EPS)
}

pub fn self_critic_losses(score_real: f64, score_fake: f64) -> SelfCriticLosses {
    let (r, f) = (clamp_score(score_real), clamp_score(score_fake));
    SelfCriticLosses {
        critic_loss: -(libm::log(r) + libm::log(1.0 - f)),
        regressor_loss: -libm::log(f),
        critic_grad_real_logit: score_real - 1.0,
        critic_grad_fake_logit: score_fake,
        regressor_grad_fake_logit: score_fake - 1.0,
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}
