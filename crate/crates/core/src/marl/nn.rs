//! Small fully-connected actor-critic networks with hand-written backprop.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, w: vec![0.0; inputs * outputs], b: vec![0.0; outputs] }
    }

    /// Orthogonal rows (or columns, whichever is shorter) scaled by `gain`.
    pub fn orthogonal<R: Rng + ?Sized>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        let (long, short) = if outputs >= inputs { (outputs, inputs) } else { (inputs, outputs) };
        // `short` vectors of length `long`, made orthonormal by Gram-Schmidt
        let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(short);
        while vecs.len() < short {
            let mut v: Vec<f64> = (0..long).map(|_| rng.sample(StandardNormal)).collect();
            for u in &vecs {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                for (x, y) in v.iter_mut().zip(u) {
                    *x -= dot * y;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                v.iter_mut().for_each(|x| *x /= norm);
                vecs.push(v);
            }
        }
        let mut w = vec![0.0; inputs * outputs];
        for (s, v) in vecs.iter().enumerate() {
            for (l, &x) in v.iter().enumerate() {
                let (o, i) = if outputs >= inputs { (l, s) } else { (s, l) };
                w[o * inputs + i] = gain * x;
            }
        }
        Self { inputs, outputs, w, b: vec![0.0; outputs] }
    }

    pub fn forward(&self, x: &[f64], y: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.inputs);
        y.clear();
        y.extend(self.b.iter().enumerate().map(|(o, &b)| {
            let row = &self.w[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
        }));
    }

    /// Accumulates parameter gradients into `grad` and, if given, adds the
    /// input gradient into `dx`.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear, dx: Option<&mut [f64]>) {
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b[o] += g;
            let row = &mut grad.w[o * self.inputs..(o + 1) * self.inputs];
            for (r, &xi) in row.iter_mut().zip(x) {
                *r += g * xi;
            }
        }
        if let Some(dx) = dx {
            for (o, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &self.w[o * self.inputs..(o + 1) * self.inputs];
                for (d, &w) in dx.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
    }
}

/// One policy head (logits) and one value head on top of the shared trunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub policy: Linear,
    pub value: Linear,
}

/// ReLU trunk followed by any number of actor-critic heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub trunk: Vec<Linear>,
    pub heads: Vec<Head>,
}

/// Trunk activations; `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
#[derive(Debug, Clone)]
pub struct TrunkPass {
    pub acts: Vec<Vec<f64>>,
}

impl TrunkPass {
    pub fn features(&self) -> &[f64] {
        self.acts.last().expect("input is always present")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    pub probs: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossCoefs {
    pub value: f64,
    pub entropy: f64,
}

/// Loss terms of one sample; `total = policy + value - entropy_coef * entropy`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SampleLoss {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
}

/// Softmax restricted to unmasked entries; masked entries get probability 0.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(Error::LengthMismatch(format!("{} logits, {} mask entries", logits.len(), mask.len())));
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::AllMasked);
    }
    let mut p: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(l, m)| if *m { (l - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    Ok(p)
}

impl Mlp {
    /// `hidden` layer widths for the trunk, one `(actions)` policy head plus a
    /// scalar value head per entry of `head_actions`.
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: &[usize], head_actions: &[usize], rng: &mut R) -> Self {
        let mut trunk = Vec::with_capacity(hidden.len());
        let mut width = inputs;
        for &h in hidden {
            trunk.push(Linear::orthogonal(width, h, std::f64::consts::SQRT_2, rng));
            width = h;
        }
        let heads = head_actions
            .iter()
            .map(|&a| Head {
                policy: Linear::orthogonal(width, a, 0.01, rng),
                value: Linear::orthogonal(width, 1, 1.0, rng),
            })
            .collect();
        Self { trunk, heads }
    }

    pub fn inputs(&self) -> usize {
        self.trunk.first().map_or_else(|| self.heads[0].policy.inputs, |l| l.inputs)
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.slices_mut().into_iter().for_each(|s| s.iter_mut().for_each(|x| *x = 0.0));
        z
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.trunk {
            out.push(&l.w);
            out.push(&l.b);
        }
        for h in &self.heads {
            out.extend([&h.policy.w[..], &h.policy.b[..], &h.value.w[..], &h.value.b[..]]);
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.trunk {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        for h in &mut self.heads {
            out.push(&mut h.policy.w);
            out.push(&mut h.policy.b);
            out.push(&mut h.value.w);
            out.push(&mut h.value.b);
        }
        out
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for s in self.slices_mut() {
            let n = s.len();
            s.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    pub fn trunk_forward(&self, input: &[f64]) -> Result<TrunkPass> {
        if input.len() != self.inputs() {
            return Err(Error::LengthMismatch(format!(
                "network expects {} inputs, got {}",
                self.inputs(),
                input.len()
            )));
        }
        let mut acts = Vec::with_capacity(self.trunk.len() + 1);
        acts.push(input.to_vec());
        for layer in &self.trunk {
            let mut y = Vec::with_capacity(layer.outputs);
            layer.forward(acts.last().unwrap(), &mut y);
            y.iter_mut().for_each(|v| *v = v.max(0.0));
            acts.push(y);
        }
        Ok(TrunkPass { acts })
    }

    /// Raw logits and value of one head.
    pub fn head_forward(&self, pass: &TrunkPass, head: usize) -> (Vec<f64>, f64) {
        let h = &self.heads[head];
        let mut logits = Vec::with_capacity(h.policy.outputs);
        h.policy.forward(pass.features(), &mut logits);
        let mut v = Vec::with_capacity(1);
        h.value.forward(pass.features(), &mut v);
        (logits, v[0])
    }

    /// Policy probabilities (masked softmax) and value estimate for one head.
    pub fn forward(&self, input: &[f64], head: usize, mask: Option<&[bool]>) -> Result<HeadOutput> {
        let pass = self.trunk_forward(input)?;
        self.output(&pass, head, mask)
    }

    pub fn output(&self, pass: &TrunkPass, head: usize, mask: Option<&[bool]>) -> Result<HeadOutput> {
        if head >= self.heads.len() {
            return Err(Error::InvalidParameter(format!("no head {head}")));
        }
        let (logits, value) = self.head_forward(pass, head);
        let all;
        let mask = match mask {
            Some(m) => m,
            None => {
                all = vec![true; logits.len()];
                &all
            }
        };
        let probs = masked_softmax(&logits, mask)?;
        if !value.is_finite() {
            return Err(Error::NonFinite("value estimate".into()));
        }
        Ok(HeadOutput { probs, value })
    }

    /// Loss of one sample and its gradient, scaled by `scale` and added to `grad`.
    ///
    /// `loss = -log pi(action) * advantage + c_v * (value - target)^2 - c_e * entropy`
    #[allow(clippy::too_many_arguments)]
    pub fn accumulate_grad(
        &self,
        input: &[f64],
        head: usize,
        mask: &[bool],
        action: usize,
        advantage: f64,
        value_target: f64,
        coefs: LossCoefs,
        scale: f64,
        grad: &mut Mlp,
    ) -> Result<SampleLoss> {
        let pass = self.trunk_forward(input)?;
        let out = self.output(&pass, head, Some(mask))?;
        if !mask.get(action).copied().unwrap_or(false) {
            return Err(Error::Contract(format!("action {action} is masked")));
        }
        let p = &out.probs;
        let entropy: f64 = -p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>();
        let logp = p[action].ln();
        let verr = out.value - value_target;
        let loss = SampleLoss {
            policy: -logp * advantage,
            value: coefs.value * verr * verr,
            entropy,
            total: -logp * advantage + coefs.value * verr * verr - coefs.entropy * entropy,
        };
        if !loss.total.is_finite() {
            return Err(Error::NonFinite(format!("sample loss {:?}", loss)));
        }

        // d loss / d logits over the legal set
        let dz: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(j, &pj)| {
                if !mask[j] || pj == 0.0 {
                    return 0.0;
                }
                let onehot = if j == action { 1.0 } else { 0.0 };
                scale * (advantage * (pj - onehot) + coefs.entropy * pj * (pj.ln() + entropy))
            })
            .collect();
        let dv = [scale * 2.0 * coefs.value * verr];

        let h = &self.heads[head];
        let gh = &mut grad.heads[head];
        let feats = pass.features();
        let mut dh = vec![0.0; feats.len()];
        h.policy.backward(feats, &dz, &mut gh.policy, Some(&mut dh));
        h.value.backward(feats, &dv, &mut gh.value, Some(&mut dh));

        for l in (0..self.trunk.len()).rev() {
            let out = &pass.acts[l + 1];
            for (d, &a) in dh.iter_mut().zip(out) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            let mut dx = vec![0.0; pass.acts[l].len()];
            let need_dx = l > 0;
            self.trunk[l].backward(&pass.acts[l], &dh, &mut grad.trunk[l], need_dx.then_some(&mut dx[..]));
            dh = dx;
        }
        Ok(loss)
    }

    /// Loss of one sample without gradients (for finite differences).
    #[allow(clippy::too_many_arguments)]
    pub fn sample_loss(
        &self,
        input: &[f64],
        head: usize,
        mask: &[bool],
        action: usize,
        advantage: f64,
        value_target: f64,
        coefs: LossCoefs,
    ) -> Result<f64> {
        let out = self.forward(input, head, Some(mask))?;
        let p = &out.probs;
        let entropy: f64 = -p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>();
        let verr = out.value - value_target;
        Ok(-p[action].ln() * advantage + coefs.value * verr * verr - coefs.entropy * entropy)
    }
}

/// Adaptive moment estimation with optional global-norm clipping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_grad_norm: Option<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64, max_grad_norm: Option<f64>) -> Self {
        let n = net.num_params();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, max_grad_norm, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Applies one update; returns the gradient norm before clipping.
    pub fn step(&mut self, net: &mut Mlp, grad: &Mlp) -> Result<f64> {
        let mut g = grad.to_flat();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        if let Some(max) = self.max_grad_norm {
            if norm > max {
                let s = max / norm;
                g.iter_mut().for_each(|x| *x *= s);
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut params = net.to_flat();
        for (k, p) in params.iter_mut().enumerate() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g[k] * g[k];
            let mh = self.m[k] / bc1;
            let vh = self.v[k] / bc2;
            *p -= self.lr * mh / (vh.sqrt() + self.eps);
        }
        net.set_flat(&params);
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_uniform_probs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::new(4, &[8, 8], &[5], &mut rng);
        net.slices_mut().into_iter().for_each(|s| s.fill(0.0));
        let mask = [true, false, true, true, false];
        let out = net.forward(&[0.3, 0.1, 0.2, 0.9], 0, Some(&mask)).unwrap();
        for (p, m) in out.probs.iter().zip(mask) {
            assert_eq!(*p, if m { 1.0 / 3.0 } else { 0.0 });
        }
    }

    #[test]
    fn single_legal_action_is_certain() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(3, &[16], &[4], &mut rng);
        let out = net.forward(&[1.0, -1.0, 0.5], 0, Some(&[false, false, true, false])).unwrap();
        assert_eq!(out.probs, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn all_masked_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(3, &[16], &[2], &mut rng);
        assert!(matches!(net.forward(&[0.0; 3], 0, Some(&[false, false])), Err(Error::AllMasked)));
        assert!(matches!(net.forward(&[0.0; 2], 0, None), Err(Error::LengthMismatch(_))));
    }

    #[test]
    fn orthogonal_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = Linear::orthogonal(16, 4, 1.0, &mut rng);
        for a in 0..4 {
            for b in 0..4 {
                let dot: f64 = (0..16).map(|i| l.w[a * 16 + i] * l.w[b * 16 + i]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_signal_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(5, &[8, 8], &[3], &mut rng);
        let x = [0.1, 0.2, 0.3, 0.4, 0.5];
        let v = net.forward(&x, 0, None).unwrap().value;
        let mut g = net.zeros_like();
        let coefs = LossCoefs { value: 0.5, entropy: 0.0 };
        net.accumulate_grad(&x, 0, &[true; 3], 1, 0.0, v, coefs, 1.0, &mut g).unwrap();
        assert!(g.to_flat().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn policy_gradient_is_linear_in_advantage() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::new(5, &[8], &[3], &mut rng);
        let x = [0.5, -0.2, 0.3, 0.1, 0.9];
        let coefs = LossCoefs { value: 0.0, entropy: 0.0 };
        let mut g1 = net.zeros_like();
        let mut g2 = net.zeros_like();
        net.accumulate_grad(&x, 0, &[true; 3], 2, 1.5, 0.0, coefs, 1.0, &mut g1).unwrap();
        net.accumulate_grad(&x, 0, &[true; 3], 2, 3.0, 0.0, coefs, 1.0, &mut g2).unwrap();
        for (a, b) in g1.to_flat().iter().zip(g2.to_flat()) {
            assert_eq!(2.0 * a, b);
        }
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Mlp::new(2, &[4], &[2], &mut rng);
        let before = net.to_flat();
        let mut g = net.zeros_like();
        g.heads[0].value.b[0] = 1.0;
        let mut opt = Adam::new(&net, 0.1, None);
        opt.step(&mut net, &g).unwrap();
        let after = net.to_flat();
        let k = before.len() - 1;
        assert!((before[k] - after[k] - 0.1).abs() < 1e-6);
    }
}
