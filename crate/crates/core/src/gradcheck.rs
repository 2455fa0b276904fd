//! Central-difference checks of the hand-written gradients, at 64-bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dmc::dmc_loss;
use crate::nn::Mlp;
use crate::ppo::{masked_softmax, ppo_losses, PpoBatch, PpoConfig};

/// `||a - n|| / (||a|| + ||n||)`, or 0 when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()) + norm(&mut numeric.iter().copied());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Gradient of `f` with respect to every parameter of `net`.
pub fn numeric_gradient(net: &Mlp<f64>, h: f64, f: impl Fn(&Mlp<f64>) -> f64) -> Vec<f64> {
    let mut probe = net.clone();
    (0..net.params().len())
        .map(|i| {
            let p = net.params()[i];
            probe.params_mut()[i] = p + h;
            let up = f(&probe);
            probe.params_mut()[i] = p - h;
            let down = f(&probe);
            probe.params_mut()[i] = p;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Random layer sizes: `input` wide, one to three hidden layers.
pub fn random_sizes<R: Rng>(rng: &mut R, input: usize, output: usize) -> Vec<usize> {
    let mut s = vec![input];
    for _ in 0..rng.gen_range(1..=3) {
        s.push(rng.gen_range(2..=6));
    }
    s.push(output);
    s
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u: f64 = rng.gen_range(1e-12..1.0);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// A random PPO batch for `net`, whose output must be `k + 1` wide.
/// Old log-probabilities are perturbed so that some ratios fall outside
/// the clip range.
pub fn random_ppo_batch<R: Rng>(rng: &mut R, net: &Mlp<f64>, k: usize, n: usize) -> PpoBatch<f64> {
    let dim = net.input_dim();
    let inputs: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let out = net.predict(&inputs, n).expect("sizes match");
    let mut b = PpoBatch {
        k,
        inputs,
        legal: Vec::new(),
        slots: Vec::new(),
        old_logprobs: Vec::new(),
        advantages: Vec::new(),
        returns: Vec::new(),
    };
    for i in 0..n {
        let n_legal = rng.gen_range(1..=k);
        let legal: Vec<bool> = (0..k).map(|j| j < n_legal).collect();
        let slot = rng.gen_range(0..n_legal);
        let p = masked_softmax(&out[i * (k + 1)..i * (k + 1) + k], &legal);
        b.legal.extend(legal);
        b.slots.push(slot);
        b.old_logprobs.push(p[slot].ln() + 0.3 * normal(rng));
        b.advantages.push(normal(rng));
        b.returns.push(normal(rng));
    }
    b
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    pub case: &'static str,
    pub nets: usize,
    /// Largest relative error over the nets.
    pub worst: f64,
}

/// Compares analytic and numeric gradients of the network output, the DMC
/// loss and the PPO loss on `nets` random small networks each.
pub fn selfcheck(nets: usize, seed: u64) -> Vec<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let (mut out_worst, mut dmc_worst, mut ppo_worst) = (0f64, 0f64, 0f64);
    for _ in 0..nets {
        let dim = rng.gen_range(2..=8);
        let rows = rng.gen_range(1..=6);

        let outputs = rng.gen_range(1..=3);
        let net = Mlp::<f64>::new(&random_sizes(&mut rng, dim, outputs), &mut rng);
        let x: Vec<f64> = (0..rows * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..rows * outputs).map(|_| normal(&mut rng)).collect();
        let cache = net.forward(&x, rows).expect("sizes match");
        let analytic = net.backward(&cache, &w).expect("sizes match");
        let numeric = numeric_gradient(&net, h, |m| {
            m.predict(&x, rows).expect("sizes match").iter().zip(&w).map(|(o, w)| o * w).sum()
        });
        out_worst = out_worst.max(relative_error(&analytic, &numeric));

        let net = Mlp::<f64>::new(&random_sizes(&mut rng, dim, 1), &mut rng);
        let targets: Vec<f64> = (0..rows).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (_, analytic) = dmc_loss(&net, &x, &targets).expect("non-empty batch");
        let numeric = numeric_gradient(&net, h, |m| dmc_loss(m, &x, &targets).expect("non-empty batch").0);
        dmc_worst = dmc_worst.max(relative_error(&analytic, &numeric));

        let k = rng.gen_range(1..=4);
        let net = Mlp::<f64>::new(&random_sizes(&mut rng, dim, k + 1), &mut rng);
        let batch = random_ppo_batch(&mut rng, &net, k, rows);
        let cfg = PpoConfig::default();
        let analytic = ppo_losses(&net, &batch, &cfg).expect("non-empty batch").grads;
        let numeric = numeric_gradient(&net, h, |m| ppo_losses(m, &batch, &cfg).expect("non-empty batch").total);
        ppo_worst = ppo_worst.max(relative_error(&analytic, &numeric));
    }
    vec![
        GradCheck { case: "network output", nets, worst: out_worst },
        GradCheck { case: "dmc loss", nets, worst: dmc_worst },
        GradCheck { case: "ppo loss", nets, worst: ppo_worst },
    ]
}
