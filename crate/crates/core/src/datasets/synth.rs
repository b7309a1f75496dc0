use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{CausalDataset, ColumnKind, PotentialOutcomes, SynthLatents};
use crate::diffcore::sigmoid;
use crate::Tensor;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

/// Draws `n` units from the TVAESynth structural model.
///
/// Latents `z_o, z_c, z_t, z_y ~ N(0, 1)`; eight covariates of which `x1`
/// and `x4` are binary; `t ~ Bern(σ(0.2 z_c + 0.8 z_t + 0.1 U_t))` with
/// `U_t ~ Bern(0.5)`; `y = 0.2 z_c + 0.5 z_y t + 0.2 t + 0.1 U_y`.
/// The second argument of each Gaussian covariate is its standard deviation.
pub fn generate_tvaesynth(n: usize, seed: u64) -> CausalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = 8;
    let mut x = Vec::with_capacity(n * m);
    let (mut t, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut mu0, mut mu1) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut lat = SynthLatents {
        z_o: Vec::with_capacity(n),
        z_c: Vec::with_capacity(n),
        z_t: Vec::with_capacity(n),
        z_y: Vec::with_capacity(n),
    };

    for _ in 0..n {
        let z_o = normal(&mut rng);
        let z_c = normal(&mut rng);
        let z_t = normal(&mut rng);
        let z_y = normal(&mut rng);
        let u_y = normal(&mut rng);
        let u_x1 = bernoulli(&mut rng, 0.5);
        let u_x4 = bernoulli(&mut rng, 0.5);
        let u_t = bernoulli(&mut rng, 0.5);
        let u: [f64; 6] = std::array::from_fn(|_| normal(&mut rng));

        let x1 = bernoulli(&mut rng, sigmoid(z_t + 0.1 * (u_x1 - 0.5)));
        let x2 = 0.4 * z_o + 0.3 * z_c + 0.5 * z_y + 0.1 * u[0] + 0.2 * normal(&mut rng);
        let x3 = 0.2 * z_o + 0.2 * z_c + 1.2 * z_t + 0.1 * u[1] + 0.2 * normal(&mut rng);
        let x4 = bernoulli(&mut rng, sigmoid(0.6 * z_o + 0.1 * (u_x4 - 0.5)));
        let x5 = 0.6 * z_t + 0.1 * u[2] + 0.1 * normal(&mut rng);
        let x6 = 0.9 * z_y + 0.1 * u[3] + 0.1 * normal(&mut rng);
        let x7 = 0.5 * z_o + 0.1 * u[4] + 0.1 * normal(&mut rng);
        let x8 = 0.5 * z_o + 0.1 * u[5] + 0.1 * normal(&mut rng);
        x.extend_from_slice(&[x1, x2, x3, x4, x5, x6, x7, x8]);

        let ti = bernoulli(&mut rng, sigmoid(0.2 * z_c + 0.8 * z_t + 0.1 * u_t));
        t.push(ti);
        y.push(0.2 * z_c + 0.5 * z_y * ti + 0.2 * ti + 0.1 * u_y);
        mu0.push(0.2 * z_c);
        mu1.push(0.2 * z_c + 0.5 * z_y + 0.2);

        lat.z_o.push(z_o);
        lat.z_c.push(z_c);
        lat.z_t.push(z_t);
        lat.z_y.push(z_y);
    }

    let mut kinds = vec![ColumnKind::Continuous; m];
    kinds[0] = ColumnKind::Binary;
    kinds[3] = ColumnKind::Binary;
    CausalDataset {
        x: Tensor::new(vec![n, m], x).expect("n×m"),
        kinds,
        t,
        y,
        truth: Some(PotentialOutcomes { mu0, mu1 }),
        rct: None,
        latents: Some(lat),
    }
}

/// One-covariate linear model with true ATE 1:
/// `x ~ N(0,1)`, `t ~ Bern(σ(0.6x))`, `y = t + 0.5x + N(0, 0.1²)`.
pub fn generate_linear(n: usize, seed: u64) -> CausalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut x, mut t, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut mu0, mut mu1) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let xi = normal(&mut rng);
        let ti = bernoulli(&mut rng, sigmoid(0.6 * xi));
        let noise = 0.1 * normal(&mut rng);
        x.push(xi);
        t.push(ti);
        y.push(ti + 0.5 * xi + noise);
        mu0.push(0.5 * xi);
        mu1.push(1.0 + 0.5 * xi);
    }
    CausalDataset {
        x: Tensor::new(vec![n, 1], x).expect("n×1"),
        kinds: vec![ColumnKind::Continuous],
        t,
        y,
        truth: Some(PotentialOutcomes { mu0, mu1 }),
        rct: None,
        latents: None,
    }
}

/// Synthetic stand-in with the IHDP layout: 747 units, 25 covariates of
/// which the last 19 are binary, roughly 19% treated, and a nonlinear
/// heterogeneous response surface with known `mu0`/`mu1`.
pub fn generate_ihdp_shaped(seed: u64) -> CausalDataset {
    let n = 747;
    let (n_cont, n_bin) = (6, 19);
    let m = n_cont + n_bin;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * m);
    let (mut t, mut y, mut mu0, mut mu1) = (vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let cont: Vec<f64> = (0..n_cont).map(|_| normal(&mut rng)).collect();
        let bin: Vec<f64> = (0..n_bin)
            .map(|j| bernoulli(&mut rng, 0.2 + 0.6 * (j as f64 / n_bin as f64)))
            .collect();
        let score = 0.6 * cont[0] - 0.4 * cont[1] + 0.5 * bin[0] - 1.6;
        let ti = bernoulli(&mut rng, sigmoid(score));
        let base = cont[0] + 0.5 * cont[2] * cont[2] + bin[1] - 0.5 * bin[2];
        let m0 = base;
        let m1 = base + 4.0 + 0.8 * cont[1].exp().min(5.0) * 0.5;
        let noise = normal(&mut rng);
        x.extend(cont.iter().chain(&bin));
        t.push(ti);
        y.push(if ti == 1.0 { m1 } else { m0 } + noise);
        mu0.push(m0);
        mu1.push(m1);
    }
    let mut kinds = vec![ColumnKind::Continuous; n_cont];
    kinds.extend(std::iter::repeat_n(ColumnKind::Binary, n_bin));
    CausalDataset {
        x: Tensor::new(vec![n, m], x).expect("n×m"),
        kinds,
        t,
        y,
        truth: Some(PotentialOutcomes { mu0, mu1 }),
        rct: None,
        latents: None,
    }
}
