//! Hamiltonian Monte Carlo with a diagonal mass matrix, dual-averaging step
//! size and a uniformly random number of leapfrog steps. Adaptation runs in
//! windows during burn-in and is frozen afterwards.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::model::SpatialModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmcSettings {
    pub draws: usize,
    pub burnin: usize,
    pub thin: usize,
    pub max_leapfrog: usize,
    pub target_accept: f64,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    /// Unconstrained positions of retained draws.
    pub positions: Vec<Vec<f64>>,
    pub step_size: f64,
    pub accept_rate: f64,
    pub divergences: usize,
}

struct DualAveraging {
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    t: f64,
    target: f64,
}

impl DualAveraging {
    fn new(eps: f64, target: f64) -> Self {
        Self {
            mu: (10.0 * eps).ln(),
            log_eps: eps.ln(),
            log_eps_bar: 0.0,
            h_bar: 0.0,
            t: 0.0,
            target,
        }
    }

    fn update(&mut self, accept: f64) -> f64 {
        const GAMMA: f64 = 0.05;
        const T0: f64 = 10.0;
        const KAPPA: f64 = 0.75;
        self.t += 1.0;
        let w = 1.0 / (self.t + T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept);
        self.log_eps = self.mu - self.t.sqrt() / GAMMA * self.h_bar;
        let eta = self.t.powf(-KAPPA);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
        self.log_eps.exp()
    }

    fn final_step(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Adaptation windows: a step-size-only opening buffer, doubling
/// mass-matrix windows, and a step-size-only closing buffer.
fn window_ends(burnin: usize) -> Vec<usize> {
    if burnin < 150 {
        return Vec::new();
    }
    let init = (0.15 * burnin as f64) as usize;
    let term = (0.1 * burnin as f64) as usize;
    let last = burnin - term;
    let mut ends = Vec::new();
    let mut size = 25;
    let mut start = init;
    while start < last {
        let mut end = start + size;
        if end + 2 * size > last {
            end = last;
        }
        ends.push(end);
        start = end;
        size *= 2;
    }
    ends
}

struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(d: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; d],
            m2: vec![0.0; d],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    /// Regularized variance estimate.
    fn variance(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|&s| {
                let var = s / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

struct State {
    q: Vec<f64>,
    grad: Vec<f64>,
    lp: f64,
}

struct Leapfrog<'a> {
    model: &'a mut SpatialModel,
    inv_mass: &'a [f64],
    p: Vec<f64>,
    q: Vec<f64>,
    g: Vec<f64>,
}

impl Leapfrog<'_> {
    /// Returns the log density at the end point, or `None` on a non-finite value.
    fn run(&mut self, eps: f64, steps: usize) -> Option<f64> {
        let mut lp = f64::NAN;
        for _ in 0..steps {
            for (p, g) in self.p.iter_mut().zip(&self.g) {
                *p += 0.5 * eps * g;
            }
            for ((q, p), m) in self.q.iter_mut().zip(&self.p).zip(self.inv_mass) {
                *q += eps * m * p;
            }
            lp = self.model.log_density_grad(&self.q, &mut self.g);
            if !lp.is_finite() {
                return None;
            }
            for (p, g) in self.p.iter_mut().zip(&self.g) {
                *p += 0.5 * eps * g;
            }
        }
        Some(lp)
    }
}

fn kinetic(p: &[f64], inv_mass: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_mass).map(|(p, m)| p * p * m).sum::<f64>()
}

fn draw_momentum(rng: &mut ChaCha8Rng, inv_mass: &[f64]) -> Vec<f64> {
    inv_mass
        .iter()
        .map(|&m| {
            let z: f64 = rng.sample(StandardNormal);
            z / m.sqrt()
        })
        .collect()
}

/// One HMC transition. Returns the acceptance probability and whether the
/// trajectory diverged.
fn transition(
    model: &mut SpatialModel,
    state: &mut State,
    inv_mass: &[f64],
    eps: f64,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, bool) {
    let p0 = draw_momentum(rng, inv_mass);
    let h0 = -state.lp + kinetic(&p0, inv_mass);
    let mut lf = Leapfrog {
        model,
        inv_mass,
        p: p0,
        q: state.q.clone(),
        g: state.grad.clone(),
    };
    let Some(lp1) = lf.run(eps, steps) else {
        let _: f64 = rng.random();
        return (0.0, true);
    };
    let h1 = -lp1 + kinetic(&lf.p, inv_mass);
    let dh = h1 - h0;
    let divergent = !dh.is_finite() || dh > 1000.0;
    let accept = if divergent { 0.0 } else { (-dh).exp().min(1.0) };
    let u: f64 = rng.random();
    if u < accept {
        state.q = lf.q;
        state.grad = lf.g;
        state.lp = lp1;
    }
    (accept, divergent)
}

fn initial_step_size(model: &mut SpatialModel, state: &State, inv_mass: &[f64], rng: &mut ChaCha8Rng) -> f64 {
    let mut eps: f64 = 0.1;
    let probe = |model: &mut SpatialModel, eps: f64, rng: &mut ChaCha8Rng| -> f64 {
        let p0 = draw_momentum(rng, inv_mass);
        let h0 = -state.lp + kinetic(&p0, inv_mass);
        let mut lf = Leapfrog {
            model,
            inv_mass,
            p: p0,
            q: state.q.clone(),
            g: state.grad.clone(),
        };
        match lf.run(eps, 1) {
            Some(lp) => {
                let dh = -lp + kinetic(&lf.p, inv_mass) - h0;
                if dh.is_finite() {
                    (-dh).min(0.0).exp()
                } else {
                    0.0
                }
            }
            None => 0.0,
        }
    };
    let a0 = probe(model, eps, rng);
    let up = a0 > 0.5;
    for _ in 0..50 {
        let a = probe(model, eps, rng);
        if up && a <= 0.5 {
            break;
        }
        if !up && a > 0.5 {
            break;
        }
        eps = if up { eps * 2.0 } else { eps * 0.5 };
    }
    eps
}

pub fn run_chain(
    model: &mut SpatialModel,
    init: Vec<f64>,
    settings: &HmcSettings,
    rng: &mut ChaCha8Rng,
) -> Result<ChainOutput, f64> {
    let d = init.len();
    let mut grad = vec![0.0; d];
    let lp = model.log_density_grad(&init, &mut grad);
    if !lp.is_finite() {
        return Err(lp);
    }
    let mut state = State { q: init, grad, lp };
    let mut inv_mass = vec![1.0; d];
    let mut eps = initial_step_size(model, &state, &inv_mass, rng);
    let mut da = DualAveraging::new(eps, settings.target_accept);
    let windows = window_ends(settings.burnin);
    let mut window_idx = 0;
    let window_start = (0.15 * settings.burnin as f64) as usize;
    let mut welford = Welford::new(d);

    let max_l = settings.max_leapfrog.max(1);
    for it in 0..settings.burnin {
        let steps = rng.random_range(1..=max_l);
        let (acc, _) = transition(model, &mut state, &inv_mass, eps, steps, rng);
        eps = da.update(acc);
        if window_idx < windows.len() && it >= window_start {
            welford.push(&state.q);
            if it + 1 == windows[window_idx] {
                inv_mass = welford.variance();
                welford = Welford::new(d);
                window_idx += 1;
                eps = initial_step_size(model, &state, &inv_mass, rng);
                da = DualAveraging::new(eps, settings.target_accept);
            }
        }
    }
    if settings.burnin > 0 {
        eps = da.final_step();
    }

    let thin = settings.thin.max(1);
    let mut positions = Vec::with_capacity(settings.draws);
    let mut accept_sum = 0.0;
    let mut divergences = 0;
    let mut it = 0;
    while positions.len() < settings.draws {
        let steps = rng.random_range(1..=max_l);
        let (acc, div) = transition(model, &mut state, &inv_mass, eps, steps, rng);
        accept_sum += acc;
        divergences += usize::from(div);
        it += 1;
        if it % thin == 0 {
            positions.push(state.q.clone());
        }
    }
    Ok(ChainOutput {
        positions,
        step_size: eps,
        accept_rate: accept_sum / it.max(1) as f64,
        divergences,
    })
}
