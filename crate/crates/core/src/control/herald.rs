use rand::Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::rng::{stream, Domain};

/// Low-gain multiplexed source: M modes, each holding a thermal number of
/// excitations with mean ζ per shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeraldConfig {
    pub modes: u64,
    pub zeta: f64,
    pub eta_retrieve: f64,
    pub eta_detect: f64,
    /// s
    pub switch_latency: f64,
    /// s
    pub memory_lifetime: f64,
}

impl Default for HeraldConfig {
    fn default() -> Self {
        Self {
            modes: 20,
            zeta: 0.01,
            eta_retrieve: 1.0,
            eta_detect: 1.0,
            switch_latency: 1e-8,
            memory_lifetime: 1e-6,
        }
    }
}

/// ζ for a given P(n ≥ 1) = p.
pub fn zeta_from_p(p: f64) -> f64 {
    p / (1.0 - p)
}

impl HeraldConfig {
    /// P(n ≥ 1) = ζ/(1+ζ).
    pub fn p(&self) -> f64 {
        self.zeta / (1.0 + self.zeta)
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |m: String| Err(ControlError::InvalidArgument(m));
        if self.modes < 1 {
            return bad("herald modes must be >= 1".into());
        }
        if !(self.zeta.is_finite() && self.zeta >= 0.0) {
            return bad(format!("zeta = {} must be finite and >= 0", self.zeta));
        }
        for (name, v) in [
            ("eta_retrieve", self.eta_retrieve),
            ("eta_detect", self.eta_detect),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} must lie in [0, 1]"));
            }
        }
        for (name, v) in [
            ("switch_latency", self.switch_latency),
            ("memory_lifetime", self.memory_lifetime),
        ] {
            if !(v >= 0.0) {
                return bad(format!("{name} = {v} must be >= 0"));
            }
        }
        Ok(())
    }

    fn gated(&self) -> bool {
        self.switch_latency > self.memory_lifetime
    }

    // Σ_n (1−q) qⁿ xⁿ
    fn pgf(&self, x: f64) -> f64 {
        let q = self.p();
        (1.0 - q) / (1.0 - q * x)
    }

    /// Probability that one mode heralds.
    pub fn mode_herald_probability(&self) -> f64 {
        1.0 - self.pgf(1.0 - self.eta_detect)
    }

    /// Probability that at least one of the M modes heralds.
    pub fn herald_probability(&self) -> f64 {
        1.0 - (1.0 - self.mode_herald_probability()).powf(self.modes as f64)
    }

    /// P(routed mode holds ≥ 2 excitations | herald).
    pub fn multi_given_herald(&self) -> f64 {
        let h = self.mode_herald_probability();
        if h == 0.0 {
            return 0.0;
        }
        let q = self.p();
        (h - (1.0 - q) * q * self.eta_detect) / h
    }

    /// P(herald and the routed mode releases ≥ 1 photon) per shot.
    pub fn success_probability(&self) -> f64 {
        let h = self.mode_herald_probability();
        if self.gated() || h == 0.0 {
            return 0.0;
        }
        let (d, r) = (1.0 - self.eta_detect, 1.0 - self.eta_retrieve);
        let joint = 1.0 - self.pgf(d) - self.pgf(r) + self.pgf(d * r);
        self.herald_probability() * joint / h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeraldStats {
    pub shots: u64,
    pub heralds: u64,
    pub routed_successes: u64,
    pub multi_excitation_events: u64,
    pub herald_prob: f64,
    pub success_prob: f64,
    pub multi_given_herald: f64,
}

#[derive(Default, Clone, Copy)]
struct Counts {
    heralds: u64,
    successes: u64,
    multi: u64,
}

struct Samplers {
    skip: Option<Geometric>,
    extra: Geometric,
}

impl Samplers {
    fn new(q: f64) -> Result<Self, ControlError> {
        let err = |e| ControlError::InvalidArgument(format!("excitation law: {e}"));
        Ok(Self {
            skip: if q > 0.0 {
                Some(Geometric::new(q).map_err(err)?)
            } else {
                None
            },
            extra: Geometric::new(1.0 - q).map_err(err)?,
        })
    }
}

fn binomial_any<R: Rng>(n: u64, eta: f64, rng: &mut R) -> bool {
    (0..n).any(|_| rng.random::<f64>() < eta)
}

fn one_shot<R: Rng>(cfg: &HeraldConfig, s: &Samplers, rng: &mut R) -> Counts {
    let Some(skip) = &s.skip else {
        return Counts::default();
    };
    let mut mode = 0u64;
    loop {
        // jump straight to the next excited mode
        mode = mode.saturating_add(skip.sample(rng));
        if mode >= cfg.modes {
            return Counts::default();
        }
        let n = 1 + s.extra.sample(rng);
        if binomial_any(n, cfg.eta_detect, rng) {
            let retrieved = binomial_any(n, cfg.eta_retrieve, rng);
            return Counts {
                heralds: 1,
                successes: u64::from(retrieved && !cfg.gated()),
                multi: u64::from(n >= 2),
            };
        }
        mode += 1;
    }
}

/// Monte Carlo of the herald-and-route protocol. Shot `i` draws from its own
/// stream, so the result does not depend on thread scheduling.
pub fn run_herald_protocol(
    cfg: &HeraldConfig,
    shots: u64,
    seed: u64,
) -> Result<HeraldStats, ControlError> {
    cfg.validate()?;
    if shots == 0 {
        return Err(ControlError::InvalidArgument("shots must be >= 1".into()));
    }
    let samplers = Samplers::new(cfg.p())?;
    let c = (0..shots)
        .into_par_iter()
        .map(|i| one_shot(cfg, &samplers, &mut stream(seed, Domain::Herald, i)))
        .reduce(Counts::default, |a, b| Counts {
            heralds: a.heralds + b.heralds,
            successes: a.successes + b.successes,
            multi: a.multi + b.multi,
        });
    Ok(HeraldStats {
        shots,
        heralds: c.heralds,
        routed_successes: c.successes,
        multi_excitation_events: c.multi,
        herald_prob: c.heralds as f64 / shots as f64,
        success_prob: c.successes as f64 / shots as f64,
        multi_given_herald: if c.heralds > 0 {
            c.multi as f64 / c.heralds as f64
        } else {
            0.0
        },
    })
}
