//! Synthetic patient cohorts and their corrupted, agent-visible view.

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};

use crate::config::{Attribute, Distribution, PatientGeneratorConfig};
use crate::rng::StreamRng;
use crate::scalar::{clamp, Scalar};

/// True clinical attributes of one patient. `infected` is latent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatientProfile<T> {
    pub pi: T,
    pub phi_b: T,
    pub omega_b: T,
    pub phi_f: T,
    pub omega_f: T,
    pub rho: T,
    pub infected: bool,
}

impl<T: Scalar> PatientProfile<T> {
    pub fn attribute(&self, attribute: Attribute) -> T {
        match attribute {
            Attribute::Pi => self.pi,
            Attribute::PhiB => self.phi_b,
            Attribute::OmegaB => self.omega_b,
            Attribute::PhiF => self.phi_f,
            Attribute::OmegaF => self.omega_f,
            Attribute::Rho => self.rho,
        }
    }
}

/// What the agent sees of one patient: π̂ always, other attributes only when
/// configured observable.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedPatient<T> {
    pub pi_hat: T,
    /// Extra observed attributes in layout order.
    pub extra: Vec<(Attribute, T)>,
}

impl<T: Scalar> ObservedPatient<T> {
    pub fn get(&self, attribute: Attribute) -> Option<T> {
        if attribute == Attribute::Pi {
            return Some(self.pi_hat);
        }
        self.extra.iter().find(|(a, _)| *a == attribute).map(|(_, v)| *v)
    }
}

fn sample(dist: &Distribution, rng: &mut StreamRng) -> f64 {
    match *dist {
        Distribution::Constant { value } => value,
        Distribution::Uniform { lo, hi } => {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            }
        }
        Distribution::TruncatedNormal { mean, sd, lo, hi } => {
            if lo == hi {
                return lo;
            }
            // Rejection sampling; falls back to a uniform draw when the
            // truncation window sits far in a tail.
            for _ in 0..1000 {
                let z: f64 = StandardNormal.sample(rng);
                let x = mean + sd * z;
                if (lo..=hi).contains(&x) {
                    return x;
                }
            }
            rng.random_range(lo..=hi)
        }
    }
}

/// Produces a fresh cohort each step. Holds two streams: one for true
/// attributes and infection status, one for observation noise, so changing
/// observation noise never perturbs the true population.
#[derive(Debug, Clone)]
pub struct PatientGenerator {
    config: PatientGeneratorConfig,
    extra: Vec<Attribute>,
    truth: StreamRng,
    noise: StreamRng,
}

impl PatientGenerator {
    pub fn new(config: PatientGeneratorConfig, truth: StreamRng, noise: StreamRng) -> Self {
        let extra = config.extra_observed();
        PatientGenerator {
            config,
            extra,
            truth,
            noise,
        }
    }

    pub fn extra_observed(&self) -> &[Attribute] {
        &self.extra
    }

    fn observe<T: Scalar>(&mut self, attribute: Attribute, value: T) -> T {
        let spec = self.config.spec(attribute);
        let mut shifted = value + T::lit(spec.bias);
        if spec.noise_sd > 0.0 {
            let z: f64 = StandardNormal.sample(&mut self.noise);
            shifted = shifted + T::lit(spec.noise_sd * z);
        }
        let (lo, hi) = attribute.legal_range();
        clamp(shifted, T::lit(lo), T::lit(hi).min(T::max_value()))
    }

    pub fn generate<T: Scalar>(&mut self, n: usize) -> Vec<(PatientProfile<T>, ObservedPatient<T>)> {
        (0..n).map(|_| self.one()).collect()
    }

    fn one<T: Scalar>(&mut self) -> (PatientProfile<T>, ObservedPatient<T>) {
        let mut draw = |attr: Attribute| -> T {
            let (lo, hi) = attr.legal_range();
            let x = sample(&self.config.spec(attr).distribution, &mut self.truth).clamp(lo, hi);
            T::lit(x)
        };
        let pi = draw(Attribute::Pi);
        let phi_b = draw(Attribute::PhiB);
        let omega_b = draw(Attribute::OmegaB);
        let phi_f = draw(Attribute::PhiF);
        let omega_f = draw(Attribute::OmegaF);
        let rho = draw(Attribute::Rho);
        let infected = self.truth.random::<f64>() < pi.as_f64();
        let profile = PatientProfile {
            pi,
            phi_b,
            omega_b,
            phi_f,
            omega_f,
            rho,
            infected,
        };
        let pi_hat = self.observe(Attribute::Pi, pi);
        let extra = self
            .extra
            .clone()
            .into_iter()
            .map(|a| (a, self.observe(a, profile.attribute(a))))
            .collect();
        (profile, ObservedPatient { pi_hat, extra })
    }
}
