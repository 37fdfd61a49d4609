use nalgebra::DVector;

use super::{GrbmParams, LatentState, LogPartition, SpeakerData};
use crate::numeric::{sigmoid, softplus};
use crate::{Error, Result};

impl GrbmParams {
    /// Energy of a single visible vector with hidden factors `s` and `c`.
    pub fn energy(&self, x: &DVector<f64>, s: &DVector<f64>, c: &DVector<f64>) -> Result<f64> {
        self.check_visible(x, "energy")?;
        self.check_hidden(s, c)?;
        let prec = self.precision();
        let centered = x - &self.visible_bias;
        let quad = 0.5 * centered.component_mul(&centered).dot(&prec);
        let mean_shift = &self.speaker_loading * s + &self.channel_loading * c;
        let coupling = x.component_mul(&prec).dot(&mean_shift);
        Ok(quad - self.speaker_bias.dot(s) - self.channel_bias.dot(c) - coupling)
    }

    /// `E_N(X, s, C) = Σₙ E(xₙ, s, cₙ)`.
    pub fn energy_total(&self, data: &SpeakerData, latent: &LatentState) -> Result<f64> {
        if latent.channel.len() != data.len() {
            return Err(Error::DimensionMismatch {
                context: "channel factors per vector".into(),
                expected: data.len(),
                found: latent.channel.len(),
            });
        }
        data.vectors()
            .iter()
            .zip(&latent.channel)
            .map(|(x, c)| self.energy(x, &latent.speaker, c))
            .sum()
    }

    fn check_hidden(&self, s: &DVector<f64>, c: &DVector<f64>) -> Result<()> {
        if s.len() != self.dim_s() {
            return Err(Error::DimensionMismatch {
                context: "speaker factor".into(),
                expected: self.dim_s(),
                found: s.len(),
            });
        }
        if c.len() != self.dim_c() {
            return Err(Error::DimensionMismatch {
                context: "channel factor".into(),
                expected: self.dim_c(),
                found: c.len(),
            });
        }
        Ok(())
    }

    /// Pre-sigmoid speaker activation `N f + Fᵀ(x̄/σ²)` for a sum of `n`
    /// vectors.
    pub fn speaker_activation_from_sum(&self, sum: &DVector<f64>, n: usize) -> DVector<f64> {
        let scaled = sum.component_mul(&self.precision());
        self.speaker_loading.tr_mul(&scaled) + &self.speaker_bias * n as f64
    }

    pub fn speaker_activation(&self, data: &SpeakerData) -> Result<DVector<f64>> {
        self.check_visible(data.sum(), "speaker data")?;
        Ok(self.speaker_activation_from_sum(data.sum(), data.len()))
    }

    /// `P_N(s_j = 1 | X) = sigmoid(N f_j + (x̄/σ²)ᵀ F_{*j})`.
    pub fn posterior_speaker(&self, data: &SpeakerData) -> Result<DVector<f64>> {
        Ok(self.speaker_activation(data)?.map(sigmoid))
    }

    /// Pre-sigmoid channel activation `g + Gᵀ(x/σ²)`.
    pub fn channel_activation(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_visible(x, "channel posterior")?;
        let scaled = x.component_mul(&self.precision());
        Ok(self.channel_loading.tr_mul(&scaled) + &self.channel_bias)
    }

    /// `P(c_j = 1 | x) = sigmoid(g_j + (x/σ²)ᵀ G_{*j})`; depends on `x` alone.
    pub fn posterior_channel(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.channel_activation(x)?.map(sigmoid))
    }

    /// `log Σ_{s,C} exp(−E_N(X, s, C))`, the unnormalized log-marginal.
    pub fn log_free_energy(&self, data: &SpeakerData) -> Result<f64> {
        let prec = self.precision();
        let mut total = 0.0;
        for x in data.vectors() {
            self.check_visible(x, "speaker data")?;
            let d = x - &self.visible_bias;
            total -= 0.5 * d.component_mul(&d).dot(&prec);
            total += self.channel_activation(x)?.iter().map(|&a| softplus(a)).sum::<f64>();
        }
        total += self
            .speaker_activation(data)?
            .iter()
            .map(|&a| softplus(a))
            .sum::<f64>();
        Ok(total)
    }

    /// `log P_N(X)` given the log partition function of the same order.
    pub fn log_marginal(&self, data: &SpeakerData, log_z: &LogPartition) -> Result<f64> {
        check_order(data, log_z)?;
        Ok(self.log_free_energy(data)? - log_z.log_z)
    }

    /// `log P_N(X, s, C) = −E_N(X, s, C) − log Z_N`.
    pub fn log_joint(
        &self,
        data: &SpeakerData,
        latent: &LatentState,
        log_z: &LogPartition,
    ) -> Result<f64> {
        check_order(data, log_z)?;
        Ok(-self.energy_total(data, latent)? - log_z.log_z)
    }
}

fn check_order(data: &SpeakerData, log_z: &LogPartition) -> Result<()> {
    if log_z.n_order != data.len() {
        return Err(Error::DimensionMismatch {
            context: "partition function order".into(),
            expected: data.len(),
            found: log_z.n_order,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grbm::binary_config;
    use crate::numeric::logsumexp;
    use crate::testutil::{all_latent_states, random_params, random_vec};
    use rand::Rng;

    #[test]
    fn energy_trivial_cases() {
        let mut rng = crate::rng::seeded(1);
        let params = random_params(&mut rng, 3, 2, 2);
        let zero_s = DVector::zeros(2);
        let zero_c = DVector::zeros(2);
        let e = params.energy(&params.visible_bias, &zero_s, &zero_c).unwrap();
        assert_eq!(e, 0.0);

        let one_d = GrbmParams::zeros(1, 1, 1);
        let x = DVector::from_element(1, 2.0);
        for k in 0..4 {
            let s = binary_config(k & 1, 1);
            let c = binary_config(k >> 1, 1);
            assert_eq!(one_d.energy(&x, &s, &c).unwrap(), 2.0);
        }
    }

    #[test]
    fn energy_matches_termwise_sum() {
        let mut rng = crate::rng::seeded(2);
        for _ in 0..20 {
            let params = random_params(&mut rng, 3, 2, 2);
            let x = random_vec(&mut rng, 3);
            let s = binary_config(rng.random_range(0..4), 2);
            let c = binary_config(rng.random_range(0..4), 2);
            // independent scalar loop
            let mut e = 0.0;
            for i in 0..3 {
                let var = params.log_variance[i].exp();
                e += 0.5 * (x[i] - params.visible_bias[i]).powi(2) / var;
                let mut m = 0.0;
                for j in 0..2 {
                    m += params.speaker_loading[(i, j)] * s[j];
                    m += params.channel_loading[(i, j)] * c[j];
                }
                e -= x[i] / var * m;
            }
            for j in 0..2 {
                e -= params.speaker_bias[j] * s[j] + params.channel_bias[j] * c[j];
            }
            let got = params.energy(&x, &s, &c).unwrap();
            assert!((got - e).abs() < 1e-12, "{got} vs {e}");
        }
    }

    #[test]
    fn energy_total_composes() {
        let mut rng = crate::rng::seeded(3);
        let params = random_params(&mut rng, 3, 2, 2);
        let xs: Vec<_> = (0..3).map(|_| random_vec(&mut rng, 3)).collect();
        let data = SpeakerData::new(xs.clone()).unwrap();
        let latent = LatentState {
            speaker: binary_config(2, 2),
            channel: vec![binary_config(1, 2), binary_config(3, 2), binary_config(0, 2)],
        };
        let total = params.energy_total(&data, &latent).unwrap();
        let sum: f64 = xs
            .iter()
            .zip(&latent.channel)
            .map(|(x, c)| params.energy(x, &latent.speaker, c).unwrap())
            .sum();
        assert!((total - sum).abs() < 1e-12);

        let single = SpeakerData::new(vec![xs[0].clone()]).unwrap();
        let one = LatentState {
            speaker: latent.speaker.clone(),
            channel: vec![latent.channel[0].clone()],
        };
        assert_eq!(
            params.energy_total(&single, &one).unwrap(),
            params.energy(&xs[0], &one.speaker, &one.channel[0]).unwrap()
        );
        let twice = SpeakerData::new(vec![xs[0].clone(), xs[0].clone()]).unwrap();
        let two = LatentState {
            speaker: latent.speaker.clone(),
            channel: vec![latent.channel[0].clone(); 2],
        };
        assert_eq!(
            params.energy_total(&twice, &two).unwrap(),
            2.0 * params.energy(&xs[0], &one.speaker, &one.channel[0]).unwrap()
        );
        assert!(params.energy_total(&twice, &one).is_err());
    }

    #[test]
    fn posteriors_trivial() {
        let params = GrbmParams::zeros(2, 3, 2);
        let data = SpeakerData::new(vec![DVector::from_column_slice(&[1.0, -3.0])]).unwrap();
        assert!(params.posterior_speaker(&data).unwrap().iter().all(|&v| v == 0.5));
        assert!(params
            .posterior_channel(&data.vectors()[0])
            .unwrap()
            .iter()
            .all(|&v| v == 0.5));

        let mut saturated = params.clone();
        saturated.channel_bias[0] = 50.0;
        let pc = saturated.posterior_channel(&data.vectors()[0]).unwrap();
        assert!((1.0 - pc[0]).abs() < 1e-15);
    }

    #[test]
    fn repeated_vector_scales_activation() {
        let mut rng = crate::rng::seeded(4);
        let params = random_params(&mut rng, 3, 2, 1);
        let x = random_vec(&mut rng, 3);
        let n = 4;
        let data = SpeakerData::new(vec![x.clone(); n]).unwrap();
        let got = params.posterior_speaker(&data).unwrap();
        let prec = params.precision();
        for j in 0..2 {
            let a = n as f64 * params.speaker_bias[j]
                + (x.component_mul(&prec) * n as f64).dot(&params.speaker_loading.column(j));
            assert!((got[j] - sigmoid(a)).abs() < 1e-14);
        }
    }

    #[test]
    fn free_energy_matches_brute_force_sum() {
        let mut rng = crate::rng::seeded(5);
        let params = random_params(&mut rng, 2, 2, 1);
        let data = SpeakerData::new((0..2).map(|_| random_vec(&mut rng, 2)).collect()).unwrap();
        let mut terms = Vec::new();
        for ks in 0..4 {
            for kc in 0..4 {
                let latent = LatentState {
                    speaker: binary_config(ks, 2),
                    channel: vec![binary_config(kc & 1, 1), binary_config(kc >> 1, 1)],
                };
                terms.push(-params.energy_total(&data, &latent).unwrap());
            }
        }
        let brute = logsumexp(&terms);
        assert!((params.log_free_energy(&data).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn posteriors_match_joint_enumeration() {
        let mut rng = crate::rng::seeded(6);
        let params = random_params(&mut rng, 3, 2, 2);
        let data = SpeakerData::new((0..2).map(|_| random_vec(&mut rng, 3)).collect()).unwrap();
        let states: Vec<_> = all_latent_states(2, 2, 2).collect();
        let logw: Vec<f64> = states.iter().map(|l| -params.energy_total(&data, l).unwrap()).collect();
        let norm = logsumexp(&logw);
        let mut ps = DVector::zeros(2);
        let mut pc = DVector::zeros(2);
        for (l, w) in states.iter().zip(&logw) {
            let p = (w - norm).exp();
            ps += &l.speaker * p;
            pc += &l.channel[1] * p;
        }
        assert!((params.posterior_speaker(&data).unwrap() - ps).amax() < 1e-12);
        assert!((params.posterior_channel(&data.vectors()[1]).unwrap() - pc).amax() < 1e-12);
    }

    #[test]
    fn marginal_checks_order() {
        let params = GrbmParams::zeros(1, 1, 1);
        let data = SpeakerData::new(vec![DVector::zeros(1)]).unwrap();
        let wrong = LogPartition { n_order: 2, log_z: 0.0 };
        assert!(params.log_marginal(&data, &wrong).is_err());
    }
}
