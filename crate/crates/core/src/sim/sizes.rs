use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Pareto};

pub const PARETO_FINITE_SHAPE: f64 = 2.001;
pub const PARETO_INFINITE_SHAPE: f64 = 1.98;

/// Unit-mean job-size distributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SizeDistribution {
    Exponential,
    Deterministic,
    /// Pareto with scale `(shape - 1) / shape`, so the mean is 1. Requires `shape > 1`.
    Pareto { shape: f64 },
}

impl SizeDistribution {
    pub fn pareto_finite() -> SizeDistribution {
        SizeDistribution::Pareto {
            shape: PARETO_FINITE_SHAPE,
        }
    }

    pub fn pareto_infinite() -> SizeDistribution {
        SizeDistribution::Pareto {
            shape: PARETO_INFINITE_SHAPE,
        }
    }

    /// Per-class sizes of the mixed workload: deterministic, exponential, Pareto-F, Pareto-INF,
    /// repeating for classes beyond the fourth.
    pub fn mixed(num_classes: usize) -> Vec<SizeDistribution> {
        let cycle = [
            SizeDistribution::Deterministic,
            SizeDistribution::Exponential,
            SizeDistribution::pareto_finite(),
            SizeDistribution::pareto_infinite(),
        ];
        (0..num_classes).map(|l| cycle[l % 4]).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SizeDistribution::Exponential => Exp1.sample(rng),
            SizeDistribution::Deterministic => 1.0,
            SizeDistribution::Pareto { shape } => {
                Pareto::new((shape - 1.0) / shape, shape).expect("valid Pareto parameters").sample(rng)
            }
        }
    }

    pub fn name(&self) -> String {
        match *self {
            SizeDistribution::Exponential => "exponential".into(),
            SizeDistribution::Deterministic => "deterministic".into(),
            SizeDistribution::Pareto { shape } if shape == PARETO_FINITE_SHAPE => "pareto-f".into(),
            SizeDistribution::Pareto { shape } if shape == PARETO_INFINITE_SHAPE => "pareto-inf".into(),
            SizeDistribution::Pareto { shape } => format!("pareto:{shape}"),
        }
    }
}

impl FromStr for SizeDistribution {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Ok(SizeDistribution::Exponential),
            "deterministic" | "det" => Ok(SizeDistribution::Deterministic),
            "pareto-f" => Ok(SizeDistribution::pareto_finite()),
            "pareto-inf" => Ok(SizeDistribution::pareto_infinite()),
            other => match other.strip_prefix("pareto:").map(str::parse::<f64>) {
                Some(Ok(shape)) if shape > 1.0 => Ok(SizeDistribution::Pareto { shape }),
                _ => Err(format!(
                    "unknown size distribution '{other}' (expected exponential, deterministic, pareto-f, pareto-inf or pareto:<shape>)"
                )),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean(d: SizeDistribution, n: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64
    }

    #[test]
    fn unit_means() {
        assert_eq!(mean(SizeDistribution::Deterministic, 10), 1.0);
        assert!((mean(SizeDistribution::Exponential, 200_000) - 1.0).abs() < 0.01);
        assert!((mean(SizeDistribution::Pareto { shape: 3.0 }, 200_000) - 1.0).abs() < 0.01);
    }

    #[test]
    fn pareto_support_starts_at_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = SizeDistribution::pareto_finite();
        let scale = (PARETO_FINITE_SHAPE - 1.0) / PARETO_FINITE_SHAPE;
        assert!((0..10_000).all(|_| d.sample(&mut rng) >= scale));
    }

    #[test]
    fn parse_names() {
        for d in [
            SizeDistribution::Exponential,
            SizeDistribution::Deterministic,
            SizeDistribution::pareto_finite(),
            SizeDistribution::pareto_infinite(),
        ] {
            assert_eq!(d.name().parse::<SizeDistribution>().unwrap(), d);
        }
        assert_eq!("pareto:2.5".parse::<SizeDistribution>().unwrap(), SizeDistribution::Pareto { shape: 2.5 });
        assert!("pareto:0.5".parse::<SizeDistribution>().is_err());
        let mixed = SizeDistribution::mixed(4);
        assert_eq!(mixed[0], SizeDistribution::Deterministic);
        assert_eq!(mixed[3], SizeDistribution::pareto_infinite());
    }
}
