use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ranges, DegradationKind, DegradationStep, Severity, StepParams};
use crate::error::{Error, Result};
use crate::labels::LabelVector;

/// Ordered degradation sequence for one output image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub steps: Vec<DegradationStep>,
    pub seed: u64,
    pub source_id: String,
}

impl Recipe {
    pub fn new(
        steps: Vec<DegradationStep>,
        seed: u64,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        let r = Self {
            steps,
            seed,
            source_id: source_id.into(),
        };
        r.validate()?;
        Ok(r)
    }

    /// 1..=4 steps, distinct kinds, every step in its parameter domain.
    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() || self.steps.len() > 4 {
            return Err(Error::InvalidRecipe(format!(
                "expected 1..=4 steps, got {}",
                self.steps.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for s in &self.steps {
            if !seen.insert(s.kind()) {
                return Err(Error::InvalidRecipe(format!(
                    "duplicate kind {}",
                    s.kind().name()
                )));
            }
            s.validate()?;
        }
        Ok(())
    }

    pub fn kinds(&self) -> Vec<DegradationKind> {
        self.steps.iter().map(|s| s.kind()).collect()
    }

    /// Combined severity `1 - prod(1 - s_i)` over the steps.
    pub fn strength(&self) -> f64 {
        1.0 - self
            .steps
            .iter()
            .map(|s| 1.0 - s.strength())
            .product::<f64>()
    }

    /// Same steps in reverse order.
    pub fn reversed(&self) -> Self {
        let mut r = self.clone();
        r.steps.reverse();
        r
    }
}

/// Ground-truth label: one bit per step, noise bit chosen by severity.
pub fn recipe_to_label(recipe: &Recipe) -> LabelVector {
    let mut v = LabelVector::empty();
    for s in &recipe.steps {
        v.set(s.label_bit());
    }
    v
}

/// Draws parameters uniformly from the generator ranges.
pub fn sample_step<R: Rng + ?Sized>(kind: DegradationKind, rng: &mut R) -> DegradationStep {
    use ranges::*;
    let u = |rng: &mut R, r: (f32, f32)| rng.gen_range(r.0..r.1);
    match kind {
        DegradationKind::Noise => {
            let sev = [Severity::Low, Severity::Mid, Severity::High][rng.gen_range(0..3)];
            DegradationStep::noise(sev)
        }
        DegradationKind::MotionBlur => DegradationStep::new(StepParams::MotionBlur {
            length: u(rng, MOTION_LENGTH),
            angle: u(rng, MOTION_ANGLE),
        }),
        DegradationKind::DefocusBlur => DegradationStep::new(StepParams::DefocusBlur {
            radius: u(rng, DEFOCUS_RADIUS),
        }),
        DegradationKind::Jpeg => DegradationStep::new(StepParams::Jpeg {
            quality: rng.gen_range(JPEG_QUALITY.0..=JPEG_QUALITY.1),
        }),
        DegradationKind::LowLight => DegradationStep::new(StepParams::LowLight {
            gamma: u(rng, LOWLIGHT_GAMMA),
            gain: u(rng, LOWLIGHT_GAIN),
        }),
        DegradationKind::LowRes => DegradationStep::new(StepParams::LowRes {
            factor: *LOWRES_FACTORS.choose(rng).expect("nonempty"),
        }),
        DegradationKind::Haze => DegradationStep::new(StepParams::Haze {
            t: u(rng, HAZE_T),
            airlight: [
                u(rng, HAZE_AIRLIGHT),
                u(rng, HAZE_AIRLIGHT),
                u(rng, HAZE_AIRLIGHT),
            ],
        }),
        DegradationKind::Rain => DegradationStep::new(StepParams::Rain {
            angle: u(rng, RAIN_ANGLE),
            length: u(rng, RAIN_LENGTH),
            density: u(rng, RAIN_DENSITY),
            beta: u(rng, RAIN_BETA),
        }),
    }
}

/// Uniform step count in 1..=4, kinds without replacement in random order,
/// parameters uniform in range.
pub fn sample_recipe<R: Rng + ?Sized>(rng: &mut R, source_id: &str) -> Recipe {
    let count = rng.gen_range(1..=4);
    sample_recipe_with_count(rng, source_id, count)
}

pub fn sample_recipe_with_count<R: Rng + ?Sized>(
    rng: &mut R,
    source_id: &str,
    count: usize,
) -> Recipe {
    let mut kinds = DegradationKind::ALL.to_vec();
    kinds.shuffle(rng);
    let steps = kinds[..count]
        .iter()
        .map(|&k| sample_step(k, rng))
        .collect();
    Recipe {
        steps,
        seed: rng.gen(),
        source_id: source_id.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::LabelBit;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_kind_labels() {
        let jp = Recipe::new(
            vec![DegradationStep::new(StepParams::Jpeg { quality: 20 })],
            0,
            "x",
        )
        .unwrap();
        let l = recipe_to_label(&jp);
        assert_eq!(l.popcount(), 1);
        assert!(l.get(LabelBit::Jpeg));

        let nl = Recipe::new(vec![DegradationStep::noise(Severity::Low)], 0, "x").unwrap();
        let l = recipe_to_label(&nl);
        assert!(l.get(LabelBit::NoiseLow) && l.popcount() == 1);

        let two = Recipe::new(
            vec![
                DegradationStep::noise(Severity::High),
                DegradationStep::new(StepParams::Rain {
                    angle: 90.0,
                    length: 20.0,
                    density: 0.005,
                    beta: 0.7,
                }),
            ],
            0,
            "x",
        )
        .unwrap();
        let l = recipe_to_label(&two);
        assert!(l.get(LabelBit::NoiseHigh) && l.get(LabelBit::Rain) && l.popcount() == 2);
    }

    #[test]
    fn invalid_recipes() {
        assert!(Recipe::new(vec![], 0, "x").is_err());
        let dup = vec![
            DegradationStep::noise(Severity::Low),
            DegradationStep::noise(Severity::High),
        ];
        assert!(Recipe::new(dup, 0, "x").is_err());
        let five: Vec<_> = DegradationKind::ALL[..5]
            .iter()
            .map(|&k| sample_step(k, &mut ChaCha8Rng::seed_from_u64(1)))
            .collect();
        assert!(Recipe::new(five, 0, "x").is_err());
    }

    #[test]
    fn sampled_recipes_are_valid_and_labels_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..1000 {
            let r = sample_recipe(&mut rng, &format!("s{i}"));
            r.validate().unwrap();
            let l = recipe_to_label(&r);
            assert_eq!(l.popcount(), r.steps.len());
        }
    }

    #[test]
    fn sampled_params_within_generator_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            for k in DegradationKind::ALL {
                match sample_step(k, &mut rng).params {
                    StepParams::MotionBlur { length, angle } => {
                        assert!((9.0..=21.0).contains(&length) && (0.0..180.0).contains(&angle))
                    }
                    StepParams::DefocusBlur { radius } => assert!((2.0..=6.0).contains(&radius)),
                    StepParams::Jpeg { quality } => assert!((10..=40).contains(&quality)),
                    StepParams::Haze { t, airlight } => {
                        assert!((0.4..=0.75).contains(&t));
                        assert!(airlight.iter().all(|a| (0.8..=1.0).contains(a)));
                    }
                    StepParams::Rain { angle, .. } => assert!((60.0..=120.0).contains(&angle)),
                    _ => {}
                }
            }
        }
    }
}
