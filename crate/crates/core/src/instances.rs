//! Bundled problem instances and a seeded random instance generator.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::model::{Demographic, ObjectiveSpec, PlanInput};

/// Four demographics with `alpha = q = (0.4, 0.3, 0.2, 0.1)` and
/// `phi = (1, 2, 4, 8)`; small enough to check every solver by hand.
pub fn i4(k: usize, objective: ObjectiveSpec) -> PlanInput {
    let demographics = vec![
        Demographic::new("d1", 0.4, 0.4, 1.0).with_label("first"),
        Demographic::new("d2", 0.3, 0.3, 2.0).with_label("second"),
        Demographic::new("d3", 0.2, 0.2, 4.0).with_label("third"),
        Demographic::new("d4", 0.1, 0.1, 8.0).with_label("fourth"),
    ];
    PlanInput::new(demographics, k, 100.0, objective)
}

/// A single demographic holding the whole population.
pub fn single(phi: f64) -> PlanInput {
    PlanInput::new(
        vec![Demographic::new("only", 1.0, 1.0, phi)],
        1,
        100.0,
        ObjectiveSpec::Step { gamma: 1.0 },
    )
}

const TWELVE: [(&str, &str, f64, f64, f64); 12] = [
    ("aa-young-f", "African American / 18-44 / female", 0.097785, 22.295, 0.016),
    ("aa-young-m", "African American / 18-44 / male", 0.086715, 19.771, 0.009),
    ("aa-mid-f", "African American / 45-64 / female", 0.071709, 20.437, 0.021),
    ("aa-mid-m", "African American / 45-64 / male", 0.063591, 18.123, 0.013),
    ("aa-old-f", "African American / 65+ / female", 0.047806, 16.35, 0.026),
    ("aa-old-m", "African American / 65+ / male", 0.042394, 14.499, 0.017),
    ("ot-young-f", "Other / 18-44 / female", 0.140715, 33.772, 0.09),
    ("ot-young-m", "Other / 18-44 / male", 0.124785, 29.948, 0.05),
    ("ot-mid-f", "Other / 45-64 / female", 0.103191, 30.957, 0.12),
    ("ot-mid-m", "Other / 45-64 / male", 0.091509, 27.453, 0.08),
    ("ot-old-f", "Other / 65+ / female", 0.068794, 24.766, 0.15),
    ("ot-old-m", "Other / 65+ / male", 0.061006, 21.962, 0.11),
];

/// Synthetic race x age x gender population (12 cells). `q` plays the role of
/// voter-list sizes in thousands and `phi` of conversions per dollar. The same
/// data ships as `data/synthetic12.csv`.
pub fn synthetic_twelve(k: usize, objective: ObjectiveSpec) -> PlanInput {
    let demographics = TWELVE
        .iter()
        .map(|&(id, label, alpha, q, phi)| Demographic::new(id, alpha, q, phi).with_label(label))
        .collect();
    PlanInput::new(demographics, k, 1000.0, objective)
}

/// Ranges for [`random_instance`].
#[derive(Debug, Clone, Copy)]
pub struct RandomSpec {
    pub q_range: (f64, f64),
    pub phi_range: (f64, f64),
    /// Concentration of the symmetric Dirichlet draw for `alpha`.
    pub concentration: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            q_range: (0.1, 1.0),
            phi_range: (0.5, 10.0),
            concentration: 1.0,
        }
    }
}

/// Random instance with `alpha` from a symmetric Dirichlet and uniform `q`, `phi`.
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    k: usize,
    objective: ObjectiveSpec,
    spec: &RandomSpec,
) -> PlanInput {
    let gamma = Gamma::new(spec.concentration, 1.0).expect("positive concentration");
    let raw: Vec<f64> = (0..n)
        .map(|_| gamma.sample(rng).max(1e-6))
        .collect();
    let total: f64 = raw.iter().sum();
    let demographics = raw
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let q = rng.random_range(spec.q_range.0..=spec.q_range.1);
            let phi = rng.random_range(spec.phi_range.0..=spec.phi_range.1);
            Demographic::new(format!("g{i:02}"), a / total, q, phi)
        })
        .collect();
    PlanInput::new(demographics, k, 100.0, objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_demographics;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bundled_instances_validate() {
        i4(2, ObjectiveSpec::Tvd).validate().unwrap();
        synthetic_twelve(4, ObjectiveSpec::Tvd).validate().unwrap();
        single(2.0).validate().unwrap();
    }

    #[test]
    fn random_instances_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..10 {
            let input = random_instance(&mut rng, n, 1, ObjectiveSpec::Tvd, &RandomSpec::default());
            validate_demographics(&input.demographics).unwrap();
        }
    }
}
