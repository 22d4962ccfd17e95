use crate::{rng, Error, Label, Result, Vec2};

/// An isotropic Gaussian class component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianClass {
    pub mean: Vec2,
    pub std: f64,
}

/// Parameters of the two class-conditional marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassParams {
    pub classes: [GaussianClass; 2],
}

impl Default for ClassParams {
    fn default() -> Self {
        Self {
            classes: [
                GaussianClass {
                    mean: Vec2::new(-2.0, 0.0),
                    std: 0.5,
                },
                GaussianClass {
                    mean: Vec2::new(2.0, 0.0),
                    std: 0.5,
                },
            ],
        }
    }
}

impl ClassParams {
    /// Minimum half-separation in standard deviations: the Gaussian tail
    /// beyond 3.1 sigma is below 1e-3.
    pub const MIN_HALF_SEPARATION: f64 = 3.1;

    pub fn validate(&self) -> Result<()> {
        for (k, c) in self.classes.iter().enumerate() {
            if !(c.std > 0.0 && c.std.is_finite()) {
                return Err(Error::DegenerateCovariance(format!(
                    "class {} has std {}",
                    k + 1,
                    c.std
                )));
            }
            if !c.mean.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "class {} mean not finite",
                    k + 1
                )));
            }
        }
        let half = (self.classes[1].mean - self.classes[0].mean).norm() / 2.0;
        let worst = self.classes[0].std.max(self.classes[1].std);
        if half / worst < Self::MIN_HALF_SEPARATION {
            return Err(Error::InvalidConfig(format!(
                "classes overlap: half-separation {half} is under {} std",
                Self::MIN_HALF_SEPARATION
            )));
        }
        Ok(())
    }

    pub fn class(&self, y: Label) -> Result<&GaussianClass> {
        match y {
            Label::Class(c @ 1..=2) => Ok(&self.classes[c as usize - 1]),
            other => Err(Error::InvalidLabel(other.to_string())),
        }
    }

    /// Unit normal of the class boundary, pointing from class 1 to class 2.
    pub fn boundary_normal(&self) -> Vec2 {
        let d = self.classes[1].mean - self.classes[0].mean;
        d / d.norm()
    }

    /// Midpoint of the two means; the boundary passes through it.
    pub fn boundary_point(&self) -> Vec2 {
        (self.classes[0].mean + self.classes[1].mean) * 0.5
    }

    /// Signed distance to the perpendicular bisector of the class means;
    /// positive on the class-2 side.
    pub fn signed_distance(&self, x: Vec2) -> f64 {
        (x - self.boundary_point()).dot(self.boundary_normal())
    }

    /// Label of the nearer class mean.
    pub fn nearest_class(&self, x: Vec2) -> Label {
        if self.signed_distance(x) > 0.0 {
            Label::Class(2)
        } else {
            Label::Class(1)
        }
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, y: Label, rng: &mut R) -> Result<Vec2> {
        let c = self.class(y)?;
        Ok(c.mean + c.std * rng::normal2(rng))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoMarginalDataset {
    pub points: Vec<Vec2>,
    pub labels: Vec<Label>,
    pub class_params: ClassParams,
}

impl TwoMarginalDataset {
    /// `n / 2` points per class, class 1 first.
    pub fn sample(n: usize, class_params: &ClassParams, seed: u64) -> Result<Self> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "dataset size must be even and at least 2, got {n}"
            )));
        }
        class_params.validate()?;
        let mut rng = rng::seeded(seed);
        let mut points = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for c in 1..=2u32 {
            for _ in 0..n / 2 {
                points.push(class_params.sample(Label::Class(c), &mut rng)?);
                labels.push(Label::Class(c));
            }
        }
        Ok(Self {
            points,
            labels,
            class_params: class_params.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn class_points(&self, y: Label) -> impl Iterator<Item = Vec2> + '_ {
        self.points
            .iter()
            .zip(&self.labels)
            .filter(move |(_, l)| **l == y)
            .map(|(p, _)| *p)
    }
}
