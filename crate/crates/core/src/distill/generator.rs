use crate::{Error, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneratorKind {
    /// `x0 = theta`.
    Identity,
    /// `x0 = A u + b` with `theta = [a00, a01, a10, a11, b0, b1]` and a fixed
    /// input `u`.
    Affine { input: Vec2 },
}

/// A differentiable map from parameters to a clean 2D point.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub kind: GeneratorKind,
    pub theta: Vec<f64>,
}

impl Generator {
    pub fn identity(x0: Vec2) -> Self {
        Self {
            kind: GeneratorKind::Identity,
            theta: x0.to_array().to_vec(),
        }
    }

    pub fn affine(matrix: [[f64; 2]; 2], offset: Vec2, input: Vec2) -> Self {
        Self {
            kind: GeneratorKind::Affine { input },
            theta: vec![
                matrix[0][0],
                matrix[0][1],
                matrix[1][0],
                matrix[1][1],
                offset.x,
                offset.y,
            ],
        }
    }

    pub fn param_len(&self) -> usize {
        match self.kind {
            GeneratorKind::Identity => 2,
            GeneratorKind::Affine { .. } => 6,
        }
    }

    pub fn render(&self) -> Result<Vec2> {
        if self.theta.len() != self.param_len() {
            return Err(Error::InvalidConfig(format!(
                "{:?} generator expects {} parameters, got {}",
                self.kind,
                self.param_len(),
                self.theta.len()
            )));
        }
        let th = &self.theta;
        let x = match self.kind {
            GeneratorKind::Identity => Vec2::new(th[0], th[1]),
            GeneratorKind::Affine { input: u } => Vec2::new(
                th[0] * u.x + th[1] * u.y + th[4],
                th[2] * u.x + th[3] * u.y + th[5],
            ),
        };
        if !x.is_finite() {
            return Err(Error::NonFinite("generator output".into()));
        }
        Ok(x)
    }

    /// Contracts an x0-space cotangent with `d x0 / d theta`.
    pub fn pullback(&self, cotangent: Vec2) -> Vec<f64> {
        let v = cotangent;
        match self.kind {
            GeneratorKind::Identity => vec![v.x, v.y],
            GeneratorKind::Affine { input: u } => {
                vec![v.x * u.x, v.x * u.y, v.y * u.x, v.y * u.y, v.x, v.y]
            }
        }
    }
}
