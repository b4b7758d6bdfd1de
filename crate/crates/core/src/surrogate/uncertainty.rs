use crate::error::{Error, Result};

/// Inverse design matrix over last-layer gradient features.
///
/// Starts at `(1/λ)·I`; each observation adds `g gᵀ` to the design matrix via
/// a Sherman–Morrison update of the inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyState {
    dim: usize,
    lambda: f64,
    /// Row-major `dim × dim`.
    z_inv: Vec<f64>,
}

impl UncertaintyState {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("feature dim must be positive".into()));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        let mut z_inv = vec![0.0; dim * dim];
        for i in 0..dim {
            z_inv[i * dim + i] = 1.0 / lambda;
        }
        Ok(Self { dim, lambda, z_inv })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn z_inv(&self) -> &[f64] {
        &self.z_inv
    }

    fn check(&self, g: &[f64]) -> Result<()> {
        if g.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: g.len(),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient feature".into()));
        }
        Ok(())
    }

    fn apply(&self, g: &[f64]) -> Vec<f64> {
        self.z_inv
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(g).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// σ = sqrt(gᵀ Z⁻¹ g).
    pub fn uncertainty(&self, g: &[f64]) -> Result<f64> {
        self.check(g)?;
        let zg = self.apply(g);
        let q: f64 = g.iter().zip(&zg).map(|(a, b)| a * b).sum();
        Ok(q.max(0.0).sqrt())
    }

    /// Folds one observed feature vector into the design matrix.
    pub fn update(&mut self, g: &[f64]) -> Result<()> {
        self.check(g)?;
        if g.iter().all(|&v| v == 0.0) {
            return Ok(());
        }
        let d = self.dim;
        let u = self.apply(g);
        let denom = 1.0 + g.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
        if !(denom.is_finite() && denom > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let mut next = self.z_inv.clone();
        for i in 0..d {
            for j in 0..d {
                next[i * d + j] -= u[i] * u[j] / denom;
            }
        }
        for i in 0..d {
            for j in (i + 1)..d {
                let avg = 0.5 * (next[i * d + j] + next[j * d + i]);
                next[i * d + j] = avg;
                next[j * d + i] = avg;
            }
        }
        if !cholesky_ok(&next, d) {
            return Err(Error::NotPositiveDefinite);
        }
        self.z_inv = next;
        Ok(())
    }
}

/// True iff the symmetric matrix admits a Cholesky factorization.
fn cholesky_ok(a: &[f64], d: usize) -> bool {
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let mut diag = a[j * d + j];
        for p in 0..j {
            diag -= l[j * d + p] * l[j * d + p];
        }
        if !(diag.is_finite() && diag > 0.0) {
            return false;
        }
        let ljj = diag.sqrt();
        l[j * d + j] = ljj;
        for i in (j + 1)..d {
            let mut s = a[i * d + j];
            for p in 0..j {
                s -= l[i * d + p] * l[j * d + p];
            }
            l[i * d + j] = s / ljj;
        }
    }
    true
}

/// Update with `g`, returning the new state; the input state is untouched.
pub fn update_uncertainty(state: &UncertaintyState, g: &[f64]) -> Result<UncertaintyState> {
    let mut next = state.clone();
    next.update(g)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(d: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    #[test]
    fn fresh_state_unit_vector() {
        let s = UncertaintyState::new(4, 1.0).unwrap();
        assert_eq!(s.uncertainty(&unit(4, 2)).unwrap(), 1.0);
        assert_eq!(s.uncertainty(&[0.0; 4]).unwrap(), 0.0);
        let s = UncertaintyState::new(4, 4.0).unwrap();
        assert!((s.uncertainty(&unit(4, 0)).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn one_update_gives_sqrt_half() {
        let s = UncertaintyState::new(5, 1.0).unwrap();
        let g = unit(5, 1);
        let s2 = update_uncertainty(&s, &g).unwrap();
        assert!((s2.uncertainty(&g).unwrap() - 0.5f64.sqrt()).abs() < 1e-9);
        // Original state is untouched.
        assert_eq!(s.uncertainty(&g).unwrap(), 1.0);
    }

    #[test]
    fn orthogonal_updates_are_independent() {
        let mut s = UncertaintyState::new(3, 1.0).unwrap();
        s.update(&unit(3, 0)).unwrap();
        s.update(&unit(3, 2)).unwrap();
        assert!((s.uncertainty(&unit(3, 0)).unwrap() - 0.5f64.sqrt()).abs() < 1e-9);
        assert!((s.uncertainty(&unit(3, 2)).unwrap() - 0.5f64.sqrt()).abs() < 1e-9);
        assert_eq!(s.uncertainty(&unit(3, 1)).unwrap(), 1.0);
    }

    #[test]
    fn zero_update_is_noop() {
        let s = UncertaintyState::new(3, 2.0).unwrap();
        assert_eq!(update_uncertainty(&s, &[0.0; 3]).unwrap(), s);
    }

    #[test]
    fn bad_inputs() {
        assert!(UncertaintyState::new(0, 1.0).is_err());
        assert!(UncertaintyState::new(2, 0.0).is_err());
        let s = UncertaintyState::new(2, 1.0).unwrap();
        assert!(matches!(
            s.uncertainty(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(update_uncertainty(&s, &[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn observed_vector_strictly_shrinks() {
        let s = UncertaintyState::new(3, 1.0).unwrap();
        let g = vec![0.3, -1.2, 0.8];
        let before = s.uncertainty(&g).unwrap();
        let after = update_uncertainty(&s, &g).unwrap().uncertainty(&g).unwrap();
        assert!(after < before);
    }

    proptest! {
        #[test]
        fn sigma_non_increasing_under_updates(
            stream in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 6), 1..25),
            probe in proptest::collection::vec(-2.0f64..2.0, 6),
        ) {
            let mut s = UncertaintyState::new(6, 1.0).unwrap();
            let mut prev = s.uncertainty(&probe).unwrap();
            for g in &stream {
                s.update(g).unwrap();
                let now = s.uncertainty(&probe).unwrap();
                prop_assert!(now <= prev + 1e-9);
                prev = now;
            }
        }
    }
}
