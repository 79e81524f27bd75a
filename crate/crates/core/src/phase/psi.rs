//! Multi-indices and the quantum modification of Hermite polynomials,
//! obtained from the generating function `exp(uᵀx + ½ i uᵀθ̃u)`.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Result, WeylError};
use crate::phase::symplectic::TildeTheta;

pub const DEFAULT_MAX_ORDER: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn unit(n: usize, j: usize) -> Self {
        let mut a = vec![0; n];
        a[j] = 1;
        Self(a)
    }

    pub fn order(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&a| factorial(a)).product()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self − other` when `other ≤ self` componentwise.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(MultiIndex)
    }

    /// All multi-indices of length `n` and order at most `max_order`.
    pub fn all_up_to(n: usize, max_order: usize) -> Vec<MultiIndex> {
        let mut out = vec![MultiIndex::zero(n)];
        let mut frontier = vec![MultiIndex::zero(n)];
        for _ in 0..max_order {
            let mut next = Vec::new();
            for a in &frontier {
                let last = a.0.iter().rposition(|&v| v > 0).unwrap_or(0);
                for j in last..n {
                    let mut b = a.clone();
                    b.0[j] += 1;
                    next.push(b);
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }

    pub fn monomial(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&a, &xi)| xi.powi(a as i32))
            .product()
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// Polynomial in `n` real variables with complex coefficients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    pub n: usize,
    pub terms: BTreeMap<MultiIndex, Complex64>,
}

impl Polynomial {
    pub fn constant(n: usize, c: Complex64) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(MultiIndex::zero(n), c);
        Self { n, terms }
    }

    pub fn coefficient(&self, alpha: &MultiIndex) -> Complex64 {
        self.terms.get(alpha).copied().unwrap_or_default()
    }

    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .filter(|(_, c)| c.norm() > 0.0)
            .map(|(a, _)| a.order())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        self.terms.iter().map(|(a, c)| c * a.monomial(x)).sum()
    }

    fn add_term(&mut self, alpha: MultiIndex, c: Complex64) {
        *self.terms.entry(alpha).or_default() += c;
    }

    /// Product truncated to total degree `max_degree`.
    fn mul_truncated(&self, other: &Polynomial, max_degree: usize) -> Polynomial {
        let mut out = Polynomial {
            n: self.n,
            terms: BTreeMap::new(),
        };
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                if a.order() + b.order() <= max_degree {
                    out.add_term(a.add(b), ca * cb);
                }
            }
        }
        out
    }
}

/// Coefficients `c_γ` of `exp(½ i uᵀθ̃u) = Σ_γ c_γ u^γ` up to total degree `max_degree`.
fn phase_series(tt: &TildeTheta, max_degree: usize) -> Polynomial {
    let n = tt.n();
    let mut q = Polynomial {
        n,
        terms: BTreeMap::new(),
    };
    // ½ i uᵀθ̃u = i Σ_{j<k} θ̃_jk u_j u_k, since the diagonal is zero
    for j in 0..n {
        for k in (j + 1)..n {
            let t = tt.matrix[(j, k)];
            if t != 0.0 {
                let mut a = MultiIndex::zero(n);
                a.0[j] += 1;
                a.0[k] += 1;
                q.add_term(a, Complex64::new(0.0, t));
            }
        }
    }
    let mut total = Polynomial::constant(n, Complex64::new(1.0, 0.0));
    let mut power = total.clone();
    for k in 1..=max_degree / 2 {
        power = power.mul_truncated(&q, max_degree);
        for (a, c) in &power.terms {
            total.add_term(a.clone(), c / factorial(k as u32));
        }
    }
    total
}

/// `Ψ_α(x) = ∂_u^α exp(uᵀx + ½ i uᵀθ̃u)|_{u=0}` as an explicit polynomial in `x`.
pub fn psi_polynomial(alpha: &MultiIndex, tt: &TildeTheta, max_order: usize) -> Result<Polynomial> {
    let order = alpha.order();
    if order > max_order {
        return Err(WeylError::OrderOverflow {
            order,
            limit: max_order,
        });
    }
    if alpha.len() != tt.n() {
        return Err(WeylError::Dimension(format!(
            "multi-index has length {} but θ̃ is {}x{}",
            alpha.len(),
            tt.n(),
            tt.n()
        )));
    }
    let series = phase_series(tt, order);
    let mut out = Polynomial {
        n: tt.n(),
        terms: BTreeMap::new(),
    };
    let alpha_fact = alpha.factorial();
    for (gamma, c) in &series.terms {
        if let Some(beta) = alpha.checked_sub(gamma) {
            // α!/β! · c_γ · x^β
            out.add_term(beta.clone(), c * (alpha_fact / beta.factorial()));
        }
    }
    out.terms.retain(|_, c| c.norm() != 0.0);
    if out.terms.is_empty() {
        out.terms.insert(MultiIndex::zero(tt.n()), Complex64::default());
    }
    Ok(out)
}
