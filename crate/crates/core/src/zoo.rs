//! Built-in example models with closed-form or one-dimensional oracles.
//!
//! * [`Example1`]: type 1 has a type-2 child with probability `a`; type
//!   `i >= 2` has one type-`i+1` child and a Poisson(`b^(i-1)`) number of
//!   type-1 children.
//! * [`Example2`]: a nearest-neighbour walk on types with parity-dependent
//!   scaling `d`.
//! * [`Example3`]: types `{2, 3, ...}` with jumps to `2i` at powers of two.

use crate::error::ModelError;
use crate::progeny::{
    check_type, truncated_poisson, ProgenyModel, SparseOffspring, TypeIndex, TypeLaw,
};

fn offspring(pairs: &[(TypeIndex, u32)]) -> SparseOffspring {
    SparseOffspring::new(pairs.iter().copied()).expect("zoo offspring types are positive")
}

fn check_open_unit(name: &str, v: f64) -> Result<(), ModelError> {
    if !(v > 0.0 && v < 1.0) {
        return Err(ModelError::InvalidParameter(format!(
            "{name} = {v} must lie in (0,1)"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example1 {
    pub a: f64,
    pub b: f64,
}

impl Example1 {
    pub fn new(a: f64, b: f64) -> Result<Self, ModelError> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(ModelError::InvalidParameter(format!(
                "a = {a} must lie in (0,1]"
            )));
        }
        check_open_unit("b", b)?;
        Ok(Example1 { a, b })
    }

    /// Mean number of type-1 descendants produced along the type-2,3,... line.
    fn line_mean(&self) -> f64 {
        self.b / (1.0 - self.b)
    }
}

impl ProgenyModel for Example1 {
    fn name(&self) -> String {
        format!("example1(a={}, b={})", self.a, self.b)
    }

    fn law_for(&self, i: TypeIndex) -> Result<TypeLaw, ModelError> {
        check_type(self, i)?;
        if i == 1 {
            return TypeLaw::new([
                (self.a, offspring(&[(2, 1)])),
                (1.0 - self.a, offspring(&[])),
            ]);
        }
        let pmf = truncated_poisson(self.b.powi(i as i32 - 1))?;
        TypeLaw::new(
            pmf.iter()
                .enumerate()
                .map(|(n, &p)| (p, offspring(&[(1, n as u32), (i + 1, 1)]))),
        )
    }

    fn max_reachable(&self, k: TypeIndex) -> Option<TypeIndex> {
        Some(k.max(1) + 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example1Oracles {
    /// Global extinction probability from type 1.
    pub q1: f64,
    /// Limit of the sterile truncations.
    pub q_tilde1: f64,
    /// Limit of the augmented truncations with replacement by type 1.
    pub q_bar1: f64,
}

/// Smallest root in `[0,1]` of `x = g(x)` for a convex increasing `g` with
/// `g(1) = 1` and `g'(1) = slope`, by bisection to `1e-12` or better.
pub fn minimal_root<F: Fn(f64) -> f64>(g: F, slope: f64) -> f64 {
    if slope <= 1.0 {
        return 1.0;
    }
    let h = |x: f64| g(x) - x;
    if h(0.0) <= 0.0 {
        return 0.0;
    }
    let mut hi = 0.5;
    let mut step = 0.5;
    while h(hi) >= 0.0 {
        step *= 0.5;
        hi = 1.0 - step;
        if step < 1e-16 {
            return 1.0;
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn example1_oracles(a: f64, b: f64) -> Result<Example1Oracles, ModelError> {
    let model = Example1::new(a, b)?;
    let lam = model.line_mean();
    let f = |x: f64| (lam * (x - 1.0)).exp();
    let q_tilde1 = minimal_root(|x| 1.0 - a + a * f(x), a * lam);
    let q_bar1 = minimal_root(|x| 1.0 - a + a * f(x) * x, a * (lam + 1.0));
    Ok(Example1Oracles {
        q1: 1.0 - a,
        q_tilde1,
        q_bar1,
    })
}

/// Nearest-neighbour model. Odd types move up with mean `c d` and down with
/// mean `a d`; even types move up with mean `c/d` and down with mean `a/d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Example2 {
    pub a: f64,
    pub c: f64,
    pub d: f64,
    t: u32,
    u: u32,
    v: u32,
}

impl Example2 {
    pub fn new(a: f64, c: f64, d: f64) -> Result<Self, ModelError> {
        for (name, v) in [("a", a), ("c", c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::InvalidParameter(format!(
                    "{name} = {v} must be positive"
                )));
            }
        }
        if !(d.is_finite() && d > 1.0) {
            return Err(ModelError::InvalidParameter(format!(
                "d = {d} must exceed 1"
            )));
        }
        let t = (d * c).ceil() as u32 + 1;
        let u = (d * (c + a)).ceil() as u32 + 1;
        let v = ((c + a) / d).ceil() as u32 + 1;
        Ok(Example2 { a, c, d, t, u, v })
    }

    /// Litter sizes for type 1, odd types and even types.
    pub fn litter_sizes(&self) -> (u32, u32, u32) {
        (self.t, self.u, self.v)
    }
}

impl ProgenyModel for Example2 {
    fn name(&self) -> String {
        format!("example2(a={}, c={}, d={})", self.a, self.c, self.d)
    }

    fn law_for(&self, i: TypeIndex) -> Result<TypeLaw, ModelError> {
        check_type(self, i)?;
        let (a, c, d) = (self.a, self.c, self.d);
        if i == 1 {
            let p = c * d / self.t as f64;
            return TypeLaw::new([(p, offspring(&[(2, self.t)])), (1.0 - p, offspring(&[]))]);
        }
        let (n, up, down) = if i % 2 == 1 {
            (self.u, c * d / self.u as f64, a * d / self.u as f64)
        } else {
            (self.v, c / (d * self.v as f64), a / (d * self.v as f64))
        };
        TypeLaw::new([
            (up, offspring(&[(i + 1, n)])),
            (down, offspring(&[(i - 1, n)])),
            (1.0 - up - down, offspring(&[])),
        ])
    }

    fn max_reachable(&self, k: TypeIndex) -> Option<TypeIndex> {
        Some(k + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Example2Regime {
    /// `1/d` above the threshold: augmented truncations converge to the
    /// global extinction probability along both parities.
    CaseI,
    /// `1/d <= threshold < d`: the even augmented truncations tend to one.
    CaseII,
    /// `d <= threshold`: everything tends to one.
    CaseIII,
    /// `ac > 1/4`: the process survives with positive probability and the
    /// embedded return means diverge.
    SupercriticalPartial,
}

/// `(1 + sqrt(1 - 4ac)) / (2c)`, or `None` when `ac > 1/4`.
pub fn example2_threshold(a: f64, c: f64) -> Option<f64> {
    let disc = 1.0 - 4.0 * a * c;
    (disc >= 0.0).then(|| (1.0 + disc.sqrt()) / (2.0 * c))
}

pub fn example2_regime(a: f64, c: f64, d: f64) -> Result<Example2Regime, ModelError> {
    Example2::new(a, c, d)?;
    Ok(match example2_threshold(a, c) {
        None => Example2Regime::SupercriticalPartial,
        Some(r) if 1.0 / d > r => Example2Regime::CaseI,
        Some(r) if r < d => Example2Regime::CaseII,
        Some(_) => Example2Regime::CaseIII,
    })
}

/// Limits of the embedded return means of the last type under replacement by
/// the last type, `(odd k, even k)`; both infinite when `ac > 1/4`.
pub fn example2_mean_limits(a: f64, c: f64, d: f64) -> Result<(f64, f64), ModelError> {
    Example2::new(a, c, d)?;
    let disc = 1.0 - 4.0 * a * c;
    if disc < 0.0 {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    let excursion = 0.5 * (1.0 - disc.sqrt());
    Ok((c * d + excursion, c / d + excursion))
}

/// Sum of the Catalan-weighted excursion series truncated at `terms`:
/// `sum_{l < terms} C_l (ac)^(l+1)`.
pub fn catalan_excursion_sum(a: f64, c: f64, terms: usize) -> f64 {
    let x = a * c;
    let mut catalan = 1.0f64;
    let mut power = x;
    let mut total = 0.0;
    for l in 0..terms {
        total += catalan * power;
        catalan *= 2.0 * (2.0 * l as f64 + 1.0) / (l as f64 + 2.0);
        power *= x;
    }
    total
}

/// Decides whether the positive vector `x_i = d^{(-1)^i / 2} x^{1-i}`, with `x`
/// the midpoint of `[max(r_-, 1), r_+]`, satisfies `x M <= x` on the first
/// 200 types. When it does, global extinction is certain.
pub fn example2_q1_certificate(a: f64, c: f64, d: f64) -> Result<bool, ModelError> {
    let model = Example2::new(a, c, d)?;
    let disc = 1.0 - 4.0 * a * c;
    if disc < 0.0 {
        return Ok(false);
    }
    let r_minus = (1.0 - disc.sqrt()) / (2.0 * c);
    let r_plus = (1.0 + disc.sqrt()) / (2.0 * c);
    let lo = r_minus.max(1.0);
    if lo > r_plus {
        return Ok(false);
    }
    let x = 0.5 * (lo + r_plus);
    const WINDOW: u32 = 200;
    // Work with logarithms: x^{1-i} underflows quickly for x > 1.
    let log_weight = |i: u32| {
        let sign = if i.is_multiple_of(2) { 1.0 } else { -1.0 };
        0.5 * sign * d.ln() + (1.0 - i as f64) * x.ln()
    };
    let mut acc = vec![0.0f64; WINDOW as usize + 2];
    for i in 1..=WINDOW + 1 {
        for (j, m) in model.law_for(i)?.mean() {
            if j <= WINDOW {
                acc[j as usize] += (log_weight(i) - log_weight(j)).exp() * m;
            }
        }
    }
    Ok((1..WINDOW).all(|j| acc[j as usize] <= 1.0 + 1e-12))
}

/// Model on types `{2, 3, ...}`. Type 2 has three type-4 children with
/// probability `p`; a type `i = 2^l >= 4` may have a type-`(i-1)` child and
/// three type-`2i` children; other types may have a type-`(i-1)` child.
#[derive(Clone, Debug, PartialEq)]
pub struct Example3 {
    pub p: f64,
    pub eps: f64,
}

impl Example3 {
    pub fn new(p: f64, eps: f64) -> Result<Self, ModelError> {
        check_open_unit("p", p)?;
        check_open_unit("eps", eps)?;
        if 3.0 * p * eps * eps >= 1.0 {
            return Err(ModelError::InvalidParameter(format!(
                "3 p eps^2 = {} must be below 1",
                3.0 * p * eps * eps
            )));
        }
        Ok(Example3 { p, eps })
    }
}

pub fn is_power_of_two(i: u32) -> bool {
    i != 0 && i & (i - 1) == 0
}

impl ProgenyModel for Example3 {
    fn name(&self) -> String {
        format!("example3(p={}, eps={})", self.p, self.eps)
    }

    fn first_type(&self) -> TypeIndex {
        2
    }

    fn law_for(&self, i: TypeIndex) -> Result<TypeLaw, ModelError> {
        check_type(self, i)?;
        let (p, eps) = (self.p, self.eps);
        if i == 2 {
            return TypeLaw::new([(p, offspring(&[(4, 3)])), (1.0 - p, offspring(&[]))]);
        }
        if is_power_of_two(i) {
            let r = p * (1.0 - 3.0 * p * eps.powi((i / 2) as i32));
            return TypeLaw::new([
                (eps * r, offspring(&[(i - 1, 1), (2 * i, 3)])),
                (r * (1.0 - eps), offspring(&[(2 * i, 3)])),
                (eps * (1.0 - r), offspring(&[(i - 1, 1)])),
                (1.0 - eps - r * (1.0 - eps), offspring(&[])),
            ]);
        }
        TypeLaw::new([(eps, offspring(&[(i - 1, 1)])), (1.0 - eps, offspring(&[]))])
    }

    fn max_reachable(&self, k: TypeIndex) -> Option<TypeIndex> {
        let top = if k < 2 {
            2
        } else {
            1u32 << (31 - k.leading_zeros())
        };
        Some((2 * top).max(k))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example3Oracles {
    pub l: u32,
    /// Embedded mean of type `2^l` in the sterile truncation at `k = 2^l`.
    pub m_tilde: f64,
    /// `f[i-1] = (3p)^(l-i)` for `i = 1..=l`: mean number of type-`2^l`
    /// descendants of a type-`2^i` individual along the doubling chain.
    pub f: Vec<f64>,
}

pub fn example3_oracles(p: f64, eps: f64, l: u32) -> Result<Example3Oracles, ModelError> {
    Example3::new(p, eps)?;
    if !(2..=30).contains(&l) {
        return Err(ModelError::InvalidParameter(format!(
            "l = {l} must lie in 2..=30"
        )));
    }
    let m_tilde = 3.0 * p * eps.powi(1 << (l - 1));
    let f = (1..=l).map(|i| (3.0 * p).powi((l - i) as i32)).collect();
    Ok(Example3Oracles { l, m_tilde, f })
}
