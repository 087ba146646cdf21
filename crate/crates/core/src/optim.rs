//! Minimization engine shared by the score-based models.
//!
//! Objectives are sums of per-grader terms. [`minimize`] runs epochs of
//! per-term stochastic gradient steps in a shuffled order and then polishes
//! the result with a full-batch L-BFGS phase, so the returned point does not
//! depend on how far the decaying SGD schedule got.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OpgError, Result};
use crate::scalar::Scalar;

/// Learning-rate schedule across epochs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decay {
    /// `lr / sqrt(t)` in epoch `t` (1-based).
    InverseSqrt,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SgdConfig<T> {
    pub learning_rate: T,
    pub decay: Decay,
    pub max_epochs: usize,
    pub rel_tolerance: T,
    pub seed: u64,
    /// Alternations between the score and reliability steps for `+G` fits.
    pub alternating_iterations: usize,
    /// Iteration cap of the full-batch polishing phase (0 disables it).
    pub polish_iterations: usize,
}

impl<T: Scalar> Default for SgdConfig<T> {
    fn default() -> Self {
        Self {
            learning_rate: T::lit(0.1),
            decay: Decay::InverseSqrt,
            max_epochs: 500,
            rel_tolerance: T::lit(1e-6),
            seed: 0,
            alternating_iterations: 10,
            polish_iterations: 200,
        }
    }
}

impl<T: Scalar> SgdConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero()) {
            return Err(OpgError::InvalidParameter("learning_rate must be > 0".into()));
        }
        if self.max_epochs == 0 {
            return Err(OpgError::InvalidParameter("max_epochs must be >= 1".into()));
        }
        if !(self.rel_tolerance > T::zero()) {
            return Err(OpgError::InvalidParameter("rel_tolerance must be > 0".into()));
        }
        Ok(())
    }
}

/// A differentiable objective written as a sum of terms.
pub trait SumObjective<T: Scalar>: Sync {
    fn dim(&self) -> usize;
    fn n_terms(&self) -> usize;
    /// Add the gradient of term `k` (including its share of any prior) to
    /// `grad`.
    fn add_term_gradient(&self, k: usize, x: &[T], grad: &mut [T]);
    /// Full objective; writes the full gradient into `grad`.
    fn value_and_gradient(&self, x: &[T], grad: &mut [T]) -> T;

    fn value(&self, x: &[T]) -> T {
        let mut g = vec![T::zero(); self.dim()];
        self.value_and_gradient(x, &mut g)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome<T> {
    pub x: Vec<T>,
    pub value: T,
    pub epochs: usize,
    pub polish_iterations: usize,
}

/// Largest change any single coordinate may take in one stochastic step.
const MAX_STEP: f64 = 1.0;

pub fn minimize<T: Scalar, O: SumObjective<T>>(obj: &O, x0: Vec<T>, cfg: &SgdConfig<T>) -> Outcome<T> {
    let mut x = x0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..obj.n_terms()).collect();
    let mut grad = vec![T::zero(); obj.dim()];
    let max_step = T::lit(MAX_STEP);
    let mut prev = obj.value(&x);
    let mut epochs = 0;
    for t in 1..=cfg.max_epochs {
        epochs = t;
        let lr = match cfg.decay {
            Decay::InverseSqrt => cfg.learning_rate / T::from_usize_lossy(t).sqrt(),
            Decay::Constant => cfg.learning_rate,
        };
        order.shuffle(&mut rng);
        for &k in &order {
            grad.iter_mut().for_each(|g| *g = T::zero());
            obj.add_term_gradient(k, &x, &mut grad);
            for (xi, gi) in x.iter_mut().zip(&grad) {
                *xi -= (lr * *gi).max(-max_step).min(max_step);
            }
        }
        let f = obj.value(&x);
        let done = (prev - f).abs() <= cfg.rel_tolerance * prev.abs().max(T::one());
        prev = f;
        if done {
            break;
        }
    }
    let (x, value, iters) = lbfgs(obj, x, cfg.polish_iterations);
    log::debug!("minimize: {epochs} epochs, {iters} polish iterations, objective {value}");
    Outcome { x, value, epochs, polish_iterations: iters }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// Limited-memory BFGS with a backtracking Armijo line search.
///
/// Stops after `max_iter` iterations, when the gradient vanishes, or when the
/// line search cannot make progress (e.g. at a kink of a nonsmooth term).
pub fn lbfgs<T: Scalar, O: SumObjective<T>>(obj: &O, x0: Vec<T>, max_iter: usize) -> (Vec<T>, T, usize) {
    const MEMORY: usize = 10;
    let n = obj.dim();
    let mut x = x0;
    let mut g = vec![T::zero(); n];
    let mut f = obj.value_and_gradient(&x, &mut g);
    let mut s_hist: Vec<Vec<T>> = Vec::new();
    let mut y_hist: Vec<Vec<T>> = Vec::new();
    let mut x_new = vec![T::zero(); n];
    let mut g_new = vec![T::zero(); n];
    let eps = T::epsilon();
    for iter in 0..max_iter {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm <= eps.sqrt() * eps.sqrt().sqrt() * f.abs().max(T::one()) {
            return (x, f, iter);
        }
        // two-loop recursion
        let mut d: Vec<T> = g.iter().map(|v| -*v).collect();
        let mut alpha = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let a = dot(s, &d) / dot(y, s);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * *yi;
            }
            alpha.push(a);
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let scale = T::one() / gnorm.max(T::one());
            d.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y), a) in s_hist.iter().zip(&y_hist).zip(alpha.into_iter().rev()) {
            let b = dot(y, &d) / dot(y, s);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * *si;
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope < T::zero()) {
            // not a descent direction; restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            d = g.iter().map(|v| -*v / gnorm.max(T::one())).collect();
            slope = dot(&g, &d);
        }
        let mut step = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            let f_new = obj.value_and_gradient(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= f + T::lit(1e-4) * step * slope {
                let s: Vec<T> = (0..n).map(|i| x_new[i] - x[i]).collect();
                let y: Vec<T> = (0..n).map(|i| g_new[i] - g[i]).collect();
                if dot(&s, &y) > eps * dot(&y, &y) {
                    if s_hist.len() == MEMORY {
                        s_hist.remove(0);
                        y_hist.remove(0);
                    }
                    s_hist.push(s);
                    y_hist.push(y);
                }
                let improvement = f - f_new;
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                f = f_new;
                accepted = true;
                if improvement <= eps * f.abs().max(T::one()) {
                    return (x, f, iter + 1);
                }
                break;
            }
            step *= T::lit(0.5);
        }
        if !accepted {
            return (x, f, iter);
        }
    }
    (x, f, max_iter)
}

/// Maximize a function of `log10 η` on `[-3, 3]`: coarse grid to bracket the
/// best point, then golden-section search to `tol` in log space.
pub fn maximize_log10<T: Scalar>(f: impl Fn(T) -> T, tol: f64) -> T {
    let (lo, hi) = (crate::RELIABILITY_MIN.log10(), crate::RELIABILITY_MAX.log10());
    let steps = 60;
    let h = (hi - lo) / steps as f64;
    let eval = |u: f64| f(T::lit(10f64.powf(u))).as_f64();
    let (mut best, mut best_val) = (lo, f64::NEG_INFINITY);
    for i in 0..=steps {
        let u = lo + h * i as f64;
        let v = eval(u);
        if v > best_val {
            best_val = v;
            best = u;
        }
    }
    let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (eval(c), eval(d));
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = eval(d);
        }
    }
    let u = 0.5 * (a + b);
    let u = if eval(u) >= best_val { u } else { best };
    T::lit(10f64.powf(u))
}
