/// Downhill simplex minimizer.
///
/// Standard coefficients: reflection 1, expansion 2, contraction 1/2,
/// shrink 1/2. A run stops when the spread of function values across the
/// simplex drops below `f_tol` or after `max_iter` iterations; the minimizer
/// then restarts from the best vertex up to `restarts` times, which guards
/// against premature collapse of the simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct NelderMead {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    pub f_tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            f_tol: 1e-8,
            max_iter: 2000,
            restarts: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Whether the final run met the spread tolerance.
    pub converged: bool,
}

impl NelderMead {
    /// Minimizes `f` from `x0` with an initial simplex `x0 + steps[i] e_i`.
    pub fn minimize<F: Fn(&[f64]) -> f64>(&self, f: F, x0: &[f64], steps: &[f64]) -> Minimum {
        assert_eq!(x0.len(), steps.len(), "one step per coordinate");
        let mut best = self.run(&f, x0, steps);
        for _ in 0..self.restarts {
            let next = self.run(&f, &best.x, steps);
            let gained = best.value - next.value;
            let total = best.iterations + next.iterations;
            if next.value <= best.value {
                best = Minimum {
                    iterations: total,
                    ..next
                };
            } else {
                best.iterations = total;
            }
            if gained.abs() <= self.f_tol {
                break;
            }
        }
        best
    }

    fn run<F: Fn(&[f64]) -> f64>(&self, f: &F, x0: &[f64], steps: &[f64]) -> Minimum {
        let dim = x0.len();
        let eval = |x: &[f64]| {
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        let mut simplex: Vec<(Vec<f64>, f64)> = std::iter::once(x0.to_vec())
            .chain((0..dim).map(|i| {
                let mut x = x0.to_vec();
                x[i] += steps[i];
                x
            }))
            .map(|x| {
                let v = eval(&x);
                (x, v)
            })
            .collect();

        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.max_iter {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let spread = simplex[dim].1 - simplex[0].1;
            if spread.is_finite() && spread < self.f_tol {
                converged = true;
                break;
            }
            iterations += 1;

            let centroid: Vec<f64> = (0..dim)
                .map(|j| simplex[..dim].iter().map(|(x, _)| x[j]).sum::<f64>() / dim as f64)
                .collect();
            let toward = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[dim].0)
                    .map(|(c, w)| c + t * (w - c))
                    .collect()
            };

            let xr = toward(-self.reflection);
            let fr = eval(&xr);
            if fr < simplex[0].1 {
                let xe = toward(-self.reflection * self.expansion);
                let fe = eval(&xe);
                simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[dim - 1].1 {
                simplex[dim] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[dim].1 {
                    let xc = toward(-self.reflection * self.contraction);
                    let fc = eval(&xc);
                    (xc, fc)
                } else {
                    let xc = toward(self.contraction);
                    let fc = eval(&xc);
                    (xc, fc)
                };
                if fc < fr.min(simplex[dim].1) {
                    simplex[dim] = (xc, fc);
                } else {
                    let best = simplex[0].0.clone();
                    for vertex in simplex.iter_mut().skip(1) {
                        for (x, b) in vertex.0.iter_mut().zip(&best) {
                            *x = b + self.shrink * (*x - b);
                        }
                        vertex.1 = eval(&vertex.0);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, value) = simplex.swap_remove(0);
        Minimum {
            x,
            value,
            iterations,
            converged,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = NelderMead {
            f_tol: 1e-14,
            max_iter: 5000,
            ..Default::default()
        }
        .minimize(f, &[-1.2, 1.0], &[0.1, 0.1]);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn quadratic_bowl_in_seven_dimensions() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * (v - 0.5).powi(2)).sum();
        let m = NelderMead::default().minimize(f, &[0.0; 7], &[0.2; 7]);
        assert!(m.converged);
        assert!(m.value < 1e-6, "{}", m.value);
    }

    #[test]
    fn nan_is_treated_as_infinitely_bad() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 1.0).powi(2) + x[1] * x[1] };
        let m = NelderMead::default().minimize(f, &[0.5, 0.5], &[0.1, 0.1]);
        assert!((m.x[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn deterministic() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(4) + (x[1] + x[0]).powi(2);
        let nm = NelderMead::default();
        assert_eq!(nm.minimize(f, &[0.0, 0.0], &[1.0, 1.0]), nm.minimize(f, &[0.0, 0.0], &[1.0, 1.0]));
    }
}
