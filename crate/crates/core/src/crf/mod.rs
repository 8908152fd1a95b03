//! Unary construction, Potts energy and alpha-expansion on a 4-connected grid.

mod maxflow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Labeling;
use crate::location::LocationPotentials;
use crate::stf::ProbGrid;

pub use maxflow::{max_flow, max_flow_edmonds_karp, FlowNetwork, Graph, MinCut};

/// How the image-level prior enters the unary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// `p(c) * zeta(c)^alpha` inside the log.
    #[default]
    PerClass,
    /// The whole cost scaled by `mean(zeta)^alpha`.
    Scalar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrfParams {
    /// Weight of the location potential in the probability blend.
    pub omega: f64,
    /// Potts penalty per disagreeing 4-neighbour pair.
    pub lambda: f64,
    /// Exponent on the image-level prior.
    pub alpha: f64,
    /// Probability floor before the log.
    pub epsilon: f64,
    pub prior_mode: PriorMode,
    pub max_sweeps: usize,
}

impl Default for CrfParams {
    fn default() -> Self {
        CrfParams {
            omega: 0.3,
            lambda: 1.5,
            alpha: 1.0,
            epsilon: 1e-6,
            prior_mode: PriorMode::PerClass,
            max_sweeps: 5,
        }
    }
}

impl CrfParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::param(format!(
                "omega must be in [0, 1], got {}",
                self.omega
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("lambda must be finite and >= 0"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha must be finite and >= 0"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::param("epsilon must be in (0, 1)"));
        }
        Ok(())
    }
}

/// Per-pixel per-class costs plus a Potts strength on the 4-connected grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CrfProblem {
    pub width: usize,
    pub height: usize,
    pub classes: usize,
    /// Row-major, `classes` costs per pixel.
    pub unary: Vec<f64>,
    pub lambda: f64,
}

impl CrfProblem {
    pub fn new(
        width: usize,
        height: usize,
        classes: usize,
        unary: Vec<f64>,
        lambda: f64,
    ) -> Result<Self> {
        if unary.len() != width * height * classes || classes == 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} unary values for {}x{}x{}",
                unary.len(),
                width,
                height,
                classes
            )));
        }
        if unary.iter().any(|u| !u.is_finite()) {
            return Err(Error::param("unary costs must be finite"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::param("lambda must be finite and >= 0"));
        }
        Ok(CrfProblem {
            width,
            height,
            classes,
            unary,
            lambda,
        })
    }

    #[inline]
    pub fn cost(&self, pixel: usize, class: usize) -> f64 {
        self.unary[pixel * self.classes + class]
    }

    /// Per-pixel unary argmin; ties go to the lowest class id.
    pub fn unary_argmin(&self) -> Labeling {
        let labels = self
            .unary
            .chunks(self.classes)
            .map(|u| {
                let mut best = 0;
                for c in 1..u.len() {
                    if u[c] < u[best] {
                        best = c;
                    }
                }
                best
            })
            .collect();
        Labeling {
            width: self.width,
            height: self.height,
            labels,
        }
    }

    fn check(&self, labeling: &Labeling) -> Result<()> {
        if labeling.width != self.width || labeling.height != self.height {
            return Err(Error::DimensionMismatch(
                "labeling and problem differ in size".into(),
            ));
        }
        if labeling.labels.iter().any(|&l| l >= self.classes) {
            return Err(Error::param("label outside the class range"));
        }
        Ok(())
    }

    /// Sum of unaries plus `lambda` per disagreeing 4-neighbour pair.
    pub fn energy(&self, labeling: &Labeling) -> Result<f64> {
        self.check(labeling)?;
        Ok(self.energy_unchecked(&labeling.labels))
    }

    fn energy_unchecked(&self, l: &[usize]) -> f64 {
        let mut e: f64 = l.iter().enumerate().map(|(p, &c)| self.cost(p, c)).sum();
        e += self.lambda * discontinuities(self.width, self.height, l) as f64;
        e
    }
}

/// Number of 4-neighbour pairs with different labels.
pub fn discontinuities(width: usize, height: usize, labels: &[usize]) -> usize {
    let mut n = 0;
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            if x + 1 < width && labels[p] != labels[p + 1] {
                n += 1;
            }
            if y + 1 < height && labels[p] != labels[p + width] {
                n += 1;
            }
        }
    }
    n
}

/// Unary costs `-log(max(eps, ((1 - omega) app + omega loc) * prior))`.
/// `location` may be omitted only when `omega == 0`; `zeta` defaults to all ones.
pub fn build_unary(
    appearance: &ProbGrid,
    location: Option<&LocationPotentials>,
    zeta: Option<&[f64]>,
    params: &CrfParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    let (w, h, c) = (appearance.width, appearance.height, appearance.classes);
    if let Some(z) = zeta {
        if z.len() != c {
            return Err(Error::DimensionMismatch(format!(
                "prior has {} entries for {c} classes",
                z.len()
            )));
        }
    }
    let location = match location {
        Some(l) if l.classes != c => {
            return Err(Error::DimensionMismatch(
                "location potentials cover a different class count".into(),
            ))
        }
        Some(l) => Some(l),
        None if params.omega > 0.0 => {
            return Err(Error::MissingComponent(
                "location potentials (omega > 0)".into(),
            ))
        }
        None => None,
    };
    let (per_class, scale): (Vec<f64>, f64) = match (zeta, params.prior_mode) {
        (None, _) => (vec![1.0; c], 1.0),
        (Some(z), PriorMode::PerClass) => (z.iter().map(|v| v.powf(params.alpha)).collect(), 1.0),
        (Some(z), PriorMode::Scalar) => {
            let mean = z.iter().sum::<f64>() / c as f64;
            (vec![1.0; c], mean.powf(params.alpha))
        }
    };
    let mut out = vec![0.0; w * h * c];
    for y in 0..h {
        for x in 0..w {
            let app = appearance.at(x, y);
            let loc = location.map(|l| l.cell_probs(w, h, x, y));
            let base = (y * w + x) * c;
            for k in 0..c {
                let mut p = (1.0 - params.omega) * app[k];
                if let Some(l) = loc {
                    p += params.omega * l[k];
                }
                out[base + k] = -(p * per_class[k]).max(params.epsilon).ln() * scale;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expansion {
    pub labeling: Labeling,
    pub energy: f64,
    /// Energy after initialisation and after each completed sweep.
    pub history: Vec<f64>,
    pub converged: bool,
}

const UNSET: usize = usize::MAX;

/// Best expansion of `alpha` from `labels`: pixels may keep their label or
/// switch to `alpha`. Returns the new labels (unchanged pixels keep theirs).
pub fn expansion_move(problem: &CrfProblem, labels: &[usize], alpha: usize) -> Vec<usize> {
    let (w, h) = (problem.width, problem.height);
    let lambda = problem.lambda;
    let mut index = vec![UNSET; labels.len()];
    let mut free = Vec::new();
    for (p, &l) in labels.iter().enumerate() {
        if l != alpha {
            index[p] = free.len();
            free.push(p);
        }
    }
    if free.is_empty() {
        return labels.to_vec();
    }
    // linear coefficient per free node: cost(switch) - cost(keep)
    let mut lin: Vec<f64> = free
        .iter()
        .map(|&p| problem.cost(p, alpha) - problem.cost(p, labels[p]))
        .collect();
    let mut g = Graph::with_edges(free.len(), 2 * free.len());
    let pair = |p: usize, q: usize, lin: &mut Vec<f64>, g: &mut Graph| {
        match (index[p], index[q]) {
            (UNSET, UNSET) => {}
            // neighbour fixed at alpha: keeping costs lambda, switching is free
            (UNSET, j) => lin[j] -= lambda,
            (i, UNSET) => lin[i] -= lambda,
            (i, j) => {
                // E00 = lambda [f_p != f_q], E01 = E10 = lambda, E11 = 0
                let e00 = if labels[p] != labels[q] { lambda } else { 0.0 };
                lin[i] += lambda - e00;
                lin[j] -= lambda;
                let wgt = 2.0 * lambda - e00;
                if wgt > 0.0 {
                    g.add_edge(i, j, wgt, 0.0);
                }
            }
        }
    };
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if x + 1 < w {
                pair(p, p + 1, &mut lin, &mut g);
            }
            if y + 1 < h {
                pair(p, p + w, &mut lin, &mut g);
            }
        }
    }
    for (i, &k) in lin.iter().enumerate() {
        // sink side means "switch"; switching costs k when k > 0
        if k > 0.0 {
            g.add_tedge(i, k, 0.0);
        } else if k < 0.0 {
            g.add_tedge(i, 0.0, -k);
        }
    }
    g.maxflow();
    let mut out = labels.to_vec();
    for (i, &p) in free.iter().enumerate() {
        if g.is_sink_side(i) {
            out[p] = alpha;
        }
    }
    out
}

/// Exact minimiser for two-label problems via a single cut.
fn solve_binary(problem: &CrfProblem) -> Vec<usize> {
    // every pixel free: start from all-0 and expand label 1
    let zeros = vec![0usize; problem.width * problem.height];
    expansion_move(problem, &zeros, 1)
}

fn strictly_lower(new: f64, old: f64) -> bool {
    new < old - 1e-12 * old.abs().max(1.0)
}

/// Alpha-expansion from `init`, visiting classes in ascending order. A move
/// is kept only if it strictly lowers the energy; stops after a sweep with
/// no accepted move or after `max_sweeps` sweeps. Two-label problems are
/// solved exactly with one cut.
pub fn alpha_expansion(
    problem: &CrfProblem,
    init: &Labeling,
    max_sweeps: usize,
) -> Result<Expansion> {
    problem.check(init)?;
    let mut labels = init.labels.clone();
    let mut energy = problem.energy_unchecked(&labels);
    let mut history = vec![energy];
    let mut converged = false;
    if problem.classes == 2 {
        let cand = solve_binary(problem);
        let e = problem.energy_unchecked(&cand);
        if strictly_lower(e, energy) {
            labels = cand;
            energy = e;
        }
        history.push(energy);
        converged = true;
    } else {
        for _ in 0..max_sweeps {
            let mut improved = false;
            for alpha in 0..problem.classes {
                let cand = expansion_move(problem, &labels, alpha);
                let e = problem.energy_unchecked(&cand);
                if strictly_lower(e, energy) {
                    labels = cand;
                    energy = e;
                    improved = true;
                }
            }
            history.push(energy);
            if !improved {
                converged = true;
                break;
            }
        }
    }
    Ok(Expansion {
        labeling: Labeling {
            width: problem.width,
            height: problem.height,
            labels,
        },
        energy,
        history,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(unary: &[f64], w: usize, h: usize, c: usize, lambda: f64) -> CrfProblem {
        CrfProblem::new(w, h, c, unary.to_vec(), lambda).unwrap()
    }

    #[test]
    fn hand_energy() {
        // 2x2, two classes
        let p = problem(&[1.0, 2.0, 0.5, 0.1, 3.0, 0.0, 0.2, 0.4], 2, 2, 2, 1.0);
        let l = Labeling::new(2, 2, vec![0, 1, 1, 0]).unwrap();
        // unary 1 + 0.1 + 0 + 0.2, four disagreeing pairs
        assert!((p.energy(&l).unwrap() - (1.3 + 4.0)).abs() < 1e-12);
        let u = Labeling::uniform(2, 2, 1);
        assert!((p.energy(&u).unwrap() - (2.0 + 0.1 + 0.0 + 0.4)).abs() < 1e-12);
    }

    #[test]
    fn zero_lambda_keeps_argmin() {
        let un = [0.3, 0.1, 0.9, 0.5, 0.5, 0.2, 0.7, 0.7, 0.7];
        let p = problem(&un, 3, 1, 3, 0.0);
        let init = p.unary_argmin();
        assert_eq!(init.labels, vec![1, 2, 0]);
        let out = alpha_expansion(&p, &init, 5).unwrap();
        assert_eq!(out.labeling, init);
    }

    #[test]
    fn strong_smoothing_flattens() {
        let un = [0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let p = problem(&un, 4, 1, 2, 10.0);
        let out = alpha_expansion(&p, &p.unary_argmin(), 5).unwrap();
        assert!(out.labeling.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn unary_formula() {
        let app = ProbGrid {
            width: 1,
            height: 1,
            classes: 2,
            data: vec![0.25, 0.75],
        };
        let params = CrfParams {
            omega: 0.0,
            alpha: 0.0,
            ..CrfParams::default()
        };
        let u = build_unary(&app, None, Some(&[0.0, 1.0]), &params).unwrap();
        assert_eq!(u, vec![-(0.25f64).ln(), -(0.75f64).ln()]);
        let params = CrfParams {
            omega: 0.0,
            alpha: 1.0,
            ..CrfParams::default()
        };
        let u = build_unary(&app, None, Some(&[0.0, 1.0]), &params).unwrap();
        assert_eq!(u[0], -(1e-6f64).ln());
        assert!(build_unary(
            &app,
            None,
            None,
            &CrfParams {
                omega: 1.5,
                ..params.clone()
            }
        )
        .is_err());
        assert!(matches!(
            build_unary(
                &app,
                None,
                None,
                &CrfParams {
                    omega: 0.5,
                    ..params
                }
            ),
            Err(Error::MissingComponent(_))
        ));
    }
}
