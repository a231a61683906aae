//! The deterministic convex subproblem solved at every WMMSE iteration,
//! written as a second-order cone program and handed to Clarabel.
//!
//! Internally the problem is normalized: precoders are `w = √P_ref · x` with
//! `P_ref = max_n P_n`, and rates are spectral efficiencies `r = R / B`.
//! Every quadratic `x^H Ȳ x ≤ c` becomes the rotated cone
//! `‖(2Fx, c − 1)‖ ≤ c + 1` with `Ȳ = F^H F`.
//!
//! Problem form: minimize `c^T x` subject to `b − A x ∈ K`, where `K` is a
//! product of nonnegative orthants and second-order cones, in row order.

use std::collections::HashMap;
use std::f64::consts::LN_2;
use std::fmt::Write as _;
use std::io::Write;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::clustering::StreamKind;
use crate::error::{Error, Result};
use crate::network::{Beamformers, Network, RateAllocation, Stream};
use crate::wmmse::{check_constraints, surrogate_constraint, AuxiliaryStats};

/// Eigenvalues of `Ȳ` in `[−PSD_FLOOR, 0)` are treated as rounding noise.
pub const PSD_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    Nonnegative(usize),
    SecondOrder(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Nonnegative(d) | Cone::SecondOrder(d) => d,
        }
    }
}

/// Where each physical quantity lives in the real variable vector.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableLayout {
    pub n_bs: usize,
    pub n_antennas: usize,
    pub p_ref: f64,
    pub bandwidth_hz: f64,
    /// `[g][n]`: first variable of block `(g, n)`: `L` real parts then `L`
    /// imaginary parts. `None` for blocks pinned to zero.
    pub private_blocks: Vec<Vec<Option<usize>>>,
    pub common_blocks: Vec<Vec<Option<usize>>>,
    pub r_bar: usize,
    pub private_rates: Vec<usize>,
    /// `None` for inactive commons, whose rate is zero.
    pub common_rates: Vec<Option<usize>>,
    /// `[i][g]`: share variables of active shared commons.
    pub shares: Vec<Option<Vec<usize>>>,
}

impl VariableLayout {
    fn blocks(&self, s: Stream) -> &[Option<usize>] {
        match s.kind {
            StreamKind::Private => &self.private_blocks[s.index],
            StreamKind::Common => &self.common_blocks[s.index],
        }
    }

    /// `(complex dimension, re variable, im variable)` for every supported
    /// entry of stream `s`.
    fn entries(&self, s: Stream) -> Vec<(usize, usize, usize)> {
        let l = self.n_antennas;
        let mut out = Vec::new();
        for (n, start) in self.blocks(s).iter().enumerate() {
            if let Some(v) = *start {
                for a in 0..l {
                    out.push((n * l + a, v + a, v + l + a));
                }
            }
        }
        out
    }

    fn rate_var(&self, s: Stream) -> Option<usize> {
        match s.kind {
            StreamKind::Private => Some(self.private_rates[s.index]),
            StreamKind::Common => self.common_rates[s.index],
        }
    }
}

type Row = (Vec<(usize, f64)>, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    pub var_names: Vec<String>,
    pub objective: Vec<f64>,
    /// Sparse `A` as `(row, column, value)`.
    pub a: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
    pub layout: VariableLayout,
}

impl ConicProblem {
    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn n_rows(&self) -> usize {
        self.b.len()
    }

    /// Writes the problem in a line-oriented text format:
    ///
    /// ```text
    /// # minimize c'x subject to b - A x in K
    /// variables <n>
    /// var <j> <name>
    /// objective <j> <c_j>          (nonzeros only)
    /// cones <count>
    /// cone nonneg|soc <dim>        (in row order)
    /// rows <m>
    /// b <i> <b_i>                  (nonzeros only)
    /// a <i> <j> <A_ij>
    /// ```
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "# minimize c'x subject to b - A x in K");
        let _ = writeln!(s, "variables {}", self.n_vars());
        for (j, name) in self.var_names.iter().enumerate() {
            let _ = writeln!(s, "var {j} {name}");
        }
        for (j, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                let _ = writeln!(s, "objective {j} {c:e}");
            }
        }
        let _ = writeln!(s, "cones {}", self.cones.len());
        for cone in &self.cones {
            match cone {
                Cone::Nonnegative(d) => writeln!(s, "cone nonneg {d}"),
                Cone::SecondOrder(d) => writeln!(s, "cone soc {d}"),
            }
            .ok();
        }
        let _ = writeln!(s, "rows {}", self.n_rows());
        for (i, v) in self.b.iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(s, "b {i} {v:e}");
            }
        }
        for (i, j, v) in &self.a {
            let _ = writeln!(s, "a {i} {j} {v:e}");
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }
}

/// Real factor rows of a Hermitian PSD matrix restricted to `support`
/// (complex dimensions): each returned row is a sparse real combination of
/// the `(re, im)` variables of those dimensions.
fn factor_rows(y: &DMatrix<Complex64>, entries: &[(usize, usize, usize)], label: &str) -> Result<Vec<Vec<(usize, f64)>>> {
    let d = entries.len();
    if d == 0 {
        return Ok(Vec::new());
    }
    let sub = DMatrix::from_fn(d, d, |a, b| {
        let (ia, ib) = (entries[a].0, entries[b].0);
        (y[(ia, ib)] + y[(ib, ia)].conj()) * 0.5
    });
    if sub.iter().all(|z| z.norm_sqr() == 0.0) {
        return Ok(Vec::new());
    }
    let eig = SymmetricEigen::new(sub);
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let mut rows = Vec::new();
    for (q, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -PSD_FLOOR * lmax.max(1.0) {
            return Err(Error::Numerical(format!(
                "quadratic form for {label} is not PSD (eigenvalue {lambda:e})"
            )));
        }
        if lambda <= 1e-13 * lmax {
            continue;
        }
        let scale = lambda.sqrt();
        // row q of F = √λ v_q^H
        let v = eig.eigenvectors.column(q);
        let mut re_row = Vec::with_capacity(2 * d);
        let mut im_row = Vec::with_capacity(2 * d);
        for (j, &(_, xr, xi)) in entries.iter().enumerate() {
            let f = v[j].conj() * scale;
            re_row.push((xr, f.re));
            re_row.push((xi, -f.im));
            im_row.push((xr, f.im));
            im_row.push((xi, f.re));
        }
        rows.push(re_row);
        rows.push(im_row);
    }
    Ok(rows)
}

fn stream_label(s: Stream) -> String {
    match s.kind {
        StreamKind::Private => format!("p{}", s.index),
        StreamKind::Common => format!("c{}", s.index),
    }
}

/// Builds the subproblem at the statistics `aux`.
pub fn build_subproblem(net: &Network, aux: &AuxiliaryStats) -> Result<ConicProblem> {
    net.validate()?;
    let l = net.n_antennas;
    let b_hz = net.bandwidth_hz;
    let p_max = net.p_max_w.iter().copied().fold(0.0, f64::max);
    let p_ref = if p_max > 0.0 { p_max } else { 1.0 };
    let sqrt_p = p_ref.sqrt();

    let mut names = Vec::new();
    let blocks_for = |names: &mut Vec<String>, tag: String, support: &[bool]| -> Vec<Option<usize>> {
        (0..net.n_bs)
            .map(|n| {
                if !support[n] || net.p_max_w[n] <= 0.0 {
                    return None;
                }
                let start = names.len();
                for part in ["re", "im"] {
                    for a in 0..l {
                        names.push(format!("w.{tag}.bs{n}.{part}{a}"));
                    }
                }
                Some(start)
            })
            .collect()
    };
    let private_blocks: Vec<_> = (0..net.n_groups())
        .map(|g| blocks_for(&mut names, format!("p{g}"), &net.private_support[g]))
        .collect();
    let common_blocks: Vec<_> = (0..net.n_commons())
        .map(|i| {
            if net.common_active(i) {
                blocks_for(&mut names, format!("c{i}"), &net.common_support[i])
            } else {
                vec![None; net.n_bs]
            }
        })
        .collect();
    let r_bar = names.len();
    names.push("r_bar".into());
    let private_rates: Vec<usize> = (0..net.n_groups())
        .map(|g| {
            names.push(format!("r.p{g}"));
            names.len() - 1
        })
        .collect();
    let common_rates: Vec<Option<usize>> = (0..net.n_commons())
        .map(|i| {
            net.common_active(i).then(|| {
                names.push(format!("r.c{i}"));
                names.len() - 1
            })
        })
        .collect();
    let shares: Vec<Option<Vec<usize>>> = (0..net.n_commons())
        .map(|i| {
            (net.common_shared[i] && common_rates[i].is_some()).then(|| {
                (0..net.n_groups())
                    .map(|g| {
                        names.push(format!("share.c{i}.g{g}"));
                        names.len() - 1
                    })
                    .collect()
            })
        })
        .collect();
    let layout = VariableLayout {
        n_bs: net.n_bs,
        n_antennas: l,
        p_ref,
        bandwidth_hz: b_hz,
        private_blocks,
        common_blocks,
        r_bar,
        private_rates,
        common_rates,
        shares,
    };

    let mut linear: Vec<Row> = Vec::new();
    let mut socs: Vec<Vec<Row>> = Vec::new();

    // min-rate links
    for g in 0..net.n_groups() {
        let mut row = vec![(r_bar, 1.0), (layout.private_rates[g], -1.0)];
        for &i in &net.common_credit[g] {
            let credited = match &layout.shares[i] {
                Some(share) => Some(share[g]),
                None => layout.common_rates[i],
            };
            if let Some(v) = credited {
                row.push((v, -1.0));
            }
        }
        linear.push((row, 0.0));
    }
    // shares of a shared common add up to at most its rate
    for (i, share) in layout.shares.iter().enumerate() {
        if let (Some(share), Some(r)) = (share, layout.common_rates[i]) {
            let mut row: Vec<(usize, f64)> = share.iter().map(|&v| (v, 1.0)).collect();
            row.push((r, -1.0));
            linear.push((row, 0.0));
        }
    }
    // fronthaul
    for n in 0..net.n_bs {
        let mut row = Vec::new();
        for g in 0..net.n_groups() {
            let coef = net.fronthaul_coefficient(Stream::private(g), n);
            if coef != 0.0 {
                row.push((layout.private_rates[g], coef));
            }
        }
        for i in 0..net.n_commons() {
            let coef = net.fronthaul_coefficient(Stream::common(i), n);
            if let (Some(v), true) = (layout.common_rates[i], coef != 0.0) {
                row.push((v, coef));
            }
        }
        if !row.is_empty() {
            linear.push((row, net.c_max_bps[n] / b_hz));
        }
    }
    // nonnegative rates
    let rate_vars: Vec<usize> = std::iter::once(r_bar)
        .chain(layout.private_rates.iter().copied())
        .chain(layout.common_rates.iter().flatten().copied())
        .chain(layout.shares.iter().flatten().flatten().copied())
        .collect();
    for &v in &rate_vars {
        linear.push((vec![(v, -1.0)], 0.0));
    }
    // per-BS power
    let all_streams: Vec<Stream> = (0..net.n_groups())
        .map(Stream::private)
        .chain((0..net.n_commons()).map(Stream::common))
        .collect();
    for n in 0..net.n_bs {
        let mut cone = vec![(Vec::new(), (net.p_max_w[n] / p_ref).sqrt())];
        for &s in &all_streams {
            if let Some(v) = layout.blocks(s)[n] {
                for j in v..v + 2 * l {
                    cone.push((vec![(j, -1.0)], 0.0));
                }
            }
        }
        if cone.len() > 1 {
            socs.push(cone);
        }
    }
    // surrogate rate constraints
    for (id, &(s, k)) in aux.keys.iter().enumerate() {
        let Some(rate) = layout.rate_var(s) else {
            continue;
        };
        let label = format!("stream {} at user {k}", stream_label(s));
        let y = aux.y_bar[id].map(|z| z * p_ref);
        if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical(format!("non-finite statistics for {label}")));
        }
        let mut quad_streams: Vec<Stream> = (0..net.n_groups()).map(Stream::private).collect();
        quad_streams.extend(net.residual_commons(s, k)?.into_iter().map(Stream::common));

        let mut factors: HashMap<Vec<Option<usize>>, Vec<Vec<(usize, f64)>>> = HashMap::new();
        let mut v_rows: Vec<Vec<(usize, f64)>> = Vec::new();
        for &q in &quad_streams {
            let entries = layout.entries(q);
            if entries.is_empty() {
                continue;
            }
            let mask = layout.blocks(q).iter().map(|b| b.map(|_| 0)).collect::<Vec<_>>();
            let template = match factors.get(&mask) {
                Some(t) => t,
                None => {
                    let local: Vec<(usize, usize, usize)> =
                        entries.iter().enumerate().map(|(j, &(d, _, _))| (d, 2 * j, 2 * j + 1)).collect();
                    let rows = factor_rows(&y, &local, &label)?;
                    factors.entry(mask).or_insert(rows)
                }
            };
            for row in template {
                v_rows.push(
                    row.iter()
                        .map(|&(local, c)| {
                            let (_, xr, xi) = entries[local / 2];
                            (if local % 2 == 0 { xr } else { xi }, -2.0 * c)
                        })
                        .collect(),
                );
            }
        }

        // a·x = 2 Re{f'^H x_s} − ln2 r
        let f = &aux.f_bar[id];
        let mut a = Vec::new();
        for (d, xr, xi) in layout.entries(s) {
            let fz = f[d] * sqrt_p;
            if fz.re != 0.0 {
                a.push((xr, 2.0 * fz.re));
            }
            if fz.im != 0.0 {
                a.push((xi, 2.0 * fz.im));
            }
        }
        a.push((rate, -LN_2));
        let c0 = aux.z_bar[id] - net.noise_power_w * aux.t_bar[id];
        if !c0.is_finite() || f.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical(format!("non-finite statistics for {label}")));
        }
        // divide the constraint by its own scale so weak links stay well conditioned
        let m = (net.noise_power_w * aux.t_bar[id]).max(aux.z_bar[id].abs());
        let m = if m > 0.0 { m } else { 1.0 };
        let root = m.sqrt();
        let c0 = c0 / m;
        let neg_a: Vec<(usize, f64)> = a.iter().map(|&(j, c)| (j, -c / m)).collect();
        for row in &mut v_rows {
            row.iter_mut().for_each(|(_, c)| *c /= root);
        }
        if v_rows.is_empty() {
            linear.push((neg_a, c0));
        } else {
            let mut cone = vec![(neg_a.clone(), c0 + 1.0), (neg_a, c0 - 1.0)];
            cone.extend(v_rows.into_iter().map(|r| (r, 0.0)));
            socs.push(cone);
        }
    }

    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let push = |rows: Vec<Row>, a: &mut Vec<(usize, usize, f64)>, b: &mut Vec<f64>| {
        for (coefs, rhs) in rows {
            let i = b.len();
            a.extend(coefs.into_iter().filter(|&(_, c)| c != 0.0).map(|(j, c)| (i, j, c)));
            b.push(rhs);
        }
    };
    if !linear.is_empty() {
        cones.push(Cone::Nonnegative(linear.len()));
        push(linear, &mut a, &mut b);
    }
    for cone in socs {
        cones.push(Cone::SecondOrder(cone.len()));
        push(cone, &mut a, &mut b);
    }
    let mut objective = vec![0.0; names.len()];
    objective[r_bar] = -1.0;
    Ok(ConicProblem {
        var_names: names,
        objective,
        a,
        b,
        cones,
        layout,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubproblemStatus {
    Optimal,
    Infeasible,
    MaxIters,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub status: SubproblemStatus,
    pub w: Beamformers,
    pub rates: RateAllocation,
    /// `R̄` in bit/s.
    pub objective: f64,
    pub kkt_residuals: KktResiduals,
    pub iterations: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iters: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 200,
        }
    }
}

fn to_clarabel(cones: &[Cone]) -> Vec<SupportedConeT<f64>> {
    cones
        .iter()
        .map(|c| match *c {
            Cone::Nonnegative(d) => SupportedConeT::NonnegativeConeT(d),
            Cone::SecondOrder(d) => SupportedConeT::SecondOrderConeT(d),
        })
        .collect()
}

/// Largest violation of `b − A x ∈ K`, relative to `1 + |b_i|`.
pub fn cone_violation(problem: &ConicProblem, x: &[f64]) -> f64 {
    let mut s = problem.b.clone();
    for &(i, j, v) in &problem.a {
        s[i] -= v * x[j];
    }
    let mut worst: f64 = 0.0;
    let mut row = 0;
    for cone in &problem.cones {
        let d = cone.dim();
        let block = &s[row..row + d];
        let scale = 1.0 + problem.b[row..row + d].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let excess = match cone {
            Cone::Nonnegative(_) => block.iter().fold(0.0f64, |m, v| m.max(-v)),
            Cone::SecondOrder(_) => {
                let tail = block[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                (tail - block[0]).max(0.0)
            }
        };
        worst = worst.max(excess / scale);
        row += d;
    }
    worst
}

/// Solves the subproblem; deterministic for identical inputs.
pub fn solve(problem: &ConicProblem, opts: SolveOptions) -> Result<SubproblemSolution> {
    let n = problem.n_vars();
    let m = problem.n_rows();
    let p = CscMatrix::<f64>::zeros((n, n));
    let (rows, (cols, vals)): (Vec<usize>, (Vec<usize>, Vec<f64>)) =
        problem.a.iter().map(|&(i, j, v)| (i, (j, v))).unzip();
    let a = CscMatrix::new_from_triplets(m, n, rows, cols, vals);
    let cones = to_clarabel(&problem.cones);
    let base = DefaultSettings {
        verbose: false,
        max_iter: opts.max_iters,
        tol_gap_abs: opts.tol,
        tol_gap_rel: opts.tol,
        tol_feas: opts.tol,
        max_threads: 1,
        ..DefaultSettings::default()
    };
    // retried with heavier regularization, wider equilibration bounds, no
    // equilibration and finally no presolve when the default run stalls
    let ladder = [
        base.clone(),
        DefaultSettings {
            static_regularization_constant: 1e-7,
            iterative_refinement_max_iter: 50,
            ..base.clone()
        },
        DefaultSettings {
            equilibrate_min_scaling: 1e-8,
            equilibrate_max_scaling: 1e8,
            equilibrate_max_iter: 50,
            ..base.clone()
        },
        DefaultSettings {
            equilibrate_enable: false,
            ..base.clone()
        },
        DefaultSettings {
            presolve_enable: false,
            static_regularization_proportional: 1e-12,
            ..base
        },
    ];
    let mut last = None;
    for settings in ladder {
        let mut solver = DefaultSolver::new(&p, &problem.objective, &a, &problem.b, &cones, settings)
            .map_err(|e| Error::Solver(format!("{e:?}")))?;
        solver.solve();
        let done = matches!(solver.solution.status, SolverStatus::Solved | SolverStatus::AlmostSolved);
        last = Some(solver);
        if done {
            break;
        }
    }
    let solver = last.expect("ladder is nonempty");

    let x = solver.solution.x.clone();
    let status = match solver.solution.status {
        SolverStatus::Solved => SubproblemStatus::Optimal,
        SolverStatus::AlmostSolved if cone_violation(problem, &x) <= 1e-7 => SubproblemStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SubproblemStatus::Infeasible,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => SubproblemStatus::MaxIters,
        _ => SubproblemStatus::NumericalFailure,
    };
    let info = &solver.info;
    let kkt = KktResiduals {
        primal: info.res_primal,
        dual: info.res_dual,
        gap: info.gap_rel.min(info.gap_abs),
    };
    let (w, rates) = extract(&problem.layout, &x);
    Ok(SubproblemSolution {
        status,
        objective: rates.r_bar,
        w,
        rates,
        kkt_residuals: kkt,
        iterations: info.iterations,
    })
}

fn extract(layout: &VariableLayout, x: &[f64]) -> (Beamformers, RateAllocation) {
    let l = layout.n_antennas;
    let scale = layout.p_ref.sqrt();
    let fill = |blocks: &[Option<usize>]| -> Vec<Complex64> {
        let mut w = vec![Complex64::new(0.0, 0.0); layout.n_bs * l];
        for (n, start) in blocks.iter().enumerate() {
            if let Some(v) = *start {
                for a in 0..l {
                    w[n * l + a] = Complex64::new(x[v + a], x[v + l + a]) * scale;
                }
            }
        }
        w
    };
    let w = Beamformers {
        n_bs: layout.n_bs,
        n_antennas: l,
        private: layout.private_blocks.iter().map(|b| fill(b)).collect(),
        common: layout.common_blocks.iter().map(|b| fill(b)).collect(),
    };
    let rate = |v: usize| x[v].max(0.0) * layout.bandwidth_hz;
    let rates = RateAllocation {
        r_bar: rate(layout.r_bar),
        private: layout.private_rates.iter().map(|&v| rate(v)).collect(),
        common: layout.common_rates.iter().map(|v| v.map_or(0.0, rate)).collect(),
        shares: layout
            .shares
            .iter()
            .map(|share| share.as_ref().map_or_else(Vec::new, |s| s.iter().map(|&v| rate(v)).collect()))
            .collect(),
    };
    (w, rates)
}

/// Largest violation of the subproblem at `sol`, re-evaluated in complex
/// arithmetic: network constraints relative to their budgets and surrogate
/// rate constraints relative to the magnitude of their terms.
pub fn independent_violation(net: &Network, aux: &AuxiliaryStats, w: &Beamformers, rates: &RateAllocation) -> Result<f64> {
    let report = check_constraints(net, w, rates);
    if !report.masks_respected {
        return Ok(f64::INFINITY);
    }
    let mut worst = report.power.max(report.fronthaul).max(report.min_rate_link).max(report.negativity).max(0.0);
    for (id, &(s, _)) in aux.keys.iter().enumerate() {
        if s.kind == StreamKind::Common && !net.common_active(s.index) {
            continue;
        }
        let (v, mag) = surrogate_constraint(net, aux, id, w, rates.rate(s))?;
        worst = worst.max(v / mag.max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::SampleSet;
    use crate::scenario::{CachePlacement, CsitMode};
    use crate::wmmse::tests::scalar_network;
    use crate::wmmse::update_aux;

    fn scalar_aux(net: &Network, w: f64) -> AuxiliaryStats {
        let samples = SampleSet::from_channels(CsitMode::Full, vec![vec![vec![Complex64::new(1.0, 0.0)]]]).unwrap();
        let mut bf = Beamformers::for_network(net);
        bf.private[0][0] = Complex64::new(w, 0.0);
        update_aux(net, &bf, &samples).unwrap().1
    }

    #[test]
    fn scalar_case_matches_hand_substitution() {
        let net = scalar_network(false);
        let aux = scalar_aux(&net, 1.0);
        let problem = build_subproblem(&net, &aux).unwrap();
        let sol = solve(&problem, SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SubproblemStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-6, "{}", sol.objective);
        assert!((sol.w.private[0][0].norm_sqr() - 1.0).abs() < 1e-6);
        let (v, mag) = surrogate_constraint(&net, &aux, 0, &sol.w, sol.rates.private[0]).unwrap();
        assert!(v <= 1e-6 * mag);
    }

    #[test]
    fn zero_statistics_force_zero_rates() {
        let net = scalar_network(false);
        let aux = scalar_aux(&net, 0.0);
        let sol = solve(&build_subproblem(&net, &aux).unwrap(), SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SubproblemStatus::Optimal);
        assert!(sol.objective.abs() < 1e-7);
    }

    #[test]
    fn zero_power_budget_pins_precoders() {
        let mut net = scalar_network(false);
        net.p_max_w = vec![0.0];
        let aux = scalar_aux(&net, 0.0);
        let problem = build_subproblem(&net, &aux).unwrap();
        assert!(problem.layout.private_blocks[0][0].is_none());
        let sol = solve(&problem, SolveOptions::default()).unwrap();
        assert!(sol.objective.abs() < 1e-7);
        assert_eq!(sol.w.private[0][0], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn zero_fronthaul_without_cache_forces_zero_rates() {
        let mut net = scalar_network(true);
        net.c_max_bps = vec![0.0];
        let mut bf = Beamformers::for_network(&net);
        bf.private[0][0] = Complex64::new(0.8, 0.0);
        bf.common[0][0] = Complex64::new(0.5, 0.0);
        let samples = SampleSet::from_channels(CsitMode::Full, vec![vec![vec![Complex64::new(1.0, 0.0)]]]).unwrap();
        let aux = update_aux(&net, &bf, &samples).unwrap().1;
        let sol = solve(&build_subproblem(&net, &aux).unwrap(), SolveOptions::default()).unwrap();
        assert!(sol.rates.private[0] < 1e-7 && sol.rates.common[0] < 1e-7);
    }

    #[test]
    fn full_cache_drops_fronthaul_rows() {
        let mut net = scalar_network(true);
        let aux = scalar_aux(&net, 1.0);
        let with = build_subproblem(&net, &aux).unwrap();
        net.placement = CachePlacement::full(1, 1);
        let without = build_subproblem(&net, &aux).unwrap();
        assert_eq!(with.n_rows(), without.n_rows() + 1);
    }

    #[test]
    fn solution_passes_independent_check() {
        let net = scalar_network(true);
        let mut bf = Beamformers::for_network(&net);
        bf.private[0][0] = Complex64::new(0.6, 0.1);
        bf.common[0][0] = Complex64::new(0.3, -0.2);
        let samples = SampleSet::from_channels(
            CsitMode::Statistical,
            vec![vec![vec![Complex64::new(1.0, 0.2)]], vec![vec![Complex64::new(-0.4, 0.9)]]],
        )
        .unwrap();
        let aux = update_aux(&net, &bf, &samples).unwrap().1;
        let sol = solve(&build_subproblem(&net, &aux).unwrap(), SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SubproblemStatus::Optimal);
        assert!(check_constraints(&net, &sol.w, &sol.rates).satisfied(1e-6));
        for (id, &(s, _)) in aux.keys.iter().enumerate() {
            let (v, mag) = surrogate_constraint(&net, &aux, id, &sol.w, sol.rates.rate(s)).unwrap();
            assert!(v <= 1e-6 * mag.max(1.0), "{v}");
        }
    }

    #[test]
    fn dump_lists_every_row() {
        let net = scalar_network(false);
        let problem = build_subproblem(&net, &scalar_aux(&net, 1.0)).unwrap();
        let mut buf = Vec::new();
        problem.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains(&format!("rows {}", problem.n_rows())));
        assert_eq!(text.lines().filter(|l| l.starts_with("a ")).count(), problem.a.len());
        assert!(text.contains("var 0 w.p0.bs0.re0"));
    }
}
