use std::collections::BTreeMap;

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use super::{heuristic_r, input_stream, median, rounding_stream, Addends, ExperimentKind, ExperimentSpec, Row};
use crate::entropy::{BitSource, Xoroshiro128Plus};
use crate::error::{Error, Result};
use crate::format::FloatFormat;
use crate::real::{rational_to_f64, WorkingReal};
use crate::rounding::{round_deterministic, Rounding, RoundingMode, SrConfig};

/// A row with its sort key: (mode index, grid index, trial).
type Keyed = ((usize, usize, u32), Row);

struct Rounder<'a> {
    fmt: &'a FloatFormat,
    mode: &'a Rounding,
    src: Xoroshiro128Plus,
}

impl Rounder<'_> {
    fn round(&mut self, x: &WorkingReal) -> Result<WorkingReal> {
        let out = self.mode.apply(self.fmt, x, &mut self.src)?;
        out.value.into_finite().map_err(|_| {
            Error::Domain(format!("{} overflowed {} under {}", x, self.fmt, self.mode.label()))
        })
    }

    fn add(&mut self, a: &WorkingReal, b: &WorkingReal) -> Result<WorkingReal> {
        self.round(&(a + b))
    }

    fn mul(&mut self, a: &WorkingReal, b: &WorkingReal) -> Result<WorkingReal> {
        self.round(&(a * b))
    }
}

fn nearest(fmt: &FloatFormat, x: &WorkingReal) -> Result<WorkingReal> {
    round_deterministic(fmt, x, RoundingMode::Rne).into_real()
}

/// Uniform on [0, 1) with 53 random bits, rounded to nearest into `fmt`.
fn uniform(fmt: &FloatFormat, src: &mut dyn BitSource) -> Result<WorkingReal> {
    let bits = src.next_bits(53)?;
    nearest(fmt, &WorkingReal::new(false, bits.into(), -53))
}

fn addends(spec: &ExperimentSpec, which: &Addends, count: u64, t: u32) -> Result<Vec<WorkingReal>> {
    match which {
        Addends::Uniform => {
            let mut src = input_stream(spec.seed, t);
            (0..count).map(|_| uniform(&spec.fmt, &mut src)).collect()
        }
        Addends::Constant(c) => {
            let c = nearest(&spec.fmt, c)?;
            Ok(vec![c; count as usize])
        }
    }
}

fn max_n(spec: &ExperimentSpec) -> u64 {
    *spec.n_grid.iter().max().expect("validated non-empty")
}

/// Grid indices keyed by the problem size they record.
fn checkpoints(grid: &[u64]) -> BTreeMap<u64, Vec<usize>> {
    let mut map: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &n) in grid.iter().enumerate() {
        map.entry(n).or_default().push(i);
    }
    map
}

fn per_trial<F>(spec: &ExperimentSpec, f: F) -> Result<Vec<Keyed>>
where
    F: Fn(u32) -> Result<Vec<Keyed>> + Sync + Send,
{
    let parts: Vec<Vec<Keyed>> = (0..spec.trials).into_par_iter().map(f).collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

pub(super) fn run(spec: &ExperimentSpec) -> Result<(Vec<Row>, Map<String, Value>)> {
    let mut extra = Map::new();
    let mut rows = match &spec.kind {
        ExperimentKind::Stagnation { acc0, delta } => stagnation(spec, acc0, delta)?,
        ExperimentKind::SumGrowth { addends } => recursive_sum(spec, addends)?,
        ExperimentKind::Pairwise { addends } => pairwise(spec, addends)?,
        ExperimentKind::Dot => dot(spec)?,
        ExperimentKind::Horner { point } => horner(spec, point)?,
        ExperimentKind::RSweep { r_grid, intermediate } => {
            let modes: Vec<Rounding> = r_grid
                .iter()
                .map(|&r| {
                    Ok(if r == 0 {
                        Rounding::Deterministic(intermediate.as_mode())
                    } else {
                        Rounding::Stochastic(SrConfig::limited(r, *intermediate)?)
                    })
                })
                .collect::<Result<_>>()?;
            let n = spec.n_grid[0];
            let sweep = ExperimentSpec {
                modes,
                n_grid: vec![n],
                ..spec.clone()
            };
            let mut rows = recursive_sum(&sweep, &Addends::Uniform)?;
            for ((m, _, _), row) in &mut rows {
                row.r = Some(r_grid[*m]);
            }
            extra.extend(sweep_summary(&rows, r_grid, n));
            rows
        }
        ExperimentKind::Gd { dim, step } => {
            let (rows, diverged) = gd(spec, *dim, step)?;
            extra.insert("diverged".into(), json!(diverged));
            rows
        }
    };
    rows.sort_by_key(|(k, _)| *k);
    Ok((rows.into_iter().map(|(_, r)| r).collect(), extra))
}

fn stagnation(spec: &ExperimentSpec, acc0: &WorkingReal, delta: &WorkingReal) -> Result<Vec<Keyed>> {
    let n = spec.n_grid[0];
    let exact = acc0 + &(&WorkingReal::from_int(n as i64) * delta);
    let jobs: Vec<(usize, u32)> = spec
        .modes
        .iter()
        .enumerate()
        .flat_map(|(m, mode)| {
            let trials = if mode.is_deterministic() { 1 } else { spec.trials };
            (0..trials).map(move |t| (m, t))
        })
        .collect();
    jobs.into_par_iter()
        .map(|(m, t)| {
            let mode = &spec.modes[m];
            let mut rd = Rounder { fmt: &spec.fmt, mode, src: rounding_stream(spec.seed, m, 0, t) };
            let mut acc = rd.round(acc0)?;
            for _ in 0..n {
                acc = rd.add(&acc, delta)?;
            }
            Ok(((m, 0, t), Row::new(mode.label(), n, mode.random_bits(), t, acc, exact.clone())))
        })
        .collect()
}

fn recursive_sum(spec: &ExperimentSpec, which: &Addends) -> Result<Vec<Keyed>> {
    let top = max_n(spec);
    let marks = checkpoints(&spec.n_grid);
    per_trial(spec, |t| {
        let xs = addends(spec, which, top, t)?;
        let mut exact_at: BTreeMap<u64, WorkingReal> = BTreeMap::new();
        let mut exact = WorkingReal::zero();
        for (i, x) in xs.iter().enumerate() {
            exact = &exact + x;
            if marks.contains_key(&(i as u64 + 1)) {
                exact_at.insert(i as u64 + 1, exact.clone());
            }
        }
        let mut out = Vec::new();
        for (m, mode) in spec.modes.iter().enumerate() {
            let mut rd = Rounder { fmt: &spec.fmt, mode, src: rounding_stream(spec.seed, m, 0, t) };
            let mut s = xs[0].clone();
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    s = rd.add(&s, x)?;
                }
                let count = i as u64 + 1;
                if let Some(gis) = marks.get(&count) {
                    for &g in gis {
                        let row = Row::new(mode.label(), count, mode.random_bits(), t, s.clone(), exact_at[&count].clone());
                        out.push(((m, g, t), row));
                    }
                }
            }
        }
        Ok(out)
    })
}

fn pairwise_sum(rd: &mut Rounder<'_>, xs: &[WorkingReal]) -> Result<WorkingReal> {
    if xs.len() == 1 {
        return Ok(xs[0].clone());
    }
    let (l, r) = xs.split_at(xs.len() / 2);
    let a = pairwise_sum(rd, l)?;
    let b = pairwise_sum(rd, r)?;
    rd.add(&a, &b)
}

fn pairwise(spec: &ExperimentSpec, which: &Addends) -> Result<Vec<Keyed>> {
    let top = max_n(spec);
    per_trial(spec, |t| {
        let xs = addends(spec, which, top, t)?;
        let mut out = Vec::new();
        for (g, &n) in spec.n_grid.iter().enumerate() {
            let part = &xs[..n as usize];
            let exact = part.iter().fold(WorkingReal::zero(), |acc, x| &acc + x);
            for (m, mode) in spec.modes.iter().enumerate() {
                let mut rd = Rounder { fmt: &spec.fmt, mode, src: rounding_stream(spec.seed, m, g, t) };
                let s = pairwise_sum(&mut rd, part)?;
                out.push(((m, g, t), Row::new(mode.label(), n, mode.random_bits(), t, s, exact.clone())));
            }
        }
        Ok(out)
    })
}

fn dot(spec: &ExperimentSpec) -> Result<Vec<Keyed>> {
    let top = max_n(spec);
    let marks = checkpoints(&spec.n_grid);
    per_trial(spec, |t| {
        let mut src = input_stream(spec.seed, t);
        let pairs: Vec<(WorkingReal, WorkingReal)> = (0..top)
            .map(|_| Ok((uniform(&spec.fmt, &mut src)?, uniform(&spec.fmt, &mut src)?)))
            .collect::<Result<_>>()?;
        let mut exact_at = BTreeMap::new();
        let mut exact = WorkingReal::zero();
        for (i, (x, y)) in pairs.iter().enumerate() {
            exact = &exact + &(x * y);
            if marks.contains_key(&(i as u64 + 1)) {
                exact_at.insert(i as u64 + 1, exact.clone());
            }
        }
        let mut out = Vec::new();
        for (m, mode) in spec.modes.iter().enumerate() {
            let mut rd = Rounder { fmt: &spec.fmt, mode, src: rounding_stream(spec.seed, m, 0, t) };
            let mut s = WorkingReal::zero();
            for (i, (x, y)) in pairs.iter().enumerate() {
                let p = rd.mul(x, y)?;
                s = if i == 0 { p } else { rd.add(&s, &p)? };
                let count = i as u64 + 1;
                if let Some(gis) = marks.get(&count) {
                    for &g in gis {
                        let row = Row::new(mode.label(), count, mode.random_bits(), t, s.clone(), exact_at[&count].clone());
                        out.push(((m, g, t), row));
                    }
                }
            }
        }
        Ok(out)
    })
}

fn horner(spec: &ExperimentSpec, point: &WorkingReal) -> Result<Vec<Keyed>> {
    let top = max_n(spec);
    let x = nearest(&spec.fmt, point)?;
    per_trial(spec, |t| {
        let mut src = input_stream(spec.seed, t);
        let coeffs: Vec<WorkingReal> = (0..=top).map(|_| uniform(&spec.fmt, &mut src)).collect::<Result<_>>()?;
        let mut out = Vec::new();
        for (g, &n) in spec.n_grid.iter().enumerate() {
            let c = &coeffs[..=n as usize];
            let exact = c.iter().rev().skip(1).fold(c[n as usize].clone(), |p, a| &(&p * &x) + a);
            for (m, mode) in spec.modes.iter().enumerate() {
                let mut rd = Rounder { fmt: &spec.fmt, mode, src: rounding_stream(spec.seed, m, g, t) };
                let mut p = c[n as usize].clone();
                for a in c.iter().rev().skip(1) {
                    let px = rd.mul(&p, &x)?;
                    p = rd.add(&px, a)?;
                }
                out.push(((m, g, t), Row::new(mode.label(), n, mode.random_bits(), t, p, exact.clone())));
            }
        }
        Ok(out)
    })
}

fn sweep_summary(rows: &[Keyed], r_grid: &[u32], n: u64) -> Map<String, Value> {
    let mut medians: Vec<(u32, f64)> = Vec::new();
    for (m, &r) in r_grid.iter().enumerate() {
        let mut errs: Vec<f64> = rows.iter().filter(|((mi, _, _), _)| *mi == m).map(|(_, row)| row.rel_err).collect();
        medians.push((r, median(&mut errs)));
    }
    let (_, reference) = *medians.iter().max_by_key(|(r, _)| *r).expect("non-empty grid");
    let knee = medians
        .iter()
        .filter(|(_, e)| *e <= 2.0 * reference)
        .map(|(r, _)| *r)
        .min();
    let mut map = Map::new();
    map.insert("n".into(), json!(n));
    map.insert("heuristic_r".into(), json!(heuristic_r(n)));
    map.insert("knee_r".into(), json!(knee));
    map.insert(
        "median_rel_err_by_r".into(),
        Value::Object(medians.iter().map(|(r, e)| (r.to_string(), json!(e))).collect()),
    );
    map
}

fn pow(x: &WorkingReal, mut k: u64) -> WorkingReal {
    let mut base = x.clone();
    let mut acc = WorkingReal::one();
    while k > 0 {
        if k & 1 == 1 {
            acc = &acc * &base;
        }
        base = &base * &base;
        k >>= 1;
    }
    acc
}

fn squared_norm<'a>(v: impl Iterator<Item = &'a WorkingReal>) -> WorkingReal {
    v.fold(WorkingReal::zero(), |acc, x| &acc + &(x * x))
}

const DIVERGENCE: f64 = 1e6;

/// Rows hold squared distances to `w*` in `final`/`exact` (rounded run and
/// exact-arithmetic run); `abs_err` is the distance and `rel_err` the distance
/// relative to the starting distance `‖w*‖`.
fn gd(spec: &ExperimentSpec, dim: usize, step: &WorkingReal) -> Result<(Vec<Keyed>, BTreeMap<String, u32>)> {
    let iters = spec.n_grid[0];
    let contraction = &WorkingReal::one() - step;
    let shrink = pow(&contraction, 2 * iters);
    let rows = per_trial(spec, |t| {
        let mut src = input_stream(spec.seed, t);
        let target: Vec<WorkingReal> = (0..dim).map(|_| uniform(&spec.fmt, &mut src)).collect::<Result<_>>()?;
        let start = squared_norm(target.iter());
        let exact = &shrink * &start;
        let mut out = Vec::new();
        for (m, mode) in spec.modes.iter().enumerate() {
            let mut rd = Rounder { fmt: &spec.fmt, mode, src: rounding_stream(spec.seed, m, 0, t) };
            let mut w = vec![WorkingReal::zero(); dim];
            'outer: for _ in 0..iters {
                for (wi, ti) in w.iter_mut().zip(&target) {
                    let g = rd.round(&(&*wi - ti))?;
                    let u = rd.mul(step, &g)?;
                    *wi = rd.round(&(&*wi - &u))?;
                    if wi.to_f64().abs() > DIVERGENCE {
                        break 'outer;
                    }
                }
            }
            let diff: Vec<WorkingReal> = w.iter().zip(&target).map(|(a, b)| a - b).collect();
            let final_sq = squared_norm(diff.iter());
            let dist = final_sq.to_f64().sqrt();
            let rel = if start.is_zero() { 0.0 } else { rational_to_f64(&(final_sq.to_rational() / start.to_rational())).sqrt() };
            out.push((
                (m, 0, t),
                Row {
                    mode: mode.label(),
                    n: iters,
                    r: mode.random_bits(),
                    trial: t,
                    final_value: final_sq,
                    exact: exact.clone(),
                    abs_err: dist,
                    rel_err: rel,
                },
            ));
        }
        Ok(out)
    })?;
    let mut diverged: BTreeMap<String, u32> = spec.modes.iter().map(|m| (m.label(), 0)).collect();
    for (_, row) in &rows {
        if row.abs_err > DIVERGENCE || !row.abs_err.is_finite() {
            *diverged.get_mut(&row.mode).expect("mode") += 1;
        }
    }
    Ok((rows, diverged))
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use crate::rounding::{Intermediate, RoundingMode, SrConfig};

    fn b16() -> FloatFormat {
        FloatFormat::preset("binary16").unwrap()
    }

    fn rne() -> Rounding {
        Rounding::Deterministic(RoundingMode::Rne)
    }

    fn exact_sr() -> Rounding {
        Rounding::Stochastic(SrConfig::exact())
    }

    #[test]
    fn stagnation_example() {
        let kind = ExperimentKind::Stagnation { acc0: WorkingReal::one(), delta: WorkingReal::pow2(-13) };
        let spec = ExperimentSpec::new(kind, b16(), vec![rne(), exact_sr()], vec![4096])
            .with_trials(100)
            .with_seed(2026);
        let res = run_experiment(&spec).unwrap();
        let rne_rows: Vec<&Row> = res.rows.iter().filter(|r| r.mode == "rne").collect();
        assert_eq!(rne_rows.len(), 1);
        assert_eq!(rne_rows[0].final_value, WorkingReal::one());
        assert_eq!(rne_rows[0].exact.to_f64(), 1.5);
        let mean = res.summary_for("sr-exact", 4096, None).unwrap().mean_final;
        assert!((1.45..=1.55).contains(&mean), "{mean}");
    }

    #[test]
    fn rne_stays_put_for_ulp_over_two_delta_steps() {
        let delta = WorkingReal::pow2(-12);
        // ulp(1) / (2 delta) = 2 steps at least; check many more since ties go to even.
        let kind = ExperimentKind::Stagnation { acc0: WorkingReal::one(), delta };
        for n in [1u64, 2, 100] {
            let spec = ExperimentSpec::new(kind.clone(), b16(), vec![rne()], vec![n]);
            assert_eq!(run_experiment(&spec).unwrap().rows[0].final_value, WorkingReal::one());
        }
    }

    #[test]
    fn single_addend_has_no_error() {
        let spec = ExperimentSpec::new(
            ExperimentKind::SumGrowth { addends: Addends::Uniform },
            b16(),
            vec![rne(), exact_sr()],
            vec![1, 4],
        )
        .with_trials(5);
        let res = run_experiment(&spec).unwrap();
        assert!(res.rows.iter().filter(|r| r.n == 1).all(|r| r.abs_err == 0.0));
        assert_eq!(res.rows.len(), 2 * 2 * 5);
    }

    #[test]
    fn pairwise_ones_are_exact() {
        let spec = ExperimentSpec::new(
            ExperimentKind::Pairwise { addends: Addends::Constant(WorkingReal::one()) },
            b16(),
            vec![rne(), exact_sr()],
            vec![1, 2, 64, 2048],
        );
        let res = run_experiment(&spec).unwrap();
        assert!(res.rows.iter().all(|r| r.abs_err == 0.0 && r.final_value == WorkingReal::from_int(r.n as i64)));
    }

    #[test]
    fn gd_with_zero_step_does_nothing() {
        let kind = ExperimentKind::Gd { dim: 4, step: WorkingReal::zero() };
        let spec = ExperimentSpec::new(kind, b16(), vec![rne(), exact_sr()], vec![10]).with_trials(2);
        let res = run_experiment(&spec).unwrap();
        for row in &res.rows {
            assert_eq!(row.final_value, row.exact);
            assert_eq!(row.rel_err, 1.0);
        }
    }

    #[test]
    fn gd_exact_reference_converges() {
        let kind = ExperimentKind::Gd { dim: 16, step: WorkingReal::pow2(-4) };
        let spec = ExperimentSpec::new(kind, b16(), vec![rne()], vec![2000]);
        let res = run_experiment(&spec).unwrap();
        assert!(res.rows[0].exact.to_f64().sqrt() < 1e-6);
        assert_eq!(res.extra["diverged"]["rne"], 0);
    }

    #[test]
    fn dot_and_horner_run() {
        let modes = vec![rne(), Rounding::Stochastic(SrConfig::limited(8, Intermediate::Truncate).unwrap())];
        let spec = ExperimentSpec::new(ExperimentKind::Dot, b16(), modes.clone(), vec![16, 64, 256]).with_trials(3);
        let res = run_experiment(&spec).unwrap();
        assert_eq!(res.rows.len(), 2 * 3 * 3);
        assert!(res.slopes.contains_key("rne"));
        let kind = ExperimentKind::Horner { point: WorkingReal::from_f64(0.99).unwrap() };
        let spec = ExperimentSpec::new(kind, b16(), modes, vec![8, 64]).with_trials(3);
        let res = run_experiment(&spec).unwrap();
        assert!(res.rows.iter().all(|r| r.rel_err < 0.5));
    }

    #[test]
    fn r_sweep_reports_heuristic() {
        let kind = ExperimentKind::RSweep { r_grid: vec![0, 2, 6], intermediate: Intermediate::Truncate };
        let spec = ExperimentSpec::new(kind, b16(), vec![], vec![256]).with_trials(4);
        let res = run_experiment(&spec).unwrap();
        assert_eq!(res.extra["heuristic_r"], 4);
        assert_eq!(res.rows[0].mode, "rz");
        assert_eq!(res.rows[0].r, Some(0));
        assert_eq!(res.rows.last().unwrap().r, Some(6));
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let spec = ExperimentSpec::new(
            ExperimentKind::SumGrowth { addends: Addends::Uniform },
            b16(),
            vec![rne(), exact_sr()],
            vec![16, 128],
        )
        .with_trials(6)
        .with_seed(99);
        let one = run_experiment(&spec.clone().with_threads(Some(1))).unwrap().to_csv();
        let four = run_experiment(&spec.with_threads(Some(4))).unwrap().to_csv();
        assert_eq!(one, four);
        assert!(one.starts_with(CSV_HEADER));
    }

    #[test]
    fn validation() {
        let spec = ExperimentSpec::new(ExperimentKind::Dot, b16(), vec![rne()], vec![]);
        assert!(run_experiment(&spec).is_err());
        let spec = ExperimentSpec::new(ExperimentKind::Dot, b16(), vec![], vec![4]);
        assert!(run_experiment(&spec).is_err());
        let spec = ExperimentSpec::new(ExperimentKind::Dot, b16(), vec![rne()], vec![4]).with_trials(0);
        assert!(run_experiment(&spec).is_err());
    }
}
