//! Numerical invariants of the measure and design algebra, checked on
//! randomly drawn measures and designs over a handful of small models.

use nalgebra::DMatrix;
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use fracdesign::design::{a_value, info_of_design, score, v_matrix};
use fracdesign::measure::{
    directional_derivative, info_of_measure, multiplicative_step, optimize, phi, variance_functions, DEFAULT_MAX_ITER,
};
use fracdesign::{DesignMeasure, ExactDesign, FactorialSpace, ModelMatrices, RequirementSet};

const MODELS: [(&[usize], &str); 5] = [
    (&[2, 2, 2, 2], "1;2;3;4;1x2;3x4"),
    (&[2, 3, 4], "1;2;3;2x3"),
    (&[3, 3], "1;2"),
    (&[2, 2, 2, 3], "1;2;3;4;1x4;2x4"),
    (&[2, 2, 3], "1;2;3;1x3"),
];

pub fn models() -> Vec<ModelMatrices> {
    MODELS
        .iter()
        .map(|(levels, effects)| {
            let space = FactorialSpace::new(levels.to_vec()).unwrap();
            let r = RequirementSet::parse(&space, effects).unwrap();
            ModelMatrices::build(&space, &r).unwrap()
        })
        .collect()
}

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Model index with a full-support measure whose masses span several orders of magnitude.
fn measure_strategy(vs: Vec<usize>) -> impl Strategy<Value = (usize, DesignMeasure)> {
    (0..vs.len()).prop_flat_map(move |i| {
        vec(-8.0f64..0.0, vs[i])
            .prop_map(move |u| (i, DesignMeasure::normalized(u.iter().map(|x| x.exp()).collect()).unwrap()))
    })
}

fn two_measures(vs: Vec<usize>) -> impl Strategy<Value = (usize, DesignMeasure, DesignMeasure, f64)> {
    (0..vs.len()).prop_flat_map(move |i| {
        let m = || {
            vec(-8.0f64..0.0, vs[i])
                .prop_map(|u| DesignMeasure::normalized(u.iter().map(|x| x.exp()).collect()).unwrap())
        };
        (Just(i), m(), m(), 0.01f64..0.99)
    })
}

fn design_strategy(vs: Vec<usize>, max_rep: u32) -> impl Strategy<Value = (usize, ExactDesign)> {
    (0..vs.len()).prop_flat_map(move |i| {
        vec(0..=max_rep, vs[i]).prop_filter_map("empty design", move |r| ExactDesign::new(r).ok().map(|d| (i, d)))
    })
}

fn fail(msg: String) -> TestCaseError {
    TestCaseError::fail(msg)
}

pub type Check = (&'static str, Result<(), String>);

/// Runs every property and returns one result per property.
pub fn run_all() -> Vec<Check> {
    let mms = models();
    let vs: Vec<usize> = mms.iter().map(|m| m.v()).collect();
    let mut out: Vec<Check> = Vec::new();

    let r = runner(100).run(&two_measures(vs.clone()), |(i, p, pt, eps)| {
        let mm = &mms[i];
        let mix = p.mix(&pt, eps);
        let (a, b, c) = (phi(&p, mm).unwrap(), phi(&pt, mm).unwrap(), phi(&mix, mm).unwrap());
        let (Some(a), Some(b), Some(c)) = (a, b, c) else { return Ok(()) };
        let rhs = (1.0 - eps) * a + eps * b;
        if c > rhs + 1e-9 * rhs.max(1.0) {
            return Err(fail(format!("phi(mix) = {c} exceeds {rhs}")));
        }
        Ok(())
    });
    out.push(("convexity of phi", r.map_err(|e| e.to_string())));

    let r = runner(100).run(&two_measures(vs.clone()), |(i, p, pt, eps)| {
        let mm = &mms[i];
        let z = mm.z();
        let diff = DMatrix::from_iterator(mm.v(), 1, pt.masses().iter().zip(p.masses()).map(|(a, b)| a - b));
        let zd = z.transpose() * diff;
        let expected = info_of_measure(&p, mm).unwrap() * (1.0 - eps)
            + info_of_measure(&pt, mm).unwrap() * eps
            + &zd * zd.transpose() * (eps * (1.0 - eps));
        let err = max_abs(&(info_of_measure(&p.mix(&pt, eps), mm).unwrap() - expected));
        if err > 1e-12 {
            return Err(fail(format!("mixture identity off by {err:e}")));
        }
        Ok(())
    });
    out.push(("mixture identity of M", r.map_err(|e| e.to_string())));

    let r = runner(100).run(&two_measures(vs.clone()), |(i, p, pt, _)| {
        let mm = &mms[i];
        let dd = directional_derivative(&p, &pt, mm).unwrap();
        let f0 = phi(&p, mm).unwrap().unwrap();
        let quotient = |h: f64| (phi(&p.mix(&pt, h), mm).unwrap().unwrap() - f0) / h;
        // step small enough that no mass moves by more than a tiny fraction
        let h = 1e-3 * p.masses().iter().cloned().fold(1.0, f64::min);
        let fd = (4.0 * quotient(h / 2.0) - quotient(h)) / 3.0;
        let rel = (fd - dd).abs() / dd.abs().max(1.0);
        if rel > 1e-4 {
            return Err(fail(format!("derivative {dd} vs finite difference {fd}")));
        }
        Ok(())
    });
    out.push(("directional derivative", r.map_err(|e| e.to_string())));

    let r = runner(100).run(&(measure_strategy(vs.clone()), any::<u64>()), |((i, p), mask)| {
        let mm = &mms[i];
        // zero some masses while keeping M(p) nonsingular
        let sparse: Vec<f64> = p
            .masses()
            .iter()
            .enumerate()
            .map(|(k, &x)| if (mask >> (k % 64)) & 1 == 1 && k % 3 == 0 { 0.0 } else { x })
            .collect();
        let p = DesignMeasure::normalized(sparse).unwrap();
        let Ok(next) = multiplicative_step(&p, mm) else { return Ok(()) };
        let sum: f64 = next.masses().iter().sum();
        if (sum - 1.0).abs() > 1e-12 || next.masses().iter().any(|&x| !(x >= 0.0)) {
            return Err(fail(format!("step left the simplex (sum {sum})")));
        }
        if p.masses().iter().zip(next.masses()).any(|(&a, &b)| a == 0.0 && b != 0.0) {
            return Err(fail("step revived a zero mass".into()));
        }
        Ok(())
    });
    out.push(("multiplicative step stays on the simplex", r.map_err(|e| e.to_string())));

    let r: Result<(), String> = mms.iter().try_for_each(|mm| {
        let t = 1e-10;
        let opt = optimize(mm, t, DEFAULT_MAX_ITER).map_err(|e| e.to_string())?;
        let tr = phi(&opt.p_hat, mm).unwrap().unwrap();
        let d = variance_functions(&opt.p_hat, mm).unwrap();
        let gap = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - tr;
        if gap > t || (opt.s - (tr - t)).abs() > 1e-9 * tr {
            return Err(format!("v = {}: terminal gap {gap:e}, s = {} vs {}", mm.v(), opt.s, tr - t));
        }
        Ok(())
    });
    out.push(("optimizer stopping rule", r));

    let r = runner(100).run(&design_strategy(vs.clone(), 2), |(i, d)| {
        let mm = &mms[i];
        let Ok(v) = v_matrix(&d, mm) else { return Ok(()) };
        let lhs = projected_variance(&d, mm);
        let err = max_abs(&(lhs - (v.clone() - mm.w())));
        if err > 1e-8 * max_abs(&v).max(1.0) {
            return Err(fail(format!("projected variance differs from V - W by {err:e}")));
        }
        Ok(())
    });
    out.push(("V - W via explicit orthocomplement", r.map_err(|e| e.to_string())));

    let binary = runner(200).run(&design_strategy(vs.clone(), 1), |(i, d)| {
        let mm = &mms[i];
        let (Ok(v), Ok(h)) = (v_matrix(&d, mm), info_of_design(&d, mm)) else { return Ok(()) };
        let Some(h_inv) = h.try_inverse() else { return Ok(()) };
        let err = max_abs(&(v - h_inv));
        if err > 1e-9 {
            return Err(fail(format!("binary design: V differs from H^-1 by {err:e}")));
        }
        Ok(())
    });
    let nonbinary = runner(200).run(&design_strategy(vs.clone(), 3), |(i, d)| {
        let mm = &mms[i];
        let (Ok(v), Ok(h)) = (v_matrix(&d, mm), info_of_design(&d, mm)) else { return Ok(()) };
        let Some(h_inv) = h.try_inverse() else { return Ok(()) };
        let diff = v - h_inv;
        let sym = (&diff + diff.transpose()) * 0.5;
        let lmin = sym.symmetric_eigen().eigenvalues.min();
        if lmin < -1e-9 {
            return Err(fail(format!("V - H^-1 has eigenvalue {lmin:e}")));
        }
        Ok(())
    });
    out.push(("V = H^-1 for binary designs, V - H^-1 nnd otherwise", binary.and(nonbinary).map_err(|e| e.to_string())));

    let r = runner(100).run(&design_strategy(vs.clone(), 4), |(_, d)| {
        let err = max_abs(&(centering_square_gap(&d)));
        if err > 1e-10 {
            return Err(fail(format!("centering identity off by {err:e}")));
        }
        Ok(())
    });
    out.push(("centering identity for replicated runs", r.map_err(|e| e.to_string())));

    let ss: Vec<f64> = mms.iter().map(|mm| optimize(mm, 1e-10, DEFAULT_MAX_ITER).unwrap().s).collect();
    let r = runner(300).run(&design_strategy(vs, 3), |(i, d)| {
        let mm = &mms[i];
        if a_value(&d, mm).is_err() {
            return Ok(());
        }
        let sc = score(&d, mm, ss[i], &[1.0, 5.0]).unwrap();
        if sc.eff_lb > 1.0 + 1e-9 {
            return Err(fail(format!("eff_lb = {} above one", sc.eff_lb)));
        }
        Ok(())
    });
    out.push(("eff_lb never exceeds one", r.map_err(|e| e.to_string())));
    out
}

/// `H⁻¹ Z_dᵀ L_N P_d P_dᵀ L_N Z_d H⁻¹` assembled run by run.
fn projected_variance(d: &ExactDesign, mm: &ModelMatrices) -> DMatrix<f64> {
    let labels = d.labels();
    let n = labels.len();
    let p = mm.orthocomplement().unwrap();
    let zd = DMatrix::from_fn(n, mm.q(), |i, j| mm.z()[(labels[i] - 1, j)]);
    let pd = DMatrix::from_fn(n, p.ncols(), |i, j| p[(labels[i] - 1, j)]);
    let l = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let h_inv = info_of_design(d, mm).unwrap().try_inverse().unwrap();
    let a = &h_inv * zd.transpose() * &l * &pd;
    &a * a.transpose()
}

/// `Δ(r)Δ(r) − Δ(r)` minus `(I − r1ᵀ/N)(D² − D)(I − 1rᵀ/N)`.
fn centering_square_gap(d: &ExactDesign) -> DMatrix<f64> {
    let r: Vec<f64> = d.replications().iter().map(|&x| x as f64).collect();
    let v = r.len();
    let n = d.n_runs() as f64;
    let rv = DMatrix::from_column_slice(v, 1, &r);
    let ones = DMatrix::from_element(v, 1, 1.0);
    let dm = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(r.clone()));
    let delta = &dm - &rv * rv.transpose() / n;
    let lhs = &delta * &delta - &delta;
    let left = DMatrix::<f64>::identity(v, v) - &rv * ones.transpose() / n;
    let right = DMatrix::<f64>::identity(v, v) - &ones * rv.transpose() / n;
    let rhs = left * (&dm * &dm - &dm) * right;
    lhs - rhs
}
