use bichore_core::approx_efx::{approx_factor, run_approx_efx};
use bichore_core::exact_efx_k2::run_efx_k2;
use bichore_core::pef1_solver::run_pef1_traced;
use bichore_core::verify::{check_ef1, check_equilibrium, check_pef1, min_beta_efx, min_beta_pefx, Beta};
use bichore_core::{Instance, Rational};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(rng: &mut ChaCha8Rng, k: Rational, max_n: usize, max_m: usize) -> Instance {
    let n = rng.gen_range(2..=max_n);
    let m = rng.gen_range(2..=max_m);
    let p = rng.gen_range(0.0..1.0);
    let mut rows: Vec<Vec<bool>> = (0..n).map(|_| (0..m).map(|_| rng.gen_bool(p)).collect()).collect();
    for row in &mut rows {
        if row.iter().all(|&h| h) {
            let e = rng.gen_range(0..m);
            row[e] = false;
        }
    }
    Instance::new(k, rows).unwrap()
}

fn ks() -> [Rational; 3] {
    [Rational::integer(2), Rational::integer(3), Rational::new(5, 2).unwrap()]
}

#[test]
fn pipeline_outputs_pass_verifiers() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for round in 0..1500 {
        let k = ks()[round % 3];
        let inst = random_instance(&mut rng, k, 6, 12);
        let run = run_pef1_traced(&inst).unwrap_or_else(|e| panic!("pef1 failed on {inst:?}: {e}"));
        let m = run.state.market();
        assert!(check_equilibrium(m).holds());
        assert!(check_pef1(m).holds());
        assert!(check_ef1(m.instance(), m.allocation()).holds());
        let mut last = None;
        for r in &run.rounds {
            if let Some(prev) = last {
                assert!(r.least_earning >= prev);
            }
            last = Some(r.least_earning);
        }
        let out = run_approx_efx(m.clone()).unwrap_or_else(|e| panic!("approx failed on {inst:?}: {e}"));
        let fm = out.market();
        assert!(check_equilibrium(fm).holds());
        assert!(min_beta_efx(fm.instance(), fm.allocation()).at_most(approx_factor(k)));
        assert!(out.rounds.len() <= inst.agents());
        let efx = min_beta_efx(fm.instance(), fm.allocation()).value;
        assert!(efx <= min_beta_pefx(fm).value);
        if k == Rational::integer(2) {
            let out = run_efx_k2(m.clone(), run.state.unraised())
                .unwrap_or_else(|e| panic!("k2 failed on {inst:?}: {e}"));
            assert_eq!(
                min_beta_efx(out.market.instance(), out.market.allocation()).value,
                Beta::Finite(Rational::ONE)
            );
        }
    }
}
