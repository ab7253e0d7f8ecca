use fairtrade::fairness::{ks_fair_lambda_rom, ks_report};
use fairtrade::instances::{random_discrete_instance, rng};
use fairtrade::io::{parse_mechanism, InstanceFile};
use fairtrade::lp_mechanisms::{audit, ks_fair, opt_sb, Objective};
use fairtrade::{DiscreteInstance, TradeModel};
use proptest::prelude::*;

#[test]
fn file_to_fair_mechanism() {
    let text = r#"{"buyer":{"values":[1,2,4],"probs":[0.5,0.25,0.25]},"seller":{"values":[0,1.5],"probs":[0.5,0.5]}}"#;
    let file = InstanceFile::parse(text).unwrap();
    let inst = file.discrete().unwrap();
    let mut bench = inst.benchmarks();
    bench.opt_sb = Some(opt_sb(inst).unwrap());
    let rom = ks_fair_lambda_rom(inst, &bench, 1e-9).unwrap();
    assert!(rom.report.fair);
    let lp = ks_fair(inst, Objective::Gft).unwrap();
    assert!(audit(inst, &lp.mech).unwrap().max_residual <= 1e-8);
    let lp_report = ks_report(&lp.outcome, &bench, 1e-7).unwrap();
    assert!(lp_report.fair, "{lp_report:?}");
    assert!(lp.outcome.gft >= rom.outcome.gft - 1e-9);
    assert!(rom.outcome.gft >= 0.5 * bench.opt_sb.unwrap() - 1e-9);
}

#[test]
fn descriptor_evaluation_matches_direct_calls() {
    let file = InstanceFile::parse(r#"{"buyer":{"family":"example_mhr"}}"#).unwrap();
    let InstanceFile::Continuous(inst) = &file else {
        panic!("continuous file")
    };
    assert_eq!(
        file.evaluate(parse_mechanism("som").unwrap()),
        inst.seller_offer()
    );
    assert_eq!(
        file.evaluate(parse_mechanism("fpm:0.8").unwrap()),
        inst.fixed_price(0.8)
    );
    let mix = file.evaluate(parse_mechanism("lambda_rom:0.3").unwrap());
    assert!(
        (mix.gft - (0.3 * inst.seller_offer().gft + 0.7 * inst.buyer_offer().gft)).abs() < 1e-15
    );
}

proptest! {
    #[test]
    fn instance_files_round_trip(seed in 0u64..5_000) {
        let inst = random_discrete_instance(&mut rng(seed), 6);
        let text = serde_json::to_string(&inst).unwrap();
        let back = InstanceFile::parse(&text).unwrap();
        prop_assert_eq!(back.discrete().unwrap(), &inst);
        let parsed: DiscreteInstance = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(parsed, inst);
    }
}
