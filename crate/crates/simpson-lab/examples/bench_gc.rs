use simpson_lab::chart::ChartParams;
use simpson_lab::higgs::HiggsModule;
use simpson_lab::instance::{rng_for, seeded_higgs, Instance};
use simpson_lab::matrix::Mat;
use simpson_lab::ring::{CyclotomicParams, Ring};

fn main() {
    let params = CyclotomicParams::new(3, 1, 8, 2).unwrap();
    let ring = Ring::new(params);
    let chart = ChartParams::new(2, 1, 1).unwrap();

    let mut rng = rng_for(7, 42);
    let h = seeded_higgs(&ring, 2, 2, 2, &mut rng).unwrap();
    let inst = Instance::from_higgs(chart, params, &h);
    std::fs::write("fixtures/small-higgs.json", inst.to_json()).unwrap();

    let zm1 = ring.sub(&ring.zeta_alpha(1, 1).unwrap(), &ring.one());
    let neg = HiggsModule::new(
        &ring,
        vec![Mat::from_fn(1, 1, |_, _| zm1.clone())],
    )
    .unwrap();
    let chart1 = ChartParams::new(1, 1, 1).unwrap();
    let inst_neg = Instance::from_higgs(chart1, params, &neg);
    std::fs::write("fixtures/unit-trace-line.json", inst_neg.to_json()).unwrap();
    println!("wrote fixtures/small-higgs.json and fixtures/unit-trace-line.json");
}
