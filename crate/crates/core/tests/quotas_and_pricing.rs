use fairrm::adversarial::{
    default_families, empirical_cr, generate_adversarial, BookingPlan, Bl, Family, GpBl, GpNesting, Nesting,
};
use fairrm::grace::GraceConfig;
use fairrm::model::{sample_arrivals_from, ArrivalSequence, Instance, RandomSource};
use fairrm::policy::{simulate, Decision, Fcfs, Policy};
use fairrm::pricing::{
    price_fairness_audit, simulate_pricing, GpPricing, PricingInstance, PurchaseTable, StaticPricing,
};
use fairrm::Result;
use proptest::prelude::*;

fn three_fares(capacity: f64) -> Instance {
    Instance::new(
        vec![vec![1.0], vec![1.0], vec![1.0]],
        vec![3.0, 2.0, 1.0],
        vec![capacity],
        4,
        vec![0.0, 0.3, 0.3, 0.4],
    )
}

fn events(max_len: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..=3, 1..max_len)
}

#[test]
fn gp_bl_far_from_its_limits_is_bl() {
    let inst = Instance { horizon: 60, ..three_fares(1000.0) };
    let plan = BookingPlan::new(vec![500, 500, 500]);
    let cfg = GraceConfig::new(0.2, 0.01).unwrap();
    for seed in 0..20 {
        let arrivals = sample_arrivals_from(&inst, RandomSource::new(seed, 0)).unwrap();
        let base = simulate(&inst, &arrivals, &mut Bl::new(&inst, &plan).unwrap());
        let gp = simulate(&inst, &arrivals, &mut GpBl::new(&inst, &plan, cfg, RandomSource::new(seed, 1)).unwrap());
        assert_eq!(base.records, gp.records);
        let gpn = simulate(
            &inst,
            &arrivals,
            &mut GpNesting::new(&inst, &BookingPlan::new(vec![900, 600, 300]), cfg, RandomSource::new(seed, 1)).unwrap(),
        );
        let nest = simulate(&inst, &arrivals, &mut Nesting::new(&inst, &BookingPlan::new(vec![900, 600, 300])).unwrap());
        assert_eq!(nest.records, gpn.records);
    }
}

#[test]
fn abundant_capacity_ratios_are_one() {
    let template = three_fares(8.0);
    let fams = default_families();
    let plan = |i: &Instance| BookingPlan::new(vec![(8.0 * i.m_scale) as u64; 3]);
    let cfg = |i: &Instance| GraceConfig::new(0.3, 1.0 / i.horizon as f64);
    let policies: Vec<(&str, Box<dyn Fn(&Instance, RandomSource) -> Result<Box<dyn Policy>> + Sync>)> = vec![
        ("fcfs", Box::new(|_: &Instance, _| Ok(Box::new(Fcfs) as Box<dyn Policy>))),
        ("bl", Box::new(move |i: &Instance, _| Ok(Box::new(Bl::new(i, &plan(i))?) as Box<dyn Policy>))),
        ("gp-bl", Box::new(move |i: &Instance, s| Ok(Box::new(GpBl::new(i, &plan(i), cfg(i)?, s)?) as Box<dyn Policy>))),
    ];
    for (name, f) in &policies {
        let rep = empirical_cr(&template, name, f.as_ref(), &fams, &[10.0, 20.0], 5, 3).unwrap();
        for (m, r) in &rep.ratios {
            assert!((r - 1.0).abs() < 1e-9, "{name} at m={m}: {r}");
        }
    }
}

#[test]
fn bl_ratio_is_scale_free_on_block_families() {
    // Blocks scale with m, and so do both OPT and the booking-limit revenue.
    let template = Instance::new(vec![vec![1.0], vec![1.0]], vec![2.0, 1.0], vec![1.0], 4, vec![0.0, 0.5, 0.5]);
    let fams = [Family::LowFirst, Family::HighFirst, Family::BlockPermutations(2)];
    let f = |i: &Instance, _: RandomSource| -> Result<Box<dyn Policy>> {
        let b = BookingPlan::new(vec![i.m_scale as u64, (i.m_scale / 2.0) as u64]);
        Ok(Box::new(Bl::new(i, &b)?))
    };
    let rep = empirical_cr(&template, "bl", &f, &fams, &[10.0, 20.0, 40.0, 80.0], 1, 0).unwrap();
    let first = rep.ratios[0].1;
    for (_, r) in &rep.ratios {
        assert!((r - first).abs() < 1e-12, "{:?}", rep.ratios);
    }
}

#[test]
fn generators_are_deterministic() {
    for fam in default_families() {
        let a = generate_adversarial(fam, 3, 7.0).unwrap();
        let b = generate_adversarial(fam, 3, 7.0).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|s| s.horizon() == 28), "{fam}");
    }
}

fn pricing(capacity: f64, horizon: usize, probs: [f64; 2]) -> PricingInstance {
    let base = Instance::new(
        vec![vec![1.0, 0.5], vec![0.5, 1.0]],
        vec![4.0, 2.0],
        vec![capacity, capacity],
        horizon,
        vec![0.2, 0.4, 0.4],
    );
    PricingInstance::new(
        base,
        vec![4.0, 2.0],
        vec![PurchaseTable::single(4.0, probs[0]), PurchaseTable::single(2.0, probs[1])],
    )
    .unwrap()
}

#[test]
fn untriggered_gp_pricing_is_static_pricing() {
    let pinst = pricing(1e4, 300, [0.6, 0.5]);
    let cfg = GraceConfig::for_horizon(0.1, 300).unwrap();
    for seed in 0..20 {
        let arrivals = sample_arrivals_from(&pinst.base, RandomSource::new(seed, 0)).unwrap();
        let buys = RandomSource::new(seed, 2);
        let a = simulate_pricing(&pinst, &arrivals, &mut StaticPricing::new(&pinst), buys).unwrap();
        let mut gp = GpPricing::new(&pinst, cfg, RandomSource::new(seed, 1));
        let b = simulate_pricing(&pinst, &arrivals, &mut gp, buys).unwrap();
        assert_eq!(gp.trigger_round(), None);
        assert_eq!(a, b);
    }
}

#[test]
fn static_pricing_straddles_its_depletion_point() {
    // Certain purchases: five sales, then every offer is +inf.
    let base = Instance::new(vec![vec![1.0]], vec![1.0], vec![5.0], 12, vec![0.0, 1.0]);
    let pinst = PricingInstance::new(base, vec![1.0], vec![PurchaseTable::single(1.0, 1.0)]).unwrap();
    let arrivals = ArrivalSequence::from_events(vec![1; 12], 1).unwrap();
    let traces: Vec<_> = (0..40)
        .map(|s| simulate_pricing(&pinst, &arrivals, &mut StaticPricing::new(&pinst), RandomSource::new(s, 2)).unwrap())
        .collect();
    let rep = price_fairness_audit(&traces, 0.1, 0.05);
    let d1 = &rep.types[0][0];
    assert_eq!(d1.max_unconditional, 1.0);
    assert_eq!(d1.argmax_unconditional, 5);
    assert!(!rep.depletion_pass);
    assert_eq!(rep.verdict, fairrm::metrics::Verdict::Fail);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quotas_are_never_exceeded(ev in events(200), b in prop::collection::vec(0u64..40, 3), seed in any::<u64>()) {
        let inst = Instance { horizon: ev.len(), ..three_fares(60.0) };
        let arrivals = ArrivalSequence::from_events(ev, 3).unwrap();
        let plan = BookingPlan::new(b.clone());
        let cfg = GraceConfig::new(0.3, 0.05).unwrap();
        let mut bl = Bl::new(&inst, &plan).unwrap();
        let mut gp = GpBl::new(&inst, &plan, cfg, RandomSource::new(seed, 1)).unwrap();
        simulate(&inst, &arrivals, &mut bl);
        simulate(&inst, &arrivals, &mut gp);
        for i in 0..3 {
            prop_assert!(bl.sold()[i] <= b[i]);
            prop_assert!(gp.sold()[i] <= b[i]);
        }
        // Each nesting sale is governed by its own group: after a type-i
        // acceptance, sum_{j >= i} s_j <= b_i. Later low-fare sales may push
        // an enclosing group past its quota, as the accept rule allows.
        for (mut p, label) in [
            (Box::new(Nesting::new(&inst, &plan).unwrap()) as Box<dyn Policy>, "nesting"),
            (Box::new(GpNesting::new(&inst, &plan, cfg, RandomSource::new(seed, 1)).unwrap()), "gp-nesting"),
        ] {
            let trace = simulate(&inst, &arrivals, &mut p);
            let mut sold = [0u64; 3];
            for rec in &trace.records {
                let Some(i) = rec.arrival else { continue };
                if rec.decision == Decision::Accept {
                    sold[i] += 1;
                    let group: u64 = sold[i..].iter().sum();
                    prop_assert!(group <= b[i], "{}: type {} group at {} > {}", label, i, group, b[i]);
                }
            }
        }
    }

    #[test]
    fn quota_policies_are_pure_functions_of_arrivals(ev in events(150), b in prop::collection::vec(0u64..30, 3)) {
        let inst = Instance { horizon: ev.len(), ..three_fares(40.0) };
        let arrivals = ArrivalSequence::from_events(ev, 3).unwrap();
        let plan = BookingPlan::new(b);
        let a = simulate(&inst, &arrivals, &mut Bl::new(&inst, &plan).unwrap());
        let c = simulate(&inst, &arrivals, &mut Bl::new(&inst, &plan).unwrap());
        prop_assert_eq!(a, c);
    }

    #[test]
    fn gp_bl_loss_is_bounded_per_seed(ev in events(300), m in 20.0f64..80.0, seed in any::<u64>(), alpha in 0.1f64..0.6) {
        let inst = Instance { horizon: ev.len(), ..three_fares(m) };
        let arrivals = ArrivalSequence::from_events(ev, 3).unwrap();
        let plan = BookingPlan::new(vec![m as u64, (0.7 * m) as u64, (0.4 * m) as u64]);
        let cfg = GraceConfig::new(alpha, 1.0 / inst.horizon.max(2) as f64).unwrap();
        let bound = (inst.a_max() + 1.0) * inst.n_types() as f64 * cfg.gamma * inst.r_max();
        let base = simulate(&inst, &arrivals, &mut Bl::new(&inst, &plan).unwrap()).revenue;
        let gp = simulate(&inst, &arrivals, &mut GpBl::new(&inst, &plan, cfg, RandomSource::new(seed, 1)).unwrap()).revenue;
        prop_assert!(base - gp <= bound + 1e-9);
        let nb = simulate(&inst, &arrivals, &mut Nesting::new(&inst, &plan).unwrap()).revenue;
        let ng = simulate(&inst, &arrivals, &mut GpNesting::new(&inst, &plan, cfg, RandomSource::new(seed, 1)).unwrap()).revenue;
        prop_assert!(nb - ng <= bound + 1e-9);
    }

    #[test]
    fn price_periods_absorb_and_revenue_adds_up(seed in any::<u64>(), cap in 5.0f64..60.0, alpha in 0.05f64..0.6) {
        let pinst = pricing(cap, 200, [0.7, 0.6]);
        let cfg = GraceConfig::for_horizon(alpha, 200).unwrap();
        let arrivals = sample_arrivals_from(&pinst.base, RandomSource::new(seed, 0)).unwrap();
        let mut gp = GpPricing::new(&pinst, cfg, RandomSource::new(seed, 1));
        let trace = simulate_pricing(&pinst, &arrivals, &mut gp, RandomSource::new(seed, 2)).unwrap();
        let mut closed = [false; 2];
        let mut revenue = 0.0;
        for r in &trace.records {
            if closed[r.type_index] {
                prop_assert_eq!(r.offered, f64::INFINITY);
            }
            if r.offered == f64::INFINITY && !r.blocked {
                closed[r.type_index] = true;
            }
            prop_assert!(!r.purchased || r.offered.is_finite());
            revenue += r.revenue;
            prop_assert_eq!(r.revenue, if r.purchased { r.offered } else { 0.0 });
        }
        prop_assert!((trace.revenue - revenue).abs() <= 1e-9);
        prop_assert!(trace.remaining.iter().all(|m| *m >= 0.0));
    }

    #[test]
    fn gp_pricing_loss_is_bounded_per_seed(seed in any::<u64>(), cap in 10.0f64..80.0, alpha in 0.05f64..0.6) {
        let pinst = pricing(cap, 300, [0.7, 0.6]);
        let inst = &pinst.base;
        let cfg = GraceConfig::for_horizon(alpha, 300).unwrap();
        let arrivals = sample_arrivals_from(inst, RandomSource::new(seed, 0)).unwrap();
        let buys = RandomSource::new(seed, 2);
        let base = simulate_pricing(&pinst, &arrivals, &mut StaticPricing::new(&pinst), buys).unwrap();
        let gp = simulate_pricing(&pinst, &arrivals, &mut GpPricing::new(&pinst, cfg, RandomSource::new(seed, 1)), buys).unwrap();
        let bound = inst.a_max() / inst.a_min() * inst.n_types() as f64 * cfg.gamma * pinst.p_max();
        prop_assert!(base.revenue - gp.revenue <= bound + 1e-9);
    }
}
