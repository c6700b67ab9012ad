mod common;

use common::{instances, sampling};
use swipt_core::dataset::generate;
use swipt_core::mechanism::virtual_bids;
use swipt_core::model::{ChannelRealization, DemandProfile};
use swipt_core::powermin::{is_feasible, PowerMinOptions, SubsetSelection};
use swipt_core::search::{exhaustive_allocate, PowerOracle};
use swipt_core::surrogate::{Mlp, PreprocessConfig, Scaling, Surrogate};

fn swap_irs(
    ch: &ChannelRealization,
    dm: &DemandProfile,
    a: usize,
    b: usize,
) -> (ChannelRealization, DemandProfile) {
    let mut h = ch.ir_channels().to_vec();
    let mut noise = ch.noise_vars().to_vec();
    let mut gamma = dm.gamma.clone();
    h.swap(a, b);
    noise.swap(a, b);
    gamma.swap(a, b);
    (
        ChannelRealization::new(ch.antennas(), h, ch.er_channels().to_vec(), noise).unwrap(),
        DemandProfile::new(gamma, dm.q.clone()).unwrap(),
    )
}

#[test]
fn predictions_follow_a_relabeling_of_users() {
    let preprocess = PreprocessConfig::new(3, 2, 4, Scaling::Log);
    let model = Mlp::surrogate(preprocess.dim(), 5, 31).unwrap();
    let net = Surrogate::new(model, preprocess).unwrap();
    for s in instances(4, 3, 2, 32, 10) {
        let vb = [0.3, 0.7, 0.5, 0.2, 0.9];
        let p = net
            .predict_probabilities(&s.channels, &s.demands, &vb)
            .unwrap();
        let (ch, dm) = swap_irs(&s.channels, &s.demands, 0, 2);
        let swapped_vb = [0.5, 0.7, 0.3, 0.2, 0.9];
        let q = net.predict_probabilities(&ch, &dm, &swapped_vb).unwrap();
        assert_eq!([p[2], p[1], p[0], p[3], p[4]], q[..]);
    }
}

#[test]
fn generated_labels_are_feasible_and_optimal() {
    let cfg = sampling(4, 2, 2, 33);
    let opts = PowerMinOptions::default();
    let (samples, failures) = generate(&cfg, 0, 12, &opts, 3).unwrap();
    assert!(failures.is_empty());
    let models = cfg.models();
    for s in &samples {
        assert_eq!(
            virtual_bids(&s.bids.to_vec(), &models).unwrap(),
            s.virtual_bids
        );
        let subset = SubsetSelection::from_allocation(&s.label);
        assert!(
            is_feasible(&s.channels, &s.demands, &subset, 3.0, &opts)
                .unwrap()
                .0
        );
        assert!(s.p_min_of_label <= 3.0 * (1.0 + 1e-6));
        let mut oracle = PowerOracle::new(&s.channels, &s.demands, 3.0, opts);
        let best = exhaustive_allocate(&s.virtual_bids, &mut oracle).unwrap();
        assert_eq!(best.allocation, s.label);
        for (k, &v) in s.virtual_bids.iter().enumerate() {
            assert!(v > 0.0 || !s.label.is_served(k));
        }
    }
}

#[test]
fn generation_is_addressable_by_counter() {
    let cfg = sampling(4, 2, 1, 34);
    let opts = PowerMinOptions::default();
    let (all, _) = generate(&cfg, 0, 8, &opts, 3).unwrap();
    let (tail, _) = generate(&cfg, 5, 3, &opts, 3).unwrap();
    assert_eq!(all[5..], tail[..]);
}
