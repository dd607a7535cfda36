use itertools::Itertools;
use proptest::prelude::*;

use vidorder::fluid::simulate;
use vidorder::model::{max_delay, MBIT};
use vidorder::order::{order_exact, order_grdy, order_intl, order_rand, DEFAULT_NODE_BUDGET};
use vidorder::{evaluate_list, BucketConfig, Video, VideoList};

fn video_strategy(max_rate_mbps: f64) -> impl Strategy<Value = Video> {
    (1.0f64..60.0, 0.2f64..max_rate_mbps, 0.05f64..1.2).prop_map(|(t, r, frac)| {
        Video::new("v", t, r * MBIT, (t * frac).max(0.01)).unwrap()
    })
}

fn bucket_strategy() -> impl Strategy<Value = BucketConfig> {
    (0.5f64..10.0, 1.0f64..4.0, 5.0f64..20.0, 0.0f64..1.0)
        .prop_map(|(c, mu, rhat, k)| BucketConfig::from_mbits(c, mu, rhat, c * k).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn closed_form_matches_fluid(
        bucket in bucket_strategy(),
        videos in prop::collection::vec(video_strategy(1.0), 1..12),
    ) {
        // rates at or below the token rate, where the two models coincide
        let list = VideoList::identity(videos.len());
        let closed = evaluate_list(&videos, &list, &bucket).unwrap();
        let fluid = simulate(&videos, &list, &bucket).unwrap();
        for (a, b) in closed.delays().zip(fluid.report.delays()) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn heuristics_never_beat_exact(
        bucket in bucket_strategy(),
        videos in prop::collection::vec(video_strategy(3.0), 1..7),
    ) {
        let exact = order_exact(&videos, &bucket, DEFAULT_NODE_BUDGET).unwrap();
        let brute = (0..videos.len())
            .permutations(videos.len())
            .map(|p| max_delay(&videos, &p, &bucket))
            .fold(f64::INFINITY, f64::min);
        prop_assert!(exact.optimal);
        prop_assert!((exact.max_delay_s() - brute).abs() <= 1e-12);
        for h in [order_rand(&videos, &bucket, 1).unwrap(), order_intl(&videos, &bucket).unwrap(), order_grdy(&videos, &bucket).unwrap()] {
            prop_assert!(h.max_delay_s() >= brute - 1e-12);
        }
    }
}
