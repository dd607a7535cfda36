"""Smoke test for the vidorder extension module.

Build and install first:

    pip install maturin
    pip install --no-build-isolation -e crates/py
    python python/smoke_test.py
"""

import itertools
import math

import vidorder

MBIT = 1e6


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def check_delay():
    bucket = vidorder.BucketConfig.from_mbits(4.0, 2.0, 10.0)
    assert close(vidorder.startup_delay(2 * MBIT, 4 * MBIT, bucket), 0.2)
    empty = vidorder.BucketConfig.from_mbits(4.0, 2.0, 10.0, 0.0)
    assert close(vidorder.startup_delay(2 * MBIT, 0.0, empty), 1.0)
    v = vidorder.Video("a", 30.0, 2 * MBIT, 5.0)
    g = vidorder.gain_stats(v, bucket)
    assert close(g.min_required_tokens_bits, 1.6 * MBIT)
    assert g.is_positive_gain == (g.net_increment_bits >= g.min_required_tokens_bits)


def check_demo():
    videos, bucket, blocked, interleaved = vidorder.demo_set()
    slow = vidorder.evaluate_list(videos, blocked, bucket)
    fast = vidorder.evaluate_list(videos, interleaved, bucket)
    assert fast.max_delay_s < slow.max_delay_s
    report, trace = vidorder.simulate(videos, blocked, bucket)
    assert close(report.max_delay_s, slow.max_delay_s)
    assert min(tokens for _, tokens, _ in trace) == 0.0
    return videos, bucket


def check_orderers():
    videos = vidorder.synth_sets(6, 1, seed=7)[0]
    bucket = vidorder.BucketConfig.from_mbits(4.0, 2.0)
    brute = min(
        vidorder.evaluate_list(videos, list(p), bucket).max_delay_s
        for p in itertools.permutations(range(len(videos)))
    )
    exact = vidorder.order_videos(videos, bucket, "exact")
    assert exact.optimal and close(exact.max_delay_s, brute)
    for name in ("rand", "intl", "grdy"):
        r = vidorder.order_videos(videos, bucket, name, seed=1)
        assert sorted(r.order) == list(range(len(videos)))
        assert r.max_delay_s >= brute - 1e-12


def check_network(tmp="/tmp/vidorder_smoke.ck"):
    bucket = vidorder.BucketConfig.from_mbits(4.0, 2.0)
    sets = vidorder.synth_sets(5, 64, seed=1)
    net = vidorder.Network(hidden=8, sharing="psac", seed=0)
    history = net.train(sets, bucket, steps=20, batch=8)
    assert len(history) == 20 and all(math.isfinite(x) for x in history)
    net.save(tmp)
    again = vidorder.Network.load(tmp)
    assert again.param_count() == net.param_count()
    assert again.order(sets[0], bucket).order == net.order(sets[0], bucket).order


def check_errors():
    try:
        vidorder.Video("bad", -1.0, 2 * MBIT, 1.0)
    except vidorder.VidorderError:
        pass
    else:
        raise AssertionError("negative duration accepted")
    try:
        vidorder.order_videos([], vidorder.BucketConfig.from_mbits(4.0, 2.0), "grdy")
    except ValueError:
        pass
    else:
        raise AssertionError("empty set accepted")


if __name__ == "__main__":
    check_delay()
    check_demo()
    check_orderers()
    check_network()
    check_errors()
    print("smoke test passed")
