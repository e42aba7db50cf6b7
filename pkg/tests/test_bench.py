import csv
import json
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caunet.bench import DEFAULT_RUNS, benchmark_inference, summarize
from caunet.errors import ConfigurationError, DimensionError
from caunet.network import NetworkConfig, build


class FakeClock:
    """Returns timestamps so that consecutive (start, stop) pairs differ by the given durations."""

    def __init__(self, durations):
        self.stamps = []
        t = 0.0
        for d in durations:
            self.stamps += [t, t + d]
            t += d + 1.0
        self.calls = 0

    def __call__(self):
        self.calls += 1
        return self.stamps.pop(0)


@pytest.fixture(scope="module")
def net():
    return build(NetworkConfig(depth=2, base_channels=4), 0)


def counting_forward():
    calls = []
    return calls, lambda x: calls.append(x.shape)


def test_injected_durations_give_mean(net):
    calls, fwd = counting_forward()
    res = benchmark_inference(net, (16, 8), runs=3, clock=FakeClock([1e-3, 2e-3, 3e-3]), forward=fwd)
    assert res.runs == pytest.approx([1e-3, 2e-3, 3e-3], abs=1e-15)
    assert res.mean == pytest.approx(2e-3, abs=1e-15)
    assert len(calls) == 4  # warm-up plus three timed
    assert calls[0] == (1, 3, 8, 16)


def test_default_protocol_twenty_runs(net):
    calls, fwd = counting_forward()
    durations = list(np.random.default_rng(0).uniform(0.001, 0.01, DEFAULT_RUNS))
    clock = FakeClock(durations)
    res = benchmark_inference(net, (16, 16), clock=clock, forward=fwd)
    assert len(res.runs) == 20 and len(calls) == 21 and clock.calls == 40
    assert res.mean == pytest.approx(statistics.fmean(durations), rel=1e-12)
    assert res.std == pytest.approx(statistics.pstdev(durations), rel=1e-9)


@given(st.lists(st.floats(1e-6, 10.0), min_size=1, max_size=50))
@settings(max_examples=100, deadline=None)
def test_summary_mean_is_arithmetic_mean(durations):
    res = summarize(durations, (8, 8))
    assert res.mean == pytest.approx(sum(durations) / len(durations), rel=1e-12)
    assert res.std == pytest.approx(statistics.pstdev(durations), rel=1e-7, abs=1e-12)
    assert res.fps == pytest.approx(1 / res.mean)


def test_real_forward_and_files(net, tmp_path):
    res = benchmark_inference(net, (16, 16), runs=5)
    assert len(res.runs) == 5 and all(d > 0 for d in res.runs)
    res.to_csv(tmp_path / "lat.csv")
    res.to_json(tmp_path / "b.json")
    rows = list(csv.reader(open(tmp_path / "lat.csv")))
    assert rows[0] == ["run", "seconds"] and len(rows) == 6
    d = json.loads((tmp_path / "b.json").read_text())
    assert d["resolution"] == [16, 16] and len(d["runs"]) == 5


def test_bad_arguments(net):
    with pytest.raises(ConfigurationError):
        benchmark_inference(net, (16, 16), runs=0)
    with pytest.raises(DimensionError):
        benchmark_inference(net, (18, 16), runs=1)
