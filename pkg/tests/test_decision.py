import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gmtrust.decision import (PRESETS, ChannelModel, TaskSpec, assess, computation_time, preset_task,
                              resource_trust, select_collaborator, transmission_time, trusted_count)

from conftest import make_device

CH = ChannelModel()
# distance at which the default path loss gives g = 1e-8
D_1E8 = 100.0 ** (1.0 / 3.0)


def test_transmission_example():
    owner, cand = make_device(0), make_device(1, pos=(D_1E8, 0.0))
    assert CH.gain(D_1E8) == pytest.approx(1e-8, rel=1e-12)
    assert CH.rate(0.1, 1e-8) == pytest.approx(5e6 * math.log2(101), rel=1e-15)
    t = transmission_time(TaskSpec.from_mb(5, 1, 1), owner, cand, CH)
    assert t == pytest.approx(1.2015, abs=5e-5)
    assert transmission_time(TaskSpec.from_mb(10, 1, 1), owner, cand, CH) == pytest.approx(2 * t, rel=1e-12)


def test_transmission_monotone_in_gain():
    rates = [CH.rate(0.1, g) for g in np.logspace(-14, -2, 25)]
    assert all(b > a for a, b in zip(rates, rates[1:]))


def test_transmission_zero_rate_is_infeasible():
    owner, cand = make_device(0), make_device(1, pos=(1e9, 0.0))
    task = TaskSpec.from_mb(5, 1, 1e12)
    ch = ChannelModel(k0=1e-300)
    assert transmission_time(task, owner, cand, ch) == math.inf
    assert resource_trust(task, owner, cand, ch) == 0


def test_transmission_same_device_rejected():
    with pytest.raises(ValueError):
        transmission_time(TaskSpec(1, 1, 1), make_device(0), make_device(0), CH)


@pytest.mark.parametrize("mb,preset,expected", [(5, "face", 46.78), (5, "virus", 658.92), (10, "virus", 1317.84)])
def test_computation_anchors(mb, preset, expected):
    t = computation_time(preset_task(preset, mb), make_device(1, cpu=2e9))
    assert abs(t - expected) <= 1e-9 * expected


def test_resource_trust_examples():
    owner, cand = make_device(0), make_device(1, pos=(D_1E8, 0.0))
    face = preset_task("face", 5)
    total = transmission_time(face, owner, cand, CH) + computation_time(face, cand)
    assert total == pytest.approx(46.78 + 1.2015, abs=1e-4) and total <= 80
    assert resource_trust(face, owner, cand, CH) == 1
    for cpu in (2e9, 1e9):
        assert resource_trust(preset_task("virus", 10), owner, make_device(1, cpu=cpu, pos=(D_1E8, 0.0)), CH) == 0


def test_resource_trust_boundary_inclusive():
    owner, cand = make_device(0), make_device(1, pos=(30.0, 40.0))
    probe = TaskSpec.from_mb(2, 500, 1.0)
    exact = transmission_time(probe, owner, cand, CH) + computation_time(probe, cand)
    assert resource_trust(TaskSpec(probe.size_bits, probe.density, exact), owner, cand, CH) == 1
    assert resource_trust(TaskSpec(probe.size_bits, probe.density, math.nextafter(exact, 0)), owner, cand, CH) == 0


def test_task_validation():
    with pytest.raises(ValueError):
        TaskSpec(0, 1, 1)
    with pytest.raises(ValueError):
        preset_task("video", 5)
    assert PRESETS == {"face": (2339.0, 80.0), "virus": (32946.0, 700.0)}


def _oracle(size_bits, density, deadline, p_w, x0, y0, x1, y1, cpu):
    """Independent recomputation with the default channel constants."""
    d = math.sqrt((x0 - x1) ** 2 + (y0 - y1) ** 2)
    g = 1e-6 * (1.0 / d) ** 3
    r = 5e6 * math.log2(1.0 + p_w * g / 1e-11)
    return 1 if size_bits / r + size_bits * density / cpu <= deadline else 0


def random_cases(n, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        size = rng.uniform(0.1, 20) * 8e6
        density = rng.choice([2339.0, 32946.0, rng.uniform(100, 40000)])
        deadline = rng.uniform(1, 2000)
        cpu = rng.choice([2e9, 4e9, 6e9])
        p0, p1 = rng.uniform(0, 1000, 2), rng.uniform(0, 1000, 2)
        yield size, density, deadline, cpu, p0, p1


def test_brute_force_oracle_agreement():
    agree = n = 0
    for size, density, deadline, cpu, p0, p1 in random_cases(10_000, 0):
        owner, cand = make_device(0, pos=tuple(p0)), make_device(1, cpu=cpu, pos=tuple(p1))
        got = resource_trust(TaskSpec(size, density, deadline), owner, cand, CH)
        agree += got == _oracle(size, density, deadline, 0.1, *p0, *p1, cpu)
        n += 1
    assert agree == n == 10_000


@given(st.floats(0.1, 20), st.floats(1, 3000), st.floats(1, 3000), st.integers(0, 10_000))
def test_monotone_in_budget(mb, t1, t2, seed):
    rng = np.random.default_rng(seed)
    owner = make_device(0, pos=tuple(rng.uniform(0, 1000, 2)))
    cand = make_device(1, cpu=float(rng.choice([2e9, 4e9, 6e9])), pos=tuple(rng.uniform(0, 1000, 2)))
    lo, hi = sorted((t1, t2))
    assert resource_trust(TaskSpec.from_mb(mb, 2339, lo), owner, cand, CH) <= \
        resource_trust(TaskSpec.from_mb(mb, 2339, hi), owner, cand, CH)


@given(st.floats(0.1, 20), st.floats(1, 3000), st.integers(0, 10_000))
def test_density_dominance(mb, budget, seed):
    rng = np.random.default_rng(seed)
    owner = make_device(0, pos=tuple(rng.uniform(0, 1000, 2)))
    cands = [make_device(i, cpu=float(rng.choice([2e9, 4e9, 6e9])), pos=tuple(rng.uniform(0, 1000, 2)))
             for i in range(1, 20)]
    face = {c.id for c in cands if resource_trust(TaskSpec.from_mb(mb, 2339, budget), owner, c, CH)}
    virus = {c.id for c in cands if resource_trust(TaskSpec.from_mb(mb, 32946, budget), owner, c, CH)}
    assert virus <= face


@given(st.floats(0, 1), st.floats(1, 200))
def test_total_trust_properties(t_his, budget):
    a = assess(make_device(0), make_device(1, pos=(50.0, 0.0)), TaskSpec.from_mb(1, 2339, budget), t_his, CH)
    assert a.t_res in (0, 1)
    assert 0.0 <= a.t_total <= a.t_his
    assert a.t_total == (a.t_his if a.t_res else 0.0)


def _historical(table):
    return lambda owner, ids: [table[i] for i in ids]


def test_select_resource_gate_dominates():
    owner = make_device(0)
    far = make_device(1, pos=(1e4, 1e4), cpu=2e9)
    near = make_device(2, pos=(10.0, 0.0), cpu=6e9)
    sel = select_collaborator(owner, [owner, far, near], TaskSpec.from_mb(1, 2339, 10.0), _historical({1: .9, 2: .6}))
    assert sel.selected.trustee_id == 2 and sel.selected.t_total == 0.6
    assert [a.trustee_id for a in sel.ranking] == [2, 1]


def test_select_single_candidate():
    sel = select_collaborator(make_device(0), [make_device(5, pos=(10.0, 0.0))], preset_task("face", 1),
                              _historical({5: .3}))
    assert sel.selected.trustee_id == 5


def test_select_tie_goes_to_lower_id():
    cands = [make_device(i, pos=(10.0, 0.0)) for i in (4, 2, 3)]
    sel = select_collaborator(make_device(0), cands, preset_task("face", 1), _historical({4: .8, 2: .8, 3: .5}))
    assert [a.trustee_id for a in sel.ranking] == [2, 4, 3]


def test_select_tie_on_zero_total_prefers_higher_history():
    cands = [make_device(i, pos=(10.0, 0.0)) for i in (1, 2)]
    sel = select_collaborator(make_device(0), cands, TaskSpec.from_mb(1, 2339, 1e-3), _historical({1: .2, 2: .7}))
    assert sel.selected is None
    assert [a.trustee_id for a in sel.ranking] == [2, 1]
    assert json.loads(sel.to_json())["selected"] is None


def test_select_empty_candidates():
    owner = make_device(0)
    with pytest.raises(ValueError):
        select_collaborator(owner, [owner], preset_task("face", 1), _historical({}))


def test_selection_json_schema():
    sel = select_collaborator(make_device(0), [make_device(1, pos=(10.0, 0.0))], preset_task("face", 1),
                              _historical({1: .5}))
    doc = json.loads(sel.to_json())
    assert set(doc) == {"owner", "task", "ranking", "selected"}
    assert set(doc["ranking"][0]) == {"id", "t_his", "t_res", "t_tra", "t_com", "t_total"}


def test_trusted_count_excludes_owner():
    devs = [make_device(i, pos=(10.0 * i, 0.0), cpu=6e9) for i in range(4)]
    assert trusted_count(devs[0], devs, preset_task("face", 1), CH) == 3
