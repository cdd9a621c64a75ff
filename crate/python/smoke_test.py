"""Smoke test for the interpmi Python bindings.

Build and install first:

    pip install --no-build-isolation ./crates/py
"""

import json
import math
import tempfile

import interpmi


def check_codebook():
    cb = interpmi.Codebook()
    assert cb.ports == 8
    assert cb.size(1) == 64 and cb.size(2) == 128 and len(cb) == 192
    w = cb.matrix(2, 5)
    assert len(w) == 8 and len(w[0]) == 2
    power = sum(abs(x) ** 2 for row in w for x in row)
    assert math.isclose(power, 1.0, rel_tol=1e-12)
    assert cb.index_of(2, *cb.indices(2, 5)) == 5

    h = [[complex(1.0, 0.5)] * 8, [complex(0.2, -1.0)] * 8]
    ri, pmis, rates = cb.select_pmi([h, h], 1.0)
    assert ri in (1, 2) and len(pmis) == 2 and all(r > 0 for r in rates)


def check_link_level():
    assert interpmi.cqi_to_se(15) == 5.5547
    assert interpmi.sinr_to_cqi(0.0) == 0
    assert interpmi.sinr_to_cqi(1e6) == 15
    better = interpmi.reward(3.0, 0.1, 0.85)
    worse = interpmi.reward(3.0, 0.5, 0.85)
    assert better > worse


def check_bus():
    msg = {
        "subject": "ctrl.cell.3",
        "tti": 7,
        "payload": {"pci": 3, "tti": 7, "agent": "follow_pmi", "assignments": []},
    }
    line = interpmi.encode(msg)
    back = interpmi.decode(line)
    assert interpmi.encode(back) == line
    try:
        interpmi.decode(b"{not json")
    except ValueError:
        pass
    else:
        raise AssertionError("malformed line accepted")


def check_env(cfg):
    env = interpmi.Env(cfg)
    assert env.num_cells == 3 and env.num_ues == 9
    env.reset(0)
    reports = env.measure()
    assert len(reports) == env.num_ues
    realization = env.advance([])
    assert isinstance(realization, dict)
    out = env.run_episode("follow_pmi", epoch=1)
    assert out["interference_violations"] == 0
    assert math.isfinite(out["mean_reward"])


def check_pipeline(cfg):
    with tempfile.TemporaryDirectory() as d:
        curve = interpmi.train("inter_a2c", d + "/train", cfg)
        assert len(curve) == cfg["episodes"]
        summary = interpmi.evaluate("inter_a2c", d + "/eval", cfg, d + "/train/checkpoint.json")
        assert summary["agent"] == "inter_a2c"
        summaries = interpmi.compare(d + "/compare", cfg)
        assert len({s["channel_digest"] for s in summaries}) == 1
    try:
        interpmi.Env({"num_sites": 5})
    except ValueError:
        pass
    else:
        raise AssertionError("invalid config accepted")


def main():
    cfg = {"num_sites": 1, "ues_per_cell": 3, "episodes": 2, "eval_episodes": 1}
    assert isinstance(interpmi.default_config(), dict)
    check_codebook()
    check_link_level()
    check_bus()
    check_env(cfg)
    check_pipeline(json.loads(json.dumps(cfg)))
    print(f"interpmi {interpmi.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
