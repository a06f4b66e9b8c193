"""Smoke test for the cabreplay_py extension module.

Build and install first, e.g.::

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/cabreplay-*.whl
    python python/smoke_test.py
"""

import math
import os
import tempfile

import cabreplay_py as cr


def main():
    assert cr.required_log_length(500, 0.1) == 2500
    assert math.isclose(cr.acceptance_probability(0.1), 0.2)

    model = cr.RewardModel.parabola(0.5, noise_var=0.0)
    assert math.isclose(model.mean_reward(0.3), -0.04)
    assert model.optimum() == (0.5, 0.0)
    assert cr.cumulative_regret(model, [0.5, 0.25, 1.0]) == [0.0, 0.0625, 0.3125]

    bimodal = cr.RewardModel.draw("bimodal", seed=3)
    assert bimodal.family == "bimodal"

    stream = cr.LoggedStream.generate(model, 10_000, seed=1)
    assert len(stream) == 10_000
    fixed = cr.Policy("FIXED", action=0.5)
    res = cr.replay_cab(fixed, stream, 0.1)
    assert abs(res["T"] - 2000) < 200, res["T"]
    assert fixed.steps == res["T"]

    tbl = cr.Policy("TBL", seed=7)
    a = tbl.propose()
    assert 0.0 <= a <= 1.0
    tbl.update(a, model.mean_reward(a))
    assert tbl.steps == 1

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "s.csv")
        stream.save(path)
        again = cr.LoggedStream.load(path)
        assert again.actions == stream.actions and again.rewards == stream.rewards

        cfg = os.path.join(d, "c.toml")
        with open(cfg, "w") as f:
            f.write('[experiment]\nmode = "offline"\nrepetitions = 4\nlength = 500\n'
                    'deltas = [0.2]\nt_eval = 50\n[policies]\nuse = ["TBL", "UR"]\n')
        out = cr.run_experiment(cfg, out=os.path.join(d, "out"), seed=11)
        names = sorted(os.path.basename(p) for p in out["written"])
        assert names == ["manifest.json", "offline_delta0.2_TBL.csv",
                         "offline_delta0.2_UR.csv", "rank_offline_delta0.2.csv"], names
        assert sorted(row[0] for row in out["ranks"][0.2]) == ["TBL", "UR"]

        try:
            cr.run_experiment(cfg, mode="sideways")
        except ValueError:
            pass
        else:
            raise AssertionError("bad mode accepted")

    print("cabreplay_py smoke test: ok")


if __name__ == "__main__":
    main()
