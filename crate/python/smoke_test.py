"""Smoke test for the Python bindings.

Build and install first:  pip install --no-build-isolation ./crates/py
"""

import math

import saycan_py as sc


def main():
    assert sc.calibrate_pick(0.5) == 1.0
    assert abs(sc.calibrate_pick(0.35) - 0.5) < 1e-12
    assert abs(sc.calibrate_goto(25.0) - 0.75) < 1e-12
    assert sc.terminate_affordance() == 0.1
    try:
        sc.calibrate_goto(-1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative distance accepted")

    emb = sc.Embedder()
    assert len(emb.embed("pick up the apple")) == 256
    assert abs(emb.cosine("find a sponge", "find a sponge") - 1.0) < 1e-12

    kitchen = sc.Scenario.builtin("kitchen")
    labels = kitchen.skill_labels()
    assert "find a sponge" in labels and "done" in labels
    best, cos = emb.project("grab the sponge please", labels)
    assert "sponge" in best and cos > 0

    ep = sc.run_episode(
        "I spilled my coke on the table, can you bring me something to clean it up?",
        scenario=kitchen,
    )
    trace = ep["trace"]
    assert trace["labels"] == ["find a sponge", "pick up the sponge", "bring it to you"], trace["labels"]
    assert trace["termination"] == "done_token"
    assert ep["final_state"]["gripper_contents"] == "sponge"

    report = sc.run_suite()
    assert report["total"]["count"] == 101
    assert report["total"]["plan_rate"] == 1.0
    assert report["total"]["execution_rate"] == 1.0

    noisy = sc.run_suite(success_prob=0.5, seed=3)
    assert noisy == sc.run_suite(success_prob=0.5, seed=3)
    assert noisy["total"]["execution_rate"] < 1.0
    assert not math.isnan(noisy["total"]["plan_rate"])

    print("python smoke test passed")


if __name__ == "__main__":
    main()
