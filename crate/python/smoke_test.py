"""Smoke test for the pyfaml extension module.

Build and install first:

    pip install maturin
    cd crates/py && maturin develop --release
"""

import math
import tempfile

import pyfaml


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol


def main():
    euler = 0.5772156649015329
    assert close(pyfaml.digamma(1.0), -euler, 1e-10)
    assert close(pyfaml.trigamma(1.0), math.pi**2 / 6, 1e-10)

    op = pyfaml.opinion([3.0, 1.0, 0.0])
    assert close(sum(op["belief"]) + op["uncertainty"], 1.0)
    assert close(op["uncertainty"], 3.0 / 7.0)
    assert close(sum(op["projected"]), 1.0)

    vac = pyfaml.opinion([0.0, 0.0], prior=[1.0, 3.0])
    assert vac["uncertainty"] == 1.0
    assert close(vac["projected"][1], 0.75)

    agg = pyfaml.aggregate([[2.0, 0.0], [0.0, 4.0]], [0.5, 0.5])
    assert close(agg[0], 1.0) and close(agg[1], 2.0)

    assert pyfaml.dissonance([2.0, 3.0], [2.0, 3.0]) == 0.0
    assert close(pyfaml.fairness_degree([[1.0, 3.0]]), 1.0)

    value, grad = pyfaml.ace_loss([2.0, 1.0], 0)
    assert close(value, pyfaml.digamma(3.0) - pyfaml.digamma(2.0))
    assert len(grad) == 2

    assert pyfaml.compute_prior([0, 0, 1, 1], [0, 0, 1, 1], 2) == [1.0, 1.0]
    assert pyfaml.compute_prior([0, 0, 0, 1], [0, 0, 1, 1], 2, gamma=2.0) == [2.0, 4.0]
    assert pyfaml.lambda_schedule(100, 200) == 0.5
    assert close(pyfaml.ece([0.9, 0.9, 0.9, 0.6], [True, True, False, True]), 0.275)

    data = pyfaml.synth(k=3, views=2, dims=[4, 5], samples_per_class=10, seed=1)
    assert len(data["views"]) == 2 and len(data["views"][1][0]) == 5
    assert len(data["labels"]) == 30

    try:
        pyfaml.train(overrides=["epochz=1"])
    except pyfaml.ConfigError as e:
        assert "epochz" in str(e)
    else:
        raise AssertionError("unknown config key accepted")

    with tempfile.TemporaryDirectory() as tmp:
        run = pyfaml.train(
            overrides=["epochs=6", "warmup_epochs=2", "refresh_interval=2", "hidden_dims=[8]"],
            samples_per_class=40,
            out=tmp,
        )
        assert len(run["history"]) == 6
        assert run["manifest"]["reconstructed"] is True
        report = run["report"]
        assert 0.0 <= report["acc_all"] <= 1.0
        assert pyfaml.read_report(tmp) == report
        assert pyfaml.evaluate(tmp) == report

    print("pyfaml smoke test: ok")


if __name__ == "__main__":
    main()
