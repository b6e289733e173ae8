"""Smoke test for the Python bindings.

Build first:  pip install --no-build-isolation -e crates/py
Run:          python3 python/smoke_test.py
"""

import json
import math
import pathlib
import subprocess
import sys

import riskshare_py as rs

ROOT = pathlib.Path(__file__).resolve().parent.parent


def close(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b}"


def shared_scenario_pair():
    space = rs.ScenarioSpace(["A", "B", "C"])
    ind = lambda i: [1.0 if j == i else 0.0 for j in range(3)]
    left = rs.Regime.polyhedral(space, [ind(0), ind(1)], [1.0, 2.0], [ind(0), ind(1)], [1.0, 1.0], support=[0, 1])
    right = rs.Regime.polyhedral(space, [ind(1), ind(2)], [1.0, 3.0], [ind(1), ind(2)], [1.0, 1.0], support=[1, 2])
    return space, rs.AgentSystem([left, right])


def test_market_risk():
    space, system = shared_scenario_pair()
    assert len(space) == 3 and len(system) == 2
    sol = system.market_risk([4.0, 5.0, 6.0])
    close(sol["value"], 8.0)
    for a, b in zip(sol["payoff"], [3.0, 2.0, 3.0]):
        close(a, b)
    parts = sol["allocation"]
    for w in range(3):
        close(parts[0][w] + parts[1][w], [4.0, 5.0, 6.0][w])
    assert system.nsa()["holds"]
    grid = system.brute_lambda([4.0, 5.0, 6.0], [4.0, -5.0, 0.0], [4.0, 10.0, 0.0], 0.05)
    assert grid["estimate"] >= sol["value"] - 1e-9


def test_equilibrium():
    _, system = shared_scenario_pair()
    eq = system.equilibrium([[4.0, 1.0, 0.0], [0.0, 4.0, 6.0]])
    assert eq["passed"], eq["checks"]


def test_law_invariant():
    probs = [0.25] * 4
    x = [0.5, -1.0, 2.0, 0.1]
    alpha, value = rs.entropic_infconv([0.8, 1.4], probs, x)
    close(alpha, 0.8 * 1.4 / 2.2, 1e-15)
    close(value, rs.entropic(alpha, probs, x), 1e-12)
    ref = max(x) + math.log(sum(p * math.exp(alpha * (v - max(x))) for p, v in zip(probs, x))) / alpha
    close(value, ref, 1e-12)
    close(rs.avar(0.5, probs, x), (2.0 + 0.5) / 2)

    space = rs.ScenarioSpace(["u", "m", "l", "c"])
    cash = [[1.0] * 4]
    sol = rs.law_invariant_risk(space, [("entropic", 0.8), ("entropic", 1.4)], [cash, cash], 1.0, [1.0] * 4, x)
    close(sol["value"], value, 1e-10)
    regime = rs.Regime.law_invariant(space, "entropic", 0.8, cash, [1.0])
    close(regime.rho(x), rs.entropic(0.8, probs, x), 1e-10)
    assert regime.validate(seed=1)["acceptance.monotone"]["passed"]


def test_split():
    space = rs.ScenarioSpace(["calm", "storm"])
    r = rs.split_entropic(space, 1.0, 0.1, 50, [0.0, 2.0])
    assert r["n_star"] == 2
    close(r["objective"], 1.440229, 1e-6)


def test_errors():
    try:
        rs.ScenarioSpace(["a", "b"], [0.7, 0.7])
    except ValueError as e:
        assert "probab" in str(e).lower()
    else:
        raise AssertionError("bad probabilities accepted")


def test_documents_match_schemas():
    try:
        import jsonschema
    except ImportError:
        print("jsonschema not installed; skipping schema checks")
        return
    problem = json.loads((ROOT / "schema" / "problem.schema.json").read_text())
    result = json.loads((ROOT / "schema" / "result.schema.json").read_text())
    for f in sorted((ROOT / "fixtures").glob("*.json")):
        jsonschema.validate(json.loads(f.read_text()), problem)
    binary = ROOT / "target" / "debug" / "riskshare"
    if not binary.exists():
        print("CLI binary not built; skipping result documents")
        return
    for args in (["validate", "shared-scenario.json"], ["lambda", "two-entropic.json"], ["split", "split.json"]):
        out = subprocess.run([str(binary), args[0], str(ROOT / "fixtures" / args[1])], capture_output=True, text=True)
        jsonschema.validate(json.loads(out.stdout), result)


if __name__ == "__main__":
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for t in tests:
        t()
        print(f"ok {t.__name__}")
    print(f"{len(tests)} passed")
    sys.exit(0)
