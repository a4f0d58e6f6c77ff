import json
import os

from multimatch.cli import main

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "fixtures")


def fx(name: str) -> str:
    return os.path.join(FIXTURES, name)


def run(capsys, *argv) -> tuple[int, dict]:
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else {}


def test_info(capsys):
    code, data = run(capsys, "info", "--graph", fx("path_loop.graph.json"))
    assert code == 0
    assert data["self_loops"] == ["3"]
    assert data["bipartite"] is False
    assert data["multipartite_parts"] == [["1", "3"], ["2"]]
    assert data["blowup_copies"] == {"3": "3_"}


def test_ncond_verdicts(capsys):
    code, data = run(
        capsys,
        "ncond",
        "--graph", fx("path_loop.graph.json"),
        "--mu", fx("path_loop.mu.json"),
    )
    assert code == 0 and data["satisfied"] is True and data["region_empty"] is False

    # bipartite graph: no measure can satisfy it and the witness is one side
    code, data = run(
        capsys,
        "ncond",
        "--graph", fx("path3.graph.json"),
        "--mu", fx("path3.mu_uniform.json"),
    )
    assert code == 0
    assert data["satisfied"] is False and data["region_empty"] is True
    assert data["witness"] in (["1", "3"], ["2"])


def test_mudeg(capsys):
    code, data = run(capsys, "mudeg", "--graph", fx("diamond_hub_loop.graph.json"))
    assert code == 0
    assert data["measure"] == {"1": "1/9", "2": "4/9", "3": "2/9", "4": "2/9"}
    assert data["satisfied"] is True


def test_stationary_and_balance(capsys, tmp_path):
    out = str(tmp_path / "stat")
    code, data = run(
        capsys,
        "stationary-fcfm",
        "--graph", fx("square_loops.graph.json"),
        "--mu", fx("square_loops.mu_uniform.json"),
        "--max-len", "4",
        "--out", out,
    )
    assert code == 0
    assert data["alpha"] == "3/8"
    assert data["tail_mass"] == "0"
    csv_text = open(os.path.join(out, "stationary_fcfm.csv")).read()
    assert csv_text.splitlines()[0] == "word,probability"
    assert ",3/8" in csv_text

    code, data = run(
        capsys,
        "verify-balance",
        "--graph", fx("path_loop.graph.json"),
        "--mu", fx("path_loop.mu.json"),
        "--max-len", "6",
    )
    assert code == 0 and data["verified"] is True and data["max_residual"] == 0.0


def test_stationary_rejects_unstable_measure(capsys):
    code = main(
        [
            "stationary-fcfm",
            "--graph", fx("path_loop.graph.json"),
            "--mu", fx("path_loop.mu_unstable.json"),
        ]
    )
    assert code == 2


def test_simulate_artifacts_are_reproducible(capsys, tmp_path):
    args = [
        "simulate",
        "--graph", fx("path_loop.graph.json"),
        "--mu", fx("path_loop.mu.json"),
        "--steps", "20000",
        "--seed", "7",
    ]
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    code, data1 = run(capsys, *args, "--out", out1)
    assert code == 0
    code, _ = run(capsys, *args, "--out", out2)
    assert code == 0
    for name in os.listdir(out1):
        assert open(os.path.join(out1, name)).read() == open(
            os.path.join(out2, name)
        ).read()
    assert data1["recorded_steps"] == 20000 - data1["burn_in"]


def test_tv_compare_exit_codes(capsys):
    base = [
        "tv-compare",
        "--graph", fx("path_loop.graph.json"),
        "--mu", fx("path_loop.mu.json"),
        "--steps", "150000",
        "--burn-in", "1500",
        "--max-len", "4",
    ]
    code, data = run(capsys, *base)
    assert code == 0 and data["verified"] is True
    assert all(tv < 0.02 for tv in data["tv_per_replica"])

    # a policy with a different stationary law fails decisively
    code, data = run(capsys, *base, "--policy", "lcfm")
    assert code == 1 and data["verified"] is False
    assert all(tv > 0.3 for tv in data["tv_per_replica"])


def test_reversibility(capsys):
    code, data = run(
        capsys,
        "reversibility",
        "--graph", fx("square_loops.graph.json"),
        "--mu", fx("square_loops.mu_uniform.json"),
        "--steps", "120000",
        "--seed", "2",
        "--min-visits", "400",
    )
    assert code == 0
    assert data["pairs_tested"] > 10
    assert data["max_normalized_discrepancy"] <= 3.0
    assert data["undetermined_forward_count"] >= 0


def test_excursions(capsys, tmp_path):
    out = str(tmp_path / "exc")
    code, data = run(
        capsys,
        "excursions",
        "--graph", fx("path_loop.graph.json"),
        "--mu", fx("path_loop.mu.json"),
        "--steps", "30000",
        "--out", out,
    )
    assert code == 0 and data["verified"] is True
    assert data["permutation_valid"] == data["excursions"]
    lengths = open(os.path.join(out, "excursion_lengths.csv")).read().splitlines()
    assert lengths[0] == "length,count"
    letters = open(os.path.join(out, "matched_letters.csv")).read().splitlines()
    assert letters[0].startswith("class,count,frequency")


def test_drift_command(capsys, tmp_path):
    out = str(tmp_path / "drift")
    code, data = run(
        capsys,
        "drift",
        "--graph", fx("path_loop.graph.json"),
        "--mu", fx("path_loop.mu.json"),
        "--policy", fx("path_loop.policy_v2fav.json"),
        "--fn", "Ldelta",
        "--max-len", "4",
        "--out", out,
    )
    assert code == 0
    assert data["verified"] is True
    assert data["ldelta_bound_holds"] is True
    header = open(os.path.join(out, "drift.csv")).read().splitlines()[0]
    assert header == "word,drift,residual_quadratic,residual_linear_left,residual_linear_right"


def test_transform_and_extend_measure(capsys):
    code, data = run(
        capsys, "transform", "--graph", fx("path_loop.graph.json"), "--check", "--blowup"
    )
    assert code == 0
    assert data["maximal_subgraph"]["self_loops"] == []
    assert data["copy_map"] == {"3": "3_"}
    assert ["3", "3_"] in data["blowup"]["edges"]

    code, data = run(
        capsys,
        "extend-measure",
        "--graph", fx("path_loop.graph.json"),
        "--mu", fx("path_loop.mu.json"),
        "--split", '{"3": "0.6"}',
    )
    assert code == 0
    assert data["measure"] == {"1": "1/5", "2": "3/10", "3": "3/10", "3_": "1/5"}


def test_verify_identities(capsys):
    code, data = run(
        capsys,
        "verify-identities",
        "--graph", fx("diamond_hub_loop.graph.json"),
        "--mu", fx("diamond_hub_loop.mu.json"),
        "--max-len", "3",
    )
    assert code == 0 and data["verified"] is True
    assert set(data["max_residual_per_policy"]) == {
        "fcfm", "lcfm", "uniform", "priority", "match_longest", "match_shortest"
    }
    assert data["max_residual"] == 0.0


def test_ncond_infinite_margin_is_json_safe(capsys):
    code, data = run(
        capsys,
        "ncond",
        "--graph", fx("square_loops.graph.json"),
        "--mu", fx("square_loops.mu_uniform.json"),
    )
    assert code == 0
    assert data == {
        "margin": "inf",
        "region_empty": False,
        "satisfied": True,
        "witness": None,
    }


def test_malformed_graph_file_exits_2(capsys, tmp_path):
    bad = tmp_path / "bad.graph.json"
    bad.write_text('{"nodes": ["1", "2"], "edges": [["1", "2", "2"]]}')
    assert main(["info", "--graph", str(bad)]) == 2
    capsys.readouterr()


def test_input_errors_exit_2(capsys):
    assert main(["info", "--graph", "/nonexistent.json"]) == 2
    assert main(["transform", "--graph", fx("path_loop.graph.json")]) == 2
    assert (
        main(
            [
                "simulate",
                "--graph", fx("path_loop.graph.json"),
                "--mu", fx("path_loop.mu.json"),
                "--policy", "no-such-policy",
                "--steps", "10",
            ]
        )
        == 2
    )
    capsys.readouterr()


def test_readme_library_example():
    from fractions import Fraction

    from multimatch import (Fcfm, Multigraph, ProbMeasure, ncond_check,
                            product_form, simulate)

    g = Multigraph.build(["1", "2", "3"], [("1", "2"), ("2", "3")], ["3"])
    mu = ProbMeasure.from_dict({"1": "0.2", "2": "0.3", "3": "0.5"})
    assert ncond_check(g, mu).satisfied
    dist = product_form(g, mu)
    assert dist.alpha == Fraction(4, 25)
    res = simulate(g, mu, Fcfm(), steps=10**5, seed=0)
    assert abs(res.frequency(()) - float(dist.pi(()))) < 0.01
