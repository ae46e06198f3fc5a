import json
import textwrap

import numpy as np
import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from nscongestion import cli
from nscongestion.game import GameSpec, MixedProfile, all_profiles
from nscongestion.grid import save_network
from nscongestion.learning import LearnerConfig, run
from nscongestion.outputs import (
    dumps_summary,
    fmt,
    parse_trajectory_csv,
    trajectory_csv,
    write_trajectory_from_parsed,
)
from nscongestion.scenario import (
    ConfigError,
    GameConfig,
    LearnerParams,
    Outputs,
    ScenarioConfig,
    build_game,
    load_scenario,
    parse_scenario,
)

INLINE = """\
game:
  n_players: {n}
  alpha: {alpha}
  lambda: {{kind: affine, c0: 0.0, c1: 1.0}}
learner: {{delta: 0.2, max_iterations: 3000, seed: 4}}
outputs: {{stride: 25}}
runs: {runs}
"""


def write_scenario(tmp_path, name="s.yaml", n=3, alpha="[1.0, 2.0, 3.0]", runs=2, text=None):
    path = tmp_path / name
    path.write_text(text if text is not None else INLINE.format(n=n, alpha=alpha, runs=runs))
    return path


def tree(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------


class TestScenario:
    def test_parse_inline(self, tmp_path):
        cfg = load_scenario(write_scenario(tmp_path))
        assert cfg.game.n_players == 3
        assert cfg.learner.delta == 0.2
        assert cfg.outputs.stride == 25
        assert cfg.runs == 2
        built = build_game(cfg.game)
        assert built.game == GameSpec.symmetric([1, 2, 3], 3)
        assert built.resource_names == ["r0", "r1", "r2"]

    @pytest.mark.parametrize("text,line,needle", [
        ("game: {n_players: 2, alpha: [1, 2]}\nlearner:\n  delta: 1.5\n", 3, "delta"),
        ("game:\n  n_players: 2\n  alpha: [1, 2]\n  colour: red\n", 4, "unknown key"),
        ("game:\n  n_players: two\n  alpha: [1]\n", 2, "expected int"),
        ("game:\n  n_players: 2\n  alpha: [1, -2]\n", 2, "alpha"),
        ("learner: {delta: 0.1}\n", 1, "game"),
        ("game: {n_players: 2, alpha: [1, 2]}\nruns: 0\n", 2, "runs"),
        ("game: [1, 2\n", 2, "YAML"),
    ])
    def test_errors_are_line_anchored(self, tmp_path, text, line, needle):
        path = write_scenario(tmp_path, text=text)
        with pytest.raises(ConfigError) as info:
            load_scenario(path)
        assert info.value.line == line
        assert needle in str(info.value)
        assert str(info.value).startswith(f"{path}:{line}: ")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_scenario(tmp_path / "nope.yaml")

    def test_heterogeneous_alpha(self, tmp_path):
        cfg = load_scenario(write_scenario(tmp_path, n=2, alpha="[[1, 5], [2, 3]]"))
        assert not build_game(cfg.game).game.is_symmetric

    @given(
        st.integers(1, 50), st.lists(st.floats(0.1, 9.0), min_size=1, max_size=4),
        st.floats(0.01, 0.99), st.sampled_from(["sync", "async", "synchronous"]),
        st.integers(1, 10**6), st.integers(0, 2**63), st.integers(1, 50), st.integers(1, 9),
        st.one_of(st.none(), st.floats(1.0, 1e3)))
    def test_round_trip(self, n, alpha, delta, mode, maxit, seed, stride, runs, cmax):
        cfg = ScenarioConfig(
            GameConfig(n_players=n, alpha=alpha, lambda_fn={"kind": "affine", "c0": 0.5, "c1": 2.0},
                       base_load=1.5),
            LearnerParams(delta=delta, mode=mode, max_iterations=maxit, seed=seed, c_max=cmax),
            {"concentrate": 0}, Outputs(stride=stride), runs)
        again = parse_scenario(cfg.dump())
        assert again == cfg
        assert again.dump() == cfg.dump()

    def test_grid_round_trip(self):
        cfg = ScenarioConfig(GameConfig(n_players=30, grid="default", l_max_kw=90.0,
                                        reduction="r.yaml"))
        assert parse_scenario(cfg.dump()) == cfg


# ---------------------------------------------------------------------------
# output formats
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_traj():
    g = GameSpec.symmetric([1.0, 1.3, 2.0], 5)
    c = LearnerConfig.for_game(g, delta=0.3, max_iterations=500, seed=2, snapshot_stride=20)
    return run(g, c, MixedProfile.uniform(5, 3))


class TestOutputs:
    def test_fmt(self):
        assert fmt(1 / 3) == "0.333333333333"
        assert fmt(2.0) == "2"

    def test_trajectory_round_trip(self, small_traj):
        text = trajectory_csv(small_traj, ["r0", "r1", "r2"])
        parsed = parse_trajectory_csv(text)
        assert write_trajectory_from_parsed(parsed) == text
        assert write_trajectory_from_parsed(parse_trajectory_csv(text)) == text

    def test_trajectory_content(self, small_traj):
        parsed = parse_trajectory_csv(trajectory_csv(small_traj, ["r0", "r1", "r2"]))
        assert parsed["resources"] == ["r0", "r1", "r2"]
        assert sorted(parsed["mean"]) == list(range(small_traj.iterations + 1))
        for probs, _ in parsed["mean"].values():
            assert abs(probs.sum() - 1) <= 1e-9
        for (it, i), (probs, action, cost) in parsed["players"].items():
            assert abs(probs.sum() - 1) <= 1e-9
            assert it % 20 == 0 or it == small_traj.iterations
            if it < small_traj.iterations:
                assert action in (0, 1, 2) and cost > 0
            else:
                assert action is None and cost is None
        assert parsed["mean"][small_traj.iterations][1] is None

    def test_summary_rounding(self):
        text = dumps_summary({"x": 1 / 3, "nested": [{"y": 2 / 3}], "n": 4, "s": "a"})
        data = json.loads(text)
        assert data == {"x": 0.333333333333, "nested": [{"y": 0.666666666667}], "n": 4, "s": "a"}
        assert dumps_summary(data) == text


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


class TestSimulate:
    def test_outputs(self, tmp_path, capsys):
        path = write_scenario(tmp_path)
        assert run_cli("simulate", "--config", path, "--quiet") == 0
        assert capsys.readouterr().out == ""
        out = tmp_path / "out"
        assert sorted(p.name for p in out.iterdir()) == [
            "summary.json", "trajectory_000.csv", "trajectory_001.csv"]
        summary = json.loads((out / "summary.json").read_text())
        assert summary["c_max"] == 27.0
        assert [r["seed"] for r in summary["runs"]] == [4, 5]
        assert summary["min_alpha_resources"] == ["r0"]
        for r in summary["runs"]:
            assert r["converged_at"] is not None
            assert sum(r["final_profile_histogram"].values()) == 3
            assert isinstance(r["is_nash"], bool)
        hist = summary["aggregate"]["final_profile_histogram"]
        assert sum(hist.values()) == 6

    def test_single_resource(self, tmp_path):
        path = write_scenario(tmp_path, alpha="[1.0]", runs=1)
        assert run_cli("simulate", "--config", path, "--quiet") == 0
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["runs"][0]["converged_at"] == 0
        rows = (tmp_path / "out" / "trajectory_000.csv").read_text().splitlines()
        assert rows[0] == "iteration,player,p_r0,action,cost"
        assert rows[1] == "0,mean,1,,"

    def test_overrides(self, tmp_path):
        path = write_scenario(tmp_path, runs=1)
        assert run_cli("simulate", "--config", path, "--seed", 40, "--mode", "async",
                       "--out-dir", tmp_path / "o2", "--quiet") == 0
        summary = json.loads((tmp_path / "o2" / "summary.json").read_text())
        assert summary["runs"][0]["seed"] == 40
        assert summary["scenario"]["learner"]["mode"] == "async"

    def test_byte_identical(self, tmp_path):
        path = write_scenario(tmp_path, n=12, alpha="[1.0, 1.1, 1.3]", runs=3)
        outs = []
        for k, extra in enumerate([(), (), ("--jobs", 3, "--workers", 4)]):
            d = tmp_path / f"o{k}"
            assert run_cli("simulate", "--config", path, "--out-dir", d, "--quiet", *extra) == 0
            outs.append(tree(d))
        assert outs[0] == outs[1] == outs[2]

    def test_config_error_exit_code(self, tmp_path, capsys):
        path = write_scenario(tmp_path, text="game: {n_players: 2, alpha: [1, 2]}\nbogus: 1\n")
        assert run_cli("simulate", "--config", path) == 2
        err = capsys.readouterr().err
        assert f"{path}:2:" in err and "bogus" in err

    def test_runtime_error_exit_code(self, tmp_path, capsys):
        text = INLINE.format(n=2, alpha="[1.0, 2.0]", runs=1).replace(
            "seed: 4}", "seed: 4, c_max: 1.0}")
        path = write_scenario(tmp_path, text=text)
        assert run_cli("simulate", "--config", path) == 1
        assert "c_max" in capsys.readouterr().err


class TestFindNe:
    def report(self, tmp_path, **kw):
        path = write_scenario(tmp_path, **kw)
        assert run_cli("find-ne", "--config", path, "--quiet") == 0
        return json.loads((tmp_path / "out" / "ne_report.json").read_text())

    def test_unique_min(self, tmp_path):
        rep = self.report(tmp_path)
        assert rep["characterization"]["min_alpha_resources"] == ["r0"]
        assert rep["bruteforce"] == {"performed": True, "equilibria": 1, "agrees": True}

    def test_all_equal(self, tmp_path):
        rep = self.report(tmp_path, alpha="[2.0, 2.0, 2.0]")
        assert rep["characterization"]["min_alpha_resources"] == ["r0", "r1", "r2"]
        assert rep["bruteforce"]["equilibria"] == 27 and rep["bruteforce"]["agrees"]

    def test_guard(self, tmp_path):
        rep = self.report(tmp_path, n=20)
        assert rep["characterization"]["min_alpha_resources"] == ["r0"]
        assert rep["bruteforce"]["performed"] is False
        assert "limit" in rep["bruteforce"]["notice"]

    def test_heterogeneous(self, tmp_path):
        rep = self.report(tmp_path, n=2, alpha="[[1, 5], [2, 3]]")
        assert rep["characterization"] is None
        assert "unavailable" in rep["characterization_notice"]
        g = GameSpec(np.array([[1.0, 5.0], [2.0, 3.0]]))
        from nscongestion.game import is_nash
        expected = [list(r) for r in all_profiles(2, 2).tolist() if is_nash(g, r)]
        assert rep["bruteforce"]["profiles"] == expected


class TestGridCommands:
    def test_reduce_default(self, tmp_path, default_reduction):
        out = tmp_path / "red.yaml"
        assert run_cli("reduce-grid", "--players", 1500, "--out", out, "--quiet") == 0
        data = yaml.safe_load(out.read_text())
        a = data["alpha_tilde"]
        assert a["b"] < a["a"] < a["c"]
        assert [a[k] for k in "abc"] == default_reduction.alpha_tilde.tolist()
        assert len(data["lambda_table"]["xs"]) == 256

    def test_reduce_zero_impedance(self, tmp_path, default_net):
        from test_grid import zero_impedance_net
        save_network(zero_impedance_net(default_net), tmp_path / "z.yaml")
        out = tmp_path / "red.yaml"
        assert run_cli("reduce-grid", "--config", tmp_path / "z.yaml", "--l-max", 3000,
                       "--out", out, "--quiet") == 0
        a = yaml.safe_load(out.read_text())["alpha_tilde"]
        assert all(abs(v - 1) <= 1e-6 for v in a.values())

    def test_reduction_reingested(self, tmp_path):
        red = tmp_path / "red.yaml"
        assert run_cli("reduce-grid", "--players", 40, "--out", red, "--quiet") == 0
        one_shot = ScenarioConfig(GameConfig(n_players=40, grid="default"))
        reused = ScenarioConfig(GameConfig(n_players=40, grid="default", reduction=str(red)))
        g1 = build_game(one_shot.game, tmp_path)
        g2 = build_game(reused.game, tmp_path)
        assert g1.game == g2.game
        assert np.array_equal(g1.reduction.alpha_tilde, g2.reduction.alpha_tilde)

    def test_reduce_needs_size(self, capsys):
        assert run_cli("reduce-grid") == 2

    def test_powerflow(self, capsys):
        assert run_cli("powerflow") == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("iteration")
        assert float(lines[1].split()[1]) <= 1e-8
        volts = [ln.split() for ln in lines if ln.startswith("voltage")]
        assert [v[1] for v in volts] == ["head", "d", "a", "b", "c"]
        assert all(len(v[2].replace(".", "").lstrip("0")) <= 12 for v in volts)

    def test_powerflow_infeasible(self, capsys):
        assert run_cli("powerflow", "--load", "a=1e9") == 1
        assert "power flow" in capsys.readouterr().err

    def test_powerflow_bad_load(self, capsys):
        assert run_cli("powerflow", "--load", "a") == 2

    def test_bad_grid_file(self, tmp_path, capsys):
        (tmp_path / "g.yaml").write_text("buses: []\n")
        assert run_cli("powerflow", "--config", tmp_path / "g.yaml") == 2


@pytest.mark.slow
def test_feeder_scenario_summary(tmp_path):
    text = textwrap.dedent("""\
        game: {grid: default, n_players: 1500}
        learner: {delta: 0.5, mode: sync, max_iterations: 5000, seed: 0}
        outputs: {stride: 500}
        runs: 3
        """)
    path = write_scenario(tmp_path, text=text)
    assert run_cli("simulate", "--config", path, "--jobs", 3, "--quiet") == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["min_alpha_resources"] == ["b"]
    assert summary["aggregate"]["modal_on_min_alpha_fraction"] == 1.0
    assert all(r["modal_resource"] == "b" for r in summary["runs"])
