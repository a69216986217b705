"""Front door coverage: parsing, suite execution, exit codes, determinism."""

import json
import os

import pytest
from click.testing import CliRunner

from devissage.cli import (
    RunConfig,
    SUITE_NAMES,
    build_instance,
    explain,
    load_raw,
    main,
    render_json,
    render_text,
    run,
)
from devissage.errors import InvalidInstance, ParseError, UnknownSequence

FIXTURES = os.path.join(os.path.dirname(__file__), os.pardir, "fixtures")
G1_SWAP = os.path.join(FIXTURES, "g1_swap.json")
G2_TREE = os.path.join(FIXTURES, "g2_tree.json")

FAST_SUITES = "boxcalc,torsionlevels,graph,splitting,devissage,bhn"


def write_instance(tmp_path, payload, name="inst.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def banana_raw(genus=(0, 0), action=True, **extra):
    if action is True:
        action = [[["a", "b"]]]
    elif action is False:
        action = []
    payload = {
        "schema": "devissage/1",
        "components": [{"id": "u", "genus": genus[0]},
                       {"id": "v", "genus": genus[1]}],
        "nodes": ["a", "b"],
        "edges": [["u", "a"], ["v", "a"], ["u", "b"], ["v", "b"]],
        "action": action,
        "ell": 3,
        "q": 5,
    }
    payload.update(extra)
    return payload


def config_for(path, **kw):
    kw.setdefault("suites", ("graph",))
    return RunConfig(input_path=path, **kw)


class TestRunConfig:

    def test_all_expands_in_declared_order(self):
        cfg = RunConfig(input_path="x", suites=("all",))
        assert cfg.selected == SUITE_NAMES

    def test_duplicates_collapse_but_order_survives(self):
        cfg = RunConfig(input_path="x", suites=("graph", "bhn", "graph"))
        assert cfg.selected == ("graph", "bhn")

    def test_composite_ell_rejected(self):
        with pytest.raises(InvalidInstance):
            RunConfig(input_path="x", ell=6)

    def test_level_above_precision_rejected(self):
        with pytest.raises(InvalidInstance):
            RunConfig(input_path="x", precision=2, max_level=3)

    def test_level_zero_rejected(self):
        with pytest.raises(InvalidInstance):
            RunConfig(input_path="x", max_level=0)

    def test_unknown_suite_rejected(self):
        with pytest.raises(InvalidInstance):
            RunConfig(input_path="x", suites=("graph", "nope"))

    def test_bad_format_rejected(self):
        with pytest.raises(InvalidInstance):
            RunConfig(input_path="x", fmt="yaml")

    def test_tree_cap_must_be_positive(self):
        with pytest.raises(InvalidInstance):
            RunConfig(input_path="x", tree_cap=0)


class TestParsing:

    def test_shipped_fixtures_parse(self):
        for path, want_betti in ((G1_SWAP, 1), (G2_TREE, 0)):
            inst = build_instance(load_raw(path), config_for(path))
            assert sum(1 for _ in inst.graph.nodes) >= 1
            from devissage.dualgraph import betti
            assert betti(inst.graph) == want_betti

    def test_missing_schema_field(self, tmp_path):
        payload = banana_raw()
        del payload["schema"]
        path = write_instance(tmp_path, payload)
        with pytest.raises(ParseError, match="schema"):
            load_raw(path)

    def test_wrong_schema_version(self, tmp_path):
        path = write_instance(tmp_path, banana_raw(schema="devissage/99"))
        with pytest.raises(ParseError, match="devissage/1"):
            load_raw(path)

    def test_json_error_reports_line(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{\n  "schema": "devissage/1",\n  "components": [,]\n}')
        with pytest.raises(ParseError, match="line 3"):
            load_raw(str(path))

    def test_degree_three_node_rejected(self, tmp_path):
        payload = {
            "schema": "devissage/1",
            "components": [{"id": "u", "genus": 0}, {"id": "v", "genus": 0},
                           {"id": "w", "genus": 0}],
            "nodes": ["a"],
            "edges": [["u", "a"], ["v", "a"], ["w", "a"]],
            "ell": 3, "q": 5,
        }
        path = write_instance(tmp_path, payload)
        with pytest.raises(ParseError, match="graph"):
            build_instance(load_raw(path), config_for(path))

    def test_action_cycle_with_unknown_vertex(self, tmp_path):
        path = write_instance(tmp_path, banana_raw(action=[[["a", "zz"]]]))
        with pytest.raises(ParseError, match="zz"):
            build_instance(load_raw(path), config_for(path))

    def test_action_vertex_repeated(self, tmp_path):
        path = write_instance(
            tmp_path, banana_raw(action=[[["a", "b"], ["b", "a"]]]))
        with pytest.raises(ParseError, match="twice"):
            build_instance(load_raw(path), config_for(path))

    def test_unknown_jacobian_component(self, tmp_path):
        payload = banana_raw(
            genus=(1, 0),
            jacobians=[{"orbit_rep": "zz", "charpoly": [1, -2, 5],
                        "q": 5, "f": 1}])
        path = write_instance(tmp_path, payload)
        with pytest.raises(ParseError, match="instance"):
            build_instance(load_raw(path), config_for(path))

    def test_missing_q(self, tmp_path):
        payload = banana_raw()
        del payload["q"]
        path = write_instance(tmp_path, payload)
        with pytest.raises(ParseError, match="'q'"):
            build_instance(load_raw(path), config_for(path))

    def test_ell_flag_overrides_file_value(self, tmp_path):
        path = write_instance(tmp_path, banana_raw())
        inst = build_instance(load_raw(path), config_for(path, ell=2))
        assert inst.ell == 2

    def test_missing_ell_without_flag(self, tmp_path):
        payload = banana_raw()
        del payload["ell"]
        path = write_instance(tmp_path, payload)
        with pytest.raises(ParseError, match="ell"):
            build_instance(load_raw(path), config_for(path))
        inst = build_instance(load_raw(path), config_for(path, ell=7))
        assert inst.ell == 7

    def test_default_divisors_when_absent(self):
        inst = build_instance(load_raw(G1_SWAP), config_for(G1_SWAP))
        assert len(inst.divisors.ids) == 2


class TestDivisorActionDerivation:

    def test_anchored_divisors_follow_their_node(self, tmp_path):
        payload = banana_raw(divisors=[
            {"id": "p_u", "at": {"component": "u"}},
            {"id": "p_v", "at": {"component": "v"}},
            {"id": "d_a", "at": {"node": "a"}},
            {"id": "d_b", "at": {"node": "b"}},
        ])
        path = write_instance(tmp_path, payload)
        inst = build_instance(load_raw(path), config_for(path))
        perm = inst.divisors.action[0]
        assert perm["d_a"] == "d_b" and perm["d_b"] == "d_a"
        assert perm["p_u"] == "p_u" and perm["p_v"] == "p_v"

    def test_free_divisors_match_by_sorted_position(self, tmp_path):
        # component swap: the free divisor on u must land on the one on v
        payload = banana_raw(
            action=[[["u", "v"]]],
            divisors=[{"id": "p_u", "at": {"component": "u"}},
                      {"id": "p_v", "at": {"component": "v"}}])
        path = write_instance(tmp_path, payload)
        inst = build_instance(load_raw(path), config_for(path))
        perm = inst.divisors.action[0]
        assert perm["p_u"] == "p_v" and perm["p_v"] == "p_u"

    def test_anchored_image_without_divisor_rejected(self, tmp_path):
        payload = banana_raw(divisors=[
            {"id": "p_u", "at": {"component": "u"}},
            {"id": "p_v", "at": {"component": "v"}},
            {"id": "d_a", "at": {"node": "a"}},
        ])
        path = write_instance(tmp_path, payload)
        with pytest.raises(ParseError, match="image"):
            build_instance(load_raw(path), config_for(path))

    def test_at_must_hold_exactly_one_key(self, tmp_path):
        payload = banana_raw(divisors=[
            {"id": "p", "at": {"component": "u", "node": "a"}}])
        path = write_instance(tmp_path, payload)
        with pytest.raises(ParseError, match="exactly one"):
            build_instance(load_raw(path), config_for(path))


class TestRunLibrary:

    def test_fast_suites_pass_on_swap_fixture(self):
        cfg = RunConfig(input_path=G1_SWAP,
                        suites=tuple(FAST_SUITES.split(",")))
        code, report = run(cfg)
        assert code == 0
        assert report["verdict"] == "PASS"
        assert set(report["suites"]) == set(FAST_SUITES.split(","))
        assert report["suites"]["bhn"]["rho"] == 0
        assert report["suites"]["bhn"]["m"] == 2
        assert report["modeled_terms"] is True

    def test_genus_defect_fails_with_exit_two(self, tmp_path):
        payload = banana_raw(
            genus=(1, 0),
            jacobians=[{"orbit_rep": "u", "charpoly": [1, -2, 5],
                        "q": 5, "f": 1}])
        path = write_instance(tmp_path, payload)
        code, report = run(RunConfig(input_path=path, suites=("devissage",),
                                     max_level=2))
        assert code == 2
        assert report["verdict"] == "FAIL"
        names = [c["name"] for c in report["suites"]["devissage"]["checks"]
                 if c["verdict"] == "FAIL"]
        assert any("kernel object" in n for n in names)

    def test_parse_failure_exits_four(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("not json at all")
        code, report = run(RunConfig(input_path=str(path)))
        assert code == 4
        assert report["verdict"] == "ERROR"
        assert report["error"]["kind"] == "parse"

    def test_cap_exhaustion_exits_three(self):
        code, report = run(RunConfig(input_path=G1_SWAP, suites=("graph",),
                                     tree_cap=2))
        assert code == 3
        assert report["error"]["kind"] == "cap"

    def test_bhn_needs_single_generator(self, tmp_path):
        payload = banana_raw(action=[[["a", "b"]], [["u", "v"]]])
        path = write_instance(tmp_path, payload)
        code, report = run(RunConfig(input_path=path, suites=("bhn",)))
        assert code == 4
        assert report["error"]["kind"] == "invalid"

    def test_json_rendering_skips_timings(self):
        code, report = run(RunConfig(input_path=G2_TREE, suites=("graph",)))
        assert code == 0
        assert "timings" in report
        assert "timings" not in json.loads(render_json(report))
        assert "s)" in render_text(report)

    def test_seed_changes_draws_not_verdicts(self):
        base = run(RunConfig(input_path=G2_TREE, suites=("boxcalc",)))
        other = run(RunConfig(input_path=G2_TREE, suites=("boxcalc",),
                              seed=99))
        assert base[0] == other[0] == 0
        assert base[1]["suites"]["boxcalc"]["verdict"] == "PASS"
        assert other[1]["suites"]["boxcalc"]["verdict"] == "PASS"


class TestCommandLine:

    def test_run_bhn_on_swap_fixture(self):
        runner = CliRunner()
        res = runner.invoke(main, ["run", "--input", G1_SWAP,
                                   "--suite", "bhn"])
        assert res.exit_code == 0
        report = json.loads(res.output)
        assert report["verdict"] == "PASS"
        assert report["suites"]["bhn"]["rho"] == 0

    def test_text_format(self):
        runner = CliRunner()
        res = runner.invoke(main, ["run", "--input", G2_TREE,
                                   "--suite", "graph", "--format", "text"])
        assert res.exit_code == 0
        assert "devissage report" in res.output
        assert "[graph] PASS" in res.output

    def test_out_writes_file(self, tmp_path):
        target = tmp_path / "report.json"
        runner = CliRunner()
        res = runner.invoke(main, ["run", "--input", G2_TREE,
                                   "--suite", "graph",
                                   "--out", str(target)])
        assert res.exit_code == 0
        assert res.output == ""
        assert json.loads(target.read_text())["verdict"] == "PASS"

    def test_malformed_input_exits_four(self, tmp_path):
        path = tmp_path / "zz.json"
        path.write_text("{")
        runner = CliRunner()
        res = runner.invoke(main, ["run", "--input", str(path)])
        assert res.exit_code == 4
        assert json.loads(res.output)["verdict"] == "ERROR"

    def test_bad_flag_combination_exits_four(self):
        runner = CliRunner()
        res = runner.invoke(main, ["run", "--input", G2_TREE, "--ell", "9"])
        assert res.exit_code == 4

    def test_tree_cap_flag_exits_three(self):
        runner = CliRunner()
        res = runner.invoke(main, ["run", "--input", G1_SWAP,
                                   "--suite", "graph", "--tree-cap", "2"])
        assert res.exit_code == 3

    def test_tree_cap_env_override(self):
        runner = CliRunner()
        res = runner.invoke(main, ["run", "--input", G1_SWAP,
                                   "--suite", "graph"],
                            env={"DEVISSAGE_TREE_CAP": "2"})
        assert res.exit_code == 3
        res = runner.invoke(main, ["run", "--input", G1_SWAP,
                                   "--suite", "graph"],
                            env={"DEVISSAGE_TREE_CAP": "junk"})
        assert res.exit_code == 4

    def test_flag_beats_env(self):
        runner = CliRunner()
        res = runner.invoke(main, ["run", "--input", G1_SWAP,
                                   "--suite", "graph",
                                   "--tree-cap", "100"],
                            env={"DEVISSAGE_TREE_CAP": "2"})
        assert res.exit_code == 0

    def test_identical_runs_are_byte_identical(self):
        runner = CliRunner()
        args = ["run", "--input", G1_SWAP, "--suite", FAST_SUITES]
        first = runner.invoke(main, args)
        second = runner.invoke(main, args)
        assert first.exit_code == second.exit_code == 0
        assert first.output == second.output

    def test_all_suites_on_tree_fixture(self):
        # full pipeline including the vanishing grid; slowest cli test
        runner = CliRunner()
        res = runner.invoke(main, ["run", "--input", G2_TREE])
        assert res.exit_code == 0
        report = json.loads(res.output)
        assert report["verdict"] == "PASS"
        assert set(report["suites"]) == set(SUITE_NAMES)


class TestExplain:

    KNOWN = ("spl1", "spl2", "dev1", "dev2", "upsilon", "bhnfin",
             "cohom1", "cohom2")

    def test_registry_complete(self):
        for name in self.KNOWN:
            text = explain(name)
            assert name in text
            assert "COMPUTED" in text

    def test_modeled_terms_flagged(self):
        for name in ("spl1", "dev1", "dev2", "bhnfin", "cohom1", "cohom2"):
            assert "MODELED" in explain(name)
        assert "MODELED" not in explain("spl2")

    def test_unknown_name(self):
        with pytest.raises(UnknownSequence):
            explain("bogus")

    def test_command_exit_codes(self):
        runner = CliRunner()
        assert runner.invoke(main, ["explain", "spl2"]).exit_code == 0
        assert runner.invoke(main, ["explain", "bogus"]).exit_code == 4
