"""The pspdg command line, driven through click's CliRunner."""

# Global imports
import json
import shutil

# 3rd party imports
import pytest
from click.testing import CliRunner

# local imports
import param
from cli import main
from conftest import CONFIG, CORPUS, load, pspdg
from mini_pir import parse
from pspdg_core import canonicalize

B_FAST = str(CORPUS / "necessity" / "B" / "fast.pir")
A_FAST = str(CORPUS / "necessity" / "A" / "fast.pir")
A_SLOW = str(CORPUS / "necessity" / "A" / "slow.pir")
IS_KERNEL = str(CORPUS / "is_kernel.pir")


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


def run(runner: CliRunner, *args: str):
    return runner.invoke(main, ["--config", str(CONFIG), *args])


def test_version(runner):
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == param.exit_ok
    assert param.version in result.stdout


def test_parse_prints_a_fixed_point(runner):
    result = run(runner, "parse", IS_KERNEL)
    assert result.exit_code == param.exit_ok
    assert parse(result.stdout) == load(CORPUS / "is_kernel.pir")


def test_malformed_input_exits_with_one(runner, tmp_path):
    broken = tmp_path / "broken.pir"
    broken.write_text("func main() {\n  x = 1\n}\n", encoding="utf-8")
    result = run(runner, "build", str(broken))
    assert result.exit_code == param.exit_input_error
    assert "UnresolvedIdentifier" in result.output


def test_missing_file(runner, tmp_path):
    result = run(runner, "parse", str(tmp_path / "nope.pir"))
    assert result.exit_code == param.exit_input_error


def test_build_text_is_the_canonical_form(runner):
    result = run(runner, "build", B_FAST)
    assert result.exit_code == param.exit_ok
    assert result.stdout == canonicalize(pspdg(load(CORPUS / "necessity" / "B" / "fast.pir"))).text


def test_build_dot_shows_traits_unless_ablated(runner):
    full = run(runner, "build", B_FAST, "--format", "dot")
    assert full.exit_code == param.exit_ok
    assert full.stdout.startswith("digraph pspdg {")
    assert "singular@" in full.stdout
    ablated = run(runner, "build", B_FAST, "--format", "dot", "--ablate", "nt")
    assert ablated.exit_code == param.exit_ok
    assert "singular" not in ablated.stdout


def test_build_pdg_rejects_ablation(runner):
    result = run(runner, "build", B_FAST, "--graph", "pdg", "--ablate", "nt")
    assert result.exit_code == param.exit_input_error


def test_build_with_the_wrong_model(runner):
    result = run(runner, "build", str(CORPUS / "constructs" / "spawn_cilk.pir"))
    assert result.exit_code == param.exit_input_error
    assert "UnsupportedConstruct" in result.output
    assert run(runner, "build", str(CORPUS / "constructs" / "spawn_cilk.pir"), "--model", "cilk").exit_code == param.exit_ok


def test_sccs_json(runner):
    result = run(runner, "sccs", A_SLOW, "--format", "json")
    assert result.exit_code == param.exit_ok
    (loop,) = json.loads(result.stdout)["loops"]
    assert loop["loop"] == "L1"
    assert [s["kind"] for s in loop["sccs"]] == ["sequential"]
    assert run(runner, "sccs", A_SLOW, "--loop", "L9").exit_code == param.exit_input_error


def test_enumerate_counts(runner):
    result = run(runner, "enumerate", IS_KERNEL, "--format", "json")
    assert result.exit_code == param.exit_ok
    rows = {r["loop"]: r for r in json.loads(result.stdout)["options"]}
    assert rows["L2"]["source"] == 448
    assert rows["total"]["ps_pdg"] > rows["total"]["pdg"]


def test_enumerate_one_loop_with_overrides(runner):
    result = run(runner, "enumerate", A_FAST, "--loop", "L1", "--cores", "2", "--chunks", "1", "--format", "text")
    assert result.exit_code == param.exit_ok
    assert result.stdout.splitlines() == ["L1: DOALL(cores=1, chunk=1)", "L1: DOALL(cores=2, chunk=1)"]


def test_config_file_sets_the_plan_space(runner, tmp_path):
    ini = tmp_path / "pspdg.ini"
    ini.write_text("[ENUMERATION]\ncores = 3\nchunk_sizes = 1\n", encoding="utf-8")
    result = runner.invoke(main, ["--config", str(ini), "enumerate", A_FAST, "--loop", "L1", "--format", "json"])
    assert result.exit_code == param.exit_ok
    assert len(json.loads(result.stdout)["plans"]) == 3


def test_emulate_with_check(runner):
    result = run(runner, "emulate", A_FAST, "--check", "--format", "text", "--baseline", "sequential")
    assert result.exit_code == param.exit_ok
    lines = result.stdout.splitlines()
    assert [line.split(":")[0] for line in lines] == ["sequential", "pdg", "source", "ps-pdg"]
    assert lines[0].startswith("sequential: path=9/9")


def test_report_is_deterministic(runner):
    first = run(runner, "report", IS_KERNEL)
    second = run(runner, "report", IS_KERNEL)
    assert first.exit_code == param.exit_ok
    assert first.stdout == second.stdout
    document = json.loads(first.stdout)
    assert document["schema"] == param.json_schema
    assert document["program"] == "is_kernel.pir"
    paths = document["critical_paths"]
    assert paths["ps-pdg"]["critical_path_length"] <= paths["source"]["critical_path_length"]


def test_report_hits_the_trace_cap(runner):
    result = run(runner, "report", IS_KERNEL, "--trace-cap", "5")
    assert result.exit_code == param.exit_resource_cap
    assert json.loads(result.stdout)["truncated"] is True


def test_diff(runner):
    same = run(runner, "diff", A_FAST, A_FAST)
    assert same.exit_code == param.exit_ok
    assert same.stdout.strip() == "graphs are equal"
    changed = run(runner, "diff", A_FAST, A_SLOW, "--format", "json")
    assert changed.exit_code == param.exit_ok
    assert json.loads(changed.stdout)["equal"] is False
    ablated = run(runner, "diff", A_FAST, A_SLOW, "--ablate", "hn-ue")
    assert ablated.stdout.strip() == "graphs are equal"


# -----------------------------------------------------------------------------
# necessity
# -----------------------------------------------------------------------------
def test_necessity_passes_on_the_corpus(runner):
    result = run(runner, "necessity", "--corpus", str(CORPUS), "--format", "json")
    assert result.exit_code == param.exit_ok
    rows = json.loads(result.stdout)["necessity"]
    assert [r["pair"] for r in rows] == sorted(param.necessity_pairs)
    assert all(r["ok"] for r in rows)


def test_necessity_fails_when_a_pair_collapses(runner, tmp_path):
    corpus = tmp_path / "corpus"
    shutil.copytree(CORPUS / "necessity", corpus / "necessity")
    shutil.copy(corpus / "necessity" / "A" / "fast.pir", corpus / "necessity" / "A" / "slow.pir")
    result = run(runner, "necessity", "--corpus", str(corpus), "--format", "json")
    assert result.exit_code == param.exit_property_violation
    rows = {r["pair"]: r for r in json.loads(result.stdout)["necessity"]}
    assert rows["A"]["equal_with"] is True
    assert not rows["A"]["ok"] and rows["B"]["ok"]


def test_necessity_needs_every_pair(runner, tmp_path):
    corpus = tmp_path / "corpus"
    shutil.copytree(CORPUS / "necessity", corpus / "necessity")
    shutil.rmtree(corpus / "necessity" / "C")
    result = run(runner, "necessity", "--corpus", str(corpus))
    assert result.exit_code == param.exit_input_error
    assert "pair C" in result.output


TWO_LOOPS = """\
global a: array[16]
global b: array[2]

func main() {
  @pragma(parallel_for, id=L1, iv=i, trip=16) {
    a[i] = i + 1
  }
  @pragma(parallel_for, id=L2, iv=j, trip=2) {
    b[j] = j + 1
  }
}
"""


@pytest.fixture
def two_loops(tmp_path):
    program = tmp_path / "two_loops.pir"
    program.write_text(TWO_LOOPS, encoding="utf-8")
    ini = tmp_path / "pspdg.ini"
    ini.write_text("[ENUMERATION]\ncores = 2\nchunk_sizes = 1\ncoverage = 0.5\n", encoding="utf-8")
    return str(program), str(ini)


def test_report_honours_the_ini_coverage(runner, two_loops):
    program, ini = two_loops
    result = runner.invoke(main, ["--config", ini, "report", program])
    assert result.exit_code == param.exit_ok
    loops = [r["loop"] for r in json.loads(result.stdout)["options"]]
    assert loops == ["L1", "total"]


def test_enumerate_honours_the_ini_coverage(runner, two_loops):
    program, ini = two_loops
    result = runner.invoke(main, ["--config", ini, "enumerate", program, "--format", "json"])
    assert result.exit_code == param.exit_ok
    assert [r["loop"] for r in json.loads(result.stdout)["options"]] == ["L1", "total"]
    cold = runner.invoke(main, ["--config", ini, "enumerate", program, "--loop", "L2", "--format", "json"])
    assert json.loads(cold.stdout)["plans"] == []
    # the command line still wins over the ini file
    everything = runner.invoke(main, ["--config", ini, "enumerate", program, "--coverage", "0", "--format", "json"])
    assert [r["loop"] for r in json.loads(everything.stdout)["options"]] == ["L1", "L2", "total"]


def test_enumerate_keeps_a_partial_trace(runner):
    result = run(runner, "enumerate", IS_KERNEL, "--trace-cap", "5", "--format", "json")
    assert result.exit_code == param.exit_ok
    assert json.loads(result.stdout)["options"][-1]["loop"] == "total"
