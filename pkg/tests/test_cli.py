import subprocess
import sys
from pathlib import Path

import pytest

from epivolt.cli import main, read_manifest, sha256
from epivolt.config import load_config
from epivolt.covid import CovidScenario, build_covid_law
from epivolt.early_phase import extinction_probability, solve_rho
from epivolt.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SOLVE = """\
kind = "solve_only"

[model]
variant = "SEIR_SIR_merged"
I0_frac = {i0}
horizon = 10.0
dt = {dt}
grid_step = {dt}
fp_max_iter = 5

[model.law]
kind = "constant"
beta = {beta}
exposed = {{ dist = "deterministic", value = 0.0 }}
infectious = {{ dist = "exponential", rate = 1.0 }}
"""

FLLN = """\
kind = "flln_compare"

[model]
variant = "SEIR_SIR_merged"
N = 200
I0_frac = 0.05
horizon = 20.0
dt = 0.05
grid_step = 0.5

[model.law]
kind = "covid"
p_R = 0.8
alpha = 0.7

[ensemble]
replicates = 6
master_seed = 7
"""


def _write(tmp_path, text, name="exp.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path, capsys):
    assert main(["validate", str(path)]) == 0
    assert "ok" in capsys.readouterr().out


def test_validate_rejects_initial_fraction_above_one(tmp_path, capsys):
    p = _write(tmp_path, SOLVE.format(i0=1.2, dt=0.01, beta=2.0))
    assert main(["validate", str(p)]) == 1
    err = capsys.readouterr().err
    assert "line 5" in err and "0 < E0 + I0 < 1" in err


def test_validate_rejects_missing_seed(tmp_path, capsys):
    p = _write(tmp_path, FLLN.replace("master_seed = 7\n", ""))
    assert main(["validate", str(p)]) == 1
    assert "master_seed" in capsys.readouterr().err


def test_validate_rejects_unknown_key_with_line(tmp_path):
    text = SOLVE.format(i0=0.05, dt=0.01, beta=2.0).replace("horizon = 10.0", "horizon = 10.0\nhorizn = 3")
    with pytest.raises(ConfigError) as exc:
        load_config(_write(tmp_path, text))
    assert exc.value.line == 7
    assert "horizn" in str(exc.value)


def test_validate_rejects_malformed_toml(tmp_path, capsys):
    p = _write(tmp_path, 'kind = "heatmap"\n[heatmap\nrho = 0.1\n')
    assert main(["validate", str(p)]) == 1
    assert "line 2" in capsys.readouterr().err


def test_validate_rejects_section_for_other_kind(tmp_path):
    text = 'kind = "heatmap"\n[heatmap]\nrho = 0.1\n[ensemble]\nreplicates = 3\nmaster_seed = 1\n'
    with pytest.raises(ConfigError) as exc:
        load_config(_write(tmp_path, text))
    assert exc.value.line == 4


def test_missing_file_is_config_error(tmp_path):
    assert main(["validate", str(tmp_path / "nope.toml")]) == 1


def test_heatmap_run_and_manifest(tmp_path, capsys):
    p = _write(tmp_path, 'kind = "heatmap"\n[heatmap]\ndoubling_time = 2.5\nn_alpha = 11\nn_pR = 6\n')
    out = tmp_path / "res"
    assert main(["run", str(p), "--out", str(out)]) == 0
    manifest = read_manifest(out)
    assert set(manifest) == {"heatmap.csv"}
    digest, rows = manifest["heatmap.csv"]
    assert digest == sha256(out / "heatmap.csv")
    assert rows == 7
    assert "R0 max" in capsys.readouterr().out


def test_solve_only_matches_manifest_and_is_byte_identical(tmp_path):
    p = _write(tmp_path, SOLVE.format(i0=0.05, dt=0.01, beta=2.0).replace("fp_max_iter = 5\n", ""))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(p), "--out", str(a)]) == 0
    assert main(["run", str(p), "--out", str(b)]) == 0
    assert (a / "volterra.csv").read_bytes() == (b / "volterra.csv").read_bytes()
    assert (a / "manifest.txt").read_bytes() == (b / "manifest.txt").read_bytes()
    for path, (digest, rows) in read_manifest(a).items():
        assert sha256(a / path) == digest
        assert len((a / path).read_text().splitlines()) == rows


def test_flln_rerun_is_byte_identical_across_threads(tmp_path):
    p = _write(tmp_path, FLLN)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(p), "--out", str(a), "--threads", "1"]) == 0
    assert main(["run", str(p), "--out", str(b), "--threads", "2"]) == 0
    for name in ("ensemble.csv", "volterra.csv", "sup_distance.txt", "manifest.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_runtime_error_leaves_no_output(tmp_path, capsys):
    p = _write(tmp_path, SOLVE.format(i0=0.05, dt=1.0, beta=40.0))
    out = tmp_path / "res"
    assert main(["run", str(p), "--out", str(out)]) == 2
    assert "runtime error" in capsys.readouterr().err
    assert not out.exists()
    assert not any(q.name.startswith(".epivolt-") for q in tmp_path.iterdir())


def test_runtime_error_keeps_previous_results(tmp_path):
    good = _write(tmp_path, SOLVE.format(i0=0.05, dt=0.01, beta=2.0).replace("fp_max_iter = 5\n", ""), "good.toml")
    bad = _write(tmp_path, SOLVE.format(i0=0.05, dt=1.0, beta=40.0), "bad.toml")
    out = tmp_path / "res"
    assert main(["run", str(good), "--out", str(out)]) == 0
    before = (out / "manifest.txt").read_bytes()
    assert main(["run", str(bad), "--out", str(out)]) == 2
    assert (out / "manifest.txt").read_bytes() == before


def test_refuses_foreign_directory(tmp_path):
    p = _write(tmp_path, 'kind = "heatmap"\n[heatmap]\nrho = 0.1\nn_alpha = 3\nn_pR = 3\n')
    out = tmp_path / "mine"
    out.mkdir()
    (out / "notes.txt").write_text("keep me")
    assert main(["run", str(p), "--out", str(out)]) == 1
    assert (out / "notes.txt").read_text() == "keep me"


def test_output_dir_relative_to_config(tmp_path):
    sub = tmp_path / "configs"
    sub.mkdir()
    p = _write(sub, 'kind = "heatmap"\n[heatmap]\nrho = 0.1\nn_alpha = 3\nn_pR = 3\n[output]\ndir = "../out/h"\n')
    assert main(["run", str(p)]) == 0
    assert (tmp_path / "out" / "h" / "heatmap.csv").exists()


def test_growth_summary_run(tmp_path):
    out = tmp_path / "gs"
    assert main(["run", str(CONFIGS / "covid_growth_summary.toml"), "--out", str(out)]) == 0
    text = (out / "summary.txt").read_text()
    assert "R0" in text
    header, row = (out / "summary.csv").read_text().splitlines()
    assert len(header.split(",")) == len(row.split(","))


def test_early_growth_run(tmp_path):
    text = FLLN.replace('kind = "flln_compare"', 'kind = "early_growth"').replace("I0_frac = 0.05", "I0 = 5")
    text = text.replace("N = 200", "N = 2000").replace("horizon = 20.0", "horizon = 80.0")
    out = tmp_path / "eg"
    assert main(["run", str(_write(tmp_path, text)), "--out", str(out)]) == 0
    rows = (out / "replicates.csv").read_text().splitlines()
    assert rows[0] == "replicate,extinct,rho_hat,T_eps,T_alpha"
    assert len(rows) == 7
    curves = (out / "log_curves.csv").read_text().splitlines()
    assert curves[0].split(",")[1:] == [f"r{r}" for r in range(6)]
    summary = dict(line.split(" = ") for line in (out / "summary.txt").read_text().splitlines())
    law = build_covid_law(CovidScenario(0.8, 0.7))
    assert float(summary["q"]) == pytest.approx(extinction_probability(law, I0=5), rel=1e-5)
    assert float(summary["rho"]) == pytest.approx(solve_rho(law), rel=1e-5)
    assert 0 <= float(summary["extinct_fraction"]) <= 1


def test_threads_flag_must_be_positive(tmp_path):
    p = _write(tmp_path, 'kind = "heatmap"\n[heatmap]\nrho = 0.1\n')
    with pytest.raises(SystemExit):
        main(["run", str(p), "--threads", "0"])


def test_console_script_entry_point(tmp_path):
    p = _write(tmp_path, 'kind = "heatmap"\n[heatmap]\nrho = 0.1\n')
    res = subprocess.run([sys.executable, "-m", "epivolt.cli", "validate", str(p)], capture_output=True, text=True)
    assert res.returncode == 0
    assert "kind=heatmap" in res.stdout
