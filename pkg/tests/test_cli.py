import csv
import json
import subprocess
import sys

import pytest

from impurity_vqdmft import pauli
from impurity_vqdmft.cli import ConfigError, load_config, main, parse_layers

HALF = """
model: {U: 4.0, mu: 2.0, B: 2, bath: [[-1.2, 0.6], [1.2, 0.6]]}
evolution: {layers_gs: 2}
"""

U0 = """
model: {U: 0.0, mu: 0.0, B: 2}
grid: {n_max: 100}
dmft: {solver: exact, bath_restarts: 2}
fit: {t_fits: [10.0, 20.0]}
evolution: {t_max: 20.0}
"""

INTERACTING = """
model: {U: 4.0, mu: -0.25, B: 2}
grid: {n_max: 100}
dmft: {solver: exact, bath_restarts: 2, max_iter: MAXIT}
fit: {t_fits: [10.0]}
evolution: {t_max: 10.0}
"""

SMALL_EVOLVE = """
model: {U: 4.0, mu: 1.1, B: 1, bath: [[0.4, 0.7]]}
evolution: {t_max: 3.2, layers_evo: 2, layers_gs: 2}
dmft: {solver: compressed}
fit: {t_fits: [3.2]}
"""


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_parse_layers():
    assert parse_layers("3") == [3]
    assert parse_layers("1..4") == [1, 2, 3, 4]
    assert parse_layers("1,3") == [1, 3]
    for bad in ("0", "a..b", "", "2..1"):
        with pytest.raises(ConfigError):
            parse_layers(bad)


def test_unknown_key_is_named(tmp_path, capsys):
    cfg = _write(tmp_path, HALF + "\nmodel_extra: 1\n")
    assert main(["gs", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "model_extra" in capsys.readouterr().err
    cfg = _write(tmp_path, HALF.replace("B: 2", "B: 2, Bx: 1"))
    with pytest.raises(ConfigError, match="model.Bx"):
        load_config(cfg)


def test_config_errors_exit_one(tmp_path, capsys):
    assert main(["gs", "--config", str(tmp_path / "missing.yaml")]) == 1
    assert main(["gs"]) == 1
    assert main(["gs", "--config", _write(tmp_path, "- just\n- a list\n")]) == 1
    assert main(["gs", "--config", _write(tmp_path, "model: {U: -1, mu: 0, B: 1}\n")]) == 1
    assert main(["gs", "--config", _write(tmp_path, HALF), "--layers", "0..2", "--out", str(tmp_path / "o")]) == 1


def test_gs_layer_sweep(tmp_path):
    out = tmp_path / "gs"
    assert main(["gs", "--config", _write(tmp_path, HALF), "--layers", "1..4", "--out", str(out)]) == 0
    rows = _rows(out / "gs_layers.csv")
    assert rows[0] == ["layers", "energy", "exact_energy", "relative_error"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3", "4"]
    assert float(rows[2][3]) < 1e-4
    recs = [json.loads(ln) for ln in (out / "gs.ndjson").read_text().splitlines()]
    assert {"energy", "exact_energy", "relative_error", "layers", "sector"} <= set(recs[0])
    assert (out / "config.copy").exists()


def test_dmft_u0_file_set_and_determinism(tmp_path):
    cfg = _write(tmp_path, U0)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["dmft", "--config", cfg, "--out", str(a), "--seed", "3"]) == 0
    assert main(["dmft", "--config", cfg, "--out", str(b), "--seed", "3"]) == 0
    names = {"config.copy", "history.ndjson", "greens_t.csv", "sigma_matsubara.csv", "spectral.csv",
             "lehmann.csv", "z_vs_tfit.csv", "summary.json"}
    assert names <= {p.name for p in a.iterdir()}
    for n in names - {"config.copy"}:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n
    summary = json.loads((a / "summary.json").read_text())
    assert summary["converged"] is True and summary["Z"] == pytest.approx(1.0)
    assert _rows(a / "sigma_matsubara.csv")[0] == ["n", "omega_n", "ReSigma", "ImSigma", "ReG", "ImG"]
    assert _rows(a / "spectral.csv")[0] == ["omega", "A"]
    assert _rows(a / "greens_t.csv")[0] == ["t", "ReG", "ImG"]
    assert _rows(a / "z_vs_tfit.csv")[0] == ["t_fit", "Z", "sum_rule_error"]
    assert _rows(a / "lehmann.csv")[0] == ["omega", "alpha", "beta"]


def test_dmft_nonconvergence_and_resume(tmp_path):
    out = tmp_path / "d"
    cfg1 = _write(tmp_path, INTERACTING.replace("MAXIT", "1"), "one.yaml")
    assert main(["dmft", "--config", cfg1, "--out", str(out)]) == 2
    assert len((out / "history.ndjson").read_text().splitlines()) == 1
    cfg3 = _write(tmp_path, INTERACTING.replace("MAXIT", "3"), "three.yaml")
    main(["dmft", "--config", cfg3, "--out", str(out), "--resume"])
    lines = (out / "history.ndjson").read_text().splitlines()
    assert [json.loads(ln)["iteration"] for ln in lines][:3] == [1, 2, 3]
    fresh = tmp_path / "f"
    main(["dmft", "--config", cfg3, "--out", str(fresh)])
    assert (fresh / "history.ndjson").read_text() == (out / "history.ndjson").read_text()


def test_evolve_and_compressed_greens(tmp_path):
    cfg = _write(tmp_path, SMALL_EVOLVE)
    out = tmp_path / "e"
    assert main(["evolve", "--config", cfg, "--out", str(out), "--layers", "1,2"]) in (0, 2)
    rows = _rows(out / "evolve_layers.csv")
    assert rows[0] == ["layers", "min_fidelity", "final_fidelity", "max_cost"]
    assert float(rows[2][1]) > 0.999999
    rec = json.loads((out / "evolve_L2.ndjson").read_text().splitlines()[0])
    assert set(rec) == {"n", "t", "cost", "fidelity", "params"}
    g = tmp_path / "g"
    assert main(["greens", "--config", cfg, "--out", str(g)]) == 0
    assert _rows(g / "fidelity.csv")[0] == ["n", "t", "cost", "fidelity"]
    assert len(_rows(g / "fidelity.csv")) == 33
    assert main(["greens", "--config", cfg, "--out", str(tmp_path / "x"), "--solver", "exact"]) == 0


def test_validate(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == len(out.strip().splitlines())
    assert main(["validate", "--filter", "gradient"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 1 and "gradient.parity" in lines[0]
    assert main(["validate", "--filter", "nothing-matches"]) == 1


def test_validate_catches_hybridization_sign_flip(monkeypatch, capsys):
    orig = pauli.siam_parts

    def flipped(siam, layout):
        parts = orig(siam, layout)
        parts["hyb"] = parts["hyb"].scaled(-1.0) if siam.B else parts["hyb"]
        return parts

    def jwt(siam, layout=None):
        layout = layout or pauli.QubitLayout(siam.B)
        p = flipped(siam, layout)
        return p["imp"] + p["hyb"] + p["bath"]

    monkeypatch.setattr(pauli, "jwt_siam", jwt)
    assert main(["validate", "--filter", "jwt"]) == 1
    out = capsys.readouterr().out
    assert "FAIL jwt.equivalence" in out


def test_bench_writes_table(tmp_path):
    assert main(["bench", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "bench.csv")
    assert rows[0] == ["case", "numpy_ms", "numba_ms", "speedup"]
    assert len(rows) == 7


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "impurity_vqdmft.cli", "validate", "--filter", "fusion"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "PASS gates.fusion" in r.stdout
