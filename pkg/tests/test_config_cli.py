import csv
import json
import logging

import numpy as np
import pytest
import yaml

from uiprice import cli
from uiprice.config import normalized_raw, validate_config
from uiprice.errors import ModelValidationError, NumericalDivergence

BASE = {
    "model": {"mu": [0.05], "sigma": [[0.25]], "alpha": [1.0], "beta": [[0.6]], "T": 1.0},
    "payoff": {"name": "smooth_product", "amplitude": 4.0},
    "engine": "pde",
    "gamma": [0.5],
    "state": {"t": 0.0, "s": [1.0], "x": [0.8]},
    "grid": {"nodes": 21, "steps": 8},
    "mc": {"paths": 2000, "steps": 8},
    "seed": 7,
}


def _raw(**changes):
    raw = yaml.safe_load(yaml.safe_dump(BASE))
    raw.update(changes)
    return raw


def _write(tmp_path, raw, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return str(path)


def test_round_trip_is_stable(tmp_path):
    cfg = validate_config(_raw())
    again = validate_config(yaml.safe_load(yaml.safe_dump(normalized_raw(cfg))))
    assert again == cfg and again.config_hash() == cfg.config_hash()


def test_missing_gamma_defaults_with_warning(caplog):
    raw = _raw()
    del raw["gamma"]
    with caplog.at_level(logging.WARNING):
        cfg = validate_config(raw)
    assert cfg.gammas == [0.5] and "gamma" in caplog.text


@pytest.mark.parametrize("change,field", [
    ({"model": {**BASE["model"], "sigma": [[0.0]]}}, "sigma"),
    ({"grid": {"nodes": -3}}, "grid.nodes"),
    ({"side": "both"}, "side"),
    ({"colour": "red"}, "colour"),
    ({"payoff": {"name": "call"}}, "payoff.strike"),
    ({"engine": "power"}, "engine"),
    ({"state": {"t": 0.0, "s": [1.0, 2.0], "x": [0.8]}}, "state"),
])
def test_validation_errors_name_the_field(change, field):
    with pytest.raises(ModelValidationError, match=field.replace(".", r"\.")):
        validate_config(_raw(**change))


def test_pde_refused_for_large_models():
    with pytest.raises(ModelValidationError, match="bsde"):
        validate_config({"preset": "aid-2fuel", "engine": "pde"})
    cfg = validate_config({"preset": "aid-2fuel", "engine": "power"})
    assert cfg.state["x"] == [1.0, 0.8, 0.9]


def test_discontinuous_payoff_is_mollified_under_pde():
    raw = _raw(payoff={"name": "digital", "threshold": 0.5})
    assert validate_config(raw).mollify


def test_price_command_with_constant_payoff(tmp_path):
    out = tmp_path / "out"
    path = _write(tmp_path, _raw(payoff={"name": "constant", "value": 2.5}, gamma=[0.1, 1.0]))
    assert cli.main(["price", "--config", path, "--out", str(out)]) == cli.EXIT_OK
    rows = [r for r in csv.reader(l for l in (out / "price.csv").open() if not l.startswith("#"))]
    prices = [float(r[rows[0].index("price")]) for r in rows[1:]]
    assert np.allclose(prices, 2.5)
    rep = json.loads((out / "report.json").read_text())
    assert rep["schema_version"] == 1 and len(rep["results"]) == 2
    assert (out / "config.normalized.yaml").exists() and (out / "surface_gamma0.1.csv").exists()


def test_output_is_reproducible_without_timings(tmp_path):
    path = _write(tmp_path, _raw(engine="bsde"))
    blobs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert cli.main(["price", "--config", path, "--out", str(out), "--no-timings"]) == 0
        blobs.append(((out / "price.csv").read_bytes(), (out / "report.json").read_bytes()))
    assert blobs[0] == blobs[1]


def test_overrides_from_the_command_line(tmp_path):
    out = tmp_path / "o"
    path = _write(tmp_path, _raw())
    assert cli.main(["price", "--config", path, "--out", str(out), "--gamma", "0.25", "--seed", "3",
                     "--engine", "expand"]) == 0
    norm = yaml.safe_load((out / "config.normalized.yaml").read_text())
    assert norm["gammas"] == [0.25] and norm["seed"] == 3 and norm["engine"] == "expand"


def test_exit_codes(tmp_path, monkeypatch, capsys):
    bad = _write(tmp_path, _raw(side="both"))
    assert cli.main(["price", "--config", bad, "--out", str(tmp_path / "b")]) == cli.EXIT_VALIDATION
    assert "side" in capsys.readouterr().err
    assert cli.main(["price"]) == cli.EXIT_VALIDATION

    def diverge(*a, **k):
        raise NumericalDivergence("step blew up", {"step": 3})

    monkeypatch.setitem(cli.HANDLERS, "price", diverge)
    good = _write(tmp_path, _raw(), "good.yaml")
    assert cli.main(["price", "--config", good, "--out", str(tmp_path / "g")]) == cli.EXIT_DIVERGENCE
    assert "step" in capsys.readouterr().err


def test_acceptance_command_reports_failures(tmp_path, monkeypatch):
    from uiprice import acceptance

    def fake(which=None, echo=print):
        return [acceptance.CriterionResult(1, "stub", False, {}, 0.0, None)]

    monkeypatch.setattr(acceptance, "run_all", fake)
    assert cli.main(["acceptance", "--out", str(tmp_path)]) == cli.EXIT_ACCEPTANCE
    assert json.loads((tmp_path / "acceptance.json").read_text())["passed"] is False


def test_power_forward_command(tmp_path):
    path = _write(tmp_path, {"preset": "aid-2fuel", "engine": "power", "gamma": [0.2]})
    assert cli.main(["power-forward", "--config", path, "--out", str(tmp_path / "p")]) == 0
    rep = json.loads((tmp_path / "p" / "power_forward.json").read_text())
    assert rep["model"]["name"] == "aid-2fuel" and (tmp_path / "p" / "decomposition_gamma0.2.csv").exists()
