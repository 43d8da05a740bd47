import json
import math
from pathlib import Path

import numpy as np
import pytest

from leaklab.cli import EXIT_CONFIG, EXIT_OK, EXIT_VIOLATION, main

GOLDEN = Path(__file__).parent / "golden"

BASE_CONFIG = {
    "q": 2,
    "source": {"probs": [0.89, 0.11]},
    "key": {"probs": [0.5, 0.5]},
    "W": {"rows": [[0.9, 0.1], [0.1, 0.9]]},
    "adversary": {"kind": "scalar", "cells": [[0], [1]]},
    "n_list": [4, 6],
    "R": 0.5,
    "R_A": 0.7,
    "gamma": 0.05,
    "seeds": {"keymap": 7, "replay": 11},
    "tol": 1e-7,
    "monte_carlo_samples": 500,
    "exponents": False,
    "mu_points": 9,
}


def write_config(tmp_path, **overrides):
    cfg = json.loads(json.dumps(BASE_CONFIG))
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg, indent=1))
    return path


def test_verify_passes_on_valid_config(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "PASS crypto.decoding_set_size (n=4" in out
    assert "PASS kernel.row_sum_identity (n=6" in out


def test_verify_identity_code_otp_config(tmp_path, capsys):
    cfg = write_config(
        tmp_path, code="identity", adversary={"kind": "scalar", "cells": [[0, 1]]}
    )
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    assert "FAIL" not in capsys.readouterr().out


def test_verify_fails_on_mutated_decoder(tmp_path, capsys):
    cfg = write_config(tmp_path, mutation="decoder")
    rc = main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == EXIT_VIOLATION
    out = capsys.readouterr().out
    assert "FAIL crypto.decoding_set_size" in out
    assert "witness" in out


def test_config_errors_exit_2(tmp_path):
    missing = tmp_path / "none.json"
    assert main(["simulate", "--config", str(missing), "--out", str(tmp_path)]) == EXIT_CONFIG
    bad = write_config(tmp_path, q=4)  # non-prime alphabet
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    tight = write_config(tmp_path, R_A=0.1)  # identity quantizer rate ln 2 > 0.1
    assert main(["simulate", "--config", str(tight), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_simulate_schema_and_lossless_regime(tmp_path, capsys):
    cfg = write_config(tmp_path, R=0.8, n_list=[3, 4])  # R > ln 2: lossless
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    lines = (out / "simulate.csv").read_text().splitlines()
    assert lines[0] == (
        "n,m,q,R,RA,gamma,pe_exact,pe_mc,pe_bound,E_gamma,"
        "delta_mi,delta_max,delta_max_lb,delta_max_ub,F,F_lower"
    )
    for row in lines[1:]:
        vals = row.split(",")
        assert float(vals[6]) == 0.0  # exact error probability
        assert float(vals[7]) == 0.0  # Monte Carlo replay agrees


def test_simulate_skips_infeasible_block_lengths(tmp_path, capsys):
    cfg = write_config(tmp_path, R=0.3, n_list=[1, 6])  # n=1 gives m=0
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    lines = (out / "simulate.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[1].startswith("6,")
    assert "skipping n=1" in capsys.readouterr().err


def test_region_output(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "o"
    assert main(["region", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    lines = (out / "region.csv").read_text().splitlines()
    assert lines[0] == "mu,R_mu"
    rows = [tuple(map(float, l.split(","))) for l in lines[1:]]
    assert rows[0] == (0.0, pytest.approx(0.3250829733914482, abs=1e-6))
    assert rows[-1][1] <= 1e-9  # R^(1) = 0
    # every boundary point satisfies R_A + R >= H(K)
    pts = (out / "region_points.dat").read_text().splitlines()[1:]
    for line in pts:
        ra, r = map(float, line.split())
        assert ra + r >= math.log(2) - 1e-8
    assert (out / "region.gp").exists()


def test_exponent_output(tmp_path):
    cfg = write_config(
        tmp_path,
        exponent_grid={
            "mu_points": 7,
            "alpha_points": 7,
            "lambda_points": 8,
            "refine_rounds": 1,
        },
        rate_grid={"RA": [0.0, 0.2], "R": [0.25, 0.5]},
        source={"probs": [0.95, 0.05]},
    )
    out = tmp_path / "o"
    assert main(["exponent", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    lines = (out / "exponent.csv").read_text().splitlines()
    assert lines[0] == "RA,R,F,F_lower,member"
    assert len(lines) == 5
    for row in lines[1:]:
        vals = row.split(",")
        assert float(vals[2]) >= float(vals[3]) - 1e-6  # F >= F_lower
        assert vals[4] in ("inside", "outside", "boundary-band")


def test_build_code_descriptor(tmp_path):
    cfg = write_config(tmp_path, n_list=[4])
    out = tmp_path / "o"
    assert main(["build-code", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "code_n4.json").read_text())
    assert doc["n"] == 4 and doc["q"] == 2
    assert doc["m"] == 2 and doc["decoding_set_size"] == 4
    assert len(doc["type_order"]) == 5  # binomial types of n=4


def test_manifest_written(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "o"
    main(["region", "--config", str(cfg), "--out", str(out)])
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "region"
    assert manifest["seeds"] == {"keymap": 7, "replay": 11}
    assert "region.csv" in manifest["outputs"]
    assert len(manifest["config_sha256"]) == 64


def test_repeated_runs_bit_identical(tmp_path):
    cfg = write_config(tmp_path)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["simulate", "--config", str(cfg), "--out", str(out1)])
    main(["simulate", "--config", str(cfg), "--out", str(out2)])
    assert (out1 / "simulate.csv").read_bytes() == (out2 / "simulate.csv").read_bytes()
    main(["region", "--config", str(cfg), "--out", str(out1), "--jobs", "1"])
    main(["region", "--config", str(cfg), "--out", str(out2), "--jobs", "3"])
    assert (out1 / "region.csv").read_bytes() == (out2 / "region.csv").read_bytes()


def test_seed_override_changes_output(tmp_path):
    cfg = write_config(tmp_path)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["simulate", "--config", str(cfg), "--out", str(out1), "--seed", "99"])
    main(["simulate", "--config", str(cfg), "--out", str(out2), "--seed", "100"])
    assert (out1 / "simulate.csv").read_bytes() != (out2 / "simulate.csv").read_bytes()


def test_golden_region_csv(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "o"
    main(["region", "--config", str(cfg), "--out", str(out)])
    assert (out / "region.csv").read_bytes() == (GOLDEN / "region.csv").read_bytes()


def test_golden_simulate_csv(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "o"
    main(["simulate", "--config", str(cfg), "--out", str(out)])
    assert (out / "simulate.csv").read_bytes() == (GOLDEN / "simulate.csv").read_bytes()


def test_best_scalar_adversary_kind(tmp_path):
    cfg = write_config(tmp_path, adversary={"kind": "best_scalar"}, n_list=[4])
    out = tmp_path / "o"
    assert main(["leakage", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    lines = (out / "leakage.csv").read_text().splitlines()
    assert lines[0] == "n,m,q,RA,R,delta_mi,delta_max,lb,ub,iters,tol"
    assert len(lines) == 2


def test_table_adversary_kind(tmp_path):
    table = list(np.arange(16) % 3)
    cfg = write_config(
        tmp_path,
        adversary={"kind": "table", "table": [int(v) for v in table]},
        n_list=[4],
        R_A=0.5,
    )
    out = tmp_path / "o"
    assert main(["leakage", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
