"""Config-driven experiment driver with reproducible CSV output.

One JSON config describes the whole experiment: source and key laws, the
side channel, the adversary encoder, block lengths, rate point, seeds, and
solver tolerances.  Every run writes a manifest (config hash, seeds, tool
version) next to its outputs, and repeated runs with the same config and
seeds are bit-identical.

Subcommands: ``verify``, ``simulate``, ``leakage``, ``region``,
``exponent``, ``build-code``.  Exit codes: 0 ok, 1 property violation,
2 config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, adversary, analysis, codec, crypto, galois, leakage
from . import probability as prob

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2


class ConfigError(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".12g")


def _csv_line(values) -> str:
    return ",".join(_fmt(v) for v in values)


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _require(cfg, key):
    if key not in cfg:
        raise ConfigError(f"config is missing required key {key!r}")
    return cfg[key]


class Experiment:
    """Validated view of one experiment config."""

    def __init__(self, cfg: dict, *, seed_override=None, tol_override=None):
        try:
            self.q = int(_require(cfg, "q"))
            self.spec = galois.FieldSpec(self.q)
            self.p_x = prob.pmf_from_json(_require(cfg, "source"))
            self.p_k = prob.pmf_from_json(_require(cfg, "key"))
            self.W = prob.channel_from_json(_require(cfg, "W"))
            self.n_list = [int(n) for n in _require(cfg, "n_list")]
            self.R = float(_require(cfg, "R"))
            self.R_A = float(cfg.get("R_A", math.log(self.W.out_size)))
            self.gamma = float(cfg.get("gamma", 0.05))
            seeds = cfg.get("seeds", {})
            self.keymap_seed = int(seeds.get("keymap", 0))
            self.replay_seed = int(seeds.get("replay", 1))
            if seed_override is not None:
                self.keymap_seed = int(seed_override)
                self.replay_seed = int(seed_override) + 1
            self.tol = float(tol_override if tol_override is not None else cfg.get("tol", 1e-7))
            self.mc_samples = int(cfg.get("monte_carlo_samples", 2000))
            self.code_kind = cfg.get("code", "universal")
            self.mutation = cfg.get("mutation")
            self.adversary_cfg = cfg.get("adversary", {"kind": "scalar", "cells": None})
            self.mu_points = int(cfg.get("mu_points", 33))
            self.exponents = bool(cfg.get("exponents", True))
            g = cfg.get("exponent_grid", {})
            self.grid = analysis.ExponentGrid(
                mu_points=int(g.get("mu_points", 21)),
                alpha_points=int(g.get("alpha_points", 21)),
                lambda_points=int(g.get("lambda_points", 40)),
                lambda_max=float(g.get("lambda_max", 5.0)),
                refine_rounds=int(g.get("refine_rounds", 2)),
                refine_points=int(g.get("refine_points", 5)),
            )
            rg = cfg.get("rate_grid", {})
            self.rate_grid_ra = [float(v) for v in rg.get("RA", [])]
            self.rate_grid_r = [float(v) for v in rg.get("R", [])]
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e
        if not self.n_list:
            raise ConfigError("n_list must be non-empty")
        if self.p_x.size != self.q or self.p_k.size != self.q:
            raise ConfigError("source/key alphabet must match q")
        if self.W.in_size != self.q:
            raise ConfigError("side channel input alphabet must match q")
        if self.mutation not in (None, "decoder"):
            raise ConfigError(f"unknown mutation fixture {self.mutation!r}")

    @property
    def p_kz(self) -> np.ndarray:
        return prob.joint_from_channel(self.p_k, self.W)

    def build_code(self, n: int):
        if self.code_kind == "identity":
            code = codec.UniversalCode.identity(n, self.q)
        elif self.code_kind == "universal":
            code = codec.build_universal_code(n, self.R, self.q)
        else:
            raise ConfigError(f"unknown code kind {self.code_kind!r}")
        if self.mutation == "decoder":
            code = _MutatedDecoderCode(code.n, code.m, code.q, code.order)
        return code

    def build_system(self, n: int) -> crypto.Cryptosystem:
        code = self.build_code(n)
        seed = np.random.SeedSequence([self.keymap_seed, n])
        if self.code_kind == "identity":
            keymap = galois.AffineMap(
                np.eye(n, dtype=np.int64), np.zeros(n, dtype=np.int64), self.spec
            )
        else:
            keymap = galois.random_affine(n, code.m, self.spec, seed)
        return crypto.Cryptosystem(code, keymap)

    def build_encoder(self, n: int):
        kind = self.adversary_cfg.get("kind", "scalar")
        if kind == "scalar":
            cells = self.adversary_cfg.get("cells")
            if cells is None:
                labels = list(range(self.W.out_size))  # finest quantizer
            else:
                labels = [0] * self.W.out_size
                for ci, cell in enumerate(cells):
                    for z in cell:
                        labels[int(z)] = ci
            enc = adversary.scalar_quantizer_encoder(labels, n)
        elif kind == "best_scalar":
            enc = adversary.best_scalar_quantizer(
                adversary.SideChannel(self.W), self.p_k, self.R_A, n
            )
        elif kind == "table":
            enc = adversary.TableEncoder(
                np.asarray(self.adversary_cfg["table"], dtype=np.int64),
                n,
                self.W.out_size,
            )
        else:
            raise ConfigError(f"unknown adversary kind {kind!r}")
        if enc.rate > self.R_A + 1e-12:
            raise ConfigError(
                f"adversary rate {enc.rate:.6f} exceeds the budget R_A = {self.R_A}"
            )
        return enc


class _MutatedDecoderCode(codec.UniversalCode):
    """Test fixture: a decoder with two outputs swapped, so the enumerated
    decoding set comes up short and verify fails with a witness."""

    def decode(self, c):
        r = self._lex_index(np.asarray(c, dtype=np.int64))
        if r == 0:
            r = 1
        elif r == 1:
            r = 0
        return self.sequence_at(r)


# ---------------------------------------------------------------------------
# Output plumbing
# ---------------------------------------------------------------------------


def _write_text(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _write_manifest(out_dir: Path, command: str, config_path, cfg_exp, outputs):
    digest = hashlib.sha256(Path(config_path).read_bytes()).hexdigest()
    manifest = {
        "command": command,
        "config": str(config_path),
        "config_sha256": digest,
        "seeds": {"keymap": cfg_exp.keymap_seed, "replay": cfg_exp.replay_seed},
        "tol": cfg_exp.tol,
        "version": __version__,
        "outputs": sorted(str(p.name) for p in outputs),
    }
    _write_text(out_dir, "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _pool_map(fn, items, jobs):
    if jobs <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_verify(exp: Experiment, out_dir, jobs: int, config_path) -> int:
    """Run every structural suite; non-zero exit on any violation."""
    failures = 0
    for n in exp.n_list:
        try:
            sys_n = exp.build_system(n)
        except AssertionError as e:
            print(f"FAIL construction (n={n}): {e}")
            failures += 1
            continue
        except ValueError as e:
            print(f"notice: skipping n={n}: {e}", file=sys.stderr)
            continue
        rep = crypto.check_structural_properties(sys_n)
        for name, entry in rep.checks.items():
            status = "PASS" if entry["ok"] else "FAIL"
            extra = "" if entry["ok"] else f" witness={entry['witness']}"
            print(f"{status} crypto.{name} (n={n}, mode={rep.mode}){extra}")
        failures += len(rep.failures)
        enc = exp.build_encoder(n)
        kern = leakage.build_gamma_kernel(sys_n, enc, exp.p_kz)
        kchk = leakage.structural_checks(kern)
        for name, ok, err, wit in (
            ("row_sum_identity", kchk.row_sums_ok, kchk.row_sum_max_error, kchk.row_sum_witness),
            ("uniform_ciphertext", kchk.uniform_ok, kchk.uniform_max_error, kchk.uniform_witness),
        ):
            status = "PASS" if ok else "FAIL"
            extra = f" max_err={err:.3e}" + ("" if ok else f" witness={wit}")
            print(f"{status} kernel.{name} (n={n}){extra}")
            if not ok:
                failures += 1
    _write_manifest(out_dir, "verify", config_path, exp, [])
    return EXIT_VIOLATION if failures else EXIT_OK


def _simulate_row(exp: Experiment, n: int, fvals):
    try:
        sys_n = exp.build_system(n)
    except ValueError as e:
        print(f"notice: skipping n={n}: {e}", file=sys.stderr)
        return None
    enc = exp.build_encoder(n)
    code = sys_n.code
    pe = codec.error_probability_exact(code, exp.p_x)
    p2 = codec.verify_error_bound(code, exp.p_x, exp.gamma, R=exp.R)
    rep = leakage.leakage_report(
        sys_n, enc, exp.p_kz, exp.p_x, R_A=exp.R_A, R=exp.R, tol=exp.tol
    )
    # seeded transmission replay through the real encrypt/decrypt path
    rng = np.random.default_rng(np.random.SeedSequence([exp.replay_seed, n]))
    errors = 0
    for _ in range(exp.mc_samples):
        x = rng.choice(exp.q, size=n, p=exp.p_x.probs)
        k = rng.choice(exp.q, size=n, p=exp.p_k.probs)
        if not np.array_equal(sys_n.decrypt(k, sys_n.encrypt(k, x)), x):
            errors += 1
    pe_mc = errors / exp.mc_samples
    return [
        n,
        code.m,
        exp.q,
        exp.R,
        exp.R_A,
        exp.gamma,
        pe,
        pe_mc,
        p2.bound,
        p2.exponent,
        rep.delta_mi,
        rep.delta_max,
        rep.lower_bound,
        rep.upper_bound,
        fvals[0],
        fvals[1],
    ]


SIMULATE_HEADER = (
    "n,m,q,R,RA,gamma,pe_exact,pe_mc,pe_bound,E_gamma,"
    "delta_mi,delta_max,delta_max_lb,delta_max_ub,F,F_lower"
)


def cmd_simulate(exp: Experiment, out_dir, jobs: int, config_path) -> int:
    if exp.exponents:
        calc = analysis.ExponentCalculator(exp.p_kz, exp.grid)
        fvals = (calc.F(exp.R_A, exp.R).value, calc.F_lower(exp.R_A, exp.R).value)
    else:
        fvals = (math.nan, math.nan)
    rows = _pool_map(lambda n: _simulate_row(exp, n, fvals), exp.n_list, jobs)
    rows = [r for r in rows if r is not None]
    rows.sort(key=lambda r: r[0])
    text = SIMULATE_HEADER + "\n" + "".join(_csv_line(r) + "\n" for r in rows)
    path = _write_text(out_dir, "simulate.csv", text)
    _write_manifest(out_dir, "simulate", config_path, exp, [path])
    print(f"wrote {path}")
    return EXIT_OK


def cmd_leakage(exp: Experiment, out_dir, jobs: int, config_path) -> int:
    def one(n):
        sys_n = exp.build_system(n)
        enc = exp.build_encoder(n)
        rep = leakage.leakage_report(
            sys_n, enc, exp.p_kz, exp.p_x, R_A=exp.R_A, R=exp.R, tol=exp.tol
        )
        gap = exp.R_A - rep.diagnostics["adversary_rate"]
        print(
            f"n={n}: adversary rate {rep.diagnostics['adversary_rate']:.6f} nats "
            f"(budget R_A={exp.R_A:.6f}, slack {gap:.6f})"
        )
        return rep

    reps = _pool_map(one, exp.n_list, jobs)
    reps.sort(key=lambda r: r.n)
    text = leakage.LeakageReport.CSV_HEADER + "\n" + "".join(
        r.csv_row() + "\n" for r in reps
    )
    path = _write_text(out_dir, "leakage.csv", text)
    _write_manifest(out_dir, "leakage", config_path, exp, [path])
    print(f"wrote {path}")
    return EXIT_OK


REGION_GP = """# gnuplot script: helper-region boundary sweep
set xlabel "R_A (nats)"
set ylabel "R (nats)"
set grid
plot "region_points.dat" using 1:2 with linespoints title "boundary (I(Z;U), H(K|U))"
"""


def cmd_region(exp: Experiment, out_dir, jobs: int, config_path) -> int:
    mus = np.linspace(0.0, 1.0, exp.mu_points)
    results = _pool_map(lambda mu: analysis.r_mu(exp.p_kz, float(mu)), list(mus), jobs)
    rows = sorted(((r.mu, r.value, r.i_zu, r.h_kgu) for r in results))
    csv_text = "mu,R_mu\n" + "".join(_csv_line(r[:2]) + "\n" for r in rows)
    dat_text = "# RA R\n" + "".join(
        f"{_fmt(r[2])} {_fmt(r[3])}\n" for r in rows
    )
    p1 = _write_text(out_dir, "region.csv", csv_text)
    p2 = _write_text(out_dir, "region_points.dat", dat_text)
    p3 = _write_text(out_dir, "region.gp", REGION_GP)
    _write_manifest(out_dir, "region", config_path, exp, [p1, p2, p3])
    print(f"wrote {p1}")
    return EXIT_OK


EXPONENT_GP = """# gnuplot script: secrecy-exponent surface
set xlabel "R_A (nats)"
set ylabel "R (nats)"
set zlabel "exponent (nats)"
set dgrid3d
splot "exponent.csv" using 1:2:3 every ::1 with lines title "F"
"""


def cmd_exponent(exp: Experiment, out_dir, jobs: int, config_path) -> int:
    boundary = analysis.akw_boundary(exp.p_kz, np.linspace(0, 1, exp.mu_points))
    calc = analysis.ExponentCalculator(exp.p_kz, exp.grid)
    ras = exp.rate_grid_ra or list(np.linspace(0.0, boundary.h_k, 5))
    rs = exp.rate_grid_r or list(np.linspace(0.0, boundary.h_k, 5))
    rows = []
    for ra in ras:
        for r in rs:
            F = calc.F(ra, r)
            FL = calc.F_lower(ra, r)
            member = analysis.region_membership(
                (ra, r), exp.p_x, exp.p_kz, boundary=boundary
            )
            rows.append((ra, r, F.value, FL.value, member.label))
    rows.sort(key=lambda t: (t[0], t[1]))
    text = "RA,R,F,F_lower,member\n" + "".join(_csv_line(r) + "\n" for r in rows)
    p1 = _write_text(out_dir, "exponent.csv", text)
    p2 = _write_text(out_dir, "exponent.gp", EXPONENT_GP)
    _write_manifest(out_dir, "exponent", config_path, exp, [p1, p2])
    print(f"wrote {p1}")
    return EXIT_OK


def cmd_build_code(exp: Experiment, out_dir, jobs: int, config_path) -> int:
    outputs = []
    for n in exp.n_list:
        code = exp.build_code(n)
        doc = code.to_json()
        doc["rate"] = code.rate
        doc["rate_window_ok"] = code.rate_window_ok(exp.R)
        doc["decoding_set_size"] = code.decoding_set_size
        doc["type_order"] = [list(t.counts) for t in code.type_order]
        outputs.append(
            _write_text(out_dir, f"code_n{n}.json", json.dumps(doc, indent=2) + "\n")
        )
    _write_manifest(out_dir, "build-code", config_path, exp, outputs)
    print(f"wrote {len(outputs)} descriptor(s) to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="leaklab",
        description="source encryption under side-channel leakage: experiments",
    )
    parser.add_argument("command", choices=[
        "verify", "simulate", "leakage", "region", "exponent", "build-code",
    ])
    parser.add_argument("--config", required=True, help="experiment JSON")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override seeds")
    parser.add_argument("--tol", type=float, default=None, help="solver tolerance")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        exp = Experiment(cfg, seed_override=args.seed, tol_override=args.tol)
        out_dir = Path(args.out)
        if args.command == "verify":
            return cmd_verify(exp, out_dir, args.jobs, args.config)
        if args.command == "simulate":
            return cmd_simulate(exp, out_dir, args.jobs, args.config)
        if args.command == "leakage":
            return cmd_leakage(exp, out_dir, args.jobs, args.config)
        if args.command == "region":
            return cmd_region(exp, out_dir, args.jobs, args.config)
        if args.command == "exponent":
            return cmd_exponent(exp, out_dir, args.jobs, args.config)
        if args.command == "build-code":
            return cmd_build_code(exp, out_dir, args.jobs, args.config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
