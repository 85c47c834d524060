"""Command-line interface: ``nctorus <command> [--config PATH] [--out DIR] ...``.

Exit codes: 0 success, 2 a computed check failed its tolerance, 3 bad
configuration.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import curvature, heat_kernel, residue, spectral
from .algebra import DomainError, FourierElement, ModularCalculus, TruncationBox, theta_matrix

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 2, 3

DEFAULT_THETA = {(1, 2): 0.31, (1, 3): 0.17, (1, 4): 0.23, (2, 3): 0.41, (2, 4): 0.13, (3, 4): 0.29}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending line when known."""


# ---------------------------------------------------------------------------
# deterministic JSON


def _fmt(x) -> str:
    if isinstance(x, bool) or x is None:
        return {True: "true", False: "false", None: "null"}[x]
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return "null"
        if x == 0:
            return "0.0"
        s = format(x, ".17g")
        return s if any(c in s for c in ".en") else s + ".0"
    if isinstance(x, str):
        import json
        return json.dumps(x)
    if isinstance(x, dict):
        return "{" + ", ".join(f"{_fmt(str(k))}: {_fmt(v)}" for k, v in x.items()) + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialize {type(x).__name__}")


def dump_json(obj) -> str:
    """JSON with every float written to 17 significant digits (byte-stable)."""
    return _fmt(obj) + "\n"


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    theta: np.ndarray = field(default_factory=lambda: theta_matrix(DEFAULT_THETA))
    preset: str = "flat"
    h_params: dict = field(default_factory=dict)
    h_coeffs: list | None = None
    n_box: int | None = None
    grid: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    out: Path = Path("out")
    dixmier_terms: int = 100_000
    seed: int = 0

    def h(self) -> FourierElement:
        if self.h_coeffs is not None:
            coeffs = {}
            for item in self.h_coeffs:
                coeffs[tuple(item["alpha"])] = complex(item.get("re", 0.0), item.get("im", 0.0))
            el = FourierElement(coeffs, self.theta)
            if not el.is_selfadjoint(1e-12):
                raise ConfigError("h: coefficients are not selfadjoint (need c_{-a} = conj(c_a))")
            return el
        return preset_h(self.preset, self.theta, **self.h_params)


def preset_h(name: str, theta, c: float = 0.5, amplitude: float = 0.035) -> FourierElement:
    """flat: h = 0; scalar-c: h = c; bump: h = amplitude * sum_i (U_i + U_i^*)."""
    if name == "flat":
        return FourierElement({}, theta)
    if name == "scalar-c":
        return FourierElement.scalar(float(c), theta)
    if name == "bump":
        h = FourierElement({}, theta)
        for i in range(1, 5):
            u = FourierElement.generator(i, theta)
            h = h + amplitude * (u + u.star())
        return h
    raise ConfigError(f"unknown preset {name!r}")


def _line_of(node, key):
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            if k.value == key:
                return k.start_mark.line + 1, v
    return None, None


def _where(root, path) -> str:
    node, line = root, None
    for key in path:
        line, node = _line_of(node, key)
        if node is None:
            break
    return f"line {line}: " if line else ""


def load_config(path) -> RunConfig:
    """Read a YAML config with optional sections theta, h, box, grid, tolerances, output."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark else ""
        raise ConfigError(f"{path}: {where}{getattr(exc, 'problem', exc)}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    known = {"theta", "h", "box", "grid", "tolerances", "output", "dixmier", "seed"}
    for key in data:
        if key not in known:
            raise ConfigError(f"{path}: {_where(root, [key])}unknown section {key!r}")
    cfg = RunConfig()

    def fail(keys, msg):
        raise ConfigError(f"{path}: {_where(root, keys)}{msg}")

    if "theta" in data:
        th = data["theta"]
        try:
            if isinstance(th, dict):
                entries = {}
                for k, v in th.items():
                    ks = str(k)
                    if len(ks) != 2 or not ks.isdigit():
                        fail(["theta", k], f"theta key {k!r} should look like '12'")
                    entries[(int(ks[0]), int(ks[1]))] = float(v)
                cfg.theta = theta_matrix(entries)
            else:
                cfg.theta = theta_matrix(np.array(th, dtype=float))
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            fail(["theta"], f"invalid theta: {exc}")
    hsec = data.get("h") or {}
    if not isinstance(hsec, dict):
        fail(["h"], "h must be a mapping")
    if "preset" in hsec:
        if hsec["preset"] not in ("flat", "scalar-c", "bump"):
            fail(["h", "preset"], f"unknown preset {hsec['preset']!r}")
        cfg.preset = hsec["preset"]
    for key in ("c", "amplitude"):
        if key in hsec:
            try:
                cfg.h_params[key] = float(hsec[key])
            except (TypeError, ValueError):
                fail(["h", key], f"{key} must be a number")
    if "coefficients" in hsec:
        co = hsec["coefficients"]
        if not isinstance(co, list) or not all(isinstance(i, dict) and "alpha" in i for i in co):
            fail(["h", "coefficients"], "coefficients must be a list of {alpha, re, im}")
        for item in co:
            if len(item["alpha"]) != 4:
                fail(["h", "coefficients"], f"alpha {item['alpha']} must have 4 entries")
        cfg.h_coeffs = co
    box = data.get("box") or {}
    if "N" in box:
        if not isinstance(box["N"], int) or box["N"] < 1:
            fail(["box", "N"], "box.N must be a positive integer")
        cfg.n_box = box["N"]
    grid = data.get("grid") or {}
    for key, val in grid.items():
        if key not in ("s_min", "s_max", "s_points", "t_points"):
            fail(["grid", key], f"unknown grid key {key!r}")
        if not isinstance(val, (int, float)):
            fail(["grid", key], f"grid.{key} must be a number")
    cfg.grid = dict(grid)
    tol = data.get("tolerances") or {}
    for key, val in tol.items():
        if not isinstance(val, (int, float)) or val < 0:
            fail(["tolerances", key], f"tolerance {key} must be a non-negative number")
    cfg.tolerances = dict(tol)
    out = data.get("output") or {}
    if "dir" in out:
        cfg.out = Path(out["dir"])
    dix = data.get("dixmier") or {}
    if "terms" in dix:
        if not isinstance(dix["terms"], int) or dix["terms"] < 10_000:
            fail(["dixmier", "terms"], "dixmier.terms must be an integer >= 10000")
        cfg.dixmier_terms = dix["terms"]
    if "seed" in data:
        cfg.seed = int(data["seed"])
    try:
        cfg.h()
    except (ConfigError, DomainError, ValueError) as exc:
        fail(["h"], str(exc))
    return cfg


# ---------------------------------------------------------------------------
# commands


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    p = out / name
    p.write_text(text)
    return p


def _write_csv(out: Path, name: str, header: list[str], rows) -> Path:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(float(v)) for v in row))
    return _write(out, name, "\n".join(lines) + "\n")


def cmd_b2_verify(cfg: RunConfig, args) -> int:
    golden_path = getattr(args, "golden", None)
    if cfg.preset == "flat" and golden_path is None and args.preset_given:
        # h = 0: every derivative atom vanishes, so b2 is identically zero
        from .symbols import parametrix
        flat = parametrix(2).substitute_flat()
        n = len(flat.terms)
        print(f"{n} terms, trivially matched")
        _write(cfg.out, "b2_report.txt", f"flat: {n} terms, trivially matched\n")
        return EXIT_OK if n == 0 else EXIT_FAIL
    if golden_path is not None:
        lines = [l for l in Path(golden_path).read_text().splitlines() if l.strip()]
        try:
            raw = [heat_kernel.parse_rterm(l) for l in lines]
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"{golden_path}: {exc}") from exc
    else:
        raw = heat_kernel.golden_b2(raw=True)
    mine = heat_kernel.b2_radial()
    diff = heat_kernel.compare_terms(mine, raw)
    n_canon = len(heat_kernel.canonical_rterms(raw))
    if diff:
        report = f"{len(diff)} mismatching terms\n" + "\n".join(diff) + "\n"
        print(report, end="")
        _write(cfg.out, "b2_report.txt", report)
        return EXIT_FAIL
    msg = f"{len(raw)} terms matched ({n_canon} after merging equal words)"
    print(msg)
    body = msg + "\n" + "\n".join(t.text() for t in mine) + "\n"
    _write(cfg.out, "b2_report.txt", body)
    return EXIT_OK


def cmd_curvature_functions(cfg: RunConfig, args) -> int:
    g = cfg.grid
    s_min, s_max = float(g.get("s_min", -3.0)), float(g.get("s_max", 3.0))
    s = np.linspace(s_min, s_max, int(g.get("s_points", 401)))
    t = np.linspace(s_min, s_max, int(g.get("t_points", 101)))
    grid = heat_kernel.assemble_KH(s, t)
    out = cfg.out
    _write_csv(out, "K.csv", ["s", "value"], zip(s, grid.K))
    S, Tg = np.meshgrid(s, t, indexing="ij")
    _write_csv(out, "H.csv", ["s", "t", "value"], zip(S.ravel(), Tg.ravel(), grid.H.ravel()))
    _write_csv(out, "H_diagonal.csv", ["s", "value"], zip(s, curvature.H(s, s)))
    _write_csv(out, "H_antidiagonal.csv", ["s", "value"], zip(s, curvature.H(s, -s)))
    tg = np.linspace(-10, 10, 2001)
    _write_csv(out, "T.csv", ["s", "value"], zip(tg, curvature.T(tg)))
    k_err = float(np.max(np.abs(grid.K - curvature.K(s))))
    h_err = float(np.max(np.abs(grid.H - curvature.H(S, Tg))))
    tol = float(cfg.tolerances.get("curvature", 1e-8))
    rep = {"normalization": grid.normalization, "K_max_error": k_err, "H_max_error": h_err,
           "tolerance": tol, "ok": k_err <= tol and h_err <= tol}
    _write(out, "curvature_functions.json", dump_json(rep))
    print(dump_json(rep), end="")
    return EXIT_OK if rep["ok"] else EXIT_FAIL


def _model(cfg: RunConfig, default_n: int = 3):
    N = cfg.n_box or default_n
    box = TruncationBox(N)
    if cfg.preset == "flat" and cfg.h_coeffs is None:
        return spectral.flat_laplacian(box)
    return spectral.perturbed_laplacian(cfg.h(), box)


def cmd_weyl(cfg: RunConfig, args) -> int:
    model = _model(cfg)
    fit = spectral.counting_fit(model)
    flat = model.h is None
    tol = float(cfg.tolerances.get("weyl", 0.12 if flat else 0.20))
    rep = fit.to_dict()
    rep.update({"n_box": model.box.N, "preset": cfg.preset, "tolerance": tol, "ok": fit.rel_dev <= tol})
    model.to_csv(cfg.out / "eigenvalues.csv")
    _write(cfg.out, "weyl.json", dump_json(rep))
    print(dump_json(rep), end="")
    return EXIT_OK if rep["ok"] else EXIT_FAIL


def cmd_heat_trace(cfg: RunConfig, args) -> int:
    model = _model(cfg)
    ts = np.geomspace(0.05, 5.0, 60)
    rows = spectral.heat_trace(model, ts)
    _write_csv(cfg.out, "heat_trace.csv", ["t", "trace", "t2_trace"], rows)
    plat = spectral.heat_plateau(model)
    tol = float(cfg.tolerances.get("heat", 0.15))
    rep = plat.to_dict()
    rep.update({"n_box": model.box.N, "preset": cfg.preset, "tolerance": tol, "ok": plat.rel_dev <= tol})
    _write(cfg.out, "heat_trace.json", dump_json(rep))
    print(dump_json(rep), end="")
    return EXIT_OK if rep["ok"] else EXIT_FAIL


def cmd_eh_action(cfg: RunConfig, args) -> int:
    h = cfg.h()
    if curvature.is_constant(h):
        # R vanishes identically: every term carries a derivative of h
        direct = combined = 0.0
    else:
        box = TruncationBox(cfg.n_box or 3)
        calc = ModularCalculus(h, box)
        direct = curvature.eh_action(h, box, "direct", calc)
        combined = curvature.eh_action(h, box, "combined", calc)
    s0, tmin = curvature.T_minimum()
    grid = np.linspace(-10, 10, 20001)
    t_ok = bool(np.all(curvature.T(grid) >= 0))
    const = curvature.is_constant(h)
    agree = curvature.methods_agree(direct, combined, float(cfg.tolerances.get("eh_agreement", 1e-8)))
    certified = t_ok and (abs(direct) <= 1e-12 if const else direct < -1e-10)
    rep = {"action": direct, "action_combined": combined, "constant_h": const,
           "max_attained": bool(const and abs(direct) <= 1e-12),
           "T_min": tmin, "T_min_s": s0, "T_nonnegative": t_ok,
           "methods_agree": bool(agree), "certified": bool(certified)}
    _write(cfg.out, "eh_action.json", dump_json(rep))
    print(dump_json(rep), end="")
    return EXIT_OK if certified and agree else EXIT_FAIL


def cmd_residue(cfg: RunConfig, args) -> int:
    sym = residue.inverse_square_laplacian_symbol(cfg.theta)
    res = residue.nc_residue(sym).real
    rng = np.random.default_rng(cfg.seed)
    residuals = []
    for _ in range(int(cfg.tolerances.get("trace_pairs", 5))):
        a = residue.random_classical(rng, cfg.theta, (-2, -3))
        b = residue.random_classical(rng, cfg.theta, (0, -1, -2))
        residuals.append(residue.trace_property_check(a, b))
    tol = float(cfg.tolerances.get("trace_property", 1e-9))
    rep = {"res": res, "target": 2 * math.pi**2, "res_error": abs(res - 2 * math.pi**2),
           "trace_property_max_residual": max(residuals), "ok": abs(res - 2 * math.pi**2) <= 1e-10
           and max(residuals) <= tol}
    _write(cfg.out, "residue.json", dump_json(rep))
    print(dump_json(rep), end="")
    return EXIT_OK if rep["ok"] else EXIT_FAIL


def cmd_dixmier(cfg: RunConfig, args) -> int:
    rep = residue.dixmier_vs_residue(cfg.dixmier_terms, theta=cfg.theta)
    tol = float(cfg.tolerances.get("dixmier", 0.15))
    d = rep.to_dict()
    d.update({"tolerance": tol, "ok": abs(rep.ratio - 1) <= tol})
    _write(cfg.out, "dixmier.json", dump_json(d))
    print(dump_json(d), end="")
    return EXIT_OK if d["ok"] else EXIT_FAIL


COMMANDS = {
    "b2-verify": cmd_b2_verify,
    "curvature-functions": cmd_curvature_functions,
    "weyl": cmd_weyl,
    "heat-trace": cmd_heat_trace,
    "eh-action": cmd_eh_action,
    "residue": cmd_residue,
    "dixmier": cmd_dixmier,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nctorus", description="Spectral geometry of the noncommutative 4-torus.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="YAML configuration file")
    p.add_argument("--out", type=Path, help="output directory (default: out)")
    p.add_argument("--n-box", type=int, help="truncation box size N")
    p.add_argument("--preset", choices=["flat", "scalar-c", "bump"], help="conformal factor preset")
    p.add_argument("--golden", type=Path, help="b2-verify: alternative reference file")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.out is not None:
            cfg.out = args.out
        if args.n_box is not None:
            if args.n_box < 1:
                raise ConfigError("--n-box must be positive")
            cfg.n_box = args.n_box
        args.preset_given = args.preset is not None
        if args.preset is not None:
            cfg.preset = args.preset
            cfg.h_coeffs = None
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
