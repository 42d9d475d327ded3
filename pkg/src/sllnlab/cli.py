"""Command-line front end.

    sllnlab <command> [--config FILE] [--set section.key=value ...]
                      [--seed N] [--out DIR] [--threads N] [--list]

Exit status: 0 success or expectation met, 1 expectation failed, 2 usage or
config error (including an inadmissible base plan), 3 numerical or resource
error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import acceptance
from .config import BOOL, INT, INTS, REAL, REALS, STR, STRS, ConfigError, Key, Schema, manifest_bytes, resolve
from .fieldio import field_to_bytes, field_to_csv
from .fields import ConstructionError, FieldGenerator, VarianceMap
from .harness import SllnExperiment, run_slln, theorem_normalizers
from .lattice import LatticeField
from .moments import (
    HeavyTailWarning, RectGeometry, SamplerSpec, SphereGeometry, condition_series_rect, condition_series_sphere,
    estimate_abs_moment, estimate_c5, estimate_recursion_trace, lfss_moment_law,
)
from .rng import stream
from .scaling import InadmissiblePlan, NotDoublingAdmissible, ToeplitzWeights, parse_scaling, power_log, toeplitz_transform
from .series import CONVERGES, DIVERGES, INCONCLUSIVE, corollary_bound_series
from .stable import LfssConfig, MemoryBudgetError, QuadratureError, TruncationError, estimate_bytes, increment_weights, sheet_from_increments, simulate_increment_field

OK, EXPECTATION_FAILED, USAGE, NUMERICAL = 0, 1, 2, 3

COMMANDS = ("simulate", "estimate-moments", "check-conditions", "slln", "toeplitz", "paper-suite")

USAGE_TEXT = """usage: sllnlab <command> --config FILE [--set section.key=value ...] [--seed N] [--out DIR] [--threads N] [--list]

commands:
  simulate           draw one field and write it in binary/CSV form
  estimate-moments   absolute moments, the LFSS moment law, recursion traces, C5
  check-conditions   moment-series convergence checks with declared expectations
  slln               tail-sup experiments for normalized partial sums
  toeplitz           Toeplitz transform of a test sequence
  paper-suite        run the acceptance criteria (no config needed)

--list prints the config keys of a command (criteria for paper-suite).
"""

RUN = {"seed": Key(INT, 0), "threads": Key(INT, 1), "out": Key(STR, "sllnlab-out")}

GENERATOR = {
    "kind": Key(STR, "iid_gauss", FieldGenerator.KINDS),
    "d": Key(INT, 1),
    "alpha": Key(REAL, 1.5),
    "scale": Key(REAL, 1.0),
    "hurst": Key(REALS, [0.8]),
    "kappa": Key(REAL, 0.0),  # 0: normalize so that Z(<1>) has unit scale
    "grid": Key(REAL, 1.0 / 16),
    "uniform_zone": Key(REAL, 16.0),
    "delta": Key(REAL, 1e-3),
    "ar": Key(REALS, [0.5]),
    "variance_scale": Key(REAL, 1.0),
    "variance_power": Key(REAL, 0.0),
    "method": Key(STR, "fft", ("fft", "direct")),
}

EXPECT = (CONVERGES, DIVERGES, INCONCLUSIVE, "not_converges", "any")

SCHEMAS = {
    "simulate": Schema({
        "run": RUN, "generator": GENERATOR,
        "simulate": {
            "shape": Key(INTS, [64]),
            "format": Key(STR, "binary", ("binary", "csv", "both")),
            "sheet": Key(BOOL, False),
            "memory_budget": Key(INT, 2 * 1024**3),
        },
    }),
    "estimate-moments": Schema({
        "run": RUN, "generator": GENERATOR,
        "moments": {
            "target": Key(STR, "abs", ("abs", "lfss_law", "recursion", "c5")),
            "p": Key(REAL, 1.0),
            "replicates": Key(INT, 10_000),
            "a": Key(INT, 2),
            "n_grid": Key(INTS, [4, 5, 6, 7, 8, 9, 10]),
            "n_max": Key(INT, 6),
            "geometry": Key(STR, "sphere", ("sphere", "rect")),
            "phi": Key(STRS, ["power(1.5)"]),
            "norm": Key(STR, None, ("l2", "linf")),
            "shift": Key(INTS, None),
            "ratio_tol": Key(REAL, 0.10),
            "slope_tol": Key(REAL, 0.05),
        },
        "sampler": {
            "kind": Key(STR, "gauss", ("gauss", "sas", "constant")),
            "alpha": Key(REAL, 1.5),
            "scale": Key(REAL, 1.0),
            "value": Key(REAL, 1.0),
        },
    }),
    "check-conditions": Schema({
        "run": RUN, "generator": GENERATOR,
        "check.*": {
            "kind": Key(STR, "series", ("series", "corollary")),
            "geometry": Key(STR, "rect", ("rect", "sphere")),
            "phi": Key(STRS, ["power(1)"]),
            "eps": Key(REAL, 0.5),
            "a": Key(INTS, None),
            "p": Key(REAL, 1.0),
            "n_max": Key(INT, 8),
            "norm": Key(STR, None, ("l2", "linf")),
            "replicates": Key(INT, 1000),
            "strict": Key(BOOL, True),
            "g_scale": Key(REAL, 1.0),
            "g_power": Key(REAL, 1.0),
            "expect": Key(STR, "any", EXPECT),
        },
    }),
    "slln": Schema({
        "run": RUN, "generator": GENERATOR,
        "slln": {
            "geometry": Key(STR, "rect", ("rect", "sphere")),
            "phi": Key(STRS, ["power(1)"]),
            "eps": Key(REAL, 0.5),
            "checkpoints": Key(INTS, [16, 32, 64, 128, 256]),
            "replicates": Key(INT, 32),
            "norm": Key(STR, None, ("l2", "linf")),
            "p": Key(REAL, 1.0),
            "a": Key(INTS, None),
            "theorem_mode": Key(BOOL, True),
            "per_octave": Key(INT, 4),
            "decay_factor": Key(REAL, 2.0),
            "negative_control": Key(BOOL, False),
        },
    }),
    "toeplitz": Schema({
        "run": RUN,
        "toeplitz": {
            "phi": Key(STRS, ["power(1)"]),
            "a": Key(INT, 2),
            "d": Key(INT, 1),
            "n_max": Key(INT, 40),
            "input": Key(STR, "inverse", ("inverse", "geometric", "constant")),
            "rate": Key(REAL, 0.5),
            "expect": Key(STR, "decay", ("decay", "any")),
        },
    }),
    "paper-suite": Schema({
        "run": RUN,
        "tolerance": {k: Key(REAL, v) for k, v in acceptance.TOLERANCES.items()},
        "suite": {"criteria": Key(INTS, sorted(acceptance.CRITERIA))},
    }),
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- builders


def build_generator(g: dict) -> FieldGenerator:
    kind = g["kind"]
    if kind == "lfss":
        H = tuple(g["hurst"])
        if g["d"] not in (1, len(H)):
            raise ConfigError(f"[generator] d = {g['d']} but hurst has {len(H)} entries")
        cfg = LfssConfig(H, g["alpha"], g["kappa"] or None, g["grid"], g["uniform_zone"], g["delta"])
        return FieldGenerator("lfss", len(H), lfss=cfg, method=g["method"])
    d = g["d"]
    if kind == "orthogonal":
        return FieldGenerator(kind, d, variance=VarianceMap(g["variance_scale"], g["variance_power"]))
    if kind == "quasi_stationary":
        ar = tuple(g["ar"]) * d if len(g["ar"]) == 1 else tuple(g["ar"])
        return FieldGenerator(kind, d, ar=ar)
    return FieldGenerator(kind, d, alpha=g["alpha"], scale=g["scale"])


def build_phis(specs, gen: FieldGenerator | None, eps: float, count: int) -> tuple:
    """Normalizers from specs; ``theorem`` expands to ``power_log(H_j, 1/alpha + eps)``."""
    if list(specs) == ["theorem"]:
        if gen is None or gen.kind not in ("lfss", "iid_sas"):
            raise ConfigError("phi = theorem needs an lfss or iid_sas generator")
        if gen.kind == "lfss":
            phis = theorem_normalizers(gen.lfss, eps)
        else:
            phis = (power_log(1 / gen.alpha, 1 / gen.alpha + eps),) * gen.d
        return phis[:count] if count == 1 else phis
    try:
        phis = tuple(parse_scaling(s) for s in specs)
    except ValueError as e:
        raise ConfigError(f"phi: {e}") from None
    if len(phis) == 1:
        phis = phis * count
    if len(phis) != count:
        raise ConfigError(f"phi: need 1 or {count} normalizers, got {len(phis)}")
    return phis


def _base(a):
    if a is None:
        return None
    return a[0] if len(a) == 1 else tuple(a)


def _norm(sec: dict, name: str) -> str:
    # balls are l2 or linf by explicit choice only
    if sec.get("norm") is None:
        raise ConfigError(f"[{name}] norm: required for sphere geometry (l2 or linf)")
    return sec["norm"]


# ---------------------------------------------------------------- output


class Output:
    def __init__(self, root: Path):
        self.root = root
        root.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, content: str) -> Path:
        p = self.root / name
        with open(p, "w", newline="") as fh:
            fh.write(content)
        return p

    def binary(self, name: str, data: bytes) -> Path:
        p = self.root / name
        p.write_bytes(data)
        return p

    def json(self, name: str, obj) -> Path:
        return self.text(name, json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    return str(x)


def _verdict_matches(verdict: str, expect: str) -> bool:
    if expect == "any":
        return True
    if expect == "not_converges":
        return verdict != CONVERGES
    return verdict == expect


# ---------------------------------------------------------------- commands


def cmd_simulate(cfg, out: Output, seed: int, threads: int) -> int:
    g, s = cfg.section("generator"), cfg.section("simulate")
    gen = build_generator(g)
    shape = tuple(s["shape"])
    if len(shape) == 1 and gen.d > 1:
        shape = shape * gen.d
    if len(shape) != gen.d or any(x < 1 for x in shape):
        raise ConfigError(f"[simulate] shape {list(shape)} does not fit dimension {gen.d}")
    if gen.kind == "lfss":
        need = estimate_bytes(increment_weights(gen.lfss, shape, first_site=1))
        if need > s["memory_budget"]:
            raise MemoryBudgetError(need, s["memory_budget"])
        fld = simulate_increment_field(gen.lfss, shape, seed, gen.method, s["memory_budget"])
    else:
        need = 8 * 3 * int(np.prod(shape))
        if need > s["memory_budget"]:
            raise MemoryBudgetError(need, s["memory_budget"])
        vals = gen.sample(stream(seed, "simulate/field"), 1, shape)[0]
        fld = LatticeField(vals, origin=(1,) * gen.d, generator=gen.describe(), seed=seed)
    if s["sheet"]:
        fld = sheet_from_increments(fld)
    data = field_to_bytes(fld)
    digest = hashlib.sha256(data).hexdigest()
    files = []
    if s["format"] in ("binary", "both"):
        files.append(out.binary("field.bin", data).name)
    if s["format"] in ("csv", "both"):
        files.append(out.text("field.csv", field_to_csv(fld)).name)
    out.json("summary.json", {"sha256": digest, "shape": list(fld.shape), "origin": list(fld.origin), "generator": fld.generator, "seed": seed, "files": files})
    print(f"simulate: {fld.generator} shape={list(fld.shape)} sha256={digest}")
    return OK


def cmd_estimate_moments(cfg, out: Output, seed: int, threads: int) -> int:
    m = cfg.section("moments")
    target, p, R = m["target"], m["p"], m["replicates"]
    if target == "abs":
        sm = cfg.section("sampler")
        spec = SamplerSpec(sm["kind"], alpha=sm["alpha"], scale=sm["scale"], value=sm["value"])
        est = estimate_abs_moment(spec, p, R, seed, threads)
        summary = {"p": est.p, "value": est.value, "std_error": est.std_error, "replicates": est.replicates, "heavy_tail": est.heavy_tail, "stream": est.stream}
        out.json("summary.json", summary)
        out.text("moment.csv", "p,value,std_error,replicates\n" + f"{est.p!r},{est.value!r},{est.std_error!r},{est.replicates}\n")
        print(f"E|X|^{p:g} = {est.value:.6g} +- {est.std_error:.2g}")
        return OK
    gen = build_generator(cfg.section("generator"))
    if target == "lfss_law":
        if gen.kind != "lfss":
            raise ConfigError("[moments] target = lfss_law needs [generator] kind = lfss")
        rep = lfss_moment_law(gen.lfss, m["a"], p, m["n_grid"], R, seed, threads, shift=m["shift"], method=gen.method)
        out.text("moment_law.csv", rep.to_csv())
        s = rep.summary()
        met = s["max_ratio_error"] is not None and s["max_ratio_error"] <= m["ratio_tol"] and abs(rep.slope - rep.expected_slope) <= m["slope_tol"]
        s["expectation_met"] = bool(met)
        out.json("summary.json", s)
        print(f"moment law: slope {rep.slope:.4f} (expected {rep.expected_slope:.4f}), max ratio error {s['max_ratio_error']:.3f}")
        return OK if met else EXPECTATION_FAILED
    if target == "recursion":
        if m["geometry"] == "sphere":
            (f,) = build_phis(m["phi"], gen, 0.5, 1)
            geo = SphereGeometry(f, m["a"], p, _norm(m, "moments"))
        else:
            geo = RectGeometry(build_phis(m["phi"], gen, 0.5, gen.d), m["a"], p)
        tr = estimate_recursion_trace(gen, geo, m["n_max"], replicates=R, seed=seed, threads=threads)
        out.text("recursion.csv", tr.to_csv())
        out.json("summary.json", tr.summary())
        print(f"recursion trace: {len(tr.levels)} rows, holds = {tr.holds}")
        return OK if tr.holds else EXPECTATION_FAILED
    res = estimate_c5(gen, m["n_max"], R, seed, threads=threads)
    out.json("summary.json", res)
    print(f"C5 = {res['C5']:.4g} +- {res['C5_se']:.2g}")
    return OK


def cmd_check_conditions(cfg, out: Output, seed: int, threads: int) -> int:
    names = cfg.sections_like("check")
    if not names:
        raise ConfigError("no [check] section: nothing to check")
    gen = build_generator(cfg.section("generator"))
    results, all_met = {}, True
    for name in names:
        c = cfg.section(name)
        tag = name.replace(".", "-")
        if c["kind"] == "corollary":
            phis = build_phis(c["phi"], gen, c["eps"], gen.d)
            base = _base(c["a"]) or 2
            gs, gp = c["g_scale"], c["g_power"]
            rep = corollary_bound_series(lambda n: gs * float(np.prod(np.asarray(n, dtype=float) ** gp)), phis, base, c["p"], c["n_max"])
        elif c["geometry"] == "sphere":
            (f,) = build_phis(c["phi"], gen, c["eps"], 1)
            rep = condition_series_sphere(gen, f, _base(c["a"]), c["p"], c["n_max"], _norm(c, name), replicates=c["replicates"], seed=seed, threads=threads, strict=c["strict"])
        else:
            phis = build_phis(c["phi"], gen, c["eps"], gen.d)
            rep = condition_series_rect(gen, phis, _base(c["a"]), c["p"], c["n_max"], replicates=c["replicates"], seed=seed, threads=threads, strict=c["strict"])
        met = _verdict_matches(rep.verdict, c["expect"])
        all_met &= met
        out.text(f"{tag}.csv", rep.to_csv())
        s = rep.summary()
        s.update({"expect": c["expect"], "expectation_met": met})
        results[name] = s
        print(f"[{name}] verdict {rep.verdict} (tail ratio {rep.ratio:.4g}); expected {c['expect']}: {'met' if met else 'NOT met'}")
    out.json("summary.json", results)
    return OK if all_met else EXPECTATION_FAILED


def cmd_slln(cfg, out: Output, seed: int, threads: int) -> int:
    gen = build_generator(cfg.section("generator"))
    s = cfg.section("slln")
    count = gen.d if s["geometry"] == "rect" else 1
    phis = build_phis(s["phi"], gen, s["eps"], count)
    exp = SllnExperiment(
        gen, s["geometry"], phis, tuple(s["checkpoints"]), s["replicates"], seed,
        _norm(s, "slln") if s["geometry"] == "sphere" else None, s["p"], _base(s["a"]), s["theorem_mode"],
        s["per_octave"], s["decay_factor"], s["negative_control"], threads,
    )
    res = run_slln(exp)
    out.text("tail_sup.csv", res.to_csv())
    out.json("summary.json", res.summary())
    print(f"slln: median tail sup {res.median[0]:.4g} -> {res.median[-1]:.4g} (ratio {res.decay_ratio:.4g}); "
          f"decayed = {res.decayed}, negative control = {res.negative_control}")
    return OK if res.expectation_met else EXPECTATION_FAILED


def cmd_toeplitz(cfg, out: Output, seed: int, threads: int) -> int:
    t = cfg.section("toeplitz")
    d, n_max = t["d"], t["n_max"]
    if d < 1 or n_max < 1:
        raise ConfigError("[toeplitz] needs d >= 1 and n_max >= 1")
    phis = build_phis(t["phi"], None, 0.0, d)
    tw = ToeplitzWeights(phis, t["a"])
    k = np.indices((n_max + 1,) * d).max(axis=0)
    if t["input"] == "inverse":
        s = 1.0 / (1.0 + k)
    elif t["input"] == "geometric":
        s = t["rate"] ** k.astype(float)
    else:
        s = np.ones(k.shape)
    res = toeplitz_transform(tw, s, n_max)
    lines = [",".join([f"m{i + 1}" for i in range(d)] + ["s", "t"])]
    for idx in np.ndindex(*res.t.shape):
        lines.append(",".join([str(x) for x in idx] + [repr(float(s[idx])), repr(float(res.t[idx]))]))
    out.text("toeplitz.csv", "\n".join(lines) + "\n")
    out.text("tail_sup.csv", "N,tail_sup\n" + "".join(f"{N},{float(v)!r}\n" for N, v in enumerate(res.tail_sup)))
    halvings = [bool(res.tail_sup[2 * N] < res.tail_sup[N]) for N in range(1, n_max // 2 + 1)]
    met = t["expect"] == "any" or all(halvings)
    out.json("summary.json", {"strict_decrease_per_doubling": all(halvings), "tail_sup_first": float(res.tail_sup[0]), "tail_sup_last": float(res.tail_sup[-1]), "expectation_met": met})
    print(f"toeplitz: tail sup {res.tail_sup[0]:.4g} -> {res.tail_sup[-1]:.4g}; strict decrease per doubling = {all(halvings)}")
    return OK if met else EXPECTATION_FAILED


def cmd_paper_suite(cfg, out: Output, seed: int, threads: int) -> int:
    tol = cfg.section("tolerance")
    only = cfg.section("suite")["criteria"]
    bad = [c for c in only if c not in acceptance.CRITERIA]
    if bad:
        raise ConfigError(f"[suite] criteria: unknown criteria {bad}")
    results = acceptance.run_suite(seed, threads, tol, only, log=print)
    out.text("acceptance.csv", acceptance.results_csv(results))
    out.json("summary.json", {str(r.number): {"passed": r.passed, "title": r.title, "metrics": r.metrics, "digest": r.digest} for r in results})
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed" + (f"; failed: {failed}" if failed else ""))
    return OK if not failed else EXPECTATION_FAILED


HANDLERS = {
    "simulate": cmd_simulate,
    "estimate-moments": cmd_estimate_moments,
    "check-conditions": cmd_check_conditions,
    "slln": cmd_slln,
    "toeplitz": cmd_toeplitz,
    "paper-suite": cmd_paper_suite,
}


# ---------------------------------------------------------------- entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sllnlab", add_help=False)
    ap.add_argument("command", nargs="?")
    ap.add_argument("--config")
    ap.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out")
    ap.add_argument("--threads", type=int)
    ap.add_argument("--list", action="store_true")
    ap.add_argument("-h", "--help", action="store_true")
    return ap


def list_keys(command: str) -> str:
    if command == "paper-suite":
        return acceptance.list_criteria()
    lines = []
    for sec, keys in SCHEMAS[command].sections.items():
        lines.append(f"[{sec}]")
        for k, spec in keys.items():
            extra = f"  one of {', '.join(spec.choices)}" if spec.choices else ""
            lines.append(f"  {k} ({spec.kind}) = {spec.default!r}{extra}")
    return "\n".join(lines)


def resolve_run(argv) -> tuple:
    """Parse arguments and resolve the config; returns ``(command, cfg)`` or an exit status."""
    args = _parser().parse_args(argv)
    if args.help:
        print(USAGE_TEXT)
        return None, OK
    if args.command not in COMMANDS:
        raise UsageError(f"unknown command {args.command!r}" if args.command else "missing command")
    if args.list:
        print(list_keys(args.command))
        return None, OK
    text, source = "", "<none>"
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {args.config}: {e.strerror}") from None
        source = args.config
    if args.command != "paper-suite" and not text.strip() and not args.set:
        raise UsageError("empty config")
    overrides = list(args.set)
    for flag, key in ((args.seed, "seed"), (args.threads, "threads"), (args.out, "out")):
        if flag is not None:
            overrides.append(f"run.{key}={flag}")
    cfg = resolve(args.command, SCHEMAS[args.command], text, overrides, source)
    run = cfg.section("run")
    if run["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    if not 0 <= run["seed"] < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    return args.command, cfg


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        command, cfg = resolve_run(argv)
    except UsageError as e:
        print(f"sllnlab: {e}\n\n{USAGE_TEXT}", file=sys.stderr)
        return USAGE
    except ConfigError as e:
        print(f"sllnlab: config error: {e}", file=sys.stderr)
        return USAGE
    if command is None:
        return cfg
    run = cfg.section("run")
    out = Output(Path(run["out"]))
    out.binary("manifest.json", manifest_bytes(cfg.manifest()))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", HeavyTailWarning)
            return HANDLERS[command](cfg, out, run["seed"], run["threads"])
    except InadmissiblePlan as e:
        print(f"sllnlab: {e}", file=sys.stderr)
        return USAGE
    except (ConfigError, NotDoublingAdmissible, ConstructionError) as e:
        print(f"sllnlab: config error: {e}", file=sys.stderr)
        return USAGE
    except MemoryBudgetError as e:
        print(f"sllnlab: refused: {e}", file=sys.stderr)
        return NUMERICAL
    except (QuadratureError, TruncationError, ArithmeticError, MemoryError) as e:
        print(f"sllnlab: numerical error: {e}", file=sys.stderr)
        return NUMERICAL
    except ValueError as e:
        print(f"sllnlab: invalid parameters: {e}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
