"""Experiment runner: scenario files in, JSON result records out.

Scenario files are flat ``key = value`` text with dotted paths, parsed
strictly (unknown keys are errors).  Example::

    # two AR(1) sources through a random rotation
    source.1.kind = ar1
    source.1.ar_coefficient = 0.9
    source.2.kind = ar1
    source.2.ar_coefficient = 0.1
    samples = 50000
    mixing = random_orthogonal
    algorithm = amuse
    algorithm.lag = 1
    seed = 0
    repetitions = 20

Subcommands: ``generate`` (write mixture/source files), ``run`` (one JSON
record per repetition), ``sweep`` (cross-product over one parameter), and
``eval`` (score a stored separator matrix against a stored mixing matrix).
Records are emitted one JSON object per line with sorted keys; everything
except the wall-time field is a pure function of the scenario text.  Exit
codes: 0 success, 2 config error, 3 all repetitions failed.
"""

import argparse
import hashlib
import json
import os
import re
import sys
import time

import numpy as np

from .adaptive import AdaptConfig, run_separation, stability_check
from .algebraic import deterministic_cm, hopm, jacobi_diagonalize, jade, rank1_init, unimodal_equalizer
from .errors import BssError, InvalidPath, InvalidSpec
from .fixedpoint import cma_step, deflate_extract
from .metrics import DB_CEIL, DB_FLOOR, separation_index
from .moments import estimate_cum4
from .scores import make_score
from .second_order import Separator, amuse, whiten
from .signals import SOURCE_KINDS, MixingModel, SignalMatrix, SourceSpec, generate_sources, mix

ALGORITHMS = ("amuse", "adaptive", "fastica", "jade", "jacobi", "sea", "cma",
              "rank1_sea", "unimodal", "det_cm")

MIXING_NAMES = ("identity", "random_orthogonal", "static", "noisy", "convolutive")

_SCORE_NAMES = ("cubic", "tanh", "sign_switching")

# per-algorithm parameter schema: name -> coercion type
ALGO_PARAMS = {
    "amuse": {"lag": int, "gap_tolerance": float},
    "adaptive": {"step_size": float, "mode": str, "score": str, "epochs": int,
                 "convergence_tolerance": float, "init": str, "init_seed": int},
    "fastica": {"variant": str, "score": str, "max_iterations": int, "tolerance": float},
    "jade": {},
    "jacobi": {"sweep_tolerance": float, "max_sweeps": int},
    "sea": {"max_iterations": int, "tolerance": float},
    "cma": {"step_size": float, "epochs": int},
    "rank1_sea": {"max_iterations": int, "tolerance": float},
    "unimodal": {"mu1": float, "mu2": float, "window_length": int, "epochs": int, "init": str},
    "det_cm": {"max_refinements": int},
}

_TOP_KEYS = {"seed": int, "samples": int, "repetitions": int, "algorithm": str, "mixing": str}

_SOURCE_KEY = re.compile(r"^source\.(\d+)\.(kind|ar_coefficient)$")
_TAP_KEY = re.compile(r"^mixing\.tap\.(\d+)$")
_COND_MIXING = re.compile(r"^random_condition\(([^)]+)\)$")


class ConfigError(Exception):
    """Scenario text failed to parse or validate (exit code 2)."""


def _parse_matrix(text):
    try:
        rows = [[float(x) for x in row.split()] for row in text.split(";")]
    except ValueError as exc:
        raise ConfigError(f"bad matrix literal {text!r}: {exc}") from None
    if not rows or any(len(r) != len(rows[0]) for r in rows) or not rows[0]:
        raise ConfigError(f"ragged or empty matrix literal {text!r}")
    return np.array(rows, dtype=float)


def _format_value(value):
    if isinstance(value, np.ndarray):
        return " ; ".join(" ".join(repr(float(x)) for x in row) for row in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(key, raw, kind):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {raw!r}") from None
    return raw


def _key_type(key, algorithm):
    """Coercion type for a dotted key, or None when the key is unknown."""
    if key in _TOP_KEYS:
        return _TOP_KEYS[key]
    m = _SOURCE_KEY.match(key)
    if m:
        return str if m.group(2) == "kind" else float
    if key == "mixing.matrix" or _TAP_KEY.match(key):
        return "matrix"
    if key == "mixing.noise_std":
        return float
    if key.startswith("algorithm.") and algorithm in ALGO_PARAMS:
        name = key[len("algorithm."):]
        return ALGO_PARAMS[algorithm].get(name)
    return None


def parse_scenario(text):
    """Parse flat key = value scenario text into a {key: value} dict.

    Strict: unknown keys, repeated keys, and type errors all raise
    ConfigError.  Matrix values keep their ndarray form.
    """
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key in pairs:
            raise ConfigError(f"line {lineno}: repeated key {key!r}")
        pairs[key] = raw

    algorithm = pairs.get("algorithm", "")
    scenario = {}
    for key, raw in pairs.items():
        kind = _key_type(key, algorithm)
        if kind is None:
            raise ConfigError(f"unknown key {key!r}")
        scenario[key] = _parse_matrix(raw) if kind == "matrix" else _coerce(key, raw, kind)
    return scenario


def validate_scenario(scenario):
    """Check cross-key consistency; returns the ordered source list."""
    for key, default in (("seed", 0), ("repetitions", 1)):
        scenario.setdefault(key, default)
    for key in ("samples", "algorithm", "mixing"):
        if key not in scenario:
            raise ConfigError(f"missing required key {key!r}")
    if scenario["seed"] < 0:
        raise ConfigError("seed must be >= 0")
    if scenario["samples"] < 1:
        raise ConfigError("samples must be >= 1")
    if scenario["repetitions"] < 0:
        raise ConfigError("repetitions must be >= 0")
    if scenario["algorithm"] not in ALGORITHMS:
        raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {scenario['algorithm']!r}")

    mixing = scenario["mixing"]
    if mixing not in MIXING_NAMES and not _COND_MIXING.match(mixing):
        raise ConfigError(f"mixing must be one of {MIXING_NAMES} or random_condition(c), got {mixing!r}")
    if _COND_MIXING.match(mixing):
        cond = _coerce("mixing", _COND_MIXING.match(mixing).group(1), float)
        if not cond >= 1.0:
            raise ConfigError(f"random_condition needs c >= 1, got {cond}")
    if mixing in ("static", "noisy") and "mixing.matrix" not in scenario:
        raise ConfigError(f"mixing = {mixing} requires mixing.matrix")
    if mixing == "noisy" and "mixing.noise_std" not in scenario:
        raise ConfigError("mixing = noisy requires mixing.noise_std")
    taps = sorted(int(_TAP_KEY.match(k).group(1)) for k in scenario if _TAP_KEY.match(k))
    if mixing == "convolutive":
        if taps != list(range(len(taps))) or not taps:
            raise ConfigError("convolutive mixing requires contiguous mixing.tap.0 .. mixing.tap.K")
        shapes = {scenario[f"mixing.tap.{k}"].shape for k in taps}
        if len(shapes) != 1:
            raise ConfigError("all mixing taps must share one shape")
    elif taps:
        raise ConfigError("mixing.tap.* only valid for convolutive mixing")

    indices = sorted(int(_SOURCE_KEY.match(k).group(1)) for k in scenario
                     if _SOURCE_KEY.match(k) and k.endswith(".kind"))
    if indices != list(range(1, len(indices) + 1)) or not indices:
        raise ConfigError("sources must be source.1.kind .. source.N.kind, contiguous from 1")
    sources = []
    for i in indices:
        kind = scenario[f"source.{i}.kind"]
        if kind not in SOURCE_KINDS:
            raise ConfigError(f"source.{i}.kind must be one of {SOURCE_KINDS}, got {kind!r}")
        rho = scenario.get(f"source.{i}.ar_coefficient")
        if kind != "ar1" and rho is not None:
            raise ConfigError(f"source.{i}.ar_coefficient only valid for ar1")
        if kind == "ar1" and rho is None:
            raise ConfigError(f"source.{i}.kind = ar1 requires source.{i}.ar_coefficient")
        sources.append((kind, rho))
    for key in scenario:
        m = _SOURCE_KEY.match(key)
        if m and int(m.group(1)) > len(indices):
            raise ConfigError(f"{key}: source index beyond source count {len(indices)}")

    params = {k[len("algorithm."):]: v for k, v in scenario.items() if k.startswith("algorithm.")}
    score = params.get("score")
    if score is not None and score not in _SCORE_NAMES:
        raise ConfigError(f"algorithm.score must be one of {_SCORE_NAMES}, got {score!r}")
    return sources


def canonical_text(scenario):
    return "\n".join(f"{k} = {_format_value(scenario[k])}" for k in sorted(scenario))


def scenario_id(scenario):
    return hashlib.sha256(canonical_text(scenario).encode("ascii")).hexdigest()[:12]


def load_scenario(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path!r}: {exc}") from None
    scenario = parse_scenario(text)
    override = os.environ.get("BSSKIT_SEED")
    if override is not None:
        scenario["seed"] = _coerce("BSSKIT_SEED", override, int)
    sources = validate_scenario(scenario)
    return scenario, sources


def _rep_state(scenario, rep, n_sources):
    """Derived per-repetition seeds: one per source, then mixing and noise."""
    ss = np.random.SeedSequence((scenario["seed"], rep))
    state = ss.generate_state(n_sources + 3)
    return [int(x) for x in state]


def _build_model(scenario, n_sources, mix_seed, noise_seed):
    mixing = scenario["mixing"]
    if mixing == "identity":
        return MixingModel("static", matrix=np.eye(n_sources))
    if mixing == "random_orthogonal":
        rng = np.random.default_rng(mix_seed)
        q, _ = np.linalg.qr(rng.standard_normal((n_sources, n_sources)))
        return MixingModel("static", matrix=q)
    m = _COND_MIXING.match(mixing)
    if m:
        cond = float(m.group(1))
        rng = np.random.default_rng(mix_seed)
        qu, _ = np.linalg.qr(rng.standard_normal((n_sources, n_sources)))
        qv, _ = np.linalg.qr(rng.standard_normal((n_sources, n_sources)))
        svals = np.geomspace(1.0, 1.0 / cond, n_sources)
        return MixingModel("static", matrix=qu @ np.diag(svals) @ qv.T)
    if mixing == "static":
        return MixingModel("static", matrix=scenario["mixing.matrix"])
    if mixing == "noisy":
        return MixingModel("noisy", matrix=scenario["mixing.matrix"],
                           noise_std=scenario["mixing.noise_std"], noise_seed=noise_seed)
    taps = tuple(scenario[k] for k in sorted(
        (k for k in scenario if _TAP_KEY.match(k)),
        key=lambda k: int(_TAP_KEY.match(k).group(1))))
    return MixingModel("convolutive", taps=taps)


def _delay_match_index(y, A, max_delay):
    """Index in dB for one equalizer output against every delayed source."""
    y = np.asarray(y, dtype=float)
    y = y / max(np.sqrt(np.mean(y * y)), 1e-30)
    best = 0.0
    T = A.shape[1]
    offset = T - y.size  # output m aligns with source sample m + offset
    for j in range(A.shape[0]):
        for d in range(max_delay + 1):
            lo = max(0, d - offset)
            a = A[j, lo + offset - d:T - d]
            seg = y[lo:lo + a.size]
            if a.size < 2:
                continue
            c = float(np.mean(seg * a))
            best = max(best, abs(c))
    signal = best * best
    leak = max(1.0 - signal, 0.0)
    if signal <= 0.0:
        return DB_CEIL if leak > 0.0 else DB_FLOOR
    return float(np.clip(10.0 * np.log10(leak / signal), DB_FLOOR, DB_CEIL))


def _run_once(scenario, sources, rep):
    """One repetition: generate, mix, separate, score.  Raises BssError."""
    algorithm = scenario["algorithm"]
    params = {k[len("algorithm."):]: v for k, v in scenario.items() if k.startswith("algorithm.")}
    state = _rep_state(scenario, rep, len(sources))
    specs = [SourceSpec(kind, ar_coefficient=rho, seed=state[i])
             for i, (kind, rho) in enumerate(sources)]
    A = generate_sources(specs, scenario["samples"])
    model = _build_model(scenario, len(sources), state[-3], state[-2])
    alg_seed = state[-1]
    U = mix(model, A)

    if model.variant == "convolutive" and algorithm != "unimodal":
        raise InvalidSpec(f"{algorithm} expects an instantaneous mixture")
    H = model.matrix if model.variant in ("static", "noisy") else None

    iters = None
    verdict = None
    if algorithm == "amuse":
        sep = amuse(U, lag=params.get("lag", 1), gap_tolerance=params.get("gap_tolerance", 0.05))
        index = separation_index(sep.matrix @ H)
    elif algorithm == "adaptive":
        cfg = AdaptConfig(step_size=params.get("step_size", 0.005),
                          mode=params.get("mode", "relative"),
                          max_iterations=params.get("epochs", 1),
                          convergence_tolerance=params.get("convergence_tolerance", 1e-6),
                          init=params.get("init", "identity"),
                          init_seed=params.get("init_seed", alg_seed))
        scores = [make_score(params.get("score", "cubic")) for _ in sources]
        sep, trajectory = run_separation(U, scores, cfg)
        iters = max(len(trajectory), 1)
        index = separation_index(sep.matrix @ H)
        verdict = bool(stability_check(sep.apply(U).data, scores).verdict)
    elif algorithm in ("fastica", "sea"):
        variant = params.get("variant", "newton") if algorithm == "fastica" else "newton"
        score_name = params.get("score", "cubic") if algorithm == "fastica" else "cubic"
        whitener, Z = whiten(U)
        sep = deflate_extract(Z, lambda: make_score(score_name), count=Z.channel_count,
                              variant=variant,
                              max_iterations=params.get("max_iterations", 200),
                              tolerance=params.get("tolerance", 1e-10), seed=alg_seed)
        index = separation_index(sep.matrix @ whitener.matrix @ H)
    elif algorithm == "jade":
        whitener, Z = whiten(U)
        sep = jade(Z, whitener=whitener)
        index = separation_index(sep.matrix @ H)
    elif algorithm == "jacobi":
        whitener, Z = whiten(U)
        Q = jacobi_diagonalize(estimate_cum4(Z),
                               sweep_tolerance=params.get("sweep_tolerance", 1e-10),
                               max_sweeps=params.get("max_sweeps", 50))
        index = separation_index(Q @ whitener.matrix @ H)
    elif algorithm == "cma":
        whitener, Z = whiten(U)
        X = Z.data
        g = np.zeros(X.shape[0])
        g[0] = 1.0
        epochs = params.get("epochs", 1)
        for _ in range(epochs):
            for t in range(X.shape[1]):
                g = cma_step(g, X[:, t], params.get("step_size", 0.01))
        iters = epochs
        index = separation_index((g @ whitener.matrix @ H)[None, :])
    elif algorithm == "rank1_sea":
        whitener, Z = whiten(U)
        C = estimate_cum4(Z)
        start = rank1_init(C)
        _, g = hopm(C, init=start.g0, max_iterations=params.get("max_iterations", 500),
                    tolerance=params.get("tolerance", 1e-12))
        index = separation_index((g @ whitener.matrix @ H)[None, :])
    elif algorithm == "unimodal":
        L = params.get("window_length", 16)
        result = unimodal_equalizer(U, mu1=params.get("mu1", 0.05), mu2=params.get("mu2", 0.5),
                                    L=L, epochs=params.get("epochs", 1),
                                    init=params.get("init", "fourth_order"))
        iters = params.get("epochs", 1)
        index = _delay_match_index(result.outputs(U), A.data, L + model.order)
    else:  # det_cm
        result = deterministic_cm(U, max_refinements=params.get("max_refinements", 200))
        index = separation_index((result.g @ H)[None, :])
    return index, iters, verdict


def run_experiment(scenario, sources, extra=None):
    """All repetitions of one scenario; returns a list of record dicts.

    Per-repetition errors become records with a status naming the error
    class; they never abort the batch.
    """
    records = []
    sid = scenario_id(scenario)
    for rep in range(scenario["repetitions"]):
        record = {
            "scenario_id": sid,
            "rep": rep,
            "seed": scenario["seed"],
            "algorithm": scenario["algorithm"],
            "index_db": None,
            "iters": None,
            "status": "ok",
            "verdict": None,
        }
        if extra:
            record.update(extra)
        start = time.perf_counter()
        try:
            index, iters, verdict = _run_once(scenario, sources, rep)
            record["index_db"] = float(index)
            record["iters"] = iters
            record["verdict"] = verdict
        except BssError as exc:
            record["status"] = type(exc).__name__
        except np.linalg.LinAlgError:
            record["status"] = "LinAlgError"
        record["elapsed_s"] = time.perf_counter() - start
        records.append(record)
    return records


def _emit(records, out_path, csv_path):
    lines = [json.dumps(rec, sort_keys=True) for rec in records]
    text = "".join(line + "\n" for line in lines)
    if out_path:
        with open(out_path, "w", encoding="ascii") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if csv_path:
        with open(csv_path, "w", encoding="ascii") as fh:
            fh.write("scenario_id,rep,seed,algorithm,index_db,iters,status\n")
            for rec in records:
                cells = [rec["scenario_id"], rec["rep"], rec["seed"], rec["algorithm"],
                         "" if rec["index_db"] is None else repr(rec["index_db"]),
                         "" if rec["iters"] is None else rec["iters"], rec["status"]]
                fh.write(",".join(str(c) for c in cells) + "\n")


def write_signals(path, data):
    """Signal file: header line `channels samples`, one row per channel."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{data.shape[0]} {data.shape[1]}\n")
        for row in data:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def read_signals(path):
    try:
        with open(path, "r", encoding="ascii") as fh:
            header = fh.readline().split()
            rows, cols = int(header[0]), int(header[1])
            data = np.loadtxt(fh, ndmin=2)
    except (OSError, ValueError, IndexError) as exc:
        raise ConfigError(f"bad signal file {path!r}: {exc}") from None
    if data.shape != (rows, cols):
        raise ConfigError(f"{path!r}: header says {rows}x{cols}, found {data.shape}")
    return data


def _cmd_generate(args):
    scenario, sources = load_scenario(args.scenario)
    state = _rep_state(scenario, args.rep, len(sources))
    specs = [SourceSpec(kind, ar_coefficient=rho, seed=state[i])
             for i, (kind, rho) in enumerate(sources)]
    A = generate_sources(specs, scenario["samples"])
    model = _build_model(scenario, len(sources), state[-3], state[-2])
    U = mix(model, A)
    write_signals(args.out, U.data)
    if args.sources_out:
        write_signals(args.sources_out, A.data)
    return 0


def _cmd_run(args):
    scenario, sources = load_scenario(args.scenario)
    records = run_experiment(scenario, sources)
    _emit(records, args.out, args.csv)
    if records and all(rec["status"] != "ok" for rec in records):
        return 3
    return 0


def _cmd_sweep(args):
    scenario, _ = load_scenario(args.scenario)
    algorithm = scenario.get("algorithm", "")
    kind = _key_type(args.param, algorithm)
    if kind is None or kind == "matrix":
        raise InvalidPath(f"cannot sweep over {args.param!r}")
    values = [_coerce(args.param, raw.strip(), kind) for raw in args.values.split(",")]
    # validate every point before running any
    grid = []
    for value in values:
        point = dict(scenario)
        point[args.param] = value
        grid.append((value, point, validate_scenario(point)))
    records = []
    for value, point, sources in grid:
        records.extend(run_experiment(point, sources,
                                      extra={"parameter": args.param, "value": value}))
    _emit(records, args.out, args.csv)
    if records and all(rec["status"] != "ok" for rec in records):
        return 3
    return 0


def _cmd_eval(args):
    G = read_signals(args.separator)
    H = read_signals(args.mixing)
    if G.shape[1] != H.shape[0]:
        raise ConfigError(f"separator {G.shape} does not compose with mixing {H.shape}")
    record = {"index_db": separation_index(G @ H), "rows": G.shape[0], "status": "ok"}
    sys.stdout.write(json.dumps(record, sort_keys=True) + "\n")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="bsskit", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write mixture (and optionally source) signal files")
    p.add_argument("scenario")
    p.add_argument("--out", required=True)
    p.add_argument("--sources-out", default=None)
    p.add_argument("--rep", type=int, default=0)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("run", help="run a scenario, one JSON record per repetition")
    p.add_argument("scenario")
    p.add_argument("--out", default=None, help="JSONL path (default stdout)")
    p.add_argument("--csv", default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run a scenario once per value of one parameter")
    p.add_argument("scenario")
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("eval", help="score a stored separator against a stored mixing matrix")
    p.add_argument("--separator", required=True)
    p.add_argument("--mixing", required=True)
    p.set_defaults(func=_cmd_eval)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidPath, InvalidSpec) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
