"""Command-line entry point: simulate / tw / shift / kernels / fit / report.

Every subcommand accepts ``--config FILE`` with flat ``key = value`` lines
(keys are flag names); explicit flags override the file. The fully resolved
configuration is logged to stderr and its SHA-256 is written as a comment
header into every output file.
"""

import argparse
import hashlib
import io
import json
import logging
import math
import sys

import numpy as np

from . import __version__
from .errors import AccuracyError, DivergenceError, RangeError, SimulationError

log = logging.getLogger("kpzshift")

# keys that do not affect results and are left out of the config hash
_UNHASHED = {"out", "json_out", "cdf_out", "workers", "config", "command", "verbose"}


class CliError(Exception):
    """Flag validation failure (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


# ---------------------------------------------------------------------------
# config plumbing


def read_config(path):
    """Flat ``key = value`` file; '#' starts a comment."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc.strerror}")
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{num}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("_", "-")] = value
    return out


def _config_tokens(cfg):
    tokens = []
    for key, value in cfg.items():
        if value.lower() in ("true", "yes", "on"):
            tokens.append(f"--{key}")
        elif value.lower() in ("false", "no", "off"):
            continue
        else:
            tokens.extend([f"--{key}", value])
    return tokens


def config_hash(resolved):
    body = {k: v for k, v in resolved.items() if k not in _UNHASHED}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def header_lines(resolved):
    body = {k: v for k, v in resolved.items() if k not in _UNHASHED}
    return [f"# kpzshift {__version__} config={config_hash(resolved)}",
            f"# resolved {json.dumps(body, sort_keys=True)}"]


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def parse_grid(spec):
    """'lo:hi:step' -> inclusive grid."""
    try:
        lo, hi, step = (float(v) for v in spec.split(":"))
    except ValueError:
        raise CliError(f"grid must be lo:hi:step, got {spec!r}")
    if not step > 0 or hi < lo:
        raise CliError("grid needs step > 0 and hi >= lo")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def read_samples(path):
    """(samples, resolved config from the header or {}) of a samples CSV."""
    resolved = {}
    values = []
    try:
        fh = open(path)
    except OSError as exc:
        raise CliError(f"cannot read samples file {path}: {exc.strerror}")
    with fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("# resolved "):
                resolved = json.loads(line[len("# resolved "):])
                continue
            if line.startswith("#") or line.startswith("run"):
                continue
            try:
                values.append(int(line.split(",")[1]))
            except (IndexError, ValueError):
                raise CliError(f"{path}: malformed row {line!r}")
    if not values:
        raise CliError(f"{path}: no samples")
    return np.asarray(values, dtype=np.int64), resolved


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args):
    from .simulate import SimConfig, batch

    try:
        cfg = SimConfig(args["model"], args["t"], runs=args["runs"], seed=args["seed"],
                        n=args.get("n"), p=args["p"], window=args.get("window"))
    except ValueError as exc:
        raise CliError(str(exc))
    result = batch(cfg, workers=args.get("workers"))
    buf = io.StringIO()
    buf.write("\n".join(header_lines(args)) + "\n")
    buf.write("run,observable\n")
    for i, v in enumerate(result.samples.tolist()):
        buf.write(f"{i},{v}\n")
    _write(args.get("out"), buf.getvalue())
    return 0


def cmd_tw(args):
    from .fredholm import LimitLaw, law_cdf, law_pdf

    grid = parse_grid(args["grid"])
    if grid[0] < -10 or grid[-1] > 10:
        raise CliError("tw grid must lie inside [-10, 10]")
    law = LimitLaw(args["law"], nodes=args["nodes"])
    buf = io.StringIO()
    buf.write("\n".join(header_lines(args)) + "\n")
    buf.write("s,cdf,pdf\n")
    for s in grid:
        s = float(round(s, 12))
        buf.write(f"{s!r},{law_cdf(law, s)!r},{law_pdf(law, s)!r}\n")
    _write(args.get("out"), buf.getvalue())
    return 0


def cmd_shift(args):
    from .shifts import a_pq, height_shift, p_critical, scaling_constants

    chosen = [k for k in ("pc", "apq", "height", "constants") if args.get(k) not in (None, False)]
    if len(chosen) != 1:
        raise CliError("shift needs exactly one of --pc, --apq, --height, --constants")
    what = chosen[0]
    try:
        if what == "pc":
            out = f"{p_critical():.10f}"
        elif what == "apq":
            out = repr(a_pq(args["apq"]))
        elif what == "height":
            out = repr(height_shift(args["height"]))
        else:
            c = scaling_constants(args["constants"], sigma=args.get("sigma"), p=args.get("p"))
            out = json.dumps(c.as_dict(), sort_keys=True)
    except ValueError as exc:
        raise CliError(str(exc))
    _write(args.get("out"), out + "\n")
    return 0


def cmd_kernels(args):
    from .kernels import PRELIMIT_FAMILIES, KernelModel, kernel_matrix

    try:
        model = KernelModel(args["family"], t=args.get("t"), sigma=args.get("sigma"),
                            a=args.get("a"), n=args.get("n"))
    except ValueError as exc:
        raise CliError(str(exc))
    grid = parse_grid(args["grid"])
    if model.family in PRELIMIT_FAMILIES:
        # prelimit kernels live on the lattice I_t
        grid = np.unique(model.snap(grid))
    mat = kernel_matrix(model, grid)
    buf = io.StringIO()
    buf.write("\n".join(header_lines(args)) + "\n")
    buf.write("s1,s2,value\n")
    for i, s1 in enumerate(grid):
        for j, s2 in enumerate(grid):
            buf.write(f"{float(s1)!r},{float(s2)!r},{float(mat[i, j])!r}\n")
    _write(args.get("out"), buf.getvalue())
    return 0


def _orient(samples, resolved):
    from .shifts import canonical_model

    model = canonical_model(resolved["model"])
    if model in ("png_droplet", "png_flat"):
        return samples.astype(float)
    ref = -2.0 * float(resolved["n"]) if model == "tasep_alt" else 0.0
    return -(samples.astype(float) - ref)


def cmd_fit(args):
    from .analysis import fit_protocol
    from .fredholm import LimitLaw

    paths = args["samples"]
    times = args.get("times")
    if times is not None:
        times = [float(v) for v in times.split(",")]
        if len(times) != len(paths):
            raise CliError("--times needs one value per samples file")
    batches = []
    for i, path in enumerate(paths):
        samples, resolved = read_samples(path)
        t = times[i] if times is not None else resolved.get("t")
        if t is None:
            raise CliError(f"{path}: time unknown; pass --times")
        heights = _orient(samples, resolved) if "model" in resolved else samples.astype(float)
        batches.append((float(t), heights))
    try:
        report = fit_protocol(batches, epsilon=args["epsilon"], law=LimitLaw(args["law"]))
    except ValueError as exc:
        raise CliError(str(exc))
    body = json.loads(report.to_json())
    body["header"] = header_lines(args)[0][2:]
    _write(args.get("out"), json.dumps(body, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_report(args):
    from .analysis import compare_cdf, make_distribution, table_csv, table_report
    from .fredholm import LimitLaw, law_cdf
    from .shifts import scaling_constants

    samples, resolved = read_samples(args["samples"])
    model = args.get("model") or resolved.get("model")
    t = args.get("t") or resolved.get("t")
    n = args.get("n") or resolved.get("n")
    if model is None or t is None:
        raise CliError("report needs --model and --t (or a samples header)")
    sigma = args.get("sigma")
    if sigma is None and n is not None and t:
        sigma = float(n) / float(t)
    p = args.get("p") or resolved.get("p")
    try:
        consts = scaling_constants(model, sigma=sigma, p=p, a=args.get("a"))
    except ValueError as exc:
        raise CliError(str(exc))
    law_kind = args.get("law") or ("goe2" if consts.model in ("tasep_alt", "png_flat") else "gue")
    law = LimitLaw(law_kind)
    dist = make_distribution(samples, consts, float(t), n=n)
    table = table_report(dist, law)
    gap = compare_cdf(dist, law, args["shift"])
    header = header_lines({**args, "model": model, "t": t, "n": n, "sigma": sigma, "p": p})
    _write(args.get("out"), "\n".join(header) + "\n" + table_csv(table))
    if args.get("json_out"):
        _write(args["json_out"], json.dumps({**table, "cdf_gap": gap, "shift": args["shift"],
                                             "header": header[0][2:]}, indent=2) + "\n")
    if args.get("cdf_out"):
        shift = 0.5 * dist.delta if args["shift"] == "midpoint" else 0.0
        buf = io.StringIO()
        buf.write("\n".join(header) + "\n")
        buf.write("s,empirical_cdf,density,law_cdf\n")
        dens = dist.density()
        for s, d, f in zip(dist.sites, dens, np.cumsum(dist.mass)):
            if -10.0 <= s + shift <= 10.0:
                buf.write(f"{float(s)!r},{float(f)!r},{float(d)!r},{law_cdf(law, s + shift)!r}\n")
        _write(args["cdf_out"], buf.getvalue())
    return 0


# ---------------------------------------------------------------------------
# parser


DEFAULTS = {
    "simulate": {"runs": 1, "seed": 0, "p": 1.0},
    "tw": {"law": "gue", "nodes": 80},
    "shift": {},
    "kernels": {},
    "fit": {"law": "gue", "epsilon": 1.0},
    "report": {"shift": "midpoint"},
}


def _build_parser():
    sup = argparse.SUPPRESS
    parser = _Parser(prog="kpzshift", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kpzshift {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", default=False)
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def sub(name, help_):
        p = subs.add_parser(name, help=help_, argument_default=sup)
        p.add_argument("--config", help="flat key = value file; flags override it")
        p.add_argument("--out", help="output path (default stdout)")
        return p

    p = sub("simulate", "run replicas and write run,observable CSV")
    p.add_argument("--model", required=False)
    p.add_argument("--t", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--workers", type=int)

    p = sub("tw", "tabulate a limit law (s,cdf,pdf)")
    p.add_argument("--law", choices=("gue", "goe2"))
    p.add_argument("--grid")
    p.add_argument("--nodes", type=int)

    p = sub("shift", "shift constants")
    p.add_argument("--pc", action="store_true")
    p.add_argument("--apq", type=float)
    p.add_argument("--height", type=float)
    p.add_argument("--constants")
    p.add_argument("--sigma", type=float)
    p.add_argument("--p", type=float)

    p = sub("kernels", "dump a kernel on a grid (s1,s2,value)")
    p.add_argument("--family")
    p.add_argument("--t", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--grid")

    p = sub("fit", "multi-time fit of (v_inf, Gamma, a)")
    p.add_argument("samples", nargs="*")
    p.add_argument("--times", help="comma-separated times, one per samples file")
    p.add_argument("--law", choices=("gue", "goe2"))
    p.add_argument("--epsilon", type=float)

    p = sub("report", "moment table and CDF comparison for one samples file")
    p.add_argument("samples", nargs="?")
    p.add_argument("--model")
    p.add_argument("--t", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--law", choices=("gue", "goe2"))
    p.add_argument("--shift", choices=("midpoint", "none"))
    p.add_argument("--json-out")
    p.add_argument("--cdf-out")
    return parser, subs.choices


REQUIRED = {
    "simulate": ("model", "t"),
    "tw": ("grid",),
    "kernels": ("family", "grid"),
    "fit": ("samples",),
    "report": ("samples",),
}

COMMANDS = {
    "simulate": cmd_simulate,
    "tw": cmd_tw,
    "shift": cmd_shift,
    "kernels": cmd_kernels,
    "fit": cmd_fit,
    "report": cmd_report,
}


def _glue_grid(argv):
    """Let '--grid -5:2:0.05' through (argparse takes '-5:...' for a flag)."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok == "--grid":
            nxt = next(it, None)
            out.append(tok if nxt is None else f"--grid={nxt}")
        else:
            out.append(tok)
    return out


def resolve(argv):
    """Parse argv and merge defaults < config file < flags."""
    argv = _glue_grid(argv)
    parser, subparsers = _build_parser()
    ns = vars(parser.parse_args(argv))
    cmd = ns["command"]
    merged = dict(DEFAULTS[cmd])
    if "config" in ns:
        cfg = read_config(ns["config"])
        cfg_ns = vars(subparsers[cmd].parse_args(_config_tokens(cfg)))
        merged.update(cfg_ns)
    merged.update(ns)
    for key in REQUIRED.get(cmd, ()):
        if merged.get(key) in (None, [], ""):
            raise CliError(f"{cmd} needs --{key.replace('_', '-')}")
    return merged


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    try:
        args = resolve(argv)
        if args.get("verbose"):
            log.setLevel(logging.INFO)
        log.info("resolved config %s (sha256 %s)", json.dumps(args, sort_keys=True), config_hash(args))
        return COMMANDS[args["command"]](args)
    except CliError as exc:
        print(f"kpzshift: error: {exc}", file=sys.stderr)
        return 2
    except (RangeError, ValueError) as exc:
        print(f"kpzshift: error: {exc}", file=sys.stderr)
        return 2
    except (AccuracyError, DivergenceError, SimulationError) as exc:
        print(f"kpzshift: accuracy failure: {exc}", file=sys.stderr)
        return 1
