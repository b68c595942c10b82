"""Command-line entry point: ``shotnoise <command> --config run.yaml``.

Exit codes: 0 success, 2 configuration or schema error, 3 refused
mathematical precondition, 4 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import warnings

import numpy as np
from pydantic import ValidationError

from . import laws, regularity, sde, series, spectral
from .config import ConfigError, RunConfig, load_config, parse_grid
from .kernels import (DifferenceKernel, PoissonIntegralError, ScaledKernel, TimeScaledKernel,
                      TimeWindow, _jsonable, centering_a, l2_condition, time_function_from_spec)
from .stochastic import (RngStream, beta_order_stat_cdf, sample_conditional_order_stats_batch)

log = logging.getLogger("shotnoise")

EXIT_OK, EXIT_CONFIG, EXIT_REFUSED, EXIT_NONCONVERGED = 0, 2, 3, 4

# one stream id per command so outputs of different commands never share draws
STREAMS = {"simulate": 1, "check": 2, "converge": 3, "sde": 4, "condlaw": 5}


class NonConvergence(RuntimeError):
    pass


def _dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _emit_text(text: str, out) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _out_path(args, cfg: RunConfig | None):
    return args.out or (cfg.out if cfg is not None else None)


def _require_out(args, cfg):
    out = _out_path(args, cfg)
    if not out:
        raise ConfigError("this command writes CSV and needs --out or a top-level 'out' key")
    return out


def _stream(cfg: RunConfig, command: str) -> RngStream:
    return RngStream(cfg.seed, STREAMS[command])


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(cfg: RunConfig, args) -> int:
    k, sigma = cfg.build_kernel(), cfg.build_sigma()
    sec = cfg.simulate
    n = args.n or sec.n
    out = _require_out(args, cfg)
    stream = _stream(cfg, "simulate")
    if sec.mode == "full":
        sc = series.SeriesConfig(k, sigma, cfg.rate, cfg.truncation.horizon,
                                 cfg.truncation.epsilon, cfg.truncation.centering)
        values = series.sample_full_batch(sc, n, stream, cfg.threads)
        series.write_batch_csv(out, values)
    else:
        values, counts = series.sample_truncated_batch(k, sec.t, sigma, cfg.rate, n, stream, cfg.threads)
        series.write_batch_csv(out, values, counts)
    return EXIT_OK


def cmd_charfn(cfg: RunConfig, args) -> int:
    k, sigma = cfg.build_kernel(), cfg.build_sigma()
    u = np.union1d(parse_grid(args.grid or cfg.charfn.grid), [0.0])
    cf = spectral.charfn(k, sigma, cfg.rate, u, tol=cfg.charfn.tol)
    cf.to_csv(_require_out(args, cfg))
    return EXIT_OK


def cmd_density(cfg: RunConfig, args) -> int:
    k, sigma = cfg.build_kernel(), cfg.build_sigma()
    sec = cfg.density
    count = int(round(sec.u_max / sec.u_step)) + 1
    u = np.arange(count) * sec.u_step
    cf = spectral.charfn(k, sigma, cfg.rate, u, tol=sec.tol)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = spectral.invert_density(cf, parse_grid(sec.x_grid), method=sec.method, strict=args.strict)
    res.to_csv(_require_out(args, cfg))
    sys.stdout.write(_dump_json(res.report()))
    return EXIT_OK


def _read_values(path):
    values, _ = series.read_batch_csv(path)
    return values


def cmd_tv(cfg: RunConfig | None, args) -> int:
    sec = cfg.tv if cfg is not None else None
    file_a = args.file_a or (sec.file_a if sec else None)
    file_b = args.file_b or (sec.file_b if sec else None)
    if not file_a or not file_b:
        raise ConfigError("tv needs two sample files")
    a, b = _read_values(file_a), _read_values(file_b)
    binning = args.binning or (sec.binning if sec else "auto")
    if isinstance(binning, str) and binning != "auto":
        binning = [float(v) for v in binning.split(",")]
    if isinstance(binning, str):
        la, lb = laws.estimate_paired(a, b)
    else:
        la, lb = laws.estimate(a, binning), laws.estimate(b, binning)
    report = {
        "tv": laws.tv_distance(la, lb),
        "noise_floor": laws.noise_floor(la, lb),
        "n_a": la.n,
        "n_b": lb.n,
        "atom_a": la.atom_mass,
        "atom_b": lb.atom_mass,
        "bins": max(la.bin_count, lb.bin_count),
        "convention": "unnormalized, values in [0, 2]",
    }
    if args.kde or (sec is not None and sec.kde):
        report["kde_l1"] = laws.kde_l1_distance(a, b)
    _emit_text(_dump_json(report), _out_path(args, cfg))
    return EXIT_OK


def cmd_check(cfg: RunConfig, args) -> int:
    sec = cfg.check
    condition = args.condition or sec.condition
    stream = _stream(cfg, "check")
    converged = True
    if condition in ("l2", "centering"):
        k, sigma = cfg.build_kernel(), cfg.build_sigma()
        fn = l2_condition if condition == "l2" else centering_a
        rep = fn(k, sigma, cfg.rate, tol=sec.tol)
        if condition == "l2" and rep.diverged:
            converged = True    # divergence is a result, not a numerical failure
        else:
            converged = rep.converged
        payload = rep.to_dict()
    elif condition == "tderiv":
        rep = regularity.check_time_derivative(cfg.build_kernel(), sec.t_range, cfg.build_sigma(), sec.n,
                                               sec.eps, stream, sec.threshold)
        payload = rep.to_dict()
    elif condition == "xjac":
        rep = regularity.check_space_jacobian(cfg.build_kernel(), sec.t_range, cfg.build_sigma(), sec.n,
                                              sec.eps, stream, sec.threshold)
        payload = rep.to_dict()
    elif condition == "davydov":
        g = time_function_from_spec(sec.g)
        g_seq = [time_function_from_spec(s) for s in sec.g_seq]
        rep = regularity.check_davydov(g_seq, g, sec.interval, eps=sec.eps, threshold=sec.threshold)
        payload = rep.to_dict()
    else:
        samples = regularity.pushforward_samples(cfg.build_kernel(), sec.t, cfg.build_sigma(), sec.n,
                                                 stream, cfg.threads)
        payload = regularity.convolution_power_diagnostic(samples, sec.p).to_dict()
    _emit_text(_dump_json(payload), _out_path(args, cfg))
    if args.strict and not converged:
        raise NonConvergence(f"{condition} did not converge")
    return EXIT_OK


def _kernel_sequence(h, kind: str, c: float, n: int):
    if kind == "scale":
        return ScaledKernel(h, 1.0 + c / n)
    if kind == "time_rate":
        return TimeScaledKernel(h, 1.0 + c / n)
    return h


def _decreasing(seq, slack=0.0):
    return all(b <= a + slack for a, b in zip(seq, seq[1:]))


def cmd_converge(cfg: RunConfig, args) -> int:
    h, sigma = cfg.build_kernel(), cfg.build_sigma()
    sec = cfg.converge
    out = _require_out(args, cfg)
    stream = _stream(cfg, "converge")
    truncated = sec.mode == "truncated"

    def wrap(k):
        return TimeWindow(k, sec.t) if truncated else k

    limit = wrap(h)
    a_limit = centering_a(limit, sigma, cfg.rate)
    kernels = {n: _kernel_sequence(h, sec.sequence.kind, sec.sequence.c, n) for n in sec.n_list}

    if truncated:
        def draw(k):
            return series.sample_truncated_batch(k, sec.t, sigma, cfg.rate, sec.samples, stream, cfg.threads)[0]
    else:
        horizon = cfg.truncation.horizon
        if horizon is None:
            horizon = max(series.SeriesConfig(k, sigma, cfg.rate, epsilon=cfg.truncation.epsilon)
                          .resolved_horizon() for k in [h, *kernels.values()])

        def draw(k):
            sc = series.SeriesConfig(k, sigma, cfg.rate, horizon, cfg.truncation.epsilon)
            return series.sample_full_batch(sc, sec.samples, stream, cfg.threads)

    base = draw(h)
    rows = []
    for n, hn in kernels.items():
        a_n = centering_a(wrap(hn), sigma, cfg.rate)
        cond2 = l2_condition(DifferenceKernel(wrap(hn), limit), sigma, cfg.rate)
        cond3, _ = regularity.pushforward_tv(hn, h, sec.t, sigma, sec.samples, stream, cfg.threads)
        la, lb = laws.estimate_paired(draw(hn), base)
        rows.append({
            "n": n,
            "cond1": abs(a_n.value - a_limit.value),
            "cond2": cond2.value,
            "cond3": cond3,
            "law_tv": laws.tv_distance(la, lb),
            "noise_floor": laws.noise_floor(la, lb),
            "atom": la.atom_mass,
        })
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = ["n", "cond1", "cond2", "cond3", "law_tv", "noise_floor", "atom"]
        w.writerow(cols)
        for r in rows:
            w.writerow([r["n"]] + [repr(float(r[c])) for c in cols[1:]])
    tvs = [r["law_tv"] for r in rows]
    floors = [r["noise_floor"] for r in rows]
    hyp = all(_decreasing([r[c] for r in rows], 1e-12) for c in ("cond1", "cond2"))
    verdict, notes = sde.tv_verdict(tvs, floors)
    summary = {
        "hypotheses_hold": hyp,
        "law_tv_decreases": verdict == "pass",
        "verdict": "pass" if hyp and verdict == "pass" else "fail",
        "notes": notes,
        "limit_centering": a_limit.value,
    }
    sys.stdout.write(_dump_json(summary))
    return EXIT_OK


def _deriv_check(cfg: RunConfig, stream: RngStream) -> dict:
    sec = cfg.sde
    drift = sde.drift_from_spec(sec.drift)
    sigma = cfg.build_sigma()
    rows, k = [], 0
    while len(rows) < sec.configurations:
        path = sde.simulate(drift, sec.x0, sec.rate, sigma, sec.t_end, sec.ode_tol, stream.substream(k))
        k += 1
        if path.jump_times.size == 0:
            continue
        if path.jump_times.size > 1 and path.jump_times[1] - path.jump_times[0] <= 2 * sec.fd_step:
            continue
        closed = sde.jump_time_derivative(drift, path)
        fd = sde.finite_difference_derivative(drift, path, sec.fd_step)
        row = {"T1": float(path.jump_times[0]), "jump": float(path.jumps[0]),
               "derivative": closed, "finite_difference": fd,
               "relative_error": abs(closed - fd) / max(abs(fd), 1e-300)}
        if isinstance(drift, sde.AffineDrift):
            exact = -drift.c1 * path.jumps[0] * math.exp(drift.c1 * (sec.t_end - path.jump_times[0]))
            row["affine_closed_form"] = float(exact)
            row["affine_relative_error"] = abs(closed - exact) / max(abs(exact), 1e-300)
        rows.append(row)
    return {"rows": rows, "max_relative_error": max(r["relative_error"] for r in rows)}


def cmd_sde(cfg: RunConfig, args) -> int:
    sec = cfg.sde
    mode = args.mode or sec.mode
    stream = _stream(cfg, "sde")
    drift = sde.drift_from_spec(sec.drift)
    sigma = cfg.build_sigma()
    if mode == "path":
        path = sde.simulate(drift, sec.x0, sec.rate, sigma, sec.t_end, sec.ode_tol, stream)
        path.to_csv(_require_out(args, cfg))
    elif mode == "deriv-check":
        _emit_text(_dump_json(_deriv_check(cfg, stream)), _out_path(args, cfg))
    else:
        drifts = [sde.ScaledDrift(drift, 1.0 + sec.drift_scale / n) for n in sec.indices]
        x0s = [sec.x0 + sec.x0_shift / n for n in sec.indices]
        table = sde.tv_convergence_experiment(drifts, drift, x0s, sec.x0, sec.t_end, sec.n, stream,
                                              rate=sec.rate, sigma=sigma, ode_tol=sec.ode_tol,
                                              indices=sec.indices, threads=cfg.threads)
        table.to_csv(_require_out(args, cfg))
        sys.stdout.write(_dump_json({"verdict": table.verdict, "notes": table.notes}))
    return EXIT_OK


def cmd_condlaw(cfg: RunConfig, args) -> int:
    k, sigma = cfg.build_kernel(), cfg.build_sigma()
    sec = cfg.condlaw
    i = sec.count if args.count is None else args.count
    stream = _stream(cfg, "condlaw")
    times, values = series.sample_truncated_given_count(k, sec.t, sigma, cfg.rate, i, sec.n,
                                                        stream.substream(0), cfg.threads)
    report = {"count": i, "t": sec.t, "n": int(values.size)}
    if i == 0:
        report["pure_atom"] = bool(np.all(values == 0.0))
        _emit_text(_dump_json(report), _out_path(args, cfg))
        return EXIT_OK
    n = values.size
    direct = sample_conditional_order_stats_batch(i, sec.t, n, stream.substream(1), cfg.threads)
    crit1, crit2 = laws.ks_critical(n), laws.ks_critical(n, n)
    arrivals = []
    for j in range(i):
        one = laws.ks_statistic(times[:, j], beta_order_stat_cdf(j + 1, i, sec.t))
        two = laws.ks_two_sample(times[:, j], direct[:, j])
        arrivals.append({"order": j + 1, "ks_beta": one, "ks_direct": two,
                         "pass": bool(one < crit1 and two < crit2)})
    single = regularity.pushforward_samples(k, sec.t, sigma, n * i, stream.substream(2), cfg.threads)
    conv = single.reshape(n, i).sum(axis=1)
    ks_val = laws.ks_two_sample(values, conv)
    report.update({
        "critical_one_sample": crit1,
        "critical_two_sample": crit2,
        "arrivals": arrivals,
        "value_vs_convolution": {"ks": ks_val, "pass": bool(ks_val < crit2)},
    })
    _emit_text(_dump_json(report), _out_path(args, cfg))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate, "charfn": cmd_charfn, "density": cmd_density, "tv": cmd_tv,
    "check": cmd_check, "converge": cmd_converge, "sde": cmd_sde, "condlaw": cmd_condlaw,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shotnoise", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="YAML run configuration")
        p.add_argument("--out", help="output path (overrides the config's 'out')")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--threads", type=int, help="worker threads; results do not depend on it")
        p.add_argument("--strict", action="store_true", help="turn warnings and non-convergence into errors")
        return p

    p = common(sub.add_parser("simulate", help="draw the series or the truncated series"))
    p.add_argument("--n", type=int, help="number of draws")
    p = common(sub.add_parser("charfn", help="analytic characteristic function on a grid"))
    p.add_argument("--grid", help="lo:hi:count")
    common(sub.add_parser("density", help="density of the continuous part by Fourier inversion"))
    p = common(sub.add_parser("tv", help="histogram total variation between two sample files"), False)
    p.add_argument("file_a", nargs="?")
    p.add_argument("file_b", nargs="?")
    p.add_argument("--binning", help="'auto' or comma-separated edges")
    p.add_argument("--kde", action="store_true", help="add the KDE L1 cross-check")
    p = common(sub.add_parser("check", help="existence or regularity condition report"))
    p.add_argument("--condition", choices=["l2", "centering", "tderiv", "xjac", "davydov", "convpow"])
    common(sub.add_parser("converge", help="convergence table over a kernel sequence"))
    p = common(sub.add_parser("sde", help="jump SDE paths, derivative check, TV convergence"))
    p.add_argument("--mode", choices=["path", "deriv-check", "converge"])
    p = common(sub.add_parser("condlaw", help="laws conditional on the arrival count"))
    p.add_argument("--count", type=int)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config) if args.config else None
        if cfg is not None:
            updates = {}
            if args.seed is not None:
                updates["seed"] = args.seed
            if args.threads is not None:
                updates["threads"] = args.threads
            if updates:
                cfg = RunConfig.model_validate({**cfg.model_dump(), **updates})
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (series.SeriesPreconditionError, spectral.SpectralPreconditionError,
            spectral.InversionBoundaryError, sde.NoJumpError, PoissonIntegralError) as exc:
        log.error("refused: %s", exc)
        return EXIT_REFUSED
    except (NonConvergence, sde.SdeTruncationError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NONCONVERGED
    except ValidationError as exc:
        # overrides such as --seed are validated after loading
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
