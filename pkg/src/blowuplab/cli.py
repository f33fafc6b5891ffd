"""Command line front end: ``blowuplab {solve,certify,analyze,proptest}``.

Exit codes: 0 success, 2 non-convergence, 3 invalid configuration or input,
4 internal invariant violation, 5 failed certificate or negative margin.
"""
from __future__ import annotations

import argparse
import os
import sys

from .errors import (BlowupLabError, ConfigError, InvariantViolation, NonConvergenceError,
                     SearchError)

EXIT_OK, EXIT_NONCONVERGENCE, EXIT_CONFIG, EXIT_INVARIANT, EXIT_CERTIFICATE = 0, 2, 3, 4, 5
EXIT_CODES = {NonConvergenceError: EXIT_NONCONVERGENCE, ConfigError: EXIT_CONFIG,
              InvariantViolation: EXIT_INVARIANT, SearchError: EXIT_CERTIFICATE}


def exit_code_for(exc: BaseException) -> int:
    for cls, code in EXIT_CODES.items():
        if isinstance(exc, cls):
            return code
    return EXIT_INVARIANT


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    if n < 1:
        raise ConfigError(f"--threads must be positive, got {n}")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _out_dir(args, cfg):
    from pathlib import Path
    out = args.out or (cfg.raw.get("output", {}).get("directory") if cfg else None) or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _emit_svg(args, cfg) -> bool:
    return bool(cfg.raw.get("output", {}).get("emit_svg", False)) if cfg else False


# ------------------------------------------------------------------ constants


def certificate_constants(op, nl, domain):
    """``(N1, N2)`` for ``N1 d^-beta <= f(u) <= N2 d^-beta`` from the barrier formulas.

    Power: ``N2 = N0^p`` (Keller-Osserman) and ``N1 = c1^p`` from the singular
    barrier when it exists.  Exponential with ``a != 1`` goes through the
    scaling ``v(y) = a u(y / sqrt a)``, under which ``e^{au} d^2 = e^v d_y^2 / a``.
    """
    from .analysis import diameter
    from .barriers import convex_log_lower, keller_osserman_exp, keller_osserman_power, singular_lower
    from .errors import OutOfRangeError

    if nl.is_power:
        N2 = keller_osserman_power(2, nl.p, op.lam, op.Lam, op.K).params["N2"]
        try:
            N1 = singular_lower(2, nl.p, op.lam, op.Lam, op.K).params["N1"]
        except OutOfRangeError:
            N1 = None
        return N1, N2
    a = nl.a
    K = op.K / a
    N2 = keller_osserman_exp(2, op.lam, op.Lam, K).params["N2"] / a
    try:
        N1 = convex_log_lower(2, op.lam, K, diameter(domain) * a**0.5)[2].params["N1"] / a
    except SearchError:
        N1 = None
    return N1, N2


# ---------------------------------------------------------------------- solve


def cmd_solve(args) -> int:
    import numpy as np

    from .analysis import (BlowupProblem, check_two_sided, diameter, fit_boundary_rate, log_f,
                           uniqueness_experiment)
    from .barriers import rescale_exponential
    from .config import load_config
    from .export import write_heatmap_svg, write_json, write_solution_csv
    from .geometry import build_grid
    from .nonlinearity import NonlinearitySpec
    from .operators import discretize
    from .solver import solve_blowup_exhaustion, solve_blowup_ladder, transformed_residual_u

    cfg = load_config(args.config, args.seed)
    domain, nl, h = cfg.domain(), cfg.nonlinearity(), cfg.h
    op = cfg.operator(domain)
    solver = cfg.section("solver")
    ladder = dict(solver.get("ladder", {}))
    ladder.update(solver.get("newton", {}))
    ex = dict(solver.get("exhaustion", {}))
    analysis = cfg.section("analysis")
    uniq = dict(analysis.get("uniqueness", {}))
    out = _out_dir(args, cfg)

    # e^{au} is solved as e^v on sqrt(a) Omega and pulled back
    s, a = 1.0, 1.0
    dom_s, op_s, nl_s = domain, op, nl
    if not nl.is_power and nl.a != 1.0:
        a = nl.a
        s = a ** 0.5
        mapped = rescale_exponential(a, domain=domain, operator=op)
        dom_s, op_s, nl_s = mapped["domain"], mapped["operator"], NonlinearitySpec.exponential(1.0)
        for key in ("rho", "M0"):
            if key in ladder:
                ladder[key] = ladder[key] * (s if key == "rho" else a)
        if "offsets" in ex:
            ex["offsets"] = [o * s for o in ex["offsets"]]
        if "rho" in uniq:
            uniq["rho"] = uniq["rho"] * s
    h_s = h * s

    grid = build_grid(dom_s, h_s)
    dop = discretize(op_s, grid)
    report = {"seed": cfg.seed, "config": cfg.raw,
              "grid": {"h": h, "n_interior": grid.n_interior, "monotone": bool(dop.monotone),
                       "rescaled_by": a}}
    try:
        sol, rep = solve_blowup_ladder(grid, dop, nl_s, **ladder)
    except NonConvergenceError as exc:
        if exc.report is not None:
            report["solve"] = exc.report.to_dict()
        report["status"] = "non-converged"
        report["error"] = str(exc)
        write_json(out / "report.json", report)
        raise
    report["solve"] = rep.to_dict()
    pts, d = grid.points / s, grid.d / s
    u = sol.values / a
    res = transformed_residual_u(dop, nl_s, sol)
    write_solution_csv(out / "solution.csv", grid, u, res, points=pts, d=d)

    N1, N2 = certificate_constants(op, nl, domain)
    N1, N2 = analysis.get("N1", N1), analysis.get("N2", N2)
    report["rate_fit"] = fit_boundary_rate(u, d, nl, window=analysis.get("fit_window"), h=h,
                                           diam=diameter(domain)).to_dict()
    cert = check_two_sided(u, d, nl, N1=N1, N2=N2, rho=analysis.get("rho", 0.1),
                           slack=analysis.get("slack", 1.1), h=h, points=pts)
    report["bound_certificate"] = cert.to_dict()

    sub = dict(ladder)
    if "factor" in ex:
        sub["factor"] = ex["factor"]
    if "offsets" in ex:
        _, erep = solve_blowup_exhaustion(dom_s, op_s, nl_s, h_s, ex["offsets"], ladder=sub)
        report["exhaustion"] = erep.to_dict()
    if "uniqueness" in analysis:
        problem = BlowupProblem(dom_s, op_s, nl_s, h_s, ladder=ladder,
                                offsets=tuple(ex.get("offsets", ())), exhaustion_ladder=sub,
                                seed=cfg.seed)
        report["uniqueness"] = uniqueness_experiment(
            problem, tuple(uniq.get("paths", ("ladder", "exhaustion", "perturbed"))),
            uniq.get("rho", 0.1 * s)).to_dict()
    report["status"] = "converged"
    write_json(out / "report.json", report)
    if _emit_svg(args, cfg):
        with np.errstate(over="ignore"):
            ratio = np.exp(log_f(nl, u) + nl.beta * np.log(d))
        write_heatmap_svg(out / "u.svg", pts[:, 0], pts[:, 1], u, h, "u", log=nl.is_power)
        write_heatmap_svg(out / "ratio.svg", pts[:, 0], pts[:, 1], ratio, h, "f(u) d^beta")
    print(f"solve: converged after {len(rep.labels)} rungs; wrote {out / 'solution.csv'} and {out / 'report.json'}")
    if not cert.passed:
        print(f"solve: bound certificate failed (ratio range [{cert.min_ratio:.6g}, {cert.max_ratio:.6g}], "
              f"N1={N1}, N2={N2}, slack={cert.slack})", file=sys.stderr)
        return EXIT_CERTIFICATE
    return EXIT_OK


# -------------------------------------------------------------------- certify


def _draw_params(rng, ranges):
    n = int(rng.choice(ranges.get("n", [2, 3])))
    p_lo, p_hi = ranges.get("p", [1.0, 4.0])
    p = float(p_hi - (p_hi - p_lo) * rng.uniform())  # (p_lo, p_hi]
    L_lo, L_hi = ranges.get("Lam", [0.0, 4.0])
    Lam = float(L_hi - (L_hi - L_lo) * rng.uniform())
    l_lo, l_hi = ranges.get("lam", [0.0, 4.0])
    hi = min(l_hi, Lam)
    lam = float(hi - (hi - l_lo) * rng.uniform())
    K_lo, K_hi = ranges.get("K", [0.0, 1.0])
    K = float(rng.uniform(K_lo, K_hi))
    return {"n": n, "p": p, "lam": lam, "Lam": Lam, "K": K}


def build_barrier(name: str, prm: dict, scale: float = 1.0):
    """``(BarrierSpec, NonlinearitySpec, mode options)`` for one catalog entry."""
    from . import barriers as B
    from .nonlinearity import NonlinearitySpec

    n, lam, Lam, K = int(prm.get("n", 2)), prm.get("lam", 1.0), prm.get("Lam", 1.0), prm.get("K", 0.0)
    p = prm.get("p", 2.0)
    scaled = {"keller_osserman_power", "keller_osserman_exp", "singular_lower"}
    if scale != 1.0 and name not in scaled:
        raise ConfigError(f"constant_factor is supported for {sorted(scaled)}, not {name!r}")
    D = prm.get("D", 1.0)
    if name == "keller_osserman_power":
        return B.keller_osserman_power(n, p, lam, Lam, K, r=prm.get("r", 1.0), scale=scale), NonlinearitySpec.power(p), {}
    if name == "keller_osserman_exp":
        return B.keller_osserman_exp(n, lam, Lam, K, r=prm.get("r", 1.0), scale=scale), NonlinearitySpec.exponential(), {}
    if name == "singular_lower":
        return B.singular_lower(n, p, lam, Lam, K, scale=scale), NonlinearitySpec.power(p), {}
    if name == "exterior_ball_lower":
        res = B.exterior_ball_lower(n, p, lam, Lam, K, prm.get("delta", 0.25))
        return res.barrier, NonlinearitySpec.power(p), {}
    if name == "power_lower_subsolution":
        return B.power_lower_subsolution(n, p, lam, K, D), NonlinearitySpec.power(p), {}
    if name == "exp_lower_subsolution":
        return B.exp_lower_subsolution(n, lam, K, D)[2], NonlinearitySpec.exponential(), {}
    if name == "convex_log_lower":
        return B.convex_log_lower(n, lam, K, D)[2], NonlinearitySpec.exponential(), {}
    if name == "frozen_coeff_lower":
        w = prm.get("omega", 0.0)
        r1, spec = B.frozen_coeff_lower(n, p, K, lambda r: w * r)
        return spec, NonlinearitySpec.power(p), {"mode": "frozen"}
    raise ConfigError(f"unknown barrier {name!r}")


def run_certification(cert: dict, seed: int = 0) -> dict:
    """All margin reports of a ``certify`` section; ``all_pass`` summarizes them."""
    import numpy as np

    from .barriers import singular_gamma0, verify_barrier
    from .errors import OutOfRangeError

    names = cert["barriers"]
    n_samples = int(cert.get("n_samples", 10_000))
    scale = float(cert.get("constant_factor", 1.0))
    mode = cert.get("mode", "worst-case")
    rng = np.random.default_rng(seed)
    sweep = "ranges" in cert or "draws" in cert
    draws = [_draw_params(rng, cert.get("ranges", {})) for _ in range(int(cert.get("draws", 1)))] \
        if sweep else [dict(cert.get("params", {}))]
    reports, skipped, failures = [], [], []
    for k, prm in enumerate(draws):
        for name in names:
            if sweep and name == "singular_lower":
                if not singular_gamma0(prm["n"], prm["p"], prm["lam"], prm["Lam"]) > 0:
                    skipped.append({"draw": k, "barrier": name, "reason": "gamma0 <= 0"})
                    continue
            try:
                spec, nl, opts = build_barrier(name, prm, scale)
            except SearchError as exc:
                failures.append({"draw": k, "barrier": name, "status": "search-failed",
                                 "message": str(exc), "binding": exc.binding})
                continue
            except OutOfRangeError:
                if sweep:
                    skipped.append({"draw": k, "barrier": name, "reason": "parameter outside admissible range"})
                    continue
                raise
            rep = verify_barrier(spec, nl, mode=opts.get("mode", mode), n_samples=n_samples,
                                 seed=seed + k)
            d = rep.to_dict()
            d["draw"] = k
            reports.append(d)
    all_pass = not failures and all(r["status"] == "pass" for r in reports)
    worst = min(reports, key=lambda r: r["min_margin"]) if reports else None
    return {"reports": reports, "skipped": skipped, "search_failures": failures,
            "all_pass": all_pass, "n_reports": len(reports), "worst": worst}


def cmd_certify(args) -> int:
    from .config import load_config
    from .export import write_json

    cfg = load_config(args.config, args.seed)
    if "certify" not in cfg.raw:
        raise ConfigError("config has no 'certify' section")
    result = run_certification(cfg.raw["certify"], cfg.seed)
    out = _out_dir(args, cfg)
    write_json(out / "margins.json", result)
    if result["all_pass"]:
        print(f"certify: {result['n_reports']} margin reports, all nonnegative")
        return EXIT_OK
    bad = [r for r in result["reports"] if r["status"] != "pass"] + result["search_failures"]
    w = bad[0]
    print(f"certify: {len(bad)} failed certificate(s); first: {w.get('barrier')} "
          f"min_margin={w.get('min_margin')} at {w.get('argmin_point')}", file=sys.stderr)
    return EXIT_CERTIFICATE


# -------------------------------------------------------------------- analyze


def cmd_analyze(args) -> int:
    import numpy as np

    from .analysis import FitError, check_two_sided, fit_boundary_rate
    from .config import load_config
    from .export import read_solution_csv, write_heatmap_svg, write_json

    cfg = load_config(args.config, args.seed)
    out = _out_dir(args, cfg)
    path = args.csv or (out / "solution.csv")
    data = read_solution_csv(path)
    domain, nl = cfg.domain(), cfg.nonlinearity()
    op = cfg.operator(domain)
    h = cfg.h
    analysis = cfg.section("analysis")
    N1, N2 = certificate_constants(op, nl, domain)
    N1, N2 = analysis.get("N1", N1), analysis.get("N2", N2)
    from .analysis import diameter
    report = {"seed": cfg.seed, "source": str(path)}
    try:
        fit = fit_boundary_rate(data["u"], data["d"], nl, window=analysis.get("fit_window"), h=h,
                                diam=diameter(domain))
        report["rate_fit"] = fit.to_dict()
    except FitError as exc:
        report["rate_fit"] = {"error": str(exc), "witness": exc.witness}
    pts = np.column_stack([data["x"], data["y"]])
    cert = check_two_sided(data["u"], data["d"], nl, N1=N1, N2=N2, rho=analysis.get("rho", 0.1),
                           slack=analysis.get("slack", 1.1), h=h, points=pts)
    report["bound_certificate"] = cert.to_dict()
    write_json(out / "analysis.json", report)
    if _emit_svg(args, cfg):
        from .analysis import log_f
        with np.errstate(over="ignore", divide="ignore"):
            ratio = np.exp(log_f(nl, data["u"]) + nl.beta * np.log(data["d"]))
        write_heatmap_svg(out / "u.svg", data["x"], data["y"], data["u"], h, "u", log=nl.is_power)
        write_heatmap_svg(out / "ratio.svg", data["x"], data["y"], ratio, h, "f(u) d^beta")
    ok = cert.passed and "error" not in report["rate_fit"]
    print(f"analyze: certificate {'passed' if ok else 'FAILED'} "
          f"(ratio range [{cert.min_ratio:.6g}, {cert.max_ratio:.6g}], N1={N1}, N2={N2}, slack={cert.slack})")
    return EXIT_OK if ok else EXIT_CERTIFICATE


# ------------------------------------------------------------------- proptest


def cmd_proptest(args) -> int:
    from .analysis import comparison_suite
    from .config import config_from_dict, load_config
    from .export import write_json
    from .nonlinearity import NonlinearitySpec

    cfg = load_config(args.config, args.seed) if args.config else config_from_dict({}, args.seed)
    pt = cfg.section("proptest")
    rep = comparison_suite(pt.get("operators", 200), NonlinearitySpec.power(pt.get("p", 2.0)),
                           pt.get("trials_per_operator", 2), seed=cfg.seed,
                           mutant=pt.get("mutant", True))
    out = _out_dir(args, cfg)
    write_json(out / "proptest.json", {"seed": cfg.seed, "comparison_suite": rep.to_dict()})
    ok = rep.violations == 0 and rep.touching_violations == 0 and rep.mutant_caught is not False
    print(f"proptest: {rep.operators} operators, {rep.trials} trials, {rep.violations} violations, "
          f"mutant caught: {rep.mutant_caught}")
    return EXIT_OK if ok else EXIT_INVARIANT


# ----------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blowuplab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (("solve", True), ("certify", True), ("analyze", True), ("proptest", False)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=needs_config, help="JSON run configuration")
        p.add_argument("--out", help="output directory (default: output.directory or ./out)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, help="thread count for numerical libraries")
        if name == "analyze":
            p.add_argument("--csv", help="solution CSV (default: <out>/solution.csv)")
    return parser


COMMANDS = {"solve": cmd_solve, "certify": cmd_certify, "analyze": cmd_analyze, "proptest": cmd_proptest}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        _set_threads(args.threads)
        return COMMANDS[args.command](args)
    except BlowupLabError as exc:
        code = exit_code_for(exc)
        print(f"{args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code
    except Exception as exc:  # unexpected failures are internal errors
        print(f"{args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
