"""Command-line entry point.

Subcommands: bound, norm, recover, phase, width, verify-lemmas, noise-sweep,
wavelet-demo, gen.  Exit codes: 0 success, 1 recovery or assertion failure,
2 usage error.  Identical flags and seed produce identical output files
(wall-clock runtime columns in sweep CSVs aside).
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .atoms import atomic_norm, dual_norm
from .bounds import bound_report, theorem2_bound
from .experiments import (
    ScenarioSpec,
    estimate_width_ub,
    generate_signal,
    run_noise_sweep,
    run_phase,
    verify_ball_bound,
    verify_chisq_max,
    verify_projection_energy,
)
from .solver import MeasurementEnsemble, recover
from .subspaces import (
    GroupStructure,
    SupportSet,
    from_groups,
    load_model,
    orthonormalize,
    random_perpendicular_model,
    save_model,
    two_line_model,
)
from .wavelets import (
    blocks_signal,
    haar_analyze,
    measure_group_sparsity,
    piecewise_constant_signal,
    recover_in_wavelet_domain,
)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _write_json(doc: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _emit(doc: dict, args) -> None:
    if getattr(args, "out", None):
        _write_json(doc, args.out)
    if getattr(args, "json", False):
        print(json.dumps(doc, sort_keys=True, indent=2))


def _load_vector(path) -> np.ndarray:
    return np.loadtxt(path, dtype=float, ndmin=1)


def _save_vector(x, path) -> None:
    np.savetxt(path, np.asarray(x, dtype=float), fmt="%.17g")


def _load_config(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _cmd_bound(args) -> int:
    report = bound_report(
        M=args.M, k=args.k, B=args.B,
        sigma_star=args.sigma_star, sigma_full=args.sigma, kappa=args.kappa,
        s=args.s, p=args.p, epsilon=args.epsilon,
    )
    print(report.as_text())
    _emit(report.as_dict(), args)
    return 0


def _cmd_norm(args) -> int:
    model = load_model(args.model)
    x = _load_vector(args.vector)
    decomposition = atomic_norm(x, model)
    dual = dual_norm(x, model)
    print(f"atomic norm  {decomposition.value:.10g}")
    print(f"dual norm    {dual:.10g}")
    _emit({"atomic_norm": decomposition.value, "dual_norm": dual}, args)
    return 0


def _cmd_recover(args) -> int:
    model = load_model(args.model)
    x_true = _load_vector(args.signal)
    if x_true.shape[0] != model.p:
        raise ValueError(f"signal has length {x_true.shape[0]}, model expects {model.p}")
    phi = MeasurementEnsemble.gaussian(args.n, model.p, args.seed)
    y = phi.matrix @ x_true
    delta = args.delta
    if args.mode == "noisy":
        if delta is None or delta < 0:
            raise ValueError("noisy mode needs --delta >= 0")
        theta = _rng(args.seed + 1).standard_normal(args.n)
        theta *= delta / np.linalg.norm(theta)
        y = y + theta
    result = recover(y, phi, model, mode=args.mode, delta=delta, x_true=x_true)
    print(f"n={args.n} residual={result.residual:.3e} "
          f"rel_err={result.rel_err:.3e} lambda={result.lambda_selected:.3e} "
          f"iters={result.iterations} success={result.success}")
    _emit(result.as_dict(), args)
    return 0 if result.success else 1


def _scenario_from_config(cfg: dict, seed: int | None) -> ScenarioSpec:
    return ScenarioSpec(
        kind=cfg.get("kind", "no_overlap"),
        M=int(cfg.get("M", 0)),
        B=int(cfg.get("B", 0)),
        k=int(cfg.get("k", 1)),
        overlap=int(cfg.get("overlap", 0)),
        value_dist=cfg.get("value_dist", "uniform01"),
        seed=int(cfg.get("seed", 0) if seed is None else seed),
    )


def _cmd_phase(args) -> int:
    cfg = _load_config(args.config)
    spec = _scenario_from_config(cfg, args.seed)
    diagram = run_phase(
        spec,
        n_values=cfg["n_values"],
        trials=int(cfg.get("trials", 50)),
        method=cfg.get("method", "glasso"),
        seed=spec.seed,
        threads=args.threads,
    )
    for n, cell in diagram.cells().items():
        print(f"n={n:5d}  success={cell.success_rate:5.2f}  "
              f"mean_rel_err={cell.mean_rel_err:.3e}  trials={cell.trials}")
    if args.out:
        diagram.write_csv(args.out)
    return 0


def _cmd_width(args) -> int:
    cfg = _load_config(args.config)
    spec = _scenario_from_config(cfg, args.seed)
    trials = int(cfg.get("trials", 10_000))
    signal, structure = generate_signal(spec)
    estimate = estimate_width_ub(signal, structure, trials=trials, seed=spec.seed)
    bound = theorem2_bound(structure.M, signal.k, structure.B)
    ok = (estimate.mean_dist_sq
          <= estimate.construction_mean + 3 * estimate.stderr) and (
        estimate.construction_mean <= bound + 3 * estimate.construction_stderr)
    print(f"exact cone distance^2   {estimate.mean_dist_sq:10.2f} "
          f"(+/- {estimate.stderr:.2f})")
    print(f"proof construction      {estimate.construction_mean:10.2f} "
          f"(+/- {estimate.construction_stderr:.2f})")
    print(f"theorem2 bound          {bound:10.2f}")
    print(f"sandwich {'holds' if ok else 'VIOLATED'}")
    doc = {
        "mean_dist_sq": estimate.mean_dist_sq,
        "stderr": estimate.stderr,
        "construction_mean": estimate.construction_mean,
        "construction_stderr": estimate.construction_stderr,
        "theorem2_bound": bound,
        "trials": trials,
        "sandwich_ok": ok,
    }
    _emit(doc, args)
    return 0 if ok else 1


def _lemma_models(seed: int):
    disjoint = from_groups(GroupStructure(
        p=40, groups=tuple(tuple(range(5 * i, 5 * i + 5)) for i in range(8))))
    perp_even = random_perpendicular_model((4, 4, 4, 4, 4), seed=seed)
    perp_uneven = random_perpendicular_model((2, 5, 3, 6, 4), seed=seed + 1)
    return disjoint, perp_even, perp_uneven


def _random_general_model(seed: int):
    rng = _rng(seed)
    raw = [rng.standard_normal((10, d)) for d in (3, 4, 3, 4)]
    return orthonormalize(raw)


def _cmd_verify_lemmas(args) -> int:
    trials = args.trials
    failures = 0

    def report(name: str, passed: bool, detail: str) -> None:
        nonlocal failures
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
        failures += 0 if passed else 1

    for L, d in ((10, 3), (100, 20), (2, 1)):
        chk = verify_chisq_max(L, d, trials=trials, seed=args.seed)
        report(f"chisq-max L={L} d={d}", chk.passed,
               f"mean {chk.empirical_mean:.4f} <= bound {chk.bound:.4f}")

    ball_trials = min(trials, 1000)
    for name, model in zip(("disjoint", "perp-even", "perp-uneven"),
                           _lemma_models(args.seed)):
        support = SupportSet(tuple(range(3)))
        chk = verify_ball_bound(model, support, trials=ball_trials, seed=args.seed)
        report(f"ball-bound {name}", chk.passed,
               f"max ratio {chk.max_ratio:.6f} <= {chk.bound:.6f}")

    proj_trials = min(trials, 20_000)
    disjoint, _, _ = _lemma_models(args.seed)
    proj_cases = (
        ("disjoint", disjoint, np.arange(6)),
        ("two-line-60deg", two_line_model(math.pi / 3), np.arange(2)),
        ("random", _random_general_model(args.seed), np.arange(5)),
    )
    for name, model, S in proj_cases:
        chk = verify_projection_energy(model, S, trials=proj_trials, seed=args.seed)
        report(f"projection-energy {name}", chk.passed,
               f"mc {chk.mc_mean:.4f} ~ exact {chk.exact:.4f} <= {chk.upper:.4f}")

    return 0 if failures == 0 else 1


def _cmd_noise_sweep(args) -> int:
    cfg = _load_config(args.config)
    seed = int(cfg.get("seed", 0) if args.seed is None else args.seed)
    try:
        result = run_noise_sweep(
            sigmas=cfg.get("sigmas", [0.0, 0.05, 0.1, 0.25]),
            trials=int(cfg.get("trials", 20)),
            p=int(cfg.get("p", 1024)),
            n=int(cfg.get("n", 256)),
            jumps=int(cfg.get("jumps", 5)),
            seed=seed,
            threads=args.threads,
            require_ordering=False,
        )
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for row in result.rows:
        print(f"sigma={row.sigma:8.4f}  {row.method:6s}  "
              f"rel_err={row.mean_rel_err:.4e} (+/- {row.stderr:.1e})")
    if args.out:
        result.write_csv(args.out)
    ok = all(result.ordering_ok)
    print(f"ordering {'holds' if ok else 'VIOLATED'} at every sigma")
    return 0 if ok else 1


def _cmd_wavelet_demo(args) -> int:
    if args.signal == "blocks":
        signal = blocks_signal(args.p)
    else:
        signal = piecewise_constant_signal(args.p, 5, _rng(args.seed))
    coeffs = haar_analyze(signal)
    k = measure_group_sparsity(coeffs)
    bound = theorem2_bound(args.p - 2, k, 2) if k > 0 else 0.0
    if args.n == "auto":
        n = int(math.ceil(bound))
    else:
        n = int(args.n)
    phi = MeasurementEnsemble.gaussian(n, args.p, args.seed)
    mode = "noisy" if args.delta is not None else "exact"
    result = recover_in_wavelet_domain(signal, phi, mode=mode, delta=args.delta)
    print(f"p={args.p} k={k} bound={bound:.1f} n={n} "
          f"rel_err={result.rel_err:.3e} success={result.success}")
    doc = {
        "p": args.p,
        "k": k,
        "theorem2_bound": bound,
        "n": n,
        "rel_err": result.rel_err,
        "residual": result.residual,
        "success": result.success,
        "x_hat": result.x_hat.tolist(),
    }
    _emit(doc, args)
    return 0 if result.success else 1


def _cmd_gen(args) -> int:
    spec = ScenarioSpec(kind=args.scenario, M=args.M, B=args.B, k=args.k,
                        overlap=args.overlap, value_dist=args.dist, seed=args.seed)
    signal, structure = generate_signal(spec)
    if args.out_model:
        save_model(structure, args.out_model)
    if args.out_signal:
        _save_vector(signal.x, args.out_signal)
    print(f"{spec.label()}: p={structure.p} s={signal.s} active={list(signal.active)}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unionsparse",
        description="Union-of-subspaces sparse recovery: solvers, bounds, experiments",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="base RNG seed")
    common.add_argument("--out", type=str, default=None, help="output file")
    common.add_argument("--json", action="store_true", help="print JSON to stdout")
    common.add_argument("--threads", type=int, default=1, help="harness parallelism")

    p_bound = sub.add_parser("bound", parents=[common], help="evaluate measurement bounds")
    p_bound.add_argument("--M", type=int, required=True)
    p_bound.add_argument("--k", type=int, required=True)
    p_bound.add_argument("--B", type=int, required=True)
    p_bound.add_argument("--sigma-star", dest="sigma_star", type=float, default=1.0)
    p_bound.add_argument("--sigma", type=float, default=1.0)
    p_bound.add_argument("--kappa", type=float, default=1.0)
    p_bound.add_argument("--epsilon", type=float, default=None)
    p_bound.add_argument("--s", type=int, default=None)
    p_bound.add_argument("--p", type=int, default=None)
    p_bound.set_defaults(func=_cmd_bound)

    p_norm = sub.add_parser("norm", parents=[common], help="atomic and dual norm of a vector")
    p_norm.add_argument("--vector", required=True)
    p_norm.add_argument("--model", required=True)
    p_norm.set_defaults(func=_cmd_norm)

    p_rec = sub.add_parser("recover", parents=[common], help="measure and recover a signal")
    p_rec.add_argument("--model", required=True)
    p_rec.add_argument("--signal", required=True)
    p_rec.add_argument("--n", type=int, required=True)
    p_rec.add_argument("--mode", choices=("exact", "noisy"), default="exact")
    p_rec.add_argument("--delta", type=float, default=None)
    p_rec.set_defaults(func=_cmd_recover, seed=0)

    p_phase = sub.add_parser("phase", parents=[common], help="phase-transition sweep")
    p_phase.add_argument("--config", required=True, help="JSON scenario config")
    p_phase.set_defaults(func=_cmd_phase)

    p_width = sub.add_parser("width", parents=[common], help="Monte-Carlo width sandwich")
    p_width.add_argument("--config", required=True, help="JSON scenario config")
    p_width.set_defaults(func=_cmd_width)

    p_ver = sub.add_parser("verify-lemmas", parents=[common],
                           help="numerical oracles for the appendix lemmas")
    p_ver.add_argument("--trials", type=int, default=100_000)
    p_ver.set_defaults(func=_cmd_verify_lemmas, seed=0)

    p_noise = sub.add_parser("noise-sweep", parents=[common],
                             help="lasso vs group lasso across noise levels")
    p_noise.add_argument("--config", required=True, help="JSON sweep config")
    p_noise.set_defaults(func=_cmd_noise_sweep)

    p_wav = sub.add_parser("wavelet-demo", parents=[common],
                           help="wavelet-domain recovery of a test signal")
    p_wav.add_argument("--signal", choices=("blocks", "piecewise"), default="blocks")
    p_wav.add_argument("--p", type=int, default=1024)
    p_wav.add_argument("--n", default="auto", help="measurement count or 'auto'")
    p_wav.add_argument("--delta", type=float, default=None)
    p_wav.set_defaults(func=_cmd_wavelet_demo, seed=0)

    p_gen = sub.add_parser("gen", parents=[common], help="generate a scenario signal and model")
    p_gen.add_argument("--scenario", choices=("no_overlap", "partial_overlap", "random_overlap"),
                       default="no_overlap")
    p_gen.add_argument("--M", type=int, required=True)
    p_gen.add_argument("--B", type=int, required=True)
    p_gen.add_argument("--k", type=int, required=True)
    p_gen.add_argument("--overlap", type=int, default=0)
    p_gen.add_argument("--dist", choices=("uniform01", "uniform_pm1"), default="uniform01")
    p_gen.add_argument("--out-model", dest="out_model", default=None)
    p_gen.add_argument("--out-signal", dest="out_signal", default=None)
    p_gen.set_defaults(func=_cmd_gen, seed=0)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
