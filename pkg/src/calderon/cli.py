"""Command line orchestration: forward | scatter | reconstruct | stability |
selftest.

Every command writes a manifest (config, hash, library versions, result
summary) into the output directory.  Timings go to a separate timings.json so
that repeated seeded runs produce bit-identical manifests, CSVs, and field
dumps.  Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .domain import ball_domain
from .errors import CalderonError, ConfigError
from .families import build_conductivity
from .forward import (assemble_dtn, conductivity_to_potential,
                      dtn_operator_norm)
from .grid import Grid
from .recon import (default_k_schedule, lowpass_field, lowpass_invert,
                    recover_gamma, scattering_grid)
from .stability import dtn_distance, stability_sweep
from .storage import save_dtn, save_field


def _setup(cfg: RunConfig):
    grid = Grid(cfg.grid_n, cfg.box_halfwidth)
    domain = ball_domain(grid, cfg.domain_radius_frac * cfg.box_halfwidth,
                         cfg.collar_frac * cfg.box_halfwidth)
    gamma = build_conductivity(cfg.family, grid, cfg.family_params)
    return grid, domain, gamma


def _write_manifest(out: Path, cfg: RunConfig, command: str, results: dict,
                    timings: dict):
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash,
        "versions": {"calderon": __version__, "numpy": np.__version__},
        "results": results,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                  sort_keys=True))
    (out / "timings.json").write_text(json.dumps(timings, indent=2))


def _forward_maps(cfg: RunConfig, domain, gamma):
    q = conductivity_to_potential(gamma, domain, cfg.ellipticity_c)
    L_gamma = assemble_dtn(gamma, "gamma", domain, cfg.ellipticity_c)
    L_q = assemble_dtn(q, "q", domain)
    L_0 = assemble_dtn(None, "zero", domain)
    return q, L_gamma, L_q, L_0


def cmd_forward(cfg: RunConfig) -> dict:
    _, domain, gamma = _setup(cfg)
    t0 = time.perf_counter()
    q, L_gamma, L_q, L_0 = _forward_maps(cfg, domain, gamma)
    elapsed = time.perf_counter() - t0
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_field(gamma, out / "gamma.bin")
    save_field(q, out / "q.bin")
    save_dtn(L_gamma, out / "dtn_gamma.bin")
    save_dtn(L_q, out / "dtn_q.bin")
    save_dtn(L_0, out / "dtn_zero.bin")
    results = {
        "n_boundary": domain.n_boundary,
        "dtn_reduction_distance": dtn_distance(L_gamma, L_q),
        "dtn_zero_norm": dtn_operator_norm(L_0),
        "asymmetry": {"gamma": L_gamma.asymmetry, "q": L_q.asymmetry,
                      "zero": L_0.asymmetry},
    }
    _write_manifest(out, cfg, "forward", results, {"seconds": elapsed})
    return results


def _write_samples_csv(path: Path, samples):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m1", "m2", "m3", "xi1", "xi2", "xi3", "k", "re", "im",
                    "bie_residual"])
        for i in range(samples.count):
            w.writerow([*samples.m_index[i],
                        *(f"{v!r}" for v in samples.xi[i]),
                        f"{samples.k_used[i]!r}",
                        f"{samples.values[i].real!r}",
                        f"{samples.values[i].imag!r}",
                        f"{samples.residuals[i]!r}"])


def cmd_scatter(cfg: RunConfig) -> dict:
    grid, domain, gamma = _setup(cfg)
    t0 = time.perf_counter()
    q, L_gamma, _, L_0 = _forward_maps(cfg, domain, gamma)
    schedule = default_k_schedule(cfg.k_min, cfg.k_factor, cfg.box_halfwidth)
    samples = scattering_grid(L_gamma, L_0, rho=cfg.rho_value,
                              k_schedule=schedule, workers=cfg.workers)
    elapsed = time.perf_counter() - t0
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_samples_csv(out / "samples.csv", samples)
    results = {
        "rho": samples.rho,
        "n_samples": samples.count,
        "n_failures": len(samples.failures),
        "failures": [list(map(int, m)) for m, _ in samples.failures],
    }
    _write_manifest(out, cfg, "scatter", results, {"seconds": elapsed})
    return results


def cmd_reconstruct(cfg: RunConfig) -> dict:
    grid, domain, gamma = _setup(cfg)
    t0 = time.perf_counter()
    q, L_gamma, _, L_0 = _forward_maps(cfg, domain, gamma)
    schedule = default_k_schedule(cfg.k_min, cfg.k_factor, cfg.box_halfwidth)
    samples = scattering_grid(L_gamma, L_0, rho=cfg.rho_value,
                              k_schedule=schedule, workers=cfg.workers)
    q_rec, imag_residue = lowpass_invert(samples, grid)
    gamma_rec, clamped = recover_gamma(q_rec, domain, cfg.ellipticity_c)
    elapsed = time.perf_counter() - t0

    omega = domain.omega
    q_lp = lowpass_field(q, samples.rho)
    dq = q_rec.values[omega] - q_lp.values[omega]
    err_q = float(np.linalg.norm(dq) / np.linalg.norm(q_lp.values[omega]))
    dg = gamma_rec.values[omega] - gamma.values.real[omega]
    err_g = float(np.linalg.norm(dg) / np.linalg.norm(gamma.values.real[omega]))
    collar = domain.collar_mask()
    collar_dev = float(np.max(np.abs(gamma_rec.values[collar] - 1.0)))

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_samples_csv(out / "samples.csv", samples)
    save_field(q_rec, out / "q_rec.bin")
    save_field(gamma_rec, out / "gamma_rec.bin")
    results = {
        "rho": samples.rho,
        "err_q_vs_lowpass_rel_l2": err_q,
        "err_gamma_rel_l2": err_g,
        "gamma_collar_max_dev": collar_dev,
        "imag_residue": imag_residue,
        "clamped_nodes": clamped,
        "n_failures": len(samples.failures),
    }
    _write_manifest(out, cfg, "reconstruct", results, {"seconds": elapsed})
    return results


def cmd_stability(cfg: RunConfig) -> dict:
    grid, domain, gamma = _setup(cfg)
    t0 = time.perf_counter()
    _, L_gamma, _, L_0 = _forward_maps(cfg, domain, gamma)
    curve = stability_sweep(gamma, L_gamma, L_0,
                            eps_list=cfg.noise_levels, seed=cfg.seed,
                            workers=cfg.workers, rho_default=cfg.rho_value,
                            s=cfg.stability_s,
                            ellipticity_c=cfg.ellipticity_c)
    elapsed = time.perf_counter() - t0
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "stability.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "dist", "err_q_hm1", "err_gamma_l2",
                    "err_gamma_sup"])
        for i in range(len(curve.noise_levels)):
            w.writerow([f"{curve.noise_levels[i]!r}", f"{curve.dist[i]!r}",
                        f"{curve.err_q_hm1[i]!r}",
                        f"{curve.err_gamma_l2[i]!r}",
                        f"{curve.err_gamma_sup[i]!r}"])
    fit = {
        "fitted_sigma": curve.fitted_sigma,
        "log_model_residual": curve.log_model_residual,
        "power_model_residual": curve.power_model_residual,
        "partial": curve.partial,
        "failures": [list(f) for f in curve.failures],
    }
    (out / "stability_fit.json").write_text(json.dumps(fit, indent=2))
    _write_manifest(out, cfg, "stability", fit, {"seconds": elapsed})
    return fit


def cmd_selftest(cfg: RunConfig) -> dict:
    """Fast invariant suite over a reduced geometry; prints one line per check."""
    from . import selftest
    t0 = time.perf_counter()
    report = selftest.run(cfg)
    elapsed = time.perf_counter() - t0
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, cfg, "selftest", report, {"seconds": elapsed})
    for name, entry in report["checks"].items():
        print(f"[{'PASS' if entry['pass'] else 'FAIL'}] {name}: {entry['detail']}")
    return report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="calderon",
                                description=__doc__.split("\n")[0])
    p.add_argument("--config", type=str, default=None,
                   help="JSON config file; flags override file values")
    p.add_argument("--grid", type=int, default=None, help="nodes per axis")
    p.add_argument("--rho", type=float, default=None, help="frequency cutoff")
    p.add_argument("--k-min", type=float, default=None, dest="k_min")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--family", type=str, default=None)
    p.add_argument("--out", type=str, default=None, help="output directory")
    p.add_argument("command", choices=["forward", "scatter", "reconstruct",
                                       "stability", "selftest"])
    return p


_OVERRIDES = {"grid": "grid_n", "rho": "rho", "k_min": "k_min", "seed": "seed",
              "workers": "workers", "family": "family", "out": "out_dir"}


def load_config(args) -> RunConfig:
    data = {}
    if args.config:
        data = RunConfig.load(args.config).to_dict()
    cfg = RunConfig.from_dict(data) if data else RunConfig()
    for flag, field in _OVERRIDES.items():
        val = getattr(args, flag)
        if val is not None:
            setattr(cfg, field, val)
    cfg.validate()
    return cfg


_COMMANDS = {
    "forward": cmd_forward,
    "scatter": cmd_scatter,
    "reconstruct": cmd_reconstruct,
    "stability": cmd_stability,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        results = _COMMANDS[args.command](cfg)
    except CalderonError as exc:
        print(f"numerical failure in {args.command}: "
              f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    if args.command == "selftest" and not results.get("all_pass", True):
        return 3
    print(json.dumps(results, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
