"""Experiment driver: config parsing, baselines, N-sweeps, result emission.

Runs are described by a JSON config (or flags); each sweep point records the
re-verified QFI, per-query ratios, requested baselines, iteration count, and
wall time, and results are flushed to JSON and CSV after every point.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import comb, optimize, qfi, tnet
from .ansatz import choi_of_unitary
from .channels import ChannelError, ParamChannel, get_preset, signal_unitary
from .comb import choi_identity
from .sdp import SdpOptions

PLUS = 0.5 * np.array([[1, 1], [1, 1]], dtype=complex)

BASELINE_NAMES = ("control_free_plus", "classical_nF1", "near_inverse_control")

CSV_COLUMNS = [
    "N", "mode", "ancilla_dim", "qfi", "qfi_per_N", "qfi_per_N2",
    "baseline_control_free_plus", "baseline_classical_nF1",
    "baseline_near_inverse_control", "iterations", "seconds",
]


class ConfigError(ValueError):
    pass


_CONFIG_KEYS = {
    "preset", "p", "theta0", "N", "mode", "ancilla_dim", "ansatz",
    "baselines", "out", "verify", "warm_start", "seed", "resume",
    "max_outer_iters", "rel_tol", "perturbation", "sdp_tol", "sdp_max_iters",
    "ppt_control", "learning_rate", "local_steps", "line_search_tol",
    "x_update_each_control", "checkpoint_every", "checkpoint_path",
}


@dataclass
class RunConfig:
    preset: str = "bit_flip"
    p: float = 0.1
    theta0: float = 1.0
    N: list[int] = field(default_factory=lambda: [2])
    mode: str = "arbitrary_cptp"
    ancilla_dim: int = 1
    ansatz: Optional[tuple[int, int]] = None
    baselines: list[str] = field(default_factory=list)
    out: str = "results"
    verify: bool = False
    warm_start: bool = False
    seed: int = 0
    resume: Optional[str] = None
    max_outer_iters: int = 200
    rel_tol: float = 1e-7
    perturbation: Optional[tuple[float, float]] = None
    sdp_tol: float = 1e-7
    sdp_max_iters: int = 20000
    ppt_control: bool = False
    learning_rate: float = 0.1
    local_steps: int = 5
    line_search_tol: float = 1e-6
    x_update_each_control: bool = False
    checkpoint_every: int = 25
    checkpoint_path: Optional[str] = None

    def __post_init__(self):
        if any(n < 1 for n in self.N):
            raise ConfigError(f"N values must be >= 1, got {self.N}")
        if self.mode not in optimize.MODES:
            raise ConfigError(
                f"unknown mode {self.mode!r}; choose from {optimize.MODES}"
            )
        if self.mode.startswith("variational"):
            n, layers = self.ansatz or optimize._default_ansatz_shape(self.ancilla_dim)
            if 2**n != 2 * self.ancilla_dim:
                raise ConfigError(
                    f"ansatz on {n} qubits does not match system x ancilla "
                    f"dimension {2 * self.ancilla_dim}"
                )
            self.ansatz = (n, layers)
        for b in self.baselines:
            if b not in BASELINE_NAMES:
                raise ConfigError(
                    f"unknown baseline {b!r}; choose from {BASELINE_NAMES}"
                )

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "N" in d and isinstance(d["N"], (int, str)):
            d["N"] = parse_n_values(str(d["N"]))
        if d.get("ansatz") is not None:
            d["ansatz"] = tuple(int(v) for v in d["ansatz"])
        if d.get("perturbation") is not None:
            d["perturbation"] = tuple(float(v) for v in d["perturbation"])
        return cls(**d)

    def settings(self) -> optimize.RunSettings:
        return optimize.RunSettings(
            max_outer_iters=self.max_outer_iters,
            rel_tol=self.rel_tol,
            seed=self.seed,
            perturbation=self.perturbation,
            sdp=SdpOptions(tol=self.sdp_tol, max_iters=self.sdp_max_iters),
            ppt_control=self.ppt_control,
            learning_rate=self.learning_rate,
            line_search_tol=self.line_search_tol,
            local_steps=self.local_steps,
            x_update_each_control=self.x_update_each_control,
            checkpoint_every=self.checkpoint_every,
            checkpoint_path=self.checkpoint_path,
        )

    def to_dict(self) -> dict:
        return {
            "preset": self.preset, "p": self.p, "theta0": self.theta0,
            "N": list(self.N), "mode": self.mode, "ancilla_dim": self.ancilla_dim,
            "ansatz": list(self.ansatz) if self.ansatz else None,
            "baselines": list(self.baselines), "out": self.out,
            "verify": self.verify, "warm_start": self.warm_start,
            "seed": self.seed, "resume": self.resume,
            "max_outer_iters": self.max_outer_iters, "rel_tol": self.rel_tol,
            "perturbation": list(self.perturbation) if self.perturbation else None,
            "sdp_tol": self.sdp_tol, "sdp_max_iters": self.sdp_max_iters,
            "ppt_control": self.ppt_control, "learning_rate": self.learning_rate,
            "local_steps": self.local_steps,
            "line_search_tol": self.line_search_tol,
            "x_update_each_control": self.x_update_each_control,
            "checkpoint_every": self.checkpoint_every,
            "checkpoint_path": self.checkpoint_path,
        }


def parse_n_values(text: str) -> list[int]:
    """Parse "2,3,10" or "2-10" (inclusive range) or mixtures thereof."""
    values: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(int(part))
    if not values:
        raise ConfigError(f"no N values in {text!r}")
    return values


# ---------------------------------------------------------------------------
# Baselines


def _fixed_strategy_qfi(channel, theta0, controls, rho0, N, ancilla_dim=1):
    chain = tnet.MpoChain(
        channel.choi_at(theta0).mat, channel.dchoi_at(theta0), controls, rho0,
        np.zeros_like(rho0), ancilla_dim,
    )
    return qfi.qfi_from_state(chain.output_state(), chain.output_derivative())


def baseline_control_free(channel: ParamChannel, theta0: float, N: int) -> float:
    """QFI of the ancilla-free chain with identity controls and input |+>."""
    d = channel.d
    controls = [choi_identity(d)] * (N - 1)
    return _fixed_strategy_qfi(channel, theta0, controls, PLUS.copy(), N)


def baseline_classical(channel, theta0: float, N: int, ancilla_dim: int = 1) -> float:
    """N times the optimized single-query QFI (parallel repetition)."""
    f1, _ = qfi.qfi_single_channel_opt(channel, theta0, ancilla_dim)
    return N * f1


def baseline_near_inverse(channel, theta0: float, N: int, eps: float = 0.01) -> float:
    """QFI with the fixed identical control U_Z(theta0 + eps)^dag, input |+>."""
    c = choi_of_unitary(signal_unitary(-(theta0 + eps))).mat
    return _fixed_strategy_qfi(channel, theta0, [c] * (N - 1), PLUS.copy(), N)


# ---------------------------------------------------------------------------
# Verification against the dense oracle


def verify_against_dense(channel, theta0, strategy, tol=1e-8):
    """Cross-check the chain outputs against brute-force composition (N <= 4)."""
    E = channel.choi_at(theta0).mat
    Edot = channel.dchoi_at(theta0)
    a = strategy.ancilla_dim
    D = channel.d * a
    controls = strategy.control_chois()
    chain = tnet.MpoChain(E, Edot, controls, strategy.rho0,
                          np.zeros((D, D), complex), a)
    ref_state, ref_dot = comb.dense_strategy_output(
        E, Edot, controls, strategy.rho0, strategy.N, a
    )
    err_s = np.max(np.abs(chain.output_state() - ref_state))
    err_d = np.max(np.abs(chain.output_derivative() - ref_dot))
    if err_s > tol or err_d > tol:
        raise tnet.ContractionError(
            f"dense-oracle mismatch: state {err_s:g}, derivative {err_d:g}"
        )
    return max(err_s, err_d)


# ---------------------------------------------------------------------------
# Sweep driver


def _baseline_values(config, channel, N) -> dict:
    vals: dict[str, float | None] = {b: None for b in BASELINE_NAMES}
    if "control_free_plus" in config.baselines:
        vals["control_free_plus"] = baseline_control_free(channel, config.theta0, N)
    if "classical_nF1" in config.baselines:
        vals["classical_nF1"] = baseline_classical(
            channel, config.theta0, N, config.ancilla_dim
        )
    if "near_inverse_control" in config.baselines:
        vals["near_inverse_control"] = baseline_near_inverse(
            channel, config.theta0, N
        )
    return vals


def run_experiment(config: RunConfig, out_prefix: Optional[str] = None) -> list[dict]:
    """Run the configured N-sweep; returns the result rows and writes
    <out>.json / <out>.csv after every completed point."""
    channel = get_preset(config.preset, config.p)
    prefix = out_prefix or config.out
    rows: list[dict] = []
    prev_strategy = None
    if config.resume:
        prev_strategy = optimize.load_checkpoint(config.resume)

    for N in sorted(config.N):
        init = None
        if prev_strategy is not None and config.warm_start:
            if prev_strategy.mode != config.mode:
                raise ConfigError("resume checkpoint mode differs from config mode")
            if prev_strategy.N <= N:
                init = optimize.warm_start_extend(prev_strategy, N)
        t0 = time.perf_counter()
        report = optimize.run(
            channel, config.theta0, N, config.mode, config.settings(),
            ancilla_dim=config.ancilla_dim, ansatz_shape=config.ansatz, init=init,
        )
        seconds = time.perf_counter() - t0
        if config.verify and N <= 4:
            verify_against_dense(channel, config.theta0, report.final_strategy)
        if config.warm_start:
            prev_strategy = report.final_strategy
        baselines = _baseline_values(config, channel, N)
        row = {
            "N": N,
            "mode": config.mode,
            "ancilla_dim": config.ancilla_dim,
            "qfi": report.final_qfi,
            "qfi_per_N": report.final_qfi / N,
            "qfi_per_N2": report.final_qfi / N**2,
            "baseline_control_free_plus": baselines["control_free_plus"],
            "baseline_classical_nF1": baselines["classical_nF1"],
            "baseline_near_inverse_control": baselines["near_inverse_control"],
            "iterations": report.iterations,
            "seconds": seconds,
            "status": report.status,
            "sdp_max_gap": report.sdp_max_gap,
            "discontinuity_flag": report.discontinuity_flag,
        }
        rows.append(row)
        write_results(prefix, config, rows)
    return rows


def write_results(prefix: str, config: RunConfig, rows: list[dict]):
    with open(prefix + ".json", "w") as fh:
        json.dump({"config": config.to_dict(), "results": rows}, fh, indent=2)
    with open(prefix + ".csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row[k])
                             for k in CSV_COLUMNS})


def read_results_csv(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tnmetro",
        description="Optimize control-enhanced sequential channel-estimation "
        "strategies and emit QFI sweep tables.",
    )
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", choices=sorted(("bit_flip", "amplitude_damping",
                                               "dephasing_direction")))
    p.add_argument("--N", help='query counts, e.g. "2,3,4" or "2-10"')
    p.add_argument("--mode", choices=optimize.MODES)
    p.add_argument("--ancilla", type=int, dest="ancilla_dim")
    p.add_argument("--seed", type=int)
    p.add_argument("--warm-start", action="store_true", default=None)
    p.add_argument("--verify", action="store_true", default=None)
    p.add_argument("--out", help="output path prefix (writes .json and .csv)")
    p.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    p.add_argument("--resume", help="checkpoint file to warm-start from")
    return p


def config_from_args(args) -> RunConfig:
    data: dict = {}
    if args.config:
        with open(args.config) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config parse error: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be an object")
    for key in ("preset", "mode", "ancilla_dim", "seed", "warm_start",
                "verify", "out", "checkpoint_every", "resume"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if args.N is not None:
        data["N"] = parse_n_values(args.N)
    return RunConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
    except (ConfigError, ChannelError, OSError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        rows = run_experiment(config)
    except (optimize.OptimizationError, tnet.ContractionError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    for row in rows:
        print(
            f"N={row['N']:>4d}  qfi={row['qfi']:.8f}  "
            f"qfi/N={row['qfi_per_N']:.6f}  iters={row['iterations']}  "
            f"{row['seconds']:.1f}s"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
