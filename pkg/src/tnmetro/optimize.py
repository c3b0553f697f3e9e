"""Alternating-optimization driver for control-enhanced sequential strategies.

One outer iteration updates, in order: the Hermitian auxiliary operator X
(set to the SLD of the current output state), the input state (maximal
eigenvector of its environment), and the controls (mode-specific convex or
gradient sub-updates).  Every sub-problem is solved with the other tensors
fixed, so in the CPTP modes the objective 2 f1 - f2 never decreases.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.optimize

from . import ansatz as ansatz_mod
from . import qfi as qfi_mod
from . import sdp as sdp_mod
from . import tnet
from .channels import ParamChannel

Matrix = np.ndarray

MODES = ("arbitrary_cptp", "identical_cptp", "variational_local", "variational_global")

CHECKPOINT_FORMAT_VERSION = 1


class OptimizationError(RuntimeError):
    pass


@dataclass
class RunSettings:
    max_outer_iters: int = 200
    rel_tol: float = 1e-7
    seed: int = 0
    perturbation: Optional[tuple[float, float]] = None  # (eps0, decay) or None
    sdp: sdp_mod.SdpOptions = field(default_factory=sdp_mod.SdpOptions)
    ppt_control: bool = False
    learning_rate: float = 0.1
    adagrad_eps: float = 1e-8
    line_search_tol: float = 1e-6
    local_steps: int = 5
    x_update_each_control: bool = False
    checkpoint_every: int = 25
    checkpoint_path: Optional[str] = None

    def __post_init__(self):
        if self.rel_tol <= 0 or self.line_search_tol <= 0:
            raise ValueError("tolerances must be positive")

    def to_dict(self) -> dict:
        return {
            "max_outer_iters": self.max_outer_iters,
            "rel_tol": self.rel_tol,
            "seed": self.seed,
            "perturbation": list(self.perturbation) if self.perturbation else None,
            "sdp_tol": self.sdp.tol,
            "sdp_max_iters": self.sdp.max_iters,
            "ppt_control": self.ppt_control,
            "learning_rate": self.learning_rate,
            "adagrad_eps": self.adagrad_eps,
            "line_search_tol": self.line_search_tol,
            "local_steps": self.local_steps,
            "x_update_each_control": self.x_update_each_control,
            "checkpoint_every": self.checkpoint_every,
        }


@dataclass
class Strategy:
    rho0: Matrix
    mode: str
    controls: object  # list[Matrix] | Matrix | list[AnsatzParams] | AnsatzParams
    ancilla_dim: int
    N: int

    def control_chois(self) -> list[Matrix]:
        """The N-1 control Choi matrices in time order."""
        if self.N == 1:
            return []
        if self.mode == "arbitrary_cptp":
            return [np.asarray(c, complex) for c in self.controls]
        if self.mode == "identical_cptp":
            return [np.asarray(self.controls, complex)] * (self.N - 1)
        if self.mode == "variational_local":
            return [ansatz_mod.ansatz_choi(p).mat for p in self.controls]
        if self.mode == "variational_global":
            return [ansatz_mod.ansatz_choi(self.controls).mat] * (self.N - 1)
        raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class OptimizationReport:
    qfi_trace: list[float]
    final_strategy: Strategy
    final_qfi: float
    status: str
    wall_time: float
    settings: dict
    support_cutoff_used: float = qfi_mod.DEFAULT_SUPPORT_CUTOFF
    sdp_max_gap: float = 0.0
    sdp_solves: int = 0
    sdp_nonconverged: int = 0
    discontinuity_flag: bool = False
    descent_violations: int = 0
    iterations: int = 0


# ---------------------------------------------------------------------------
# Random initialization


def haar_random_pure(dim: int, rng: np.random.Generator) -> Matrix:
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    psi /= np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def random_cptp_choi(d_out: int, d_in: int, rng: np.random.Generator) -> Matrix:
    """Choi of a Haar-random Stinespring isometry with full environment."""
    d_env = d_out * d_in
    g = rng.normal(size=(d_out * d_env, d_in)) + 1j * rng.normal(size=(d_out * d_env, d_in))
    v, _ = np.linalg.qr(g)  # isometry d_in -> d_out (x) d_env
    kraus = [v.reshape(d_out, d_env, d_in)[:, e, :] for e in range(d_env)]
    mat = np.zeros((d_out * d_in, d_out * d_in), dtype=complex)
    for k in kraus:
        vec = k.reshape(-1)
        mat += np.outer(vec, vec.conj())
    return mat


def _default_ansatz_shape(ancilla_dim: int) -> tuple[int, int]:
    return (1, 1) if ancilla_dim == 1 else (2, 3)


def initial_strategy(mode, N, d, ancilla_dim, rng, ansatz_shape=None) -> Strategy:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
    D = d * ancilla_dim
    rho0 = haar_random_pure(D, rng)
    if mode == "arbitrary_cptp":
        controls = [random_cptp_choi(D, D, rng) for _ in range(N - 1)]
    elif mode == "identical_cptp":
        controls = random_cptp_choi(D, D, rng)
    else:
        n, layers = ansatz_shape or _default_ansatz_shape(ancilla_dim)
        if 2**n != D:
            raise ValueError(
                f"ansatz on {n} qubits acts on dimension {2**n}, expected {D}"
            )
        if mode == "variational_local":
            controls = [ansatz_mod.AnsatzParams.zeros(n, layers) for _ in range(N - 1)]
        else:
            controls = ansatz_mod.AnsatzParams.zeros(n, layers)
    return Strategy(rho0, mode, controls, ancilla_dim, N)


# ---------------------------------------------------------------------------
# Sub-updates


def update_X(chain: tnet.MpoChain, cutoff: float = qfi_mod.DEFAULT_SUPPORT_CUTOFF):
    """Set X to the SLD of the current output state; returns the SldResult."""
    res = qfi_mod.sld(chain.output_state(), chain.output_derivative(), cutoff)
    chain.set_x(res.L)
    return res


def update_input_state(chain: tnet.MpoChain) -> Matrix:
    """Replace rho0 by the top eigenvector of its transposed environment."""
    env = chain.objective_environment("rho")
    g = env.T
    g = 0.5 * (g + g.conj().T)
    _, v = np.linalg.eigh(g)
    psi = v[:, -1]
    rho0 = np.outer(psi, psi.conj())
    chain.set_rho0(rho0)
    return rho0


def update_control_arbitrary(chain, i, opts=None, backend=None, warm=None, ppt=False):
    """SDP update of control i; rejected if the (possibly non-converged)
    solution would lower the objective.  Returns (choi, solution, accepted)."""
    D = chain.D
    env = chain.objective_environment(("C", i))
    a = env.T
    a = 0.5 * (a + a.conj().T)
    solver = sdp_mod.solve_cptp_ppt_linear if ppt else sdp_mod.solve_cptp_linear
    sol = solver(a, D, D, opts=opts, backend=backend, warm=warm)
    c_old = chain.controls[i - 1].reshape(D * D, D * D)
    old_val = float(np.real(np.trace(c_old @ a)))
    accepted = sol.primal_value >= old_val - 1e-9
    if accepted:
        chain.set_control(i, sol.C_star.mat)
        return sol.C_star.mat, sol, True
    return c_old, sol, False


def bounded_scalar_minimize(f, lo: float, hi: float, tol: float = 1e-6):
    """Bounded scalar minimization (golden section / parabolic)."""
    if not lo < hi:
        raise ValueError(f"invalid interval [{lo}, {hi}]")
    res = scipy.optimize.minimize_scalar(
        f, bounds=(lo, hi), method="bounded", options={"xatol": tol}
    )
    return float(res.x), float(res.fun)


def update_control_identical(
    chain, E, Edot, current, rng, opts=None, backend=None, warm=None,
    line_search_tol=1e-6, ppt=False,
):
    """One identical-control update: local SDP at a random site, then a
    bounded search over the convex mixing angle, accepted only if the global
    objective does not decrease.  Returns (new choi, solution, lambda)."""
    N, D, a_dim = chain.N, chain.D, chain.a
    i = int(rng.integers(1, N))
    env = chain.objective_environment(("C", i))
    a = env.T
    a = 0.5 * (a + a.conj().T)
    solver = sdp_mod.solve_cptp_ppt_linear if ppt else sdp_mod.solve_cptp_linear
    sol = solver(a, D, D, opts=opts, backend=backend, warm=warm)
    c_tilde = sol.C_star.mat
    rho0 = chain.rho.reshape(D, D)
    X = chain.X

    def mixed(lam):
        return np.sin(lam * np.pi) ** 2 * c_tilde + np.cos(lam * np.pi) ** 2 * current

    def objective(lam):
        f1, f2 = tnet.identical_f1_f2(E, Edot, mixed(lam), rho0, X, N, a_dim)
        return 2 * f1 - f2

    lam_star, neg_val = bounded_scalar_minimize(
        lambda lam: -objective(lam), 0.0, 0.5, line_search_tol
    )
    if -neg_val < objective(0.0):
        lam_star = 0.0
    c_new = mixed(lam_star)
    if lam_star != 0.0:
        for k in range(1, N):
            chain.set_control(k, c_new)
    return c_new, sol, lam_star


def _choi_objective(a_mat):
    def f(params):
        c = ansatz_mod.ansatz_choi(params).mat
        return float(np.real(np.trace(c @ a_mat)))

    return f


def _guarded_step(phi, phi_cand, value, max_halvings=10):
    """Backtrack a tentative ascent step until value(phi') >= value(phi).

    Returns (phi', accepted); accepted is False when even the fully damped
    step still decreases the objective (the step is then rejected)."""
    base = value(phi)
    delta = phi_cand - phi
    scale = 1.0
    for _ in range(max_halvings):
        cand = phi + scale * delta
        if value(cand) >= base - 1e-12:
            return cand, True
        scale *= 0.5
    return phi, False


def update_variational_local(chain, i, params, adagrad, steps=5):
    """Gradient-ascent refinement of control i with its environment fixed.

    The environment is exact for single-site changes, so each Adagrad step
    is backtracked against Tr[C(phi) A] to keep the sweep monotone."""
    env = chain.objective_environment(("C", i))
    a = env.T
    a = 0.5 * (a + a.conj().T)
    f = _choi_objective(a)

    def value(phi):
        return f(ansatz_mod.AnsatzParams(params.n_qubits, params.n_layers, phi))

    phi = params.phi
    accepted_all = True
    for _ in range(steps):
        g = ansatz_mod.grad_objective(
            ansatz_mod.AnsatzParams(params.n_qubits, params.n_layers, phi), f
        )
        cand = adagrad.step(phi, -g)  # ascend
        phi, ok = _guarded_step(phi, cand, value)
        accepted_all = accepted_all and ok
    new = ansatz_mod.AnsatzParams(params.n_qubits, params.n_layers, phi)
    chain.set_control(i, ansatz_mod.ansatz_choi(new).mat)
    return new, accepted_all


def update_variational_global(chain, params, adagrad, E, Edot):
    """One Adagrad ascent step of the shared parameters against the summed
    per-site environments, backtracked against the exact shared-control
    objective (matrix-power evaluation) to stay monotone."""
    N = chain.N
    total = np.zeros((chain.D**2, chain.D**2), dtype=complex)
    for i in range(1, N):
        total += chain.objective_environment(("C", i))
    a = total.T
    a = 0.5 * (a + a.conj().T)
    f = _choi_objective(a)
    g = ansatz_mod.grad_objective(params, f)
    cand = adagrad.step(params.phi, -g)
    rho0 = chain.rho.reshape(chain.D, chain.D)

    def value(phi):
        c = ansatz_mod.ansatz_choi(
            ansatz_mod.AnsatzParams(params.n_qubits, params.n_layers, phi)
        ).mat
        f1, f2 = tnet.identical_f1_f2(E, Edot, c, rho0, chain.X, N, chain.a)
        return 2 * f1 - f2

    phi, accepted = _guarded_step(params.phi, cand, value)
    new = ansatz_mod.AnsatzParams(params.n_qubits, params.n_layers, phi)
    c = ansatz_mod.ansatz_choi(new).mat
    for i in range(1, N):
        chain.set_control(i, c)
    return new, accepted


# ---------------------------------------------------------------------------
# Serialization


def _encode_complex(m: Matrix) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m, complex)]


def _decode_complex(rows: list) -> Matrix:
    return np.array([[complex(re, im) for re, im in row] for row in rows])


def strategy_to_dict(s: Strategy) -> dict:
    d: dict = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "mode": s.mode,
        "ancilla_dim": s.ancilla_dim,
        "N": s.N,
        "rho0": _encode_complex(s.rho0),
    }
    if s.mode == "arbitrary_cptp":
        d["controls"] = [_encode_complex(c) for c in s.controls]
    elif s.mode == "identical_cptp":
        d["controls"] = _encode_complex(s.controls)
    elif s.mode == "variational_local":
        d["ansatz"] = [s.controls[0].n_qubits, s.controls[0].n_layers] if s.controls else None
        d["controls"] = [list(p.phi) for p in s.controls]
    else:
        d["ansatz"] = [s.controls.n_qubits, s.controls.n_layers]
        d["controls"] = list(s.controls.phi)
    return d


def strategy_from_dict(d: dict) -> Strategy:
    if d.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise OptimizationError(
            f"unsupported checkpoint format version {d.get('format_version')!r}"
        )
    mode = d["mode"]
    if mode == "arbitrary_cptp":
        controls = [_decode_complex(c) for c in d["controls"]]
    elif mode == "identical_cptp":
        controls = _decode_complex(d["controls"])
    elif mode == "variational_local":
        n, layers = d["ansatz"]
        controls = [
            ansatz_mod.AnsatzParams(n, layers, np.array(phi)) for phi in d["controls"]
        ]
    else:
        n, layers = d["ansatz"]
        controls = ansatz_mod.AnsatzParams(n, layers, np.array(d["controls"]))
    return Strategy(
        _decode_complex(d["rho0"]), mode, controls, d["ancilla_dim"], d["N"]
    )


def save_checkpoint(path: str, strategy: Strategy, settings: RunSettings,
                    qfi_trace: list[float]):
    payload = {
        "strategy": strategy_to_dict(strategy),
        "settings": settings.to_dict(),
        "qfi_trace": [float(q) for q in qfi_trace],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path: str) -> Strategy:
    with open(path) as fh:
        payload = json.load(fh)
    return strategy_from_dict(payload["strategy"])


def warm_start_extend(strategy: Strategy, N_new: Optional[int] = None) -> Strategy:
    """Initial strategy for more queries from a converged smaller one."""
    N_new = strategy.N + 1 if N_new is None else N_new
    if N_new < strategy.N:
        raise ValueError("can only extend to a larger N")
    extra = N_new - strategy.N
    if strategy.mode == "arbitrary_cptp":
        controls = list(strategy.controls)
        last = controls[-1] if controls else None
        for _ in range(extra):
            controls.append(np.array(last) if last is not None else None)
        if controls and controls[0] is None:
            raise ValueError("cannot extend an N=1 arbitrary strategy without a control")
        new_controls = controls
    elif strategy.mode == "variational_local":
        controls = [p.copy() for p in strategy.controls]
        for _ in range(extra):
            controls.append(controls[-1].copy())
        new_controls = controls
    else:
        new_controls = strategy.controls
    return Strategy(strategy.rho0.copy(), strategy.mode, new_controls,
                    strategy.ancilla_dim, N_new)


# ---------------------------------------------------------------------------
# Outer loop


def _perturbed_chois(E0, Edot0, eps, d):
    if eps <= 0:
        return E0, Edot0
    return (1 - eps) * E0 + eps * np.eye(d * d) / d, (1 - eps) * Edot0


def run(
    channel: ParamChannel,
    theta0: float,
    N: int,
    mode: str,
    settings: Optional[RunSettings] = None,
    ancilla_dim: int = 1,
    ansatz_shape: Optional[tuple[int, int]] = None,
    init: Optional[Strategy] = None,
) -> OptimizationReport:
    settings = settings or RunSettings()
    if N < 1:
        raise ValueError("N must be >= 1")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
    t_start = time.perf_counter()
    rng = np.random.default_rng(settings.seed)
    d = channel.d
    D = d * ancilla_dim
    E0 = channel.choi_at(theta0).mat
    Edot0 = channel.dchoi_at(theta0)

    strategy = init if init is not None else initial_strategy(
        mode, N, d, ancilla_dim, rng, ansatz_shape
    )
    if strategy.N != N or strategy.ancilla_dim != ancilla_dim or strategy.mode != mode:
        raise ValueError("initial strategy inconsistent with run configuration")

    chain = tnet.MpoChain(
        E0, Edot0, strategy.control_chois(), strategy.rho0,
        np.zeros((D, D), dtype=complex), ancilla_dim,
    )

    report = OptimizationReport(
        qfi_trace=[], final_strategy=strategy, final_qfi=0.0, status="max_iters",
        wall_time=0.0, settings=settings.to_dict(),
    )
    warm_cache: dict = {}
    adagrads: dict = {}
    flat = None  # most recent consecutive near-converged count
    flat = 0
    E, Edot = E0, Edot0

    for it in range(settings.max_outer_iters):
        if settings.perturbation is not None:
            eps0, decay = settings.perturbation
            E, Edot = _perturbed_chois(E0, Edot0, eps0 * decay**it, d)
            chain = tnet.MpoChain(
                E, Edot, strategy.control_chois(), strategy.rho0, chain.X, ancilla_dim
            )

        res = update_X(chain)
        qfi = res.qfi
        if not np.isfinite(qfi):
            raise OptimizationError(
                f"non-finite objective at iteration {it}: {qfi!r}"
            )
        if report.qfi_trace and qfi > 1.5 * report.qfi_trace[-1] and report.qfi_trace[-1] > 0:
            report.discontinuity_flag = True
        if report.qfi_trace:
            rel = abs(qfi - report.qfi_trace[-1]) / max(1.0, abs(qfi))
            flat = flat + 1 if rel < settings.rel_tol else 0
        report.qfi_trace.append(qfi)
        report.iterations = it + 1
        if flat >= 3:
            report.status = "converged"
            break

        strategy.rho0 = update_input_state(chain)

        if N > 1:
            if mode == "arbitrary_cptp":
                for i in range(1, N):
                    c_new, sol, _ = update_control_arbitrary(
                        chain, i, opts=settings.sdp, warm=warm_cache.get(i),
                        ppt=settings.ppt_control,
                    )
                    warm_cache[i] = getattr(sol, "warm", None)
                    report.sdp_solves += 1
                    report.sdp_max_gap = max(report.sdp_max_gap, sol.gap)
                    if sol.status != "converged":
                        report.sdp_nonconverged += 1
                    strategy.controls[i - 1] = c_new
                    if settings.x_update_each_control:
                        update_X(chain)
            elif mode == "identical_cptp":
                c_new, sol, _ = update_control_identical(
                    chain, E, Edot, np.asarray(strategy.controls, complex), rng,
                    opts=settings.sdp, warm=warm_cache.get(0),
                    line_search_tol=settings.line_search_tol,
                    ppt=settings.ppt_control,
                )
                warm_cache[0] = getattr(sol, "warm", None)
                report.sdp_solves += 1
                report.sdp_max_gap = max(report.sdp_max_gap, sol.gap)
                if sol.status != "converged":
                    report.sdp_nonconverged += 1
                strategy.controls = c_new
            elif mode == "variational_local":
                for i in range(1, N):
                    ad = adagrads.setdefault(
                        i, ansatz_mod.Adagrad(settings.learning_rate, settings.adagrad_eps)
                    )
                    new, improved = update_variational_local(
                        chain, i, strategy.controls[i - 1], ad, settings.local_steps
                    )
                    if not improved:
                        report.descent_violations += 1
                    strategy.controls[i - 1] = new
                    if settings.x_update_each_control:
                        update_X(chain)
            else:  # variational_global
                ad = adagrads.setdefault(
                    0, ansatz_mod.Adagrad(settings.learning_rate, settings.adagrad_eps)
                )
                strategy.controls, ok = update_variational_global(
                    chain, strategy.controls, ad, E, Edot
                )
                if not ok:
                    report.descent_violations += 1

        if (
            settings.checkpoint_path
            and settings.checkpoint_every > 0
            and (it + 1) % settings.checkpoint_every == 0
        ):
            save_checkpoint(settings.checkpoint_path, strategy, settings, report.qfi_trace)

    # Final re-verification with a fresh SLD on the unperturbed channel.
    chain = tnet.MpoChain(
        E0, Edot0, strategy.control_chois(), strategy.rho0,
        np.zeros((D, D), dtype=complex), ancilla_dim,
    )
    res = update_X(chain)
    check = chain.objective()
    if abs(check - res.qfi) > 1e-8 * max(1.0, abs(res.qfi)):
        raise OptimizationError(
            f"objective re-verification failed: 2f1-f2={check!r} vs Tr(rho L^2)={res.qfi!r}"
        )
    report.final_qfi = res.qfi
    report.final_strategy = strategy
    report.support_cutoff_used = res.support_cutoff_used
    report.wall_time = time.perf_counter() - t_start
    if settings.checkpoint_path:
        save_checkpoint(settings.checkpoint_path, strategy, settings, report.qfi_trace)
    return report
