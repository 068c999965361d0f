"""System descriptions and spectral analysis.

Three system flavors are supported: constant-coefficient linear
(:class:`LtiSystem`), time-varying linear in modal (block-diagonal) form
(:class:`LtvSystem`), and scalar nonlinear (:class:`NonlinearScalarSystem`).
The spectral operations split dynamics into stable and antistable parts;
everything downstream (Riccati solvers, information rates) works on that
split, so any eigenvalue numerically on the imaginary axis is refused
outright rather than guessed at.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.integrate
import scipy.linalg

from .errors import (
    AssumptionViolatedError,
    ConfigError,
    NoDichotomyError,
    NumericalBreakdownError,
)
from .grids import TimeGrid

#: eigenvalues with |Re| below this are treated as marginal and refused
EIG_ZERO_TOL = 1e-9


# ---------------------------------------------------------------------------
# builtin scalar functions (used directly and by the JSON config loader)
# ---------------------------------------------------------------------------

def _sinusoidal_scalar(mean: float, amplitude: float, frequency: float):
    def fn(t):
        return mean + amplitude * np.sin(frequency * t)
    return fn


def _constant_scalar(value: float):
    def fn(t):
        return value + 0.0 * np.asarray(t, dtype=float)
    return fn


def _linear_drift(gain: float):
    def fn(t, x):
        return gain * x
    return fn


def _cubic_drift(gain: float):
    """Restoring cubic drift -gain * x^3; positive gain confines."""
    def fn(t, x):
        return -gain * x ** 3
    return fn


def _zero_fn():
    def fn(t, x):
        return np.zeros_like(np.asarray(x, dtype=float))
    return fn


def _linear_control(gain: float):
    def fn(t, e):
        return -gain * e
    return fn


def _tanh_control(gain: float, saturation: float):
    def fn(t, e):
        return -saturation * np.tanh(gain * e)
    return fn


def _linear_output(gain: float):
    def fn(t, x):
        return gain * x
    return fn


def _cubic_output(gain: float):
    def fn(t, x):
        return gain * x ** 3
    return fn


def _constant_output(value: float):
    def fn(t, x):
        return value + np.zeros_like(np.asarray(x, dtype=float))
    return fn


def _constant_diffusion(value: float):
    def fn(t, x):
        return value + np.zeros_like(np.asarray(x, dtype=float))
    return fn


#: builtins mapping time -> scalar (time-varying matrix entries)
TIME_BUILTINS = {
    "constant_scalar": _constant_scalar,
    "sinusoidal_scalar": _sinusoidal_scalar,
}

#: builtins mapping (time, state) -> scalar (drift, diffusion, control, output)
STATE_BUILTINS = {
    "zero": _zero_fn,
    "linear_drift": _linear_drift,
    "cubic_drift": _cubic_drift,
    "linear_control": _linear_control,
    "tanh_control": _tanh_control,
    "linear_output": _linear_output,
    "cubic_output": _cubic_output,
    "constant_output": _constant_output,
    "constant_diffusion": _constant_diffusion,
}


def resolve_time_fn(spec) -> Callable[[float], float]:
    """Turn a config entry (number or builtin spec) into a scalar f(t)."""
    if isinstance(spec, (int, float)):
        return _constant_scalar(float(spec))
    return _resolve(spec, TIME_BUILTINS)


def resolve_state_fn(spec) -> Callable[[float, np.ndarray], np.ndarray]:
    """Turn a config entry into a scalar f(t, x) from the builtin registry."""
    return _resolve(spec, STATE_BUILTINS)


def _resolve(spec, registry):
    if callable(spec):
        return spec
    if not isinstance(spec, dict) or "builtin" not in spec:
        raise ConfigError(f"function spec must be a {{'builtin': ...}} mapping, got {spec!r}")
    name = spec["builtin"]
    if name not in registry:
        raise ConfigError(
            f"unknown builtin function {name!r}; available: {sorted(registry)}"
        )
    params = spec.get("params", {})
    try:
        return registry[name](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for builtin {name!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# system types
# ---------------------------------------------------------------------------

def _as_matrix(value, name: str, rows: Optional[int] = None, cols: Optional[int] = None):
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2:
        raise ConfigError(f"{name} must be a matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} contains non-finite entries")
    if rows is not None and arr.shape[0] != rows:
        raise ConfigError(f"{name} has {arr.shape[0]} rows, expected {rows}")
    if cols is not None and arr.shape[1] != cols:
        raise ConfigError(f"{name} has {arr.shape[1]} columns, expected {cols}")
    return arr


@dataclass
class LtiSystem:
    """Constant-coefficient linear system.

    Plant dx = A x dt + B de, channel output de = K x dt + dw when a
    feedback gain K is present, observation dy = C x dt + dv when an
    output map C is present.  B defaults to the identity, C and K to
    absent.

    Parameters
    ----------
    A : (n, n) array_like
        Drift matrix.
    B : (n, m) array_like, optional
        Input matrix; identity when omitted.
    C : (p, n) array_like, optional
        Observation map.
    K : (m, n) array_like, optional
        Feedback gain producing the channel input u = K x.
    """

    A: np.ndarray
    B: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None
    K: Optional[np.ndarray] = None
    modal_form: bool = False
    n_stable: Optional[int] = None

    def __post_init__(self):
        self.A = _as_matrix(self.A, "A")
        n = self.A.shape[0]
        if self.A.shape[1] != n:
            raise ConfigError(f"A must be square, got {self.A.shape}")
        self.B = np.eye(n) if self.B is None else _as_matrix(self.B, "B", rows=n)
        if self.C is not None:
            self.C = _as_matrix(self.C, "C", cols=n)
        if self.K is not None:
            self.K = _as_matrix(self.K, "K", rows=self.B.shape[1], cols=n)
        if self.modal_form and self.n_stable is None:
            raise ConfigError("modal_form=True requires n_stable")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        """Channel (input) dimension."""
        return self.B.shape[1]


@dataclass
class LtvSystem:
    """Time-varying linear system in modal (block-diagonal) form.

    A, B, C, K are callables of time returning matrices.  The stable
    block occupies the leading ``n_stable`` coordinates and the
    antistable block the rest; block-diagonality of A is checked on a
    coarse sample of times at construction.
    """

    A: Callable[[float], np.ndarray]
    n: int
    n_stable: int
    B: Optional[Callable[[float], np.ndarray]] = None
    C: Optional[Callable[[float], np.ndarray]] = None
    K: Optional[Callable[[float], np.ndarray]] = None
    check_horizon: float = 10.0

    modal_form: bool = field(default=True, init=False)

    def __post_init__(self):
        if not callable(self.A):
            raise ConfigError("LtvSystem.A must be callable t -> (n, n) array")
        if not (0 <= self.n_stable <= self.n):
            raise ConfigError(f"n_stable={self.n_stable} outside [0, {self.n}]")
        if self.B is None:
            eye = np.eye(self.n)
            self.B = lambda t, _eye=eye: _eye
        a0 = _as_matrix(self.A(0.0), "A(0)", rows=self.n, cols=self.n)
        _as_matrix(self.B(0.0), "B(0)", rows=self.n)
        if self.C is not None:
            _as_matrix(self.C(0.0), "C(0)", cols=self.n)
        if self.K is not None:
            _as_matrix(self.K(0.0), "K(0)", cols=self.n)
        ns = self.n_stable
        scale = max(1.0, float(np.max(np.abs(a0))))
        for t in np.linspace(0.0, self.check_horizon, 17):
            at = np.atleast_2d(np.asarray(self.A(t), dtype=float))
            off = max(
                float(np.max(np.abs(at[:ns, ns:]), initial=0.0)),
                float(np.max(np.abs(at[ns:, :ns]), initial=0.0)),
            )
            if off > 1e-10 * scale:
                raise AssumptionViolatedError(
                    f"A({t:.3f}) is not block-diagonal at the declared split "
                    f"n_stable={ns} (off-block magnitude {off:.3e})"
                )

    @property
    def n_antistable(self) -> int:
        return self.n - self.n_stable

    def antistable_block(self, t: float) -> np.ndarray:
        at = np.atleast_2d(np.asarray(self.A(t), dtype=float))
        return at[self.n_stable:, self.n_stable:]


@dataclass
class NonlinearScalarSystem:
    """Scalar nonlinear plant.

    Control configuration: dx = f(t,x) dt + b(t,x) de with channel
    de = u(t, x) dt + dw (u reads the plant output, which for a scalar
    plant is the state itself).  Observation configuration:
    dx = f(t,x) dt + b(t,x) sqrt(noise_scale) dw, dy = z(t,x) dt + dv.

    noise_scale multiplies the process-noise covariance (not amplitude).
    """

    f: Callable
    b: Callable
    u: Optional[Callable] = None
    z: Optional[Callable] = None
    noise_scale: float = 1.0

    def __post_init__(self):
        for name in ("f", "b"):
            if not callable(getattr(self, name)):
                raise ConfigError(f"NonlinearScalarSystem.{name} must be callable (t, x)")
        if self.u is not None and not callable(self.u):
            raise ConfigError("NonlinearScalarSystem.u must be callable (t, e)")
        if self.z is not None and not callable(self.z):
            raise ConfigError("NonlinearScalarSystem.z must be callable (t, x)")
        if self.noise_scale < 0:
            raise ConfigError(f"noise_scale must be nonnegative, got {self.noise_scale}")

    def drift_closed(self, t, x):
        """Closed-loop drift f + b u, defined when a control law is present."""
        if self.u is None:
            return self.f(t, x)
        return self.f(t, x) + self.b(t, x) * self.u(t, x)


# ---------------------------------------------------------------------------
# config ingestion
# ---------------------------------------------------------------------------

def _matrix_fn_from_config(spec, name: str) -> Callable[[float], np.ndarray]:
    """Matrix-of-time from config: nested list = constant, dict = builtin."""
    if isinstance(spec, (list, tuple)):
        mat = _as_matrix(spec, name)
        return lambda t, _m=mat: _m
    if isinstance(spec, dict) and spec.get("builtin") == "diag_scalars":
        entries = [resolve_time_fn(e) for e in spec.get("params", {}).get("entries", [])]
        if not entries:
            raise ConfigError(f"{name}: diag_scalars needs a non-empty 'entries' list")

        def fn(t, _entries=entries):
            return np.diag([float(e(t)) for e in _entries])
        return fn
    raise ConfigError(
        f"{name} must be a constant matrix or a diag_scalars builtin, got {spec!r}"
    )


def system_from_config(cfg: dict):
    """Build a system object from a plain-dict description.

    ``kind`` selects the flavor: "lti", "ltv" or "nonlinear".  Matrices
    are row-major nested lists; time-varying and nonlinear functions are
    named builtins with scalar parameters.
    """
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ConfigError("system config must be a mapping with a 'kind' key")
    kind = cfg["kind"]
    if kind == "lti":
        return LtiSystem(
            A=cfg["A"],
            B=cfg.get("B"),
            C=cfg.get("C"),
            K=cfg.get("K"),
            modal_form=cfg.get("modal_form", False),
            n_stable=cfg.get("n_stable"),
        )
    if kind == "ltv":
        if "n" not in cfg or "n_stable" not in cfg:
            raise ConfigError("ltv system config requires 'n' and 'n_stable'")
        out = {}
        for name in ("A", "B", "C", "K"):
            if name in cfg and cfg[name] is not None:
                out[name] = _matrix_fn_from_config(cfg[name], name)
        if "A" not in out:
            raise ConfigError("ltv system config requires 'A'")
        return LtvSystem(
            A=out["A"],
            n=int(cfg["n"]),
            n_stable=int(cfg["n_stable"]),
            B=out.get("B"),
            C=out.get("C"),
            K=out.get("K"),
        )
    if kind == "nonlinear":
        if "f" not in cfg or "b" not in cfg:
            raise ConfigError("nonlinear system config requires 'f' and 'b'")
        return NonlinearScalarSystem(
            f=resolve_state_fn(cfg["f"]),
            b=resolve_state_fn(cfg["b"]),
            u=resolve_state_fn(cfg["u"]) if cfg.get("u") is not None else None,
            z=resolve_state_fn(cfg["z"]) if cfg.get("z") is not None else None,
            noise_scale=float(cfg.get("noise_scale", 1.0)),
        )
    raise ConfigError(f"unknown system kind {kind!r}")


# ---------------------------------------------------------------------------
# spectral summaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralSummary:
    """Eigenvalue bookkeeping for an LTI drift matrix."""

    eigenvalues: np.ndarray
    unstable_sum: float
    n_unstable: int
    n_stable: int


@dataclass(frozen=True)
class ModalDecomposition:
    """Similarity transform splitting stable and antistable dynamics.

    The transformed state is xi = T x; the returned system has drift
    T A T_inv = diag(A_s, A_u) with the stable block leading.
    """

    T: np.ndarray
    T_inv: np.ndarray
    n_stable: int
    n_antistable: int
    system: LtiSystem

    @property
    def antistable_A(self) -> np.ndarray:
        return self.system.A[self.n_stable:, self.n_stable:]


@dataclass(frozen=True)
class LyapunovEstimate:
    """Lyapunov exponents with a convergence diagnostic.

    ``tail_deviation`` is the largest per-exponent difference between the
    full-horizon estimate and the estimate over the last quarter window;
    large values mean the averages have not settled.
    """

    exponents: np.ndarray
    tail_deviation: float
    horizon: float
    dt: float


def unstable_pole_sum(sys: LtiSystem, eig_zero_tol: float = EIG_ZERO_TOL) -> SpectralSummary:
    """Sum of real parts of eigenvalues in the open right half plane.

    Raises
    ------
    NoDichotomyError
        If any eigenvalue has |Re| < eig_zero_tol; such a mode cannot be
        assigned to either side of the split.
    """
    eig = np.linalg.eigvals(sys.A)
    for lam in eig:
        if abs(lam.real) < eig_zero_tol:
            raise NoDichotomyError(lam, eig_zero_tol)
    unstable = eig[eig.real > 0]
    return SpectralSummary(
        eigenvalues=eig,
        unstable_sum=float(np.sum(unstable.real)),
        n_unstable=int(unstable.size),
        n_stable=int(eig.size - unstable.size),
    )


def modal_decompose(sys: LtiSystem, eig_zero_tol: float = EIG_ZERO_TOL) -> ModalDecomposition:
    """Split an LTI system into decoupled stable and antistable blocks.

    Uses an ordered real Schur form (stable eigenvalues leading) followed
    by a Sylvester solve to cancel the remaining upper coupling block.
    Complex pairs stay together as 2x2 real blocks and are assigned by
    the sign of their shared real part.

    Returns
    -------
    ModalDecomposition
        With T orthogonal times a unipotent factor; T @ T_inv = I to
        rounding.  The transformed system carries B, C, K mapped into
        modal coordinates.
    """
    summary = unstable_pole_sum(sys, eig_zero_tol)  # refuses marginal modes
    n = sys.n
    t_schur, z, n_s = scipy.linalg.schur(sys.A, output="real", sort="lhp")
    n_s = int(n_s)
    if n_s != summary.n_stable:
        raise NumericalBreakdownError(
            f"Schur ordering found {n_s} stable eigenvalues, eigvals found "
            f"{summary.n_stable}; spectrum too close to the axis"
        )
    if 0 < n_s < n:
        a11 = t_schur[:n_s, :n_s]
        a12 = t_schur[:n_s, n_s:]
        a22 = t_schur[n_s:, n_s:]
        x = scipy.linalg.solve_sylvester(a11, -a22, -a12)
        m = np.eye(n)
        m[:n_s, n_s:] = x
        m_inv = np.eye(n)
        m_inv[:n_s, n_s:] = -x
        t_inv = z @ m          # new state xi = T x with x = T_inv xi
        t = m_inv @ z.T
    else:
        t_inv = z
        t = z.T
    a_m = t @ sys.A @ t_inv
    off = max(
        float(np.max(np.abs(a_m[:n_s, n_s:]), initial=0.0)),
        float(np.max(np.abs(a_m[n_s:, :n_s]), initial=0.0)),
    )
    scale = max(1.0, float(np.max(np.abs(sys.A))))
    if off > 1e-8 * scale:
        raise NumericalBreakdownError(
            f"modal decoupling residual {off:.3e} too large; "
            "eigenvalue clusters may be ill-conditioned"
        )
    a_m[:n_s, n_s:] = 0.0
    a_m[n_s:, :n_s] = 0.0
    transformed = LtiSystem(
        A=a_m,
        B=t @ sys.B,
        C=None if sys.C is None else sys.C @ t_inv,
        K=None if sys.K is None else sys.K @ t_inv,
        modal_form=True,
        n_stable=n_s,
    )
    return ModalDecomposition(
        T=t, T_inv=t_inv, n_stable=n_s, n_antistable=n - n_s, system=transformed
    )


def _eval_A(sys, t: float) -> np.ndarray:
    a = sys.A
    if callable(a):
        return np.atleast_2d(np.asarray(a(t), dtype=float))
    return a


def lyapunov_exponents(
    sys,
    grid: TimeGrid,
    qr_interval: Optional[int] = None,
) -> LyapunovEstimate:
    """Lyapunov exponents by QR re-orthonormalization of the fundamental matrix.

    The fundamental matrix is advanced with RK4 and re-orthonormalized
    every ``qr_interval`` steps; exponents are the time averages of the
    accumulated log |diag R|, sorted descending.

    Parameters
    ----------
    sys : LtiSystem or LtvSystem
    grid : TimeGrid
        Must resolve at least 100 steps.
    qr_interval : int, optional
        Steps between factorizations.  Defaults to every step for
        dt >= 1e-2 and every 10 steps for finer grids.
    """
    if grid.n_steps < 100:
        raise ConfigError(
            f"lyapunov_exponents needs >= 100 steps, grid has {grid.n_steps}"
        )
    if qr_interval is None:
        qr_interval = 1 if grid.dt >= 1e-2 else 10
    n = sys.n
    dt = grid.dt
    y = np.eye(n)
    logs = np.zeros(n)
    quarter_time = grid.t0 + 0.75 * grid.horizon
    logs_at_quarter = None
    t = grid.t0
    for step in range(grid.n_steps):
        a1 = _eval_A(sys, t)
        a2 = _eval_A(sys, t + 0.5 * dt)
        a3 = a2
        a4 = _eval_A(sys, t + dt)
        k1 = a1 @ y
        k2 = a2 @ (y + 0.5 * dt * k1)
        k3 = a3 @ (y + 0.5 * dt * k2)
        k4 = a4 @ (y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += dt
        if (step + 1) % qr_interval == 0 or step == grid.n_steps - 1:
            mag = float(np.max(np.abs(y)))
            if not np.isfinite(mag) or mag > 1e12:
                raise NumericalBreakdownError(
                    "fundamental matrix overflow; shorten qr_interval", step=step
                )
            q, r = np.linalg.qr(y)
            diag = np.abs(np.diag(r))
            if np.any(diag <= 0.0):
                raise NumericalBreakdownError(
                    "rank loss in fundamental matrix", step=step
                )
            logs += np.log(diag)
            y = q
        if logs_at_quarter is None and t >= quarter_time - 0.5 * dt:
            logs_at_quarter = logs.copy()
    horizon = grid.horizon
    full = logs / horizon
    if logs_at_quarter is None:
        tail_dev = float("inf")
    else:
        tail = (logs - logs_at_quarter) / (0.25 * horizon)
        tail_dev = float(np.max(np.abs(full - tail)))
    order = np.argsort(full)[::-1]
    return LyapunovEstimate(
        exponents=full[order], tail_deviation=tail_dev, horizon=horizon, dt=dt
    )


def antistable_trace_integral(sys, horizon: float, t0: float = 0.0) -> float:
    """Time average of tr A_u over [t0, t0 + horizon] by adaptive quadrature.

    Requires a system already in modal form; the antistable block is the
    trailing diagonal block.
    """
    if not getattr(sys, "modal_form", False):
        raise AssumptionViolatedError(
            "antistable_trace_integral requires a system in modal form"
        )
    if horizon <= 0:
        raise ConfigError(f"horizon must be positive, got {horizon}")
    if isinstance(sys, LtiSystem):
        n_s = sys.n_stable
        return float(np.trace(sys.A[n_s:, n_s:]))
    value, _err = scipy.integrate.quad(
        lambda tau: float(np.trace(sys.antistable_block(tau))),
        t0,
        t0 + horizon,
        limit=500,
    )
    return value / horizon
