"""Temperature grids, annealing schedules, and temperature-posterior updates.

The grid always starts at T=1 so the non-tempered model stays reachable.
Posteriors over the grid are multinomials updated in closed form from
expected log-likelihood statistics; all softmax computations subtract the
max logit before exponentiating.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError

__all__ = [
    "TemperatureGrid",
    "TemperaturePosterior",
    "AnnealSchedule",
    "make_exponential_grid",
    "make_inverse_temp_grid",
    "schedule_temperature",
    "expected_inverse_temperature",
    "expected_temperature",
    "update_global_temperature",
    "update_local_temperature",
    "update_local_temperature_conditional",
    "softmax_from_logits",
]


def softmax_from_logits(logits):
    """Normalized exponential of ``logits`` with max subtraction.

    Shift-invariant: adding a constant to every logit leaves the result
    unchanged up to floating-point rounding.  The returned vector is
    renormalized so it sums to 1 exactly up to one final division.
    """
    logits = np.asarray(logits, dtype=float)
    if logits.size == 0:
        raise ValueError("empty logit vector")
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite logits")
    w = np.exp(logits - logits.max())
    r = w / w.sum()
    return r / r.sum()


@dataclass(frozen=True)
class TemperatureGrid:
    """Strictly increasing ladder of temperatures with T_1 = 1."""

    temps: np.ndarray
    spacing: str = "exponential"

    def __post_init__(self):
        temps = np.asarray(self.temps, dtype=float)
        object.__setattr__(self, "temps", temps)
        if temps.ndim != 1 or temps.size < 1:
            raise ValueError("grid must be a non-empty 1-D array")
        if not np.all(np.isfinite(temps)):
            raise ValueError("grid temperatures must be finite")
        if temps[0] != 1.0:
            raise ValueError("first grid temperature must be exactly 1")
        if temps.size > 1 and not np.all(np.diff(temps) > 0):
            raise ValueError("grid temperatures must be strictly increasing")

    @property
    def m(self) -> int:
        return int(self.temps.size)

    @property
    def inverse_temps(self) -> np.ndarray:
        return 1.0 / self.temps

    def same_as(self, other: "TemperatureGrid") -> bool:
        return self.m == other.m and bool(np.array_equal(self.temps, other.temps))


@dataclass(frozen=True)
class TemperaturePosterior:
    """Multinomial posterior over a temperature grid.

    ``pi`` holds the fixed prior weights; it defaults to uniform 1/M.
    """

    r: np.ndarray
    grid: TemperatureGrid
    pi: np.ndarray = None

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        object.__setattr__(self, "r", r)
        if r.shape != (self.grid.m,):
            raise ValueError("posterior length must match the grid")
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise ValueError("posterior weights must be finite and nonnegative")
        if abs(r.sum() - 1.0) > 1e-12:
            raise ValueError("posterior weights must sum to 1 within 1e-12")
        pi = self.pi
        if pi is None:
            pi = np.full(self.grid.m, 1.0 / self.grid.m)
        else:
            pi = np.asarray(pi, dtype=float)
            if pi.shape != (self.grid.m,):
                raise ValueError("prior weights must match the grid")
        object.__setattr__(self, "pi", pi)

    @classmethod
    def uniform(cls, grid: TemperatureGrid, pi=None) -> "TemperaturePosterior":
        return cls(np.full(grid.m, 1.0 / grid.m), grid, pi)


@dataclass(frozen=True)
class AnnealSchedule:
    """Linear temperature decay from ``t0`` down to 1.

    ``ta`` is the schedule length in effective passes through the data;
    the emitted temperature is refreshed every ``update_every`` iterations
    and held constant in between.
    """

    t0: float
    ta: float
    update_every: int = 1

    def __post_init__(self):
        if self.t0 < 1.0:
            raise ValueError("start temperature must be >= 1")
        if self.ta <= 0:
            raise ValueError("schedule length must be positive")
        if self.update_every < 1:
            raise ValueError("update_every must be >= 1")


def make_exponential_grid(m: int, t_min: float, t_max: float) -> TemperatureGrid:
    """Geometric ladder of ``m`` temperatures from ``t_min`` to ``t_max`` inclusive.

    ``t_min`` must be exactly 1 so the ladder contains the original model.
    ``m = 1`` yields the single-point grid {1}.
    """
    if m < 1:
        raise ValueError("need at least one temperature")
    if t_min != 1.0:
        raise ValueError("lowest temperature must be 1 to recover the original model")
    if t_max < t_min:
        raise ValueError("t_max must be >= t_min")
    if m == 1:
        return TemperatureGrid(np.array([1.0]), spacing="exponential")
    temps = np.geomspace(t_min, t_max, m)
    temps[0] = 1.0
    temps[-1] = float(t_max)
    return TemperatureGrid(temps, spacing="exponential")


def make_inverse_temp_grid(m: int) -> TemperatureGrid:
    """Ladder defined by inverse temperatures m/M, ..., 1 evenly spaced in (0, 1].

    Zero is excluded (T = infinity is improper); the endpoint 1 is included
    so the non-tempered model is attainable.  Temperatures are stored in
    increasing order.
    """
    if m < 1:
        raise ValueError("need at least one temperature")
    inv = np.arange(m, 0, -1, dtype=float) / m  # 1, (m-1)/m, ..., 1/m
    temps = 1.0 / inv
    temps[0] = 1.0
    return TemperatureGrid(temps, spacing="inverse-linear")


def schedule_temperature(schedule: AnnealSchedule, t: int, iters_per_pass: float) -> float:
    """Temperature emitted by a linear annealing schedule at iteration ``t``.

    Interpolates from ``t0`` at t=0 to 1 at t = ta * iters_per_pass and
    clamps at 1 afterwards.  Between refreshes (every ``update_every``
    iterations) the value is held at the last refresh point.
    """
    if t < 0:
        raise ValueError("iteration must be nonnegative")
    span = schedule.ta * iters_per_pass
    if t >= span:
        return 1.0
    t_eff = (t // schedule.update_every) * schedule.update_every
    frac = min(t_eff / span, 1.0)
    return max(schedule.t0 + (1.0 - schedule.t0) * frac, 1.0)


def expected_inverse_temperature(post: TemperaturePosterior) -> float:
    """E[1/T_y] = sum_m r_m / T_m; always in (0, 1]."""
    return float(np.dot(post.r, post.grid.inverse_temps))


def expected_temperature(post: TemperaturePosterior) -> float:
    """E[T_y] = sum_m r_m T_m."""
    return float(np.dot(post.r, post.grid.temps))


def _check_pi(pi, m):
    if pi is None:
        return np.full(m, 1.0 / m)
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (m,):
        raise ValueError("prior weights must have one entry per temperature")
    if np.any(pi <= 0):
        raise ValueError("prior weights must be positive")
    return pi


def update_global_temperature(sum_expected_loglik: float, grid: TemperatureGrid,
                              pi, table) -> TemperaturePosterior:
    """Closed-form update of the global temperature posterior.

    ``sum_expected_loglik`` is the full-data statistic
    sum_i E_q[log p(x_i, z_i | beta)]; in stochastic mode the caller passes
    N times the minibatch mean.  The update is

        r_m \\propto exp{ S / T_m + log pi_m - log C(T_m) },

    normalized by max subtraction.
    """
    if not np.isfinite(sum_expected_loglik):
        raise ValueError("non-finite log-likelihood statistic")
    if not table.grid.same_as(grid):
        raise ConfigurationError("partition table grid does not match the temperature grid")
    pi = _check_pi(pi, grid.m)
    logits = sum_expected_loglik / grid.temps + np.log(pi) - table.log_c
    return TemperaturePosterior(softmax_from_logits(logits), grid, pi)


def update_local_temperature(datum_expected_tempered_loglik, grid: TemperatureGrid,
                             pi, prior_outside_bracket: bool = False) -> TemperaturePosterior:
    """Per-datum temperature posterior update.

    The input vector holds E_q[log p(x_i, z_i | beta/T_m)], one entry per
    grid temperature.  The default update keeps the log-prior inside the
    1/T_m bracket,

        r_m \\propto exp{ (1/T_m) (L_m + log pi_m) };

    ``prior_outside_bracket`` switches to (1/T_m) L_m + log pi_m for
    sensitivity analysis.  Note that for realistically sized data both
    bracketed variants are dominated by the 1/T_m damping of the (negative)
    likelihood and pin the posterior at the hottest temperature; training
    uses :func:`update_local_temperature_conditional` by default.
    """
    ll = np.asarray(datum_expected_tempered_loglik, dtype=float)
    if ll.shape != (grid.m,):
        raise ValueError("need one tempered log-likelihood per grid temperature")
    pi = _check_pi(pi, grid.m)
    if prior_outside_bracket:
        logits = ll / grid.temps + np.log(pi)
    else:
        logits = (ll + np.log(pi)) / grid.temps
    return TemperaturePosterior(softmax_from_logits(logits), grid, pi)


def update_local_temperature_conditional(datum_expected_tempered_loglik,
                                         grid: TemperatureGrid, pi) -> TemperaturePosterior:
    """Per-datum temperature update from the exact complete conditional.

    The conditional of a local temperature assignment is
    p(T_i = T_m | rest) \\propto p(x_i, z_i | beta/T_m) pi_m, giving

        r_m \\propto exp{ L_m + log pi_m }

    without any outer 1/T_m damping.  This is the rule the training engine
    uses: unlike the bracketed variants it lets well-fit data concentrate
    on T = 1.
    """
    ll = np.asarray(datum_expected_tempered_loglik, dtype=float)
    if ll.shape != (grid.m,):
        raise ValueError("need one tempered log-likelihood per grid temperature")
    pi = _check_pi(pi, grid.m)
    return TemperaturePosterior(softmax_from_logits(ll + np.log(pi)), grid, pi)
