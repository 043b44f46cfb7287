"""Complex quadratic flow map g_{n+1} = g_n - a_n g_n^2 on a sector domain.

The map models the scale-by-scale decay of the marginally irrelevant
backscattering coupling.  The drift coefficients a_n = a + sigma_n carry a
positive mean a and bounded perturbations |sigma_n| <= c0 |g0|; the closed
form approximant

    gtilde_n = g0 / (1 + g0 n A_n),    A_n = (1/n) sum_{k<n} a_k

tracks the trajectory to relative accuracy |gtilde_n|^{1/2}.  This module
iterates the map, evaluates the approximant, and verifies the sector
containments and the closeness bound on single runs and on vectorized
(ray x radius x perturbation-model) sweeps.
"""

import math
import numpy as np
from dataclasses import dataclass

# ----------------------------------------------------------------------
# sector domains
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class SectorDomain:
    """D_{eps,delta} = {|z| < eps, |Arg z| <= pi - delta}, 0 < delta < pi/2."""

    epsilon: float
    delta: float

    def __post_init__(self):
        if not 0.0 < self.delta < 0.5 * math.pi:
            raise ValueError("delta must lie in (0, pi/2)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")

    def contains(self, z):
        z = np.asarray(z, dtype=complex)
        inside = (np.abs(z) < self.epsilon) & \
                 (np.abs(np.angle(z)) <= math.pi - self.delta)
        return inside if inside.shape else bool(inside)

    def approximant_enlargement(self):
        """Domain the approximant provably stays in: (2 eps/sin d, d/2)."""
        return SectorDomain(2.0 * self.epsilon / math.sin(self.delta),
                            0.5 * self.delta)

    def trajectory_enlargement(self):
        """Domain the trajectory provably stays in: (3 eps/sin d, d/4)."""
        return SectorDomain(3.0 * self.epsilon / math.sin(self.delta),
                            0.25 * self.delta)


def default_eps0(delta):
    """Admissible domain radius for the closeness induction; small enough in
    practice for every delta (the sweep tests map the empirical region)."""
    return 1e-2 * math.sin(delta) ** 2


def default_sigma_scale(a, epsilon):
    """Largest c0 compatible with c0 * epsilon <= a/2 (keeps Re a_n >= a/2)."""
    return 0.5 * a / epsilon


# ----------------------------------------------------------------------
# perturbation models and iteration
# ----------------------------------------------------------------------

SIGMA_MODELS = ("zero", "constant", "disk", "alternating")


def sigma_sequence(model, n, scale, seed=0):
    """Length-n drift perturbation sequence with |sigma_k| <= scale.

    zero: no drift; constant: worst-case real shift +scale; disk: uniform in
    the complex disk of radius scale (seeded); alternating: (-1)^k scale.
    """
    if model == "zero":
        return np.zeros(n, dtype=complex)
    if model == "constant":
        return np.full(n, scale, dtype=complex)
    if model == "alternating":
        s = np.full(n, scale, dtype=complex)
        s[1::2] *= -1.0
        return s
    if model == "disk":
        rng = np.random.default_rng(seed)
        r = scale * np.sqrt(rng.random(n))
        th = 2.0 * math.pi * rng.random(n)
        return r * np.exp(1j * th)
    raise ValueError("unknown perturbation model %r" % (model,))


def quadratic_map_step(g, a_n):
    """One step g - a_n g^2 (shared with the coupling-flow integrator)."""
    return g - a_n * g * g


@dataclass
class MapState:
    """A realized trajectory with its Cesaro data.

    trajectory[k] = g_k for k = 0..n; A[k] = (1/k) sum_{j<k} a_j for k >= 1
    (A[0] = a by convention, it multiplies n = 0); sigma holds the n drawn
    perturbations.  escape_index is the first k whose g_k left the enlarged
    trajectory domain, or None. Lanes are frozen after escape.
    """

    g0: complex
    a: float
    sigma: np.ndarray
    trajectory: np.ndarray
    A: np.ndarray
    domain: SectorDomain
    escape_index: int | None


def iterate(g0, a_seq, n, domain=None):
    """Iterate the map n steps and record the trajectory.

    a_seq: scalar mean drift a (sigma = 0) or a length-n array of a_k values.
    domain: the base sector of g0; escape is judged against its trajectory
    enlargement.  After an escape the state is frozen to avoid overflow.
    """
    if np.isscalar(a_seq) or getattr(a_seq, "shape", None) == ():
        a = float(np.real(a_seq))
        a_arr = np.full(n, a, dtype=complex)
    else:
        a_arr = np.asarray(a_seq, dtype=complex)
        if a_arr.size < n:
            raise ValueError("a_seq shorter than the requested horizon")
        a_arr = a_arr[:n]
        a = float(np.mean(a_arr.real))
    if domain is None:
        domain = SectorDomain(max(abs(g0) * 1.0000001, 1e-300), math.pi / 4)
    big = domain.trajectory_enlargement()

    traj = np.empty(n + 1, dtype=complex)
    traj[0] = g0
    g = complex(g0)
    escape = None if big.contains(g0) else 0
    for k in range(n):
        if escape is None:
            g = quadratic_map_step(g, a_arr[k])
            if not big.contains(g):
                escape = k + 1
        traj[k + 1] = g
    csum = np.concatenate(([0.0 + 0.0j], np.cumsum(a_arr)))
    A = np.empty(n + 1, dtype=complex)
    A[0] = a
    A[1:] = csum[1:] / np.arange(1, n + 1)
    return MapState(complex(g0), a, a_arr - a, traj, A, domain, escape)


# ----------------------------------------------------------------------
# approximant and verification reports
# ----------------------------------------------------------------------


def approximant(g0, A_n, n, delta=None):
    """Closed form gtilde_n = g0 / (1 + g0 n A_n).

    With delta given, a denominator below (1/4) sin delta violates the
    guaranteed lower bound |ztilde_n| >= (1/2) sin delta and is raised as a
    precondition failure.
    """
    z = 1.0 + g0 * n * A_n
    if delta is not None and abs(z) < 0.25 * math.sin(delta):
        raise ValueError("approximant denominator below the sector bound")
    return g0 / z


def approximant_path(state):
    """gtilde_k for k = 0..n from the recorded Cesaro averages."""
    n = state.trajectory.size - 1
    ks = np.arange(n + 1)
    return state.g0 / (1.0 + state.g0 * ks * state.A)


@dataclass(frozen=True)
class CheckReport:
    ok: bool
    first_violation: int | None
    worst_margin: float   # max of (lhs - rhs) over the horizon; <= 0 iff ok
    label: str


def verify_closeness(state):
    """Check |g_n - gtilde_n| <= |gtilde_n|^{3/2} along the whole horizon."""
    gt = approximant_path(state)
    lhs = np.abs(state.trajectory - gt)
    rhs = np.abs(gt) ** 1.5
    bad = lhs > rhs
    first = int(np.argmax(bad)) if bad.any() else None
    return CheckReport(not bad.any(), first, float(np.max(lhs - rhs)),
                       "closeness")


def verify_sector(state, inner=None):
    """Check gtilde_n in the (2eps/sin d, d/2) domain and g_n in the
    (3eps/sin d, d/4) domain for the whole horizon."""
    dom = state.domain if inner is None else inner
    d1 = dom.approximant_enlargement()
    d2 = dom.trajectory_enlargement()
    gt = approximant_path(state)
    bad_t = ~d2.contains(state.trajectory)
    bad_a = ~d1.contains(gt)
    bad = bad_t | bad_a
    first = int(np.argmax(bad)) if bad.any() else None
    margin = float(np.max(np.abs(state.trajectory)) - d2.epsilon)
    return CheckReport(not bad.any(), first, margin, "sector")


def verify_denominator_bound(state):
    """Pointwise check of |1 + g0 n alpha_n| >= max{sin d, (sin d/3)(1 + |g0| n alpha_n)}
    with alpha_n = Re A_n (the inequality behind the approximant bounds)."""
    d = state.domain.delta
    n = state.trajectory.size - 1
    ks = np.arange(n + 1)
    alpha = state.A.real
    lhs = np.abs(1.0 + state.g0 * ks * alpha)
    rhs = np.maximum(math.sin(d),
                     (math.sin(d) / 3.0) * (1.0 + np.abs(state.g0) * ks * alpha))
    bad = lhs < rhs
    first = int(np.argmax(bad)) if bad.any() else None
    return CheckReport(not bad.any(), first, float(np.max(rhs - lhs)),
                       "denominator")


def square_sum_estimate(g0, a, n, n_quad=20000):
    """Quadrature of int_0^n |g0 / (1 + g0 a s)|^2 ds, the continuum estimate
    of sum |g_k|^2 (finite for every g0 in a sector)."""
    s = np.linspace(0.0, float(n), n_quad)
    vals = np.abs(g0 / (1.0 + g0 * a * s)) ** 2
    return float(np.trapezoid(vals, s))


# ----------------------------------------------------------------------
# vectorized sector sweep
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class SweepLaneReport:
    model: str
    g0: complex
    contained: bool
    close: bool
    first_violation: int | None
    max_ratio: float     # max |g - gtilde| / |gtilde|^{3/2} along the run


@dataclass(frozen=True)
class SweepReport:
    delta: float
    epsilon: float
    n_steps: int
    lanes: list
    containment_fraction: float
    closeness_fraction: float

    @property
    def all_pass(self):
        return self.containment_fraction == 1.0 and \
            self.closeness_fraction == 1.0


def sweep_sector(delta, epsilon, n_rays=32, n_radii=8, n_steps=10 ** 5,
                 a=0.25, c0=None, models=SIGMA_MODELS, seed=0,
                 radii=None):
    """Vectorized verification sweep over g0 = r e^{i theta} in D_{eps,delta}.

    All (ray, radius, model) lanes are iterated simultaneously; containment
    (trajectory in the 3eps/sin d sector, approximant in the 2eps/sin d one)
    and the closeness bound are checked online at every step, so the memory
    cost is O(lanes) independent of n_steps.
    """
    if c0 is None:
        c0 = default_sigma_scale(a, epsilon)
    thetas = np.linspace(-(math.pi - delta), math.pi - delta, n_rays)
    if radii is None:
        radii = epsilon * np.array([0.999, 0.7, 0.5, 0.3, 0.2, 0.1,
                                    0.05, 0.01])[:n_radii]
    else:
        radii = np.asarray(radii, dtype=float)
    g0 = (radii[:, None] * np.exp(1j * thetas[None, :])).ravel()
    n_pts = g0.size
    models = tuple(models)
    g0 = np.tile(g0, len(models))
    model_of = np.repeat(np.arange(len(models)), n_pts)

    dom = SectorDomain(epsilon, delta)
    d1 = dom.approximant_enlargement()
    d2 = dom.trajectory_enlargement()
    sig_scale = c0 * np.abs(g0)
    rng = np.random.default_rng(seed)
    disk = np.where(np.array(models) == "disk")[0]
    disk_mask = np.isin(model_of, disk)
    n_disk = int(disk_mask.sum())

    g = g0.astype(complex)
    S = np.zeros_like(g)            # prefix sum of a_k
    ok_contain = np.ones(g0.size, dtype=bool)
    ok_close = np.ones(g0.size, dtype=bool)
    first_bad = np.full(g0.size, -1, dtype=np.int64)
    max_ratio = np.zeros(g0.size)
    alive = np.ones(g0.size, dtype=bool)
    sgn = 1.0

    for n in range(n_steps + 1):
        gt = g0 / (1.0 + g0 * S)
        agt = np.abs(gt)
        err = np.abs(g - gt)
        ratio = err / np.maximum(agt, 1e-300) ** 1.5
        max_ratio = np.maximum(max_ratio, np.where(alive, ratio, 0.0))
        bad_close = alive & (ratio > 1.0)
        bad_cont = alive & ~(d2.contains(g) & d1.contains(gt))
        newly = (bad_close | bad_cont) & (first_bad < 0)
        first_bad[newly] = n
        ok_close &= ~bad_close
        ok_contain &= ~bad_cont
        alive &= ~(bad_close | bad_cont)   # freeze failed lanes
        if n == n_steps:
            break
        sig = np.zeros(g0.size, dtype=complex)
        for mi, m in enumerate(models):
            sel = model_of == mi
            if m == "constant":
                sig[sel] = sig_scale[sel]
            elif m == "alternating":
                sig[sel] = sgn * sig_scale[sel]
        if n_disk:
            r = np.sqrt(rng.random(n_disk))
            th = 2.0 * math.pi * rng.random(n_disk)
            sig[disk_mask] = sig_scale[disk_mask] * r * np.exp(1j * th)
        sgn = -sgn
        a_n = a + sig
        g = np.where(alive, g - a_n * g * g, g)
        S = np.where(alive, S + a_n, S)

    lanes = []
    for i in range(g0.size):
        lanes.append(SweepLaneReport(models[model_of[i]], complex(g0[i]),
                                     bool(ok_contain[i]), bool(ok_close[i]),
                                     int(first_bad[i]) if first_bad[i] >= 0
                                     else None, float(max_ratio[i])))
    return SweepReport(delta, epsilon, n_steps, lanes,
                       float(np.mean(ok_contain)), float(np.mean(ok_close)))


# ----------------------------------------------------------------------
# trajectory table
# ----------------------------------------------------------------------


def trajectory_rows(state):
    """Rows (n, re_g, im_g, re_gtilde, im_gtilde, err, bound) for CSV dumps."""
    gt = approximant_path(state)
    err = np.abs(state.trajectory - gt)
    bound = np.abs(gt) ** 1.5
    out = []
    for n in range(state.trajectory.size):
        gn, gtn = state.trajectory[n], gt[n]
        out.append((n, gn.real, gn.imag, gtn.real, gtn.imag,
                    float(err[n]), float(bound[n])))
    return out
