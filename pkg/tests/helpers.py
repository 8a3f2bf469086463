"""Shared builders and independent oracles for the test suite.

Oracles here recompute answers from first principles (exhaustive plan
enumeration, LP vertex enumeration, big-M feasibility) so that a bug in
the library cannot hide behind shared code paths.
"""
import itertools

import numpy as np

from nortagrid.grid import (
    Branch,
    Bus,
    GridInstance,
    HardeningPlan,
    InstanceSpec,
    Substation,
    generate_instance,
)
from nortagrid.lp import LpProblem
from nortagrid.norta import ScenarioSet
from nortagrid.twostage import RecourseSolver, TwoStageProblem


def two_bus_grid(susceptance=1.0, capacity=10.0, demand=5.0, budget=100.0):
    """Generator bus 0 (safe) feeds demand bus 1 (flooded substation 1)
    over a single branch. Hardening substation 1 costs 1 + h."""
    subs = [
        Substation(0, False, 1.0, 1.0, 5),
        Substation(1, True, 1.0, 1.0, 5),
    ]
    buses = [
        Bus(0, 0, 0.0, 0.0, 20.0),
        Bus(1, 1, demand, 0.0, 0.0),
    ]
    branches = [Branch(0, 0, 1, susceptance, capacity)]
    return GridInstance(subs, buses, branches, reference_bus=0, budget=budget)


def star_grid(n_flooded=2, demand=5.0, budget=100.0):
    """Safe hub substation with a big generator, one demand bus per
    flooded substation, all wired to the hub. Shed is separable across
    the flooded substations, so optima are easy to reason about."""
    subs = [Substation(0, False, 1.0, 1.0, 5)]
    buses = [Bus(0, 0, 0.0, 0.0, demand * n_flooded * 4.0)]
    branches = []
    for i in range(1, n_flooded + 1):
        subs.append(Substation(i, True, 1.0, 1.0, 5))
        buses.append(Bus(i, i, demand, 0.0, 0.0))
        branches.append(Branch(i - 1, 0, i, 1000.0, demand * n_flooded * 4.0))
    return GridInstance(subs, buses, branches, reference_bus=0, budget=budget)


def small_instance(seed, *, n_substations=None, n_flooded=None, n_scenarios=None,
                   max_height=3, budget=None):
    """Random capacity-adequate instance small enough for enumeration."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5)) if n_substations is None else n_substations
    nf = int(rng.integers(1, n + 1)) if n_flooded is None else n_flooded
    k = int(rng.integers(2, 9)) if n_scenarios is None else n_scenarios
    spec = InstanceSpec(
        n_substations=n,
        n_flooded=nf,
        buses_per_substation=int(rng.integers(1, 3)),
        topology=str(rng.choice(["ring", "tree", "grid"])),
        n_scenarios=k,
        max_height=max_height,
        budget=float(rng.uniform(0.0, 12.0)) if budget is None else budget,
        seed=int(rng.integers(0, 2 ** 31)),
    )
    return generate_instance(spec)


def enumerate_first_stage(problem: TwoStageProblem, budget, *, solver=None):
    """Exhaustive SAA optimum over every budget-feasible integer plan.

    Enumerates the full height range 0..max_height per substation (no
    dominance trimming) and returns (best value, list of optimal height
    tuples). Shed values come from the same solver cache the search
    under test uses, so value comparisons are not polluted by LP noise.
    """
    grid = problem.grid
    flooded = grid.flooded_substations()
    solver = solver or RecourseSolver(grid)
    probs = problem.scenarios.probs
    scen = problem.scenarios.scenarios
    best_val, best_plans = None, []
    for combo in itertools.product(*[range(s.max_height + 1) for s in flooded]):
        plan = HardeningPlan(np.asarray(combo, dtype=int))
        if plan.cost(grid) > budget + 1e-9:
            continue
        sheds = np.array([solver.shed_for(plan, scen[j]) for j in range(len(probs))])
        val = problem.stage_cost(plan.heights) + float(probs @ sheds)
        if best_val is None or val < best_val - 1e-12:
            best_val, best_plans = val, [combo]
        elif abs(val - best_val) <= 1e-12:
            best_plans.append(combo)
    return best_val, best_plans


def _combo_cache():
    cache = {}

    def combos(n_rows, k):
        key = (n_rows, k)
        if key not in cache:
            cache[key] = np.array(list(itertools.combinations(range(n_rows), k)),
                                  dtype=int)
        return cache[key]

    return combos


_combos = _combo_cache()


def lp_vertex_oracle(c, a_ub, b_ub, a_eq, b_eq, lower, upper, tol=1e-7):
    """Solve min c.x s.t. a_ub x <= b_ub, a_eq x = b_eq, bounds, by
    enumerating basic solutions of the (bounded) polytope.

    Every constraint, bounds included, becomes a row t.x <= u; a vertex
    solves n linearly independent tight rows, equalities always tight.
    Requires finite bounds so the feasible set is bounded (then a
    nonempty region always contains a vertex). Returns
    (status, objective, vertices).
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    rows, rhs = [], []
    for t, u in zip(a_ub, b_ub):
        rows.append(np.asarray(t, dtype=float))
        rhs.append(float(u))
    eye = np.eye(n)
    for j in range(n):
        rows.append(eye[j])
        rhs.append(float(upper[j]))
        rows.append(-eye[j])
        rhs.append(float(-lower[j]))
    rows = np.asarray(rows)
    rhs = np.asarray(rhs)
    eq_rows = np.asarray([np.asarray(t, dtype=float) for t in a_eq]).reshape(len(a_eq), n)
    eq_rhs = np.asarray([float(u) for u in b_eq])
    need = n - len(a_eq)
    assert need >= 0

    picks = _combos(len(rows), need)
    mats = np.broadcast_to(eq_rows, (len(picks), len(a_eq), n))
    mats = np.concatenate([mats, rows[picks]], axis=1)
    rvec = np.concatenate(
        [np.broadcast_to(eq_rhs, (len(picks), len(a_eq))), rhs[picks]], axis=1)
    dets = np.linalg.det(mats)
    ok = np.abs(dets) > 1e-9
    if not ok.any():
        return "infeasible", None, np.empty((0, n))
    xs = np.linalg.solve(mats[ok], rvec[ok][..., None])[..., 0]
    feas = np.all(xs @ rows.T <= rhs + tol, axis=1)
    if len(a_eq):
        feas &= np.all(np.abs(xs @ eq_rows.T - eq_rhs) <= tol, axis=1)
    verts = xs[feas]
    if verts.shape[0] == 0:
        return "infeasible", None, verts
    return "optimal", float((verts @ c).min()), verts


def random_lp(rng, n=6, m=3, with_eq=False):
    """Random integer-data LP plus its vertex-oracle answer."""
    c = rng.integers(-9, 10, size=n).astype(float)
    ub = rng.integers(1, 11, size=n).astype(float)
    prob = LpProblem.with_bounds(c, np.zeros(n), ub)
    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    for _ in range(m):
        coefs = rng.integers(-5, 6, size=n).astype(float)
        rhs = float(rng.integers(-10, 11))
        sense = rng.choice(["<=", ">="])
        prob.add_row({j: coefs[j] for j in range(n)}, sense, rhs)
        if sense == "<=":
            a_ub.append(coefs)
            b_ub.append(rhs)
        else:
            a_ub.append(-coefs)
            b_ub.append(-rhs)
    if with_eq:
        coefs = rng.integers(-3, 4, size=n).astype(float)
        rhs = float(rng.integers(0, 8))
        prob.add_row({j: coefs[j] for j in range(n)}, "==", rhs)
        a_eq.append(coefs)
        b_eq.append(rhs)
    oracle = lp_vertex_oracle(c, a_ub, b_ub, a_eq, b_eq, np.zeros(n), ub)
    return prob, oracle


def brute_force_big_m_z(x, delta, big_m):
    """Unique binary z satisfying the big-M survival linking rows.

    Checks both candidate values of z against
        big_m * (1 - z) >= delta - x      and
        2 * big_m * z  >= 1 - 2 * (delta - x)
    and asserts exactly one of them is feasible.
    """
    feasible = []
    for z in (0, 1):
        ok = big_m * (1 - z) >= delta - x and 2.0 * big_m * z >= 1.0 - 2.0 * (delta - x)
        if ok:
            feasible.append(z)
    assert len(feasible) == 1, (x, delta, big_m, feasible)
    return feasible[0]


def uniform_scenarios(rows, columns):
    arr = np.asarray(rows, dtype=float)
    return ScenarioSet(arr, np.full(arr.shape[0], 1.0 / arr.shape[0]),
                       columns=tuple(columns))
