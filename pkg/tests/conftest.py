"""Shared fixtures and brute-force oracles for the solver tests."""

import itertools
from pathlib import Path
from typing import Callable, Iterator, Optional, Tuple

import numpy as np
import pytest
from scipy.optimize import linprog

from models.controller import Controller, Node, ValueFunction
from models.lp import LpModel, Relation
from models.pomdp import BeliefState, Pomdp
from repository.evaluation.evaluation_repo import evaluation_repo
from repository.parser.pomdp_parser_repo import pomdp_parser_repo

PROBLEM_DIR = Path(__file__).resolve().parent.parent / "data" / "problems"
TIGER_PATH = PROBLEM_DIR / "tiger.95.POMDP"


def random_pomdp(seed: int, num_states: int = 3, num_actions: int = 2, num_observations: int = 2,
                 discount: float = 0.9) -> Pomdp:
    return pomdp_parser_repo.generate_random_pomdp(num_states, num_actions, num_observations, discount, seed)


def random_controller(pomdp: Pomdp, num_nodes: int, rng: np.random.Generator) -> Controller:
    """Stochastic controller with random supports and Dirichlet weights."""
    num_a, num_z = pomdp.num_actions, pomdp.num_observations
    nodes = []
    for _ in range(num_nodes):
        k = int(rng.integers(1, num_a + 1))
        actions = rng.choice(num_a, size=k, replace=False)
        psi = rng.dirichlet(np.ones(k))
        action_probs = {int(a): float(p) for a, p in zip(actions, psi)}
        joint = {}
        for a, p in action_probs.items():
            for z in range(num_z):
                m = int(rng.integers(1, num_nodes + 1))
                successors = rng.choice(num_nodes, size=m, replace=False)
                weights = rng.dirichlet(np.ones(m))
                for n2, q in zip(successors, weights):
                    joint[(a, z, int(n2))] = p * float(q)
        nodes.append(Node(action_probs=action_probs, joint_transition=joint))
    return Controller(nodes=nodes)


def random_suite(count: int, seed: int) -> Iterator[Tuple[Pomdp, Controller, ValueFunction]]:
    """Small random problems with random stochastic controllers and their exact values."""
    rng = np.random.default_rng(seed)
    for i in range(count):
        pomdp = random_pomdp(
            seed=seed * 10007 + i,
            num_states=int(rng.integers(2, 5)),
            num_actions=int(rng.integers(1, 4)),
            num_observations=int(rng.integers(1, 4)),
            discount=float(rng.uniform(0.5, 0.95)),
        )
        controller = random_controller(pomdp, int(rng.integers(1, 7)), rng)
        yield pomdp, controller, evaluation_repo.evaluate(controller, pomdp)


def random_belief(rng: np.random.Generator, num_states: int) -> BeliefState:
    return BeliefState.normalized(rng.dirichlet(np.ones(num_states)))


def single_node_controller(action: int, num_observations: int) -> Controller:
    return Controller(nodes=[Node(action_probs={action: 1.0},
                                  joint_transition={(action, z, 0): 1.0 for z in range(num_observations)})])


def make_pomdp(transition, observation, reward, discount, start=None) -> Pomdp:
    return Pomdp(
        transition=np.asarray(transition, dtype=float),
        observation=np.asarray(observation, dtype=float),
        reward=np.asarray(reward, dtype=float),
        discount=discount,
        start_belief=BeliefState(probs=start) if start is not None else None,
    )


def independent_rows(coef: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Greedy subset of rows with full row rank; the dropped rows are combinations of the kept ones."""
    kept = []
    for i in rows:
        if np.linalg.matrix_rank(coef[kept + [i]]) == len(kept) + 1:
            kept.append(int(i))
    return np.array(kept, dtype=int)


def vertex_enumeration_optimum(model: LpModel) -> Optional[float]:
    """
    Best objective over all basic feasible solutions; None if there is none.

    Dependent equality rows are left out of the active sets but still checked
    for feasibility, so consistent systems with more equalities than variables work.
    """
    n = model.num_variables
    bounded = np.flatnonzero(model.lower_bounds == 0.0)
    coef = np.vstack([model.matrix.toarray(), np.eye(n)[bounded]])
    rhs = np.concatenate([model.rhs, np.zeros(len(bounded))])
    relations = list(model.relations) + [Relation.GE] * len(bounded)
    le = np.array([r == Relation.LE for r in relations])
    ge = np.array([r == Relation.GE for r in relations])
    eq = ~(le | ge)
    tol = 1e-9 * (1.0 + np.abs(rhs))
    equalities = independent_rows(coef, np.flatnonzero(eq))
    needed = n - len(equalities)
    if needed < 0:
        return None
    best = None
    for chosen in itertools.combinations(np.flatnonzero(~eq), needed):
        active = np.concatenate([equalities, np.array(chosen, dtype=int)]).astype(int)
        a = coef[active]
        if abs(np.linalg.det(a)) < 1e-9:
            continue
        x = np.linalg.solve(a, rhs[active])
        activity = coef @ x
        if np.any(activity[le] > rhs[le] + tol[le]) or np.any(activity[ge] < rhs[ge] - tol[ge]) \
                or np.any(np.abs(activity[eq] - rhs[eq]) > tol[eq]):
            continue
        value = float(model.objective @ x)
        best = value if best is None else max(best, value)
    return best


def linprog_optimum(model: LpModel) -> float:
    """Optimal objective from scipy's HiGHS solver."""
    dense = model.matrix.toarray()
    relations = np.array([r.value for r in model.relations])
    upper = np.vstack([dense[relations == "<="], -dense[relations == ">="]])
    upper_rhs = np.concatenate([model.rhs[relations == "<="], -model.rhs[relations == ">="]])
    equal = dense[relations == "="]
    bounds = [(None, None) if np.isneginf(lb) else (0.0, None) for lb in model.lower_bounds]
    result = linprog(
        -model.objective,
        A_ub=upper if upper.size else None,
        b_ub=upper_rhs if upper.size else None,
        A_eq=equal if equal.size else None,
        b_eq=model.rhs[relations == "="] if equal.size else None,
        bounds=bounds,
        method="highs",
    )
    assert result.status == 0, result.message
    return -float(result.fun)


def brute_force_backup(b: BeliefState, v: ValueFunction, pomdp: Pomdp) -> float:
    """Max over every action and every assignment of successor nodes to observations."""
    best = -np.inf
    for a in range(pomdp.num_actions):
        successors = np.einsum("s,zst->zt", b.probs, pomdp.joint[a])
        for assignment in itertools.product(range(v.num_nodes), repeat=pomdp.num_observations):
            value = float(b.probs @ pomdp.reward[:, a])
            for z, n2 in enumerate(assignment):
                value += pomdp.discount * float(successors[z] @ v.vectors[n2])
            best = max(best, value)
    return best


def grid_value_upper_bound(pomdp: Pomdp, grid_size: int = 401, iterations: int = 3000) -> Callable[[float], float]:
    """
    Value iteration on a uniform grid over two-state beliefs with linear interpolation.

    Interpolating a convex function from above keeps every iterate an upper bound
    of the optimal value, so the fixed point bounds any controller's value.
    Returns a function of b(state 0).
    """
    assert pomdp.num_states == 2
    grid = np.linspace(0.0, 1.0, grid_size)
    beliefs = np.stack([grid, 1.0 - grid], axis=1)
    values = np.full(grid_size, pomdp.reward_bound / (1.0 - pomdp.discount))
    successors = np.einsum("gs,azst->gazt", beliefs, pomdp.joint)
    obs_probs = successors.sum(axis=3)
    with np.errstate(invalid="ignore", divide="ignore"):
        next_first = np.where(obs_probs > 0, successors[..., 0] / obs_probs, 0.0)
    rewards = beliefs @ pomdp.reward
    for _ in range(iterations):
        continuation = np.interp(next_first, grid, values)
        q = rewards + pomdp.discount * np.sum(obs_probs * continuation, axis=2)
        updated = q.max(axis=1)
        if np.max(np.abs(updated - values)) < 1e-12:
            values = updated
            break
        values = updated
    return lambda p: float(np.interp(p, grid, values))


@pytest.fixture
def tiger() -> Pomdp:
    return pomdp_parser_repo.load_pomdp(str(TIGER_PATH))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)
