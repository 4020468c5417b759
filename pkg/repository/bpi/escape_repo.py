import logging
from typing import List, NamedTuple, Sequence, Tuple

from config.settings import settings
from models.bpi import BackupResult
from models.controller import SELF_LOOP, Controller, ValueFunction
from models.pomdp import BeliefState, Pomdp
from repository.bpi.sparse_repo import sparse_repo
from repository.controller.controller_repo import controller_repo
from repository.evaluation.evaluation_repo import evaluation_repo
from repository.pomdp_core.belief_repo import belief_repo
from utility.errors import InputError

logger = logging.getLogger(__name__)


class EscapeCandidate(NamedTuple):
    gap: float
    belief: BeliefState
    backup: BackupResult

    def key(self, num_observations: int):
        successors = tuple((z, self.backup.best_successor.get(z, SELF_LOOP)) for z in range(num_observations))
        return self.backup.best_action, successors


class EscapeRepo:
    def __init__(self, gap_tolerance: float = settings.ESCAPE_GAP_TOLERANCE):
        self.gap_tolerance = gap_tolerance

    def find_candidates(self, v: ValueFunction, pomdp: Pomdp,
                        tangent_beliefs: Sequence[BeliefState]) -> List[EscapeCandidate]:
        """Improvable one-step successors of the tangent beliefs, largest backup gap first."""
        candidates: List[EscapeCandidate] = []
        for b in tangent_beliefs:
            for a in range(pomdp.num_actions):
                for z in range(pomdp.num_observations):
                    successor = belief_repo.belief_update(pomdp, b, a, z)
                    if successor is None:
                        continue
                    backup = sparse_repo.backup_belief(successor, v, pomdp)
                    current, _ = evaluation_repo.belief_value(v, successor)
                    gap = backup.value - current
                    if gap > self.gap_tolerance:
                        candidates.append(EscapeCandidate(gap=gap, belief=successor, backup=backup))
        candidates.sort(key=lambda c: -c.gap)
        return candidates

    def add_nodes(self, controller: Controller, v: ValueFunction, pomdp: Pomdp,
                  tangent_beliefs: Sequence[BeliefState], k: int) -> Tuple[Controller, int]:
        """Append up to k deterministic nodes, skipping (action, successor) maps already present."""
        if k < 1:
            raise InputError(f"k must be positive, got {k}")
        candidates = self.find_candidates(v, pomdp, tangent_beliefs)
        seen = {node.deterministic_key(i) for i, node in enumerate(controller.nodes)}
        seen.discard(None)

        added = 0
        for candidate in candidates:
            if added >= k:
                break
            key = candidate.key(pomdp.num_observations)
            if key in seen:
                continue
            seen.add(key)
            new_index = controller.size
            successors = {z: (new_index if n2 == SELF_LOOP else n2) for z, n2 in key[1]}
            controller_repo.add_deterministic_node(controller, pomdp, candidate.backup.best_action, successors)
            logger.debug(f"Added node {new_index} (action {key[0]}) for a belief with backup gap {candidate.gap:.3e}")
            added += 1
        logger.debug(f"Escape: {len(candidates)} improvable beliefs, {added} nodes added")
        return controller, added


escape_repo = EscapeRepo()
