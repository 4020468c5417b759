import logging
from collections import defaultdict
from typing import Dict, Mapping, Tuple

from pydantic import ValidationError

from config.settings import settings
from models.cli import PolicyDocument, PolicyNodeDocument
from models.controller import Controller, Node, SparsityStats, TransitionKey
from models.pomdp import Pomdp
from utility.errors import InputError, PolicySchemaError

logger = logging.getLogger(__name__)


class ControllerRepo:
    def __init__(
        self,
        drop_tolerance: float = settings.DROP_TOLERANCE,
        param_tolerance: float = settings.PARAM_TOLERANCE,
    ):
        self.drop_tolerance = drop_tolerance
        self.param_tolerance = param_tolerance

    def initial_controller(self, pomdp: Pomdp) -> Controller:
        """One deterministic self-looping node per action."""
        nodes = [self._deterministic_node(a, {z: a for z in range(pomdp.num_observations)})
                 for a in range(pomdp.num_actions)]
        return Controller(nodes=nodes)

    @staticmethod
    def _deterministic_node(action: int, successors: Mapping[int, int]) -> Node:
        return Node(
            action_probs={action: 1.0},
            joint_transition={(action, z, n2): 1.0 for z, n2 in successors.items()},
        )

    def add_deterministic_node(self, controller: Controller, pomdp: Pomdp, action: int,
                               successors: Mapping[int, int]) -> int:
        """
        Append a deterministic node and return its index.

        successors must map every observation to a node index; the new node's
        own index (the current size) is a valid target. No de-duplication.
        """
        pomdp.check_action(action)
        new_index = controller.size
        missing = [z for z in range(pomdp.num_observations) if z not in successors]
        if missing:
            raise InputError(f"successors missing for observations {missing}")
        for z, n2 in successors.items():
            pomdp.check_observation(z)
            if not 0 <= n2 <= new_index:
                raise InputError(f"successor {n2} for observation {z} out of range [0, {new_index}]")
        controller.nodes.append(self._deterministic_node(action, successors))
        return new_index

    def sparsity_stats(self, controller: Controller, pomdp: Pomdp) -> SparsityStats:
        total = pomdp.num_actions + pomdp.num_actions * pomdp.num_observations * controller.size
        return SparsityStats.from_counts([node.nonzero_count for node in controller.nodes], total)

    def clean_params(
        self,
        action_probs: Mapping[int, float],
        joint_transition: Mapping[TransitionKey, float],
        num_observations: int,
    ) -> Tuple[Dict[int, float], Dict[TransitionKey, float]]:
        """
        Drop entries below the drop tolerance and renormalize.

        Returns parameters satisfying the Node invariants exactly, or raises
        InputError when the proposal is off by more than the parameter tolerance.
        """
        psi = {int(a): float(p) for a, p in action_probs.items() if p >= self.drop_tolerance}
        total = sum(psi.values())
        if abs(sum(action_probs.values()) - 1.0) > self.param_tolerance or total <= 0:
            raise InputError(f"action probabilities sum to {sum(action_probs.values())!r}")
        psi = {a: p / total for a, p in psi.items()}

        grouped: Dict[Tuple[int, int], Dict[int, float]] = defaultdict(dict)
        raw_mass: Dict[Tuple[int, int], float] = defaultdict(float)
        for (a, z, n2), w in joint_transition.items():
            a, z, n2 = int(a), int(z), int(n2)
            raw_mass[(a, z)] += w
            if a in psi and w >= self.drop_tolerance:
                grouped[(a, z)][n2] = float(w)

        joint: Dict[TransitionKey, float] = {}
        scale = {int(a): p for a, p in action_probs.items()}
        for a, p in psi.items():
            for z in range(num_observations):
                if abs(raw_mass.get((a, z), 0.0) - scale[a]) > self.param_tolerance:
                    raise InputError(
                        f"successor mass for (a={a}, z={z}) is {raw_mass.get((a, z), 0.0)!r}, "
                        f"expected psi={scale[a]!r}"
                    )
                successors = grouped.get((a, z))
                if not successors:
                    raise InputError(f"no successor left for (a={a}, z={z}) after dropping tiny entries")
                mass = sum(successors.values())
                for n2, w in successors.items():
                    joint[(a, z, n2)] = p * w / mass
        return psi, joint

    def replace_node_params(
        self,
        controller: Controller,
        pomdp: Pomdp,
        n: int,
        action_probs: Mapping[int, float],
        joint_transition: Mapping[TransitionKey, float],
    ) -> Controller:
        if not 0 <= n < controller.size:
            raise InputError(f"node index {n} out of range [0, {controller.size})")
        psi, joint = self.clean_params(action_probs, joint_transition, pomdp.num_observations)
        for (a, z, n2) in joint:
            pomdp.check_action(a)
            pomdp.check_observation(z)
            if not 0 <= n2 < controller.size:
                raise InputError(f"successor node {n2} out of range [0, {controller.size})")
        try:
            controller.nodes[n] = Node(action_probs=psi, joint_transition=joint)
        except ValidationError as e:
            raise InputError(f"node {n} parameters are invalid: {e}")
        logger.debug(f"Node {n} now has {controller.nodes[n].nonzero_count} non-zero parameters")
        return controller

    def validate_against(self, controller: Controller, pomdp: Pomdp) -> None:
        """Check action/observation ranges and full observation coverage for a loaded controller."""
        for i, node in enumerate(controller.nodes):
            for a in node.action_probs:
                pomdp.check_action(a)
            covered = defaultdict(set)
            for (a, z, _) in node.joint_transition:
                pomdp.check_observation(z)
                covered[a].add(z)
            for a in node.action_probs:
                if len(covered[a]) != pomdp.num_observations:
                    raise InputError(f"node {i} has no successors for some observations of action {a}")

    # ------------------------------------------------------------- documents

    def controller_to_document(self, controller: Controller, pomdp: Pomdp) -> PolicyDocument:
        nodes = []
        for node in controller.nodes:
            transitions: Dict[str, Dict[str, float]] = defaultdict(dict)
            for (a, z, n2), w in node.joint_transition.items():
                transitions[f"{a},{z}"][str(n2)] = w
            nodes.append(PolicyNodeDocument(
                action_probs={str(a): p for a, p in node.action_probs.items()},
                transitions=dict(transitions),
            ))
        return PolicyDocument(
            version=settings.POLICY_SCHEMA_VERSION,
            num_actions=pomdp.num_actions,
            num_observations=pomdp.num_observations,
            nodes=nodes,
        )

    def controller_from_document(self, document: PolicyDocument, pomdp: Pomdp) -> Controller:
        if document.version != settings.POLICY_SCHEMA_VERSION:
            raise PolicySchemaError(
                f"policy version {document.version!r} is not supported (expected {settings.POLICY_SCHEMA_VERSION!r})"
            )
        if document.transition_form != "joint":
            raise PolicySchemaError(f"unsupported transition_form {document.transition_form!r}")
        for declared, actual, label in (
            (document.num_actions, pomdp.num_actions, "actions"),
            (document.num_observations, pomdp.num_observations, "observations"),
        ):
            if declared is not None and declared != actual:
                raise PolicySchemaError(f"policy was saved for {declared} {label}, problem has {actual}")
        if not document.nodes:
            raise PolicySchemaError("policy has no nodes")

        nodes = []
        for i, doc in enumerate(document.nodes):
            try:
                psi = {int(a): float(p) for a, p in doc.action_probs.items()}
                joint: Dict[TransitionKey, float] = {}
                for key, successors in doc.transitions.items():
                    a_text, z_text = key.split(",")
                    for n2, w in successors.items():
                        joint[(int(a_text), int(z_text), int(n2))] = float(w)
                psi, joint = self.clean_params(psi, joint, pomdp.num_observations)
                nodes.append(Node(action_probs=psi, joint_transition=joint))
            except (ValueError, InputError) as e:
                raise PolicySchemaError(f"node {i}: {e}")
        try:
            controller = Controller(nodes=nodes)
            self.validate_against(controller, pomdp)
        except (ValidationError, InputError) as e:
            raise PolicySchemaError(str(e))
        return controller


controller_repo = ControllerRepo()
