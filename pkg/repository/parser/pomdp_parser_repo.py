import logging
import re
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from config.settings import settings
from models.parser import ParseDiagnostic, ParseOutcome, Severity
from models.pomdp import BeliefState, Pomdp
from utility.errors import InputError, PomdpParseError

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[^\s:]+|:")
_PREAMBLE = ("discount", "values", "states", "actions", "observations")
_KEYWORDS = set(_PREAMBLE) | {"start", "T", "O", "R"}
_MAX_ROW_DIAGNOSTICS = 20
_RANDOM_PREFIX = "random:"


class Token(NamedTuple):
    text: str
    line: int


class Statement(NamedTuple):
    keyword: str
    line: int
    tokens: List[Token]


class _Failure(Exception):
    def __init__(self, line: int, message: str):
        super().__init__(message)
        self.line = line
        self.message = message


class _Dimension:
    def __init__(self, kind: str):
        self.kind = kind
        self.count: Optional[int] = None
        self.names: Optional[List[str]] = None

    def declare(self, tokens: List[Token], line: int) -> None:
        if not tokens:
            raise _Failure(line, f"{self.kind}: needs a count or a list of names")
        if len(tokens) == 1 and tokens[0].text.isdigit():
            self.count = int(tokens[0].text)
            self.names = None
        else:
            self.names = [t.text for t in tokens]
            if len(set(self.names)) != len(self.names):
                raise _Failure(line, f"duplicate {self.kind} names")
            self.count = len(self.names)
        if self.count < 1:
            raise _Failure(line, f"{self.kind}: count must be positive")

    def resolve(self, token: Token) -> List[int]:
        if token.text == "*":
            return list(range(self.count))
        if self.names is not None and token.text in self.names:
            return [self.names.index(token.text)]
        if token.text.isdigit():
            index = int(token.text)
            if index < self.count:
                return [index]
            raise _Failure(token.line, f"{self.kind} index {index} out of range [0, {self.count})")
        raise _Failure(token.line, f"unknown {self.kind} '{token.text}'")


class PomdpParserRepo:
    """Reads and writes the plain-text POMDP format of the standard benchmark files."""

    def __init__(self, row_tolerance: float = settings.PARSE_ROW_TOLERANCE):
        self.row_tolerance = row_tolerance

    # ------------------------------------------------------------------ parsing

    def parse_pomdp(self, text: str) -> ParseOutcome:
        diagnostics: List[ParseDiagnostic] = []
        try:
            pomdp = self._parse(text, diagnostics)
        except _Failure as failure:
            diagnostics.append(ParseDiagnostic(line=max(failure.line, 1), message=failure.message))
            pomdp = None
        except Exception as e:
            logger.debug("Unexpected parser failure", exc_info=True)
            diagnostics.append(ParseDiagnostic(line=1, message=f"could not parse input: {e}"))
            pomdp = None
        if any(d.severity == Severity.ERROR for d in diagnostics):
            pomdp = None
        return ParseOutcome(pomdp=pomdp, diagnostics=diagnostics)

    def load_pomdp(self, path: str) -> Pomdp:
        try:
            text = Path(path).read_text(encoding="utf-8", errors="replace")
        except OSError as e:
            raise InputError(f"cannot read POMDP file {path}: {e}")
        outcome = self.parse_pomdp(text)
        for warning in outcome.warnings:
            logger.warning(f"{path}:{warning.line}: {warning.message}")
        if not outcome.ok:
            raise PomdpParseError(outcome.diagnostics)
        pomdp = outcome.pomdp
        logger.info(
            f"Loaded {path}: |S|={pomdp.num_states}, |A|={pomdp.num_actions}, "
            f"|Z|={pomdp.num_observations}, discount={pomdp.discount}"
        )
        return pomdp

    def _statements(self, text: str) -> List[Statement]:
        statements: List[Statement] = []
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0]
            words = _TOKEN_RE.findall(line)
            if not words:
                continue
            tokens = [Token(w, line_no) for w in words]
            head = words[0]
            if head in _KEYWORDS and len(words) > 1 and words[1] == ":":
                statements.append(Statement(head, line_no, tokens[2:]))
            elif head == "start" and len(words) > 2 and words[1] in ("include", "exclude") and words[2] == ":":
                statements.append(Statement(f"start {words[1]}", line_no, tokens[3:]))
            elif statements:
                statements[-1].tokens.extend(tokens)
            else:
                raise _Failure(line_no, f"unexpected '{head}' before any directive")
        return statements

    def _parse(self, text: str, diagnostics: List[ParseDiagnostic]) -> Optional[Pomdp]:
        statements = self._statements(text)
        states, actions, observations = _Dimension("state"), _Dimension("action"), _Dimension("observation")
        dims = {"states": states, "actions": actions, "observations": observations}
        discount: Optional[float] = None
        cost = False

        for st in statements:
            if st.keyword == "discount":
                if len(st.tokens) != 1:
                    raise _Failure(st.line, "discount: expects one number")
                discount = self._number(st.tokens[0])
                if not 0.0 < discount < 1.0:
                    raise _Failure(st.line, f"discount must satisfy 0 < discount < 1, got {discount}")
            elif st.keyword == "values":
                if len(st.tokens) != 1 or st.tokens[0].text not in ("reward", "cost"):
                    raise _Failure(st.line, "values: expects 'reward' or 'cost'")
                cost = st.tokens[0].text == "cost"
                if cost:
                    diagnostics.append(ParseDiagnostic(
                        line=st.line, severity=Severity.WARNING,
                        message="values: cost - rewards negated on load",
                    ))
            elif st.keyword in dims:
                dims[st.keyword].declare(st.tokens, st.line)

        for name, dim in dims.items():
            if dim.count is None:
                raise _Failure(1, f"missing '{name}:' declaration")
        if discount is None:
            raise _Failure(1, "missing 'discount:' declaration")

        num_s, num_a, num_z = states.count, actions.count, observations.count
        transition = np.zeros((num_s, num_a, num_s))
        observation = np.zeros((num_a, num_s, num_z))
        reward4 = np.zeros((num_a, num_s, num_s, num_z))
        # line of the last statement that wrote each row; 0 if none did
        transition_lines = np.zeros((num_s, num_a), dtype=int)
        observation_lines = np.zeros((num_a, num_s), dtype=int)
        start: Optional[np.ndarray] = None

        for st in statements:
            if st.keyword == "T":
                self._transition(st, transition, transition_lines, states, actions)
            elif st.keyword == "O":
                self._observation(st, observation, observation_lines, states, actions, observations)
            elif st.keyword == "R":
                self._reward(st, reward4, states, actions, observations)
            elif st.keyword.startswith("start"):
                start = self._start(st, states)

        ok = self._normalize_rows(transition, transition_lines, "T", lambda idx: f"(s={idx[0]}, a={idx[1]})", diagnostics)
        ok &= self._normalize_rows(observation, observation_lines, "O", lambda idx: f"(s'={idx[1]}, a={idx[0]})", diagnostics)
        if not ok:
            return None

        # R(s,a) = sum_{s'} P(s'|s,a) sum_z P(z|s',a) R(a,s,s',z)
        reward = np.einsum("sat,atz,astz->sa", transition, observation, reward4)
        if cost:
            reward = -reward

        return Pomdp(
            transition=transition,
            observation=observation,
            reward=reward,
            discount=discount,
            start_belief=BeliefState(probs=start) if start is not None else None,
            state_names=states.names,
            action_names=actions.names,
            observation_names=observations.names,
        )

    @staticmethod
    def _number(token: Token) -> float:
        try:
            value = float(token.text)
        except ValueError:
            raise _Failure(token.line, f"expected a number, got '{token.text}'")
        if not np.isfinite(value):
            raise _Failure(token.line, f"non-finite number '{token.text}'")
        return value

    def _numbers(self, tokens: List[Token], expected: int, what: str, line: int) -> np.ndarray:
        if len(tokens) != expected:
            raise _Failure(tokens[0].line if tokens else line, f"{what}: expected {expected} numbers, got {len(tokens)}")
        return np.array([self._number(t) for t in tokens])

    @staticmethod
    def _split_ids(st: Statement, max_ids: int) -> Tuple[List[Token], List[Token]]:
        tokens = st.tokens
        if not tokens or tokens[0].text == ":":
            raise _Failure(st.line, f"{st.keyword}: missing action")
        ids = [tokens[0]]
        i = 1
        while i < len(tokens) and tokens[i].text == ":" and len(ids) < max_ids:
            if i + 1 >= len(tokens) or tokens[i + 1].text == ":":
                raise _Failure(tokens[i].line, f"{st.keyword}: missing identifier after ':'")
            ids.append(tokens[i + 1])
            i += 2
        data = tokens[i:]
        if any(t.text == ":" for t in data):
            raise _Failure(st.line, f"{st.keyword}: too many ':' separated fields")
        return ids, data

    def _transition(self, st: Statement, table: np.ndarray, lines: np.ndarray, states: _Dimension,
                    actions: _Dimension) -> None:
        ids, data = self._split_ids(st, 3)
        acts = actions.resolve(ids[0])
        n = states.count
        if len(ids) == 3:
            value = self._numbers(data, 1, "T entry", st.line)[0]
            for a in acts:
                for s in states.resolve(ids[1]):
                    for s2 in states.resolve(ids[2]):
                        table[s, a, s2] = value
                    lines[s, a] = st.line
        elif len(ids) == 2:
            row = np.full(n, 1.0 / n) if self._keyword(data, "uniform") else self._numbers(data, n, "T row", st.line)
            for a in acts:
                for s in states.resolve(ids[1]):
                    table[s, a, :] = row
                    lines[s, a] = st.line
        else:
            if self._keyword(data, "uniform"):
                matrix = np.full((n, n), 1.0 / n)
            elif self._keyword(data, "identity"):
                matrix = np.eye(n)
            else:
                matrix = self._numbers(data, n * n, "T matrix", st.line).reshape(n, n)
            for a in acts:
                table[:, a, :] = matrix
                lines[:, a] = st.line

    def _observation(self, st: Statement, table: np.ndarray, lines: np.ndarray, states: _Dimension,
                     actions: _Dimension, observations: _Dimension) -> None:
        ids, data = self._split_ids(st, 3)
        acts = actions.resolve(ids[0])
        n, m = states.count, observations.count
        if len(ids) == 3:
            value = self._numbers(data, 1, "O entry", st.line)[0]
            for a in acts:
                for s2 in states.resolve(ids[1]):
                    for z in observations.resolve(ids[2]):
                        table[a, s2, z] = value
                    lines[a, s2] = st.line
        elif len(ids) == 2:
            row = np.full(m, 1.0 / m) if self._keyword(data, "uniform") else self._numbers(data, m, "O row", st.line)
            for a in acts:
                for s2 in states.resolve(ids[1]):
                    table[a, s2, :] = row
                    lines[a, s2] = st.line
        else:
            if self._keyword(data, "uniform"):
                matrix = np.full((n, m), 1.0 / m)
            elif self._keyword(data, "identity"):
                if n != m:
                    raise _Failure(st.line, "O identity requires as many observations as states")
                matrix = np.eye(n)
            else:
                matrix = self._numbers(data, n * m, "O matrix", st.line).reshape(n, m)
            for a in acts:
                table[a, :, :] = matrix
                lines[a, :] = st.line

    def _reward(self, st: Statement, table: np.ndarray, states: _Dimension, actions: _Dimension,
                observations: _Dimension) -> None:
        ids, data = self._split_ids(st, 4)
        if len(ids) < 2:
            raise _Failure(st.line, "R: needs at least an action and a start state")
        acts = actions.resolve(ids[0])
        froms = states.resolve(ids[1])
        n, m = states.count, observations.count
        if len(ids) == 4:
            value = self._numbers(data, 1, "R entry", st.line)[0]
            for a in acts:
                for s in froms:
                    for s2 in states.resolve(ids[2]):
                        for z in observations.resolve(ids[3]):
                            table[a, s, s2, z] = value
        elif len(ids) == 3:
            row = self._numbers(data, m, "R row", st.line)
            for a in acts:
                for s in froms:
                    for s2 in states.resolve(ids[2]):
                        table[a, s, s2, :] = row
        else:
            matrix = self._numbers(data, n * m, "R matrix", st.line).reshape(n, m)
            for a in acts:
                for s in froms:
                    table[a, s, :, :] = matrix

    def _start(self, st: Statement, states: _Dimension) -> np.ndarray:
        n = states.count
        tokens = st.tokens
        if st.keyword in ("start include", "start exclude"):
            chosen = sorted({s for t in tokens for s in states.resolve(t)})
            mask = np.zeros(n, dtype=bool)
            mask[chosen] = True
            if st.keyword == "start exclude":
                mask = ~mask
            if not mask.any():
                raise _Failure(st.line, "start: no states left in the initial belief")
            return mask / mask.sum()
        if self._keyword(tokens, "uniform"):
            return np.full(n, 1.0 / n)
        if len(tokens) == n and all(self._is_number(t.text) for t in tokens):
            probs = np.array([float(t.text) for t in tokens])
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > self.row_tolerance:
                raise _Failure(st.line, f"start: probabilities sum to {probs.sum()!r}")
            return probs / probs.sum()
        if len(tokens) == 1:
            (s,) = states.resolve(tokens[0])
            probs = np.zeros(n)
            probs[s] = 1.0
            return probs
        raise _Failure(st.line, f"start: expected 'uniform', {n} probabilities or a state")

    @staticmethod
    def _keyword(tokens: List[Token], word: str) -> bool:
        return len(tokens) == 1 and tokens[0].text == word

    @staticmethod
    def _is_number(text: str) -> bool:
        try:
            float(text)
            return True
        except ValueError:
            return False

    def _normalize_rows(self, table: np.ndarray, lines: np.ndarray, label: str, describe,
                        diagnostics: List[ParseDiagnostic]) -> bool:
        """Renormalize rows within row_tolerance of 1; report the others at the line that last wrote them."""
        sums = table.sum(axis=-1)
        bad = np.argwhere((np.abs(sums - 1.0) > self.row_tolerance) | np.any(table < 0, axis=-1))
        for idx in bad[:_MAX_ROW_DIAGNOSTICS]:
            line = int(lines[tuple(idx)])
            where = "" if line else " (never specified)"
            diagnostics.append(ParseDiagnostic(
                line=max(line, 1),
                message=f"{label} probabilities for {describe(tuple(idx))} sum to {sums[tuple(idx)]:.9g}{where}",
            ))
        if len(bad) > _MAX_ROW_DIAGNOSTICS:
            first = int(lines[tuple(bad[_MAX_ROW_DIAGNOSTICS])])
            diagnostics.append(ParseDiagnostic(
                line=max(first, 1), message=f"{len(bad) - _MAX_ROW_DIAGNOSTICS} more {label} rows are not stochastic",
            ))
        if len(bad):
            return False
        table /= sums[..., None]
        return True

    # ------------------------------------------------------------ serializing

    def serialize_pomdp(self, pomdp: Pomdp) -> str:
        def fmt(x: float) -> str:
            return repr(float(x))

        def names_or_count(names: Optional[List[str]], count: int) -> str:
            return " ".join(names) if names else str(count)

        lines = [
            f"discount: {fmt(pomdp.discount)}",
            "values: reward",
            f"states: {names_or_count(pomdp.state_names, pomdp.num_states)}",
            f"actions: {names_or_count(pomdp.action_names, pomdp.num_actions)}",
            f"observations: {names_or_count(pomdp.observation_names, pomdp.num_observations)}",
        ]
        if pomdp.start_belief is not None:
            lines.append("start: " + " ".join(fmt(p) for p in pomdp.start_belief.probs))
        lines.append("")
        for a in range(pomdp.num_actions):
            lines.append(f"T: {a}")
            lines.extend(" ".join(fmt(p) for p in pomdp.transition[s, a]) for s in range(pomdp.num_states))
            lines.append("")
        for a in range(pomdp.num_actions):
            lines.append(f"O: {a}")
            lines.extend(" ".join(fmt(p) for p in pomdp.observation[a, s2]) for s2 in range(pomdp.num_states))
            lines.append("")
        for a in range(pomdp.num_actions):
            for s in range(pomdp.num_states):
                lines.append(f"R: {a} : {s} : * : * {fmt(pomdp.reward[s, a])}")
        return "\n".join(lines) + "\n"

    # ------------------------------------------------------------- generation

    def load_problem(self, source: str, seed: int = 0) -> Pomdp:
        """
        Load a POMDP file, or generate one for a "random:S,A,Z[,discount]" source.

        Args:
            source: File path, or random sizes with an optional discount (default 0.95)
            seed: Generator seed; ignored for files

        Returns:
            The POMDP
        """
        if not source.startswith(_RANDOM_PREFIX):
            return self.load_pomdp(source)
        parts = [p.strip() for p in source[len(_RANDOM_PREFIX):].split(",")]
        if len(parts) not in (3, 4):
            raise InputError(f"expected {_RANDOM_PREFIX}S,A,Z[,discount], got {source!r}")
        try:
            num_s, num_a, num_z = (int(p) for p in parts[:3])
            discount = float(parts[3]) if len(parts) == 4 else 0.95
        except ValueError:
            raise InputError(f"expected {_RANDOM_PREFIX}S,A,Z[,discount], got {source!r}")
        pomdp = self.generate_random_pomdp(num_s, num_a, num_z, discount, seed)
        logger.info(f"Generated random POMDP |S|={num_s}, |A|={num_a}, |Z|={num_z}, discount={discount}, seed {seed}")
        return pomdp

    def generate_random_pomdp(self, num_states: int, num_actions: int, num_observations: int,
                              discount: float, seed: int) -> Pomdp:
        if min(num_states, num_actions, num_observations) < 1:
            raise InputError("POMDP sizes must be at least 1")
        if not 0.0 < discount < 1.0:
            raise InputError(f"discount must satisfy 0 < discount < 1, got {discount}")
        rng = np.random.default_rng(seed)
        transition = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
        observation = rng.dirichlet(np.ones(num_observations), size=(num_actions, num_states))
        reward = rng.uniform(-1.0, 1.0, size=(num_states, num_actions))
        transition /= transition.sum(axis=-1, keepdims=True)
        observation /= observation.sum(axis=-1, keepdims=True)
        return Pomdp(transition=transition, observation=observation, reward=reward, discount=discount)


pomdp_parser_repo = PomdpParserRepo()
