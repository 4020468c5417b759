import logging
from pathlib import Path
from typing import Dict, Union

import orjson
from pydantic import BaseModel, ValidationError

from config.settings import settings
from models.cli import BenchReport, EvalReport, PolicyDocument, RunReport
from models.controller import Controller
from models.pomdp import Pomdp
from repository.controller.controller_repo import controller_repo
from utility.errors import InputError, InternalError, PolicySchemaError

logger = logging.getLogger(__name__)

_JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY
_MONOTONE_SLACK = 1e-7


class ReportService:
    """JSON persistence for run reports, benchmark reports and saved policies."""

    @staticmethod
    def problem_summary(pomdp: Pomdp) -> Dict[str, Union[int, float]]:
        return {
            "num_states": pomdp.num_states,
            "num_actions": pomdp.num_actions,
            "num_observations": pomdp.num_observations,
            "discount": pomdp.discount,
        }

    @staticmethod
    def dumps(document: BaseModel) -> bytes:
        return orjson.dumps(document.model_dump(mode="json"), option=_JSON_OPTIONS)

    def _write(self, document: BaseModel, path: str) -> None:
        target = Path(path)
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(self.dumps(document) + b"\n")
        except OSError as e:
            raise InputError(f"cannot write {path}: {e}")
        logger.info(f"Wrote {path}")

    @staticmethod
    def check_monotone(report: RunReport) -> None:
        """num_nodes and value_at_b0 must not decrease across iterations."""
        for previous, current in zip(report.records, report.records[1:]):
            if current.num_nodes < previous.num_nodes:
                raise InternalError(
                    f"controller shrank from {previous.num_nodes} to {current.num_nodes} nodes at iteration {current.iteration}"
                )
            if current.value_at_b0 < previous.value_at_b0 - _MONOTONE_SLACK:
                raise InternalError(
                    f"V(b0) decreased from {previous.value_at_b0!r} to {current.value_at_b0!r} at iteration {current.iteration}"
                )

    def write_run_report(self, report: RunReport, path: str) -> None:
        """Check monotonicity, then write the report as sorted, indented JSON."""
        self.check_monotone(report)
        self._write(report, path)

    def write_bench_report(self, report: BenchReport, path: str) -> None:
        self._write(report, path)

    def write_eval_report(self, report: EvalReport, path: str) -> None:
        self._write(report, path)

    def save_policy(self, controller: Controller, pomdp: Pomdp, path: str) -> None:
        self._write(controller_repo.controller_to_document(controller, pomdp), path)

    def load_policy(self, path: str, pomdp: Pomdp) -> Controller:
        """
        Read a saved policy and rebuild the controller

        Args:
            path: Policy JSON file
            pomdp: Problem the policy must fit

        Returns:
            The controller

        Raises:
            PolicySchemaError: the file is not JSON, does not match the schema, or does not fit the problem
        """
        try:
            raw = Path(path).read_bytes()
        except OSError as e:
            raise InputError(f"cannot read policy file {path}: {e}")
        try:
            document = PolicyDocument.model_validate(orjson.loads(raw))
        except orjson.JSONDecodeError as e:
            raise PolicySchemaError(f"{path} is not valid JSON: {e}")
        except ValidationError as e:
            raise PolicySchemaError(f"{path} does not match the policy schema {settings.POLICY_SCHEMA_VERSION}: {e}")
        return controller_repo.controller_from_document(document, pomdp)

    @staticmethod
    def read_json(path: Union[str, Path]) -> dict:
        return orjson.loads(Path(path).read_bytes())


report_service = ReportService()
