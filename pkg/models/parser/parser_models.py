from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Field

from models.pomdp.pomdp_models import Pomdp


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


class ParseDiagnostic(BaseModel):
    line: int = Field(..., ge=1, description="1-indexed line in the source text")
    message: str
    severity: Severity = Severity.ERROR


class ParseOutcome(BaseModel):
    pomdp: Optional[Pomdp] = None
    diagnostics: List[ParseDiagnostic] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.pomdp is not None and not self.errors

    @property
    def errors(self) -> List[ParseDiagnostic]:
        return [d for d in self.diagnostics if d.severity == Severity.ERROR]

    @property
    def warnings(self) -> List[ParseDiagnostic]:
        return [d for d in self.diagnostics if d.severity == Severity.WARNING]
