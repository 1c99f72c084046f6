from __future__ import annotations

from typing import List, Optional


class GnnAnatomyError(Exception):
    pass


class ShapeError(GnnAnatomyError):
    pass


class DomainError(GnnAnatomyError):
    pass


class NoPredictionsError(GnnAnatomyError):
    pass


class UniverseMismatchError(GnnAnatomyError):
    pass


class ConfigError(GnnAnatomyError):
    pass


class InvalidGraphError(GnnAnatomyError):
    def __init__(self, violations: List[str], where: str = "graph"):
        self.violations = list(violations)
        super().__init__(f"invalid {where}: " + "; ".join(self.violations))


class FormatError(GnnAnatomyError):
    """파일 형식 오류. 메시지에 경로와 문제가 된 키를 포함한다."""

    def __init__(self, path: str, key: str, message: str, row: Optional[int] = None):
        self.path = path
        self.key = key
        self.row = row
        where = f"{path}: key '{key}'"
        if row is not None:
            where += f" row {row}"
        super().__init__(f"{where}: {message}")
