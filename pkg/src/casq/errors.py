"""Exception catalog shared by every casq module.

Each error carries a stable string code (used verbatim in the API envelope)
and an HTTP status for the service layer. ``ERROR_CATALOG`` enumerates every
code together with the surface it is reachable from, which the coverage
tests iterate.
"""

from __future__ import annotations


class CasqError(Exception):
    """Base class for all service errors."""

    code = "Internal"
    http_status = 500

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


# core -----------------------------------------------------------------

class UnknownUser(CasqError):
    code = "UnknownUser"
    http_status = 404


class UnknownQueue(CasqError):
    code = "UnknownQueue"
    http_status = 400


class TargetRequired(CasqError):
    code = "TargetRequired"
    http_status = 400


class UnknownJob(CasqError):
    code = "UnknownJob"
    http_status = 404


class IllegalTransition(CasqError):
    code = "IllegalTransition"
    http_status = 409


class NotTerminal(CasqError):
    code = "NotTerminal"
    http_status = 409


class NotOwner(CasqError):
    code = "NotOwner"
    http_status = 403


# sqlrewrite -----------------------------------------------------------

class EmptyQuery(CasqError):
    code = "EmptyQuery"
    http_status = 400


class MalformedPseudoName(CasqError):
    code = "MalformedPseudoName"
    http_status = 400


class QueryRejected(CasqError):
    code = "QueryRejected"
    http_status = 400


class NoSuchTable(CasqError):
    code = "NoSuchTable"
    http_status = 404


class AccessDenied(CasqError):
    code = "AccessDenied"
    http_status = 403


# scheduler ------------------------------------------------------------

class QueueStopped(CasqError):
    code = "QueueStopped"
    http_status = 503


class BadExponent(CasqError):
    code = "BadExponent"
    http_status = 400


# mydb -----------------------------------------------------------------

class StorageFailure(CasqError):
    code = "StorageFailure"
    http_status = 500


class TableExists(CasqError):
    code = "TableExists"
    http_status = 409


class QuotaExceeded(CasqError):
    code = "QuotaExceeded"
    http_status = 413


class DuplicateGroup(CasqError):
    code = "DuplicateGroup"
    http_status = 409


class AlreadyMember(CasqError):
    code = "AlreadyMember"
    http_status = 409


class NotInvited(CasqError):
    code = "NotInvited"
    http_status = 409


class NotMember(CasqError):
    code = "NotMember"
    http_status = 403


# wheel ----------------------------------------------------------------

class BadK(CasqError):
    code = "BadK"
    http_status = 400


class WrongTable(CasqError):
    code = "WrongTable"
    http_status = 400


class SessionFailed(CasqError):
    code = "SessionFailed"
    http_status = 500


# exchange -------------------------------------------------------------

class UnsupportedFormat(CasqError):
    code = "UnsupportedFormat"
    http_status = 400


class TypeMismatch(CasqError):
    code = "TypeMismatch"
    http_status = 400

    def __init__(self, message: str = "", row: int | None = None, column: int | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class ArityMismatch(CasqError):
    code = "ArityMismatch"
    http_status = 400


# loader ---------------------------------------------------------------

class CycleDetected(CasqError):
    code = "CycleDetected"
    http_status = 400

    def __init__(self, message: str = "", cycle: list[str] | None = None):
        super().__init__(message)
        self.cycle = cycle or []


class DanglingDependency(CasqError):
    code = "DanglingDependency"
    http_status = 400


class AlreadyUnwound(CasqError):
    code = "AlreadyUnwound"
    http_status = 409


# federation -----------------------------------------------------------

class AuthFailed(CasqError):
    code = "AuthFailed"
    http_status = 401


class UntrustedIssuer(CasqError):
    code = "UntrustedIssuer"
    http_status = 401


class BadSignature(CasqError):
    code = "BadSignature"
    http_status = 401


class Expired(CasqError):
    code = "Expired"
    http_status = 401


class TransferFailed(CasqError):
    code = "TransferFailed"
    http_status = 502


# service --------------------------------------------------------------

class Unauthenticated(CasqError):
    code = "Unauthenticated"
    http_status = 401


class NotFound(CasqError):
    code = "NotFound"
    http_status = 404


class BadRequest(CasqError):
    code = "BadRequest"
    http_status = 400


# Reachability surfaces: "http" errors are driven through API endpoints in
# the coverage test, the rest through the CLI or direct module calls.
ERROR_CATALOG: dict[str, tuple[type[CasqError], str]] = {
    "UnknownUser": (UnknownUser, "http"),
    "UnknownQueue": (UnknownQueue, "http"),
    "TargetRequired": (TargetRequired, "http"),
    "UnknownJob": (UnknownJob, "http"),
    "IllegalTransition": (IllegalTransition, "http"),
    "NotTerminal": (NotTerminal, "http"),
    "NotOwner": (NotOwner, "http"),
    "EmptyQuery": (EmptyQuery, "http"),
    "MalformedPseudoName": (MalformedPseudoName, "http"),
    "QueryRejected": (QueryRejected, "http"),
    "NoSuchTable": (NoSuchTable, "http"),
    "AccessDenied": (AccessDenied, "http"),
    "QueueStopped": (QueueStopped, "http"),
    "BadExponent": (BadExponent, "cli"),
    "StorageFailure": (StorageFailure, "module"),
    "TableExists": (TableExists, "module"),
    "QuotaExceeded": (QuotaExceeded, "http"),
    "DuplicateGroup": (DuplicateGroup, "http"),
    "AlreadyMember": (AlreadyMember, "http"),
    "NotInvited": (NotInvited, "http"),
    "NotMember": (NotMember, "http"),
    "BadK": (BadK, "module"),
    "WrongTable": (WrongTable, "module"),
    "SessionFailed": (SessionFailed, "module"),
    "UnsupportedFormat": (UnsupportedFormat, "http"),
    "TypeMismatch": (TypeMismatch, "http"),
    "ArityMismatch": (ArityMismatch, "http"),
    "CycleDetected": (CycleDetected, "cli"),
    "DanglingDependency": (DanglingDependency, "cli"),
    "AlreadyUnwound": (AlreadyUnwound, "module"),
    "AuthFailed": (AuthFailed, "http"),
    "UntrustedIssuer": (UntrustedIssuer, "http"),
    "BadSignature": (BadSignature, "http"),
    "Expired": (Expired, "http"),
    "TransferFailed": (TransferFailed, "module"),
    "Unauthenticated": (Unauthenticated, "http"),
    "NotFound": (NotFound, "http"),
    "BadRequest": (BadRequest, "http"),
}
