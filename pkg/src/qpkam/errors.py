"""Shared exception types."""


class QpkamError(Exception):
    """Base class for package errors."""


class StripOverreachError(QpkamError):
    """Requested strip width exceeds the certified analyticity strip."""


class DiophantineError(QpkamError):
    """Frequency failed its finite Diophantine certificate."""


class SingularFactorError(QpkamError):
    """A cocycle factor was numerically singular."""


class NearSingularError(QpkamError):
    """Determinant below tolerance in a resultant/g-function evaluation."""


class CertificateError(QpkamError):
    """A transversality/Pyartli certificate failed grid validation."""


class DecompositionError(QpkamError):
    """Eigenvalue clusters crossed or changed cardinality."""


class ResonanceStructureError(QpkamError):
    """Resonance-structure verification failed; carries witnesses."""

    def __init__(self, message, witnesses=None):
        super().__init__(message)
        self.witnesses = witnesses or []


class ResonantModeLeakError(QpkamError):
    """A near-singular twisted Sylvester operator slipped past the projection."""

    def __init__(self, message, block=None, mode=None):
        super().__init__(message)
        self.block = block
        self.mode = mode


class InnerLoopError(QpkamError):
    """The conjugation fixed-point loop failed to converge."""


class ScheduleInfeasibleError(QpkamError):
    """A schedule smallness condition failed (paper-faithful mode)."""
