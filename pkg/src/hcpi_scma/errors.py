"""Exception hierarchy.

Every error carries a short machine-friendly ``code`` (e.g. ``"power-violation"``)
that the CLI prints so users can tell which invariant broke.
"""


class ScmaError(ValueError):
    code = "error"

    def __str__(self):
        msg = super().__str__()
        return f"{self.code}: {msg}" if msg else self.code


class InfeasibleDegrees(ScmaError):
    code = "infeasible-degrees"


class CodebookError(ScmaError):
    code = "codebook-error"


class ParseError(CodebookError):
    code = "parse-error"


class SparsityMismatch(CodebookError):
    code = "sparsity-mismatch"


class PowerViolation(CodebookError):
    code = "power-violation"


class DuplicateCodeword(CodebookError):
    code = "duplicate-codeword"


class InconsistentFamilies(ScmaError):
    code = "inconsistent-families"


class InvalidConfig(ScmaError):
    code = "invalid-config"


class RankOutOfRange(ScmaError):
    code = "rank-out-of-range"


class BitsOutOfTable(ScmaError):
    code = "bits-out-of-table"


class UnmappableIndexSet(ScmaError):
    code = "unmappable-index-set"


class InvalidLength(ScmaError):
    code = "invalid-length"


class DimensionMismatch(ScmaError):
    code = "dimension-mismatch"


class InstanceTooLarge(ScmaError):
    code = "instance-too-large"


class PoleEncountered(ScmaError):
    code = "pole-encountered"


class EmptyCandidateSet(ScmaError):
    code = "empty-candidate-set"
